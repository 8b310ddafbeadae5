use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, IdentityField, Result};

const DEVICE_KEY_DOMAIN: &[u8] = b"coops/device-key/v1";

/// The raw identifiers a device reports at registration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityTriple {
    pub device_id: String,
    pub sim_serial: String,
    pub platform_id: String,
}

impl IdentityTriple {
    pub fn new(
        device_id: impl Into<String>,
        sim_serial: impl Into<String>,
        platform_id: impl Into<String>,
    ) -> Self {
        Self {
            device_id: device_id.into(),
            sim_serial: sim_serial.into(),
            platform_id: platform_id.into(),
        }
    }
}

/// SHA-256 over the length-prefixed identity fields.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeviceKey(pub [u8; 32]);

impl DeviceKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for DeviceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DeviceKey({})", self.to_hex())
    }
}

impl fmt::Display for DeviceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for DeviceKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)
            .map_err(|e| Error::InvalidData(format!("device key: {e}")))?;
        Ok(DeviceKey(out))
    }
}

impl Serialize for DeviceKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for DeviceKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A registered device: the reported triple plus its derived key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceIdentity {
    pub triple: IdentityTriple,
    pub device_key: DeviceKey,
}

impl DeviceIdentity {
    pub fn new(triple: IdentityTriple) -> Result<Self> {
        let device_key = derive_device_key(&triple)?;
        Ok(Self { triple, device_key })
    }
}

/// Hashes the identity triple into a stable device key.
///
/// Each field is prefixed by its byte length as a big-endian u64, so no two
/// distinct triples share an encoding regardless of their content.
pub fn derive_device_key(triple: &IdentityTriple) -> Result<DeviceKey> {
    let fields = [
        (IdentityField::DeviceId, &triple.device_id),
        (IdentityField::SimSerial, &triple.sim_serial),
        (IdentityField::PlatformId, &triple.platform_id),
    ];
    let mut hasher = Sha256::new();
    hasher.update(DEVICE_KEY_DOMAIN);
    for (field, value) in fields {
        if value.is_empty() {
            return Err(Error::EmptyIdentityField(field));
        }
        hasher.update((value.len() as u64).to_be_bytes());
        hasher.update(value.as_bytes());
    }
    Ok(DeviceKey(hasher.finalize().into()))
}
