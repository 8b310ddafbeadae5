use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which field of the device identity triple was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityField {
    DeviceId,
    SimSerial,
    PlatformId,
}

impl fmt::Display for IdentityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdentityField::DeviceId => "device_id",
            IdentityField::SimSerial => "sim_serial",
            IdentityField::PlatformId => "platform_id",
        })
    }
}

/// Coarse classification used by transports to pick a status code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    InvalidInput,
    Unauthenticated,
    Forbidden,
    NotFound,
    Conflict,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("identity field `{0}` must not be empty")]
    EmptyIdentityField(IdentityField),
    #[error("display name must not be empty")]
    EmptyDisplayName,
    #[error("community name must not be empty")]
    EmptyCommunityName,
    #[error("a bearer token is required")]
    AuthRequired,
    #[error("session token is invalid or expired")]
    InvalidSession,
    #[error("no community uses this invite code")]
    UnknownInviteCode,
    #[error("already a member of this community")]
    AlreadyMember,
    #[error("caller is not a member of this community")]
    NotAMember,
    #[error("member is not part of this community")]
    TargetNotInCommunity,
    #[error("unknown member")]
    UnknownMember,
    #[error("package `{0}` is not installed")]
    UnknownPackage(String),
    #[error("package `{0}` appears more than once in the snapshot")]
    DuplicatePackage(String),
    #[error("inconsistent diff: {0}")]
    InconsistentDiff(String),
    #[error("catalog version conflict: diff is based on {expected}, stored version is {actual}")]
    VersionConflict { expected: u64, actual: u64 },
    #[error("package `{0}` is not visible in this scope")]
    PackageNotVisible(String),
    #[error("body must not be empty")]
    EmptyBody,
    #[error("body exceeds {max} characters")]
    BodyTooLong { max: usize },
    #[error("unknown post")]
    UnknownPost,
    #[error("sender and recipient share no community")]
    NoSharedCommunity,
    #[error("cannot send a message to yourself")]
    SelfMessage,
    #[error("unknown usage action `{0}`")]
    UnknownAction(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl Error {
    /// Stable machine-readable code. These strings are part of the public API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyIdentityField(_) => "empty_identity_field",
            Error::EmptyDisplayName => "empty_display_name",
            Error::EmptyCommunityName => "empty_community_name",
            Error::AuthRequired => "auth_required",
            Error::InvalidSession => "invalid_session",
            Error::UnknownInviteCode => "unknown_invite_code",
            Error::AlreadyMember => "already_member",
            Error::NotAMember => "not_a_member",
            Error::TargetNotInCommunity => "target_not_in_community",
            Error::UnknownMember => "unknown_member",
            Error::UnknownPackage(_) => "unknown_package",
            Error::DuplicatePackage(_) => "duplicate_package",
            Error::InconsistentDiff(_) => "inconsistent_diff",
            Error::VersionConflict { .. } => "version_conflict",
            Error::PackageNotVisible(_) => "package_not_visible",
            Error::EmptyBody => "empty_body",
            Error::BodyTooLong { .. } => "body_too_long",
            Error::UnknownPost => "unknown_post",
            Error::NoSharedCommunity => "no_shared_community",
            Error::SelfMessage => "self_message",
            Error::UnknownAction(_) => "unknown_action",
            Error::InvalidData(_) => "invalid_data",
            Error::Storage(_) => "storage_failure",
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::EmptyIdentityField(_)
            | Error::EmptyDisplayName
            | Error::EmptyCommunityName
            | Error::DuplicatePackage(_)
            | Error::InconsistentDiff(_)
            | Error::EmptyBody
            | Error::BodyTooLong { .. }
            | Error::SelfMessage
            | Error::UnknownAction(_)
            | Error::InvalidData(_) => ErrorKind::InvalidInput,
            Error::AuthRequired | Error::InvalidSession => ErrorKind::Unauthenticated,
            Error::NotAMember | Error::NoSharedCommunity => ErrorKind::Forbidden,
            Error::UnknownInviteCode
            | Error::TargetNotInCommunity
            | Error::UnknownMember
            | Error::UnknownPackage(_)
            | Error::PackageNotVisible(_)
            | Error::UnknownPost => ErrorKind::NotFound,
            Error::AlreadyMember | Error::VersionConflict { .. } => ErrorKind::Conflict,
            Error::Storage(_) => ErrorKind::Internal,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Storage(err.to_string())
    }
}
