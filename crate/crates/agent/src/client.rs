use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::{Method, Url};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::AgentError;

/// Blocking JSON client for the `/v1` API.
pub struct Api {
    http: Client,
    base: Url,
    token: Option<String>,
}

#[derive(Deserialize)]
struct ErrorBody {
    code: String,
    message: String,
}

impl Api {
    pub fn new(base: &str, token: Option<&str>) -> Result<Self, AgentError> {
        let base = Url::parse(base).map_err(|e| AgentError::Usage(format!("server url {base:?}: {e}")))?;
        if base.cannot_be_a_base() {
            return Err(AgentError::Usage(format!("server url {base} cannot be a base")));
        }
        let http = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok(Self {
            http,
            base,
            token: token.map(str::to_owned),
        })
    }

    /// `segments` are appended (percent-encoded) after `/v1`.
    pub fn url(&self, segments: &[&str], query: &[(&str, String)]) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut()
            .expect("checked in new")
            .pop_if_empty()
            .push("v1")
            .extend(segments);
        if !query.is_empty() {
            url.query_pairs_mut()
                .extend_pairs(query.iter().map(|(k, v)| (*k, v.as_str())));
        }
        url
    }

    /// Sends a request and decodes the JSON reply, turning error bodies into [`AgentError::Api`].
    pub fn call<T: DeserializeOwned>(&self, method: Method, url: Url, body: Option<&Value>) -> Result<T, AgentError> {
        let mut builder = self.http.request(method, url);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        if let Some(body) = body {
            builder = builder.json(body);
        }
        let resp = builder.send().map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| AgentError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(match serde_json::from_str::<ErrorBody>(&text) {
                Ok(err) => AgentError::Api {
                    status: status.as_u16(),
                    code: err.code,
                    message: err.message,
                },
                Err(_) => AgentError::Transport(format!("HTTP {status}: {text}")),
            });
        }
        serde_json::from_str(&text).map_err(|e| AgentError::Transport(format!("bad response: {e}")))
    }

    pub fn get<T: DeserializeOwned>(&self, segments: &[&str]) -> Result<T, AgentError> {
        self.call(Method::GET, self.url(segments, &[]), None)
    }

    pub fn get_query<T: DeserializeOwned>(&self, segments: &[&str], query: &[(&str, String)]) -> Result<T, AgentError> {
        self.call(Method::GET, self.url(segments, query), None)
    }

    pub fn post<T: DeserializeOwned>(&self, segments: &[&str], body: &Value) -> Result<T, AgentError> {
        self.call(Method::POST, self.url(segments, &[]), Some(body))
    }

    pub fn put<T: DeserializeOwned>(&self, segments: &[&str], body: &Value) -> Result<T, AgentError> {
        self.call(Method::PUT, self.url(segments, &[]), Some(body))
    }

    pub fn patch<T: DeserializeOwned>(&self, segments: &[&str], body: &Value) -> Result<T, AgentError> {
        self.call(Method::PATCH, self.url(segments, &[]), Some(body))
    }
}
