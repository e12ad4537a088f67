//! Client for a remote completion endpoint standing in for a hosted
//! large-model backend, plus a fully offline stub mode.
//!
//! Protocol: POST {base}/v1/complete with JSON {"prompt", "max_tokens",
//! "temperature"}; the response is JSON {"completion": string}. Bearer
//! auth when a token is configured. Stub mode (the default when no URL is
//! configured) performs no network activity and returns a canned
//! completion chosen deterministically from a hash of the prompt.

use serde_json::json;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("remote backend timed out after {timeout_ms} ms")]
    Timeout { timeout_ms: u64 },
    #[error("remote backend returned status {status}")]
    Status { status: u16 },
    #[error("remote backend protocol error: {message}")]
    Protocol { message: String },
    #[error("remote backend transport error: {message}")]
    Transport { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendMode {
    Live,
    Stub,
}

/// Remote endpoint configuration. `stub()` is the offline default.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub mode: BackendMode,
}

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

impl RemoteBackend {
    pub fn stub() -> Self {
        RemoteBackend {
            base_url: String::new(),
            api_key: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            mode: BackendMode::Stub,
        }
    }

    pub fn live(base_url: impl Into<String>, api_key: Option<String>, timeout_ms: u64) -> Self {
        RemoteBackend {
            base_url: base_url.into(),
            api_key,
            timeout_ms,
            mode: BackendMode::Live,
        }
    }

    /// Stub when `url` is absent, live otherwise. Mirrors the environment
    /// contract: CC_REMOTE_URL unset selects stub mode.
    pub fn from_settings(url: Option<String>, api_key: Option<String>, timeout_ms: u64) -> Self {
        match url {
            Some(u) => RemoteBackend::live(u, api_key, timeout_ms),
            None => RemoteBackend {
                timeout_ms,
                ..RemoteBackend::stub()
            },
        }
    }
}

// FNV-1a: a fixed, platform-stable hash, so stub completions never change
// across compiler or library versions.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325_u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

const STUB_COMPLETIONS: [&str; 5] = [
    "return result",
    "pass",
    "return a + b",
    "print ( value )",
    "for i in range ( n ) :",
];

fn stub_completion(prompt: &str, max_tokens: usize) -> String {
    let pick = (fnv1a(prompt.as_bytes()) % STUB_COMPLETIONS.len() as u64) as usize;
    STUB_COMPLETIONS[pick]
        .split_whitespace()
        .take(max_tokens)
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_timeout(err: &(dyn std::error::Error + 'static)) -> bool {
    let mut cur: Option<&(dyn std::error::Error + 'static)> = Some(err);
    while let Some(e) = cur {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            if matches!(
                io.kind(),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
            ) {
                return true;
            }
        }
        cur = e.source();
    }
    false
}

/// Requests a completion for `prompt`. Stub mode is pure and offline;
/// live mode POSTs to {base}/v1/complete and unwraps the "completion"
/// field.
pub fn remote_complete(
    prompt: &str,
    max_tokens: usize,
    temperature: f64,
    backend: &RemoteBackend,
) -> Result<String, RemoteError> {
    if backend.mode == BackendMode::Stub {
        return Ok(stub_completion(prompt, max_tokens));
    }
    let url = format!("{}/v1/complete", backend.base_url.trim_end_matches('/'));
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_millis(backend.timeout_ms))
        .build();
    let mut request = agent.post(&url);
    if let Some(key) = &backend.api_key {
        request = request.set("Authorization", &format!("Bearer {key}"));
    }
    let response = request.send_json(json!({
        "prompt": prompt,
        "max_tokens": max_tokens,
        "temperature": temperature,
    }));
    match response {
        Ok(resp) => {
            let value: serde_json::Value = resp.into_json().map_err(|e| RemoteError::Protocol {
                message: format!("response is not valid JSON: {e}"),
            })?;
            match value.get("completion").and_then(|c| c.as_str()) {
                Some(completion) => Ok(completion.to_string()),
                None => Err(RemoteError::Protocol {
                    message: "missing or non-string \"completion\" field".to_string(),
                }),
            }
        }
        Err(ureq::Error::Status(status, _)) => Err(RemoteError::Status { status }),
        Err(err @ ureq::Error::Transport(_)) => {
            if is_timeout(&err) {
                Err(RemoteError::Timeout {
                    timeout_ms: backend.timeout_ms,
                })
            } else {
                Err(RemoteError::Transport {
                    message: err.to_string(),
                })
            }
        }
    }
}
