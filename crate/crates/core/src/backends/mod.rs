//! Decision engines behind the actor agent.

mod http;
mod replay;
mod scripted;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use http::HttpBackend;
pub use replay::{load_transcript, record, Recorder, ReplayBackend};
pub use scripted::{scripted_decision, LatencySampler, ScriptedBackend};

use crate::agents::Thresholds;
use crate::error::{BackendError, Error, Result};
use crate::plantio::HeaterAction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Http(HttpConfig),
    Scripted(ScriptedConfig),
    Replay(ReplayConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_api_key_env() -> String {
    "LLM_API_KEY".into()
}

fn default_max_tokens() -> u32 {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedConfig {
    pub policy: ScriptedPolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub latency: LatencyModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub transcript_path: PathBuf,
}

/// Test doubles for the actor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptedPolicy {
    /// Always answers the hysteresis rule.
    Oracle,
    /// First attempt wrong with probability `p_wrong_first`; each feedback
    /// attempt right with probability `p_correct_on_feedback`.
    Flip {
        p_wrong_first: f64,
        p_correct_on_feedback: f64,
    },
    AlwaysWrong,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencyModel {
    #[default]
    None,
    Fixed {
        seconds: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Fixed latency matching one of the emulated model profiles.
    Profile {
        model: String,
    },
}

/// Mean seconds per decision implied by each model's sample count over a
/// 2400 s run (samples: 423, 394, 554, 128).
pub const EMULATION_PROFILES: [(&str, f64); 4] = [
    ("gpt-3.5", 2400.0 / 423.0),
    ("gpt-4o-mini", 2400.0 / 394.0),
    ("gpt-4o", 2400.0 / 554.0),
    ("gpt-4", 2400.0 / 128.0),
];

pub fn emulation_profile(model: &str) -> Option<f64> {
    EMULATION_PROFILES
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(model))
        .map(|&(_, s)| s)
}

impl BackendConfig {
    pub fn validate(&self, key: &str) -> Result<()> {
        match self {
            BackendConfig::Http(h) => {
                if !(h.timeout.is_finite() && h.timeout > 0.0) {
                    return Err(Error::config(format!("{key}.timeout"), "must be > 0"));
                }
                if !(h.temperature.is_finite() && h.temperature >= 0.0) {
                    return Err(Error::config(format!("{key}.temperature"), "must be >= 0"));
                }
                if !(h.base_url.starts_with("http://") || h.base_url.starts_with("https://")) {
                    return Err(Error::config(
                        format!("{key}.base_url"),
                        "must be an explicit http(s) URL",
                    ));
                }
                if h.model.is_empty() {
                    return Err(Error::config(format!("{key}.model"), "must not be empty"));
                }
            }
            BackendConfig::Scripted(s) => {
                if let ScriptedPolicy::Flip {
                    p_wrong_first,
                    p_correct_on_feedback,
                } = s.policy
                {
                    for (name, p) in [
                        ("p_wrong_first", p_wrong_first),
                        ("p_correct_on_feedback", p_correct_on_feedback),
                    ] {
                        if !(0.0..=1.0).contains(&p) {
                            return Err(Error::config(
                                format!("{key}.policy.{name}"),
                                "must lie in [0, 1]",
                            ));
                        }
                    }
                }
                s.latency.validate(&format!("{key}.latency"))?;
            }
            BackendConfig::Replay(r) => {
                if r.transcript_path.as_os_str().is_empty() {
                    return Err(Error::config(
                        format!("{key}.transcript_path"),
                        "must not be empty",
                    ));
                }
            }
        }
        Ok(())
    }
}

impl LatencyModel {
    pub fn validate(&self, key: &str) -> Result<()> {
        match self {
            LatencyModel::None => Ok(()),
            LatencyModel::Fixed { seconds } if seconds.is_finite() && *seconds >= 0.0 => Ok(()),
            LatencyModel::Fixed { .. } => {
                Err(Error::config(format!("{key}.seconds"), "must be >= 0"))
            }
            LatencyModel::Lognormal { mu, sigma, .. } => {
                if mu.is_finite() && sigma.is_finite() && *sigma >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::config(
                        key,
                        "lognormal needs finite mu and sigma >= 0",
                    ))
                }
            }
            LatencyModel::Profile { model } => {
                emulation_profile(model).map(|_| ()).ok_or_else(|| {
                    Error::config(format!("{key}.model"), format!("unknown profile {model:?}"))
                })
            }
        }
    }
}

/// One actor call as seen by a backend. Scripted backends read the
/// structured fields; language-model backends only see the texts.
#[derive(Debug, Clone, Copy)]
pub struct DecisionRequest<'a> {
    pub system_text: &'a str,
    pub user_text: &'a str,
    pub t_sensor: f64,
    pub prev: HeaterAction,
    pub thresholds: Thresholds,
    pub has_feedback: bool,
    /// Run clock when the request is issued, s.
    pub now: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub system_text: String,
    pub user_text: String,
    pub response_text: String,
    /// s
    pub latency: f64,
    pub model: String,
    /// Run clock at request time, s.
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub retries: u32,
    /// Set when the call failed softly (HTTP status, transport, bad body).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

pub trait Backend: Send {
    /// Produces the actor's reply. Soft failures come back as an `Exchange`
    /// with `error` set; `Err` means the run cannot continue.
    fn complete(&mut self, req: &DecisionRequest<'_>) -> Result<Exchange, BackendError>;

    fn label(&self) -> String;
}

/// Whether the scripted latency should actually be slept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencyMode {
    Simulated,
    Slept,
}

pub fn build_backend(
    config: &BackendConfig,
    latency_mode: LatencyMode,
) -> Result<Box<dyn Backend>> {
    Ok(match config {
        BackendConfig::Http(h) => Box::new(HttpBackend::new(h.clone())),
        BackendConfig::Scripted(s) => Box::new(ScriptedBackend::new(s, latency_mode)),
        BackendConfig::Replay(r) => Box::new(ReplayBackend::open(&r.transcript_path)?),
    })
}
