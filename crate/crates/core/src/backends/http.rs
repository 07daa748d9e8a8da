use std::io::ErrorKind;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Backend, DecisionRequest, Exchange, HttpConfig};
use crate::error::BackendError;

pub const COMPLETIONS_PATH: &str = "/v1/chat/completions";

/// Blocking chat-completions client. One request in flight at a time.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

enum Outcome {
    Timeout(String),
    Fail(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout))
            .build();
        Self { config, agent }
    }

    pub fn url(&self) -> String {
        format!(
            "{}{}",
            self.config.base_url.trim_end_matches('/'),
            COMPLETIONS_PATH
        )
    }

    /// Sends one system + user message pair. A transport timeout is retried
    /// exactly once; HTTP error statuses are not retried.
    pub fn request(
        &self,
        system_text: &str,
        user_text: &str,
        now: f64,
    ) -> Result<Exchange, BackendError> {
        let key = std::env::var(&self.config.api_key_env).map_err(|_| {
            BackendError::Config(format!(
                "environment variable {} is not set",
                self.config.api_key_env
            ))
        })?;
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
        });
        let started = Instant::now();
        let mut retries = 0;
        let text = loop {
            match self.send(&key, &body) {
                Ok(text) => break text,
                Err(Outcome::Timeout(_)) if retries == 0 => retries += 1,
                Err(Outcome::Timeout(msg)) => return Err(BackendError::Transport(msg)),
                Err(Outcome::Fail(e)) => return Err(e),
            }
        };
        Ok(Exchange {
            system_text: system_text.to_string(),
            user_text: user_text.to_string(),
            response_text: text,
            latency: started.elapsed().as_secs_f64(),
            model: self.config.model.clone(),
            timestamp: now,
            retries,
            error: None,
        })
    }

    fn send(&self, key: &str, body: &Value) -> Result<String, Outcome> {
        let resp = self
            .agent
            .post(&self.url())
            .set("Authorization", &format!("Bearer {key}"))
            .send_json(body.clone());
        match resp {
            Ok(r) => {
                let v: Value = r
                    .into_json()
                    .map_err(|e| classify_io(e, BackendError::Malformed))?;
                v.pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| {
                        Outcome::Fail(BackendError::Malformed(
                            "missing choices[0].message.content".into(),
                        ))
                    })
            }
            Err(ureq::Error::Status(code, _)) => Err(Outcome::Fail(BackendError::Status(code))),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                let timed_out = std::error::Error::source(&t)
                    .and_then(|s| s.downcast_ref::<std::io::Error>())
                    .is_some_and(|e| {
                        matches!(e.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock)
                    })
                    || msg.contains("timed out");
                if timed_out {
                    Err(Outcome::Timeout(msg))
                } else {
                    Err(Outcome::Fail(BackendError::Transport(msg)))
                }
            }
        }
    }
}

fn classify_io(e: std::io::Error, other: impl FnOnce(String) -> BackendError) -> Outcome {
    if matches!(e.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) {
        Outcome::Timeout(e.to_string())
    } else {
        Outcome::Fail(other(e.to_string()))
    }
}

impl Backend for HttpBackend {
    fn complete(&mut self, req: &DecisionRequest<'_>) -> Result<Exchange, BackendError> {
        let started = Instant::now();
        match self.request(req.system_text, req.user_text, req.now) {
            Ok(x) => Ok(x),
            Err(e @ BackendError::Config(_)) => Err(e),
            Err(e) => Ok(Exchange {
                system_text: req.system_text.to_string(),
                user_text: req.user_text.to_string(),
                response_text: String::new(),
                latency: started.elapsed().as_secs_f64(),
                model: self.config.model.clone(),
                timestamp: req.now,
                retries: 0,
                error: Some(e.to_string()),
            }),
        }
    }

    fn label(&self) -> String {
        format!("http:{}", self.config.model)
    }
}
