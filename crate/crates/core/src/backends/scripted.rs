use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use super::{
    emulation_profile, Backend, DecisionRequest, Exchange, LatencyMode, LatencyModel,
    ScriptedConfig, ScriptedPolicy,
};
use crate::agents::{expected_action, Thresholds};
use crate::error::BackendError;
use crate::plantio::HeaterAction;

/// Draws injected latencies from its own stream so that latency never
/// perturbs the decision stream.
#[derive(Debug, Clone)]
pub struct LatencySampler {
    model: LatencyModel,
    rng: ChaCha8Rng,
}

impl LatencySampler {
    pub fn new(model: LatencyModel) -> Self {
        let seed = match model {
            LatencyModel::Lognormal { seed, .. } => seed,
            _ => 0,
        };
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> f64 {
        match &self.model {
            LatencyModel::None => 0.0,
            LatencyModel::Fixed { seconds } => *seconds,
            LatencyModel::Lognormal { mu, sigma, .. } => LogNormal::new(*mu, *sigma)
                .map(|d| d.sample(&mut self.rng))
                .unwrap_or(0.0),
            LatencyModel::Profile { model } => emulation_profile(model).unwrap_or(0.0),
        }
    }
}

/// Decides one scripted reply, consuming at most one draw from `rng`.
pub fn scripted_decision(
    policy: ScriptedPolicy,
    t: f64,
    prev: HeaterAction,
    th: &Thresholds,
    has_feedback: bool,
    rng: &mut impl Rng,
) -> HeaterAction {
    let right = expected_action(t, prev, th);
    match policy {
        ScriptedPolicy::Oracle => right,
        ScriptedPolicy::AlwaysWrong => right.opposite(),
        ScriptedPolicy::Flip {
            p_wrong_first,
            p_correct_on_feedback,
        } => {
            let u: f64 = rng.gen();
            let correct = if has_feedback {
                u < p_correct_on_feedback
            } else {
                u >= p_wrong_first
            };
            if correct {
                right
            } else {
                right.opposite()
            }
        }
    }
}

pub struct ScriptedBackend {
    policy: ScriptedPolicy,
    rng: ChaCha8Rng,
    latency: LatencySampler,
    mode: LatencyMode,
}

impl ScriptedBackend {
    pub fn new(config: &ScriptedConfig, mode: LatencyMode) -> Self {
        Self {
            policy: config.policy,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            latency: LatencySampler::new(config.latency.clone()),
            mode,
        }
    }

    fn policy_name(&self) -> &'static str {
        match self.policy {
            ScriptedPolicy::Oracle => "oracle",
            ScriptedPolicy::Flip { .. } => "flip",
            ScriptedPolicy::AlwaysWrong => "always_wrong",
        }
    }
}

impl Backend for ScriptedBackend {
    fn complete(&mut self, req: &DecisionRequest<'_>) -> Result<Exchange, BackendError> {
        let action = scripted_decision(
            self.policy,
            req.t_sensor,
            req.prev,
            &req.thresholds,
            req.has_feedback,
            &mut self.rng,
        );
        let latency = self.latency.sample();
        if self.mode == LatencyMode::Slept && latency > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(latency));
        }
        Ok(Exchange {
            system_text: req.system_text.to_string(),
            user_text: req.user_text.to_string(),
            response_text: format!("ACTION: {action}"),
            latency,
            model: self.label(),
            timestamp: req.now,
            retries: 0,
            error: None,
        })
    }

    fn label(&self) -> String {
        format!("scripted:{}", self.policy_name())
    }
}
