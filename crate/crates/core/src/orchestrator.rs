//! Sense, propose, validate, reprompt, apply.
//!
//! Each episode samples the plant, asks the actor for an action and checks it.
//! A rejected or unreadable proposal is sent back to the actor with feedback,
//! at most `max_reprompts` times; if nothing passes, the safety action is
//! applied instead. While the actor is thinking the previous action stays in
//! force and the clock moves by the call's latency.

use serde::{Deserialize, Serialize};

use crate::agents::{
    self, compose_feedback, monitor_trigger, parse_action, render_prompt, AgentSpec, MonitorMode,
    Proposal, TaskSpec, Thresholds, Verdict,
};
use crate::backends::{Backend, DecisionRequest};
use crate::error::{Error, Result};
use crate::plantio::{ClockMode, HeaterAction, Plant, PlantSample};
use crate::runlog::EpisodeSink;
use crate::twin::{self, TwinParams, TwinState};

/// Smallest clock advance between episodes, s. Keeps timestamps strictly
/// increasing when both latency and the sample floor are zero.
pub const MIN_EPISODE_ADVANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    /// `None` means unbounded.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Envelope {
    pub fn bounds(&self) -> (f64, f64) {
        (
            self.min.unwrap_or(f64::NEG_INFINITY),
            self.max.unwrap_or(f64::INFINITY),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValidatorMode {
    #[default]
    Rule,
    Twin {
        horizon: f64,
        envelope: Envelope,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafeActionPolicy {
    #[default]
    ExpectedRule,
    ForceOff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// s
    pub duration: f64,
    pub max_reprompts: usize,
    /// Minimum spacing between episode starts, s.
    pub sample_period_floor: f64,
    pub thresholds: Thresholds,
    pub validator_mode: ValidatorMode,
    pub monitor_mode: MonitorMode,
    /// How often an anomaly monitor re-samples a quiet plant, s.
    pub monitor_poll_period: f64,
    pub clock_mode: ClockMode,
    pub initial_action: HeaterAction,
    pub safe_action_policy: SafeActionPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            duration: 2400.0,
            max_reprompts: 3,
            sample_period_floor: 0.0,
            thresholds: Thresholds::default(),
            validator_mode: ValidatorMode::Rule,
            monitor_mode: MonitorMode::Continuous,
            monitor_poll_period: 1.0,
            clock_mode: ClockMode::Lockstep,
            initial_action: HeaterAction::Off,
            safe_action_policy: SafeActionPolicy::ExpectedRule,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::config("run.duration", "must be > 0"));
        }
        if !(self.sample_period_floor.is_finite() && self.sample_period_floor >= 0.0) {
            return Err(Error::config("run.sample_period_floor", "must be >= 0"));
        }
        if !(self.monitor_poll_period.is_finite() && self.monitor_poll_period > 0.0) {
            return Err(Error::config("run.monitor_poll_period", "must be > 0"));
        }
        self.thresholds.validate().map_err(|e| match e {
            Error::Config { key, message } => Error::config(format!("run.{key}"), message),
            other => other,
        })?;
        if let MonitorMode::Anomaly { margin } = self.monitor_mode {
            if !(margin.is_finite() && margin >= 0.0) {
                return Err(Error::config("run.monitor_mode.margin", "must be >= 0"));
            }
        }
        if let ValidatorMode::Twin { horizon, envelope } = self.validator_mode {
            if !(horizon.is_finite() && horizon > 0.0) {
                return Err(Error::config("run.validator_mode.horizon", "must be > 0"));
            }
            let (lo, hi) = envelope.bounds();
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::config(
                    "run.validator_mode.envelope",
                    "min must be <= max",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    /// 0 is the first pass.
    pub attempt_index: usize,
    pub raw_response: String,
    pub parsed: Proposal,
    /// Absent when the response could not be parsed or the backend failed.
    pub verdict: Option<Verdict>,
    /// s
    pub latency: f64,
}

impl AttemptRecord {
    pub fn passed(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub t_start: f64,
    pub t_sensor: f64,
    pub prev_action: HeaterAction,
    pub attempts: Vec<AttemptRecord>,
    pub applied: HeaterAction,
    #[serde(rename = "override")]
    pub safety_override: bool,
    pub t_end: f64,
}

impl EpisodeRecord {
    /// Index of the first passing attempt.
    pub fn passing_attempt(&self) -> Option<usize> {
        self.attempts.iter().position(AttemptRecord::passed)
    }
}

pub fn safety_action(
    policy: SafeActionPolicy,
    t: f64,
    prev: HeaterAction,
    th: &Thresholds,
) -> HeaterAction {
    match policy {
        SafeActionPolicy::ExpectedRule => agents::expected_action(t, prev, th),
        SafeActionPolicy::ForceOff => HeaterAction::Off,
    }
}

/// Twin estimate used for rollout validation when the plant cannot report
/// its internal state (remote plants). The sensor node is pinned to each
/// measurement; the heater node is propagated open loop.
#[derive(Debug, Clone)]
struct ShadowTwin {
    state: TwinState,
    duty: f64,
}

impl ShadowTwin {
    fn sync(&mut self, params: &TwinParams, now: f64, measured: Option<f64>) -> Result<()> {
        if now > self.state.clock {
            self.state = twin::step(params, self.state, self.duty, now - self.state.clock)?;
            self.state.clock = now;
        }
        if let Some(t) = measured {
            self.state.t_sensor = t;
        }
        Ok(())
    }
}

/// Everything one run needs. Plant and backend are exclusively borrowed for
/// the duration of the run.
pub struct Controller<'a> {
    pub plant: &'a mut dyn Plant,
    pub backend: &'a mut dyn Backend,
    pub operator: &'a AgentSpec,
    pub task: &'a TaskSpec,
    pub config: &'a RunConfig,
    pub twin_params: TwinParams,
    shadow: ShadowTwin,
}

impl<'a> Controller<'a> {
    pub fn new(
        plant: &'a mut dyn Plant,
        backend: &'a mut dyn Backend,
        operator: &'a AgentSpec,
        task: &'a TaskSpec,
        config: &'a RunConfig,
        twin_params: TwinParams,
    ) -> Self {
        let shadow = ShadowTwin {
            state: TwinState::ambient(&twin_params),
            duty: config.initial_action.duty(),
        };
        Self {
            plant,
            backend,
            operator,
            task,
            config,
            twin_params,
            shadow,
        }
    }

    fn twin_state(&mut self) -> Result<TwinState> {
        if let Some(s) = self.plant.twin_state() {
            return Ok(s);
        }
        let now = self.plant.clock()?;
        self.shadow.sync(&self.twin_params, now, None)?;
        Ok(self.shadow.state)
    }

    fn validate(
        &mut self,
        action: HeaterAction,
        sample: &PlantSample,
        prev: HeaterAction,
    ) -> Result<Verdict> {
        match self.config.validator_mode {
            ValidatorMode::Rule => Ok(agents::validate_rule(
                action,
                sample.t_sensor,
                prev,
                &self.config.thresholds,
            )),
            ValidatorMode::Twin { horizon, envelope } => {
                let state = self.twin_state()?;
                agents::validate_twin(&self.twin_params, action, state, horizon, envelope.bounds())
            }
        }
    }

    fn apply(&mut self, action: HeaterAction) -> Result<()> {
        if self.plant.twin_state().is_none() {
            let now = self.plant.clock()?;
            self.shadow.sync(&self.twin_params, now, None)?;
        }
        self.plant.apply_heater(action)?;
        self.shadow.duty = action.duty();
        Ok(())
    }

    /// One decision cycle starting from `prev` being applied.
    pub fn run_episode(&mut self, index: usize, prev: HeaterAction) -> Result<EpisodeRecord> {
        let th = self.config.thresholds;
        let sample = self.plant.read_temperature()?;
        if self.plant.twin_state().is_none() {
            self.shadow
                .sync(&self.twin_params, sample.timestamp, Some(sample.t_sensor))?;
        }
        let max_reprompts = self.config.max_reprompts;
        let mut attempts = Vec::with_capacity(1);
        let mut feedback: Option<String> = None;
        let mut chosen = None;

        for attempt_index in 0..=max_reprompts {
            let (system_text, user_text) = render_prompt(
                self.operator,
                self.task,
                &sample,
                prev,
                &th,
                feedback.as_deref(),
            )?;
            let now = self.plant.clock()?;
            let exchange = self.backend.complete(&DecisionRequest {
                system_text: &system_text,
                user_text: &user_text,
                t_sensor: sample.t_sensor,
                prev,
                thresholds: th,
                has_feedback: feedback.is_some(),
                now,
            })?;
            if self.plant.clock_mode() == ClockMode::Lockstep && exchange.latency > 0.0 {
                self.plant.advance_to(now + exchange.latency)?;
            }

            let parsed = match &exchange.error {
                Some(e) => Proposal::BackendError(e.clone()),
                None => match parse_action(&exchange.response_text) {
                    Ok(a) => Proposal::Action(a),
                    Err(_) => Proposal::Unparseable,
                },
            };
            let verdict = match parsed.action() {
                Some(a) => Some(self.validate(a, &sample, prev)?),
                None => None,
            };
            let passed = verdict.as_ref().is_some_and(|v| v.passed);
            if !passed && attempt_index < max_reprompts {
                feedback = Some(compose_feedback(
                    verdict.as_ref(),
                    attempt_index + 1,
                    max_reprompts,
                    sample.t_sensor,
                    prev,
                    &parsed,
                    &th,
                )?);
            }
            attempts.push(AttemptRecord {
                attempt_index,
                raw_response: exchange.response_text,
                parsed: parsed.clone(),
                verdict,
                latency: exchange.latency,
            });
            if passed {
                chosen = parsed.action();
                break;
            }
        }

        let safety_override = chosen.is_none();
        let applied = chosen.unwrap_or_else(|| {
            safety_action(self.config.safe_action_policy, sample.t_sensor, prev, &th)
        });
        self.apply(applied)?;
        let t_end = self.plant.clock()?;
        Ok(EpisodeRecord {
            index,
            t_start: sample.timestamp,
            t_sensor: sample.t_sensor,
            prev_action: prev,
            attempts,
            applied,
            safety_override,
            t_end,
        })
    }

    /// Runs episodes until the clock reaches `duration`. At least one episode
    /// always runs. Each completed episode goes to `sink` before the next
    /// starts, so an aborted run leaves every finished episode behind.
    pub fn run_loop(&mut self, sink: &mut dyn EpisodeSink) -> Result<Vec<EpisodeRecord>> {
        let cfg = self.config;
        let mut prev = cfg.initial_action;
        self.apply(prev)?;
        let mut episodes: Vec<EpisodeRecord> = Vec::new();
        loop {
            let now = self.plant.clock()?;
            if !episodes.is_empty() {
                if now >= cfg.duration {
                    break;
                }
                if let MonitorMode::Anomaly { .. } = cfg.monitor_mode {
                    let sample = self.plant.read_temperature()?;
                    if !monitor_trigger(&sample, cfg.monitor_mode, &cfg.thresholds) {
                        self.plant.advance_to(now + cfg.monitor_poll_period)?;
                        continue;
                    }
                }
            }
            let ep = self.run_episode(episodes.len(), prev)?;
            sink.write_episode(&ep)?;
            prev = ep.applied;
            let next = ep
                .t_end
                .max(ep.t_start + cfg.sample_period_floor)
                .max(ep.t_start + MIN_EPISODE_ADVANCE);
            episodes.push(ep);
            self.plant.advance_to(next)?;
        }
        Ok(episodes)
    }
}
