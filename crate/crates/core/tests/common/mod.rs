//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use reprompt_control::agents::{AgentSpec, TaskSpec};
use reprompt_control::backends::{
    Backend, LatencyMode, LatencyModel, ScriptedBackend, ScriptedConfig, ScriptedPolicy,
};
use reprompt_control::orchestrator::{Controller, EpisodeRecord, RunConfig};
use reprompt_control::plantio::{ClockMode, SimPlant};
use reprompt_control::twin::TwinParams;

pub fn operator() -> AgentSpec {
    AgentSpec {
        name: "operator".into(),
        role: "You operate a heater.".into(),
        goal: "Keep the sensor inside the band.".into(),
        backend: "actor".into(),
        tools: vec![],
    }
}

pub fn task() -> TaskSpec {
    TaskSpec {
        description_template:
            "Temperature {temperature} C, heater {prev_action}. Band {low}-{high}. {feedback}"
                .into(),
        expected_output_hint: "Answer with ACTION: ON or ACTION: OFF.".into(),
    }
}

pub fn flip(p: f64, q: f64) -> ScriptedPolicy {
    ScriptedPolicy::Flip {
        p_wrong_first: p,
        p_correct_on_feedback: q,
    }
}

pub fn scripted(policy: ScriptedPolicy, seed: u64, latency: LatencyModel) -> ScriptedBackend {
    ScriptedBackend::new(
        &ScriptedConfig {
            policy,
            seed,
            latency,
        },
        LatencyMode::Simulated,
    )
}

pub fn fixed(seconds: f64) -> LatencyModel {
    LatencyModel::Fixed { seconds }
}

/// Runs a full loop against a fresh simulated plant at ambient.
pub fn run_with(
    backend: &mut dyn Backend,
    config: &RunConfig,
    params: TwinParams,
) -> Vec<EpisodeRecord> {
    let mut plant = SimPlant::new(params, config.clock_mode);
    let (op, tk) = (operator(), task());
    let mut c = Controller::new(&mut plant, backend, &op, &tk, config, params);
    let mut sink = Vec::new();
    let episodes = c.run_loop(&mut sink).unwrap();
    assert_eq!(sink, episodes);
    episodes
}

pub fn run(
    policy: ScriptedPolicy,
    seed: u64,
    latency: LatencyModel,
    config: &RunConfig,
) -> Vec<EpisodeRecord> {
    let mut backend = scripted(policy, seed, latency);
    run_with(&mut backend, config, TwinParams::default())
}

pub fn lockstep(duration: f64, max_reprompts: usize) -> RunConfig {
    RunConfig {
        duration,
        max_reprompts,
        clock_mode: ClockMode::Lockstep,
        ..RunConfig::default()
    }
}
