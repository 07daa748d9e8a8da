//! Agent definitions and the deterministic pieces around the actor: prompt
//! rendering, action extraction, validation and reprompt feedback.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plantio::{format2, HeaterAction, PlantSample};
use crate::twin::{self, TwinParams, TwinState};

/// Placeholders a task template may reference.
pub const PLACEHOLDERS: [&str; 5] = ["temperature", "prev_action", "low", "high", "feedback"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    pub role: String,
    pub goal: String,
    /// Key into the config's backend table.
    pub backend: String,
    #[serde(default)]
    pub tools: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub description_template: String,
    #[serde(default)]
    pub expected_output_hint: String,
}

impl TaskSpec {
    /// Checks that the template only names known placeholders and that its
    /// braces are balanced.
    pub fn validate(&self) -> Result<()> {
        render_template(&self.description_template, |_| Some(String::new())).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            low: 25.0,
            high: 27.0,
        }
    }
}

impl Thresholds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        let th = Self { low, high };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite()) {
            return Err(Error::config("thresholds", "low and high must be finite"));
        }
        if self.low >= self.high {
            return Err(Error::config("thresholds.low", "must be < thresholds.high"));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> f64 {
        (self.low + self.high) / 2.0
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.low && t <= self.high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub expected: Option<HeaterAction>,
    pub reason: String,
}

/// What the actor produced on one attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    Action(HeaterAction),
    Unparseable,
    BackendError(String),
}

impl Proposal {
    pub fn action(&self) -> Option<HeaterAction> {
        match self {
            Proposal::Action(a) => Some(*a),
            _ => None,
        }
    }
}

fn render_template(template: &str, mut bind: impl FnMut(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push('{');
            rest = after;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push('}');
            rest = after;
        } else if tail.starts_with('}') {
            return Err(Error::Template("unmatched '}' in template".into()));
        } else {
            let end = tail
                .find('}')
                .ok_or_else(|| Error::Template("unterminated placeholder".into()))?;
            let name = &tail[1..end];
            if !PLACEHOLDERS.contains(&name) {
                return Err(Error::Template(format!("unknown placeholder {{{name}}}")));
            }
            let value = bind(name)
                .ok_or_else(|| Error::Template(format!("unbound placeholder {{{name}}}")))?;
            out.push_str(&value);
            rest = &tail[end + 1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Builds the (system, user) message pair for one actor call.
///
/// The system text is the role and goal separated by a blank line. The user
/// text is the rendered task, followed by the output hint and, when present,
/// the reprompt feedback. A template that places `{feedback}` itself gets the
/// feedback inline (or an empty string) instead of an appended block.
pub fn render_prompt(
    spec: &AgentSpec,
    task: &TaskSpec,
    sample: &PlantSample,
    prev: HeaterAction,
    thresholds: &Thresholds,
    feedback: Option<&str>,
) -> Result<(String, String)> {
    let system = format!("{}\n\n{}", spec.role, spec.goal);
    let mut inline_feedback = false;
    let mut user = render_template(&task.description_template, |name| {
        Some(match name {
            "temperature" => format2(sample.t_sensor),
            "prev_action" => prev.to_string(),
            "low" => format2(thresholds.low),
            "high" => format2(thresholds.high),
            "feedback" => {
                inline_feedback = true;
                feedback.unwrap_or_default().to_string()
            }
            _ => return None,
        })
    })?;
    if !task.expected_output_hint.is_empty() {
        user.push_str("\n\n");
        user.push_str(&task.expected_output_hint);
    }
    if let (Some(fb), false) = (feedback, inline_feedback) {
        user.push_str("\n\n");
        user.push_str(fb);
    }
    Ok((system, user))
}

fn action_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bACTION\s*:\s*(ON|OFF)\b").expect("static pattern"))
}

/// Returns the last `ACTION: ON` / `ACTION: OFF` in the response.
pub fn parse_action(response: &str) -> Result<HeaterAction> {
    let last = action_pattern()
        .captures_iter(response)
        .last()
        .ok_or(Error::Parse)?;
    if last[1].eq_ignore_ascii_case("on") {
        Ok(HeaterAction::On)
    } else {
        Ok(HeaterAction::Off)
    }
}

/// Hysteresis rule: off strictly above `high`, on strictly below `low`,
/// otherwise keep the previous state.
pub fn expected_action(t: f64, prev: HeaterAction, th: &Thresholds) -> HeaterAction {
    if t > th.high {
        HeaterAction::Off
    } else if t < th.low {
        HeaterAction::On
    } else {
        prev
    }
}

pub fn validate_rule(
    proposal: HeaterAction,
    t: f64,
    prev: HeaterAction,
    th: &Thresholds,
) -> Verdict {
    let expected = expected_action(t, prev, th);
    let reason = if t > th.high {
        format!(
            "temperature {} exceeds the upper limit {}, so the heater must be OFF",
            format2(t),
            format2(th.high)
        )
    } else if t < th.low {
        format!(
            "temperature {} is below the lower limit {}, so the heater must be ON",
            format2(t),
            format2(th.low)
        )
    } else {
        format!(
            "temperature {} is inside [{}, {}], so the previous state {prev} must be held",
            format2(t),
            format2(th.low),
            format2(th.high)
        )
    };
    Verdict {
        passed: proposal == expected,
        expected: Some(expected),
        reason,
    }
}

/// Simulates `proposal` on the twin for `horizon` seconds and passes it only if
/// the sensor temperature stays within `envelope` throughout.
pub fn validate_twin(
    params: &TwinParams,
    proposal: HeaterAction,
    state: TwinState,
    horizon: f64,
    envelope: (f64, f64),
) -> Result<Verdict> {
    let (lo, hi) = envelope;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::InvalidInput(format!(
            "envelope [{lo}, {hi}] not ordered"
        )));
    }
    let traj = twin::rollout(params, state, proposal.duty(), horizon)?;
    let violation = traj.iter().find(|&&(_, t)| t < lo || t > hi);
    Ok(match violation {
        None => Verdict {
            passed: true,
            expected: None,
            reason: format!("sensor stays within [{lo}, {hi}] over {horizon} s"),
        },
        Some(&(at, t)) => Verdict {
            passed: false,
            expected: None,
            reason: format!(
                "twin predicts {} °C at t={:.3} s, outside the safe envelope [{lo}, {hi}]",
                format2(t),
                at
            ),
        },
    })
}

/// Reprompt text for a failed attempt.
pub fn compose_feedback(
    verdict: Option<&Verdict>,
    attempt: usize,
    max_attempts: usize,
    t: f64,
    prev: HeaterAction,
    proposal: &Proposal,
    th: &Thresholds,
) -> Result<String> {
    let (proposal_text, reason) = match (proposal, verdict) {
        (Proposal::Action(_), Some(v)) if v.passed => {
            return Err(Error::InvalidState(
                "feedback requested for a passing verdict".into(),
            ))
        }
        (Proposal::Action(a), Some(v)) => (a.to_string(), v.reason.clone()),
        (Proposal::Action(_), None) => {
            return Err(Error::InvalidState(
                "feedback for an action needs a verdict".into(),
            ))
        }
        (Proposal::Unparseable, _) => (
            "UNPARSEABLE".to_string(),
            "no ACTION line found".to_string(),
        ),
        (Proposal::BackendError(e), _) => (
            "UNPARSEABLE".to_string(),
            format!("no ACTION line found ({e})"),
        ),
    };
    Ok(format!(
        "VALIDATION FAILED (attempt {attempt}/{max_attempts}): at {}°C with previous heater state {prev}, \
         your proposed action {proposal_text} violates the control rule: {reason}. \
         Rule: turn OFF above {}°C, turn ON below {}°C, otherwise hold the previous state. \
         Respond with a final line 'ACTION: ON' or 'ACTION: OFF'.",
        format2(t),
        format2(th.high),
        format2(th.low),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum MonitorMode {
    #[default]
    Continuous,
    Anomaly {
        margin: f64,
    },
}

/// Whether this sample should start a decision episode.
pub fn monitor_trigger(sample: &PlantSample, mode: MonitorMode, th: &Thresholds) -> bool {
    match mode {
        MonitorMode::Continuous => true,
        MonitorMode::Anomaly { margin } => {
            sample.t_sensor < th.low - margin || sample.t_sensor > th.high + margin
        }
    }
}
