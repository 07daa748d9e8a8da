//! Accuracy counters and control-performance figures computed from run logs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agents::Thresholds;
use crate::error::{Error, Result};
use crate::orchestrator::EpisodeRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMetrics {
    pub samples: u64,
    pub passes: u64,
    pub fails: u64,
    pub pass_after_reprompts: u64,
    pub overrides: u64,
    /// %
    pub accuracy_first_pass: f64,
    /// %
    pub accuracy_with_reprompts: f64,
}

impl AccuracyMetrics {
    pub fn from_counts(samples: u64, passes: u64, pass_after_reprompts: u64) -> Result<Self> {
        if samples == 0 || passes + pass_after_reprompts > samples {
            return Err(Error::InvalidInput(format!(
                "inconsistent counts: samples={samples} passes={passes} pass_after_reprompts={pass_after_reprompts}"
            )));
        }
        let fails = samples - passes;
        Ok(Self {
            samples,
            passes,
            fails,
            pass_after_reprompts,
            overrides: fails - pass_after_reprompts,
            accuracy_first_pass: percent2(passes, samples),
            accuracy_with_reprompts: percent2(passes + pass_after_reprompts, samples),
        })
    }
}

/// `100 * num / den` rounded to two decimals, ties away from zero. Done in
/// integers so ties are exact.
pub fn percent2(num: u64, den: u64) -> f64 {
    let (num, den) = (num as u128, den as u128);
    let hundredths = (20_000 * num + den) / (2 * den);
    hundredths as f64 / 100.0
}

pub fn accuracy_metrics(log: &[EpisodeRecord]) -> Result<AccuracyMetrics> {
    if log.is_empty() {
        return Err(Error::LogFormat {
            line: 1,
            message: "log has no episodes".into(),
        });
    }
    let (mut passes, mut rescued) = (0, 0);
    for (i, ep) in log.iter().enumerate() {
        if ep.attempts.is_empty() {
            return Err(Error::LogFormat {
                line: i + 2,
                message: format!("episode {} has no attempts", ep.index),
            });
        }
        match ep.passing_attempt() {
            Some(0) => passes += 1,
            Some(_) => rescued += 1,
            None => {}
        }
    }
    AccuracyMetrics::from_counts(log.len() as u64, passes, rescued)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlMetrics {
    /// Time-weighted mean |T - midpoint|, °C.
    pub avg_deviation: f64,
    /// s
    pub time_above: f64,
    /// s
    pub time_below: f64,
    /// s, always `time_above + time_below`
    pub time_outside: f64,
    /// °C
    pub midpoint: f64,
}

/// Zero-order hold: episode i's temperature holds over
/// `[t_start_i, t_start_{i+1})`, the last interval closing at `run_duration`.
pub fn control_metrics(
    log: &[EpisodeRecord],
    th: &Thresholds,
    run_duration: f64,
) -> Result<ControlMetrics> {
    let midpoint = th.midpoint();
    for (i, w) in log.windows(2).enumerate() {
        if w[1].t_start < w[0].t_start {
            return Err(Error::LogFormat {
                line: i + 3,
                message: format!(
                    "episode {} starts at {} before episode {} at {}",
                    w[1].index, w[1].t_start, w[0].index, w[0].t_start
                ),
            });
        }
    }
    let (mut above, mut below, mut weighted, mut total) = (0.0, 0.0, 0.0, 0.0);
    for (i, ep) in log.iter().enumerate() {
        let end = log
            .get(i + 1)
            .map_or(run_duration, |n| n.t_start)
            .min(run_duration);
        let start = ep.t_start.max(0.0);
        let dt = (end - start).max(0.0);
        if ep.t_sensor > th.high {
            above += dt;
        } else if ep.t_sensor < th.low {
            below += dt;
        }
        weighted += (ep.t_sensor - midpoint).abs() * dt;
        total += dt;
    }
    Ok(ControlMetrics {
        avg_deviation: if total > 0.0 { weighted / total } else { 0.0 },
        time_above: above,
        time_below: below,
        time_outside: above + below,
        midpoint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub accuracy: AccuracyMetrics,
    pub control: ControlMetrics,
    pub thresholds: Thresholds,
}

impl Report {
    pub fn from_log(log: &[EpisodeRecord], th: &Thresholds, run_duration: f64) -> Result<Self> {
        Ok(Self {
            accuracy: accuracy_metrics(log)?,
            control: control_metrics(log, th, run_duration)?,
            thresholds: *th,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Machine,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "machine" => Ok(Self::Machine),
            other => Err(Error::InvalidInput(format!(
                "unknown report format {other:?}"
            ))),
        }
    }
}

pub const CSV_HEADER: &str = "samples,passes,fails,pass_after_reprompts,overrides,\
accuracy_first_pass,accuracy_with_reprompts,avg_deviation,time_above,time_below,time_outside,midpoint";

fn fmt_threshold(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{t:.0}")
    } else {
        format!("{t}")
    }
}

pub fn report(r: &Report, format: ReportFormat) -> String {
    let a = &r.accuracy;
    let c = &r.control;
    match format {
        ReportFormat::Table => {
            let rows: [(String, String); 12] = [
                (
                    "Accuracy- first pass (%)".into(),
                    format!("{:.2}", a.accuracy_first_pass),
                ),
                (
                    "Accuracy - reprompts (%)".into(),
                    format!("{:.2}", a.accuracy_with_reprompts),
                ),
                ("Samples".into(), a.samples.to_string()),
                ("Passes".into(), a.passes.to_string()),
                ("Fails".into(), a.fails.to_string()),
                (
                    "Pass after reprompts".into(),
                    a.pass_after_reprompts.to_string(),
                ),
                ("Overrides".into(), a.overrides.to_string()),
                (
                    "Average Deviation".into(),
                    format!("{:.2}", c.avg_deviation),
                ),
                (
                    format!("Time above {}C (s)", fmt_threshold(r.thresholds.high)),
                    format!("{:.2}", c.time_above),
                ),
                (
                    format!("Time below {}C (s)", fmt_threshold(r.thresholds.low)),
                    format!("{:.2}", c.time_below),
                ),
                (
                    "Time outside range (s)".into(),
                    format!("{:.2}", c.time_outside),
                ),
                ("Midpoint (C)".into(), format!("{:.2}", c.midpoint)),
            ];
            let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            let mut out = String::new();
            for (i, (k, v)) in rows.iter().enumerate() {
                if i == 7 {
                    out.push('\n');
                }
                let _ = writeln!(out, "{k:<width$}  {v:>10}");
            }
            out
        }
        ReportFormat::Csv => format!(
            "{CSV_HEADER}\n{},{},{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}\n",
            a.samples,
            a.passes,
            a.fails,
            a.pass_after_reprompts,
            a.overrides,
            a.accuracy_first_pass,
            a.accuracy_with_reprompts,
            c.avg_deviation,
            c.time_above,
            c.time_below,
            c.time_outside,
            c.midpoint,
        ),
        ReportFormat::Machine => {
            let mut s = serde_json::to_string_pretty(r).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

pub fn parse_machine_report(text: &str) -> Result<Report> {
    serde_json::from_str(text).map_err(|e| Error::LogFormat {
        line: e.line(),
        message: e.to_string(),
    })
}

/// One `t,T,action` line per episode, for plotting temperature profiles.
pub fn points(log: &[EpisodeRecord]) -> String {
    let mut out = String::new();
    for ep in log {
        let _ = writeln!(out, "{:.3},{:.2},{}", ep.t_start, ep.t_sensor, ep.applied);
    }
    out
}
