//! Line-delimited run log: a header line carrying the run configuration,
//! then one line per episode, flushed as each episode completes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::orchestrator::{EpisodeRecord, RunConfig};
use crate::twin::TwinParams;

pub const LOG_FORMAT: &str = "reprompt-control/run-log/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub config_digest: String,
    pub backend: String,
    pub config: RunConfig,
    pub twin: TwinParams,
}

impl LogHeader {
    pub fn new(config: &RunConfig, twin: &TwinParams, backend: impl Into<String>) -> Self {
        Self {
            format: LOG_FORMAT.into(),
            config_digest: config_digest(config),
            backend: backend.into(),
            config: config.clone(),
            twin: *twin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogLine {
    Header(LogHeader),
    Episode(EpisodeRecord),
}

/// Hex SHA-256 of the canonical JSON encoding of the run configuration.
pub fn config_digest(config: &RunConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("run config serializes");
    Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub trait EpisodeSink {
    fn write_episode(&mut self, episode: &EpisodeRecord) -> Result<()>;
}

impl EpisodeSink for Vec<EpisodeRecord> {
    fn write_episode(&mut self, episode: &EpisodeRecord) -> Result<()> {
        self.push(episode.clone());
        Ok(())
    }
}

/// Discards episodes; the loop's return value still carries them.
pub struct NullSink;

impl EpisodeSink for NullSink {
    fn write_episode(&mut self, _: &EpisodeRecord) -> Result<()> {
        Ok(())
    }
}

pub struct RunLogWriter<W: Write> {
    out: W,
    label: String,
}

impl RunLogWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::new(file), header, path.display().to_string())
    }
}

impl<W: Write> RunLogWriter<W> {
    pub fn new(out: W, header: &LogHeader, label: impl Into<String>) -> Result<Self> {
        let mut w = Self {
            out,
            label: label.into(),
        };
        w.write_line(&LogLine::Header(header.clone()))?;
        Ok(w)
    }

    fn write_line(&mut self, line: &LogLine) -> Result<()> {
        let text = serde_json::to_string(line).expect("log line serializes");
        writeln!(self.out, "{text}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.label, e))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> EpisodeSink for RunLogWriter<W> {
    fn write_episode(&mut self, episode: &EpisodeRecord) -> Result<()> {
        self.write_line(&LogLine::Episode(episode.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: LogHeader,
    pub episodes: Vec<EpisodeRecord>,
}

impl RunLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file)
    }

    pub fn parse(reader: impl Read) -> Result<Self> {
        let mut header = None;
        let mut episodes = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::LogFormat {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line).map_err(|e| Error::LogFormat {
                line: lineno,
                message: e.to_string(),
            })?;
            match (parsed, header.is_some()) {
                (LogLine::Header(h), false) => {
                    if h.format != LOG_FORMAT {
                        return Err(Error::LogFormat {
                            line: lineno,
                            message: format!("unsupported log format {:?}", h.format),
                        });
                    }
                    header = Some(h)
                }
                (LogLine::Header(_), true) => {
                    return Err(Error::LogFormat {
                        line: lineno,
                        message: "second header line".into(),
                    })
                }
                (LogLine::Episode(_), false) => {
                    return Err(Error::LogFormat {
                        line: lineno,
                        message: "episode before header".into(),
                    })
                }
                (LogLine::Episode(ep), true) => {
                    if ep.index != episodes.len() {
                        return Err(Error::LogFormat {
                            line: lineno,
                            message: format!(
                                "expected episode {}, found {}",
                                episodes.len(),
                                ep.index
                            ),
                        });
                    }
                    episodes.push(ep)
                }
            }
        }
        let header = header.ok_or(Error::LogFormat {
            line: 1,
            message: "missing header line".into(),
        })?;
        Ok(Self { header, episodes })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out =
            serde_json::to_string(&LogLine::Header(self.header.clone())).expect("serializes");
        out.push('\n');
        for ep in &self.episodes {
            out.push_str(
                &serde_json::to_string(&LogLine::Episode(ep.clone())).expect("serializes"),
            );
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Proposal, Verdict};
    use crate::orchestrator::AttemptRecord;
    use crate::plantio::HeaterAction;

    fn episode(index: usize) -> EpisodeRecord {
        EpisodeRecord {
            index,
            t_start: index as f64 * 5.67,
            t_sensor: 26.43,
            prev_action: HeaterAction::On,
            attempts: vec![AttemptRecord {
                attempt_index: 0,
                raw_response: "ACTION: ON".into(),
                parsed: Proposal::Action(HeaterAction::On),
                verdict: Some(Verdict {
                    passed: true,
                    expected: Some(HeaterAction::On),
                    reason: "hold".into(),
                }),
                latency: 5.67,
            }],
            applied: HeaterAction::On,
            safety_override: false,
            t_end: index as f64 * 5.67 + 5.67,
        }
    }

    #[test]
    fn write_then_parse() {
        let header = LogHeader::new(
            &RunConfig::default(),
            &TwinParams::default(),
            "scripted:oracle",
        );
        let mut w = RunLogWriter::new(Vec::new(), &header, "mem").unwrap();
        for i in 0..3 {
            w.write_episode(&episode(i)).unwrap();
        }
        let bytes = w.into_inner();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().contains("\"override\":false"));
        let log = RunLog::parse(bytes.as_slice()).unwrap();
        assert_eq!(log.episodes.len(), 3);
        assert_eq!(log.to_jsonl(), text);
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = config_digest(&RunConfig::default());
        assert_eq!(a, config_digest(&RunConfig::default()));
        assert_eq!(a.len(), 64);
        let other = RunConfig {
            max_reprompts: 1,
            ..RunConfig::default()
        };
        assert_ne!(a, config_digest(&other));
    }

    #[test]
    fn malformed_logs() {
        let header = LogHeader::new(&RunConfig::default(), &TwinParams::default(), "x");
        let h = serde_json::to_string(&LogLine::Header(header)).unwrap();
        let e = serde_json::to_string(&LogLine::Episode(episode(0))).unwrap();

        let cases = [
            (String::new(), 1),
            (format!("{e}\n"), 1),
            (format!("{h}\n{e}\nnot json\n"), 3),
            (format!("{h}\n{h}\n"), 2),
            (
                format!(
                    "{h}\n{}\n",
                    serde_json::to_string(&LogLine::Episode(episode(4))).unwrap()
                ),
                2,
            ),
        ];
        for (text, line) in cases {
            match RunLog::parse(text.as_bytes()) {
                Err(Error::LogFormat { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{other:?}"),
            }
        }
    }
}
