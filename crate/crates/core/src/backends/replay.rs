use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Backend, DecisionRequest, Exchange};
use crate::error::{BackendError, Error, Result};

/// Reads a transcript: one JSON `Exchange` per line.
pub fn load_transcript(path: &Path) -> Result<Vec<Exchange>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let x: Exchange = serde_json::from_str(&line).map_err(|e| Error::LogFormat {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        out.push(x);
    }
    Ok(out)
}

/// Plays back recorded replies in order, ignoring the prompts it is given.
pub struct ReplayBackend {
    exchanges: Vec<Exchange>,
    next: usize,
}

impl ReplayBackend {
    pub fn new(exchanges: Vec<Exchange>) -> Self {
        Self { exchanges, next: 0 }
    }

    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self::new(load_transcript(path)?))
    }

    pub fn calls(&self) -> usize {
        self.next
    }

    pub fn remaining(&self) -> usize {
        self.exchanges.len() - self.next
    }
}

impl Backend for ReplayBackend {
    fn complete(&mut self, req: &DecisionRequest<'_>) -> Result<Exchange, BackendError> {
        let recorded = self
            .exchanges
            .get(self.next)
            .ok_or(BackendError::ReplayExhausted(self.next))?;
        self.next += 1;
        Ok(Exchange {
            system_text: req.system_text.to_string(),
            user_text: req.user_text.to_string(),
            timestamp: req.now,
            ..recorded.clone()
        })
    }

    fn label(&self) -> String {
        "replay".into()
    }
}

/// Wraps a backend and appends every exchange to a transcript sink, flushing
/// after each line.
pub struct Recorder<W: Write + Send> {
    inner: Box<dyn Backend>,
    sink: W,
}

impl<W: Write + Send> Recorder<W> {
    pub fn new(inner: Box<dyn Backend>, sink: W) -> Self {
        Self { inner, sink }
    }

    pub fn into_sink(self) -> W {
        self.sink
    }
}

pub fn record(sink: &mut impl Write, exchange: &Exchange) -> std::io::Result<()> {
    let line = serde_json::to_string(exchange).map_err(std::io::Error::other)?;
    writeln!(sink, "{line}")?;
    sink.flush()
}

impl<W: Write + Send> Backend for Recorder<W> {
    fn complete(&mut self, req: &DecisionRequest<'_>) -> Result<Exchange, BackendError> {
        let x = self.inner.complete(req)?;
        record(&mut self.sink, &x)
            .map_err(|e| BackendError::Transport(format!("transcript write: {e}")))?;
        Ok(x)
    }

    fn label(&self) -> String {
        self.inner.label()
    }
}
