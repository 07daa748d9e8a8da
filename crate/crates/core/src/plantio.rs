//! Plant access: the in-process twin, the line-protocol server that exposes a
//! twin over TCP, and the matching TCP client.

use std::fmt;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::twin::{self, TwinParams, TwinState};

pub const VERSION_STRING: &str = "AGENTIC-TWIN 1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HeaterAction {
    On,
    Off,
}

impl HeaterAction {
    pub fn duty(self) -> f64 {
        match self {
            HeaterAction::On => 100.0,
            HeaterAction::Off => 0.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            HeaterAction::On => HeaterAction::Off,
            HeaterAction::Off => HeaterAction::On,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeaterAction::On => "ON",
            HeaterAction::Off => "OFF",
        }
    }
}

impl fmt::Display for HeaterAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeaterAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ON" => Ok(HeaterAction::On),
            "OFF" => Ok(HeaterAction::Off),
            other => Err(Error::InvalidInput(format!(
                "unknown heater action {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantSample {
    /// Seconds since run start.
    pub timestamp: f64,
    pub t_sensor: f64,
    pub applied: HeaterAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Realtime,
    #[default]
    Lockstep,
}

/// Rounds to two decimals, ties away from zero.
pub fn quantize2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn format2(x: f64) -> String {
    format!("{:.2}", quantize2(x))
}

/// What the control loop needs from a plant. Callers serialize access; the
/// orchestrator is the only user during a run.
pub trait Plant {
    fn read_temperature(&mut self) -> Result<PlantSample>;

    fn apply_heater(&mut self, action: HeaterAction) -> Result<()>;

    /// Seconds since run start.
    fn clock(&mut self) -> Result<f64>;

    /// Moves the clock forward to `t`. Lockstep plants integrate up to `t`
    /// under the applied action; realtime plants block until wall time
    /// reaches `t`. A `t` in the past is a no-op.
    fn advance_to(&mut self, t: f64) -> Result<()>;

    fn clock_mode(&self) -> ClockMode;

    /// Full twin state when the plant is simulated in-process.
    fn twin_state(&self) -> Option<TwinState> {
        None
    }
}

/// In-process twin behind the [`Plant`] interface.
#[derive(Debug, Clone)]
pub struct SimPlant {
    params: TwinParams,
    state: TwinState,
    applied: HeaterAction,
    mode: ClockMode,
    started: Instant,
}

impl SimPlant {
    pub fn new(params: TwinParams, mode: ClockMode) -> Self {
        Self::with_state(params, TwinState::ambient(&params), mode)
    }

    pub fn with_state(params: TwinParams, state: TwinState, mode: ClockMode) -> Self {
        Self {
            params,
            state,
            applied: HeaterAction::Off,
            mode,
            started: Instant::now(),
        }
    }

    pub fn params(&self) -> &TwinParams {
        &self.params
    }

    fn integrate_to(&mut self, t: f64) -> Result<()> {
        let dt = t - self.state.clock;
        if dt > 0.0 {
            self.state = twin::step(&self.params, self.state, self.applied.duty(), dt)?;
            // keep the clock exactly on the requested instant
            self.state.clock = t;
        }
        Ok(())
    }

    fn sync_wall(&mut self) -> Result<()> {
        if self.mode == ClockMode::Realtime {
            let now = self.started.elapsed().as_secs_f64();
            self.integrate_to(now)?;
        }
        Ok(())
    }
}

impl Plant for SimPlant {
    fn read_temperature(&mut self) -> Result<PlantSample> {
        self.sync_wall()?;
        Ok(PlantSample {
            timestamp: self.state.clock,
            t_sensor: quantize2(self.state.t_sensor),
            applied: self.applied,
        })
    }

    fn apply_heater(&mut self, action: HeaterAction) -> Result<()> {
        self.sync_wall()?;
        self.applied = action;
        Ok(())
    }

    fn clock(&mut self) -> Result<f64> {
        self.sync_wall()?;
        Ok(self.state.clock)
    }

    fn advance_to(&mut self, t: f64) -> Result<()> {
        match self.mode {
            ClockMode::Lockstep => self.integrate_to(t),
            ClockMode::Realtime => {
                let now = self.started.elapsed().as_secs_f64();
                if t > now {
                    std::thread::sleep(Duration::from_secs_f64(t - now));
                }
                self.sync_wall()
            }
        }
    }

    fn clock_mode(&self) -> ClockMode {
        self.mode
    }

    fn twin_state(&self) -> Option<TwinState> {
        Some(self.state)
    }
}

/// Line-protocol device emulator wrapping a twin.
///
/// Commands (verbs case-insensitive): `T1`, `Q1 <duty>`, `VER`, and in
/// lockstep mode `X_ADV <seconds>`. Anything else answers `ERR`.
#[derive(Debug, Clone)]
pub struct PlantServer {
    params: TwinParams,
    state: TwinState,
    duty: f64,
    mode: ClockMode,
    started: Instant,
}

impl PlantServer {
    pub fn new(params: TwinParams, mode: ClockMode) -> Self {
        Self {
            params,
            state: TwinState::ambient(&params),
            duty: 0.0,
            mode,
            started: Instant::now(),
        }
    }

    pub fn state(&self) -> TwinState {
        self.state
    }

    pub fn duty(&self) -> f64 {
        self.duty
    }

    fn advance(&mut self, dt: f64) -> bool {
        if dt <= 0.0 {
            return true;
        }
        match twin::step(&self.params, self.state, self.duty, dt) {
            Ok(s) => {
                self.state = s;
                true
            }
            Err(_) => false,
        }
    }

    fn sync_wall(&mut self) {
        if self.mode == ClockMode::Realtime {
            let now = self.started.elapsed().as_secs_f64();
            self.advance(now - self.state.clock);
        }
    }

    pub fn handle_command(&mut self, line: &str) -> String {
        self.sync_wall();
        let mut parts = line.split_whitespace();
        let verb = parts.next().unwrap_or("").to_ascii_uppercase();
        let arg = parts.next();
        if parts.next().is_some() {
            return "ERR".into();
        }
        let number = || -> Option<f64> { arg?.parse::<f64>().ok().filter(|v| v.is_finite()) };
        match (verb.as_str(), arg) {
            ("T1", None) => format2(self.state.t_sensor),
            ("VER", None) => VERSION_STRING.into(),
            ("Q1", Some(_)) => match number() {
                Some(v) => {
                    self.duty = v.clamp(0.0, 100.0);
                    format2(self.duty)
                }
                None => "ERR".into(),
            },
            ("X_ADV", Some(_)) if self.mode == ClockMode::Lockstep => match number() {
                Some(s) if s >= 0.0 && self.advance(s) => "OK".into(),
                _ => "ERR".into(),
            },
            _ => "ERR".into(),
        }
    }
}

/// Serves one connection at a time until `shutdown` is set. Pending
/// connections wait in the listen backlog.
pub fn serve(
    listener: TcpListener,
    server: &mut PlantServer,
    shutdown: Arc<AtomicBool>,
) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => serve_connection(stream, server, &shutdown)?,
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn serve_connection(
    stream: TcpStream,
    server: &mut PlantServer,
    shutdown: &AtomicBool,
) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_millis(100)))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        if shutdown.load(Ordering::SeqCst) {
            return Ok(());
        }
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => return Ok(()),
            Ok(_) if buf.ends_with(b"\n") => {
                let line = String::from_utf8_lossy(&buf);
                let reply = server.handle_command(line.trim_end_matches(['\r', '\n']));
                buf.clear();
                if writer
                    .write_all(format!("{reply}\n").as_bytes())
                    .and_then(|_| writer.flush())
                    .is_err()
                {
                    return Ok(());
                }
            }
            // EOF without a trailing newline
            Ok(_) => return Ok(()),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(_) => return Ok(()),
        }
    }
}

/// Client side of the line protocol.
pub struct TcpPlant {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    mode: ClockMode,
    applied: HeaterAction,
    clock: f64,
    started: Instant,
}

impl TcpPlant {
    pub fn connect(addr: &str, mode: ClockMode, timeout: Duration) -> Result<Self> {
        let sock = addr
            .to_socket_addrs()
            .map_err(|e| Error::PlantIo(format!("{addr}: {e}")))?
            .next()
            .ok_or_else(|| Error::PlantIo(format!("{addr}: no address")))?;
        let stream = TcpStream::connect_timeout(&sock, timeout)
            .map_err(|e| Error::PlantIo(format!("{addr}: {e}")))?;
        stream
            .set_read_timeout(Some(timeout))
            .map_err(|e| Error::PlantIo(e.to_string()))?;
        let writer = stream
            .try_clone()
            .map_err(|e| Error::PlantIo(e.to_string()))?;
        let mut plant = Self {
            reader: BufReader::new(stream),
            writer,
            mode,
            applied: HeaterAction::Off,
            clock: 0.0,
            started: Instant::now(),
        };
        let ver = plant.command("VER")?;
        if ver != VERSION_STRING {
            return Err(Error::PlantIo(format!("unexpected device version {ver:?}")));
        }
        Ok(plant)
    }

    pub fn command(&mut self, cmd: &str) -> Result<String> {
        self.writer
            .write_all(format!("{cmd}\n").as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::PlantIo(format!("send {cmd:?}: {e}")))?;
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|e| Error::PlantIo(format!("reply to {cmd:?}: {e}")))?;
        if n == 0 {
            return Err(Error::PlantIo("connection closed by plant".into()));
        }
        let reply = line.trim_end_matches(['\r', '\n']).to_string();
        if reply == "ERR" {
            return Err(Error::PlantIo(format!("plant rejected {cmd:?}")));
        }
        Ok(reply)
    }
}

impl Plant for TcpPlant {
    fn read_temperature(&mut self) -> Result<PlantSample> {
        let reply = self.command("T1")?;
        let t: f64 = reply
            .parse()
            .map_err(|_| Error::PlantIo(format!("bad temperature reply {reply:?}")))?;
        if !t.is_finite() {
            return Err(Error::PlantIo(format!("bad temperature reply {reply:?}")));
        }
        Ok(PlantSample {
            timestamp: self.clock()?,
            t_sensor: quantize2(t),
            applied: self.applied,
        })
    }

    fn apply_heater(&mut self, action: HeaterAction) -> Result<()> {
        self.command(&format!("Q1 {}", action.duty()))?;
        self.applied = action;
        Ok(())
    }

    fn clock(&mut self) -> Result<f64> {
        Ok(match self.mode {
            ClockMode::Lockstep => self.clock,
            ClockMode::Realtime => self.started.elapsed().as_secs_f64(),
        })
    }

    fn advance_to(&mut self, t: f64) -> Result<()> {
        match self.mode {
            ClockMode::Lockstep => {
                let dt = t - self.clock;
                if dt > 0.0 {
                    self.command(&format!("X_ADV {dt}"))?;
                    self.clock = t;
                }
            }
            ClockMode::Realtime => {
                let now = self.started.elapsed().as_secs_f64();
                if t > now {
                    std::thread::sleep(Duration::from_secs_f64(t - now));
                }
            }
        }
        Ok(())
    }

    fn clock_mode(&self) -> ClockMode {
        self.mode
    }
}
