//! Two-node lumped thermal model of the heater/sensor plant.
//!
//! The heater element and the temperature sensor are separate heat capacities
//! coupled by a conductance, each losing heat to ambient:
//!
//! ```text
//! c_h dT_h/dt = alpha u + u_ha (T_amb - T_h) + u_hs (T_s - T_h)
//! c_s dT_s/dt = u_hs (T_h - T_s) + u_sa (T_amb - T_s)
//! ```
//!
//! Because the sensor lags the heater, switching the heater off leaves stored
//! heat in the element that keeps warming the sensor for a while. That lag is
//! what produces overshoot past the upper switching threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwinParams {
    /// Ambient temperature, °C.
    pub t_amb: f64,
    /// Heater power per percent duty, W/%.
    pub alpha: f64,
    /// Heater node heat capacity, J/K.
    pub c_h: f64,
    /// Sensor node heat capacity, J/K.
    pub c_s: f64,
    /// Heater to ambient conductance, W/K.
    pub u_ha: f64,
    /// Heater to sensor conductance, W/K.
    pub u_hs: f64,
    /// Sensor to ambient conductance, W/K.
    pub u_sa: f64,
    /// Fixed RK4 substep, s.
    pub dt_internal: f64,
}

impl Default for TwinParams {
    fn default() -> Self {
        Self {
            t_amb: 23.0,
            alpha: 0.02,
            c_h: 5.0,
            c_s: 20.0,
            u_ha: 0.05,
            u_hs: 0.10,
            u_sa: 0.10,
            dt_internal: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinState {
    pub t_heater: f64,
    pub t_sensor: f64,
    /// Simulation time, s.
    pub clock: f64,
}

impl TwinState {
    pub fn new(t_heater: f64, t_sensor: f64, clock: f64) -> Self {
        Self {
            t_heater,
            t_sensor,
            clock,
        }
    }

    /// Both nodes at ambient, clock at zero.
    pub fn ambient(params: &TwinParams) -> Self {
        Self::new(params.t_amb, params.t_amb, 0.0)
    }

    fn check(&self) -> Result<()> {
        if self.t_heater.is_finite() && self.t_sensor.is_finite() && self.clock.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidState(format!(
                "non-finite twin state {self:?}"
            )))
        }
    }
}

impl TwinParams {
    /// Rejects parameter sets that cannot describe the plant, including ones
    /// whose full-duty sensor steady state never reaches 27 °C.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("t_amb", self.t_amb),
            ("alpha", self.alpha),
            ("c_h", self.c_h),
            ("c_s", self.c_s),
            ("u_ha", self.u_ha),
            ("u_hs", self.u_hs),
            ("u_sa", self.u_sa),
            ("dt_internal", self.dt_internal),
        ];
        for (key, v) in named {
            if !v.is_finite() {
                return Err(Error::config(format!("twin.{key}"), "must be finite"));
            }
        }
        for (key, v) in [
            ("c_h", self.c_h),
            ("c_s", self.c_s),
            ("u_ha", self.u_ha),
            ("u_hs", self.u_hs),
            ("u_sa", self.u_sa),
        ] {
            if v <= 0.0 {
                return Err(Error::config(format!("twin.{key}"), "must be > 0"));
            }
        }
        if self.alpha < 0.0 {
            return Err(Error::config("twin.alpha", "must be >= 0"));
        }
        if !(self.dt_internal > 0.0 && self.dt_internal <= 1.0) {
            return Err(Error::config("twin.dt_internal", "must lie in (0, 1]"));
        }
        let (_, t_sensor) = steady_state(self, 100.0)?;
        if t_sensor <= 27.0 {
            return Err(Error::config(
                "twin.alpha",
                format!("full-duty sensor steady state {t_sensor:.2} °C does not exceed 27 °C"),
            ));
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        let all = [
            self.t_amb,
            self.alpha,
            self.c_h,
            self.c_s,
            self.u_ha,
            self.u_hs,
            self.u_sa,
            self.dt_internal,
        ];
        if all.iter().all(|v| v.is_finite()) && self.dt_internal > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidState(format!("bad twin parameters {self:?}")))
        }
    }

    #[inline]
    fn derivatives(&self, power: f64, t_h: f64, t_s: f64) -> (f64, f64) {
        let dh = (power + self.u_ha * (self.t_amb - t_h) + self.u_hs * (t_s - t_h)) / self.c_h;
        let ds = (self.u_hs * (t_h - t_s) + self.u_sa * (self.t_amb - t_s)) / self.c_s;
        (dh, ds)
    }

    fn rk4(&self, power: f64, t_h: f64, t_s: f64, h: f64) -> (f64, f64) {
        let (k1h, k1s) = self.derivatives(power, t_h, t_s);
        let (k2h, k2s) = self.derivatives(power, t_h + 0.5 * h * k1h, t_s + 0.5 * h * k1s);
        let (k3h, k3s) = self.derivatives(power, t_h + 0.5 * h * k2h, t_s + 0.5 * h * k2s);
        let (k4h, k4s) = self.derivatives(power, t_h + h * k3h, t_s + h * k3s);
        (
            t_h + h / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h),
            t_s + h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s),
        )
    }

    /// Integrates one chunk of length `len` with full substeps and one
    /// trailing partial substep when `len` is not a multiple of dt_internal.
    fn integrate_chunk(&self, power: f64, t_h: f64, t_s: f64, len: f64) -> (f64, f64) {
        let h = self.dt_internal;
        let ratio = len / h;
        let mut full = ratio.floor();
        if ratio - full > 1.0 - 1e-9 {
            full += 1.0;
        }
        let rem = len - full * h;
        let (mut th, mut ts) = (t_h, t_s);
        for _ in 0..full as u64 {
            (th, ts) = self.rk4(power, th, ts, h);
        }
        if rem > 1e-12 * len.max(1.0) {
            (th, ts) = self.rk4(power, th, ts, rem);
        }
        (th, ts)
    }
}

fn check_duty(duty: f64) -> Result<()> {
    if duty.is_finite() && (0.0..=100.0).contains(&duty) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("duty {duty} outside [0, 100]")))
    }
}

/// Runs the plant forward by `dt` seconds at constant `duty` percent.
///
/// Integration proceeds in one-second chunks (the last one may be shorter),
/// each subdivided at `dt_internal`. [`rollout`] samples at the same chunk
/// boundaries, so its final point is bit-identical to this result.
pub fn step(params: &TwinParams, state: TwinState, duty: f64, dt: f64) -> Result<TwinState> {
    let mut out = state;
    integrate(params, state, duty, dt, |s| out = s)?;
    Ok(out)
}

/// Samples the trajectory at every whole second after `state.clock` and at the
/// final instant. The first element is the initial state.
pub fn rollout(
    params: &TwinParams,
    state: TwinState,
    duty: f64,
    horizon: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut traj = vec![(state.clock, state.t_sensor)];
    integrate(params, state, duty, horizon, |s| {
        traj.push((s.clock, s.t_sensor))
    })?;
    Ok(traj)
}

fn integrate(
    params: &TwinParams,
    state: TwinState,
    duty: f64,
    dt: f64,
    mut on_chunk: impl FnMut(TwinState),
) -> Result<()> {
    params.check_finite()?;
    state.check()?;
    check_duty(duty)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "dt {dt} must be finite and > 0"
        )));
    }
    let power = params.alpha * duty;
    let (mut th, mut ts) = (state.t_heater, state.t_sensor);
    let whole = dt.floor();
    let mut elapsed = 0.0;
    let mut k = 0u64;
    while (k as f64) < whole {
        (th, ts) = params.integrate_chunk(power, th, ts, 1.0);
        k += 1;
        elapsed = k as f64;
        on_chunk(TwinState::new(th, ts, state.clock + elapsed));
    }
    let tail = dt - whole;
    if tail > 0.0 {
        (th, ts) = params.integrate_chunk(power, th, ts, tail);
        elapsed = dt;
        on_chunk(TwinState::new(th, ts, state.clock + elapsed));
    }
    debug_assert_eq!(elapsed, dt);
    let end = TwinState::new(th, ts, state.clock + dt);
    end.check()
}

/// Fixed point of the model at constant duty, solved in closed form.
pub fn steady_state(params: &TwinParams, duty: f64) -> Result<(f64, f64)> {
    check_duty(duty)?;
    params.check_finite()?;
    // Work in deviations from ambient:
    //   (u_ha + u_hs) x - u_hs y = alpha u
    //   -u_hs x + (u_hs + u_sa) y = 0
    let a11 = params.u_ha + params.u_hs;
    let a12 = -params.u_hs;
    let a22 = params.u_hs + params.u_sa;
    let det = a11 * a22 - a12 * a12;
    if det == 0.0 || !det.is_finite() {
        return Err(Error::InvalidState(
            "singular conductance matrix (no unique steady state)".into(),
        ));
    }
    let b = params.alpha * duty;
    let x = b * a22 / det;
    let y = -a12 * b / det;
    Ok((params.t_amb + x, params.t_amb + y))
}
