use proptest::prelude::*;
use reprompt_control::twin::{rollout, steady_state, step, TwinParams, TwinState};

/// Independent reference: explicit Euler at a fine fixed step.
fn euler(p: &TwinParams, s: TwinState, duty: f64, dt: f64, h: f64) -> TwinState {
    let n = (dt / h).round() as u64;
    let (mut th, mut ts) = (s.t_heater, s.t_sensor);
    for _ in 0..n {
        let dh = (p.alpha * duty + p.u_ha * (p.t_amb - th) + p.u_hs * (ts - th)) / p.c_h;
        let ds = (p.u_hs * (th - ts) + p.u_sa * (p.t_amb - ts)) / p.c_s;
        th += h * dh;
        ts += h * ds;
    }
    TwinState::new(th, ts, s.clock + dt)
}

/// Piecewise-constant duty schedule covering 600 s.
fn schedule() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..=100.0, 1u32..=12), 1..6).prop_map(|segs| {
        let total: u32 = segs.iter().map(|s| s.1).sum();
        let mut out = Vec::new();
        let mut used = 0.0;
        for (i, (duty, w)) in segs.iter().enumerate() {
            let len = if i + 1 == segs.len() {
                600.0 - used
            } else {
                (600.0 * *w as f64 / total as f64).round()
            };
            used += len;
            if len > 0.0 {
                out.push((*duty, len));
            }
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rk4_matches_fine_euler(segments in schedule(), th0 in 23.0f64..43.0, ts0 in 23.0f64..33.0) {
        let p = TwinParams::default();
        let mut rk = TwinState::new(th0, ts0, 0.0);
        let mut eu = rk;
        let mut worst: f64 = 0.0;
        for (duty, len) in segments {
            for _ in 0..(len as u64) {
                rk = step(&p, rk, duty, 1.0).unwrap();
                eu = euler(&p, eu, duty, 1.0, 0.001);
                worst = worst.max((rk.t_sensor - eu.t_sensor).abs());
            }
        }
        prop_assert!(worst <= 1e-3, "max |rk4 - euler| = {worst}");
    }
}

proptest! {
    #[test]
    fn steady_state_is_fixed_point(duty in 0.0f64..=100.0, dt in 0.1f64..200.0) {
        let p = TwinParams::default();
        let (h, s) = steady_state(&p, duty).unwrap();
        let next = step(&p, TwinState::new(h, s, 0.0), duty, dt).unwrap();
        prop_assert!((next.t_heater - h).abs() <= 1e-9);
        prop_assert!((next.t_sensor - s).abs() <= 1e-9);
    }

    #[test]
    fn steps_compose(duty in 0.0f64..=100.0, a in 1u32..300, b in 1u32..300, th0 in 23.0f64..43.0, ts0 in 23.0f64..33.0) {
        let p = TwinParams::default();
        let (a, b) = (a as f64 * p.dt_internal, b as f64 * p.dt_internal);
        let s0 = TwinState::new(th0, ts0, 0.0);
        let whole = step(&p, s0, duty, a + b).unwrap();
        let split = step(&p, step(&p, s0, duty, a).unwrap(), duty, b).unwrap();
        prop_assert!((whole.t_heater - split.t_heater).abs() <= 1e-9);
        prop_assert!((whole.t_sensor - split.t_sensor).abs() <= 1e-9);
    }

    #[test]
    fn clock_advances_exactly(dt in 0.001f64..500.0, duty in 0.0f64..=100.0, c0 in 0.0f64..1e4) {
        let p = TwinParams::default();
        let s = step(&p, TwinState::new(30.0, 25.0, c0), duty, dt).unwrap();
        prop_assert_eq!(s.clock, c0 + dt);
    }

    // The bound holds on states reachable from ambient; an arbitrary pair such
    // as a cold heater next to a 43 °C sensor can overshoot it.
    #[test]
    fn temperatures_stay_bounded(warmup in prop::collection::vec(0.0f64..=100.0, 0..8), duties in prop::collection::vec(0.0f64..=100.0, 1..40)) {
        let p = TwinParams::default();
        let (hot, _) = steady_state(&p, 100.0).unwrap();
        let mut s = TwinState::ambient(&p);
        for duty in warmup {
            s = step(&p, s, duty, 211.0).unwrap();
        }
        for duty in duties {
            s = step(&p, s, duty, 37.0).unwrap();
            for t in [s.t_heater, s.t_sensor] {
                prop_assert!(t >= p.t_amb - 1e-3 && t <= hot + 1e-3, "{s:?}");
            }
        }
    }

    #[test]
    fn heating_from_ambient_is_monotone(duty in 1.0f64..=100.0) {
        let p = TwinParams::default();
        let (_, target) = steady_state(&p, duty).unwrap();
        let traj = rollout(&p, TwinState::ambient(&p), duty, 1200.0).unwrap();
        for w in traj.windows(2) {
            if target - w[0].1 > 1e-6 {
                prop_assert!(w[1].1 >= w[0].1);
            }
        }
    }

    #[test]
    fn rollout_endpoint_matches_step(duty in 0.0f64..=100.0, horizon in 0.05f64..90.0) {
        let p = TwinParams::default();
        let s0 = TwinState::new(35.0, 26.0, 3.0);
        let traj = rollout(&p, s0, duty, horizon).unwrap();
        let end = step(&p, s0, duty, horizon).unwrap();
        prop_assert_eq!(traj[0], (3.0, 26.0));
        prop_assert_eq!(*traj.last().unwrap(), (end.clock, end.t_sensor));
        prop_assert_eq!(traj.len(), horizon.ceil() as usize + 1);
    }
}

#[test]
fn overshoot_after_turn_off() {
    let p = TwinParams::default();
    let traj = rollout(&p, TwinState::new(43.0, 27.0, 0.0), 0.0, 600.0).unwrap();
    let peak = traj.iter().map(|&(_, t)| t).fold(f64::MIN, f64::max);
    assert!(peak > 27.0, "peak {peak}");
}

#[test]
fn deterministic_bits() {
    let p = TwinParams::default();
    let s0 = TwinState::new(31.3, 26.1, 0.0);
    let a = step(&p, s0, 63.0, 123.456).unwrap();
    let b = step(&p, s0, 63.0, 123.456).unwrap();
    assert_eq!(a.t_sensor.to_bits(), b.t_sensor.to_bits());
    assert_eq!(a.t_heater.to_bits(), b.t_heater.to_bits());
}
