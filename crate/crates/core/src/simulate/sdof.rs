use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::load::{Harmonic, LoadSignal};
use crate::basis::Oscillator;
use crate::error::{Error, Result};
use crate::signal::{Kind, TimeSeries};

/// Displacement, velocity and acceleration on a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub displacement: TimeSeries,
    pub velocity: TimeSeries,
    pub acceleration: TimeSeries,
}

impl Response {
    pub fn get(&self, kind: Kind) -> Option<&TimeSeries> {
        match kind {
            Kind::Displacement => Some(&self.displacement),
            Kind::Velocity => Some(&self.velocity),
            Kind::Acceleration => Some(&self.acceleration),
            Kind::Force | Kind::Rotation => None,
        }
    }

    fn from_columns(t: &[f64], u: Vec<f64>, v: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        Ok(Self {
            displacement: TimeSeries::new(t.to_vec(), u, Kind::Displacement, "m")?,
            velocity: TimeSeries::new(t.to_vec(), v, Kind::Velocity, "m/s")?,
            acceleration: TimeSeries::new(t.to_vec(), a, Kind::Acceleration, "m/s2")?,
        })
    }
}

/// Average-acceleration Newmark settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewmarkConfig {
    /// Integration steps per sample interval; `None` chooses enough that the
    /// step is at most 1/200 of the natural period.
    pub substeps: Option<usize>,
    pub initial_displacement: f64,
    pub initial_velocity: f64,
}

impl Default for NewmarkConfig {
    fn default() -> Self {
        Self { substeps: None, initial_displacement: 0.0, initial_velocity: 0.0 }
    }
}

/// Steps per natural period used when substeps are chosen automatically.
pub const STEPS_PER_PERIOD: f64 = 200.0;

const BETA: f64 = 0.25;
const GAMMA: f64 = 0.5;

/// True when the sampling rate cannot represent the load's highest frequency.
pub fn alias_risk(load: &LoadSignal) -> bool {
    match (load.max_frequency(), load.series().sampling_rate()) {
        (Some(f), Ok(fs)) => fs <= 2.0 * f,
        _ => false,
    }
}

/// Integrates `m·ü + c·u̇ + k·u = q(t)` with the Newmark average-acceleration
/// scheme and reports the state at the load's sample times.
pub fn sdof_response(osc: &Oscillator, load: &LoadSignal, cfg: &NewmarkConfig) -> Result<Response> {
    let series = load.series();
    let dt = series.uniform_dt()?;
    if alias_risk(load) {
        log::warn!(
            "alias risk: sampling at {:.4} Hz cannot represent load content at {:.4} Hz",
            1.0 / dt,
            load.max_frequency().unwrap_or(0.0)
        );
    }
    let substeps = match cfg.substeps {
        Some(0) => return Err(Error::InvalidInput("substeps must be at least 1".into())),
        Some(s) => s,
        None => (dt * osc.f_n * STEPS_PER_PERIOD).ceil().max(1.0) as usize,
    };
    let h = dt / substeps as f64;
    let (m, c, k) = (osc.mass, osc.damping(), osc.stiffness());
    let k_eff = k + GAMMA / (BETA * h) * c + m / (BETA * h * h);

    let t = series.t();
    let n = t.len();
    let (mut u, mut v) = (cfg.initial_displacement, cfg.initial_velocity);
    let mut a = (load.at(t[0]) - c * v - k * u) / m;
    let (mut us, mut vs, mut accs) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    us.push(u);
    vs.push(v);
    accs.push(a);
    for i in 1..n {
        for s in 1..=substeps {
            let time = t[i - 1] + s as f64 * h;
            let p = load.at(time)
                + m * (u / (BETA * h * h) + v / (BETA * h) + (0.5 / BETA - 1.0) * a)
                + c * (GAMMA / (BETA * h) * u + (GAMMA / BETA - 1.0) * v + h * (GAMMA / (2.0 * BETA) - 1.0) * a);
            let u_next = p / k_eff;
            let a_next = (u_next - u) / (BETA * h * h) - v / (BETA * h) - (0.5 / BETA - 1.0) * a;
            v += h * ((1.0 - GAMMA) * a + GAMMA * a_next);
            u = u_next;
            a = a_next;
        }
        us.push(u);
        vs.push(v);
        accs.push(a);
    }
    Response::from_columns(t, us, vs, accs)
}

/// Exact steady-state response to a harmonic load.
pub fn harmonic_steady_state(osc: &Oscillator, load: &Harmonic, t: &[f64]) -> Result<Response> {
    let w = 2.0 * PI * load.frequency;
    let (re, im) = osc.impedance(load.frequency);
    let gain = load.amplitude / re.hypot(im);
    let lag = im.atan2(re);
    let phase = |x: f64| w * x + load.phase - lag;
    Response::from_columns(
        t,
        t.iter().map(|&x| gain * phase(x).sin()).collect(),
        t.iter().map(|&x| gain * w * phase(x).cos()).collect(),
        t.iter().map(|&x| -gain * w * w * phase(x).sin()).collect(),
    )
}

/// Time after which the free-vibration transient has decayed by `e^-10`.
pub fn transient_decay_time(osc: &Oscillator) -> f64 {
    10.0 / (osc.zeta * osc.omega_n())
}
