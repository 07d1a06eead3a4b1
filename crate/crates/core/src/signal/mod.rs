//! Sampled signals and the spectral tools used to build and check the models.
//!
//! A [`TimeSeries`] is an immutable, validated container: strictly increasing
//! time stamps, finite values and a physical [`Kind`]. Spectral operations
//! require uniform sampling and report [`Error::NonUniformSampling`] otherwise.

mod noise;
mod spectrum;
mod wavelet;

pub use noise::add_white_noise;
pub use spectrum::{fft_magnitude, psd, Spectrum, WelchConfig};
pub use wavelet::{log_frequencies, morlet_cwt, WaveletGrid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on successive time steps for a series to count as uniform.
pub const UNIFORM_TOLERANCE: f64 = 1e-9;

/// Physical quantity carried by a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Displacement,
    Velocity,
    Acceleration,
    Force,
    Rotation,
}

impl Kind {
    /// Time-derivative order relative to displacement, for the three response kinds.
    pub fn derivative_order(self) -> Option<u8> {
        match self {
            Kind::Displacement => Some(0),
            Kind::Velocity => Some(1),
            Kind::Acceleration => Some(2),
            Kind::Force | Kind::Rotation => None,
        }
    }

    pub fn from_order(order: u8) -> Option<Kind> {
        match order {
            0 => Some(Kind::Displacement),
            1 => Some(Kind::Velocity),
            2 => Some(Kind::Acceleration),
            _ => None,
        }
    }

    pub fn is_response(self) -> bool {
        self.derivative_order().is_some()
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Displacement => "displacement",
            Kind::Velocity => "velocity",
            Kind::Acceleration => "acceleration",
            Kind::Force => "force",
            Kind::Rotation => "rotation",
        }
    }
}

impl std::str::FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "displacement" | "disp" | "u" => Ok(Kind::Displacement),
            "velocity" | "vel" | "v" => Ok(Kind::Velocity),
            "acceleration" | "acc" | "a" => Ok(Kind::Acceleration),
            "force" | "q" => Ok(Kind::Force),
            "rotation" | "rot" => Ok(Kind::Rotation),
            other => Err(Error::InvalidInput(format!("unknown signal kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A sampled signal with time stamps in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    t: Vec<f64>,
    values: Vec<f64>,
    kind: Kind,
    unit: String,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, values: Vec<f64>, kind: Kind, unit: impl Into<String>) -> Result<Self> {
        if t.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} time stamps but {} values",
                t.len(),
                values.len()
            )));
        }
        if t.len() < 2 {
            return Err(Error::InsufficientLength { needed: 2, got: t.len() });
        }
        if let Some(i) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite time stamp at index {i}")));
        }
        if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(format!(
                "time stamps not strictly increasing at index {}",
                i + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite value at index {i}")));
        }
        Ok(Self { t, values, kind, unit: unit.into() })
    }

    /// Uniform grid `t_i = t0 + i·dt`.
    pub fn uniform(t0: f64, dt: f64, values: Vec<f64>, kind: Kind, unit: impl Into<String>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidSeries(format!("time step must be positive, got {dt}")));
        }
        let t = uniform_grid(t0, dt, values.len());
        Self::new(t, values, kind, unit)
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }

    /// Same time stamps, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.t.clone(), values, self.kind, self.unit.clone())
    }

    pub fn with_kind(mut self, kind: Kind, unit: impl Into<String>) -> Self {
        self.kind = kind;
        self.unit = unit.into();
        self
    }

    /// The sampling step when all successive differences agree to within
    /// `UNIFORM_TOLERANCE·dt`.
    pub fn uniform_dt(&self) -> Result<f64> {
        let n = self.t.len();
        let dt = (self.t[n - 1] - self.t[0]) / (n - 1) as f64;
        let deviation = self
            .t
            .windows(2)
            .map(|w| ((w[1] - w[0]) - dt).abs())
            .fold(0.0, f64::max);
        if deviation < UNIFORM_TOLERANCE * dt {
            Ok(dt)
        } else {
            Err(Error::NonUniformSampling { deviation })
        }
    }

    pub fn sampling_rate(&self) -> Result<f64> {
        self.uniform_dt().map(|dt| 1.0 / dt)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Subtracts the mean.
    pub fn detrended(&self) -> Self {
        let mu = self.mean();
        Self {
            t: self.t.clone(),
            values: self.values.iter().map(|v| v - mu).collect(),
            kind: self.kind,
            unit: self.unit.clone(),
        }
    }
}

pub fn uniform_grid(t0: f64, dt: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t0 + i as f64 * dt).collect()
}
