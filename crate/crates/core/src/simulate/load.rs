use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{uniform_grid, Kind, TimeSeries};

/// One sinusoidal load component `amplitude·sin(2πft + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Harmonic {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.frequency * t + self.phase).sin()
    }
}

/// Low-pass amplitude shape `1/√(1 + (f/f_c)^(2·order))` for random-phase synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadbandShape {
    pub cutoff: f64,
    pub order: u32,
    /// Target root-mean-square value of the synthesized load.
    pub rms: f64,
}

impl Default for BroadbandShape {
    fn default() -> Self {
        Self { cutoff: 0.05, order: 4, rms: 1.0 }
    }
}

impl BroadbandShape {
    pub fn amplitude(&self, f: f64) -> f64 {
        1.0 / (1.0 + (f / self.cutoff).powi(2 * self.order as i32)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LoadDescriptor {
    Harmonic(Harmonic),
    Broadband { shape: BroadbandShape, seed: u64 },
    Composite(Vec<LoadDescriptor>),
    /// Given samples, no generating model.
    Sampled,
}

/// Sampled external force together with how it was generated.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSignal {
    series: TimeSeries,
    descriptor: LoadDescriptor,
}

impl LoadSignal {
    pub fn new(descriptor: LoadDescriptor, fs: f64, duration: f64) -> Result<Self> {
        if !(fs > 0.0 && duration > 0.0) {
            return Err(Error::InvalidInput(format!("sampling rate {fs} and duration {duration} must be positive")));
        }
        let n = (duration * fs).round() as usize;
        let t = uniform_grid(0.0, 1.0 / fs, n);
        let values = synthesize(&descriptor, &t, fs)?;
        let series = TimeSeries::new(t, values, Kind::Force, "N")?;
        Ok(Self { series, descriptor })
    }

    pub fn harmonic(amplitude: f64, frequency: f64, phase: f64, fs: f64, duration: f64) -> Result<Self> {
        Self::new(LoadDescriptor::Harmonic(Harmonic { amplitude, frequency, phase }), fs, duration)
    }

    pub fn broadband(shape: BroadbandShape, seed: u64, fs: f64, duration: f64) -> Result<Self> {
        Self::new(LoadDescriptor::Broadband { shape, seed }, fs, duration)
    }

    /// A load defined by explicit samples.
    pub fn from_series(series: TimeSeries) -> Result<Self> {
        if series.kind() != Kind::Force {
            return Err(Error::InvalidInput(format!("load must be a force series, got {}", series.kind())));
        }
        Ok(Self { series, descriptor: LoadDescriptor::Sampled })
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }

    pub fn descriptor(&self) -> &LoadDescriptor {
        &self.descriptor
    }

    /// Load at an arbitrary time: harmonic terms exactly, sampled parts by
    /// linear interpolation.
    pub fn at(&self, t: f64) -> f64 {
        match exact_value(&self.descriptor, t) {
            Some(v) => v,
            None => interpolate(self.series.t(), self.series.values(), t),
        }
    }

    /// Highest frequency carrying deliberate content, if known.
    pub fn max_frequency(&self) -> Option<f64> {
        max_frequency(&self.descriptor)
    }
}

fn exact_value(d: &LoadDescriptor, t: f64) -> Option<f64> {
    match d {
        LoadDescriptor::Harmonic(h) => Some(h.at(t)),
        LoadDescriptor::Broadband { .. } | LoadDescriptor::Sampled => None,
        LoadDescriptor::Composite(parts) => parts.iter().map(|p| exact_value(p, t)).sum::<Option<f64>>(),
    }
}

fn max_frequency(d: &LoadDescriptor) -> Option<f64> {
    match d {
        LoadDescriptor::Harmonic(h) => Some(h.frequency),
        LoadDescriptor::Broadband { .. } | LoadDescriptor::Sampled => None,
        LoadDescriptor::Composite(parts) => parts.iter().filter_map(max_frequency).reduce(f64::max),
    }
}

fn interpolate(t: &[f64], v: &[f64], x: f64) -> f64 {
    if x <= t[0] {
        return v[0];
    }
    let last = t.len() - 1;
    if x >= t[last] {
        return v[last];
    }
    let i = t.partition_point(|&ti| ti <= x) - 1;
    let w = (x - t[i]) / (t[i + 1] - t[i]);
    v[i] + w * (v[i + 1] - v[i])
}

fn synthesize(d: &LoadDescriptor, t: &[f64], fs: f64) -> Result<Vec<f64>> {
    match d {
        LoadDescriptor::Harmonic(h) => Ok(t.iter().map(|&x| h.at(x)).collect()),
        LoadDescriptor::Broadband { shape, seed } => broadband_samples(shape, *seed, t.len(), fs),
        LoadDescriptor::Composite(parts) => {
            let mut total = vec![0.0; t.len()];
            for p in parts {
                for (a, b) in total.iter_mut().zip(synthesize(p, t, fs)?) {
                    *a += b;
                }
            }
            Ok(total)
        }
        LoadDescriptor::Sampled => Err(Error::InvalidInput("sampled loads cannot be regenerated".into())),
    }
}

/// Random-phase sum over the FFT bins `0 < k < n/2` with amplitudes from the
/// shape, rescaled to the requested RMS.
fn broadband_samples(shape: &BroadbandShape, seed: u64, n: usize, fs: f64) -> Result<Vec<f64>> {
    if !(shape.cutoff > 0.0 && shape.rms >= 0.0 && shape.order > 0) {
        return Err(Error::InvalidInput("broadband shape needs positive cutoff and order".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..n.div_ceil(2) {
        let f = k as f64 * fs / n as f64;
        let phase: f64 = rng.random::<f64>() * 2.0 * PI;
        let c = Complex64::from_polar(shape.amplitude(f), phase);
        spec[k] = c;
        spec[n - k] = c.conj();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let values: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let current = (values.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let scale = if current > 0.0 { shape.rms / current } else { 0.0 };
    Ok(values.into_iter().map(|v| v * scale).collect())
}
