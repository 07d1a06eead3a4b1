use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::load::LoadSignal;
use super::sdof::{sdof_response, NewmarkConfig};
use crate::basis::{CutoffRule, Oscillator};
use crate::error::{Error, Result};
use crate::gp::{fit, predict_force, reference_scales, CovarianceMode, DatasetStack, FitConfig};
use crate::metrics::r_squared;
use crate::seed::derive_seed;
use crate::signal::{add_white_noise, Kind};

/// The parameter swept by a Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum StudyAxis {
    /// Sampling interval as a fraction of the natural period.
    TimeStepRatio(Vec<f64>),
    Snr(Vec<f64>),
    InputTypes(Vec<Vec<Kind>>),
}

impl StudyAxis {
    pub fn len(&self) -> usize {
        match self {
            StudyAxis::TimeStepRatio(v) | StudyAxis::Snr(v) => v.len(),
            StudyAxis::InputTypes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self) -> &'static str {
        match self {
            StudyAxis::TimeStepRatio(_) => "time_step_ratio",
            StudyAxis::Snr(_) => "snr",
            StudyAxis::InputTypes(_) => "input_types",
        }
    }

    fn label(&self, point: usize) -> String {
        match self {
            StudyAxis::TimeStepRatio(v) | StudyAxis::Snr(v) => format!("{}", v[point]),
            StudyAxis::InputTypes(v) => input_label(&v[point]),
        }
    }
}

/// Short label such as `u+v+a` for a set of response kinds.
pub fn input_label(kinds: &[Kind]) -> String {
    kinds
        .iter()
        .map(|k| match k {
            Kind::Displacement => "u",
            Kind::Velocity => "v",
            Kind::Acceleration => "a",
            Kind::Force => "f",
            Kind::Rotation => "r",
        })
        .collect::<Vec<_>>()
        .join("+")
}

/// All seven non-empty subsets of displacement, velocity and acceleration.
pub fn all_input_combinations() -> Vec<Vec<Kind>> {
    let kinds = [Kind::Displacement, Kind::Velocity, Kind::Acceleration];
    (1u8..8)
        .map(|mask| kinds.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, k)| *k).collect())
        .collect()
}

/// Monte Carlo study of force reconstruction on a harmonically loaded oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub axis: StudyAxis,
    pub samples: usize,
    pub seed: u64,
    pub oscillator: Oscillator,
    /// Used unless the axis sweeps SNR.
    pub snr: f64,
    /// Used unless the axis sweeps the time step.
    pub time_step_ratio: f64,
    /// Used unless the axis sweeps input types.
    pub inputs: Vec<Kind>,
    pub load_amplitude: f64,
    pub load_frequency: f64,
    /// Move the load frequency to the nearest FFT bin of each record.
    pub snap_to_bin: bool,
    pub duration: f64,
    pub rule: CutoffRule,
    pub detrend: bool,
    pub fit: FitConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            axis: StudyAxis::TimeStepRatio(vec![0.05, 0.10, 0.20, 0.30, 0.45]),
            samples: 100,
            seed: 0,
            oscillator: Oscillator { mass: 1.0, zeta: 0.02, f_n: 1.0 },
            snr: 15.0,
            time_step_ratio: 0.10,
            inputs: vec![Kind::Displacement, Kind::Velocity, Kind::Acceleration],
            load_amplitude: 1.0,
            load_frequency: 1.5,
            snap_to_bin: true,
            duration: 100.0,
            rule: CutoffRule::default(),
            detrend: true,
            fit: FitConfig { starts: 2, ..FitConfig::default() },
        }
    }
}

impl StudyConfig {
    fn validate(&self) -> Result<Oscillator> {
        if self.samples == 0 {
            return Err(Error::InvalidInput("a study needs at least one sample per point".into()));
        }
        if self.axis.is_empty() {
            return Err(Error::InvalidInput("study axis has no values".into()));
        }
        let bad_kinds = |kinds: &[Kind]| kinds.is_empty() || kinds.iter().any(|k| !k.is_response());
        if bad_kinds(&self.inputs) {
            return Err(Error::InvalidInput("inputs must be a non-empty set of response kinds".into()));
        }
        if let StudyAxis::InputTypes(sets) = &self.axis {
            if sets.iter().any(|s| bad_kinds(s)) {
                return Err(Error::InvalidInput("every input set must be a non-empty set of response kinds".into()));
            }
        }
        if !(self.duration > 0.0 && self.load_frequency >= 0.0) {
            return Err(Error::InvalidInput("duration must be positive and load frequency non-negative".into()));
        }
        Oscillator::new(self.oscillator.mass, self.oscillator.zeta, self.oscillator.f_n)
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(json).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn point(&self, index: usize) -> (f64, f64, Vec<Kind>) {
        let (mut ratio, mut snr, mut inputs) = (self.time_step_ratio, self.snr, self.inputs.clone());
        match &self.axis {
            StudyAxis::TimeStepRatio(v) => ratio = v[index],
            StudyAxis::Snr(v) => snr = v[index],
            StudyAxis::InputTypes(v) => inputs = v[index].clone(),
        }
        (ratio, snr, inputs)
    }
}

/// Summary statistics of one axis point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub axis_value: String,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    pub n_failed: usize,
    /// R² of each successful sample in sample order.
    pub r2: Vec<f64>,
}

impl StudyRow {
    pub fn band_width(&self) -> f64 {
        self.q975 - self.q025
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub axis: String,
    pub rows: Vec<StudyRow>,
    pub config: StudyConfig,
}

impl StudyTable {
    /// CSV with header `axis,mean,q025,q975,n_failed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,mean,q025,q975,n_failed\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.axis_value, r.mean, r.q025, r.q975, r.n_failed);
        }
        out
    }

    /// Seeds, config echo and config digest.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "axis": self.axis,
            "master_seed": self.config.seed,
            "seed_labels": "point{p}/sample{s}/{load|noise-<kind>|fit}",
            "config_sha256": self.config.digest(),
            "config": self.config,
        })
    }
}

/// Linearly interpolated quantile of sorted data (type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One simulate, contaminate, fit and predict cycle; returns R² of the
/// predicted force against the true load at the sample times.
fn run_sample(cfg: &StudyConfig, osc: &Oscillator, point: usize, sample: usize) -> Result<f64> {
    let (ratio, snr, inputs) = cfg.point(point);
    let label = format!("point{point}/sample{sample}");
    let fs = 1.0 / (ratio * osc.period());
    let n = (cfg.duration * fs).round();
    let frequency = if cfg.snap_to_bin { (cfg.load_frequency * n / fs).round() * fs / n } else { cfg.load_frequency };
    let phase = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("{label}/load"))).random::<f64>() * 2.0 * PI;
    let load = LoadSignal::harmonic(cfg.load_amplitude, frequency, phase, fs, cfg.duration)?;
    let response = sdof_response(osc, &load, &NewmarkConfig::default())?;

    let channels = inputs
        .iter()
        .map(|&k| {
            let clean = response.get(k).expect("response kind");
            add_white_noise(clean, snr, derive_seed(cfg.seed, &format!("{label}/noise-{k}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stack = DatasetStack::independent(channels, 0)?;
    if cfg.detrend {
        stack = stack.detrended();
    }
    let scales = reference_scales(&stack, cfg.rule)?;
    let fit_cfg = FitConfig { seed: derive_seed(cfg.seed, &format!("{label}/fit")), ..cfg.fit };
    let model = fit(&stack, &scales, &fit_cfg)?;
    let posterior = predict_force(&model, osc, load.series().t(), CovarianceMode::Diagonal)?;
    r_squared(load.series().values(), &posterior.mean)
}

/// Runs every (point, sample) pair in parallel. Numerical failures are
/// counted per point; input errors abort the study.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyTable> {
    let osc = cfg.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.axis.len()).flat_map(|p| (0..cfg.samples).map(move |s| (p, s))).collect();
    let outcomes: Vec<Result<f64>> = jobs.par_iter().map(|&(p, s)| run_sample(cfg, &osc, p, s)).collect();

    let mut rows = Vec::with_capacity(cfg.axis.len());
    let mut outcomes = outcomes.into_iter();
    for p in 0..cfg.axis.len() {
        let mut r2 = Vec::with_capacity(cfg.samples);
        let mut n_failed = 0;
        for (s, outcome) in outcomes.by_ref().take(cfg.samples).enumerate() {
            match outcome {
                Ok(v) => r2.push(v),
                Err(e) if e.is_numerical() || matches!(e, Error::ZeroVarianceSignal) => {
                    log::warn!("point {p} sample {s} failed: {e}");
                    n_failed += 1;
                }
                Err(e) => return Err(e),
            }
        }
        let mut sorted = r2.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = if r2.is_empty() { f64::NAN } else { r2.iter().sum::<f64>() / r2.len() as f64 };
        rows.push(StudyRow {
            axis_value: cfg.axis.label(p),
            mean,
            q025: quantile(&sorted, 0.025),
            q975: quantile(&sorted, 0.975),
            n_failed,
            r2,
        });
    }
    Ok(StudyTable { axis: cfg.axis.name().to_string(), rows, config: cfg.clone() })
}
