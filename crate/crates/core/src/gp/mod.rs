//! Gaussian process over responses with an explicit Fourier basis, fitted by
//! maximum marginal likelihood and conditioned to predict the modal force.
//!
//! The prior is `u_r ~ N(0, σ_s²·Ψ_rΨ_rᵀ + Σ_n)` where `Ψ_r` stacks the
//! response bases of every dataset on a shared frequency grid and `Σ_n` is
//! diagonal with one variance per noise group. All linear algebra happens in
//! the `2N_fr`-dimensional weight space.

mod likelihood;
pub mod optimize;
mod posterior;
mod prior;

pub use likelihood::{log_marginal_likelihood, row_blocks, Factorization, LowRankSystem, RowBlock, JITTER_FLOOR, JITTER_SCHEDULE};
pub use posterior::{denoise_response, predict_force, CovarianceMode, Posterior, PosteriorCovariance};
pub use prior::sample_prior;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{response_basis, select_frequencies, BasisMatrix, CutoffRule, SpectralScales};
use crate::error::{Error, Result};
use crate::signal::{fft_magnitude, TimeSeries};
use optimize::NelderMead;

/// One measured response channel and the noise group it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub series: TimeSeries,
    pub group: usize,
}

/// Ordered training datasets; row blocks of the stacked basis follow this order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStack {
    entries: Vec<Dataset>,
    reference: usize,
    n_groups: usize,
}

impl DatasetStack {
    pub fn new(entries: Vec<Dataset>, reference: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("dataset stack is empty".into()));
        }
        if reference >= entries.len() {
            return Err(Error::InvalidInput(format!(
                "reference index {reference} out of range for {} datasets",
                entries.len()
            )));
        }
        if let Some(d) = entries.iter().find(|d| !d.series.kind().is_response()) {
            return Err(Error::InvalidInput(format!(
                "training datasets must be responses, got {}",
                d.series.kind()
            )));
        }
        let n_groups = entries.iter().map(|d| d.group + 1).max().unwrap_or(0);
        for g in 0..n_groups {
            if !entries.iter().any(|d| d.group == g) {
                return Err(Error::InvalidInput(format!("noise group ids must be contiguous; {g} is unused")));
            }
        }
        Ok(Self { entries, reference, n_groups })
    }

    /// One noise group per dataset.
    pub fn independent(series: Vec<TimeSeries>, reference: usize) -> Result<Self> {
        let entries = series.into_iter().enumerate().map(|(group, series)| Dataset { series, group }).collect();
        Self::new(entries, reference)
    }

    pub fn entries(&self) -> &[Dataset] {
        &self.entries
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn reference_series(&self) -> &TimeSeries {
        &self.entries[self.reference].series
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|d| d.series.len()).sum()
    }

    pub fn stacked_values(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.total_len(),
            self.entries.iter().flat_map(|d| d.series.values().iter().copied()),
        )
    }

    pub fn row_groups(&self) -> Vec<usize> {
        self.entries.iter().flat_map(|d| std::iter::repeat_n(d.group, d.series.len())).collect()
    }

    /// Population variance of all values in each noise group.
    pub fn group_variances(&self) -> Vec<f64> {
        (0..self.n_groups)
            .map(|g| {
                let values: Vec<f64> = self
                    .entries
                    .iter()
                    .filter(|d| d.group == g)
                    .flat_map(|d| d.series.values().iter().copied())
                    .collect();
                let n = values.len() as f64;
                let mu = values.iter().sum::<f64>() / n;
                values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n
            })
            .collect()
    }

    /// Every dataset with its mean removed.
    pub fn detrended(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|d| Dataset { series: d.series.detrended(), group: d.group })
            .collect();
        Self { entries, reference: self.reference, n_groups: self.n_groups }
    }
}

/// Frequency grid and displacement-unit amplitudes from the reference dataset's spectrum.
pub fn reference_scales(stack: &DatasetStack, rule: CutoffRule) -> Result<SpectralScales> {
    let reference = stack.reference_series();
    let spectrum = fft_magnitude(reference)?;
    let order = reference.kind().derivative_order().unwrap_or(0);
    Ok(select_frequencies(&spectrum, rule)?.in_displacement_units(order))
}

/// Vertical stack of each dataset's basis on its own time vector. The result
/// carries the reference dataset's kind.
pub fn assemble_response_basis(stack: &DatasetStack, scales: &SpectralScales) -> Result<BasisMatrix> {
    let mut values = DMatrix::zeros(stack.total_len(), scales.n_columns());
    let mut row = 0;
    for d in &stack.entries {
        let b = response_basis(d.series.t(), scales, d.series.kind())?;
        values.rows_mut(row, b.nrows()).copy_from(&b.values);
        row += b.nrows();
    }
    Ok(BasisMatrix { values, kind: stack.reference_series().kind() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub sigma_s2: f64,
    pub sigma_n2: Vec<f64>,
}

impl Hyperparameters {
    pub fn new(sigma_s2: f64, sigma_n2: Vec<f64>) -> Result<Self> {
        if !(sigma_s2.is_finite() && sigma_s2 >= 0.0) || sigma_n2.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput("hyperparameters must be finite and non-negative".into()));
        }
        Ok(Self { sigma_s2, sigma_n2 })
    }

    /// `σ_s² / (σ_s² + σ_n,g²)`.
    pub fn signal_ratio(&self, group: usize) -> f64 {
        let total = self.sigma_s2 + self.sigma_n2[group];
        if total > 0.0 {
            self.sigma_s2 / total
        } else {
            0.0
        }
    }

    fn to_log(&self) -> Vec<f64> {
        std::iter::once(self.sigma_s2).chain(self.sigma_n2.iter().copied()).map(f64::ln).collect()
    }

    fn from_log(x: &[f64]) -> Self {
        Self { sigma_s2: x[0].exp(), sigma_n2: x[1..].iter().map(|v| v.exp()).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub starts: usize,
    pub seed: u64,
    /// Standard deviation of the log-space perturbation of starts after the first.
    pub start_spread: f64,
    pub max_evals: usize,
    pub xtol: f64,
    pub ftol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { starts: 4, seed: 0, start_spread: 2.0, max_evals: 2000, xtol: 1e-6, ftol: 1e-10 }
    }
}

pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-10, 1e10);
/// Noise variance bounds relative to the group's data variance.
pub const NOISE_VARIANCE_BOUNDS: (f64, f64) = (1e-10, 10.0);

/// Summary of one optimizer start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub index: usize,
    pub log_likelihood: Option<f64>,
    pub evals: usize,
    pub converged: bool,
}

/// Fitted model: data, grid, hyperparameters and the factorization they imply.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    theta: Hyperparameters,
    scales: SpectralScales,
    stack: DatasetStack,
    system: LowRankSystem,
    factor: Factorization,
    starts: Vec<StartOutcome>,
}

impl TrainedModel {
    /// Rebuilds the model for given hyperparameters, re-deriving the factorization.
    pub fn from_parts(stack: DatasetStack, scales: SpectralScales, theta: Hyperparameters) -> Result<Self> {
        let system = build_system(&stack, &scales)?;
        let factor = system.factorize(&theta)?;
        Ok(Self { theta, scales, stack, system, factor, starts: Vec::new() })
    }

    pub fn theta(&self) -> &Hyperparameters {
        &self.theta
    }

    pub fn scales(&self) -> &SpectralScales {
        &self.scales
    }

    pub fn stack(&self) -> &DatasetStack {
        &self.stack
    }

    pub fn system(&self) -> &LowRankSystem {
        &self.system
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factor
    }

    pub fn log_likelihood(&self) -> f64 {
        self.factor.log_likelihood
    }

    pub fn starts(&self) -> &[StartOutcome] {
        &self.starts
    }

    pub fn signal_ratios(&self) -> Vec<f64> {
        (0..self.theta.sigma_n2.len()).map(|g| self.theta.signal_ratio(g)).collect()
    }
}

fn build_system(stack: &DatasetStack, scales: &SpectralScales) -> Result<LowRankSystem> {
    let psi = assemble_response_basis(stack, scales)?;
    let blocks = row_blocks(&stack.row_groups());
    LowRankSystem::new(psi.values, stack.stacked_values(), blocks)
}

/// Maximizes the log marginal likelihood over `log θ` with a multi-start
/// simplex search inside fixed box bounds.
pub fn fit(stack: &DatasetStack, scales: &SpectralScales, cfg: &FitConfig) -> Result<TrainedModel> {
    if cfg.starts == 0 {
        return Err(Error::InvalidInput("at least one optimizer start is required".into()));
    }
    let system = build_system(stack, scales)?;
    let variances: Vec<f64> = stack.group_variances().into_iter().map(|v| if v > 0.0 { v } else { 1.0 }).collect();

    let mut lower = vec![SIGNAL_VARIANCE_BOUNDS.0.ln()];
    let mut upper = vec![SIGNAL_VARIANCE_BOUNDS.1.ln()];
    for v in &variances {
        lower.push((NOISE_VARIANCE_BOUNDS.0 * v).ln());
        upper.push((NOISE_VARIANCE_BOUNDS.1 * v).ln());
    }
    let initial = Hyperparameters { sigma_s2: 1.0, sigma_n2: variances.iter().map(|v| v / 10.0).collect() }.to_log();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spread = Normal::new(0.0, cfg.start_spread).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let start_points: Vec<Vec<f64>> = (0..cfg.starts)
        .map(|s| {
            if s == 0 {
                initial.clone()
            } else {
                initial.iter().map(|x| x + spread.sample(&mut rng)).collect()
            }
        })
        .collect();

    let nm = NelderMead { max_evals: cfg.max_evals, xtol: cfg.xtol, ftol: cfg.ftol, initial_step: 1.0 };
    let runs: Vec<_> = start_points
        .par_iter()
        .map(|x0| {
            let objective = |x: &[f64]| match system.log_marginal_likelihood(&Hyperparameters::from_log(x)) {
                Ok(v) => -v,
                Err(_) => f64::INFINITY,
            };
            nm.minimize(objective, x0, &lower, &upper)
        })
        .collect();

    let starts: Vec<StartOutcome> = runs
        .iter()
        .enumerate()
        .map(|(index, m)| StartOutcome {
            index,
            log_likelihood: m.value.is_finite().then_some(-m.value),
            evals: m.evals,
            converged: m.converged,
        })
        .collect();
    // Strict comparison keeps the lowest start index on ties.
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, m)| m.value.is_finite())
        .fold(None::<(usize, f64)>, |acc, (i, m)| match acc {
            Some((_, v)) if v <= m.value => acc,
            _ => Some((i, m.value)),
        })
        .ok_or(Error::FitFailed { starts: cfg.starts })?;

    let theta = Hyperparameters::from_log(&runs[best.0].x);
    let factor = system.factorize(&theta)?;
    log::info!(
        "fit: best start {} of {}, log-likelihood {:.6e}, σ_s² = {:.4e}",
        best.0,
        cfg.starts,
        factor.log_likelihood,
        theta.sigma_s2
    );
    Ok(TrainedModel { theta, scales: scales.clone(), stack: stack.clone(), system, factor, starts })
}
