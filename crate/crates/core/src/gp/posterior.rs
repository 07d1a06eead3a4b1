//! Conditioning on the training data. Any output linear in the basis weights
//! (force, or a response of any kind) has posterior mean `Ψ_*·m_w` and
//! covariance `Ψ_*·A⁻¹·Ψ_*ᵀ`, where `m_w` and the Cholesky factor of `A`
//! come from the fitted factorization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TrainedModel;
use crate::basis::{force_basis, response_basis, Oscillator};
use crate::error::{Error, Result};
use crate::signal::{Kind, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    Full,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorCovariance {
    Full(DMatrix<f64>),
    Diagonal(Vec<f64>),
}

/// Posterior of a force or response signal at prediction times.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub cov: PosteriorCovariance,
    pub kind: Kind,
    /// Oscillator used for force predictions.
    pub oscillator: Option<Oscillator>,
    /// Diagonal entries that were negative from round-off and set to zero.
    pub clipped_variances: usize,
}

impl Posterior {
    pub fn variance(&self) -> Vec<f64> {
        match &self.cov {
            PosteriorCovariance::Full(m) => m.diagonal().iter().copied().collect(),
            PosteriorCovariance::Diagonal(v) => v.clone(),
        }
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().into_iter().map(f64::sqrt).collect()
    }

    pub fn mean_series(&self, unit: &str) -> Result<TimeSeries> {
        TimeSeries::new(self.t.clone(), self.mean.clone(), self.kind, unit)
    }
}

/// Posterior of the modal force `m·ü + 2mζω_n·u̇ + mω_n²·u`.
pub fn predict_force(model: &TrainedModel, osc: &Oscillator, t_pred: &[f64], mode: CovarianceMode) -> Result<Posterior> {
    check_times(t_pred)?;
    let basis = force_basis(t_pred, model.scales(), osc);
    let mut post = condition(model, &basis.values, t_pred, Kind::Force, mode);
    post.oscillator = Some(*osc);
    Ok(post)
}

/// Posterior of a noise-free response of the given kind.
pub fn denoise_response(model: &TrainedModel, kind: Kind, t_pred: &[f64], mode: CovarianceMode) -> Result<Posterior> {
    check_times(t_pred)?;
    let basis = response_basis(t_pred, model.scales(), kind)?;
    Ok(condition(model, &basis.values, t_pred, kind, mode))
}

fn check_times(t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(Error::InvalidInput("no prediction times".into()));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite prediction time".into()));
    }
    Ok(())
}

fn condition(model: &TrainedModel, basis: &DMatrix<f64>, t: &[f64], kind: Kind, mode: CovarianceMode) -> Posterior {
    let factor = model.factorization();
    let n = t.len();
    let mean: Vec<f64> = (basis * &factor.weights).iter().copied().collect();

    let (cov, clipped) = match &factor.inner {
        None => match mode {
            CovarianceMode::Full => (PosteriorCovariance::Full(DMatrix::zeros(n, n)), 0),
            CovarianceMode::Diagonal => (PosteriorCovariance::Diagonal(vec![0.0; n]), 0),
        },
        Some(chol) => {
            // Columns of `whitened` are L⁻¹ψ_*(t_i), so Σ_* = whitenedᵀ·whitened.
            let mut whitened = basis.transpose();
            chol.l_dirty().solve_lower_triangular_mut(&mut whitened);
            match mode {
                CovarianceMode::Full => {
                    let raw = whitened.tr_mul(&whitened);
                    let mut cov = (&raw + raw.transpose()) * 0.5;
                    let mut clipped = 0;
                    for i in 0..n {
                        if cov[(i, i)] < 0.0 {
                            cov[(i, i)] = 0.0;
                            clipped += 1;
                        }
                    }
                    (PosteriorCovariance::Full(cov), clipped)
                }
                CovarianceMode::Diagonal => {
                    let mut var: Vec<f64> = whitened.column_iter().map(|c| c.norm_squared()).collect();
                    let clipped = clip_diagonal(&mut var);
                    (PosteriorCovariance::Diagonal(var), clipped)
                }
            }
        }
    };
    if clipped > 0 {
        log::warn!("{clipped} negative posterior variances clipped to zero");
    }
    Posterior { t: t.to_vec(), mean, cov, kind, oscillator: None, clipped_variances: clipped }
}

fn clip_diagonal(values: &mut [f64]) -> usize {
    let mut clipped = 0;
    for v in values.iter_mut().filter(|v| **v < 0.0) {
        *v = 0.0;
        clipped += 1;
    }
    clipped
}
