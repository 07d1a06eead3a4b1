//! Log marginal likelihood of `y ~ N(0, σ_s²·ΨΨᵀ + D)` with `D` diagonal and
//! constant within each noise group, evaluated through the inner matrix
//! `A = I/σ_s² + ΨᵀD⁻¹Ψ` (size `2N_fr`). The dense `ΣN_t × ΣN_t` covariance is
//! never formed; per-group Gram matrices make each evaluation independent of
//! the number of samples.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::Hyperparameters;
use crate::error::{Error, Result};

/// Relative jitter schedule tried in order when the inner factorization fails.
pub const JITTER_SCHEDULE: [f64; 4] = [1e-10, 1e-9, 1e-8, 1e-7];

/// Absolute floor on the variance that jitter is proportional to.
pub const JITTER_FLOOR: f64 = 1e-12;

/// Below this fraction of `yᵀD⁻¹y` the Gram-based quadratic form has lost too
/// many digits and is recomputed from explicit residuals.
const CANCELLATION_RATIO: f64 = 1e-6;

/// Contiguous run of rows sharing one noise group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowBlock {
    pub start: usize,
    pub len: usize,
    pub group: usize,
}

#[derive(Debug, Clone)]
struct GroupStats {
    gram: DMatrix<f64>,
    projection: DVector<f64>,
    energy: f64,
    count: usize,
}

/// Stacked basis and data with the per-group sufficient statistics.
#[derive(Debug, Clone)]
pub struct LowRankSystem {
    psi: DMatrix<f64>,
    y: DVector<f64>,
    blocks: Vec<RowBlock>,
    groups: Vec<GroupStats>,
}

/// Everything derived from one hyperparameter setting.
#[derive(Debug, Clone)]
pub struct Factorization {
    /// Noise variance per group including jitter.
    pub noise: Vec<f64>,
    pub sigma_s2: f64,
    /// `None` when `σ_s² = 0`.
    pub inner: Option<Cholesky<f64, Dyn>>,
    /// Posterior mean of the basis weights.
    pub weights: DVector<f64>,
    pub log_likelihood: f64,
    pub jitter: f64,
}

/// Run-length encodes per-row group labels.
pub fn row_blocks(row_groups: &[usize]) -> Vec<RowBlock> {
    let mut blocks: Vec<RowBlock> = Vec::new();
    for (i, &g) in row_groups.iter().enumerate() {
        match blocks.last_mut() {
            Some(b) if b.group == g => b.len += 1,
            _ => blocks.push(RowBlock { start: i, len: 1, group: g }),
        }
    }
    blocks
}

impl LowRankSystem {
    pub fn new(psi: DMatrix<f64>, y: DVector<f64>, blocks: Vec<RowBlock>) -> Result<Self> {
        if psi.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} rows, data has {}",
                psi.nrows(),
                y.len()
            )));
        }
        let covered: usize = blocks.iter().map(|b| b.len).sum();
        if covered != y.len() || blocks.iter().any(|b| b.start + b.len > y.len()) {
            return Err(Error::DimensionMismatch("row blocks do not tile the data".into()));
        }
        let n_groups = blocks.iter().map(|b| b.group + 1).max().unwrap_or(0);
        let p = psi.ncols();
        let mut groups = vec![
            GroupStats { gram: DMatrix::zeros(p, p), projection: DVector::zeros(p), energy: 0.0, count: 0 };
            n_groups
        ];
        for b in &blocks {
            let rows = psi.rows(b.start, b.len);
            let ys = y.rows(b.start, b.len);
            let g = &mut groups[b.group];
            g.gram += rows.tr_mul(&rows);
            g.projection += rows.tr_mul(&ys);
            g.energy += ys.norm_squared();
            g.count += b.len;
        }
        if let Some(i) = groups.iter().position(|g| g.count == 0) {
            return Err(Error::InvalidInput(format!("noise group {i} has no rows")));
        }
        Ok(Self { psi, y, blocks, groups })
    }

    pub fn from_row_groups(psi: DMatrix<f64>, y: DVector<f64>, row_groups: &[usize]) -> Result<Self> {
        if row_groups.len() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} group labels for {} rows",
                row_groups.len(),
                y.len()
            )));
        }
        Self::new(psi, y, row_blocks(row_groups))
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn blocks(&self) -> &[RowBlock] {
        &self.blocks
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_columns(&self) -> usize {
        self.psi.ncols()
    }

    pub fn log_marginal_likelihood(&self, theta: &Hyperparameters) -> Result<f64> {
        self.factorize(theta).map(|f| f.log_likelihood)
    }

    pub fn factorize(&self, theta: &Hyperparameters) -> Result<Factorization> {
        if theta.sigma_n2.len() != self.groups.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} noise variances for {} noise groups",
                theta.sigma_n2.len(),
                self.groups.len()
            )));
        }
        for &jitter in &JITTER_SCHEDULE {
            if let Some(f) = self.try_factorize(theta, jitter) {
                return Ok(f);
            }
            log::debug!("inner factorization failed at relative jitter {jitter:e}");
        }
        Err(Error::NumericalBreakdown(format!(
            "inner matrix not positive definite at σ_s² = {:e} after jitter {:e}",
            theta.sigma_s2,
            JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1]
        )))
    }

    fn try_factorize(&self, theta: &Hyperparameters, jitter: f64) -> Option<Factorization> {
        let noise: Vec<f64> = theta.sigma_n2.iter().map(|&s| s + jitter * s.max(JITTER_FLOOR)).collect();
        let n_total = self.n_rows() as f64;
        let weighted_energy: f64 = self.groups.iter().zip(&noise).map(|(g, d)| g.energy / d).sum();
        let log_det_noise: f64 = self.groups.iter().zip(&noise).map(|(g, d)| g.count as f64 * d.ln()).sum();
        let p = self.n_columns();

        if theta.sigma_s2 == 0.0 {
            let log_likelihood = -0.5 * (weighted_energy + log_det_noise + n_total * (2.0 * PI).ln());
            return Some(Factorization {
                noise,
                sigma_s2: 0.0,
                inner: None,
                weights: DVector::zeros(p),
                log_likelihood,
                jitter,
            });
        }

        let mut inner = DMatrix::from_diagonal_element(p, p, 1.0 / theta.sigma_s2);
        let mut rhs = DVector::zeros(p);
        for (g, d) in self.groups.iter().zip(&noise) {
            inner += &g.gram / *d;
            rhs.axpy(1.0 / d, &g.projection, 1.0);
        }
        let chol = Cholesky::new(inner)?;
        let weights = chol.solve(&rhs);

        let mut quad = weighted_energy - rhs.dot(&weights);
        if quad < CANCELLATION_RATIO * weighted_energy {
            quad = self.residual_quadratic(&weights, &noise, theta.sigma_s2);
        }
        let log_det_inner: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_det = log_det_inner + p as f64 * theta.sigma_s2.ln() + log_det_noise;
        let log_likelihood = -0.5 * (quad + log_det + n_total * (2.0 * PI).ln());
        if !log_likelihood.is_finite() {
            return None;
        }
        Some(Factorization { noise, sigma_s2: theta.sigma_s2, inner: Some(chol), weights, log_likelihood, jitter })
    }

    /// `Σ_g ‖y_g − Ψ_g w‖²/d_g + ‖w‖²/σ_s²`, equal to `yᵀΣ⁻¹y` at the posterior mean `w`.
    fn residual_quadratic(&self, weights: &DVector<f64>, noise: &[f64], sigma_s2: f64) -> f64 {
        let mut total = weights.norm_squared() / sigma_s2;
        for b in &self.blocks {
            let fitted = self.psi.rows(b.start, b.len) * weights;
            let resid = self.y.rows(b.start, b.len) - fitted;
            total += resid.norm_squared() / noise[b.group];
        }
        total
    }
}

/// One-shot evaluation for a stacked basis, data vector and per-row noise group labels.
pub fn log_marginal_likelihood(
    theta: &Hyperparameters,
    psi: &DMatrix<f64>,
    y: &DVector<f64>,
    row_groups: &[usize],
) -> Result<f64> {
    LowRankSystem::from_row_groups(psi.clone(), y.clone(), row_groups)?.log_marginal_likelihood(theta)
}
