use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Hyperparameters;
use crate::basis::{response_basis, SpectralScales};
use crate::error::{Error, Result};
use crate::signal::{Kind, TimeSeries};

/// Draws `n` joint prior samples on time grid `t`, one series per requested
/// response kind. Within a sample every kind shares the same basis weights,
/// so the channels are exact derivatives of each other before noise.
/// `theta.sigma_n2[k]` is the noise variance of `kinds[k]`.
pub fn sample_prior(
    scales: &SpectralScales,
    theta: &Hyperparameters,
    kinds: &[Kind],
    t: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<TimeSeries>>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    if kinds.is_empty() || theta.sigma_n2.len() != kinds.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} noise variances for {} kinds",
            theta.sigma_n2.len(),
            kinds.len()
        )));
    }
    let bases = kinds
        .iter()
        .map(|&k| response_basis(t, scales, k).map(|b| b.values))
        .collect::<Result<Vec<_>>>()?;
    let sigma_s = theta.sigma_s2.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |len: usize| DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(&mut rng)));

    (0..n)
        .map(|_| {
            let w: DVector<f64> = normal(scales.n_columns());
            kinds
                .iter()
                .zip(&bases)
                .zip(&theta.sigma_n2)
                .map(|((&kind, basis), &var)| {
                    let eps: DVector<f64> = normal(t.len());
                    let values = basis * &w * sigma_s + eps * var.sqrt();
                    TimeSeries::new(t.to_vec(), values.iter().copied().collect(), kind, "")
                })
                .collect()
        })
        .collect()
}
