use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::TimeSeries;
use crate::error::{Error, Result};

/// SNR at or above which the input is returned untouched.
pub const NOISELESS_SNR: f64 = 1e12;

pub(crate) fn gaussian_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect()
}

/// Adds i.i.d. Gaussian noise with `σ = max|x| / snr`.
pub fn add_white_noise(series: &TimeSeries, snr: f64, seed: u64) -> Result<TimeSeries> {
    if !(snr > 0.0) {
        return Err(Error::InvalidInput(format!("SNR must be positive, got {snr}")));
    }
    if snr >= NOISELESS_SNR {
        return Ok(series.clone());
    }
    let sigma = series.max_abs() / snr;
    let noise = gaussian_noise(series.len(), sigma, seed);
    series.with_values(series.values().iter().zip(noise).map(|(x, e)| x + e).collect())
}
