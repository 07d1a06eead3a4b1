//! Analytic Morlet continuous wavelet transform.
//!
//! The mother wavelet has centre frequency `f0` (Hz at unit scale) and a
//! Gaussian envelope of unit standard deviation; analysing frequency `f`
//! uses scale `s = f0/f` seconds. Convolution runs in the frequency domain
//! over the periodic extension of the record, with the filter
//! `Ĝ(ω) = 2·exp(-(sω - 2πf0)²/2)` for `ω > 0`, so a unit-amplitude sinusoid
//! at `f` yields `|W| ≈ 1` on its ridge.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::spectrum::real_fft;
use super::TimeSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct WaveletGrid {
    pub f: Vec<f64>,
    pub t: Vec<f64>,
    /// `coefficients[j][i]` is `W(f_j, t_i)`.
    pub coefficients: Vec<Vec<Complex64>>,
    pub f0: f64,
    /// Lowest frequency at each time whose e-folding radius `√2·s` stays
    /// inside the record. Frequencies below it are edge-affected.
    pub cone_of_influence: Vec<f64>,
}

impl WaveletGrid {
    pub fn magnitude(&self, freq_index: usize, time_index: usize) -> f64 {
        self.coefficients[freq_index][time_index].norm()
    }

    pub fn in_cone(&self, freq_index: usize, time_index: usize) -> bool {
        self.f[freq_index] >= self.cone_of_influence[time_index]
    }

    /// Scale (seconds) associated with frequency `freq`.
    pub fn scale(&self, freq: f64) -> f64 {
        self.f0 / freq
    }
}

pub fn morlet_cwt(series: &TimeSeries, f0: f64, freqs: &[f64]) -> Result<WaveletGrid> {
    let dt = series.uniform_dt()?;
    if !(f0 > 0.0) || !f0.is_finite() {
        return Err(Error::InvalidInput(format!("Morlet centre frequency must be positive, got {f0}")));
    }
    let nyquist = 0.5 / dt;
    if let Some(&bad) = freqs.iter().find(|&&f| !(f > 0.0 && f < nyquist)) {
        return Err(Error::FrequencyOutOfRange { frequency: bad, nyquist });
    }

    let n = series.len();
    let spectrum = real_fft(series.values());
    let omega: Vec<f64> = (0..n)
        .map(|k| {
            let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            2.0 * PI * k / (n as f64 * dt)
        })
        .collect();
    let omega0 = 2.0 * PI * f0;
    let ifft = FftPlanner::new().plan_fft_inverse(n);

    let coefficients: Vec<Vec<Complex64>> = freqs
        .par_iter()
        .map(|&f| {
            let s = f0 / f;
            let mut buf: Vec<Complex64> = spectrum
                .iter()
                .zip(&omega)
                .map(|(x, &w)| {
                    if w > 0.0 {
                        let arg = s * w - omega0;
                        x * (2.0 * (-0.5 * arg * arg).exp() / n as f64)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            ifft.process(&mut buf);
            buf
        })
        .collect();

    let cone_of_influence = (0..n)
        .map(|i| {
            let d = i.min(n - 1 - i) as f64 * dt;
            if d > 0.0 {
                2f64.sqrt() * f0 / d
            } else {
                f64::INFINITY
            }
        })
        .collect();

    Ok(WaveletGrid {
        f: freqs.to_vec(),
        t: series.t().to_vec(),
        coefficients,
        f0,
        cone_of_influence,
    })
}

/// `n` logarithmically spaced frequencies in `[lo, hi]`.
pub fn log_frequencies(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
