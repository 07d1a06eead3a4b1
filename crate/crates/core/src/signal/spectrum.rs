use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};

/// One-sided spectrum on FFT bin frequencies `f_k = k·fs/n`, `k = 0..=n/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub f: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    /// Bin spacing in Hz.
    pub fn resolution(&self) -> f64 {
        if self.f.len() > 1 {
            self.f[1] - self.f[0]
        } else {
            0.0
        }
    }

    /// Index of the bin nearest to `freq`.
    pub fn nearest_bin(&self, freq: f64) -> usize {
        let df = self.resolution();
        if df <= 0.0 {
            return 0;
        }
        ((freq / df).round().max(0.0) as usize).min(self.f.len() - 1)
    }

    pub fn peak(&self) -> (f64, f64) {
        let (i, m) = self
            .magnitude
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
        (self.f[i], m)
    }
}

/// Forward complex FFT of a real sequence.
pub(crate) fn real_fft(values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// One-sided amplitude spectrum.
///
/// Scaled so that a unit-amplitude sinusoid on a bin frequency has magnitude 1
/// in that bin: `2/n·|X_k|` for interior bins, `1/n·|X_k|` at DC and (for even
/// `n`) at the Nyquist bin. With this convention
/// `Σ x² = n·(m₀² + m_{n/2}² + ½·Σ_interior m_k²)`.
pub fn fft_magnitude(series: &TimeSeries) -> Result<Spectrum> {
    let fs = series.sampling_rate()?;
    let n = series.len();
    let spec = real_fft(series.values());
    let n_bins = n / 2 + 1;
    let nf = n as f64;
    let f = (0..n_bins).map(|k| k as f64 * fs / nf).collect();
    let magnitude = (0..n_bins)
        .map(|k| {
            let edge = k == 0 || (n % 2 == 0 && k == n / 2);
            let scale = if edge { 1.0 / nf } else { 2.0 / nf };
            scale * spec[k].norm()
        })
        .collect();
    Ok(Spectrum { f, magnitude })
}

/// Welch segmentation parameters. Segments are Hann-windowed, without detrending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchConfig {
    /// Samples per segment; `None` means `n/8`.
    pub segment_len: Option<usize>,
    /// Fractional overlap between consecutive segments, in `[0, 1)`.
    pub overlap: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self { segment_len: None, overlap: 0.5 }
    }
}

/// One-sided power spectral density (units²/Hz) by Welch's method.
pub fn psd(series: &TimeSeries, cfg: &WelchConfig) -> Result<Spectrum> {
    let fs = series.sampling_rate()?;
    let n = series.len();
    let seg = cfg.segment_len.unwrap_or(n / 8);
    if seg < 2 || n < seg {
        return Err(Error::InsufficientLength { needed: seg.max(2), got: n });
    }
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::InvalidInput(format!("Welch overlap {} outside [0, 1)", cfg.overlap)));
    }
    let step = (((1.0 - cfg.overlap) * seg as f64).round() as usize).max(1);
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos())
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let fft = FftPlanner::new().plan_fft_forward(seg);
    let n_bins = seg / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut segments = 0usize;
    let values = series.values();
    let mut start = 0;
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    while start + seg <= n {
        for (b, (&x, &w)) in buf.iter_mut().zip(values[start..start + seg].iter().zip(&window)) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        segments += 1;
        start += step;
    }

    let scale = 1.0 / (fs * window_power * segments as f64);
    let magnitude = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let edge = k == 0 || (seg % 2 == 0 && k == seg / 2);
            if edge {
                p * scale
            } else {
                2.0 * p * scale
            }
        })
        .collect();
    let f = (0..n_bins).map(|k| k as f64 * fs / seg as f64).collect();
    Ok(Spectrum { f, magnitude })
}
