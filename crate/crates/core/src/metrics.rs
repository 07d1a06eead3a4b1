//! Similarity metrics between a reference signal `x` and a candidate `y`.
//!
//! Six metrics have the form `M = exp(−λ·A)` with a non-negative discrepancy
//! exponent `A`, so `M ∈ [0, 1]` and `M = 1` iff `A = 0`. The seventh is the
//! coefficient of determination, which is unbounded below.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{log_frequencies, morlet_cwt, TimeSeries};

/// Shortest series accepted by [`compare`].
pub const MIN_LENGTH: usize = 16;

/// Sensitivity `λ ≥ 0` of each exponent-based metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sensitivities {
    pub rms: f64,
    pub correlation: f64,
    pub phase: f64,
    pub peak: f64,
    pub warped: f64,
    pub wavelet: f64,
}

impl Default for Sensitivities {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl Sensitivities {
    pub fn uniform(lambda: f64) -> Self {
        Self { rms: lambda, correlation: lambda, phase: lambda, peak: lambda, warped: lambda, wavelet: lambda }
    }

    fn all(&self) -> [f64; 6] {
        [self.rms, self.correlation, self.phase, self.peak, self.warped, self.wavelet]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub lambda: Sensitivities,
    /// Delay normalizing the phase exponent, seconds; `None` means 10% of the duration.
    pub t_c: Option<f64>,
    /// Morlet centre frequency for the wavelet metric, Hz.
    pub wavelet_f0: f64,
    /// Analysis frequencies for the wavelet metric; `None` picks a log grid.
    pub wavelet_freqs: Option<Vec<f64>>,
    pub wavelet_n_freqs: usize,
    /// Sakoe-Chiba band radius as a fraction of the series length.
    pub dtw_window: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            lambda: Sensitivities::default(),
            t_c: None,
            wavelet_f0: 4.0,
            wavelet_freqs: None,
            wavelet_n_freqs: 48,
            dtw_window: 0.1,
        }
    }
}

impl MetricConfig {
    fn validate(&self) -> Result<()> {
        if self.lambda.all().iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidInput("metric sensitivities must be finite and non-negative".into()));
        }
        if let Some(tc) = self.t_c {
            if !(tc.is_finite() && tc > 0.0) {
                return Err(Error::InvalidInput(format!("normalization delay must be positive, got {tc}")));
            }
        }
        if !(self.dtw_window > 0.0 && self.dtw_window <= 1.0) {
            return Err(Error::InvalidInput(format!("DTW window fraction must lie in (0, 1], got {}", self.dtw_window)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub m_rms: f64,
    /// `None` when either signal has zero variance.
    pub m_c: Option<f64>,
    pub m_phi: f64,
    pub m_peak: f64,
    pub m_m: f64,
    pub m_w: f64,
    /// `None` when the reference has zero variance.
    pub m_r2: Option<f64>,
    /// Lag of the cross-correlation maximum, seconds.
    pub lag: f64,
    pub t_c: f64,
    pub wavelet_rows_skipped: usize,
    pub issues: Vec<String>,
}

/// `exp(−λ·A)`, with `A = 0` or `λ = 0` giving exactly 1.
pub fn exponent_metric(lambda: f64, exponent: f64) -> f64 {
    if exponent == 0.0 || lambda == 0.0 {
        1.0
    } else {
        (-lambda * exponent).exp()
    }
}

fn relative(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn rms_exponent(x: &[f64], y: &[f64]) -> f64 {
    let rx = rms(x);
    relative((rx - rms(y)).abs(), rx)
}

pub fn peak_exponent(x: &[f64], y: &[f64]) -> f64 {
    let px = max_abs(x);
    relative((px - max_abs(y)).abs(), px)
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    let (vx, vy) = (covariance(x, x), covariance(y, y));
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::ZeroVarianceSignal);
    }
    Ok((covariance(x, y) / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation exponent `1 − ρ`, so identical signals give zero discrepancy.
pub fn correlation_exponent(x: &[f64], y: &[f64]) -> Result<f64> {
    correlation(x, y).map(|r| 1.0 - r)
}

/// `1 − Σ(x − y)² / Σ(x − μ_x)²`.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    let mx = mean(x);
    let total: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if total == 0.0 {
        return Err(Error::ZeroVarianceSignal);
    }
    let resid: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - resid / total)
}

/// Lag `k` (samples) maximizing the linear cross-correlation `Σ_n x[n]·y[n+k]`;
/// positive when `y` lags `x`. Ties resolve to the smallest `|k|`.
pub fn correlation_lag(x: &[f64], y: &[f64]) -> isize {
    let n = x.len();
    let m = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let pad = |v: &[f64]| {
        let mut buf: Vec<Complex64> = v.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        buf.resize(m, Complex64::new(0.0, 0.0));
        buf
    };
    let (mut fx, mut fy) = (pad(x), pad(y));
    fwd.process(&mut fx);
    fwd.process(&mut fy);
    let mut prod: Vec<Complex64> = fx.iter().zip(&fy).map(|(a, b)| a.conj() * b).collect();
    inv.process(&mut prod);
    let lag_of = |i: usize| if i < n { i as isize } else { i as isize - m as isize };
    let coarse = (0..m)
        .filter(|&i| i < n || i > m - n)
        .max_by(|&a, &b| prod[a].re.total_cmp(&prod[b].re).then(lag_of(b).abs().cmp(&lag_of(a).abs())))
        .map(lag_of)
        .unwrap_or(0);

    // Exact sums around the FFT estimate remove round-off ties.
    let direct = |k: isize| -> f64 {
        (0..n as isize)
            .filter(|&i| i + k >= 0 && ((i + k) as usize) < n)
            .map(|i| x[i as usize] * y[(i + k) as usize])
            .sum()
    };
    let lo = (coarse - 2).max(-(n as isize) + 1);
    let hi = (coarse + 2).min(n as isize - 1);
    let mut best = (coarse, direct(coarse));
    for k in lo..=hi {
        let v = direct(k);
        if v > best.1 || (v == best.1 && k.abs() < best.0.abs()) {
            best = (k, v);
        }
    }
    best.0
}

/// Warped-magnitude exponent from a banded dynamic time warping alignment.
pub fn warped_exponent(x: &[f64], y: &[f64], window: f64) -> f64 {
    let (xw, yw) = dtw_align(x, y, window);
    let num = (xw.iter().zip(&yw).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / xw.len() as f64).sqrt();
    relative(num, rms(&xw))
}

const FROM_DIAGONAL: u8 = 0;
const FROM_X: u8 = 1;
const FROM_Y: u8 = 2;

/// Optimal alignment under squared-difference cost with unit steps
/// `(1,0)`, `(0,1)`, `(1,1)` inside a Sakoe-Chiba band. Returns the warped
/// sequences `x_{i_k}`, `y_{j_k}` along the path.
pub fn dtw_align(x: &[f64], y: &[f64], window: f64) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (x.len(), y.len());
    let radius = ((window * n.max(m) as f64).ceil() as usize).max(n.abs_diff(m)).max(1);
    let width = 2 * radius + 1;
    // Band cell (i, j) is stored at column j + radius − i.
    let mut steps = vec![FROM_DIAGONAL; n * width];
    let mut prev = vec![f64::INFINITY; width];
    let mut curr = vec![f64::INFINITY; width];
    let slot = |i: usize, j: usize| j + radius - i;

    for i in 0..n {
        curr.fill(f64::INFINITY);
        let j_lo = i.saturating_sub(radius);
        let j_hi = (i + radius).min(m - 1);
        for j in j_lo..=j_hi {
            let cost = (x[i] - y[j]).powi(2);
            let s = slot(i, j);
            if i == 0 && j == 0 {
                curr[s] = cost;
                continue;
            }
            let diag = if i > 0 && j > 0 { prev[s] } else { f64::INFINITY };
            let up = if i > 0 && s + 1 < width { prev[s + 1] } else { f64::INFINITY };
            let left = if j > j_lo { curr[s - 1] } else { f64::INFINITY };
            let (best, dir) = if diag <= up && diag <= left {
                (diag, FROM_DIAGONAL)
            } else if up <= left {
                (up, FROM_X)
            } else {
                (left, FROM_Y)
            };
            curr[s] = cost + best;
            steps[i * width + s] = dir;
        }
        std::mem::swap(&mut prev, &mut curr);
    }

    let (mut i, mut j) = (n - 1, m - 1);
    let mut xw = vec![x[i]];
    let mut yw = vec![y[j]];
    while i > 0 || j > 0 {
        match steps[i * width + slot(i, j)] {
            FROM_DIAGONAL if i > 0 && j > 0 => {
                i -= 1;
                j -= 1;
            }
            FROM_X if i > 0 => i -= 1,
            _ if j > 0 => j -= 1,
            _ => i -= 1,
        }
        xw.push(x[i]);
        yw.push(y[j]);
    }
    xw.reverse();
    yw.reverse();
    (xw, yw)
}

/// Default wavelet grid: log-spaced from just above the lowest frequency whose
/// cone of influence covers the record midpoint up to 45% of the sampling rate.
pub fn default_wavelet_frequencies(duration: f64, fs: f64, f0: f64, n: usize) -> Result<Vec<f64>> {
    let lo = 1.05 * 2.0 * 2f64.sqrt() * f0 / duration;
    let hi = 0.45 * fs;
    if !(lo < hi) {
        return Err(Error::InvalidInput(format!(
            "record of {duration} s at {fs} Hz is too short for a Morlet wavelet with f0 = {f0} Hz"
        )));
    }
    Ok(log_frequencies(lo, hi, n.max(2)))
}

/// Wavelet exponent and the number of frequency rows skipped because one of
/// the signals has no in-cone energy there.
pub fn wavelet_exponent(x: &TimeSeries, y: &TimeSeries, cfg: &MetricConfig) -> Result<(f64, usize)> {
    let fs = x.sampling_rate()?;
    let freqs = match &cfg.wavelet_freqs {
        Some(f) => f.clone(),
        None => default_wavelet_frequencies(x.duration(), fs, cfg.wavelet_f0, cfg.wavelet_n_freqs)?,
    };
    let wx = morlet_cwt(x, cfg.wavelet_f0, &freqs)?;
    let wy = morlet_cwt(y, cfg.wavelet_f0, &freqs)?;
    let n_t = x.len();

    let row_max = |w: &crate::signal::WaveletGrid, j: usize| {
        (0..n_t).filter(|&i| w.in_cone(j, i)).map(|i| w.magnitude(j, i)).fold(0.0, f64::max)
    };
    let mut skipped = 0;
    let scales: Vec<Option<(f64, f64)>> = (0..freqs.len())
        .map(|j| {
            let (mx, my) = (row_max(&wx, j), row_max(&wy, j));
            if mx > 0.0 && my > 0.0 {
                Some((mx, my))
            } else {
                if (0..n_t).any(|i| wx.in_cone(j, i)) {
                    skipped += 1;
                }
                None
            }
        })
        .collect();

    let mut total = 0.0;
    let mut valid = 0usize;
    for i in 0..n_t {
        let mut pts: Vec<(f64, f64, f64)> = Vec::new();
        for (j, s) in scales.iter().enumerate() {
            if let (Some((mx, my)), true) = (s, wx.in_cone(j, i)) {
                let a = wx.magnitude(j, i) / mx;
                let b = wy.magnitude(j, i) / my;
                pts.push((freqs[j], (a - b).powi(2), a * a));
            }
        }
        if pts.len() < 2 {
            continue;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for w in pts.windows(2) {
            let df = (w[1].0 - w[0].0).abs();
            num += 0.5 * df * (w[0].1 + w[1].1);
            den += 0.5 * df * (w[0].2 + w[1].2);
        }
        if den > 0.0 {
            total += num.sqrt() / den.sqrt();
            valid += 1;
        }
    }
    if valid == 0 {
        if skipped == 0 {
            return Err(Error::InvalidInput("no wavelet cells inside the cone of influence".into()));
        }
        // Every row is degenerate: silent against silent agrees, anything else does not.
        let silent = |w: &crate::signal::WaveletGrid| w.coefficients.iter().flatten().all(|c| c.norm() == 0.0);
        let exponent = if silent(&wx) && silent(&wy) { 0.0 } else { f64::INFINITY };
        return Ok((exponent, skipped));
    }
    Ok((total / valid as f64, skipped))
}

pub fn wavelet_metric(x: &TimeSeries, y: &TimeSeries, cfg: &MetricConfig) -> Result<f64> {
    check_pair(x, y)?;
    let (a, _) = wavelet_exponent(x, y, cfg)?;
    Ok(exponent_metric(cfg.lambda.wavelet, a))
}

fn check_pair(x: &TimeSeries, y: &TimeSeries) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("series lengths {} and {} differ", x.len(), y.len())));
    }
    if x.len() < MIN_LENGTH {
        return Err(Error::InsufficientLength { needed: MIN_LENGTH, got: x.len() });
    }
    let dt = x.uniform_dt()?;
    if x.t().iter().zip(y.t()).any(|(a, b)| (a - b).abs() > 1e-9 * dt.max(1e-300)) {
        return Err(Error::InvalidInput("series do not share a time grid".into()));
    }
    Ok(())
}

/// All seven metrics of `y` against the reference `x`.
pub fn compare(x: &TimeSeries, y: &TimeSeries, cfg: &MetricConfig) -> Result<MetricReport> {
    cfg.validate()?;
    check_pair(x, y)?;
    let (xs, ys) = (x.values(), y.values());
    let dt = x.uniform_dt()?;
    let t_c = cfg.t_c.unwrap_or(0.1 * x.duration());
    let lam = &cfg.lambda;
    let mut issues = Vec::new();

    let m_c = match correlation_exponent(xs, ys) {
        Ok(a) => Some(exponent_metric(lam.correlation, a)),
        Err(e) => {
            issues.push(format!("correlation metric: {e}"));
            None
        }
    };
    let m_r2 = match r_squared(xs, ys) {
        Ok(v) => Some(v),
        Err(e) => {
            issues.push(format!("R² metric: {e}"));
            None
        }
    };
    let lag = correlation_lag(xs, ys) as f64 * dt;
    let (a_w, skipped) = wavelet_exponent(x, y, cfg)?;
    if skipped > 0 {
        issues.push(format!("wavelet metric: {skipped} frequency rows skipped"));
    }
    Ok(MetricReport {
        m_rms: exponent_metric(lam.rms, rms_exponent(xs, ys)),
        m_c,
        m_phi: exponent_metric(lam.phase, lag.abs() / t_c),
        m_peak: exponent_metric(lam.peak, peak_exponent(xs, ys)),
        m_m: exponent_metric(lam.warped, warped_exponent(xs, ys, cfg.dtw_window)),
        m_w: exponent_metric(lam.wavelet, a_w),
        m_r2,
        lag,
        t_c,
        wavelet_rows_skipped: skipped,
        issues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Kind;
    use std::f64::consts::PI;

    fn series(fs: f64, n: usize, f: impl Fn(f64) -> f64) -> TimeSeries {
        TimeSeries::uniform(0.0, 1.0 / fs, (0..n).map(|i| f(i as f64 / fs)).collect(), Kind::Force, "N").unwrap()
    }

    fn signal(t: f64) -> f64 {
        (2.0 * PI * 0.7 * t).sin() + 0.4 * (2.0 * PI * 2.3 * t + 0.5).cos() + 0.2 * (-(t - 12.0).powi(2)).exp()
    }

    #[test]
    fn self_comparison_is_exactly_one() {
        let x = series(20.0, 600, signal);
        let r = compare(&x, &x, &MetricConfig::default()).unwrap();
        for v in [r.m_rms, r.m_c.unwrap(), r.m_phi, r.m_peak, r.m_m, r.m_w, r.m_r2.unwrap()] {
            assert_eq!(v, 1.0);
        }
        assert!(r.issues.is_empty());
    }

    #[test]
    fn doubled_signal() {
        let x = series(20.0, 600, signal);
        let y = x.with_values(x.values().iter().map(|v| 2.0 * v).collect()).unwrap();
        let r = compare(&x, &y, &MetricConfig::default()).unwrap();
        assert!((r.m_peak - (-1.0f64).exp()).abs() < 1e-12);
        assert!((r.m_rms - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(r.m_phi, 1.0);
        assert!((r.m_c.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_lag_oracle() {
        let fs = 10.0;
        let n = 400;
        let base = series(fs, n + 50, |t| signal(t) + 0.3 * (5.1 * t).sin());
        let x: Vec<f64> = base.values()[50..].to_vec();
        for delay in [0usize, 1, 7, 23] {
            let y: Vec<f64> = base.values()[50 - delay..50 - delay + n].to_vec();
            assert_eq!(correlation_lag(&x, &y), delay as isize);
            assert_eq!(correlation_lag(&y, &x), -(delay as isize));
        }
    }

    #[test]
    fn delay_degrades_phase_metric() {
        let fs = 20.0;
        let tau = 0.75;
        let x = series(fs, 800, signal);
        let y = series(fs, 800, |t| signal(t - tau));
        let cfg = MetricConfig::default();
        let r = compare(&x, &y, &cfg).unwrap();
        let expected = (-tau / r.t_c).exp();
        let one_sample = (-(tau - 1.0 / fs) / r.t_c).exp() - expected;
        assert!((r.m_phi - expected).abs() <= one_sample.abs());
        assert!(r.m_phi < 1.0);
    }

    #[test]
    fn zero_variance_is_reported() {
        let x = series(10.0, 64, |_| 2.0);
        let y = series(10.0, 64, |t| t.sin());
        let r = compare(&x, &y, &MetricConfig::default()).unwrap();
        assert!(r.m_c.is_none() && r.m_r2.is_none());
        assert_eq!(r.m_w, 0.0);
        assert!(r.wavelet_rows_skipped > 0);
        assert!(matches!(r_squared(x.values(), y.values()), Err(Error::ZeroVarianceSignal)));
    }

    #[test]
    fn dtw_identity_path() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let (xw, yw) = dtw_align(&x, &x, 0.1);
        assert_eq!(xw, x);
        assert_eq!(yw, x);
    }

    #[test]
    fn dtw_absorbs_small_shift() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.05).sin()).collect();
        let y: Vec<f64> = (0..200).map(|i| ((i as f64 - 3.0) * 0.05).sin()).collect();
        let pointwise = (x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 200.0).sqrt() / rms(&x);
        assert!(warped_exponent(&x, &y, 0.1) < 0.2 * pointwise);
    }

    #[test]
    fn dtw_matches_unbanded_oracle() {
        // Full-matrix DTW cost as an independent oracle on a tiny case.
        let x: [f64; 7] = [0.0, 1.0, 2.0, 1.0, 0.0, -1.0, 0.5];
        let y = [0.0, 0.0, 1.0, 2.0, 1.5, 0.0, -1.0];
        let (n, m) = (x.len(), y.len());
        let mut d = vec![vec![f64::INFINITY; m + 1]; n + 1];
        d[0][0] = 0.0;
        for i in 1..=n {
            for j in 1..=m {
                let c = (x[i - 1] - y[j - 1]).powi(2);
                d[i][j] = c + d[i - 1][j - 1].min(d[i - 1][j]).min(d[i][j - 1]);
            }
        }
        let (xw, yw) = dtw_align(&x, &y, 1.0);
        let cost: f64 = xw.iter().zip(&yw).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((cost - d[n][m]).abs() < 1e-12);
    }

    #[test]
    fn wavelet_band_degradation_is_monotone() {
        let fs = 20.0;
        let n = 2000;
        let x = series(fs, n, |t| (2.0 * PI * 0.5 * t).sin() + (2.0 * PI * 3.0 * t).sin());
        let band = |g: f64| series(fs, n, move |t| (2.0 * PI * 0.5 * t).sin() + g * (2.0 * PI * 3.0 * t).sin());
        let cfg = MetricConfig::default();
        let m2 = wavelet_metric(&x, &band(2.0), &cfg).unwrap();
        let m10 = wavelet_metric(&x, &band(10.0), &cfg).unwrap();
        assert!(m2 < 1.0 && m10 < m2, "{m2} {m10}");
    }

    #[test]
    fn lambda_monotone() {
        let x = series(20.0, 400, signal);
        let y = series(20.0, 400, |t| 0.8 * signal(t - 0.3) + 0.1 * (9.0 * t).sin());
        let mut last: Option<MetricReport> = None;
        for lam in [0.5, 1.0, 2.0] {
            let cfg = MetricConfig { lambda: Sensitivities::uniform(lam), ..Default::default() };
            let r = compare(&x, &y, &cfg).unwrap();
            if let Some(p) = &last {
                assert!(r.m_rms < p.m_rms && r.m_peak < p.m_peak && r.m_m < p.m_m && r.m_w < p.m_w);
                assert!(r.m_phi < p.m_phi && r.m_c.unwrap() < p.m_c.unwrap());
            }
            last = Some(r);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let x = series(10.0, 64, signal);
        let y = series(10.0, 65, signal);
        assert!(compare(&x, &y, &MetricConfig::default()).is_err());
        let short = series(10.0, 8, signal);
        assert!(matches!(compare(&short, &short, &MetricConfig::default()), Err(Error::InsufficientLength { .. })));
    }
}
