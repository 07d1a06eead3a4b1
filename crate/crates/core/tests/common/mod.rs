//! Dense reference computations used as independent oracles. Every routine
//! here forms the full covariance matrix and works from the textbook formulas.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

/// Column pair for one frequency: `[λ·sin ωt, λ·cos ωt]` differentiated `order` times.
pub fn literal_basis(t: &[f64], freqs: &[f64], lambda: &[f64], order: u8) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(t.len(), 2 * freqs.len());
    for (j, (&f, &l)) in freqs.iter().zip(lambda).enumerate() {
        let w = 2.0 * PI * f;
        for (i, &x) in t.iter().enumerate() {
            let (s, c) = (w * x).sin_cos();
            let (a, b) = match order {
                0 => (s, c),
                1 => (w * c, -w * s),
                2 => (-w * w * s, -w * w * c),
                _ => unreachable!("orders above two are not used"),
            };
            m[(i, 2 * j)] = l * a;
            m[(i, 2 * j + 1)] = l * b;
        }
    }
    m
}

/// `m·ü + c·u̇ + k·u` applied column-wise to the literal bases.
pub fn literal_force_basis(t: &[f64], freqs: &[f64], lambda: &[f64], mass: f64, zeta: f64, f_n: f64) -> DMatrix<f64> {
    let wn = 2.0 * PI * f_n;
    literal_basis(t, freqs, lambda, 2) * mass
        + literal_basis(t, freqs, lambda, 1) * (2.0 * mass * zeta * wn)
        + literal_basis(t, freqs, lambda, 0) * (mass * wn * wn)
}

/// `K = σ_s² ΨΨᵀ + diag(σ_n²[group])`.
pub fn dense_covariance(psi: &DMatrix<f64>, sigma_s2: f64, noise: &[f64], groups: &[usize]) -> DMatrix<f64> {
    let mut k = psi * psi.transpose() * sigma_s2;
    for (i, &g) in groups.iter().enumerate() {
        k[(i, i)] += noise[g];
    }
    k
}

pub fn dense_log_likelihood(k: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let lu = k.clone().lu();
    let alpha = lu.solve(y).expect("covariance is invertible");
    let log_det = lu.u().diagonal().iter().map(|d| d.abs().ln()).sum::<f64>();
    -0.5 * (y.dot(&alpha) + log_det + y.len() as f64 * (2.0 * PI).ln())
}

/// Mean `σ_s² Ψ_* Ψᵀ K⁻¹ y` and covariance `σ_s² Ψ_* Ψ_*ᵀ − σ_s⁴ Ψ_* Ψᵀ K⁻¹ Ψ Ψ_*ᵀ`.
pub fn dense_posterior(
    k: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    psi_star: &DMatrix<f64>,
    sigma_s2: f64,
    y: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let cross = psi_star * psi.transpose() * sigma_s2;
    let lu = k.clone().lu();
    let mean = &cross * lu.solve(y).expect("covariance is invertible");
    let gain = lu.solve(&cross.transpose()).expect("covariance is invertible");
    let cov = psi_star * psi_star.transpose() * sigma_s2 - &cross * gain;
    (mean, cov)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn relative_norm_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}

/// Asymptotic Kolmogorov p-value for a one-sample KS statistic `d` on `n` points.
pub fn kolmogorov_p_value(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let x = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let sum: f64 = (1..=100).map(|k| (-1f64).powi(k - 1) * (-2.0 * (k as f64 * x).powi(2)).exp()).sum();
    (2.0 * sum).clamp(0.0, 1.0)
}
