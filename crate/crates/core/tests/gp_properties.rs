mod common;

use std::f64::consts::PI;

use forcegp::basis::{displacement_basis, CutoffRule, Oscillator, SpectralScales};
use forcegp::gp::{
    denoise_response, fit, predict_force, reference_scales, sample_prior, CovarianceMode, Dataset, DatasetStack,
    FitConfig, Hyperparameters, LowRankSystem, PosteriorCovariance, TrainedModel,
};
use forcegp::metrics::r_squared;
use forcegp::signal::{add_white_noise, fft_magnitude, uniform_grid, Kind, TimeSeries};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn sine(kind: Kind, amp: f64, f: f64, fs: f64, n: usize) -> TimeSeries {
    let values = (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / fs).sin()).collect();
    TimeSeries::uniform(0.0, 1.0 / fs, values, kind, "m").unwrap()
}

fn white(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random well-conditioned stack of displacement entries with its scales.
fn random_instance(seed: u64) -> (DatasetStack, SpectralScales, Hyperparameters) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_groups = rng.random_range(1..=3usize);
    let entries = (0..n_groups)
        .map(|g| {
            let len = rng.random_range(20..=60usize);
            let t0 = rng.random_range(0.0..1.0);
            let values = white(len, 1.0, seed * 31 + g as u64);
            Dataset { series: TimeSeries::uniform(t0, 0.05, values, Kind::Displacement, "m").unwrap(), group: g }
        })
        .collect();
    let n_fr = rng.random_range(1..=20usize);
    let mut freqs: Vec<f64> = (0..n_fr).map(|_| rng.random_range(0.05..9.5)).collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup();
    let lambda = freqs.iter().map(|_| rng.random_range(0.1..2.0)).collect();
    let theta = Hyperparameters::new(
        10f64.powf(rng.random_range(-1.0..1.0)),
        (0..n_groups).map(|_| 10f64.powf(rng.random_range(-2.0..0.0))).collect(),
    )
    .unwrap();
    (DatasetStack::new(entries, 0).unwrap(), SpectralScales::new(freqs, lambda).unwrap(), theta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn likelihood_and_posterior_match_dense_oracle(seed in 0u64..10_000) {
        let (stack, scales, theta) = random_instance(seed);
        let model = TrainedModel::from_parts(stack.clone(), scales.clone(), theta.clone()).unwrap();
        let osc = Oscillator::new(1.3, 0.03, 0.8).unwrap();
        let t_pred = uniform_grid(0.0, 0.21, 25);
        let post = predict_force(&model, &osc, &t_pred, CovarianceMode::Full).unwrap();
        let PosteriorCovariance::Full(cov) = &post.cov else { unreachable!("full covariance requested") };

        let mut psi_rows = Vec::new();
        for d in stack.entries() {
            psi_rows.push(common::literal_basis(d.series.t(), scales.freqs(), scales.lambda(), 0));
        }
        let n: usize = psi_rows.iter().map(|b| b.nrows()).sum();
        let mut psi = DMatrix::zeros(n, scales.n_columns());
        let mut row = 0;
        for b in &psi_rows {
            psi.rows_mut(row, b.nrows()).copy_from(b);
            row += b.nrows();
        }
        let y = DVector::from_vec(stack.stacked_values().as_slice().to_vec());
        let k = common::dense_covariance(&psi, theta.sigma_s2, &theta.sigma_n2, &stack.row_groups());
        let psi_q = common::literal_force_basis(&t_pred, scales.freqs(), scales.lambda(), osc.mass, osc.zeta, osc.f_n);
        let (mean, dense_cov) = common::dense_posterior(&k, &psi, &psi_q, theta.sigma_s2, &y);

        prop_assert!(common::relative_error(model.log_likelihood(), common::dense_log_likelihood(&k, &y)) < 1e-8);
        prop_assert!(common::relative_norm_error(&post.mean, mean.as_slice()) < 1e-8);
        prop_assert!(common::relative_norm_error(cov.as_slice(), dense_cov.as_slice()) < 1e-8);
    }

    #[test]
    fn posterior_variance_is_non_negative_and_symmetric(seed in 0u64..10_000) {
        let (stack, scales, theta) = random_instance(seed);
        let model = TrainedModel::from_parts(stack, scales, theta).unwrap();
        let osc = Oscillator::new(1.0, 0.02, 1.0).unwrap();
        let post = predict_force(&model, &osc, &uniform_grid(0.0, 0.13, 40), CovarianceMode::Full).unwrap();
        let PosteriorCovariance::Full(cov) = &post.cov else { unreachable!("full covariance requested") };
        prop_assert_eq!(cov, &cov.transpose());
        prop_assert!(cov.diagonal().iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn likelihood_is_unimodal_in_noise_variance() {
    let fs = 20.0;
    let n = 400;
    let clean = sine(Kind::Displacement, 1.0, 1.0, fs, n);
    let true_var = 0.05f64;
    let noisy: Vec<f64> = clean.values().iter().zip(white(n, true_var.sqrt(), 3)).map(|(a, b)| a + b).collect();
    let stack = DatasetStack::independent(vec![clean.with_values(noisy).unwrap()], 0).unwrap();
    let scales = reference_scales(&stack, CutoffRule::default()).unwrap();
    let psi = displacement_basis(clean.t(), &scales).values;
    let system = LowRankSystem::from_row_groups(psi, stack.stacked_values(), &stack.row_groups()).unwrap();

    let grid: Vec<f64> = (0..=80).map(|i| true_var * 10f64.powf(-6.0 + 8.0 * i as f64 / 80.0)).collect();
    let lml: Vec<f64> = grid
        .iter()
        .map(|&v| system.log_marginal_likelihood(&Hyperparameters::new(1.0, vec![v]).unwrap()).unwrap())
        .collect();
    let peak = lml.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(lml[..=peak].windows(2).all(|w| w[1] > w[0]), "rising before the maximum");
    assert!(lml[peak..].windows(2).all(|w| w[1] < w[0]), "falling after the maximum");
    assert!(peak > 0 && peak < grid.len() - 1, "maximum is interior");
}

#[test]
fn prior_spectrum_matches_scales() {
    let fs = 20.0;
    let n = 1000;
    let t = uniform_grid(0.0, 1.0 / fs, n);
    // On-bin frequencies so each column pair maps to one FFT bin.
    let freqs = vec![0.5, 1.2, 2.0, 3.4, 5.0];
    let lambda = vec![1.0, 0.5, 2.0, 0.8, 0.3];
    let sigma_s2: f64 = 1.7;
    let scales = SpectralScales::new(freqs.clone(), lambda.clone()).unwrap();
    let theta = Hyperparameters::new(sigma_s2, vec![0.0]).unwrap();
    let samples = sample_prior(&scales, &theta, &[Kind::Displacement], &t, 100, 11).unwrap();

    let mut mean_power = vec![0.0; freqs.len()];
    for s in &samples {
        let spec = fft_magnitude(&s[0]).unwrap();
        for (j, &f) in freqs.iter().enumerate() {
            mean_power[j] += spec.magnitude[spec.nearest_bin(f)].powi(2) / samples.len() as f64;
        }
    }
    // Each pair has amplitude σ_s·λ·√(w₁² + w₂²), whose mean square is 2σ_s²λ².
    let errors: Vec<f64> = mean_power
        .iter()
        .zip(&lambda)
        .map(|(p, l)| (p.sqrt() - sigma_s2.sqrt() * l * 2f64.sqrt()).abs() / (sigma_s2.sqrt() * l * 2f64.sqrt()))
        .collect();
    let average = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!(average < 0.10, "average bin-amplitude error {average}: {errors:?}");
}

#[test]
fn white_noise_fit_recovers_noise_variance() {
    let n = 2000;
    let series = TimeSeries::uniform(0.0, 0.05, white(n, 1.0, 5), Kind::Displacement, "m").unwrap();
    let stack = DatasetStack::independent(vec![series.clone()], 0).unwrap();

    // A strict cutoff keeps a handful of bins, leaving nearly all variance to the noise term.
    let strict = reference_scales(&stack, CutoffRule::Cutoff { c: 3.0 }).unwrap();
    let fitted = fit(&stack, &strict, &FitConfig::default()).unwrap().theta().sigma_n2[0];
    assert!((fitted - 1.0).abs() < 0.1, "strict cutoff: fitted noise variance {fitted}");

    // The default cutoff keeps the largest bins, so the oracle is the variance left outside them.
    let scales = reference_scales(&stack, CutoffRule::default()).unwrap();
    let fitted = fit(&stack, &scales, &FitConfig::default()).unwrap().theta().sigma_n2[0];
    let spec = fft_magnitude(&series).unwrap();
    let mean = series.values().iter().sum::<f64>() / n as f64;
    let variance = series.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let kept: f64 = scales.freqs().iter().map(|&f| spec.magnitude[spec.nearest_bin(f)].powi(2) / 2.0).sum();
    let residual = variance - kept;
    assert!((fitted - residual).abs() < 0.1 * residual, "default cutoff: fitted {fitted}, residual {residual}");
}

#[test]
fn duplicate_dataset_likelihood_is_bounded() {
    let series = sine(Kind::Displacement, 1.0, 0.7, 20.0, 400);
    let noisy = add_white_noise(&series, 10.0, 8).unwrap();
    let single = DatasetStack::independent(vec![noisy.clone()], 0).unwrap();
    let double = DatasetStack::new(
        vec![Dataset { series: noisy.clone(), group: 0 }, Dataset { series: noisy.clone(), group: 0 }],
        0,
    )
    .unwrap();
    let scales = reference_scales(&single, CutoffRule::default()).unwrap();
    let theta = fit(&single, &scales, &FitConfig::default()).unwrap().theta().clone();
    let one = TrainedModel::from_parts(single, scales.clone(), theta.clone()).unwrap().log_likelihood();
    let two = TrainedModel::from_parts(double, scales.clone(), theta.clone()).unwrap().log_likelihood();

    // At fixed θ the second copy adds at most ½·log det(I + K_s/σ²) + ¼·yᵀK⁻¹y over the first.
    let psi = common::literal_basis(noisy.t(), scales.freqs(), scales.lambda(), 0);
    let n = psi.nrows();
    let k = common::dense_covariance(&psi, theta.sigma_s2, &theta.sigma_n2, &vec![0; n]);
    let chol = k.clone().cholesky().unwrap();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let y = DVector::from_column_slice(noisy.values());
    let mahalanobis = y.dot(&chol.solve(&y));
    let bound = 0.5 * (log_det - n as f64 * theta.sigma_n2[0].ln()) + 0.25 * mahalanobis;
    assert!(two >= 2.0 * one - 1e-9 * one.abs(), "duplicate lowered the likelihood: {two} vs {one}");
    assert!(two < 2.0 * one + bound, "two copies {two}, one copy {one}, bound {bound}");
}

#[test]
fn harmonic_force_matches_analytic_expression() {
    let (fs, n, amp) = (20.0, 400, 0.3);
    let osc = Oscillator::new(2.0, 0.05, 1.4).unwrap();
    let u = sine(Kind::Displacement, amp, 1.0, fs, n);
    let stack = DatasetStack::independent(vec![u.clone()], 0).unwrap();
    let scales = reference_scales(&stack, CutoffRule::default()).unwrap();
    let model = fit(&stack, &scales, &FitConfig::default()).unwrap();
    let post = predict_force(&model, &osc, u.t(), CovarianceMode::Diagonal).unwrap();
    let (w, wn) = (2.0 * PI, osc.omega_n());
    let truth: Vec<f64> = u
        .t()
        .iter()
        .map(|&t| osc.mass * amp * ((wn * wn - w * w) * (w * t).sin() + 2.0 * osc.zeta * wn * w * (w * t).cos()))
        .collect();
    assert!(r_squared(&truth, &post.mean).unwrap() > 0.999);
}

#[test]
fn clean_data_is_interpolated() {
    let u = sine(Kind::Velocity, 2.0, 1.5, 20.0, 400);
    let stack = DatasetStack::independent(vec![u.clone()], 0).unwrap();
    let scales = reference_scales(&stack, CutoffRule::default()).unwrap();
    let model = fit(&stack, &scales, &FitConfig::default()).unwrap();
    let post = denoise_response(&model, Kind::Velocity, u.t(), CovarianceMode::Diagonal).unwrap();
    let err = post.mean.iter().zip(u.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6 * u.max_abs(), "max error {err}");
}

#[test]
fn denoising_beats_noisy_input() {
    let clean = sine(Kind::Acceleration, 1.0, 1.5, 20.0, 400);
    let rms = |a: &[f64], b: &[f64]| (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
    let seeds = 40;
    let wins = (0..seeds)
        .filter(|&seed| {
            let noisy = add_white_noise(&clean, 15.0, seed).unwrap();
            let stack = DatasetStack::independent(vec![noisy.clone()], 0).unwrap();
            let scales = reference_scales(&stack, CutoffRule::default()).unwrap();
            let model = fit(&stack, &scales, &FitConfig::default()).unwrap();
            let post = denoise_response(&model, Kind::Acceleration, clean.t(), CovarianceMode::Diagonal).unwrap();
            rms(&post.mean, clean.values()) < rms(noisy.values(), clean.values())
        })
        .count();
    assert!(wins as f64 >= 0.95 * seeds as f64, "{wins} of {seeds}");
}

#[test]
fn prediction_continues_periodically() {
    let u = sine(Kind::Displacement, 1.0, 0.5, 10.0, 200);
    let stack = DatasetStack::independent(vec![u.clone()], 0).unwrap();
    let scales = reference_scales(&stack, CutoffRule::default()).unwrap();
    let model = fit(&stack, &scales, &FitConfig::default()).unwrap();
    let osc = Oscillator::new(1.0, 0.02, 1.0).unwrap();
    let record = 20.0;
    let inside: Vec<f64> = uniform_grid(0.0, 0.1, 50);
    let beyond: Vec<f64> = inside.iter().map(|t| t + record).collect();
    let a = predict_force(&model, &osc, &inside, CovarianceMode::Diagonal).unwrap();
    let b = predict_force(&model, &osc, &beyond, CovarianceMode::Diagonal).unwrap();
    let scale = a.mean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(a.mean.iter().zip(&b.mean).all(|(x, y)| (x - y).abs() < 1e-9 * scale));
}

#[test]
fn fit_is_identical_across_runs_with_parallel_starts() {
    let noisy = add_white_noise(&sine(Kind::Displacement, 1.0, 0.9, 20.0, 300), 8.0, 2).unwrap();
    let stack = DatasetStack::independent(vec![noisy], 0).unwrap();
    let scales = reference_scales(&stack, CutoffRule::default()).unwrap();
    let cfg = FitConfig { starts: 6, seed: 77, ..FitConfig::default() };
    let a = fit(&stack, &scales, &cfg).unwrap();
    let b = fit(&stack, &scales, &cfg).unwrap();
    assert_eq!(a.theta(), b.theta());
    assert_eq!(a.starts(), b.starts());
}
