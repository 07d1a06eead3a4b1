//! Frequency-reduced Fourier bases for responses and ODE-derived forces.
//!
//! Every basis is an `N_t × 2·N_fr` matrix. For frequency `f_j` (0-based `j`)
//! column `2j` is the sine-derived column and `2j+1` the cosine-derived one.
//! A linear time-invariant operator acting on the displacement basis maps the
//! pair `λ·[sin θ, cos θ]` (θ = 2πf t) to `λ·[a·sin θ + b·cos θ, a·cos θ − b·sin θ]`,
//! where `a + ib` is the operator's frequency response. Derivatives are
//! `iω` and `-ω²`, the oscillator force operator is
//! `m(ω_n² − ω²) + i·2mζω_nω`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Kind, Spectrum};

/// Reduced frequency grid with per-frequency amplitudes in displacement units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralScales {
    freqs: Vec<f64>,
    lambda: Vec<f64>,
}

impl SpectralScales {
    pub fn new(freqs: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::InvalidScales("empty frequency grid".into()));
        }
        if freqs.len() != lambda.len() {
            return Err(Error::InvalidScales(format!(
                "{} frequencies but {} amplitudes",
                freqs.len(),
                lambda.len()
            )));
        }
        if freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidScales("frequencies must be finite and positive".into()));
        }
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidScales("frequencies must be strictly increasing".into()));
        }
        if lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidScales("amplitudes must be finite and non-negative".into()));
        }
        if !lambda.iter().any(|&l| l > 0.0) {
            return Err(Error::InvalidScales("all amplitudes are zero".into()));
        }
        Ok(Self { freqs, lambda })
    }

    pub fn single(freq: f64, lambda: f64) -> Result<Self> {
        Self::new(vec![freq], vec![lambda])
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `N_fr`.
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Number of basis columns, `2·N_fr`.
    pub fn n_columns(&self) -> usize {
        2 * self.freqs.len()
    }

    /// Re-expresses amplitudes measured on a response of the given derivative
    /// order in displacement units, `λ / (2πf)^order`.
    pub fn in_displacement_units(&self, order: u8) -> Self {
        let lambda = self
            .freqs
            .iter()
            .zip(&self.lambda)
            .map(|(&f, &l)| l / (2.0 * PI * f).powi(order as i32))
            .collect();
        Self { freqs: self.freqs.clone(), lambda }
    }
}

/// Rule deciding which spectrum bins enter the basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum CutoffRule {
    /// Keep bins with magnitude strictly above `mean + c·std` of the magnitudes.
    Cutoff { c: f64 },
    /// Keep bins whose frequency lies in `[f_min, f_max]`, edges snapped inward to bins.
    Band { f_min: f64, f_max: f64 },
}

impl Default for CutoffRule {
    fn default() -> Self {
        CutoffRule::Cutoff { c: 2.0 }
    }
}

impl CutoffRule {
    /// Threshold `κ = μ + c·σ` over all bins (population standard deviation).
    pub fn threshold(spectrum: &Spectrum, c: f64) -> f64 {
        let n = spectrum.magnitude.len() as f64;
        let mu = spectrum.magnitude.iter().sum::<f64>() / n;
        let var = spectrum.magnitude.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / n;
        mu + c * var.sqrt()
    }
}

/// Picks the reduced frequency grid from a one-sided amplitude spectrum.
/// The DC bin is never kept. Amplitudes are copied from the spectrum.
pub fn select_frequencies(spectrum: &Spectrum, rule: CutoffRule) -> Result<SpectralScales> {
    if spectrum.is_empty() {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    let keep: Vec<usize> = match rule {
        CutoffRule::Cutoff { c } => {
            let kappa = CutoffRule::threshold(spectrum, c);
            (1..spectrum.len()).filter(|&k| spectrum.magnitude[k] > kappa).collect()
        }
        CutoffRule::Band { f_min, f_max } => {
            let slack = 1e-9 * spectrum.resolution();
            (1..spectrum.len())
                .filter(|&k| spectrum.f[k] >= f_min - slack && spectrum.f[k] <= f_max + slack)
                .collect()
        }
    };
    if keep.is_empty() || keep.iter().all(|&k| spectrum.magnitude[k] == 0.0) {
        return Err(Error::NoFrequenciesSelected);
    }
    SpectralScales::new(
        keep.iter().map(|&k| spectrum.f[k]).collect(),
        keep.iter().map(|&k| spectrum.magnitude[k]).collect(),
    )
}

/// Fraction of non-DC bins removed by a selection.
pub fn elimination_ratio(spectrum: &Spectrum, scales: &SpectralScales) -> f64 {
    let total = spectrum.len().saturating_sub(1).max(1) as f64;
    1.0 - scales.len() as f64 / total
}

/// Single-degree-of-freedom modal oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oscillator {
    pub mass: f64,
    pub zeta: f64,
    pub f_n: f64,
}

impl Oscillator {
    pub fn new(mass: f64, zeta: f64, f_n: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidOscillator(format!("mass must be positive, got {mass}")));
        }
        if !(0.0..1.0).contains(&zeta) {
            return Err(Error::InvalidOscillator(format!("damping ratio must lie in [0, 1), got {zeta}")));
        }
        if !(f_n > 0.0 && f_n.is_finite()) {
            return Err(Error::InvalidOscillator(format!("natural frequency must be positive, got {f_n}")));
        }
        Ok(Self { mass, zeta, f_n })
    }

    pub fn omega_n(&self) -> f64 {
        2.0 * PI * self.f_n
    }

    pub fn stiffness(&self) -> f64 {
        self.mass * self.omega_n().powi(2)
    }

    pub fn damping(&self) -> f64 {
        2.0 * self.mass * self.zeta * self.omega_n()
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_n
    }

    /// Force per unit displacement at frequency `f`, as `(re, im)`.
    pub fn impedance(&self, f: f64) -> (f64, f64) {
        let w = 2.0 * PI * f;
        let wn = self.omega_n();
        (self.mass * (wn * wn - w * w), 2.0 * self.mass * self.zeta * wn * w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub kind: Kind,
}

impl BasisMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Evaluates the operator-mapped basis; `op(f)` returns `(a, b)`.
fn evaluate(t: &[f64], scales: &SpectralScales, kind: Kind, op: impl Fn(f64) -> (f64, f64)) -> BasisMatrix {
    let n = t.len();
    let mut values = DMatrix::zeros(n, scales.n_columns());
    for (j, (&f, &lam)) in scales.freqs.iter().zip(&scales.lambda).enumerate() {
        let (a, b) = op(f);
        let (a, b) = (a * lam, b * lam);
        let w = 2.0 * PI * f;
        for (i, &ti) in t.iter().enumerate() {
            let (s, c) = (w * ti).sin_cos();
            values[(i, 2 * j)] = a * s + b * c;
            values[(i, 2 * j + 1)] = a * c - b * s;
        }
    }
    BasisMatrix { values, kind }
}

fn derivative_operator(order: u8) -> impl Fn(f64) -> (f64, f64) {
    move |f| {
        let w = 2.0 * PI * f;
        match order {
            0 => (1.0, 0.0),
            1 => (0.0, w),
            _ => (-w * w, 0.0),
        }
    }
}

/// `λ·[sin(2πft), cos(2πft)]`.
pub fn displacement_basis(t: &[f64], scales: &SpectralScales) -> BasisMatrix {
    evaluate(t, scales, Kind::Displacement, derivative_operator(0))
}

/// First (`order = 1`) or second (`order = 2`) time derivative of the displacement basis.
pub fn derivative_basis(t: &[f64], scales: &SpectralScales, order: u8) -> Result<BasisMatrix> {
    let kind = match order {
        1 => Kind::Velocity,
        2 => Kind::Acceleration,
        _ => return Err(Error::InvalidInput(format!("derivative order must be 1 or 2, got {order}"))),
    };
    Ok(evaluate(t, scales, kind, derivative_operator(order)))
}

/// Basis for any response kind (displacement, velocity, acceleration).
pub fn response_basis(t: &[f64], scales: &SpectralScales, kind: Kind) -> Result<BasisMatrix> {
    match kind.derivative_order() {
        Some(0) => Ok(displacement_basis(t, scales)),
        Some(order) => derivative_basis(t, scales, order),
        None => Err(Error::InvalidInput(format!("{kind} is not a response kind"))),
    }
}

/// `m·ψ_ü + 2mζω_n·ψ_u̇ + mω_n²·ψ_u`.
pub fn force_basis(t: &[f64], scales: &SpectralScales, osc: &Oscillator) -> BasisMatrix {
    evaluate(t, scales, Kind::Force, |f| osc.impedance(f))
}

/// Mode shapes (sensors × modes) with their modal parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeShapeSet {
    phi: DMatrix<f64>,
    masses: Vec<f64>,
    zetas: Vec<f64>,
    f_ns: Vec<f64>,
}

/// Largest accepted condition number of `Φ` (so `ΦᵀΦ` stays below 1e12).
pub const MAX_SHAPE_CONDITION: f64 = 1e6;

/// Scales every column to `max|φ| = 1`. An all-zero column is degenerate.
pub fn normalize_shapes(mut phi: DMatrix<f64>) -> Result<DMatrix<f64>> {
    for mut col in phi.column_iter_mut() {
        let peak = col.amax();
        if peak == 0.0 {
            return Err(Error::DegenerateModeShapes { condition: f64::INFINITY });
        }
        col /= peak;
    }
    Ok(phi)
}

impl ModeShapeSet {
    /// Normalizes every column to `max|φ| = 1`; masses are taken as given.
    pub fn new(phi: DMatrix<f64>, masses: Vec<f64>, zetas: Vec<f64>, f_ns: Vec<f64>) -> Result<Self> {
        let n_m = phi.ncols();
        if n_m == 0 || phi.nrows() == 0 {
            return Err(Error::InvalidInput("empty mode shape matrix".into()));
        }
        if masses.len() != n_m || zetas.len() != n_m || f_ns.len() != n_m {
            return Err(Error::DimensionMismatch(format!(
                "{n_m} modes but {} masses, {} damping ratios, {} frequencies",
                masses.len(),
                zetas.len(),
                f_ns.len()
            )));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite mode shape entry".into()));
        }
        for i in 0..n_m {
            Oscillator::new(masses[i], zetas[i], f_ns[i])?;
        }
        let phi = normalize_shapes(phi)?;
        let condition = shape_condition(&phi);
        if phi.nrows() < n_m || !(condition < MAX_SHAPE_CONDITION) {
            return Err(Error::DegenerateModeShapes { condition });
        }
        Ok(Self { phi, masses, zetas, f_ns })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn n_sensors(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.phi.ncols()
    }

    pub fn oscillator(&self, mode: usize) -> Oscillator {
        Oscillator { mass: self.masses[mode], zeta: self.zetas[mode], f_n: self.f_ns[mode] }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn zetas(&self) -> &[f64] {
        &self.zetas
    }

    pub fn f_ns(&self) -> &[f64] {
        &self.f_ns
    }

    /// Keeps the first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.n_modes());
        Self::new(
            self.phi.columns(0, n).into_owned(),
            self.masses[..n].to_vec(),
            self.zetas[..n].to_vec(),
            self.f_ns[..n].to_vec(),
        )
    }

    /// Keeps the given sensor rows.
    pub fn at_sensors(&self, rows: &[usize]) -> Result<Self> {
        let phi = DMatrix::from_fn(rows.len(), self.n_modes(), |i, j| self.phi[(rows[i], j)]);
        Self::new(phi, self.masses.clone(), self.zetas.clone(), self.f_ns.clone())
    }
}

/// Ratio of extreme singular values; infinite when rank deficient.
pub fn shape_condition(phi: &DMatrix<f64>) -> f64 {
    let sv = phi.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
