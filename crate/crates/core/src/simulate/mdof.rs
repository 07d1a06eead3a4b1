use nalgebra::DMatrix;
use rayon::prelude::*;

use serde::{Deserialize, Serialize};

use super::load::{BroadbandShape, LoadSignal};
use super::sdof::{sdof_response, NewmarkConfig, Response};
use crate::basis::ModeShapeSet;
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::modal::{modal_superpose, SensorArray};
use crate::signal::{Kind, TimeSeries};

/// Roots `β_nL` of `cos·cosh = −1` for the first six clamped-free bending modes.
pub const CANTILEVER_ROOTS: [f64; 6] = [1.875104, 4.694091, 7.854757, 10.995541, 14.137168, 17.278760];

/// Natural frequencies of the six-mode fixture, Hz.
pub const FIXTURE_FREQUENCIES: [f64; 6] = [0.160, 0.765, 1.992, 3.790, 6.395, 9.458];

pub const FIXTURE_DAMPING: f64 = 0.01;

/// Clamped-free Euler–Bernoulli bending shape at `x ∈ [0, 1]`.
pub fn cantilever_shape(root: f64, x: f64) -> f64 {
    let b = root * x;
    let sigma = (root.cosh() + root.cos()) / (root.sinh() + root.sin());
    b.cosh() - b.cos() - sigma * (b.sinh() - b.sin())
}

/// Six-mode cantilever with `n_sensors` equally spaced sensors ending at the
/// tip, unit lumped mass at each sensor and 1% damping. Modal masses are
/// `Σ φ²` of the max-normalized shapes.
pub fn cantilever_fixture(n_sensors: usize) -> Result<ModeShapeSet> {
    if n_sensors < CANTILEVER_ROOTS.len() {
        return Err(Error::InvalidInput(format!("need at least 6 sensors, got {n_sensors}")));
    }
    let phi = DMatrix::from_fn(n_sensors, CANTILEVER_ROOTS.len(), |i, j| {
        cantilever_shape(CANTILEVER_ROOTS[j], (i + 1) as f64 / n_sensors as f64)
    });
    let mut normalized = phi.clone();
    for mut col in normalized.column_iter_mut() {
        let peak = col.amax();
        col /= peak;
    }
    let masses = normalized.column_iter().map(|c| c.norm_squared()).collect();
    ModeShapeSet::new(phi, masses, vec![FIXTURE_DAMPING; 6], FIXTURE_FREQUENCIES.to_vec())
}

/// Responses of a modal system driven by nodal loads.
#[derive(Debug, Clone)]
pub struct MdofResponse {
    /// `q = Φᵀp`, one series per mode.
    pub modal_loads: Vec<TimeSeries>,
    pub modal: Vec<Response>,
    pub displacement: SensorArray,
    pub velocity: SensorArray,
    pub acceleration: SensorArray,
}

impl MdofResponse {
    pub fn sensors(&self, kind: Kind) -> Option<&SensorArray> {
        match kind {
            Kind::Displacement => Some(&self.displacement),
            Kind::Velocity => Some(&self.velocity),
            Kind::Acceleration => Some(&self.acceleration),
            Kind::Force | Kind::Rotation => None,
        }
    }
}

/// Projects nodal loads (one per sensor row of `Φ`) onto the modes, integrates
/// each mode independently and superposes the sensor responses.
pub fn mdof_modal_response(shapes: &ModeShapeSet, nodal_loads: &[TimeSeries], cfg: &NewmarkConfig) -> Result<MdofResponse> {
    if nodal_loads.len() != shapes.n_sensors() {
        return Err(Error::DimensionMismatch(format!(
            "{} nodal loads for {} sensor rows",
            nodal_loads.len(),
            shapes.n_sensors()
        )));
    }
    let first = &nodal_loads[0];
    if nodal_loads.iter().any(|p| p.t() != first.t()) {
        return Err(Error::InvalidInput("nodal loads must share a time vector".into()));
    }
    let phi = shapes.phi();
    let modal_loads = (0..shapes.n_modes())
        .map(|j| {
            let values = (0..first.len())
                .map(|k| nodal_loads.iter().enumerate().map(|(i, p)| phi[(i, j)] * p.values()[k]).sum())
                .collect();
            TimeSeries::new(first.t().to_vec(), values, Kind::Force, first.unit())
        })
        .collect::<Result<Vec<_>>>()?;
    let modal = modal_loads
        .par_iter()
        .enumerate()
        .map(|(j, q)| sdof_response(&shapes.oscillator(j), &LoadSignal::from_series(q.clone())?, cfg))
        .collect::<Result<Vec<_>>>()?;
    let superpose = |kind: Kind| {
        let per_mode: Vec<TimeSeries> = modal.iter().map(|r| r.get(kind).cloned().expect("response kind")).collect();
        modal_superpose(&per_mode, shapes)
    };
    Ok(MdofResponse {
        displacement: superpose(Kind::Displacement)?,
        velocity: superpose(Kind::Velocity)?,
        acceleration: superpose(Kind::Acceleration)?,
        modal_loads,
        modal,
    })
}

/// Broadband-loaded cantilever: independent low-pass loads at every sensor node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdofFixture {
    pub n_sensors: usize,
    pub fs: f64,
    pub duration: f64,
    pub load: BroadbandShape,
    pub seed: u64,
}

impl Default for MdofFixture {
    fn default() -> Self {
        Self { n_sensors: 10, fs: 20.0, duration: 600.0, load: BroadbandShape::default(), seed: 0 }
    }
}

/// Everything generated for one fixture run.
#[derive(Debug, Clone)]
pub struct MdofRun {
    pub shapes: ModeShapeSet,
    pub nodal_loads: Vec<TimeSeries>,
    pub response: MdofResponse,
}

impl MdofFixture {
    /// Node `i` draws its load from `derive_seed(seed, "node{i}")`.
    pub fn generate(&self) -> Result<MdofRun> {
        let shapes = cantilever_fixture(self.n_sensors)?;
        let nodal_loads = (0..self.n_sensors)
            .map(|i| {
                let seed = derive_seed(self.seed, &format!("node{i}"));
                Ok(LoadSignal::broadband(self.load, seed, self.fs, self.duration)?.series().clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let response = mdof_modal_response(&shapes, &nodal_loads, &NewmarkConfig::default())?;
        Ok(MdofRun { shapes, nodal_loads, response })
    }
}
