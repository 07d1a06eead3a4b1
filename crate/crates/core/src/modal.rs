//! Sensor-space ↔ modal-space conversion through the mode shape matrix `Φ`.

use nalgebra::DMatrix;

use crate::basis::ModeShapeSet;
use crate::error::{Error, Result};
use crate::signal::{Kind, TimeSeries};

/// Condition number of `ΦᵀΦ` above which the least-squares solve switches from
/// normal equations to QR.
pub const QR_THRESHOLD: f64 = 1e6;

/// Condition number of `ΦᵀΦ` at or above which decomposition is refused.
pub const DEGENERATE_THRESHOLD: f64 = 1e12;

/// Synchronous channels of one response kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    channels: Vec<TimeSeries>,
    locations: Vec<String>,
}

impl SensorArray {
    pub fn new(channels: Vec<TimeSeries>, locations: Vec<String>) -> Result<Self> {
        let first = channels.first().ok_or_else(|| Error::InvalidInput("sensor array has no channels".into()))?;
        if locations.len() != channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} locations for {} channels",
                locations.len(),
                channels.len()
            )));
        }
        if let Some(i) = channels.iter().position(|c| c.t() != first.t() || c.kind() != first.kind()) {
            return Err(Error::InvalidInput(format!(
                "channel {} does not share the time vector and kind of channel 0",
                locations[i]
            )));
        }
        Ok(Self { channels, locations })
    }

    /// Channels labelled `s0, s1, …`.
    pub fn unlabelled(channels: Vec<TimeSeries>) -> Result<Self> {
        let locations = (0..channels.len()).map(|i| format!("s{i}")).collect();
        Self::new(channels, locations)
    }

    pub fn channels(&self) -> &[TimeSeries] {
        &self.channels
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn kind(&self) -> Kind {
        self.channels[0].kind()
    }

    pub fn t(&self) -> &[f64] {
        self.channels[0].t()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Channels × samples.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.t().len();
        DMatrix::from_fn(self.channels.len(), n, |i, j| self.channels[i].values()[j])
    }
}

/// Left inverse `(ΦᵀΦ)⁻¹Φᵀ` of the mode shape matrix.
pub fn modal_projector(phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n_s, n_m) = phi.shape();
    if n_s < n_m {
        return Err(Error::DegenerateModeShapes { condition: f64::INFINITY });
    }
    let sv = phi.clone().svd(false, false).singular_values;
    let (max, min) = (sv.max(), sv.min());
    let condition = if min > 0.0 { (max / min).powi(2) } else { f64::INFINITY };
    if !(condition < DEGENERATE_THRESHOLD) {
        return Err(Error::DegenerateModeShapes { condition });
    }
    if condition <= QR_THRESHOLD {
        let chol = phi
            .tr_mul(phi)
            .cholesky()
            .ok_or(Error::DegenerateModeShapes { condition })?;
        Ok(chol.solve(&phi.transpose()))
    } else {
        let qr = phi.clone().qr();
        let mut r_inv_qt = qr.q().transpose();
        if !qr.r().solve_upper_triangular_mut(&mut r_inv_qt) {
            return Err(Error::DegenerateModeShapes { condition });
        }
        Ok(r_inv_qt)
    }
}

/// Least-squares modal coordinates `(ΦᵀΦ)⁻¹Φᵀz`, one series per mode.
pub fn modal_decompose(array: &SensorArray, shapes: &ModeShapeSet) -> Result<Vec<TimeSeries>> {
    project_modes(array, shapes.phi())
}

/// [`modal_decompose`] for a bare shape matrix, without modal parameters.
pub fn project_modes(array: &SensorArray, phi: &DMatrix<f64>) -> Result<Vec<TimeSeries>> {
    if array.n_channels() != phi.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} channels but mode shapes have {} sensor rows",
            array.n_channels(),
            phi.nrows()
        )));
    }
    let projector = modal_projector(phi)?;
    let modal = projector * array.to_matrix();
    let first = &array.channels[0];
    modal
        .row_iter()
        .map(|row| TimeSeries::new(first.t().to_vec(), row.iter().copied().collect(), first.kind(), first.unit()))
        .collect()
}

/// Sensor responses `z = Φu` from modal coordinates.
pub fn modal_superpose(modal: &[TimeSeries], shapes: &ModeShapeSet) -> Result<SensorArray> {
    if modal.len() != shapes.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "{} modal series for {} modes",
            modal.len(),
            shapes.n_modes()
        )));
    }
    let first = &modal[0];
    if modal.iter().any(|m| m.t() != first.t() || m.kind() != first.kind()) {
        return Err(Error::InvalidInput("modal series must share time vector and kind".into()));
    }
    let u = DMatrix::from_fn(modal.len(), first.len(), |i, j| modal[i].values()[j]);
    let z = shapes.phi() * u;
    let channels = z
        .row_iter()
        .map(|row| TimeSeries::new(first.t().to_vec(), row.iter().copied().collect(), first.kind(), first.unit()))
        .collect::<Result<Vec<_>>>()?;
    SensorArray::unlabelled(channels)
}
