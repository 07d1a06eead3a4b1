use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time series is not uniformly sampled (max step deviation {deviation:.3e} s)")]
    NonUniformSampling { deviation: f64 },

    #[error("signal too short: need at least {needed} samples, got {got}")]
    InsufficientLength { needed: usize, got: usize },

    #[error("frequency {frequency} Hz outside the valid range (0, {nyquist}) Hz")]
    FrequencyOutOfRange { frequency: f64, nyquist: f64 },

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("no frequencies passed the selection rule")]
    NoFrequenciesSelected,

    #[error("invalid spectral scales: {0}")]
    InvalidScales(String),

    #[error("invalid oscillator: {0}")]
    InvalidOscillator(String),

    #[error("mode shapes are rank deficient or ill-conditioned (condition number {condition:.3e})")]
    DegenerateModeShapes { condition: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("hyperparameter fit failed in all {starts} starts")]
    FitFailed { starts: usize },

    #[error("signal has zero variance")]
    ZeroVarianceSignal,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse { path: String, line: Option<u64>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalBreakdown(_)
                | Error::FitFailed { .. }
                | Error::DegenerateModeShapes { .. }
                | Error::NoFrequenciesSelected
        )
    }
}
