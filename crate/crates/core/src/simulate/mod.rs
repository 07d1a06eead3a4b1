//! Ground-truth oscillators, loads and responses, and Monte Carlo studies of
//! the reconstruction pipeline built on them.

mod load;
mod mdof;
mod sdof;
mod study;

pub use load::{BroadbandShape, Harmonic, LoadDescriptor, LoadSignal};
pub use mdof::{
    cantilever_fixture, cantilever_shape, mdof_modal_response, MdofFixture, MdofResponse, MdofRun, CANTILEVER_ROOTS, FIXTURE_DAMPING,
    FIXTURE_FREQUENCIES,
};
pub use sdof::{alias_risk, harmonic_steady_state, sdof_response, transient_decay_time, NewmarkConfig, Response, STEPS_PER_PERIOD};
pub use study::{all_input_combinations, input_label, quantile, run_study, StudyAxis, StudyConfig, StudyRow, StudyTable};
