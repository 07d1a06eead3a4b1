pub mod basis;
pub mod error;
pub mod gp;
pub mod io;
pub mod metrics;
pub mod modal;
pub mod seed;
pub mod signal;
pub mod simulate;
