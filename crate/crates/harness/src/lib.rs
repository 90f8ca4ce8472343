//! Experiment driver for `dp-ntk`: synthetic and CSV data, privacy-utility
//! sweeps, bound verification reports and model files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod persist;
pub mod tradeoff;
pub mod verify;

pub use config::{ExperimentConfig, KPolicy};
pub use error::{HarnessError, Result};
pub use persist::{load_model, save_model, SavedModel};
pub use tradeoff::{run_tradeoff, ResultRow, ResultsTable};
pub use verify::{verify_bounds, VerifyConfig, VerifyReport};
