//! Std-side harness around `elstm-core`: corpus files, checkpoints, metric
//! and report formats, timed training runs and the `elstm-lab` CLI.

pub mod checkpoint;
pub mod corpus;
mod error;
pub mod output;
pub mod trainer;

pub use error::{LabError, Result};
