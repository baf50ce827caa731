//! File formats, experiment configuration and the evaluation harness around
//! `lsrs-core`.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod harness;
pub mod idx;

pub use config::ExperimentConfig;
pub use harness::{HarnessError, Stage};
