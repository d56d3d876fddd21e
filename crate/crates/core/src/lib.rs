//! Hierarchical integrative group LASSO: selection of nonlinear main effects
//! and strong-heredity interactions, with LASSO and group LASSO baselines,
//! cross-validated tuning, and a simulation harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod design;
pub mod error;
pub mod penalty;
pub mod selection;
pub mod simulation;
pub mod solver;

pub use design::{preprocess, GroupedDesign, RawDataset};
pub use error::{Error, Result};
pub use penalty::PenaltyConfig;
pub use solver::{fit, FitOptions, Init, ModelState};
