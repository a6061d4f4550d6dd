//! Two-stage frame selection and event recognition over per-frame feature
//! sequences, with rhythm-perturbation evaluation.

pub mod cells;
pub mod classifier;
pub mod dense;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod policy;
pub mod rhythm;
pub mod selector;
pub mod verify;

pub use error::{Error, Result};
