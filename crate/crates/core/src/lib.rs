//! Conformal dimensionality reduction and increase by chained generalized
//! stereographic projections, with tooling to measure what the maps
//! preserve and how many arithmetic operations they cost.
//!
//! * [`sphere`]: normalization, the projection from the North Pole, its
//!   inverse, and finite-difference conformality checks.
//! * [`chain`]: the reduction and increase chains with exact operation
//!   counts and per-level traces.
//! * [`distortion`]: angle, distance and circle-image measurements.
//! * [`io`]: CSV / JSON-lines datasets and report documents.
//! * [`bench`]: operation-count sweeps and log-log scaling fits.
//! * [`verify`]: the property suites behind `stereochain verify`.

// Guards like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod chain;
pub mod cli;
pub mod dataset;
pub mod distortion;
pub mod io;
pub mod ops;
pub mod sphere;
pub mod verify;

pub use chain::{
    increase_dataset, increase_point, predicted_ops_increase, predicted_ops_reduce, reduce_dataset,
    reduce_point, ChainError, ChainOutcome, ChainTrace, DegeneratePolicy, PolicyMode, TraceMode,
};
pub use dataset::{Dataset, DatasetError};
pub use ops::OpCounter;
pub use sphere::{
    angle_between, conformality_check, inverse_conformality_check, normalize, stereo_lift,
    stereo_project, AmbientVector, ConformalityReport, GeometryError, SpherePoint, ToleranceConfig,
};
