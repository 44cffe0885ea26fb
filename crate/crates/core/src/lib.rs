//! Test-time augmentation for rotation-covariant predictors of stress paths
//! in short-fibre composites.

// NaN inputs must fail the `!(x > 0.0)` style checks
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod sampler;
pub mod sphere;
pub mod surrogate;
pub mod tensor;
pub mod tta;
