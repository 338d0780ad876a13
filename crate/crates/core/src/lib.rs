//! Category-level object pose estimation, tracking, retargeting and evaluation
//! over serialized features.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod config;
pub mod descriptor;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod retarget;
pub mod scale;
pub mod track;

pub use error::{Error, Result};
