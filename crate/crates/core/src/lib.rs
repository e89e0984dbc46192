//! Churn prediction with conditional survival forests and counterfactual
//! recourse from a CounteRGAN-style generator, with a regularized
//! gradient-descent baseline, evaluation metrics and audit exports.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod constraints;
pub mod countergan;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod recourse;
pub mod rgd;
pub mod seed;
pub mod service;
pub mod survival;

pub use error::{Error, Result};
