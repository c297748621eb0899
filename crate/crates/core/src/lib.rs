//! Core pipeline: asset catalog, model gateway, scene generation and lint,
//! refinement, and diversity metrics.

#![forbid(unsafe_code)]

pub mod catalog;
pub mod gateway;
pub mod math;
pub mod metrics;
pub mod refine;
pub mod rng;
pub mod scenegen;
