//! Pseudo-spectral laboratory for stochastic transport, heat and vorticity
//! equations driven by divergence-free Kraichnan-type noise.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod field_io;
pub mod grid;
pub mod initial;
pub mod noise;
pub mod norms;
pub mod numerics;
pub mod props;
pub mod quadrature;
pub mod rng;
pub mod solvers;
pub mod stats;

pub use error::{Error, Result};
