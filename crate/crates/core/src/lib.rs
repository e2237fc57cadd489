//! Exact-arithmetic constructions for perturbing expanding circle maps so that a
//! set of almost full measure is squeezed into a set of small measure.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: exact interval and box sets over the rationals.
//! * [`maps`]: piecewise-affine and piecewise-polynomial circle maps, bump
//!   profiles and patched (locally modified) maps.
//! * [`rokhlin`]: good sets, hat sets, merging and Rokhlin towers.
//! * [`linearize`]: local linearization on a finite ball cover.
//! * [`slicing`]: hyperplane normalization and compressors for linear chains.
//! * [`escape`]: escape certificates and the grid-averaging oracle.
//! * [`pipeline`]: the end-to-end construction in dimension one.
//! * [`cli`]: the command-line front end.

pub mod cli;
pub mod error;
pub mod escape;
pub mod exec;
pub mod geometry;
pub mod linearize;
pub mod maps;
pub mod pipeline;
pub mod rokhlin;
pub mod scalar;
pub mod slicing;

pub use error::{Error, Result};
pub use scalar::Scalar;
