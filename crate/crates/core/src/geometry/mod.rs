//! Exact finite unions of closed intervals and axis-parallel boxes.
//!
//! Sets are kept up to measure zero: degenerate pieces are dropped and a
//! difference returns the closure of the set-theoretic difference.

mod boxes;
mod interval;

pub use boxes::{BoxN, BoxSet};
pub use interval::{Interval, IntervalSet};

/// Default cap on the number of components any single set may hold.
pub const DEFAULT_COMPONENT_CAP: usize = 1_000_000;
