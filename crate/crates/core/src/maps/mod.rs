//! Circle maps: exact piecewise-affine maps, piecewise-polynomial surrogates,
//! bump profiles and patched maps.

mod bump;
mod circle;
mod patched;
mod poly;
mod spec;

pub use bump::Bump;
pub use circle::{AffinePiece, Branch, CircleMap, Piece};
pub use patched::{c1_distance_lower, c1_distance_upper, Patch, PatchedMap};
pub use poly::Poly;
pub use spec::{map_from_json, map_to_json, patched_from_json, patched_to_json, MapSpec};
