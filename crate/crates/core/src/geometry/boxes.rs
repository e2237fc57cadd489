use std::fmt;

use num::Zero;
use serde_json::Value;

use super::interval::{Interval, IntervalSet};
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Closed axis-parallel box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoxN {
    pub lo: Vec<Scalar>,
    pub hi: Vec<Scalar>,
}

impl BoxN {
    pub fn new(lo: Vec<Scalar>, hi: Vec<Scalar>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(lo.len(), hi.len()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::input("box with lo > hi"));
        }
        Ok(BoxN { lo, hi })
    }

    pub fn unit(d: usize) -> Self {
        BoxN { lo: vec![scalar::zero(); d], hi: vec![scalar::one(); d] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(a, b)| a >= b)
    }

    pub fn volume(&self) -> Scalar {
        let mut v = scalar::one();
        for (a, b) in self.lo.iter().zip(&self.hi) {
            v *= b - a;
        }
        v
    }

    pub fn intersect(&self, o: &BoxN) -> Option<BoxN> {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let a = scalar::max(&self.lo[k], &o.lo[k]).clone();
            let b = scalar::min(&self.hi[k], &o.hi[k]).clone();
            if a >= b {
                return None;
            }
            lo.push(a);
            hi.push(b);
        }
        Some(BoxN { lo, hi })
    }

    /// Closure of `self \ o` as at most `2d` interior-disjoint boxes.
    pub fn subtract(&self, o: &BoxN) -> Vec<BoxN> {
        let Some(cut) = self.intersect(o) else {
            return vec![self.clone()];
        };
        let mut out = Vec::new();
        let mut rest = self.clone();
        for k in 0..self.dim() {
            if rest.lo[k] < cut.lo[k] {
                let mut piece = rest.clone();
                piece.hi[k] = cut.lo[k].clone();
                out.push(piece);
                rest.lo[k] = cut.lo[k].clone();
            }
            if cut.hi[k] < rest.hi[k] {
                let mut piece = rest.clone();
                piece.lo[k] = cut.hi[k].clone();
                out.push(piece);
                rest.hi[k] = cut.hi[k].clone();
            }
        }
        out
    }

    pub fn contains_point(&self, x: &[Scalar]) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|k| self.lo[k] <= x[k] && x[k] <= self.hi[k])
    }
}

impl fmt::Display for BoxN {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.dim() {
            if k > 0 {
                write!(f, "x")?;
            }
            write!(f, "[{}, {}]", scalar::fmt(&self.lo[k]), scalar::fmt(&self.hi[k]))?;
        }
        Ok(())
    }
}

/// Finite union of boxes in the unit cube of a fixed dimension.
///
/// In dimension one the boxes are kept as a canonical [`IntervalSet`]; in
/// higher dimension they are kept pairwise interior-disjoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxSet {
    dim: usize,
    boxes: Vec<BoxN>,
}

impl BoxSet {
    pub fn empty(dim: usize) -> Self {
        BoxSet { dim, boxes: Vec::new() }
    }

    pub fn unit(dim: usize) -> Self {
        BoxSet { dim, boxes: vec![BoxN::unit(dim)] }
    }

    pub fn from_boxes(dim: usize, boxes: Vec<BoxN>) -> Result<Self> {
        for b in &boxes {
            if b.dim() != dim {
                return Err(Error::DimensionMismatch(dim, b.dim()));
            }
            let inside = b.lo.iter().chain(&b.hi).all(|v| *v >= scalar::zero() && *v <= scalar::one());
            if !inside {
                return Err(Error::input(format!("box {b} leaves the unit cube")));
            }
        }
        let mut out = BoxSet::empty(dim);
        if dim == 1 {
            let ivs = boxes.into_iter().map(|b| Interval::new(b.lo[0].clone(), b.hi[0].clone())).collect();
            return Ok(IntervalSet::from_intervals(ivs).into());
        }
        for b in boxes {
            if !b.is_degenerate() {
                out = out.union(&BoxSet { dim, boxes: vec![b] })?;
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn boxes(&self) -> &[BoxN] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn measure(&self) -> Scalar {
        let mut m = Scalar::zero();
        for b in &self.boxes {
            m += b.volume();
        }
        m
    }

    pub fn as_intervals(&self) -> Option<IntervalSet> {
        if self.dim != 1 {
            return None;
        }
        Some(IntervalSet::from_canonical(
            self.boxes.iter().map(|b| Interval::new(b.lo[0].clone(), b.hi[0].clone())).collect(),
        ))
    }

    fn same_dim(&self, o: &BoxSet) -> Result<()> {
        if self.dim != o.dim {
            return Err(Error::DimensionMismatch(self.dim, o.dim));
        }
        Ok(())
    }

    pub fn union(&self, o: &BoxSet) -> Result<BoxSet> {
        self.same_dim(o)?;
        if let (Some(a), Some(b)) = (self.as_intervals(), o.as_intervals()) {
            return Ok(a.union(&b).into());
        }
        let mut boxes = self.boxes.clone();
        boxes.extend(o.subtract(self)?.boxes);
        Ok(BoxSet { dim: self.dim, boxes })
    }

    pub fn intersect(&self, o: &BoxSet) -> Result<BoxSet> {
        self.same_dim(o)?;
        if let (Some(a), Some(b)) = (self.as_intervals(), o.as_intervals()) {
            return Ok(a.intersect(&b).into());
        }
        let mut boxes = Vec::new();
        for a in &self.boxes {
            for b in &o.boxes {
                if let Some(x) = a.intersect(b) {
                    boxes.push(x);
                }
            }
        }
        Ok(BoxSet { dim: self.dim, boxes })
    }

    pub fn subtract(&self, o: &BoxSet) -> Result<BoxSet> {
        self.same_dim(o)?;
        if let (Some(a), Some(b)) = (self.as_intervals(), o.as_intervals()) {
            return Ok(a.subtract(&b).into());
        }
        let mut cur = self.boxes.clone();
        for b in &o.boxes {
            cur = cur.iter().flat_map(|a| a.subtract(b)).collect();
        }
        Ok(BoxSet { dim: self.dim, boxes: cur })
    }

    pub fn complement_in_unit(&self) -> BoxSet {
        BoxSet::unit(self.dim).subtract(self).expect("same dimension")
    }

    pub fn contains_point(&self, x: &[Scalar]) -> bool {
        self.boxes.iter().any(|b| b.contains_point(x))
    }

    /// Equality up to a null set.
    pub fn same_up_to_null(&self, o: &BoxSet) -> Result<bool> {
        Ok(self.subtract(o)?.measure().is_zero() && o.subtract(self)?.measure().is_zero())
    }

    pub fn to_json(&self) -> Value {
        let boxes: Vec<Value> = self
            .boxes
            .iter()
            .map(|b| {
                Value::Array(
                    (0..self.dim)
                        .map(|k| Value::Array(vec![scalar::json(&b.lo[k]), scalar::json(&b.hi[k])]))
                        .collect(),
                )
            })
            .collect();
        serde_json::json!({ "dim": self.dim, "boxes": boxes })
    }

    pub fn from_json(v: &Value) -> Result<BoxSet> {
        let dim = v
            .get("dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::input("box set needs an integer \"dim\""))? as usize;
        if dim == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        let arr = v
            .get("boxes")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::input("box set needs a \"boxes\" array"))?;
        let mut boxes = Vec::with_capacity(arr.len());
        for b in arr {
            let sides = b.as_array().ok_or_else(|| Error::input("box must be an array of sides"))?;
            if sides.len() != dim {
                return Err(Error::DimensionMismatch(dim, sides.len()));
            }
            let mut lo = Vec::with_capacity(dim);
            let mut hi = Vec::with_capacity(dim);
            for side in sides {
                let pair = side
                    .as_array()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| Error::input("box side must be [lo, hi]"))?;
                lo.push(scalar::from_json(&pair[0])?);
                hi.push(scalar::from_json(&pair[1])?);
            }
            boxes.push(BoxN::new(lo, hi)?);
        }
        BoxSet::from_boxes(dim, boxes)
    }
}

impl From<IntervalSet> for BoxSet {
    fn from(s: IntervalSet) -> Self {
        BoxSet {
            dim: 1,
            boxes: s.into_parts().into_iter().map(|p| BoxN { lo: vec![p.lo], hi: vec![p.hi] }).collect(),
        }
    }
}

impl fmt::Display for BoxSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.boxes.is_empty() {
            return write!(f, "{{}}");
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if i > 0 {
                write!(f, " u ")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}
