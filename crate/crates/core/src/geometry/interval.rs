use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{self, le, lt, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: Scalar,
    pub hi: Scalar,
}

impl Interval {
    pub fn new(lo: Scalar, hi: Scalar) -> Self {
        Interval { lo, hi }
    }

    pub fn checked(lo: Scalar, hi: Scalar) -> Result<Self> {
        if lt(&hi, &lo) {
            return Err(Error::input(format!(
                "interval with lo > hi: [{}, {}]",
                scalar::fmt(&lo),
                scalar::fmt(&hi)
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn unit() -> Self {
        Interval::new(scalar::zero(), scalar::one())
    }

    pub fn len(&self) -> Scalar {
        &self.hi - &self.lo
    }

    pub fn is_degenerate(&self) -> bool {
        le(&self.hi, &self.lo)
    }

    pub fn mid(&self) -> Scalar {
        (&self.lo + &self.hi) / scalar::int(2)
    }

    pub fn contains(&self, x: &Scalar) -> bool {
        le(&self.lo, x) && le(x, &self.hi)
    }

    pub fn contains_interval(&self, o: &Interval) -> bool {
        le(&self.lo, &o.lo) && le(&o.hi, &self.hi)
    }

    pub fn intersect(&self, o: &Interval) -> Option<Interval> {
        let lo = scalar::max(&self.lo, &o.lo);
        let hi = scalar::min(&self.hi, &o.hi);
        if lt(lo, hi) {
            Some(Interval::new(lo.clone(), hi.clone()))
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (scalar::to_f64(&self.lo), scalar::to_f64(&self.hi))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", scalar::fmt(&self.lo), scalar::fmt(&self.hi))
    }
}

/// Canonical finite union of closed intervals: sorted, pairwise separated by
/// gaps of positive length, no degenerate parts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct IntervalSet {
    parts: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { parts: Vec::new() }
    }

    pub fn unit() -> Self {
        IntervalSet { parts: vec![Interval::unit()] }
    }

    pub fn interval(lo: Scalar, hi: Scalar) -> Self {
        Self::from_intervals(vec![Interval::new(lo, hi)])
    }

    pub fn from_intervals(mut v: Vec<Interval>) -> Self {
        v.retain(|i| !i.is_degenerate());
        v.sort_by(|a, b| scalar::cmp(&a.lo, &b.lo));
        Self::merge_sorted(v)
    }

    /// Merges intervals already sorted by left endpoint.
    pub(crate) fn from_sorted(mut v: Vec<Interval>) -> Self {
        v.retain(|i| !i.is_degenerate());
        Self::merge_sorted(v)
    }

    /// Trusts that `v` is already canonical.
    pub(crate) fn from_canonical(v: Vec<Interval>) -> Self {
        debug_assert!(v.windows(2).all(|w| lt(&w[0].hi, &w[1].lo)));
        debug_assert!(v.iter().all(|i| !i.is_degenerate()));
        IntervalSet { parts: v }
    }

    fn merge_sorted(v: Vec<Interval>) -> Self {
        let mut out: Vec<Interval> = Vec::with_capacity(v.len());
        for iv in v {
            match out.last_mut() {
                Some(last) if le(&iv.lo, &last.hi) => {
                    if lt(&last.hi, &iv.hi) {
                        last.hi = iv.hi;
                    }
                }
                _ => out.push(iv),
            }
        }
        IntervalSet { parts: out }
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn into_parts(self) -> Vec<Interval> {
        self.parts
    }

    pub fn components(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn measure(&self) -> Scalar {
        let mut m = scalar::Sum::new();
        for p in &self.parts {
            m.add(&p.hi, 1);
            m.add(&p.lo, -1);
        }
        m.value()
    }

    pub fn union(&self, o: &IntervalSet) -> IntervalSet {
        if o.is_empty() {
            return self.clone();
        }
        if self.is_empty() {
            return o.clone();
        }
        let mut v = Vec::with_capacity(self.parts.len() + o.parts.len());
        let (mut i, mut j) = (0, 0);
        while i < self.parts.len() || j < o.parts.len() {
            let take_a = j >= o.parts.len()
                || (i < self.parts.len() && le(&self.parts[i].lo, &o.parts[j].lo));
            if take_a {
                v.push(self.parts[i].clone());
                i += 1;
            } else {
                v.push(o.parts[j].clone());
                j += 1;
            }
        }
        Self::merge_sorted(v)
    }

    pub fn union_all<'a>(sets: impl IntoIterator<Item = &'a IntervalSet>) -> IntervalSet {
        let mut v = Vec::new();
        for s in sets {
            v.extend(s.parts.iter().cloned());
        }
        Self::from_intervals(v)
    }

    pub fn intersect(&self, o: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.parts.len() && j < o.parts.len() {
            let a = &self.parts[i];
            let b = &o.parts[j];
            if let Some(x) = a.intersect(b) {
                out.push(x);
            }
            if lt(&a.hi, &b.hi) {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { parts: out }
    }

    pub fn intersect_interval(&self, iv: &Interval) -> IntervalSet {
        let start = self.parts.partition_point(|p| le(&p.hi, &iv.lo));
        let mut out = Vec::new();
        for p in &self.parts[start..] {
            if le(&iv.hi, &p.lo) {
                break;
            }
            if let Some(x) = p.intersect(iv) {
                out.push(x);
            }
        }
        IntervalSet { parts: out }
    }

    /// Closure of `self \ o`.
    pub fn subtract(&self, o: &IntervalSet) -> IntervalSet {
        if o.is_empty() || self.is_empty() {
            return self.clone();
        }
        let mut out = Vec::with_capacity(self.parts.len());
        let mut j = 0;
        for a in &self.parts {
            while j < o.parts.len() && le(&o.parts[j].hi, &a.lo) {
                j += 1;
            }
            let mut cur = a.lo.clone();
            let mut k = j;
            while k < o.parts.len() && lt(&o.parts[k].lo, &a.hi) {
                let b = &o.parts[k];
                if lt(&cur, &b.lo) {
                    out.push(Interval::new(cur.clone(), b.lo.clone()));
                }
                if lt(&cur, &b.hi) {
                    cur = b.hi.clone();
                }
                k += 1;
            }
            if lt(&cur, &a.hi) {
                out.push(Interval::new(cur, a.hi.clone()));
            }
        }
        IntervalSet { parts: out }
    }

    /// Closure of `[lo, hi] \ self`.
    pub fn complement_in(&self, dom: &Interval) -> IntervalSet {
        IntervalSet::from_intervals(vec![dom.clone()]).subtract(self)
    }

    pub fn complement_unit(&self) -> IntervalSet {
        self.complement_in(&Interval::unit())
    }

    pub fn contains_point(&self, x: &Scalar) -> bool {
        let i = self.parts.partition_point(|p| lt(&p.hi, x));
        i < self.parts.len() && le(&self.parts[i].lo, x)
    }

    /// True when every part of `o` lies inside a single part of `self`.
    pub fn covers(&self, o: &IntervalSet) -> bool {
        o.parts.iter().all(|b| {
            let i = self.parts.partition_point(|p| lt(&p.hi, &b.lo));
            i < self.parts.len() && self.parts[i].contains_interval(b)
        })
    }

    /// Intersection has measure zero.
    pub fn interior_disjoint(&self, o: &IntervalSet) -> bool {
        self.intersect(o).is_empty()
    }

    /// No common point at all, including shared endpoints.
    pub fn closures_disjoint(&self, o: &IntervalSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.parts.len() && j < o.parts.len() {
            let a = &self.parts[i];
            let b = &o.parts[j];
            if le(&a.lo, &b.hi) && le(&b.lo, &a.hi) {
                return false;
            }
            if lt(&a.hi, &b.hi) {
                i += 1;
            } else {
                j += 1;
            }
        }
        true
    }

    /// As [`closures_disjoint`](Self::closures_disjoint) with 0 and 1 identified.
    pub fn closures_disjoint_on_circle(&self, o: &IntervalSet) -> bool {
        let z = scalar::zero();
        let u = scalar::one();
        if (self.contains_point(&z) && o.contains_point(&u))
            || (self.contains_point(&u) && o.contains_point(&z))
        {
            return false;
        }
        self.closures_disjoint(o)
    }

    /// Removes `s` from both ends of every part.
    pub fn shrink(&self, s: &Scalar) -> IntervalSet {
        let v = self
            .parts
            .iter()
            .map(|p| Interval::new(&p.lo + s, &p.hi - s))
            .filter(|p| !p.is_degenerate())
            .collect();
        IntervalSet { parts: v }
    }

    pub fn min_len(&self) -> Option<Scalar> {
        self.parts.iter().map(|p| p.len()).min()
    }

    pub fn symmetric_difference_measure(&self, o: &IntervalSet) -> Scalar {
        self.subtract(o).measure() + o.subtract(self).measure()
    }

    pub fn to_f64(&self) -> Vec<(f64, f64)> {
        self.parts.iter().map(|p| p.to_f64()).collect()
    }

    pub fn max_denominator_bits(&self) -> u64 {
        self.parts
            .iter()
            .flat_map(|p| [p.lo.denom().bits(), p.hi.denom().bits()])
            .max()
            .unwrap_or(0)
    }

    pub fn check_cap(&self, what: &str, cap: usize) -> Result<()> {
        if self.parts.len() > cap {
            return Err(Error::cap(what, cap));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": 1,
            "boxes": self.parts.iter().map(|p| vec![vec![scalar::json(&p.lo), scalar::json(&p.hi)]]).collect::<Vec<_>>()
        })
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return write!(f, "{{}}");
        }
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, " u ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}
