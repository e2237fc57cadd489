//! Making a map locally affine on most of an open set.
//!
//! A greedy packing of disjoint intervals fills all but a small fraction of the
//! target, and on each interval the map is blended into its tangent line with a
//! bump, so it is exactly affine on a slightly smaller concentric interval.

use num::{One, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::{BoxSet, Interval, IntervalSet};
use crate::maps::{CircleMap, Patch, PatchedMap, Piece};
use crate::scalar::{self, Scalar};

/// Disjoint intervals with closures inside the target, of radius below `r0`.
#[derive(Clone, Debug)]
pub struct VitaliCover {
    pub target: IntervalSet,
    pub balls: Vec<Interval>,
    pub gamma: Scalar,
    pub r0: Scalar,
    /// Measure of the union of the balls over the measure of the target.
    pub covered: Scalar,
    pub notes: Vec<String>,
}

impl VitaliCover {
    pub fn centers_and_radii(&self) -> impl Iterator<Item = (Scalar, Scalar)> + '_ {
        self.balls.iter().map(|b| (b.mid(), b.len() / scalar::int(2)))
    }
}

fn target_intervals(u: &BoxSet) -> Result<IntervalSet> {
    u.as_intervals().ok_or_else(|| Error::input(format!("linearization is one-dimensional, got a set in dimension {}", u.dim())))
}

/// Greedy left-to-right packing. A component of length `L` gets
/// `m = floor(L / 2r0) + 1` equal cells, and each cell holds a concentric ball
/// of relative size `1 - gamma/4`; the covered fraction is exactly `1 - gamma/4`.
pub fn vitali_cover(u: &BoxSet, gamma: &Scalar, r0: &Scalar) -> Result<VitaliCover> {
    check_knobs(gamma, r0)?;
    let target = target_intervals(u)?;
    let parts = target.parts().to_vec();
    pack(target, &parts, gamma, r0)
}

fn check_knobs(gamma: &Scalar, r0: &Scalar) -> Result<()> {
    if *gamma <= Scalar::zero() || *gamma >= Scalar::one() {
        return Err(Error::input("gamma must lie in (0, 1)"));
    }
    if *r0 <= Scalar::zero() {
        return Err(Error::input("r0 must be positive"));
    }
    Ok(())
}

fn pack(target: IntervalSet, parts: &[Interval], gamma: &Scalar, r0: &Scalar) -> Result<VitaliCover> {
    let fill = Scalar::one() - gamma / scalar::int(4);
    let mut balls = Vec::new();
    let mut notes = Vec::new();
    for c in parts {
        let len = c.len();
        let m = scalar::floor(&(&len / (r0 * scalar::int(2)))) + 1;
        let m = Scalar::from_integer(m);
        if m.is_one() {
            notes.push(format!("component {c} is shorter than 2 r0; packed with one ball"));
        }
        let cell = &len / &m;
        let r = &cell * &fill / scalar::int(2);
        let mut lo = c.lo.clone();
        while lo < c.hi {
            let mid = &lo + &cell / scalar::int(2);
            balls.push(Interval::new(&mid - &r, &mid + &r));
            lo += &cell;
        }
    }
    let covered = if target.is_empty() {
        Scalar::one()
    } else {
        IntervalSet::from_intervals(balls.clone()).measure() / target.measure()
    };
    Ok(VitaliCover { target, balls, gamma: gamma.clone(), r0: r0.clone(), covered, notes })
}

#[derive(Clone, Debug)]
pub struct Linearization {
    pub map: PatchedMap,
    /// Union of the inner zones, where the patched map is affine.
    pub v: IntervalSet,
    pub cover: VitaliCover,
    pub delta: Scalar,
    /// `m(V) / m(U)`, exact.
    pub ratio: Scalar,
    /// Certified C1 distance between the patched and the original map.
    pub c1_bound: Scalar,
}

impl Linearization {
    pub fn to_json(&self) -> Value {
        json!({
            "gamma": scalar::json(&self.cover.gamma),
            "r0": scalar::json(&self.cover.r0),
            "delta": scalar::json(&self.delta),
            "balls": self.cover.balls.len(),
            "covered": scalar::json(&self.cover.covered),
            "ratio": scalar::json(&self.ratio),
            "ratio_f64": scalar::to_f64(&self.ratio),
            "c1_bound": scalar::json(&self.c1_bound),
            "c1_bound_f64": scalar::to_f64(&self.c1_bound),
            "patches": self.map.patches().len(),
            "notes": self.cover.notes,
        })
    }
}

/// Blends `f` into its tangent line at the center of each ball of a packing of
/// `U`. Balls on affine branches need no patch. Needs `delta < gamma / 2`, so
/// that `(1 - delta)(1 - gamma/4) > 1 - gamma`.
pub fn linearize_on(f: &CircleMap, u: &BoxSet, gamma: &Scalar, r0: &Scalar, delta: &Scalar) -> Result<Linearization> {
    if *delta <= Scalar::zero() || *delta >= gamma / scalar::int(2) {
        return Err(Error::pre("the bump ramp delta must satisfy 0 < delta < gamma / 2"));
    }
    check_knobs(gamma, r0)?;
    // Each ball has to sit inside one branch.
    let target = target_intervals(u)?;
    let breaks = f.break_points();
    let mut parts = Vec::new();
    for c in target.parts() {
        let mut lo = c.lo.clone();
        for b in breaks.iter().filter(|b| c.lo < **b && **b < c.hi) {
            parts.push(Interval::new(lo, b.clone()));
            lo = b.clone();
        }
        parts.push(Interval::new(lo, c.hi.clone()));
    }
    let cover = pack(target, &parts, gamma, r0)?;
    let inner = Scalar::one() - delta;
    let mut patches = Vec::new();
    let mut v = Vec::new();
    for (p, r) in cover.centers_and_radii() {
        let br = &f.branches()[f.branch_index(&p)];
        if let Piece::Poly(_) = br.piece {
            let slope = br.piece.deriv(&p);
            if slope.is_zero() {
                return Err(Error::pre(format!("the derivative vanishes at the ball center {}", scalar::fmt(&p))));
            }
            patches.push(Patch::Linearize {
                center: p.clone(),
                radius: r.clone(),
                delta: delta.clone(),
                raw_center: br.piece.raw(&p),
                slope,
            });
        }
        let w = &r * &inner;
        v.push(Interval::new(&p - &w, &p + &w));
    }
    let map = PatchedMap::new(f.clone(), patches)?;
    let v = IntervalSet::from_intervals(v);
    let target = &cover.target;
    let ratio = if target.is_empty() { Scalar::one() } else { v.measure() / target.measure() };
    let c1_bound = map.c1_upper();
    Ok(Linearization { map, v, cover, delta: delta.clone(), ratio, c1_bound })
}

/// True when on every component of `v` the map agrees with one affine map:
/// the inner zone of a tangent patch, the flat zone of a compression patch over
/// an affine branch, or an unpatched stretch of an affine branch.
pub fn check_locally_linear(g: &PatchedMap, v: &IntervalSet) -> bool {
    let f = g.base();
    v.parts().iter().all(|c| {
        let hits: Vec<&Patch> = g.patches().iter().filter(|p| p.support().intersect(c).is_some()).collect();
        let branch_affine = |iv: &Interval| {
            let i = f.branch_index(&iv.lo);
            let b = &f.branches()[i];
            iv.hi <= b.hi && matches!(b.piece, Piece::Affine { .. })
        };
        match hits.as_slice() {
            [] => branch_affine(c),
            [p] => {
                let s = p.support();
                let w = (&s.hi - &s.lo) / scalar::int(2) * (Scalar::one() - p.delta());
                let mid = s.mid();
                let zone = Interval::new(&mid - &w, &mid + &w);
                let inside = zone.contains_interval(c);
                match p {
                    Patch::Linearize { .. } => inside,
                    Patch::Compress { .. } => inside && branch_affine(&s),
                }
            }
            _ => false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    fn unit() -> BoxSet {
        BoxSet::from(IntervalSet::interval(q(0, 1), q(1, 1)))
    }

    #[test]
    fn packing_of_the_unit_interval() {
        let c = vitali_cover(&unit(), &q(1, 5), &q(1, 10)).unwrap();
        assert!(c.covered > q(9, 10));
        assert!(c.balls.iter().all(|b| b.len() < q(1, 5)));
        let s = IntervalSet::from_intervals(c.balls.clone());
        assert_eq!(s.components(), c.balls.len());
        assert!(c.balls[0].lo > Scalar::zero() && c.balls.last().unwrap().hi < Scalar::one());
    }

    #[test]
    fn empty_and_short_targets() {
        let c = vitali_cover(&BoxSet::from(IntervalSet::empty()), &q(1, 5), &q(1, 10)).unwrap();
        assert!(c.balls.is_empty());
        let c = vitali_cover(&BoxSet::from(IntervalSet::interval(q(0, 1), q(1, 10))), &q(1, 5), &q(1, 2)).unwrap();
        assert_eq!(c.balls.len(), 1);
        assert_eq!(c.notes.len(), 1);
    }

    #[test]
    fn affine_maps_need_no_patches() {
        let f = CircleMap::doubling();
        let l = linearize_on(&f, &unit(), &q(1, 5), &q(1, 100), &q(1, 20)).unwrap();
        assert!(l.map.patches().is_empty());
        assert!(l.c1_bound.is_zero());
        assert!(l.ratio > q(4, 5));
        assert!(check_locally_linear(&l.map, &l.v));
    }

    #[test]
    fn surrogate_is_linearized_on_v() {
        let f = CircleMap::doubling_with_sine_surrogate(q(1, 10));
        let l = linearize_on(&f, &unit(), &q(1, 5), &q(1, 100), &q(1, 20)).unwrap();
        assert!(l.ratio > q(4, 5));
        assert!(check_locally_linear(&l.map, &l.v));
        assert!(!check_locally_linear(&PatchedMap::unpatched(f.clone()), &l.v));
        // Affine on an inner zone: second differences vanish.
        let c = &l.v.parts()[3];
        let (a, m, b) = (c.lo.clone(), c.mid(), c.hi.clone());
        assert_eq!(l.map.raw(&m) * scalar::int(2), l.map.raw(&a) + l.map.raw(&b));
        // Unchanged off the balls.
        let gap = (&l.cover.balls[0].hi + &l.cover.balls[1].lo) / scalar::int(2);
        assert_eq!(l.map.raw(&gap), f.raw(&gap));
    }

    #[test]
    fn delta_must_be_below_half_gamma() {
        let f = CircleMap::doubling();
        assert!(linearize_on(&f, &unit(), &q(1, 5), &q(1, 100), &q(1, 10)).is_err());
    }
}
