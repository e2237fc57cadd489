use num::{One, Signed, Zero};

use super::bump::Bump;
use super::circle::CircleMap;
use crate::error::{Error, Result};
use crate::geometry::{Interval, IntervalSet};
use crate::scalar::{self, Scalar};

/// A local modification of the base map supported on a closed interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Patch {
    /// `f + rho((x - p)/r) (f(p) + f'(p)(x - p) - f)`: affine on `|x - p| <= (1 - delta) r`.
    Linearize { center: Scalar, radius: Scalar, delta: Scalar, raw_center: Scalar, slope: Scalar },
    /// `f o h` with `h(x) = c + (1 - (1 - kappa) rho((x - c)/w)) (x - c)`.
    Compress { center: Scalar, half_width: Scalar, kappa: Scalar, delta: Scalar },
}

impl Patch {
    pub fn support(&self) -> Interval {
        let (c, w) = match self {
            Patch::Linearize { center, radius, .. } => (center, radius),
            Patch::Compress { center, half_width, .. } => (center, half_width),
        };
        Interval::new(c - w, c + w)
    }

    pub fn delta(&self) -> &Scalar {
        match self {
            Patch::Linearize { delta, .. } | Patch::Compress { delta, .. } => delta,
        }
    }

    /// The compressor `h` of a compression patch.
    pub fn squeeze(&self, x: &Scalar) -> Scalar {
        match self {
            Patch::Compress { center, half_width, kappa, delta } => {
                let t = x - center;
                let rho = Bump::new(delta.clone()).eval(&(&t / half_width));
                center + (Scalar::one() - (Scalar::one() - kappa) * rho) * t
            }
            Patch::Linearize { .. } => x.clone(),
        }
    }

    fn squeeze_deriv(&self, x: &Scalar) -> Scalar {
        match self {
            Patch::Compress { center, half_width, kappa, delta } => {
                let u = (x - center) / half_width;
                let b = Bump::new(delta.clone());
                Scalar::one() - (Scalar::one() - kappa) * (b.eval(&u) + &u * b.deriv(&u))
            }
            Patch::Linearize { .. } => Scalar::one(),
        }
    }

    /// Certified C1 distance (sup of value gap plus sup of derivative gap)
    /// between the patched and the base map, given `sup |f'|` and `sup |f''|`
    /// of the base on the support.
    pub fn c1_bound(&self, m1: &Scalar, m2: &Scalar) -> Scalar {
        match self {
            Patch::Linearize { radius, delta, .. } => {
                let c0 = m2 * radius * radius / scalar::int(2);
                let c1 = m2 * radius * (Scalar::one() + scalar::q(3, 4) / delta);
                c0 + c1
            }
            Patch::Compress { half_width, kappa, delta, .. } => {
                let k1 = Scalar::one() - kappa;
                let c0 = m1 * &k1 * half_width;
                let c1 = m1 * &k1 * (Scalar::one() + scalar::q(3, 2) / delta) + m2 * &k1 * half_width;
                c0 + c1
            }
        }
    }
}

#[derive(Clone, Debug)]
struct FastPatch {
    lo: f64,
    hi: f64,
    center: f64,
    width: f64,
    a: f64,
    b: f64,
    bump: Bump,
    compress: bool,
}

/// A base map modified on finitely many pairwise disjoint closed intervals,
/// each inside a single branch of the base.
#[derive(Clone, Debug)]
pub struct PatchedMap {
    base: CircleMap,
    patches: Vec<Patch>,
    supports: Vec<Interval>,
    /// Where a patch makes the map affine, `raw(x) = a x + b` on the zone.
    cores: Vec<Option<(Interval, Scalar, Scalar)>>,
    fast: Vec<FastPatch>,
}

impl PartialEq for PatchedMap {
    fn eq(&self, o: &Self) -> bool {
        self.base == o.base && self.patches == o.patches
    }
}

impl PatchedMap {
    pub fn new(base: CircleMap, patches: Vec<Patch>) -> Result<Self> {
        let mut keyed: Vec<(Interval, Patch)> = patches.into_iter().map(|p| (p.support(), p)).collect();
        keyed.sort_by(|a, b| scalar::cmp(&a.0.lo, &b.0.lo));
        let (supports, patches): (Vec<Interval>, Vec<Patch>) = keyed.into_iter().unzip();
        for w in supports.windows(2) {
            if scalar::le(&w[1].lo, &w[0].hi) {
                return Err(Error::input(format!("patch supports {} and {} overlap", w[0], w[1])));
            }
        }
        for (p, s) in patches.iter().zip(&supports) {
            if s.lo < Scalar::zero() || s.hi > Scalar::one() || s.is_degenerate() {
                return Err(Error::input(format!("patch support {s} leaves [0, 1]")));
            }
            let b = &base.branches()[base.branch_index(&s.lo)];
            if s.hi > b.hi {
                return Err(Error::input(format!("patch support {s} crosses a branch break")));
            }
            let d = p.delta();
            if *d <= Scalar::zero() || *d > Scalar::one() {
                return Err(Error::input("patch ramp must lie in (0, 1]"));
            }
            if let Patch::Compress { kappa, .. } = p {
                if *kappa <= Scalar::zero() || *kappa > Scalar::one() {
                    return Err(Error::input("compression factor must lie in (0, 1]"));
                }
            }
        }
        let fast = patches
            .iter()
            .zip(&supports)
            .map(|(p, s)| {
                match p {
                    Patch::Linearize { center, radius, delta, raw_center, slope } => FastPatch {
                        lo: scalar::to_f64(&s.lo),
                        hi: scalar::to_f64(&s.hi),
                        center: scalar::to_f64(center),
                        width: scalar::to_f64(radius),
                        a: scalar::to_f64(raw_center),
                        b: scalar::to_f64(slope),
                        bump: Bump::new(delta.clone()),
                        compress: false,
                    },
                    Patch::Compress { center, half_width, kappa, delta } => FastPatch {
                        lo: scalar::to_f64(&s.lo),
                        hi: scalar::to_f64(&s.hi),
                        center: scalar::to_f64(center),
                        width: scalar::to_f64(half_width),
                        a: 1.0 - scalar::to_f64(kappa),
                        b: 0.0,
                        bump: Bump::new(delta.clone()),
                        compress: true,
                    },
                }
            })
            .collect();
        let cores = patches.iter().zip(&supports).map(|(p, s)| affine_core(&base, p, s)).collect();
        Ok(PatchedMap { base, patches, supports, cores, fast })
    }

    pub fn unpatched(base: CircleMap) -> Self {
        PatchedMap { base, patches: Vec::new(), supports: Vec::new(), cores: Vec::new(), fast: Vec::new() }
    }

    pub fn base(&self) -> &CircleMap {
        &self.base
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn patch_at(&self, x: &Scalar) -> Option<&Patch> {
        let i = self.supports.partition_point(|s| s.hi < *x);
        self.supports.get(i).filter(|s| s.contains(x)).map(|_| &self.patches[i])
    }

    fn raw_with(&self, p: Option<&Patch>, x: &Scalar) -> Scalar {
        match p {
            None => self.base.raw(x),
            Some(Patch::Linearize { center, radius, delta, raw_center, slope }) => {
                let f = self.base_raw_near(x, center);
                let e = raw_center + slope * (x - center) - &f;
                let rho = Bump::new(delta.clone()).eval(&((x - center) / radius));
                f + rho * e
            }
            Some(c @ Patch::Compress { .. }) => self.base.raw(&c.squeeze(x)),
        }
    }

    /// Base raw value on the branch that contains `near`.
    fn base_raw_near(&self, x: &Scalar, near: &Scalar) -> Scalar {
        self.base.branches()[self.base.branch_index(near)].piece.raw(x)
    }

    pub fn raw(&self, x: &Scalar) -> Scalar {
        self.raw_with(self.patch_at(x), x)
    }

    pub fn eval(&self, x: &Scalar) -> Scalar {
        let r = self.raw(x);
        if self.base.reduces() {
            scalar::frac(&r)
        } else {
            r
        }
    }

    pub fn deriv(&self, x: &Scalar) -> Scalar {
        match self.patch_at(x) {
            None => self.base.deriv(x),
            Some(Patch::Linearize { center, radius, delta, raw_center, slope }) => {
                let piece = &self.base.branches()[self.base.branch_index(center)].piece;
                let f = piece.raw(x);
                let df = piece.deriv(x);
                let e = raw_center + slope * (x - center) - &f;
                let u = (x - center) / radius;
                let b = Bump::new(delta.clone());
                &df + b.deriv(&u) / radius * e + b.eval(&u) * (slope - &df)
            }
            Some(c @ Patch::Compress { .. }) => self.base.deriv(&c.squeeze(x)) * c.squeeze_deriv(x),
        }
    }

    fn fast_patch(&self, x: f64) -> Option<&FastPatch> {
        let i = self.fast.partition_point(|p| p.hi < x);
        self.fast.get(i).filter(|p| p.lo <= x && x <= p.hi)
    }

    pub fn raw_f64(&self, x: f64) -> f64 {
        match self.fast_patch(x) {
            None => self.base.raw_f64(x),
            Some(p) if p.compress => {
                let t = x - p.center;
                let h = p.center + (1.0 - p.a * p.bump.eval_f64(t / p.width)) * t;
                self.base.raw_f64(h)
            }
            Some(p) => {
                let f = self.base.raw_f64(x);
                let e = p.a + p.b * (x - p.center) - f;
                f + p.bump.eval_f64((x - p.center) / p.width) * e
            }
        }
    }

    pub fn deriv_f64(&self, x: f64) -> f64 {
        match self.fast_patch(x) {
            None => self.base.deriv_f64(x),
            Some(p) if p.compress => {
                let u = (x - p.center) / p.width;
                let h = p.center + (1.0 - p.a * p.bump.eval_f64(u)) * (x - p.center);
                let dh = 1.0 - p.a * (p.bump.eval_f64(u) + u * p.bump.deriv_f64(u));
                self.base.deriv_f64(h) * dh
            }
            Some(p) => {
                let u = (x - p.center) / p.width;
                let f = self.base.raw_f64(x);
                let df = self.base.deriv_f64(x);
                let e = p.a + p.b * (x - p.center) - f;
                df + p.bump.deriv_f64(u) / p.width * e + p.bump.eval_f64(u) * (p.b - df)
            }
        }
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let r = self.raw_f64(x);
        if self.base.reduces() {
            let v = r - r.floor();
            if v >= 1.0 {
                0.0
            } else {
                v
            }
        } else {
            r.clamp(0.0, 1.0)
        }
    }

    /// Certified C1 distance to the base map.
    pub fn c1_upper(&self) -> Scalar {
        let mut m = Scalar::zero();
        for p in &self.patches {
            let s = p.support();
            let (m1, m2) = self.base_bounds_on(&s);
            let b = p.c1_bound(&m1, &m2);
            if b > m {
                m = b;
            }
        }
        m
    }

    fn base_bounds_on(&self, s: &Interval) -> (Scalar, Scalar) {
        let br = &self.base.branches()[self.base.branch_index(&s.lo)];
        let m1 = match &br.piece {
            super::circle::Piece::Affine { slope, .. } => slope.abs(),
            super::circle::Piece::Poly(p) => p.deriv().sup_abs(&s.lo, &s.hi, 8),
        };
        (m1, self.base.second_derivative_bound(&s.lo, &s.hi))
    }

    /// True when the patched map is certified strictly monotone on the patch support.
    pub fn monotone_on(&self, p: &Patch) -> bool {
        self.patch_min_slope(p).is_positive()
    }

    /// Lower bound for `|g'|` on a patch support, zero when not certified.
    fn patch_min_slope(&self, p: &Patch) -> Scalar {
        let s = p.support();
        let br = &self.base.branches()[self.base.branch_index(&s.lo)];
        let base_min = match &br.piece {
            super::circle::Piece::Affine { slope, .. } => slope.abs(),
            super::circle::Piece::Poly(q) => {
                let (a, b) = q.deriv().range(&s.lo, &s.hi, 8);
                if a.is_positive() {
                    a
                } else if b.is_negative() {
                    b.abs()
                } else {
                    Scalar::zero()
                }
            }
        };
        match p {
            // h' >= kappa, so g' = f'(h) h' keeps the sign of f'.
            Patch::Compress { kappa, .. } => base_min * kappa,
            Patch::Linearize { .. } => {
                let (m1, m2) = self.base_bounds_on(&s);
                let gap = p.c1_bound(&m1, &m2);
                if base_min > gap {
                    base_min - gap
                } else {
                    Scalar::zero()
                }
            }
        }
    }

    /// Image of an interval: exact on pieces where the map is certified
    /// monotone, an enclosure elsewhere.
    pub fn image_interval_into(&self, iv: &Interval, out: &mut Vec<Interval>) {
        let first = self.supports.partition_point(|s| scalar::lt(&s.hi, &iv.lo));
        if let Some(Some((zone, a, b))) = self.cores.get(first) {
            if scalar::le(&zone.lo, &iv.lo) && scalar::le(&iv.hi, &zone.hi) {
                let (u, v) = (scalar::mul_add(a, &iv.lo, b), scalar::mul_add(a, &iv.hi, b));
                let (u, v) = if scalar::le(&u, &v) { (u, v) } else { (v, u) };
                self.base.reduce_interval(u, v, out);
                return;
            }
        }
        let mut cuts: Vec<Scalar> = vec![iv.lo.clone(), iv.hi.clone()];
        for b in self.base.break_points() {
            if scalar::lt(&iv.lo, &b) && scalar::lt(&b, &iv.hi) {
                cuts.push(b);
            }
        }
        let start = self.supports.partition_point(|s| scalar::le(&s.hi, &iv.lo));
        for s in &self.supports[start..] {
            if scalar::le(&iv.hi, &s.lo) {
                break;
            }
            for e in [&s.lo, &s.hi] {
                if scalar::lt(&iv.lo, e) && scalar::lt(e, &iv.hi) {
                    cuts.push(e.clone());
                }
            }
        }
        cuts.sort_by(scalar::cmp);
        cuts.dedup_by(|a, b| scalar::cmp(a, b).is_eq());
        for w in cuts.windows(2) {
            let piece = Interval::new(w[0].clone(), w[1].clone());
            let mid = piece.mid();
            match self.patch_at(&mid) {
                None => self.base.image_interval_into(&piece, out),
                Some(p) => {
                    let a = self.raw_with(Some(p), &piece.lo);
                    let b = self.raw_with(Some(p), &piece.hi);
                    if self.patch_min_slope(p).is_positive() {
                        let (u, v) = if scalar::le(&a, &b) { (a, b) } else { (b, a) };
                        self.base.reduce_interval(u, v, out);
                    } else {
                        let (m1, m2) = self.base_bounds_on(&p.support());
                        let lip = &m1 + p.c1_bound(&m1, &m2);
                        let c = self.raw_with(Some(p), &mid);
                        let r = lip * piece.len() / scalar::int(2);
                        self.base.reduce_interval(&c - &r, &c + &r, out);
                    }
                }
            }
        }
    }

    pub fn image(&self, s: &IntervalSet) -> IntervalSet {
        let mut out = Vec::with_capacity(s.components());
        for p in s.parts() {
            self.image_interval_into(p, &mut out);
        }
        IntervalSet::from_intervals(out)
    }

    pub fn image_n(&self, s: &IntervalSet, n: usize) -> IntervalSet {
        let mut cur = s.clone();
        for _ in 0..n {
            cur = self.image(&cur);
        }
        cur
    }
}

fn affine_core(base: &CircleMap, p: &Patch, s: &Interval) -> Option<(Interval, Scalar, Scalar)> {
    let w = (&s.hi - &s.lo) / scalar::int(2) * (Scalar::one() - p.delta());
    let mid = s.mid();
    let zone = Interval::new(&mid - &w, &mid + &w);
    match p {
        Patch::Linearize { center, raw_center, slope, .. } => Some((zone, slope.clone(), raw_center - slope * center)),
        Patch::Compress { center, kappa, .. } => match &base.branches()[base.branch_index(&s.lo)].piece {
            // f(c + kappa (x - c))
            super::circle::Piece::Affine { slope, offset } => {
                let a = slope * kappa;
                let b = slope * (Scalar::one() - kappa) * center + offset;
                Some((zone, a, b))
            }
            super::circle::Piece::Poly(_) => None,
        },
    }
}

/// Certified C1 distance between `f` and a patched version of it.
pub fn c1_distance_upper(f: &CircleMap, g: &PatchedMap) -> Result<Scalar> {
    if g.base() != f {
        return Err(Error::input("the patched map is not built on this base"));
    }
    Ok(g.c1_upper())
}

/// Grid lower bound for the C1 distance (value gap plus derivative gap) of two
/// patched maps, values compared on the circle.
pub fn c1_distance_lower(f: &PatchedMap, g: &PatchedMap, grid: usize) -> Scalar {
    let mut v0 = Scalar::zero();
    let mut v1 = Scalar::zero();
    let breaks: Vec<Scalar> = f.base().break_points().into_iter().chain(g.base().break_points()).collect();
    for k in 0..grid {
        let x = scalar::q(2 * k as i64 + 1, 2 * grid as i64);
        let mut d = (f.eval(&x) - g.eval(&x)).abs();
        if f.base().reduces() && d > scalar::half() {
            d = Scalar::one() - d;
        }
        if d > v0 {
            v0 = d;
        }
        if breaks.contains(&x) {
            continue;
        }
        let e = (f.deriv(&x) - g.deriv(&x)).abs();
        if e > v1 {
            v1 = e;
        }
    }
    v0 + v1
}
