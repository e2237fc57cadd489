use num::bigint::BigInt;
use num::{One, Signed, Zero};

use super::poly::Poly;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{Interval, IntervalSet};
use crate::scalar::{self, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Piece {
    Affine { slope: Scalar, offset: Scalar },
    Poly(Poly),
}

impl Piece {
    pub fn raw(&self, x: &Scalar) -> Scalar {
        match self {
            Piece::Affine { slope, offset } => scalar::mul_add(slope, x, offset),
            Piece::Poly(p) => p.eval(x),
        }
    }

    pub fn deriv(&self, x: &Scalar) -> Scalar {
        match self {
            Piece::Affine { slope, .. } => slope.clone(),
            Piece::Poly(p) => p.deriv().eval(x),
        }
    }
}

/// One branch: `x -> piece(x)` on `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Branch {
    pub lo: Scalar,
    pub hi: Scalar,
    pub piece: Piece,
}

#[derive(Clone, Debug)]
struct FastBranch {
    lo: f64,
    hi: f64,
    kind: FastPiece,
}

#[derive(Clone, Debug)]
enum FastPiece {
    Affine(f64, f64),
    Poly(Vec<f64>, Vec<f64>),
}

/// Piecewise map of `[0, 1)`, read modulo 1 when `reduce` is set (a circle
/// map) and as a self-map of `[0, 1]` otherwise.
#[derive(Clone, Debug)]
pub struct CircleMap {
    branches: Vec<Branch>,
    reduce: bool,
    fast: Vec<FastBranch>,
}

impl PartialEq for CircleMap {
    fn eq(&self, o: &Self) -> bool {
        self.branches == o.branches && self.reduce == o.reduce
    }
}

/// Where `f^n` is affine: `f^n(x) = slope * x + offset - shift` on `dom`, with
/// the raw value `slope * x + offset` inside `[shift, shift + 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffinePiece {
    pub dom: Interval,
    pub slope: Scalar,
    pub offset: Scalar,
}

impl AffinePiece {
    pub fn raw(&self, x: &Scalar) -> Scalar {
        scalar::mul_add(&self.slope, x, &self.offset)
    }

    pub fn raw_range(&self) -> Interval {
        let a = self.raw(&self.dom.lo);
        let b = self.raw(&self.dom.hi);
        if scalar::le(&a, &b) {
            Interval::new(a, b)
        } else {
            Interval::new(b, a)
        }
    }

    /// `{x in dom : raw(x) in [lo, hi]}`.
    pub fn pull_back(&self, lo: &Scalar, hi: &Scalar) -> Option<Interval> {
        let a = (lo - &self.offset) / &self.slope;
        let b = (hi - &self.offset) / &self.slope;
        let (a, b) = if scalar::le(&a, &b) { (a, b) } else { (b, a) };
        Interval::new(a, b).intersect(&self.dom)
    }
}

impl CircleMap {
    pub fn new(mut branches: Vec<Branch>, reduce: bool) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::input("a map needs at least one branch"));
        }
        branches.sort_by(|a, b| a.lo.cmp(&b.lo));
        if !branches[0].lo.is_zero() || !branches.last().unwrap().hi.is_one() {
            return Err(Error::input("branch domains must cover [0, 1)"));
        }
        for w in branches.windows(2) {
            if w[0].hi != w[1].lo {
                return Err(Error::input(format!(
                    "branch domains must tile [0, 1): gap or overlap at {}",
                    scalar::fmt(&w[0].hi)
                )));
            }
        }
        for b in &branches {
            if b.lo >= b.hi {
                return Err(Error::input("empty branch domain"));
            }
            if let Piece::Affine { slope, .. } = &b.piece {
                if slope.is_zero() {
                    return Err(Error::input("zero slope makes the map singular"));
                }
            }
        }
        let fast = branches
            .iter()
            .map(|b| FastBranch {
                lo: scalar::to_f64(&b.lo),
                hi: scalar::to_f64(&b.hi),
                kind: match &b.piece {
                    Piece::Affine { slope, offset } => FastPiece::Affine(scalar::to_f64(slope), scalar::to_f64(offset)),
                    Piece::Poly(p) => FastPiece::Poly(
                        p.coeffs().iter().map(scalar::to_f64).collect(),
                        p.deriv().coeffs().iter().map(scalar::to_f64).collect(),
                    ),
                },
            })
            .collect();
        let m = CircleMap { branches, reduce, fast };
        if !reduce {
            for b in &m.branches {
                let (lo, hi) = m.raw_range(b);
                if lo < Scalar::zero() || hi > Scalar::one() {
                    return Err(Error::input("interval map leaves [0, 1]"));
                }
            }
        }
        Ok(m)
    }

    /// Piecewise-affine circle map from `(lo, hi, slope, offset)` rows.
    pub fn affine(rows: Vec<(Scalar, Scalar, Scalar, Scalar)>) -> Result<Self> {
        let br = rows
            .into_iter()
            .map(|(lo, hi, slope, offset)| Branch { lo, hi, piece: Piece::Affine { slope, offset } })
            .collect();
        CircleMap::new(br, true)
    }

    /// `x -> m x mod 1`.
    pub fn times(m: i64) -> Self {
        assert!(m != 0);
        let n = m.abs();
        let rows = (0..n)
            .map(|j| {
                let off = if m > 0 { scalar::int(-j) } else { scalar::int(j + 1) };
                (scalar::q(j, n), scalar::q(j + 1, n), scalar::int(m), off)
            })
            .collect();
        CircleMap::affine(rows).expect("valid multiplication map")
    }

    pub fn doubling() -> Self {
        Self::times(2)
    }

    pub fn tripling() -> Self {
        Self::times(3)
    }

    /// `x -> x + alpha mod 1` for `alpha` in `(0, 1)`.
    pub fn rotation(alpha: Scalar) -> Result<Self> {
        if alpha <= Scalar::zero() || alpha >= Scalar::one() {
            return Err(Error::input("rotation number must lie in (0, 1)"));
        }
        let cut = Scalar::one() - &alpha;
        CircleMap::affine(vec![
            (scalar::zero(), cut.clone(), scalar::one(), alpha.clone()),
            (cut, scalar::one(), scalar::one(), &alpha - Scalar::one()),
        ])
    }

    /// `x -> x / 2` on `[0, 1]`.
    pub fn halving() -> Self {
        CircleMap::new(
            vec![Branch {
                lo: scalar::zero(),
                hi: scalar::one(),
                piece: Piece::Affine { slope: scalar::half(), offset: scalar::zero() },
            }],
            false,
        )
        .expect("valid contraction")
    }

    pub fn identity() -> Self {
        CircleMap::affine(vec![(scalar::zero(), scalar::one(), scalar::one(), scalar::zero())]).expect("identity")
    }

    /// `x -> 2x + eps s(x) mod 1` with `s` the C1 piecewise-quadratic
    /// sine surrogate: `16 x (1/2 - x)` on `[0, 1/2)`, `-16 (x - 1/2)(1 - x)` on `[1/2, 1)`.
    pub fn doubling_with_sine_surrogate(eps: Scalar) -> Self {
        let e16 = &eps * scalar::int(16);
        // 2x + 16 eps x (1/2 - x) = (2 + 8 eps) x - 16 eps x^2
        let left = Poly::new(vec![scalar::zero(), scalar::int(2) + &eps * scalar::int(8), -e16.clone()]);
        // 2x - 16 eps (x - 1/2)(1 - x) = 8 eps + (2 - 24 eps) x + 16 eps x^2
        let right = Poly::new(vec![&eps * scalar::int(8), scalar::int(2) - &eps * scalar::int(24), e16]);
        CircleMap::new(
            vec![
                Branch { lo: scalar::zero(), hi: scalar::half(), piece: Piece::Poly(left) },
                Branch { lo: scalar::half(), hi: scalar::one(), piece: Piece::Poly(right) },
            ],
            true,
        )
        .expect("valid surrogate")
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn reduces(&self) -> bool {
        self.reduce
    }

    pub fn is_affine(&self) -> bool {
        self.branches.iter().all(|b| matches!(b.piece, Piece::Affine { .. }))
    }

    pub fn require_exact(&self) -> Result<()> {
        if self.is_affine() {
            Ok(())
        } else {
            Err(Error::ExactModeUnavailable("exact preimages need affine branches".into()))
        }
    }

    pub fn break_points(&self) -> Vec<Scalar> {
        self.branches.iter().skip(1).map(|b| b.lo.clone()).collect()
    }

    pub fn branch_index(&self, x: &Scalar) -> usize {
        let i = self.branches.partition_point(|b| scalar::le(&b.hi, x));
        i.min(self.branches.len() - 1)
    }

    fn raw_range(&self, b: &Branch) -> (Scalar, Scalar) {
        match &b.piece {
            Piece::Affine { .. } => {
                let u = b.piece.raw(&b.lo);
                let v = b.piece.raw(&b.hi);
                if u <= v {
                    (u, v)
                } else {
                    (v, u)
                }
            }
            Piece::Poly(p) => p.range(&b.lo, &b.hi, 64),
        }
    }

    /// Unreduced value on the branch containing `x`.
    pub fn raw(&self, x: &Scalar) -> Scalar {
        self.branches[self.branch_index(x)].piece.raw(x)
    }

    pub fn eval(&self, x: &Scalar) -> Scalar {
        let r = self.raw(x);
        if self.reduce {
            scalar::frac(&r)
        } else {
            r
        }
    }

    pub fn deriv(&self, x: &Scalar) -> Scalar {
        self.branches[self.branch_index(x)].piece.deriv(x)
    }

    fn fast_index(&self, x: f64) -> usize {
        let i = self.fast.partition_point(|b| b.hi <= x);
        i.min(self.fast.len() - 1)
    }

    pub fn raw_f64(&self, x: f64) -> f64 {
        let b = &self.fast[self.fast_index(x)];
        match &b.kind {
            FastPiece::Affine(s, o) => s * x + o,
            FastPiece::Poly(c, _) => c.iter().rev().fold(0.0, |v, a| v * x + a),
        }
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let r = self.raw_f64(x);
        if self.reduce {
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

    pub fn deriv_f64(&self, x: f64) -> f64 {
        let b = &self.fast[self.fast_index(x)];
        match &b.kind {
            FastPiece::Affine(s, _) => *s,
            FastPiece::Poly(_, d) => d.iter().rev().fold(0.0, |v, a| v * x + a),
        }
    }

    pub fn branch_domain_f64(&self, x: f64) -> (f64, f64) {
        let b = &self.fast[self.fast_index(x)];
        (b.lo, b.hi)
    }

    /// Certified bounds `(min |f'|, max |f'|)` over the whole domain.
    pub fn derivative_bounds(&self) -> (Scalar, Scalar) {
        let mut lo: Option<Scalar> = None;
        let mut hi = Scalar::zero();
        for b in &self.branches {
            let (u, v) = match &b.piece {
                Piece::Affine { slope, .. } => (slope.abs(), slope.abs()),
                Piece::Poly(p) => {
                    let (a, c) = p.deriv().range(&b.lo, &b.hi, 64);
                    if a.is_positive() {
                        (a, c)
                    } else if c.is_negative() {
                        (c.abs(), a.abs())
                    } else {
                        (Scalar::zero(), scalar::max(&a.abs(), &c.abs()).clone())
                    }
                }
            };
            lo = Some(match lo {
                None => u,
                Some(l) => scalar::min(&l, &u).clone(),
            });
            if v > hi {
                hi = v;
            }
        }
        (lo.unwrap(), hi)
    }

    /// Certified `sup |f''|` over `[a, b]`.
    pub fn second_derivative_bound(&self, a: &Scalar, b: &Scalar) -> Scalar {
        let mut m = Scalar::zero();
        for br in &self.branches {
            let lo = scalar::max(a, &br.lo);
            let hi = scalar::min(b, &br.hi);
            if scalar::lt(hi, lo) {
                continue;
            }
            if let Piece::Poly(p) = &br.piece {
                let v = p.deriv().deriv().sup_abs(lo, hi, 8);
                if v > m {
                    m = v;
                }
            }
        }
        m
    }

    pub fn is_expanding(&self) -> bool {
        self.derivative_bounds().0 > Scalar::one()
    }

    /// `c` with `m(f^{-1} E) <= c m(E)` for every measurable `E`.
    pub fn preimage_factor(&self) -> Scalar {
        let mut c = Scalar::zero();
        for b in &self.branches {
            let m = match &b.piece {
                Piece::Affine { slope, .. } => slope.abs(),
                Piece::Poly(p) => {
                    let (a, v) = p.deriv().range(&b.lo, &b.hi, 64);
                    if a.is_positive() {
                        a
                    } else if v.is_negative() {
                        v.abs()
                    } else {
                        return Scalar::from_integer(BigInt::from(u32::MAX));
                    }
                }
            };
            c += Scalar::one() / m;
        }
        c
    }

    pub fn is_continuous_on_circle(&self) -> bool {
        if !self.reduce {
            return false;
        }
        let n = self.branches.len();
        (0..n).all(|i| {
            let a = &self.branches[i];
            let b = &self.branches[(i + 1) % n];
            let left = scalar::frac(&a.piece.raw(&a.hi));
            let right = scalar::frac(&b.piece.raw(&b.lo));
            left == right
        })
    }

    /// Whether Lebesgue measure is invariant: every cell between consecutive
    /// branch-image endpoints has a preimage of the same measure.
    pub fn preserves_lebesgue(&self) -> bool {
        if !self.is_affine() {
            return false;
        }
        let mut cuts = vec![Scalar::zero(), Scalar::one()];
        for b in &self.branches {
            let (u, v) = self.raw_range(b);
            for e in [u, v] {
                let r = if self.reduce { scalar::frac(&e) } else { e };
                cuts.push(r);
            }
        }
        cuts.sort();
        cuts.dedup();
        cuts.windows(2).all(|w| {
            let cell = IntervalSet::interval(w[0].clone(), w[1].clone());
            self.preimage(&cell).map(|p| p.measure() == cell.measure()).unwrap_or(false)
        })
    }

    /// The identity on `dom`, one piece per component.
    pub fn identity_pieces(&self, dom: &IntervalSet) -> Vec<AffinePiece> {
        dom.parts()
            .iter()
            .map(|p| AffinePiece { dom: p.clone(), slope: Scalar::one(), offset: Scalar::zero() })
            .collect()
    }

    /// Pushes the pieces of `f^n` one step forward to the pieces of `f^{n+1}`.
    pub fn step_pieces(&self, pieces: &[AffinePiece], cap: usize) -> Result<Vec<AffinePiece>> {
        self.require_exact()?;
        let affine: Vec<(&Scalar, &Scalar)> = self
            .branches
            .iter()
            .map(|b| match &b.piece {
                Piece::Affine { slope, offset } => (slope, offset),
                Piece::Poly(_) => unreachable!(),
            })
            .collect();
        let mut out = Vec::with_capacity(pieces.len() * self.branches.len());
        for pc in pieces {
            let r = pc.raw_range();
            let inv = pc.slope.recip();
            let neg_offset = -&pc.offset;
            let rising = pc.slope.is_positive();
            // Domain endpoints, matched to the raw range endpoints.
            let (at_lo, at_hi) = if rising { (&pc.dom.lo, &pc.dom.hi) } else { (&pc.dom.hi, &pc.dom.lo) };
            let (j0, j1) = self.shift_range(&r);
            let mut j = j0;
            while j <= j1 {
                let shifted = scalar::sub_int(&pc.offset, &j);
                for (b, &(slope, offset)) in self.branches.iter().zip(&affine) {
                    let (lo, hi) = (scalar::sub_int(&b.lo, &-&j), scalar::sub_int(&b.hi, &-&j));
                    let lo_cut = scalar::lt(&r.lo, &lo);
                    let hi_cut = scalar::lt(&hi, &r.hi);
                    let (lo, hi) = (if lo_cut { &lo } else { &r.lo }, if hi_cut { &hi } else { &r.hi });
                    if scalar::le(hi, lo) {
                        continue;
                    }
                    let x_lo = if lo_cut { scalar::shift_scale(lo, &neg_offset, &inv) } else { at_lo.clone() };
                    let x_hi = if hi_cut { scalar::shift_scale(hi, &neg_offset, &inv) } else { at_hi.clone() };
                    let dom = if rising { Interval::new(x_lo, x_hi) } else { Interval::new(x_hi, x_lo) };
                    out.push(AffinePiece {
                        dom,
                        slope: slope * &pc.slope,
                        offset: scalar::mul_add(slope, &shifted, offset),
                    });
                }
                j += 1;
            }
            if out.len() > cap {
                return Err(Error::cap("affine pieces of an iterate", cap));
            }
        }
        Ok(out)
    }

    fn shift_range(&self, r: &Interval) -> (BigInt, BigInt) {
        if !self.reduce {
            return (BigInt::zero(), BigInt::zero());
        }
        let j0 = scalar::floor(&r.lo);
        let mut j1 = scalar::floor(&r.hi);
        if r.hi.is_integer() && j1 > j0 {
            j1 -= 1;
        }
        (j0, j1)
    }

    /// `{x in dom(piece) : f^n(x) in target}` over all pieces of `f^n`.
    pub fn pull_back_pieces(&self, pieces: &[AffinePiece], target: &IntervalSet) -> IntervalSet {
        let parts = target.parts();
        let mut out = Vec::new();
        for pc in pieces {
            let r = pc.raw_range();
            let inv = pc.slope.recip();
            let (j0, j1) = self.shift_range(&r);
            let mut j = j0;
            while j <= j1 {
                // x = (y + j - offset) / slope for y in the window r - j.
                let shift = scalar::sub_int(&-&pc.offset, &-&j);
                let (lo, hi) = (scalar::sub_int(&r.lo, &j), scalar::sub_int(&r.hi, &j));
                let start = parts.partition_point(|p| scalar::le(&p.hi, &lo));
                for p in &parts[start..] {
                    if scalar::le(&hi, &p.lo) {
                        break;
                    }
                    let a = scalar::shift_scale(&p.lo, &shift, &inv);
                    let b = scalar::shift_scale(&p.hi, &shift, &inv);
                    let (a, b) = if scalar::le(&a, &b) { (a, b) } else { (b, a) };
                    // Parts inside the window pull back inside the domain.
                    if scalar::le(&lo, &p.lo) && scalar::le(&p.hi, &hi) {
                        out.push(Interval::new(a, b));
                    } else if let Some(d) = Interval::new(a, b).intersect(&pc.dom) {
                        out.push(d);
                    }
                }
                j += 1;
            }
        }
        IntervalSet::from_intervals(out)
    }

    /// Restricts pieces to `keep`, splitting domains where needed.
    pub fn restrict_pieces(pieces: &[AffinePiece], keep: &IntervalSet) -> Vec<AffinePiece> {
        let mut out = Vec::with_capacity(pieces.len());
        for pc in pieces {
            for d in keep.intersect_interval(&pc.dom).into_parts() {
                out.push(AffinePiece { dom: d, slope: pc.slope.clone(), offset: pc.offset.clone() });
            }
        }
        out
    }

    /// Affine pieces of `f^n` on `dom`.
    pub fn iterate_pieces(&self, dom: &IntervalSet, n: usize, cap: usize) -> Result<Vec<AffinePiece>> {
        self.require_exact()?;
        let mut p = self.identity_pieces(dom);
        for _ in 0..n {
            p = self.step_pieces(&p, cap)?;
        }
        Ok(p)
    }

    /// Exact preimage `f^{-1}(s)`.
    pub fn preimage(&self, s: &IntervalSet) -> Result<IntervalSet> {
        self.require_exact()?;
        // One block per (branch, lift); blocks are ordered along [0, 1], and
        // within a block the pulled-back parts are monotone in the source order.
        let mut blocks = Vec::new();
        for b in &self.branches {
            let Piece::Affine { slope, offset } = &b.piece else { unreachable!() };
            let piece = AffinePiece { dom: Interval::new(b.lo.clone(), b.hi.clone()), slope: slope.clone(), offset: offset.clone() };
            let r = piece.raw_range();
            let (j0, j1) = self.shift_range(&r);
            let inv = slope.recip();
            let first = blocks.len();
            let mut j = j0;
            while j <= j1 {
                let js = Scalar::from_integer(j.clone());
                let window = Interval::new(&r.lo - &js, &r.hi - &js);
                let shift = &js - offset;
                blocks.push((window, shift, inv.clone()));
                j += 1;
            }
            if inv.is_negative() {
                blocks[first..].reverse();
            }
        }
        let chunks = Exec::default().map(&blocks, |(window, shift, inv)| {
            let start = s.parts().partition_point(|p| scalar::le(&p.hi, &window.lo));
            let mut v = Vec::new();
            for p in &s.parts()[start..] {
                if scalar::le(&window.hi, &p.lo) {
                    break;
                }
                let lo = scalar::max(&p.lo, &window.lo);
                let hi = scalar::min(&p.hi, &window.hi);
                if scalar::le(hi, lo) {
                    continue;
                }
                let a = scalar::shift_scale(lo, shift, inv);
                let b = scalar::shift_scale(hi, shift, inv);
                v.push(if scalar::le(&a, &b) { Interval::new(a, b) } else { Interval::new(b, a) });
            }
            if inv.is_negative() {
                v.reverse();
            }
            v
        });
        let out: Vec<Interval> = chunks.into_iter().flatten().collect();
        debug_assert!(out.windows(2).all(|w| scalar::le(&w[0].lo, &w[1].lo)));
        Ok(IntervalSet::from_sorted(out))
    }

    pub fn preimage_n(&self, s: &IntervalSet, n: usize, cap: usize) -> Result<IntervalSet> {
        let mut cur = s.clone();
        for _ in 0..n {
            cur = self.preimage(&cur)?;
            cur.check_cap("iterated preimage", cap)?;
        }
        Ok(cur)
    }

    /// Reduces a raw image interval to `[0, 1]`.
    pub(crate) fn reduce_interval(&self, lo: Scalar, hi: Scalar, out: &mut Vec<Interval>) {
        if !self.reduce {
            out.push(Interval::new(lo, hi));
            return;
        }
        let (j0, j1) = self.shift_range(&Interval::new(lo.clone(), hi.clone()));
        let mut j = j0;
        while j <= j1 {
            let js = Scalar::from_integer(j.clone());
            let a = if scalar::lt(&lo, &js) { Scalar::zero() } else { scalar::sub_int(&lo, &j) };
            let b = if scalar::lt(&(&js + Scalar::one()), &hi) { Scalar::one() } else { scalar::sub_int(&hi, &j) };
            if scalar::lt(&a, &b) {
                out.push(Interval::new(a, b));
            }
            j += 1;
        }
    }

    /// Image of `s`: exact for affine and certified-monotone branches,
    /// otherwise an enclosure from interval evaluation.
    pub fn image(&self, s: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        for p in s.parts() {
            self.image_interval_into(p, &mut out);
        }
        IntervalSet::from_intervals(out)
    }

    pub(crate) fn image_interval_into(&self, p: &Interval, out: &mut Vec<Interval>) {
        let start = self.branches.partition_point(|b| scalar::le(&b.hi, &p.lo));
        for b in &self.branches[start..] {
            if scalar::le(&p.hi, &b.lo) {
                break;
            }
            let lo = scalar::max(&p.lo, &b.lo);
            let hi = scalar::min(&p.hi, &b.hi);
            if scalar::le(hi, lo) {
                continue;
            }
            let (u, v) = match &b.piece {
                Piece::Affine { .. } => (b.piece.raw(lo), b.piece.raw(hi)),
                Piece::Poly(poly) => {
                    let (dl, dh) = poly.deriv().range(lo, hi, 16);
                    if dl.is_positive() || dh.is_negative() {
                        (poly.eval(lo), poly.eval(hi))
                    } else {
                        poly.range(lo, hi, 16)
                    }
                }
            };
            let (u, v) = if scalar::le(&u, &v) { (u, v) } else { (v, u) };
            self.reduce_interval(u, v, out);
        }
    }

    pub fn image_n(&self, s: &IntervalSet, n: usize) -> IntervalSet {
        let mut cur = s.clone();
        for _ in 0..n {
            cur = self.image(&cur);
        }
        cur
    }

    /// All points of period dividing some `p <= period_max`, sorted.
    pub fn periodic_points(&self, period_max: usize, cap: usize) -> Result<Vec<Scalar>> {
        self.require_exact()?;
        let mut pts: Vec<Scalar> = Vec::new();
        let mut pieces = self.identity_pieces(&IntervalSet::unit());
        for p in 1..=period_max {
            pieces = self.step_pieces(&pieces, cap)?;
            for pc in &pieces {
                let r = pc.raw_range();
                let (j0, j1) = if self.reduce {
                    (scalar::floor(&r.lo), scalar::floor(&r.hi))
                } else {
                    (BigInt::zero(), BigInt::zero())
                };
                let a1 = &pc.slope - Scalar::one();
                let mut j = j0;
                while j <= j1 {
                    let js = Scalar::from_integer(j.clone());
                    // slope x + offset - j = x
                    if a1.is_zero() {
                        if (&pc.offset - &js).is_zero() {
                            return Err(Error::pre(format!(
                                "a continuum of points of period {p} on {}",
                                pc.dom
                            )));
                        }
                    } else {
                        let x = (&js - &pc.offset) / &a1;
                        if pc.dom.contains(&x) && x < Scalar::one() {
                            pts.push(x);
                        }
                    }
                    j += 1;
                }
            }
        }
        pts.sort();
        pts.dedup();
        Ok(pts)
    }

    pub fn min_abs_slope_f64(&self) -> f64 {
        scalar::to_f64(&self.derivative_bounds().0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    fn set(v: &[(i64, i64, i64, i64)]) -> IntervalSet {
        IntervalSet::from_intervals(v.iter().map(|&(a, b, c, d)| Interval::new(q(a, b), q(c, d))).collect())
    }

    #[test]
    fn doubling_preimage_of_half() {
        let f = CircleMap::doubling();
        let pre = f.preimage(&set(&[(0, 1, 1, 2)])).unwrap();
        assert_eq!(pre, set(&[(0, 1, 1, 4), (1, 2, 3, 4)]));
    }

    #[test]
    fn doubling_image_of_quarter() {
        let f = CircleMap::doubling();
        assert_eq!(f.image(&set(&[(0, 1, 1, 4)])), set(&[(0, 1, 1, 2)]));
        assert_eq!(f.image(&set(&[(1, 4, 3, 4)])), IntervalSet::unit());
    }

    #[test]
    fn periodic_points_doubling_and_tripling() {
        let f = CircleMap::doubling();
        assert_eq!(f.periodic_points(2, 1000).unwrap(), vec![q(0, 1), q(1, 3), q(2, 3)]);
        let g = CircleMap::tripling();
        assert_eq!(g.periodic_points(1, 1000).unwrap(), vec![q(0, 1), q(1, 2)]);
    }

    #[test]
    fn rotation_has_no_short_periods() {
        let f = CircleMap::rotation(q(13, 34)).unwrap();
        assert!(f.periodic_points(20, 10_000).unwrap().is_empty());
        assert!(f.periodic_points(34, 10_000).map(|_| ()).unwrap_err().to_string().contains("continuum"));
    }

    #[test]
    fn identity_rejected_for_periodic_points() {
        assert!(CircleMap::identity().periodic_points(1, 100).is_err());
    }

    #[test]
    fn surrogate_is_c1_circle_map() {
        let f = CircleMap::doubling_with_sine_surrogate(q(1, 20));
        assert!(f.is_continuous_on_circle());
        assert_eq!(f.deriv(&q(0, 1)), f.branches()[1].piece.deriv(&q(1, 1)));
        assert_eq!(f.branches()[0].piece.deriv(&q(1, 2)), f.branches()[1].piece.deriv(&q(1, 2)));
        assert!(f.is_expanding());
        assert!(f.preimage(&IntervalSet::unit()).is_err());
    }

    #[test]
    fn lebesgue_invariance() {
        assert!(CircleMap::doubling().preserves_lebesgue());
        assert!(CircleMap::rotation(q(2, 7)).unwrap().preserves_lebesgue());
        assert!(!CircleMap::halving().preserves_lebesgue());
        let skew = CircleMap::affine(vec![(q(0, 1), q(1, 3), q(3, 1), q(0, 1)), (q(1, 3), q(1, 1), q(3, 2), q(-1, 2))]).unwrap();
        assert!(skew.preserves_lebesgue());
    }

    #[test]
    fn halving_is_an_interval_map() {
        let f = CircleMap::halving();
        assert_eq!(f.image(&IntervalSet::unit()), set(&[(0, 1, 1, 2)]));
        assert!(!f.is_expanding());
    }

    #[test]
    fn iterate_pieces_match_eval() {
        let f = CircleMap::tripling();
        let pcs = f.iterate_pieces(&IntervalSet::unit(), 3, 1000).unwrap();
        assert_eq!(pcs.len(), 27);
        for pc in &pcs {
            let x = pc.dom.mid();
            let mut y = x.clone();
            for _ in 0..3 {
                y = f.eval(&y);
            }
            assert_eq!(scalar::frac(&pc.raw(&x)), y);
        }
    }
}
