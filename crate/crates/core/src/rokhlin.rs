//! Good sets, hat sets, merging, and Rokhlin towers for exact circle maps.
//!
//! A set `A` is N-good when `A` and `f^{-i} A` are interior-disjoint for
//! `1 <= i < N`. Its hat truncated at depth `T` is `A u f^{-1}A u ... u f^{-T}A`.

use num::{One, Zero};
use serde_json::{json, Value};

use crate::exec::Exec;
use crate::error::{Error, Result};
use crate::geometry::{Interval, IntervalSet};
use crate::maps::CircleMap;
use crate::scalar::{self, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoodCheck {
    pub good: bool,
    /// `(i, x)` with `x` in `A` and `f^i x` in `A`.
    pub witness: Option<(usize, Scalar)>,
}

pub fn is_n_good(f: &CircleMap, a: &IntervalSet, n: usize, cap: usize) -> Result<GoodCheck> {
    f.require_exact()?;
    if n == 0 {
        return Err(Error::input("goodness order must be at least 1"));
    }
    let mut pieces = f.identity_pieces(a);
    for i in 1..n {
        pieces = f.step_pieces(&pieces, cap)?;
        let hit = f.pull_back_pieces(&pieces, a);
        if let Some(p) = hit.parts().first() {
            return Ok(GoodCheck { good: false, witness: Some((i, p.mid())) });
        }
    }
    Ok(GoodCheck { good: true, witness: None })
}

/// Truncated hat with a bound on the measure it misses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HatSet {
    pub set: IntervalSet,
    pub depth: usize,
    /// Upper bound for the measure of the full hat outside `set`.
    pub tail: Scalar,
}

pub fn hat(f: &CircleMap, a: &IntervalSet, depth: usize, cap: usize) -> Result<HatSet> {
    f.require_exact()?;
    // hat_T = A u f^{-1}(hat_{T-1})
    let mut h = a.clone();
    for _ in 0..depth {
        h = a.union(&f.preimage(&h)?);
        h.check_cap("hat set", cap)?;
    }
    // Preimages of an invariant map have the same measure.
    let c = if f.preserves_lebesgue() { Scalar::one() } else { f.preimage_factor() };
    let tail = if c < Scalar::one() {
        scalar::pow(&c, depth as u32 + 1) / (Scalar::one() - &c) * a.measure()
    } else {
        Scalar::one() - h.measure()
    };
    Ok(HatSet { set: h, depth, tail })
}

/// `region` intersected with the depth-`depth` hat of `a`, computed by
/// pushing `region` forward instead of pulling `a` back.
pub fn hat_within(f: &CircleMap, a: &IntervalSet, depth: usize, region: &IntervalSet, cap: usize) -> Result<IntervalSet> {
    f.require_exact()?;
    let mut covered = region.intersect(a);
    let mut rest = region.subtract(&covered);
    let mut pieces = CircleMap::restrict_pieces(&f.identity_pieces(region), &rest);
    for _ in 0..depth {
        if rest.is_empty() {
            break;
        }
        pieces = f.step_pieces(&pieces, cap)?;
        let hit = f.pull_back_pieces(&pieces, a);
        if !hit.is_empty() {
            covered = covered.union(&hit);
            rest = rest.subtract(&hit);
            pieces = CircleMap::restrict_pieces(&pieces, &rest);
        }
    }
    Ok(covered)
}

#[derive(Clone, Debug)]
pub struct Merge {
    pub set: IntervalSet,
    /// Hat depth used while building the merge.
    pub inner_depth: usize,
    /// Exact measure of `(A u B)` outside the depth-`depth` hat of the result.
    pub uncovered: Scalar,
}

/// Merges two N-good sets into an N-good `C` whose depth-`depth` hat contains
/// `A u B`. Inner hats are truncated at `depth / 2`, which must be at least
/// `n - 1`.
pub fn merge_good(f: &CircleMap, a: &IntervalSet, b: &IntervalSet, n: usize, depth: usize, cap: usize) -> Result<Merge> {
    let h = depth / 2;
    if h + 1 < n {
        return Err(Error::pre(format!("depth {depth} too small to merge {n}-good sets (need depth >= {})", 2 * (n - 1))));
    }
    for (name, s) in [("A", a), ("B", b)] {
        let g = is_n_good(f, s, n, cap)?;
        if !g.good {
            let (i, x) = g.witness.unwrap();
            return Err(Error::pre(format!("{name} is not {n}-good: x = {} returns at step {i}", scalar::fmt(&x))));
        }
    }
    let a1 = a.subtract(&hat(f, b, h, cap)?.set);
    let b1 = b.subtract(&hat(f, &a1, h, cap)?.set);
    let c = a1.union(&b1);
    let ab = a.union(b);
    let inside = hat_within(f, &c, depth, &ab, cap)?;
    let uncovered = ab.subtract(&inside).measure();
    Ok(Merge { set: c, inner_depth: h, uncovered })
}

#[derive(Clone, Debug)]
pub struct Cover {
    /// Small N-good intervals `A_k`.
    pub seeds: Vec<IntervalSet>,
    /// `B_k = f^{-N}(A_k)`, N-good and N-saturated.
    pub sets: Vec<IntervalSet>,
    /// Radius of the neighbourhoods removed around short periodic orbits.
    pub radius: Scalar,
    /// `m(u B_k)`.
    pub measure: Scalar,
}

fn circle_ball(c: &Scalar, r: &Scalar) -> IntervalSet {
    let lo = c - r;
    let hi = c + r;
    let mut v = vec![Interval::new(scalar::max(&lo, &Scalar::zero()).clone(), scalar::min(&hi, &Scalar::one()).clone())];
    if lo < Scalar::zero() {
        v.push(Interval::new(Scalar::one() + &lo, Scalar::one()));
    }
    if hi > Scalar::one() {
        v.push(Interval::new(Scalar::zero(), hi - Scalar::one()));
    }
    IntervalSet::from_intervals(v)
}

/// Finite family of N-good, N-saturated sets whose union has measure above
/// `1 - tol`.
pub fn cover_good_saturated(f: &CircleMap, n: usize, tol: &Scalar, cap: usize) -> Result<Cover> {
    f.require_exact()?;
    if !f.is_expanding() {
        return Err(Error::pre("covering by good saturated sets needs an expanding map"));
    }
    if *tol <= Scalar::zero() || *tol >= Scalar::one() {
        return Err(Error::input("tolerance must lie in (0, 1)"));
    }
    if n <= 1 {
        let u = IntervalSet::unit();
        return Ok(Cover { seeds: vec![u.clone()], sets: vec![u], radius: Scalar::zero(), measure: Scalar::one() });
    }
    let periodic = f.periodic_points(n - 1, cap)?;
    // Preimages of an invariant map have the same measure.
    let c = if f.preserves_lebesgue() { Scalar::one() } else { f.preimage_factor() };
    let growth = if c > Scalar::one() { scalar::pow(&c, n as u32) } else { Scalar::one() };
    let count = scalar::int(periodic.len().max(1) as i64);
    let mut radius = tol / (scalar::int(8) * &count * &growth);
    for _ in 0..8 {
        let mut excluded = IntervalSet::empty();
        for p in &periodic {
            excluded = excluded.union(&circle_ball(p, &radius));
        }
        let free = excluded.complement_unit();
        let mut seeds = Vec::new();
        let mut stack: Vec<Interval> = free.parts().to_vec();
        let min_len = &radius / scalar::int(1 << 12);
        while let Some(iv) = stack.pop() {
            let s = IntervalSet::from_intervals(vec![iv.clone()]);
            if is_n_good(f, &s, n, cap)?.good {
                seeds.push(s);
                continue;
            }
            if iv.len() < min_len {
                return Err(Error::pre(format!("could not split {iv} into {n}-good pieces")));
            }
            let m = iv.mid();
            stack.push(Interval::new(m.clone(), iv.hi.clone()));
            stack.push(Interval::new(iv.lo, m));
            if seeds.len() + stack.len() > cap {
                return Err(Error::cap("good cover pieces", cap));
            }
        }
        let measure = f.preimage_n(&free, n, cap)?.measure();
        if measure > Scalar::one() - tol {
            seeds.sort_by(|a, b| a.parts()[0].lo.cmp(&b.parts()[0].lo));
            let sets = seeds.iter().map(|s| f.preimage_n(s, n, cap)).collect::<Result<Vec<_>>>()?;
            return Ok(Cover { seeds, sets, radius, measure });
        }
        radius /= scalar::int(4);
    }
    Err(Error::verify("cover measure stays below 1 - tol"))
}

#[derive(Clone, Debug)]
pub struct WSet {
    pub w: IntervalSet,
    /// `W = f^{-N}(seed)`.
    pub seed: IntervalSet,
    pub merged: usize,
    pub hat_measure: Scalar,
    pub depth: usize,
}

/// One N-good, N-saturated set whose truncated hat exceeds `1 - eps`.
///
/// Merging commutes with `f^{-N}`, so the cover seeds are merged first and the
/// result is pulled back once.
pub fn build_w(f: &CircleMap, n: usize, eps: &Scalar, depth: usize, cap: usize) -> Result<WSet> {
    let cover = cover_good_saturated(f, n, &(eps / scalar::int(2)), cap)?;
    let target = Scalar::one() - eps;
    let invariant = f.preserves_lebesgue();
    // Largest seeds first; seeds already inside the current hat are skipped.
    let mut seeds = cover.seeds.clone();
    seeds.sort_by_cached_key(|s| std::cmp::Reverse(s.measure()));
    let mut c = seeds[0].clone();
    let mut merged = 1;
    let mut next = 1;
    loop {
        let hat_seed = hat(f, &c, depth, cap)?;
        let hm = if invariant { hat_seed.set.measure() } else { f.preimage_n(&hat_seed.set, n, cap)?.measure() };
        if hm > target {
            let w = f.preimage_n(&c, n, cap)?;
            return Ok(WSet { w, seed: c, merged, hat_measure: hm, depth });
        }
        while next < seeds.len() && hat_seed.set.covers(&seeds[next]) {
            next += 1;
        }
        if next == seeds.len() {
            return Err(Error::verify(format!(
                "hat of the merged set reaches only {} at depth {depth} (needs > {})",
                scalar::to_f64(&hm),
                scalar::to_f64(&target)
            )));
        }
        c = merge_good(f, &c, &seeds[next], n, 2 * depth.max(n), cap)?.set;
        merged += 1;
        next += 1;
    }
}

#[derive(Clone, Debug)]
pub struct VSet {
    pub v: IntervalSet,
    /// `V = f^shift(W)`.
    pub shift: usize,
    pub hat_depth: usize,
    pub hat_measure: Scalar,
}

/// N-good set of measure below `eps` whose truncated hat exceeds `1 - eps`
/// up to the reported tail. Needs `N > 1/eps`.
pub fn build_v(f: &CircleMap, n: usize, eps: &Scalar, depth: usize, cap: usize) -> Result<VSet> {
    if scalar::int(n as i64) * eps <= Scalar::one() {
        return Err(Error::pre(format!("need N > 1/eps, got N = {n}, eps = {}", scalar::fmt(eps))));
    }
    let w = build_w(f, n, eps, depth, cap)?;
    let bound = Scalar::one() / scalar::int(n as i64);
    let mut cur = w.w.clone();
    for i in 0..n {
        if cur.measure() <= bound {
            let h = hat(f, &cur, depth + i, cap)?;
            return Ok(VSet { v: cur, shift: i, hat_depth: depth + i, hat_measure: h.set.measure() });
        }
        cur = f.image(&cur);
    }
    Err(Error::verify("no forward image of W has measure at most 1/N"))
}

/// How the tower base `V` is obtained.
#[derive(Clone, Debug)]
pub enum BaseChoice {
    Given(IntervalSet),
    /// Single arcs of dyadic lengths, placed far from short periodic orbits;
    /// the one with the largest tower wins.
    Search,
    /// Through the good-cover and merging construction.
    Claims { n: usize, eps: Scalar, depth: usize },
}

#[derive(Clone, Debug)]
pub struct TowerParams {
    pub n0: usize,
    pub l: usize,
    pub eps0: Scalar,
    pub depth: usize,
    pub cap: usize,
}

#[derive(Clone, Debug)]
pub struct Tower {
    pub params: TowerParams,
    pub base: IntervalSet,
    pub base_origin: String,
    /// `m(V_i^*)` for `0 <= i <= T`.
    pub starred: Vec<Scalar>,
    /// `S_j` for `0 <= j < n0`.
    pub sums: Vec<Scalar>,
    pub j0: usize,
    pub u: IntervalSet,
    /// `f^{-j} U` for `0 <= j < n0`.
    pub levels: Vec<IntervalSet>,
    pub level_measures: Vec<Scalar>,
    pub total: Scalar,
    pub head: Scalar,
    pub open: bool,
    pub failures: Vec<String>,
}

impl Tower {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.failures.is_empty() {
            Ok(())
        } else {
            Err(Error::verify(self.failures.join("; ")))
        }
    }

    pub fn to_json(&self) -> Value {
        let p = &self.params;
        json!({
            "n0": p.n0, "l": p.l, "eps0": scalar::fmt(&p.eps0), "depth": p.depth,
            "open": self.open,
            "base": self.base.to_json(),
            "base_origin": self.base_origin,
            "base_measure": scalar::fmt(&self.base.measure()),
            "starred_measures": self.starred.iter().map(scalar::to_f64).collect::<Vec<_>>(),
            "sums": self.sums.iter().map(scalar::fmt).collect::<Vec<_>>(),
            "j0": self.j0,
            "u": self.u.to_json(),
            "u_components": self.u.components(),
            "level_measures": self.level_measures.iter().map(scalar::fmt).collect::<Vec<_>>(),
            "level_sum": scalar::fmt(&self.total),
            "level_sum_f64": scalar::to_f64(&self.total),
            "head_sum": scalar::fmt(&self.head),
            "head_sum_f64": scalar::to_f64(&self.head),
            "holds": self.holds(),
            "failures": self.failures,
        })
    }
}

/// All levels `f^{-j} U`, or only `U` when the map preserves Lebesgue measure
/// and the levels would exceed the component cap.
fn materialize_levels(f: &CircleMap, u: &IntervalSet, n0: usize, cap: usize) -> Result<Vec<IntervalSet>> {
    let mut levels = vec![u.clone()];
    let mut held = u.components();
    for _ in 1..n0 {
        let next = f.preimage(levels.last().unwrap())?;
        held += next.components();
        if held > cap {
            // Measures of an invariant tower follow from the base alone.
            if f.preserves_lebesgue() {
                return Ok(vec![u.clone()]);
            }
            return Err(Error::cap("tower level", cap));
        }
        levels.push(next);
    }
    Ok(levels)
}

struct Chain {
    starred: Vec<IntervalSet>,
}

/// `V_0^* = V`, `V_i^* = f^{-1}(V_{i-1}^*) \ V`: points whose first visit to `V` is at time `i`.
fn first_visits(f: &CircleMap, v: &IntervalSet, depth: usize, cap: usize) -> Result<Chain> {
    let mut starred = vec![v.clone()];
    for _ in 0..depth {
        let next = f.preimage(starred.last().unwrap())?.subtract(v);
        next.check_cap("first-visit set", cap)?;
        starred.push(next);
    }
    Ok(Chain { starred })
}

fn residue_sums(meas: &[Scalar], n0: usize, l: usize) -> Vec<Scalar> {
    let mut by_class = vec![Scalar::zero(); n0];
    for (i, m) in meas.iter().enumerate() {
        by_class[i % n0] += m;
    }
    (0..n0)
        .map(|j| {
            let mut s = Scalar::zero();
            for k in j..j + l {
                s += &by_class[k % n0];
            }
            s
        })
        .collect()
}

fn tower_base(chain: &Chain, n0: usize, j0: usize) -> IntervalSet {
    let parts: Vec<&IntervalSet> = chain.starred.iter().enumerate().filter(|(i, _)| *i >= n0 && i % n0 == j0).map(|(_, s)| s).collect();
    IntervalSet::union_all(parts)
}

fn arc(center: &Scalar, len: &Scalar) -> IntervalSet {
    circle_ball(center, &(len / scalar::int(2)))
}

fn search_candidates(f: &CircleMap, p: &TowerParams) -> Vec<(IntervalSet, String)> {
    let periodic = if p.n0 > 1 { f.periodic_points(p.n0 - 1, p.cap.min(1 << 16)).unwrap_or_default() } else { Vec::new() };
    let grid = 64i64;
    let mut best = (scalar::q(1, 2 * grid), Scalar::zero());
    for k in 0..grid {
        let c = scalar::q(2 * k + 1, 2 * grid);
        let d = periodic
            .iter()
            .map(|x| {
                let t = if &c > x { &c - x } else { x - &c };
                scalar::min(&t, &(Scalar::one() - &t)).clone()
            })
            .min()
            .unwrap_or_else(scalar::half);
        if d > best.1 {
            best = (c, d);
        }
    }
    let mut out = Vec::new();
    let mut m = 2u32;
    while (1u64 << m) <= 2 * (p.depth as u64 + 1) {
        let len = scalar::q(1, 1 << m);
        out.push((arc(&best.0, &len), format!("arc of length 1/{} centred at {}", 1u64 << m, scalar::fmt(&best.0))));
        m += 1;
    }
    out
}

fn assemble(f: &CircleMap, p: &TowerParams, base: IntervalSet, origin: String, chain: Chain) -> Result<Tower> {
    let starred: Vec<Scalar> = chain.starred.iter().map(|s| s.measure()).collect();
    let sums = residue_sums(&starred, p.n0, p.l);
    let j0 = (0..p.n0).min_by(|a, b| sums[*a].cmp(&sums[*b]).then(a.cmp(b))).unwrap();
    let u = tower_base(&chain, p.n0, j0);
    let levels = materialize_levels(f, &u, p.n0, p.cap)?;
    let mut t = Tower {
        params: p.clone(),
        base,
        base_origin: origin,
        starred,
        sums,
        j0,
        u,
        level_measures: Vec::new(),
        levels,
        total: Scalar::zero(),
        head: Scalar::zero(),
        open: false,
        failures: Vec::new(),
    };
    t.evaluate(f);
    Ok(t)
}

impl Tower {
    fn evaluate(&mut self, f: &CircleMap) {
        let p = &self.params;
        self.level_measures = if self.levels.len() == p.n0 {
            self.levels.iter().map(|s| s.measure()).collect()
        } else {
            vec![self.u.measure(); p.n0]
        };
        self.total = self.level_measures.iter().fold(Scalar::zero(), |a, b| a + b);
        self.head = self.level_measures.iter().take(p.l).fold(Scalar::zero(), |a, b| a + b);
        let mut fails = Vec::new();
        // f^{-a}U and f^{-b}U meet iff U and f^{b-a}(U) meet.
        let mut img = self.u.clone();
        for i in 1..p.n0 {
            img = f.image(&img);
            let ok = if self.open {
                img.closures_disjoint_on_circle(&self.u)
            } else {
                img.interior_disjoint(&self.u)
            };
            if !ok {
                fails.push(format!("U meets f^-{i}(U)"));
            }
        }
        let lower = Scalar::one() - &p.eps0;
        if self.total <= lower {
            fails.push(format!(
                "level sum {} = {:.6} is not above 1 - eps0 = {:.6}",
                scalar::fmt(&self.total),
                scalar::to_f64(&self.total),
                scalar::to_f64(&lower)
            ));
        }
        let upper = scalar::q(p.l as i64, p.n0 as i64) + &p.eps0;
        if self.head >= upper {
            fails.push(format!(
                "sum of the first {} levels {:.6} is not below l/n0 + eps0 = {:.6}",
                p.l,
                scalar::to_f64(&self.head),
                scalar::to_f64(&upper)
            ));
        }
        self.failures = fails;
    }
}

/// Rokhlin tower `U, f^{-1}U, ..., f^{-(n0-1)}U` from first-visit times to a
/// base `V`: `U` collects the points first visiting `V` at a time `i >= n0`
/// with `i = j0 (mod n0)`.
pub fn build_tower(f: &CircleMap, p: &TowerParams, choice: &BaseChoice) -> Result<Tower> {
    f.require_exact()?;
    if p.n0 == 0 || p.l == 0 || p.l > p.n0 {
        return Err(Error::input("need 1 <= l <= n0"));
    }
    if p.eps0 <= Scalar::zero() || p.eps0 >= Scalar::one() {
        return Err(Error::input("eps0 must lie in (0, 1)"));
    }
    if !f.is_expanding() && !f.preserves_lebesgue() {
        return Err(Error::pre("tower construction needs an expanding or measure-preserving map"));
    }
    if p.n0 > 1 {
        // Errors on a continuum of short periodic points.
        let pieces_needed = (f.branches().len() as f64).powi(p.n0 as i32 - 1);
        if pieces_needed < p.cap as f64 {
            f.periodic_points(p.n0 - 1, p.cap)?;
        }
    }
    match choice {
        BaseChoice::Given(v) => {
            let chain = first_visits(f, v, p.depth, p.cap)?;
            assemble(f, p, v.clone(), "given".into(), chain)
        }
        BaseChoice::Claims { n, eps, depth } => {
            let v = build_v(f, *n, eps, *depth, p.cap)?;
            let chain = first_visits(f, &v.v, p.depth, p.cap)?;
            let origin = format!("good-cover construction with N = {n}, shift {}", v.shift);
            assemble(f, p, v.v, origin, chain)
        }
        BaseChoice::Search => {
            // Screen on a sample grid, then build only the most promising base exactly.
            let cands = search_candidates(f, p);
            let scores: Vec<f64> = Exec::default().map(&cands, |(v, _)| estimate_level_sum(f, v, p, SCREEN_GRID));
            let best = (0..cands.len()).max_by(|a, b| scores[*a].total_cmp(&scores[*b])).ok_or_else(|| Error::pre("no base candidates"))?;
            let (v, origin) = cands.into_iter().nth(best).unwrap();
            let chain = first_visits(f, &v, p.depth, p.cap)?;
            assemble(f, p, v, origin, chain)
        }
    }
}

const SCREEN_GRID: usize = 1 << 12;

/// Sampled level sum of the tower over base `v`.
fn estimate_level_sum(f: &CircleMap, v: &IntervalSet, p: &TowerParams, grid: usize) -> f64 {
    let vf = v.to_f64();
    let inside = |x: f64| vf.iter().any(|&(a, b)| a <= x && x < b);
    let len = p.depth + p.n0;
    let mut starred = vec![0usize; p.depth + 1];
    let mut taus = Vec::with_capacity(grid);
    for g in 0..grid {
        // Weyl points: grid midpoints would be dyadic and collapse under doubling.
        let mut x = (0.5 + g as f64 * 0.618_033_988_749_894_9).fract();
        let mut hits = Vec::with_capacity(len);
        for _ in 0..len {
            hits.push(inside(x));
            x = f.eval_f64(x);
        }
        // tau[t]: first-visit time of the t-th orbit point, if within depth.
        let mut tau = vec![None; p.n0];
        for (t, slot) in tau.iter_mut().enumerate() {
            *slot = (0..=p.depth).find(|i| t + i < len && hits[t + i]);
        }
        if let Some(i) = tau[0] {
            starred[i] += 1;
        }
        taus.push(tau);
    }
    let meas: Vec<Scalar> = starred.iter().map(|&c| scalar::q(c as i64, grid as i64)).collect();
    let sums = residue_sums(&meas, p.n0, p.l);
    let j0 = (0..p.n0).min_by(|a, b| sums[*a].cmp(&sums[*b]).then(a.cmp(b))).unwrap();
    let in_u = |t: &Option<usize>| t.is_some_and(|i| i >= p.n0 && i % p.n0 == j0);
    let hits: usize = taus.iter().map(|tau| tau.iter().filter(|t| in_u(t)).count()).sum();
    hits as f64 / grid as f64
}

/// Shrinks every component of `U` so the level closures become pairwise
/// disjoint; the measure given up across all levels is at most `slack`.
pub fn open_refinement(f: &CircleMap, t: &Tower, slack: &Scalar) -> Result<Tower> {
    if *slack <= Scalar::zero() {
        return Err(Error::input("slack must be positive"));
    }
    let comps = t.u.components().max(1);
    // Preimages of an invariant map have the same measure.
    let c = if f.preserves_lebesgue() { Scalar::one() } else { f.preimage_factor() };
    let mut spread = Scalar::zero();
    let mut ck = Scalar::one();
    for _ in 0..t.params.n0 {
        spread += &ck;
        ck *= &c;
    }
    let s = scalar::dyadic_floor(&(slack / (scalar::int(2 * comps as i64) * spread)), 8);
    let shortest = t.u.min_len().unwrap_or_else(Scalar::zero);
    if shortest <= scalar::int(2) * &s {
        return Err(Error::pre("slack too small to open up a component of the tower base"));
    }
    let u0 = t.u.shrink(&s);
    let levels = materialize_levels(f, &u0, t.params.n0, t.params.cap)?;
    let mut out = t.clone();
    out.u = u0;
    out.levels = levels;
    out.open = true;
    out.evaluate(f);
    if t.total.clone() - &out.total > *slack {
        return Err(Error::verify("opening the tower lost more than the slack"));
    }
    Ok(out)
}

/// Spot check of `f^{-j}(V_i^*) >= V_{i+j}^*` up to measure zero.
pub fn check_nesting(f: &CircleMap, base: &IntervalSet, depth: usize, cap: usize) -> Result<bool> {
    let chain = first_visits(f, base, depth, cap)?;
    for i in 0..depth {
        let mut pre = chain.starred[i].clone();
        for j in 1..=depth - i {
            pre = f.preimage(&pre)?;
            if !chain.starred[i + j].subtract(&pre).measure().is_zero() {
                return Ok(false);
            }
            if j >= 3 {
                break;
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    const CAP: usize = 1_000_000;

    fn iv(a: i64, b: i64, c: i64, d: i64) -> IntervalSet {
        IntervalSet::interval(q(a, b), q(c, d))
    }

    #[test]
    fn small_arc_is_good_and_short_period_point_is_not() {
        let f = CircleMap::doubling();
        assert!(is_n_good(&f, &iv(1, 8, 3, 16), 2, CAP).unwrap().good);
        let g = is_n_good(&f, &iv(0, 1, 1, 16), 2, CAP).unwrap();
        assert!(!g.good);
        let (i, x) = g.witness.unwrap();
        assert_eq!(i, 1);
        assert!(iv(0, 1, 1, 16).contains_point(&x) && iv(0, 1, 1, 16).contains_point(&f.eval(&x)));
    }

    #[test]
    fn half_interval_fails_two_goodness() {
        let f = CircleMap::doubling();
        assert!(!is_n_good(&f, &iv(0, 1, 1, 2), 2, CAP).unwrap().good);
    }

    #[test]
    fn hat_of_half() {
        let f = CircleMap::doubling();
        let h = hat(&f, &iv(0, 1, 1, 2), 1, CAP).unwrap();
        assert_eq!(h.set, iv(0, 1, 1, 2).union(&iv(0, 1, 1, 4)).union(&iv(1, 2, 3, 4)));
        assert_eq!(h.set.measure(), q(3, 4));
    }

    #[test]
    fn hat_within_matches_full_hat() {
        let f = CircleMap::tripling();
        let a = iv(1, 10, 1, 8);
        let r = iv(1, 3, 2, 3).union(&iv(3, 4, 9, 10));
        let full = hat(&f, &a, 5, CAP).unwrap().set.intersect(&r);
        assert_eq!(hat_within(&f, &a, 5, &r, CAP).unwrap(), full);
    }

    #[test]
    fn merge_of_equal_sets_is_the_set() {
        let f = CircleMap::doubling();
        let a = iv(1, 8, 3, 16);
        let m = merge_good(&f, &a, &a, 2, 4, CAP).unwrap();
        assert_eq!(m.set, a);
    }

    #[test]
    fn merge_of_unrelated_sets_is_the_union() {
        let f = CircleMap::doubling();
        let a = iv(1, 8, 9, 64);
        let b = iv(5, 8, 41, 64);
        let m = merge_good(&f, &a, &b, 2, 4, CAP).unwrap();
        assert!(is_n_good(&f, &m.set, 2, CAP).unwrap().good);
        assert!(m.uncovered.is_zero());
    }

    #[test]
    fn merge_rejects_bad_input() {
        let f = CircleMap::doubling();
        assert!(merge_good(&f, &iv(0, 1, 1, 2), &iv(1, 8, 3, 16), 2, 4, CAP).is_err());
    }

    #[test]
    fn cover_trivial_and_rotation() {
        let f = CircleMap::doubling();
        let c = cover_good_saturated(&f, 1, &q(1, 20), CAP).unwrap();
        assert_eq!(c.sets, vec![IntervalSet::unit()]);
        let r = CircleMap::rotation(q(1, 3)).unwrap();
        assert!(cover_good_saturated(&r, 2, &q(1, 20), CAP).is_err());
    }

    #[test]
    fn cover_for_doubling() {
        let f = CircleMap::doubling();
        let c = cover_good_saturated(&f, 2, &q(1, 20), CAP).unwrap();
        assert!(c.measure > q(19, 20));
        for (a, b) in c.seeds.iter().zip(&c.sets) {
            assert!(is_n_good(&f, a, 2, CAP).unwrap().good);
            assert!(is_n_good(&f, b, 2, CAP).unwrap().good);
            // saturated: f^{-N} f^N B = B
            assert_eq!(f.preimage_n(&f.image_n(b, 2), 2, CAP).unwrap(), *b);
        }
    }

    #[test]
    fn v_needs_n_above_inverse_eps() {
        let f = CircleMap::doubling();
        assert!(build_v(&f, 3, &q(1, 3), 6, CAP).is_err());
    }

    #[test]
    fn v_for_doubling_small_order() {
        let f = CircleMap::doubling();
        let v = build_v(&f, 3, &q(2, 5), 6, CAP).unwrap();
        assert!(v.v.measure() <= q(1, 3));
        assert!(is_n_good(&f, &v.v, 3, CAP).unwrap().good);
        assert!(v.hat_measure > q(3, 5));
    }

    #[test]
    fn tower_levels_are_disjoint_and_open_refinement_separates_them() {
        let f = CircleMap::doubling();
        let p = TowerParams { n0: 2, l: 1, eps0: q(1, 2), depth: 10, cap: CAP };
        let t = build_tower(&f, &p, &BaseChoice::Search).unwrap();
        assert!(t.levels[0].interior_disjoint(&t.levels[1]));
        let total: Scalar = t.sums.iter().fold(Scalar::zero(), |a, b| a + b);
        let hat_measure: Scalar = t.starred.iter().fold(Scalar::zero(), |a, b| a + b);
        assert_eq!(total, hat_measure * scalar::int(p.l as i64));
        let o = open_refinement(&f, &t, &q(1, 1000)).unwrap();
        assert!(o.levels[0].closures_disjoint_on_circle(&o.levels[1]));
        assert!(&t.total - &o.total <= q(1, 1000));
    }

    #[test]
    fn nesting_of_first_visit_sets() {
        let f = CircleMap::doubling();
        assert!(check_nesting(&f, &iv(1, 8, 1, 4), 6, CAP).unwrap());
    }
}
