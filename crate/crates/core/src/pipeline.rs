//! End-to-end construction on the circle: a Rokhlin tower, compressors on the
//! tower levels, and an escape certificate for the compressed map.
//!
//! The base map has to be exact piecewise affine. Each level `Q_i` of an open
//! tower is covered by intervals `U_i` that `f` carries onto intervals of the
//! level below; a compression patch on each `U_i` squeezes its core by `kappa`,
//! so after `k` steps the core `V_i` of every `U_i` lands in the thin core
//! `W_{i-k}`. The set `K` of all cores at levels `k..=n` then has most of the
//! measure while `g^k K` has almost none.

use num::{One, Signed, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::escape::{verify_certificate, Verdict};
use crate::exec::Exec;
use crate::geometry::{BoxSet, Interval, IntervalSet};
use crate::maps::{CircleMap, Patch, PatchedMap, Piece};
use crate::rokhlin::{build_tower, open_refinement, BaseChoice, Tower, TowerParams};
use crate::scalar::{self, Scalar};
use crate::slicing::{compute_kappa, k_for_kappa};

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub eps: Scalar,
    /// Relative rim of the compressor supports; defaults to `eps / 2`.
    pub delta: Option<Scalar>,
    /// Allowed C1 distance between `f` and the compressed map. It fixes
    /// `kappa`, hence `k` and the tower height.
    pub c1_budget: Scalar,
    /// First-visit depth of the tower; defaults to `4 n0`.
    pub depth: Option<usize>,
    pub cap: usize,
    pub base: BaseChoice,
    pub exec: Exec,
}

impl PipelineConfig {
    pub fn new(eps: Scalar) -> Self {
        PipelineConfig {
            eps,
            delta: None,
            c1_budget: scalar::int(8),
            depth: None,
            cap: 1 << 20,
            base: BaseChoice::Search,
            exec: Exec::default(),
        }
    }

    pub fn delta(&self) -> Scalar {
        self.delta.clone().unwrap_or_else(|| &self.eps / scalar::int(2))
    }
}

/// Tower step: parameters and the open levels `Q_0, ..., Q_n`.
#[derive(Clone, Debug)]
pub struct Step1 {
    pub eps: Scalar,
    pub delta: Scalar,
    pub kappa: Scalar,
    pub k: usize,
    pub n: usize,
    pub tower: Tower,
    pub levels: Vec<IntervalSet>,
    /// `sum_{i<k} m(Q_i)`.
    pub head: Scalar,
    /// `sum_{i<=n} m(Q_i)`.
    pub total: Scalar,
}

/// One interval `U_i` with center `y_i` and half-width `alpha_i r`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub level: usize,
    /// Index of the cell at level `i - 1` that `f` maps this one onto.
    pub parent: Option<usize>,
    pub center: Scalar,
    pub half: Scalar,
}

impl Cell {
    fn scaled(&self, s: &Scalar) -> Interval {
        let w = &self.half * s;
        Interval::new(&self.center - &w, &self.center + &w)
    }

    pub fn u(&self) -> Interval {
        self.scaled(&Scalar::one())
    }

    pub fn v(&self, delta: &Scalar) -> Interval {
        self.scaled(&(Scalar::one() - delta))
    }

    pub fn w(&self, delta: &Scalar) -> Interval {
        self.scaled(delta)
    }
}

/// Compressor step.
#[derive(Clone, Debug)]
pub struct Step2 {
    /// `Q_0` cut so that no pulled-back cell straddles a branch break.
    pub pieces: Vec<Interval>,
    /// Cells by level, `0..=n`.
    pub cells: Vec<Vec<Cell>>,
    pub g: PatchedMap,
    /// Cells at levels `>= k` whose core was checked to land in the thin core below.
    pub shrink_checked: usize,
}

/// `M \ K` split into four parts, exact measures.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Outside the tower.
    pub outside: Scalar,
    /// In the tower but in no cell.
    pub uncovered: Scalar,
    /// Cell rims `U_i \ V_i`.
    pub rims: Scalar,
    /// Cores at levels below `k`.
    pub low: Scalar,
}

impl Decomposition {
    pub fn total(&self) -> Scalar {
        &self.outside + &self.uncovered + &self.rims + &self.low
    }

    fn to_json(&self) -> Value {
        let f = |x: &Scalar| json!({ "exact": scalar::json(x), "f64": scalar::to_f64(x) });
        json!({
            "outside_tower": f(&self.outside),
            "outside_cells": f(&self.uncovered),
            "cell_rims": f(&self.rims),
            "low_cores": f(&self.low),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Step3 {
    pub k_set: IntervalSet,
    pub measure_k: Scalar,
    /// `m(g^k K)`, exact.
    pub image: Scalar,
    /// `m(union of all U_i)`.
    pub cells_measure: Scalar,
    pub parts: Decomposition,
    pub certificate: Verdict,
}

#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub step1: Step1,
    pub step2: Step2,
    pub step3: Step3,
    pub c1_linearize: Scalar,
    pub c1_compress: Scalar,
    pub c1_budget: Scalar,
    pub failures: Vec<String>,
}

impl PipelineReport {
    pub fn c1_total(&self) -> Scalar {
        &self.c1_linearize + &self.c1_compress
    }

    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> Value {
        let s1 = &self.step1;
        let s2 = &self.step2;
        let s3 = &self.step3;
        let num = |x: &Scalar| json!({ "exact": scalar::json(x), "f64": scalar::to_f64(x) });
        json!({
            "eps": scalar::json(&s1.eps),
            "delta": scalar::json(&s1.delta),
            "kappa": scalar::json(&s1.kappa),
            "k": s1.k,
            "n": s1.n,
            "tower": s1.tower.to_json(),
            "tower_head": num(&s1.head),
            "tower_total": num(&s1.total),
            "pieces": s2.pieces.len(),
            "cells": s2.cells.iter().map(Vec::len).sum::<usize>(),
            "shrink_checked": s2.shrink_checked,
            "measure_K": num(&s3.measure_k),
            "measure_image": num(&s3.image),
            "measure_cells": num(&s3.cells_measure),
            "parts": s3.parts.to_json(),
            "certificate": s3.certificate.to_json(),
            "c1": {
                "linearize": num(&self.c1_linearize),
                "compress": num(&self.c1_compress),
                "total": num(&self.c1_total()),
                "budget": scalar::json(&self.c1_budget),
            },
            "failures": self.failures,
            "pass": self.holds(),
        })
    }
}

/// `kappa` for a C1 budget over a base with `sup |f'| = m1`, rounded up to a
/// dyadic rational so that exact images of dyadic sets stay dyadic. Rounding
/// up only shrinks the perturbation.
pub fn squeeze_factor(budget: &Scalar, m1: &Scalar, delta: &Scalar) -> Scalar {
    let kappa = compute_kappa(&(budget / (Scalar::one() + m1)), delta);
    let mut bits = 8;
    loop {
        let d = scalar::dyadic_ceil(&kappa, bits);
        if d < Scalar::one() {
            return d;
        }
        bits += 4;
    }
}

/// Picks `kappa` from the C1 budget, then `k` and `n`, and builds an open
/// tower of height `n + 1` whose first `k` levels carry less than `eps`.
pub fn step1(f: &CircleMap, cfg: &PipelineConfig) -> Result<Step1> {
    f.require_exact()?;
    let eps = cfg.eps.clone();
    if eps <= Scalar::zero() || eps > scalar::q(1, 8) {
        return Err(Error::input("eps must lie in (0, 1/8]"));
    }
    let delta = cfg.delta();
    if delta <= Scalar::zero() || delta >= eps {
        return Err(Error::input("delta must lie in (0, eps)"));
    }
    if !cfg.c1_budget.is_positive() {
        return Err(Error::input("the C1 budget must be positive"));
    }
    let (_, m1) = f.derivative_bounds();
    let kappa = squeeze_factor(&cfg.c1_budget, &m1, &delta);
    let k = k_for_kappa(&kappa, &delta);
    // Least n with k / (n + 1) < eps.
    let n = scalar::floor(&(scalar::int(k as i64) / &eps))
        .try_into()
        .map_err(|_| Error::cap("tower height", usize::MAX))?;
    let n0: usize = n + 1;
    let params = TowerParams {
        n0,
        l: k,
        eps0: &eps / scalar::int(2),
        depth: cfg.depth.unwrap_or(4 * n0),
        cap: cfg.cap,
    };
    let tower = build_tower(f, &params, &cfg.base)?;
    tower.check()?;
    let slack = (&tower.total - (Scalar::one() - &params.eps0)) / scalar::int(2);
    let tower = open_refinement(f, &tower, &slack)?;
    tower.check()?;
    if tower.levels.len() != n0 {
        return Err(Error::cap("tower levels kept in memory", tower.levels.len()));
    }
    let levels = tower.levels.clone();
    let head: Scalar = levels[..k].iter().map(IntervalSet::measure).sum();
    let total: Scalar = levels.iter().map(IntervalSet::measure).sum();
    if head >= eps {
        return Err(Error::verify(format!("the first k = {k} levels carry {:.6}, not below eps", scalar::to_f64(&head))));
    }
    if total <= Scalar::one() - &eps {
        return Err(Error::verify(format!("the tower carries {:.6}, not above 1 - eps", scalar::to_f64(&total))));
    }
    Ok(Step1 { eps, delta, kappa, k, n, tower, levels, head, total })
}

/// Points where a cell at some level would straddle a branch break once
/// pulled back: forward orbits of the branch-image endpoints.
fn cut_points(f: &CircleMap, steps: usize) -> Vec<Scalar> {
    let mut seeds: Vec<Scalar> = vec![Scalar::zero()];
    for b in f.branches() {
        for x in [&b.lo, &b.hi] {
            let r = b.piece.raw(x);
            seeds.push(if f.reduces() { scalar::frac(&r) } else { r });
        }
    }
    seeds.sort();
    seeds.dedup();
    let mut out = Vec::new();
    for s in seeds {
        let mut x = s;
        for _ in 0..=steps {
            out.push(x.clone());
            x = f.eval(&x);
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Affine pull-backs of `[c - w, c + w]`, one per branch and lift it fits in.
fn pull_back_cell(f: &CircleMap, c: &Scalar, w: &Scalar) -> Result<Vec<(Scalar, Scalar)>> {
    let mut out = Vec::new();
    for b in f.branches() {
        let Piece::Affine { slope, offset } = &b.piece else {
            return Err(Error::ExactModeUnavailable("cells are pulled back through affine branches only".into()));
        };
        let (a, z) = (b.piece.raw(&b.lo), b.piece.raw(&b.hi));
        let range = if a <= z { Interval::new(a, z) } else { Interval::new(z, a) };
        let lifts: Vec<Scalar> = if f.reduces() {
            let first = scalar::floor(&(&range.lo - c - w));
            let last = scalar::floor(&(&range.hi - c + w)) + 1;
            num::range_inclusive(first, last).map(Scalar::from_integer).collect()
        } else {
            vec![Scalar::zero()]
        };
        for j in lifts {
            let lifted = Interval::new(c - w + &j, c + w + &j);
            match lifted.intersect(&range) {
                Some(hit) if !hit.is_degenerate() => {
                    if hit != lifted {
                        return Err(Error::pre(format!("cell around {} straddles a branch break", scalar::fmt(c))));
                    }
                    out.push(((c + &j - offset) / slope, w / slope.abs()));
                }
                _ => {}
            }
        }
    }
    Ok(out)
}

/// Cells on `Q_0` and all their pull-backs, the compression patches on every
/// cell above level 0, and the exact check that `g^k` maps each core at level
/// `i >= k` into the thin core of its ancestor at level `i - k`.
pub fn step2(f: &CircleMap, s1: &Step1, cfg: &PipelineConfig) -> Result<Step2> {
    let (k, n) = (s1.k, s1.n);
    let cuts = cut_points(f, n);
    let mut pieces = Vec::new();
    for c in s1.levels[0].parts() {
        let mut lo = c.lo.clone();
        for x in cuts.iter().filter(|x| c.lo < **x && **x < c.hi) {
            pieces.push(Interval::new(lo, x.clone()));
            lo = x.clone();
        }
        pieces.push(Interval::new(lo, c.hi.clone()));
    }
    // Each piece keeps a concentric cell of relative size 1 - eps/2.
    let fill = (Scalar::one() - &s1.eps / scalar::int(2)) / scalar::int(2);
    let mut cells: Vec<Vec<Cell>> = vec![pieces.iter().map(|p| Cell { level: 0, parent: None, center: p.mid(), half: p.len() * &fill }).collect()];
    let mut count = cells[0].len();
    for i in 1..=n {
        let mut next = Vec::new();
        for (pi, cell) in cells[i - 1].iter().enumerate() {
            for (center, half) in pull_back_cell(f, &cell.center, &cell.half)? {
                let c = Cell { level: i, parent: Some(pi), center, half };
                if !s1.levels[i].covers(&IntervalSet::from_intervals(vec![c.u()])) {
                    return Err(Error::verify(format!("a pulled-back cell at level {i} leaves the tower level")));
                }
                next.push(c);
            }
        }
        count += next.len();
        if count > cfg.cap {
            return Err(Error::cap("compressor cells", cfg.cap));
        }
        cells.push(next);
    }
    let ramp = &s1.delta / scalar::int(2);
    let patches: Vec<Patch> = cells[1..]
        .iter()
        .flatten()
        .map(|c| Patch::Compress { center: c.center.clone(), half_width: c.half.clone(), kappa: s1.kappa.clone(), delta: ramp.clone() })
        .collect();
    let g = PatchedMap::new(f.clone(), patches)?;

    let ancestor = |mut level: usize, mut idx: usize| {
        for _ in 0..k {
            idx = cells[level][idx].parent.expect("cells above level 0 have parents");
            level -= 1;
        }
        &cells[level][idx]
    };
    let jobs: Vec<(usize, usize)> = (k..=n).flat_map(|i| (0..cells[i].len()).map(move |j| (i, j))).collect();
    let bad = cfg.exec.map(&jobs, |&(i, j)| {
        let core = IntervalSet::from_intervals(vec![cells[i][j].v(&s1.delta)]);
        let target = IntervalSet::from_intervals(vec![ancestor(i, j).w(&s1.delta)]);
        (!target.covers(&g.image_n(&core, k))).then_some((i, j))
    });
    if let Some((i, j)) = bad.into_iter().flatten().next() {
        return Err(Error::verify(format!(
            "g^k of the core of cell {j} at level {i} leaves the thin core at level {}",
            i - k
        )));
    }
    Ok(Step2 { pieces, cells, g, shrink_checked: jobs.len() })
}

/// `K` from the cores at levels `k..=n`, the four-part split of its
/// complement, and the certificate `(K, k, 4 eps)`.
pub fn step3(s1: &Step1, s2: &Step2) -> Result<Step3> {
    let (k, eps, delta) = (s1.k, &s1.eps, &s1.delta);
    let set_of = |lv: &[Vec<Cell>], pick: &dyn Fn(&Cell) -> Interval| IntervalSet::from_intervals(lv.iter().flatten().map(pick).collect());
    let tower = IntervalSet::union_all(&s1.levels);
    let cells_u = set_of(&s2.cells, &|c| c.u());
    let cores = set_of(&s2.cells, &|c| c.v(delta));
    let low = set_of(&s2.cells[..k], &|c| c.v(delta));
    let k_set = set_of(&s2.cells[k..], &|c| c.v(delta));
    if !tower.covers(&cells_u) {
        return Err(Error::verify("the cells leave the tower"));
    }
    let cells_measure = cells_u.measure();
    let parts = Decomposition {
        outside: Scalar::one() - tower.measure(),
        uncovered: tower.measure() - &cells_measure,
        rims: &cells_measure - cores.measure(),
        low: low.measure(),
    };
    let measure_k = k_set.measure();
    if parts.total() != Scalar::one() - &measure_k {
        return Err(Error::verify("the four parts do not add up to the complement of K"));
    }
    let certificate = verify_certificate(&s2.g, &BoxSet::from(k_set.clone()), k, &(eps * scalar::int(4)))?;
    let image = certificate.certificate.image_bound.clone();
    Ok(Step3 { k_set, measure_k, image, cells_measure, parts, certificate })
}

/// Runs all three steps. Quantitative shortfalls land in `failures`; a step
/// that cannot be carried out at all is an error.
pub fn run(f: &CircleMap, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let s1 = step1(f, cfg)?;
    let s2 = step2(f, &s1, cfg)?;
    let s3 = step3(&s1, &s2)?;
    // The base is affine, so making it locally affine costs nothing.
    let c1_linearize = Scalar::zero();
    let c1_compress = s2.g.c1_upper();
    let eps = &s1.eps;
    let mut failures = Vec::new();
    let p = &s3.parts;
    for (name, v, strict) in
        [("outside the tower", &p.outside, true), ("outside the cells", &p.uncovered, true), ("cell rims", &p.rims, false), ("low cores", &p.low, true)]
    {
        if (strict && v >= eps) || (!strict && v > eps) {
            failures.push(format!("{name} carry {:.6}, above eps", scalar::to_f64(v)));
        }
    }
    if s3.image >= s3.cells_measure.clone() * eps {
        failures.push(format!("m(g^k K) = {:.6} is not below eps m(cells)", scalar::to_f64(&s3.image)));
    }
    if !s3.certificate.pass {
        failures.push(s3.certificate.witness.clone().unwrap_or_default());
    }
    let c1_total = &c1_linearize + &c1_compress;
    if c1_total >= cfg.c1_budget {
        failures.push(format!("C1 distance bound {:.6} is not below the budget", scalar::to_f64(&c1_total)));
    }
    Ok(PipelineReport { step1: s1, step2: s2, step3: s3, c1_linearize, c1_compress, c1_budget: cfg.c1_budget.clone(), failures })
}

/// Rotation by `p / q` with base `[0, 1/q]`. Every point has period
/// `q > 40 (n + 1)`, so the first-visit tower consists of whole arcs of the
/// period grid and carries more than `1 - eps/2` of the circle. `q` is odd,
/// which keeps cell centres off the dyadic grids used by the oracles.
pub fn rotation_demo(eps: &Scalar, c1_budget: &Scalar) -> Result<(CircleMap, PipelineConfig)> {
    let mut cfg = PipelineConfig::new(eps.clone());
    cfg.c1_budget = c1_budget.clone();
    let delta = cfg.delta();
    let k = k_for_kappa(&squeeze_factor(c1_budget, &Scalar::one(), &delta), &delta);
    let n: i64 = scalar::floor(&(scalar::int(k as i64) / eps)).try_into().map_err(|_| Error::input("eps too small"))?;
    let q = (40 * (n + 1) + 1) | 1;
    // Coprime numerator near the golden section.
    let mut p = (q as f64 * 0.618_033_988_749_894_9).round() as i64;
    while num::integer::gcd(p, q) != 1 {
        p += 1;
    }
    let f = CircleMap::rotation(scalar::q(p, q))?;
    cfg.base = BaseChoice::Given(IntervalSet::interval(Scalar::zero(), scalar::q(1, q)));
    cfg.depth = Some(q as usize);
    Ok((f, cfg))
}
