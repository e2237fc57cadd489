//! Measure-escape certificates and the averaging oracle.
//!
//! A certificate is a compact `K` and a time `N` with `m(K) > 1 - eps` and
//! `m(f^N K) < eps`; both measures are computed on exact interval sets. The
//! averaging oracle pushes Lebesgue measure forward on a grid and reports how
//! concentrated the Cesaro average becomes. It is a diagnostic only.

use std::fmt::Write as _;

use num::{One, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{BoxSet, Interval, IntervalSet};
use crate::maps::PatchedMap;
use crate::scalar::{self, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Images computed exactly on certified-monotone pieces.
    Exact,
    /// Some pieces enclosed; the image measure is an over-estimate.
    Enclosure,
}

impl Mode {
    pub fn of(f: &PatchedMap) -> Mode {
        if f.base().is_affine() && f.patches().iter().all(|p| f.monotone_on(p)) {
            Mode::Exact
        } else {
            Mode::Enclosure
        }
    }

    fn name(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Enclosure => "enclosure",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EscapeCertificate {
    pub k: BoxSet,
    pub n: usize,
    pub eps: Scalar,
    pub measure_k: Scalar,
    /// `m(f^N K)`, or an upper bound for it in enclosure mode.
    pub image_bound: Scalar,
    pub mode: Mode,
}

impl EscapeCertificate {
    pub fn to_json(&self) -> Value {
        json!({
            "K": self.k.to_json(),
            "N": self.n,
            "eps": scalar::json(&self.eps),
            "measure_K": scalar::json(&self.measure_k),
            "measure_K_f64": scalar::to_f64(&self.measure_k),
            "image_bound": scalar::json(&self.image_bound),
            "image_bound_f64": scalar::to_f64(&self.image_bound),
            "mode": self.mode.name(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub pass: bool,
    pub certificate: EscapeCertificate,
    /// One line naming each violated inequality.
    pub witness: Option<String>,
}

impl Verdict {
    pub fn to_json(&self) -> Value {
        json!({
            "pass": self.pass,
            "certificate": self.certificate.to_json(),
            "witness": self.witness,
        })
    }
}

fn as_intervals(k: &BoxSet) -> Result<IntervalSet> {
    k.as_intervals().ok_or_else(|| Error::input(format!("certificates are checked on the circle, got dimension {}", k.dim())))
}

/// Computes both measures and checks `m(K) > 1 - eps` and `m(f^N K) < eps`.
pub fn verify_certificate(f: &PatchedMap, k: &BoxSet, n: usize, eps: &Scalar) -> Result<Verdict> {
    if *eps <= Scalar::zero() || *eps >= Scalar::one() {
        return Err(Error::input("eps must lie in (0, 1)"));
    }
    let ks = as_intervals(k)?;
    let measure_k = ks.measure();
    let image = f.image_n(&ks, n);
    let image_bound = image.measure();
    let mode = Mode::of(f);
    let lower = Scalar::one() - eps;
    let mut bad = Vec::new();
    if measure_k <= lower {
        bad.push(format!("m(K) = {} ({:.6}) is not above 1 - eps = {}", scalar::fmt(&measure_k), scalar::to_f64(&measure_k), scalar::fmt(&lower)));
    }
    if image_bound >= *eps {
        let what = if mode == Mode::Exact { "m(f^N K)" } else { "the bound on m(f^N K)" };
        bad.push(format!(
            "{what} = {} ({:.6}) with N = {n} is not below eps = {}",
            scalar::fmt(&image_bound),
            scalar::to_f64(&image_bound),
            scalar::fmt(eps)
        ));
    }
    let certificate = EscapeCertificate { k: k.clone(), n, eps: eps.clone(), measure_k, image_bound, mode };
    let pass = bad.is_empty();
    Ok(Verdict { pass, certificate, witness: (!pass).then(|| bad.join("; ")) })
}

#[derive(Clone, Debug)]
pub enum Search {
    Found(Verdict),
    /// No certificate among the candidates tried. This says nothing about
    /// the existence of an absolutely continuous invariant measure.
    Exhausted { tried: usize, best: Option<Verdict> },
}

/// Tries `K = [0, 1]` and, for each `N <= n_max`, the union of grid cells whose
/// sampled `N`-th images all avoid the sparse part of the averaged measure.
pub fn search_certificate(f: &PatchedMap, eps: &Scalar, n_max: usize, budget: usize, grid: usize, exec: Exec) -> Result<Search> {
    let mut tried = 0;
    let mut best: Option<Verdict> = None;
    let consider = |v: Verdict, best: &mut Option<Verdict>| {
        let better = best.as_ref().is_none_or(|b| v.certificate.image_bound < b.certificate.image_bound);
        if better {
            *best = Some(v);
        }
    };
    let unit = BoxSet::from(IntervalSet::unit());
    for n in 1..=n_max {
        if tried >= budget {
            break;
        }
        tried += 1;
        let v = verify_certificate(f, &unit, n, eps)?;
        if v.pass {
            return Ok(Search::Found(v));
        }
        consider(v, &mut best);
    }
    let avg = kb_average(f, n_max.max(1), grid, DEFAULT_SAMPLES, exec);
    let dense = avg.dense_cells(1.0 - scalar::to_f64(eps) / 2.0);
    for n in 1..=n_max {
        if tried >= budget {
            break;
        }
        let cells: Vec<usize> = exec
            .map_range(grid, |c| {
                let all_dense = (0..DEFAULT_SAMPLES).all(|j| {
                    let mut x = (c as f64 + (j as f64 + 0.5) / DEFAULT_SAMPLES as f64) / grid as f64;
                    for _ in 0..n {
                        x = f.eval_f64(x);
                    }
                    dense[cell_of(x, grid)]
                });
                all_dense.then_some(c)
            })
            .into_iter()
            .flatten()
            .collect();
        let k = IntervalSet::from_intervals(cells.iter().map(|&c| Interval::new(scalar::q(c as i64, grid as i64), scalar::q(c as i64 + 1, grid as i64))).collect());
        if k.measure() <= Scalar::one() - eps {
            continue;
        }
        tried += 1;
        let v = verify_certificate(f, &BoxSet::from(k), n, eps)?;
        if v.pass {
            return Ok(Search::Found(v));
        }
        consider(v, &mut best);
    }
    Ok(Search::Exhausted { tried, best })
}

pub const DEFAULT_SAMPLES: usize = 32;

fn cell_of(x: f64, grid: usize) -> usize {
    ((x * grid as f64).floor() as isize).clamp(0, grid as isize - 1) as usize
}

/// Cesaro average `(1/n)(m + f_* m + ... + f^{n-1}_* m)` on a grid of `G` cells.
#[derive(Clone, Debug)]
pub struct AveragedMeasure {
    pub grid: usize,
    pub n: usize,
    pub samples: usize,
    /// Mass per cell; sums to 1.
    pub mass: Vec<f64>,
}

/// Sparse transfer operator stored by target cell: `(source, weight)` lists.
fn transfer(f: &PatchedMap, grid: usize, samples: usize, exec: Exec) -> Vec<Vec<(u32, f64)>> {
    let out_lists: Vec<Vec<(u32, f64)>> = exec.map_range(grid, |c| {
        let mut hits: Vec<u32> = (0..samples)
            .map(|j| {
                let x = (c as f64 + (j as f64 + 0.5) / samples as f64) / grid as f64;
                cell_of(f.eval_f64(x), grid) as u32
            })
            .collect();
        hits.sort_unstable();
        let mut v: Vec<(u32, f64)> = Vec::new();
        for t in hits {
            match v.last_mut() {
                Some((u, w)) if *u == t => *w += 1.0,
                _ => v.push((t, 1.0)),
            }
        }
        v.into_iter().map(|(t, w)| (t, w / samples as f64)).collect()
    });
    let mut incoming: Vec<Vec<(u32, f64)>> = vec![Vec::new(); grid];
    for (c, list) in out_lists.into_iter().enumerate() {
        for (t, w) in list {
            incoming[t as usize].push((c as u32, w));
        }
    }
    incoming
}

pub fn kb_average(f: &PatchedMap, n: usize, grid: usize, samples: usize, exec: Exec) -> AveragedMeasure {
    let grid = grid.max(2);
    let n = n.max(1);
    let op = transfer(f, grid, samples.max(1), exec);
    let mut cur = vec![1.0 / grid as f64; grid];
    let mut acc = cur.clone();
    let mut next = vec![0.0; grid];
    for _ in 1..n {
        exec.fill(&mut next, |t| op[t].iter().map(|&(c, w)| cur[c as usize] * w).sum());
        let total: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= total;
        }
        std::mem::swap(&mut cur, &mut next);
        for (a, v) in acc.iter_mut().zip(&cur) {
            *a += v;
        }
    }
    let total: f64 = acc.iter().sum();
    let mass = acc.into_iter().map(|v| v / total).collect();
    AveragedMeasure { grid, n, samples, mass }
}

impl AveragedMeasure {
    /// Cells in decreasing order of mass.
    fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.grid).collect();
        idx.sort_by(|a, b| self.mass[*b].total_cmp(&self.mass[*a]).then(a.cmp(b)));
        idx
    }

    /// Fewest cells needed to carry mass `q`.
    fn cells_for(&self, ranked: &[usize], q: f64) -> usize {
        let mut acc = 0.0;
        for (i, &c) in ranked.iter().enumerate() {
            acc += self.mass[c];
            if acc >= q - 1e-12 {
                return i + 1;
            }
        }
        self.grid
    }

    /// Marks the smallest set of cells carrying mass `q`.
    pub fn dense_cells(&self, q: f64) -> Vec<bool> {
        let ranked = self.ranked();
        let m = self.cells_for(&ranked, q);
        let mut out = vec![false; self.grid];
        for &c in &ranked[..m] {
            out[c] = true;
        }
        out
    }

    /// L1 distance to the uniform density.
    pub fn l1_from_uniform(&self) -> f64 {
        let u = 1.0 / self.grid as f64;
        self.mass.iter().map(|v| (v - u).abs()).sum()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn density_csv(&self) -> String {
        let mut s = String::from("cell,mass\n");
        for (i, m) in self.mass.iter().enumerate() {
            let _ = writeln!(s, "{i},{m:e}");
        }
        s
    }

    pub fn profile_csv(&self, levels: &[f64]) -> String {
        let ranked = self.ranked();
        let mut s = String::from("q,measure\n");
        for &q in levels {
            let _ = writeln!(s, "{q},{}", self.cells_for(&ranked, q) as f64 / self.grid as f64);
        }
        s
    }
}

/// Lebesgue measure of the smallest union of cells carrying mass `q`.
pub fn concentration_statistic(a: &AveragedMeasure, q: f64) -> Scalar {
    scalar::q(a.cells_for(&a.ranked(), q) as i64, a.grid as i64)
}

/// Grid estimate of `m(f^N K)` from a fine sampling of `K`. The spacing
/// shrinks with the Lipschitz constant of `f^N`, so consecutive samples land
/// within 1/8 of a cell of each other where `f^N` is continuous. The
/// estimate is the measure of the union of the segments joining consecutive
/// images, dropping segments longer than one cell as jumps. Counting whole
/// hit cells instead would overshoot by up to a cell per image component.
pub fn grid_image_measure(f: &PatchedMap, k: &IntervalSet, n: usize, grid: usize, exec: Exec) -> f64 {
    let cell = 1.0 / grid as f64;
    let mut segs = Vec::new();
    for part in k.parts() {
        let (a, b) = part.to_f64();
        // Sample spacing from the largest orbit derivative seen at a few probes.
        let lip = (0..=8)
            .map(|j| orbit_derivative(f, a + (b - a) * j as f64 / 8.0, n))
            .fold(1.0f64, f64::max);
        let step = cell / (8.0 * lip);
        let count = (((b - a) / step).ceil() as usize).max(1);
        let ys = exec.map_range(count + 1, |j| {
            let mut x = a + (b - a) * j as f64 / count as f64;
            for _ in 0..n {
                x = f.eval_f64(x);
            }
            x.rem_euclid(1.0)
        });
        for w in ys.windows(2) {
            let d = w[1] - w[0];
            let d = d - d.round();
            if d.abs() > cell {
                continue;
            }
            let (lo, hi) = if d >= 0.0 { (w[0], w[0] + d) } else { (w[0] + d, w[0]) };
            if lo < 0.0 {
                segs.push((lo + 1.0, 1.0));
                segs.push((0.0, hi));
            } else if hi > 1.0 {
                segs.push((lo, 1.0));
                segs.push((0.0, hi - 1.0));
            } else {
                segs.push((lo, hi));
            }
        }
    }
    segs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut total, mut end) = (0.0, f64::NEG_INFINITY);
    for (lo, hi) in segs {
        if hi <= end {
            continue;
        }
        total += hi - lo.max(end);
        end = hi;
    }
    total
}

fn orbit_derivative(f: &PatchedMap, mut x: f64, n: usize) -> f64 {
    let mut d = 1.0f64;
    for _ in 0..n {
        d *= f.deriv_f64(x).abs();
        x = f.eval_f64(x);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::CircleMap;
    use crate::scalar::q;

    fn patched(f: CircleMap) -> PatchedMap {
        PatchedMap::unpatched(f)
    }

    #[test]
    fn identity_is_rejected_with_a_witness() {
        let k = BoxSet::from(IntervalSet::interval(q(1, 10), q(1, 1)));
        let v = verify_certificate(&patched(CircleMap::identity()), &k, 5, &q(1, 10)).unwrap();
        assert!(!v.pass);
        assert!(v.witness.unwrap().contains("m(f^N K)"));
    }

    #[test]
    fn halving_escapes() {
        let f = patched(CircleMap::halving());
        let v = verify_certificate(&f, &BoxSet::unit(1), 4, &q(1, 10)).unwrap();
        assert!(v.pass, "{:?}", v.witness);
        assert_eq!(v.certificate.image_bound, q(1, 16));
        assert_eq!(v.certificate.mode, Mode::Exact);
        match search_certificate(&f, &q(1, 10), 6, 20, 256, Exec::Sequential).unwrap() {
            Search::Found(v) => assert_eq!(v.certificate.n, 4),
            Search::Exhausted { .. } => panic!("halving has an escape certificate"),
        }
    }

    #[test]
    fn doubling_has_no_certificate_at_small_budget() {
        let f = patched(CircleMap::doubling());
        assert!(matches!(search_certificate(&f, &q(1, 10), 3, 10, 256, Exec::Sequential).unwrap(), Search::Exhausted { .. }));
    }

    #[test]
    fn averages() {
        let d = kb_average(&patched(CircleMap::doubling()), 8, 1 << 10, 32, Exec::default());
        assert!((d.total() - 1.0).abs() < 1e-9);
        assert!(d.l1_from_uniform() < 1e-2);
        let id = kb_average(&patched(CircleMap::identity()), 8, 1 << 10, 32, Exec::Sequential);
        assert!(id.mass.iter().all(|m| (m - 1.0 / 1024.0).abs() < 1e-15));
        let h = patched(CircleMap::halving());
        let a = kb_average(&h, 4, 1 << 10, 32, Exec::Sequential);
        let b = kb_average(&h, 64, 1 << 10, 32, Exec::Sequential);
        assert!(concentration_statistic(&b, 0.9) < concentration_statistic(&a, 0.9));
        assert!(d.density_csv().starts_with("cell,mass\n0,"));
        assert_eq!(d.profile_csv(&[0.5]).lines().count(), 2);
    }

    #[test]
    fn grid_image_agrees_with_exact() {
        let f = patched(CircleMap::tripling());
        let k = IntervalSet::interval(q(1, 10), q(1, 7));
        let exact = f.image_n(&k, 2).measure();
        let g = grid_image_measure(&f, &k, 2, 1 << 12, Exec::default());
        assert!((g - scalar::to_f64(&exact)).abs() <= 4.0 / 4096.0);
    }

    #[test]
    fn grid_image_resolves_sub_cell_components() {
        // Forty arcs far below the cell width, spread over distinct cells.
        let f = patched(CircleMap::doubling());
        let parts = (0..40).map(|i| Interval::new(q(i, 40), q(i, 40) + q(1, 1 << 20))).collect();
        let k = IntervalSet::from_intervals(parts);
        let exact = scalar::to_f64(&f.image_n(&k, 3).measure());
        let g = grid_image_measure(&f, &k, 3, 1 << 10, Exec::default());
        assert!((g - exact).abs() < 1e-9, "{g} vs {exact}");
    }
}
