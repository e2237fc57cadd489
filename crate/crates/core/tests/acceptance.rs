//! Acceptance harness: one PASS or FAIL line per criterion.
//!
//! Runs with `cargo test --release --test acceptance`. Failing criteria are
//! reported, not hidden; set `NOACIM_ACCEPTANCE_STRICT=1` to make any FAIL
//! turn the exit status non-zero.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use noacim::escape::{concentration_statistic, grid_image_measure, kb_average, verify_certificate};
use noacim::exec::Exec;
use noacim::geometry::{BoxSet, Interval, IntervalSet};
use noacim::linearize::linearize_on;
use noacim::maps::{CircleMap, PatchedMap};
use noacim::pipeline::{rotation_demo, run, PipelineConfig, PipelineReport};
use noacim::rokhlin::{build_tower, is_n_good, merge_good, BaseChoice, TowerParams};
use noacim::scalar::{self, q, Scalar};
use noacim::slicing::{build_compressor, check_jacobian_near_id, normalize_sequence, plan, random_sequence, verify_shrink};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CAP: usize = 1 << 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn f64_of(x: &Scalar) -> f64 {
    scalar::to_f64(x)
}

fn tower_on_doubling() -> Outcome {
    let t0 = Instant::now();
    let f = CircleMap::doubling();
    let params = TowerParams { n0: 4, l: 1, eps0: q(1, 10), depth: 20, cap: CAP };
    let t = match build_tower(&f, &params, &BaseChoice::Search) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("tower construction failed: {e}")),
    };
    let secs = t0.elapsed().as_secs_f64();
    let mut disjoint = true;
    for i in 0..t.levels.len() {
        for j in i + 1..t.levels.len() {
            disjoint &= t.levels[i].interior_disjoint(&t.levels[j]);
        }
    }
    let sum_ok = t.total > q(9, 10);
    let head_ok = t.head < q(1, 4) + q(1, 10);
    let time_ok = secs < 10.0;
    outcome(
        disjoint && sum_ok && head_ok && time_ok,
        format!(
            "levels disjoint {disjoint}, level sum {:.4} (need > 0.9), head {:.4} (need < 0.35), {secs:.2}s (need < 10s)",
            f64_of(&t.total),
            f64_of(&t.head)
        ),
    )
}

/// One to three arcs on the 1/512 grid, each at most 1/32 long.
fn random_arcs(rng: &mut ChaCha8Rng) -> IntervalSet {
    let parts = (0..rng.gen_range(1..=3))
        .map(|_| {
            let a = rng.gen_range(0..512);
            let len = rng.gen_range(1..=16).min(512 - a);
            Interval::new(q(a, 512), q(a + len, 512))
        })
        .collect();
    IntervalSet::from_intervals(parts)
}

fn random_good(f: &CircleMap, n: usize, rng: &mut ChaCha8Rng) -> IntervalSet {
    loop {
        let a = random_arcs(rng);
        if is_n_good(f, &a, n, CAP).unwrap().good {
            return a;
        }
    }
}

fn merging() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tol = q(1, 10_000);
    let mut worst = Scalar::from_integer(0.into());
    let mut tried = 0;
    for (name, f) in [("doubling", CircleMap::doubling()), ("tripling", CircleMap::tripling())] {
        for _ in 0..100 {
            let n = rng.gen_range(1..=4);
            let (a, b) = (random_good(&f, n, &mut rng), random_good(&f, n, &mut rng));
            let m = match merge_good(&f, &a, &b, n, 12, CAP) {
                Ok(m) => m,
                Err(e) => return outcome(false, format!("{name}, N = {n}: merge failed: {e}")),
            };
            let good = is_n_good(&f, &m.set, n, CAP).unwrap();
            if !good.good {
                return outcome(false, format!("{name}, N = {n}: merged set returns at {:?}", good.witness));
            }
            if m.uncovered > tol {
                return outcome(false, format!("{name}, N = {n}: {} of A u B lies outside the hat", scalar::fmt(&m.uncovered)));
            }
            if m.uncovered > worst {
                worst = m.uncovered.clone();
            }
            tried += 1;
        }
    }
    outcome(true, format!("{tried} pairs merged, all N-good, worst uncovered mass {}", scalar::fmt(&worst)))
}

/// Random point near the support of compressor `c`: a horizontal part in
/// `scale * lam^{-n} C_i` and a vertical part within `scale` heights.
fn near_support(seq: &noacim::slicing::NormalizedSeq, i: usize, lam_n: f64, height: f64, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let h = seq.d - 1;
    let s = DVector::from_iterator(h, (0..h).map(|_| rng.gen_range(-1.0..=1.0)));
    let mut x: Vec<f64> = (&seq.m[i] * s * (scale / lam_n)).iter().copied().collect();
    x.push(rng.gen_range(-1.0..=1.0) * scale * height);
    x
}

fn compressors() -> Outcome {
    let t0 = Instant::now();
    let (eps, delta) = (q(3, 10), q(2, 5));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_dev, mut min_margin, mut shrink_checks, mut id_points) = (0.0f64, f64::INFINITY, 0usize, 0usize);
    for s in 0..50 {
        let len = rng.gen_range(17..=22);
        let ls = random_sequence(&mut rng, 2, len, 2, 10.0);
        let seq = match normalize_sequence(&ls) {
            Ok(x) => x,
            Err(e) => return outcome(false, format!("sequence {s}: {e}")),
        };
        let p = match plan(&seq, &eps, &delta) {
            Ok(p) => p,
            Err(e) => return outcome(false, format!("sequence {s}: {e}")),
        };
        if p.kappa != q(39, 40) || p.k != 17 {
            return outcome(false, format!("plan has kappa {} and k {}", scalar::fmt(&p.kappa), p.k));
        }
        for i in 1..=p.n {
            let c = build_compressor(i, &seq, &p);
            let rep = check_jacobian_near_id(&seq, &c, 10_000, &mut rng);
            worst_dev = worst_dev.max(rep.max_deviation);
            if rep.max_deviation >= 0.3 {
                return outcome(false, format!("sequence {s}, compressor {i}: jacobian deviation {:.4} at {:?}", rep.max_deviation, rep.witness));
            }
            let mut outside = 0;
            while outside < 1000 {
                let x = near_support(&seq, i, c.lam_n(), c.height(), 3.0, &mut rng);
                if c.in_support(&x) {
                    continue;
                }
                outside += 1;
                if c.eval(&x) != x {
                    return outcome(false, format!("sequence {s}, compressor {i}: moves {x:?} outside its support"));
                }
            }
            id_points += outside;
        }
        for i in p.k..=p.n {
            let v = match verify_shrink(&seq, &p, i, 10_000, s * 100 + i as u64, Exec::default()) {
                Ok(v) => v,
                Err(e) => return outcome(false, format!("sequence {s}, i = {i}: {e}")),
            };
            if !v.ok || !(v.margin > 0.0) {
                return outcome(false, format!("sequence {s}, i = {i}: shrink fails, margin {:e}", v.margin));
            }
            min_margin = min_margin.min(v.margin);
            shrink_checks += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        secs < 300.0,
        format!(
            "50 sequences: max jacobian deviation {worst_dev:.4} (need < 0.3), {id_points} outside points fixed exactly, \
             {shrink_checks} shrink checks with min margin {min_margin:.3e}, {secs:.1}s (need < 300s)"
        ),
    )
}

fn linearization() -> Outcome {
    let f = CircleMap::doubling_with_sine_surrogate(q(1, 10));
    let (gamma, delta) = (q(1, 5), q(1, 20));
    let mut bounds = Vec::new();
    let mut ratio = None;
    for h in 0..=3 {
        let r0 = q(1, 1000 << h);
        let l = match linearize_on(&f, &BoxSet::unit(1), &gamma, &r0, &delta) {
            Ok(l) => l,
            Err(e) => return outcome(false, format!("r0 = {}: {e}", scalar::fmt(&r0))),
        };
        if h == 0 {
            ratio = Some(l.ratio.clone());
        }
        bounds.push(l.c1_bound);
    }
    let ratio = ratio.unwrap();
    let ratio_ok = ratio > q(4, 5);
    let bound_ok = bounds[0] < q(1, 10);
    let monotone = bounds.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = bounds.iter().map(|b| format!("{:.5}", f64_of(b))).collect();
    outcome(
        ratio_ok && bound_ok && monotone,
        format!("m(V)/m(U) = {:.4} (need > 0.8), C1 bounds over r0 halvings [{}] (need first < 0.1, decreasing)", f64_of(&ratio), shown.join(", ")),
    )
}

fn describe(r: &PipelineReport) -> String {
    let s3 = &r.step3;
    format!(
        "m(K) {:.4}, m(g^k K) {:.4}, parts outside {:.4} uncovered {:.4} rims {:.4} low {:.4}, C1 {:.3} of budget {}",
        f64_of(&s3.measure_k),
        f64_of(&s3.image),
        f64_of(&s3.parts.outside),
        f64_of(&s3.parts.uncovered),
        f64_of(&s3.parts.rims),
        f64_of(&s3.parts.low),
        f64_of(&r.c1_total()),
        scalar::fmt(&r.c1_budget)
    )
}

fn pipeline_checks(r: &PipelineReport, eps: &Scalar) -> bool {
    let s3 = &r.step3;
    let p = &s3.parts;
    s3.measure_k > q(3, 5)
        && s3.image < q(1, 10)
        && p.outside < *eps
        && p.uncovered < *eps
        && p.rims <= *eps
        && p.low < *eps
        && r.c1_total() < r.c1_budget
        && s3.certificate.pass
}

fn pipeline_on_doubling() -> Outcome {
    let t0 = Instant::now();
    let eps = q(1, 10);
    let r = run(&CircleMap::doubling(), &PipelineConfig::new(eps.clone()));
    let secs = t0.elapsed().as_secs_f64();
    match r {
        Ok(r) => {
            let ok = pipeline_checks(&r, &eps) && r.holds() && secs < 300.0;
            outcome(ok, format!("{}, {secs:.1}s; failures: {:?}", describe(&r), r.failures))
        }
        Err(e) => outcome(false, format!("stopped after {secs:.1}s: {e}")),
    }
}

/// The rotation demonstration: the same construction on a rational rotation,
/// where the tower exists. Reported for information and reused by the oracles.
fn rotation_run() -> (Duration, Result<(CircleMap, PipelineReport), String>) {
    let t0 = Instant::now();
    let r = rotation_demo(&q(1, 10), &scalar::int(8))
        .and_then(|(f, cfg)| run(&f, &cfg).map(|r| (f, r)))
        .map_err(|e| e.to_string());
    (t0.elapsed(), r)
}

fn oracles(demo: &Result<(CircleMap, PipelineReport), String>) -> Outcome {
    const G: usize = 1 << 16;
    let doubling = PatchedMap::unpatched(CircleMap::doubling());
    let avg = kb_average(&doubling, 20, G, 32, Exec::default());
    let l1 = avg.l1_from_uniform();
    let uniform_ok = l1 < 1e-2;
    let (f, r) = match demo {
        Ok((f, r)) => (f, r),
        Err(e) => return outcome(false, format!("doubling density L1 {l1:.2e}; no perturbed map to check: {e}")),
    };
    let (g, k_set, k) = (&r.step2.g, &r.step3.k_set, r.step1.k);
    let exact = f64_of(&r.step3.image);
    let grid = grid_image_measure(g, k_set, k, G, Exec::default());
    let gap = (grid - exact).abs();
    let n = 4 * k;
    let cf = concentration_statistic(&kb_average(&PatchedMap::unpatched(f.clone()), n, G, 32, Exec::default()), 0.5);
    let cg = concentration_statistic(&kb_average(g, n, G, 32, Exec::default()), 0.5);
    let conc_ok = cg < cf;
    outcome(
        uniform_ok && gap < 1e-3 && conc_ok,
        format!(
            "doubling density L1 {l1:.2e} (need < 1e-2); perturbed rotation: grid m(g^k K) {grid:.5} vs exact {exact:.5} (gap {gap:.2e}, need < 1e-3), \
             concentration at 1/2 for g {:.4} vs f {:.4}",
            f64_of(&cg),
            f64_of(&cf)
        ),
    )
}

/// `m(f^n K)` for the doubling map on a union of cells of width 1/64, by
/// pushing the cell mask forward.
fn doubling_image_cells(mask: &[bool], n: usize) -> usize {
    let g = mask.len();
    let mut cur = mask.to_vec();
    for _ in 0..n {
        let mut next = vec![false; g];
        for (c, on) in cur.iter().enumerate() {
            if *on {
                next[(2 * c) % g] = true;
                next[(2 * c + 1) % g] = true;
            }
        }
        cur = next;
    }
    cur.iter().filter(|x| **x).count()
}

fn mask_set(mask: &[bool]) -> IntervalSet {
    let g = mask.len() as i64;
    let parts = mask.iter().enumerate().filter(|(_, on)| **on).map(|(c, _)| Interval::new(q(c as i64, g), q(c as i64 + 1, g))).collect();
    IntervalSet::from_intervals(parts)
}

fn rejection() -> Outcome {
    let eps = q(1, 10);
    let identity = PatchedMap::unpatched(CircleMap::identity());
    let k = IntervalSet::interval(q(1, 10), scalar::one());
    let v = match verify_certificate(&identity, &BoxSet::from(k.clone()), 5, &eps) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("identity check errored: {e}")),
    };
    if v.pass || v.witness.as_deref().is_none_or(|w| w.is_empty() || w.contains('\n')) {
        return outcome(false, format!("identity certificate not rejected with a one-line witness: {:?}", v.witness));
    }
    // Random cell unions under doubling, judged against the cell oracle.
    let doubling = PatchedMap::unpatched(CircleMap::doubling());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut failing, mut passing) = (0, 0);
    for _ in 0..200 {
        let density = rng.gen_range(0.5..1.0);
        let mask: Vec<bool> = (0..64).map(|_| rng.gen_bool(density)).collect();
        let n = rng.gen_range(0..4);
        let m_k = mask.iter().filter(|x| **x).count();
        let m_img = doubling_image_cells(&mask, n);
        let should_pass = q(m_k as i64, 64) > q(9, 10) && q(m_img as i64, 64) < eps;
        let v = verify_certificate(&doubling, &BoxSet::from(mask_set(&mask)), n, &eps).unwrap();
        if v.pass != should_pass {
            return outcome(false, format!("verdict {} disagrees with the cell oracle for N = {n}", v.pass));
        }
        if !v.pass {
            if v.witness.as_deref().is_none_or(|w| w.is_empty() || w.contains('\n')) {
                return outcome(false, "a failing certificate has no one-line witness");
            }
            failing += 1;
        } else {
            passing += 1;
        }
    }
    outcome(failing > 0, format!("identity rejected ({}); {failing} failing certificates rejected with witnesses, {passing} passing", v.witness.unwrap()))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    report("tower on the doubling map", guarded(tower_on_doubling));
    report("merging good sets", guarded(merging));
    report("compressors for random linear chains", guarded(compressors));
    report("linearization of the smooth surrogate", guarded(linearization));
    report("pipeline on the doubling map", guarded(pipeline_on_doubling));
    let (took, demo) = rotation_run();
    match &demo {
        Ok((_, r)) => println!("INFO rotation demo ({:.1}s, holds {}): {}", took.as_secs_f64(), r.holds(), describe(r)),
        Err(e) => println!("INFO rotation demo failed after {:.1}s: {e}", took.as_secs_f64()),
    }
    report("grid and averaging oracles", guarded(|| oracles(&demo)));
    report("certificate rejection", guarded(rejection));
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 && std::env::var("NOACIM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
