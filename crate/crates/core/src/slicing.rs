//! Slicing a sequence of linear isomorphisms with near-identity compressors.
//!
//! Given `L_1, ..., L_n` and the parameters `eps`, `delta`, each compressor
//! `H_i` squeezes the vertical coordinate of a thin box by `kappa` and is the
//! identity off the box; `k` consecutive squeezes push the box `V_i` into the
//! thin slab `W_{i-k}`.
//!
//! Coordinates are first rotated so that every map preserves the horizontal
//! hyperplane. The rotations are Householder reflections in floating point and
//! the normalized maps are checked to be block triangular up to a recorded
//! residual; the scalar parameters are exact.

use nalgebra::{DMatrix, DVector};
use num::{One, Zero};
use rand::Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::maps::Bump;
use crate::scalar::{self, Scalar};

/// Square matrix with exact entries and nonzero determinant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix {
    d: usize,
    e: Vec<Scalar>,
}

impl Matrix {
    pub fn new(rows: Vec<Vec<Scalar>>) -> Result<Self> {
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::input("a matrix must be square and non-empty"));
        }
        let m = Matrix { d, e: rows.into_iter().flatten().collect() };
        if m.det().is_zero() {
            return Err(Error::input("matrix is singular"));
        }
        Ok(m)
    }

    pub fn identity(d: usize) -> Self {
        let mut e = vec![Scalar::zero(); d * d];
        for i in 0..d {
            e[i * d + i] = Scalar::one();
        }
        Matrix { d, e }
    }

    pub fn diag(v: &[Scalar]) -> Result<Self> {
        let d = v.len();
        let rows = (0..d).map(|i| (0..d).map(|j| if i == j { v[i].clone() } else { Scalar::zero() }).collect()).collect();
        Matrix::new(rows)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        &self.e[i * self.d + j]
    }

    /// Determinant by fraction-exact elimination.
    pub fn det(&self) -> Scalar {
        let d = self.d;
        let mut a = self.e.clone();
        let mut det = Scalar::one();
        for c in 0..d {
            let Some(p) = (c..d).find(|&r| !a[r * d + c].is_zero()) else {
                return Scalar::zero();
            };
            if p != c {
                for j in 0..d {
                    a.swap(p * d + j, c * d + j);
                }
                det = -det;
            }
            let piv = a[c * d + c].clone();
            det *= &piv;
            for r in c + 1..d {
                let f = &a[r * d + c] / &piv;
                if f.is_zero() {
                    continue;
                }
                for j in c..d {
                    let v = &f * &a[c * d + j];
                    a[r * d + j] -= v;
                }
            }
        }
        det
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| scalar::to_f64(self.get(i, j)))
    }

    pub fn to_json(&self) -> Value {
        Value::Array((0..self.d).map(|i| Value::Array((0..self.d).map(|j| scalar::json(self.get(i, j))).collect())).collect())
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let rows = v.as_array().ok_or_else(|| Error::input("a matrix is an array of rows"))?;
        let rows = rows
            .iter()
            .map(|r| {
                r.as_array()
                    .ok_or_else(|| Error::input("a matrix row is an array"))?
                    .iter()
                    .map(scalar::from_json)
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Matrix::new(rows)
    }
}

pub fn sequence_from_json(v: &Value) -> Result<Vec<Matrix>> {
    let list = v.get("matrices").unwrap_or(v);
    let arr = list.as_array().ok_or_else(|| Error::input("expected a list of matrices"))?;
    let ms = arr.iter().map(Matrix::from_json).collect::<Result<Vec<_>>>()?;
    if let Some(m) = ms.first() {
        if let Some(b) = ms.iter().find(|b| b.dim() != m.dim()) {
            return Err(Error::DimensionMismatch(m.dim(), b.dim()));
        }
    }
    Ok(ms)
}

pub fn sequence_to_json(ls: &[Matrix]) -> Value {
    json!({ "matrices": ls.iter().map(Matrix::to_json).collect::<Vec<_>>() })
}

/// Midpoint between the critical value `1 - eps/(1 + 2/delta)` and 1, or 1/2
/// when every factor in (0, 1) qualifies.
pub fn compute_kappa(eps: &Scalar, delta: &Scalar) -> Scalar {
    let crit = Scalar::one() - eps / (Scalar::one() + scalar::int(2) / delta);
    if crit <= Scalar::zero() {
        scalar::half()
    } else {
        (crit + Scalar::one()) / scalar::int(2)
    }
}

/// Least `k >= 1` with `kappa^k < delta / (1 - delta)`.
pub fn k_for_kappa(kappa: &Scalar, delta: &Scalar) -> usize {
    let target = delta / (Scalar::one() - delta);
    let mut p = kappa.clone();
    let mut k = 1;
    while p >= target {
        p *= kappa;
        k += 1;
    }
    k
}

pub fn compute_k(eps: &Scalar, delta: &Scalar) -> usize {
    k_for_kappa(&compute_kappa(eps, delta), delta)
}

/// A rational `lambda > 1` with `lambda^(3n) < (1 - delta/2) / (1 - delta)`,
/// about halfway (in the exponent) to the bound.
pub fn compute_lambda(n: usize, delta: &Scalar) -> Scalar {
    let r = (Scalar::one() - delta / scalar::int(2)) / (Scalar::one() - delta);
    let e = 3 * n.max(1) as u32;
    let rf = scalar::to_f64(&r);
    let mut excess = rf.powf(1.0 / e as f64) - 1.0;
    loop {
        excess /= 2.0;
        let lam = Scalar::one() + scalar::dyadic_below(excess, 60);
        if lam > Scalar::one() && scalar::pow(&lam, e) < r {
            return lam;
        }
    }
}

/// Sequence rotated so that every map preserves the horizontal hyperplane.
#[derive(Clone, Debug)]
pub struct NormalizedSeq {
    pub original: Vec<Matrix>,
    pub d: usize,
    /// `R_0 = I, R_1, ..., R_n`; `R_i` sends the pulled-back hyperplane `P_i` to the horizontal one.
    pub rotations: Vec<DMatrix<f64>>,
    /// `R_{i-1} L_i R_i^T` with the lower-left block set to zero; index 0 is unused.
    pub normalized: Vec<DMatrix<f64>>,
    /// Largest discarded lower-left entry.
    pub residual: f64,
    /// `M_i`: the horizontal block of `L~_i^{-1} ... L~_1^{-1}`, so `C_i = M_i [-1, 1]^(d-1)`.
    pub m: Vec<DMatrix<f64>>,
    pub m_inv: Vec<DMatrix<f64>>,
    /// Vertical scale of `C_i`-boxes: `alpha_i = |<L~_i^{-1} ... L~_1^{-1} e_d, e_d>|`.
    pub alpha: Vec<f64>,
    /// `|<L~_i e_d, e_d>|`.
    pub beta: Vec<f64>,
}

impl NormalizedSeq {
    pub fn len(&self) -> usize {
        self.original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }

    /// `C_i`-gauge of a horizontal vector.
    pub fn gauge(&self, i: usize, z: &[f64]) -> f64 {
        gauge(&self.m_inv[i], z)
    }

    /// `L~_1 ... L~_i`: frame `i` to frame 0.
    pub fn chain(&self, i: usize) -> DMatrix<f64> {
        let mut g = DMatrix::identity(self.d, self.d);
        for j in 1..=i {
            g *= &self.normalized[j];
        }
        g
    }
}

fn gauge(m_inv: &DMatrix<f64>, z: &[f64]) -> f64 {
    (0..m_inv.nrows()).map(|r| (0..z.len()).map(|c| m_inv[(r, c)] * z[c]).sum::<f64>().abs()).fold(0.0, f64::max)
}

/// Orthogonal `R` with `R n = e_d` for a unit vector `n`; the identity when `n` is already `e_d`.
fn householder(n: &DVector<f64>) -> DMatrix<f64> {
    let d = n.len();
    let mut v = n.clone();
    v[d - 1] -= 1.0;
    let vv = v.dot(&v);
    if vv < 1e-30 {
        return DMatrix::identity(d, d);
    }
    DMatrix::identity(d, d) - (&v * v.transpose()) * (2.0 / vv)
}

pub fn normalize_sequence(ls: &[Matrix]) -> Result<NormalizedSeq> {
    let Some(first) = ls.first() else {
        return Err(Error::input("empty sequence"));
    };
    let d = first.dim();
    if let Some(b) = ls.iter().find(|b| b.dim() != d) {
        return Err(Error::DimensionMismatch(d, b.dim()));
    }
    let h = d - 1;
    let mut normal = DVector::from_fn(d, |i, _| if i == d - 1 { 1.0 } else { 0.0 });
    let mut rotations = vec![DMatrix::identity(d, d)];
    let mut normalized = vec![DMatrix::identity(d, d)];
    let mut residual: f64 = 0.0;
    let mut m = vec![DMatrix::identity(h, h)];
    let mut m_inv = vec![DMatrix::identity(h, h)];
    let mut alpha = vec![1.0];
    let mut beta = vec![1.0];
    for (i, l) in ls.iter().enumerate() {
        let lf = l.to_f64();
        let nn = lf.transpose() * &normal;
        let norm = nn.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Verification(format!("degenerate hyperplane at step {}", i + 1)));
        }
        normal = nn / norm;
        let r = householder(&normal);
        let mut t = &rotations[i] * &lf * r.transpose();
        let scale = t.amax().max(1.0);
        for j in 0..h {
            residual = residual.max(t[(d - 1, j)].abs() / scale);
            t[(d - 1, j)] = 0.0;
        }
        let a = t.view((0, 0), (h, h)).clone_owned();
        let a_inv = a.clone().try_inverse().ok_or_else(|| Error::Verification(format!("horizontal block of step {} is singular", i + 1)))?;
        let c = t[(d - 1, d - 1)];
        m.push(&a_inv * &m[i]);
        m_inv.push(&m_inv[i] * &a);
        alpha.push(alpha[i] / c.abs());
        beta.push(c.abs());
        rotations.push(r);
        normalized.push(t);
    }
    if residual > 1e-9 {
        return Err(Error::Verification(format!("normalization residual {residual:e} is too large")));
    }
    Ok(NormalizedSeq { original: ls.to_vec(), d, rotations, normalized, residual, m, m_inv, alpha, beta })
}

/// Comparison constant of the `C_i`-gauge with the euclidean norm.
fn comparison_constant(m_inv: &DMatrix<f64>) -> f64 {
    (0..m_inv.nrows()).map(|r| m_inv.row(r).norm()).fold(0.0, f64::max)
}

/// Vertices of `[-1, 1]^h`.
fn cube_vertices(h: usize) -> Vec<Vec<f64>> {
    (0..1usize << h).map(|mask| (0..h).map(|j| if mask >> j & 1 == 1 { 1.0 } else { -1.0 }).collect()).collect()
}

/// Checks `B_i[a/lam, b] <= L~_i^{-1} B_{i-1}[a, b] <= B_i[lam a, b]` on vertices.
fn sandwich_holds(seq: &NormalizedSeq, i: usize, lam: f64, a: f64, b: f64) -> bool {
    let d = seq.d;
    let h = d - 1;
    let l = &seq.normalized[i];
    let Some(l_inv) = l.clone().try_inverse() else { return false };
    let slack = 1.0 + 1e-9;
    let inside = |j: usize, x: &DVector<f64>, aa: f64, bb: f64| {
        let z: Vec<f64> = (0..h).map(|c| x[c]).collect();
        seq.gauge(j, &z) <= aa * slack && x[d - 1].abs() <= seq.alpha[j] * bb * slack
    };
    let verts = |j: usize, aa: f64, bb: f64| {
        let mut out = Vec::new();
        for s in cube_vertices(h) {
            let z = &seq.m[j] * DVector::from_vec(s) * aa;
            for sign in [-1.0, 1.0] {
                let mut x = DVector::zeros(d);
                x.rows_mut(0, h).copy_from(&z);
                x[d - 1] = sign * seq.alpha[j] * bb;
                out.push(x);
            }
        }
        out
    };
    let outer = verts(i - 1, a, b).iter().all(|x| inside(i, &(&l_inv * x), lam * a, b));
    let inner = verts(i, a / lam, b).iter().all(|x| inside(i - 1, &(l * x), a, b));
    outer && inner
}

#[derive(Clone, Debug)]
pub struct SlicingPlan {
    pub eps: Scalar,
    pub delta: Scalar,
    pub kappa: Scalar,
    pub k: usize,
    pub n: usize,
    pub lambda: Scalar,
    pub tau_star: Vec<f64>,
    pub tau_prime: Vec<f64>,
    pub tau0: f64,
    pub tau: f64,
    /// Halvings of the derived `tau'` bounds forced by the vertex checks.
    pub halvings: usize,
}

impl SlicingPlan {
    /// Same plan with a different box thickness; it must stay below `tau0`.
    pub fn with_tau(&self, tau: f64) -> Result<SlicingPlan> {
        if !(tau > 0.0 && tau < self.tau0) {
            return Err(Error::pre(format!("tau = {tau:e} must lie in (0, tau0 = {:e})", self.tau0)));
        }
        Ok(SlicingPlan { tau, ..self.clone() })
    }

    pub fn lambda_f64(&self) -> f64 {
        scalar::to_f64(&self.lambda)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "eps": scalar::json(&self.eps),
            "delta": scalar::json(&self.delta),
            "kappa": scalar::json(&self.kappa),
            "k": self.k,
            "n": self.n,
            "lambda": scalar::json(&self.lambda),
            "tau0": self.tau0,
            "tau": self.tau,
            "halvings": self.halvings,
        })
    }
}

/// `tau0 = lam^(-2n) min_i min(tau*_i, tau'_i) / alpha_i`, with `tau*_i = 1/C_i`
/// and `tau'_i = (1 - 1/lam) |c'_i| / |M_i^{-1} b'_i|_inf` for
/// `L~_i^{-1} = [[A', b'], [0, c']]`. Each `tau'_i` is confirmed on vertices and
/// halved until it passes. Returns `(tau0, tau*, tau', halvings)`.
pub fn compute_tau0(seq: &NormalizedSeq, lambda: &Scalar) -> (f64, Vec<f64>, Vec<f64>, usize) {
    let n = seq.len();
    let lam = scalar::to_f64(lambda);
    if seq.d == 1 {
        // Any thickness works in dimension one.
        return (1.0, vec![f64::INFINITY; n + 1], vec![f64::INFINITY; n + 1], 0);
    }
    let d = seq.d;
    let h = d - 1;
    let mut tau_star = vec![f64::INFINITY];
    let mut tau_prime = vec![f64::INFINITY];
    let mut halvings = 0;
    let mut best = f64::INFINITY;
    for i in 1..=n {
        let ts = 1.0 / comparison_constant(&seq.m_inv[i]);
        let t = &seq.normalized[i];
        let c = t[(d - 1, d - 1)];
        let b = t.view((0, d - 1), (h, 1)).clone_owned();
        let a_inv = t.view((0, 0), (h, h)).clone_owned().try_inverse().unwrap();
        let b_prime: Vec<f64> = (&a_inv * b * (-1.0 / c)).iter().copied().collect();
        let g = seq.gauge(i, &b_prime);
        let mut tp = if g == 0.0 { f64::INFINITY } else { (1.0 - 1.0 / lam) / (c.abs() * g) };
        if tp.is_finite() {
            while !sandwich_holds(seq, i, lam, 1.0, tp / seq.alpha[i] * (1.0 - 1e-6)) {
                tp /= 2.0;
                halvings += 1;
                if tp < 1e-300 {
                    break;
                }
            }
        }
        best = best.min(ts.min(tp) / seq.alpha[i]);
        tau_star.push(ts);
        tau_prime.push(tp);
    }
    (best * lam.powi(-2 * n as i32), tau_star, tau_prime, halvings)
}

/// Plan for a normalized sequence, with `tau = tau0 / 2`.
pub fn plan(seq: &NormalizedSeq, eps: &Scalar, delta: &Scalar) -> Result<SlicingPlan> {
    if *eps <= Scalar::zero() {
        return Err(Error::input("eps must be positive"));
    }
    if *delta <= Scalar::zero() || *delta >= Scalar::one() {
        return Err(Error::input("delta must lie in (0, 1)"));
    }
    let kappa = compute_kappa(eps, delta);
    let k = k_for_kappa(&kappa, delta);
    let n = seq.len();
    if n < k {
        return Err(Error::pre(format!("the sequence has {n} maps, fewer than k = {k}")));
    }
    let lambda = compute_lambda(n, delta);
    let (tau0, tau_star, tau_prime, halvings) = compute_tau0(seq, &lambda);
    if !(tau0 > 0.0) {
        return Err(Error::Verification("tau0 underflowed".into()));
    }
    Ok(SlicingPlan { eps: eps.clone(), delta: delta.clone(), kappa, k, n, lambda, tau_star, tau_prime, tau0, tau: tau0 / 2.0, halvings })
}

/// `H_i(z, t) = (z, [1 - (1 - kappa) rho(t / (alpha_i tau)) rho(lam^n |z|_i)] t)`
/// in the normalized frame `i`, with a bump of ramp `delta / 2`.
#[derive(Clone, Debug)]
pub struct Compressor {
    pub i: usize,
    m_inv: DMatrix<f64>,
    alpha: f64,
    one_minus_kappa: f64,
    lam_n: f64,
    tau: f64,
    bump: Bump,
}

pub fn build_compressor(i: usize, seq: &NormalizedSeq, plan: &SlicingPlan) -> Compressor {
    Compressor {
        i,
        m_inv: seq.m_inv[i].clone(),
        alpha: seq.alpha[i],
        one_minus_kappa: scalar::to_f64(&(Scalar::one() - &plan.kappa)),
        lam_n: plan.lambda_f64().powi(plan.n as i32),
        tau: plan.tau,
        bump: Bump::new(&plan.delta / scalar::int(2)),
    }
}

impl Compressor {
    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], f64) {
        (&x[..x.len() - 1], x[x.len() - 1])
    }

    /// Half-height of the support box.
    pub fn height(&self) -> f64 {
        self.alpha * self.tau
    }

    /// Horizontal half-extent scale: the support is `lam^{-n} C_i`.
    pub fn lam_n(&self) -> f64 {
        self.lam_n
    }

    pub fn in_support(&self, x: &[f64]) -> bool {
        let (z, t) = self.split(x);
        t.abs() < self.height() && self.lam_n * gauge(&self.m_inv, z) < 1.0
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let (z, t) = self.split(x);
        let u = t / self.height();
        let g = self.lam_n * gauge(&self.m_inv, z);
        let f = 1.0 - self.one_minus_kappa * self.bump.eval_f64(u) * self.bump.eval_f64(g);
        let mut out = x.to_vec();
        *out.last_mut().unwrap() = f * t;
        out
    }

    /// Gradient of the gauge at `z` (one active row; zero at the origin).
    fn gauge_grad(&self, z: &[f64]) -> Vec<f64> {
        let mut best = (0.0, 0);
        for r in 0..self.m_inv.nrows() {
            let v: f64 = (0..z.len()).map(|c| self.m_inv[(r, c)] * z[c]).sum();
            if v.abs() > best.0 {
                best = (v.abs(), r);
            }
        }
        if best.0 == 0.0 {
            return vec![0.0; z.len()];
        }
        let r = best.1;
        let v: f64 = (0..z.len()).map(|c| self.m_inv[(r, c)] * z[c]).sum();
        (0..z.len()).map(|c| v.signum() * self.m_inv[(r, c)]).collect()
    }

    /// Only the last row differs from the identity.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let (z, t) = self.split(x);
        let hgt = self.height();
        let u = t / hgt;
        let g = self.lam_n * gauge(&self.m_inv, z);
        let (ru, dru) = (self.bump.eval_f64(u), self.bump.deriv_f64(u));
        let (rg, drg) = (self.bump.eval_f64(g), self.bump.deriv_f64(g));
        let mut j = DMatrix::identity(d, d);
        j[(d - 1, d - 1)] = 1.0 - self.one_minus_kappa * rg * (ru + u * dru);
        let grad = self.gauge_grad(z);
        for c in 0..d - 1 {
            j[(d - 1, c)] = -self.one_minus_kappa * t * ru * drg * self.lam_n * grad[c];
        }
        j
    }

    /// Operator norm of `J - I`: the euclidean norm of the last row of `J - I`.
    pub fn deviation(&self, x: &[f64]) -> f64 {
        let mut j = self.jacobian(x);
        let d = x.len();
        j[(d - 1, d - 1)] -= 1.0;
        j.row(d - 1).norm()
    }
}

#[derive(Clone, Debug)]
pub struct JacobianReport {
    pub max_deviation: f64,
    pub witness: Vec<f64>,
    /// Largest gap between the closed-form jacobian and central differences.
    pub fd_gap: f64,
    pub samples: usize,
}

/// Samples of the box `lam^{-n} s C_i x [-s alpha_i tau, s alpha_i tau]`.
fn sample_box(seq: &NormalizedSeq, c: &Compressor, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    let h = seq.d - 1;
    let s: Vec<f64> = (0..h).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let z = &seq.m[c.i] * DVector::from_vec(s) * (scale / c.lam_n);
    let mut x: Vec<f64> = z.iter().copied().collect();
    x.push(rng.gen_range(-1.0..=1.0) * scale * c.height());
    x
}

pub fn check_jacobian_near_id(seq: &NormalizedSeq, c: &Compressor, samples: usize, rng: &mut impl Rng) -> JacobianReport {
    let mut rep = JacobianReport { max_deviation: 0.0, witness: Vec::new(), fd_gap: 0.0, samples };
    let d = seq.d;
    for _ in 0..samples {
        let x = sample_box(seq, c, 1.1, rng);
        let dev = c.deviation(&x);
        if dev > rep.max_deviation || rep.witness.is_empty() {
            rep.max_deviation = dev;
            rep.witness = x.clone();
        }
        // Central differences on the last row, one step per coordinate scale.
        let j = c.jacobian(&x);
        for col in 0..d {
            let step = if col == d - 1 { c.height() } else { 1.0 / c.lam_n * seq.m[c.i].column(col.min(d - 2)).amax() } * 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += step;
            xm[col] -= step;
            let fd = (c.eval(&xp)[d - 1] - c.eval(&xm)[d - 1]) / (2.0 * step);
            let gap = (fd - j[(d - 1, col)]).abs();
            if gap.is_finite() {
                rep.fd_gap = rep.fd_gap.max(gap);
            }
        }
    }
    rep
}

#[derive(Clone, Debug)]
pub struct ShrinkVerdict {
    pub i: usize,
    pub ok: bool,
    /// Smallest relative distance to the boundary of `W_{i-k}`; negative on failure.
    pub margin: f64,
    pub checked: usize,
    /// A failing start point of `V_0` and its orbit through the frames.
    pub witness: Option<(Vec<f64>, Vec<Vec<f64>>)>,
}

impl ShrinkVerdict {
    pub fn to_json(&self) -> Value {
        json!({
            "i": self.i,
            "ok": self.ok,
            "margin": self.margin,
            "checked": self.checked,
            "witness": self.witness.as_ref().map(|(p, orbit)| json!({"start": p, "orbit": orbit})),
        })
    }
}

/// Points of `V_0`: vertices, facet centers and `samples` random points.
fn v0_points(d: usize, delta: f64, tau: f64, samples: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let s = 1.0 - delta;
    let scale = |p: Vec<f64>| -> Vec<f64> {
        let mut p: Vec<f64> = p.into_iter().map(|v| v * s).collect();
        *p.last_mut().unwrap() *= tau;
        p
    };
    let mut pts: Vec<Vec<f64>> = cube_vertices(d).into_iter().map(scale).collect();
    for axis in 0..d {
        for sign in [-1.0, 1.0] {
            let mut p = vec![0.0; d];
            p[axis] = sign;
            pts.push(scale(p));
        }
    }
    for _ in 0..samples {
        pts.push(scale((0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect()));
    }
    pts
}

/// Pushes `V_i` through `H_i, L~_i, ..., H_{i-k+1}, L~_{i-k+1}` and checks
/// the result lies in `W_{i-k}`, testing membership in frame 0.
pub fn verify_shrink(seq: &NormalizedSeq, plan: &SlicingPlan, i: usize, samples: usize, seed: u64, exec: Exec) -> Result<ShrinkVerdict> {
    if i < plan.k || i > plan.n {
        return Err(Error::pre(format!("need k <= i <= n, got i = {i}")));
    }
    if !(plan.tau > 0.0 && plan.tau < plan.tau0) {
        return Err(Error::pre(format!("tau = {:e} must lie in (0, tau0 = {:e})", plan.tau, plan.tau0)));
    }
    let d = seq.d;
    let delta = scalar::to_f64(&plan.delta);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let pts = v0_points(d, delta, plan.tau, samples, &mut rng);
    let into_i = seq.chain(i).try_inverse().ok_or_else(|| Error::Verification("chain is singular".into()))?;
    let to_0 = seq.chain(i - plan.k);
    let comps: Vec<Compressor> = (i - plan.k + 1..=i).map(|j| build_compressor(j, seq, plan)).collect();
    let wt = delta * plan.tau;
    let results = exec.map(&pts, |p| {
        let mut x = &into_i * DVector::from_column_slice(p);
        let mut orbit = vec![x.iter().copied().collect::<Vec<f64>>()];
        for j in (i - plan.k + 1..=i).rev() {
            let h = comps[j - (i - plan.k + 1)].eval(x.as_slice());
            x = &seq.normalized[j] * DVector::from_vec(h);
            orbit.push(x.iter().copied().collect());
        }
        let y = &to_0 * x;
        let zmax = (0..d - 1).map(|c| y[c].abs()).fold(0.0, f64::max);
        let margin = (1.0 - zmax).min(1.0 - y[d - 1].abs() / wt);
        (margin, orbit)
    });
    let mut verdict = ShrinkVerdict { i, ok: true, margin: f64::INFINITY, checked: pts.len(), witness: None };
    for (p, (m, orbit)) in pts.iter().zip(results) {
        if m < verdict.margin {
            verdict.margin = m;
        }
        if !(m > 0.0) && verdict.witness.is_none() {
            verdict.ok = false;
            verdict.witness = Some((p.clone(), orbit));
        }
    }
    Ok(verdict)
}

/// Random invertible matrices with entries in `[-bound, bound]` on a grid of
/// step 1/32 and euclidean condition number at most `cond_max`.
pub fn random_sequence(rng: &mut impl Rng, d: usize, n: usize, bound: i64, cond_max: f64) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let rows: Vec<Vec<Scalar>> = (0..d).map(|_| (0..d).map(|_| scalar::q(rng.gen_range(-32 * bound..=32 * bound), 32)).collect()).collect();
        let Ok(m) = Matrix::new(rows) else { continue };
        let sv = m.to_f64().singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if lo > 0.0 && hi / lo <= cond_max {
            out.push(m);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;
    use rand::SeedableRng;

    #[test]
    fn kappa_and_k_examples() {
        assert_eq!(compute_kappa(&q(1, 2), &q(1, 2)), q(19, 20));
        assert_eq!(compute_kappa(&q(3, 10), &q(2, 5)), q(39, 40));
        assert_eq!(compute_kappa(&int(6), &q(1, 2)), q(1, 2));
        assert_eq!(k_for_kappa(&q(19, 20), &q(1, 2)), 1);
        assert_eq!(compute_k(&q(3, 10), &q(2, 5)), 17);
        let k = compute_kappa(&q(3, 10), &q(2, 5));
        assert!((Scalar::one() - &k) * (Scalar::one() + int(2) / q(2, 5)) < q(3, 10));
    }

    fn int(n: i64) -> Scalar {
        scalar::int(n)
    }

    #[test]
    fn lambda_bound() {
        for n in [1, 5, 22, 100] {
            let l = compute_lambda(n, &q(2, 5));
            assert!(l > Scalar::one());
            assert!(scalar::pow(&l, 3 * n as u32) < q(4, 3));
        }
    }

    #[test]
    fn determinant_and_singularity() {
        let m = Matrix::new(vec![vec![int(1), int(2)], vec![int(3), int(4)]]).unwrap();
        assert_eq!(m.det(), int(-2));
        assert!(Matrix::new(vec![vec![int(1), int(2)], vec![int(2), int(4)]]).is_err());
        let p = Matrix::new(vec![vec![int(0), int(1), int(0)], vec![int(1), int(0), int(0)], vec![int(0), int(0), int(5)]]).unwrap();
        assert_eq!(p.det(), int(-5));
    }

    #[test]
    fn block_triangular_input_needs_no_rotation() {
        let l = Matrix::new(vec![vec![int(2), int(1)], vec![int(0), q(1, 3)]]).unwrap();
        let s = normalize_sequence(&[l.clone(), l]).unwrap();
        for r in &s.rotations {
            assert_eq!(r, &DMatrix::identity(2, 2));
        }
        assert_eq!(s.beta[1], 1.0 / 3.0);
        assert!((s.alpha[2] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn random_pairs_normalize_to_block_triangular() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let ls = random_sequence(&mut rng, 2, 2, 2, 10.0);
            let s = normalize_sequence(&ls).unwrap();
            assert!(s.residual < 1e-12);
            for i in 1..=2 {
                assert_eq!(s.normalized[i][(1, 0)], 0.0);
                // Same map up to the change of frame.
                let back = s.rotations[i - 1].transpose() * &s.normalized[i] * &s.rotations[i];
                assert!((back - ls[i - 1].to_f64()).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_map_scales_tau0() {
        let l = Matrix::diag(&[int(2), q(1, 2)]).unwrap();
        let s = normalize_sequence(&[l]).unwrap();
        assert_eq!(s.alpha[1], 2.0);
        let lam = compute_lambda(1, &q(2, 5));
        let (t0, ts, tp, _) = compute_tau0(&s, &lam);
        assert!(tp[1].is_infinite());
        let lf = scalar::to_f64(&lam);
        assert!((t0 - ts[1] / 2.0 / (lf * lf)).abs() < 1e-15);
    }

    #[test]
    fn one_dimension() {
        let ls: Vec<Matrix> = (0..3).map(|_| Matrix::new(vec![vec![q(1, 2)]]).unwrap()).collect();
        let s = normalize_sequence(&ls).unwrap();
        assert_eq!(s.alpha[3], 8.0);
        let p = plan(&s, &q(1, 2), &q(1, 2)).unwrap();
        assert_eq!(p.tau0, 1.0);
        let v = verify_shrink(&s, &p, 1, 100, 0, Exec::Sequential).unwrap();
        assert!(v.ok && v.margin > 0.0, "{v:?}");
    }

    #[test]
    fn compressor_closed_form() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let ls = random_sequence(&mut rng, 2, 17, 2, 10.0);
        let s = normalize_sequence(&ls).unwrap();
        let p = plan(&s, &q(3, 10), &q(2, 5)).unwrap();
        let c = build_compressor(5, &s, &p);
        // Center axis: pure compression.
        let t = 0.1 * c.height();
        let y = c.eval(&[0.0, t]);
        assert_eq!(y[0], 0.0);
        assert!((y[1] - 0.975 * t).abs() < 1e-15 * t.abs().max(1e-300) * 10.0);
        let j = c.jacobian(&[0.0, t]);
        assert!((j[(1, 1)] - 0.975).abs() < 1e-12 && j[(1, 0)] == 0.0);
        // Off the support: identity, bit for bit.
        let x = [0.0, 2.0 * c.height()];
        assert_eq!(c.eval(&x), x.to_vec());
        let rep = check_jacobian_near_id(&s, &c, 2000, &mut rng);
        assert!(rep.max_deviation < 0.3, "{rep:?}");
        assert!(rep.fd_gap < 1e-4, "{rep:?}");
    }

    #[test]
    fn shrink_holds_for_identity_maps() {
        let ls: Vec<Matrix> = (0..17).map(|_| Matrix::identity(2)).collect();
        let s = normalize_sequence(&ls).unwrap();
        let p = plan(&s, &q(3, 10), &q(2, 5)).unwrap();
        let v = verify_shrink(&s, &p, 17, 500, 3, Exec::Sequential).unwrap();
        assert!(v.ok, "{v:?}");
        // Worst case is the top facet: 1 - kappa^k (1 - delta) / delta.
        let kf = scalar::to_f64(&p.kappa).powi(17);
        assert!((v.margin - (1.0 - kf * 0.6 / 0.4)).abs() < 1e-9, "{}", v.margin);
        assert!(p.with_tau(2.0 * p.tau0).is_err());
    }

    #[test]
    fn compressors_depend_only_on_the_head() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let head = random_sequence(&mut rng, 2, 17, 2, 10.0);
        let mut a = head.clone();
        a.extend(random_sequence(&mut rng, 2, 1, 2, 10.0));
        let mut b = head;
        b.extend(random_sequence(&mut rng, 2, 1, 2, 10.0));
        let (sa, sb) = (normalize_sequence(&a).unwrap(), normalize_sequence(&b).unwrap());
        for i in 1..=17 {
            assert_eq!(sa.m_inv[i], sb.m_inv[i]);
            assert_eq!(sa.alpha[i], sb.alpha[i]);
        }
    }
}
