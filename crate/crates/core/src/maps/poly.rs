use num::{Signed, Zero};

use crate::scalar::{self, Scalar};

/// Polynomial with rational coefficients, `c[0] + c[1] x + ...`.
#[derive(Clone, Debug)]
pub struct Poly {
    c: Vec<Scalar>,
    cf: Vec<f64>,
}

impl PartialEq for Poly {
    fn eq(&self, o: &Self) -> bool {
        self.c == o.c
    }
}

impl Eq for Poly {}

impl Poly {
    pub fn new(mut c: Vec<Scalar>) -> Self {
        while c.len() > 1 && c.last().is_some_and(|v| v.is_zero()) {
            c.pop();
        }
        if c.is_empty() {
            c.push(Scalar::zero());
        }
        let cf = c.iter().map(scalar::to_f64).collect();
        Poly { c, cf }
    }

    pub fn coeffs(&self) -> &[Scalar] {
        &self.c
    }

    pub fn degree(&self) -> usize {
        self.c.len() - 1
    }

    pub fn eval(&self, x: &Scalar) -> Scalar {
        let mut v = Scalar::zero();
        for a in self.c.iter().rev() {
            v = v * x + a;
        }
        v
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.cf.iter().rev().fold(0.0, |v, a| v * x + a)
    }

    pub fn deriv(&self) -> Poly {
        if self.c.len() == 1 {
            return Poly::new(vec![Scalar::zero()]);
        }
        Poly::new(self.c.iter().enumerate().skip(1).map(|(k, a)| a * scalar::int(k as i64)).collect())
    }

    /// Certified enclosure of the range over `[lo, hi]` by interval Horner
    /// evaluation on `pieces` equal subintervals.
    pub fn range(&self, lo: &Scalar, hi: &Scalar, pieces: usize) -> (Scalar, Scalar) {
        let n = pieces.max(1);
        let step = (hi - lo) / scalar::int(n as i64);
        let mut best: Option<(Scalar, Scalar)> = None;
        for k in 0..n {
            let a = lo + &step * scalar::int(k as i64);
            let b = if k + 1 == n { hi.clone() } else { &a + &step };
            let (u, v) = self.horner_interval(&a, &b);
            best = Some(match best {
                None => (u, v),
                Some((p, q)) => (scalar::min(&p, &u).clone(), scalar::max(&q, &v).clone()),
            });
        }
        best.expect("at least one piece")
    }

    fn horner_interval(&self, a: &Scalar, b: &Scalar) -> (Scalar, Scalar) {
        let mut lo = Scalar::zero();
        let mut hi = Scalar::zero();
        for c in self.c.iter().rev() {
            let p = [&lo * a, &lo * b, &hi * a, &hi * b];
            lo = p.iter().min().unwrap().clone() + c;
            hi = p.iter().max().unwrap().clone() + c;
        }
        (lo, hi)
    }

    /// Certified upper bound for `sup |p|` over `[lo, hi]`.
    pub fn sup_abs(&self, lo: &Scalar, hi: &Scalar, pieces: usize) -> Scalar {
        let (u, v) = self.range(lo, hi, pieces);
        scalar::max(&u.abs(), &v.abs()).clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    #[test]
    fn eval_and_deriv() {
        let p = Poly::new(vec![q(1, 1), q(0, 1), q(3, 1)]);
        assert_eq!(p.eval(&q(1, 2)), q(7, 4));
        assert_eq!(p.deriv().eval(&q(1, 2)), q(3, 1));
        assert_eq!(p.deriv().deriv().degree(), 0);
    }

    #[test]
    fn range_encloses_samples() {
        let p = Poly::new(vec![q(0, 1), q(1, 1), q(-3, 1), q(2, 1)]);
        let (u, v) = p.range(&q(0, 1), &q(1, 1), 16);
        for k in 0..=100 {
            let y = p.eval(&q(k, 100));
            assert!(u <= y && y <= v);
        }
    }
}
