use num::{One, Signed, Zero};

use crate::scalar::{self, Scalar};

/// Even cubic smoothstep profile: 1 on `|x| <= 1 - delta`, 0 on `|x| >= 1`,
/// `3s^2 - 2s^3` with `s = (1 - |x|)/delta` in between. `sup |rho'| = 3/(2 delta)`.
#[derive(Clone, Debug)]
pub struct Bump {
    delta: Scalar,
    df: f64,
}

impl PartialEq for Bump {
    fn eq(&self, o: &Self) -> bool {
        self.delta == o.delta
    }
}

impl Eq for Bump {}

impl Bump {
    pub fn new(delta: Scalar) -> Self {
        assert!(delta > Scalar::zero() && delta <= Scalar::one(), "bump ramp must lie in (0, 1]");
        let df = scalar::to_f64(&delta);
        Bump { delta, df }
    }

    pub fn delta(&self) -> &Scalar {
        &self.delta
    }

    pub fn eval(&self, x: &Scalar) -> Scalar {
        let a = x.abs();
        if a >= Scalar::one() {
            return Scalar::zero();
        }
        let s = (Scalar::one() - a) / &self.delta;
        if s >= Scalar::one() {
            return Scalar::one();
        }
        &s * &s * (scalar::int(3) - scalar::int(2) * &s)
    }

    pub fn deriv(&self, x: &Scalar) -> Scalar {
        let a = x.abs();
        if a >= Scalar::one() {
            return Scalar::zero();
        }
        let s = (Scalar::one() - &a) / &self.delta;
        if s >= Scalar::one() {
            return Scalar::zero();
        }
        let ds = scalar::int(6) * &s * (Scalar::one() - &s) / &self.delta;
        if x.is_positive() {
            -ds
        } else {
            ds
        }
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let a = x.abs();
        if a >= 1.0 {
            return 0.0;
        }
        let s = (1.0 - a) / self.df;
        if s >= 1.0 {
            return 1.0;
        }
        s * s * (3.0 - 2.0 * s)
    }

    pub fn deriv_f64(&self, x: f64) -> f64 {
        let a = x.abs();
        if a >= 1.0 {
            return 0.0;
        }
        let s = (1.0 - a) / self.df;
        if s >= 1.0 {
            return 0.0;
        }
        let ds = 6.0 * s * (1.0 - s) / self.df;
        if x > 0.0 {
            -ds
        } else {
            ds
        }
    }

    pub fn sup_deriv(&self) -> Scalar {
        scalar::q(3, 2) / &self.delta
    }
}
