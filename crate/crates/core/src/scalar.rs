//! Exact rational scalars and their text form.
//!
//! Rationals are written as `"p/q"` (or `"p"` for integers). Parsing also
//! accepts finite decimals such as `"0.05"` and `"1e-3"`, which are converted
//! exactly.

use std::cmp::Ordering;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Scalar = BigRational;

pub fn int(n: i64) -> Scalar {
    Scalar::from_integer(BigInt::from(n))
}

pub fn q(n: i64, d: i64) -> Scalar {
    Scalar::new(BigInt::from(n), BigInt::from(d))
}

pub fn zero() -> Scalar {
    Scalar::zero()
}

pub fn one() -> Scalar {
    Scalar::one()
}

pub fn half() -> Scalar {
    q(1, 2)
}

pub fn parse(s: &str) -> Result<Scalar> {
    let t = s.trim();
    let bad = || Error::input(format!("not a rational: {s:?}"));
    if t.is_empty() {
        return Err(bad());
    }
    if let Some((a, b)) = t.split_once('/') {
        let n: BigInt = a.trim().parse().map_err(|_| bad())?;
        let d: BigInt = b.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::input(format!("zero denominator in {s:?}")));
        }
        return Ok(Scalar::new(n, d));
    }
    let (mant, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (ip, fp) = mant.split_once('.').unwrap_or((mant, ""));
    if ip.is_empty() && fp.is_empty() {
        return Err(bad());
    }
    if !ip.chars().chain(fp.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits: BigInt = format!("{ip}{fp}0").parse().map_err(|_| bad())?;
    let scale = exp - fp.len() as i32 - 1;
    let ten = BigInt::from(10);
    let mut v = Scalar::from_integer(digits);
    if scale >= 0 {
        v *= Scalar::from_integer(num::pow(ten, scale as usize));
    } else {
        v /= Scalar::from_integer(num::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -v } else { v })
}

pub fn fmt(x: &Scalar) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn to_f64(x: &Scalar) -> f64 {
    if let Some(v) = x.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // Very long numerators and denominators: rescale before dividing.
    let n = x.numer().bits() as i64;
    let d = x.denom().bits() as i64;
    let shift = n.max(d) - 60;
    let nn = (x.numer().abs() >> shift.max(0) as usize).to_f64().unwrap_or(0.0);
    let dd = (x.denom() >> shift.max(0) as usize).to_f64().unwrap_or(1.0);
    let v = nn / dd.max(f64::MIN_POSITIVE);
    if x.is_negative() {
        -v
    } else {
        v
    }
}

/// Exact rational from a finite float.
pub fn from_f64(v: f64) -> Result<Scalar> {
    Scalar::from_float(v).ok_or_else(|| Error::input(format!("non-finite value {v}")))
}

/// Rational from a float rounded down to a multiple of `2^-bits`.
/// Least `m / 2^bits` that is `>= x`.
pub fn dyadic_ceil(x: &Scalar, bits: u32) -> Scalar {
    let den = BigInt::one() << bits;
    let m = (x * Scalar::from_integer(den.clone())).ceil().to_integer();
    Scalar::new(m, den)
}

/// Largest dyadic `m / 2^b` that is `<= x`, for `x > 0`, with `b` chosen so
/// that about `bits` significant bits survive.
pub fn dyadic_floor(x: &Scalar, bits: u32) -> Scalar {
    let lead = x.numer().bits() as i64 - x.denom().bits() as i64;
    let b = (bits as i64 - lead).max(0) as u32;
    let den = BigInt::one() << b;
    Scalar::new((x * Scalar::from_integer(den.clone())).floor().to_integer(), den)
}

pub fn dyadic_below(v: f64, bits: u32) -> Scalar {
    let s = (v * 2f64.powi(bits as i32)).floor();
    Scalar::new(BigInt::from(s as i128), BigInt::from(1u8) << bits as usize)
}

pub fn floor(x: &Scalar) -> BigInt {
    if let Some((n, d)) = small(x) {
        return BigInt::from(n.div_euclid(d));
    }
    x.numer().div_floor(x.denom())
}

/// Fractional part in `[0, 1)`.
pub fn frac(x: &Scalar) -> Scalar {
    x - x.floor()
}

/// Exact comparison; much cheaper than the generic rational ordering when the
/// values fit in 128 bits.
pub fn cmp(a: &Scalar, b: &Scalar) -> Ordering {
    if a.denom() == b.denom() {
        return a.numer().cmp(b.numer());
    }
    if let (Some((n1, d1)), Some((n2, d2))) = (small(a), small(b)) {
        if let (Some(x), Some(y)) = (n1.checked_mul(d2), n2.checked_mul(d1)) {
            return x.cmp(&y);
        }
    }
    (a.numer() * b.denom()).cmp(&(b.numer() * a.denom()))
}

pub fn lt(a: &Scalar, b: &Scalar) -> bool {
    cmp(a, b) == Ordering::Less
}

pub fn le(a: &Scalar, b: &Scalar) -> bool {
    cmp(a, b) != Ordering::Greater
}

pub fn min<'a>(a: &'a Scalar, b: &'a Scalar) -> &'a Scalar {
    if le(a, b) {
        a
    } else {
        b
    }
}

pub fn max<'a>(a: &'a Scalar, b: &'a Scalar) -> &'a Scalar {
    if le(b, a) {
        a
    } else {
        b
    }
}

fn small(x: &Scalar) -> Option<(i128, i128)> {
    Some((x.numer().to_i128()?, x.denom().to_i128()?))
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `n / d` for `d != 0`, reduced.
fn from_small(n: i128, d: i128) -> Scalar {
    let g = gcd(n, d).max(1);
    let (n, d) = if d < 0 { (-n / g, -d / g) } else { (n / g, d / g) };
    Scalar::new_raw(BigInt::from(n), BigInt::from(d))
}

/// `(x + s) * m`, avoiding big-integer arithmetic when everything fits in 128 bits.
pub fn shift_scale(x: &Scalar, s: &Scalar, m: &Scalar) -> Scalar {
    let fast = || {
        let (n, d) = small(x)?;
        let (a, b) = small(s)?;
        let (c, e) = small(m)?;
        let num = n.checked_mul(b)?.checked_add(a.checked_mul(d)?)?;
        let g1 = gcd(num, e).max(1);
        let g2 = gcd(c, d.checked_mul(b)?).max(1);
        let num = (num / g1).checked_mul(c / g2)?;
        let den = (d.checked_mul(b)? / g2).checked_mul(e / g1)?;
        Some(from_small(num, den))
    };
    fast().unwrap_or_else(|| (x + s) * m)
}

/// `m * x + s` with the same fast path as [`shift_scale`].
pub fn mul_add(m: &Scalar, x: &Scalar, s: &Scalar) -> Scalar {
    let fast = || {
        let (a, b) = small(m)?;
        let (n, d) = small(x)?;
        let (c, e) = small(s)?;
        let g1 = gcd(a, d).max(1);
        let g2 = gcd(n, b).max(1);
        let pn = (a / g1).checked_mul(n / g2)?;
        let pd = (b / g2).checked_mul(d / g1)?;
        let g = gcd(pd, e).max(1);
        let num = pn.checked_mul(e / g)?.checked_add(c.checked_mul(pd / g)?)?;
        let den = pd.checked_mul(e / g)?;
        Some(from_small(num, den))
    };
    fast().unwrap_or_else(|| {
        // One reduction instead of the four a chain of rational ops would do.
        let d = m.denom() * x.denom();
        let num = m.numer() * x.numer() * s.denom() + s.numer() * &d;
        reduced(num, d * s.denom())
    })
}

/// `n / d` for `d > 0`, reduced; a shift when `d` is a power of two.
fn reduced(n: BigInt, d: BigInt) -> Scalar {
    let tz = d.trailing_zeros().unwrap_or(0);
    if d.bits() == tz + 1 {
        let s = n.trailing_zeros().unwrap_or(tz).min(tz);
        return Scalar::new_raw(n >> s, d >> s);
    }
    let g = n.gcd(&d);
    if g.is_one() {
        return Scalar::new_raw(n, d);
    }
    Scalar::new_raw(n / &g, d / g)
}


/// `x - j` for an integer `j`; no reduction needed.
pub fn sub_int(x: &Scalar, j: &BigInt) -> Scalar {
    if j.is_zero() {
        return x.clone();
    }
    Scalar::new_raw(x.numer() - j * x.denom(), x.denom().clone())
}

/// Running exact sum with a 128-bit fast path.
pub struct Sum {
    small: Option<(i128, i128)>,
    big: Scalar,
}

impl Default for Sum {
    fn default() -> Self {
        Self::new()
    }
}

impl Sum {
    pub fn new() -> Self {
        Sum { small: Some((0, 1)), big: Scalar::zero() }
    }

    pub fn add(&mut self, x: &Scalar, sign: i128) {
        if let Some(acc) = self.small {
            if let Some(next) = small(x).and_then(|(p, q)| {
                let g = gcd(acc.1, q);
                let d = acc.1.checked_mul(q / g)?;
                let n = acc.0.checked_mul(q / g)?.checked_add(sign.checked_mul(p)?.checked_mul(acc.1 / g)?)?;
                let h = gcd(n, d).max(1);
                Some((n / h, d / h))
            }) {
                self.small = Some(next);
                return;
            }
            self.big += from_small(acc.0, acc.1);
            self.small = None;
        }
        if sign < 0 {
            self.big -= x;
        } else {
            self.big += x;
        }
    }

    pub fn value(self) -> Scalar {
        match self.small {
            Some((n, d)) => self.big + from_small(n, d),
            None => self.big,
        }
    }
}

pub fn pow(x: &Scalar, k: u32) -> Scalar {
    num::pow(x.clone(), k as usize)
}

pub fn json(x: &Scalar) -> serde_json::Value {
    serde_json::Value::String(fmt(x))
}

pub fn from_json(v: &serde_json::Value) -> Result<Scalar> {
    match v {
        serde_json::Value::String(s) => parse(s),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(int(i))
            } else {
                parse(&n.to_string())
            }
        }
        _ => Err(Error::input(format!("expected a rational, got {v}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_forms() {
        assert_eq!(parse("1/3").unwrap(), q(1, 3));
        assert_eq!(parse("-2/4").unwrap(), q(-1, 2));
        assert_eq!(parse("7").unwrap(), int(7));
        assert_eq!(parse("0.05").unwrap(), q(1, 20));
        assert_eq!(parse("1e-3").unwrap(), q(1, 1000));
        assert_eq!(parse("-1.5E2").unwrap(), int(-150));
        assert_eq!(parse(".5").unwrap(), q(1, 2));
        assert!(parse("1/0").is_err());
        assert!(parse("abc").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn formats_round_trip() {
        for s in ["1/3", "-5/7", "12", "0"] {
            assert_eq!(fmt(&parse(s).unwrap()), s);
        }
    }

    #[test]
    fn frac_and_floor() {
        assert_eq!(frac(&q(7, 3)), q(1, 3));
        assert_eq!(frac(&q(-1, 3)), q(2, 3));
        assert_eq!(floor(&q(-1, 3)), BigInt::from(-1));
    }

    #[test]
    fn huge_to_f64() {
        let big = Scalar::new(BigInt::from(1) << 2000usize, (BigInt::from(1) << 2000usize) * 3);
        assert!((to_f64(&big) - 1.0 / 3.0).abs() < 1e-15);
    }

    fn big_rat() -> impl proptest::strategy::Strategy<Value = Scalar> {
        use proptest::prelude::*;
        (any::<i64>(), 1i64..i64::MAX, 0u32..3).prop_map(|(n, d, k)| {
            let s = Scalar::new(BigInt::from(n), BigInt::from(d));
            // Occasionally push past 128 bits to exercise the fallback.
            s * Scalar::from_integer(BigInt::from(3).pow(40 * k))
        })
    }

    proptest::proptest! {
        #[test]
        fn shift_scale_matches_rational_ops(x in big_rat(), s in big_rat(), m in big_rat()) {
            proptest::prop_assert_eq!(shift_scale(&x, &s, &m), (&x + &s) * &m);
        }

        #[test]
        fn mul_add_matches_rational_ops(m in big_rat(), x in big_rat(), s in big_rat()) {
            proptest::prop_assert_eq!(mul_add(&m, &x, &s), &m * &x + &s);
        }

        #[test]
        fn dyadic_mul_add_matches_rational_ops(a in -1000i64..1000, b in 0u32..200, c in -1000i64..1000, d in 0u32..200, e in -1000i64..1000, f in 0u32..200) {
            let dy = |n: i64, k: u32| Scalar::new(BigInt::from(n) * BigInt::from(3).pow(k / 4), BigInt::one() << k);
            let (m, x, s) = (dy(a, b), dy(c, d), dy(e, f));
            proptest::prop_assert_eq!(mul_add(&m, &x, &s), &m * &x + &s);
        }

        #[test]
        fn dyadic_ceil_is_tight(n in -10_000i64..10_000, d in 1i64..10_000, bits in 0u32..20) {
            let x = q(n, d);
            let c = dyadic_ceil(&x, bits);
            let ulp = Scalar::new(BigInt::one(), BigInt::one() << bits);
            proptest::prop_assert!(c >= x && &c - ulp < x);
        }

        #[test]
        fn floor_matches_rational_floor(a in big_rat()) {
            proptest::prop_assert_eq!(floor(&a), a.floor().to_integer());
        }

        #[test]
        fn dyadic_floor_is_below_and_close(n in 1i64..10_000, d in 1i64..10_000_000) {
            let x = q(n, d);
            let f = dyadic_floor(&x, 8);
            proptest::prop_assert!(f <= x && f.is_positive());
            proptest::prop_assert!(&f * q(257, 256) >= x * q(255, 256));
        }

        #[test]
        fn sub_int_matches_rational_ops(x in big_rat(), j in -5i64..5) {
            proptest::prop_assert_eq!(sub_int(&x, &BigInt::from(j)), &x - int(j));
        }

        #[test]
        fn cmp_matches_rational_order(a in big_rat(), b in big_rat()) {
            proptest::prop_assert_eq!(cmp(&a, &b), a.cmp(&b));
            proptest::prop_assert_eq!(cmp(&a, &a), std::cmp::Ordering::Equal);
        }

        #[test]
        fn sum_matches_rational_ops(xs in proptest::collection::vec((big_rat(), proptest::bool::ANY), 0..20)) {
            let mut acc = Sum::new();
            let mut want = Scalar::zero();
            for (x, neg) in &xs {
                acc.add(x, if *neg { -1 } else { 1 });
                if *neg { want -= x } else { want += x }
            }
            proptest::prop_assert_eq!(acc.value(), want);
        }
    }
}
