//! Exact rational helpers: parsing/formatting, safe float conversion, and
//! rigorous comparison of a rational against `e^x` for rational `x`.

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

pub type Rat = BigRational;

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Parse `p/q` or a plain integer.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let num: BigInt = p.trim().parse().ok()?;
        let den: BigInt = q.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        Some(Rat::new(num, den))
    } else {
        let num: BigInt = s.parse().ok()?;
        Some(Rat::from_integer(num))
    }
}

/// Format as `p/q`, or `p` when the denominator is 1.
pub fn fmt_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Natural log of a positive BigInt; exact to f64 precision for any size.
fn ln_bigint(x: &BigInt) -> f64 {
    debug_assert!(x.is_positive());
    let bits = x.bits();
    if bits <= 52 {
        return (x.to_f64().unwrap()).ln();
    }
    let shift = bits - 52;
    let top: BigInt = x >> shift;
    (top.to_f64().unwrap()).ln() + shift as f64 * std::f64::consts::LN_2
}

/// ln of a positive rational, robust to huge numerators/denominators.
pub fn ln_rat(r: &Rat) -> f64 {
    debug_assert!(r.is_positive());
    ln_bigint(r.numer()) - ln_bigint(r.denom())
}

/// Rational to f64, falling back to exp(ln) when the parts overflow f64.
pub fn rat_to_f64(r: &Rat) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    sign * ln_rat(&r.abs()).exp()
}

/// Compare `r` against `e^x` for rational `r` and `x`, exactly.
///
/// Works by interval refinement of the Taylor series of `e^p` on integer
/// powers; equality cannot occur for positive rational `r` and nonzero
/// rational `x`, so the refinement always terminates.
pub fn cmp_rat_exp(r: &Rat, x: &Rat) -> Ordering {
    if !r.is_positive() {
        return Ordering::Less; // e^x > 0
    }
    if x.is_zero() {
        return r.cmp(&Rat::one());
    }
    if x.is_negative() {
        // r vs e^{-y}  has the same ordering as  e^y vs 1/r
        return cmp_exp_rat_vs(&-x.clone(), &r.recip());
    }
    cmp_exp_rat_vs(x, r).reverse()
}

/// Compare `e^{p/q}` (with p/q > 0) against positive rational `t`.
fn cmp_exp_rat_vs(x: &Rat, t: &Rat) -> Ordering {
    debug_assert!(x.is_positive() && t.is_positive());
    let p = x.numer().to_biguint().expect("positive");
    let q = x.denom().to_biguint().expect("positive");
    // e^{p/q} vs t  <=>  e^p vs t^q   (both sides positive, x^q monotone)
    let tq = rat_pow(t, &q);
    cmp_exp_int_vs(&p, &tq)
}

fn rat_pow(t: &Rat, q: &BigUint) -> Rat {
    let mut acc = Rat::one();
    let mut base = t.clone();
    let mut e = q.clone();
    let two = BigUint::from(2u32);
    while !e.is_zero() {
        if (&e % &two).is_one() {
            acc *= &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    acc
}

/// Compare `e^p` (integer p >= 1) against positive rational `t` by Taylor
/// partial sums with an explicit remainder bound.
fn cmp_exp_int_vs(p: &BigUint, t: &Rat) -> Ordering {
    let p_int = BigInt::from_biguint(Sign::Plus, p.clone());
    let p_usize = p.to_usize().expect("desk-scale exponent");
    let mut n = (2 * p_usize).max(8);
    loop {
        // S = sum_{k=0..n} p^k / k!, remainder R <= 2 * p^{n+1} / (n+1)!
        // (valid once n + 2 >= 2p, making the tail ratio <= 1/2).
        let mut term = Rat::one();
        let mut sum = Rat::one();
        for k in 1..=n {
            term = term * Rat::new(p_int.clone(), BigInt::from(k));
            sum += &term;
        }
        let next = term.clone() * Rat::new(p_int.clone(), BigInt::from(n + 1));
        let upper = &sum + &next * rat_int(2);
        if *t < sum {
            return Ordering::Greater; // e^p > S > t
        }
        if *t > upper {
            return Ordering::Less;
        }
        n *= 2;
    }
}

/// Sum of a slice of rationals.
pub fn rat_sum<'a>(items: impl IntoIterator<Item = &'a Rat>) -> Rat {
    let mut acc = Rat::zero();
    for r in items {
        acc += r;
    }
    acc
}
