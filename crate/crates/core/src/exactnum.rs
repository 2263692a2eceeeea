//! Exact rationals, `ℓ`-adic valuations and products of rational powers.
//!
//! A [`PowProduct`] is a formal product `∏ bᵢ^{eᵢ}` with positive rational
//! bases and rational exponents. Such values are usually irrational, so
//! comparisons never go through floating point: both sides are raised to
//! the least common multiple of the exponent denominators and the resulting
//! rationals are compared as big integers.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision rational, always in lowest terms with positive denominator.
pub type Rat = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumError {
    #[error("valuation of zero is undefined")]
    ZeroValuation,
    #[error("{0} is not a prime")]
    NotPrime(u64),
    #[error("power product bases must be positive, got {0}")]
    NonPositiveBase(Rat),
    #[error("cannot parse {0:?} as an exact rational")]
    Parse(String),
}

/// `n/d` as a [`Rat`]. Panics on `d == 0`.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Prime factorization of `|n|` by trial division, as ascending `(prime, exponent)` pairs.
pub fn factor_u64(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            let mut e = 0;
            while n % d == 0 {
                n /= d;
                e += 1;
            }
            out.push((d, e));
        }
        d += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Exponent of `ell` in a nonzero integer.
pub fn valuation_int(x: &BigInt, ell: u64) -> Result<u64, NumError> {
    if !is_prime(ell) {
        return Err(NumError::NotPrime(ell));
    }
    if x.is_zero() {
        return Err(NumError::ZeroValuation);
    }
    let ell = BigInt::from(ell);
    let mut x = x.abs();
    let mut v = 0;
    loop {
        let (q, r) = x.div_rem(&ell);
        if !r.is_zero() {
            return Ok(v);
        }
        x = q;
        v += 1;
    }
}

/// `ord_ℓ(x)`: the integer `v` with `x = ℓ^v · u`, `u` a unit at `ℓ`.
pub fn valuation(x: &Rat, ell: u64) -> Result<i64, NumError> {
    if x.is_zero() {
        return Err(NumError::ZeroValuation);
    }
    let num = valuation_int(x.numer(), ell)? as i64;
    let den = valuation_int(x.denom(), ell)? as i64;
    Ok(num - den)
}

/// Parses `a`, `a/b` or a finite decimal such as `-6.93` into an exact rational.
pub fn parse_rat(s: &str) -> Result<Rat, NumError> {
    let err = || NumError::Parse(s.to_string());
    let t = s.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        let (neg, whole) = match whole.strip_prefix('-') {
            Some(w) => (true, w),
            None => (false, whole.strip_prefix('+').unwrap_or(whole)),
        };
        let digits_ok = |p: &str| p.chars().all(|c| c.is_ascii_digit());
        if !digits_ok(whole) || !digits_ok(frac) || (whole.is_empty() && frac.is_empty()) {
            return Err(err());
        }
        let joined = format!("{whole}{frac}");
        let mag: BigInt = if joined.is_empty() { BigInt::zero() } else { joined.parse().map_err(|_| err())? };
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let r = Rat::new(mag, scale);
        return Ok(if neg { -r } else { r });
    }
    let n: BigInt = t.parse().map_err(|_| err())?;
    Ok(Rat::from_integer(n))
}

/// Renders a rational as `num/den`, or `num` when integral.
pub fn fmt_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Formal product of rational powers of positive rationals.
///
/// Canonical form: bases strictly increasing, no base equal to one and no
/// zero exponent. Structural equality is equality of canonical forms; value
/// comparison goes through [`powprod_cmp`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PowProduct {
    factors: Vec<(Rat, Rat)>,
}

impl PowProduct {
    pub fn one() -> Self {
        PowProduct { factors: Vec::new() }
    }

    pub fn new<I>(factors: I) -> Result<Self, NumError>
    where
        I: IntoIterator<Item = (Rat, Rat)>,
    {
        let mut raw: Vec<(Rat, Rat)> = Vec::new();
        for (b, e) in factors {
            if !b.is_positive() {
                return Err(NumError::NonPositiveBase(b));
            }
            raw.push((b, e));
        }
        Ok(Self::canonical(raw))
    }

    /// `base^exp` for an integer base.
    pub fn power(base: u64, exp: Rat) -> Self {
        assert!(base > 0, "base must be positive");
        Self::canonical(vec![(Rat::from_integer(BigInt::from(base)), exp)])
    }

    /// A positive rational as a one-factor product.
    pub fn from_rat(r: Rat) -> Result<Self, NumError> {
        Self::new([(r, Rat::one())])
    }

    fn canonical(mut raw: Vec<(Rat, Rat)>) -> Self {
        raw.sort_by(|a, b| a.0.cmp(&b.0));
        let mut factors: Vec<(Rat, Rat)> = Vec::with_capacity(raw.len());
        for (b, e) in raw {
            match factors.last_mut() {
                Some(last) if last.0 == b => last.1 += e,
                _ => factors.push((b, e)),
            }
        }
        factors.retain(|(b, e)| !e.is_zero() && !b.is_one());
        PowProduct { factors }
    }

    pub fn factors(&self) -> &[(Rat, Rat)] {
        &self.factors
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn mul(&self, other: &PowProduct) -> PowProduct {
        let raw = self.factors.iter().chain(other.factors.iter()).cloned().collect();
        Self::canonical(raw)
    }

    pub fn inv(&self) -> PowProduct {
        PowProduct { factors: self.factors.iter().map(|(b, e)| (b.clone(), -e)).collect() }
    }

    pub fn pow(&self, exp: &Rat) -> PowProduct {
        Self::canonical(self.factors.iter().map(|(b, e)| (b.clone(), e * exp)).collect())
    }

    /// Returns `(k, r)` with `self^k = r` exactly, `k` the lcm of the exponent denominators.
    pub fn exact_power(&self) -> (u64, Rat) {
        let k = self
            .factors
            .iter()
            .fold(BigInt::one(), |acc, (_, e)| acc.lcm(e.denom()));
        let k_rat = Rat::from_integer(k.clone());
        let mut num = BigInt::one();
        let mut den = BigInt::one();
        for (b, e) in &self.factors {
            let scaled = (e * &k_rat).to_integer();
            let n = scaled.abs().to_u32().expect("exponent too large for exact comparison");
            let (up, down) = if scaled.sign() == Sign::Minus {
                (b.denom(), b.numer())
            } else {
                (b.numer(), b.denom())
            };
            num *= Pow::pow(up, n);
            den *= Pow::pow(down, n);
        }
        (k.to_u64().expect("exponent denominator lcm too large"), Rat::new(num, den))
    }

    /// Exact comparison against a positive rational.
    pub fn cmp_rat(&self, r: &Rat) -> Ordering {
        if !r.is_positive() {
            return Ordering::Greater;
        }
        powprod_cmp(self, &PowProduct::from_rat(r.clone()).expect("positive"))
    }

    /// Correctly rounded (half-up) decimal rendering with `digits` fractional digits.
    pub fn to_decimal(&self, digits: usize) -> String {
        powprod_decimal(self, digits)
    }
}

impl fmt::Display for PowProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        for (i, (b, e)) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            let base = if b.is_integer() { fmt_rat(b) } else { format!("({})", fmt_rat(b)) };
            if e.is_one() {
                write!(f, "{base}")?;
            } else if e.is_integer() && e.is_positive() {
                write!(f, "{base}^{}", fmt_rat(e))?;
            } else {
                write!(f, "{base}^({})", fmt_rat(e))?;
            }
        }
        Ok(())
    }
}

/// Exact ordering of the real values of two power products.
pub fn powprod_cmp(x: &PowProduct, y: &PowProduct) -> Ordering {
    let quotient = x.mul(&y.inv());
    let (_, r) = quotient.exact_power();
    // r = (x/y)^k with k > 0, so x < y iff r < 1
    r.numer().cmp(r.denom())
}

/// Decimal rendering of `x` rounded half-up to `digits` fractional digits.
///
/// `floor(2·10^d·x)` is the floor of a `k`-th root of an exact rational and is
/// computed with integer roots; the rounded value is `⌊(⌊2·10^d·x⌋ + 1) / 2⌋`.
pub fn powprod_decimal(x: &PowProduct, digits: usize) -> String {
    let (k, r) = x.exact_power();
    let k32 = u32::try_from(k).expect("root degree too large");
    let scale = BigInt::from(2u32) * BigInt::from(10u32).pow(digits as u32);
    let scaled = Pow::pow(&scale, k32) * r.numer() / r.denom();
    let doubled = scaled.nth_root(k32);
    let rounded: BigInt = (doubled + 1u32) / 2u32;
    let mut s = rounded.to_string();
    if digits == 0 {
        return s;
    }
    if s.len() <= digits {
        s = format!("{}{}", "0".repeat(digits + 1 - s.len()), s);
    }
    let split = s.len() - digits;
    format!("{}.{}", &s[..split], &s[split..])
}

/// Signed integer as a sign and ascending prime factorization.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Factorization {
    pub negative: bool,
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn of(n: i64) -> Option<Self> {
        if n == 0 {
            return None;
        }
        Some(Factorization { negative: n < 0, factors: factor_u64(n.unsigned_abs()) })
    }

    pub fn from_factors(negative: bool, factors: &[(u64, u32)]) -> Result<Self, NumError> {
        let mut merged: Vec<(u64, u32)> = Vec::new();
        let mut sorted = factors.to_vec();
        sorted.sort_unstable();
        for (p, e) in sorted {
            if !is_prime(p) {
                return Err(NumError::NotPrime(p));
            }
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += e,
                _ => merged.push((p, e)),
            }
        }
        merged.retain(|&(_, e)| e > 0);
        Ok(Factorization { negative, factors: merged })
    }

    pub fn value(&self) -> BigInt {
        let mag: BigInt = self.factors.iter().map(|&(p, e)| Pow::pow(BigInt::from(p), e)).product();
        if self.negative {
            -mag
        } else {
            mag
        }
    }

    /// Parses `1`, `-675`, `3^7*5^4` or `-1*3^3*5^2`.
    pub fn parse(s: &str) -> Result<Self, NumError> {
        let err = || NumError::Parse(s.to_string());
        let t = s.trim();
        let (negative, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        if !body.contains('^') && !body.contains('*') {
            let n: u64 = body.parse().map_err(|_| err())?;
            if n == 0 {
                return Err(err());
            }
            return Ok(Factorization { negative, factors: factor_u64(n) });
        }
        let mut factors = Vec::new();
        for part in body.split('*') {
            let part = part.trim();
            let (p, e) = match part.split_once('^') {
                Some((p, e)) => (p.trim(), e.trim()),
                None => (part, "1"),
            };
            let p: u64 = p.parse().map_err(|_| err())?;
            let e: u32 = e.parse().map_err(|_| err())?;
            if p == 1 {
                continue;
            }
            factors.push((p, e));
        }
        Self::from_factors(negative, &factors)
    }
}

impl fmt::Display for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negative {
            write!(f, "-")?;
        }
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|&(p, e)| if e == 1 { p.to_string() } else { format!("{p}^{e}") })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}
