//! Exact integer and rational primitives: primitive triples, p-adic
//! valuations and absolute values, prime utilities.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rational point `(a/c, b/c)` of the affine plane as a coprime integer
/// triple with `c >= 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimitiveTriple {
    a: BigInt,
    b: BigInt,
    c: BigInt,
}

impl PrimitiveTriple {
    pub fn new(a: BigInt, b: BigInt, c: BigInt) -> Result<Self> {
        if !c.is_positive() {
            return Err(Error::Domain(format!("denominator must be positive, got {c}")));
        }
        let g = a.gcd(&b).gcd(&c);
        if !g.is_one() {
            return Err(Error::Domain(format!("({a}, {b}, {c}) is not primitive (gcd {g})")));
        }
        Ok(PrimitiveTriple { a, b, c })
    }

    pub fn from_i64(a: i64, b: i64, c: i64) -> Result<Self> {
        Self::new(a.into(), b.into(), c.into())
    }

    pub fn origin() -> Self {
        PrimitiveTriple { a: BigInt::zero(), b: BigInt::zero(), c: BigInt::one() }
    }

    pub fn a(&self) -> &BigInt {
        &self.a
    }
    pub fn b(&self) -> &BigInt {
        &self.b
    }
    pub fn c(&self) -> &BigInt {
        &self.c
    }

    /// Affine coordinates `(a/c, b/c)`.
    pub fn coordinates(&self) -> (BigRational, BigRational) {
        (
            BigRational::new(self.a.clone(), self.c.clone()),
            BigRational::new(self.b.clone(), self.c.clone()),
        )
    }

    /// The point translated by an integral vector; stays primitive.
    pub fn translate(&self, t1: &BigInt, t2: &BigInt) -> Self {
        PrimitiveTriple { a: &self.a + t1 * &self.c, b: &self.b + t2 * &self.c, c: self.c.clone() }
    }

    /// `a^2 + b^2 + c^2`.
    pub fn norm_squared(&self) -> BigInt {
        &self.a * &self.a + &self.b * &self.b + &self.c * &self.c
    }
}

impl fmt::Display for PrimitiveTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.a, self.b, self.c)
    }
}

/// Clears denominators of `(x1, x2)`.
pub fn normalize_point(x1: &BigRational, x2: &BigRational) -> PrimitiveTriple {
    let c = x1.denom().lcm(x2.denom());
    let a = x1.numer() * (&c / x1.denom());
    let b = x2.numer() * (&c / x2.denom());
    let g = a.gcd(&b).gcd(&c);
    PrimitiveTriple { a: a / &g, b: b / &g, c: c / g }
}

/// A normalized p-adic absolute value `p^(-valuation)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PAdicValue {
    pub prime: u64,
    pub valuation: i64,
}

impl PAdicValue {
    pub fn one(prime: u64) -> Self {
        PAdicValue { prime, valuation: 0 }
    }

    pub fn to_rational(&self) -> BigRational {
        let p = BigInt::from(self.prime);
        let mag = num_traits::pow(p, self.valuation.unsigned_abs() as usize);
        if self.valuation >= 0 {
            BigRational::new(BigInt::one(), mag)
        } else {
            BigRational::from_integer(mag)
        }
    }

    pub fn to_f64(&self) -> f64 {
        (self.prime as f64).powi(-(self.valuation as i32))
    }
}

/// `v_p(n)` for a nonzero integer.
pub fn int_valuation(n: &BigInt, p: u64) -> Option<i64> {
    if n.is_zero() {
        return None;
    }
    let p = BigInt::from(p);
    let mut n = n.abs();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(&p);
        if !r.is_zero() {
            return Some(v);
        }
        n = q;
        v += 1;
    }
}

/// `v_p(q)` for a nonzero rational, so that `|q|_p = p^(-v)`.
pub fn valuation(q: &BigRational, p: u64) -> Result<i64> {
    if q.is_zero() {
        return Err(Error::Domain("valuation of zero is +infinity".into()));
    }
    if !is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    Ok(int_valuation(q.numer(), p).unwrap() - int_valuation(q.denom(), p).unwrap())
}

/// `|q|_p` as an exact power of `p`; `None` for `q = 0`.
pub fn padic_abs(q: &BigRational, p: u64) -> Option<PAdicValue> {
    valuation(q, p).ok().map(|valuation| PAdicValue { prime: p, valuation })
}

/// `|q|_inf * prod_p |q|_p`, evaluated exactly over the primes dividing
/// numerator and denominator.
pub fn product_formula(q: &BigRational) -> Result<BigRational> {
    if q.is_zero() {
        return Err(Error::Domain("product formula needs a nonzero rational".into()));
    }
    let mut acc = q.abs();
    let mut primes = prime_factors(q.numer());
    primes.extend(prime_factors(q.denom()));
    primes.sort_unstable();
    primes.dedup();
    for p in primes {
        acc *= padic_abs(q, p).unwrap().to_rational();
    }
    Ok(acc)
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for d in [2u64, 3, 5, 7, 11, 13] {
        if n % d == 0 {
            return n == d;
        }
    }
    let mut d = 17u64;
    while d.saturating_mul(d) <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Distinct prime divisors of `|n|` in increasing order (empty for 0 and ±1).
pub fn prime_factors(n: &BigInt) -> Vec<u64> {
    let mut n = n.abs();
    let mut out = Vec::new();
    if n.is_zero() {
        return out;
    }
    if let Some(small) = n.to_u64() {
        return prime_factors_u64(small);
    }
    let mut d = 2u64;
    while BigInt::from(d) * BigInt::from(d) <= n {
        let bd = BigInt::from(d);
        if (&n % &bd).is_zero() {
            out.push(d);
            while (&n % &bd).is_zero() {
                n /= &bd;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > BigInt::one() {
        out.push(n.to_u64().expect("cofactor exceeds u64"));
    }
    out
}

pub fn prime_factors_u64(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Primes `<= n` by the sieve of Eratosthenes.
pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

pub fn gcd_i64(a: i64, b: i64) -> i64 {
    a.gcd(&b)
}

pub fn gcd_i128(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}
