//! Local and global heights on the blow-up and on projective space.
//!
//! Divisor basis: `D_0` (strict transform of the line at infinity) and the
//! exceptional curves `D_1, ..., D_r`. For `1 <= k <= r`
//!
//! ```text
//! H_{k,p}(x) = max(1, |x|_p) / max(1, |l_k(x)|_p)
//! H_{k,inf}(x) = sqrt(1 + |x|^2) / sqrt(1 + l_k(x)^2)
//! ```
//!
//! and `H_0` is always obtained from `H_0 * prod_k H_k = H_{O(1)}`.

use std::ops::{Add, Index};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::arith::{int_valuation, prime_factors, PAdicValue, PrimitiveTriple};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::surface::SurfaceConfig;

/// A (complexified) divisor class `s_0 D_0 + ... + s_r D_r`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PicardVector<T> {
    s: Vec<T>,
}

impl<T> PicardVector<T> {
    pub fn new(s: Vec<T>) -> Self {
        assert!(!s.is_empty(), "a Picard vector has at least the D_0 coordinate");
        PicardVector { s }
    }

    pub fn r(&self) -> usize {
        self.s.len() - 1
    }

    pub fn as_slice(&self) -> &[T] {
        &self.s
    }

    pub fn s0(&self) -> &T {
        &self.s[0]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.s.iter()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> PicardVector<U> {
        PicardVector { s: self.s.iter().map(f).collect() }
    }
}

impl<T: Scalar> PicardVector<T> {
    /// `K_X^{-1} = 3 D_0 + 2 (D_1 + ... + D_r)`.
    pub fn anticanonical(r: usize) -> Self {
        let mut s = vec![T::from_int(2); r + 1];
        s[0] = T::from_int(3);
        PicardVector { s }
    }

    /// The pull-back of `O(1)`, `D_0 + D_1 + ... + D_r`.
    pub fn hyperplane(r: usize) -> Self {
        PicardVector { s: vec![T::one(); r + 1] }
    }

    pub fn scale(&self, t: &T) -> Self {
        self.map(|x| x.clone() * t.clone())
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.s.iter().map(|x| x.real_part()).collect()
    }

    /// All real parts nonnegative.
    pub fn is_effective(&self) -> bool {
        self.real_parts().iter().all(|&x| x >= 0.0)
    }

    /// Ampleness on real classes: every `s_k > 0` and `s_0 > s_1 + ... + s_r`.
    pub fn is_ample(&self) -> bool {
        let re = self.real_parts();
        re[1..].iter().all(|&x| x > 0.0) && re[0] > re[1..].iter().sum::<f64>()
    }
}

impl<T: Scalar> Add for &PicardVector<T> {
    type Output = PicardVector<T>;
    fn add(self, rhs: Self) -> PicardVector<T> {
        assert_eq!(self.s.len(), rhs.s.len());
        PicardVector { s: self.s.iter().zip(&rhs.s).map(|(a, b)| a.clone() + b.clone()).collect() }
    }
}

impl<T> Index<usize> for PicardVector<T> {
    type Output = T;
    fn index(&self, k: usize) -> &T {
        &self.s[k]
    }
}

/// `finite * sqrt(arch_sq)` kept as exact parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeightValue {
    pub finite: BigRational,
    pub arch_sq: BigRational,
}

impl HeightValue {
    pub fn one() -> Self {
        HeightValue { finite: BigRational::one(), arch_sq: BigRational::one() }
    }

    /// Exact square of the height.
    pub fn squared(&self) -> BigRational {
        &self.finite * &self.finite * &self.arch_sq
    }

    pub fn value(&self) -> f64 {
        self.ln().exp()
    }

    pub fn ln(&self) -> f64 {
        ln_rational(&self.finite) + 0.5 * ln_rational(&self.arch_sq)
    }

    pub fn mul(&self, other: &HeightValue) -> HeightValue {
        HeightValue { finite: &self.finite * &other.finite, arch_sq: &self.arch_sq * &other.arch_sq }
    }

    pub fn recip(&self) -> HeightValue {
        HeightValue { finite: self.finite.recip(), arch_sq: self.arch_sq.recip() }
    }

    pub fn powi(&self, e: i64) -> HeightValue {
        let f = rational_powi(&self.finite, e);
        let a = rational_powi(&self.arch_sq, e);
        HeightValue { finite: f, arch_sq: a }
    }

    /// `H <= bound` decided on exact squares.
    pub fn le_rational(&self, bound: &BigRational) -> bool {
        self.squared() <= bound * bound
    }
}

pub(crate) fn rational_powi(x: &BigRational, e: i64) -> BigRational {
    let m = num_traits::pow(x.clone(), e.unsigned_abs() as usize);
    if e >= 0 {
        m
    } else {
        m.recip()
    }
}

/// Natural logarithm of a positive rational without overflow.
pub(crate) fn ln_rational(x: &BigRational) -> f64 {
    ln_bigint(x.numer()) - ln_bigint(x.denom())
}

pub(crate) fn ln_bigint(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits < 1000 {
        return n.to_f64().unwrap().abs().ln();
    }
    let shift = bits - 64;
    let top: BigInt = n.abs() >> shift;
    top.to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

fn check_index(config: &SurfaceConfig, k: usize, allow_zero: bool) -> Result<()> {
    if k > config.r() || (!allow_zero && k == 0) {
        return Err(Error::Domain(format!("divisor index {k} out of range for r = {}", config.r())));
    }
    Ok(())
}

/// `log_p max(1, |y|_p)` for `y = num / den`.
fn log_max1(num: &BigInt, den: &BigInt, p: u64) -> i64 {
    match int_valuation(num, p) {
        None => 0,
        Some(vn) => (int_valuation(den, p).unwrap() - vn).max(0),
    }
}

/// `H_{k,p}(x)` from the local formulas (not via the global gcd shortcut).
pub fn local_height_finite(config: &SurfaceConfig, k: usize, x: &PrimitiveTriple, p: u64) -> Result<PAdicValue> {
    check_index(config, k, true)?;
    let c = x.c();
    // log_p max(1, ||x||_p) with ||x||_p = max(|x_1|_p, |x_2|_p)
    let h_o = log_max1(x.a(), c, p).max(log_max1(x.b(), c, p));
    let exc = |j: usize| -> i64 {
        let l = config.form(j).eval_big(x.a(), x.b());
        h_o - log_max1(&l, c, p)
    };
    let e = if k == 0 { h_o - (1..=config.r()).map(exc).sum::<i64>() } else { exc(k) };
    Ok(PAdicValue { prime: p, valuation: -e })
}

/// `H_{k,inf}(x)` with its square stored exactly.
pub fn local_height_arch(config: &SurfaceConfig, k: usize, x: &PrimitiveTriple) -> Result<HeightValue> {
    check_index(config, k, true)?;
    let (x1, x2) = x.coordinates();
    let one = BigRational::one();
    let outer = &one + &x1 * &x1 + &x2 * &x2;
    let exc = |j: usize| -> BigRational {
        let f = config.form(j);
        let l = &x1 * BigRational::from_integer(f.u.into()) + &x2 * BigRational::from_integer(f.v.into());
        &outer / (&one + &l * &l)
    };
    let arch_sq = if k == 0 {
        (1..=config.r()).fold(outer.clone(), |acc, j| acc / exc(j))
    } else {
        exc(k)
    };
    Ok(HeightValue { finite: one, arch_sq })
}

/// Global `H_k(x)` for `1 <= k <= r` in closed form:
/// `gcd(c, l_k(a, b)) * sqrt((a^2 + b^2 + c^2) / (c^2 + l_k(a, b)^2))`.
pub fn global_height_component(config: &SurfaceConfig, k: usize, x: &PrimitiveTriple) -> Result<HeightValue> {
    check_index(config, k, false)?;
    let l = config.form(k).eval_big(x.a(), x.b());
    let g = x.c().gcd(&l);
    let c2 = x.c() * x.c();
    Ok(HeightValue {
        finite: BigRational::from_integer(g),
        arch_sq: BigRational::new(x.norm_squared(), c2 + &l * &l),
    })
}

/// `H_{O(1)}(x) = sqrt(a^2 + b^2 + c^2)`.
pub fn hyperplane_height(x: &PrimitiveTriple) -> HeightValue {
    HeightValue { finite: BigRational::one(), arch_sq: BigRational::from_integer(x.norm_squared()) }
}

/// Global `H_0 = H_{O(1)} / prod_k H_k`.
pub fn global_height_boundary(config: &SurfaceConfig, x: &PrimitiveTriple) -> HeightValue {
    (1..=config.r()).fold(hyperplane_height(x), |acc, k| {
        acc.mul(&global_height_component(config, k, x).unwrap().recip())
    })
}

/// Global `H_k`, `0 <= k <= r`.
pub fn global_height(config: &SurfaceConfig, k: usize, x: &PrimitiveTriple) -> Result<HeightValue> {
    check_index(config, k, true)?;
    Ok(if k == 0 { global_height_boundary(config, x) } else { global_height_component(config, k, x)? })
}

/// `H_k` as the product of the local heights over every place (only primes
/// dividing `c` contribute at the finite places).
pub fn place_by_place_height(config: &SurfaceConfig, k: usize, x: &PrimitiveTriple) -> Result<HeightValue> {
    let mut h = local_height_arch(config, k, x)?;
    for p in prime_factors(x.c()) {
        h.finite *= local_height_finite(config, k, x, p)?.to_rational();
    }
    Ok(h)
}

/// `H(s; x) = prod_k H_k(x)^{s_k}` for a real class.
pub fn height_bundle<F: Float + FromPrimitive>(config: &SurfaceConfig, s: &PicardVector<F>, x: &PrimitiveTriple) -> Result<F> {
    if s.r() != config.r() {
        return Err(Error::Domain(format!("Picard vector has r = {}, configuration has r = {}", s.r(), config.r())));
    }
    let mut ln = 0.0f64;
    for k in 0..=config.r() {
        ln += s[k].to_f64().unwrap() * global_height(config, k, x)?.ln();
    }
    Ok(F::from_f64(ln.exp()).unwrap())
}

/// `log H_k(x)` for every `k`, assembled from the exact parts.
pub fn log_heights(config: &SurfaceConfig, x: &PrimitiveTriple) -> Vec<f64> {
    (0..=config.r()).map(|k| global_height(config, k, x).unwrap().ln()).collect()
}

/// Exact `H(s; x)` for an integral class.
pub fn height_bundle_exact(config: &SurfaceConfig, s: &[i64], x: &PrimitiveTriple) -> Result<HeightValue> {
    if s.len() != config.r() + 1 {
        return Err(Error::Domain("Picard vector length does not match the configuration".into()));
    }
    let mut h = HeightValue::one();
    for (k, &e) in s.iter().enumerate() {
        h = h.mul(&global_height(config, k, x)?.powi(e));
    }
    Ok(h)
}

/// Closed form of the anticanonical height squared:
/// `(a^2+b^2+c^2)^{3-r} * prod_k (c^2 + l_k^2) / gcd(c, l_k)^2`.
pub fn anticanonical_height_squared(config: &SurfaceConfig, x: &PrimitiveTriple) -> BigRational {
    let n2 = BigRational::from_integer(x.norm_squared());
    let mut acc = rational_powi(&n2, 3 - config.r() as i64);
    let c2 = x.c() * x.c();
    for f in config.forms() {
        let l = f.eval_big(x.a(), x.b());
        let g = x.c().gcd(&l);
        acc *= BigRational::new(&c2 + &l * &l, &g * &g);
    }
    acc
}

/// `sqrt(sum x_i^2)` for a coprime vector (finite places contribute 1).
pub fn pn_height(x: &[BigInt]) -> Result<f64> {
    let sq = pn_height_squared(x)?;
    Ok(ln_bigint(&sq).mul_add(0.5, 0.0).exp())
}

pub fn pn_height_squared(x: &[BigInt]) -> Result<BigInt> {
    if x.iter().all(|v| v.is_zero()) {
        return Err(Error::Domain("the zero vector is not a projective point".into()));
    }
    let g = x.iter().fold(BigInt::zero(), |g, v| g.gcd(v));
    if !g.is_one() {
        return Err(Error::Domain("coordinates are not coprime".into()));
    }
    Ok(x.iter().map(|v| v * v).sum())
}
