//! Brute-force p-adic integration.
//!
//! Two independent evaluators live here. [`residue_cell_sums`] classifies every
//! residue class of `p^{-alpha} Z_p^2 / Z_p^2` into the cells on which the
//! local height is constant. [`OracleIntegral`] integrates
//! `H_p(s; x)^{-1} psi_a(x)` over `||x|| <= p^A` by refining balls until the
//! height is constant on each, at any prime, with character sums kept exact.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;

use crate::arith::{int_valuation, is_prime};
use crate::cyclotomic::CyclotomicSum;
use crate::error::{Error, Result};
use crate::fourier::{convergence_domain, BadFactorSource, LocalFactor, Method, Place};
use crate::heights::PicardVector;
use crate::scalar::{prime_power_shifted, Scalar};
use crate::surface::{classify_character, CharacterClass, CharacterKind, LinearForm, SurfaceConfig};

/// Pieces of the partition of `Q_p^2` at a good prime (`k` is 1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Cell {
    /// `Z_p^2`.
    U0,
    /// `||x|| = p^alpha`, `|l_k(x)| = p^{alpha - beta}`, `1 <= beta < alpha`.
    UkAb { k: usize, alpha: u32, beta: u32 },
    /// `||x|| = p^alpha`, `|l_k(x)| <= 1`.
    UkA { k: usize, alpha: u32 },
    /// `||x|| = p^alpha` and every `|l_j(x)| = p^alpha`.
    UA { alpha: u32 },
}

impl Cell {
    pub fn level(&self) -> u32 {
        match *self {
            Cell::U0 => 0,
            Cell::UkAb { alpha, .. } | Cell::UkA { alpha, .. } | Cell::UA { alpha } => alpha,
        }
    }

    pub fn validate(&self, r: usize) -> Result<()> {
        let ok = match *self {
            Cell::U0 => true,
            Cell::UkAb { k, alpha, beta } => (1..=r).contains(&k) && beta >= 1 && beta < alpha,
            Cell::UkA { k, alpha } => (1..=r).contains(&k) && alpha >= 1,
            Cell::UA { alpha } => alpha >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("{self:?} is not a cell for r = {r}")))
        }
    }

    /// Exponents `[e_0, e_1, .., e_r]` with `H_k = p^{e_k}` on the cell.
    pub fn height_exponents(&self, r: usize) -> Vec<i64> {
        let mut e = vec![0i64; r + 1];
        match *self {
            Cell::U0 => {}
            Cell::UkAb { k, alpha, beta } => {
                e[k] = beta as i64;
                e[0] = alpha as i64 - beta as i64;
            }
            Cell::UkA { k, alpha } => e[k] = alpha as i64,
            Cell::UA { alpha } => e[0] = alpha as i64,
        }
        e
    }

    /// All cells with `||x|| = p^alpha`.
    pub fn at_level(r: usize, alpha: u32) -> Vec<Cell> {
        if alpha == 0 {
            return vec![Cell::U0];
        }
        let mut out = vec![Cell::UA { alpha }];
        for k in 1..=r {
            out.push(Cell::UkA { k, alpha });
            out.extend((1..alpha).map(|beta| Cell::UkAb { k, alpha, beta }));
        }
        out
    }
}

fn check_good(config: &SurfaceConfig, p: u64, cell: &Cell) -> Result<()> {
    if !is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    if !config.is_good(p) {
        return Err(Error::BadPrime { p });
    }
    cell.validate(config.r())
}

fn ppow(p: u64, e: i64) -> BigRational {
    let base = BigRational::from_integer(BigInt::from(p));
    if e >= 0 {
        num_traits::pow(base, e as usize)
    } else {
        num_traits::pow(base, (-e) as usize).recip()
    }
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Haar volume of a cell at a good prime.
pub fn cell_volume(config: &SurfaceConfig, p: u64, cell: Cell) -> Result<BigRational> {
    check_good(config, p, &cell)?;
    let pm1 = int(p as i64 - 1);
    Ok(match cell {
        Cell::U0 => BigRational::one(),
        Cell::UkAb { alpha, beta, .. } => ppow(p, 2 * alpha as i64 - beta as i64 - 2) * pm1.clone() * pm1,
        Cell::UkA { alpha, .. } => ppow(p, alpha as i64 - 1) * pm1,
        Cell::UA { alpha } => ppow(p, 2 * alpha as i64 - 2) * pm1 * int(p as i64 + 1 - config.r() as i64),
    })
}

/// `int_cell psi_a` at a prime outside `S(a)`.
pub fn cell_character_integral(config: &SurfaceConfig, p: u64, cell: Cell, a: (i64, i64)) -> Result<BigRational> {
    check_good(config, p, &cell)?;
    let class = classify_character(config, a);
    if !class.is_good_at(p) {
        return Err(Error::BadPrime { p });
    }
    if cell == Cell::U0 {
        return Ok(BigRational::one());
    }
    let r = config.r() as i64;
    let p_i = p as i64;
    let v = match (class.kind, cell) {
        (CharacterKind::Trivial, _) => return cell_volume(config, p, cell),
        (CharacterKind::Generic, Cell::UkAb { .. }) => int(0),
        (CharacterKind::Generic, Cell::UkA { alpha, .. }) => int(if alpha == 1 { -1 } else { 0 }),
        (CharacterKind::Generic, Cell::UA { alpha }) => int(if alpha == 1 { r - 1 } else { 0 }),
        (CharacterKind::Special(s), Cell::UkAb { k, alpha, beta }) => {
            if k == s && beta + 1 == alpha {
                -ppow(p, alpha as i64 - 1) * int(p_i - 1)
            } else {
                int(0)
            }
        }
        (CharacterKind::Special(s), Cell::UkA { k, alpha }) => {
            if k == s {
                ppow(p, alpha as i64 - 1) * int(p_i - 1)
            } else {
                int(if alpha == 1 { -1 } else { 0 })
            }
        }
        (CharacterKind::Special(_), Cell::UA { alpha }) => int(if alpha == 1 { -(p_i + 1 - r) } else { 0 }),
        (_, Cell::U0) => unreachable!(),
    };
    Ok(v)
}

fn val_i128(n: i128, p: i128, cap: u32) -> u32 {
    if n == 0 {
        return cap;
    }
    let mut n = n;
    let mut v = 0;
    while v < cap && n % p == 0 {
        n /= p;
        v += 1;
    }
    v
}

fn checked_modulus(p: u64, e: u32) -> Result<i128> {
    (p as i128)
        .checked_pow(2 * e)
        .filter(|m| *m <= 1i128 << 100)
        .map(|_| (p as i128).pow(e))
        .ok_or_else(|| Error::TruncationTooDeep(format!("p^(2 alpha) = {p}^{} exceeds 2^100", 2 * e)))
}

/// Residue-class classification of the shell `||x|| = p^alpha` (or `Z_p^2`
/// when `alpha = 0`): `x = u / p^alpha` with `u` in `(Z/p^alpha)^2`, each class
/// of volume 1, and `int psi_a` accumulated as an exact cyclotomic sum.
/// The volume of a cell is the sum's [`CyclotomicSum::total`].
pub fn residue_cell_sums(config: &SurfaceConfig, p: u64, alpha: u32, a: (i64, i64)) -> Result<BTreeMap<Cell, CyclotomicSum>> {
    check_good(config, p, &Cell::U0)?;
    let m = checked_modulus(p, alpha)?;
    if m * m > 1 << 28 {
        return Err(Error::TruncationTooDeep(format!("{} residue classes", m * m)));
    }
    let pi = p as i128;
    let mut out: BTreeMap<Cell, CyclotomicSum> = BTreeMap::new();
    for u1 in 0..m {
        for u2 in 0..m {
            let cell = if alpha == 0 {
                Cell::U0
            } else if u1 % pi == 0 && u2 % pi == 0 {
                continue;
            } else {
                let mut found = Cell::UA { alpha };
                for (i, f) in config.forms().iter().enumerate() {
                    let v = val_i128(f.eval(u1, u2).rem_euclid(m), pi, alpha);
                    if v == alpha {
                        found = Cell::UkA { k: i + 1, alpha };
                    } else if v >= 1 {
                        found = Cell::UkAb { k: i + 1, alpha, beta: v };
                    } else {
                        continue;
                    }
                    break;
                }
                found
            };
            let phase = (a.0 as i128 * u1 + a.1 as i128 * u2).rem_euclid(m);
            let entry = match out.entry(cell) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => e.insert(CyclotomicSum::new(p, alpha)?),
            };
            entry.add(phase as u128, 1)?;
        }
    }
    Ok(out)
}

/// `int_{||x|| <= p^A} H_p(s; x)^{-1} psi_a(x) dx` as an `s`-independent list
/// of `(height exponents [e_0..e_r], exact integer volume-weighted character
/// sum)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleIntegral {
    pub p: u64,
    pub alpha_max: u32,
    pub terms: Vec<(Vec<i64>, i128)>,
    pub leaves: usize,
}

pub const DEFAULT_MAX_LEAVES: usize = 1 << 24;

impl OracleIntegral {
    /// Refines `x0 + p^m Z_p^2` (`x0 = u / p^A`, `-A <= m <= 0`) until
    /// `max(1, ||x||)` and every `max(1, |l_k(x)|)` is constant. On such a
    /// ball the integral is `p^{-2m} psi_a(x0)` when `p^{-m} a` is integral
    /// and 0 otherwise. With `full` every ball is refined down to `m = 0`.
    pub fn compute(config: &SurfaceConfig, p: u64, a: (i64, i64), alpha_max: u32, full: bool, max_leaves: usize) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::Domain(format!("{p} is not prime")));
        }
        let big_a = alpha_max;
        let pa = checked_modulus(p, big_a)?;
        let pi = p as i128;
        let a1 = (a.0 as i128).rem_euclid(pa);
        let a2 = (a.1 as i128).rem_euclid(pa);
        let va = val_i128(a1, pi, big_a).min(val_i128(a2, pi, big_a));
        let forms: Vec<LinearForm> = config.forms().to_vec();
        let mut sums: HashMap<Vec<i64>, CyclotomicSum> = HashMap::new();
        let mut leaves = 0usize;
        let mut stack: Vec<(i128, i128, u32, i128)> = vec![(0, 0, 0, 1)];
        while let Some((u1, u2, j, pj)) = stack.pop() {
            let vu = val_i128(u1, pi, big_a).min(val_i128(u2, pi, big_a));
            let vl: Vec<u32> = forms.iter().map(|f| val_i128(f.eval(u1, u2).rem_euclid(pa), pi, big_a)).collect();
            let constant = j == big_a || (!full && vu < j && vl.iter().all(|&v| v < j));
            if !constant {
                for i in 0..pi {
                    for k in 0..pi {
                        stack.push((u1 + i * pj, u2 + k * pj, j + 1, pj * pi));
                    }
                }
                continue;
            }
            leaves += 1;
            if leaves > max_leaves {
                return Err(Error::TruncationTooDeep(format!("more than {max_leaves} balls at p = {p}, alpha_max = {alpha_max}")));
            }
            if va < big_a - j {
                continue;
            }
            let h = (big_a - vu) as i64;
            let mut key = vec![0i64; forms.len() + 1];
            for (k, &v) in vl.iter().enumerate() {
                key[k + 1] = h - (big_a - v) as i64;
            }
            key[0] = h - key[1..].iter().sum::<i64>();
            let vol = pi.pow(2 * (big_a - j));
            let phase = (a1 * u1 + a2 * u2).rem_euclid(pa);
            let entry = match sums.entry(key) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => e.insert(CyclotomicSum::new(p, big_a)?),
            };
            entry.add(phase as u128, vol)?;
        }
        let mut terms = Vec::with_capacity(sums.len());
        for (key, sum) in sums {
            let n = sum.as_integer().ok_or_else(|| {
                Error::Numerical(format!("character sum over a unit-stable height level at p = {p} is not rational"))
            })?;
            if n != 0 {
                terms.push((key, n));
            }
        }
        terms.sort();
        Ok(OracleIntegral { p, alpha_max, terms, leaves })
    }

    /// `sum_terms n * p^{-(s_0 e_0 + .. + s_r e_r)}`.
    pub fn evaluate<T: Scalar>(&self, s: &PicardVector<T>) -> Result<T> {
        let mut total = T::zero();
        for (key, n) in &self.terms {
            if key.len() != s.r() + 1 {
                return Err(Error::Domain("Picard vector length does not match the integral".into()));
            }
            let mut e = T::zero();
            for (k, &ek) in key.iter().enumerate() {
                e = e + T::from_int(ek) * s[k].clone();
            }
            let w = prime_power_shifted(self.p, &-e, 0)
                .ok_or_else(|| Error::Domain("exponent not representable exactly; use a floating-point scalar".into()))?;
            let coeff = T::from_i128(*n).ok_or_else(|| Error::Numerical("oracle coefficient does not fit the scalar type".into()))?;
            total = total + coeff * w;
        }
        Ok(total)
    }
}

/// Majorant of `|int_{||x|| > p^A} H_p(s; x)^{-1} dx|` at real parts `sigma`.
///
/// On the shell `||x|| = p^n` write `d_k = n - log_p max(1, |l_k(x)|)`, so
/// `|H^{-1}| = p^{-sigma_0 n + sum_k e_k d_k}` with `e_k = sigma_0 - sigma_k`.
/// Two forms with `d_j, d_k > v_p(det(l_j, l_k))` would force `||x|| < p^n`,
/// so all forms but one have `d_j <= v`, costing at most
/// `C_p = p^{v sum_j max(e_j, 0)}`. Unimodular completion of `l_k` gives
/// `vol{||x|| = p^n, d_k >= d} <= p^{2n - d}`, and `0 <= d <= n`, so the shell
/// is at most `C_p sum_k (n + 1) x_k^n` with
/// `x_k = p^{-(sigma_0 - 2 - max(0, e_k - 1))}`. Summing `n > A`:
/// `C_p sum_k x_k^{A+1} ((A + 2) - (A + 1) x_k) / (1 - x_k)^2`.
/// For `r = 0` the shell volume is at most `p^{2n}` and the bound is
/// `x^{A+1} / (1 - x)` with `x = p^{2 - sigma_0}`.
pub fn oracle_tail_bound(config: &SurfaceConfig, p: u64, sigma: &[f64], alpha_max: u32) -> Result<f64> {
    if sigma.len() != config.r() + 1 {
        return Err(Error::Domain("Picard vector length does not match the configuration".into()));
    }
    let pf = p as f64;
    let big_a = alpha_max as f64;
    let s0 = sigma[0];
    let ratio = |tau: f64| -> Result<f64> {
        if tau <= 0.0 {
            Err(Error::Precondition(format!("local integral at p = {p} does not converge absolutely")))
        } else {
            Ok(pf.powf(-tau))
        }
    };
    if config.r() == 0 {
        let x = ratio(s0 - 2.0)?;
        return Ok(x.powf(big_a + 1.0) / (1.0 - x));
    }
    let forms = config.forms();
    let mut v = 0i64;
    for (i, f) in forms.iter().enumerate() {
        for g in &forms[i + 1..] {
            v = v.max(int_valuation(&BigInt::from(f.det(g)), p).unwrap_or(0));
        }
    }
    let excess: f64 = sigma[1..].iter().map(|sk| (s0 - sk).max(0.0)).sum();
    let cp = pf.powf(v as f64 * excess);
    let mut total = 0.0;
    for sk in &sigma[1..] {
        let e = s0 - sk;
        let x = ratio(s0 - 2.0 - (e - 1.0).max(0.0))?;
        total += x.powf(big_a + 1.0) * ((big_a + 2.0) - (big_a + 1.0) * x) / ((1.0 - x) * (1.0 - x));
    }
    Ok(cp * total)
}

/// Estimated number of leaves of the refinement: about `r p^j` balls per
/// level lie near some `l_k = 0`, each split into `p^2` children.
pub fn estimated_leaves(config: &SurfaceConfig, p: u64, alpha_max: u32) -> f64 {
    let pf = p as f64;
    (config.r() as f64 + 1.0) * pf.powi(alpha_max as i32 + 2) / (pf - 1.0)
}

/// Smallest `A >= 1` whose tail bound is at most `target`, capped at the
/// largest `A` whose estimated refinement fits in `max_leaves`; the returned
/// tail bound is then larger than `target` but still rigorous.
pub fn default_alpha_max(config: &SurfaceConfig, p: u64, sigma: &[f64], target: f64, max_leaves: usize) -> Result<u32> {
    for big_a in 1..=100u32 {
        checked_modulus(p, big_a)?;
        if oracle_tail_bound(config, p, sigma, big_a)? <= target {
            return Ok(big_a);
        }
        if big_a > 1 && estimated_leaves(config, p, big_a + 1) > max_leaves as f64 {
            return Ok(big_a);
        }
    }
    Err(Error::TruncationTooDeep(format!("no alpha_max reaches tail {target:e} at p = {p}")))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult<T> {
    pub value: T,
    pub alpha_max: u32,
    pub tail_bound: f64,
    pub leaves: usize,
}

impl OracleResult<Complex64> {
    pub fn into_factor(self, p: u64) -> LocalFactor<Complex64> {
        LocalFactor { value: self.value, tail_bound: self.tail_bound, method: Method::Oracle, place: Place::Prime(p) }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    /// Fixed truncation; when absent the smallest one meeting `target_tail`.
    pub alpha_max: Option<u32>,
    pub target_tail: f64,
    pub max_leaves: usize,
    pub full_refinement: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { alpha_max: None, target_tail: 1e-7, max_leaves: DEFAULT_MAX_LEAVES, full_refinement: false }
    }
}

impl OracleOptions {
    pub fn with_alpha_max(alpha_max: u32) -> Self {
        OracleOptions { alpha_max: Some(alpha_max), ..Default::default() }
    }

    pub fn with_target(target_tail: f64) -> Self {
        OracleOptions { target_tail, ..Default::default() }
    }
}

fn oracle_preconditions<T: Scalar>(config: &SurfaceConfig, p: u64, s: &PicardVector<T>) -> Result<()> {
    if !is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    if s.r() != config.r() {
        return Err(Error::Domain(format!("Picard vector has r = {}, configuration has r = {}", s.r(), config.r())));
    }
    if !convergence_domain(config, s) {
        return Err(Error::Precondition("s outside the convergence domain Re s_0 > 2, Re s_k > 1".into()));
    }
    Ok(())
}

fn resolve_alpha<T: Scalar>(config: &SurfaceConfig, p: u64, s: &PicardVector<T>, opts: &OracleOptions) -> Result<(u32, f64)> {
    let sigma = s.real_parts();
    let big_a = match opts.alpha_max {
        Some(a) => a,
        None => default_alpha_max(config, p, &sigma, opts.target_tail, opts.max_leaves)?,
    };
    Ok((big_a, oracle_tail_bound(config, p, &sigma, big_a)?))
}

/// Oracle value of the local transform at any prime, including primes of
/// bad reduction and characters with `p` in `S(a)`.
pub fn local_ft_oracle<T: Scalar>(config: &SurfaceConfig, p: u64, s: &PicardVector<T>, a: (i64, i64), opts: &OracleOptions) -> Result<OracleResult<T>> {
    oracle_preconditions(config, p, s)?;
    let (big_a, tail_bound) = resolve_alpha(config, p, s, opts)?;
    let integral = OracleIntegral::compute(config, p, a, big_a, opts.full_refinement, opts.max_leaves)?;
    Ok(OracleResult { value: integral.evaluate(s)?, alpha_max: big_a, tail_bound, leaves: integral.leaves })
}

/// `a mod p^A` up to multiplication by a unit, which leaves the integral
/// unchanged (`x -> lambda x` preserves Haar measure and every norm).
pub fn canonical_character(p: u64, alpha_max: u32, a: (i64, i64)) -> Result<(i128, i128)> {
    let pa = checked_modulus(p, alpha_max)?;
    let pi = p as i128;
    let a1 = (a.0 as i128).rem_euclid(pa);
    let a2 = (a.1 as i128).rem_euclid(pa);
    let v1 = val_i128(a1, pi, alpha_max);
    let v2 = val_i128(a2, pi, alpha_max);
    let v = v1.min(v2);
    if v == alpha_max {
        return Ok((0, 0));
    }
    let lead = if v1 == v { a1 } else { a2 } / pi.pow(v);
    let inv = lead.extended_gcd(&pa).x.rem_euclid(pa);
    Ok(((a1 * inv).rem_euclid(pa), (a2 * inv).rem_euclid(pa)))
}

type CacheKey = (Vec<LinearForm>, u64, u32, (i128, i128));

/// Bad-prime local factors from the oracle, cached by configuration, prime,
/// truncation and canonical character.
pub struct OracleFactors {
    opts: OracleOptions,
    cache: Mutex<HashMap<CacheKey, Arc<OracleIntegral>>>,
}

impl OracleFactors {
    pub fn new(opts: OracleOptions) -> Self {
        OracleFactors { opts, cache: Mutex::new(HashMap::new()) }
    }

    pub fn integral(&self, config: &SurfaceConfig, p: u64, a: (i64, i64), alpha_max: u32) -> Result<Arc<OracleIntegral>> {
        let canon = canonical_character(p, alpha_max, a)?;
        let key = (config.forms().to_vec(), p, alpha_max, canon);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let canon_a = (canon.0 as i64, canon.1 as i64);
        let integral = Arc::new(OracleIntegral::compute(config, p, canon_a, alpha_max, self.opts.full_refinement, self.opts.max_leaves)?);
        self.cache.lock().unwrap().insert(key, integral.clone());
        Ok(integral)
    }

    pub fn factor<T: Scalar>(&self, config: &SurfaceConfig, p: u64, s: &PicardVector<T>, a: (i64, i64)) -> Result<OracleResult<T>> {
        oracle_preconditions(config, p, s)?;
        let (big_a, tail_bound) = resolve_alpha(config, p, s, &self.opts)?;
        let integral = self.integral(config, p, a, big_a)?;
        Ok(OracleResult { value: integral.evaluate(s)?, alpha_max: big_a, tail_bound, leaves: integral.leaves })
    }
}

impl Default for OracleFactors {
    fn default() -> Self {
        OracleFactors::new(OracleOptions::default())
    }
}

impl BadFactorSource for OracleFactors {
    fn bad_factor(&self, config: &SurfaceConfig, p: u64, s: &PicardVector<Complex64>, class: &CharacterClass) -> Result<LocalFactor<Complex64>> {
        Ok(self.factor(config, p, s, class.a)?.into_factor(p))
    }
}

impl std::fmt::Debug for OracleFactors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleFactors").field("opts", &self.opts).finish_non_exhaustive()
    }
}

/// `prod_{p in S(a)} |oracle factor|`, the quantity whose growth in `a` is
/// polynomial.
pub fn bad_factor_magnitude(config: &SurfaceConfig, s: &PicardVector<f64>, a: (i64, i64), source: &OracleFactors) -> Result<f64> {
    let class = classify_character(config, a);
    let mut out = 1.0;
    for &p in &class.bad_set {
        out *= source.factor(config, p, s, a)?.value.abs();
    }
    Ok(out)
}
