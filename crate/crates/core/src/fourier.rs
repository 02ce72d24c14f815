//! Closed-form local Fourier transforms of `H(s; .)^{-1}` at good primes,
//! the archimedean transform of projective space at the trivial character,
//! and Euler-product assembly with a rigorous truncation bound.

use num_complex::Complex64;
use serde::Serialize;

use crate::arith::{is_prime, primes_up_to};
use crate::error::{Error, Result};
use crate::heights::PicardVector;
use crate::scalar::{prime_power_shifted, Scalar};
use crate::special::ln_gamma;
use crate::surface::{CharacterClass, CharacterKind, SurfaceConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Closed,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Place {
    Prime(u64),
    Infinity,
}

/// A local transform value together with a bound on how far it may be from
/// the true integral.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalFactor<T> {
    pub value: T,
    pub tail_bound: f64,
    pub method: Method,
    pub place: Place,
}

impl<T> LocalFactor<T> {
    fn closed(value: T, p: u64) -> Self {
        LocalFactor { value, tail_bound: 0.0, method: Method::Closed, place: Place::Prime(p) }
    }
}

/// Local integrability domain: `Re s_0 > 2` and `Re s_k > 1`.
pub fn convergence_domain<T: Scalar>(config: &SurfaceConfig, s: &PicardVector<T>) -> bool {
    convergence_margin(config, s).is_some_and(|m| m > 0.0)
}

/// `min(Re s_0 - 2, Re s_k - 1)`; `None` on a length mismatch.
pub fn convergence_margin<T: Scalar>(config: &SurfaceConfig, s: &PicardVector<T>) -> Option<f64> {
    if s.r() != config.r() {
        return None;
    }
    let re = s.real_parts();
    Some(re[1..].iter().fold(re[0] - 2.0, |m, &x| m.min(x - 1.0)))
}

fn check_local<T: Scalar>(config: &SurfaceConfig, p: u64, s: &PicardVector<T>) -> Result<()> {
    if !is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    if !config.is_good(p) {
        return Err(Error::BadPrime { p });
    }
    if s.r() != config.r() {
        return Err(Error::Domain(format!("Picard vector has r = {}, configuration has r = {}", s.r(), config.r())));
    }
    if !convergence_domain(config, s) {
        return Err(Error::Precondition(format!(
            "s = {:?} is outside the convergence domain Re s_0 > 2, Re s_k > 1",
            s.real_parts()
        )));
    }
    Ok(())
}

fn pw<T: Scalar>(p: u64, e: &T, shift: i64) -> Result<T> {
    prime_power_shifted(p, e, shift)
        .ok_or_else(|| Error::Domain("exponent not representable exactly; use a floating-point scalar".into()))
}

fn pint<T: Scalar>(p: u64) -> T {
    T::from_u64(p).unwrap()
}

/// Trivial character:
/// `1 + (p^2-1)/(p^{s_0}-p^2) + (p-1)/(p^{s_0}-p^2) * sum_k (p^{s_0-1}-p^{s_k-1})/(p^{s_k-1}-1)`.
pub fn local_ft_trivial<T: Scalar>(config: &SurfaceConfig, p: u64, s: &PicardVector<T>) -> Result<LocalFactor<T>> {
    check_local(config, p, s)?;
    let pt: T = pint(p);
    let p2 = pt.clone() * pt.clone();
    let denom = pw(p, s.s0(), 0)? - p2.clone();
    let p_s0m1 = pw(p, s.s0(), -1)?;
    let mut sum = T::zero();
    for k in 1..=config.r() {
        let p_skm1 = pw(p, &s[k], -1)?;
        sum = sum + (p_s0m1.clone() - p_skm1.clone()) / (p_skm1 - T::one());
    }
    let value = T::one() + (p2 - T::one()) / denom.clone() + (pt - T::one()) / denom * sum;
    Ok(LocalFactor::closed(value, p))
}

/// Generic character: `1 - sum_k p^{-s_k} + (r - 1) p^{-s_0}`.
pub fn local_ft_generic<T: Scalar>(config: &SurfaceConfig, p: u64, s: &PicardVector<T>) -> Result<LocalFactor<T>> {
    check_local(config, p, s)?;
    let r = config.r() as i64;
    let mut value = T::one() + T::from_int(r - 1) * pw(p, &-s.s0().clone(), 0)?;
    for k in 1..=config.r() {
        value = value - pw(p, &-s[k].clone(), 0)?;
    }
    Ok(LocalFactor::closed(value, p))
}

/// Character special for `l_k`:
/// `1 - sum_{j != k} p^{-s_j} + (r-p-1) p^{-s_0} + (p-1)(1-p^{1-s_0})/(p^{s_k}-p)`.
pub fn local_ft_special<T: Scalar>(config: &SurfaceConfig, p: u64, s: &PicardVector<T>, k: usize) -> Result<LocalFactor<T>> {
    check_local(config, p, s)?;
    if k == 0 || k > config.r() {
        return Err(Error::Domain(format!("special index {k} out of range for r = {}", config.r())));
    }
    let r = config.r() as i64;
    let pt: T = pint(p);
    let mut value = T::one() + T::from_int(r - p as i64 - 1) * pw(p, &-s.s0().clone(), 0)?;
    for j in (1..=config.r()).filter(|&j| j != k) {
        value = value - pw(p, &-s[j].clone(), 0)?;
    }
    let num = (pt.clone() - T::one()) * (T::one() - pw(p, &-s.s0().clone(), 1)?);
    value = value + num / (pw(p, &s[k], 0)? - pt);
    Ok(LocalFactor::closed(value, p))
}

/// Dispatches on the character class; fails when `p` is in its bad set.
pub fn local_ft_closed<T: Scalar>(config: &SurfaceConfig, p: u64, s: &PicardVector<T>, class: &CharacterClass) -> Result<LocalFactor<T>> {
    if !class.is_good_at(p) {
        return Err(Error::BadPrime { p });
    }
    match class.kind {
        CharacterKind::Trivial => local_ft_trivial(config, p, s),
        CharacterKind::Generic => local_ft_generic(config, p, s),
        CharacterKind::Special(k) => local_ft_special(config, p, s, k),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PnCharacter {
    Trivial,
    NontrivialGood,
}

/// Local transform on `P^n` at a prime: `(1-p^{-s})/(1-p^{-(s-n)})` for the
/// trivial character, `1 - p^{-s}` for a character with `p` not dividing `a`.
pub fn pn_local_ft<T: Scalar>(n: usize, p: u64, s: &T, kind: PnCharacter) -> Result<LocalFactor<T>> {
    if !is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    if s.real_part() <= n as f64 {
        return Err(Error::Precondition(format!("need Re s > {n}")));
    }
    let ms = -s.clone();
    let value = match kind {
        PnCharacter::Trivial => (T::one() - pw(p, &ms, 0)?) / (T::one() - pw(p, &ms, n as i64)?),
        PnCharacter::NontrivialGood => T::one() - pw(p, &ms, 0)?,
    };
    Ok(LocalFactor::closed(value, p))
}

/// `pi^{n/2} Gamma((s-n)/2) / Gamma(s/2)`.
pub fn pn_arch_ft_trivial(n: usize, s: Complex64) -> Result<LocalFactor<Complex64>> {
    if s.re <= n as f64 {
        return Err(Error::Precondition(format!("need Re s > {n}")));
    }
    let nf = n as f64;
    let ln = 0.5 * nf * std::f64::consts::PI.ln() + ln_gamma((s - nf) / 2.0) - ln_gamma(s / 2.0);
    Ok(LocalFactor { value: ln.exp(), tail_bound: 0.0, method: Method::Closed, place: Place::Infinity })
}

/// `sum_{p > x} p^{-gamma}` majorant, `gamma > 1`, `x >= 2`.
///
/// Partial summation against `pi(t) < 1.25506 t / ln t` gives
/// `sum_{p > x} p^{-gamma} <= 1.25506 gamma x^{1-gamma} / ((gamma - 1) ln x)`.
pub fn prime_tail_sum(x: f64, gamma: f64) -> f64 {
    assert!(gamma > 1.0 && x >= 2.0);
    1.25506 * gamma * x.powf(1.0 - gamma) / ((gamma - 1.0) * x.ln())
}

/// A monomial `coef * p^{-gamma}` in a bound on `|factor - 1|`.
#[derive(Clone, Copy, Debug)]
struct Monomial {
    coef: f64,
    gamma: f64,
}

fn tail_sum(terms: &[Monomial], x: f64) -> Result<f64> {
    let mut total = 0.0;
    for t in terms {
        if t.coef == 0.0 {
            continue;
        }
        if t.gamma <= 1.0 {
            return Err(Error::Precondition(format!(
                "Euler product is not absolutely convergent here (tail decays like p^-{:.3})",
                t.gamma
            )));
        }
        total += t.coef * prime_tail_sum(x, t.gamma);
    }
    Ok(total)
}

/// Bound on `sum_{p > x} |factor_p - 1|` for the closed forms at real parts
/// `sigma`.
fn closed_tail(class: CharacterKind, sigma: &[f64], x: f64) -> Result<f64> {
    let r = sigma.len() - 1;
    let s0 = sigma[0];
    let rm1 = (r as f64 - 1.0).abs();
    let mut terms = Vec::new();
    match class {
        CharacterKind::Generic => {
            terms.extend(sigma[1..].iter().map(|&g| Monomial { coef: 1.0, gamma: g }));
            terms.push(Monomial { coef: rm1, gamma: s0 });
        }
        CharacterKind::Special(k) => {
            for (j, &g) in sigma.iter().enumerate().skip(1) {
                if j != k {
                    terms.push(Monomial { coef: 1.0, gamma: g });
                }
            }
            terms.push(Monomial { coef: 1.0, gamma: s0 - 1.0 });
            terms.push(Monomial { coef: rm1, gamma: s0 });
            let sk = sigma[k];
            if sk <= 2.0 || s0 <= 2.0 {
                return Err(Error::Precondition("special Euler product needs Re s_k > 2 and Re s_0 > 2".into()));
            }
            let amp = (1.0 + x.powf(1.0 - s0)) / (1.0 - x.powf(1.0 - sk));
            terms.push(Monomial { coef: amp, gamma: sk - 1.0 });
        }
        CharacterKind::Trivial => {
            if s0 <= 3.0 || sigma[1..].iter().any(|&g| g <= 2.0) {
                return Err(Error::Precondition("trivial-character Euler product needs Re s_0 > 3 and Re s_k > 2".into()));
            }
            let min_k = sigma[1..].iter().fold(f64::INFINITY, |m, &g| m.min(g));
            let mut amp = 1.0 / (1.0 - x.powf(2.0 - s0));
            if r > 0 {
                amp /= 1.0 - x.powf(1.0 - min_k);
            }
            terms.push(Monomial { coef: amp, gamma: s0 - 2.0 });
            terms.push(Monomial { coef: amp * r as f64, gamma: s0 - 1.0 });
            terms.extend(sigma[1..].iter().map(|&g| Monomial { coef: amp, gamma: g - 1.0 }));
        }
    }
    tail_sum(&terms, x)
}

/// A truncated Euler product with a rigorous bound on its distance to the
/// full product.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EulerProductValue {
    pub value: Complex64,
    pub truncation_prime: u64,
    pub truncation_error_bound: f64,
}

/// Supplies local factors at the primes of `S(a)`.
pub trait BadFactorSource {
    fn bad_factor(&self, config: &SurfaceConfig, p: u64, s: &PicardVector<Complex64>, class: &CharacterClass) -> Result<LocalFactor<Complex64>>;
}

/// A source with no bad factors available; any bad prime makes the product
/// incomplete.
pub struct NoBadFactors;

impl BadFactorSource for NoBadFactors {
    fn bad_factor(&self, _: &SurfaceConfig, p: u64, _: &PicardVector<Complex64>, class: &CharacterClass) -> Result<LocalFactor<Complex64>> {
        Err(Error::Incomplete(format!("no local factor supplied for bad prime {p} of character {:?}", class.a)))
    }
}

/// Running product of approximate factors with an absolute error bound.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ErrorProduct {
    pub value: Complex64,
    pub error: f64,
}

impl ErrorProduct {
    pub fn one() -> Self {
        ErrorProduct { value: Complex64::new(1.0, 0.0), error: 0.0 }
    }

    pub fn mul(&mut self, x: Complex64, dx: f64) {
        self.error = self.error * (x.norm() + dx) + self.value.norm() * dx;
        self.value *= x;
    }
}

/// `prod_{p <= p_max} factor_p` (closed forms off `S(a)`, the supplied source
/// on `S(a)`, bad primes above `p_max` included), with the omitted tail
/// bounded through `|prod (1+z_p) - 1| <= exp(sum |z_p|) - 1`.
pub fn euler_product(
    config: &SurfaceConfig,
    s: &PicardVector<Complex64>,
    class: &CharacterClass,
    p_max: u64,
    source: &dyn BadFactorSource,
) -> Result<EulerProductValue> {
    if p_max < 2 {
        return Err(Error::Domain("p_max must be at least 2".into()));
    }
    if !convergence_domain(config, s) {
        return Err(Error::Precondition("s outside the convergence domain".into()));
    }
    let tail = closed_tail(class.kind, &s.real_parts(), p_max as f64)?;
    let mut acc = ErrorProduct::one();
    let mut primes = primes_up_to(p_max);
    primes.extend(class.bad_set.iter().copied().filter(|&p| p > p_max));
    for p in primes {
        let f = if class.is_good_at(p) { local_ft_closed(config, p, s, class)? } else { source.bad_factor(config, p, s, class)? };
        acc.mul(f.value, f.tail_bound);
    }
    let bound = (acc.value.norm() + acc.error) * tail.exp_m1() + acc.error;
    Ok(EulerProductValue { value: acc.value, truncation_prime: p_max, truncation_error_bound: bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::zeta;
    use crate::surface::{classify_character, validate_config};
    use num_rational::BigRational;
    use std::f64::consts::PI;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn exact(v: &[i64]) -> PicardVector<BigRational> {
        PicardVector::new(v.iter().map(|&x| q(x, 1)).collect())
    }

    fn cfg(forms: &[(i64, i64)]) -> SurfaceConfig {
        validate_config("t", forms).unwrap()
    }

    #[test]
    fn domain_examples() {
        let c2 = cfg(&[(1, 0), (0, 1)]);
        assert!(convergence_domain(&c2, &PicardVector::<f64>::anticanonical(2)));
        assert!(!convergence_domain(&c2, &PicardVector::new(vec![2.0, 2.0, 2.0])));
        assert!(convergence_domain(&cfg(&[]), &PicardVector::new(vec![3.0])));
    }

    #[test]
    fn trivial_examples() {
        let c2 = cfg(&[(1, 0), (0, 1)]);
        assert_eq!(local_ft_trivial(&c2, 5, &exact(&[3, 2, 2])).unwrap().value, q(41, 25));
        let c1 = cfg(&[(1, 0)]);
        assert_eq!(local_ft_trivial(&c1, 2, &exact(&[3, 2])).unwrap().value, q(9, 4));
    }

    #[test]
    fn generic_examples() {
        let c2 = cfg(&[(1, 0), (0, 1)]);
        assert_eq!(local_ft_generic(&c2, 3, &exact(&[3, 2, 2])).unwrap().value, q(22, 27));
        let c1 = cfg(&[(1, 0)]);
        assert_eq!(local_ft_generic(&c1, 5, &exact(&[4, 3])).unwrap().value, q(124, 125));
        let p2 = cfg(&[]);
        assert_eq!(local_ft_generic(&p2, 7, &exact(&[5])).unwrap().value, q(7i64.pow(5) - 1, 7i64.pow(5)));
    }

    #[test]
    fn special_examples() {
        let c1 = cfg(&[(1, 0)]);
        assert_eq!(local_ft_special(&c1, 2, &exact(&[3, 2]), 1).unwrap().value, q(9, 8));
        let c2 = cfg(&[(1, 0), (0, 1)]);
        let expected = q(1, 1) - q(1, 25) - q(4, 125) + q(24, 125);
        assert_eq!(local_ft_special(&c2, 5, &exact(&[3, 2, 2]), 1).unwrap().value, expected);
    }

    #[test]
    fn preconditions() {
        let bad = cfg(&[(1, 0), (1, 2)]);
        assert!(matches!(local_ft_trivial(&bad, 2, &exact(&[4, 3, 3])), Err(Error::BadPrime { p: 2 })));
        let c1 = cfg(&[(1, 0)]);
        assert!(matches!(local_ft_trivial(&c1, 3, &exact(&[2, 2])), Err(Error::Precondition(_))));
        let half = PicardVector::new(vec![q(7, 2), q(5, 2)]);
        assert!(matches!(local_ft_trivial(&c1, 3, &half), Err(Error::Domain(_))));
        assert!(local_ft_trivial(&c1, 3, &half.map(|x| num_traits::ToPrimitive::to_f64(x).unwrap())).is_ok());
    }

    #[test]
    fn pn_examples() {
        assert_eq!(pn_local_ft(2, 2, &q(4, 1), PnCharacter::Trivial).unwrap().value, q(5, 4));
        assert_eq!(pn_local_ft(2, 3, &q(4, 1), PnCharacter::NontrivialGood).unwrap().value, q(80, 81));
        assert_eq!(pn_local_ft(1, 2, &q(3, 1), PnCharacter::Trivial).unwrap().value, q(7, 6));
        let f = |n, s: f64| pn_arch_ft_trivial(n, Complex64::new(s, 0.0)).unwrap().value;
        assert!((f(2, 3.0).re - 2.0 * PI).abs() < 1e-12);
        assert!((f(2, 4.0).re - PI).abs() < 1e-12);
        assert!((f(1, 2.0).re - PI).abs() < 1e-12);
        assert!(pn_arch_ft_trivial(2, Complex64::new(2.0, 1.0)).is_err());
    }

    #[test]
    fn euler_product_two_primes_is_exact_product() {
        let c1 = cfg(&[(1, 0)]);
        let s = PicardVector::new(vec![Complex64::new(6.0, 0.0), Complex64::new(4.0, 0.0)]);
        let class = classify_character(&c1, (0, 0));
        let e = euler_product(&c1, &s, &class, 3, &NoBadFactors).unwrap();
        let f2 = local_ft_trivial(&c1, 2, &s).unwrap().value;
        let f3 = local_ft_trivial(&c1, 3, &s).unwrap().value;
        assert!((e.value - f2 * f3).norm() < 1e-15);
        assert!(e.truncation_error_bound > 0.0);
    }

    #[test]
    fn euler_product_generic_matches_inverse_zeta() {
        let c1 = cfg(&[(1, 0)]);
        let s = PicardVector::new(vec![Complex64::new(4.0, 0.0), Complex64::new(3.0, 0.0)]);
        let class = classify_character(&c1, (1, 1));
        assert!(class.bad_set.is_empty());
        let e = euler_product(&c1, &s, &class, 100, &NoBadFactors).unwrap();
        let partial: f64 = primes_up_to(100).iter().map(|&p| 1.0 - (p as f64).powi(-3)).product();
        assert!((e.value.re - partial).abs() < 1e-14);
        let full = 1.0 / zeta(3.0);
        assert!((e.value.re - full).abs() <= e.truncation_error_bound);
    }

    #[test]
    fn missing_bad_factor_is_incomplete() {
        let c1 = cfg(&[(1, 0)]);
        let s = PicardVector::new(vec![Complex64::new(6.0, 0.0), Complex64::new(4.0, 0.0)]);
        let class = classify_character(&c1, (1, 6));
        assert!(matches!(euler_product(&c1, &s, &class, 50, &NoBadFactors), Err(Error::Incomplete(_))));
    }

    #[test]
    fn trivial_product_diverges_at_anticanonical() {
        let c1 = cfg(&[(1, 0)]);
        let s = PicardVector::<Complex64>::anticanonical(1);
        let class = classify_character(&c1, (0, 0));
        assert!(matches!(euler_product(&c1, &s, &class, 50, &NoBadFactors), Err(Error::Precondition(_))));
    }
}
