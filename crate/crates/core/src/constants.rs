//! Archimedean densities, the Tamagawa number with convergence factors, the
//! predicted leading constant, log-polynomial fits of count series, and a
//! numerical check of the Poisson identity for the height zeta function.

use std::cell::Cell;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::primes_up_to;
use crate::counting::{count_series, zeta_partial, CountSeries, ExactBundle};
use crate::error::{Error, Result};
use crate::fourier::{convergence_margin, euler_product, local_ft_trivial, prime_tail_sum, ErrorProduct, EulerProductValue};
use crate::heights::PicardVector;
use crate::oracle::{OracleFactors, OracleOptions};
use crate::quadrature::{integrate_breakpoints, integrate_real_line, Estimate, Tolerance};
use crate::special::{gamma_real, zeta};
use crate::surface::{classify_character, SurfaceConfig};

/// A real value with an absolute error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Approx {
    pub value: f64,
    pub err: f64,
}

impl From<Estimate<f64>> for Approx {
    fn from(e: Estimate<f64>) -> Self {
        Approx { value: e.value, err: e.error }
    }
}

/// `H(s; x)^{-1}` at the real place in the affine chart:
/// `(1 + |x|^2)^{-w/2} prod_k (1 + l_k(x)^2)^{t_k/2}` with `t_k = s_k - s_0`
/// and `w = s_0 + sum_k t_k`.
#[derive(Clone, Debug)]
struct ArchWeight {
    half_w: f64,
    half_t: Vec<f64>,
    forms: Vec<(f64, f64)>,
}

impl ArchWeight {
    fn new(config: &SurfaceConfig, s: &[f64]) -> Result<Self> {
        if s.len() != config.r() + 1 {
            return Err(Error::Domain("Picard vector length does not match the configuration".into()));
        }
        if s[0] <= 2.0 || s[1..].iter().any(|&x| x <= 1.0) {
            return Err(Error::Precondition("archimedean integral needs s_0 > 2 and s_k > 1".into()));
        }
        let t: Vec<f64> = s[1..].iter().map(|sk| sk - s[0]).collect();
        let w = s[0] + t.iter().sum::<f64>();
        Ok(ArchWeight {
            half_w: w / 2.0,
            half_t: t.iter().map(|x| x / 2.0).collect(),
            forms: config.forms().iter().map(|f| (f.u as f64, f.v as f64)).collect(),
        })
    }

    fn eval(&self, x1: f64, x2: f64) -> f64 {
        let mut out = (1.0 + x1 * x1 + x2 * x2).powf(-self.half_w);
        for (&(u, v), &ht) in self.forms.iter().zip(&self.half_t) {
            let l = u * x1 + v * x2;
            out *= (1.0 + l * l).powf(ht);
        }
        out
    }

    /// `F(R (cos t, sin t))` given `sin^2(t - z_k)` for each form, where
    /// `z_k` is a zero of `l_k` on the unit circle.
    fn eval_polar(&self, big_r: f64, sin_sq: impl Iterator<Item = f64>) -> f64 {
        let r2 = big_r * big_r;
        let mut out = (1.0 + r2).powf(-self.half_w);
        for ((&(u, v), &ht), s2) in self.forms.iter().zip(&self.half_t).zip(sin_sq) {
            out *= (1.0 + r2 * (u * u + v * v) * s2).powf(ht);
        }
        out
    }

    /// Zeros of the `l_k` on the unit circle in `[0, 2 pi)`, tagged by form.
    fn ridges(&self) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        for (k, &(u, v)) in self.forms.iter().enumerate() {
            let th = (-u).atan2(v).rem_euclid(PI);
            out.push((th, k));
            out.push((th + PI, k));
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out
    }

    /// Bound on `|F(x - i eta e)| / F(x)` for a unit vector `e` with
    /// `|l_k(e)| = ls[k]`, valid while `eta < 1` and `eta ls[k] < 1`.
    fn strip_factor(&self, eta: f64, ls: &[f64]) -> f64 {
        let pow = |base_minus: f64, base_plus: f64, e: f64| if e < 0.0 { base_minus.powf(e) } else { base_plus.powf(e) };
        let mut out = pow(1.0 - eta * eta, 1.0 + eta * eta, -self.half_w);
        for (&l, &ht) in ls.iter().zip(&self.half_t) {
            let q = eta * eta * l * l;
            out *= pow(1.0 - q, 1.0 + q, ht);
        }
        out
    }

    fn max_strip(&self, ls: &[f64]) -> f64 {
        ls.iter().fold(1.0f64, |m, &l| if l > 0.0 { m.min(1.0 / l) } else { m })
    }
}

fn inner_tol() -> Tolerance {
    Tolerance::new(1e-300, 1e-10).with_budget(4000)
}

fn outer_tol() -> Tolerance {
    Tolerance::new(1e-12, 1e-9).with_budget(4000)
}

/// Runs an outer quadrature whose integrand is itself a quadrature of a
/// positive function. Inner failures are surfaced; the returned ratio is the
/// worst relative inner error, so the inner errors integrate to at most
/// `ratio * int |inner|`.
fn nested<G>(points: &[f64], outer: Tolerance, mut inner: G) -> Result<(Estimate<f64>, f64)>
where
    G: FnMut(f64) -> Result<(f64, Estimate<f64>)>,
{
    let failure: Cell<Option<Error>> = Cell::new(None);
    let worst = Cell::new(0.0f64);
    let mut f = |x: f64| match inner(x) {
        Ok((weight, e)) => {
            if e.value != 0.0 {
                worst.set(worst.get().max(e.error / e.value.abs()));
            }
            weight * e.value
        }
        Err(err) => {
            failure.set(Some(err));
            0.0
        }
    };
    let est = integrate_breakpoints(&mut f, points, outer)?;
    if let Some(err) = failure.take() {
        return Err(err);
    }
    Ok((est, worst.get()))
}

/// `int_0^{2 pi} F(R (cos t, sin t)) dt`. Each arc between consecutive zeros
/// of the `l_k` is halved and integrated in the offset from its nearer zero,
/// so `l_k` keeps full relative precision on ridges of width `1/R`.
fn angular(weight: &ArchWeight, ridges: &[(f64, usize)], big_r: f64) -> Result<Estimate<f64>> {
    let tol = inner_tol();
    if ridges.is_empty() {
        return integrate_breakpoints(&mut |_t: f64| weight.eval_polar(big_r, std::iter::empty()), &[0.0, 2.0 * PI], tol);
    }
    let m = ridges.len();
    let mut total = Estimate { value: 0.0, error: 0.0 };
    for i in 0..m {
        let (z0, _) = ridges[i];
        let (z1, _) = ridges[(i + 1) % m];
        let len = if i + 1 == m { z1 + 2.0 * PI - z0 } else { z1 - z0 };
        for (anchor, dir) in [(i, 1.0), ((i + 1) % m, -1.0)] {
            let (za, ka) = ridges[anchor];
            let offsets: Vec<f64> = weight.forms.iter().enumerate().map(|(k, _)| {
                if k == ka {
                    0.0
                } else {
                    let z = ridges.iter().find(|r| r.1 == k).unwrap().0;
                    za - z
                }
            }).collect();
            let mut g = |phi: f64| weight.eval_polar(big_r, offsets.iter().map(|d| (d + dir * phi).sin().powi(2)));
            let part = integrate_breakpoints(&mut g, &[0.0, 0.5 * len], Tolerance { abs: tol.abs / (2 * m) as f64, ..tol })?;
            total.value += part.value;
            total.error += part.error;
        }
    }
    Ok(total)
}

/// `int_{R^2} H_inf(s; x)^{-1} dx` through `x = rho / (1 - rho) (cos t, sin t)`,
/// which maps the open unit disc onto the plane.
pub fn arch_integral(config: &SurfaceConfig, s: &[f64]) -> Result<Approx> {
    let weight = ArchWeight::new(config, s)?;
    let ridges = weight.ridges();
    let (est, ratio) = nested(&[0.0, 0.5, 1.0], outer_tol(), |rho| {
        if rho >= 1.0 {
            return Ok((0.0, Estimate { value: 0.0, error: 0.0 }));
        }
        let d = 1.0 - rho;
        let big_r = rho / d;
        Ok((big_r / (d * d), angular(&weight, &ridges, big_r)?))
    })?;
    Ok(Approx { value: est.value, err: est.error + ratio * est.value.abs() })
}

/// `F(x_1, x_2)` with each `l_k` supplied directly.
fn eval_split(weight: &ArchWeight, x1: f64, x2: f64, ls: impl Iterator<Item = f64>) -> f64 {
    let mut out = (1.0 + x1 * x1 + x2 * x2).powf(-weight.half_w);
    for (l, &ht) in ls.zip(&weight.half_t) {
        out *= (1.0 + l * l).powf(ht);
    }
    out
}

/// `int F(x_1, x_2) dx_2`, split at the zeros `b_k` of the `l_k` and
/// integrated in the offset from the nearer zero so that
/// `l_k = v_k (x_2 - b_k)` keeps full relative precision.
fn cartesian_inner(weight: &ArchWeight, x1: f64) -> Result<Estimate<f64>> {
    let tol = inner_tol();
    let mut zeros: Vec<(f64, usize)> =
        weight.forms.iter().enumerate().filter(|(_, f)| f.1 != 0.0).map(|(k, &(u, v))| (-u * x1 / v, k)).collect();
    if zeros.is_empty() {
        return integrate_real_line(|x2: f64| weight.eval(x1, x2), &[], tol);
    }
    zeros.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let piece = |anchor: usize, dir: f64, len: Option<f64>| -> Result<Estimate<f64>> {
        let (b, ka) = zeros[anchor];
        let shifts: Vec<Option<f64>> = weight
            .forms
            .iter()
            .enumerate()
            .map(|(k, &(_, v))| {
                if v == 0.0 {
                    None
                } else if k == ka {
                    Some(0.0)
                } else {
                    Some(b - zeros.iter().find(|z| z.1 == k).unwrap().0)
                }
            })
            .collect();
        let f = |off: f64| {
            let x2 = b + dir * off;
            let ls = weight.forms.iter().zip(&shifts).map(|(&(u, v), sh)| match sh {
                None => u * x1,
                Some(d) => v * (d + dir * off),
            });
            eval_split(weight, x1, x2, ls)
        };
        let sub = Tolerance { abs: tol.abs / (2 * zeros.len() + 2) as f64, ..tol };
        match len {
            None => crate::quadrature::integrate_half_line(f, &[], sub),
            Some(l) => crate::quadrature::integrate(f, 0.0, l, sub),
        }
    };
    let m = zeros.len();
    let mut total = Estimate { value: 0.0, error: 0.0 };
    let mut add = |e: Estimate<f64>| {
        total.value += e.value;
        total.error += e.error;
    };
    add(piece(0, -1.0, None)?);
    add(piece(m - 1, 1.0, None)?);
    for i in 0..m - 1 {
        let half = 0.5 * (zeros[i + 1].0 - zeros[i].0);
        add(piece(i, 1.0, Some(half))?);
        add(piece(i + 1, -1.0, Some(half))?);
    }
    Ok(total)
}

/// The same integral by iterated Cartesian quadrature, split along every
/// line `l_k = 0`; an independent rule for cross-checking [`arch_integral`].
pub fn arch_integral_cartesian(config: &SurfaceConfig, s: &[f64]) -> Result<Approx> {
    let weight = ArchWeight::new(config, s)?;
    let failure: Cell<Option<Error>> = Cell::new(None);
    let worst = Cell::new(0.0f64);
    let outer = |x1: f64| match cartesian_inner(&weight, x1) {
        Ok(e) => {
            if e.value != 0.0 {
                worst.set(worst.get().max(e.error / e.value));
            }
            e.value
        }
        Err(err) => {
            failure.set(Some(err));
            0.0
        }
    };
    let est = integrate_real_line(outer, &[], outer_tol())?;
    if let Some(err) = failure.take() {
        return Err(err);
    }
    // the integrand is positive, so relative inner errors integrate
    Ok(Approx { value: est.value, err: est.error + worst.get() * est.value })
}

/// The archimedean density `tau_inf`: [`arch_integral`] at `K^{-1}`.
pub fn arch_density(config: &SurfaceConfig) -> Result<Approx> {
    arch_integral(config, &PicardVector::<f64>::anticanonical(config.r()).real_parts())
}

/// `int_{R^2} H_inf(s; x)^{-1} e^{-2 pi i <a, x>} dx` for `a != 0`: with `e` the
/// unit vector along `a` the transform is `2 int_0^inf G(y) cos(2 pi |a| y) dy`,
/// `G(y) = int F(y e + t e')`. The range is cut at `Y` once Bonnet's bound
/// `2 G(Y) / (2 pi |a|)` for the decreasing tail falls below `tail`, and
/// panels are laid on periods.
pub fn arch_fourier(config: &SurfaceConfig, s: &[f64], a: (i64, i64), tail: f64) -> Result<Approx> {
    let l1 = arch_integral(config, s)?;
    if a == (0, 0) {
        return Ok(l1);
    }
    fourier_nonzero(&ArchWeight::new(config, s)?, a, tail, l1.value + l1.err)
}

/// [`arch_fourier`] for `a != 0` given an upper bound `l1` on `||F||_1`.
fn fourier_nonzero(weight: &ArchWeight, a: (i64, i64), tail: f64, l1: f64) -> Result<Approx> {
    let norm = ((a.0 * a.0 + a.1 * a.1) as f64).sqrt();
    let e = (a.0 as f64 / norm, a.1 as f64 / norm);
    let ep = (-e.1, e.0);
    let g = |y: f64| -> Result<Estimate<f64>> {
        let breaks: Vec<f64> = weight
            .forms
            .iter()
            .filter_map(|&(u, v)| {
                let along = u * ep.0 + v * ep.1;
                (along.abs() > 1e-15).then(|| -y * (u * e.0 + v * e.1) / along)
            })
            .collect();
        integrate_real_line(|t: f64| weight.eval(y * e.0 + t * ep.0, y * e.1 + t * ep.1), &breaks, inner_tol())
    };
    let omega = 2.0 * PI * norm;
    let mut big_y = 4.0;
    loop {
        let g1 = g(big_y)?.value;
        let g2 = g(2.0 * big_y)?.value;
        if 2.0 * g1 / omega <= tail && g2 <= g1 {
            break;
        }
        big_y *= 2.0;
        if big_y > 1e5 {
            return Err(Error::Numerical(format!("archimedean transform at a = {a:?}: integrand decays too slowly")));
        }
    }
    let period = 1.0 / norm;
    let panels = (big_y / period).ceil() as usize;
    let points: Vec<f64> = (0..=panels).map(|i| i as f64 * period).collect();
    let outer = Tolerance::new(tail, 1e-10).with_budget(4 * panels + 4000);
    let (est, ratio) = nested(&points, outer, |y| Ok(((omega * y).cos(), g(y)?)))?;
    // int_0^Y G <= ||F||_1 / 2 bounds the integrated inner error
    Ok(Approx { value: 2.0 * est.value, err: 2.0 * (est.error + tail) + ratio * l1 })
}

/// Upper bound on `|arch_fourier(a)|` by shifting the contour to
/// `x - i eta a / |a|`: `e^{-2 pi eta |a|} C(eta) ||F||_1`, minimised over eta.
fn arch_fourier_bound(weight: &ArchWeight, a: (f64, f64), l1: f64) -> f64 {
    let norm = (a.0 * a.0 + a.1 * a.1).sqrt();
    let ls: Vec<f64> = weight.forms.iter().map(|&(u, v)| ((u * a.0 + v * a.1) / norm).abs()).collect();
    decay_bound(weight, &ls, norm, l1)
}

fn decay_bound(weight: &ArchWeight, ls: &[f64], norm: f64, l1: f64) -> f64 {
    let eta_max = weight.max_strip(ls);
    (1..200)
        .map(|k| {
            let eta = eta_max * k as f64 / 200.0;
            (-2.0 * PI * eta * norm).exp() * weight.strip_factor(eta, ls) * l1
        })
        .fold(f64::INFINITY, f64::min)
}

/// `sum_{||a||_inf > n0} e^{-2 pi eta |a|} C(eta) ||F||_1` with the worst-case
/// `|l_k(e)| <= ||l_k||_2`, using `|a| >= ||a||_inf` and `8n` points per shell.
fn shell_bound(weight: &ArchWeight, n0: i64, l1: f64) -> f64 {
    let ls: Vec<f64> = weight.forms.iter().map(|&(u, v)| (u * u + v * v).sqrt()).collect();
    let eta_max = weight.max_strip(&ls);
    let n = (n0 + 1) as f64;
    (1..200)
        .map(|k| {
            let eta = eta_max * k as f64 / 200.0;
            let q = (-2.0 * PI * eta).exp();
            8.0 * q.powf(n) * (n - (n - 1.0) * q) / ((1.0 - q) * (1.0 - q)) * weight.strip_factor(eta, &ls) * l1
        })
        .fold(f64::INFINITY, f64::min)
}

/// `f(y) = (1 - y)^{r+1} (1 + (r + 1) y + y^2)`, the good-prime factor at
/// `y = 1/p`; returns the coefficients of `f - 1`, whose linear term vanishes.
fn convergence_polynomial(r: usize) -> Vec<i64> {
    let mut poly = vec![1i64, (r + 1) as i64, 1];
    for _ in 0..=r {
        let mut next = vec![0i64; poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c;
        }
        poly = next;
    }
    poly[0] -= 1;
    poly
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tamagawa {
    pub tau_arch: Approx,
    /// `prod_p (1 - 1/p)^{r+1} d_p`.
    pub euler: EulerProductValue,
    pub value: f64,
    pub err: f64,
}

/// `tau(K^{-1}) = tau_inf prod_p (1 - 1/p)^{r+1} d_p`, with `d_p` the trivial
/// transform at `K^{-1}` (closed form at good primes, oracle at bad ones).
/// Beyond `p_max` each factor is `1 + y^2 g(y)` with `|g| <= sum |coeffs|`.
pub fn tamagawa(config: &SurfaceConfig, p_max: u64, oracle: &OracleFactors) -> Result<Tamagawa> {
    if p_max < 2 {
        return Err(Error::Domain("p_max must be at least 2".into()));
    }
    if let Some(&worst) = config.bad_primes().iter().next_back() {
        if worst > p_max {
            return Err(Error::Precondition(format!("p_max = {p_max} is below the bad prime {worst}")));
        }
    }
    let r = config.r();
    let s = PicardVector::<f64>::anticanonical(r);
    let poly = convergence_polynomial(r);
    debug_assert_eq!(poly[1], 0);
    let g_bound: f64 = poly[2..].iter().map(|c| c.unsigned_abs() as f64).sum();
    let mut acc = ErrorProduct::one();
    for p in primes_up_to(p_max) {
        let (d, dd) = if config.is_good(p) {
            (local_ft_trivial(config, p, &s)?.value, 0.0)
        } else {
            let f = oracle.factor(config, p, &s, (0, 0))?;
            (f.value, f.tail_bound)
        };
        let conv = (1.0 - 1.0 / p as f64).powi(r as i32 + 1);
        acc.mul(Complex64::new(conv * d, 0.0), conv * dd);
    }
    let tail = g_bound * prime_tail_sum(p_max as f64, 2.0);
    let bound = (acc.value.norm() + acc.error) * tail.exp_m1() + acc.error;
    let euler = EulerProductValue { value: acc.value, truncation_prime: p_max, truncation_error_bound: bound };
    let tau_arch = arch_density(config)?;
    let e = euler.value.re;
    let value = tau_arch.value * e;
    let err = tau_arch.err * (e.abs() + bound) + tau_arch.value.abs() * bound;
    Ok(Tamagawa { tau_arch, euler, value, err })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantReport {
    pub config_name: String,
    pub r: usize,
    pub tau_arch: Approx,
    pub euler_value: EulerProductValue,
    pub tamagawa: Approx,
    pub alpha: BigRational,
    pub theta: Approx,
    pub predicted_leading_coeff: Approx,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `alpha = 1 / (3 2^r)`, `theta = alpha tau(K^{-1})` and the predicted
/// coefficient `theta / r!` of `B (log B)^r` in the anticanonical count.
pub fn peyre_constant(config: &SurfaceConfig, p_max: u64, oracle: &OracleFactors) -> Result<ConstantReport> {
    let r = config.r();
    let tam = tamagawa(config, p_max, oracle)?;
    let alpha = BigRational::new(BigInt::from(1), BigInt::from(3) * (BigInt::from(1) << r));
    let a = alpha.to_f64().unwrap();
    let theta = Approx { value: a * tam.value, err: a * tam.err };
    let rf = factorial(r);
    Ok(ConstantReport {
        config_name: config.name().to_string(),
        r,
        tau_arch: tam.tau_arch,
        euler_value: tam.euler,
        tamagawa: Approx { value: tam.value, err: tam.err },
        alpha,
        theta,
        predicted_leading_coeff: Approx { value: theta.value / rf, err: theta.err / rf },
    })
}

/// Residue of the height zeta function of `P^n` at `s = n + 1`:
/// `pi^{n/2} Gamma(1/2) / (Gamma((n + 1)/2) zeta(n + 1))`.
pub fn pn_residue(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let nf = n as f64;
    Ok(PI.powf(nf / 2.0) * PI.sqrt() / (gamma_real((nf + 1.0) / 2.0) * zeta(nf + 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    /// `c_0, ..., c_r` with `N(B) / B ~ sum_j c_j (log B)^j`.
    pub coefficients: Vec<f64>,
    pub leading_estimate: f64,
    /// Root-mean-square residual of `N / B`.
    pub residual: f64,
    /// Leading coefficient after dropping the smallest 1, 2, 3 grid points.
    pub stability_trace: Vec<f64>,
}

/// Least squares of `y` against `1, L, ..., L^r` by SVD, with columns scaled
/// to unit maximum so that the conditioning test is meaningful.
fn log_polynomial_fit(logs: &[f64], y: &[f64], r: usize) -> Result<(Vec<f64>, f64)> {
    let n = logs.len();
    let lmax = logs.iter().fold(1.0f64, |m, l| m.max(l.abs()));
    let design = DMatrix::from_fn(n, r + 1, |i, j| (logs[i] / lmax).powi(j as i32));
    let rhs = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::GridTooNarrow(format!("design matrix is ill-conditioned (singular values {smin:e} .. {smax:e})")));
    }
    let sol = svd.solve(&rhs, 1e-14 * smax).map_err(|e| Error::Numerical(e.to_string()))?;
    let fitted = &design * &sol;
    let residual = ((&fitted - &rhs).norm_squared() / n as f64).sqrt();
    let coeffs = (0..=r).map(|j| sol[j] / lmax.powi(j as i32)).collect();
    Ok((coeffs, residual))
}

/// Fits `N(B_i) / B_i` by a polynomial of degree `r` in `log B_i`.
pub fn fit_log_polynomial(grid: &[f64], counts: &[f64], r: usize) -> Result<FitResult> {
    if grid.len() != counts.len() {
        return Err(Error::Domain("grid and counts differ in length".into()));
    }
    if grid.len() < r + 3 {
        return Err(Error::GridTooNarrow(format!("{} points for a degree-{r} fit; need at least {}", grid.len(), r + 3)));
    }
    if grid.iter().any(|&b| !(b > 1.0)) {
        return Err(Error::Domain("grid points must exceed 1".into()));
    }
    let mut idx: Vec<usize> = (0..grid.len()).collect();
    idx.sort_by(|&i, &j| grid[i].partial_cmp(&grid[j]).unwrap());
    let bmin = grid[idx[0]];
    let bmax = grid[idx[idx.len() - 1]];
    if bmax / bmin < 1e3 {
        return Err(Error::GridTooNarrow(format!("grid spans {:.2} decades; need at least 3", (bmax / bmin).log10())));
    }
    let logs: Vec<f64> = idx.iter().map(|&i| grid[i].ln()).collect();
    let y: Vec<f64> = idx.iter().map(|&i| counts[i] / grid[i]).collect();
    let (coefficients, residual) = log_polynomial_fit(&logs, &y, r)?;
    let mut stability_trace = Vec::new();
    for drop in 1..=3 {
        if logs.len() - drop < r + 1 {
            break;
        }
        let (c, _) = log_polynomial_fit(&logs[drop..], &y[drop..], r)?;
        stability_trace.push(c[r]);
    }
    Ok(FitResult { leading_estimate: coefficients[r], coefficients, residual, stability_trace })
}

pub fn fit_leading(series: &CountSeries, r: usize) -> Result<FitResult> {
    let counts: Vec<f64> = series.counts.iter().map(|&n| n as f64).collect();
    fit_log_polynomial(&series.grid_f64(), &counts, r)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoissonReport {
    pub s: Vec<Complex64>,
    /// `sum_{H(Re s) <= B_direct} H(s; x)^{-1}`.
    pub direct: Complex64,
    pub direct_points: u64,
    /// Exact sum over `B_direct < H(Re s) <= B_direct * 1000^lambda`.
    pub extension: Complex64,
    /// Remainder beyond the extension from the fitted anticanonical count.
    pub asymptotic: Complex64,
    pub lhs: Complex64,
    pub lhs_tail: f64,
    pub rhs: Complex64,
    pub rhs_tail: f64,
    pub characters_computed: usize,
    pub characters_bounded: usize,
    pub difference: f64,
    pub within_bounds: bool,
}

impl PoissonReport {
    pub fn relative_difference(&self) -> f64 {
        self.difference / self.lhs.norm()
    }
}

/// `int_T^inf t^{-lambda} Q(log t) dt` for a polynomial `Q` (ascending
/// coefficients), through `int_T^inf t^{-lambda} L^j = T^{1-lambda}
/// sum_i j!/(j-i)! L_T^{j-i} / (lambda-1)^{i+1}`.
fn log_power_tail(q: &[f64], t: f64, lambda: f64) -> f64 {
    let lt = t.ln();
    let m = lambda - 1.0;
    let mut total = 0.0;
    for (j, &c) in q.iter().enumerate() {
        let mut falling = 1.0;
        let mut sum = 0.0;
        for i in 0..=j {
            sum += falling * lt.powi((j - i) as i32) / m.powi(i as i32 + 1);
            falling *= (j - i) as f64;
        }
        total += c * sum;
    }
    t.powf(-m) * total
}

/// Compares `sum_{x in Q^2} H(s; x)^{-1}` with `sum_{a in Z^2} H^(s; psi_a)`.
///
/// The left side is the direct sum to `B_direct`, an exact extension by a
/// factor `1000` in the anticanonical height, and an asymptotic remainder
/// taken as its own uncertainty; this needs `Re s = lambda K^{-1}`. The right
/// side evaluates every `||a||_inf <= a_max` whose contour-shift bound exceeds
/// `1e-11`, bounds the rest, and bounds all `||a||_inf > a_max` by shells.
/// Finite factors off `S(a)` are closed forms up to `p_max`; factors on
/// `S(a)` come from the oracle with the given options.
pub fn poisson_check(
    config: &SurfaceConfig,
    s: &PicardVector<Complex64>,
    b_direct: &BigRational,
    a_max: i64,
    p_max: u64,
    oracle_opts: OracleOptions,
    shards: usize,
) -> Result<PoissonReport> {
    let margin = convergence_margin(config, s).ok_or_else(|| Error::Domain("Picard vector length does not match".into()))?;
    if margin < 1.0 {
        return Err(Error::Precondition(format!("convergence margin {margin} is below 1")));
    }
    if a_max < 0 {
        return Err(Error::Domain("a_max must be nonnegative".into()));
    }
    let sigma = s.real_parts();
    let r = config.r();
    let lambda = sigma[0] / 3.0;
    let proportional = sigma[1..].iter().all(|&x| (x - 2.0 * lambda).abs() < 1e-12);
    if !proportional {
        return Err(Error::Precondition("the left-side tail estimate needs Re s proportional to the anticanonical class".into()));
    }
    let real = s.iter().all(|z| z.im == 0.0);

    // left side
    let direct = zeta_partial(config, s, b_direct, shards)?;
    let stretch = 1000.0f64;
    let lambda_q = BigRational::from_f64(lambda).ok_or_else(|| Error::Domain("non-finite s".into()))?;
    let b_ext = if lambda_q.is_integer() {
        b_direct * BigRational::from_integer(BigInt::from(1000).pow(lambda_q.to_integer().to_u32().unwrap()))
    } else {
        BigRational::from_f64(b_direct.to_f64().unwrap() * stretch.powf(lambda)).unwrap()
    };
    let extended = zeta_partial(config, s, &b_ext, shards)?;
    let t_ext = b_ext.to_f64().unwrap().powf(1.0 / lambda);
    let k_bundle = ExactBundle::new(&PicardVector::<BigRational>::anticanonical(r))?;
    let grid: Vec<BigRational> = (0..=12)
        .rev()
        .map(|i| BigRational::from_f64((t_ext / 2f64.powi(i)).floor()).unwrap())
        .collect();
    let fit = fit_leading(&count_series(config, &k_bundle, &grid, shards)?, r)?;
    let mut q = fit.coefficients.clone();
    for j in 1..fit.coefficients.len() {
        q[j - 1] += j as f64 * fit.coefficients[j];
    }
    let remainder = log_power_tail(&q, t_ext, lambda);
    let asymptotic = if real { Complex64::new(remainder, 0.0) } else { Complex64::new(0.0, 0.0) };
    let lhs = extended.value + asymptotic;
    let lhs_tail = remainder.abs();

    // right side
    let weight = ArchWeight::new(config, &sigma)?;
    let oracle = OracleFactors::new(oracle_opts);
    let h0 = arch_integral(config, &sigma)?;
    let e0 = euler_product(config, s, &classify_character(config, (0, 0)), p_max, &oracle)?;
    let l1 = h0.value + h0.err;
    let e_bound = e0.value.norm() + e0.truncation_error_bound;
    let skip = 1e-11;
    let mut wanted = Vec::new();
    let mut bounded = 0usize;
    let mut rhs_tail = 0.0;
    for a1 in 0..=a_max {
        for a2 in -a_max..=a_max {
            if a1 == 0 && a2 <= 0 {
                continue;
            }
            let bound = e_bound * arch_fourier_bound(&weight, (a1 as f64, a2 as f64), l1);
            if bound <= skip {
                bounded += 2;
                rhs_tail += 2.0 * bound;
            } else {
                wanted.push((a1, a2));
            }
        }
    }
    rhs_tail += e_bound * shell_bound(&weight, a_max, l1);
    let terms: Vec<Result<(Complex64, f64)>> = wanted
        .par_iter()
        .map(|&a| {
            let e = euler_product(config, s, &classify_character(config, a), p_max, &oracle)?;
            let h = fourier_nonzero(&weight, a, 1e-10, l1)?;
            let err = e.value.norm() * h.err + h.value.abs() * e.truncation_error_bound + h.err * e.truncation_error_bound;
            Ok((e.value * h.value, err))
        })
        .collect();
    let mut rhs = e0.value * h0.value;
    rhs_tail += e0.value.norm() * h0.err + h0.value.abs() * e0.truncation_error_bound + h0.err * e0.truncation_error_bound;
    for t in terms {
        let (v, err) = t?;
        // a and -a contribute equally
        rhs += 2.0 * v;
        rhs_tail += 2.0 * err;
    }
    let difference = (lhs - rhs).norm();
    Ok(PoissonReport {
        s: s.iter().copied().collect(),
        direct: direct.value,
        direct_points: direct.points,
        extension: extended.value - direct.value,
        asymptotic,
        lhs,
        lhs_tail,
        rhs,
        rhs_tail,
        characters_computed: 1 + 2 * wanted.len(),
        characters_bounded: bounded,
        difference,
        within_bounds: difference <= lhs_tail + rhs_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::pn_arch_ft_trivial;
    use crate::surface::validate_config;

    fn cfg(forms: &[(i64, i64)]) -> SurfaceConfig {
        validate_config("t", forms).unwrap()
    }

    #[test]
    fn density_without_blowups_is_projective_plane() {
        let d = arch_density(&cfg(&[])).unwrap();
        let pn = pn_arch_ft_trivial(2, Complex64::new(3.0, 0.0)).unwrap().value.re;
        assert!((d.value - 2.0 * PI).abs() < 1e-8);
        assert!((d.value - pn).abs() < 1e-6 * pn);
        assert!(d.err < 1e-6 * d.value);
    }

    #[test]
    fn density_one_line() {
        // int (1 + |x|^2)^{-1} (1 + x_1^2)^{-1/2} dx = pi int (1 + x_1^2)^{-1} = pi^2
        let c = cfg(&[(1, 0)]);
        let polar = arch_density(&c).unwrap();
        let cart = arch_integral_cartesian(&c, &[3.0, 2.0]).unwrap();
        assert!((polar.value - PI * PI).abs() < 1e-7, "{polar:?}");
        assert!((cart.value - PI * PI).abs() < 1e-5, "{cart:?}");
    }

    #[test]
    fn density_rules_agree() {
        for forms in [vec![(1, 0), (0, 1)], vec![(1, 0), (0, 1), (1, 1)], vec![(1, 2), (3, -1)]] {
            let c = cfg(&forms);
            let s = PicardVector::<f64>::anticanonical(c.r()).real_parts();
            let a = arch_integral(&c, &s).unwrap();
            let b = arch_integral_cartesian(&c, &s).unwrap();
            assert!(a.value > 0.0);
            assert!((a.value - b.value).abs() < 1e-5 * a.value, "{forms:?}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn fourier_one_dimensional_reduction() {
        // r = 0, s_0 = 4: F = (1 + |x|^2)^{-2}, transform 2 pi^2 |a| K_1(2 pi |a|)
        let c = cfg(&[]);
        let a = arch_fourier(&c, &[4.0], (1, 0), 1e-12).unwrap();
        let z = 2.0 * PI;
        // K_1(2 pi) from its integral representation
        let k1 = crate::quadrature::integrate_half_line(|t: f64| (-z * t.cosh()).exp() * t.cosh(), &[], Tolerance::new(1e-16, 1e-13))
            .unwrap()
            .value;
        let expected = 2.0 * PI * PI * k1;
        assert!((a.value - expected).abs() < 1e-9, "{} vs {expected}", a.value);
        // rotation invariance when there are no lines
        let b = arch_fourier(&c, &[4.0], (0, -1), 1e-12).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn fourier_respects_contour_bound() {
        let c = cfg(&[(1, 0)]);
        let sigma = [6.0, 4.0];
        let w = ArchWeight::new(&c, &sigma).unwrap();
        let l1 = arch_integral(&c, &sigma).unwrap().value;
        for a in [(1, 0), (0, 1), (1, 1), (2, -1)] {
            let h = arch_fourier(&c, &sigma, a, 1e-10).unwrap();
            assert!(h.value.abs() <= arch_fourier_bound(&w, (a.0 as f64, a.1 as f64), l1), "{a:?}");
        }
    }

    #[test]
    fn convergence_polynomial_has_no_linear_term() {
        for r in 0..6 {
            let p = convergence_polynomial(r);
            assert_eq!(p[0], 0);
            assert_eq!(p[1], 0);
        }
        // r = 0: (1 - y)(1 + y + y^2) - 1 = -y^3
        assert_eq!(convergence_polynomial(0), vec![0, 0, 0, -1]);
    }

    #[test]
    fn tamagawa_without_blowups() {
        let t = tamagawa(&cfg(&[]), 1000, &OracleFactors::default()).unwrap();
        assert!((t.euler.value.re - 1.0 / zeta(3.0)).abs() <= t.euler.truncation_error_bound + 1e-12);
        assert!((t.value - 2.0 * PI / zeta(3.0)).abs() < 1e-6);
    }

    #[test]
    fn peyre_alpha() {
        let rep = peyre_constant(&cfg(&[(1, 0)]), 1000, &OracleFactors::default()).unwrap();
        assert_eq!(rep.alpha, BigRational::new(1.into(), 6.into()));
        assert!((rep.predicted_leading_coeff.value - 6.0 / (PI * PI)).abs() <= rep.predicted_leading_coeff.err);
        let rep0 = peyre_constant(&cfg(&[]), 1000, &OracleFactors::default()).unwrap();
        assert!((rep0.predicted_leading_coeff.value - 2.0 * PI / (3.0 * zeta(3.0))).abs() <= rep0.predicted_leading_coeff.err);
    }

    #[test]
    fn residues() {
        assert!((pn_residue(2).unwrap() - 2.0 * PI / zeta(3.0)).abs() < 1e-10);
        assert!((pn_residue(1).unwrap() - 6.0 / PI).abs() < 1e-10);
        assert!(pn_residue(0).is_err());
    }

    #[test]
    fn fit_exact_series() {
        let grid: Vec<f64> = (0..12).map(|i| 10.0 * 2f64.powi(i)).collect();
        let counts: Vec<f64> = grid.iter().map(|b| b * (2.0 + 3.0 * b.ln())).collect();
        let f = fit_log_polynomial(&grid, &counts, 1).unwrap();
        assert!((f.leading_estimate - 3.0).abs() < 1e-10);
        assert!((f.coefficients[0] - 2.0).abs() < 1e-9);
        assert_eq!(f.stability_trace.len(), 3);
    }

    #[test]
    fn fit_rejects_narrow_grids() {
        let grid = [10.0, 20.0, 40.0, 80.0, 160.0];
        let counts = grid.map(|b| b * 2.0);
        assert!(matches!(fit_log_polynomial(&grid, &counts, 1), Err(Error::GridTooNarrow(_))));
        assert!(matches!(fit_log_polynomial(&[10.0, 1e5], &[1.0, 2.0], 1), Err(Error::GridTooNarrow(_))));
    }

    #[test]
    fn log_power_tail_matches_quadrature() {
        let q = [0.7, -0.2, 0.05];
        let lambda = 2.5;
        let t = 50.0;
        let direct = crate::quadrature::integrate_half_line(
            |x: f64| {
                let u = x + t;
                let l = u.ln();
                u.powf(-lambda) * (q[0] + q[1] * l + q[2] * l * l)
            },
            &[],
            Tolerance::new(1e-14, 1e-12),
        )
        .unwrap();
        assert!((direct.value - log_power_tail(&q, t, lambda)).abs() < 1e-10);
    }
}
