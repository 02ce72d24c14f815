//! Exact counts of rational points of bounded height on `A^2 = X \ (D_0 u .. u D_r)`.
//!
//! A point is a primitive triple `(a, b, c)` with `c >= 1`, i.e. `x = (a/c, b/c)`.
//! For a class `s` with rational coordinates of common denominator `d` the
//! test `H(s; x) <= B` is decided on integers as `H^{2d} <= B^{2d}` using
//!
//! ```text
//! H(s; x)^2 = N^{s_0} * prod_k (g_k^2 N / (c^2 + l_k^2))^{s_k - s_0},
//! N = a^2 + b^2 + c^2,  g_k = gcd(c, l_k(a, b)).
//! ```

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{gcd_i64, prime_factors_u64, PrimitiveTriple};
use crate::error::{Error, Result};
use crate::heights::{height_bundle_exact, PicardVector};
use crate::surface::SurfaceConfig;

/// A rational class `s = S / d` with integer numerators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExactBundle {
    pub numerators: Vec<i64>,
    pub denominator: i64,
}

impl ExactBundle {
    pub fn new(s: &PicardVector<BigRational>) -> Result<Self> {
        let d = s.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
        let numerators = s
            .iter()
            .map(|x| (x * BigRational::from_integer(d.clone())).to_integer().to_i64())
            .collect::<Option<Vec<i64>>>()
            .ok_or_else(|| Error::Domain("class coordinates too large".into()))?;
        let denominator = d.to_i64().filter(|&d| d <= 1 << 20).ok_or_else(|| Error::Domain("class denominator too large".into()))?;
        Ok(ExactBundle { numerators, denominator })
    }

    /// Exact conversion of binary64 coordinates with small denominators.
    pub fn from_f64(s: &[f64]) -> Result<Self> {
        let q = s
            .iter()
            .map(|&x| {
                Ratio::<i64>::approximate_float(x)
                    .filter(|q| *q.denom() <= 1 << 20 && (*q.numer() as f64 / *q.denom() as f64) == x)
                    .map(|q| BigRational::new((*q.numer()).into(), (*q.denom()).into()))
                    .ok_or_else(|| Error::Domain(format!("{x} is not a rational with a small denominator")))
            })
            .collect::<Result<Vec<_>>>()?;
        ExactBundle::new(&PicardVector::new(q))
    }

    pub fn r(&self) -> usize {
        self.numerators.len() - 1
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.numerators.iter().map(|&n| n as f64 / self.denominator as f64).collect()
    }

    pub fn to_rational(&self) -> PicardVector<BigRational> {
        PicardVector::new(self.numerators.iter().map(|&n| BigRational::new(n.into(), self.denominator.into())).collect())
    }

    /// `d (s_0 - s_k)`.
    fn excess(&self, k: usize) -> i64 {
        self.numerators[0] - self.numerators[k]
    }

    /// `d w` with `w = s_0 - sum_k (s_0 - s_k)`.
    fn weight(&self) -> i64 {
        self.numerators[0] - (1..=self.r()).map(|k| self.excess(k)).sum::<i64>()
    }
}

/// `B^{2d}` as a fraction.
#[derive(Clone, Debug)]
struct Threshold {
    small: Option<(i128, i128)>,
    big: (BigInt, BigInt),
}

impl Threshold {
    fn new(b: &BigRational, d: i64) -> Result<Self> {
        if !b.is_positive() {
            return Err(Error::Domain("height bound must be positive".into()));
        }
        let e = 2 * d as usize;
        let big = (num_traits::pow(b.numer().clone(), e), num_traits::pow(b.denom().clone(), e));
        let small = big.0.to_i128().zip(big.1.to_i128());
        Ok(Threshold { small, big })
    }
}

/// `H^{2d}` of a point as an unreduced fraction.
#[derive(Clone, Debug)]
enum Frac {
    Small(i128, i128),
    Big(BigInt, BigInt),
}

impl Frac {
    fn le(&self, t: &Threshold) -> bool {
        if let (Frac::Small(n, d), Some((tn, td))) = (self, t.small) {
            if let (Some(lhs), Some(rhs)) = (n.checked_mul(td), tn.checked_mul(*d)) {
                return lhs <= rhs;
            }
        }
        let (n, d) = self.to_big();
        n * &t.big.1 <= &t.big.0 * d
    }

    fn to_big(&self) -> (BigInt, BigInt) {
        match self {
            Frac::Small(n, d) => (BigInt::from(*n), BigInt::from(*d)),
            Frac::Big(n, d) => (n.clone(), d.clone()),
        }
    }
}

/// The integer data of one point against the configuration.
struct PointData {
    n2: i128,
    /// `(c^2 + l_k^2, gcd(c, l_k))`.
    forms: Vec<(i128, i128)>,
}

impl PointData {
    fn new(config: &SurfaceConfig, a: i64, b: i64, c: i64) -> Self {
        let (a, b, c) = (a as i128, b as i128, c as i128);
        let forms = config
            .forms()
            .iter()
            .map(|f| {
                let l = f.eval(a, b);
                (c * c + l * l, gcd_i128_abs(c, l))
            })
            .collect();
        PointData { n2: a * a + b * b + c * c, forms }
    }

    /// `(num, den)` factors with exponents, before multiplication.
    fn factors(&self, bundle: &ExactBundle) -> Vec<(i128, bool, u32)> {
        let s0 = bundle.numerators[0];
        let mut out = vec![(self.n2, s0 >= 0, s0.unsigned_abs() as u32)];
        for (k, &(cl, g)) in self.forms.iter().enumerate() {
            let t = bundle.numerators[k + 1] - s0;
            let gn = g * g * self.n2;
            out.push((gn, t >= 0, t.unsigned_abs() as u32));
            out.push((cl, t < 0, t.unsigned_abs() as u32));
        }
        out
    }

    fn height_power(&self, bundle: &ExactBundle) -> Frac {
        let fs = self.factors(bundle);
        let small = (|| {
            let (mut n, mut d) = (1i128, 1i128);
            for &(v, up, e) in &fs {
                let p = v.checked_pow(e)?;
                if up {
                    n = n.checked_mul(p)?;
                } else {
                    d = d.checked_mul(p)?;
                }
            }
            Some((n, d))
        })();
        match small {
            Some((n, d)) => Frac::Small(n, d),
            None => {
                let (mut n, mut d) = (BigInt::one(), BigInt::one());
                for &(v, up, e) in &fs {
                    let p = num_traits::pow(BigInt::from(v), e as usize);
                    if up {
                        n *= p;
                    } else {
                        d *= p;
                    }
                }
                Frac::Big(n, d)
            }
        }
    }

    /// `log H_k` for `k = 0..=r`.
    fn log_heights(&self) -> Vec<f64> {
        let ln_n = (self.n2 as f64).ln();
        let mut out = vec![0.5 * ln_n];
        for &(cl, g) in &self.forms {
            out.push((g as f64).ln() + 0.5 * (ln_n - (cl as f64).ln()));
        }
        let tail: f64 = out[1..].iter().sum();
        out[0] -= tail;
        out
    }
}

fn gcd_i128_abs(a: i128, b: i128) -> i128 {
    crate::arith::gcd_i128(a, b).abs()
}

/// A proven lower bound `H(s; x) >= C * max(|a|, |b|, c)^gamma` on `U(Q)`.
///
/// Write `H = H_O^w prod_k Q_k^{e_k}` with `Q_k = sqrt(c^2 + l_k^2) / g_k >= 1`,
/// `e_k = s_0 - s_k >= 0` and `w = s_0 - sum e_k`, and `M = max(|a|, |b|, c)`.
/// (i) If `|l_j|, |l_k| < delta max(|a|, |b|)` then inverting the pair gives
/// `max(|a|, |b|) < max(|a|, |b|) / 2`; so all forms but one satisfy
/// `sqrt(c^2 + l^2) >= delta M` once `delta <= 1`.
/// (ii) A prime power dividing `c` and two of the `l_k` divides their
/// determinant (`gcd(a, b, c) = 1`), so `prod_k g_k <= c P` with `P` the
/// product of all pairwise determinants.
/// Hence `prod_k Q_k >= (delta M)^{r-1} / P`, and with `H_O >= M`
/// (`H_O <= sqrt 3 M` when `w < 0`)
/// `H >= min(1, 3^{w/2}) (delta^{r-1} / P)^{e_min} M^{w + (r-1) e_min}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PruningBound {
    pub constant: f64,
    pub gamma: f64,
}

impl PruningBound {
    pub fn derive(config: &SurfaceConfig, bundle: &ExactBundle) -> Option<Self> {
        if bundle.r() != config.r() {
            return None;
        }
        let d = bundle.denominator as f64;
        let r = config.r();
        if r == 0 {
            let s0 = bundle.numerators[0] as f64 / d;
            return (s0 > 0.0).then_some(PruningBound { constant: 1.0, gamma: s0 });
        }
        let e: Vec<f64> = (1..=r).map(|k| bundle.excess(k) as f64 / d).collect();
        if e.iter().any(|&x| x < 0.0) {
            return None;
        }
        let e_min = e.iter().cloned().fold(f64::INFINITY, f64::min);
        let w = bundle.weight() as f64 / d;
        let gamma = w + (r as f64 - 1.0) * e_min;
        if gamma <= 0.0 {
            return None;
        }
        let forms = config.forms();
        let spread = forms.iter().map(|f| (f.u.abs() + f.v.abs()) as f64).fold(0.0, f64::max);
        let mut min_det = f64::INFINITY;
        let mut ln_p = 0.0;
        for (i, f) in forms.iter().enumerate() {
            for g in &forms[i + 1..] {
                let det = f.det(g).abs() as f64;
                min_det = min_det.min(det);
                ln_p += det.ln();
            }
        }
        let delta = if r >= 2 { (min_det / (2.0 * spread)).min(1.0) } else { 1.0 };
        let ln_c = e_min * ((r as f64 - 1.0) * delta.ln() - ln_p) + (0.5 * w * 3f64.ln()).min(0.0);
        Some(PruningBound { constant: ln_c.exp(), gamma })
    }

    /// Every point with `H <= B` has `max(|a|, |b|, c) <= radius`.
    pub fn radius(&self, bound: f64) -> i64 {
        let m = (bound / self.constant).powf(1.0 / self.gamma);
        (m * (1.0 + 1e-9)).floor() as i64 + 1
    }
}

/// How the sweep bounds its candidates.
#[derive(Clone, Debug)]
pub struct SweepPlan {
    config: SurfaceConfig,
    bundle: ExactBundle,
    radius: i64,
    /// Inner variable is `x_1` (otherwise `x_2`).
    inner_first: bool,
    /// Forms independent of the inner variable.
    fixed_forms: Vec<usize>,
    /// Whether the monotone per-row bound applies.
    row_bound: bool,
}

impl SweepPlan {
    /// Plan for bound `b_max`: the proven box, or an explicit one.
    pub fn new(config: &SurfaceConfig, bundle: &ExactBundle, b_max: &BigRational, radius: Option<i64>) -> Result<Self> {
        if bundle.r() != config.r() {
            return Err(Error::Domain(format!("class has r = {}, configuration has r = {}", bundle.r(), config.r())));
        }
        if bundle.numerators.iter().any(|&n| n <= 0) {
            return Err(Error::Precondition("class must lie in the interior of the effective cone".into()));
        }
        let radius = match radius {
            Some(r) => r,
            None => PruningBound::derive(config, bundle).ok_or(Error::NoPruningBound)?.radius(b_max.to_f64().unwrap_or(f64::INFINITY)),
        };
        if radius > 1 << 24 {
            return Err(Error::Domain(format!("search radius {radius} is too large")));
        }
        let forms = config.forms();
        let zero_u = forms.iter().filter(|f| f.u == 0).count();
        let zero_v = forms.iter().filter(|f| f.v == 0).count();
        let inner_first = zero_u > zero_v;
        let fixed_forms = (0..forms.len()).filter(|&k| if inner_first { forms[k].u == 0 } else { forms[k].v == 0 }).collect();
        let row_bound = (1..=config.r()).all(|k| bundle.excess(k) >= 0) && bundle.weight() >= 0;
        Ok(SweepPlan { config: config.clone(), bundle: bundle.clone(), radius, inner_first, fixed_forms, row_bound })
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    fn point(&self, outer: i64, inner: i64) -> (i64, i64) {
        if self.inner_first {
            (inner, outer)
        } else {
            (outer, inner)
        }
    }

    /// `H^{2d} >= N^{d w} prod_{fixed k} ((c^2 + l_k^2) / g_k^2)^{d e_k}`,
    /// monotone in `|inner|`.
    fn row_lower_ok(&self, c: i64, outer: i64, inner: i64, t: &Threshold) -> bool {
        let (a, b) = self.point(outer, inner);
        let pd = PointData::new(&self.config, a, b, c);
        let dw = self.bundle.weight() as u32;
        let mut fs = vec![(pd.n2, true, dw)];
        for &k in &self.fixed_forms {
            let e = self.bundle.excess(k + 1) as u32;
            let (cl, g) = pd.forms[k];
            fs.push((cl, true, e));
            fs.push((g * g, false, e));
        }
        let small = (|| {
            let (mut n, mut d) = (1i128, 1i128);
            for &(v, up, e) in &fs {
                let p = v.checked_pow(e)?;
                if up {
                    n = n.checked_mul(p)?;
                } else {
                    d = d.checked_mul(p)?;
                }
            }
            Some(Frac::Small(n, d))
        })();
        let frac = small.unwrap_or_else(|| {
            let (mut n, mut d) = (BigInt::one(), BigInt::one());
            for &(v, up, e) in &fs {
                let p = num_traits::pow(BigInt::from(v), e as usize);
                if up {
                    n *= p;
                } else {
                    d *= p;
                }
            }
            Frac::Big(n, d)
        });
        frac.le(t)
    }

    /// Largest `m <= radius` with every `|inner| <= m` allowed by the row
    /// bound, or `None` if the row is empty.
    fn inner_limit(&self, c: i64, outer: i64, t: &Threshold) -> Option<i64> {
        if !self.row_bound {
            return Some(self.radius);
        }
        if !self.row_lower_ok(c, outer, 0, t) {
            return None;
        }
        let (mut lo, mut hi) = (0i64, self.radius);
        if self.row_lower_ok(c, outer, hi, t) {
            return Some(hi);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.row_lower_ok(c, outer, mid, t) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }

    /// Calls `visit(a, b, point)` for every primitive triple with denominator
    /// `c` and `H <= B`, in a fixed order.
    fn for_each_in_row(&self, c: i64, t: &Threshold, mut visit: impl FnMut(i64, i64, &PointData, &Frac)) {
        let r = self.radius;
        for outer in -r..=r {
            let g = gcd_i64(outer, c);
            let Some(m) = self.inner_limit(c, outer, t) else { continue };
            for inner in -m..=m {
                if g != 1 && gcd_i64(inner, g) != 1 {
                    continue;
                }
                let (a, b) = self.point(outer, inner);
                let pd = PointData::new(&self.config, a, b, c);
                let hp = pd.height_power(&self.bundle);
                if hp.le(t) {
                    visit(a, b, &pd, &hp);
                }
            }
        }
    }

    /// Applies `row` to every denominator `1..=radius`, partitioned into
    /// `shards` classes of `c mod shards`, and returns the results in `c` order.
    fn rows<T: Send>(&self, shards: usize, row: impl Fn(i64) -> T + Sync) -> Vec<T> {
        let w = shards.max(1) as i64;
        let radius = self.radius;
        let mut out: Vec<(i64, T)> = (0..w)
            .into_par_iter()
            .flat_map_iter(|s| {
                let row = &row;
                (1..=radius).filter(move |c| c % w == s).map(move |c| (c, row(c)))
            })
            .collect();
        out.sort_by_key(|(c, _)| *c);
        out.into_iter().map(|(_, t)| t).collect()
    }
}

fn parse_bound(b: &BigRational) -> Result<()> {
    if !b.is_positive() {
        return Err(Error::Domain("height bound must be positive".into()));
    }
    Ok(())
}

/// `#{x in U(Q) : H(s; x) <= B}`.
pub fn enumerate_count(config: &SurfaceConfig, s: &ExactBundle, b: &BigRational) -> Result<u64> {
    Ok(count_series_with(config, s, std::slice::from_ref(b), 1, None)?.counts[0])
}

/// As [`enumerate_count`] inside an explicit box `max(|a|, |b|, c) <= radius`.
pub fn enumerate_count_in_box(config: &SurfaceConfig, s: &ExactBundle, b: &BigRational, radius: i64) -> Result<u64> {
    Ok(count_series_with(config, s, std::slice::from_ref(b), 1, Some(radius))?.counts[0])
}

/// Independent scan of every primitive triple in the box, each height
/// evaluated through the exact height functions.
pub fn naive_count_oracle(config: &SurfaceConfig, s: &ExactBundle, b: &BigRational, box_half_width: i64) -> Result<u64> {
    parse_bound(b)?;
    let d = s.denominator;
    let bound_d = num_traits::pow(b.clone(), d as usize);
    let sf = s.to_f64();
    let ln_b = b.to_f64().unwrap().ln();
    let mut count = 0u64;
    for c in 1..=box_half_width {
        for a in -box_half_width..=box_half_width {
            for bb in -box_half_width..=box_half_width {
                if gcd_i64(gcd_i64(a, bb), c) != 1 {
                    continue;
                }
                let pd = PointData::new(config, a, bb, c);
                let ln_h: f64 = pd.log_heights().iter().zip(&sf).map(|(l, s)| l * s).sum();
                if ln_h > ln_b + 1e-6 * (1.0 + ln_b.abs()) {
                    continue;
                }
                let x = PrimitiveTriple::from_i64(a, bb, c)?;
                if height_bundle_exact(config, &s.numerators, &x)?.le_rational(&bound_d) {
                    count += 1;
                }
            }
        }
    }
    Ok(count)
}

/// Exact counts `N(B_i)` over a strictly increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountSeries {
    pub config_name: String,
    pub bundle: ExactBundle,
    pub grid: Vec<BigRational>,
    pub counts: Vec<u64>,
}

fn format_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl CountSeries {
    pub fn grid_f64(&self) -> Vec<f64> {
        self.grid.iter().map(|b| b.to_f64().unwrap()).collect()
    }

    /// `B,N` rows with a header, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("B,N\n");
        for (b, n) in self.grid.iter().zip(&self.counts) {
            out.push_str(&format!("{},{}\n", format_rational(b), n));
        }
        out
    }
}

/// One sweep at the largest bound; every point is assigned to the first grid
/// value it does not exceed, then counts are accumulated.
pub fn count_series(config: &SurfaceConfig, s: &ExactBundle, grid: &[BigRational], shards: usize) -> Result<CountSeries> {
    count_series_with(config, s, grid, shards, None)
}

pub fn count_series_with(config: &SurfaceConfig, s: &ExactBundle, grid: &[BigRational], shards: usize, radius: Option<i64>) -> Result<CountSeries> {
    if grid.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    for b in grid {
        parse_bound(b)?;
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("grid must be strictly increasing".into()));
    }
    let b_max = grid.last().unwrap();
    let plan = SweepPlan::new(config, s, b_max, radius)?;
    let thresholds = grid.iter().map(|b| Threshold::new(b, s.denominator)).collect::<Result<Vec<_>>>()?;
    let top = thresholds.last().unwrap().clone();
    let per_row = plan.rows(shards, |c| {
        let mut buckets = vec![0u64; thresholds.len()];
        plan.for_each_in_row(c, &top, |_, _, _, hp| {
            let i = thresholds.partition_point(|t| !hp.le(t));
            buckets[i] += 1;
        });
        buckets
    });
    let mut counts = vec![0u64; grid.len()];
    for row in per_row {
        for (acc, v) in counts.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    Ok(CountSeries { config_name: config.name().to_string(), bundle: s.clone(), grid: grid.to_vec(), counts })
}

/// Partial height zeta sum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZetaPartial {
    pub value: Complex64,
    pub points: u64,
}

/// `sum_{H(Re s; x) <= B} H(s; x)^{-1}`; rows are summed in `c` order so the
/// value does not depend on `shards`.
pub fn zeta_partial(config: &SurfaceConfig, s: &PicardVector<Complex64>, b: &BigRational, shards: usize) -> Result<ZetaPartial> {
    let re = ExactBundle::from_f64(&s.real_parts())?;
    let sv: Vec<Complex64> = s.iter().copied().collect();
    let plan = SweepPlan::new(config, &re, b, None)?;
    let t = Threshold::new(b, re.denominator)?;
    let rows = plan.rows(shards, |c| {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut n = 0u64;
        plan.for_each_in_row(c, &t, |_, _, pd, _| {
            let ln: Complex64 = pd.log_heights().iter().zip(&sv).map(|(l, s)| s * l).sum();
            acc += (-ln).exp();
            n += 1;
        });
        (acc, n)
    });
    let (value, points) = rows.into_iter().fold((Complex64::new(0.0, 0.0), 0), |(v, n), (dv, dn)| (v + dv, n + dn));
    Ok(ZetaPartial { value, points })
}

/// Checks the sweep against [`naive_count_oracle`] in the given box.
pub fn validate_pruning(config: &SurfaceConfig, s: &ExactBundle, b: &BigRational, box_half_width: i64) -> Result<u64> {
    let fast = enumerate_count(config, s, b)?;
    let naive = naive_count_oracle(config, s, b, box_half_width)?;
    if fast != naive {
        return Err(Error::PruningMismatch { fast, naive, bound: format_rational(b) });
    }
    Ok(fast)
}

fn mobius(n: u64) -> i64 {
    let f = prime_factors_u64(n);
    let mut m = n;
    for &p in &f {
        m /= p;
        if m % p == 0 {
            return 0;
        }
    }
    if f.len() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// `#{v in Z^dim : |v|^2 <= r2}`.
fn lattice_ball(dim: usize, r2: u64) -> u64 {
    if dim == 0 {
        return 1;
    }
    if dim == 1 {
        return 2 * r2.isqrt() + 1;
    }
    let m = r2.isqrt();
    (0..=m).map(|x| (if x == 0 { 1 } else { 2 }) * lattice_ball(dim - 1, r2 - x * x)).sum()
}

/// `#{x in P^n(Q) : sqrt(x_0^2 + .. + x_n^2) <= B}` over primitive integer
/// vectors up to sign, by Mobius inversion over lattice-point counts.
pub fn pn_count(n: usize, b: u64) -> Result<u64> {
    if n == 0 || n > 4 {
        return Err(Error::Domain("projective dimension must be between 1 and 4".into()));
    }
    let b2 = b.checked_mul(b).ok_or_else(|| Error::Domain("bound too large".into()))?;
    let mut total: i64 = 0;
    for d in 1..=b {
        let mu = mobius(d);
        if mu != 0 {
            total += mu * (lattice_ball(n + 1, b2 / (d * d)) - 1) as i64;
        }
    }
    Ok((total / 2) as u64)
}
