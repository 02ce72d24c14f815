//! Globally adaptive Gauss-Kronrod (7/15) quadrature with an embedded error
//! estimate and a subdivision budget.

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// A quadrature result with its a-posteriori absolute error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate<F> {
    pub value: F,
    pub error: F,
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-12, rel: 1e-9, max_intervals: 4000 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel, ..Default::default() }
    }

    pub fn with_budget(mut self, max_intervals: usize) -> Self {
        self.max_intervals = max_intervals;
        self
    }
}

fn c<F: FromPrimitive>(x: f64) -> F {
    F::from_f64(x).unwrap()
}

/// One 15-point Kronrod panel; returns (kronrod, |kronrod - gauss|).
fn panel<F, G>(f: &mut G, a: F, b: F) -> (F, F)
where
    F: Float + FromPrimitive,
    G: FnMut(F) -> F,
{
    let half: F = c(0.5);
    let center = half * (a + b);
    let h = half * (b - a);
    let fc = f(center);
    let mut res_k = fc * c(WGK[7]);
    let mut res_g = fc * c(WG[3]);
    for j in 0..7 {
        let dx = h * c(XGK[j]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        res_k = res_k + (f1 + f2) * c(WGK[j]);
        if j % 2 == 1 {
            res_g = res_g + (f1 + f2) * c(WG[j / 2]);
        }
    }
    let k = res_k * h;
    let g = res_g * h;
    (k, (k - g).abs())
}

struct Segment<F> {
    a: F,
    b: F,
    value: F,
    error: F,
}

/// Integrates `f` over `[a, b]`, bisecting the panel with the largest error
/// until `error <= max(abs, rel * |value|)` or the budget is exhausted.
pub fn integrate<F, G>(mut f: G, a: F, b: F, tol: Tolerance) -> Result<Estimate<F>>
where
    F: Float + FromPrimitive,
    G: FnMut(F) -> F,
{
    integrate_breakpoints(&mut f, &[a, b], tol)
}

/// As [`integrate`] with the interval pre-split at the given sorted points.
pub fn integrate_breakpoints<F, G>(f: &mut G, points: &[F], tol: Tolerance) -> Result<Estimate<F>>
where
    F: Float + FromPrimitive,
    G: FnMut(F) -> F,
{
    let mut segs: Vec<Segment<F>> = Vec::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, error) = panel(f, w[0], w[1]);
            segs.push(Segment { a: w[0], b: w[1], value, error });
        }
    }
    if segs.is_empty() {
        return Ok(Estimate { value: F::zero(), error: F::zero() });
    }
    loop {
        let value = segs.iter().fold(F::zero(), |acc, s| acc + s.value);
        let error = segs.iter().fold(F::zero(), |acc, s| acc + s.error);
        let target = c::<F>(tol.abs).max(c::<F>(tol.rel) * value.abs());
        if error <= target {
            return Ok(Estimate { value, error });
        }
        if segs.len() >= tol.max_intervals {
            return Err(Error::Numerical(format!(
                "quadrature budget of {} panels exhausted (estimate {:e}, error {:e})",
                tol.max_intervals,
                value.to_f64().unwrap(),
                error.to_f64().unwrap()
            )));
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .fold((0, F::neg_infinity()), |(bi, be), (i, s)| if s.error > be { (i, s.error) } else { (bi, be) });
        let s = segs.swap_remove(worst);
        let mid = c::<F>(0.5) * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(Error::Numerical("quadrature panel reached machine resolution".into()));
        }
        let (v1, e1) = panel(f, s.a, mid);
        let (v2, e2) = panel(f, mid, s.b);
        segs.push(Segment { a: s.a, b: mid, value: v1, error: e1 });
        segs.push(Segment { a: mid, b: s.b, value: v2, error: e2 });
    }
}

/// `int_0^inf f(x) dx` through `x = t / (1 - t)`, with optional breakpoints
/// given in the original variable.
pub fn integrate_half_line<F, G>(mut f: G, breaks: &[F], tol: Tolerance) -> Result<Estimate<F>>
where
    F: Float + FromPrimitive,
    G: FnMut(F) -> F,
{
    let one = F::one();
    let mut pts = vec![F::zero()];
    let mut inner: Vec<F> = breaks.iter().filter(|&&x| x > F::zero() && x.is_finite()).map(|&x| x / (one + x)).collect();
    inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.extend(inner);
    pts.push(one);
    let mut g = |t: F| {
        if t >= one {
            return F::zero();
        }
        let d = one - t;
        let v = f(t / d) / (d * d);
        if v.is_finite() {
            v
        } else {
            F::zero()
        }
    };
    integrate_breakpoints(&mut g, &pts, tol)
}

/// `int_{-inf}^{inf} f(x) dx` split at 0 and at the given breakpoints.
pub fn integrate_real_line<F, G>(mut f: G, breaks: &[F], tol: Tolerance) -> Result<Estimate<F>>
where
    F: Float + FromPrimitive,
    G: FnMut(F) -> F,
{
    let pos: Vec<F> = breaks.iter().filter(|x| **x > F::zero()).copied().collect();
    let neg: Vec<F> = breaks.iter().filter(|x| **x < F::zero()).map(|x| -*x).collect();
    let half_tol = Tolerance { abs: tol.abs * 0.5, ..tol };
    let right = integrate_half_line(&mut f, &pos, half_tol)?;
    let left = integrate_half_line(|x: F| f(-x), &neg, half_tol)?;
    Ok(Estimate { value: right.value + left.value, error: right.error + left.error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let e = integrate(|x: f64| x.powi(10) - 3.0 * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((e.value - (2f64.powi(11) / 11.0 - 6.0)).abs() < 1e-11);
    }

    #[test]
    fn log_endpoint_singularity() {
        let e = integrate(|x: f64| if x > 0.0 { x.ln() } else { 0.0 }, 0.0, 1.0, Tolerance::new(1e-10, 1e-10)).unwrap();
        assert!((e.value + 1.0).abs() < 1e-9);
    }

    #[test]
    fn infinite_ranges() {
        let e = integrate_real_line(|x: f64| 1.0 / (1.0 + x * x), &[], Tolerance::new(1e-11, 1e-11)).unwrap();
        assert!((e.value - PI).abs() < 1e-9);
        let e = integrate_half_line(|x: f32| (-x).exp(), &[], Tolerance::new(1e-5, 1e-5)).unwrap();
        assert!((e.value - 1.0).abs() < 1e-4);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let r = integrate(|x: f64| (1.0 / x).sin(), 1e-9, 1.0, Tolerance::new(1e-14, 0.0).with_budget(10));
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}
