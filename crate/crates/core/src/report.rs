//! JSON rendering of results: floats rounded to 12 significant digits,
//! exact rationals as `"num/den"` strings, complex numbers as `{re, im}`.

use num_complex::Complex64;
use num_rational::BigRational;
use serde_json::{json, Value};

use crate::constants::{Approx, ConstantReport, FitResult, PoissonReport};
use crate::counting::CountSeries;
use crate::fourier::{EulerProductValue, LocalFactor, Method, Place};

/// `x` rounded to 12 significant digits; non-finite values become strings.
pub fn real(x: f64) -> Value {
    if !x.is_finite() {
        return Value::String(x.to_string());
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap();
    json!(rounded)
}

pub fn rational(q: &BigRational) -> Value {
    Value::String(format!("{}/{}", q.numer(), q.denom()))
}

pub fn complex(z: Complex64) -> Value {
    json!({ "re": real(z.re), "im": real(z.im) })
}

pub fn approx(a: &Approx) -> Value {
    json!({ "value": real(a.value), "err": real(a.err) })
}

pub fn euler(e: &EulerProductValue) -> Value {
    json!({
        "value": complex(e.value),
        "p_max": e.truncation_prime,
        "tail_bound": real(e.truncation_error_bound),
    })
}

pub fn local_factor(f: &LocalFactor<Complex64>) -> Value {
    json!({
        "value": complex(f.value),
        "tail_bound": real(f.tail_bound),
        "method": match f.method { Method::Closed => "closed", Method::Oracle => "oracle" },
        "place": match f.place { Place::Prime(p) => json!(p), Place::Infinity => json!("infinity") },
    })
}

pub fn constant_report(rep: &ConstantReport) -> Value {
    json!({
        "config": rep.config_name,
        "r": rep.r,
        "alpha": rational(&rep.alpha),
        "tau_arch": approx(&rep.tau_arch),
        "euler": euler(&rep.euler_value),
        "tamagawa": approx(&rep.tamagawa),
        "theta": approx(&rep.theta),
        "predicted_leading_coeff": approx(&rep.predicted_leading_coeff),
    })
}

pub fn poisson_report(config_name: &str, rep: &PoissonReport) -> Value {
    json!({
        "config": config_name,
        "s": rep.s.iter().map(|z| complex(*z)).collect::<Vec<_>>(),
        "lhs": complex(rep.lhs),
        "rhs": complex(rep.rhs),
        "lhs_tail": real(rep.lhs_tail),
        "rhs_tail": real(rep.rhs_tail),
        "direct": complex(rep.direct),
        "direct_points": rep.direct_points,
        "extension": complex(rep.extension),
        "asymptotic": complex(rep.asymptotic),
        "characters_computed": rep.characters_computed,
        "characters_bounded": rep.characters_bounded,
        "difference": real(rep.difference),
        "relative_difference": real(rep.relative_difference()),
        "within_bounds": rep.within_bounds,
    })
}

pub fn fit(config_name: &str, f: &FitResult, predicted: Option<f64>) -> Value {
    let mut v = json!({
        "config": config_name,
        "coefficients": f.coefficients.iter().map(|&c| real(c)).collect::<Vec<_>>(),
        "leading_estimate": real(f.leading_estimate),
        "residual": real(f.residual),
        "stability_trace": f.stability_trace.iter().map(|&c| real(c)).collect::<Vec<_>>(),
    });
    if let Some(p) = predicted {
        v["predicted_leading_coeff"] = real(p);
        v["relative_deviation"] = real(f.leading_estimate / p - 1.0);
    }
    v
}

pub fn count_series(series: &CountSeries) -> Value {
    json!({
        "config": series.config_name,
        "bundle": { "numerators": series.bundle.numerators, "denominator": series.bundle.denominator },
        "grid": series.grid.iter().map(rational).collect::<Vec<_>>(),
        "counts": series.counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(real(std::f64::consts::PI), json!(3.14159265359));
        assert_eq!(real(1.0 / 3.0e-9), json!(333333333.333));
        assert_eq!(real(f64::INFINITY), json!("inf"));
    }

    #[test]
    fn rationals_as_strings() {
        let q = BigRational::new((-6).into(), 4.into());
        assert_eq!(rational(&q), json!("-3/2"));
    }
}
