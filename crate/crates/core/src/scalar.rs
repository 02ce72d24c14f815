//! Scalar abstraction shared by the closed-form local transforms.
//!
//! The same formula is evaluated in exact rational arithmetic (integral
//! exponents), in `f32`/`f64` for real bundles and in complex floating point
//! for complex bundles.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, One, ToPrimitive};

pub trait Scalar: Clone + Debug + PartialEq + Num + Neg<Output = Self> + FromPrimitive + Send + Sync {
    /// `p^e` for a prime `p`, or `None` if the exponent cannot be realised in
    /// this scalar type (a non-integral exponent in exact arithmetic).
    fn prime_power(p: u64, e: &Self) -> Option<Self>;

    fn real_part(&self) -> f64;

    fn to_complex(&self) -> Complex<f64>;

    fn from_int(n: i64) -> Self {
        Self::from_i64(n).expect("integer fits every scalar type")
    }
}

macro_rules! impl_float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn prime_power(p: u64, e: &Self) -> Option<Self> {
                Some((p as $t).powf(*e))
            }
            fn real_part(&self) -> f64 {
                *self as f64
            }
            fn to_complex(&self) -> Complex<f64> {
                Complex::new(*self as f64, 0.0)
            }
        }
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

impl<F> Scalar for Complex<F>
where
    F: Float + FromPrimitive + Debug + Send + Sync,
{
    fn prime_power(p: u64, e: &Self) -> Option<Self> {
        let ln_p = F::from_u64(p)?.ln();
        Some((*e * ln_p).exp())
    }
    fn real_part(&self) -> f64 {
        self.re.to_f64().unwrap_or(f64::NAN)
    }
    fn to_complex(&self) -> Complex<f64> {
        Complex::new(self.re.to_f64().unwrap_or(f64::NAN), self.im.to_f64().unwrap_or(f64::NAN))
    }
}

impl Scalar for BigRational {
    fn prime_power(p: u64, e: &Self) -> Option<Self> {
        if !e.is_integer() {
            return None;
        }
        let exp = e.to_integer().to_i32()?;
        let base = BigRational::from_integer(BigInt::from(p));
        Some(if exp >= 0 {
            num_traits::pow(base, exp as usize)
        } else {
            BigRational::one() / num_traits::pow(base, exp.unsigned_abs() as usize)
        })
    }
    fn real_part(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn to_complex(&self) -> Complex<f64> {
        Complex::new(self.real_part(), 0.0)
    }
}

/// `p^e` with the exponent given as an integer offset of a scalar exponent,
/// i.e. `p^(e + shift)`.
pub(crate) fn prime_power_shifted<T: Scalar>(p: u64, e: &T, shift: i64) -> Option<T> {
    T::prime_power(p, &(e.clone() + T::from_int(shift)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_powers_require_integer_exponents() {
        let half = BigRational::new(1.into(), 2.into());
        assert!(BigRational::prime_power(3, &half).is_none());
        let m2 = BigRational::from_integer((-2).into());
        assert_eq!(BigRational::prime_power(3, &m2), Some(BigRational::new(1.into(), 9.into())));
    }

    #[test]
    fn complex_power_matches_real() {
        let z = Complex::new(2.5f64, 0.0);
        let w = Complex::<f64>::prime_power(5, &z).unwrap();
        assert!((w.re - 5f64.powf(2.5)).abs() < 1e-9);
        assert!(w.im.abs() < 1e-12);
    }
}
