//! Heights, local Fourier transforms and rational point counts on the blow-up
//! of the projective plane at rational points of the line at infinity.

pub mod arith;
pub mod constants;
pub mod counting;
pub mod cyclotomic;
pub mod error;
pub mod fourier;
pub mod heights;
pub mod oracle;
pub mod quadrature;
pub mod report;
pub mod scalar;
pub mod special;
pub mod surface;

pub use error::{Error, Result};

pub type Rational = num_rational::BigRational;
/// Exact Picard classes.
pub type ExactVector = heights::PicardVector<Rational>;
pub type RealVector = heights::PicardVector<f64>;
pub type ComplexVector = heights::PicardVector<num_complex::Complex64>;
