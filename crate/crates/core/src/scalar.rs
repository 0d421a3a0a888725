//! Scalar abstractions.
//!
//! Polynomial algebra only needs a commutative ring with a way to import
//! `f64` constants, so it is written against [`Scalar`], which both the
//! floating point types and [`BigRational`] implement. Everything that takes
//! moduli, exponentials or FFTs is written against [`Real`].

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};

/// Coefficient field for the polynomial algebra: `f32`, `f64` or exact rationals.
pub trait Scalar: Num + Neg<Output = Self> + Clone + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Exact conversion from a rational. Floating point types round.
    fn from_rational(q: &BigRational) -> Self;

    /// Lossy conversion used for diagnostics and serialization.
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Floating point scalar used by norms, evaluation and time stepping.
pub trait Real: Scalar + Float + FloatConst + rustfft::FftNum + Default {}

impl Scalar for f32 {
    fn from_rational(q: &BigRational) -> Self {
        rational_to_f64(q) as f32
    }
}

impl Scalar for f64 {
    fn from_rational(q: &BigRational) -> Self {
        rational_to_f64(q)
    }
}

impl Scalar for BigRational {
    fn from_rational(q: &BigRational) -> Self {
        q.clone()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `f64` constant in the scalar type. Every value this crate passes here is
/// representable, so failure is a bug.
#[inline]
pub fn cast<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 constant representable in scalar type")
}

/// Complex constant from two `f64` parts.
#[inline]
pub fn ccast<S: Scalar>(re: f64, im: f64) -> Complex<S> {
    Complex::new(cast(re), cast(im))
}

/// Rational to nearest `f64`, robust for numerators and denominators that
/// overflow `f64` on their own.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() {
            return n / d;
        }
    }
    let shift = q.numer().bits().max(q.denom().bits()).saturating_sub(900) as usize;
    let n = (q.numer() >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (q.denom() >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

/// Exact rational for a finite `f64`.
pub fn f64_to_rational(x: f64) -> Option<BigRational> {
    Ratio::<BigInt>::from_float(x)
}

/// Complex `f64` converted exactly into rational components.
pub fn complex_to_rational(c: Complex<f64>) -> Option<Complex<BigRational>> {
    Some(Complex::new(f64_to_rational(c.re)?, f64_to_rational(c.im)?))
}

/// Kahan–Babuška (Neumaier) compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<S> {
    sum: S,
    compensation: S,
}

impl<S: Real> CompensatedSum<S> {
    pub fn new() -> Self {
        Self { sum: S::zero(), compensation: S::zero() }
    }

    pub fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation = self.compensation + ((self.sum - t) + x);
        } else {
            self.compensation = self.compensation + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> S {
        self.sum + self.compensation
    }
}

impl<S: Real> FromIterator<S> for CompensatedSum<S> {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator of reals.
pub fn compensated_sum<S: Real, I: IntoIterator<Item = S>>(iter: I) -> S {
    iter.into_iter().collect::<CompensatedSum<S>>().value()
}
