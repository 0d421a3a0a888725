//! Birkhoff normal forms for the nonlinear Schrödinger equation with a
//! convolution potential on a truncated Fourier lattice, and numerical
//! experiments on the long-time stability of its actions.
//!
//! The numerics are generic over the scalar type. Concrete aliases for the
//! common `f64` instantiation, and for exact rational polynomial arithmetic,
//! are exported at the crate root.

pub mod bernoulli;
pub mod error;
pub mod experiment;
pub mod frequencies;
pub mod lattice;
pub mod multi_index;
pub mod nonlinearity;
pub mod nonres;
pub mod normal_form;
pub mod polynomial;
pub mod potential;
pub mod scalar;
pub mod simulator;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
pub use frequencies::Frequencies;
pub use lattice::{Index, Lattice, Sign};
pub use multi_index::MultiIndex;
pub use polynomial::{CompiledPoly, Polynomial};
pub use nonlinearity::SeriesSpec;
pub use normal_form::{ExactFrequencies, NormalFormResult, Spectrum};
pub use potential::Potential;
pub use scalar::{Real, Scalar};
pub use state::State;

pub use num_complex::Complex;
pub use num_rational::BigRational;

/// Double-precision phase-space point.
pub type State64 = State<f64>;
/// Double-precision polynomial.
pub type Poly64 = Polynomial<f64>;
/// Polynomial with exact rational (Gaussian rational) coefficients.
pub type ExactPoly = Polynomial<BigRational>;
/// Double-precision frequencies.
pub type Frequencies64 = Frequencies<f64>;
/// `Complex<f64>`.
pub type C64 = Complex<f64>;
