//! Quantum-jump trajectories of one-dimensional free fermions under monitored,
//! imbalanced and inefficiently detected gain and loss.
//!
//! The simulation works on single-particle correlation matrices
//! `D[l, l'] = <psi_l'^dag psi_l>`. Analytic companions (Gaussian theory,
//! renormalized curves, quadrature, fits) are generic over the float type;
//! the matrix simulation is fixed to `f64`.

pub mod conditional;
pub mod error;
pub mod fast;
pub mod fits;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod quadrature;
pub mod stats;
pub mod theory;
pub mod trajectory;
pub mod unconditional;

pub use error::{Error, Result};

/// Complex scalar used by all matrix code.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex matrix.
pub type CMat = faer::Mat<C64>;

/// Theory parameters in double precision.
pub type TheoryParamsF64 = theory::TheoryParams<f64>;
/// Theory parameters in single precision.
pub type TheoryParamsF32 = theory::TheoryParams<f32>;
/// Fit result in double precision.
pub type FitResultF64 = fits::FitResult<f64>;
/// Fit result in single precision.
pub type FitResultF32 = fits::FitResult<f32>;
