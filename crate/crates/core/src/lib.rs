//! Numerical laboratory for the Burkholder functions `L`, `M` and `Φ_p`.
//!
//! The crate evaluates the functions exactly, integrates them over
//! piecewise-linear maps of the unit torus, minimizes the resulting
//! energy with nonlinear conjugate gradient, and checks the closed-form
//! results for stretch functions, rank-one directions and the harmonic
//! and composite families.
//!
//! Module map:
//!
//! * [`functions`]: `L`, `M`, `Φ_p`, the exponent constants, the matrix map and `L₁`.
//! * [`torus`]: periodic triangulation, grid functions, the energy and its gradient.
//! * [`optimizer`]: Polak–Ribière conjugate gradient, multistart and ray profiles.
//! * [`radial`]: stretch profiles and their radial integrals.
//! * [`identities`]: integral identities, the `Φ_p` bound, rank-one convexity and test families.
//! * [`runner`]: batch experiments, run records and replay.

// Guards like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod functions;
pub mod identities;
pub mod optimizer;
pub mod quadrature;
pub mod radial;
pub mod rng;
pub mod runner;
pub mod torus;

pub use error::{Error, Result};
pub use functions::{Exponent, Mat2, WirtingerPair};
pub use num_complex::Complex64;
