//! hp-adaptive sampling of photonic band functions over a tetrahedral mesh of
//! the Brillouin zone.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: two-material unit cells and analytic Fourier coefficients
//!   of their inclusion indicators.
//! - [`oracle`]: band values and gradients at a wave vector, from either the
//!   empty lattice or a plane-wave expansion of the Maxwell operator.
//! - [`bzmesh`]: conforming tetrahedral meshes refined by longest-edge
//!   bisection.
//! - [`adapt`]: the indicator/tolerance marking loop that drives refinement
//!   toward band crossings.
//! - [`hpinterp`]: degree assignment, Lobatto tetrahedral sampling points and
//!   the conforming piecewise-polynomial interpolant.
//! - [`gapopt`]: normalized band-gap objectives and a Gaussian-process
//!   Bayesian optimizer over design parameters.
//! - [`bench`]: random evaluation sets, relative error metrics and
//!   adaptive-vs-uniform convergence studies.
//!
//! With the default `parallel` feature, oracle sweeps and per-element work are
//! spread over a rayon pool; without it every map runs sequentially and
//! produces bit-identical output.

pub mod adapt;
pub mod bench;
pub mod bzmesh;
pub mod error;
pub mod gapopt;
pub mod geometry;
pub mod hpinterp;
pub mod oracle;
pub mod par;
pub mod qmc;

pub use error::{Error, Result};

/// A point of the parameter domain (a Bloch wave vector), in units of 1/length.
pub type WaveVector = [f64; 3];
