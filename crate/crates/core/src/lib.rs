//! Simulation and verification toolkit for the sticky-reflected stochastic
//! heat equation on `[0, 1]` driven by colored (`Q`-Wiener) noise.
//!
//! The crate is organised along the approximation ladder:
//!
//! * [`spectral`]: the covariance operator `Q` as eigenpairs and all cell
//!   discretisations derived from it (`qⁿ`, `λⁿ`, projections).
//! * [`lattice`]: the discrete Laplacian with Neumann/Dirichlet ghost cells,
//!   the test-function operator, the discrete heat kernel and embeddings.
//! * [`noise`]: reproducible correlated Wiener increments.
//! * [`dynamics`]: steppers for the 1-D sticky Brownian motion and the
//!   sticky particle system, hard and regularised, plus the time-change oracle.
//! * [`diagnostics`]: martingale-problem residuals, realized quadratic
//!   variation, occupation times and the statistical tests built on them.
//! * [`config`]: scenario description and validation shared with the CLI.

// `!(x >= 0.0)` is how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod noise;
pub mod quadrature;
pub mod spectral;
pub mod stats;

pub use config::{OutputKind, Profile, ScenarioConfig, ValidationReport};
pub use dynamics::{DriftSpec, Ensemble, PathRecord, SchemeKind, SchemeParams};
pub use error::{Error, Result};
pub use lattice::{Boundary, HeatKernel, LatticeState};
pub use noise::{NoiseBackend, NoiseFactor, SeedPolicy};
pub use spectral::{BasisFn, EigenPair, EigenSpec, FieldFn, GridFunction};
