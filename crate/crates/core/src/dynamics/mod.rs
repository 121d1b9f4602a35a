//! Time integrators for the sticky dynamics.
//!
//! Two scalar steppers drive the 1-D sticky-reflected Brownian motion
//! `dx = λ𝟙{x=0}dt + 𝟙{x>0}σ dw`; two lattice steppers drive the particle
//! system
//!
//! ```text
//! dx_k = ½Δⁿx_k dt + λ_k 𝟙{x_k=0} dt + f(x_k) dt + √n 𝟙{x_k>0} dw_k
//! ```
//!
//! Each comes in a *hard* variant (exact indicators) and a *regularised*
//! variant where `𝟙{x>0}` becomes `κ_ε(x)` and `𝟙{x=0}` becomes
//! `1 − κ_ε(x)²`.
//!
//! ## The hard schemes and the zero boundary
//!
//! Projecting an Euler step back onto `[0, ∞)` adds an `O(√dt)` push every
//! time the noise overshoots zero, while the sticky drift only contributes
//! `λ dt` per step spent at zero. Such a scheme loses its stickiness as
//! `dt → 0` and converges to instantaneous reflection. The hard steppers
//! instead carry the overshoot as a *deficit*: the coordinate stays at zero,
//! noise stays switched off, and the sticky drift repays the deficit before
//! the coordinate leaves zero. The time spent at zero then equals
//! `push / λ`, which is the balance `λ·Leb{x=0} = ½L⁰` that characterises the
//! sticky boundary. Internally this is a signed "latent" coordinate whose
//! positive part is the observed value.
//!
//! ## Noise normalisation
//!
//! The noise module produces increments of the cell Wiener processes `w_k`
//! with covariance `qⁿ dt`. The lattice steppers apply the `dw` they receive
//! as is; [`simulate`] multiplies by `√n` before handing increments over, so
//! each cell sees variance rate `n·q_{k,k}`.

mod regularize;
mod simulate;
mod srbm;
mod system;

pub use regularize::{kappa_eps, mollify_drift, mollify_drift_quadrature, theta, DriftSpec};
pub use simulate::{simulate, simulate_map, simulate_path, Ensemble, LatticeRun};
pub use srbm::{
    local_time_downcrossings, local_time_occupation, simulate_srbm, srbm_time_change_oracle, step_srbm_hard,
    step_srbm_regularized, observed, LocalTimeMethod, SrbmScenario, BRIDGE_LOCAL_TIME,
};
pub use system::{step_system_hard, step_system_regularized, SystemStepper};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overflow guard: a path is aborted once any coordinate exceeds this.
pub const OVERFLOW_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Hard,
    Regularized,
    /// Time change of reflected Brownian motion (1-D only).
    TimeChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub dt: f64,
    /// Width of the `κ_ε` ramp; only used by the regularised schemes.
    pub epsilon: f64,
    /// Implicitness of the Laplacian term, `0` explicit, `½` trapezoidal.
    pub theta_implicit: f64,
    /// Project regularised steps onto `[0, ∞)`.
    pub clamp_negatives: bool,
    /// `δ_ind`: a coordinate counts as "at zero" when it is `≤ δ_ind`.
    pub indicator_threshold: f64,
    /// Explicit steps require `dt ≤ stability_factor / n²`.
    pub stability_factor: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            epsilon: 0.05,
            theta_implicit: 0.5,
            clamp_negatives: true,
            indicator_threshold: 0.0,
            stability_factor: 0.5,
        }
    }
}

impl SchemeParams {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn check(&self, n: usize, regularized: bool) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "time step must be positive"));
        }
        if regularized && !(self.epsilon > 0.0) {
            return Err(Error::param("epsilon", "regularised schemes need epsilon > 0"));
        }
        if !(0.0..=1.0).contains(&self.theta_implicit) {
            return Err(Error::param("theta_implicit", "must lie in [0, 1]"));
        }
        if self.indicator_threshold < 0.0 {
            return Err(Error::param("indicator_threshold", "must be non-negative"));
        }
        let limit = self.stability_factor / (n * n) as f64;
        if self.theta_implicit == 0.0 && n > 1 && self.dt > limit {
            return Err(Error::param(
                "dt",
                format!("explicit scheme needs dt <= {limit:e} for n = {n}, got {:e}", self.dt),
            ));
        }
        Ok(())
    }
}

/// Running integrals of the sticky drift `a_k` and of the gated noise `η_k`,
/// recorded alongside the path.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Bookkeeping {
    pub drift: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
}

impl Bookkeeping {
    /// Series of component `k` as `(a_k(t_i), η_k(t_i))`.
    pub fn component(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        (
            self.drift.iter().map(|r| r[k]).collect(),
            self.noise.iter().map(|r| r[k]).collect(),
        )
    }
}

/// A sampled trajectory with its noise provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path: u64,
    pub master_seed: u64,
    pub scheme: SchemeKind,
    pub times: Vec<f64>,
    /// One row per recorded time, one entry per cell (length 1 in 1-D).
    pub states: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bookkeeping: Option<Bookkeeping>,
    /// Total mass added by projecting regularised steps onto `[0, ∞)`.
    pub clamped_mass: f64,
    /// Step at which the overflow guard fired, if it did.
    pub aborted_at: Option<u64>,
}

impl PathRecord {
    pub fn n(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Time series of one cell.
    pub fn cell_series(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[k]).collect()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    /// Spacing of the recorded grid (assumed uniform).
    pub fn record_dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}
