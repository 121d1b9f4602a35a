//! One θ-step of the particle system
//! `dx_k = ½Δⁿx_k dt + λ_k 𝟙{x_k=0} dt + f(x_k) dt + 𝟙{x_k>0} dw_k`.
//!
//! The increments `dw` are applied as given (see the module docs of
//! [`crate::dynamics`] for the `√n` factor). The Laplacian is split as
//! `(I − θ dt ½Δⁿ) x' = x + (1 − θ) dt ½Δⁿx + …`, a constant tridiagonal
//! system solved in place.

use super::{kappa_eps, mollify_drift, DriftSpec, SchemeParams};
use crate::error::{Error, Result};
use crate::lattice::{laplacian_into, solve_tridiagonal, Boundary, LatticeState};
use crate::spectral::GridFunction;

/// Precomputed operator and scratch for repeated steps on one lattice.
#[derive(Debug, Clone)]
pub struct SystemStepper {
    n: usize,
    boundary: Boundary,
    params: SchemeParams,
    regularized: bool,
    lambda: Vec<f64>,
    drift: DriftSpec,
    diag: Vec<f64>,
    off: f64,
    y: Vec<f64>,
    lap: Vec<f64>,
    scratch: Vec<f64>,
}

impl SystemStepper {
    pub fn new(
        boundary: Boundary,
        lambda: &GridFunction,
        drift: &DriftSpec,
        params: &SchemeParams,
        regularized: bool,
    ) -> Result<Self> {
        let n = lambda.n;
        if n == 0 {
            return Err(Error::ZeroCells);
        }
        params.check(n, regularized)?;
        if lambda.values.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::param("lambda", "stickiness must be non-negative"));
        }
        let n2 = (n * n) as f64;
        let a = boundary.alpha0();
        let c = params.theta_implicit * params.dt * 0.5 * n2;
        let diag = (0..n)
            .map(|k| {
                let ghost = if n == 1 { 2.0 * a } else if k == 0 || k + 1 == n { a } else { 0.0 };
                1.0 + c * (2.0 - ghost)
            })
            .collect();
        Ok(Self {
            n,
            boundary,
            params: *params,
            regularized,
            lambda: lambda.values.clone(),
            drift: drift.clone(),
            diag,
            off: -c,
            y: vec![0.0; n],
            lap: vec![0.0; n],
            scratch: vec![0.0; n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    /// Advances `state` by one step. When `book` is given, the sticky drift
    /// `λ_k·(at-zero weight)·dt` and the gated noise are added to the two
    /// slices. Returns the mass added by projection onto `[0, ∞)`.
    pub fn step(&mut self, state: &mut LatticeState, dw: &[f64], book: Option<(&mut [f64], &mut [f64])>) -> Result<f64> {
        if state.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: state.n() });
        }
        if dw.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: dw.len() });
        }
        let p = self.params;
        let dt = p.dt;
        for k in 0..self.n {
            self.y[k] = if self.regularized { state.x[k] } else { state.latent(k) };
        }
        laplacian_into(&self.y, self.boundary, &mut self.lap);
        let explicit = (1.0 - p.theta_implicit) * dt * 0.5;
        let mut book = book;
        for k in 0..self.n {
            let y = self.y[k];
            let (gate, sticky) = if self.regularized {
                let kap = kappa_eps(y, p.epsilon);
                (kap, self.lambda[k] * (1.0 - kap * kap))
            } else if y <= p.indicator_threshold {
                (0.0, self.lambda[k])
            } else {
                (1.0, 0.0)
            };
            let f = match &self.drift {
                DriftSpec::Zero => 0.0,
                d if self.regularized => mollify_drift(d, p.epsilon, y),
                d => d.eval(y),
            };
            let rate = sticky + f;
            if let Some((a, eta)) = book.as_mut() {
                a[k] += sticky * dt;
                eta[k] += gate * dw[k];
            }
            self.y[k] = y + explicit * self.lap[k] + rate * dt + gate * dw[k];
        }
        if p.theta_implicit > 0.0 {
            solve_tridiagonal(&self.diag, self.off, &mut self.y, &mut self.scratch);
        }
        let mut clamped = 0.0;
        if self.regularized {
            for k in 0..self.n {
                let v = self.y[k];
                state.x[k] = if p.clamp_negatives && v < 0.0 {
                    clamped -= v;
                    0.0
                } else {
                    v
                };
            }
        } else {
            state.set_latent(&self.y);
        }
        Ok(clamped)
    }
}

/// Convenience single hard step; builds the operator on every call.
pub fn step_system_hard(
    state: &mut LatticeState,
    lambda: &GridFunction,
    drift: &DriftSpec,
    dw: &[f64],
    params: &SchemeParams,
) -> Result<()> {
    SystemStepper::new(state.boundary, lambda, drift, params, false)?.step(state, dw, None)?;
    Ok(())
}

/// Convenience single regularised step; returns the clamped mass.
pub fn step_system_regularized(
    state: &mut LatticeState,
    lambda: &GridFunction,
    drift: &DriftSpec,
    dw: &[f64],
    params: &SchemeParams,
) -> Result<f64> {
    SystemStepper::new(state.boundary, lambda, drift, params, true)?.step(state, dw, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{step_srbm_hard, step_srbm_regularized};
    use crate::lattice::HeatKernel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn all_zero_with_unit_stickiness_moves_by_dt() {
        let params = SchemeParams::with_dt(1e-3);
        let lambda = GridFunction::constant(5, 1.0);
        for b in [Boundary::Neumann, Boundary::Dirichlet] {
            let mut s = LatticeState::new(b, vec![0.0; 5]);
            step_system_hard(&mut s, &lambda, &DriftSpec::Zero, &[0.3, -0.2, 0.1, 0.5, -0.9], &params).unwrap();
            // the implicit half of the Laplacian sees the update, so check the
            // explicit scheme for the exact value
            let explicit = SchemeParams { theta_implicit: 0.0, ..params };
            let mut e = LatticeState::new(b, vec![0.0; 5]);
            step_system_hard(&mut e, &lambda, &DriftSpec::Zero, &[0.3, -0.2, 0.1, 0.5, -0.9], &explicit).unwrap();
            if b == Boundary::Neumann {
                for v in s.x.iter().chain(&e.x) {
                    assert_abs_diff_eq!(*v, 1e-3, epsilon = 1e-15);
                }
            } else {
                assert!(e.x.iter().all(|&v| v == 1e-3));
            }
        }
    }

    #[test]
    fn single_cell_collapses_to_scalar_steppers() {
        let lambda = GridFunction::constant(1, 1.7);
        let mut rng_state = 0.3f64;
        for scheme_reg in [false, true] {
            let params = SchemeParams { epsilon: 0.05, ..SchemeParams::with_dt(1e-3) };
            let mut st = SystemStepper::new(Boundary::Neumann, &lambda, &DriftSpec::Zero, &params, scheme_reg).unwrap();
            let mut s = LatticeState::new(Boundary::Neumann, vec![0.02]);
            let mut x = 0.02;
            for i in 0..2000 {
                rng_state = (rng_state * 3.9 * (1.0 - rng_state)).clamp(1e-6, 1.0 - 1e-6);
                let dw = (rng_state - 0.5) * 0.06 * (1.0 + (i % 7) as f64);
                st.step(&mut s, &[dw], None).unwrap();
                x = if scheme_reg {
                    step_srbm_regularized(x, 1.7, 1.0, dw, &params)
                } else {
                    step_srbm_hard(x, 1.7, 1.0, dw, &params)
                };
                let lat = if scheme_reg { s.x[0] } else { s.latent(0) };
                assert_eq!(lat.to_bits(), x.to_bits(), "step {i}");
            }
        }
    }

    #[test]
    fn deterministic_flow_matches_heat_kernel() {
        // positive data far from zero, no noise: the θ = ½ scheme is the
        // Crank–Nicolson approximation of the discrete heat semigroup
        let n = 16;
        let dt = 1e-4;
        let t = 0.05;
        let x0: Vec<f64> = (0..n).map(|k| 5.0 + ((k as f64 + 0.5) / n as f64 * 3.0).cos()).collect();
        for b in [Boundary::Neumann, Boundary::Dirichlet] {
            let params = SchemeParams::with_dt(dt);
            let lambda = GridFunction::constant(n, 0.0);
            let mut st = SystemStepper::new(b, &lambda, &DriftSpec::Zero, &params, false).unwrap();
            let mut s = LatticeState::new(b, x0.clone());
            for _ in 0..(t / dt).round() as usize {
                st.step(&mut s, &vec![0.0; n], None).unwrap();
            }
            let exact = HeatKernel::build(n, b).unwrap().apply(t, &x0).unwrap();
            for (a, e) in s.x.iter().zip(&exact) {
                assert_abs_diff_eq!(*a, *e, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn explicit_guard() {
        let params = SchemeParams { theta_implicit: 0.0, ..SchemeParams::with_dt(0.01) };
        let lambda = GridFunction::constant(8, 1.0);
        assert!(SystemStepper::new(Boundary::Neumann, &lambda, &DriftSpec::Zero, &params, false).is_err());
        let ok = SchemeParams { dt: 0.5 / 64.0, ..params };
        assert!(SystemStepper::new(Boundary::Neumann, &lambda, &DriftSpec::Zero, &ok, false).is_ok());
    }

    #[test]
    fn bookkeeping_records_sticky_drift_and_gated_noise() {
        let params = SchemeParams::with_dt(0.01);
        let lambda = GridFunction::new(vec![2.0, 3.0]);
        let mut st = SystemStepper::new(Boundary::Neumann, &lambda, &DriftSpec::Zero, &params, false).unwrap();
        let mut s = LatticeState::new(Boundary::Neumann, vec![0.0, 1.0]);
        let (mut a, mut eta) = (vec![0.0; 2], vec![0.0; 2]);
        st.step(&mut s, &[0.4, 0.25], Some((&mut a, &mut eta))).unwrap();
        assert_eq!(a, vec![0.02, 0.0]);
        assert_eq!(eta, vec![0.0, 0.25]);
    }

    proptest! {
        #[test]
        fn neumann_explicit_conserves_mass_without_forcing(
            x in proptest::collection::vec(0.5f64..2.0, 2..12),
        ) {
            let n = x.len();
            let params = SchemeParams { theta_implicit: 0.0, ..SchemeParams::with_dt(0.25 / (n * n) as f64) };
            let lambda = GridFunction::constant(n, 0.0);
            let mut s = LatticeState::new(Boundary::Neumann, x.clone());
            step_system_hard(&mut s, &lambda, &DriftSpec::Zero, &vec![0.0; n], &params).unwrap();
            let before: f64 = x.iter().sum();
            let after: f64 = s.x.iter().sum();
            prop_assert!((before - after).abs() < 1e-12 * before);
        }

        #[test]
        fn hard_and_regularized_agree_away_from_zero(
            x in proptest::collection::vec(0.2f64..3.0, 1..10),
            dw in proptest::collection::vec(-0.05f64..0.05, 10),
        ) {
            let n = x.len();
            let params = SchemeParams { epsilon: 0.1, ..SchemeParams::with_dt(1e-3) };
            let lambda = GridFunction::constant(n, 1.5);
            let drift = DriftSpec::Zero;
            let mut h = LatticeState::new(Boundary::Neumann, x.clone());
            let mut r = h.clone();
            step_system_hard(&mut h, &lambda, &drift, &dw[..n], &params).unwrap();
            step_system_regularized(&mut r, &lambda, &drift, &dw[..n], &params).unwrap();
            for (a, b) in h.x.iter().zip(&r.x) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }

        #[test]
        fn clamped_regularized_stays_non_negative(
            x in proptest::collection::vec(0.0f64..0.1, 1..10),
            dw in proptest::collection::vec(-1.0f64..1.0, 10),
        ) {
            let n = x.len();
            let params = SchemeParams { epsilon: 0.05, ..SchemeParams::with_dt(1e-3) };
            let mut s = LatticeState::new(Boundary::Dirichlet, x);
            let lambda = GridFunction::constant(n, 1.0);
            let mass = step_system_regularized(&mut s, &lambda, &DriftSpec::Linear { c: -1.0 }, &dw[..n], &params).unwrap();
            prop_assert!(mass >= 0.0);
            prop_assert!(s.x.iter().all(|&v| v >= 0.0));
        }
    }
}
