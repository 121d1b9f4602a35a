//! Second differences on the cell lattice with ghost cells
//! `x_0 = α₀ x_1`, `x_{n+1} = α₀ x_n`, the discrete heat kernel and the
//! embeddings of particle states into functions on `[0,1]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Neumann,
    Dirichlet,
}

impl Boundary {
    /// The ghost-cell weight: 1 for Neumann, 0 for Dirichlet.
    pub fn alpha0(self) -> f64 {
        match self {
            Boundary::Neumann => 1.0,
            Boundary::Dirichlet => 0.0,
        }
    }
}

/// Particle values `x_k` plus, for the hard sticky scheme, the outstanding
/// boundary deficit of each cell.
///
/// A cell with positive `deficit` sits at zero: its noise is switched off and
/// the sticky drift pays the deficit back before the cell may leave zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeState {
    pub boundary: Boundary,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deficit: Vec<f64>,
}

impl LatticeState {
    pub fn new(boundary: Boundary, x: Vec<f64>) -> Self {
        Self { boundary, x, deficit: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Signed coordinate `x_k − deficit_k`.
    pub fn latent(&self, k: usize) -> f64 {
        self.x[k] - self.deficit.get(k).copied().unwrap_or(0.0)
    }

    /// Rebuilds the state from signed coordinates.
    pub fn set_latent(&mut self, y: &[f64]) {
        self.deficit.resize(y.len(), 0.0);
        for (k, &v) in y.iter().enumerate() {
            self.x[k] = v.max(0.0);
            self.deficit[k] = (-v).max(0.0);
        }
    }

    pub fn as_grid(&self) -> GridFunction {
        GridFunction::new(self.x.clone())
    }
}

/// `(Δⁿx)_k = n²(x_{k+1} + x_{k−1} − 2x_k)` into `out`.
pub fn laplacian_into(x: &[f64], boundary: Boundary, out: &mut [f64]) {
    let n = x.len();
    let n2 = (n * n) as f64;
    let a = boundary.alpha0();
    for k in 0..n {
        let left = if k == 0 { a * x[0] } else { x[k - 1] };
        let right = if k + 1 == n { a * x[n - 1] } else { x[k + 1] };
        out[k] = n2 * (right + left - 2.0 * x[k]);
    }
}

pub fn apply_laplacian(state: &LatticeState) -> Vec<f64> {
    let mut out = vec![0.0; state.n()];
    laplacian_into(&state.x, state.boundary, &mut out);
    out
}

/// Dense matrix of `Δⁿ`.
pub fn laplacian_matrix(n: usize, boundary: Boundary) -> DMatrix<f64> {
    let n2 = (n * n) as f64;
    let a = boundary.alpha0();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let mut d = -2.0;
            if i == 0 {
                d += a;
            }
            if i + 1 == n {
                d += a;
            }
            n2 * d
        } else if i.abs_diff(j) == 1 {
            n2
        } else {
            0.0
        }
    })
}

/// The test-function operator acting on cell averages of `φ`: returns the
/// step function with values `(Δⁿ φ̄)_k`, so that
/// `⟨Xⁿ, Δ̃ⁿφ⟩ = ⟨Δⁿ x, φ̄⟩ / n` holds exactly for every lattice state.
pub fn apply_tilde_delta(phi: &GridFunction, boundary: Boundary) -> GridFunction {
    let mut out = vec![0.0; phi.n];
    laplacian_into(&phi.values, boundary, &mut out);
    GridFunction::new(out)
}

/// Fundamental solution of `dp/dt = ½Δⁿ p`, `p(0) = n I`, stored as the
/// eigendecomposition of `½Δⁿ`.
#[derive(Debug, Clone)]
pub struct HeatKernel {
    n: usize,
    boundary: Boundary,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl HeatKernel {
    pub fn build(n: usize, boundary: Boundary) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroCells);
        }
        let half = laplacian_matrix(n, boundary) * 0.5;
        let SymmetricEigen { eigenvalues, eigenvectors } = SymmetricEigen::new(half);
        // roundoff on the Neumann null mode
        let scale = (n * n) as f64;
        let eigenvalues = eigenvalues.map(|l| if l.abs() < 1e-12 * scale { 0.0 } else { l });
        Ok(Self { n, boundary, eigenvalues, eigenvectors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, m: usize) -> Vec<f64> {
        self.eigenvectors.column(m).iter().copied().collect()
    }

    /// `p_{k,l}(t) = n Σ_m v_m(k) e^{λ_m t} v_m(l)`.
    pub fn value(&self, t: f64, k: usize, l: usize) -> f64 {
        let mut acc = 0.0;
        for m in 0..self.n {
            acc += self.eigenvectors[(k, m)] * (self.eigenvalues[m] * t).exp() * self.eigenvectors[(l, m)];
        }
        self.n as f64 * acc
    }

    /// Row `k` of `p(t)`.
    pub fn row(&self, t: f64, k: usize) -> Vec<f64> {
        (0..self.n).map(|l| self.value(t, k, l)).collect()
    }

    /// `(1/n) p(t) v`: the discrete heat semigroup acting on cell data.
    pub fn apply(&self, t: f64, v: &[f64]) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        if t == 0.0 {
            return Ok(v.to_vec());
        }
        let v = DVector::from_column_slice(v);
        let mut coeffs = self.eigenvectors.tr_mul(&v);
        for (c, l) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= (l * t).exp();
        }
        Ok((&self.eigenvectors * coeffs).iter().copied().collect())
    }
}

pub fn heat_kernel_build(n: usize, boundary: Boundary) -> Result<HeatKernel> {
    HeatKernel::build(n, boundary)
}

pub fn heat_kernel_apply(kernel: &HeatKernel, t: f64, v: &[f64]) -> Result<Vec<f64>> {
    kernel.apply(t, v)
}

/// `X̃(u) = (un − k + 1) x_k + (k − nu) x_{k−1}` on cell `k`, with
/// `x_0 = α₀ x_1`; `u = 1` is taken by left-continuity.
pub fn polygonal_interpolate(state: &LatticeState, u: f64) -> f64 {
    let n = state.n();
    let nf = n as f64;
    let u = u.clamp(0.0, 1.0);
    let k = ((u * nf).floor() as usize + 1).min(n);
    let kf = k as f64;
    let xk = state.x[k - 1];
    let xkm1 = if k == 1 { state.boundary.alpha0() * state.x[0] } else { state.x[k - 2] };
    (u * nf - kf + 1.0) * xk + (kf - nf * u) * xkm1
}

/// Solves a tridiagonal system with constant off-diagonal `off` and diagonal
/// `diag` (Thomas algorithm). `scratch` must have the same length as `rhs`.
pub(crate) fn solve_tridiagonal(diag: &[f64], off: f64, rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    if n == 0 {
        return;
    }
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = off / beta;
        beta = diag[i] - off * scratch[i];
        rhs[i] = (rhs[i] - off * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn laplacian_examples() {
        let s = LatticeState::new(Boundary::Neumann, vec![3.0; 7]);
        assert!(apply_laplacian(&s).iter().all(|&v| v == 0.0));
        let s = LatticeState::new(Boundary::Dirichlet, vec![1.0, 1.0]);
        assert_eq!(apply_laplacian(&s), vec![-4.0, -4.0]);
        let s = LatticeState::new(Boundary::Neumann, vec![0.0, 1.0, 0.0]);
        let l = apply_laplacian(&s);
        assert_eq!(l, vec![9.0, -18.0, 9.0]);
        assert_eq!(l.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn matrix_agrees_with_stencil() {
        for b in [Boundary::Neumann, Boundary::Dirichlet] {
            let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
            let m = laplacian_matrix(9, b);
            let mx = &m * DVector::from_column_slice(&x);
            let s = apply_laplacian(&LatticeState::new(b, x));
            for (a, c) in mx.iter().zip(s) {
                assert_abs_diff_eq!(*a, c, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tilde_delta_examples() {
        let c = GridFunction::constant(10, 2.0);
        assert!(apply_tilde_delta(&c, Boundary::Neumann).values.iter().all(|&v| v == 0.0));
        let (a, b) = (0.3, -1.1);
        let out = apply_tilde_delta(&GridFunction::new(vec![a, b]), Boundary::Dirichlet);
        assert_abs_diff_eq!(out.values[0], 4.0 * (b - 2.0 * a), epsilon = 1e-14);
        assert_abs_diff_eq!(out.values[1], 4.0 * (a - 2.0 * b), epsilon = 1e-14);
    }

    #[test]
    fn tilde_delta_consistent_with_second_derivative() {
        // cell averages of √2 cos(πu): the second difference of the averages
        // equals −π² times the averages up to the Taylor remainder bound
        let n = 64;
        let e2 = crate::spectral::BasisFn::Cosine { j: 1 };
        let avg = GridFunction::project(&e2, n).unwrap();
        let out = apply_tilde_delta(&avg, Boundary::Neumann);
        let bound = PI.powi(4) / (12.0 * (n * n) as f64) * 2f64.sqrt();
        for k in 0..n {
            let dev = (out.values[k] + PI * PI * avg.values[k]).abs();
            assert!(dev < bound, "cell {k}: {dev} >= {bound}");
        }
    }

    #[test]
    fn tilde_delta_is_adjoint_of_particle_laplacian() {
        let n = 12;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos() + 1.0).collect();
        let phi = GridFunction::new((0..n).map(|i| (i as f64 * 0.91).sin()).collect());
        for b in [Boundary::Neumann, Boundary::Dirichlet] {
            let s = LatticeState::new(b, x.clone());
            let lhs = s.as_grid().inner(&apply_tilde_delta(&phi, b));
            let rhs = GridFunction::new(apply_laplacian(&s)).inner(&phi);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
        }
    }

    #[test]
    fn kernel_initial_value_and_limits() {
        let k = HeatKernel::build(6, Boundary::Neumann).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 6.0 } else { 0.0 };
                assert_abs_diff_eq!(k.value(0.0, i, j), expect, epsilon = 1e-12);
                assert_abs_diff_eq!(k.value(50.0, i, j), 1.0, epsilon = 1e-10);
            }
        }
        let eig = k.eigenvalues();
        assert_eq!(eig.iter().filter(|&&l| l == 0.0).count(), 1);
        assert!(eig.iter().all(|&l| l <= 0.0));
        let d = HeatKernel::build(6, Boundary::Dirichlet).unwrap();
        assert!(d.eigenvalues().iter().all(|&l| l < 0.0));
    }

    #[test]
    fn kernel_row_sums_conserved_for_neumann() {
        let n = 20;
        let k = HeatKernel::build(n, Boundary::Neumann).unwrap();
        for t in [0.01, 0.1, 1.0] {
            for i in 0..n {
                let s: f64 = k.row(t, i).iter().sum::<f64>() / n as f64;
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn kernel_apply_examples() {
        let n = 16;
        let k = HeatKernel::build(n, Boundary::Dirichlet).unwrap();
        let v: Vec<f64> = (0..n).map(|i| i as f64).collect();
        assert_eq!(k.apply(0.0, &v).unwrap(), v);
        assert_eq!(k.apply(-1.0, &v), Err(Error::NegativeTime(-1.0)));
        let m = 3;
        let vm = k.eigenvector(m);
        let out = k.apply(0.2, &vm).unwrap();
        let decay = (k.eigenvalues()[m] * 0.2).exp();
        for (a, b) in out.iter().zip(&vm) {
            assert_abs_diff_eq!(*a, decay * b, epsilon = 1e-12);
        }
    }

    #[test]
    fn kernel_matches_fourier_solution() {
        let n = 128;
        let t = 0.1;
        let g = |u: f64| 1.0 + (PI * u).cos();
        let cells = GridFunction::project(&g, n).unwrap();
        let k = HeatKernel::build(n, Boundary::Neumann).unwrap();
        let out = k.apply(t, &cells.values).unwrap();
        let exact = GridFunction::project(&|u: f64| 1.0 + (-PI * PI * t / 2.0).exp() * (PI * u).cos(), n).unwrap();
        for (a, b) in out.iter().zip(&exact.values) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn polygonal_examples() {
        let s = LatticeState::new(Boundary::Dirichlet, vec![0.5, 2.0, 1.0, 4.0]);
        let n = 4.0;
        for k in 1..=4 {
            assert_abs_diff_eq!(polygonal_interpolate(&s, k as f64 / n), s.x[k - 1], epsilon = 1e-15);
        }
        for k in 2..=4 {
            let mid = polygonal_interpolate(&s, (k as f64 - 0.5) / n);
            assert_abs_diff_eq!(mid, 0.5 * (s.x[k - 1] + s.x[k - 2]), epsilon = 1e-15);
        }
        assert_eq!(polygonal_interpolate(&s, 0.0), 0.0);
        let c = LatticeState::new(Boundary::Neumann, vec![1.5; 5]);
        for i in 0..=50 {
            assert_abs_diff_eq!(polygonal_interpolate(&c, i as f64 / 50.0), 1.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn thomas_solver_matches_dense() {
        let n = 7;
        let diag: Vec<f64> = (0..n).map(|i| 3.0 + i as f64 * 0.1).collect();
        let off = -1.2;
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else if i.abs_diff(j) == 1 { off } else { 0.0 });
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        let mut scratch = vec![0.0; n];
        solve_tridiagonal(&diag, off, &mut x, &mut scratch);
        let r = &m * DVector::from_column_slice(&x) - DVector::from_column_slice(&b);
        assert!(r.amax() < 1e-13);
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn laplacian_symmetric_and_dissipative(n in 1usize..30, seed in arb_vec(60), neumann in any::<bool>()) {
            let b = if neumann { Boundary::Neumann } else { Boundary::Dirichlet };
            let x = seed[..n].to_vec();
            let y = seed[30..30 + n].to_vec();
            let lx = apply_laplacian(&LatticeState::new(b, x.clone()));
            let ly = apply_laplacian(&LatticeState::new(b, y.clone()));
            let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(p, q)| p * q).sum::<f64>();
            let scale = (n * n) as f64 * 100.0 * n as f64;
            prop_assert!((dot(&lx, &y) - dot(&x, &ly)).abs() <= 1e-12 * scale);
            prop_assert!(dot(&x, &lx) <= 1e-12 * scale);
        }

        #[test]
        fn neumann_energy_zero_only_for_constants(n in 2usize..20, x in arb_vec(20)) {
            let x = x[..n].to_vec();
            let lx = apply_laplacian(&LatticeState::new(Boundary::Neumann, x.clone()));
            let e: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
            let spread = x.iter().cloned().fold(f64::MIN, f64::max) - x.iter().cloned().fold(f64::MAX, f64::min);
            if spread > 1e-3 {
                prop_assert!(e < 0.0);
            }
        }

        #[test]
        fn semigroup_and_positivity(n in 2usize..24, t in 0.0f64..0.3, s in 0.0f64..0.3, v in prop::collection::vec(0.0f64..5.0, 24), neumann in any::<bool>()) {
            let b = if neumann { Boundary::Neumann } else { Boundary::Dirichlet };
            let k = HeatKernel::build(n, b).unwrap();
            let v = &v[..n];
            let direct = k.apply(t + s, v).unwrap();
            let composed = k.apply(t, &k.apply(s, v).unwrap()).unwrap();
            for (a, c) in direct.iter().zip(&composed) {
                prop_assert!((a - c).abs() < 1e-10);
            }
            prop_assert!(direct.iter().all(|&x| x >= -1e-12));
        }

        #[test]
        fn polygonal_within_neighbor_spread(x in prop::collection::vec(0.0f64..3.0, 2..16), u in 0.0f64..1.0) {
            let n = x.len();
            let s = LatticeState::new(Boundary::Neumann, x.clone());
            let step = s.x[((u * n as f64).floor() as usize).min(n - 1)];
            let max_jump = (0..n).map(|k| if k == 0 { 0.0 } else { (x[k] - x[k - 1]).abs() }).fold(0.0, f64::max);
            prop_assert!((polygonal_interpolate(&s, u) - step).abs() <= max_jump + 1e-12);
        }
    }
}
