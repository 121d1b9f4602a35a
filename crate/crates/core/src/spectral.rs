//! The covariance operator `Q` as a finite list of eigenpairs, and every
//! cell-level discretisation built from it.
//!
//! Cells are `π_k = 𝟙[(k-1)/n, k/n)` for `k = 1..=n`; in code they are
//! zero-based. A [`GridFunction`] stores one value per cell and stands for the
//! step function `Σ v_k π_k`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::quadrature::gl64;

/// Threshold below which a diagonal entry of `qⁿ` counts as zero.
pub const PSD_ZERO_TOL: f64 = 1e-14;

/// Tolerance for the unit-norm / orthogonality checks on eigenfunctions.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// An `L²[0,1]` eigenfunction descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BasisFn {
    Constant,
    /// `√2 cos(π j u)`
    Cosine { j: u32 },
    /// `√2 sin(π j u)`
    Sine { j: u32 },
    /// `𝟙[a,b) / √(b-a)`
    NormalizedIndicator { a: f64, b: f64 },
    /// Values on the uniform nodes `i/(m-1)`, linearly interpolated.
    Tabulated { values: Vec<f64> },
}

impl BasisFn {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            BasisFn::Constant => 1.0,
            BasisFn::Cosine { j } => SQRT_2 * (PI * *j as f64 * u).cos(),
            BasisFn::Sine { j } => SQRT_2 * (PI * *j as f64 * u).sin(),
            BasisFn::NormalizedIndicator { a, b } => {
                if u >= *a && u < *b {
                    1.0 / (b - a).sqrt()
                } else {
                    0.0
                }
            }
            BasisFn::Tabulated { values } => interpolate_uniform(values, u),
        }
    }

    /// Points where the function (or its derivative) is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            BasisFn::NormalizedIndicator { a, b } => vec![*a, *b],
            BasisFn::Tabulated { values } if values.len() > 2 => {
                let m = (values.len() - 1) as f64;
                (1..values.len() - 1).map(|i| i as f64 / m).collect()
            }
            _ => Vec::new(),
        }
    }

    /// `∫_a^b e(u) du`, closed form for the analytic variants.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            BasisFn::Constant => b - a,
            BasisFn::Cosine { j } => {
                let w = PI * *j as f64;
                SQRT_2 * ((w * b).sin() - (w * a).sin()) / w
            }
            BasisFn::Sine { j } => {
                let w = PI * *j as f64;
                SQRT_2 * ((w * a).cos() - (w * b).cos()) / w
            }
            BasisFn::NormalizedIndicator { a: lo, b: hi } => {
                let overlap = (b.min(*hi) - a.max(*lo)).max(0.0);
                overlap / (hi - lo).sqrt()
            }
            BasisFn::Tabulated { .. } => {
                gl64().integrate_split(a, b, &self.breakpoints(), |u| self.eval(u))
            }
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            BasisFn::Cosine { j } | BasisFn::Sine { j } if *j == 0 => {
                Err(Error::param("basis", "trigonometric frequency must be >= 1"))
            }
            BasisFn::NormalizedIndicator { a, b } if !(0.0 <= *a && a < b && *b <= 1.0) => Err(
                Error::param("basis", format!("indicator support [{a}, {b}) must lie in [0,1] and be non-empty")),
            ),
            BasisFn::Tabulated { values } if values.len() < 2 => {
                Err(Error::param("basis", "tabulated function needs at least two nodes"))
            }
            _ => Ok(()),
        }
    }
}

fn interpolate_uniform(values: &[f64], u: f64) -> f64 {
    let m = values.len() - 1;
    let s = (u.clamp(0.0, 1.0)) * m as f64;
    let i = (s.floor() as usize).min(m.saturating_sub(1));
    let w = s - i as f64;
    values[i] * (1.0 - w) + values[(i + 1).min(m)] * w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub mu: f64,
    #[serde(rename = "fn")]
    pub basis: BasisFn,
}

/// `Q = Σ μ_j e_j ⊗ e_j`, truncated to the listed pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EigenSpec {
    pub pairs: Vec<EigenPair>,
}

impl EigenSpec {
    pub fn new(pairs: Vec<(f64, BasisFn)>) -> Self {
        Self {
            pairs: pairs.into_iter().map(|(mu, basis)| EigenPair { mu, basis }).collect(),
        }
    }

    /// `Q = 0`.
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks `μ_j ≥ 0` and orthonormality of the eigenfunctions by quadrature.
    pub fn validate(&self) -> Result<()> {
        for p in &self.pairs {
            if !(p.mu.is_finite() && p.mu >= 0.0) {
                return Err(Error::param("mu", format!("eigenvalue {} must be finite and >= 0", p.mu)));
            }
            p.basis.check()?;
        }
        let gram = self.gram();
        for i in 0..self.len() {
            for j in 0..self.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - target).abs() > ORTHONORMAL_TOL {
                    return Err(Error::param(
                        "pairs",
                        format!("eigenfunctions {i} and {j} have inner product {} (expected {target})", gram[(i, j)]),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Gram matrix of the eigenfunctions in `L²[0,1]`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut breaks: Vec<f64> = (1..32).map(|i| i as f64 / 32.0).collect();
        for p in &self.pairs {
            breaks.extend(p.basis.breakpoints());
        }
        breaks.sort_by(f64::total_cmp);
        let m = self.len();
        DMatrix::from_fn(m, m, |i, j| {
            let (a, b) = (&self.pairs[i].basis, &self.pairs[j].basis);
            gl64().integrate_split(0.0, 1.0, &breaks, |u| a.eval(u) * b.eval(u))
        })
    }

    /// `C[j][k] = ⟨e_j, π_k⟩` for all pairs and the `n` cells.
    pub fn cell_inner_products(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::ZeroCells);
        }
        let h = 1.0 / n as f64;
        Ok(self
            .pairs
            .iter()
            .map(|p| (0..n).map(|k| p.basis.integral(k as f64 * h, (k + 1) as f64 * h)).collect())
            .collect())
    }

    pub fn max_mu(&self) -> f64 {
        self.pairs.iter().map(|p| p.mu).fold(0.0, f64::max)
    }
}

/// One value per cell, representing `Σ values_k π_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub n: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { n: values.len(), values }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::new(vec![c; n])
    }

    /// Cell averages `n⟨f, π_k⟩`, i.e. `prⁿ f`.
    pub fn project<F: FieldFn + ?Sized>(f: &F, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroCells);
        }
        Ok(Self::new(f.cell_means(n)))
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.values.len() != n || self.n != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.values.len() });
        }
        Ok(())
    }

    pub fn eval(&self, u: f64) -> f64 {
        let k = ((u * self.n as f64).floor().max(0.0) as usize).min(self.n - 1);
        self.values[k]
    }

    /// `L²[0,1]` inner product of two step functions on the same grid.
    pub fn inner(&self, other: &GridFunction) -> f64 {
        debug_assert_eq!(self.n, other.n);
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() / self.n as f64
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

/// A scalar function on `[0,1]` that can be sampled and cell-averaged.
pub trait FieldFn: Sync {
    fn eval(&self, u: f64) -> f64;

    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Cell averages `n⟨f, π_k⟩`.
    fn cell_means(&self, n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        let breaks = self.breakpoints();
        (0..n)
            .map(|k| {
                let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
                gl64().integrate_split(a, b, &breaks, |u| self.eval(u)) * n as f64
            })
            .collect()
    }
}

impl<F: Fn(f64) -> f64 + Sync> FieldFn for F {
    fn eval(&self, u: f64) -> f64 {
        self(u)
    }
}

impl FieldFn for BasisFn {
    fn eval(&self, u: f64) -> f64 {
        BasisFn::eval(self, u)
    }

    fn breakpoints(&self) -> Vec<f64> {
        BasisFn::breakpoints(self)
    }

    fn cell_means(&self, n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        (0..n).map(|k| self.integral(k as f64 * h, (k + 1) as f64 * h) * n as f64).collect()
    }
}

impl FieldFn for GridFunction {
    fn eval(&self, u: f64) -> f64 {
        GridFunction::eval(self, u)
    }

    fn breakpoints(&self) -> Vec<f64> {
        (1..self.n).map(|k| k as f64 / self.n as f64).collect()
    }
}

/// `χ²(u) = Σ μ_j² e_j(u)²`.
pub fn chi_squared(spec: &EigenSpec, u: f64) -> f64 {
    spec.pairs.iter().map(|p| (p.mu * p.basis.eval(u)).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftCheck {
    pub satisfied: bool,
    /// Sample points where `λ > 0` but `χ² = 0`.
    pub violations: Vec<f64>,
}

/// Sampling resolution used when no explicit one is given: `10·n·J`.
pub fn default_drift_resolution(n: usize, spec: &EigenSpec) -> usize {
    10 * n.max(1) * spec.len().max(1)
}

/// Checks that `λ` vanishes wherever the noise intensity `χ²` does, on the
/// midpoints of a uniform grid with `resolution` points.
pub fn check_drift_condition<F: FieldFn + ?Sized>(spec: &EigenSpec, lambda: &F, resolution: usize) -> DriftCheck {
    let resolution = resolution.max(1);
    let violations: Vec<f64> = (0..resolution)
        .map(|i| (i as f64 + 0.5) / resolution as f64)
        .filter(|&u| chi_squared(spec, u) <= PSD_ZERO_TOL && lambda.eval(u) > 1e-12)
        .collect();
    DriftCheck { satisfied: violations.is_empty(), violations }
}

/// `q_{k,l} = n Σ_j μ_j² ⟨e_j,π_k⟩⟨e_j,π_l⟩`, the covariance rate of the
/// cell Wiener processes `w_k = √n ∫⟨π_k, Q dW⟩`.
pub fn q_matrix(spec: &EigenSpec, n: usize) -> Result<DMatrix<f64>> {
    let c = spec.cell_inner_products(n)?;
    let mut q = DMatrix::zeros(n, n);
    for (p, row) in spec.pairs.iter().zip(&c) {
        let m2 = p.mu * p.mu * n as f64;
        for k in 0..n {
            if row[k] == 0.0 {
                continue;
            }
            for l in k..n {
                q[(k, l)] += m2 * row[k] * row[l];
            }
        }
    }
    for k in 0..n {
        for l in 0..k {
            q[(k, l)] = q[(l, k)];
        }
    }
    Ok(q)
}

/// Diagonal of [`q_matrix`] without building the full matrix.
pub fn q_diagonal(spec: &EigenSpec, n: usize) -> Result<Vec<f64>> {
    let c = spec.cell_inner_products(n)?;
    let mut d = vec![0.0; n];
    for (p, row) in spec.pairs.iter().zip(&c) {
        let m2 = p.mu * p.mu * n as f64;
        for k in 0..n {
            d[k] += m2 * row[k] * row[k];
        }
    }
    Ok(d)
}

/// `λ_k = n⟨λ,π_k⟩ 𝟙{q_{k,k} > 0}`.
///
/// The cell averages come from a pointwise representative of `λ`, so a
/// discontinuous `λ` is resolved exactly only when its jumps are declared as
/// breakpoints.
pub fn discretize_lambda<F: FieldFn + ?Sized>(spec: &EigenSpec, lambda: &F, n: usize) -> Result<GridFunction> {
    let diag = q_diagonal(spec, n)?;
    let means = lambda.cell_means(n);
    Ok(GridFunction::new(
        means
            .into_iter()
            .zip(diag)
            .map(|(m, q)| if q > PSD_ZERO_TOL { m } else { 0.0 })
            .collect(),
    ))
}

/// `‖λⁿ − λ‖_{L²}` for each `n` in `ns`.
pub fn lambda_convergence_table<F: FieldFn + ?Sized>(
    spec: &EigenSpec,
    lambda: &F,
    ns: &[usize],
) -> Result<Vec<(usize, f64)>> {
    ns.iter()
        .map(|&n| {
            let ln = discretize_lambda(spec, lambda, n)?;
            let h = 1.0 / n as f64;
            let breaks = lambda.breakpoints();
            let sq: f64 = (0..n)
                .map(|k| {
                    let c = ln.values[k];
                    gl64().integrate_split(k as f64 * h, (k + 1) as f64 * h, &breaks, |u| (lambda.eval(u) - c).powi(2))
                })
                .sum();
            Ok((n, sq.sqrt()))
        })
        .collect()
}

/// A test function for the quadratic-variation density.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Grid(GridFunction),
    Basis(BasisFn),
}

/// Precomputed weights `w_{j,k} = μ_j ∫_{π_k} φ e_j` so the density
/// `Σ_j (Σ_k 𝟙_k w_{j,k})² = ‖Q(𝟙 φ)‖²` is cheap to evaluate along paths.
#[derive(Debug, Clone)]
pub struct QvTarget {
    n: usize,
    weights: Vec<Vec<f64>>,
}

impl QvTarget {
    pub fn new(spec: &EigenSpec, n: usize, phi: &TestFunction) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroCells);
        }
        let h = 1.0 / n as f64;
        let weights = match phi {
            TestFunction::Grid(g) => {
                g.check_len(n)?;
                let c = spec.cell_inner_products(n)?;
                spec.pairs
                    .iter()
                    .zip(c)
                    .map(|(p, row)| row.iter().zip(&g.values).map(|(ip, v)| p.mu * ip * v).collect())
                    .collect()
            }
            TestFunction::Basis(b) => spec
                .pairs
                .iter()
                .map(|p| {
                    let mut breaks = b.breakpoints();
                    breaks.extend(p.basis.breakpoints());
                    breaks.sort_by(f64::total_cmp);
                    (0..n)
                        .map(|k| {
                            p.mu * gl64().integrate_split(k as f64 * h, (k + 1) as f64 * h, &breaks, |u| {
                                b.eval(u) * p.basis.eval(u)
                            })
                        })
                        .collect()
                })
                .collect(),
        };
        Ok(Self { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Density for a cellwise indicator given as booleans.
    pub fn density_mask(&self, on: impl Fn(usize) -> bool) -> f64 {
        self.weights
            .iter()
            .map(|w| {
                let s: f64 = w.iter().enumerate().filter(|(k, _)| on(*k)).map(|(_, v)| v).sum();
                s * s
            })
            .sum()
    }
}

/// `‖Q(𝟙 φ)‖² = Σ_j μ_j² ⟨𝟙 φ, e_j⟩²` for a cellwise `{0,1}` indicator.
pub fn qv_target_density(spec: &EigenSpec, indicator: &GridFunction, phi: &TestFunction) -> Result<f64> {
    if indicator.values.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::param("indicator", "indicator cells must be 0 or 1"));
    }
    let target = QvTarget::new(spec, indicator.n, phi)?;
    Ok(target.density_mask(|k| indicator.values[k] == 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cosine_pair() -> EigenSpec {
        EigenSpec::new(vec![(1.0, BasisFn::Constant), (0.5, BasisFn::Cosine { j: 1 })])
    }

    fn half_indicator() -> EigenSpec {
        EigenSpec::new(vec![(1.0, BasisFn::NormalizedIndicator { a: 0.0, b: 0.5 })])
    }

    #[test]
    fn chi_squared_examples() {
        let one = EigenSpec::new(vec![(1.0, BasisFn::Constant)]);
        assert_eq!(chi_squared(&one, 0.3), 1.0);
        assert_abs_diff_eq!(chi_squared(&cosine_pair(), 0.0), 1.5, epsilon = 1e-15);
        assert_eq!(chi_squared(&EigenSpec::zero(), 0.7), 0.0);
    }

    #[test]
    fn drift_condition_examples() {
        let zero = EigenSpec::zero();
        assert!(check_drift_condition(&zero, &|_: f64| 0.0, 100).satisfied);
        let bad = check_drift_condition(&zero, &|_: f64| 1.0, 100);
        assert!(!bad.satisfied);
        assert_eq!(bad.violations.len(), 100);
        let ok = check_drift_condition(&half_indicator(), &|u: f64| if u < 0.5 { 1.0 } else { 0.0 }, 1000);
        assert!(ok.satisfied);
        let violated = check_drift_condition(&half_indicator(), &|_: f64| 1.0, 1000);
        assert_eq!(violated.violations.len(), 500);
        assert!(violated.violations.iter().all(|&u| u >= 0.5));
    }

    #[test]
    fn q_matrix_examples() {
        let one = EigenSpec::new(vec![(1.0, BasisFn::Constant)]);
        let q = q_matrix(&one, 2).unwrap();
        for v in q.iter() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-15);
        }
        let q = q_matrix(&half_indicator(), 2).unwrap();
        assert_abs_diff_eq!(q[(0, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(q[(0, 1)], 0.0);
        assert_eq!(q[(1, 1)], 0.0);
        assert_eq!(q_matrix(&one, 0), Err(Error::ZeroCells));
    }

    #[test]
    fn q_matrix_matches_riemann_oracle() {
        // independent midpoint-rule oracle, 10⁶ points on the first cell
        let spec = EigenSpec::new(vec![(1.0, BasisFn::Cosine { j: 1 })]);
        let n = 4;
        let pts = 1_000_000;
        let h = 0.25 / pts as f64;
        let ip: f64 = (0..pts)
            .map(|i| SQRT_2 * (PI * (i as f64 + 0.5) * h).cos())
            .sum::<f64>()
            * h;
        let oracle = n as f64 * ip * ip;
        let q = q_matrix(&spec, n).unwrap();
        assert_abs_diff_eq!(q[(0, 0)], oracle, epsilon = 1e-6);
    }

    #[test]
    fn discretize_lambda_examples() {
        let one = EigenSpec::new(vec![(1.0, BasisFn::Constant)]);
        for v in discretize_lambda(&one, &|_: f64| 1.0, 4).unwrap().values {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        }
        let l = discretize_lambda(&half_indicator(), &|_: f64| 1.0, 2).unwrap();
        assert_abs_diff_eq!(l.values[0], 1.0, epsilon = 1e-14);
        assert_eq!(l.values[1], 0.0);
        let l = discretize_lambda(&one, &|u: f64| u, 2).unwrap();
        assert_abs_diff_eq!(l.values[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(l.values[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn lambda_convergence_examples() {
        let one = EigenSpec::new(vec![(1.0, BasisFn::Constant)]);
        for (_, d) in lambda_convergence_table(&one, &|_: f64| 2.5, &[3, 7]).unwrap() {
            assert!(d < 1e-13);
        }
        for (_, d) in lambda_convergence_table(&one, &|_: f64| 0.0, &[3, 7]).unwrap() {
            assert_eq!(d, 0.0);
        }
        let t = lambda_convergence_table(&one, &|u: f64| u, &[8, 64]).unwrap();
        assert!(t[1].1 < t[0].1);
        for (n, d) in t {
            assert_abs_diff_eq!(d, 1.0 / (2.0 * 3f64.sqrt() * n as f64), epsilon = 1e-12);
        }
    }

    #[test]
    fn qv_density_examples() {
        let mu = 0.7;
        let spec = EigenSpec::new(vec![(mu, BasisFn::Cosine { j: 2 })]);
        let all = GridFunction::constant(16, 1.0);
        let d = qv_target_density(&spec, &all, &TestFunction::Basis(BasisFn::Cosine { j: 2 })).unwrap();
        assert_abs_diff_eq!(d, mu * mu, epsilon = 1e-12);
        let none = GridFunction::zeros(16);
        assert_eq!(qv_target_density(&spec, &none, &TestFunction::Basis(BasisFn::Constant)).unwrap(), 0.0);

        let one = EigenSpec::new(vec![(1.0, BasisFn::Constant)]);
        let left = GridFunction::new(vec![1.0, 0.0]);
        let d = qv_target_density(&one, &left, &TestFunction::Grid(GridFunction::constant(2, 1.0))).unwrap();
        // midpoint oracle for ⟨𝟙[0,.5), 1⟩²
        let m = 100_000;
        let ip = (0..m).filter(|i| ((*i as f64 + 0.5) / m as f64) < 0.5).count() as f64 / m as f64;
        assert_abs_diff_eq!(d, ip * ip, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_binary_indicator() {
        let one = EigenSpec::new(vec![(1.0, BasisFn::Constant)]);
        let ind = GridFunction::new(vec![0.5, 1.0]);
        assert!(qv_target_density(&one, &ind, &TestFunction::Basis(BasisFn::Constant)).is_err());
    }

    #[test]
    fn validate_catches_non_orthonormal() {
        assert!(cosine_pair().validate().is_ok());
        assert!(half_indicator().validate().is_ok());
        let dup = EigenSpec::new(vec![(1.0, BasisFn::Constant), (1.0, BasisFn::Constant)]);
        assert!(dup.validate().is_err());
        let unnormalized = EigenSpec::new(vec![(1.0, BasisFn::Tabulated { values: vec![2.0, 2.0] })]);
        assert!(unnormalized.validate().is_err());
        let tab = EigenSpec::new(vec![(1.0, BasisFn::Tabulated { values: vec![1.0, 1.0, 1.0] })]);
        assert!(tab.validate().is_ok());
        let neg = EigenSpec::new(vec![(-1.0, BasisFn::Constant)]);
        assert!(neg.validate().is_err());
    }

    #[test]
    fn json_shape() {
        let s = serde_json::to_string(&EigenSpec::new(vec![(1.0, BasisFn::Cosine { j: 1 })])).unwrap();
        assert_eq!(s, r#"{"pairs":[{"mu":1.0,"fn":{"type":"cosine","j":1}}]}"#);
        let g = serde_json::to_string(&GridFunction::new(vec![1.0, 2.0])).unwrap();
        assert_eq!(g, r#"{"n":2,"values":[1.0,2.0]}"#);
    }

    #[test]
    fn trace_identity_increases_with_refinement() {
        let spec = EigenSpec::new(vec![
            (1.0, BasisFn::Cosine { j: 1 }),
            (0.6, BasisFn::Sine { j: 2 }),
            (0.3, BasisFn::Cosine { j: 3 }),
        ]);
        let total: f64 = spec.pairs.iter().map(|p| p.mu * p.mu).sum();
        let mut last = 0.0;
        for n in [2, 4, 8, 16, 32, 64, 128] {
            let q = q_matrix(&spec, n).unwrap();
            let trace = q.diagonal().sum();
            // Σ_j μ_j² ‖prⁿ e_j‖² computed from the projections directly
            let proj: f64 = spec
                .pairs
                .iter()
                .map(|p| p.mu * p.mu * GridFunction::new(p.basis.cell_means(n)).norm().powi(2))
                .sum();
            assert_abs_diff_eq!(trace, proj, epsilon = 1e-12);
            assert!(trace <= total + 1e-12);
            assert!(trace >= last - 1e-12, "n={n}");
            last = trace;
        }
        assert!((total - last) / total < 1e-3);
    }

    fn arb_basis() -> impl Strategy<Value = BasisFn> {
        prop_oneof![
            Just(BasisFn::Constant),
            (1u32..6).prop_map(|j| BasisFn::Cosine { j }),
            (1u32..6).prop_map(|j| BasisFn::Sine { j }),
            (0.0f64..0.5, 0.5f64..1.0).prop_map(|(a, b)| BasisFn::NormalizedIndicator { a, b }),
        ]
    }

    fn arb_spec() -> impl Strategy<Value = EigenSpec> {
        prop::collection::vec((0.0f64..2.0, arb_basis()), 0..5).prop_map(EigenSpec::new)
    }

    proptest! {
        #[test]
        fn q_matrix_is_symmetric_psd(spec in arb_spec(), n in 1usize..24) {
            let q = q_matrix(&spec, n).unwrap();
            let norm = q.amax();
            prop_assert!((q.clone() - q.transpose()).amax() == 0.0);
            let eig = nalgebra::SymmetricEigen::new(q);
            let min = eig.eigenvalues.min();
            prop_assert!(min >= -1e-10 * norm.max(1e-300));
        }

        #[test]
        fn chi_squared_dominates_each_term(spec in arb_spec(), u in 0.0f64..1.0) {
            let chi = chi_squared(&spec, u);
            for p in &spec.pairs {
                prop_assert!(chi >= (p.mu * p.basis.eval(u)).powi(2) - 1e-15);
            }
        }

        #[test]
        fn discretized_lambda_splits_on_q_diagonal(spec in arb_spec(), n in 1usize..24, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let lambda = move |u: f64| a + b * u;
            let ln = discretize_lambda(&spec, &lambda, n).unwrap();
            let proj = GridFunction::project(&lambda, n).unwrap();
            let diag = q_diagonal(&spec, n).unwrap();
            for k in 0..n {
                if diag[k] > PSD_ZERO_TOL {
                    prop_assert_eq!(ln.values[k], proj.values[k]);
                } else {
                    prop_assert_eq!(ln.values[k], 0.0);
                }
            }
        }

        #[test]
        fn qv_density_monotone_in_indicator(mu in 0.0f64..2.0, basis in arb_basis(), n in 1usize..20, mask in prop::collection::vec(any::<bool>(), 20), extra in 0usize..20) {
            let spec = EigenSpec::new(vec![(mu, basis.clone())]);
            let small = GridFunction::new((0..n).map(|k| if mask[k] { 1.0 } else { 0.0 }).collect());
            let mut big = small.clone();
            big.values[extra % n] = 1.0;
            // single eigen-direction, φ along it
            let phi = TestFunction::Basis(basis);
            let a = qv_target_density(&spec, &small, &phi).unwrap();
            let b = qv_target_density(&spec, &big, &phi).unwrap();
            prop_assert!(b >= a - 1e-12);
        }
    }
}
