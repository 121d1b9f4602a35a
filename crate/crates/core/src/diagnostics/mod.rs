//! Path and ensemble statistics for the defining identities of the sticky
//! dynamics: the martingale problem for `⟨X, φ⟩`, the quadratic-variation
//! structure, the drift/QV bookkeeping of the regularised scheme, and
//! occupation times at zero.

use serde::{Deserialize, Serialize};

use crate::dynamics::{kappa_eps, DriftSpec, LatticeRun, PathRecord};
use crate::error::{Error, Result};
use crate::lattice::{apply_tilde_delta, Boundary};
use crate::spectral::{BasisFn, EigenSpec, GridFunction, QvTarget, TestFunction};
use crate::stats::{ensemble_ztest, sum, Moments};

/// `ẽ_k` (1-based): `1, √2cos(πu), √2cos(2πu), …` for Neumann and
/// `√2 sin(kπu)` for Dirichlet.
pub fn test_basis(boundary: Boundary, k: u32) -> BasisFn {
    match (boundary, k) {
        (Boundary::Neumann, 1) => BasisFn::Constant,
        (Boundary::Neumann, k) => BasisFn::Cosine { j: k - 1 },
        (Boundary::Dirichlet, k) => BasisFn::Sine { j: k },
    }
}

/// `δ_diag = 2√(q_max·dt)`: two noise standard deviations of one step, for
/// the variance rate `q_max`.
pub fn default_zero_threshold(q_max: f64, dt: f64) -> f64 {
    2.0 * (q_max * dt).sqrt()
}

/// Coefficients needed to evaluate the compensator of `⟨Xⁿ, φ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleSetup {
    pub boundary: Boundary,
    pub lambda: GridFunction,
    pub drift: DriftSpec,
    /// A cell counts as "at zero" when its value is `≤` this. The hard
    /// schemes produce exact zeros, so `0` is the natural choice there.
    pub zero_threshold: f64,
}

impl MartingaleSetup {
    pub fn from_run(run: &LatticeRun) -> Self {
        Self {
            boundary: run.config().boundary,
            lambda: run.lambda().clone(),
            drift: run.config().drift.clone(),
            zero_threshold: 0.0,
        }
    }
}

fn check_uniform(path: &PathRecord) -> Result<()> {
    if path.times.len() < 2 {
        return Err(Error::ShortSeries { need: 2, got: path.times.len() });
    }
    if path.states.len() != path.times.len() {
        return Err(Error::DimensionMismatch { expected: path.times.len(), got: path.states.len() });
    }
    Ok(())
}

/// `M^φ(t_i) = ⟨X_{t_i},φ⟩ − ⟨X_0,φ⟩ − ∫₀^{t_i} [½⟨X,Δ̃ⁿφ⟩ + ⟨λⁿ𝟙{X=0},φ⟩ + ⟨f(X),φ⟩] ds`,
/// time integrals by the trapezoid rule on the recorded grid.
pub fn martingale_residual_path(path: &PathRecord, phi: &GridFunction, setup: &MartingaleSetup) -> Result<Vec<f64>> {
    check_uniform(path)?;
    let n = path.n();
    phi.check_len(n)?;
    setup.lambda.check_len(n)?;
    let dphi = apply_tilde_delta(phi, setup.boundary);
    let nf = n as f64;
    let pair = |x: &[f64]| -> (f64, f64) {
        let mut value = 0.0;
        let mut rate = 0.0;
        for k in 0..n {
            let v = x[k];
            value += v * phi.values[k];
            let sticky = if v <= setup.zero_threshold { setup.lambda.values[k] } else { 0.0 };
            let f = match setup.drift {
                DriftSpec::Zero => 0.0,
                ref d => d.eval(v),
            };
            rate += 0.5 * v * dphi.values[k] + (sticky + f) * phi.values[k];
        }
        (value / nf, rate / nf)
    };
    let (v0, mut h_prev) = pair(&path.states[0]);
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(path.times.len());
    out.push(0.0);
    for i in 1..path.times.len() {
        let (v, h) = pair(&path.states[i]);
        integral += 0.5 * (h_prev + h) * (path.times[i] - path.times[i - 1]);
        out.push(v - v0 - integral);
        h_prev = h;
    }
    Ok(out)
}

/// `Σ (Δa)²`.
pub fn realized_qv(series: &[f64]) -> f64 {
    sum(series.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])))
}

/// `Σ (Δa)(Δb)`; the shorter series bounds the sum.
pub fn realized_cross_qv(a: &[f64], b: &[f64]) -> f64 {
    sum(a.windows(2).zip(b.windows(2)).map(|(x, y)| (x[1] - x[0]) * (y[1] - y[0])))
}

/// Realized QV of `M^φ` against `∫ ‖Q(𝟙{X_s>δ} φ)‖² ds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QvCheck {
    pub realized: f64,
    pub target: f64,
    /// `None` when the target vanishes (no noise reaches `φ`).
    pub ratio: Option<f64>,
}

/// Target QV along a path, with the path-dependent indicator, trapezoid in
/// time.
pub fn qv_target_along(path: &PathRecord, target: &QvTarget, zero_threshold: f64) -> Result<f64> {
    check_uniform(path)?;
    if target.n() != path.n() {
        return Err(Error::DimensionMismatch { expected: path.n(), got: target.n() });
    }
    let dens = |x: &[f64]| target.density_mask(|k| x[k] > zero_threshold);
    let mut prev = dens(&path.states[0]);
    let mut total = 0.0;
    for i in 1..path.times.len() {
        let d = dens(&path.states[i]);
        total += 0.5 * (prev + d) * (path.times[i] - path.times[i - 1]);
        prev = d;
    }
    Ok(total)
}

pub fn qv_identity_check(path: &PathRecord, phi: &GridFunction, spec: &EigenSpec, setup: &MartingaleSetup) -> Result<QvCheck> {
    let m = martingale_residual_path(path, phi, setup)?;
    let target = QvTarget::new(spec, path.n(), &TestFunction::Grid(phi.clone()))?;
    let t = qv_target_along(path, &target, setup.zero_threshold)?;
    let realized = realized_qv(&m);
    Ok(QvCheck { realized, target: t, ratio: (t > 0.0).then(|| realized / t) })
}

/// For each `δ`, the share of realized QV accrued on steps that start at
/// `x ≤ δ`. A path with no QV reports zeros.
pub fn qv_support_fractions(series: &[f64], deltas: &[f64]) -> Vec<(f64, f64)> {
    let total = realized_qv(series);
    deltas
        .iter()
        .map(|&d| {
            if total == 0.0 {
                return (d, 0.0);
            }
            let low = sum(series.windows(2).filter(|w| w[0] <= d).map(|w| (w[1] - w[0]) * (w[1] - w[0])));
            (d, low / total)
        })
        .collect()
}

/// `max_t |a_k(t) − λ_k (t − [η_k]_t / q_kk)|` for a path with recorded
/// drift and noise integrals.
pub fn bookkeeping_defect(path: &PathRecord, k: usize, lambda_k: f64, q_kk: f64) -> Result<f64> {
    if !(q_kk > 0.0) {
        return Err(Error::param("q_kk", "needs a positive noise variance rate"));
    }
    let book = path
        .bookkeeping
        .as_ref()
        .ok_or_else(|| Error::param("path", "drift and noise integrals were not recorded"))?;
    if k >= path.n() {
        return Err(Error::DimensionMismatch { expected: path.n(), got: k + 1 });
    }
    let (a, eta) = book.component(k);
    let mut qv = 0.0;
    let mut worst: f64 = (a[0] - lambda_k * path.times[0]).abs();
    for i in 1..a.len() {
        let d = eta[i] - eta[i - 1];
        qv += d * d;
        worst = worst.max((a[i] - lambda_k * (path.times[i] - qv / q_kk)).abs());
    }
    Ok(worst)
}

/// `Δt · #{grid points t_i < T with x(t_i) ≤ δ}`.
pub fn occupation_time(series: &[f64], dt: f64, delta: f64) -> f64 {
    let n = series.len().saturating_sub(1);
    series[..n].iter().filter(|&&x| x <= delta).count() as f64 * dt
}

/// `Δt · Σ (1 − κ_ε(x(t_i))²)`, the clock the regularised scheme runs its
/// sticky drift on.
pub fn sticky_clock(series: &[f64], dt: f64, epsilon: f64) -> f64 {
    let n = series.len().saturating_sub(1);
    dt * sum(series[..n].iter().map(|&x| {
        let k = kappa_eps(x, epsilon);
        1.0 - k * k
    }))
}

/// Cell-averaged occupation time `Leb{t : X_k(t) ≤ δ}` of a lattice path.
pub fn field_occupation(path: &PathRecord, delta: f64) -> f64 {
    let dt = path.record_dt();
    let n = path.n();
    sum((0..n).map(|k| occupation_time(&path.cell_series(k), dt, delta))) / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickinessReport {
    pub delta: f64,
    pub per_path: Vec<f64>,
    pub mean: f64,
    pub se: f64,
    pub ci99: (f64, f64),
}

impl StickinessReport {
    pub fn from_occupations(delta: f64, per_path: Vec<f64>) -> Result<Self> {
        let m = Moments::of(&per_path)?;
        Ok(Self { delta, mean: m.mean, se: m.se, ci99: m.ci99(), per_path })
    }
}

/// Per-path ingredients of a martingale test for one `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMartingaleStats {
    /// `M^φ(t_i) − M^φ(t_{i−1})` for `i ≥ 1`.
    pub increments: Vec<f64>,
    pub realized_qv: f64,
    pub target_qv: f64,
}

pub fn path_martingale_stats(path: &PathRecord, phi: &GridFunction, target: &QvTarget, setup: &MartingaleSetup) -> Result<PathMartingaleStats> {
    let m = martingale_residual_path(path, phi, setup)?;
    Ok(PathMartingaleStats {
        increments: m.windows(2).map(|w| w[1] - w[0]).collect(),
        realized_qv: realized_qv(&m),
        target_qv: qv_target_along(path, target, setup.zero_threshold)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTestReport {
    pub phi: String,
    pub paths: usize,
    /// Right endpoints of the increments tested.
    pub times: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub fraction_within_3: f64,
    pub per_path_ratio: Vec<Option<f64>>,
    pub realized_qv_mean: f64,
    pub target_qv_mean: f64,
    /// `Σ realized / Σ target`; `None` when every target vanishes.
    pub pooled_ratio: Option<f64>,
    /// Delta-method standard error of the pooled ratio.
    pub pooled_ratio_se: f64,
}

impl MartingaleTestReport {
    pub fn from_paths(phi: &str, times: &[f64], stats: &[PathMartingaleStats]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = stats.iter().map(|s| s.increments.clone()).collect();
        let z = ensemble_ztest(&rows)?;
        let within = z.iter().filter(|v| v.abs() < 3.0).count();
        let a: Vec<f64> = stats.iter().map(|s| s.realized_qv).collect();
        let b: Vec<f64> = stats.iter().map(|s| s.target_qv).collect();
        let (sa, sb) = (sum(a.iter().copied()), sum(b.iter().copied()));
        let pooled = (sb > 0.0).then(|| sa / sb);
        let se = match pooled {
            Some(r) => sum(a.iter().zip(&b).map(|(x, y)| (x - r * y).powi(2))).sqrt() / sb,
            None => 0.0,
        };
        let p = stats.len() as f64;
        Ok(Self {
            phi: phi.to_string(),
            paths: stats.len(),
            times: times.iter().skip(1).copied().collect(),
            fraction_within_3: if z.is_empty() { 1.0 } else { within as f64 / z.len() as f64 },
            z_scores: z,
            per_path_ratio: stats.iter().map(|s| (s.target_qv > 0.0).then(|| s.realized_qv / s.target_qv)).collect(),
            realized_qv_mean: sa / p,
            target_qv_mean: sb / p,
            pooled_ratio: pooled,
            pooled_ratio_se: se,
        })
    }
}

/// Which statistics to collect from every path of a lattice run.
#[derive(Debug, Clone)]
pub struct DiagnosticsPlan {
    pub setup: MartingaleSetup,
    /// `(label, φ on the lattice, QV weights)`.
    pub phis: Vec<(String, GridFunction, QvTarget)>,
    pub occupation_delta: f64,
}

impl DiagnosticsPlan {
    /// `φ = prⁿẽ₁, prⁿẽ₂` and `δ = δ_diag` for the applied variance rate
    /// `n·max_k q_kk`.
    pub fn standard(run: &LatticeRun) -> Result<Self> {
        let cfg = run.config();
        let n = cfg.n;
        let mut phis = Vec::new();
        for k in 1..=2 {
            let basis = test_basis(cfg.boundary, k);
            let phi = GridFunction::project(&basis, n)?;
            let target = QvTarget::new(&cfg.spec, n, &TestFunction::Grid(phi.clone()))?;
            phis.push((format!("pr^{n} e~{k}"), phi, target));
        }
        let cov = run.factor().covariance();
        let q_max = (0..n).map(|k| cov[(k, k)]).fold(0.0, f64::max) * n as f64;
        Ok(Self {
            setup: MartingaleSetup::from_run(run),
            phis,
            occupation_delta: default_zero_threshold(q_max, cfg.dt),
        })
    }
}

/// What one path contributes to a [`DiagnosticsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path: u64,
    pub martingale: Vec<PathMartingaleStats>,
    pub occupation: f64,
    pub clamped_mass: f64,
    pub aborted_at: Option<u64>,
}

impl PathSummary {
    pub fn compute(path: &PathRecord, plan: &DiagnosticsPlan) -> Result<Self> {
        let martingale = plan
            .phis
            .iter()
            .map(|(_, phi, target)| path_martingale_stats(path, phi, target, &plan.setup))
            .collect::<Result<_>>()?;
        Ok(Self {
            path: path.path,
            martingale,
            occupation: field_occupation(path, plan.occupation_delta),
            clamped_mass: path.clamped_mass,
            aborted_at: path.aborted_at,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub config_hash: String,
    pub master_seed: u64,
    /// Absent when the ensemble is too small for the Z-test.
    pub martingale: Vec<MartingaleTestReport>,
    pub stickiness: StickinessReport,
    pub clamped_mass_mean: f64,
    pub aborted_paths: Vec<u64>,
}

impl DiagnosticsReport {
    pub fn assemble(config_hash: &str, master_seed: u64, times: &[f64], plan: &DiagnosticsPlan, paths: &[PathSummary]) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut martingale = Vec::new();
        for (i, (label, _, _)) in plan.phis.iter().enumerate() {
            let stats: Vec<PathMartingaleStats> = paths.iter().map(|p| p.martingale[i].clone()).collect();
            match MartingaleTestReport::from_paths(label, times, &stats) {
                Ok(r) => martingale.push(r),
                Err(Error::TooFewPaths { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        let occ: Vec<f64> = paths.iter().map(|p| p.occupation).collect();
        Ok(Self {
            config_hash: config_hash.to_string(),
            master_seed,
            martingale,
            stickiness: StickinessReport::from_occupations(plan.occupation_delta, occ)?,
            clamped_mass_mean: sum(paths.iter().map(|p| p.clamped_mass)) / paths.len() as f64,
            aborted_paths: paths.iter().filter(|p| p.aborted_at.is_some()).map(|p| p.path).collect(),
        })
    }
}
