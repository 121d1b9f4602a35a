//! Scenario description shared by the library runners and the command line.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{DriftSpec, SchemeKind, SchemeParams};
use crate::error::{Error, Result};
use crate::lattice::Boundary;
use crate::noise::{NoiseBackend, SeedPolicy};
use crate::spectral::{check_drift_condition, default_drift_resolution, EigenSpec, FieldFn, GridFunction};

/// A scalar profile on `[0, 1]`, used for the stickiness `λ` and the initial
/// datum `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `a + b·u`.
    Linear { a: f64, b: f64 },
    /// `offset + amplitude·cos(jπu)`.
    Cosine { offset: f64, amplitude: f64, j: u32 },
    /// `offset + amplitude·sin(jπu)`.
    Sine { offset: f64, amplitude: f64, j: u32 },
    /// Piecewise constant on `values.len()` equal cells.
    Tabulated { values: Vec<f64> },
}

impl Profile {
    pub fn scaled(&self, c: f64) -> Profile {
        match self {
            Profile::Constant { value } => Profile::Constant { value: c * value },
            Profile::Linear { a, b } => Profile::Linear { a: c * a, b: c * b },
            Profile::Cosine { offset, amplitude, j } => Profile::Cosine { offset: c * offset, amplitude: c * amplitude, j: *j },
            Profile::Sine { offset, amplitude, j } => Profile::Sine { offset: c * offset, amplitude: c * amplitude, j: *j },
            Profile::Tabulated { values } => Profile::Tabulated { values: values.iter().map(|v| c * v).collect() },
        }
    }

    /// `∫_a^b` of the profile.
    fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Profile::Constant { value } => value * (b - a),
            Profile::Linear { a: c0, b: c1 } => c0 * (b - a) + 0.5 * c1 * (b * b - a * a),
            Profile::Cosine { offset, amplitude, j } => {
                let w = *j as f64 * PI;
                let osc = if *j == 0 { b - a } else { ((w * b).sin() - (w * a).sin()) / w };
                offset * (b - a) + amplitude * osc
            }
            Profile::Sine { offset, amplitude, j } => {
                let w = *j as f64 * PI;
                let osc = if *j == 0 { 0.0 } else { ((w * a).cos() - (w * b).cos()) / w };
                offset * (b - a) + amplitude * osc
            }
            Profile::Tabulated { values } => {
                let m = values.len() as f64;
                let mut total = 0.0;
                for (i, v) in values.iter().enumerate() {
                    let lo = (i as f64 / m).max(a);
                    let hi = ((i + 1) as f64 / m).min(b);
                    if hi > lo {
                        total += v * (hi - lo);
                    }
                }
                total
            }
        }
    }

    fn min_on_grid(&self, resolution: usize) -> f64 {
        match self {
            Profile::Tabulated { values } => values.iter().cloned().fold(f64::INFINITY, f64::min),
            _ => (0..=resolution).map(|i| self.eval(i as f64 / resolution as f64)).fold(f64::INFINITY, f64::min),
        }
    }
}

impl FieldFn for Profile {
    fn eval(&self, u: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Linear { a, b } => a + b * u,
            Profile::Cosine { offset, amplitude, j } => offset + amplitude * (*j as f64 * PI * u).cos(),
            Profile::Sine { offset, amplitude, j } => offset + amplitude * (*j as f64 * PI * u).sin(),
            Profile::Tabulated { values } => {
                if values.is_empty() {
                    return 0.0;
                }
                let m = values.len();
                values[((u * m as f64).floor().max(0.0) as usize).min(m - 1)]
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Profile::Tabulated { values } => (1..values.len()).map(|i| i as f64 / values.len() as f64).collect(),
            _ => Vec::new(),
        }
    }

    fn cell_means(&self, n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        (0..n).map(|k| self.integral(k as f64 * h, (k + 1) as f64 * h) * n as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Paths,
    Diag,
    Plot,
}

fn default_epsilon() -> f64 {
    SchemeParams::default().epsilon
}
fn default_theta() -> f64 {
    SchemeParams::default().theta_implicit
}
fn default_one() -> u64 {
    1
}
fn default_true() -> bool {
    true
}
fn default_stability() -> f64 {
    SchemeParams::default().stability_factor
}
fn default_backend() -> NoiseBackend {
    NoiseBackend::Spectral
}
fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Paths, OutputKind::Diag]
}

/// One experiment: lattice, time grid, scheme, noise, coefficients and
/// ensemble. Serialised as JSON; optional fields have defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub boundary: Boundary,
    pub n: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub scheme: SchemeKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_theta")]
    pub theta_implicit: f64,
    pub spec: EigenSpec,
    pub lambda: Profile,
    pub g: Profile,
    #[serde(default)]
    pub drift: DriftSpec,
    pub ensemble: u64,
    pub master_seed: u64,
    #[serde(default = "default_one")]
    pub record_every: u64,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
    #[serde(default = "default_backend")]
    pub noise_backend: NoiseBackend,
    #[serde(default)]
    pub indicator_threshold: f64,
    #[serde(default = "default_true")]
    pub clamp_negatives: bool,
    #[serde(default = "default_stability")]
    pub stability_factor: f64,
    /// Record the running sticky-drift and gated-noise integrals.
    #[serde(default)]
    pub bookkeeping: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Tolerance for the Dirichlet compatibility `g(0) = g(1) = 0`.
pub const DIRICHLET_ENDPOINT_TOL: f64 = 1e-12;

impl ScenarioConfig {
    /// A small Neumann scenario with a single constant mode; handy as a base
    /// to modify in tests and examples.
    pub fn example(name: &str) -> Self {
        Self {
            name: name.to_string(),
            boundary: Boundary::Neumann,
            n: 8,
            t_end: 0.01,
            dt: 1e-3,
            scheme: SchemeKind::Hard,
            epsilon: default_epsilon(),
            theta_implicit: default_theta(),
            spec: EigenSpec::new(vec![(1.0, crate::spectral::BasisFn::Constant)]),
            lambda: Profile::Constant { value: 1.0 },
            g: Profile::Constant { value: 0.5 },
            drift: DriftSpec::Zero,
            ensemble: 2,
            master_seed: 1,
            record_every: 1,
            outputs: default_outputs(),
            noise_backend: NoiseBackend::Spectral,
            indicator_threshold: 0.0,
            clamp_negatives: true,
            stability_factor: default_stability(),
            bookkeeping: false,
        }
    }

    pub fn seeds(&self) -> SeedPolicy {
        SeedPolicy::new(self.master_seed)
    }

    pub fn scheme_params(&self) -> SchemeParams {
        SchemeParams {
            dt: self.dt,
            epsilon: self.epsilon,
            theta_implicit: self.theta_implicit,
            clamp_negatives: self.clamp_negatives,
            indicator_threshold: self.indicator_threshold,
            stability_factor: self.stability_factor,
        }
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn initial_state(&self) -> GridFunction {
        GridFunction::new(self.g.cell_means(self.n).into_iter().map(|v| v.max(0.0)).collect())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::param("config", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the canonical (compact) JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Collects every problem with the scenario; never stops at the first.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let mut err = |m: String| r.errors.push(m);
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            err(format!("name {:?} must be non-empty and contain no path separators", self.name));
        }
        if self.n == 0 {
            err("n must be at least 1".into());
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            err(format!("T must be positive, got {}", self.t_end));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            err(format!("dt must be positive, got {}", self.dt));
        } else if self.t_end > 0.0 {
            let steps = (self.t_end / self.dt).round();
            if steps < 1.0 || ((steps * self.dt - self.t_end) / self.t_end).abs() > 1e-9 {
                err(format!("T = {} is not an integer multiple of dt = {}", self.t_end, self.dt));
            }
        }
        if self.record_every == 0 {
            err("record_every must be at least 1".into());
        }
        if self.ensemble == 0 {
            err("ensemble must contain at least one path".into());
        }
        match self.scheme {
            SchemeKind::TimeChange => err("the time-change construction only exists for the scalar process".into()),
            SchemeKind::Regularized if !(self.epsilon > 0.0) => err(format!("epsilon must be positive, got {}", self.epsilon)),
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.theta_implicit) {
            err(format!("theta_implicit must lie in [0, 1], got {}", self.theta_implicit));
        }
        if self.n > 0 && self.theta_implicit == 0.0 && self.n > 1 {
            let limit = self.stability_factor / (self.n * self.n) as f64;
            if self.dt > limit {
                err(format!("explicit scheme needs dt <= {limit:e} for n = {}, got {:e}", self.n, self.dt));
            }
        }
        if self.indicator_threshold < 0.0 {
            err("indicator_threshold must be non-negative".into());
        }
        if let Err(e) = self.spec.validate() {
            err(format!("spec: {e}"));
        }
        if let Err(e) = self.drift.validate() {
            err(format!("drift: {e}"));
        }
        let res = 1000.max(4 * self.n);
        for (label, p) in [("lambda", &self.lambda), ("g", &self.g)] {
            if let Profile::Tabulated { values } = p {
                if values.is_empty() {
                    err(format!("{label}: tabulated profile needs at least one value"));
                    continue;
                }
            }
            let m = p.min_on_grid(res);
            if !(m >= 0.0) {
                err(format!("{label} must be non-negative, minimum {m}"));
            }
        }
        if self.boundary == Boundary::Dirichlet {
            for u in [0.0, 1.0] {
                let v = self.g.eval(u);
                if v.abs() > DIRICHLET_ENDPOINT_TOL {
                    err(format!("Dirichlet initial datum must vanish at the endpoints, g({u}) = {v}"));
                }
            }
        }
        if self.n > 0 && self.spec.validate().is_ok() {
            let check = check_drift_condition(&self.spec, &self.lambda, default_drift_resolution(self.n, &self.spec));
            if !check.satisfied {
                r.warnings.push(format!(
                    "lambda > 0 where the noise intensity vanishes at {} sample points (first u = {}); \
                     solutions are not guaranteed to exist",
                    check.violations.len(),
                    check.violations[0]
                ));
            }
        }
        if self.dt > 0.0 && self.record_every > 0 && self.record_every as f64 * self.dt > self.t_end / 200.0 * (1.0 + 1e-9) {
            r.warnings.push(format!(
                "recording stride {} exceeds T/200; time integrals in the diagnostics will be coarse",
                self.record_every as f64 * self.dt
            ));
        }
        if self.record_every > 0 && self.dt > 0.0 && !self.steps().is_multiple_of(self.record_every) {
            r.warnings.push("record_every does not divide the step count; the final state is recorded off-stride".into());
        }
        r
    }

    pub fn validated(&self) -> Result<()> {
        let r = self.validate();
        match r.errors.first() {
            None => Ok(()),
            Some(_) => Err(Error::param("config", r.errors.join("; "))),
        }
    }
}
