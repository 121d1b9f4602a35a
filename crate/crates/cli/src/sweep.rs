//! One-parameter sweeps: re-run a base scenario along an axis and tabulate
//! a statistic with its standard error.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use stickyheat_core::diagnostics::{field_occupation, sticky_clock, DiagnosticsPlan, PathSummary};
use stickyheat_core::dynamics::{simulate_map, LatticeRun};
use stickyheat_core::spectral::lambda_convergence_table;
use stickyheat_core::stats::{sum, Moments};
use stickyheat_core::{PathRecord, ScenarioConfig, SchemeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    Dt,
    Epsilon,
    /// Multiplies the stickiness profile.
    LambdaScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `‖λⁿ − λ‖` in `L²`, no simulation.
    LambdaError,
    /// Cell-averaged `Leb{t : X(t) ≤ δ_diag}`.
    Occupation,
    /// Cell-averaged time on the sticky clock: `Leb{X = 0}` for the hard
    /// scheme, `∫(1 − κ_ε(X)²)dt` for the regularised one.
    StickyClock,
    /// `⟨X_T, 1⟩`.
    Mass,
    /// Pooled realized-to-target QV ratio for `φ = prⁿẽ₁`.
    QvRatio,
}

/// The base scenario, inline or as a path relative to the plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseRef {
    File(String),
    Inline(Box<ScenarioConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub base: BaseRef,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub statistic: Statistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub paths: u64,
    pub error: Option<String>,
}

impl SweepPlan {
    /// Reads a plan and resolves a file base against the plan's directory.
    pub fn load(path: &Path) -> anyhow::Result<(Self, ScenarioConfig)> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let plan: SweepPlan = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = match &plan.base {
            BaseRef::Inline(c) => (**c).clone(),
            BaseRef::File(f) => {
                let p = path.parent().unwrap_or(Path::new(".")).join(f);
                crate::runner::load_config(&p)?
            }
        };
        Ok((plan, base))
    }

    pub fn check(&self) -> anyhow::Result<()> {
        if self.values.is_empty() {
            bail!("sweep needs at least one value");
        }
        let inc = self.values.windows(2).all(|w| w[1] > w[0]);
        let dec = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            bail!("sweep values must be strictly monotone");
        }
        if self.axis == Axis::N && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            bail!("axis n takes positive integers");
        }
        Ok(())
    }
}

/// The base scenario with the axis set to `value`.
pub fn apply_axis(base: &ScenarioConfig, axis: Axis, value: f64) -> ScenarioConfig {
    let mut c = base.clone();
    match axis {
        Axis::N => c.n = value as usize,
        Axis::Dt => c.dt = value,
        Axis::Epsilon => c.epsilon = value,
        Axis::LambdaScale => c.lambda = base.lambda.scaled(value),
    }
    c
}

fn sticky_time(rec: &PathRecord, scheme: SchemeKind, epsilon: f64) -> f64 {
    let n = rec.n();
    let dt = rec.record_dt();
    let per_cell = |k: usize| {
        let s = rec.cell_series(k);
        match scheme {
            SchemeKind::Regularized => sticky_clock(&s, dt, epsilon),
            _ => stickyheat_core::diagnostics::occupation_time(&s, dt, 0.0),
        }
    };
    sum((0..n).map(per_cell)) / n as f64
}

/// Evaluates one statistic on one scenario.
pub fn evaluate(config: &ScenarioConfig, statistic: Statistic) -> anyhow::Result<SweepRow> {
    let row = |m: Moments| SweepRow {
        value: 0.0,
        mean: Some(m.mean),
        se: Some(m.se),
        ci_low: Some(m.ci99().0),
        ci_high: Some(m.ci99().1),
        paths: m.count as u64,
        error: None,
    };
    match statistic {
        Statistic::LambdaError => {
            let e = lambda_convergence_table(&config.spec, &config.lambda, &[config.n])?[0].1;
            Ok(SweepRow { value: 0.0, mean: Some(e), se: Some(0.0), ci_low: Some(e), ci_high: Some(e), paths: 0, error: None })
        }
        Statistic::Occupation => {
            let run = LatticeRun::new(config)?;
            let delta = DiagnosticsPlan::standard(&run)?.occupation_delta;
            let v = simulate_map(config, |rec| Ok(field_occupation(&rec, delta)))?;
            Ok(row(Moments::of(&v)?))
        }
        Statistic::StickyClock => {
            let v = simulate_map(config, |rec| Ok(sticky_time(&rec, config.scheme, config.epsilon)))?;
            Ok(row(Moments::of(&v)?))
        }
        Statistic::Mass => {
            let v = simulate_map(config, |rec| Ok(sum(rec.final_state().iter().copied()) / rec.n() as f64))?;
            Ok(row(Moments::of(&v)?))
        }
        Statistic::QvRatio => {
            let run = LatticeRun::new(config)?;
            let plan = DiagnosticsPlan::standard(&run)?;
            let v = simulate_map(config, |rec| {
                let s = PathSummary::compute(&rec, &plan)?;
                Ok((s.martingale[0].realized_qv, s.martingale[0].target_qv))
            })?;
            let (a, b) = (sum(v.iter().map(|p| p.0)), sum(v.iter().map(|p| p.1)));
            if b == 0.0 {
                bail!("target quadratic variation vanishes; ratio undefined");
            }
            let r = a / b;
            let se = sum(v.iter().map(|p| (p.0 - r * p.1).powi(2))).sqrt() / b;
            Ok(SweepRow {
                value: 0.0,
                mean: Some(r),
                se: Some(se),
                ci_low: Some(r - 2.5758 * se),
                ci_high: Some(r + 2.5758 * se),
                paths: v.len() as u64,
                error: None,
            })
        }
    }
}

/// Runs the sweep; a failing point is recorded in its row and the sweep
/// moves on.
pub fn sweep(plan: &SweepPlan, base: &ScenarioConfig) -> anyhow::Result<Vec<SweepRow>> {
    plan.check()?;
    Ok(plan
        .values
        .iter()
        .map(|&v| {
            let cfg = apply_axis(base, plan.axis, v);
            let result = match cfg.validate() {
                r if !r.is_ok() => Err(anyhow::anyhow!(r.errors.join("; "))),
                _ => evaluate(&cfg, plan.statistic),
            };
            match result {
                Ok(mut row) => {
                    row.value = v;
                    row
                }
                Err(e) => {
                    log::warn!("sweep point {v} failed: {e}");
                    SweepRow { value: v, mean: None, se: None, ci_low: None, ci_high: None, paths: 0, error: Some(e.to_string()) }
                }
            }
        })
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `<name>.sweep.csv` and `<name>.sweep.json`.
pub fn write_sweep(out_dir: &Path, name: &str, plan: &SweepPlan, rows: &[SweepRow]) -> anyhow::Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from("value,mean,se,ci_low,ci_high,paths,error\n");
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace('"', "'");
        let _ = writeln!(csv, "{},{},{},{},{},{},\"{}\"", r.value, opt(r.mean), opt(r.se), opt(r.ci_low), opt(r.ci_high), r.paths, err);
    }
    fs::write(out_dir.join(format!("{name}.sweep.csv")), csv)?;
    let json = serde_json::json!({ "axis": plan.axis, "statistic": plan.statistic, "rows": rows });
    fs::write(out_dir.join(format!("{name}.sweep.json")), serde_json::to_string_pretty(&json)?)?;
    Ok(())
}
