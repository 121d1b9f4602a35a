//! The acceptance suite. Each criterion runs a fixed scenario with a fixed
//! seed and reports one line; nothing here is tuned to the outcome.

use std::fmt;
use std::sync::OnceLock;
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use stickyheat_core::config::Profile;
use stickyheat_core::diagnostics::{
    qv_support_fractions, occupation_time, bookkeeping_defect, DiagnosticsPlan, MartingaleTestReport, PathSummary,
};
use stickyheat_core::dynamics::{simulate_map, simulate_srbm, srbm_time_change_oracle, SrbmScenario};
use stickyheat_core::noise::sample_increments;
use stickyheat_core::spectral::{lambda_convergence_table, q_matrix};
use stickyheat_core::stats::{ks_two_sample, sum, Moments};
use stickyheat_core::{
    BasisFn, Boundary, DriftSpec, EigenSpec, FieldFn, NoiseBackend, NoiseFactor, OutputKind, ScenarioConfig, SchemeKind,
    SchemeParams, SeedPolicy,
};

use crate::runner::{run, RunOptions};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] #{} {}: {} ({:.1} s)", self.id, self.title, self.detail, self.seconds)
    }
}

type Check = fn() -> anyhow::Result<(bool, String)>;

pub const CRITERIA: [(u8, &str, Check); 9] = [
    (1, "deterministic reduction", deterministic_reduction),
    (2, "1-D cross-scheme equivalence", cross_scheme_equivalence),
    (3, "QV support property", qv_support),
    (4, "lattice martingale problem", martingale_problem),
    (5, "stickiness discretization", lambda_discretization),
    (6, "regularization consistency", regularization_consistency),
    (7, "drift/QV bookkeeping", bookkeeping_refinement),
    (8, "reproducibility", reproducibility),
    (9, "noise covariance calibration", noise_calibration),
];

pub fn run_one(id: u8) -> Option<Outcome> {
    let &(id, title, check) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e:#}")),
    };
    Some(Outcome { id, title, passed, detail, seconds: start.elapsed().as_secs_f64() })
}

/// Runs the selected criteria (all when `only` is empty), printing each line
/// as it completes.
pub fn run_all(only: &[u8]) -> Vec<Outcome> {
    CRITERIA
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.0))
        .filter_map(|c| {
            let o = run_one(c.0)?;
            println!("{o}");
            Some(o)
        })
        .collect()
}

fn lattice_base(name: &str) -> ScenarioConfig {
    let mut c = ScenarioConfig::example(name);
    c.outputs = vec![];
    c
}

fn deterministic_reduction() -> anyhow::Result<(bool, String)> {
    let start = Instant::now();
    let mut c = lattice_base("accept-heat");
    c.n = 128;
    c.spec = EigenSpec::zero();
    c.lambda = Profile::Constant { value: 0.0 };
    c.drift = DriftSpec::Zero;
    c.g = Profile::Cosine { offset: 1.0, amplitude: 1.0, j: 1 };
    c.theta_implicit = 0.5;
    c.dt = 1e-3;
    c.t_end = 0.1;
    c.ensemble = 1;
    c.record_every = 100;
    let path = stickyheat_core::dynamics::simulate_path(&c, 0)?;
    let decay = (-std::f64::consts::PI.powi(2) * c.t_end / 2.0).exp();
    let exact = Profile::Cosine { offset: 1.0, amplitude: decay, j: 1 }.cell_means(c.n);
    let err = path.final_state().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    Ok((err <= 1e-3 && secs < 1.0, format!("max error {err:.3e} (limit 1e-3), runtime {secs:.3} s (limit 1 s)")))
}

/// Per-path quantities of the shared sticky-BM ensemble.
struct SrbmSample {
    hard_final: f64,
    oracle_final: f64,
    hard_occupation: f64,
    oracle_occupation: f64,
    support: [f64; 3],
}

const SRBM_DT: f64 = 1e-4;
const SRBM_PATHS: u64 = 10_000;
const SUPPORT_DELTAS: [f64; 3] = [0.04, 0.02, 0.01];

fn srbm_ensemble() -> &'static anyhow::Result<Vec<SrbmSample>> {
    static CELL: OnceLock<anyhow::Result<Vec<SrbmSample>>> = OnceLock::new();
    CELL.get_or_init(|| {
        let seeds = SeedPolicy::new(2_024_101);
        let oracle_seeds = seeds.derive(1);
        let scn = SrbmScenario::new(1.0, 1.0, 0.0, 1.0, SRBM_DT, SchemeKind::Hard);
        let delta = 2.0 * SRBM_DT.sqrt();
        (0..SRBM_PATHS)
            .into_par_iter()
            .map(|p| {
                let h = simulate_srbm(&scn, &seeds, p)?.cell_series(0);
                let o = srbm_time_change_oracle(1.0, 1.0, 0.0, 1.0, SRBM_DT, &oracle_seeds, p)?.cell_series(0);
                let fr = qv_support_fractions(&h, &SUPPORT_DELTAS);
                Ok(SrbmSample {
                    hard_final: *h.last().unwrap(),
                    oracle_final: *o.last().unwrap(),
                    hard_occupation: occupation_time(&h, SRBM_DT, delta),
                    oracle_occupation: occupation_time(&o, SRBM_DT, delta),
                    support: [fr[0].1, fr[1].1, fr[2].1],
                })
            })
            .collect()
    })
}

fn cross_scheme_equivalence() -> anyhow::Result<(bool, String)> {
    let s = srbm_ensemble().as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?;
    let a: Vec<f64> = s.iter().map(|r| r.hard_final).collect();
    let b: Vec<f64> = s.iter().map(|r| r.oracle_final).collect();
    let (d, p) = ks_two_sample(&a, &b)?;
    let ho = Moments::of(&s.iter().map(|r| r.hard_occupation).collect::<Vec<_>>())?;
    let oo = Moments::of(&s.iter().map(|r| r.oracle_occupation).collect::<Vec<_>>())?;
    let rel = (ho.mean - oo.mean).abs() / oo.mean;
    Ok((
        p > 0.01 && rel < 0.05,
        format!(
            "KS D = {d:.4}, p = {p:.3} (need > 0.01); occupation hard {:.4} ± {:.4}, oracle {:.4} ± {:.4}, rel diff {:.2}% (need < 5%)",
            ho.mean,
            ho.se,
            oo.mean,
            oo.se,
            100.0 * rel
        ),
    ))
}

fn qv_support() -> anyhow::Result<(bool, String)> {
    let s = srbm_ensemble().as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?;
    let m = s.len() as f64;
    let mean: Vec<f64> = (0..3).map(|i| sum(s.iter().map(|r| r.support[i])) / m).collect();
    let ok = mean[2] <= 0.10 && mean[0] > mean[1] && mean[1] > mean[2];
    Ok((
        ok,
        format!(
            "mean QV fraction at δ = 0.04/0.02/0.01: {:.4} / {:.4} / {:.4} (need ≤ 0.10 at 0.01, decreasing)",
            mean[0], mean[1], mean[2]
        ),
    ))
}

fn martingale_config() -> ScenarioConfig {
    let mut c = lattice_base("accept-martingale");
    c.n = 32;
    c.boundary = Boundary::Neumann;
    c.spec = EigenSpec::new(vec![(1.0, BasisFn::Constant), (0.5, BasisFn::Cosine { j: 1 })]);
    c.lambda = Profile::Constant { value: 0.5 };
    c.drift = DriftSpec::Linear { c: 0.2 };
    c.g = Profile::Constant { value: 0.2 };
    c.t_end = 0.5;
    c.dt = 1e-4;
    c.ensemble = 2000;
    c.record_every = 25;
    c.master_seed = 2_024_104;
    c
}

fn martingale_problem() -> anyhow::Result<(bool, String)> {
    let c = martingale_config();
    let run = stickyheat_core::dynamics::LatticeRun::new(&c)?;
    let plan = DiagnosticsPlan::standard(&run)?;
    let summaries = simulate_map(&c, |rec| Ok((PathSummary::compute(&rec, &plan)?, rec.times)))?;
    let times = summaries[0].1.clone();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (label, _, _)) in plan.phis.iter().enumerate() {
        let stats: Vec<_> = summaries.iter().map(|s| s.0.martingale[i].clone()).collect();
        let r = MartingaleTestReport::from_paths(label, &times, &stats)?;
        let ratio = r.pooled_ratio.context("target QV vanished")?;
        ok &= r.fraction_within_3 >= 0.95 && (0.9..=1.1).contains(&ratio);
        parts.push(format!(
            "φ = {}: |Z| < 3 at {:.1}% of {} times, QV ratio {:.4} ± {:.4}",
            r.phi,
            100.0 * r.fraction_within_3,
            r.z_scores.len(),
            ratio,
            r.pooled_ratio_se
        ));
    }
    Ok((ok, format!("{} (need ≥ 95%, ratio in [0.9, 1.1])", parts.join("; "))))
}

fn lambda_discretization() -> anyhow::Result<(bool, String)> {
    let spec = EigenSpec::new(vec![(1.0, BasisFn::Constant)]);
    let table = lambda_convergence_table(&spec, &|u: f64| u, &[8, 16, 32, 64])?;
    let decreasing = table.windows(2).all(|w| w[1].1 < w[0].1);
    let dev = table
        .iter()
        .map(|&(n, e)| (e - 1.0 / (2.0 * 3f64.sqrt() * n as f64)).abs())
        .fold(0.0, f64::max);
    let cols: Vec<String> = table.iter().map(|(n, e)| format!("n={n}: {e:.6e}")).collect();
    Ok((decreasing && dev <= 1e-10, format!("{}; max deviation from 1/(2√3 n) {dev:.2e} (limit 1e-10)", cols.join(", "))))
}

fn regularization_config(scheme: SchemeKind, epsilon: f64) -> ScenarioConfig {
    let mut c = martingale_config();
    c.name = "accept-regularization".into();
    c.n = 16;
    c.t_end = 0.2;
    c.dt = 1e-5;
    c.record_every = 10;
    c.scheme = scheme;
    c.epsilon = epsilon;
    c.master_seed = 2_024_106;
    c
}

/// Cell-averaged time on the sticky clock per path.
fn sticky_times(c: &ScenarioConfig) -> anyhow::Result<Moments> {
    let v = simulate_map(c, |rec| {
        let n = rec.n();
        let dt = rec.record_dt();
        Ok(sum((0..n).map(|k| {
            let s = rec.cell_series(k);
            match c.scheme {
                SchemeKind::Regularized => stickyheat_core::diagnostics::sticky_clock(&s, dt, c.epsilon),
                _ => occupation_time(&s, dt, 0.0),
            }
        })) / n as f64)
    })?;
    Ok(Moments::of(&v)?)
}

fn regularization_consistency() -> anyhow::Result<(bool, String)> {
    let hard = sticky_times(&regularization_config(SchemeKind::Hard, 0.05))?;
    let eps = [0.1, 0.05, 0.025];
    let reg: Vec<Moments> = eps
        .iter()
        .map(|&e| sticky_times(&regularization_config(SchemeKind::Regularized, e)))
        .collect::<anyhow::Result<_>>()?;
    let m: Vec<f64> = reg.iter().map(|r| r.mean).collect();
    let monotone = (m[0] > m[1] && m[1] > m[2]) || (m[0] < m[1] && m[1] < m[2]);
    let extrapolated = 2.0 * m[2] - m[1];
    let se_x = (4.0 * reg[2].se.powi(2) + reg[1].se.powi(2)).sqrt();
    let combined = (se_x * se_x + hard.se * hard.se).sqrt();
    let gap = (extrapolated - hard.mean).abs();
    Ok((
        monotone && gap <= 2.0 * combined,
        format!(
            "sticky time ε = 0.1/0.05/0.025: {:.5} / {:.5} / {:.5}; extrapolated {:.5} ± {:.5}; hard {:.5} ± {:.5}; gap {:.2} SE (need ≤ 2, monotone)",
            m[0],
            m[1],
            m[2],
            extrapolated,
            se_x,
            hard.mean,
            hard.se,
            gap / combined
        ),
    ))
}

fn bookkeeping_refinement() -> anyhow::Result<(bool, String)> {
    let seeds = SeedPolicy::new(2_024_107);
    let dts = [1e-3, 5e-4, 2.5e-4];
    let means: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let mut scn = SrbmScenario::new(1.0, 1.0, 0.0, 1.0, dt, SchemeKind::Regularized);
            scn.params = SchemeParams { epsilon: 0.1, ..SchemeParams::with_dt(dt) };
            scn.bookkeeping = true;
            let d: Vec<f64> = (0..2000u64)
                .into_par_iter()
                .map(|p| {
                    let rec = simulate_srbm(&scn, &seeds, p)?;
                    Ok(bookkeeping_defect(&rec, 0, 1.0, 1.0)?)
                })
                .collect::<anyhow::Result<_>>()?;
            Ok(sum(d.iter().copied()) / d.len() as f64)
        })
        .collect::<anyhow::Result<_>>()?;
    let r1 = means[1] / means[0];
    let r2 = means[2] / means[1];
    Ok((
        r1 < 0.8 && r2 < 0.8,
        format!(
            "mean max defect dt = 1e-3/5e-4/2.5e-4: {:.4e} / {:.4e} / {:.4e}; ratios {r1:.3}, {r2:.3} (need < 0.8)",
            means[0], means[1], means[2]
        ),
    ))
}

fn reproducibility() -> anyhow::Result<(bool, String)> {
    let mut c = lattice_base("accept-repro");
    c.spec = EigenSpec::new(vec![(1.0, BasisFn::Constant), (0.5, BasisFn::Cosine { j: 1 })]);
    c.lambda = Profile::Constant { value: 0.5 };
    c.g = Profile::Constant { value: 0.05 };
    c.ensemble = 40;
    c.t_end = 0.02;
    c.dt = 1e-3;
    c.outputs = vec![OutputKind::Paths, OutputKind::Diag];
    let root = std::env::temp_dir().join(format!("stickyheat-acceptance-{}", std::process::id()));
    let runs: Vec<(usize, std::path::PathBuf)> =
        [(1, "a"), (1, "b"), (4, "c")].iter().map(|(t, d)| (*t, root.join(d))).collect();
    for (threads, dir) in &runs {
        let opts = RunOptions { out_dir: dir.clone(), dump_increments: None };
        crate::thread_pool(Some(*threads))?.install(|| run(&c, &opts))?;
    }
    let mut same = true;
    for f in ["accept-repro.paths.csv", "accept-repro.diag.json"] {
        let bytes: Vec<Vec<u8>> = runs.iter().map(|(_, d)| std::fs::read(d.join(f))).collect::<Result<_, _>>()?;
        same &= bytes.windows(2).all(|w| w[0] == w[1]);
    }
    let _ = std::fs::remove_dir_all(&root);
    Ok((same, format!("paths.csv and diag.json byte-identical across two 1-thread runs and a 4-thread run: {same}")))
}

fn noise_calibration() -> anyhow::Result<(bool, String)> {
    let specs = [
        ("constant+cos, n=8 (rank 2)", 8, EigenSpec::new(vec![(1.0, BasisFn::Constant), (0.5, BasisFn::Cosine { j: 1 })])),
        (
            "quarter indicators, n=4 (full rank)",
            4,
            EigenSpec::new(
                (0..4)
                    .map(|i| (0.5 + 0.25 * i as f64, BasisFn::NormalizedIndicator { a: i as f64 / 4.0, b: (i + 1) as f64 / 4.0 }))
                    .collect(),
            ),
        ),
        (
            "sin 1..3 + cos 2, n=6 (rank 4)",
            6,
            EigenSpec::new(vec![
                (1.0, BasisFn::Sine { j: 1 }),
                (0.7, BasisFn::Sine { j: 2 }),
                (0.4, BasisFn::Sine { j: 3 }),
                (0.3, BasisFn::Cosine { j: 2 }),
            ]),
        ),
    ];
    let dt = 1e-2;
    let draws = 100_000u64;
    let mut ok = true;
    let mut parts = Vec::new();
    for (si, (label, n, spec)) in specs.iter().enumerate() {
        let q = q_matrix(spec, *n)? * dt;
        for backend in [NoiseBackend::Spectral, NoiseBackend::Factor] {
            let factor = NoiseFactor::build(spec, *n, backend)?;
            let seeds = SeedPolicy::new(2_024_109).derive((si * 2 + backend as usize) as u64);
            let samples: Vec<Vec<f64>> =
                (0..draws).into_par_iter().map(|p| sample_increments(&factor, &seeds, p, 0, dt)).collect::<Result<_, _>>()?;
            let mut worst: f64 = 0.0;
            for k in 0..*n {
                for l in 0..*n {
                    let est = sum(samples.iter().map(|s| s[k] * s[l])) / draws as f64;
                    let se = ((q[(k, k)] * q[(l, l)] + q[(k, l)].powi(2)) / draws as f64).sqrt();
                    let dev = (est - q[(k, l)]).abs();
                    let z = if se > 0.0 { dev / se } else if dev < 1e-15 { 0.0 } else { f64::INFINITY };
                    worst = worst.max(z);
                }
            }
            ok &= worst <= 4.0;
            parts.push(format!("{label} {backend:?}: max {worst:.2} SE"));
        }
    }
    Ok((ok, format!("{} (need ≤ 4)", parts.join("; "))))
}
