//! Single-scenario runs and the files they leave behind.
//!
//! | file | contents |
//! |------|----------|
//! | `<name>.summary.json` | config hash, seed, counts, warnings, timestamp |
//! | `<name>.paths.csv` | `path,t,k,x`, one row per path, recorded time and cell |
//! | `<name>.diag.json` | [`DiagnosticsReport`] |
//! | `<name>.zscores.csv` | `phi,t,z` from the martingale tests |
//! | `<name>.clamp.json` | per-path clamped mass and overflow aborts |
//! | `<name>.plot.gp` | gnuplot script for snapshots and Z-scores |
//!
//! Everything except the `timestamp` field of the summary is a pure
//! function of the config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use stickyheat_core::diagnostics::{DiagnosticsPlan, DiagnosticsReport, PathSummary};
use stickyheat_core::dynamics::{simulate_map, LatticeRun};
use stickyheat_core::{OutputKind, ScenarioConfig};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Also write the applied increments of this path to
    /// `<name>.increments.csv`.
    pub dump_increments: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub paths: u64,
    pub steps: u64,
    pub recorded_times: usize,
    pub aborted_paths: Vec<u64>,
    pub clamped_mass_mean: f64,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    /// Seconds since the Unix epoch; the only non-reproducible field.
    pub timestamp: u64,
}

#[derive(Serialize)]
struct ClampLog<'a> {
    config_hash: &'a str,
    clamped_mass: Vec<f64>,
    aborted: Vec<(u64, u64)>,
}

fn csv_rows(out: &mut String, rec: &stickyheat_core::PathRecord) {
    for (t, state) in rec.times.iter().zip(&rec.states) {
        for (k, x) in state.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", rec.path, t, k + 1, x);
        }
    }
}

/// Runs the scenario on the current rayon pool and writes its artifacts.
/// Overflowed paths are reported in the summary, not treated as errors here.
pub fn run(config: &ScenarioConfig, opts: &RunOptions) -> anyhow::Result<RunSummary> {
    let report = config.validate();
    if !report.is_ok() {
        bail!("invalid config:\n  {}", report.errors.join("\n  "));
    }
    let run = LatticeRun::new(config)?;
    let plan = DiagnosticsPlan::standard(&run)?;
    let want_paths = config.outputs.contains(&OutputKind::Paths);
    let want_diag = config.outputs.contains(&OutputKind::Diag);
    let want_plot = config.outputs.contains(&OutputKind::Plot);

    let results = simulate_map(config, |rec| {
        let mut rows = String::new();
        if want_paths {
            csv_rows(&mut rows, &rec);
        }
        let summary = PathSummary::compute(&rec, &plan)?;
        Ok((rows, summary, rec.times))
    })?;
    let times = results.first().map(|r| r.2.clone()).unwrap_or_default();

    fs::create_dir_all(&opts.out_dir).with_context(|| format!("creating {}", opts.out_dir.display()))?;
    let name = &config.name;
    let file = |suffix: &str| opts.out_dir.join(format!("{name}.{suffix}"));
    let mut files = Vec::new();
    let mut write = |suffix: &str, body: &[u8]| -> anyhow::Result<()> {
        let p = file(suffix);
        fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        files.push(p.file_name().unwrap().to_string_lossy().into_owned());
        Ok(())
    };

    let summaries: Vec<PathSummary> = results.iter().map(|r| r.1.clone()).collect();
    let hash = config.hash();
    if want_paths {
        let mut csv = String::from("path,t,k,x\n");
        for r in &results {
            csv.push_str(&r.0);
        }
        write("paths.csv", csv.as_bytes())?;
    }
    let diag = DiagnosticsReport::assemble(&hash, config.master_seed, &times, &plan, &summaries)?;
    if want_diag {
        write("diag.json", serde_json::to_string_pretty(&diag)?.as_bytes())?;
        let mut z = String::from("phi,t,z\n");
        for m in &diag.martingale {
            for (t, v) in m.times.iter().zip(&m.z_scores) {
                let _ = writeln!(z, "\"{}\",{},{}", m.phi, t, v);
            }
        }
        write("zscores.csv", z.as_bytes())?;
    }
    if want_paths || want_diag {
        let log = ClampLog {
            config_hash: &hash,
            clamped_mass: summaries.iter().map(|s| s.clamped_mass).collect(),
            aborted: summaries.iter().filter_map(|s| s.aborted_at.map(|a| (s.path, a))).collect(),
        };
        write("clamp.json", serde_json::to_string_pretty(&log)?.as_bytes())?;
    }
    if want_plot {
        write("plot.gp", plot_script(config, &times).as_bytes())?;
    }
    if let Some(p) = opts.dump_increments {
        let mut csv = String::from("path,step,k,dw\n");
        for step in 0..config.steps() {
            for (k, v) in run.increments(p, step).iter().enumerate() {
                let _ = writeln!(csv, "{p},{step},{},{v}", k + 1);
            }
        }
        write("increments.csv", csv.as_bytes())?;
    }

    let summary = RunSummary {
        name: name.clone(),
        config_hash: hash,
        master_seed: config.master_seed,
        paths: config.ensemble,
        steps: config.steps(),
        recorded_times: times.len(),
        aborted_paths: diag.aborted_paths.clone(),
        clamped_mass_mean: diag.clamped_mass_mean,
        warnings: report.warnings,
        files: {
            let mut f = files.clone();
            f.push(format!("{name}.summary.json"));
            f
        },
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let p = file("summary.json");
    fs::write(&p, serde_json::to_string_pretty(&summary)?).with_context(|| format!("writing {}", p.display()))?;
    Ok(summary)
}

fn plot_script(config: &ScenarioConfig, times: &[f64]) -> String {
    let name = &config.name;
    let picks: Vec<f64> = if times.is_empty() {
        Vec::new()
    } else {
        let last = times.len() - 1;
        [0, last / 4, last / 2, last].iter().map(|&i| times[i]).collect()
    };
    let mut s = String::new();
    let _ = writeln!(s, "# field snapshots of path 0 and martingale Z-scores for `{name}`");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 1000,400");
    let _ = writeln!(s, "set output '{name}.png'");
    let _ = writeln!(s, "set multiplot layout 1,2");
    let _ = writeln!(s, "set xlabel 'u'; set ylabel 'x'; set key top right");
    let n = config.n as f64;
    let plots: Vec<String> = picks
        .iter()
        .map(|t| {
            format!(
                "'{name}.paths.csv' every ::1 using (($1==0 && abs($2-{t})<1e-12) ? ($3-0.5)/{n} : 1/0):4 with linespoints title 't={t}'"
            )
        })
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    let _ = writeln!(s, "set xlabel 't'; set ylabel 'Z'");
    let _ = writeln!(s, "plot '{name}.zscores.csv' every ::1 using 2:3 with points pt 7 ps 0.4 title 'Z(t)', 3 lt 0 notitle, -3 lt 0 notitle");
    let _ = writeln!(s, "unset multiplot");
    s
}

/// Reads and parses a scenario file.
pub fn load_config(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScenarioConfig::from_json(&text)?)
}
