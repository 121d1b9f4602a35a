//! Ensemble driver: loops a lattice stepper over the time grid for every
//! path of a scenario.

use rayon::prelude::*;

use super::{Bookkeeping, PathRecord, SchemeKind, SystemStepper, OVERFLOW_LIMIT};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::lattice::LatticeState;
use crate::noise::{NoiseFactor, SeedPolicy};
use crate::spectral::{discretize_lambda, GridFunction};

/// All paths of one scenario, in path order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub paths: Vec<PathRecord>,
}

impl Ensemble {
    /// Indices of paths stopped by the overflow guard.
    pub fn aborted(&self) -> Vec<u64> {
        self.paths.iter().filter(|p| p.aborted_at.is_some()).map(|p| p.path).collect()
    }
}

/// Everything derived once from a scenario before paths are run.
#[derive(Debug, Clone)]
pub struct LatticeRun {
    config: ScenarioConfig,
    lambda: GridFunction,
    g: GridFunction,
    factor: NoiseFactor,
    scale: f64,
    seeds: SeedPolicy,
}

impl LatticeRun {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validated()?;
        let n = config.n;
        Ok(Self {
            lambda: discretize_lambda(&config.spec, &config.lambda, n)?,
            g: config.initial_state(),
            factor: NoiseFactor::build(&config.spec, n, config.noise_backend)?,
            scale: (n as f64).sqrt(),
            seeds: config.seeds(),
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// `λⁿ` as used by the stepper.
    pub fn lambda(&self) -> &GridFunction {
        &self.lambda
    }

    /// `gⁿ`, the initial state.
    pub fn initial(&self) -> &GridFunction {
        &self.g
    }

    pub fn factor(&self) -> &NoiseFactor {
        &self.factor
    }

    /// The increments `√n·Δw_k` applied at `(path, step)`.
    pub fn increments(&self, path: u64, step: u64) -> Vec<f64> {
        let mut prng = self.seeds.path_rng(path);
        let mut xi = vec![0.0; self.factor.rank_dim()];
        let mut out = vec![0.0; self.config.n];
        self.fill_increments(prng.at_step(step), &mut xi, &mut out);
        out
    }

    fn fill_increments(&self, rng: &mut rand_chacha::ChaCha8Rng, xi: &mut [f64], out: &mut [f64]) {
        self.factor.sample_into(rng, self.config.dt, xi, out);
        for v in out.iter_mut() {
            *v *= self.scale;
        }
    }

    pub fn run_path(&self, path: u64) -> Result<PathRecord> {
        let cfg = &self.config;
        let n = cfg.n;
        let regularized = cfg.scheme == SchemeKind::Regularized;
        let mut stepper = SystemStepper::new(cfg.boundary, &self.lambda, &cfg.drift, &cfg.scheme_params(), regularized)?;
        let steps = cfg.steps();
        let every = cfg.record_every.max(1);
        let cap = (steps / every + 2) as usize;
        let mut times = Vec::with_capacity(cap);
        let mut states = Vec::with_capacity(cap);
        let mut book = cfg.bookkeeping.then(Bookkeeping::default);
        let (mut a, mut eta) = (vec![0.0; n], vec![0.0; n]);
        let mut state = LatticeState::new(cfg.boundary, self.g.values.clone());
        let mut prng = self.seeds.path_rng(path);
        let mut xi = vec![0.0; self.factor.rank_dim()];
        let mut dw = vec![0.0; n];
        let mut clamped = 0.0;
        let mut aborted_at = None;

        times.push(0.0);
        states.push(state.x.clone());
        if let Some(b) = book.as_mut() {
            b.drift.push(a.clone());
            b.noise.push(eta.clone());
        }
        for step in 0..steps {
            self.fill_increments(prng.at_step(step), &mut xi, &mut dw);
            let acc = if book.is_some() { Some((a.as_mut_slice(), eta.as_mut_slice())) } else { None };
            clamped += stepper.step(&mut state, &dw, acc)?;
            if state.x.iter().any(|v| !(v.abs() <= OVERFLOW_LIMIT)) {
                log::warn!("path {path} overflowed at step {step}");
                aborted_at = Some(step);
                break;
            }
            if (step + 1) % every == 0 || step + 1 == steps {
                times.push((step + 1) as f64 * cfg.dt);
                states.push(state.x.clone());
                if let Some(b) = book.as_mut() {
                    b.drift.push(a.clone());
                    b.noise.push(eta.clone());
                }
            }
        }
        Ok(PathRecord {
            path,
            master_seed: cfg.master_seed,
            scheme: cfg.scheme,
            times,
            states,
            bookkeeping: book,
            clamped_mass: clamped,
            aborted_at,
        })
    }
}

/// Runs every path of the scenario on the current rayon pool. Results do not
/// depend on the number of worker threads.
pub fn simulate(config: &ScenarioConfig) -> Result<Ensemble> {
    let paths = simulate_map(config, Ok)?;
    Ok(Ensemble { paths })
}

/// Runs every path and reduces it immediately with `f`, so whole ensembles
/// never have to be held in memory.
pub fn simulate_map<T, F>(config: &ScenarioConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(PathRecord) -> Result<T> + Sync,
{
    let run = LatticeRun::new(config)?;
    (0..config.ensemble).into_par_iter().map(|p| run.run_path(p).and_then(&f)).collect()
}

pub fn simulate_path(config: &ScenarioConfig, path: u64) -> Result<PathRecord> {
    if path >= config.ensemble {
        return Err(Error::param("path", format!("index {path} outside ensemble of {}", config.ensemble)));
    }
    LatticeRun::new(config)?.run_path(path)
}
