//! The scalar sticky-reflected Brownian motion
//! `dx = λ𝟙{x=0}dt + 𝟙{x>0}σ dw`, its steppers and an independent
//! construction by time change of reflected Brownian motion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{kappa_eps, Bookkeeping, PathRecord, SchemeKind, SchemeParams, OVERFLOW_LIMIT};
use crate::error::{Error, Result};
use crate::noise::{PathRng, SeedPolicy};

/// Observed value of a hard-scheme latent coordinate.
#[inline]
pub fn observed(latent: f64) -> f64 {
    latent.max(0.0)
}

/// One hard step on the latent coordinate (see the module docs of
/// [`crate::dynamics`]): drift only at zero, noise only away from zero, and an
/// overshoot below zero is kept as a deficit instead of being projected away.
#[inline]
pub fn step_srbm_hard(x: f64, lambda: f64, sigma: f64, dw: f64, params: &SchemeParams) -> f64 {
    let at_zero = x <= params.indicator_threshold;
    let drift = if at_zero { lambda } else { 0.0 };
    let gate = if at_zero { 0.0 } else { 1.0 };
    x + drift * params.dt + gate * (sigma * dw)
}

/// `x' = x + λ(1 − κ_ε(x)²)dt + κ_ε(x)σ dw`, projected onto `[0, ∞)` when
/// `clamp_negatives` is set.
#[inline]
pub fn step_srbm_regularized(x: f64, lambda: f64, sigma: f64, dw: f64, params: &SchemeParams) -> f64 {
    let k = kappa_eps(x, params.epsilon);
    let next = x + lambda * (1.0 - k * k) * params.dt + k * (sigma * dw);
    if params.clamp_negatives {
        next.max(0.0)
    } else {
        next
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrbmScenario {
    pub lambda: f64,
    pub sigma: f64,
    pub x0: f64,
    pub t_end: f64,
    pub scheme: SchemeKind,
    pub params: SchemeParams,
    pub record_every: u64,
    /// Record the running drift and noise integrals.
    pub bookkeeping: bool,
}

impl SrbmScenario {
    pub fn new(lambda: f64, sigma: f64, x0: f64, t_end: f64, dt: f64, scheme: SchemeKind) -> Self {
        Self {
            lambda,
            sigma,
            x0,
            t_end,
            scheme,
            params: SchemeParams::with_dt(dt),
            record_every: 1,
            bookkeeping: false,
        }
    }
}

pub(crate) fn step_count(t_end: f64, dt: f64) -> Result<u64> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(Error::param("t_end", "horizon and time step must be positive"));
    }
    let steps = (t_end / dt).round();
    if ((steps * dt - t_end) / t_end).abs() > 1e-9 || steps < 1.0 {
        return Err(Error::param("dt", format!("horizon {t_end} is not an integer multiple of dt = {dt}")));
    }
    Ok(steps as u64)
}

/// One path of the scalar sticky Brownian motion with the chosen scheme.
pub fn simulate_srbm(scn: &SrbmScenario, seeds: &SeedPolicy, path: u64) -> Result<PathRecord> {
    if scn.scheme == SchemeKind::TimeChange {
        return srbm_time_change_oracle_with(
            scn.lambda,
            scn.sigma,
            scn.x0,
            scn.t_end,
            scn.params.dt,
            seeds,
            path,
            LocalTimeMethod::Bridge,
        );
    }
    if scn.x0 < 0.0 {
        return Err(Error::param("x0", "initial value must be non-negative"));
    }
    let regularized = scn.scheme == SchemeKind::Regularized;
    scn.params.check(1, regularized)?;
    let steps = step_count(scn.t_end, scn.params.dt)?;
    let every = scn.record_every.max(1);
    let dt = scn.params.dt;
    let sdt = dt.sqrt();
    let cap = (steps / every + 2) as usize;
    let mut times = Vec::with_capacity(cap);
    let mut states = Vec::with_capacity(cap);
    let mut book = scn.bookkeeping.then(Bookkeeping::default);
    let (mut drift_acc, mut noise_acc) = (0.0, 0.0);
    let mut clamped = 0.0;
    let mut aborted_at = None;

    let mut x = scn.x0;
    times.push(0.0);
    states.push(vec![x]);
    if let Some(b) = book.as_mut() {
        b.drift.push(vec![0.0]);
        b.noise.push(vec![0.0]);
    }
    let mut prng = seeds.path_rng(path);
    for step in 0..steps {
        let dw = sdt * PathRng::normal(prng.at_step(step));
        let (gate, drift_gate) = if regularized {
            let k = kappa_eps(x, scn.params.epsilon);
            (k, 1.0 - k * k)
        } else if x <= scn.params.indicator_threshold {
            (0.0, 1.0)
        } else {
            (1.0, 0.0)
        };
        drift_acc += scn.lambda * drift_gate * dt;
        noise_acc += gate * scn.sigma * dw;
        x = if regularized {
            let raw = step_srbm_regularized(x, scn.lambda, scn.sigma, dw, &SchemeParams { clamp_negatives: false, ..scn.params });
            if scn.params.clamp_negatives && raw < 0.0 {
                clamped -= raw;
                0.0
            } else {
                raw
            }
        } else {
            step_srbm_hard(x, scn.lambda, scn.sigma, dw, &scn.params)
        };
        if x.abs() > OVERFLOW_LIMIT {
            aborted_at = Some(step);
            break;
        }
        if (step + 1) % every == 0 || step + 1 == steps {
            times.push((step + 1) as f64 * dt);
            states.push(vec![if regularized { x } else { observed(x) }]);
            if let Some(b) = book.as_mut() {
                b.drift.push(vec![drift_acc]);
                b.noise.push(vec![noise_acc]);
            }
        }
    }
    Ok(PathRecord {
        path,
        master_seed: seeds.master_seed,
        scheme: scn.scheme,
        times,
        states,
        bookkeeping: book,
        clamped_mass: clamped,
        aborted_at,
    })
}

/// How the time-change oracle measures the local time of the reflected
/// Brownian motion at zero (normalised so that `r = r₀ + β + L`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LocalTimeMethod {
    /// Exact conditional sampling of the local time of the Brownian bridge
    /// between consecutive grid points.
    Bridge,
    /// `(1/2ε)·Leb{r < ε}`.
    Occupation { eps: f64 },
    /// `ε` times the number of completed downcrossings from `ε` to `0`.
    /// Zero is only seen when the grid path changes sign, so touches between
    /// grid points are missed at a rate of order `√dt/ε`; take `ε ≫ √dt`.
    Downcrossing { eps: f64 },
}

pub const BRIDGE_LOCAL_TIME: LocalTimeMethod = LocalTimeMethod::Bridge;

impl LocalTimeMethod {
    /// `ε = 4√dt`, the default width for the grid estimators.
    pub fn occupation_default(dt: f64) -> Self {
        LocalTimeMethod::Occupation { eps: 4.0 * dt.sqrt() }
    }
}

/// Local time at zero accrued by a Brownian bridge from `a` to `b` over time
/// `h`, sampled by inversion: `P(L ≥ l) = exp(−((|a|+|b|+l)² − (b−a)²) / 2h)`.
#[inline]
fn bridge_local_time(a: f64, b: f64, h: f64, u: f64) -> f64 {
    let tail = -2.0 * h * u.ln();
    let same_side = a * b > 0.0;
    if same_side && tail <= 4.0 * a.abs() * b.abs() {
        return 0.0;
    }
    (((b - a) * (b - a) + tail).sqrt() - a.abs() - b.abs()).max(0.0)
}

/// The sticky Brownian motion built as `x(t) = σ r(A⁻¹(t))`, where `r` is a
/// reflected Brownian motion started at `x₀/σ`, `L` its local time at zero
/// and `A(s) = s + (σ/λ) L(s)`.
///
/// The constant follows from matching the push of the reflection, `σ L`, with
/// the sticky drift `λ · Leb{x = 0} = λ (σ/λ) L`.
pub fn srbm_time_change_oracle(
    lambda: f64,
    sigma: f64,
    x0: f64,
    t_end: f64,
    dt: f64,
    seeds: &SeedPolicy,
    path: u64,
) -> Result<PathRecord> {
    srbm_time_change_oracle_with(lambda, sigma, x0, t_end, dt, seeds, path, LocalTimeMethod::Bridge)
}

#[allow(clippy::too_many_arguments)]
pub fn srbm_time_change_oracle_with(
    lambda: f64,
    sigma: f64,
    x0: f64,
    t_end: f64,
    dt: f64,
    seeds: &SeedPolicy,
    path: u64,
    method: LocalTimeMethod,
) -> Result<PathRecord> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "time change needs lambda > 0"));
    }
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "time change needs sigma > 0"));
    }
    if x0 < 0.0 {
        return Err(Error::param("x0", "initial value must be non-negative"));
    }
    let steps = step_count(t_end, dt)?;
    let c = sigma / lambda;
    let sdt = dt.sqrt();
    let half = 0.5 * dt;
    let mut out = Vec::with_capacity(steps as usize + 1);

    let mut y = x0 / sigma;
    let mut armed = y.abs() >= downcross_eps(method);
    let mut a_time = 0.0;
    let mut next = 0u64;
    let mut prng = seeds.path_rng(path);
    let mut j = 0u64;
    while next <= steps {
        let rng = prng.at_step(j);
        let y_new = y + sdt * PathRng::normal(rng);
        let u: f64 = 1.0 - rng.random::<f64>();
        let (r, r_new) = (y.abs(), y_new.abs());
        let (dl, dip) = match method {
            LocalTimeMethod::Bridge => (bridge_local_time(y, y_new, dt, u), true),
            LocalTimeMethod::Occupation { eps } => (if r < eps { dt / (2.0 * eps) } else { 0.0 }, false),
            LocalTimeMethod::Downcrossing { eps } => {
                let crossed = y == 0.0 || y * y_new <= 0.0;
                let dl = if armed && crossed { eps } else { 0.0 };
                if crossed {
                    armed = false;
                }
                if r_new >= eps {
                    armed = true;
                }
                (dl, true)
            }
        };
        let sticky = c * dl;
        let seg_end = a_time + dt + sticky;
        while next <= steps && (next as f64 * dt) < seg_end {
            let tau = next as f64 * dt - a_time;
            let v = if sticky == 0.0 {
                r + (r_new - r) * tau / dt
            } else if dip {
                if tau < half {
                    r * (1.0 - tau / half)
                } else if tau < half + sticky {
                    0.0
                } else {
                    r_new * (tau - half - sticky) / half
                }
            } else if tau < sticky {
                r
            } else {
                r + (r_new - r) * (tau - sticky) / dt
            };
            out.push(vec![sigma * v]);
            next += 1;
        }
        y = y_new;
        a_time = seg_end;
        j += 1;
    }
    Ok(PathRecord {
        path,
        master_seed: seeds.master_seed,
        scheme: SchemeKind::TimeChange,
        times: (0..=steps).map(|i| i as f64 * dt).collect(),
        states: out,
        bookkeeping: None,
        clamped_mass: 0.0,
        aborted_at: None,
    })
}

fn downcross_eps(method: LocalTimeMethod) -> f64 {
    match method {
        LocalTimeMethod::Downcrossing { eps } => eps,
        _ => f64::INFINITY,
    }
}

/// `(1/2ε)·Leb{r < ε}` for a reflected series on a uniform grid.
pub fn local_time_occupation(reflected: &[f64], dt: f64, eps: f64) -> f64 {
    let n = reflected.len().saturating_sub(1);
    reflected[..n].iter().filter(|&&r| r < eps).count() as f64 * dt / (2.0 * eps)
}

/// `ε × #{downcrossings of [0, ε]}` for a signed Brownian series `y`
/// (reflected series `|y|`); a crossing of zero counts as reaching zero.
pub fn local_time_downcrossings(signed: &[f64], eps: f64) -> f64 {
    let Some(&first) = signed.first() else { return 0.0 };
    let mut armed = first.abs() >= eps;
    let mut count = 0u64;
    for w in signed.windows(2) {
        let crossed = w[0] == 0.0 || w[0] * w[1] <= 0.0;
        if crossed {
            if armed {
                count += 1;
            }
            armed = false;
        }
        if w[1].abs() >= eps {
            armed = true;
        }
    }
    eps * count as f64
}
