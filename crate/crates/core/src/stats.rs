//! Small statistical helpers: compensated sums, sample moments, the
//! two-sample Kolmogorov–Smirnov test and pointwise ensemble Z-scores.

use crate::error::{Error, Result};

/// Kahan–Babuška compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut k = KahanSum::default();
    for v in values {
        k.add(v);
    }
    k.value()
}

/// Sample mean, unbiased standard deviation and standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        let m = values.len() as f64;
        let mean = sum(values.iter().copied()) / m;
        let sd = if values.len() > 1 {
            (sum(values.iter().map(|v| (v - mean) * (v - mean))) / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self { count: values.len(), mean, sd, se: sd / m.sqrt() })
    }

    /// Two-sided 99% normal confidence interval.
    pub fn ci99(&self) -> (f64, f64) {
        (self.mean - 2.5758 * self.se, self.mean + 2.5758 * self.se)
    }
}

/// `Q_KS(λ) = 2 Σ (−1)^{j−1} e^{−2j²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-λ form of the same series, which converges much faster there
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let s: f64 = [1.0, 9.0, 25.0, 49.0].iter().map(|k| y.powf(*k)).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut total = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        total += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov statistic `D` and its asymptotic p-value
/// (with the usual small-sample correction of the argument).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    if d == 0.0 {
        return Ok((0.0, 1.0));
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let p = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
    Ok((d, p))
}

/// Minimum ensemble size accepted by [`ensemble_ztest`].
pub const ZTEST_MIN_PATHS: usize = 30;

/// `Z(t) = mean / (sd/√P)` across paths, for each time index. Input is
/// indexed `[path][time]`. Columns with zero spread give `Z = 0` when the
/// mean is zero and `±∞` otherwise.
pub fn ensemble_ztest(increments: &[Vec<f64>]) -> Result<Vec<f64>> {
    if increments.len() < ZTEST_MIN_PATHS {
        return Err(Error::TooFewPaths { need: ZTEST_MIN_PATHS, got: increments.len() });
    }
    let len = increments[0].len();
    if let Some(bad) = increments.iter().find(|r| r.len() != len) {
        return Err(Error::DimensionMismatch { expected: len, got: bad.len() });
    }
    Ok((0..len)
        .map(|t| {
            let col: Vec<f64> = increments.iter().map(|r| r[t]).collect();
            let m = Moments::of(&col).expect("non-empty");
            if m.se == 0.0 {
                if m.mean == 0.0 {
                    0.0
                } else {
                    m.mean.signum() * f64::INFINITY
                }
            } else {
                m.mean / m.se
            }
        })
        .collect())
}
