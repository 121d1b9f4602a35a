//! Correlated Wiener increments `(Δw_1, …, Δw_n)` with covariance `qⁿ Δt`.
//!
//! Two factorisations of `qⁿ` are available and are expected to agree in
//! distribution: the spectral one reads `qⁿ = B Bᵀ` straight off the
//! eigenpairs, the generic one takes a symmetric square root of any
//! covariance matrix.
//!
//! Randomness is counter-based: the draws for `(path, step)` come from a
//! ChaCha stream selected by the path index, positioned at a word offset
//! determined by the step index. Regenerating any part of any path therefore
//! never depends on what else was generated or in which order.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{q_matrix, EigenSpec};

/// Words of keystream reserved for a single step of a single path.
const WORDS_PER_STEP_LOG2: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseBackend {
    Spectral,
    Factor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// An independent policy for a separate purpose (oracles, calibration
    /// runs) that must not share streams with this one.
    pub fn derive(&self, label: u64) -> Self {
        let mut z = self.master_seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self { master_seed: z ^ (z >> 31) }
    }

    /// Generator for one path; position it with [`PathRng::at_step`].
    pub fn path_rng(&self, path: u64) -> PathRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(path);
        PathRng { rng, step: 0 }
    }
}

pub struct PathRng {
    rng: ChaCha8Rng,
    step: u64,
}

impl PathRng {
    /// Positions the stream at the start of the block reserved for `step`.
    pub fn at_step(&mut self, step: u64) -> &mut ChaCha8Rng {
        self.step = step;
        self.rng.set_word_pos((step as u128) << WORDS_PER_STEP_LOG2);
        &mut self.rng
    }

    /// Words consumed since the last [`PathRng::at_step`].
    pub fn words_used(&self) -> u128 {
        self.rng.get_word_pos() - ((self.step as u128) << WORDS_PER_STEP_LOG2)
    }

    pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }
}

/// `F` with `F Fᵀ = qⁿ`, stored row-major as `n × cols`.
#[derive(Debug, Clone)]
pub struct NoiseFactor {
    n: usize,
    cols: usize,
    backend: NoiseBackend,
    data: Vec<f64>,
}

impl NoiseFactor {
    pub fn build(spec: &EigenSpec, n: usize, backend: NoiseBackend) -> Result<Self> {
        match backend {
            NoiseBackend::Spectral => {
                let c = spec.cell_inner_products(n)?;
                let cols = spec.len();
                let sn = (n as f64).sqrt();
                let mut data = vec![0.0; n * cols];
                for (j, (p, row)) in spec.pairs.iter().zip(&c).enumerate() {
                    for k in 0..n {
                        data[k * cols + j] = sn * p.mu * row[k];
                    }
                }
                Ok(Self { n, cols, backend, data })
            }
            NoiseBackend::Factor => Self::from_covariance(&q_matrix(spec, n)?),
        }
    }

    /// Symmetric square root of an externally supplied covariance rate.
    /// Eigenvalues in `[−1e-8‖q‖, 0)` are clipped to zero.
    pub fn from_covariance(q: &DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        if n == 0 {
            return Err(Error::ZeroCells);
        }
        if q.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: q.ncols() });
        }
        let norm = q.amax();
        let eig = SymmetricEigen::new(q.clone());
        let tolerance = 1e-8 * norm;
        let min = eig.eigenvalues.min();
        if min < -tolerance {
            return Err(Error::NotCovariance { min_eigenvalue: min, tolerance });
        }
        let clipped: f64 = eig.eigenvalues.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
        if clipped > 1e-8 * q.trace() {
            log::warn!("covariance repair clipped eigenvalue mass {clipped:e}");
        }
        let mut data = vec![0.0; n * n];
        for m in 0..n {
            let s = eig.eigenvalues[m].max(0.0).sqrt();
            if s == 0.0 {
                continue;
            }
            for k in 0..n {
                data[k * n + m] = eig.eigenvectors[(k, m)] * s;
            }
        }
        Ok(Self { n, cols: n, backend: NoiseBackend::Factor, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of independent normals consumed per increment.
    pub fn rank_dim(&self) -> usize {
        self.cols
    }

    pub fn backend(&self) -> NoiseBackend {
        self.backend
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.cols, &self.data)
    }

    /// `F Fᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let f = self.matrix();
        &f * f.transpose()
    }

    /// Writes `F ξ √dt` into `out`; `xi` is scratch of length [`Self::rank_dim`].
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, dt: f64, xi: &mut [f64], out: &mut [f64]) {
        let sdt = dt.sqrt();
        for v in xi.iter_mut() {
            *v = PathRng::normal(rng);
        }
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.data[k * self.cols..(k + 1) * self.cols];
            *o = row.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>() * sdt;
        }
    }
}

pub fn build_noise_factor(spec: &EigenSpec, n: usize, backend: NoiseBackend) -> Result<NoiseFactor> {
    NoiseFactor::build(spec, n, backend)
}

/// One increment vector for `(path, step)`.
pub fn sample_increments(factor: &NoiseFactor, seeds: &SeedPolicy, path: u64, step: u64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "time step must be positive"));
    }
    let mut prng = seeds.path_rng(path);
    let mut xi = vec![0.0; factor.rank_dim()];
    let mut out = vec![0.0; factor.n()];
    factor.sample_into(prng.at_step(step), dt, &mut xi, &mut out);
    debug_assert!(prng.words_used() < 1 << WORDS_PER_STEP_LOG2);
    Ok(out)
}
