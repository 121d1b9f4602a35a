//! The smooth ramp `κ_ε` and the drift mollifier `f_ε`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gl32;

/// `κ(s) = 3s² − 2s³` on `[0,1]`, 0 below, 1 above; `κ_ε(x) = κ(x/ε)`.
#[inline]
pub fn kappa_eps(x: f64, epsilon: f64) -> f64 {
    let s = x / epsilon;
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * (3.0 - 2.0 * s)
    }
}

/// Mollifier kernel `θ(z) = (15/16)(1 − z²)²` on `[−1, 1]`.
#[inline]
pub fn theta(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        let w = 1.0 - z * z;
        15.0 / 16.0 * w * w
    }
}

// ∫_{-1}^{s} θ and ∫_{-1}^{s} z θ for s ∈ [−1, 1]
fn theta_moments(s: f64) -> (f64, f64) {
    let s2 = s * s;
    let m0 = 15.0 / 16.0 * (s - 2.0 * s * s2 / 3.0 + s2 * s2 * s / 5.0 + 8.0 / 15.0);
    let m1 = 15.0 / 16.0 * (s2 / 2.0 - s2 * s2 / 2.0 + s2 * s2 * s2 / 6.0 - 1.0 / 6.0);
    (m0, m1)
}

/// The nonlinearity `f` of the equation. Every variant satisfies `f(0) = 0`,
/// `f ≥ 0` on `[0, ∞)` and a linear growth bound (see [`DriftSpec::growth_bound`]).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DriftSpec {
    #[default]
    Zero,
    /// `c·x`
    Linear { c: f64 },
    /// `c·min(x, k)`
    SaturatedLinear { c: f64, k: f64 },
    /// Piecewise linear through `(x_i, f_i)`, constant beyond the last node.
    /// The first node must be `x = 0`.
    Tabulated { x: Vec<f64>, f: Vec<f64> },
}

impl DriftSpec {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Linear { c } => c * x,
            DriftSpec::SaturatedLinear { c, k } => c * x.min(*k),
            DriftSpec::Tabulated { x: xs, f } => {
                if x >= xs[xs.len() - 1] {
                    return f[f.len() - 1];
                }
                let i = xs.partition_point(|&p| p <= x).saturating_sub(1);
                let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
                f[i] * (1.0 - w) + f[i + 1] * w
            }
        }
    }

    /// `(A, B)` with `f(x) ≤ A + B x` on `[0, ∞)`.
    pub fn growth_bound(&self) -> (f64, f64) {
        match self {
            DriftSpec::Zero => (0.0, 0.0),
            DriftSpec::Linear { c } => (0.0, c.abs()),
            DriftSpec::SaturatedLinear { c, .. } => (0.0, c.abs()),
            DriftSpec::Tabulated { f, .. } => (f.iter().cloned().fold(0.0, f64::max), 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DriftSpec::Zero => Ok(()),
            DriftSpec::Linear { c } | DriftSpec::SaturatedLinear { c, .. } if *c < 0.0 || !c.is_finite() => {
                Err(Error::param("drift", "slope must be finite and non-negative"))
            }
            DriftSpec::SaturatedLinear { k, .. } if !(*k > 0.0) => {
                Err(Error::param("drift", "saturation level must be positive"))
            }
            DriftSpec::Tabulated { x, f } => {
                if x.len() < 2 || x.len() != f.len() {
                    return Err(Error::param("drift", "tabulated drift needs matching node and value lists of length >= 2"));
                }
                if x[0] != 0.0 || x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::param("drift", "nodes must start at 0 and increase strictly"));
                }
                if f[0].abs() > 1e-14 {
                    return Err(Error::param("drift", "f(0) must vanish"));
                }
                if f.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                    return Err(Error::param("drift", "f must be non-negative"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// `f_ε(x) = ∫₀^∞ θ_ε(x − y) f(y) dy` by 32-point Gauss–Legendre on
/// `[max(0, x−ε), x+ε]`.
pub fn mollify_drift_quadrature(drift: &DriftSpec, epsilon: f64, x: f64) -> f64 {
    let lo = (x - epsilon).max(0.0);
    let hi = x + epsilon;
    if hi <= 0.0 {
        return 0.0;
    }
    gl32().integrate(lo, hi, |y| theta((x - y) / epsilon) / epsilon * drift.eval(y))
}

/// [`mollify_drift_quadrature`] with closed forms where the integrand is a
/// polynomial (zero drift, and linear drift away from a saturation kink).
pub fn mollify_drift(drift: &DriftSpec, epsilon: f64, x: f64) -> f64 {
    let linear = match drift {
        DriftSpec::Zero => return 0.0,
        DriftSpec::Linear { c } => Some(*c),
        DriftSpec::SaturatedLinear { c, k } if x + epsilon <= *k => Some(*c),
        _ => None,
    };
    match linear {
        Some(c) => {
            if x >= epsilon {
                c * x
            } else if x <= -epsilon {
                0.0
            } else {
                let (m0, m1) = theta_moments(x / epsilon);
                c * (x * m0 - epsilon * m1)
            }
        }
        None => mollify_drift_quadrature(drift, epsilon, x),
    }
}
