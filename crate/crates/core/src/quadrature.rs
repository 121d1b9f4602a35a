//! Gauss–Legendre rules, computed once per order by Newton iteration on the
//! Legendre recurrence.

use std::sync::OnceLock;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order.div_ceil(2);
        let nf = order as f64;
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre(order, z);
            if d != 0.0 {
                dp = d;
            }
            nodes[i] = -z;
            nodes[order - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        if b <= a {
            return 0.0;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Integrates over `[a, b]`, restarting the rule at every breakpoint that
    /// falls strictly inside the interval.
    pub fn integrate_split<F: Fn(f64) -> f64>(&self, a: f64, b: f64, breaks: &[f64], f: F) -> f64 {
        let mut acc = 0.0;
        let mut lo = a;
        for &p in breaks.iter().filter(|&&p| p > a && p < b) {
            acc += self.integrate(lo, p, &f);
            lo = p;
        }
        acc + self.integrate(lo, b, &f)
    }
}

// (P_n(z), P_n'(z))
fn legendre(order: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if order == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=order {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = order as f64;
    (p1, nf * (z * p1 - p0) / (z * z - 1.0))
}

/// Shared 64-point rule used for cell integrals.
pub fn gl64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// Shared 32-point rule used by the drift mollifier.
pub fn gl32() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(32))
}
