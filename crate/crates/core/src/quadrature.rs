//! Clenshaw-Curtis quadrature on `[0, 1]`.
//!
//! All spatial integrals in the crate (orthonormality checks, basis-change
//! entries, energy densities, Galerkin matrices) run through the shared
//! 257-point rule: it integrates polynomials up to degree 256 exactly, which
//! puts products of the retained mode shapes (wavenumbers up to ~77, so
//! roughly degree 150 in Chebyshev terms) at machine precision.

use std::sync::OnceLock;

/// Node/weight table for the (n+1)-point Clenshaw-Curtis rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ClenshawCurtis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ClenshawCurtis {
    /// Build the rule with `n + 1` nodes; `n` must be even and >= 2.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n % 2 == 0, "Clenshaw-Curtis order must be even");
        let nf = n as f64;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut weights = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let theta = std::f64::consts::PI * j as f64 / nf;
            // Ascending nodes on [0, 1].
            nodes.push(0.5 * (1.0 - theta.cos()));
            let mut sum = 0.0;
            let mut k = 0usize;
            while k <= n {
                let ck = if k == 0 || k == n { 0.5 } else { 1.0 };
                sum += ck * 2.0 / (1.0 - (k * k) as f64) * (k as f64 * theta).cos();
                k += 2;
            }
            let cj = if j == 0 || j == n { 0.5 } else { 1.0 };
            // Halved relative to [-1, 1] to account for the interval map.
            weights.push(cj * sum / nf);
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate a function over `[0, 1]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Integrate from samples taken at [`Self::nodes`].
    pub fn integrate_samples(&self, samples: &[f64]) -> f64 {
        assert_eq!(samples.len(), self.nodes.len());
        samples.iter().zip(&self.weights).map(|(&s, &w)| w * s).sum()
    }
}

/// The shared 257-point rule.
pub fn default_rule() -> &'static ClenshawCurtis {
    static RULE: OnceLock<ClenshawCurtis> = OnceLock::new();
    RULE.get_or_init(|| ClenshawCurtis::new(256))
}
