//! Chebyshev series on `[0, 1]`: least-squares fitting, evaluation, and
//! spectral differentiation.
//!
//! POD mode shapes exist only as samples on the spatial grid; fitting each
//! one with a degree-60 Chebyshev series gives a smooth representation whose
//! second derivatives (needed for bending energies and Galerkin stiffness
//! entries) are obtained by exact coefficient recurrences instead of finite
//! differences.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// A finite Chebyshev expansion `f(x) = sum_k c_k T_k(2x - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevSeries {
    coeffs: Vec<f64>,
}

impl ChebyshevSeries {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Evaluate by Clenshaw recurrence.
    pub fn eval(&self, x: f64) -> f64 {
        let s = 2.0 * x - 1.0;
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * s * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        s * b1 - b2 + self.coeffs[0]
    }

    /// Derivative with respect to `x` (includes the factor 2 from the map
    /// onto `[-1, 1]`).
    pub fn derivative(&self) -> Self {
        let n = self.degree();
        if n == 0 {
            return Self::from_coeffs(vec![0.0]);
        }
        let c = &self.coeffs;
        let mut d = vec![0.0; n];
        if n >= 1 {
            d[n - 1] = 2.0 * n as f64 * c[n];
        }
        for k in (1..n).rev() {
            let above = if k + 1 < n { d[k + 1] } else { 0.0 };
            d[k - 1] = above + 2.0 * k as f64 * c[k];
        }
        d[0] *= 0.5;
        for v in &mut d {
            *v *= 2.0;
        }
        Self::from_coeffs(d)
    }

    pub fn nth_derivative(&self, order: usize) -> Self {
        let mut out = self.clone();
        for _ in 0..order {
            out = out.derivative();
        }
        out
    }

    /// Drop the trailing run of coefficients smaller than `rel_tol` times the
    /// largest coefficient magnitude.
    ///
    /// Least-squares fits on uniform grids leave a low-level noise tail in the
    /// high-order coefficients; each differentiation amplifies index `k` by
    /// roughly `k^2`, so removing the tail (which carries no content above the
    /// fit's own error) is what keeps second derivatives accurate.
    pub fn chopped(&self, rel_tol: f64) -> Self {
        let cmax = self.coeffs.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let thr = rel_tol * cmax;
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() > 1 && coeffs.last().unwrap().abs() < thr {
            coeffs.pop();
        }
        Self::from_coeffs(coeffs)
    }
}

/// Chebyshev design matrix: row per sample point, column per basis degree.
pub fn design_matrix(xs: &[f64], degree: usize) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(xs.len(), degree + 1);
    for (i, &x) in xs.iter().enumerate() {
        let s = 2.0 * x - 1.0;
        let mut prev = 1.0;
        let mut cur = s;
        v[(i, 0)] = 1.0;
        if degree >= 1 {
            v[(i, 1)] = s;
        }
        for k in 2..=degree {
            let next = 2.0 * s * cur - prev;
            v[(i, k)] = next;
            prev = cur;
            cur = next;
        }
    }
    v
}

/// Precomputed least-squares operator for repeated fits on a fixed grid.
///
/// High degrees on uniform grids are poorly conditioned; one step of
/// iterative refinement recovers the accuracy lost in forming the
/// pseudo-inverse, which matters when the fitted series is differentiated.
#[derive(Debug, Clone)]
pub struct ChebyshevFitter {
    degree: usize,
    n_points: usize,
    v: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl ChebyshevFitter {
    pub fn new(xs: &[f64], degree: usize) -> Result<Self> {
        if xs.len() <= degree {
            return Err(Error::Input(format!(
                "need more than {degree} sample points for a degree-{degree} fit, got {}",
                xs.len()
            )));
        }
        let v = design_matrix(xs, degree);
        let pinv = v
            .clone()
            .pseudo_inverse(1e-13)
            .map_err(|e| Error::Input(format!("fit grid is rank-deficient: {e}")))?;
        Ok(Self {
            degree,
            n_points: xs.len(),
            v,
            pinv,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Fit one sampled function.
    pub fn fit(&self, ys: &[f64]) -> ChebyshevSeries {
        assert_eq!(ys.len(), self.n_points);
        let y = nalgebra::DVector::from_column_slice(ys);
        let mut c = &self.pinv * &y;
        let r = &y - &self.v * &c;
        c += &self.pinv * r;
        ChebyshevSeries::from_coeffs(c.as_slice().to_vec())
    }

    /// Fit every column of a sample matrix at once; returns the
    /// `(degree + 1) x n_cols` coefficient matrix.
    pub fn fit_columns(&self, samples: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(samples.nrows(), self.n_points);
        let mut c = &self.pinv * samples;
        let r = samples - &self.v * &c;
        c += &self.pinv * r;
        c
    }
}

/// Gram matrix `H_kl = \int_0^1 T_k(2x-1) T_l(2x-1) dx` up to a given degree.
///
/// With it, `\int f g dx = c_f^T H c_g` is exact for any pair of series —
/// no aliasing, regardless of the degrees involved.
pub fn gram_matrix(degree: usize) -> DMatrix<f64> {
    let even_integral = |p: usize| -> f64 {
        if p % 2 == 1 {
            0.0
        } else {
            2.0 / (1.0 - (p * p) as f64)
        }
    };
    DMatrix::from_fn(degree + 1, degree + 1, |k, l| {
        0.25 * (even_integral(k + l) + even_integral(k.abs_diff(l)))
    })
}
