//! Modal bases for the clamped beam with tip hardware.
//!
//! Two exact eigenbases are used throughout: the *spring-tip* basis (tip
//! mass `m` plus tip spring `k`, valid while the tip is inside the kicker
//! gap) and the *free-tip* basis (tip mass only, valid outside). Both come
//! from the same boundary-value problem
//!
//! ```text
//! W'''' = omega^2 W,   W(0) = W'(0) = 0,   W''(1) = 0,
//! W'''(1) = (k - m omega^2) W(1),          omega = beta^2,
//! ```
//!
//! whose characteristic equation, written overflow-free with `S = k - m
//! beta^4`, is
//!
//! ```text
//! (A - B) e^(-2 beta) + (A + B) + 2 beta^3 e^(-beta) = 0,
//! A = beta^3 cos(beta) + S sin(beta),   B = -S cos(beta).
//! ```
//!
//! Mode shapes are stored in the scaled basis `{sin(beta x), cos(beta x),
//! e^(-beta x), e^(beta (x-1))}`. The textbook `sinh`/`cosh` form loses all
//! significant digits near `beta ~ 77` (the 25th root) because the dominant
//! `e^(beta(1+x))` products cancel analytically; every factor in the scaled
//! basis is bounded by one on the beam, so evaluation stays at machine
//! precision for any retained mode.

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::quadrature;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Which tip condition the basis diagonalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisVariant {
    /// Tip mass only (`k = 0`); valid outside the kicker gap.
    FreeTip,
    /// Tip mass plus magnetic spring `k`; valid inside the gap.
    SpringTip,
}

/// Scan step for bracketing characteristic roots.
const ROOT_SCAN_STEP: f64 = 0.05;
/// Lower end of the scan; excludes the trivial root at beta = 0.
const ROOT_SCAN_START: f64 = 1e-3;
/// Bisection terminates once the bracket is this small.
const ROOT_BISECT_TOL: f64 = 1e-12;
/// Normalized characteristic residual allowed for an accepted root.
const ROOT_RESIDUAL_TOL: f64 = 1e-10;
/// Normalized boundary-condition residual allowed for a mode shape.
const BC_RESIDUAL_TOL: f64 = 1e-8;

/// Characteristic function, normalized by `max(1, beta^3, k + m beta^4)` so
/// its magnitude is O(1) across the whole scan range. The normalization is
/// positive, so roots and sign changes are those of the raw equation.
pub fn characteristic_residual(beta: f64, k: f64, m: f64) -> f64 {
    let s = k - m * beta.powi(4);
    let (sinb, cosb) = beta.sin_cos();
    let b3 = beta.powi(3);
    let a_term = b3 * cosb + s * sinb;
    let b_term = -s * cosb;
    let raw = (a_term - b_term) * (-2.0 * beta).exp()
        + (a_term + b_term)
        + 2.0 * b3 * (-beta).exp();
    let scale = 1.0_f64.max(b3).max(k + m * beta.powi(4));
    raw / scale
}

/// First `n` strictly positive roots of the characteristic equation.
pub fn characteristic_roots(k: f64, m: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let f = |beta: f64| characteristic_residual(beta, k, m);
    let mut roots = Vec::with_capacity(n);
    let mut lo = ROOT_SCAN_START;
    let mut f_lo = f(lo);
    // Roots of this family sit roughly pi apart; the cap flags a scan that
    // has clearly gone wrong instead of looping forever.
    let beta_cap = ROOT_SCAN_START + (n as f64 + 10.0) * 2.0 * std::f64::consts::PI;
    while roots.len() < n {
        let hi = lo + ROOT_SCAN_STEP;
        if hi > beta_cap {
            return Err(Error::RootSearch(format!(
                "found {} of {} roots below beta = {beta_cap:.2} (k = {k}, m = {m})",
                roots.len(),
                n
            )));
        }
        let f_hi = f(hi);
        if f_hi == 0.0 {
            roots.push(hi);
        } else if f_lo * f_hi < 0.0 {
            let root = bisect_root(&f, lo, hi, f_lo);
            let res = f(root).abs();
            if res > ROOT_RESIDUAL_TOL {
                return Err(Error::RootSearch(format!(
                    "root near beta = {root:.6} converged with residual {res:.3e}"
                )));
            }
            roots.push(root);
        }
        lo = hi;
        f_lo = f_hi;
    }
    Ok(roots)
}

fn bisect_root<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let lo_negative = f_lo < 0.0;
    for _ in 0..200 {
        if hi - lo <= ROOT_BISECT_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One normalized mode shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mode {
    pub beta: f64,
    /// Natural frequency, `omega = beta^2`.
    pub omega: f64,
    /// Coefficients `(a, b, c, d)` of the scaled-basis representation.
    scaled: [f64; 4],
    /// Tip displacement `W(1)` (nonnegative by convention).
    pub tip: f64,
}

impl Mode {
    /// Coefficients `C1..C4` of the textbook form
    /// `C1 sin + C2 cos + C3 sinh + C4 cosh`.
    pub fn classic_coefficients(&self) -> [f64; 4] {
        let [a, b, c, d] = self.scaled;
        let em = (-self.beta).exp();
        [a, b, -c + d * em, c + d * em]
    }

    /// Evaluate the shape or one of its spatial derivatives at `x`.
    pub fn eval(&self, x: f64, order: usize) -> f64 {
        let [a, b, c, d] = self.scaled;
        let bx = self.beta * x;
        let (s, co) = bx.sin_cos();
        let em = (-bx).exp();
        let ep = (self.beta * (x - 1.0)).exp();
        let (ts, tc) = match order % 4 {
            0 => (s, co),
            1 => (co, -s),
            2 => (-s, -co),
            _ => (-co, s),
        };
        let em_sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        self.beta.powi(order as i32) * (a * ts + b * tc + c * em_sign * em + d * ep)
    }
}

/// Solve boundary conditions 1-3 for the scaled coefficients at `beta`.
///
/// Rows `W(0) = W'(0) = W''(1) = 0` reduce to a 2x2 null-space problem in
/// `(c, d)` whose solution `(Q, -P)` is well conditioned for every positive
/// `beta` (one can show `Q >= 1 - sqrt(2) e^(-beta) > 0.7`).
fn raw_coefficients(beta: f64) -> [f64; 4] {
    let (sinb, cosb) = beta.sin_cos();
    let em = (-beta).exp();
    let p = cosb - sinb + em;
    let q = 1.0 + em * (sinb + cosb);
    let c = q;
    let d = -p;
    let a = c - d * em;
    let b = -c - d * em;
    [a, b, c, d]
}

/// Normalized residual of the remaining (force) boundary condition.
fn force_bc_residual(beta: f64, k: f64, m: f64, co: &[f64; 4]) -> f64 {
    let s = k - m * beta.powi(4);
    let (sinb, cosb) = beta.sin_cos();
    let em = (-beta).exp();
    let b3 = beta.powi(3);
    let row = [
        -b3 * cosb - s * sinb,
        b3 * sinb - s * cosb,
        (-b3 - s) * em,
        b3 - s,
    ];
    let dot: f64 = row.iter().zip(co).map(|(r, c)| r * c).sum();
    let row_norm: f64 = row.iter().map(|r| r * r).sum::<f64>().sqrt();
    let co_norm: f64 = co.iter().map(|c| c * c).sum::<f64>().sqrt();
    (dot / (row_norm * co_norm)).abs()
}

/// An orthonormal modal basis for one tip condition.
///
/// Shapes satisfy `\int W_i W_j dx + m W_i(1) W_j(1) = delta_ij`; with the
/// stiffness inner product they return `omega_i^2 delta_ij`.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub variant: BasisVariant,
    /// Tip stiffness seen by this basis (zero for [`BasisVariant::FreeTip`]).
    pub k_eff: f64,
    pub m: f64,
    modes: Vec<Mode>,
}

impl ModalBasis {
    pub fn build(variant: BasisVariant, params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let k_eff = match variant {
            BasisVariant::FreeTip => 0.0,
            BasisVariant::SpringTip => params.k,
        };
        let m = params.m;
        let betas = characteristic_roots(k_eff, m, params.n_modes)?;
        let rule = quadrature::default_rule();
        let mut modes = Vec::with_capacity(betas.len());
        for (index, &beta) in betas.iter().enumerate() {
            let co = raw_coefficients(beta);
            let bc_res = force_bc_residual(beta, k_eff, m, &co);
            if bc_res > BC_RESIDUAL_TOL {
                return Err(Error::Conditioning {
                    index,
                    detail: format!("force boundary condition residual {bc_res:.3e}"),
                });
            }
            let mut mode = Mode {
                beta,
                omega: beta * beta,
                scaled: co,
                tip: 0.0,
            };
            let norm2 = rule.integrate(|x| {
                let w = mode.eval(x, 0);
                w * w
            }) + m * mode.eval(1.0, 0).powi(2);
            if !(norm2.is_finite() && norm2 > 1e-16) {
                return Err(Error::Conditioning {
                    index,
                    detail: format!("degenerate shape norm {norm2:.3e}"),
                });
            }
            let mut scale = 1.0 / norm2.sqrt();
            let tip = mode.eval(1.0, 0) * scale;
            // Sign convention: nonnegative tip displacement; a tip node is
            // disambiguated by the curvature at the clamp.
            if tip < 0.0 || (tip == 0.0 && mode.eval(0.0, 2) * scale < 0.0) {
                scale = -scale;
            }
            for c in &mut mode.scaled {
                *c *= scale;
            }
            mode.tip = mode.eval(1.0, 0);
            modes.push(mode);
        }
        Ok(Self {
            variant,
            k_eff,
            m,
            modes,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &Mode {
        &self.modes[i]
    }

    pub fn betas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.beta).collect()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }

    pub fn tip_values(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.tip).collect()
    }

    /// Field value of a coefficient vector at `x`.
    pub fn field(&self, coords: &[f64], x: f64, order: usize) -> f64 {
        coords
            .iter()
            .zip(&self.modes)
            .map(|(&q, mode)| q * mode.eval(x, order))
            .sum()
    }

    /// Matrix of shape values on a grid (rows: points, columns: modes).
    pub fn sample_matrix(&self, xs: &[f64], order: usize) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), self.modes.len(), |i, j| self.modes[j].eval(xs[i], order))
    }

    /// Project a field onto the basis with the mass-weighted inner product:
    /// `coeff_j = \int f W_j dx + m f(1) W_j(1)`.
    pub fn project<F: Fn(f64) -> f64>(&self, f: F, f_tip: f64) -> Vec<f64> {
        let rule = quadrature::default_rule();
        let samples: Vec<f64> = rule.nodes().iter().map(|&x| f(x)).collect();
        self.modes
            .iter()
            .map(|mode| {
                let node_products: Vec<f64> = rule
                    .nodes()
                    .iter()
                    .zip(&samples)
                    .map(|(&x, &fx)| fx * mode.eval(x, 0))
                    .collect();
                rule.integrate_samples(&node_products) + self.m * f_tip * mode.tip
            })
            .collect()
    }
}

/// Static beam deflection under a constant tip kick, valid inside the gap:
/// `w_s(x) = sign * 3F/(3+k) * (x^2/2 - x^3/6)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticDeflection {
    /// +1 when the kick pushes toward positive `w`, -1 otherwise.
    pub sign: f64,
    /// Signed prefactor `sign * 3F/(3+k)`.
    pub amplitude: f64,
}

impl StaticDeflection {
    pub fn eval(&self, x: f64, order: usize) -> f64 {
        self.amplitude
            * match order {
                0 => x * x / 2.0 - x * x * x / 6.0,
                1 => x - x * x / 2.0,
                2 => 1.0 - x,
                3 => -1.0,
                _ => 0.0,
            }
    }

    /// Tip displacement `sign * F/(3+k)`.
    pub fn tip(&self) -> f64 {
        self.amplitude / 3.0
    }
}

/// Build the static kick deflection for the given direction (`sign` = ±1).
pub fn static_deflection(params: &SystemParams, sign: f64) -> StaticDeflection {
    debug_assert!(sign == 1.0 || sign == -1.0);
    StaticDeflection {
        sign,
        amplitude: sign * 3.0 * params.f / (3.0 + params.k),
    }
}

/// Mass-weighted cross-projection between the free-tip and spring-tip bases.
///
/// `G_ij = \int gamma_i xi_j dx + m gamma_i(1) xi_j(1)`. Both bases are
/// orthonormal under the same inner product, so the matrix serves both
/// directions: entering the gap maps free-tip coordinates `r` to `a = G^T r`,
/// leaving maps spring-tip coordinates `a` to `r = G a`.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    g: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn compute(free: &ModalBasis, spring: &ModalBasis) -> Result<Self> {
        if free.variant != BasisVariant::FreeTip || spring.variant != BasisVariant::SpringTip {
            return Err(Error::Input(
                "transition matrix expects (free-tip, spring-tip) bases in that order".into(),
            ));
        }
        if free.m != spring.m || free.len() != spring.len() {
            return Err(Error::Input(
                "transition bases disagree on tip mass or mode count".into(),
            ));
        }
        let rule = quadrature::default_rule();
        let n = free.len();
        let nodes = rule.nodes();
        // Tabulate shape values once; the quadrature pairing is then a dense
        // weighted product.
        let gamma = free.sample_matrix(nodes, 0);
        let xi = spring.sample_matrix(nodes, 0);
        let m = free.m;
        let g = DMatrix::from_fn(n, n, |i, j| {
            let mut acc = 0.0;
            for (row, &w) in rule.weights().iter().enumerate() {
                acc += w * gamma[(row, i)] * xi[(row, j)];
            }
            acc + m * free.mode(i).tip * spring.mode(j).tip
        });
        Ok(Self { g })
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Free-tip coordinates to spring-tip coordinates (`a = G^T r`).
    pub fn free_to_spring(&self, r: &[f64], out: &mut [f64]) {
        let n = self.n();
        assert!(r.len() == n && out.len() == n);
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += self.g[(i, j)] * r[i];
            }
            out[j] = acc;
        }
    }

    /// Spring-tip coordinates to free-tip coordinates (`r = G a`).
    pub fn spring_to_free(&self, a: &[f64], out: &mut [f64]) {
        let n = self.n();
        assert!(a.len() == n && out.len() == n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.g[(i, j)] * a[j];
            }
            out[i] = acc;
        }
    }
}

/// Write a basis table: one row per mode with the classic coefficients.
pub fn write_basis_csv<W: Write>(basis: &ModalBasis, mut out: W) -> Result<()> {
    writeln!(out, "mode_index,beta,omega,C1,C2,C3,C4,tip_value")?;
    for (i, mode) in basis.modes().iter().enumerate() {
        let [c1, c2, c3, c4] = mode.classic_coefficients();
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            i + 1,
            mode.beta,
            mode.omega,
            c1,
            c2,
            c3,
            c4,
            mode.tip
        )?;
    }
    Ok(())
}
