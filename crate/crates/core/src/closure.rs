//! Energy-closure criterion: input and dissipation work evaluated on
//! truncated POD subspaces, and selection of the smallest subspace whose
//! energy balance has converged.
//!
//! The idea: a reduced basis is "large enough" once the kick work and the
//! damping work computed from the projected velocity field stop changing.
//! Both quantities are evaluated for every `P = 1..=Pmax` against the
//! reference at `Pmax`, and the report records the first `P` whose relative
//! errors fall below a tolerance.

use crate::error::{Error, Result};
use crate::integrate::KickInterval;
use crate::params::SystemParams;
use crate::pod::{pom_gram_matrices, velocity_coefficients, PodBasis};
use crate::sampling::SnapshotSet;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Per-subspace energy balance and the selected reduced dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosureReport {
    /// Numerical rank of the snapshot data; the reference dimension.
    pub p_max: usize,
    /// Dimension the errors are measured against (equals `p_max`).
    pub reference_p: usize,
    /// Convergence tolerance used for the selection.
    pub epsilon: f64,
    /// Kick work per subspace dimension, index `P-1`.
    pub wf: Vec<f64>,
    /// Damping work per subspace dimension, index `P-1`.
    pub wd: Vec<f64>,
    /// Relative kick-work error `|1 - wf(P)/wf(Pmax)|`.
    pub ef: Vec<f64>,
    /// Relative damping-work error `|1 - wd(P)/wd(Pmax)|`.
    pub ed: Vec<f64>,
    /// Smallest `P` with both errors below `epsilon`.
    pub selected_p: usize,
    /// False when no proper subspace met the tolerance and `selected_p`
    /// fell back to `p_max`.
    pub converged: bool,
}

impl ClosureReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Input(format!("closure report serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Input(format!("closure report parse failed: {e}")))
    }
}

/// Kick and damping work for every subspace dimension `P = 1..=Pmax`.
#[derive(Debug, Clone)]
pub struct EnergyCurves {
    pub wf: Vec<f64>,
    pub wd: Vec<f64>,
}

/// Evaluate both work integrals on every leading subspace at once.
///
/// With `c(t) = Psi^T wdot(t)` the projected velocity is
/// `v~(x,t) = sum_p c_p(t) psi_p(x)`, so
/// `Wd(P) = int cv*int v~^2 dx + cm*int v~''^2 dx dt`
/// reduces to Frobenius products of the leading `P x P` blocks of the POM
/// Gram matrices with the weighted second moment `M2 = sum_j tau_j c_j c_j^T`,
/// and `Wf(P) = int F(t) v~(1,t) dt` uses prefix sums of the tip-weighted
/// coefficients over the recorded kick intervals. One projection serves all
/// `P`, which keeps the whole curve as cheap as a single evaluation.
pub fn energy_curves(
    snapshots: &SnapshotSet,
    basis: &PodBasis,
    params: &SystemParams,
    kicks: &[KickInterval],
) -> Result<EnergyCurves> {
    snapshots.validate()?;
    if basis.modes.nrows() != snapshots.n_x() {
        return Err(Error::Input(format!(
            "basis has {} grid rows but snapshots have {}",
            basis.modes.nrows(),
            snapshots.n_x()
        )));
    }
    if kicks.is_empty() {
        return Err(Error::Input(
            "event trace contains no kick intervals; cannot sign the kick force".into(),
        ));
    }
    let p_max = basis.p_max;
    let nt = snapshots.n_t();
    let coeffs = velocity_coefficients(snapshots, basis);
    let tau = snapshots.time_weights();

    // Weighted second moment of the velocity coefficients.
    let mut m2 = DMatrix::<f64>::zeros(p_max, p_max);
    for j in 0..nt {
        let col = coeffs.column(j);
        m2.ger(tau[j], &col, &col, 1.0);
    }

    let (g_val, g_curv) = pom_gram_matrices(basis);
    let mut wd = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let mut sv = 0.0;
        let mut sc = 0.0;
        for i in 0..p {
            for k in 0..p {
                sv += g_val[(i, k)] * m2[(i, k)];
                sc += g_curv[(i, k)] * m2[(i, k)];
            }
        }
        wd.push(params.cv * sv + params.cm * sc);
    }

    // Running tip velocity per dimension: s[(p-1, j)] = sum_{q<p} psi_q(1) c_qj.
    let tips = basis.tip_values(p_max);
    let mut tip_cum = DMatrix::<f64>::zeros(p_max, nt);
    for j in 0..nt {
        let mut acc = 0.0;
        for p in 0..p_max {
            acc += tips[p] * coeffs[(p, j)];
            tip_cum[(p, j)] = acc;
        }
    }

    let mut wf = vec![0.0; p_max];
    for kick in kicks {
        let weights = clipped_trapezoid_weights(&snapshots.t_grid, kick.t_on, kick.t_off)?;
        for p in 0..p_max {
            let mut integral = 0.0;
            for &(j, u) in &weights {
                integral += u * tip_cum[(p, j)];
            }
            wf[p] += kick.sign * params.f * integral;
        }
    }

    Ok(EnergyCurves { wf, wd })
}

/// Work integrals on the single subspace of dimension `p`.
pub fn energy_estimates(
    snapshots: &SnapshotSet,
    basis: &PodBasis,
    p: usize,
    params: &SystemParams,
    kicks: &[KickInterval],
) -> Result<(f64, f64)> {
    if p == 0 || p > basis.p_max {
        return Err(Error::Input(format!(
            "subspace dimension {p} outside 1..={}",
            basis.p_max
        )));
    }
    let curves = energy_curves(snapshots, basis, params, kicks)?;
    Ok((curves.wf[p - 1], curves.wd[p - 1]))
}

/// Build the closure report and pick the smallest converged dimension.
pub fn closure_select(
    snapshots: &SnapshotSet,
    basis: &PodBasis,
    params: &SystemParams,
    kicks: &[KickInterval],
    epsilon: f64,
) -> Result<ClosureReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Input(format!(
            "closure tolerance must be positive, got {epsilon}"
        )));
    }
    let curves = energy_curves(snapshots, basis, params, kicks)?;
    let p_max = basis.p_max;
    let wf_ref = curves.wf[p_max - 1];
    let wd_ref = curves.wd[p_max - 1];
    let ef: Vec<f64> = curves.wf.iter().map(|&w| relative_error(w, wf_ref)).collect();
    let ed: Vec<f64> = curves.wd.iter().map(|&w| relative_error(w, wd_ref)).collect();

    let selected_p = (0..p_max)
        .find(|&i| ef[i] < epsilon && ed[i] < epsilon)
        .map(|i| i + 1)
        .unwrap_or(p_max);
    let converged = selected_p < p_max;

    Ok(ClosureReport {
        p_max,
        reference_p: p_max,
        epsilon,
        wf: curves.wf,
        wd: curves.wd,
        ef,
        ed,
        selected_p,
        converged,
    })
}

fn relative_error(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (1.0 - value / reference).abs()
    }
}

/// Quadrature weights for `int_a^b s(t) dt` where `s` is the piecewise-linear
/// interpolant of samples on `grid`. Returned as sparse `(index, weight)`
/// pairs; interval ends falling inside a cell get the exact linear split.
fn clipped_trapezoid_weights(grid: &[f64], a: f64, b: f64) -> Result<Vec<(usize, f64)>> {
    let t0 = grid[0];
    let t1 = grid[grid.len() - 1];
    let lo = a.max(t0);
    let hi = b.min(t1);
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Input(format!("bad kick interval [{a}, {b}]")));
    }
    let mut weights = vec![0.0; grid.len()];
    if hi > lo {
        // First cell whose right edge lies beyond `lo`.
        let mut j = grid.partition_point(|&t| t <= lo).saturating_sub(1);
        while j + 1 < grid.len() && grid[j + 1] <= lo {
            j += 1;
        }
        while j + 1 < grid.len() && grid[j] < hi {
            let h = grid[j + 1] - grid[j];
            let alpha = lo.max(grid[j]);
            let beta = hi.min(grid[j + 1]);
            if beta > alpha && h > 0.0 {
                let ua = (alpha - grid[j]) / h;
                let ub = (beta - grid[j]) / h;
                let half = 0.5 * (beta - alpha);
                weights[j] += half * (2.0 - ua - ub);
                weights[j + 1] += half * (ua + ub);
            }
            j += 1;
        }
    }
    Ok(weights
        .into_iter()
        .enumerate()
        .filter(|&(_, w)| w != 0.0)
        .collect())
}
