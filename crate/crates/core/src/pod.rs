//! Proper orthogonal decomposition of snapshot data.
//!
//! The spatial covariance is the trapezoid-weighted time average of
//! displacement-column outer products. Its eigenvectors on the discrete grid
//! are the proper orthogonal modes (POMs); each retained POM is fitted with
//! a Chebyshev series so that spatial derivatives and integrals of the
//! reduced fields can be evaluated spectrally.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chebyshev::{gram_matrix, ChebyshevFitter, ChebyshevSeries};
use crate::error::{Error, Result};
use crate::sampling::SnapshotSet;

/// Options for [`pod_decompose`].
#[derive(Debug, Clone)]
pub struct PodConfig {
    /// Relative eigenvalue threshold defining the numerical rank.
    pub rank_tol: f64,
    /// Degree of the Chebyshev fit per POM.
    pub cheb_degree: usize,
    /// Relative threshold for chopping the fit's trailing coefficient noise
    /// before differentiation.
    pub cheb_chop: f64,
    /// Use plain `1/N_t` averaging instead of trapezoid weights (kept for
    /// comparison against the unweighted covariance definition).
    pub plain_average: bool,
}

impl Default for PodConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-12,
            cheb_degree: 60,
            cheb_chop: 1e-10,
            plain_average: false,
        }
    }
}

/// Result of a POD: eigenvalues, discrete POMs, and their spectral fits.
#[derive(Debug, Clone)]
pub struct PodBasis {
    pub x_grid: Vec<f64>,
    /// Eigenvalues of the covariance, descending, length `p_max`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal POM columns on the grid, `n_x x p_max`.
    pub modes: DMatrix<f64>,
    /// Chebyshev series per retained POM.
    pub cheb: Vec<ChebyshevSeries>,
    /// Second-derivative series per retained POM.
    pub cheb_dd: Vec<ChebyshevSeries>,
    /// Numerical rank of the covariance at the configured threshold.
    pub p_max: usize,
    /// Total variance (trace of the covariance), including truncated tail.
    pub total_variance: f64,
    /// Worst relative fit residual over the retained POMs.
    pub max_fit_residual: f64,
    /// Content hash of the snapshot set this basis was computed from.
    pub source_hash: String,
}

/// Serialized form: modes row-major, series as coefficient lists. The
/// second-derivative series are rebuilt on load (differentiation of the
/// stored coefficients is deterministic).
#[derive(Serialize, Deserialize)]
struct PodBasisFile {
    format: String,
    x_grid: Vec<f64>,
    eigenvalues: Vec<f64>,
    modes: Vec<f64>,
    cheb: Vec<Vec<f64>>,
    p_max: usize,
    total_variance: f64,
    max_fit_residual: f64,
    source_hash: String,
}

const POD_FORMAT: &str = "kickbeam-pod-1";

impl PodBasis {
    /// Leading `p` columns as a matrix view.
    pub fn leading(&self, p: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.modes.view((0, 0), (self.x_grid.len(), p))
    }

    /// POM tip values `psi_p(1)` evaluated through the spectral fit.
    pub fn tip_values(&self, p: usize) -> Vec<f64> {
        self.cheb.iter().take(p).map(|s| s.eval(1.0)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let nx = self.x_grid.len();
        let mut modes = Vec::with_capacity(nx * self.p_max);
        for i in 0..nx {
            for j in 0..self.p_max {
                modes.push(self.modes[(i, j)]);
            }
        }
        let file = PodBasisFile {
            format: POD_FORMAT.to_string(),
            x_grid: self.x_grid.clone(),
            eigenvalues: self.eigenvalues.clone(),
            modes,
            cheb: self.cheb.iter().map(|s| s.coeffs().to_vec()).collect(),
            p_max: self.p_max,
            total_variance: self.total_variance,
            max_fit_residual: self.max_fit_residual,
            source_hash: self.source_hash.clone(),
        };
        serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Input(format!("basis serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PodBasisFile = serde_json::from_str(text)
            .map_err(|e| Error::Input(format!("basis parse failed: {e}")))?;
        if file.format != POD_FORMAT {
            return Err(Error::Input(format!(
                "unsupported basis format {:?}",
                file.format
            )));
        }
        let nx = file.x_grid.len();
        let p = file.p_max;
        if p == 0
            || nx < 2
            || file.eigenvalues.len() != p
            || file.modes.len() != nx * p
            || file.cheb.len() != p
            || file.cheb.iter().any(|c| c.is_empty())
        {
            return Err(Error::Input("basis file has inconsistent dimensions".into()));
        }
        let cheb: Vec<ChebyshevSeries> = file
            .cheb
            .into_iter()
            .map(ChebyshevSeries::from_coeffs)
            .collect();
        let cheb_dd = cheb.iter().map(|s| s.nth_derivative(2)).collect();
        Ok(Self {
            x_grid: file.x_grid,
            eigenvalues: file.eigenvalues,
            modes: DMatrix::from_row_slice(nx, p, &file.modes),
            cheb,
            cheb_dd,
            p_max: p,
            total_variance: file.total_variance,
            max_fit_residual: file.max_fit_residual,
            source_hash: file.source_hash,
        })
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Decompose a snapshot set into proper orthogonal modes.
pub fn pod_decompose(snapshots: &SnapshotSet, cfg: &PodConfig) -> Result<PodBasis> {
    snapshots.validate()?;
    let nx = snapshots.n_x();
    let nt = snapshots.n_t();
    if nt < 2 {
        return Err(Error::Input("POD needs at least two snapshots".into()));
    }

    // Covariance R = sum_j tau_j w_j w_j^T / sum_j tau_j.
    let weights: Vec<f64> = if cfg.plain_average {
        vec![1.0; nt]
    } else {
        snapshots.time_weights()
    };
    let total_w: f64 = weights.iter().sum();
    let mut r = DMatrix::<f64>::zeros(nx, nx);
    for (j, &tau) in weights.iter().enumerate() {
        let col = snapshots.w.column(j);
        r.ger(tau / total_w, &col, &col, 1.0);
    }
    let total_variance = r.trace();

    let eig = nalgebra::SymmetricEigen::new(r);
    let mut order: Vec<usize> = (0..nx).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
    });
    let lead = eig.eigenvalues[order[0]].max(0.0);
    if lead <= 0.0 {
        return Err(Error::Input("snapshot data is identically zero".into()));
    }
    let p_max = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] >= cfg.rank_tol * lead)
        .count();

    let mut eigenvalues = Vec::with_capacity(p_max);
    let mut modes = DMatrix::<f64>::zeros(nx, p_max);
    for (p, &i) in order.iter().take(p_max).enumerate() {
        eigenvalues.push(eig.eigenvalues[i].max(0.0));
        let mut col = eig.eigenvectors.column(i).clone_owned();
        // Deterministic sign: the entry of largest magnitude is positive.
        let lead_entry = col.iter().cloned().fold(0.0_f64, |acc, v| {
            if v.abs() > acc.abs() {
                v
            } else {
                acc
            }
        });
        if lead_entry < 0.0 {
            col.neg_mut();
        }
        modes.set_column(p, &col);
    }

    // Spectral fit of each retained POM. The degree is capped so the
    // least-squares system stays overdetermined on coarse grids.
    let degree = cfg.cheb_degree.min(nx.saturating_sub(2));
    let fitter = ChebyshevFitter::new(&snapshots.x_grid, degree)?;
    let mut cheb = Vec::with_capacity(p_max);
    let mut cheb_dd = Vec::with_capacity(p_max);
    let mut max_fit_residual = 0.0_f64;
    for p in 0..p_max {
        let col: Vec<f64> = modes.column(p).iter().copied().collect();
        let series = fitter.fit(&col).chopped(cfg.cheb_chop);
        let mut resid = 0.0_f64;
        for (i, &x) in snapshots.x_grid.iter().enumerate() {
            resid += (series.eval(x) - col[i]).powi(2);
        }
        // Columns are unit norm, so the relative residual is just the norm.
        max_fit_residual = max_fit_residual.max(resid.sqrt());
        cheb_dd.push(series.nth_derivative(2));
        cheb.push(series);
    }

    Ok(PodBasis {
        x_grid: snapshots.x_grid.clone(),
        eigenvalues,
        modes,
        cheb,
        cheb_dd,
        p_max,
        total_variance,
        max_fit_residual,
        source_hash: snapshots.content_hash(),
    })
}

/// Smallest dimension capturing at least `fraction` of the total variance.
pub fn variance_dimension(basis: &PodBasis, fraction: f64) -> Result<usize> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::Input(format!(
            "variance fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let total: f64 = basis.eigenvalues.iter().sum();
    let mut acc = 0.0;
    for (i, lam) in basis.eigenvalues.iter().enumerate() {
        acc += lam;
        if acc >= fraction * total {
            return Ok(i + 1);
        }
    }
    Ok(basis.p_max)
}

/// Orthogonal projection of the velocity snapshots onto the leading `p`
/// POMs: `Psi_p Psi_p^T Wdot`.
pub fn project_velocity(
    snapshots: &SnapshotSet,
    basis: &PodBasis,
    p: usize,
) -> Result<DMatrix<f64>> {
    if p > basis.p_max {
        return Err(Error::Input(format!(
            "projection rank {p} exceeds basis rank {}",
            basis.p_max
        )));
    }
    let psi = basis.leading(p);
    let coeff = psi.transpose() * &snapshots.wdot;
    Ok(psi * coeff)
}

/// Modal coefficients of the velocity snapshots in the full retained basis:
/// row `p` holds `psi_p . wdot(t_j)` for all samples. The leading `P`-block
/// of any reduced projection is just the first `P` rows.
pub fn velocity_coefficients(snapshots: &SnapshotSet, basis: &PodBasis) -> DMatrix<f64> {
    basis.modes.transpose() * &snapshots.wdot
}

/// Exact inner-product matrices of the retained POMs through their
/// Chebyshev representations: `(G_val)_pq = int psi_p psi_q dx` and
/// `(G_curv)_pq = int psi_p'' psi_q'' dx`.
pub fn pom_gram_matrices(basis: &PodBasis) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        series_gram(&basis.cheb),
        series_gram(&basis.cheb_dd),
    )
}

/// Gram matrix `int s_i s_j dx` of a family of Chebyshev series on [0, 1].
pub fn series_gram(series: &[ChebyshevSeries]) -> DMatrix<f64> {
    let n = series.len();
    let max_deg = series.iter().map(|s| s.degree()).max().unwrap_or(0);
    let h = gram_matrix(max_deg);
    let mut coeffs = DMatrix::<f64>::zeros(max_deg + 1, n);
    for (j, s) in series.iter().enumerate() {
        for (i, &c) in s.coeffs().iter().enumerate() {
            coeffs[(i, j)] = c;
        }
    }
    let hc = &h * &coeffs;
    coeffs.transpose() * hc
}

/// Evaluate each series of a family at one point, as a vector.
pub fn eval_family(series: &[ChebyshevSeries], x: f64) -> DVector<f64> {
    DVector::from_iterator(series.len(), series.iter().map(|s| s.eval(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{trapezoid_weights, uniform_grid, Provenance};
    use approx::assert_relative_eq;

    fn snapshot_from_fields(
        x: Vec<f64>,
        t: Vec<f64>,
        f: impl Fn(f64, f64) -> f64,
        fdot: impl Fn(f64, f64) -> f64,
    ) -> SnapshotSet {
        let w = DMatrix::from_fn(x.len(), t.len(), |i, j| f(x[i], t[j]));
        let wdot = DMatrix::from_fn(x.len(), t.len(), |i, j| fdot(x[i], t[j]));
        SnapshotSet {
            x_grid: x,
            t_grid: t,
            w,
            wdot,
            params: crate::params::SystemParams {
                cv: 0.0,
                cm: 0.0,
                m: 0.0,
                k: 0.0,
                f: 0.0,
                d: 1.0,
                vcr: 1.0,
                n_modes: 1,
            },
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn rank_one_data_yields_single_mode() {
        let x = uniform_grid(40);
        let t: Vec<f64> = (0..30).map(|j| j as f64 * 0.1).collect();
        let snap = snapshot_from_fields(
            x,
            t,
            |x, t| (x * x + 0.3 * x) * (1.0 + 0.5 * (3.0 * t).sin()),
            |_, _| 0.0,
        );
        let basis = pod_decompose(&snap, &PodConfig::default()).unwrap();
        assert_eq!(basis.p_max, 1);
        // POM is the normalized spatial profile, sign fixed.
        let profile: Vec<f64> = snap.x_grid.iter().map(|&x| x * x + 0.3 * x).collect();
        let norm = profile.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (i, &v) in profile.iter().enumerate() {
            assert_relative_eq!(basis.modes[(i, 0)], v / norm, epsilon = 1e-10);
        }
    }

    #[test]
    fn amplitude_ratio_squares_into_eigenvalue_ratio() {
        // Two orthogonal spatial shapes driven at amplitudes 10 and 1 with
        // time factors of equal mean square produce eigenvalues 100 : 1.
        let n = 64;
        let x = uniform_grid(n);
        // Discretely orthogonal shapes: two Fourier columns.
        let s1: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let s2: Vec<f64> = (0..n)
            .map(|i| (4.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let nt = 400;
        let t: Vec<f64> = (0..nt).map(|j| j as f64 / nt as f64 * 20.0).collect();
        let w = DMatrix::from_fn(n, nt, |i, j| {
            10.0 * s1[i] * (t[j]).sin() + 1.0 * s2[i] * (t[j]).cos()
        });
        let mut snap = snapshot_from_fields(x, t, |_, _| 0.0, |_, _| 0.0);
        snap.w = w;
        // Equal mean squares need an integer number of periods; 20 time
        // units is not one, so allow a small tolerance.
        let basis = pod_decompose(&snap, &PodConfig::default()).unwrap();
        assert!(basis.p_max >= 2);
        let ratio = basis.eigenvalues[0] / basis.eigenvalues[1];
        assert!((ratio - 100.0).abs() < 5.0, "eigenvalue ratio {ratio}");
    }

    #[test]
    fn trace_equals_weighted_mean_square() {
        let x = uniform_grid(30);
        let t: Vec<f64> = (0..50).map(|j| (j as f64 * 0.07).powi(1) + 0.001 * j as f64).collect();
        let snap = snapshot_from_fields(
            x.clone(),
            t.clone(),
            |x, t| (1.5 * x).cos() * (2.0 * t).sin() + x * t.cos(),
            |_, _| 0.0,
        );
        let basis = pod_decompose(&snap, &PodConfig::default()).unwrap();
        let tau = trapezoid_weights(&t);
        let total: f64 = tau.iter().sum();
        let mut ms = 0.0;
        for (j, &tj) in tau.iter().enumerate() {
            ms += tj / total * snap.w.column(j).norm_squared();
        }
        assert_relative_eq!(basis.total_variance, ms, max_relative = 1e-10);
        // The retained spectrum accounts for nearly all of it.
        let kept: f64 = basis.eigenvalues.iter().sum();
        assert_relative_eq!(kept, ms, max_relative = 1e-9);
    }

    #[test]
    fn modes_are_orthonormal_and_projection_idempotent() {
        let x = uniform_grid(50);
        let t: Vec<f64> = (0..80).map(|j| j as f64 * 0.05).collect();
        let snap = snapshot_from_fields(
            x,
            t,
            |x, t| (x * 2.2).sin() * t.sin() + (x * 5.0).cos() * (1.7 * t).cos() + x * (0.9 * t).sin(),
            |x, t| (x * 2.2).sin() * t.cos() + x * x * (1.3 * t).sin(),
        );
        let basis = pod_decompose(&snap, &PodConfig::default()).unwrap();
        let psi = basis.leading(basis.p_max);
        let gram = psi.transpose() * psi;
        for i in 0..basis.p_max {
            for j in 0..basis.p_max {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[(i, j)] - expect).abs() < 1e-10,
                    "gram[{i},{j}] = {}",
                    gram[(i, j)]
                );
            }
        }
        let p = basis.p_max.min(3);
        let once = project_velocity(&snap, &basis, p).unwrap();
        let twice = {
            let psi = basis.leading(p);
            let coeff = psi.transpose() * &once;
            psi * coeff
        };
        assert_relative_eq!((&once - &twice).norm(), 0.0, epsilon = 1e-12);
        // Projection never grows the norm and grows with rank.
        let full = project_velocity(&snap, &basis, basis.p_max).unwrap();
        assert!(once.norm() <= snap.wdot.norm() + 1e-12);
        assert!(once.norm() <= full.norm() + 1e-12);
    }

    #[test]
    fn variance_dimension_matches_definition() {
        let x = uniform_grid(20);
        let t: Vec<f64> = (0..40).map(|j| j as f64 * 0.1).collect();
        let snap = snapshot_from_fields(
            x,
            t,
            |x, t| 5.0 * x * t.sin() + 0.5 * x * x * (2.0 * t).cos() + 0.01 * (7.0 * x).sin() * (3.0 * t).sin(),
            |_, _| 0.0,
        );
        let basis = pod_decompose(&snap, &PodConfig::default()).unwrap();
        let p = variance_dimension(&basis, 0.999).unwrap();
        let total: f64 = basis.eigenvalues.iter().sum();
        let head: f64 = basis.eigenvalues.iter().take(p).sum();
        assert!(head / total >= 0.999);
        if p > 1 {
            let head1: f64 = basis.eigenvalues.iter().take(p - 1).sum();
            assert!(head1 / total < 0.999);
        }
        assert!(variance_dimension(&basis, 1.0).is_err());
    }

    #[test]
    fn chebyshev_fit_reproduces_modes_and_derivatives() {
        // A known smooth shape: fit residual tiny, second derivative right.
        let x = uniform_grid(100);
        let t: Vec<f64> = (0..60).map(|j| j as f64 * 0.05).collect();
        let omega = 2.7_f64;
        let snap = snapshot_from_fields(
            x,
            t,
            move |x, t| (omega * x).sin() * (1.3 * t).sin(),
            |_, _| 0.0,
        );
        let basis = pod_decompose(&snap, &PodConfig::default()).unwrap();
        assert_eq!(basis.p_max, 1);
        assert!(basis.max_fit_residual < 1e-8, "residual {}", basis.max_fit_residual);
        // The POM is proportional to sin(omega x); its second derivative is
        // -omega^2 times itself. Check in relative L2 on the grid.
        let mut num = 0.0;
        let mut den = 0.0;
        for &xi in &basis.x_grid {
            let got = basis.cheb_dd[0].eval(xi);
            let want = -omega * omega * basis.cheb[0].eval(xi);
            num += (got - want).powi(2);
            den += want.powi(2);
        }
        assert!((num / den).sqrt() < 1e-6, "relative dd error {}", (num / den).sqrt());
    }

    #[test]
    fn basis_round_trips_through_json() {
        let x = uniform_grid(40);
        let t: Vec<f64> = (0..60).map(|j| j as f64 * 0.05).collect();
        let snap = snapshot_from_fields(
            x,
            t,
            |x, t| (2.0 * x).sin() * t.sin() + x * x * (1.3 * t).cos(),
            |x, t| x * t.cos(),
        );
        let basis = pod_decompose(&snap, &PodConfig::default()).unwrap();
        let back = PodBasis::from_json(&basis.to_json().unwrap()).unwrap();
        assert_eq!(back.x_grid, basis.x_grid);
        assert_eq!(back.eigenvalues, basis.eigenvalues);
        assert_eq!(back.modes, basis.modes);
        assert_eq!(back.p_max, basis.p_max);
        assert_eq!(back.total_variance, basis.total_variance);
        assert_eq!(back.max_fit_residual, basis.max_fit_residual);
        assert_eq!(back.source_hash, basis.source_hash);
        for (a, b) in basis.cheb.iter().zip(&back.cheb) {
            assert_eq!(a.coeffs(), b.coeffs());
        }
        for (a, b) in basis.cheb_dd.iter().zip(&back.cheb_dd) {
            assert_eq!(a.coeffs(), b.coeffs());
        }
        assert!(PodBasis::from_json("{}").is_err());
    }

    #[test]
    fn gram_matrices_match_quadrature() {
        let x = uniform_grid(80);
        let t: Vec<f64> = (0..50).map(|j| j as f64 * 0.08).collect();
        let snap = snapshot_from_fields(
            x,
            t,
            |x, t| (2.0 * x).sin() * t.sin() + x * x * (1.1 * t).cos(),
            |_, _| 0.0,
        );
        let basis = pod_decompose(&snap, &PodConfig::default()).unwrap();
        let (gv, gc) = pom_gram_matrices(&basis);
        let rule = crate::quadrature::default_rule();
        for p in 0..basis.p_max.min(2) {
            for q in 0..basis.p_max.min(2) {
                let iv = rule.integrate(|x| basis.cheb[p].eval(x) * basis.cheb[q].eval(x));
                let ic = rule.integrate(|x| basis.cheb_dd[p].eval(x) * basis.cheb_dd[q].eval(x));
                assert_relative_eq!(gv[(p, q)], iv, epsilon = 1e-10, max_relative = 1e-8);
                assert_relative_eq!(gc[(p, q)], ic, epsilon = 1e-7, max_relative = 1e-7);
            }
        }
    }
}
