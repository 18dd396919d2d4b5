//! Galerkin reduced-order model on the POM subspace.
//!
//! The displacement field is expanded as `w(x,t) = sum_p b_p(t) psi_p(x)`
//! with POMs from the snapshot decomposition, and the weak form is projected
//! onto the same subspace. One basis serves all three force models: the gap
//! spring contributes `k E` to the stiffness while the tip is inside the gap,
//! and the kick enters as a constant generalized load `±F psi(1)` while
//! armed. No basis handoffs and no shifted coordinates: unlike the modal
//! full-order system, the reduced state is the absolute field in every mode.

use nalgebra::{Cholesky, DMatrix, DVector, DVectorView, DVectorViewMut};
use serde::{Deserialize, Serialize};

use crate::chebyshev::ChebyshevSeries;
use crate::closure::ClosureReport;
use crate::error::{Error, Result};
use crate::hybrid::{
    interior_region, region_consistent, DiscreteMode, FosSystem, HybridState, HybridSystem,
    KickChange, Model, Region, TransitionOutcome, CONSISTENCY_TOL,
};
use crate::integrate::{simulate, FieldSamples, IntegratorConfig, SampleSpec, SimOutput};
use crate::modal::static_deflection;
use crate::params::SystemParams;
use crate::pod::{series_gram, PodBasis};
use crate::sampling::{Provenance, SnapshotSet};

/// Assembled reduced model: the projected operators plus everything needed
/// to reconstruct fields and audit provenance.
#[derive(Debug, Clone)]
pub struct RomPackage {
    /// Subspace dimension.
    pub p: usize,
    /// Chebyshev representation of each retained POM.
    pub cheb: Vec<ChebyshevSeries>,
    /// Mass integrals `int psi_i psi_j dx`.
    pub m_mat: DMatrix<f64>,
    /// Bending stiffness integrals `int psi_i'' psi_j'' dx`.
    pub k_mat: DMatrix<f64>,
    /// Boundary coupling `psi_i(1) psi_j(1)`.
    pub e_mat: DMatrix<f64>,
    /// Tip evaluation row `psi(1)`.
    pub tip_row: DVector<f64>,
    pub params: SystemParams,
    /// Content hash of the snapshot set the basis came from.
    pub source_hash: String,
    /// Closure report that justified the choice of `p`, when available.
    pub closure: Option<ClosureReport>,
}

/// Serialized form: matrices row-major, series as coefficient lists.
#[derive(Serialize, Deserialize)]
struct RomPackageFile {
    format: String,
    p: usize,
    params: SystemParams,
    source_hash: String,
    tip_row: Vec<f64>,
    m_mat: Vec<f64>,
    k_mat: Vec<f64>,
    e_mat: Vec<f64>,
    cheb: Vec<Vec<f64>>,
    closure: Option<ClosureReport>,
}

const ROM_FORMAT: &str = "kickbeam-rom-1";

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

impl RomPackage {
    pub fn to_json(&self) -> Result<String> {
        let file = RomPackageFile {
            format: ROM_FORMAT.to_string(),
            p: self.p,
            params: self.params.clone(),
            source_hash: self.source_hash.clone(),
            tip_row: self.tip_row.iter().copied().collect(),
            m_mat: row_major(&self.m_mat),
            k_mat: row_major(&self.k_mat),
            e_mat: row_major(&self.e_mat),
            cheb: self.cheb.iter().map(|s| s.coeffs().to_vec()).collect(),
            closure: self.closure.clone(),
        };
        serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Input(format!("ROM package serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RomPackageFile = serde_json::from_str(text)
            .map_err(|e| Error::Input(format!("ROM package parse failed: {e}")))?;
        if file.format != ROM_FORMAT {
            return Err(Error::Input(format!(
                "unsupported ROM package format {:?}",
                file.format
            )));
        }
        let p = file.p;
        if p == 0
            || file.tip_row.len() != p
            || file.cheb.len() != p
            || file.m_mat.len() != p * p
            || file.k_mat.len() != p * p
            || file.e_mat.len() != p * p
            || file.cheb.iter().any(|c| c.is_empty())
        {
            return Err(Error::Input("ROM package has inconsistent dimensions".into()));
        }
        Ok(Self {
            p,
            cheb: file.cheb.into_iter().map(ChebyshevSeries::from_coeffs).collect(),
            m_mat: DMatrix::from_row_slice(p, p, &file.m_mat),
            k_mat: DMatrix::from_row_slice(p, p, &file.k_mat),
            e_mat: DMatrix::from_row_slice(p, p, &file.e_mat),
            tip_row: DVector::from_vec(file.tip_row),
            params: file.params,
            source_hash: file.source_hash,
            closure: file.closure,
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

/// Project the continuous operators onto the leading `p` POMs.
///
/// All integrals are evaluated from the Chebyshev representations with the
/// closed-form monomial-free Gram identities, exact to the series degrees.
pub fn assemble_rom(basis: &PodBasis, p: usize, params: &SystemParams) -> Result<RomPackage> {
    params.validate()?;
    if p == 0 || p > basis.p_max {
        return Err(Error::Input(format!(
            "requested dimension {p} outside 1..={}",
            basis.p_max
        )));
    }
    let cheb = basis.cheb[..p].to_vec();
    let mut m_mat = series_gram(&cheb);
    let mut k_mat = series_gram(&basis.cheb_dd[..p]);
    // The integrands are symmetric; make the matrices exactly so.
    symmetrize(&mut m_mat);
    symmetrize(&mut k_mat);
    let tip_row = DVector::from_vec(basis.tip_values(p));
    let e_mat = &tip_row * tip_row.transpose();

    let eff_mass = &m_mat + params.m * &e_mat;
    if Cholesky::new(eff_mass).is_none() {
        return Err(Error::Assembly(
            "effective mass M + mE is not positive definite; basis is corrupted".into(),
        ));
    }

    Ok(RomPackage {
        p,
        cheb,
        m_mat,
        k_mat,
        e_mat,
        tip_row,
        params: params.clone(),
        source_hash: basis.source_hash.clone(),
        closure: None,
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Runtime form of a package: effective-mass solves baked into dense
/// operators so the right-hand side is two small matrix-vector products.
#[derive(Debug, Clone)]
pub struct RomSystem {
    package: RomPackage,
    /// `M + mE`.
    eff_mass: DMatrix<f64>,
    /// `cv M + cm K`.
    damp_mat: DMatrix<f64>,
    /// `K + kE`.
    stiff_gap: DMatrix<f64>,
    damp_op: DMatrix<f64>,
    stiff_free_op: DMatrix<f64>,
    stiff_gap_op: DMatrix<f64>,
    /// `(M + mE)^{-1} psi(1)`, scaled by `±F` at evaluation time.
    load_unit: DVector<f64>,
}

impl RomSystem {
    pub fn new(package: RomPackage) -> Result<Self> {
        let p = &package.params;
        let eff_mass = &package.m_mat + p.m * &package.e_mat;
        let chol = Cholesky::new(eff_mass.clone()).ok_or_else(|| {
            Error::Assembly("effective mass M + mE is not positive definite".into())
        })?;
        let damp_mat = p.cv * &package.m_mat + p.cm * &package.k_mat;
        let stiff_gap = &package.k_mat + p.k * &package.e_mat;
        let damp_op = chol.solve(&damp_mat);
        let stiff_free_op = chol.solve(&package.k_mat);
        let stiff_gap_op = chol.solve(&stiff_gap);
        let load_unit = chol.solve(&DMatrix::from_column_slice(
            package.p,
            1,
            package.tip_row.as_slice(),
        ));
        Ok(Self {
            package,
            eff_mass,
            damp_mat,
            stiff_gap,
            damp_op,
            stiff_free_op,
            stiff_gap_op,
            load_unit: DVector::from_column_slice(load_unit.as_slice()),
        })
    }

    pub fn package(&self) -> &RomPackage {
        &self.package
    }

    /// Same reduced operators with a different kick magnitude. The force
    /// enters only through the load and the input-power bookkeeping, so no
    /// refactorization is needed.
    pub fn with_kick(&self, f: f64) -> Self {
        let mut out = self.clone();
        out.package.params.f = f;
        out
    }

    /// Scaled Frobenius norm of the commutator between the damping and
    /// gap-stiffness operators. A visibly nonzero value certifies the model
    /// is not modally decoupled and must be integrated in coupled form.
    pub fn operator_commutator_norm(&self) -> f64 {
        let ds = &self.damp_op * &self.stiff_gap_op;
        let sd = &self.stiff_gap_op * &self.damp_op;
        let denom = self.damp_op.norm() * self.stiff_gap_op.norm();
        if denom == 0.0 {
            0.0
        } else {
            (ds - sd).norm() / denom
        }
    }

    /// Evaluate the retained POMs on an arbitrary grid, row per grid point.
    pub fn shape_matrix(&self, x_grid: &[f64]) -> DMatrix<f64> {
        let mut shapes = DMatrix::zeros(x_grid.len(), self.package.p);
        for (c, series) in self.package.cheb.iter().enumerate() {
            for (i, &x) in x_grid.iter().enumerate() {
                shapes[(i, c)] = series.eval(x);
            }
        }
        shapes
    }
}

impl HybridSystem for RomSystem {
    fn dim(&self) -> usize {
        self.package.p
    }

    fn params(&self) -> &SystemParams {
        &self.package.params
    }

    #[inline]
    fn accel(&self, mode: &DiscreteMode, q: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.package.p;
        let qv = DVectorView::from_slice(q, n);
        let vv = DVectorView::from_slice(v, n);
        let mut ov = DVectorViewMut::from_slice(out, n);
        let stiff = match mode.model {
            Model::A => &self.stiff_free_op,
            _ => &self.stiff_gap_op,
        };
        ov.gemv(-1.0, stiff, &qv, 0.0);
        ov.gemv(-1.0, &self.damp_op, &vv, 1.0);
        if mode.model == Model::B {
            ov.axpy(mode.kick_sign * self.package.params.f, &self.load_unit, 1.0);
        }
    }

    fn tip(&self, _mode: &DiscreteMode, q: &[f64], v: &[f64]) -> (f64, f64) {
        let mut w = 0.0;
        let mut vd = 0.0;
        for (j, t) in self.package.tip_row.iter().enumerate() {
            w += t * q[j];
            vd += t * v[j];
        }
        (w, vd)
    }

    fn apply_transition(&self, state: &mut HybridState, outcome: &TransitionOutcome) -> Result<()> {
        // Single basis, absolute coordinates: transitions only relabel the
        // discrete mode.
        let (kick_armed, kick_sign) = match outcome.kick {
            KickChange::Arm(sign) => (true, sign),
            _ => (false, 0.0),
        };
        state.shift = None;
        state.mode = DiscreteMode {
            region: outcome.region,
            model: outcome.model,
            kick_armed,
            kick_sign,
        };
        state.mode.validate()
    }

    fn total_energy(&self, state: &HybridState) -> f64 {
        let n = self.package.p;
        let q = DVectorView::from_slice(&state.coords, n);
        let v = DVectorView::from_slice(&state.vels, n);
        let ke = 0.5 * (&self.eff_mass * v).dot(&v);
        match state.mode.model {
            Model::A => {
                // Saturated gap-spring potential keeps the total continuous
                // across gap crossings.
                ke + 0.5 * (&self.package.k_mat * q).dot(&q)
                    + 0.125 * self.package.params.k * self.package.params.d.powi(2)
            }
            _ => ke + 0.5 * (&self.stiff_gap * q).dot(&q),
        }
    }

    fn dissipation_rate(&self, _mode: &DiscreteMode, v: &[f64]) -> f64 {
        let vv = DVectorView::from_slice(v, self.package.p);
        (&self.damp_mat * vv).dot(&vv)
    }

    fn input_power(&self, mode: &DiscreteMode, _q: &[f64], v: &[f64]) -> f64 {
        if mode.model != Model::B {
            return 0.0;
        }
        let mut vd = 0.0;
        for (j, t) in self.package.tip_row.iter().enumerate() {
            vd += t * v[j];
        }
        mode.kick_sign * self.package.params.f * vd
    }

    fn validate_state(&self, state: &HybridState) -> Result<()> {
        state.mode.validate()?;
        if state.coords.len() != self.package.p || state.vels.len() != self.package.p {
            return Err(Error::HybridConsistency(format!(
                "reduced state length {} does not match dimension {}",
                state.coords.len(),
                self.package.p
            )));
        }
        if state.shift.is_some() {
            return Err(Error::HybridConsistency(
                "reduced states carry no static shift".into(),
            ));
        }
        let (w, v) = self.tip(&state.mode, &state.coords, &state.vels);
        if !region_consistent(state.mode.region, w, v, &self.package.params, CONSISTENCY_TOL) {
            return Err(Error::HybridConsistency(format!(
                "reduced tip state (w = {w:.6e}, v = {v:.6e}) inconsistent with {:?}",
                state.mode.region
            )));
        }
        Ok(())
    }
}

/// Integrate the reduced model through the shared event machinery.
pub fn simulate_rom(
    rom: &RomSystem,
    initial: &HybridState,
    horizon: f64,
    cfg: &IntegratorConfig,
    samples: &SampleSpec,
) -> Result<SimOutput> {
    simulate(rom, initial, horizon, cfg, samples)
}

/// Residuals left after projecting a full-order state onto the POM span.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionInfo {
    pub displacement_residual: f64,
    pub velocity_residual: f64,
}

/// Least-squares coefficients of a grid field in the leading `p` POMs,
/// with the relative remainder norm.
pub fn project_field(basis: &PodBasis, p: usize, field: &DVector<f64>) -> (DVector<f64>, f64) {
    let psi = basis.leading(p);
    let b = psi.transpose() * field;
    let recon = psi * &b;
    let denom = field.norm();
    let resid = (field - recon).norm();
    (b, if denom > 0.0 { resid / denom } else { 0.0 })
}

/// Project a full-order state into reduced coordinates.
///
/// The absolute displacement and velocity fields are reconstructed on the
/// basis grid (including the static deflection while the kick is armed),
/// projected onto the leading POMs, and the discrete mode is re-derived from
/// the reduced tip state, since projection can move the tip slightly off the
/// boundary the full-order state sat on.
pub fn project_initial(
    sys: &FosSystem,
    state: &HybridState,
    basis: &PodBasis,
    rom: &RomSystem,
) -> Result<(HybridState, ProjectionInfo)> {
    let grid = &basis.x_grid;
    let nx = grid.len();
    let active = match state.mode.model {
        Model::A => sys.free_basis(),
        _ => sys.spring_basis(),
    };
    let mut w = DVector::zeros(nx);
    let mut v = DVector::zeros(nx);
    for (i, &x) in grid.iter().enumerate() {
        w[i] = active.field(&state.coords, x, 0);
        v[i] = active.field(&state.vels, x, 0);
    }
    if state.mode.model == Model::B {
        let shift = static_deflection(sys.params(), state.mode.kick_sign);
        for (i, &x) in grid.iter().enumerate() {
            w[i] += shift.eval(x, 0);
        }
    }
    let p = rom.package().p;
    let (b, displacement_residual) = project_field(basis, p, &w);
    let (bv, velocity_residual) = project_field(basis, p, &v);

    let reduced_mode = {
        let coords: Vec<f64> = b.iter().copied().collect();
        let vels: Vec<f64> = bv.iter().copied().collect();
        let (wt, vt) = rom.tip(&state.mode, &coords, &vels);
        derive_mode(wt, vt, &state.mode, rom.params())
    };
    let reduced = HybridState {
        time: state.time,
        coords: b.iter().copied().collect(),
        vels: bv.iter().copied().collect(),
        mode: reduced_mode,
        shift: None,
    };
    rom.validate_state(&reduced)?;
    Ok((
        reduced,
        ProjectionInfo {
            displacement_residual,
            velocity_residual,
        },
    ))
}

/// Discrete mode consistent with a projected tip state, using the source
/// state's mode as the template for latch intent.
fn derive_mode(w: f64, v: f64, template: &DiscreteMode, p: &SystemParams) -> DiscreteMode {
    let half = 0.5 * p.d;
    if w > half || w < -half {
        return DiscreteMode {
            region: if w > half { Region::R2 } else { Region::R6 },
            model: Model::A,
            kick_armed: false,
            kick_sign: 0.0,
        };
    }
    let region = interior_region(w, v, p);
    let keep_armed = template.model == Model::B
        && ((template.kick_sign < 0.0 && region == Region::R4)
            || (template.kick_sign > 0.0 && region == Region::R8));
    // A state captured right at gap entry arms exactly as the flow would.
    let arm_now = template.model == Model::A
        && ((template.region == Region::R2 && region == Region::R4)
            || (template.region == Region::R6 && region == Region::R8));
    if keep_armed || arm_now {
        let sign = if region == Region::R4 { -1.0 } else { 1.0 };
        DiscreteMode {
            region,
            model: Model::B,
            kick_armed: true,
            kick_sign: sign,
        }
    } else {
        DiscreteMode {
            region,
            model: Model::C,
            kick_armed: false,
            kick_sign: 0.0,
        }
    }
}

/// Reconstruct grid fields from a reduced trajectory's coordinate samples.
pub fn rom_snapshots(
    rom: &RomSystem,
    samples: &FieldSamples,
    x_grid: &[f64],
    provenance: Provenance,
) -> Result<SnapshotSet> {
    if samples.is_empty() {
        return Err(Error::Input("no field samples recorded".into()));
    }
    if samples.dim != rom.package.p {
        return Err(Error::Input(format!(
            "samples have dimension {} but the model has {}",
            samples.dim, rom.package.p
        )));
    }
    let shapes = rom.shape_matrix(x_grid);
    let nt = samples.len();
    let mut w = DMatrix::zeros(x_grid.len(), nt);
    let mut wdot = DMatrix::zeros(x_grid.len(), nt);
    let mut b = DVector::zeros(rom.package.p);
    for j in 0..nt {
        b.copy_from_slice(samples.coords(j));
        w.set_column(j, &(&shapes * &b));
        b.copy_from_slice(samples.vels(j));
        wdot.set_column(j, &(&shapes * &b));
    }
    let set = SnapshotSet {
        x_grid: x_grid.to_vec(),
        t_grid: samples.times.clone(),
        w,
        wdot,
        params: rom.package.params.clone(),
        provenance,
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chebyshev::ChebyshevFitter;
    use crate::integrate::SampleSpec;
    use crate::sampling::uniform_grid;
    use approx::assert_relative_eq;

    fn params(n: usize) -> SystemParams {
        SystemParams {
            cv: 4.5,
            cm: 3.0e-4,
            m: 1.0,
            k: 1000.0,
            f: 12.95,
            d: 0.2,
            vcr: 0.05,
            n_modes: n,
        }
    }

    /// PodBasis whose "POMs" are the exact spring-tip normal modes.
    fn spring_mode_basis(sys: &FosSystem, grid: &[f64]) -> PodBasis {
        let n = sys.spring_basis().len();
        let shapes = sys.spring_basis().sample_matrix(grid, 0);
        let fitter = ChebyshevFitter::new(grid, 60.min(grid.len() - 2)).unwrap();
        let mut cheb = Vec::with_capacity(n);
        let mut cheb_dd = Vec::with_capacity(n);
        for j in 0..n {
            let col: Vec<f64> = shapes.column(j).iter().copied().collect();
            let series = fitter.fit(&col).chopped(1e-10);
            cheb_dd.push(series.nth_derivative(2));
            cheb.push(series);
        }
        PodBasis {
            x_grid: grid.to_vec(),
            eigenvalues: vec![1.0; n],
            modes: shapes,
            cheb,
            cheb_dd,
            p_max: n,
            total_variance: n as f64,
            max_fit_residual: 0.0,
            source_hash: "spring-mode-consistency".into(),
        }
    }

    #[test]
    fn spring_mode_basis_reproduces_modal_coefficients() {
        let p = params(8);
        let sys = FosSystem::build(&p).unwrap();
        let grid = uniform_grid(100);
        let basis = spring_mode_basis(&sys, &grid);
        let package = assemble_rom(&basis, 8, &p).unwrap();

        let tips: Vec<f64> = sys.spring_basis().tip_values();
        let omega_sq: Vec<f64> = (0..8)
            .map(|j| sys.spring_basis().mode(j).omega.powi(2))
            .collect();

        // Normalization makes M + mE the identity and K + kE the diagonal of
        // squared natural frequencies.
        let eff = &package.m_mat + p.m * &package.e_mat;
        let stiff = &package.k_mat + p.k * &package.e_mat;
        let mut worst_eff = 0.0_f64;
        let mut worst_stiff = 0.0_f64;
        let mut worst_damp = 0.0_f64;
        let rank1 = p.m * p.cv + p.k * p.cm;
        let scale = omega_sq[7];
        for i in 0..8 {
            for j in 0..8 {
                let id = if i == j { 1.0 } else { 0.0 };
                worst_eff = worst_eff.max((eff[(i, j)] - id).abs());
                let ks = if i == j { omega_sq[i] } else { 0.0 };
                worst_stiff = worst_stiff.max((stiff[(i, j)] - ks).abs() / scale);
                let damp = p.cv * package.m_mat[(i, j)] + p.cm * package.k_mat[(i, j)];
                let expect = if i == j { p.cv + p.cm * omega_sq[i] } else { 0.0 }
                    - rank1 * tips[i] * tips[j];
                worst_damp = worst_damp.max((damp - expect).abs());
            }
        }
        assert!(worst_eff < 1e-8, "effective mass deviates by {worst_eff:.3e}");
        assert!(worst_stiff < 1e-8, "stiffness deviates by {worst_stiff:.3e}");
        assert!(worst_damp < 1e-6, "damping deviates by {worst_damp:.3e}");

        // Boundary coupling is exactly the tip outer product.
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(
                    package.e_mat[(i, j)],
                    package.tip_row[i] * package.tip_row[j]
                );
            }
        }
    }

    #[test]
    fn degenerate_basis_fails_assembly() {
        let p = params(4);
        let sys = FosSystem::build(&p).unwrap();
        let grid = uniform_grid(60);
        let mut basis = spring_mode_basis(&sys, &grid);
        // Duplicate the first POM: the Gram matrix goes singular.
        basis.cheb[1] = basis.cheb[0].clone();
        basis.cheb_dd[1] = basis.cheb_dd[0].clone();
        let err = assemble_rom(&basis, 2, &p).unwrap_err();
        assert!(matches!(err, Error::Assembly(_)), "got {err}");
    }

    fn rom_state(rom: &RomSystem, coords: Vec<f64>, vels: Vec<f64>) -> HybridState {
        let (w, v) = rom.tip(
            &DiscreteMode {
                region: Region::R1,
                model: Model::C,
                kick_armed: false,
                kick_sign: 0.0,
            },
            &coords,
            &vels,
        );
        let p = rom.params();
        let mode = derive_mode(
            w,
            v,
            &DiscreteMode {
                region: Region::R1,
                model: if w.abs() > 0.5 * p.d { Model::A } else { Model::C },
                kick_armed: false,
                kick_sign: 0.0,
            },
            p,
        );
        HybridState {
            time: 0.0,
            coords,
            vels,
            mode,
            shift: None,
        }
    }

    #[test]
    fn quiet_start_decays_to_origin() {
        let p = params(4);
        let sys = FosSystem::build(&p).unwrap();
        let grid = uniform_grid(80);
        let basis = spring_mode_basis(&sys, &grid);
        let package = assemble_rom(&basis, 4, &p).unwrap();
        let rom = RomSystem::new(package).unwrap();
        let mut coords = vec![0.0; 4];
        coords[0] = 0.25 * p.d / rom.package().tip_row[0];
        let initial = rom_state(&rom, coords, vec![0.0; 4]);
        assert_eq!(initial.mode.model, Model::C);
        let out = simulate_rom(
            &rom,
            &initial,
            80.0,
            &IntegratorConfig::default(),
            &SampleSpec::none(),
        )
        .unwrap();
        assert!(
            out.energy_final < 1e-10 * out.energy_initial.max(1e-30),
            "energy only fell to {:.3e} of {:.3e}",
            out.energy_final,
            out.energy_initial
        );
        // Work audit is exact by construction for the reduced model.
        let balance = out.energy_final - out.energy_initial + out.work_dissipated - out.work_input;
        assert!(
            balance.abs() < 1e-7 * out.work_dissipated.abs().max(1e-12),
            "energy audit off by {balance:.3e}"
        );
    }

    #[test]
    fn kicked_trajectories_mirror() {
        let p = params(4);
        let sys = FosSystem::build(&p).unwrap();
        let grid = uniform_grid(80);
        let basis = spring_mode_basis(&sys, &grid);
        let package = assemble_rom(&basis, 4, &p).unwrap();
        let rom = RomSystem::new(package).unwrap();
        // Drop in from well outside the gap so the kick arms on entry.
        let mut coords = vec![0.0; 4];
        coords[0] = 2.0 * p.d / rom.package().tip_row[0];
        let initial = rom_state(&rom, coords.clone(), vec![0.0; 4]);
        assert_eq!(initial.mode.model, Model::A);
        let mirrored = {
            let mut s = initial.clone();
            s.coords.iter_mut().for_each(|c| *c = -*c);
            s.vels.iter_mut().for_each(|v| *v = -*v);
            s.mode = s.mode.mirrored();
            s
        };
        let cfg = IntegratorConfig::default();
        let a = simulate_rom(&rom, &initial, 15.0, &cfg, &SampleSpec::tip_in(200.0, 0.0, 15.0))
            .unwrap();
        let b = simulate_rom(&rom, &mirrored, 15.0, &cfg, &SampleSpec::tip_in(200.0, 0.0, 15.0))
            .unwrap();
        assert!(a.work_input > 0.0, "kick never fired");
        let ta = a.tip_samples.unwrap();
        let tb = b.tip_samples.unwrap();
        assert_eq!(ta.times.len(), tb.times.len());
        let mut worst = 0.0_f64;
        for j in 0..ta.times.len() {
            worst = worst.max((ta.w[j] + tb.w[j]).abs());
            worst = worst.max((ta.v[j] + tb.v[j]).abs());
        }
        assert!(worst < 1e-7, "mirror symmetry broken by {worst:.3e}");
        for (ca, cb) in a.final_state.coords.iter().zip(&b.final_state.coords) {
            assert_relative_eq!(*ca, -*cb, epsilon = 1e-7, max_relative = 1e-6);
        }
    }

    #[test]
    fn damping_and_stiffness_do_not_commute() {
        let p = params(8);
        let sys = FosSystem::build(&p).unwrap();
        let grid = uniform_grid(100);
        let basis = spring_mode_basis(&sys, &grid);
        let package = assemble_rom(&basis, 8, &p).unwrap();
        let rom = RomSystem::new(package).unwrap();
        let c = rom.operator_commutator_norm();
        assert!(c > 1e-4, "commutator unexpectedly small: {c:.3e}");
    }

    #[test]
    fn package_round_trips_through_json() {
        let p = params(4);
        let sys = FosSystem::build(&p).unwrap();
        let grid = uniform_grid(60);
        let basis = spring_mode_basis(&sys, &grid);
        let package = assemble_rom(&basis, 3, &p).unwrap();
        let text = package.to_json().unwrap();
        let back = RomPackage::from_json(&text).unwrap();
        assert_eq!(back.p, package.p);
        assert_eq!(back.source_hash, package.source_hash);
        assert_eq!(back.m_mat, package.m_mat);
        assert_eq!(back.k_mat, package.k_mat);
        assert_eq!(back.e_mat, package.e_mat);
        assert_eq!(back.tip_row, package.tip_row);
        for (a, b) in back.cheb.iter().zip(&package.cheb) {
            assert_eq!(a.coeffs(), b.coeffs());
        }
        // Round-tripped package still assembles into a working system.
        RomSystem::new(back).unwrap();
    }

    #[test]
    fn projection_respects_span_and_complement() {
        let p = params(4);
        let sys = FosSystem::build(&p).unwrap();
        let grid = uniform_grid(60);
        let mut basis = spring_mode_basis(&sys, &grid);
        // Orthonormalize the sampled columns so projection is exact algebra.
        let qr = basis.modes.clone().qr();
        basis.modes = qr.q();
        let psi = basis.modes.clone();
        let in_span = &psi * DVector::from_vec(vec![0.7, -0.2, 0.05, 0.3]);
        let (b, resid) = project_field(&basis, 4, &in_span);
        assert!(resid < 1e-12);
        assert_relative_eq!(b[0], 0.7, max_relative = 1e-12);
        // A vector orthogonal to the span projects to nothing.
        let mut ortho = DVector::from_element(grid.len(), 1.0);
        for j in 0..4 {
            let col = psi.column(j);
            let coeff = col.dot(&ortho);
            ortho -= coeff * DVector::from_column_slice(col.as_slice());
        }
        let (b, resid) = project_field(&basis, 4, &ortho);
        assert!(b.norm() < 1e-10, "complement leaked {b:?}");
        assert_relative_eq!(resid, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn full_state_projection_reaches_reduced_coordinates() {
        use crate::pod::{pod_decompose, PodConfig};
        let p = params(6);
        let sys = FosSystem::build(&p).unwrap();
        let grid = uniform_grid(100);
        // Snapshots spanned by three shapes, one of which is the free
        // fundamental: the launch state then lies exactly in the POM span.
        let shapes = [
            sys.free_basis().sample_matrix(&grid, 0).column(0).into_owned(),
            sys.spring_basis().sample_matrix(&grid, 0).column(1).into_owned(),
            sys.spring_basis().sample_matrix(&grid, 0).column(2).into_owned(),
        ];
        let nt = 181;
        let t: Vec<f64> = (0..nt).map(|j| 2.0 * j as f64 / (nt - 1) as f64).collect();
        let mut w = DMatrix::zeros(grid.len(), nt);
        let mut wdot = DMatrix::zeros(grid.len(), nt);
        for (j, &tj) in t.iter().enumerate() {
            let amps = [(1.3 * tj).sin(), 0.4 * (2.1 * tj).cos(), 0.1 * (3.7 * tj).sin()];
            let vamps = [
                1.3 * (1.3 * tj).cos(),
                -0.4 * 2.1 * (2.1 * tj).sin(),
                0.1 * 3.7 * (3.7 * tj).cos(),
            ];
            let mut wc = DVector::zeros(grid.len());
            let mut vc = DVector::zeros(grid.len());
            for (s, (&a, &va)) in shapes.iter().zip(amps.iter().zip(&vamps)) {
                wc += a * s;
                vc += va * s;
            }
            w.set_column(j, &wc);
            wdot.set_column(j, &vc);
        }
        let snaps = SnapshotSet {
            x_grid: grid.clone(),
            t_grid: t,
            w,
            wdot,
            params: p.clone(),
            provenance: Provenance::default(),
        };
        let basis = pod_decompose(&snaps, &PodConfig::default()).unwrap();
        assert_eq!(basis.p_max, 3);
        let package = assemble_rom(&basis, 3, &p).unwrap();
        let rom = RomSystem::new(package).unwrap();

        let state = sys.launch_initial();
        let (reduced, info) = project_initial(&sys, &state, &basis, &rom).unwrap();
        assert_eq!(reduced.mode.model, Model::A);
        assert_eq!(reduced.mode.region, Region::R2);
        assert!(
            info.displacement_residual < 1e-10,
            "residual {}",
            info.displacement_residual
        );
        assert!(info.velocity_residual == 0.0);
        let (w_tip, v_tip) = rom.tip(&reduced.mode, &reduced.coords, &reduced.vels);
        assert_relative_eq!(w_tip, 2.0 * p.d, max_relative = 1e-6);
        assert!(v_tip.abs() < 1e-12);
    }

    #[test]
    fn reconstructed_fields_match_shapes() {
        let p = params(3);
        let sys = FosSystem::build(&p).unwrap();
        let grid = uniform_grid(40);
        let basis = spring_mode_basis(&sys, &grid);
        let package = assemble_rom(&basis, 3, &p).unwrap();
        let rom = RomSystem::new(package).unwrap();
        let mut coords = vec![0.0; 3];
        coords[0] = 0.2 * p.d / rom.package().tip_row[0];
        let initial = rom_state(&rom, coords, vec![0.0; 3]);
        let out = simulate_rom(
            &rom,
            &initial,
            0.5,
            &IntegratorConfig::default(),
            &SampleSpec::fields_in(100.0, 0.0, 0.5),
        )
        .unwrap();
        let samples = out.field_samples.unwrap();
        let snaps = rom_snapshots(&rom, &samples, &grid, Provenance::default()).unwrap();
        let shapes = rom.shape_matrix(&grid);
        let j = samples.len() - 1;
        let b = DVector::from_column_slice(samples.coords(j));
        let expect = &shapes * &b;
        for i in 0..grid.len() {
            assert_relative_eq!(snaps.w[(i, j)], expect[i], epsilon = 1e-14);
        }
        assert_eq!(snaps.params.k, p.k);
    }
}
