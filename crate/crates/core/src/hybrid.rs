//! The phase-plane automaton that glues the three linear beam models
//! together, and the modal equations of motion for the full-order system.
//!
//! The tip state `(w(1), dw(1)/dt)` lives in one of eight regions:
//!
//! * `R2` / `R6` — outside the kicker gap (`|w| > d/2`), free tip, model A;
//! * `R4` / `R8` — inside the gap moving faster than `vcr` toward the far
//!   side; with the kick latch armed these run model B (spring + constant
//!   kick force along the motion), otherwise they are plain spring regions;
//! * `R1, R3, R5, R7` — the remaining gap regions, spring only, model C.
//!
//! The latch arms exactly when the tip enters the gap from outside faster
//! than `vcr` (regions `R2 -> R4` or `R6 -> R8`) and clears when the tip
//! crosses `w = 0`, slows to `vcr`, or leaves the gap. Model B is simulated
//! in coordinates relative to the static kick deflection, which turns it
//! into model C plus bookkeeping.

use crate::error::{Error, Result};
use crate::modal::{
    static_deflection, BasisVariant, ModalBasis, StaticDeflection, TransitionMatrix,
};
use crate::params::SystemParams;
use serde::{Deserialize, Serialize};

/// Phase-plane region of the tip state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::R1 => "R1",
            Region::R2 => "R2",
            Region::R3 => "R3",
            Region::R4 => "R4",
            Region::R5 => "R5",
            Region::R6 => "R6",
            Region::R7 => "R7",
            Region::R8 => "R8",
        }
    }

    /// Image under the half-turn symmetry `(w, v) -> (-w, -v)`.
    pub fn mirrored(self) -> Region {
        match self {
            Region::R1 => Region::R5,
            Region::R2 => Region::R6,
            Region::R3 => Region::R7,
            Region::R4 => Region::R8,
            Region::R5 => Region::R1,
            Region::R6 => Region::R2,
            Region::R7 => Region::R3,
            Region::R8 => Region::R4,
        }
    }

    pub fn in_gap(self) -> bool {
        !matches!(self, Region::R2 | Region::R6)
    }
}

/// Which linear beam model is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    /// Free tip, outside the gap.
    A,
    /// Spring tip plus constant kick force.
    B,
    /// Spring tip only.
    C,
}

impl Model {
    pub fn label(self) -> &'static str {
        match self {
            Model::A => "A",
            Model::B => "B",
            Model::C => "C",
        }
    }
}

/// Classify a tip state. Total: every finite `(w, v)` pair maps to exactly
/// one region. Boundaries follow the half-open convention below.
pub fn classify_region(w: f64, v: f64, p: &SystemParams) -> Region {
    let half = 0.5 * p.d;
    if w > half {
        Region::R2
    } else if w < -half {
        Region::R6
    } else if w > 0.0 {
        if v < -p.vcr {
            Region::R4
        } else if v < 0.0 {
            Region::R3
        } else {
            Region::R1
        }
    } else if v > p.vcr {
        Region::R8
    } else if v > 0.0 {
        Region::R7
    } else {
        Region::R5
    }
}

/// Classify a tip state known to be inside the gap, ignoring the gap bounds.
/// Used to refresh the region label of a model-C state between events, where
/// integration error may park the tip a hair outside `[-d/2, d/2]`.
pub fn interior_region(w: f64, v: f64, p: &SystemParams) -> Region {
    if w > 0.0 {
        if v < -p.vcr {
            Region::R4
        } else if v < 0.0 {
            Region::R3
        } else {
            Region::R1
        }
    } else if v > p.vcr {
        Region::R8
    } else if v > 0.0 {
        Region::R7
    } else {
        Region::R5
    }
}

/// Discrete component of the hybrid state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMode {
    pub region: Region,
    pub model: Model,
    pub kick_armed: bool,
    /// Kick direction while model B is active (+1 or -1), else 0.
    pub kick_sign: f64,
}

impl DiscreteMode {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.model {
            Model::A => {
                matches!(self.region, Region::R2 | Region::R6)
                    && !self.kick_armed
                    && self.kick_sign == 0.0
            }
            Model::B => {
                matches!(self.region, Region::R4 | Region::R8)
                    && self.kick_armed
                    && self.kick_sign.abs() == 1.0
            }
            Model::C => self.region.in_gap() && !self.kick_armed && self.kick_sign == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::HybridConsistency(format!("{self:?}")))
        }
    }

    pub fn mirrored(&self) -> DiscreteMode {
        DiscreteMode {
            region: self.region.mirrored(),
            model: self.model,
            kick_armed: self.kick_armed,
            kick_sign: -self.kick_sign,
        }
    }
}

/// Full hybrid state: continuous modal coordinates plus the discrete mode.
///
/// In models A and C the coordinates are absolute (free-tip or spring-tip
/// basis respectively); in model B they are relative to the static kick
/// deflection recorded in `shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub time: f64,
    pub coords: Vec<f64>,
    pub vels: Vec<f64>,
    pub mode: DiscreteMode,
    pub shift: Option<StaticDeflection>,
}

/// Tip-plane boundaries that generate events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    /// `w(1) = d/2`.
    GapHigh,
    /// `w(1) = -d/2`.
    GapLow,
    /// `w(1) = 0`.
    TipZero,
    /// `dw(1)/dt = vcr`.
    VcrPlus,
    /// `dw(1)/dt = -vcr`.
    VcrMinus,
}

impl Boundary {
    pub fn label(self) -> &'static str {
        match self {
            Boundary::GapHigh => "gap_high",
            Boundary::GapLow => "gap_low",
            Boundary::TipZero => "tip_zero",
            Boundary::VcrPlus => "vcr_plus",
            Boundary::VcrMinus => "vcr_minus",
        }
    }

    /// Event function value at a tip state.
    pub fn value(self, w: f64, v: f64, p: &SystemParams) -> f64 {
        match self {
            Boundary::GapHigh => w - 0.5 * p.d,
            Boundary::GapLow => w + 0.5 * p.d,
            Boundary::TipZero => w,
            Boundary::VcrPlus => v - p.vcr,
            Boundary::VcrMinus => v + p.vcr,
        }
    }
}

/// Crossing direction that fires an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

/// An event watched while a given discrete mode is active: the boundary,
/// the firing direction, and the sign the event function holds while the
/// state is strictly inside the current region (used to disambiguate states
/// parked on the boundary right after a transition).
#[derive(Debug, Clone, Copy)]
pub struct WatchedEvent {
    pub boundary: Boundary,
    pub direction: Direction,
    pub inside_sign: f64,
}

const fn ev(boundary: Boundary, direction: Direction, inside_sign: f64) -> WatchedEvent {
    WatchedEvent {
        boundary,
        direction,
        inside_sign,
    }
}

/// Events to watch for the given discrete mode. Only boundaries whose
/// crossing changes the force model are watched; the region label within
/// model C is bookkeeping recomputed from the tip state, not an event
/// source. In model B the tip moves strictly toward zero, so the latch can
/// only end at the zero crossing or the vcr slowdown, never at the gap edge.
pub fn active_events(mode: &DiscreteMode) -> &'static [WatchedEvent] {
    use Boundary::*;
    use Direction::*;
    use Region::*;
    static R2_SET: [WatchedEvent; 1] = [ev(GapHigh, Down, 1.0)];
    static R6_SET: [WatchedEvent; 1] = [ev(GapLow, Up, -1.0)];
    static R4B_SET: [WatchedEvent; 2] = [ev(TipZero, Down, 1.0), ev(VcrMinus, Up, -1.0)];
    static R8B_SET: [WatchedEvent; 2] = [ev(TipZero, Up, -1.0), ev(VcrPlus, Down, 1.0)];
    static C_SET: [WatchedEvent; 2] = [ev(GapHigh, Up, -1.0), ev(GapLow, Down, 1.0)];
    match (mode.model, mode.region) {
        (Model::A, R2) => &R2_SET,
        (Model::A, R6) => &R6_SET,
        (Model::B, R4) => &R4B_SET,
        (Model::B, R8) => &R8B_SET,
        (Model::C, _) => &C_SET,
        _ => &[],
    }
}

/// Continuous-coordinate work required by a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisChange {
    FreeToSpring,
    SpringToFree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KickChange {
    None,
    /// Arm the latch and enter model B with this kick direction.
    Arm(f64),
    Disarm,
}

/// Resolved effect of an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionOutcome {
    pub region: Region,
    pub model: Model,
    pub basis_change: Option<BasisChange>,
    pub kick: KickChange,
}

/// Decide the successor mode for an event fired at tip velocity `v`.
pub fn resolve_transition(
    mode: &DiscreteMode,
    boundary: Boundary,
    direction: Direction,
    v_tip: f64,
    p: &SystemParams,
) -> Result<TransitionOutcome> {
    use Boundary::*;
    use Direction::*;
    use Model::*;
    use Region::*;
    let outcome = match (mode.model, mode.region, boundary, direction) {
        // Gap entry from outside: classify by speed; arm the latch only when
        // the tip arrives faster than vcr.
        (A, R2, GapHigh, Down) => {
            let (region, model, kick) = if v_tip < -p.vcr {
                (R4, B, KickChange::Arm(-1.0))
            } else if v_tip < 0.0 {
                (R3, C, KickChange::None)
            } else {
                (R1, C, KickChange::None)
            };
            TransitionOutcome {
                region,
                model,
                basis_change: Some(BasisChange::FreeToSpring),
                kick,
            }
        }
        (A, R6, GapLow, Up) => {
            let (region, model, kick) = if v_tip > p.vcr {
                (R8, B, KickChange::Arm(1.0))
            } else if v_tip > 0.0 {
                (R7, C, KickChange::None)
            } else {
                (R5, C, KickChange::None)
            };
            TransitionOutcome {
                region,
                model,
                basis_change: Some(BasisChange::FreeToSpring),
                kick,
            }
        }
        // Gap exit (any interior region label).
        (C, _, GapHigh, Up) => TransitionOutcome {
            region: R2,
            model: A,
            basis_change: Some(BasisChange::SpringToFree),
            kick: KickChange::None,
        },
        (C, _, GapLow, Down) => TransitionOutcome {
            region: R6,
            model: A,
            basis_change: Some(BasisChange::SpringToFree),
            kick: KickChange::None,
        },
        // Kick shutoff: zero crossing or slowdown to vcr.
        (B, R4, TipZero, Down) => TransitionOutcome {
            region: R5,
            model: C,
            basis_change: None,
            kick: KickChange::Disarm,
        },
        (B, R4, VcrMinus, Up) => TransitionOutcome {
            region: R3,
            model: C,
            basis_change: None,
            kick: KickChange::Disarm,
        },
        (B, R8, TipZero, Up) => TransitionOutcome {
            region: R1,
            model: C,
            basis_change: None,
            kick: KickChange::Disarm,
        },
        (B, R8, VcrPlus, Down) => TransitionOutcome {
            region: R7,
            model: C,
            basis_change: None,
            kick: KickChange::Disarm,
        },
        _ => {
            return Err(Error::EventConsistency {
                time: f64::NAN,
                detail: format!(
                    "no transition from {:?}/{:?} via {}/{:?}",
                    mode.model,
                    mode.region,
                    boundary.label(),
                    direction
                ),
            })
        }
    };
    Ok(outcome)
}

/// Diagonal-plus-rank-one modal dynamics shared by all three linear models:
/// `qdd_j = -omega_j^2 q_j - (cv + cm omega_j^2) qd_j + (m cv + k cm) T_j sum_i T_i qd_i`
/// where `T` is the vector of tip values of the active basis.
#[derive(Debug, Clone)]
pub struct LinearModalDynamics {
    pub omega_sq: Vec<f64>,
    pub damp_diag: Vec<f64>,
    pub rank1: f64,
    pub tips: Vec<f64>,
}

impl LinearModalDynamics {
    pub fn from_basis(basis: &ModalBasis, params: &SystemParams) -> Self {
        let omega_sq: Vec<f64> = basis.modes().iter().map(|m| m.omega * m.omega).collect();
        let damp_diag: Vec<f64> = omega_sq.iter().map(|&w2| params.cv + params.cm * w2).collect();
        Self {
            omega_sq,
            damp_diag,
            rank1: params.m * params.cv + basis.k_eff * params.cm,
            tips: basis.tip_values(),
        }
    }

    #[inline]
    pub fn accel(&self, q: &[f64], v: &[f64], out: &mut [f64]) {
        let mut s = 0.0;
        for (t, vi) in self.tips.iter().zip(v) {
            s += t * vi;
        }
        let pump = self.rank1 * s;
        for j in 0..out.len() {
            out[j] = -self.omega_sq[j] * q[j] - self.damp_diag[j] * v[j] + pump * self.tips[j];
        }
    }

    /// Dissipation rate `cv \int wd^2 + cm \int (wd'')^2` expressed in modal
    /// coordinates (exact via the orthonormality identities).
    pub fn dissipation_rate(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        let mut diag = 0.0;
        for j in 0..v.len() {
            s += self.tips[j] * v[j];
            diag += self.damp_diag[j] * v[j] * v[j];
        }
        diag - self.rank1 * s * s
    }
}

/// Full-order hybrid system: both modal bases, the basis-change matrix, and
/// the static-shift projection for model B.
#[derive(Debug, Clone)]
pub struct FosSystem {
    params: SystemParams,
    free: ModalBasis,
    spring: ModalBasis,
    transition: TransitionMatrix,
    free_dyn: LinearModalDynamics,
    spring_dyn: LinearModalDynamics,
    /// Spring-basis projection of the positive-sign static deflection per
    /// unit kick force, `s_j / F = xi_j(1) / omega_j^2`.
    shift_unit: Vec<f64>,
}

impl FosSystem {
    pub fn build(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let free = ModalBasis::build(BasisVariant::FreeTip, params)?;
        let spring = ModalBasis::build(BasisVariant::SpringTip, params)?;
        let transition = TransitionMatrix::compute(&free, &spring)?;
        let free_dyn = LinearModalDynamics::from_basis(&free, params);
        let spring_dyn = LinearModalDynamics::from_basis(&spring, params);
        let unit = static_deflection(&params.with_kick(1.0), 1.0);
        let shift_unit = spring.project(|x| unit.eval(x, 0), unit.tip());
        Ok(Self {
            params: params.clone(),
            free,
            spring,
            transition,
            free_dyn,
            spring_dyn,
            shift_unit,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn free_basis(&self) -> &ModalBasis {
        &self.free
    }

    pub fn spring_basis(&self) -> &ModalBasis {
        &self.spring
    }

    pub fn transition_matrix(&self) -> &TransitionMatrix {
        &self.transition
    }

    /// Spring-basis coefficients of the positive-sign static kick shift.
    pub fn shift_coefficients(&self) -> Vec<f64> {
        self.shift_unit.iter().map(|s| s * self.params.f).collect()
    }

    /// Basis active for a discrete mode.
    pub fn basis_for(&self, model: Model) -> &ModalBasis {
        match model {
            Model::A => &self.free,
            _ => &self.spring,
        }
    }

    /// Rebuild for a different kick strength. Bases, the transition matrix,
    /// and the unit shift do not depend on `F`, so this is a cheap copy.
    pub fn with_kick(&self, f: f64) -> Self {
        let mut out = self.clone();
        out.params.f = f;
        out
    }

    /// Default initial condition: first spring-tip mode displaced to a tip
    /// deflection of `d/4`, at rest.
    pub fn default_initial(&self) -> HybridState {
        let n = self.spring.len();
        let mut coords = vec![0.0; n];
        coords[0] = 0.25 * self.params.d / self.spring.mode(0).tip;
        let w = 0.25 * self.params.d;
        let region = classify_region(w, 0.0, &self.params);
        HybridState {
            time: 0.0,
            coords,
            vels: vec![0.0; n],
            mode: DiscreteMode {
                region,
                model: Model::C,
                kick_armed: false,
                kick_sign: 0.0,
            },
            shift: None,
        }
    }

    /// Launch initial condition: first free-tip mode displaced to a tip
    /// deflection of `2d`, at rest, outside the gap. Falling in from here
    /// crosses the gap edge well above `vcr`, so the kick arms on first
    /// entry and the trajectory feeds the sustained response. The default
    /// (at-rest, inside) state decays to equilibrium under heavy damping
    /// before any modal exchange can push the tip out to the gap edge, so
    /// steady-state studies seed from this one instead.
    pub fn launch_initial(&self) -> HybridState {
        let n = self.free.len();
        let mut coords = vec![0.0; n];
        coords[0] = 2.0 * self.params.d / self.free.mode(0).tip;
        HybridState {
            time: 0.0,
            coords,
            vels: vec![0.0; n],
            mode: DiscreteMode {
                region: Region::R2,
                model: Model::A,
                kick_armed: false,
                kick_sign: 0.0,
            },
            shift: None,
        }
    }

    /// Rebind a state carried over from a run at kick strength `f_old` to
    /// this system's kick. Model-B coordinates are measured relative to an
    /// F-scaled static shift, so the absolute field is preserved by
    /// re-expressing them about the new shift; other models carry over
    /// unchanged. This is what makes branch-following continuation across F
    /// seamless.
    pub fn adopt_state(&self, state: &HybridState, f_old: f64) -> HybridState {
        let mut out = state.clone();
        if out.mode.model == Model::B {
            let scale = out.mode.kick_sign * (f_old - self.params.f);
            for (c, s) in out.coords.iter_mut().zip(&self.shift_unit) {
                *c += scale * s;
            }
            out.shift = Some(static_deflection(&self.params, out.mode.kick_sign));
        }
        out
    }

    /// Mirror a state through the half-turn symmetry.
    pub fn mirrored_state(&self, state: &HybridState) -> HybridState {
        HybridState {
            time: state.time,
            coords: state.coords.iter().map(|c| -c).collect(),
            vels: state.vels.iter().map(|v| -v).collect(),
            mode: state.mode.mirrored(),
            shift: state.shift.map(|s| static_deflection(&self.params, -s.sign)),
        }
    }
}

/// Interface the event-driven integrator needs from a hybrid model.
///
/// Implemented by the full-order system here and by the reduced-order
/// system, so both run through identical event machinery.
pub trait HybridSystem {
    /// Number of second-order coordinates.
    fn dim(&self) -> usize;

    fn params(&self) -> &SystemParams;

    /// Acceleration for the given discrete mode. Model B uses coordinates
    /// relative to its static shift for the full-order system, or an
    /// explicit constant load for the reduced system; either way the
    /// signature is the same.
    fn accel(&self, mode: &DiscreteMode, q: &[f64], v: &[f64], out: &mut [f64]);

    /// Absolute tip displacement and velocity.
    fn tip(&self, mode: &DiscreteMode, q: &[f64], v: &[f64]) -> (f64, f64);

    /// Apply a resolved transition to the continuous state.
    fn apply_transition(&self, state: &mut HybridState, outcome: &TransitionOutcome) -> Result<()>;

    /// Mechanical energy (kinetic + strain + gap-spring potential). The
    /// spring potential saturates at `k d^2 / 8` outside the gap so the
    /// total is continuous across gap crossings.
    fn total_energy(&self, state: &HybridState) -> f64;

    /// Instantaneous dissipation rate for the active mode.
    fn dissipation_rate(&self, mode: &DiscreteMode, v: &[f64]) -> f64;

    /// Instantaneous kick input power (zero unless model B is active).
    fn input_power(&self, mode: &DiscreteMode, q: &[f64], v: &[f64]) -> f64;

    /// Consistency between discrete mode and continuous coordinates.
    fn validate_state(&self, state: &HybridState) -> Result<()>;
}

/// Tolerance for mode/region consistency checks: reconstruction and
/// projection leave tip values within this distance of a boundary after a
/// transition.
pub const CONSISTENCY_TOL: f64 = 1e-5;

/// Whether a tip state `(w, v)` is compatible with the claimed region, up to
/// `tol` of slack at each boundary. Shared by every `HybridSystem`
/// implementation's state validation.
pub fn region_consistent(region: Region, w: f64, v: f64, p: &SystemParams, tol: f64) -> bool {
    let half = 0.5 * p.d;
    match region {
        Region::R2 => w > half - tol,
        Region::R6 => w < -half + tol,
        Region::R1 => w > -tol && w < half + tol && v > -tol,
        Region::R3 => w > -tol && w < half + tol && v < tol && v > -p.vcr - tol,
        Region::R4 => w > -tol && w < half + tol && v < -p.vcr + tol,
        Region::R5 => w < tol && w > -half - tol && v < tol,
        Region::R7 => w < tol && w > -half - tol && v > -tol && v < p.vcr + tol,
        Region::R8 => w < tol && w > -half - tol && v > p.vcr - tol,
    }
}

impl HybridSystem for FosSystem {
    fn dim(&self) -> usize {
        self.spring.len()
    }

    fn params(&self) -> &SystemParams {
        &self.params
    }

    #[inline]
    fn accel(&self, mode: &DiscreteMode, q: &[f64], v: &[f64], out: &mut [f64]) {
        match mode.model {
            Model::A => self.free_dyn.accel(q, v, out),
            _ => self.spring_dyn.accel(q, v, out),
        }
    }

    fn tip(&self, mode: &DiscreteMode, q: &[f64], v: &[f64]) -> (f64, f64) {
        let dynamics = match mode.model {
            Model::A => &self.free_dyn,
            _ => &self.spring_dyn,
        };
        let mut w = 0.0;
        let mut vd = 0.0;
        for j in 0..q.len() {
            w += dynamics.tips[j] * q[j];
            vd += dynamics.tips[j] * v[j];
        }
        if mode.model == Model::B {
            w += mode.kick_sign * self.params.f / (3.0 + self.params.k);
        }
        (w, vd)
    }

    fn apply_transition(&self, state: &mut HybridState, outcome: &TransitionOutcome) -> Result<()> {
        // Leaving model B first restores absolute spring-basis coordinates.
        if state.mode.model == Model::B {
            let scale = state.mode.kick_sign * self.params.f;
            for (c, s) in state.coords.iter_mut().zip(&self.shift_unit) {
                *c += scale * s;
            }
            state.shift = None;
        }
        if let Some(change) = outcome.basis_change {
            let mut mapped = vec![0.0; self.dim()];
            match change {
                BasisChange::FreeToSpring => {
                    self.transition.free_to_spring(&state.coords, &mut mapped);
                    state.coords.copy_from_slice(&mapped);
                    self.transition.free_to_spring(&state.vels, &mut mapped);
                    state.vels.copy_from_slice(&mapped);
                }
                BasisChange::SpringToFree => {
                    self.transition.spring_to_free(&state.coords, &mut mapped);
                    state.coords.copy_from_slice(&mapped);
                    self.transition.spring_to_free(&state.vels, &mut mapped);
                    state.vels.copy_from_slice(&mapped);
                }
            }
        }
        let mut kick_sign = 0.0;
        let mut kick_armed = false;
        if let KickChange::Arm(sign) = outcome.kick {
            let scale = sign * self.params.f;
            for (c, s) in state.coords.iter_mut().zip(&self.shift_unit) {
                *c -= scale * s;
            }
            state.shift = Some(static_deflection(&self.params, sign));
            kick_sign = sign;
            kick_armed = true;
        }
        state.mode = DiscreteMode {
            region: outcome.region,
            model: outcome.model,
            kick_armed,
            kick_sign,
        };
        state.mode.validate()
    }

    fn total_energy(&self, state: &HybridState) -> f64 {
        let p = &self.params;
        match state.mode.model {
            Model::A => {
                let ke: f64 = 0.5 * state.vels.iter().map(|v| v * v).sum::<f64>();
                let pe: f64 = 0.5
                    * state
                        .coords
                        .iter()
                        .zip(&self.free_dyn.omega_sq)
                        .map(|(q, w2)| w2 * q * q)
                        .sum::<f64>();
                // Saturated gap-spring potential.
                ke + pe + 0.125 * p.k * p.d * p.d
            }
            Model::C => {
                let ke: f64 = 0.5 * state.vels.iter().map(|v| v * v).sum::<f64>();
                let pe: f64 = 0.5
                    * state
                        .coords
                        .iter()
                        .zip(&self.spring_dyn.omega_sq)
                        .map(|(q, w2)| w2 * q * q)
                        .sum::<f64>();
                ke + pe
            }
            Model::B => {
                let scale = state.mode.kick_sign * self.params.f;
                let ke: f64 = 0.5 * state.vels.iter().map(|v| v * v).sum::<f64>();
                let pe: f64 = 0.5
                    * state
                        .coords
                        .iter()
                        .zip(&self.shift_unit)
                        .zip(&self.spring_dyn.omega_sq)
                        .map(|((u, s), w2)| {
                            let a = u + scale * s;
                            w2 * a * a
                        })
                        .sum::<f64>();
                ke + pe
            }
        }
    }

    fn dissipation_rate(&self, mode: &DiscreteMode, v: &[f64]) -> f64 {
        match mode.model {
            Model::A => self.free_dyn.dissipation_rate(v),
            _ => self.spring_dyn.dissipation_rate(v),
        }
    }

    fn input_power(&self, mode: &DiscreteMode, _q: &[f64], v: &[f64]) -> f64 {
        if mode.model != Model::B {
            return 0.0;
        }
        let vd: f64 = self
            .spring_dyn
            .tips
            .iter()
            .zip(v)
            .map(|(t, vi)| t * vi)
            .sum();
        mode.kick_sign * self.params.f * vd
    }

    fn validate_state(&self, state: &HybridState) -> Result<()> {
        state.mode.validate()?;
        if state.coords.len() != self.dim() || state.vels.len() != self.dim() {
            return Err(Error::HybridConsistency(format!(
                "coordinate length {} does not match basis size {}",
                state.coords.len(),
                self.dim()
            )));
        }
        let has_shift = state.shift.is_some();
        if has_shift != (state.mode.model == Model::B) {
            return Err(Error::HybridConsistency(
                "static shift must be present exactly while model B is active".into(),
            ));
        }
        if let Some(s) = &state.shift {
            if s.sign != state.mode.kick_sign {
                return Err(Error::HybridConsistency(
                    "shift direction disagrees with kick sign".into(),
                ));
            }
        }
        let (w, v) = self.tip(&state.mode, &state.coords, &state.vels);
        if !region_consistent(state.mode.region, w, v, &self.params, CONSISTENCY_TOL) {
            return Err(Error::HybridConsistency(format!(
                "tip state (w = {w:.6e}, v = {v:.6e}) inconsistent with {:?}",
                state.mode.region
            )));
        }
        Ok(())
    }
}
