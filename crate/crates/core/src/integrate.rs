//! Event-driven adaptive integration of the hybrid beam models.
//!
//! The continuous flow is advanced with the Dormand-Prince 5(4) embedded
//! pair. After every accepted step the watched boundary functions are
//! checked for sign changes; a fired event is localized by bisection in
//! time (re-integrating a single partial step from the accepted step's
//! start), the earliest event wins, its transition is applied, and
//! integration resumes from the event point. Section crossings
//! (`w(1) = d/2` with negative tip velocity) and the mirrored crossings are
//! recorded as they occur.
//!
//! Kick input work and dissipated work are carried as two extra integrated
//! states, so energy audits hold to integrator accuracy rather than
//! sampling accuracy.

use crate::error::{Error, Result};
use crate::hybrid::{
    active_events, interior_region, resolve_transition, Boundary, Direction, HybridState,
    HybridSystem, Model,
    Region, WatchedEvent,
};
use serde::{Deserialize, Serialize};

/// Tolerances and guards for the adaptive stepper.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Event localization tolerance in time.
    pub event_tol: f64,
    /// Steps below this size abort with an integration-stall error.
    pub min_step: f64,
    /// Maximum number of transitions allowed within one event-tolerance
    /// window before the run is declared stalled (chatter guard).
    pub max_transitions_per_instant: usize,
    /// Hard cap on accepted steps.
    pub max_steps: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 1e-2,
            event_tol: 1e-10,
            min_step: 1e-13,
            max_transitions_per_instant: 12,
            max_steps: 200_000_000,
        }
    }
}

/// Uniform-grid sampling requests. Windows are absolute time intervals;
/// samples land exactly on `start + j / rate`.
#[derive(Debug, Clone, Default)]
pub struct SampleSpec {
    pub rate: f64,
    /// Window for modal-coordinate (field) samples.
    pub fields: Option<(f64, f64)>,
    /// Window for tip displacement/velocity samples.
    pub tip: Option<(f64, f64)>,
}

impl SampleSpec {
    pub fn none() -> Self {
        Self {
            rate: 1000.0,
            fields: None,
            tip: None,
        }
    }

    pub fn fields_in(rate: f64, start: f64, end: f64) -> Self {
        Self {
            rate,
            fields: Some((start, end)),
            tip: None,
        }
    }

    pub fn tip_in(rate: f64, start: f64, end: f64) -> Self {
        Self {
            rate,
            fields: None,
            tip: Some((start, end)),
        }
    }
}

/// One applied transition, with the tip state at the event instant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub time: f64,
    pub boundary: Boundary,
    pub direction: Direction,
    pub region_before: Region,
    pub region_after: Region,
    pub model_before: Model,
    pub model_after: Model,
    pub kick_armed: bool,
    pub kick_sign: f64,
    pub w_tip: f64,
    pub v_tip: f64,
}

/// Poincare section crossing: `w(1) = d/2` with `v = dw(1)/dt < 0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SectionCrossing {
    pub time: f64,
    pub v_tip: f64,
}

/// Maximal interval with the kick force on.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KickInterval {
    pub t_on: f64,
    pub t_off: f64,
    pub sign: f64,
}

/// Modal-coordinate samples on the uniform grid. Coordinates are stored
/// raw, together with the active model and kick sign per sample, so the
/// absolute field can be reconstructed afterwards.
#[derive(Debug, Clone, Default)]
pub struct FieldSamples {
    pub times: Vec<f64>,
    pub dim: usize,
    coords: Vec<f64>,
    vels: Vec<f64>,
    pub models: Vec<Model>,
    pub kick_signs: Vec<f64>,
}

impl FieldSamples {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn coords(&self, sample: usize) -> &[f64] {
        &self.coords[sample * self.dim..(sample + 1) * self.dim]
    }

    pub fn vels(&self, sample: usize) -> &[f64] {
        &self.vels[sample * self.dim..(sample + 1) * self.dim]
    }
}

/// Tip displacement and velocity on the uniform grid.
#[derive(Debug, Clone, Default)]
pub struct TipSamples {
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SimStats {
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub events: u64,
    pub rhs_evals: u64,
    pub wall_seconds: f64,
}

/// Everything produced by one integration run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub final_state: HybridState,
    pub crossings: Vec<SectionCrossing>,
    pub mirror_crossings: Vec<SectionCrossing>,
    pub transitions: Vec<TransitionRecord>,
    pub field_samples: Option<FieldSamples>,
    pub tip_samples: Option<TipSamples>,
    /// Kick work put into the beam over the run.
    pub work_input: f64,
    /// Work removed by material and viscous damping over the run.
    pub work_dissipated: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    /// True when the crossing callback requested an early halt.
    pub halted: bool,
    pub stats: SimStats,
}

impl SimOutput {
    /// Maximal kick-on intervals reconstructed from the transition trace.
    pub fn kick_intervals(&self) -> Result<Vec<KickInterval>> {
        kick_intervals(&self.transitions, self.final_state.time)
    }
}

/// Reconstruct kick-on intervals from a transition trace. An interval still
/// open at the end of the trace is closed at `t_final`.
pub fn kick_intervals(records: &[TransitionRecord], t_final: f64) -> Result<Vec<KickInterval>> {
    let mut out = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for r in records {
        let was_b = r.model_before == Model::B;
        let is_b = r.model_after == Model::B;
        if !was_b && is_b {
            if open.is_some() {
                return Err(Error::EventConsistency {
                    time: r.time,
                    detail: "kick armed while already armed".into(),
                });
            }
            open = Some((r.time, r.kick_sign));
        } else if was_b && !is_b {
            let (t_on, sign) = open.take().ok_or(Error::EventConsistency {
                time: r.time,
                detail: "kick released while not armed".into(),
            })?;
            out.push(KickInterval {
                t_on,
                t_off: r.time,
                sign,
            });
        }
    }
    if let Some((t_on, sign)) = open {
        out.push(KickInterval {
            t_on,
            t_off: t_final,
            sign,
        });
    }
    Ok(out)
}

/// Event functions within this distance of zero are resolved by the region
/// label rather than their floating-point sign: basis changes and shift
/// bookkeeping park post-transition states on boundaries with a small
/// projection residue, and the label is the authority on which side the
/// automaton is on. Matches the mode/region consistency tolerance.
const ON_BOUNDARY_EPS: f64 = crate::hybrid::CONSISTENCY_TOL;

/// Absolute slack when matching committed times against the sample grid.
const GRID_EPS: f64 = 1e-9;

// Dormand-Prince 5(4) tableau.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Workspace {
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    trial: Vec<f64>,
    probe: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
            trial: vec![0.0; dim],
            probe: vec![0.0; dim],
        }
    }
}

struct Cursor {
    start: f64,
    end: f64,
    dt: f64,
    next: u64,
}

impl Cursor {
    fn new(window: Option<(f64, f64)>, rate: f64) -> Option<Self> {
        let (start, end) = window?;
        if !(rate > 0.0) || end < start {
            return None;
        }
        Some(Self {
            start,
            end,
            dt: 1.0 / rate,
            next: 0,
        })
    }

    fn next_time(&self) -> Option<f64> {
        let t = self.start + self.next as f64 * self.dt;
        (t <= self.end + GRID_EPS).then_some(t)
    }

    fn advance(&mut self) {
        self.next += 1;
    }
}

/// Integrate with default (no-op) crossing callback.
pub fn simulate<S: HybridSystem>(
    sys: &S,
    initial: &HybridState,
    horizon: f64,
    cfg: &IntegratorConfig,
    samples: &SampleSpec,
) -> Result<SimOutput> {
    integrate_with(sys, initial, horizon, cfg, samples, |_| true)
}

/// Integrate for `horizon` time units past the initial state's clock,
/// invoking `on_crossing` at every section crossing; returning `false`
/// halts the run early.
pub fn integrate_with<S, C>(
    sys: &S,
    initial: &HybridState,
    horizon: f64,
    cfg: &IntegratorConfig,
    samples: &SampleSpec,
    mut on_crossing: C,
) -> Result<SimOutput>
where
    S: HybridSystem,
    C: FnMut(&SectionCrossing) -> bool,
{
    let wall_start = std::time::Instant::now();
    sys.validate_state(initial)?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::Input(format!("horizon must be >= 0, got {horizon}")));
    }
    let n = sys.dim();
    let dim = 2 * n + 2; // coords, velocities, input work, dissipated work
    let mut state = initial.clone();
    let t_end = initial.time + horizon;

    let mut y = vec![0.0; dim];
    y[..n].copy_from_slice(&state.coords);
    y[n..2 * n].copy_from_slice(&state.vels);

    let mut ws = Workspace::new(dim);
    let mut stats = SimStats::default();
    let mut field_cursor = Cursor::new(samples.fields, samples.rate);
    let mut tip_cursor = Cursor::new(samples.tip, samples.rate);
    let mut fields = samples.fields.map(|_| FieldSamples {
        dim: n,
        ..FieldSamples::default()
    });
    let mut tips = samples.tip.map(|_| TipSamples::default());

    let mut crossings = Vec::new();
    let mut mirror_crossings = Vec::new();
    let mut transitions = Vec::new();
    let mut halted = false;

    let energy_initial = sys.total_energy(&state);
    let mut t = state.time;
    let mut h_ctrl = cfg.max_step.min(1e-3);
    let mut last_event_t = f64::NEG_INFINITY;
    let mut events_at_instant = 0usize;

    let rhs = |sys: &S,
               mode: &crate::hybrid::DiscreteMode,
               y: &[f64],
               dy: &mut [f64],
               stats: &mut SimStats| {
        let (q, rest) = y.split_at(n);
        let v = &rest[..n];
        let (dq, drest) = dy.split_at_mut(n);
        dq.copy_from_slice(v);
        sys.accel(mode, q, v, &mut drest[..n]);
        drest[n] = sys.input_power(mode, q, v);
        drest[n + 1] = sys.dissipation_rate(mode, v);
        stats.rhs_evals += 1;
    };

    // One RK step of size h from `y`, using the cached k1; fills `out` with
    // the fifth-order solution and returns the embedded error estimate
    // normalized against the tolerances (err <= 1 means acceptable).
    macro_rules! rk_step {
        ($h:expr, $out:expr, $with_err:expr) => {{
            let h = $h;
            for s in 1..6 {
                let a: &[f64] = match s {
                    1 => &A2,
                    2 => &A3,
                    3 => &A4,
                    4 => &A5,
                    _ => &A6,
                };
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, aj) in a.iter().enumerate() {
                        acc += aj * ws.k[j][i];
                    }
                    ws.stage[i] = y[i] + h * acc;
                }
                let (_, tail) = ws.k.split_at_mut(s);
                rhs(sys, &state.mode, &ws.stage, &mut tail[0], &mut stats);
            }
            for i in 0..dim {
                let mut acc = 0.0;
                for j in 0..6 {
                    acc += B5[j] * ws.k[j][i];
                }
                $out[i] = y[i] + h * acc;
            }
            if $with_err {
                // k7 at the new point for the embedded estimate.
                let (_, tail) = ws.k.split_at_mut(6);
                rhs(sys, &state.mode, $out, &mut tail[0], &mut stats);
                let mut err_sq = 0.0;
                for i in 0..dim {
                    let mut e = 0.0;
                    for j in 0..7 {
                        e += ERR[j] * ws.k[j][i];
                    }
                    let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max($out[i].abs());
                    let r = h * e / sc;
                    err_sq += r * r;
                }
                (err_sq / dim as f64).sqrt()
            } else {
                0.0
            }
        }};
    }

    macro_rules! tip_of {
        ($y:expr) => {
            sys.tip(&state.mode, &$y[..n], &$y[n..2 * n])
        };
    }

    'outer: loop {
        // Flush any sample-grid points reached (or passed within slack).
        if let (Some(c), Some(store)) = (field_cursor.as_mut(), fields.as_mut()) {
            while let Some(ts) = c.next_time() {
                if ts > t + GRID_EPS {
                    break;
                }
                store.times.push(ts);
                store.coords.extend_from_slice(&state.coords);
                store.vels.extend_from_slice(&state.vels);
                store.models.push(state.mode.model);
                store.kick_signs.push(state.mode.kick_sign);
                c.advance();
            }
        }
        if let (Some(c), Some(store)) = (tip_cursor.as_mut(), tips.as_mut()) {
            while let Some(ts) = c.next_time() {
                if ts > t + GRID_EPS {
                    break;
                }
                let (w, v) = tip_of!(y);
                store.times.push(ts);
                store.w.push(w);
                store.v.push(v);
                c.advance();
            }
        }
        if t >= t_end - 1e-12 || halted {
            break;
        }
        if stats.steps_accepted + stats.events > cfg.max_steps {
            return Err(Error::IntegrationStall {
                time: t,
                detail: format!("step budget of {} exhausted", cfg.max_steps),
            });
        }

        // Next mandatory stop: sample-grid point or the final time.
        let mut t_stop = t_end;
        for c in [&field_cursor, &tip_cursor].into_iter().flatten() {
            if let Some(ts) = c.next_time() {
                if ts > t + GRID_EPS {
                    t_stop = t_stop.min(ts);
                }
            }
        }

        rhs(sys, &state.mode, &y, &mut ws.k[0], &mut stats);

        // Attempt/reject loop.
        let mut h;
        let err = loop {
            h = h_ctrl.min(cfg.max_step).min(t_stop - t);
            if h < cfg.min_step {
                return Err(Error::IntegrationStall {
                    time: t,
                    detail: format!("step size fell to {h:e}"),
                });
            }
            let err = rk_step!(h, &mut ws.trial, true);
            if err.is_finite() && err <= 1.0 {
                break err;
            }
            stats.steps_rejected += 1;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.1)
            } else {
                0.1
            };
            h_ctrl = h * fac;
        };
        let capped = h < h_ctrl * (1.0 - 1e-12);

        // Event detection on the accepted interval.
        let (w0, v0) = tip_of!(y);
        let (w1, v1) = tip_of!(ws.trial);
        let watched = active_events(&state.mode);
        let p = sys.params();
        let mut earliest: Option<(f64, &WatchedEvent)> = None;
        for ev in watched {
            let g0 = ev.boundary.value(w0, v0, p);
            let g1 = ev.boundary.value(w1, v1, p);
            let side0 = if g0.abs() <= ON_BOUNDARY_EPS {
                ev.inside_sign
            } else {
                g0.signum()
            };
            let fired = match ev.direction {
                Direction::Up => side0 < 0.0 && g1 > 0.0,
                Direction::Down => side0 > 0.0 && g1 < 0.0,
            };
            if !fired {
                continue;
            }
            // Bisect on the sub-step time; invariant: boundary not yet
            // (strictly) crossed at lo, strictly crossed at hi.
            let mut lo = 0.0;
            let mut hi = h;
            while hi - lo > cfg.event_tol {
                let mid = 0.5 * (lo + hi);
                rk_step!(mid, &mut ws.probe, false);
                let (wm, vm) = tip_of!(ws.probe);
                let gm = ev.boundary.value(wm, vm, p);
                let crossed = match ev.direction {
                    Direction::Up => gm > 0.0,
                    Direction::Down => gm < 0.0,
                };
                if crossed {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            if earliest.map_or(true, |(dt, _)| hi < dt) {
                earliest = Some((hi, ev));
            }
        }

        if let Some((dt_e, ev)) = earliest {
            // Land exactly on the event point and apply the transition.
            rk_step!(dt_e, &mut ws.probe, false);
            let t_e = t + dt_e;
            y.copy_from_slice(&ws.probe);
            state.coords.copy_from_slice(&y[..n]);
            state.vels.copy_from_slice(&y[n..2 * n]);
            state.time = t_e;
            t = t_e;

            if t_e - last_event_t < cfg.event_tol {
                events_at_instant += 1;
                if events_at_instant > cfg.max_transitions_per_instant {
                    return Err(Error::IntegrationStall {
                        time: t_e,
                        detail: "event chatter: too many transitions at one instant".into(),
                    });
                }
            } else {
                events_at_instant = 1;
            }
            last_event_t = t_e;

            let (w_e, v_e) = tip_of!(y);
            let before = state.mode;
            let outcome = resolve_transition(&before, ev.boundary, ev.direction, v_e, p)
                .map_err(|e| match e {
                    Error::EventConsistency { detail, .. } => {
                        Error::EventConsistency { time: t_e, detail }
                    }
                    other => other,
                })?;
            sys.apply_transition(&mut state, &outcome)?;
            y[..n].copy_from_slice(&state.coords);
            y[n..2 * n].copy_from_slice(&state.vels);
            stats.events += 1;
            transitions.push(TransitionRecord {
                time: t_e,
                boundary: ev.boundary,
                direction: ev.direction,
                region_before: before.region,
                region_after: state.mode.region,
                model_before: before.model,
                model_after: state.mode.model,
                kick_armed: state.mode.kick_armed,
                kick_sign: state.mode.kick_sign,
                w_tip: w_e,
                v_tip: v_e,
            });
            if ev.boundary == Boundary::GapHigh && ev.direction == Direction::Down && v_e < 0.0 {
                let crossing = SectionCrossing {
                    time: t_e,
                    v_tip: v_e,
                };
                crossings.push(crossing);
                if !on_crossing(&crossing) {
                    halted = true;
                }
            } else if ev.boundary == Boundary::GapLow
                && ev.direction == Direction::Up
                && v_e > 0.0
            {
                mirror_crossings.push(SectionCrossing {
                    time: t_e,
                    v_tip: v_e,
                });
            }
            continue 'outer;
        }

        // Commit the step.
        std::mem::swap(&mut y, &mut ws.trial);
        t = if (t + h - t_stop).abs() <= GRID_EPS {
            t_stop
        } else {
            t + h
        };
        state.coords.copy_from_slice(&y[..n]);
        state.vels.copy_from_slice(&y[n..2 * n]);
        state.time = t;
        if state.mode.model == Model::C {
            state.mode.region = interior_region(w1, v1, p);
        }
        stats.steps_accepted += 1;
        if !y[..2 * n].iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationStall {
                time: t,
                detail: "state became non-finite".into(),
            });
        }
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        let h_new = h * fac;
        h_ctrl = if capped { h_ctrl.max(h_new) } else { h_new };
    }

    let energy_final = sys.total_energy(&state);
    stats.wall_seconds = wall_start.elapsed().as_secs_f64();
    Ok(SimOutput {
        final_state: state,
        crossings,
        mirror_crossings,
        transitions,
        field_samples: fields,
        tip_samples: tips,
        work_input: y[2 * n],
        work_dissipated: y[2 * n + 1],
        energy_initial,
        energy_final,
        halted,
        stats,
    })
}
