//! Steady-state detection from Poincare-section crossings.
//!
//! A trajectory's long-term behaviour is summarized by the tip velocities
//! recorded each time it crosses the section (w(1) = d/2 moving inward).
//! Periodic orbits visit a short cycle of section velocities; chaotic ones
//! scatter; decayed ones stop crossing altogether.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hybrid::{HybridState, HybridSystem};
use crate::integrate::{
    integrate_with, IntegratorConfig, SampleSpec, SectionCrossing, SimStats,
};

/// Long-term classification of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SteadyStateClass {
    /// Periodic orbit crossing the section `n` times per period.
    PeriodN(usize),
    /// More distinct section values than any admissible period.
    Chaotic,
    /// No section crossings and negligible mechanical energy.
    StaticEquilibrium,
    /// Not classified within the observation budget.
    Unresolved,
}

impl SteadyStateClass {
    pub fn label(&self) -> String {
        match self {
            SteadyStateClass::PeriodN(n) => format!("period_{n}"),
            SteadyStateClass::Chaotic => "chaotic".to_string(),
            SteadyStateClass::StaticEquilibrium => "static".to_string(),
            SteadyStateClass::Unresolved => "unresolved".to_string(),
        }
    }
}

/// Classification plus the evidence it was based on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadyStateInfo {
    pub classification: SteadyStateClass,
    /// Section-to-section return time summed over one full cycle
    /// (periodic classifications only).
    pub period: Option<f64>,
    /// Representative section velocities: the cycle's cluster centers for
    /// periodic orbits, the first recorded crossings for chaotic ones.
    pub section_values: Vec<f64>,
    /// Crossings inspected after the transient cut.
    pub crossings_used: usize,
}

/// Tunables for steady-state detection and the driver around it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadyConfig {
    /// Time discarded before any classification is attempted.
    pub transient: f64,
    /// Measurement window appended per attempt after the transient.
    pub measure: f64,
    /// Hard cap on total integrated time.
    pub max_time: f64,
    /// Absolute tolerance for treating two section velocities as equal.
    pub delta_cluster: f64,
    /// Largest admissible period (crossings per cycle).
    pub max_period: usize,
    /// Full cycles that must repeat before a period is declared.
    pub min_cycles: usize,
    /// Mechanical energy below which a crossing-free trajectory counts as
    /// settled at the origin.
    pub static_energy_tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        Self {
            transient: 200.0,
            measure: 100.0,
            max_time: 2000.0,
            delta_cluster: 1e-4,
            max_period: 16,
            min_cycles: 3,
            static_energy_tol: 1e-9,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Scan for the smallest period `n <= max_n` such that the last
/// `n * min_cycles + 1` values repeat with stride `n` within `delta`.
/// Returns `(n, cluster centers in cycle order)`.
fn periodic_scan(
    values: &[f64],
    delta: f64,
    max_n: usize,
    min_cycles: usize,
) -> Option<(usize, Vec<f64>)> {
    let m = values.len();
    for n in 1..=max_n {
        let need = n * min_cycles + 1;
        if m < need {
            // Longer periods need even more data; stop scanning.
            return None;
        }
        let tail = &values[m - need..];
        if tail
            .windows(n + 1)
            .all(|w| (w[0] - w[n]).abs() <= delta)
        {
            // Cluster centers: average each phase over the observed cycles.
            let centers = (0..n)
                .map(|i| {
                    let mut sum = 0.0;
                    for j in 0..min_cycles {
                        sum += values[m - 1 - i - j * n];
                    }
                    sum / min_cycles as f64
                })
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            return Some((n, centers));
        }
    }
    None
}

/// Count well-separated value clusters: sort, then split wherever the gap
/// between neighbours exceeds `delta`.
fn cluster_count(values: &[f64], delta: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    1 + sorted.windows(2).filter(|w| w[1] - w[0] > delta).count()
}

/// Classify a trajectory from its post-transient section crossings and the
/// mechanical energy at the end of the observation.
pub fn detect_steady_state(
    crossings: &[SectionCrossing],
    trailing_energy: f64,
    cfg: &SteadyConfig,
) -> SteadyStateInfo {
    let values: Vec<f64> = crossings.iter().map(|c| c.v_tip).collect();
    if values.is_empty() {
        let classification = if trailing_energy < cfg.static_energy_tol {
            SteadyStateClass::StaticEquilibrium
        } else {
            SteadyStateClass::Unresolved
        };
        return SteadyStateInfo {
            classification,
            period: None,
            section_values: Vec::new(),
            crossings_used: 0,
        };
    }
    if let Some((n, centers)) = periodic_scan(
        &values,
        cfg.delta_cluster,
        cfg.max_period,
        cfg.min_cycles,
    ) {
        let m = crossings.len();
        let period = crossings[m - 1].time - crossings[m - 1 - n].time;
        return SteadyStateInfo {
            classification: SteadyStateClass::PeriodN(n),
            period: Some(period),
            section_values: centers,
            crossings_used: m,
        };
    }
    // Chaos needs at least as much evidence as the longest admissible
    // period would; otherwise the data is simply insufficient.
    let need = cfg.max_period * cfg.min_cycles + 1;
    if values.len() >= need && cluster_count(&values, cfg.delta_cluster) > cfg.max_period {
        return SteadyStateInfo {
            classification: SteadyStateClass::Chaotic,
            period: None,
            section_values: values.iter().take(cfg.max_period).copied().collect(),
            crossings_used: values.len(),
        };
    }
    SteadyStateInfo {
        classification: SteadyStateClass::Unresolved,
        period: None,
        section_values: values
            .iter()
            .rev()
            .take(cfg.max_period)
            .rev()
            .copied()
            .collect(),
        crossings_used: values.len(),
    }
}

/// Everything produced by driving a trajectory to steady state.
#[derive(Debug, Clone)]
pub struct SteadyRun {
    pub info: SteadyStateInfo,
    pub final_state: HybridState,
    /// All section crossings from the start of the run (absolute times).
    pub crossings: Vec<SectionCrossing>,
    /// All mirror-section crossings (w(1) = -d/2 moving inward).
    pub mirror_crossings: Vec<SectionCrossing>,
    pub stats: SimStats,
    /// True when the period locked before the time budget was exhausted.
    pub locked_early: bool,
}

/// Integrate until the steady state is classified or the time budget runs
/// out. Classification is attempted on every post-transient crossing (early
/// exit on period lock) and at every segment boundary (static detection).
pub fn run_to_steady<S: HybridSystem>(
    sys: &S,
    initial: &HybridState,
    cfg: &SteadyConfig,
) -> Result<SteadyRun> {
    let t0 = initial.time;
    let transient_end = t0 + cfg.transient;
    let mut state = initial.clone();
    let mut crossings: Vec<SectionCrossing> = Vec::new();
    let mut mirror_crossings: Vec<SectionCrossing> = Vec::new();
    let mut stats = SimStats::default();
    let mut locked_early = false;

    let mut segment_end = (t0 + cfg.transient + cfg.measure).min(t0 + cfg.max_time);
    loop {
        let horizon = segment_end - state.time;
        let seen_before = crossings.len();
        {
            let tail = &mut crossings;
            let out = integrate_with(
                sys,
                &state,
                horizon,
                &cfg.integrator,
                &SampleSpec::none(),
                |c| {
                    tail.push(*c);
                    if c.time <= transient_end {
                        return true;
                    }
                    let start = tail.partition_point(|x| x.time <= transient_end);
                    let values: Vec<f64> = tail[start..].iter().map(|x| x.v_tip).collect();
                    periodic_scan(&values, cfg.delta_cluster, cfg.max_period, cfg.min_cycles)
                        .is_none()
                },
            )?;
            state = out.final_state;
            mirror_crossings.extend(out.mirror_crossings);
            stats.steps_accepted += out.stats.steps_accepted;
            stats.steps_rejected += out.stats.steps_rejected;
            stats.events += out.stats.events;
            stats.rhs_evals += out.stats.rhs_evals;
            stats.wall_seconds += out.stats.wall_seconds;
            if out.halted {
                locked_early = true;
            }
        }
        let energy = sys.total_energy(&state);
        if locked_early {
            break;
        }
        // A segment with no new crossings and no stored energy means the
        // trajectory has settled at the origin; stop early.
        if crossings.len() == seen_before
            && state.time > transient_end
            && energy < cfg.static_energy_tol
        {
            break;
        }
        if segment_end >= t0 + cfg.max_time {
            break;
        }
        segment_end = (segment_end + cfg.measure).min(t0 + cfg.max_time);
    }

    let start = crossings.partition_point(|x| x.time <= transient_end);
    let info = detect_steady_state(
        &crossings[start..],
        sys.total_energy(&state),
        cfg,
    );
    Ok(SteadyRun {
        info,
        final_state: state,
        crossings,
        mirror_crossings,
        stats,
        locked_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::FosSystem;
    use crate::params::SystemParams;
    use approx::assert_relative_eq;

    fn cross(times_values: &[(f64, f64)]) -> Vec<SectionCrossing> {
        times_values
            .iter()
            .map(|&(time, v_tip)| SectionCrossing { time, v_tip })
            .collect()
    }

    fn canonical() -> SystemParams {
        SystemParams {
            cv: 4.5,
            cm: 3.0e-4,
            m: 1.0,
            k: 1000.0,
            f: 12.95,
            d: 0.2,
            vcr: 0.05,
            n_modes: 25,
        }
    }

    #[test]
    fn constant_sequence_is_period_one() {
        let cfg = SteadyConfig::default();
        let data: Vec<(f64, f64)> = (0..8).map(|i| (i as f64 * 3.3, -0.29)).collect();
        let info = detect_steady_state(&cross(&data), 5.0, &cfg);
        assert_eq!(info.classification, SteadyStateClass::PeriodN(1));
        assert_relative_eq!(info.period.unwrap(), 3.3, epsilon = 1e-12);
        assert_eq!(info.section_values.len(), 1);
        assert_relative_eq!(info.section_values[0], -0.29, epsilon = 1e-12);
    }

    #[test]
    fn alternating_sequence_is_period_two() {
        let cfg = SteadyConfig::default();
        let data: Vec<(f64, f64)> = (0..10)
            .map(|i| (i as f64 * 1.7, if i % 2 == 0 { -0.2 } else { -0.4 }))
            .collect();
        let info = detect_steady_state(&cross(&data), 5.0, &cfg);
        assert_eq!(info.classification, SteadyStateClass::PeriodN(2));
        assert_relative_eq!(info.period.unwrap(), 3.4, epsilon = 1e-12);
        // Cycle order preserved: the two centers are the two values in the
        // order they are visited.
        assert_eq!(info.section_values.len(), 2);
        let s = &info.section_values;
        assert!((s[0] + 0.2).abs() < 1e-12 && (s[1] + 0.4).abs() < 1e-12
            || (s[0] + 0.4).abs() < 1e-12 && (s[1] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn near_equal_values_cluster_together() {
        let cfg = SteadyConfig::default();
        // Jitter below delta_cluster must still classify as period 1.
        let data: Vec<(f64, f64)> = (0..8)
            .map(|i| (i as f64 * 3.3, -0.29 + 1e-5 * ((i % 3) as f64 - 1.0)))
            .collect();
        let info = detect_steady_state(&cross(&data), 5.0, &cfg);
        assert_eq!(info.classification, SteadyStateClass::PeriodN(1));
    }

    #[test]
    fn scattered_values_are_chaotic_and_few_are_unresolved() {
        let cfg = SteadyConfig::default();
        // 60 pseudo-random values spread far apart.
        let mut x = 0.37_f64;
        let mut data = Vec::new();
        for i in 0..60 {
            x = (x * 997.0 + 0.1234).fract();
            data.push((i as f64 * 2.0, -0.5 * x - 0.1));
        }
        let info = detect_steady_state(&cross(&data), 5.0, &cfg);
        assert_eq!(info.classification, SteadyStateClass::Chaotic);
        assert_eq!(info.section_values.len(), cfg.max_period);
        // The same values truncated to 20 crossings cannot support a chaos
        // call (the longest admissible period needs 49).
        let info = detect_steady_state(&cross(&data[..20]), 5.0, &cfg);
        assert_eq!(info.classification, SteadyStateClass::Unresolved);
    }

    #[test]
    fn empty_crossings_split_on_energy() {
        let cfg = SteadyConfig::default();
        let info = detect_steady_state(&[], 1e-12, &cfg);
        assert_eq!(info.classification, SteadyStateClass::StaticEquilibrium);
        let info = detect_steady_state(&[], 4.0, &cfg);
        assert_eq!(info.classification, SteadyStateClass::Unresolved);
    }

    #[test]
    fn canonical_run_locks_period_one_early() {
        let p = canonical();
        let sys = FosSystem::build(&p).unwrap();
        let cfg = SteadyConfig::default();
        let run = run_to_steady(&sys, &sys.launch_initial(), &cfg).unwrap();
        assert_eq!(run.info.classification, SteadyStateClass::PeriodN(1));
        assert!(run.locked_early, "period-1 should lock before max_time");
        assert!(run.final_state.time < 500.0, "early exit expected");
        let period = run.info.period.unwrap();
        assert!((period - 3.33).abs() < 0.05, "period {period}");
        assert!(run.info.section_values[0] < -0.2);
        // Symmetric orbit: mirror crossings interleave with section ones.
        assert!(!run.mirror_crossings.is_empty());
    }

    #[test]
    fn resting_inside_state_is_static() {
        let p = canonical();
        let sys = FosSystem::build(&p).unwrap();
        let cfg = SteadyConfig::default();
        let run = run_to_steady(&sys, &sys.default_initial(), &cfg).unwrap();
        assert_eq!(
            run.info.classification,
            SteadyStateClass::StaticEquilibrium
        );
        assert!(run.crossings.is_empty());
        assert!(
            run.final_state.time < cfg.max_time,
            "static exit should trigger at a segment boundary, got t = {}",
            run.final_state.time
        );
    }

    #[test]
    fn delayed_observation_gives_the_same_answer() {
        // Time-translation invariance: classifying from a point one period
        // later changes nothing.
        let p = canonical();
        let sys = FosSystem::build(&p).unwrap();
        let cfg = SteadyConfig::default();
        let run = run_to_steady(&sys, &sys.launch_initial(), &cfg).unwrap();
        let period = run.info.period.unwrap();
        let mut resumed = run.final_state.clone();
        resumed.time = 0.0;
        let shifted = {
            let out = integrate_with(
                &sys,
                &resumed,
                period,
                &cfg.integrator,
                &SampleSpec::none(),
                |_| true,
            )
            .unwrap();
            let mut s = out.final_state;
            s.time = 0.0;
            s
        };
        let run2 = run_to_steady(&sys, &shifted, &cfg).unwrap();
        assert_eq!(run.info.classification, run2.info.classification);
        assert_relative_eq!(
            run.info.period.unwrap(),
            run2.info.period.unwrap(),
            epsilon = 1e-4
        );
        assert_relative_eq!(
            run.info.section_values[0],
            run2.info.section_values[0],
            epsilon = 1e-4
        );
    }
}
