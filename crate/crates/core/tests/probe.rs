//! Throwaway timing probe; not part of the shipped suite.

use std::time::Instant;

use kickbeam::bifurcation::{run_sweep, FosEngine, SweepConfig};
use kickbeam::hybrid::{FosSystem, HybridSystem};
use kickbeam::integrate::{simulate, IntegratorConfig, SampleSpec};
use kickbeam::params::SystemParams;
use kickbeam::steady::{run_to_steady, SteadyConfig};

fn params() -> SystemParams {
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
#[ignore]
fn timing() {
    let sys = FosSystem::build(&params()).unwrap();

    for f in [12.95, 12.75, 12.605] {
        let s = sys.with_kick(f);
        let init = s.launch_initial();
        let t0 = Instant::now();
        let out = simulate(&s, &init, 100.0, &IntegratorConfig::default(), &SampleSpec::none())
            .unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "F={f}: 100 units in {dt:.2} s ({:.0} steps, {} transitions, {} crossings)",
            out.stats.steps_accepted,
            out.transitions.len(),
            out.crossings.len()
        );
    }

    // Steady classification cost from a launch (cold) seed.
    let cfg = SteadyConfig {
        transient: 100.0,
        measure: 60.0,
        max_time: 400.0,
        ..SteadyConfig::default()
    };
    for f in [12.95, 12.75, 12.66, 12.605, 12.40] {
        let s = sys.with_kick(f);
        let init = s.launch_initial();
        let t0 = Instant::now();
        let run = run_to_steady(&s, &init, &cfg).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "steady F={f}: {} in {dt:.2} s (period {:?}, final time {:.0}, early {})",
            run.info.classification.label(),
            run.info.period,
            run.final_state.time,
            run.locked_early
        );
    }
}

#[test]
#[ignore]
fn coarse_sweep() {
    let sys = FosSystem::build(&params()).unwrap();
    let engine = FosEngine::new(sys);
    let steady = SteadyConfig {
        transient: 120.0,
        measure: 60.0,
        max_time: 400.0,
        ..SteadyConfig::default()
    };
    for (a, b) in [(12.95, 12.35), (12.35, 12.95)] {
        let cfg = SweepConfig {
            f_start: a,
            f_end: b,
            delta_f: 5e-3,
            max_points_per_f: 16,
            steady: steady.clone(),
        };
        let t0 = Instant::now();
        let ds = run_sweep(&engine, &cfg).unwrap();
        println!(
            "sweep {a} -> {b}: {} points in {:.1} s",
            ds.records.len(),
            t0.elapsed().as_secs_f64()
        );
        for r in &ds.records {
            println!(
                "F={:.3} {} sym={} seed={:?} period={:?} nvals={}",
                r.f,
                r.classification.label(),
                r.symmetric,
                r.seed,
                r.period,
                r.section_values.len()
            );
        }
        println!("landmarks {a}->{b}: {:?}", ds.landmarks());
    }
}
