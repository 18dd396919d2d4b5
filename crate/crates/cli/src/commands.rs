//! Subcommand implementations. Each one reads its configuration section,
//! runs the corresponding library pipeline stage, and emits plot-ready CSV
//! plus JSON artifacts into the output directory.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::json;

use kickbeam::analysis::{
    power_spectrum, principal_angles, rms_errors, SpectrumConfig, SpectrumResult, WindowKind,
};
use kickbeam::bifurcation::{run_sweep, FosEngine, RomEngine, SweepConfig};
use kickbeam::closure::{closure_select, ClosureReport};
use kickbeam::hybrid::{FosSystem, HybridState};
use kickbeam::integrate::{simulate, KickInterval, SampleSpec, SimOutput};
use kickbeam::modal::{BasisVariant, ModalBasis};
use kickbeam::pod::{pod_decompose, variance_dimension, PodBasis, PodConfig};
use kickbeam::rom::{
    assemble_rom, project_initial, rom_snapshots, simulate_rom, RomPackage, RomSystem,
};
use kickbeam::sampling::{sample_fields, uniform_grid, Provenance, SnapshotSet};

use crate::config::Config;
use crate::output::OutDir;

/// Shortest representation that parses back to the same double.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn initial_state(sys: &FosSystem, kind: &str) -> Result<HybridState> {
    match kind {
        "launch" => Ok(sys.launch_initial()),
        "default" => Ok(sys.default_initial()),
        other => bail!("initial state must be `launch` or `default`, got {other:?}"),
    }
}

pub fn modes(cfg: &Config, out: &mut OutDir) -> Result<()> {
    let params = cfg.params()?;
    let variants: Vec<(&str, BasisVariant)> = match cfg.str_or("modes.variant", "both") {
        "free" => vec![("free", BasisVariant::FreeTip)],
        "spring" => vec![("spring", BasisVariant::SpringTip)],
        "both" => vec![
            ("free", BasisVariant::FreeTip),
            ("spring", BasisVariant::SpringTip),
        ],
        other => bail!("modes.variant must be free, spring, or both, got {other:?}"),
    };
    let mut csv = String::from("variant,index,beta,omega,tip\n");
    for (name, variant) in variants {
        let basis = ModalBasis::build(variant, &params)?;
        for (i, mode) in basis.modes().iter().enumerate() {
            let _ = writeln!(
                csv,
                "{name},{},{},{},{}",
                i + 1,
                fmt(mode.beta),
                fmt(mode.omega),
                fmt(mode.tip)
            );
        }
    }
    out.write("modes.csv", &csv)?;
    Ok(())
}

fn write_crossings(out: &mut OutDir, sim: &SimOutput) -> Result<()> {
    let mut csv = String::from("section,time,v_tip\n");
    for c in &sim.crossings {
        let _ = writeln!(csv, "sigma,{},{}", fmt(c.time), fmt(c.v_tip));
    }
    for c in &sim.mirror_crossings {
        let _ = writeln!(csv, "mirror,{},{}", fmt(c.time), fmt(c.v_tip));
    }
    out.write("crossings.csv", &csv)?;
    Ok(())
}

fn write_kicks(out: &mut OutDir, kicks: &[KickInterval]) -> Result<()> {
    let mut csv = String::from("t_on,t_off,sign\n");
    for k in kicks {
        let _ = writeln!(csv, "{},{},{}", fmt(k.t_on), fmt(k.t_off), fmt(k.sign));
    }
    out.write("kicks.csv", &csv)?;
    Ok(())
}

fn read_kicks_csv(path: &PathBuf) -> Result<Vec<KickInterval>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading kick intervals {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            bail!("{}:{}: expected t_on,t_off,sign", path.display(), i + 1);
        }
        out.push(KickInterval {
            t_on: cols[0].trim().parse()?,
            t_off: cols[1].trim().parse()?,
            sign: cols[2].trim().parse()?,
        });
    }
    Ok(out)
}

fn write_tip(out: &mut OutDir, sim: &SimOutput) -> Result<()> {
    if let Some(tip) = &sim.tip_samples {
        let mut csv = String::from("time,w,v\n");
        for j in 0..tip.times.len() {
            let _ = writeln!(csv, "{},{},{}", fmt(tip.times[j]), fmt(tip.w[j]), fmt(tip.v[j]));
        }
        out.write("tip.csv", &csv)?;
    }
    Ok(())
}

fn sim_summary(sim: &SimOutput, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "final_time": sim.final_state.time,
        "work_input": sim.work_input,
        "work_dissipated": sim.work_dissipated,
        "energy_initial": sim.energy_initial,
        "energy_final": sim.energy_final,
        "section_crossings": sim.crossings.len(),
        "mirror_crossings": sim.mirror_crossings.len(),
        "transitions": sim.transitions.len(),
        "halted": sim.halted,
        "stats": {
            "steps_accepted": sim.stats.steps_accepted,
            "steps_rejected": sim.stats.steps_rejected,
            "events": sim.stats.events,
            "rhs_evals": sim.stats.rhs_evals,
            "wall_seconds": sim.stats.wall_seconds,
        },
        "extra": extra,
    })
}

/// Shared tail of `simulate` and `rom-sim`: snapshots, crossings, kicks,
/// tip record, and the run summary.
fn write_sim_artifacts(
    out: &mut OutDir,
    sim: &SimOutput,
    snap: &SnapshotSet,
    extra: serde_json::Value,
) -> Result<()> {
    out.write_snapshots("snapshots", snap)?;
    write_crossings(out, sim)?;
    write_kicks(out, &sim.kick_intervals()?)?;
    write_tip(out, sim)?;
    let summary = sim_summary(sim, extra);
    out.write("summary.json", &serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn run_simulate(cfg: &Config, out: &mut OutDir) -> Result<()> {
    let params = cfg.params()?;
    let sys = FosSystem::build(&params)?;
    let kind = cfg.str_or("simulate.initial", "launch");
    let initial = initial_state(&sys, kind)?;
    let horizon = cfg.f64_or("simulate.horizon", 300.0)?;
    let rate = cfg.f64_or("simulate.sample_rate", 1000.0)?;
    let ws = cfg.f64_or("simulate.window_start", (horizon - 100.0).max(0.0))?;
    let we = cfg.f64_or("simulate.window_end", horizon)?;
    let n_x = cfg.usize_or("simulate.n_x", 100)?;
    let spec = SampleSpec {
        rate,
        fields: Some((ws, we)),
        tip: Some((ws, we)),
    };
    let sim = simulate(&sys, &initial, horizon, &cfg.integrator()?, &spec)?;
    let samples = sim
        .field_samples
        .as_ref()
        .context("no field samples recorded; widen the sampling window")?;
    let provenance = Provenance {
        tool: "kickbeam simulate".into(),
        sample_rate: rate,
        window_start: ws,
        window_end: we,
        notes: format!("initial={kind} F={}", fmt(params.f)),
    };
    let snap = sample_fields(&sys, samples, &uniform_grid(n_x), provenance)?;
    write_sim_artifacts(out, &sim, &snap, json!({ "initial": kind }))
}

pub fn run_pod(cfg: &Config, out: &mut OutDir) -> Result<()> {
    let snap = SnapshotSet::read_dir(&cfg.require_path("pod.snapshots")?)?;
    let mut pcfg = PodConfig::default();
    pcfg.rank_tol = cfg.f64_or("pod.rank_tol", pcfg.rank_tol)?;
    pcfg.cheb_degree = cfg.usize_or("pod.cheb_degree", pcfg.cheb_degree)?;
    pcfg.cheb_chop = cfg.f64_or("pod.cheb_chop", pcfg.cheb_chop)?;
    let basis = pod_decompose(&snap, &pcfg)?;
    let fraction = cfg.f64_or("pod.variance_fraction", 0.999)?;
    let p_variance = variance_dimension(&basis, fraction)?;

    out.write("basis.json", &basis.to_json()?)?;
    let total: f64 = basis.eigenvalues.iter().sum();
    let mut csv = String::from("index,eigenvalue,cumulative_fraction\n");
    let mut acc = 0.0;
    for (i, lam) in basis.eigenvalues.iter().enumerate() {
        acc += lam;
        let _ = writeln!(csv, "{},{},{}", i + 1, fmt(*lam), fmt(acc / total));
    }
    out.write("eigenvalues.csv", &csv)?;
    let summary = json!({
        "p_max": basis.p_max,
        "total_variance": basis.total_variance,
        "max_fit_residual": basis.max_fit_residual,
        "variance_fraction": fraction,
        "variance_dimension": p_variance,
        "source_hash": basis.source_hash,
    });
    out.write("pod.json", &serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn run_closure(cfg: &Config, out: &mut OutDir) -> Result<()> {
    let snap = SnapshotSet::read_dir(&cfg.require_path("closure.snapshots")?)?;
    let basis = PodBasis::read_json(&cfg.require_path("closure.basis")?)?;
    if basis.source_hash != snap.content_hash() {
        bail!(
            "basis was computed from different snapshot data \
             (hash {} vs {})",
            basis.source_hash,
            snap.content_hash()
        );
    }
    let kicks = read_kicks_csv(&cfg.require_path("closure.kicks")?)?;
    let epsilon = cfg.f64_or("closure.epsilon", 1e-4)?;
    let report = closure_select(&snap, &basis, &snap.params, &kicks, epsilon)?;

    out.write("closure.json", &report.to_json()?)?;
    let mut csv = String::from("P,wf,wd,ef,ed\n");
    for i in 0..report.p_max {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            i + 1,
            fmt(report.wf[i]),
            fmt(report.wd[i]),
            fmt(report.ef[i]),
            fmt(report.ed[i])
        );
    }
    out.write("curves.csv", &csv)?;
    Ok(())
}

pub fn rom_build(cfg: &Config, out: &mut OutDir) -> Result<()> {
    let basis = PodBasis::read_json(&cfg.require_path("rom.basis")?)?;
    let p = cfg.usize_or("rom.p", 8)?;
    let params = cfg.params()?;
    let mut package = assemble_rom(&basis, p, &params)?;
    if let Some(path) = cfg.path("rom.closure") {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading closure report {}", path.display()))?;
        package.closure = Some(ClosureReport::from_json(&text)?);
    }
    let rom = RomSystem::new(package)?;
    out.write("rom.json", &rom.package().to_json()?)?;
    let summary = json!({
        "p": rom.package().p,
        "source_hash": rom.package().source_hash,
        "operator_commutator_norm": rom.operator_commutator_norm(),
        "closure_selected_p": rom.package().closure.as_ref().map(|c| c.selected_p),
    });
    out.write("rom_summary.json", &serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn rom_sim(cfg: &Config, out: &mut OutDir) -> Result<()> {
    let package = RomPackage::read_json(&cfg.require_path("romsim.package")?)?;
    let basis = PodBasis::read_json(&cfg.require_path("romsim.basis")?)?;
    if basis.source_hash != package.source_hash {
        bail!("reduced model and basis come from different snapshot data");
    }
    let rom = RomSystem::new(package)?;
    let params = rom.package().params.clone();
    let fos = FosSystem::build(&params)?;
    let kind = cfg.str_or("romsim.initial", "launch");
    let template = initial_state(&fos, kind)?;
    let (b0, projection) = project_initial(&fos, &template, &basis, &rom)?;

    let horizon = cfg.f64_or("romsim.horizon", 300.0)?;
    let rate = cfg.f64_or("romsim.sample_rate", 1000.0)?;
    let ws = cfg.f64_or("romsim.window_start", (horizon - 100.0).max(0.0))?;
    let we = cfg.f64_or("romsim.window_end", horizon)?;
    let n_x = cfg.usize_or("romsim.n_x", 100)?;
    let spec = SampleSpec {
        rate,
        fields: Some((ws, we)),
        tip: Some((ws, we)),
    };
    let sim = simulate_rom(&rom, &b0, horizon, &cfg.integrator()?, &spec)?;
    let samples = sim
        .field_samples
        .as_ref()
        .context("no field samples recorded; widen the sampling window")?;
    let provenance = Provenance {
        tool: "kickbeam rom-sim".into(),
        sample_rate: rate,
        window_start: ws,
        window_end: we,
        notes: format!("initial={kind} F={} P={}", fmt(params.f), rom.package().p),
    };
    let snap = rom_snapshots(&rom, samples, &uniform_grid(n_x), provenance)?;
    write_sim_artifacts(
        out,
        &sim,
        &snap,
        json!({
            "initial": kind,
            "p": rom.package().p,
            "projection_displacement_residual": projection.displacement_residual,
            "projection_velocity_residual": projection.velocity_residual,
        }),
    )
}

pub fn bifurcate(cfg: &Config, out: &mut OutDir) -> Result<()> {
    let sweep = SweepConfig {
        f_start: cfg.f64_or("bifurcate.f_start", 12.45)?,
        f_end: cfg.f64_or("bifurcate.f_end", 12.95)?,
        delta_f: cfg.f64_or("bifurcate.delta_f", 5e-4)?,
        max_points_per_f: cfg.usize_or("bifurcate.max_points", 16)?,
        steady: cfg.steady()?,
    };
    let dataset = match cfg.str_or("bifurcate.engine", "fos") {
        "fos" => {
            let sys = FosSystem::build(&cfg.params()?)?;
            run_sweep(&FosEngine::new(sys), &sweep)?
        }
        "rom" => {
            let package = RomPackage::read_json(&cfg.require_path("bifurcate.rom_package")?)?;
            let basis = PodBasis::read_json(&cfg.require_path("bifurcate.basis")?)?;
            if basis.source_hash != package.source_hash {
                bail!("reduced model and basis come from different snapshot data");
            }
            let rom = RomSystem::new(package)?;
            let fos = FosSystem::build(&rom.package().params)?;
            let (seed, _) = project_initial(&fos, &fos.launch_initial(), &basis, &rom)?;
            run_sweep(&RomEngine::new(rom, seed), &sweep)?
        }
        other => bail!("bifurcate.engine must be fos or rom, got {other:?}"),
    };
    out.write("bifurcation.csv", &dataset.to_csv())?;
    out.write("dataset.json", &dataset.to_json()?)?;
    out.write(
        "summary.json",
        &serde_json::to_string_pretty(&dataset.summary())?,
    )?;
    Ok(())
}

fn spectrum_csv(spec: &SpectrumResult) -> String {
    let mut csv = String::from("frequency,power\n");
    for (f, p) in spec.frequencies.iter().zip(&spec.power) {
        let _ = writeln!(csv, "{},{}", fmt(*f), fmt(*p));
    }
    csv
}

fn peaks_json(spec: &SpectrumResult) -> serde_json::Value {
    json!({
        "bin_width": spec.bin_width,
        "fundamental": spec.fundamental().map(|p| p.frequency),
        "resolution_warning": spec.resolution_warning,
        "peaks": spec
            .peaks
            .iter()
            .map(|p| json!({ "frequency": p.frequency, "power": p.power }))
            .collect::<Vec<_>>(),
    })
}

pub fn compare(cfg: &Config, out: &mut OutDir) -> Result<()> {
    let reference = SnapshotSet::read_dir(&cfg.require_path("compare.reference")?)?;
    let reduced = SnapshotSet::read_dir(&cfg.require_path("compare.reduced")?)?;
    let metrics = rms_errors(&reference, &reduced)?;

    let window = match cfg.str_or("compare.window", "hann") {
        "hann" => WindowKind::Hann,
        "rect" | "rectangular" => WindowKind::Rectangular,
        other => bail!("compare.window must be hann or rect, got {other:?}"),
    };
    let scfg = SpectrumConfig {
        window,
        ..SpectrumConfig::default()
    };
    let location = cfg.f64_or("compare.spectrum_location", 1.0)?;
    let series_at = |s: &SnapshotSet| -> (Vec<f64>, f64) {
        let row = s.row_at(location);
        let series: Vec<f64> = (0..s.n_t()).map(|j| s.w[(row, j)]).collect();
        (series, 1.0 / (s.t_grid[1] - s.t_grid[0]))
    };
    let (ref_series, ref_rate) = series_at(&reference);
    let (red_series, red_rate) = series_at(&reduced);
    let spec_ref = power_spectrum(&ref_series, ref_rate, &scfg)?;
    let spec_red = power_spectrum(&red_series, red_rate, &scfg)?;

    for (name, trace) in [("trace_mid.csv", &metrics.traces[0]), ("trace_tip.csv", &metrics.traces[1])] {
        let mut csv = String::from("w_reference,v_reference,w_reduced,v_reduced\n");
        for ((wa, va), (wb, vb)) in trace.reference.iter().zip(&trace.reduced) {
            let _ = writeln!(csv, "{},{},{},{}", fmt(*wa), fmt(*va), fmt(*wb), fmt(*vb));
        }
        out.write(name, &csv)?;
    }
    out.write("spectrum_reference.csv", &spectrum_csv(&spec_ref))?;
    out.write("spectrum_reduced.csv", &spectrum_csv(&spec_red))?;
    let summary = json!({
        "displacement_rms_percent": metrics.displacement_rms_percent,
        "velocity_rms_percent": metrics.velocity_rms_percent,
        "samples": metrics.samples,
        "cycles": metrics.cycles,
        "spectrum_location": location,
        "reference_spectrum": peaks_json(&spec_ref),
        "reduced_spectrum": peaks_json(&spec_red),
    });
    out.write("metrics.json", &serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn angles(cfg: &Config, out: &mut OutDir) -> Result<()> {
    let list = cfg.require("angles.bases")?;
    let paths: Vec<PathBuf> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .collect();
    if paths.len() < 2 {
        bail!("angles.bases needs at least two comma-separated basis paths");
    }
    let p = cfg.usize_or("angles.p", 8)?;
    let bases: Vec<PodBasis> = paths
        .iter()
        .map(|path| {
            PodBasis::read_json(path).with_context(|| format!("reading basis {}", path.display()))
        })
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    let mut overall: f64 = 0.0;
    for i in 0..bases.len() {
        for j in i + 1..bases.len() {
            let report = principal_angles(&bases[i], &bases[j], p)?;
            overall = overall.max(report.max_angle);
            pairs.push(json!({
                "a": paths[i].display().to_string(),
                "b": paths[j].display().to_string(),
                "max_angle": report.max_angle,
                "angles": report.angles,
            }));
        }
    }
    let summary = json!({
        "p": p,
        "pairs": pairs,
        "max_angle_overall": overall,
    });
    out.write("angles.json", &serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}
