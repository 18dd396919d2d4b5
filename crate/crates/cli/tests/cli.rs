//! End-to-end checks of the command-line surface: the full
//! simulate/pod/closure/rom/compare/angles pipeline on a small
//! configuration, schema enforcement, and failure cleanup.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kickbeam() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kickbeam"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("failed to spawn kickbeam");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}

#[test]
fn modes_reproduces_the_clamped_free_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("modes");
    run_ok(kickbeam()
        .args(["modes", "--out"])
        .arg(&out)
        .args(["--set", "params.k=0", "--set", "params.m=0", "--set", "params.n_modes=3"]));

    let csv = std::fs::read_to_string(out.join("modes.csv")).unwrap();
    let first_free = csv
        .lines()
        .find(|l| l.starts_with("free,1,"))
        .expect("no first free mode row");
    let beta: f64 = first_free.split(',').nth(2).unwrap().parse().unwrap();
    assert!(
        (beta - 1.875104).abs() < 1e-5,
        "clamped-free root came out as {beta}"
    );

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "modes");
    assert_eq!(manifest["config"]["params.k"], "0");
    assert!(manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .any(|a| a == "modes.csv"));
}

#[test]
fn unknown_keys_and_missing_inputs_fail_without_leftovers() {
    let dir = tempfile::tempdir().unwrap();

    // Misspelled key: rejected against the schema before any work happens.
    let out = dir.path().join("typo");
    let result = kickbeam()
        .args(["simulate", "--out"])
        .arg(&out)
        .args(["--set", "simulate.horzion=10"])
        .output()
        .unwrap();
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("simulate.horzion"), "stderr: {stderr}");
    assert!(!out.join("manifest.json").exists());

    // Missing input file: nonzero exit and no partial artifacts left.
    let out = dir.path().join("missing");
    let result = kickbeam()
        .args(["closure", "--out"])
        .arg(&out)
        .args([
            "--set",
            "closure.snapshots=/nonexistent/snapshots",
            "--set",
            "closure.basis=/nonexistent/basis.json",
            "--set",
            "closure.kicks=/nonexistent/kicks.csv",
        ])
        .output()
        .unwrap();
    assert!(!result.status.success());
    let leftover: Vec<_> = std::fs::read_dir(&out)
        .map(|rd| rd.filter_map(|e| e.ok()).collect())
        .unwrap_or_default();
    assert!(leftover.is_empty(), "leftover artifacts: {leftover:?}");
}

#[test]
fn pipeline_runs_from_one_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "\
# shared pipeline settings (coarse, for a quick end-to-end run)
params.n_modes = 12
simulate.horizon = 30
simulate.sample_rate = 200
simulate.window_start = 18
simulate.n_x = 40
romsim.horizon = 30
romsim.sample_rate = 200
romsim.window_start = 18
romsim.n_x = 40
closure.epsilon = 1e-4
",
    )
    .unwrap();
    let stage = |name: &str| dir.path().join(name);
    let p = |path: PathBuf| path.into_os_string().into_string().unwrap();

    // 1. Full-order run with field sampling.
    let sim = stage("sim");
    run_ok(kickbeam()
        .args(["simulate", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&sim));
    assert!(sim.join("snapshots").is_dir());
    assert!(sim.join("kicks.csv").exists());
    let summary = read_json(&sim.join("summary.json"));
    assert!(summary["work_input"].as_f64().unwrap() > 0.0);

    // 2. POD of the recorded snapshots.
    let pod = stage("pod");
    run_ok(kickbeam()
        .args(["pod", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&pod)
        .args(["--set", &format!("pod.snapshots={}", p(sim.join("snapshots")))]));
    let pod_info = read_json(&pod.join("pod.json"));
    let p_max = pod_info["p_max"].as_u64().unwrap() as usize;
    assert!(p_max >= 3, "rank only {p_max}");

    // 3. Energy-closure dimension selection.
    let clo = stage("clo");
    run_ok(kickbeam()
        .args(["closure", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&clo)
        .args([
            "--set",
            &format!("closure.snapshots={}", p(sim.join("snapshots"))),
            "--set",
            &format!("closure.basis={}", p(pod.join("basis.json"))),
            "--set",
            &format!("closure.kicks={}", p(sim.join("kicks.csv"))),
        ]));
    let report = read_json(&clo.join("closure.json"));
    let selected = report["selected_p"].as_u64().unwrap() as usize;
    assert!(selected >= 1 && selected <= p_max);

    // 4. Reduced model at the selected dimension.
    let romb = stage("romb");
    run_ok(kickbeam()
        .args(["rom-build", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&romb)
        .args([
            "--set",
            &format!("rom.basis={}", p(pod.join("basis.json"))),
            "--set",
            &format!("rom.p={selected}"),
            "--set",
            &format!("rom.closure={}", p(clo.join("closure.json"))),
        ]));
    let rom_info = read_json(&romb.join("rom_summary.json"));
    assert_eq!(rom_info["p"].as_u64().unwrap() as usize, selected);
    assert_eq!(
        rom_info["closure_selected_p"].as_u64().unwrap() as usize,
        selected
    );

    // 5. Reduced simulation from the projected launch state.
    let roms = stage("roms");
    run_ok(kickbeam()
        .args(["rom-sim", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&roms)
        .args([
            "--set",
            &format!("romsim.package={}", p(romb.join("rom.json"))),
            "--set",
            &format!("romsim.basis={}", p(pod.join("basis.json"))),
        ]));
    assert!(roms.join("snapshots").is_dir());

    // 6. Field comparison of the two records.
    let cmp = stage("cmp");
    run_ok(kickbeam()
        .args(["compare", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&cmp)
        .args([
            "--set",
            &format!("compare.reference={}", p(sim.join("snapshots"))),
            "--set",
            &format!("compare.reduced={}", p(roms.join("snapshots"))),
        ]));
    let metrics = read_json(&cmp.join("metrics.json"));
    let disp = metrics["displacement_rms_percent"].as_f64().unwrap();
    assert!(disp.is_finite() && disp >= 0.0, "displacement error {disp}");
    assert!(cmp.join("spectrum_reference.csv").exists());
    assert!(cmp.join("trace_tip.csv").exists());

    // 7. Principal angles of the basis against itself.
    let ang = stage("ang");
    run_ok(kickbeam()
        .args(["angles", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&ang)
        .args([
            "--set",
            &format!(
                "angles.bases={},{}",
                p(pod.join("basis.json")),
                p(pod.join("basis.json"))
            ),
            "--set",
            "angles.p=2",
        ]));
    let angles = read_json(&ang.join("angles.json"));
    assert!(angles["max_angle_overall"].as_f64().unwrap() < 1e-7);

    // Every stage left a manifest naming its artifacts.
    for out in [&sim, &pod, &clo, &romb, &roms, &cmp, &ang] {
        let manifest = read_json(&out.join("manifest.json"));
        assert!(!manifest["artifacts"].as_array().unwrap().is_empty());
    }
}

#[test]
fn short_bifurcation_sweep_writes_dataset_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    run_ok(kickbeam()
        .args(["bifurcate", "--out"])
        .arg(&out)
        .args([
            "--set", "params.n_modes=10",
            "--set", "bifurcate.f_start=12.95",
            "--set", "bifurcate.f_end=12.949",
            "--set", "bifurcate.delta_f=1e-3",
            "--set", "steady.transient=40",
            "--set", "steady.measure=30",
            "--set", "steady.max_time=120",
        ]));
    let csv = std::fs::read_to_string(out.join("bifurcation.csv")).unwrap();
    assert!(csv.starts_with("F,crossing_index,v_tip,classification,period_n"));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["n_points"].as_u64().unwrap(), 2);
    assert!(out.join("dataset.json").exists());
}
