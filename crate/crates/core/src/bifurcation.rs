//! Branch-following continuation over the kick strength.
//!
//! A sweep walks an arithmetic grid of F values, driving each run to steady
//! state from the previous run's final state so the solver stays on one
//! solution branch. Opposite sweep directions discover coexisting branches;
//! comparing the resulting datasets locates symmetry breaking, period
//! doubling, chaos, and extinction of the sustained response.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{FosSystem, HybridState, HybridSystem};
use crate::rom::RomSystem;
use crate::steady::{run_to_steady, SteadyConfig, SteadyRun, SteadyStateClass};

/// Sweep plan: endpoints, resolution, and the per-F steady-state budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub f_start: f64,
    pub f_end: f64,
    /// Step magnitude; the direction comes from the endpoint order.
    pub delta_f: f64,
    /// Cap on stored section velocities per record.
    pub max_points_per_f: usize,
    pub steady: SteadyConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            f_start: 12.45,
            f_end: 12.95,
            delta_f: 5e-4,
            max_points_per_f: 16,
            steady: SteadyConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::Input(format!(
                "sweep step must be positive, got {}",
                self.delta_f
            )));
        }
        if self.f_start == self.f_end {
            return Err(Error::Input("sweep endpoints must differ".into()));
        }
        if self.max_points_per_f == 0 {
            return Err(Error::Input("max_points_per_f must be at least 1".into()));
        }
        Ok(())
    }

    /// The arithmetic F grid, endpoint included exactly.
    pub fn f_grid(&self) -> Vec<f64> {
        let span = self.f_end - self.f_start;
        let n = (span.abs() / self.delta_f).round().max(1.0) as usize;
        let step = span / n as f64;
        let mut grid: Vec<f64> = (0..=n).map(|i| self.f_start + step * i as f64).collect();
        *grid.last_mut().unwrap() = self.f_end;
        grid
    }
}

/// How a record's initial condition was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedProvenance {
    /// Engine's fresh starting state (first F of the sweep).
    Fresh,
    /// Final state of the previous F, rebound to the new kick strength.
    Continued,
    /// Previous F ended at rest, which no kick can revive; the engine
    /// restarted from its fresh state instead.
    Relaunched,
}

/// Carried-over states with less mechanical energy than this are treated as
/// dead and replaced by a fresh launch. Rest is invariant under the kick law
/// (the magnet only fires on a fast gap entry), so continuing from it would
/// pin the remainder of a sweep at the trivial equilibrium.
pub const RELAUNCH_ENERGY_TOL: f64 = 1e-8;

/// Steady-state summary at one kick strength.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub f: f64,
    pub classification: SteadyStateClass,
    pub period: Option<f64>,
    /// Section velocities (w = +d/2 crossings), capped at the config limit.
    pub section_values: Vec<f64>,
    /// Mirror-section velocities (w = -d/2 crossings), same cap.
    pub mirror_values: Vec<f64>,
    /// Whether the orbit is its own mirror image on the section pair.
    pub symmetric: bool,
    pub seed: SeedProvenance,
}

/// One sweep's worth of records plus bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifurcationDataset {
    /// Which engine produced this branch ("fos", "rom", ...).
    pub label: String,
    pub f_start: f64,
    pub f_end: f64,
    pub delta_f: f64,
    pub records: Vec<SweepRecord>,
    pub wall_seconds: f64,
}

/// Symmetry tolerance: a record is symmetric when its section values and
/// negated mirror values agree to this Hausdorff distance.
pub const SYMMETRY_TOL: f64 = 1e-3;

/// Supplies per-F systems and seeds to the sweep driver. The full-order
/// system and the reduced model differ only here; the driver is shared.
pub trait SweepEngine {
    type System: HybridSystem;

    fn label(&self) -> &str;

    /// System bound to kick strength `f`.
    fn system_at(&self, f: f64) -> Result<Self::System>;

    /// Starting state for the first F of a sweep.
    fn first_seed(&self, sys: &Self::System) -> Result<HybridState>;

    /// Carry the previous F's final state over to the next system, falling
    /// back to a fresh start when the branch has died out.
    fn reseed(
        &self,
        sys: &Self::System,
        f_old: f64,
        prev: &HybridState,
    ) -> Result<(HybridState, SeedProvenance)>;
}

/// Full-order engine: clones the modal system per F and launches hard enough
/// to reach the sustained response at the sweep's first point.
pub struct FosEngine {
    base: FosSystem,
}

impl FosEngine {
    pub fn new(base: FosSystem) -> Self {
        Self { base }
    }
}

impl SweepEngine for FosEngine {
    type System = FosSystem;

    fn label(&self) -> &str {
        "fos"
    }

    fn system_at(&self, f: f64) -> Result<FosSystem> {
        Ok(self.base.with_kick(f))
    }

    fn first_seed(&self, sys: &FosSystem) -> Result<HybridState> {
        Ok(sys.launch_initial())
    }

    fn reseed(
        &self,
        sys: &FosSystem,
        f_old: f64,
        prev: &HybridState,
    ) -> Result<(HybridState, SeedProvenance)> {
        if sys.total_energy(prev) < RELAUNCH_ENERGY_TOL {
            let mut seed = sys.launch_initial();
            seed.time = prev.time;
            return Ok((seed, SeedProvenance::Relaunched));
        }
        Ok((sys.adopt_state(prev, f_old), SeedProvenance::Continued))
    }
}

/// Reduced-order engine: shares one assembled package across F (the kick
/// strength enters only the load), with a fixed starting state projected
/// from the full-order launch.
pub struct RomEngine {
    base: RomSystem,
    seed: HybridState,
}

impl RomEngine {
    pub fn new(base: RomSystem, seed: HybridState) -> Self {
        Self { base, seed }
    }
}

impl SweepEngine for RomEngine {
    type System = RomSystem;

    fn label(&self) -> &str {
        "rom"
    }

    fn system_at(&self, f: f64) -> Result<RomSystem> {
        Ok(self.base.with_kick(f))
    }

    fn first_seed(&self, _sys: &RomSystem) -> Result<HybridState> {
        Ok(self.seed.clone())
    }

    fn reseed(
        &self,
        sys: &RomSystem,
        _f_old: f64,
        prev: &HybridState,
    ) -> Result<(HybridState, SeedProvenance)> {
        if sys.total_energy(prev) < RELAUNCH_ENERGY_TOL {
            let mut seed = self.seed.clone();
            seed.time = prev.time;
            return Ok((seed, SeedProvenance::Relaunched));
        }
        // Reduced coordinates are absolute; nothing to rebind.
        Ok((prev.clone(), SeedProvenance::Continued))
    }
}

/// Directed Hausdorff-style distance between two finite value sets: the
/// largest distance from any member of either set to the other set.
pub fn hausdorff_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let one_way = |from: &[f64], to: &[f64]| {
        from.iter()
            .map(|&x| {
                to.iter()
                    .map(|&y| (x - y).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

fn mirror_values_of(run: &SteadyRun, transient_end: f64, cap: usize) -> Vec<f64> {
    let start = run
        .mirror_crossings
        .partition_point(|c| c.time <= transient_end);
    let post = &run.mirror_crossings[start..];
    match run.info.classification {
        SteadyStateClass::PeriodN(n) => {
            // The cycle's most recent visit to the mirror section.
            let take = n.min(cap).min(post.len());
            post[post.len() - take..].iter().map(|c| c.v_tip).collect()
        }
        SteadyStateClass::Chaotic => post.iter().take(cap).map(|c| c.v_tip).collect(),
        _ => Vec::new(),
    }
}

fn make_record(f: f64, seed_time: f64, run: &SteadyRun, cfg: &SweepConfig, seed: SeedProvenance) -> SweepRecord {
    let mut section_values = run.info.section_values.clone();
    section_values.truncate(cfg.max_points_per_f);
    let mirror_values = mirror_values_of(
        run,
        seed_time + cfg.steady.transient,
        cfg.max_points_per_f,
    );
    let negated: Vec<f64> = mirror_values.iter().map(|v| -v).collect();
    let symmetric = !section_values.is_empty()
        && hausdorff_distance(&section_values, &negated) < SYMMETRY_TOL;
    SweepRecord {
        f,
        classification: run.info.classification,
        period: run.info.period,
        section_values,
        mirror_values,
        symmetric,
        seed,
    }
}

/// Walk the F grid, continuing each run from the last.
///
/// Unresolved classifications are recorded and the sweep continues; only
/// integration failures abort.
pub fn run_sweep<E: SweepEngine>(engine: &E, cfg: &SweepConfig) -> Result<BifurcationDataset> {
    cfg.validate()?;
    let wall = std::time::Instant::now();
    let grid = cfg.f_grid();
    let mut records = Vec::with_capacity(grid.len());
    let mut prev: Option<(f64, HybridState)> = None;
    for &f in &grid {
        let sys = engine.system_at(f)?;
        let (seed_state, provenance) = match &prev {
            None => (engine.first_seed(&sys)?, SeedProvenance::Fresh),
            Some((f_old, state)) => engine.reseed(&sys, *f_old, state)?,
        };
        let run = run_to_steady(&sys, &seed_state, &cfg.steady)?;
        records.push(make_record(f, seed_state.time, &run, cfg, provenance));
        prev = Some((f, run.final_state));
    }
    Ok(BifurcationDataset {
        label: engine.label().to_string(),
        f_start: cfg.f_start,
        f_end: cfg.f_end,
        delta_f: cfg.delta_f,
        records,
        wall_seconds: wall.elapsed().as_secs_f64(),
    })
}

/// Estimated F locations of the qualitative changes along a branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLandmarks {
    /// Lowest F of the contiguous symmetric period-1 band reaching the top
    /// of the range; below it the orbit pair is asymmetric.
    pub symmetry_breaking_f: Option<f64>,
    /// F extent of asymmetric period-1 records.
    pub asymmetric_band: Option<(f64, f64)>,
    /// Highest F classified with period >= 2 (first doubling when coming
    /// down in F).
    pub first_period_doubling_f: Option<f64>,
    /// F extent of chaotic records.
    pub chaotic_band: Option<(f64, f64)>,
    /// Highest F whose record decayed to static equilibrium.
    pub extinction_f: Option<f64>,
}

impl BifurcationDataset {
    pub fn landmarks(&self) -> SweepLandmarks {
        let mut by_f: Vec<&SweepRecord> = self.records.iter().collect();
        by_f.sort_by(|a, b| a.f.partial_cmp(&b.f).unwrap());

        let mut symmetry_breaking_f = None;
        for r in by_f.iter().rev() {
            if r.classification == SteadyStateClass::PeriodN(1) && r.symmetric {
                symmetry_breaking_f = Some(r.f);
            } else {
                break;
            }
        }
        let band = |pred: &dyn Fn(&SweepRecord) -> bool| -> Option<(f64, f64)> {
            let fs: Vec<f64> = by_f.iter().filter(|r| pred(r)).map(|r| r.f).collect();
            match (fs.first(), fs.last()) {
                (Some(&lo), Some(&hi)) => Some((lo, hi)),
                _ => None,
            }
        };
        let asymmetric_band =
            band(&|r| r.classification == SteadyStateClass::PeriodN(1) && !r.symmetric);
        let chaotic_band = band(&|r| r.classification == SteadyStateClass::Chaotic);
        let first_period_doubling_f = by_f
            .iter()
            .rev()
            .find(|r| matches!(r.classification, SteadyStateClass::PeriodN(n) if n >= 2))
            .map(|r| r.f);
        let extinction_f = by_f
            .iter()
            .rev()
            .find(|r| r.classification == SteadyStateClass::StaticEquilibrium)
            .map(|r| r.f);
        SweepLandmarks {
            symmetry_breaking_f,
            asymmetric_band,
            first_period_doubling_f,
            chaotic_band,
            extinction_f,
        }
    }

    /// One row per stored section velocity; settled and unresolved records
    /// keep a single row with an empty velocity column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("F,crossing_index,v_tip,classification,period_n\n");
        for r in &self.records {
            let class = r.classification.label();
            let period_n = match r.classification {
                SteadyStateClass::PeriodN(n) => n.to_string(),
                _ => String::new(),
            };
            if r.section_values.is_empty() {
                let _ = writeln!(out, "{},,,{},{}", fmt_f64(r.f), class, period_n);
            } else {
                for (i, v) in r.section_values.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        fmt_f64(r.f),
                        i,
                        fmt_f64(*v),
                        class,
                        period_n
                    );
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Input(format!("dataset serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("dataset parse failed: {e}")))
    }

    /// Aggregate view: counts per classification plus landmark estimates.
    pub fn summary(&self) -> SweepSummary {
        let count = |pred: &dyn Fn(&SweepRecord) -> bool| {
            self.records.iter().filter(|r| pred(r)).count()
        };
        SweepSummary {
            label: self.label.clone(),
            f_start: self.f_start,
            f_end: self.f_end,
            delta_f: self.delta_f,
            n_points: self.records.len(),
            n_period1_symmetric: count(&|r| {
                r.classification == SteadyStateClass::PeriodN(1) && r.symmetric
            }),
            n_period1_asymmetric: count(&|r| {
                r.classification == SteadyStateClass::PeriodN(1) && !r.symmetric
            }),
            n_multi_period: count(&|r| {
                matches!(r.classification, SteadyStateClass::PeriodN(n) if n >= 2)
            }),
            n_chaotic: count(&|r| r.classification == SteadyStateClass::Chaotic),
            n_static: count(&|r| r.classification == SteadyStateClass::StaticEquilibrium),
            n_unresolved: count(&|r| r.classification == SteadyStateClass::Unresolved),
            landmarks: self.landmarks(),
            wall_seconds: self.wall_seconds,
        }
    }
}

fn fmt_f64(v: f64) -> String {
    let s = format!("{v}");
    if s.parse::<f64>() == Ok(v) {
        s
    } else {
        format!("{v:.17e}")
    }
}

/// Aggregated sweep statistics for the JSON summary artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub label: String,
    pub f_start: f64,
    pub f_end: f64,
    pub delta_f: f64,
    pub n_points: usize,
    pub n_period1_symmetric: usize,
    pub n_period1_asymmetric: usize,
    pub n_multi_period: usize,
    pub n_chaotic: usize,
    pub n_static: usize,
    pub n_unresolved: usize,
    pub landmarks: SweepLandmarks,
    pub wall_seconds: f64,
}

/// Per-F comparison of two datasets on the same grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub f: f64,
    /// Hausdorff distance between the section-value sets; infinite when one
    /// side has values and the other none.
    pub distance: f64,
    pub class_match: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepComparison {
    pub records: Vec<ComparisonRecord>,
    pub fraction_class_match: f64,
    /// Fraction of F points whose distance is at most the tolerance.
    pub fraction_within_tol: f64,
    pub max_finite_distance: f64,
    pub tolerance: f64,
}

/// Compare two datasets record by record. Requires identical F grids.
pub fn compare_datasets(
    a: &BifurcationDataset,
    b: &BifurcationDataset,
    tol: f64,
) -> Result<SweepComparison> {
    if a.records.len() != b.records.len() {
        return Err(Error::Alignment(format!(
            "datasets have {} and {} records",
            a.records.len(),
            b.records.len()
        )));
    }
    let mut records = Vec::with_capacity(a.records.len());
    let mut matches = 0usize;
    let mut within = 0usize;
    let mut max_finite = 0.0_f64;
    for (ra, rb) in a.records.iter().zip(&b.records) {
        if (ra.f - rb.f).abs() > 1e-9 {
            return Err(Error::Alignment(format!(
                "record kick strengths differ: {} vs {}",
                ra.f, rb.f
            )));
        }
        let distance = hausdorff_distance(&ra.section_values, &rb.section_values);
        let class_match = ra.classification == rb.classification;
        if class_match {
            matches += 1;
        }
        if distance <= tol {
            within += 1;
        }
        if distance.is_finite() {
            max_finite = max_finite.max(distance);
        }
        records.push(ComparisonRecord {
            f: ra.f,
            distance,
            class_match,
        });
    }
    let n = records.len().max(1) as f64;
    Ok(SweepComparison {
        records,
        fraction_class_match: matches as f64 / n,
        fraction_within_tol: within as f64 / n,
        max_finite_distance: max_finite,
        tolerance: tol,
    })
}
