//! Snapshot assembly and persistence.
//!
//! A snapshot set is the displacement and velocity fields sampled on a
//! uniform spatial grid at a uniform rate: the raw material for proper
//! orthogonal decomposition. Columns are reconstructed from the modal
//! coordinates through whichever basis was active at each instant, and
//! kick-phase samples include the static deflection so the stored field
//! is always the absolute one.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{FosSystem, Model};
use crate::integrate::{FieldSamples, SectionCrossing, TransitionRecord};
use crate::modal::static_deflection;
use crate::params::SystemParams;

/// Spatio-temporal field samples with their grids and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    /// Spatial grid, strictly increasing on [0, 1].
    pub x_grid: Vec<f64>,
    /// Sample times, strictly increasing, uniform rate.
    pub t_grid: Vec<f64>,
    /// Displacement field, `w[(i, j)] = w(x_i, t_j)`.
    pub w: DMatrix<f64>,
    /// Velocity field, same layout.
    pub wdot: DMatrix<f64>,
    pub params: SystemParams,
    pub provenance: Provenance,
}

/// Run metadata carried with a snapshot set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub tool: String,
    pub sample_rate: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub notes: String,
}

/// Uniform grid of `n` points covering [0, 1] inclusive.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = 1.0 / (n - 1) as f64;
    (0..n).map(|i| i as f64 * h).collect()
}

impl SnapshotSet {
    pub fn n_x(&self) -> usize {
        self.x_grid.len()
    }

    pub fn n_t(&self) -> usize {
        self.t_grid.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_grid.len() < 2 || self.t_grid.len() < 2 {
            return Err(Error::Input("snapshot grids need at least 2 points".into()));
        }
        if !self.x_grid.windows(2).all(|w| w[1] > w[0])
            || !self.t_grid.windows(2).all(|w| w[1] > w[0])
        {
            return Err(Error::Input("snapshot grids must be strictly increasing".into()));
        }
        let (nx, nt) = (self.x_grid.len(), self.t_grid.len());
        if self.w.nrows() != nx || self.w.ncols() != nt {
            return Err(Error::Input(format!(
                "displacement matrix is {}x{}, grids say {}x{}",
                self.w.nrows(),
                self.w.ncols(),
                nx,
                nt
            )));
        }
        if self.wdot.nrows() != nx || self.wdot.ncols() != nt {
            return Err(Error::Input("velocity matrix does not match grids".into()));
        }
        Ok(())
    }

    /// Row index of the grid point nearest `x`.
    pub fn row_at(&self, x: f64) -> usize {
        (0..self.x_grid.len())
            .min_by(|&a, &b| {
                (self.x_grid[a] - x)
                    .abs()
                    .partial_cmp(&(self.x_grid[b] - x).abs())
                    .unwrap()
            })
            .unwrap()
    }

    /// Trapezoid weights of the time grid (non-uniform safe).
    pub fn time_weights(&self) -> Vec<f64> {
        trapezoid_weights(&self.t_grid)
    }

    /// SHA-256 over the grids and both fields, bit-exact. Lets downstream
    /// artifacts (bases, reduced models) record which data they came from.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update((self.n_x() as u64).to_le_bytes());
        hasher.update((self.n_t() as u64).to_le_bytes());
        let mut feed = |values: &mut dyn Iterator<Item = f64>| {
            for v in values {
                hasher.update(v.to_le_bytes());
            }
        };
        feed(&mut self.x_grid.iter().copied());
        feed(&mut self.t_grid.iter().copied());
        feed(&mut self.w.iter().copied());
        feed(&mut self.wdot.iter().copied());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }
}

/// Trapezoid quadrature weights for an increasing grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    assert!(n >= 2);
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (grid[i + 1] - grid[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Reconstruct the absolute displacement and velocity fields on `x_grid`
/// from recorded modal samples.
pub fn sample_fields(
    sys: &FosSystem,
    samples: &FieldSamples,
    x_grid: &[f64],
    provenance: Provenance,
) -> Result<SnapshotSet> {
    if samples.is_empty() {
        return Err(Error::Input("no field samples recorded".into()));
    }
    let nx = x_grid.len();
    let nt = samples.len();
    let p = sys.params();

    // One basis-evaluation matrix per variant, reused for every column.
    let free_shapes = sys.free_basis().sample_matrix(x_grid, 0);
    let spring_shapes = sys.spring_basis().sample_matrix(x_grid, 0);
    // Unit-amplitude static deflection profile; the per-sample shift is
    // kick_sign * amplitude times this.
    let unit_shift = static_deflection(p, 1.0);
    let shift_profile: Vec<f64> = x_grid.iter().map(|&x| unit_shift.eval(x, 0)).collect();

    let mut w = DMatrix::zeros(nx, nt);
    let mut wdot = DMatrix::zeros(nx, nt);
    let q = nalgebra::DVector::zeros(sys.free_basis().len());
    let mut q = q;
    for j in 0..nt {
        let shapes = match samples.models[j] {
            Model::A => &free_shapes,
            _ => &spring_shapes,
        };
        q.copy_from_slice(samples.coords(j));
        let mut col = shapes * &q;
        if samples.models[j] == Model::B {
            let sign = samples.kick_signs[j];
            for (c, s) in col.iter_mut().zip(&shift_profile) {
                *c += sign * s;
            }
        }
        w.set_column(j, &col);
        q.copy_from_slice(samples.vels(j));
        wdot.set_column(j, &(shapes * &q));
    }

    let set = SnapshotSet {
        x_grid: x_grid.to_vec(),
        t_grid: samples.times.clone(),
        w,
        wdot,
        params: p.clone(),
        provenance,
    };
    set.validate()?;
    Ok(set)
}

fn fmt_full(v: f64) -> String {
    // Shortest representation that round-trips a double exactly.
    let mut s = format!("{v:e}");
    if s.parse::<f64>() != Ok(v) {
        s = format!("{v:.17e}");
    }
    s
}

fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut buf = String::with_capacity(m.len() * 24);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                buf.push(',');
            }
            let _ = write!(buf, "{}", fmt_full(m[(i, j)]));
        }
        buf.push('\n');
    }
    fs::write(path, buf)?;
    Ok(())
}

fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| {
                    Error::Input(format!("{}:{}: bad number {tok:?}: {e}", path.display(), ln + 1))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Input(format!(
                    "{}: ragged rows ({} vs {})",
                    path.display(),
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Input(format!("{}: empty matrix", path.display())));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl SnapshotSet {
    /// Persist to a directory: `header.txt` with the metadata and grids,
    /// `W.csv` / `Wdot.csv` with one spatial point per row.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir)?;
        let mut header = String::new();
        let _ = writeln!(header, "format = kickbeam-snapshots-1");
        let _ = writeln!(header, "n_x = {}", self.n_x());
        let _ = writeln!(header, "n_t = {}", self.n_t());
        let _ = writeln!(header, "sample_rate = {}", fmt_full(self.provenance.sample_rate));
        let _ = writeln!(header, "window_start = {}", fmt_full(self.provenance.window_start));
        let _ = writeln!(header, "window_end = {}", fmt_full(self.provenance.window_end));
        let _ = writeln!(header, "tool = {}", self.provenance.tool);
        let _ = writeln!(header, "notes = {}", self.provenance.notes);
        let pj = serde_json::to_string(&self.params)
            .map_err(|e| Error::Input(format!("params serialize: {e}")))?;
        let _ = writeln!(header, "params = {pj}");
        let xg: Vec<String> = self.x_grid.iter().map(|&v| fmt_full(v)).collect();
        let _ = writeln!(header, "x_grid = {}", xg.join(","));
        let tg: Vec<String> = self.t_grid.iter().map(|&v| fmt_full(v)).collect();
        let _ = writeln!(header, "t_grid = {}", tg.join(","));
        fs::write(dir.join("header.txt"), header)?;
        write_matrix_csv(&dir.join("W.csv"), &self.w)?;
        write_matrix_csv(&dir.join("Wdot.csv"), &self.wdot)?;
        Ok(())
    }

    /// Load a snapshot directory written by [`SnapshotSet::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<SnapshotSet> {
        let header = fs::read_to_string(dir.join("header.txt"))?;
        let mut fields = std::collections::HashMap::new();
        for line in header.lines() {
            if let Some((k, v)) = line.split_once('=') {
                fields.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| -> Result<&String> {
            fields
                .get(k)
                .ok_or_else(|| Error::Input(format!("snapshot header missing key {k:?}")))
        };
        if get("format")? != "kickbeam-snapshots-1" {
            return Err(Error::Input(format!(
                "unsupported snapshot format {:?}",
                get("format")?
            )));
        }
        let parse_f64 = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|e| Error::Input(format!("header key {k}: {e}")))
        };
        let parse_grid = |k: &str| -> Result<Vec<f64>> {
            get(k)?
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Input(format!("header grid {k}: {e}")))
                })
                .collect()
        };
        let params: SystemParams = serde_json::from_str(get("params")?)
            .map_err(|e| Error::Input(format!("header params: {e}")))?;
        let set = SnapshotSet {
            x_grid: parse_grid("x_grid")?,
            t_grid: parse_grid("t_grid")?,
            w: read_matrix_csv(&dir.join("W.csv"))?,
            wdot: read_matrix_csv(&dir.join("Wdot.csv"))?,
            params,
            provenance: Provenance {
                tool: get("tool")?.clone(),
                sample_rate: parse_f64("sample_rate")?,
                window_start: parse_f64("window_start")?,
                window_end: parse_f64("window_end")?,
                notes: get("notes")?.clone(),
            },
        };
        set.validate()?;
        Ok(set)
    }
}

/// Write section crossings as CSV with the regions active on both sides of
/// each recorded transition; section rows carry `w_tip = d/2` by definition.
pub fn write_crossings_csv(
    path: &Path,
    crossings: &[SectionCrossing],
    transitions: &[TransitionRecord],
    params: &SystemParams,
) -> Result<()> {
    let mut buf = String::from("t,w_tip,v_tip,region_before,region_after\n");
    for c in crossings {
        // Find the transition record for this crossing (same instant).
        let rec = transitions
            .iter()
            .find(|r| (r.time - c.time).abs() < 1e-12)
            .ok_or_else(|| {
                Error::Input(format!("crossing at t = {} has no transition record", c.time))
            })?;
        let _ = writeln!(
            buf,
            "{},{},{},{:?},{:?}",
            fmt_full(c.time),
            fmt_full(0.5 * params.d),
            fmt_full(c.v_tip),
            rec.region_before,
            rec.region_after
        );
    }
    fs::write(path, buf)?;
    Ok(())
}
