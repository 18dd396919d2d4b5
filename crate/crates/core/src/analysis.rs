//! Comparison analytics: aligned RMS field errors between trajectory
//! records, periodograms with peak detection, and principal angles between
//! reduced subspaces.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pod::PodBasis;
use crate::sampling::SnapshotSet;

/// Phase-plane record `(w, wdot)` at one beam location for both inputs,
/// over the aligned comparison window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub x: f64,
    pub reference: Vec<(f64, f64)>,
    pub reduced: Vec<(f64, f64)>,
}

/// Relative Frobenius errors between two field records after phase
/// alignment, as percentages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub displacement_rms_percent: f64,
    pub velocity_rms_percent: f64,
    /// Samples in the aligned window.
    pub samples: usize,
    /// Complete section-to-section cycles covered by the window.
    pub cycles: usize,
    /// Phase-plane traces at mid-span and at the tip.
    pub traces: Vec<PhaseTrace>,
}

/// Times of downward tip crossings through `w(1) = d/2`, by linear
/// interpolation between samples.
fn section_crossing_times(snap: &SnapshotSet) -> Vec<f64> {
    let tip = snap.row_at(1.0);
    let half = 0.5 * snap.params.d;
    let mut times = Vec::new();
    for j in 1..snap.n_t() {
        let w0 = snap.w[(tip, j - 1)] - half;
        let w1 = snap.w[(tip, j)] - half;
        if w0 > 0.0 && w1 <= 0.0 {
            let frac = w0 / (w0 - w1);
            let v = snap.wdot[(tip, j - 1)] * (1.0 - frac) + snap.wdot[(tip, j)] * frac;
            if v < 0.0 {
                times.push(snap.t_grid[j - 1] + frac * (snap.t_grid[j] - snap.t_grid[j - 1]));
            }
        }
    }
    times
}

fn frobenius_window(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    start_a: usize,
    start_b: usize,
    m: usize,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..m {
        let ca = a.column(start_a + j);
        let cb = b.column(start_b + j);
        num += (ca - cb).norm_squared();
        den += ca.norm_squared();
    }
    100.0 * (num / den).sqrt()
}

/// Relative RMS field errors of `reduced` against `reference`.
///
/// Both records are aligned at their first downward crossing of the
/// section `w(1) = d/2` and truncated to the same whole number of
/// section-to-section cycles, so steady-state records with arbitrary
/// phase offsets compare fairly.
pub fn rms_errors(reference: &SnapshotSet, reduced: &SnapshotSet) -> Result<ErrorMetrics> {
    reference.validate()?;
    reduced.validate()?;
    if reference.n_x() != reduced.n_x()
        || reference
            .x_grid
            .iter()
            .zip(&reduced.x_grid)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::Alignment("records use different space grids".into()));
    }
    let dt_a = reference.t_grid[1] - reference.t_grid[0];
    let dt_b = reduced.t_grid[1] - reduced.t_grid[0];
    if ((dt_a - dt_b) / dt_a).abs() > 1e-9 {
        return Err(Error::Alignment(format!(
            "records use different sample rates: {} vs {}",
            1.0 / dt_a,
            1.0 / dt_b
        )));
    }

    let cross_a = section_crossing_times(reference);
    let cross_b = section_crossing_times(reduced);
    if cross_a.len() < 2 || cross_b.len() < 2 {
        return Err(Error::Alignment(format!(
            "need at least two section crossings to align, found {} and {}",
            cross_a.len(),
            cross_b.len()
        )));
    }
    let period_a = (cross_a.last().unwrap() - cross_a[0]) / (cross_a.len() - 1) as f64;
    let period_b = (cross_b.last().unwrap() - cross_b[0]) / (cross_b.len() - 1) as f64;
    if ((period_a - period_b) / period_a).abs() > 0.05 {
        return Err(Error::Alignment(format!(
            "section return times differ: {period_a} vs {period_b}"
        )));
    }

    let cycles = cross_a.len().min(cross_b.len()) - 1;
    let start_a = reference.t_grid.partition_point(|&t| t < cross_a[0]);
    let start_b = reduced.t_grid.partition_point(|&t| t < cross_b[0]);
    let end_a = reference
        .t_grid
        .partition_point(|&t| t <= cross_a[cycles]);
    let end_b = reduced.t_grid.partition_point(|&t| t <= cross_b[cycles]);
    let m = (end_a - start_a).min(end_b - start_b);
    if m == 0 {
        return Err(Error::Alignment(
            "aligned comparison window contains no samples".into(),
        ));
    }

    let displacement_rms_percent =
        frobenius_window(&reference.w, &reduced.w, start_a, start_b, m);
    let velocity_rms_percent =
        frobenius_window(&reference.wdot, &reduced.wdot, start_a, start_b, m);

    let traces = [0.5, 1.0]
        .iter()
        .map(|&x| {
            let ia = reference.row_at(x);
            let trace = |s: &SnapshotSet, start: usize| {
                (0..m)
                    .map(|j| (s.w[(ia, start + j)], s.wdot[(ia, start + j)]))
                    .collect()
            };
            PhaseTrace {
                x: reference.x_grid[ia],
                reference: trace(reference, start_a),
                reduced: trace(reduced, start_b),
            }
        })
        .collect();

    Ok(ErrorMetrics {
        displacement_rms_percent,
        velocity_rms_percent,
        samples: m,
        cycles,
        traces,
    })
}

/// Taper applied before the periodogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowKind {
    Rectangular,
    Hann,
}

impl WindowKind {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; n],
            WindowKind::Hann => (0..n)
                .map(|j| {
                    let phase = 2.0 * std::f64::consts::PI * j as f64 / (n - 1) as f64;
                    0.5 * (1.0 - phase.cos())
                })
                .collect(),
        }
    }
}

/// Options for [`power_spectrum`].
#[derive(Debug, Clone)]
pub struct SpectrumConfig {
    pub window: WindowKind,
    /// A local maximum counts as a peak when its power is at least this
    /// fraction of the strongest non-DC bin.
    pub peak_rel_threshold: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            window: WindowKind::Hann,
            peak_rel_threshold: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralPeak {
    /// Cycles per unit time.
    pub frequency: f64,
    pub power: f64,
}

/// One-sided periodogram of a uniformly sampled series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    /// Detected peaks in ascending frequency.
    pub peaks: Vec<SpectralPeak>,
    pub bin_width: f64,
    /// Sum of the one-sided power values.
    pub sum_power: f64,
    /// Window-weighted mean square of the mean-removed signal; equals
    /// `sum_power` by Parseval's identity.
    pub signal_mean_square: f64,
    /// Set when the record holds fewer than four periods of the dominant
    /// peak (or no peak was found at all): frequencies are then poorly
    /// resolved.
    pub resolution_warning: bool,
}

impl SpectrumResult {
    /// The strongest detected peak.
    pub fn fundamental(&self) -> Option<&SpectralPeak> {
        self.peaks
            .iter()
            .max_by(|a, b| a.power.partial_cmp(&b.power).unwrap())
    }

    pub fn peak_frequencies(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.frequency).collect()
    }
}

/// Periodogram with mean removal and a taper window, normalized so that
/// the one-sided power sums to the (window-weighted) mean square of the
/// mean-removed signal.
pub fn power_spectrum(series: &[f64], rate: f64, cfg: &SpectrumConfig) -> Result<SpectrumResult> {
    let n = series.len();
    if n < 4 {
        return Err(Error::Input(format!(
            "spectrum needs at least 4 samples, got {n}"
        )));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Input(format!("sample rate must be positive, got {rate}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let weights = cfg.window.weights(n);
    let wsq: f64 = weights.iter().map(|w| w * w).sum();

    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .zip(&weights)
        .map(|(&y, &w)| Complex::new(w * (y - mean), 0.0))
        .collect();
    let signal_mean_square = buf.iter().map(|z| z.re * z.re).sum::<f64>() / wsq;

    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let n_half = n / 2 + 1;
    let scale = 1.0 / (n as f64 * wsq);
    let mut frequencies = Vec::with_capacity(n_half);
    let mut power = Vec::with_capacity(n_half);
    for k in 0..n_half {
        // Double interior bins so the one-sided sum keeps the total.
        let fold = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else {
            2.0
        };
        frequencies.push(k as f64 * rate / n as f64);
        power.push(fold * scale * buf[k].norm_sqr());
    }
    let sum_power: f64 = power.iter().sum();

    let max_power = power[1..].iter().cloned().fold(0.0_f64, f64::max);
    let floor = cfg.peak_rel_threshold * max_power;
    let mut peaks = Vec::new();
    for k in 1..n_half - 1 {
        if power[k] > power[k - 1] && power[k] > power[k + 1] && power[k] >= floor {
            peaks.push(SpectralPeak {
                frequency: frequencies[k],
                power: power[k],
            });
        }
    }

    let duration = n as f64 / rate;
    let resolution_warning = peaks
        .iter()
        .max_by(|a, b| a.power.partial_cmp(&b.power).unwrap())
        .map_or(true, |p| p.frequency * duration < 4.0);

    Ok(SpectrumResult {
        frequencies,
        power,
        peaks,
        bin_width: rate / n as f64,
        sum_power,
        signal_mean_square,
        resolution_warning,
    })
}

/// Principal angles between two reduced subspaces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngleReport {
    pub p: usize,
    /// Angles in radians, ascending, all in [0, pi/2].
    pub angles: Vec<f64>,
    pub max_angle: f64,
}

/// Angles between the leading `p`-dimensional subspaces of two bases on
/// the same grid, from the singular values of `Psi_a^T Psi_b`.
pub fn principal_angles(a: &PodBasis, b: &PodBasis, p: usize) -> Result<AngleReport> {
    if a.x_grid.len() != b.x_grid.len()
        || a.x_grid
            .iter()
            .zip(&b.x_grid)
            .any(|(u, v)| (u - v).abs() > 1e-12)
    {
        return Err(Error::Alignment("bases use different space grids".into()));
    }
    if p == 0 || p > a.p_max || p > b.p_max {
        return Err(Error::Input(format!(
            "subspace dimension {p} out of range for ranks {} and {}",
            a.p_max, b.p_max
        )));
    }
    let m = a.leading(p).transpose() * b.leading(p);
    let svd = m.svd(false, false);
    let mut angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| s.min(1.0).acos())
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let max_angle = *angles.last().unwrap();
    Ok(AngleReport {
        p,
        angles,
        max_angle,
    })
}
