//! Flat key-value configuration with a fixed schema.
//!
//! One file drives the whole pipeline; every subcommand reads the sections
//! it needs and ignores the rest. Keys are dotted (`params.f`,
//! `closure.epsilon`), values are bare tokens, `#` starts a comment.
//! `--set key=value` entries override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use kickbeam::SystemParams;

/// Every key any subcommand understands. Validation is against the union so
/// a single shared file can carry the whole pipeline's settings.
pub const KNOWN_KEYS: &[&str] = &[
    "params.cv",
    "params.cm",
    "params.m",
    "params.k",
    "params.f",
    "params.d",
    "params.vcr",
    "params.n_modes",
    "integrate.rel_tol",
    "integrate.abs_tol",
    "integrate.max_step",
    "integrate.event_tol",
    "simulate.initial",
    "simulate.horizon",
    "simulate.sample_rate",
    "simulate.window_start",
    "simulate.window_end",
    "simulate.n_x",
    "steady.transient",
    "steady.measure",
    "steady.max_time",
    "steady.delta_cluster",
    "steady.max_period",
    "steady.min_cycles",
    "steady.static_tol",
    "bifurcate.f_start",
    "bifurcate.f_end",
    "bifurcate.delta_f",
    "bifurcate.max_points",
    "bifurcate.engine",
    "bifurcate.rom_package",
    "bifurcate.basis",
    "pod.snapshots",
    "pod.rank_tol",
    "pod.cheb_degree",
    "pod.cheb_chop",
    "pod.variance_fraction",
    "closure.snapshots",
    "closure.basis",
    "closure.kicks",
    "closure.epsilon",
    "rom.basis",
    "rom.p",
    "rom.closure",
    "romsim.package",
    "romsim.basis",
    "romsim.initial",
    "romsim.horizon",
    "romsim.sample_rate",
    "romsim.window_start",
    "romsim.window_end",
    "romsim.n_x",
    "compare.reference",
    "compare.reduced",
    "compare.window",
    "compare.spectrum_location",
    "modes.variant",
    "angles.bases",
    "angles.p",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Parse a config file; `None` means all defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Config::default();
        let Some(path) = path else {
            return Ok(cfg);
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    lineno + 1
                );
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || key.contains(char::is_whitespace) {
                bail!("{}:{}: malformed key {key:?}", path.display(), lineno + 1);
            }
            if cfg.values.insert(key.clone(), value).is_some() {
                bail!("{}:{}: duplicate key {key}", path.display(), lineno + 1);
            }
        }
        Ok(cfg)
    }

    /// Apply `--set key=value` overrides on top of the file values.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        for entry in sets {
            let Some((key, value)) = entry.split_once('=') else {
                bail!("--set expects key=value, got {entry:?}");
            };
            self.values
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(())
    }

    /// Reject keys outside the schema.
    pub fn validate_keys(&self) -> Result<()> {
        let unknown: Vec<&str> = self
            .values
            .keys()
            .map(String::as_str)
            .filter(|k| !KNOWN_KEYS.contains(k))
            .collect();
        if !unknown.is_empty() {
            bail!("unknown configuration keys: {}", unknown.join(", "));
        }
        Ok(())
    }

    /// Resolved values, for the manifest echo.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .with_context(|| format!("missing required configuration key `{key}`"))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require(key)?))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .with_context(|| format!("key `{key}`: expected a number, got {s:?}")),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .with_context(|| format!("key `{key}`: expected an integer, got {s:?}")),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// The beam/kicker parameter block, canonical defaults where unset.
    pub fn params(&self) -> Result<SystemParams> {
        let p = SystemParams {
            cv: self.f64_or("params.cv", 4.5)?,
            cm: self.f64_or("params.cm", 3.0e-4)?,
            m: self.f64_or("params.m", 1.0)?,
            k: self.f64_or("params.k", 1000.0)?,
            f: self.f64_or("params.f", 12.95)?,
            d: self.f64_or("params.d", 0.2)?,
            vcr: self.f64_or("params.vcr", 0.05)?,
            n_modes: self.usize_or("params.n_modes", 25)?,
        };
        p.validate()?;
        Ok(p)
    }

    /// Integrator tolerances, defaults from the library.
    pub fn integrator(&self) -> Result<kickbeam::integrate::IntegratorConfig> {
        let mut cfg = kickbeam::integrate::IntegratorConfig::default();
        cfg.rel_tol = self.f64_or("integrate.rel_tol", cfg.rel_tol)?;
        cfg.abs_tol = self.f64_or("integrate.abs_tol", cfg.abs_tol)?;
        cfg.max_step = self.f64_or("integrate.max_step", cfg.max_step)?;
        cfg.event_tol = self.f64_or("integrate.event_tol", cfg.event_tol)?;
        Ok(cfg)
    }

    /// Steady-state detection budget.
    pub fn steady(&self) -> Result<kickbeam::steady::SteadyConfig> {
        let mut cfg = kickbeam::steady::SteadyConfig::default();
        cfg.transient = self.f64_or("steady.transient", cfg.transient)?;
        cfg.measure = self.f64_or("steady.measure", cfg.measure)?;
        cfg.max_time = self.f64_or("steady.max_time", cfg.max_time)?;
        cfg.delta_cluster = self.f64_or("steady.delta_cluster", cfg.delta_cluster)?;
        cfg.max_period = self.usize_or("steady.max_period", cfg.max_period)?;
        cfg.min_cycles = self.usize_or("steady.min_cycles", cfg.min_cycles)?;
        cfg.static_energy_tol = self.f64_or("steady.static_tol", cfg.static_energy_tol)?;
        cfg.integrator = self.integrator()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_overrides_and_rejects_unknowns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# pipeline settings\nparams.f = 12.6   # kick\nsimulate.horizon = 40\n\n",
        )
        .unwrap();
        let mut cfg = Config::load(Some(&path)).unwrap();
        assert_eq!(cfg.get("params.f"), Some("12.6"));
        cfg.apply_overrides(&["params.f=12.7".into()]).unwrap();
        assert_eq!(cfg.params().unwrap().f, 12.7);
        cfg.validate_keys().unwrap();

        cfg.apply_overrides(&["simulate.horzion=10".into()]).unwrap();
        let err = cfg.validate_keys().unwrap_err().to_string();
        assert!(err.contains("simulate.horzion"), "{err}");
    }

    #[test]
    fn duplicate_and_malformed_lines_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "params.f = 1\nparams.f = 2\n").unwrap();
        assert!(Config::load(Some(&path)).is_err());
        std::fs::write(&path, "just some words\n").unwrap();
        assert!(Config::load(Some(&path)).is_err());
        let mut cfg = Config::default();
        assert!(cfg.apply_overrides(&["nonsense".into()]).is_err());
        assert!(cfg.require("closure.snapshots").is_err());
    }
}
