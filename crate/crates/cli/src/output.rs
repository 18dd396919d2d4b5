//! Output directory handling: atomic writes, failure cleanup, and the run
//! manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use kickbeam::sampling::SnapshotSet;

/// Collects artifacts for one run. Files land via write-temp-then-rename so
/// a crash never leaves a half-written artifact under its final name; on
/// error the caller drops everything written so far.
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
    started: Instant,
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'static str,
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a BTreeMap<String, String>,
    artifacts: Vec<String>,
    wall_seconds: f64,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    fn tmp_name(&self, name: &str) -> PathBuf {
        self.root.join(format!(".tmp-{}", name.replace('/', "_")))
    }

    /// Atomically write a text artifact.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let tmp = self.tmp_name(name);
        let path = self.root.join(name);
        std::fs::write(&tmp, contents)
            .with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &path)
            .with_context(|| format!("renaming into {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Atomically write a snapshot directory (staged under a dot name,
    /// renamed whole).
    pub fn write_snapshots(&mut self, name: &str, snap: &SnapshotSet) -> Result<PathBuf> {
        let tmp = self.tmp_name(name);
        let path = self.root.join(name);
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp)?;
        }
        if path.exists() {
            std::fs::remove_dir_all(&path)?;
        }
        snap.write_dir(&tmp)
            .with_context(|| format!("writing snapshots to {}", tmp.display()))?;
        std::fs::rename(&tmp, &path)
            .with_context(|| format!("renaming into {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Write the manifest (always last) and consume the handle.
    pub fn finish(mut self, command: &str, config: &BTreeMap<String, String>) -> Result<()> {
        let manifest = Manifest {
            format: "kickbeam-manifest-1",
            tool: "kickbeam",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            artifacts: self
                .written
                .iter()
                .map(|p| {
                    p.strip_prefix(&self.root)
                        .unwrap_or(p)
                        .to_string_lossy()
                        .into_owned()
                })
                .collect(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        self.write("manifest.json", &text)?;
        Ok(())
    }

    /// Remove everything written so far (failure path).
    pub fn cleanup(self) {
        for path in &self.written {
            let _ = if path.is_dir() {
                std::fs::remove_dir_all(path)
            } else {
                std::fs::remove_file(path)
            };
        }
    }
}
