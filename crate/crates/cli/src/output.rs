//! Output directory handling and the per-run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use mpa_core::config::RunConfig;
use mpa_core::units::DerivedCoupling;
use serde::Serialize;

use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

/// Everything needed to repeat a run. Written last; the only artifact that
/// carries wall-clock time and so the only one that differs between reruns.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_path: Option<PathBuf>,
    pub config: Option<RunConfig>,
    #[serde(rename = "couplings_eV", skip_serializing_if = "Option::is_none")]
    pub couplings_ev: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived_coupling: Option<DerivedCoupling>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

/// Collects artifacts for one output directory.
pub struct RunDir {
    dir: PathBuf,
    outputs: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::new(crate::EXIT_IO, anyhow::anyhow!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), outputs: Vec::new(), started: Instant::now() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write one artifact through a buffered writer.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<PathBuf, Failure>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), Failure>,
    {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| Failure::new(crate::EXIT_IO, anyhow::anyhow!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Failure::new(crate::EXIT_IO, e))?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<(), Failure> {
        manifest.outputs = std::mem::take(&mut self.outputs);
        manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        self.write_json(MANIFEST, &manifest)?;
        Ok(())
    }
}
