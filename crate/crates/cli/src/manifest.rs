use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::CliError;

pub const VERSION: &str = env!("LCMPC_VERSION");

/// Written as `manifest.json` next to every set of outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config_path: Option<String>,
    pub out_dir: String,
    pub version: String,
    /// Wall-clock seconds per stage, in execution order.
    pub timings_s: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn new(config_path: Option<&Path>, out_dir: &Path) -> Self {
        Self {
            command: std::env::args().collect(),
            config_path: config_path.map(|p| p.display().to_string()),
            out_dir: out_dir.display().to_string(),
            version: VERSION.to_string(),
            timings_s: Vec::new(),
        }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let started = Instant::now();
        let out = f();
        self.timings_s.push((stage.to_string(), started.elapsed().as_secs_f64()));
        out
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let file = std::fs::File::create(out_dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }
}
