use std::path::Path;
use std::time::Duration;

use btn_core::config::{SimulationConfig, SCENARIO_VERSION};
use btn_core::grid::Grid;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Written as `manifest.json` next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub scenario: String,
    pub config: String,
    pub grid_hash: String,
    pub files: Vec<String>,
    pub duration_secs: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// SHA-256 over node counts and side lengths (little-endian bit patterns).
pub fn grid_hash(g: &Grid) -> String {
    let mut h = Sha256::new();
    h.update((g.nx() as u64).to_le_bytes());
    h.update((g.ny() as u64).to_le_bytes());
    h.update(g.lx().to_le_bytes());
    h.update(g.ly().to_le_bytes());
    hex::encode(h.finalize())
}

impl RunManifest {
    pub fn new(command: &str, cfg: &SimulationConfig, grid: &Grid) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: SCENARIO_VERSION.to_string(),
            config: cfg.to_text(),
            grid_hash: grid_hash(grid),
            files: Vec::new(),
            duration_secs: 0.0,
            notes: Vec::new(),
        }
    }

    pub fn finish(mut self, dir: &Path, files: Vec<String>, elapsed: Duration) -> std::io::Result<()> {
        self.files = files;
        self.duration_secs = elapsed.as_secs_f64();
        let json = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("manifest.json"), json + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_every_dimension() {
        let a = grid_hash(&Grid::new(9, 9, 1.0, 1.0).unwrap());
        assert_eq!(a.len(), 64);
        assert_ne!(a, grid_hash(&Grid::new(9, 10, 1.0, 1.0).unwrap()));
        assert_ne!(a, grid_hash(&Grid::new(9, 9, 2.0, 1.0).unwrap()));
        assert_eq!(a, grid_hash(&Grid::unit_square(9).unwrap()));
    }
}
