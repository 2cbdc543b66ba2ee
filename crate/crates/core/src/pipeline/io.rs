use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Manual viability label attached to each scene in a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneLabel {
    Viable,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Raster path, relative to the manifest's directory.
    pub file: String,
    pub date: NaiveDate,
    pub label: SceneLabel,
}

/// Per-volcano scene listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub volcano_id: String,
    pub width: usize,
    pub height: usize,
    pub scenes: Vec<ManifestEntry>,
}

/// An unprocessed temperature raster.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScene {
    pub volcano_id: String,
    pub date: NaiveDate,
    pub grid: Grid,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a row-major little-endian `f32` raster.
pub fn read_raster(path: &Path, height: usize, width: usize) -> Result<Grid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != height * width * 4 {
        return Err(Error::Data(format!(
            "{}: expected {} bytes for a {height}x{width} raster, found {}",
            path.display(),
            height * width * 4,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Grid::new(height, width, data)
}

/// Writes a grid as row-major little-endian `f32`.
pub fn write_raster(path: &Path, grid: &Grid) -> Result<()> {
    let mut bytes = Vec::with_capacity(grid.len() * 4);
    for &v in grid.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Data(format!(
                "{}: zero raster extent",
                self.volcano_id
            )));
        }
        for w in self.scenes.windows(2) {
            if w[1].date <= w[0].date {
                return Err(Error::Data(format!(
                    "{}: scene dates not strictly increasing at {}",
                    self.volcano_id, w[1].date
                )));
            }
        }
        Ok(())
    }

    /// Loads every listed raster. Paths resolve against `dir`.
    pub fn load_scenes(&self, dir: &Path) -> Result<Vec<RawScene>> {
        self.scenes
            .iter()
            .map(|e| {
                let grid = read_raster(&dir.join(&e.file), self.height, self.width)?;
                Ok(RawScene {
                    volcano_id: self.volcano_id.clone(),
                    date: e.date,
                    grid,
                })
            })
            .collect()
    }
}

/// All `*.json` manifests directly inside `dir`, sorted by path.
pub fn find_manifests(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
