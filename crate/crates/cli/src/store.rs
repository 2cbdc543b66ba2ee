//! On-disk layout of preprocessed scenes.
//!
//! ```text
//! processed/
//!   index.json                 volcano ids, in manifest order
//!   <id>/scenes.json           dates, backgrounds, raster file names
//!   <id>/excess-NNN.f64        excess temperature, little-endian f64
//!   <id>/age-NNN.f64           fill age in days
//!   <id>/report.json           pipeline report
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thermocast::dataset::ProcessedVolcano;
use thermocast::pipeline::{read_json, write_json, Scene};
use thermocast::{Error, Grid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredScene {
    date: NaiveDate,
    background: f64,
    excess: String,
    age: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredVolcano {
    volcano_id: String,
    height: usize,
    width: usize,
    scenes: Vec<StoredScene>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Index {
    volcanoes: Vec<String>,
}

pub fn write_grid(path: &Path, grid: &Grid) -> Result<()> {
    let bytes: Vec<u8> = grid.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_grid(path: &Path, height: usize, width: usize) -> Result<Grid> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() != height * width * 8 {
        return Err(Error::Data(format!(
            "{}: {} bytes, expected {}x{} f64 values",
            path.display(),
            bytes.len(),
            height,
            width
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Grid::new(height, width, data)
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes one volcano's processed scenes and adds nothing to the index;
/// see [`write_index`].
pub fn write_volcano(root: &Path, volcano: &ProcessedVolcano) -> Result<()> {
    let dir = root.join(&volcano.volcano_id);
    create_dir(&dir)?;
    let (height, width) = volcano
        .scenes
        .first()
        .map(|s| s.grid.dims())
        .unwrap_or((0, 0));
    let mut scenes = Vec::with_capacity(volcano.scenes.len());
    for (k, s) in volcano.scenes.iter().enumerate() {
        let stored = StoredScene {
            date: s.date,
            background: s.background,
            excess: format!("excess-{k:03}.f64"),
            age: format!("age-{k:03}.f64"),
        };
        write_grid(&dir.join(&stored.excess), &s.grid)?;
        write_grid(&dir.join(&stored.age), &s.fill_age)?;
        scenes.push(stored);
    }
    write_json(
        &dir.join("scenes.json"),
        &StoredVolcano {
            volcano_id: volcano.volcano_id.clone(),
            height,
            width,
            scenes,
        },
    )
}

pub fn write_index(root: &Path, ids: &[String]) -> Result<()> {
    write_json(
        &root.join("index.json"),
        &Index {
            volcanoes: ids.to_vec(),
        },
    )
}

fn read_volcano(dir: &Path) -> Result<ProcessedVolcano> {
    let stored: StoredVolcano = read_json(&dir.join("scenes.json"))?;
    let scenes = stored
        .scenes
        .iter()
        .map(|s| {
            Ok(Scene {
                date: s.date,
                grid: read_grid(&dir.join(&s.excess), stored.height, stored.width)?,
                fill_age: read_grid(&dir.join(&s.age), stored.height, stored.width)?,
                background: s.background,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ProcessedVolcano {
        volcano_id: stored.volcano_id,
        scenes,
    })
}

/// Every processed volcano listed in the store's index.
pub fn read_store(root: &Path) -> Result<Vec<ProcessedVolcano>> {
    let index_path = root.join("index.json");
    if !index_path.exists() {
        return Err(Error::Data(format!(
            "no processed scenes under {}; run preprocess first",
            root.display()
        )));
    }
    let index: Index = read_json(&index_path)?;
    index
        .volcanoes
        .iter()
        .map(|id| read_volcano(&root.join(id)))
        .collect()
}

pub fn report_path(root: &Path, volcano_id: &str) -> PathBuf {
    root.join(volcano_id).join("report.json")
}
