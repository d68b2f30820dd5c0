//! Phantom datasets on disk: `phantom_NNNN.vol` (+ `.vol.json` sidecar),
//! `phantom_NNNN.gt.txt` and a `manifest.csv` listing them.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::transform::{parse_record, write_record, RigidTransform};
use crate::volume::{read_volume, Volume};

pub const MANIFEST: &str = "manifest.csv";

/// One manifest line. `volume_path` is relative to the dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub sample_id: String,
    pub volume_path: String,
    pub transform_record: String,
    pub plane_class: String,
}

/// A loaded dataset; `samples[i]` belongs to `rows[i]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<ManifestRow>,
    pub samples: Vec<(Volume, RigidTransform)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The shared plane class, or `mixed`.
    pub fn plane_class(&self) -> String {
        match self.rows.first() {
            Some(first) if self.rows.iter().all(|r| r.plane_class == first.plane_class) => first.plane_class.clone(),
            _ => "mixed".into(),
        }
    }
}

pub fn sample_name(index: usize) -> String {
    format!("phantom_{index:04}")
}

pub fn write_manifest(dir: &Path, rows: &[ManifestRow]) -> Result<(), ExperimentError> {
    let path = dir.join(MANIFEST);
    let mut wr = csv::Writer::from_path(&path).map_err(|e| ExperimentError::csv(&path, e))?;
    for r in rows {
        wr.serialize(r).map_err(|e| ExperimentError::csv(&path, e))?;
    }
    wr.flush().map_err(|e| ExperimentError::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>, ExperimentError> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(ExperimentError::Config(format!("no dataset manifest at {}", path.display())));
    }
    let mut rd = csv::Reader::from_path(&path).map_err(|e| ExperimentError::csv(&path, e))?;
    rd.deserialize().collect::<Result<Vec<ManifestRow>, _>>().map_err(|e| ExperimentError::csv(&path, e))
}

/// Reads every volume listed in `dir/manifest.csv`, in manifest order.
pub fn load_dataset(dir: &Path) -> Result<Dataset, ExperimentError> {
    let rows = read_manifest(dir)?;
    if rows.is_empty() {
        return Err(ExperimentError::Config(format!("dataset {} is empty", dir.display())));
    }
    let samples = rows
        .par_iter()
        .map(|row| {
            let path = dir.join(&row.volume_path);
            let volume = read_volume(&path).map_err(|e| ExperimentError::Data(format!("{}: {e}", path.display())))?;
            let gt = parse_record(&row.transform_record)
                .map_err(|e| ExperimentError::Data(format!("manifest row {}: {e}", row.sample_id)))?;
            Ok((volume, gt))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(Dataset { rows, samples })
}

pub(crate) fn manifest_row(index: usize, gt: &RigidTransform, plane_class: &str) -> ManifestRow {
    let name = sample_name(index);
    ManifestRow {
        volume_path: format!("{name}.vol"),
        sample_id: name,
        transform_record: write_record(gt),
        plane_class: plane_class.to_string(),
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(path).map_err(|e| ExperimentError::io(path, e))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|e| ExperimentError::io(path, e))
}
