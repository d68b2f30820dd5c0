//! VOL1 volume files and plane-image exports.
//!
//! A volume `name.vol` is raw little-endian `f32`, x-fastest, with a JSON
//! sidecar `name.vol.json`:
//!
//! ```json
//! {"dims":[nx,ny,nz],"spacing":1.0,"dtype":"f32le"}
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PlaneImage, Volume, VolumeError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing: f64,
    pub dtype: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_volume(path: &Path, volume: &Volume) -> Result<(), VolumeError> {
    let header = VolumeHeader { dims: volume.dims(), spacing: Volume::SPACING, dtype: "f32le".into() };
    fs::write(sidecar_path(path), serde_json::to_string(&header)?)?;
    let mut bytes = Vec::with_capacity(volume.data().len() * 4);
    for &v in volume.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<Volume, VolumeError> {
    let header: VolumeHeader = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if header.dtype != "f32le" {
        return Err(VolumeError::Header(format!("dtype '{}'", header.dtype)));
    }
    if header.spacing != Volume::SPACING {
        return Err(VolumeError::Header(format!("spacing {}", header.spacing)));
    }
    let bytes = fs::read(path)?;
    let expected = header.dims.iter().product::<usize>() * 4;
    if bytes.len() != expected {
        return Err(VolumeError::Header(format!("expected {expected} data bytes, found {}", bytes.len())));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume::new(header.dims, data)
}

/// 16-bit binary PGM, min-max normalized to `0..=65535`.
pub fn write_pgm16(path: &Path, image: &PlaneImage) -> Result<(), VolumeError> {
    let px = image.pixels();
    let lo = px.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let s = image.size();
    let mut out = Vec::with_capacity(32 + px.len() * 2);
    write!(out, "P5\n{s} {s}\n65535\n")?;
    for &p in px {
        let v = if range > 0.0 { ((p - lo) / range * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Raw little-endian `f32` pixels, row-major, no header.
pub fn write_raw_f32_image(path: &Path, image: &PlaneImage) -> Result<(), VolumeError> {
    let bytes: Vec<u8> = image.pixels().iter().flat_map(|&p| (p as f32).to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_raw_f32_image(path: &Path, size: usize) -> Result<PlaneImage, VolumeError> {
    let bytes = fs::read(path)?;
    if bytes.len() != size * size * 4 {
        return Err(VolumeError::Shape { dims: [size, size, 1], len: bytes.len() / 4 });
    }
    let pixels = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    PlaneImage::new(size, pixels)
}
