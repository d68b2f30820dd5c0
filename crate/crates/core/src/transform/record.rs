//! One-line text records: `tx ty tz qw qx qy qz`.

use thiserror::Error;

use super::{RigidTransform, TransformError, Vec3};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: expected 7 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: invalid number '{text}'")]
    Number { line: usize, text: String },
    #[error("line {line}: {source}")]
    Transform { line: usize, source: TransformError },
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn write_record(t: &RigidTransform) -> String {
    let q = t.rotation.to_array();
    let v = [t.translation.x, t.translation.y, t.translation.z, q[0], q[1], q[2], q[3]];
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ")
}

fn parse_line(text: &str, line: usize) -> Result<RigidTransform, RecordError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 7 {
        return Err(RecordError::FieldCount { line, found: fields.len() });
    }
    let mut v = [0.0; 7];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| RecordError::Number { line, text: f.to_string() })?;
    }
    let rotation =
        super::UnitQuaternion::from_unit_components([v[3], v[4], v[5], v[6]]).map_err(|source| RecordError::Transform { line, source })?;
    Ok(RigidTransform::new(Vec3::new(v[0], v[1], v[2]), rotation))
}

pub fn parse_record(text: &str) -> Result<RigidTransform, RecordError> {
    parse_line(text.trim(), 1)
}

/// Parses one record per non-empty line; lines starting with `#` are skipped.
pub fn parse_records(text: &str) -> Result<Vec<RigidTransform>, RecordError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| parse_line(l, i + 1))
        .collect()
}
