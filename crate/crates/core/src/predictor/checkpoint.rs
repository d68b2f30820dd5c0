//! Binary model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "ITNM" | u16 version | u8 mode | u8 head bits (1 = P, 2 = Q) | u8 input channels
//! | u16 input size | u8 stage count | u16 channels × stage count | u16 head width
//! | f64 translation output scale | u8 activation (0 = ReLU) | u8 padding (0 = zero, same size)
//! | u8 pooling (0 = 2×2 max, floor) | u32 parameter count | f32 × parameter count
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::network::ModelError;
use super::{Architecture, ClassHeads, RegressionMode, RegressorModel};
use crate::volume::InputMode;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ITNM";
const VERSION: u16 = 1;
const RELU: u8 = 0;
const ZERO_SAME_PADDING: u8 = 0;
const MAX_POOL_2X2: u8 = 0;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn write_model<W: Write>(model: &RegressorModel, mut w: W) -> Result<(), CheckpointError> {
    let arch = model.architecture();
    let heads = model.heads();
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[model.mode().code(), heads.translation as u8 | (heads.rotation as u8) << 1, model.channels() as u8])?;
    w.write_all(&(arch.input_size as u16).to_le_bytes())?;
    w.write_all(&[arch.conv_channels.len() as u8])?;
    for &c in &arch.conv_channels {
        w.write_all(&(c as u16).to_le_bytes())?;
    }
    w.write_all(&(arch.head_width as u16).to_le_bytes())?;
    w.write_all(&arch.translation_scale.to_le_bytes())?;
    w.write_all(&[RELU, ZERO_SAME_PADDING, MAX_POOL_2X2])?;
    w.write_all(&(model.params().len() as u32).to_le_bytes())?;
    for &p in model.params() {
        w.write_all(&(p as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_model<R: Read>(mut r: R) -> Result<RegressorModel, CheckpointError> {
    if &take::<4, _>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u16::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let [mode, head_bits, channels] = take(&mut r)?;
    let mode = RegressionMode::from_code(mode).ok_or_else(|| CheckpointError::Header(format!("mode code {mode}")))?;
    if head_bits > 3 {
        return Err(CheckpointError::Header(format!("head bits {head_bits}")));
    }
    let heads = ClassHeads { translation: head_bits & 1 != 0, rotation: head_bits & 2 != 0 };
    let input_mode = match channels {
        1 => InputMode::Single,
        3 => InputMode::Triplet,
        c => return Err(CheckpointError::Header(format!("{c} input channels"))),
    };
    let input_size = u16::from_le_bytes(take(&mut r)?) as usize;
    let [stages] = take(&mut r)?;
    let conv_channels = (0..stages)
        .map(|_| take(&mut r).map(|b| u16::from_le_bytes(b) as usize))
        .collect::<io::Result<Vec<_>>>()?;
    let head_width = u16::from_le_bytes(take(&mut r)?) as usize;
    let translation_scale = f64::from_le_bytes(take(&mut r)?);
    let ops = take::<3, _>(&mut r)?;
    if ops != [RELU, ZERO_SAME_PADDING, MAX_POOL_2X2] {
        return Err(CheckpointError::Header(format!("unsupported layer options {ops:?}")));
    }
    let count = u32::from_le_bytes(take(&mut r)?) as usize;
    let arch = Architecture { input_size, conv_channels, head_width, translation_scale };
    let mut model = RegressorModel::zeroed(arch, mode, heads, input_mode)?;
    if count != model.params().len() {
        return Err(ModelError::ParamCount { expected: model.params().len(), got: count }.into());
    }
    let mut blob = vec![0u8; count * 4];
    r.read_exact(&mut blob)?;
    let params = blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    model.set_params(params)?;
    Ok(model)
}

pub fn save_model(model: &RegressorModel, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RegressorModel, CheckpointError> {
    read_model(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn round_trip_is_exact() {
        for (mode, heads, input) in [
            (RegressionMode::Quat, ClassHeads::BOTH, InputMode::Triplet),
            (RegressionMode::Anchors, ClassHeads::NONE, InputMode::Single),
        ] {
            let m = RegressorModel::random(Architecture::default(), mode, heads, input, 0.1, &mut stream_rng(3, 0)).unwrap();
            let mut buf = Vec::new();
            write_model(&m, &mut buf).unwrap();
            assert_eq!(&buf[..4], b"ITNM");
            assert_eq!(read_model(buf.as_slice()).unwrap(), m);
        }
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        assert!(matches!(read_model(&b"NOPE"[..]), Err(CheckpointError::BadMagic)));
        let m = RegressorModel::zeroed(Architecture::default(), RegressionMode::Quat, ClassHeads::NONE, InputMode::Single)
            .unwrap();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(matches!(read_model(buf.as_slice()), Err(CheckpointError::Io(_))));
    }
}
