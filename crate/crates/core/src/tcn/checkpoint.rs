//! Model checkpoint, little-endian:
//!
//! ```text
//! magic   b"KTCM"
//! u16     version (1)
//! u32 x 5 input_dim, hidden_width, n_layers, kernel_size, n_classes
//! u32 x n_layers dilations
//! u64     init_seed
//! u32     normalizer dim, then f32 x dim means, f32 x dim stds
//! u64     parameter count, then f32 parameters in layout order
//! ```

use std::fs;
use std::path::Path;

use super::{ArchConfig, Normalizer, TemporalModel};
use crate::error::{Error, FormatError, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"KTCM";
const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(model: &TemporalModel, normalizer: &Normalizer) -> Vec<u8> {
    let arch = model.arch();
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [
        arch.input_dim,
        arch.hidden_width,
        arch.n_layers,
        arch.kernel_size,
        arch.n_classes,
    ]
    .iter()
    .chain(&arch.dilations)
    {
        buf.extend_from_slice(&(*v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&model.init_seed().to_le_bytes());
    buf.extend_from_slice(&(normalizer.dim() as u32).to_le_bytes());
    for v in normalizer.mean.iter().chain(&normalizer.std) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end =
            self.pos
                .checked_add(n)
                .filter(|e| *e <= self.bytes.len())
                .ok_or(FormatError::Truncated {
                    needed: self.pos.saturating_add(n),
                    available: self.bytes.len(),
                })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| FormatError::Header("count overflows".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(TemporalModel, Normalizer), FormatError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(FormatError::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = cur.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let input_dim = cur.u32()? as usize;
    let hidden_width = cur.u32()? as usize;
    let n_layers = cur.u32()? as usize;
    let kernel_size = cur.u32()? as usize;
    let n_classes = cur.u32()? as usize;
    if n_layers > 64 {
        return Err(FormatError::Header(format!("{n_layers} layers")));
    }
    let dilations = (0..n_layers)
        .map(|_| cur.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let arch = ArchConfig {
        input_dim,
        hidden_width,
        n_layers,
        kernel_size,
        dilations,
        n_classes,
    };
    arch.validate().map_err(|e| FormatError::Header(e.to_string()))?;
    let init_seed = cur.u64()?;
    let norm_dim = cur.u32()? as usize;
    let mean = cur.f32s(norm_dim)?;
    let std = cur.f32s(norm_dim)?;
    let n_params = usize::try_from(cur.u64()?).map_err(|_| FormatError::Header("parameter count".into()))?;
    if n_params != arch.n_params() {
        return Err(FormatError::Header(format!(
            "{n_params} parameters stored, arch needs {}",
            arch.n_params()
        )));
    }
    let params = cur.f32s(n_params)?;
    if cur.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - cur.pos));
    }
    for (i, v) in mean.iter().chain(&std).chain(&params).enumerate() {
        if !v.is_finite() {
            return Err(FormatError::NonFinite { row: 0, col: i });
        }
    }
    if norm_dim != input_dim {
        return Err(FormatError::Header(format!(
            "normalizer dim {norm_dim} != input_dim {input_dim}"
        )));
    }
    let model = TemporalModel::from_params(arch, params, init_seed)
        .map_err(|e| FormatError::Header(e.to_string()))?;
    Ok((model, Normalizer { mean, std }))
}

pub fn save_checkpoint(model: &TemporalModel, normalizer: &Normalizer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model, normalizer)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(TemporalModel, Normalizer)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcn::init_model;

    #[test]
    fn round_trip_is_bit_exact() {
        let arch = ArchConfig {
            dilations: vec![1, 3, 2],
            ..ArchConfig::new(5, 7, 3, 3).unwrap()
        };
        let model = init_model(&arch, 2022).unwrap();
        let norm = Normalizer {
            mean: vec![0.1, -0.0, 3.0, 1e-20, -7.5],
            std: vec![1.0, 0.5, 2.0, 1e-3, 9.0],
        };
        let bytes = encode_checkpoint(&model, &norm);
        let (m2, n2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(m2.arch(), model.arch());
        assert_eq!(m2.init_seed(), 2022);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(m2.params()), bits(model.params()));
        assert_eq!(bits(&n2.mean), bits(&norm.mean));
        assert_eq!(encode_checkpoint(&m2, &n2), bytes);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let arch = ArchConfig::new(2, 3, 1, 3).unwrap();
        let model = init_model(&arch, 0).unwrap();
        let good = encode_checkpoint(&model, &Normalizer::identity(2));

        let mut bad = good.clone();
        bad[1] = b'X';
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(FormatError::BadMagic { .. })
        ));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(FormatError::VersionMismatch { .. })
        ));
        assert!(matches!(
            decode_checkpoint(&good[..good.len() - 1]),
            Err(FormatError::Truncated { .. })
        ));
        let mut bad = good.clone();
        bad.extend_from_slice(&[0, 0]);
        assert_eq!(decode_checkpoint(&bad), Err(FormatError::TrailingBytes(2)));
        let mut bad = good.clone();
        let n = bad.len();
        bad[n - 4..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(FormatError::NonFinite { .. })
        ));
    }
}
