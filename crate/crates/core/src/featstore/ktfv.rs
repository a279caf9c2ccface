//! `KTFV` layout, all integers and floats little-endian:
//!
//! ```text
//! magic   b"KTFV"
//! u16     version (1)
//! u32     T
//! u32     D
//! u64 x T chunk center frames
//! f32 x T*D feature values, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FeatureSequence;
use crate::error::{Error, FormatError, Result};

pub const KTFV_MAGIC: [u8; 4] = *b"KTFV";
pub const KTFV_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let t = seq.len();
    let d = seq.dim();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * t + 4 * t * d);
    buf.extend_from_slice(&KTFV_MAGIC);
    buf.extend_from_slice(&KTFV_VERSION.to_le_bytes());
    buf.extend_from_slice(&(t as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    for c in seq.centers() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    for v in seq.vectors() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

fn take<const N: usize>(bytes: &[u8], at: usize) -> Result<[u8; N], FormatError> {
    bytes
        .get(at..at + N)
        .map(|s| s.try_into().expect("slice of length N"))
        .ok_or(FormatError::Truncated {
            needed: at + N,
            available: bytes.len(),
        })
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSequence, FormatError> {
    let magic: [u8; 4] = take(bytes, 0)?;
    if magic != KTFV_MAGIC {
        return Err(FormatError::BadMagic {
            expected: KTFV_MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes(take(bytes, 4)?);
    if version != KTFV_VERSION {
        return Err(FormatError::VersionMismatch {
            expected: KTFV_VERSION,
            found: version,
        });
    }
    let t = u32::from_le_bytes(take(bytes, 6)?);
    let d = u32::from_le_bytes(take(bytes, 10)?);
    if t == 0 || d == 0 {
        return Err(FormatError::Empty { t, d });
    }
    let (t, d) = (t as usize, d as usize);
    let needed = (t as u64)
        .checked_mul(8 + 4 * d as u64)
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| FormatError::Header(format!("T={t}, D={d} overflows")))?;
    if bytes.len() < needed {
        return Err(FormatError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(FormatError::TrailingBytes(bytes.len() - needed));
    }

    let centers: Vec<u64> = bytes[HEADER_LEN..HEADER_LEN + 8 * t]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(i) = centers.windows(2).position(|w| w[0] >= w[1]) {
        return Err(FormatError::NonIncreasingCenters(i + 1));
    }
    let vectors: Vec<f32> = bytes[HEADER_LEN + 8 * t..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(i) = vectors.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite {
            row: i / d,
            col: i % d,
        });
    }
    Ok(FeatureSequence::new(d, vectors, centers).expect("validated above"))
}

pub fn write_features(seq: &FeatureSequence, mut sink: impl Write) -> std::io::Result<()> {
    sink.write_all(&encode_features(seq))?;
    sink.flush()
}

pub fn read_features(mut source: impl Read) -> std::io::Result<Result<FeatureSequence, FormatError>> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    Ok(decode_features(&bytes))
}

pub fn save_features(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_features(seq, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(BufReader::new(file))
        .map_err(|e| Error::io(path, e))?
        .map_err(|source| Error::Format {
            path: path.to_path_buf(),
            source,
        })
}
