//! Per-chunk feature sequences: the `KTFV` container, a deterministic stub
//! extractor over raw frames, and a synthetic corpus generator.

mod ktfv;
mod stub;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ktfv::{
    decode_features, encode_features, load_features, read_features, save_features, write_features,
    KTFV_MAGIC, KTFV_VERSION,
};
pub use stub::{stub_extract, FrameBlock, FRAME_SIDE};
pub use synth::{
    class_means, nearest_mean_accuracy, nearest_mean_decode, synth_dataset, SynthConfig, SynthOutput,
    SYNTH_ECHO_FILE, TABLE_I_LEVELS,
};

/// `T x D` matrix of chunk feature vectors with the center frame of each chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    dim: usize,
    vectors: Vec<f32>,
    centers: Vec<u64>,
}

impl FeatureSequence {
    /// `vectors` is row-major, one row of `dim` values per center.
    pub fn new(dim: usize, vectors: Vec<f32>, centers: Vec<u64>) -> Result<Self> {
        if dim == 0 || centers.is_empty() {
            return Err(Error::validation("feature sequence needs T >= 1 and D >= 1"));
        }
        if vectors.len() != dim * centers.len() {
            return Err(Error::validation(format!(
                "feature matrix has {} values, expected {} x {}",
                vectors.len(),
                centers.len(),
                dim
            )));
        }
        if let Some(i) = centers.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::validation(format!(
                "centers not strictly increasing at row {}",
                i + 1
            )));
        }
        if let Some(i) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite feature at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self {
            dim,
            vectors,
            centers,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[u64] {
        &self.centers
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.vectors[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.vectors.chunks_exact(self.dim)
    }

    /// Copy of the sequence with `f` applied to every row.
    pub fn map_rows(&self, mut f: impl FnMut(&mut [f32])) -> Self {
        let mut vectors = self.vectors.clone();
        vectors.chunks_exact_mut(self.dim).for_each(&mut f);
        Self {
            dim: self.dim,
            vectors,
            centers: self.centers.clone(),
        }
    }
}
