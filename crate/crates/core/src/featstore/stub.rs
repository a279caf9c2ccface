//! Frozen stand-in for a pretrained video backbone: summary statistics of a
//! block of frames plus a seeded random projection of the average frame.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const FRAME_SIDE: usize = 32;
const FRAME_PIXELS: usize = FRAME_SIDE * FRAME_SIDE;

/// Consecutive 32x32 8-bit grayscale frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBlock {
    frames: Vec<Vec<u8>>,
    first_index: u64,
}

impl FrameBlock {
    /// Each frame is row-major with `FRAME_SIDE * FRAME_SIDE` pixels.
    pub fn new(frames: Vec<Vec<u8>>, first_index: u64) -> Result<Self> {
        if let Some(i) = frames.iter().position(|f| f.len() != FRAME_PIXELS) {
            return Err(Error::validation(format!(
                "frame {i} has {} pixels, expected {FRAME_PIXELS}",
                frames[i].len()
            )));
        }
        Ok(Self { frames, first_index })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.frames.len() as u64).map(move |i| self.first_index + i)
    }
}

/// Feature vector of length `dim`: `[mean, std, projection(dim - 2)]`.
///
/// Intensities are scaled to `[0, 1]`. The average frame is standardized
/// across pixels before projecting with a `N(0, 1/1024)` matrix drawn from
/// `seed`, so projection components are roughly unit variance.
pub fn stub_extract(block: &FrameBlock, dim: usize, seed: u64) -> Result<Vec<f32>> {
    if block.is_empty() {
        return Err(Error::validation("empty frame block"));
    }
    if dim < 2 {
        return Err(Error::validation("stub feature dim must be at least 2"));
    }

    let n = (block.len() * FRAME_PIXELS) as f64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut avg = vec![0.0f64; FRAME_PIXELS];
    for frame in &block.frames {
        for (acc, &p) in avg.iter_mut().zip(frame) {
            let v = p as f64 / 255.0;
            *acc += v;
            sum += v;
            sum_sq += v * v;
        }
    }
    let mean = sum / n;
    let std = (sum_sq / n - mean * mean).max(0.0).sqrt();

    avg.iter_mut().for_each(|v| *v /= block.len() as f64);
    let avg_mean = avg.iter().sum::<f64>() / FRAME_PIXELS as f64;
    let avg_std = (avg.iter().map(|v| (v - avg_mean).powi(2)).sum::<f64>() / FRAME_PIXELS as f64).sqrt();
    let standardized: Vec<f64> = if avg_std > 1e-12 {
        avg.iter().map(|v| (v - avg_mean) / avg_std).collect()
    } else {
        vec![0.0; FRAME_PIXELS]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (FRAME_PIXELS as f64).sqrt().recip();
    let mut out = Vec::with_capacity(dim);
    out.push(mean as f32);
    out.push(std as f32);
    for _ in 0..dim - 2 {
        let mut acc = 0.0f64;
        for &x in &standardized {
            let w: f64 = StandardNormal.sample(&mut rng);
            acc += w * scale * x;
        }
        out.push(acc as f32);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noise_block(seed: u64, frames: usize) -> FrameBlock {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..frames)
            .map(|_| (0..FRAME_PIXELS).map(|_| rng.random::<u8>()).collect())
            .collect();
        FrameBlock::new(frames, 100).unwrap()
    }

    #[test]
    fn zero_block_is_all_zero() {
        let block = FrameBlock::new(vec![vec![0u8; FRAME_PIXELS]; 4], 0).unwrap();
        let v = stub_extract(&block, 8, 7).unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 0.0);
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn deterministic_for_fixed_inputs() {
        let block = noise_block(1, 3);
        assert_eq!(
            stub_extract(&block, 16, 42).unwrap(),
            stub_extract(&block, 16, 42).unwrap()
        );
    }

    #[test]
    fn seed_changes_only_projection() {
        let block = noise_block(2, 3);
        let a = stub_extract(&block, 16, 1).unwrap();
        let b = stub_extract(&block, 16, 2).unwrap();
        assert_eq!(a[..2], b[..2]);
        assert!(a[2..].iter().zip(&b[2..]).any(|(x, y)| x != y));
    }

    #[test]
    fn statistics_match_direct_computation() {
        let block = FrameBlock::new(vec![vec![255u8; FRAME_PIXELS], vec![0u8; FRAME_PIXELS]], 0).unwrap();
        let v = stub_extract(&block, 2, 0).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-7);
        assert!((v[1] - 0.5).abs() < 1e-7);
        assert_eq!(block.indices().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn rejects_empty_and_misshapen() {
        let empty = FrameBlock::new(vec![], 0).unwrap();
        assert!(stub_extract(&empty, 8, 0).is_err());
        assert!(FrameBlock::new(vec![vec![0u8; 10]], 0).is_err());
        assert!(stub_extract(&noise_block(0, 1), 1, 0).is_err());
    }
}
