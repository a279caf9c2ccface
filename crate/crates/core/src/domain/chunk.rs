use serde::{Deserialize, Serialize};

use super::{label_at, AnnotationTrack, ClassLabel};
use crate::error::{Error, Result};

/// Frames per chunk (about half a second at 30 fps).
pub const DEFAULT_CHUNK_LEN: u64 = 16;
/// Hop between chunk starts; half the chunk length.
pub const DEFAULT_CHUNK_STRIDE: u64 = 8;

/// A run of consecutive frames mapped to one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub start_frame: u64,
    pub chunk_len: u64,
    pub center_frame: u64,
}

impl Chunk {
    pub fn new(start_frame: u64, chunk_len: u64) -> Self {
        Self {
            start_frame,
            chunk_len,
            center_frame: start_frame + chunk_len / 2,
        }
    }
}

/// Chunks starting at `0, stride, 2*stride, ...` that fit entirely inside the video.
pub fn chunk_video(frame_count: u64, chunk_len: u64, chunk_stride: u64) -> Result<Vec<Chunk>> {
    if chunk_len == 0 {
        return Err(Error::validation("chunk_len must be at least 1"));
    }
    if chunk_stride == 0 {
        return Err(Error::validation("chunk_stride must be at least 1"));
    }
    if chunk_len > frame_count {
        return Err(Error::validation(format!(
            "video shorter than one chunk ({frame_count} frames < chunk_len {chunk_len})"
        )));
    }
    let count = (frame_count - chunk_len) / chunk_stride + 1;
    Ok((0..count)
        .map(|i| Chunk::new(i * chunk_stride, chunk_len))
        .collect())
}

/// Label at each chunk's center frame.
pub fn chunk_labels(track: &AnnotationTrack, chunks: &[Chunk]) -> Result<Vec<ClassLabel>> {
    chunks.iter().map(|c| label_at(track, c.center_frame)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{parse_annotations, Action, Interval, Level};
    use proptest::prelude::*;

    #[test]
    fn single_full_chunk() {
        let chunks = chunk_video(100, 100, 1).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].center_frame, 50);
    }

    #[test]
    fn default_geometry_on_64_frames() {
        let chunks = chunk_video(64, 16, 8).unwrap();
        let centers: Vec<u64> = chunks.iter().map(|c| c.center_frame).collect();
        assert_eq!(centers, vec![8, 16, 24, 32, 40, 48, 56]);
    }

    #[test]
    fn too_short_video() {
        let err = chunk_video(15, 16, 8).unwrap_err();
        assert!(err.to_string().contains("shorter than one chunk"));
        assert!(chunk_video(100, 0, 8).is_err());
        assert!(chunk_video(100, 16, 0).is_err());
    }

    #[test]
    fn labels_follow_center_frames() {
        let text = "start_frame,end_frame,action,level\n0,99,Waiting,Good\n100,199,Needling,Bad\n";
        let track = parse_annotations(text, 200).unwrap();
        let chunks = [Chunk::new(88, 16), Chunk::new(96, 16)];
        assert_eq!(chunks[0].center_frame, 96);
        assert_eq!(chunks[1].center_frame, 104);
        let labels = chunk_labels(&track, &chunks).unwrap();
        assert_eq!(labels[0], ClassLabel::new(Action::Waiting, Level::Good));
        assert_eq!(labels[1], ClassLabel::new(Action::Needling, Level::Bad));

        let constant =
            parse_annotations("start_frame,end_frame,action,level\n0,199,Waiting,Okay\n", 200).unwrap();
        let chunks = chunk_video(200, 16, 8).unwrap();
        let labels = chunk_labels(&constant, &chunks).unwrap();
        assert_eq!(labels.len(), chunks.len());
        assert!(labels.iter().all(|l| *l == labels[0]));
    }

    #[test]
    fn needling_tying_pushing_sequence() {
        let seq = [
            ClassLabel::new(Action::Needling, Level::Bad),
            ClassLabel::new(Action::TyingKnot, Level::Bad),
            ClassLabel::new(Action::PushingKnot, Level::Bad),
        ];
        let intervals = vec![
            Interval {
                start_frame: 0,
                end_frame: 119,
                label: seq[0],
            },
            Interval {
                start_frame: 120,
                end_frame: 299,
                label: seq[1],
            },
            Interval {
                start_frame: 300,
                end_frame: 399,
                label: seq[2],
            },
        ];
        let track = AnnotationTrack::new(intervals, 400).unwrap();
        let chunks = [Chunk::new(40, 16), Chunk::new(200, 16), Chunk::new(350, 16)];
        let labels = chunk_labels(&track, &chunks).unwrap();
        let oracle: Vec<_> = chunks
            .iter()
            .map(|c| label_at(&track, c.center_frame).unwrap())
            .collect();
        assert_eq!(labels, oracle);
        assert_eq!(labels, seq.to_vec());
    }

    #[test]
    fn center_outside_track_errors() {
        let track = parse_annotations("start_frame,end_frame,action,level\n0,9,Waiting,Good\n", 10).unwrap();
        assert!(chunk_labels(&track, &[Chunk::new(4, 16)]).is_err());
    }

    proptest! {
        #[test]
        fn count_matches_brute_force(frame_count in 1u64..400, len_frac in 0.0f64..1.0, stride in 1u64..40) {
            let chunk_len = ((frame_count as f64 * len_frac) as u64).clamp(1, frame_count);
            let chunks = chunk_video(frame_count, chunk_len, stride).unwrap();
            let brute: Vec<u64> = (0..frame_count)
                .filter(|s| s % stride == 0 && s + chunk_len <= frame_count)
                .collect();
            prop_assert_eq!(chunks.len(), brute.len());
            for (c, s) in chunks.iter().zip(&brute) {
                prop_assert_eq!(c.start_frame, *s);
                prop_assert_eq!(c.center_frame, s + chunk_len / 2);
            }
            prop_assert!(chunks.windows(2).all(|w| w[0].center_frame < w[1].center_frame));
        }
    }
}
