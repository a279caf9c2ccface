use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Action, ClassLabel, Level};
use crate::error::{Error, Result};

pub const ANNOTATION_HEADER: [&str; 4] = ["start_frame", "end_frame", "action", "level"];

/// Inclusive frame interval carrying one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start_frame: u64,
    pub end_frame: u64,
    pub label: ClassLabel,
}

impl Interval {
    pub fn frames(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }
}

/// Contiguous, non-overlapping cover of `[0, frame_count)` by labeled intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTrack {
    intervals: Vec<Interval>,
}

impl AnnotationTrack {
    /// Validates the cover invariants; `row` numbers in errors are 1-based.
    pub fn new(intervals: Vec<Interval>, frame_count: u64) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Annotation {
                row: 0,
                reason: "no intervals".into(),
            });
        }
        let mut expected_start = 0u64;
        for (i, iv) in intervals.iter().enumerate() {
            let row = i + 1;
            if iv.end_frame < iv.start_frame {
                return Err(Error::Annotation {
                    row,
                    reason: format!("end_frame {} < start_frame {}", iv.end_frame, iv.start_frame),
                });
            }
            if iv.start_frame != expected_start {
                let reason = if i == 0 {
                    format!("uncovered head: frames 0..{} unlabeled", iv.start_frame)
                } else if iv.start_frame > expected_start {
                    format!("gap: frames {}..{} unlabeled", expected_start, iv.start_frame - 1)
                } else {
                    format!(
                        "overlap: starts at {} but previous interval ends at {}",
                        iv.start_frame,
                        expected_start - 1
                    )
                };
                return Err(Error::Annotation { row, reason });
            }
            if iv.end_frame >= frame_count {
                return Err(Error::Annotation {
                    row,
                    reason: format!(
                        "end_frame {} beyond last frame {}",
                        iv.end_frame,
                        frame_count.saturating_sub(1)
                    ),
                });
            }
            expected_start = iv.end_frame + 1;
        }
        if expected_start != frame_count {
            return Err(Error::Annotation {
                row: intervals.len(),
                reason: format!(
                    "uncovered tail: frames {}..{} unlabeled",
                    expected_start,
                    frame_count - 1
                ),
            });
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn frame_count(&self) -> u64 {
        self.intervals.last().map_or(0, |iv| iv.end_frame + 1)
    }

    /// Renders the track as annotation CSV, header included.
    pub fn to_csv(&self) -> String {
        let mut out = ANNOTATION_HEADER.join(",");
        out.push('\n');
        for iv in &self.intervals {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                iv.start_frame, iv.end_frame, iv.label.action, iv.label.level
            );
        }
        out
    }
}

/// Parses `start_frame,end_frame,action,level` CSV into a validated track.
pub fn parse_annotations(text: &str, frame_count: u64) -> Result<AnnotationTrack> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::Annotation {
            row: 0,
            reason: format!("unreadable header: {e}"),
        })?
        .clone();
    let header_ok = headers.len() == ANNOTATION_HEADER.len()
        && headers
            .iter()
            .zip(ANNOTATION_HEADER)
            .all(|(h, want)| h.eq_ignore_ascii_case(want));
    if !header_ok {
        return Err(Error::Annotation {
            row: 0,
            reason: format!(
                "expected header {:?}, found {:?}",
                ANNOTATION_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut intervals = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Annotation {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != 4 {
            return Err(Error::Annotation {
                row,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let frame = |idx: usize, name: &str| -> Result<u64> {
            record[idx].parse::<u64>().map_err(|_| Error::Annotation {
                row,
                reason: format!("invalid {name} {:?}", &record[idx]),
            })
        };
        let start_frame = frame(0, "start_frame")?;
        let end_frame = frame(1, "end_frame")?;
        let action: Action = record[2].parse().map_err(|e: Error| Error::Annotation {
            row,
            reason: e.to_string(),
        })?;
        let level: Level = record[3].parse().map_err(|e: Error| Error::Annotation {
            row,
            reason: e.to_string(),
        })?;
        intervals.push(Interval {
            start_frame,
            end_frame,
            label: ClassLabel::new(action, level),
        });
    }
    AnnotationTrack::new(intervals, frame_count)
}

/// Label of the interval containing `frame`.
pub fn label_at(track: &AnnotationTrack, frame: u64) -> Result<ClassLabel> {
    if frame >= track.frame_count() {
        return Err(Error::validation(format!(
            "frame {frame} outside track of {} frames",
            track.frame_count()
        )));
    }
    let idx = track.intervals.partition_point(|iv| iv.start_frame <= frame) - 1;
    Ok(track.intervals[idx].label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_ROWS: &str = "start_frame,end_frame,action,level\n0,99,Waiting,Good\n100,199,Needling,Bad\n";

    #[test]
    fn two_interval_track() {
        let track = parse_annotations(TWO_ROWS, 200).unwrap();
        assert_eq!(track.intervals().len(), 2);
        assert_eq!(
            label_at(&track, 99).unwrap(),
            ClassLabel::new(Action::Waiting, Level::Good)
        );
        assert_eq!(
            label_at(&track, 100).unwrap(),
            ClassLabel::new(Action::Needling, Level::Bad)
        );
        assert!(label_at(&track, 200).is_err());
    }

    #[test]
    fn gap_reports_row_two() {
        let text = "start_frame,end_frame,action,level\n0,99,Waiting,Good\n150,199,Needling,Bad\n";
        match parse_annotations(text, 200) {
            Err(Error::Annotation { row, reason }) => {
                assert_eq!(row, 2);
                assert!(reason.contains("gap"), "{reason}");
            }
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn constant_track() {
        let text = "start_frame,end_frame,action,level\n0,199,TyingKnot,Okay\n";
        let track = parse_annotations(text, 200).unwrap();
        let want = ClassLabel::new(Action::TyingKnot, Level::Okay);
        for f in [0, 57, 199] {
            assert_eq!(label_at(&track, f).unwrap(), want);
        }
    }

    fn err_row(text: &str, frame_count: u64) -> (usize, String) {
        match parse_annotations(text, frame_count) {
            Err(Error::Annotation { row, reason }) => (row, reason),
            other => panic!("expected annotation error, got {other:?}"),
        }
    }

    #[test]
    fn validation_errors_name_rows() {
        let h = "start_frame,end_frame,action,level\n";
        let (row, reason) = err_row(&format!("{h}0,99,Waiting,Good\n90,199,Needling,Bad\n"), 200);
        assert_eq!(row, 2);
        assert!(reason.contains("overlap"));

        let (row, reason) = err_row(&format!("{h}5,199,Waiting,Good\n"), 200);
        assert_eq!(row, 1);
        assert!(reason.contains("head"));

        let (row, reason) = err_row(&format!("{h}0,99,Waiting,Good\n100,150,Needling,Bad\n"), 200);
        assert_eq!(row, 2);
        assert!(reason.contains("tail"));

        let (row, reason) = err_row(&format!("{h}0,99,Waiting,Good\n100,199,Sewing,Bad\n"), 200);
        assert_eq!(row, 2);
        assert!(reason.contains("unknown action"));

        let (row, reason) = err_row(&format!("{h}0,199,Waiting,Superb\n"), 200);
        assert_eq!(row, 1);
        assert!(reason.contains("unknown level"));

        let (row, reason) = err_row(&format!("{h}0,99,Waiting,Good\n100,90,Needling,Bad\n"), 200);
        assert_eq!(row, 2);
        assert!(reason.contains("end_frame"));

        let (row, _) = err_row(&format!("{h}0,250,Waiting,Good\n"), 200);
        assert_eq!(row, 1);

        let (row, _) = err_row("start,end,action,level\n0,199,Waiting,Good\n", 200);
        assert_eq!(row, 0);
    }

    #[test]
    fn csv_round_trip() {
        let track = parse_annotations(TWO_ROWS, 200).unwrap();
        let again = parse_annotations(&track.to_csv(), 200).unwrap();
        assert_eq!(track, again);
    }

    proptest! {
        #[test]
        fn valid_tracks_cover_every_frame(lens in prop::collection::vec((1u64..50, 0usize..12), 1..10)) {
            let mut start = 0;
            let mut intervals = Vec::new();
            for (len, class) in &lens {
                intervals.push(Interval {
                    start_frame: start,
                    end_frame: start + len - 1,
                    label: ClassLabel::from_index(*class).unwrap(),
                });
                start += len;
            }
            let frame_count = start;
            let track = AnnotationTrack::new(intervals.clone(), frame_count).unwrap();
            let total: u64 = track.intervals().iter().map(Interval::frames).sum();
            prop_assert_eq!(total, frame_count);
            for iv in &intervals {
                for f in iv.start_frame..=iv.end_frame {
                    prop_assert_eq!(label_at(&track, f).unwrap(), iv.label);
                }
            }
        }
    }
}
