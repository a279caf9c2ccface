//! Label model, annotation tracks, video metadata and chunk windowing.
//!
//! Every chunk of a video carries one of twelve classes: an [`Action`] paired
//! with a [`Level`]. The canonical class index is `action * 3 + level`.

mod annotation;
mod chunk;
mod manifest;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use annotation::{label_at, parse_annotations, AnnotationTrack, Interval};
pub use chunk::{chunk_labels, chunk_video, Chunk, DEFAULT_CHUNK_LEN, DEFAULT_CHUNK_STRIDE};
pub use manifest::{DatasetManifest, ManifestEntry, VideoMeta};

pub const N_ACTIONS: usize = 4;
pub const N_LEVELS: usize = 3;
pub const N_CLASSES: usize = N_ACTIONS * N_LEVELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Waiting = 0,
    Needling = 1,
    PushingKnot = 2,
    TyingKnot = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Good = 0,
    Okay = 1,
    Bad = 2,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::Waiting,
        Action::Needling,
        Action::PushingKnot,
        Action::TyingKnot,
    ];

    /// Tying and pushing the knot.
    pub const KNOT_RELATED: [Action; 2] = [Action::PushingKnot, Action::TyingKnot];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::validation(format!("action index {index} out of range 0..4")))
    }

    pub fn is_knot_related(self) -> bool {
        matches!(self, Action::PushingKnot | Action::TyingKnot)
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Waiting => "Waiting",
            Action::Needling => "Needling",
            Action::PushingKnot => "PushingKnot",
            Action::TyingKnot => "TyingKnot",
        }
    }
}

impl Level {
    pub const ALL: [Level; N_LEVELS] = [Level::Good, Level::Okay, Level::Bad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::validation(format!("level index {index} out of range 0..3")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Good => "Good",
            Level::Okay => "Okay",
            Level::Bad => "Bad",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Action::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown action {s:?}")))
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Level::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown level {s:?}")))
    }
}

/// One of the twelve action × level classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassLabel {
    pub action: Action,
    pub level: Level,
}

impl ClassLabel {
    pub fn new(action: Action, level: Level) -> Self {
        Self { action, level }
    }

    /// Canonical index `action * 3 + level`, in `0..12`.
    pub fn index(self) -> usize {
        class_index(self)
    }

    pub fn from_index(index: usize) -> Result<Self> {
        class_from_index(index)
    }

    pub fn all() -> impl Iterator<Item = ClassLabel> {
        (0..N_CLASSES).map(|i| class_from_index(i).expect("index in range"))
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.action, self.level)
    }
}

pub fn class_index(label: ClassLabel) -> usize {
    label.action.index() * N_LEVELS + label.level.index()
}

pub fn class_from_index(index: usize) -> Result<ClassLabel> {
    if index >= N_CLASSES {
        return Err(Error::validation(format!(
            "class index {index} out of range 0..{N_CLASSES}"
        )));
    }
    Ok(ClassLabel {
        action: Action::from_index(index / N_LEVELS)?,
        level: Level::from_index(index % N_LEVELS)?,
    })
}
