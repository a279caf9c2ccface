use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_annotations, AnnotationTrack};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub id: String,
    /// Training stage tag, e.g. `MS3`, `MS4`, `PGY1`..`PGY5`.
    pub student_level: String,
    pub fps: f64,
    pub frame_count: u64,
}

impl VideoMeta {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("video id must not be empty"));
        }
        if self.frame_count < 1 {
            return Err(Error::validation(format!(
                "{}: frame_count must be >= 1",
                self.id
            )));
        }
        if !(1.0..=240.0).contains(&self.fps) {
            return Err(Error::validation(format!(
                "{}: fps {} outside [1, 240]",
                self.id, self.fps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub meta: VideoMeta,
    pub annotations: PathBuf,
    pub features: PathBuf,
}

/// `{ "videos": [...] }`; relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub videos: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(videos: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let manifest = Self {
            videos,
            base_dir: base_dir.into(),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.videos.is_empty() {
            return Err(Error::validation("manifest lists no videos"));
        }
        let mut ids = HashSet::new();
        let mut paths = HashSet::new();
        for v in &self.videos {
            v.meta.validate()?;
            if !ids.insert(v.meta.id.as_str()) {
                return Err(Error::validation(format!("duplicate video id {:?}", v.meta.id)));
            }
            for p in [&v.annotations, &v.features] {
                if !paths.insert(p.as_path()) {
                    return Err(Error::validation(format!(
                        "path {} referenced more than once",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.videos.iter().find(|v| v.meta.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.meta.id.clone()).collect()
    }

    pub fn load_annotations(&self, entry: &ManifestEntry) -> Result<AnnotationTrack> {
        let path = self.resolve(&entry.annotations);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        parse_annotations(&text, entry.meta.frame_count).map_err(|e| match e {
            Error::Annotation { row, reason } => Error::Annotation {
                row,
                reason: format!("{}: {reason}", path.display()),
            },
            other => other,
        })
    }
}
