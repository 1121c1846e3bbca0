//! JSON corpus manifest: songs, their audio and one LAB file per annotator.
//!
//! Relative paths resolve against the directory holding the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::SplitConfig;
use crate::cqt::CqtConfig;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("manifest lists no annotators")]
    NoAnnotators,
    #[error("manifest lists no songs")]
    NoSongs,
    #[error("duplicate {kind} id `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("song `{song}` has no annotation for `{annotator}`")]
    MissingLab { song: String, annotator: String },
    #[error("song `{song}` has an annotation for undeclared annotator `{annotator}`")]
    UndeclaredAnnotator { song: String, annotator: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSong {
    pub id: String,
    pub audio: PathBuf,
    pub labs: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub annotators: Vec<String>,
    pub split: SplitConfig,
    #[serde(default)]
    pub cqt: CqtConfig,
    pub songs: Vec<ManifestSong>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(annotators: Vec<String>, split: SplitConfig, cqt: CqtConfig, songs: Vec<ManifestSong>) -> Self {
        Manifest { annotators, split, cqt, songs, base_dir: PathBuf::new() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.into(), source })?;
        let mut manifest: Manifest =
            serde_json::from_str(&text).map_err(|source| ManifestError::Json { path: path.into(), source })?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.annotators.is_empty() {
            return Err(ManifestError::NoAnnotators);
        }
        if self.songs.is_empty() {
            return Err(ManifestError::NoSongs);
        }
        for (i, a) in self.annotators.iter().enumerate() {
            if self.annotators[..i].contains(a) {
                return Err(ManifestError::Duplicate { kind: "annotator", id: a.clone() });
            }
        }
        for (i, song) in self.songs.iter().enumerate() {
            if self.songs[..i].iter().any(|s| s.id == song.id) {
                return Err(ManifestError::Duplicate { kind: "song", id: song.id.clone() });
            }
            if let Some(a) = self.annotators.iter().find(|a| !song.labs.contains_key(*a)) {
                return Err(ManifestError::MissingLab { song: song.id.clone(), annotator: a.clone() });
            }
            if let Some(a) = song.labs.keys().find(|a| !self.annotators.contains(a)) {
                return Err(ManifestError::UndeclaredAnnotator { song: song.id.clone(), annotator: a.clone() });
            }
        }
        Ok(())
    }

    /// Directory relative paths are resolved against.
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }
}
