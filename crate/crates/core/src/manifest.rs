//! Dataset manifest: which videos exist, what role they play and where their
//! feature tracks and annotations live. Paths are relative to the directory
//! holding the manifest.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotations::{load_annotations, AnnotationSet};
use crate::error::{Error, Result};
use crate::features::{read_feature_file, FeatureTrack};
use crate::io;
use crate::stream::StreamId;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Short human-edited highlight video; all units are positives.
    EditedPositive,
    /// Long raw video; units are (noisy) negatives.
    RawNegative,
    /// Annotated evaluation video.
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::EditedPositive => "edited_positive",
            Role::RawNegative => "raw_negative",
            Role::Test => "test",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub role: Role,
    pub duration_sec: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_path: Option<String>,
    #[serde(default)]
    pub tracks: BTreeMap<StreamId, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    root: PathBuf,
    pub videos: Vec<VideoEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    videos: Vec<VideoEntry>,
}

impl DatasetManifest {
    /// A manifest rooted at `root`. Only structural invariants are checked
    /// here; file existence is checked by [`DatasetManifest::validate`].
    pub fn new(root: impl Into<PathBuf>, videos: Vec<VideoEntry>) -> Result<Self> {
        let manifest = DatasetManifest {
            root: root.into(),
            videos,
        };
        manifest.check_structure()?;
        Ok(manifest)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn check_structure(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for v in &self.videos {
            if v.id.is_empty() || v.id.chars().any(|c| c.is_whitespace() || c == '/' || c == '\\') {
                return Err(Error::InvalidManifest(format!("bad video id {:?}", v.id)));
            }
            if !seen.insert(v.id.as_str()) {
                return Err(Error::DuplicateId(v.id.clone()));
            }
            if !(v.duration_sec.is_finite() && v.duration_sec > 0.0) {
                return Err(Error::InvalidManifest(format!(
                    "video {:?}: duration {} is not positive",
                    v.id, v.duration_sec
                )));
            }
            if v.role == Role::Test && v.annotation_path.is_none() {
                return Err(Error::InvalidManifest(format!(
                    "test video {:?} has no annotation_path",
                    v.id
                )));
            }
        }
        Ok(())
    }

    /// Structural checks plus existence of every referenced file.
    pub fn validate(&self) -> Result<()> {
        self.check_structure()?;
        for v in &self.videos {
            let referenced = v.tracks.values().chain(v.annotation_path.iter());
            for rel in referenced {
                let path = self.resolve(rel);
                if !path.is_file() {
                    return Err(Error::InvalidManifest(format!(
                        "video {:?}: missing file {}",
                        v.id,
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Training needs at least one positive and one negative source.
    pub fn check_training_roles(&self) -> Result<()> {
        if !self.videos.iter().any(|v| v.role == Role::EditedPositive) {
            return Err(Error::InvalidManifest("no edited_positive videos".into()));
        }
        if !self.videos.iter().any(|v| v.role == Role::RawNegative) {
            return Err(Error::InvalidManifest("no raw_negative videos".into()));
        }
        Ok(())
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &VideoEntry> {
        self.videos.iter().filter(move |v| v.role == role)
    }

    pub fn get(&self, id: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn load_track(&self, video: &VideoEntry, stream: StreamId) -> Result<FeatureTrack> {
        let rel = video.tracks.get(&stream).ok_or_else(|| Error::MissingTrack {
            video: video.id.clone(),
            stream,
        })?;
        let track = read_feature_file(&self.resolve(rel))?;
        if track.stream() != stream {
            return Err(Error::InvalidTrack(format!(
                "{}: file holds a {} track, manifest says {stream}",
                video.id,
                track.stream()
            )));
        }
        Ok(track)
    }

    pub fn load_annotations(&self, video: &VideoEntry) -> Result<AnnotationSet> {
        let rel = video.annotation_path.as_ref().ok_or_else(|| Error::MissingInput {
            what: "annotations",
            video: video.id.clone(),
        })?;
        load_annotations(&self.resolve(rel), video.duration_sec)
    }

    pub fn to_toml(&self) -> String {
        let doc = ManifestDoc {
            videos: self.videos.clone(),
        };
        toml::to_string(&doc).expect("manifest serializes")
    }

    /// Writes the manifest to `root/manifest.toml`.
    pub fn save(&self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_FILE);
        io::write_atomic(&path, self.to_toml().as_bytes())?;
        Ok(path)
    }
}

/// Loads and fully validates a manifest. `path` may name the manifest file or
/// the dataset directory containing `manifest.toml`.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let text = io::read_to_string(&file)?;
    let doc: ManifestDoc = toml::from_str(&text).map_err(|e| Error::Parse {
        path: file.clone(),
        message: e.to_string(),
    })?;
    let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = DatasetManifest::new(root, doc.videos)?;
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::write_feature_file;

    fn entry(id: &str, role: Role) -> VideoEntry {
        VideoEntry {
            id: id.into(),
            role,
            duration_sec: 10.0,
            annotation_path: (role == Role::Test).then(|| format!("{id}.ann.toml")),
            tracks: BTreeMap::from([(StreamId::Audio, format!("{id}.audio.hlft"))]),
        }
    }

    fn write_dataset(dir: &Path, videos: &[VideoEntry]) {
        let track = FeatureTrack::new(StreamId::Audio, 2, vec![(0.0, 1.0)], vec![1.0, 2.0]).unwrap();
        for v in videos {
            for rel in v.tracks.values() {
                write_feature_file(&track, &dir.join(rel)).unwrap();
            }
            if let Some(rel) = &v.annotation_path {
                std::fs::write(dir.join(rel), "segments = [[1.0, 2.0]]\n").unwrap();
            }
        }
        let doc = ManifestDoc {
            videos: videos.to_vec(),
        };
        std::fs::write(dir.join(MANIFEST_FILE), toml::to_string(&doc).unwrap()).unwrap();
    }

    fn four() -> Vec<VideoEntry> {
        vec![
            entry("e0", Role::EditedPositive),
            entry("e1", Role::EditedPositive),
            entry("r0", Role::RawNegative),
            entry("t0", Role::Test),
        ]
    }

    #[test]
    fn loads_four_entries() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &four());
        let m = load_manifest(dir.path()).unwrap();
        assert_eq!(m.videos.len(), 4);
        assert_eq!(m.with_role(Role::EditedPositive).count(), 2);
        m.check_training_roles().unwrap();
        let t0 = m.get("t0").unwrap();
        assert_eq!(m.load_annotations(t0).unwrap().total_len(), 1.0);
        assert_eq!(m.load_track(t0, StreamId::Audio).unwrap().len(), 1);
        assert!(matches!(m.load_track(t0, StreamId::Spatial), Err(Error::MissingTrack { .. })));
    }

    #[test]
    fn save_and_reload_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &four());
        let m = load_manifest(dir.path()).unwrap();
        m.save().unwrap();
        assert_eq!(load_manifest(&dir.path().join(MANIFEST_FILE)).unwrap(), m);
    }

    #[test]
    fn duplicate_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut videos = four();
        videos[1].id = "e0".into();
        write_dataset(dir.path(), &videos);
        assert!(matches!(load_manifest(dir.path()), Err(Error::DuplicateId(id)) if id == "e0"));
    }

    #[test]
    fn test_entry_needs_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let mut videos = four();
        videos[3].annotation_path = None;
        write_dataset(dir.path(), &videos);
        assert!(matches!(load_manifest(dir.path()), Err(Error::InvalidManifest(_))));
    }

    #[test]
    fn missing_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &four());
        std::fs::remove_file(dir.path().join("r0.audio.hlft")).unwrap();
        assert!(matches!(load_manifest(dir.path()), Err(Error::InvalidManifest(_))));
    }

    #[test]
    fn missing_manifest_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_manifest(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn malformed_manifest_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), "videos = 3").unwrap();
        assert!(matches!(load_manifest(dir.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_positive_duration_rejected() {
        let mut videos = four();
        videos[0].duration_sec = 0.0;
        assert!(DatasetManifest::new("/x", videos).is_err());
    }

    #[test]
    fn training_roles_required() {
        let m = DatasetManifest::new("/x", vec![entry("e0", Role::EditedPositive)]).unwrap();
        assert!(m.check_training_roles().is_err());
        let m = DatasetManifest::new("/x", vec![entry("r0", Role::RawNegative)]).unwrap();
        assert!(m.check_training_roles().is_err());
    }
}
