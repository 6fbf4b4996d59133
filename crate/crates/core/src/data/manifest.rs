//! Dataset manifest: ties video files to splits and annotation regimes.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    apply_regime, read_video_file, write_video_file, DataError, GeneratorConfig, Regime, Split,
    VideoRecord,
};
use crate::ontology::{resolve_ontology_ref, Ontology};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub split: Split,
    pub regime: Regime,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub ontology_ref: String,
    pub videos: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// A fully loaded dataset: resolved ontology plus every video with its split
/// and regime tags. Records are kept as read; regimes are applied on demand.
#[derive(Debug)]
pub struct Dataset {
    pub ontology: Ontology,
    pub videos: Vec<(VideoRecord, Split, Regime)>,
}

impl Dataset {
    /// Loads a manifest and every video it names. Paths are resolved
    /// relative to the manifest location; splits must not share video ids.
    pub fn load(manifest_path: &Path) -> Result<Self, DataError> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let ontology = resolve_ontology_ref(&manifest.ontology_ref, base)?;
        let mut seen: HashSet<String> = HashSet::new();
        let mut videos = Vec::with_capacity(manifest.videos.len());
        for entry in &manifest.videos {
            let raw = Path::new(&entry.path);
            let path: PathBuf = if raw.is_absolute() {
                raw.to_path_buf()
            } else {
                base.join(raw)
            };
            if !path.exists() {
                return Err(DataError::Manifest(format!(
                    "video file {} does not exist",
                    path.display()
                )));
            }
            let record = read_video_file(&path)?;
            if !seen.insert(record.video_id.clone()) {
                return Err(DataError::Manifest(format!(
                    "duplicate video id {}",
                    record.video_id
                )));
            }
            if let Some(steps) = &record.step_labels {
                for &s in steps {
                    if s >= ontology.num_steps() {
                        return Err(DataError::LabelOutOfRange {
                            label: s,
                            limit: ontology.num_steps(),
                        });
                    }
                }
            }
            if let Some(phases) = &record.phase_labels {
                for &p in phases {
                    if p >= ontology.num_phases() {
                        return Err(DataError::LabelOutOfRange {
                            label: p,
                            limit: ontology.num_phases(),
                        });
                    }
                }
            }
            videos.push((record, entry.split, entry.regime));
        }
        Ok(Dataset { ontology, videos })
    }

    pub fn split(&self, split: Split) -> Vec<&VideoRecord> {
        self.videos
            .iter()
            .filter(|(_, s, _)| *s == split)
            .map(|(v, _, _)| v)
            .collect()
    }

    /// Training records with regimes applied; unlabeled videos are dropped.
    pub fn train_records(&self) -> Result<Vec<(VideoRecord, Regime)>, DataError> {
        self.videos
            .iter()
            .filter(|(_, s, r)| *s == Split::Train && *r != Regime::Unlabeled)
            .map(|(v, _, r)| apply_regime(v, *r).map(|rec| (rec, *r)))
            .collect()
    }
}

/// Writes a generated dataset under `dir` (videos in `dir/videos/`, manifest
/// at `dir/manifest.json`). Splits are assigned in generation order: train
/// first, then val, then test; all videos start fully labeled.
pub fn write_dataset(
    dir: &Path,
    cfg: &GeneratorConfig,
    videos: &[VideoRecord],
) -> Result<PathBuf, DataError> {
    let counts = cfg.split_counts();
    let video_dir = dir.join("videos");
    std::fs::create_dir_all(&video_dir)?;
    let mut entries = Vec::with_capacity(videos.len());
    for (i, video) in videos.iter().enumerate() {
        let split = if i < counts.train {
            Split::Train
        } else if i < counts.train + counts.val {
            Split::Val
        } else if i < counts.train + counts.val + counts.test {
            Split::Test
        } else {
            continue; // beyond the requested split sizes
        };
        let rel = format!("videos/{}.hwts", video.video_id);
        write_video_file(video, &dir.join(&rel))?;
        entries.push(ManifestEntry {
            path: rel,
            split,
            regime: Regime::Full,
        });
    }
    let manifest = DatasetManifest {
        ontology_ref: cfg.ontology.clone(),
        videos: entries,
    };
    let manifest_path = dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(manifest_path)
}
