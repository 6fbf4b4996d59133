//! Dataset representation, bit-exact serialization, the synthetic workflow
//! generator, and annotation-regime assignment.

mod generator;
mod manifest;
mod video_file;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{Ontology, OntologyError};

pub use generator::{class_means, generate_synthetic_dataset, GeneratorConfig, SplitCounts};
pub use manifest::{write_dataset, Dataset, DatasetManifest, ManifestEntry};
pub use video_file::{read_video_file, write_video_file};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad video file: {0}")]
    Format(String),
    #[error("label {label} exceeds limit {limit}")]
    LabelOutOfRange { label: usize, limit: usize },
    #[error("video has no frames")]
    EmptyVideo,
    #[error("bad generator config: {0}")]
    BadConfig(String),
    #[error("regime counts k={k} + m={m} exceed {n} videos")]
    CountsExceedVideos { k: usize, m: usize, n: usize },
    #[error("video {0} is missing labels required by its regime")]
    MissingLabels(String),
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

/// Per-frame observations plus whatever labels the annotation regime kept.
/// `delta_step` is the supervision gate: true selects the step loss, false
/// the phase-space dependency loss.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    /// T×obs_dim observation matrix.
    pub obs: Array2<f64>,
    pub step_labels: Option<Vec<usize>>,
    pub phase_labels: Option<Vec<usize>>,
    pub delta_step: bool,
}

impl VideoRecord {
    pub fn frames(&self) -> usize {
        self.obs.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.ncols()
    }

    /// Checks the labels a training regime requires and their ranges.
    pub fn check_training_labels(&self, ontology: &Ontology) -> Result<(), DataError> {
        if self.delta_step {
            let steps = self
                .step_labels
                .as_ref()
                .ok_or_else(|| DataError::MissingLabels(self.video_id.clone()))?;
            if steps.len() != self.frames() {
                return Err(DataError::Format(format!(
                    "video {}: {} step labels for {} frames",
                    self.video_id,
                    steps.len(),
                    self.frames()
                )));
            }
            for &s in steps {
                if s >= ontology.num_steps() {
                    return Err(DataError::LabelOutOfRange {
                        label: s,
                        limit: ontology.num_steps(),
                    });
                }
            }
        } else {
            let phases = self
                .phase_labels
                .as_ref()
                .ok_or_else(|| DataError::MissingLabels(self.video_id.clone()))?;
            if phases.len() != self.frames() {
                return Err(DataError::Format(format!(
                    "video {}: {} phase labels for {} frames",
                    self.video_id,
                    phases.len(),
                    self.frames()
                )));
            }
            for &p in phases {
                if p >= ontology.num_phases() {
                    return Err(DataError::LabelOutOfRange {
                        label: p,
                        limit: ontology.num_phases(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// A video's annotation availability class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Step labels available; trains through the step loss (δ = 1).
    Full,
    /// Only phase labels available; trains through the dependency loss (δ = 0).
    PhaseOnly,
    /// No usable labels; excluded from training.
    Unlabeled,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Full => write!(f, "full"),
            Regime::PhaseOnly => write!(f, "phase_only"),
            Regime::Unlabeled => write!(f, "unlabeled"),
        }
    }
}

/// Restricts a fully-labeled record to what its regime permits.
pub fn apply_regime(record: &VideoRecord, regime: Regime) -> Result<VideoRecord, DataError> {
    let mut out = record.clone();
    match regime {
        Regime::Full => {
            if out.step_labels.is_none() {
                return Err(DataError::MissingLabels(out.video_id));
            }
            out.phase_labels = None;
            out.delta_step = true;
        }
        Regime::PhaseOnly => {
            if out.phase_labels.is_none() {
                return Err(DataError::MissingLabels(out.video_id));
            }
            out.step_labels = None;
            out.delta_step = false;
        }
        Regime::Unlabeled => {
            out.step_labels = None;
            out.phase_labels = None;
            out.delta_step = false;
        }
    }
    Ok(out)
}

/// Splits `videos` into k step-supervised, m phase-supervised, and
/// (n − k − m) unlabeled records via a seeded shuffle. The step subset for a
/// given seed is a prefix of the shuffled order, so sweeping m with a fixed
/// seed keeps the same k step-labeled videos. Output preserves input order.
pub fn assign_annotation_regime(
    videos: &[VideoRecord],
    k_step: usize,
    m_phase: usize,
    seed: u64,
) -> Result<Vec<(VideoRecord, Regime)>, DataError> {
    let n = videos.len();
    if k_step + m_phase > n {
        return Err(DataError::CountsExceedVideos {
            k: k_step,
            m: m_phase,
            n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut regimes = vec![Regime::Unlabeled; n];
    for &i in order.iter().take(k_step) {
        regimes[i] = Regime::Full;
    }
    for &i in order.iter().skip(k_step).take(m_phase) {
        regimes[i] = Regime::PhaseOnly;
    }
    videos
        .iter()
        .zip(regimes)
        .map(|(v, r)| apply_regime(v, r).map(|rec| (rec, r)))
        .collect()
}
