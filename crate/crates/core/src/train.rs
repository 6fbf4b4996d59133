//! End-to-end training: per-video batched online forward passes through the
//! feature buffer, gated loss selection per annotation regime, optimizer
//! updates per chunk, and validation-based model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{adam_step, AdamParams, AutodiffError, Graph};
use crate::data::{DataError, Regime, VideoRecord};
use crate::eval::{dataset_metrics, video_metrics, DatasetMetrics, EvalError, VideoMetrics};
use crate::losses::{compute_class_weights, total_loss, ClassWeights, LossBranch, LossError};
use crate::model::{
    forward_video_online, init_model, predict_steps, FeatureBuffer, ModelConfig, ModelError,
    ModelState,
};
use crate::ontology::Ontology;

pub use crate::model::{read_checkpoint as load_checkpoint, write_checkpoint as save_checkpoint};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("non-finite loss at epoch {epoch} on video {video}")]
    Divergence { epoch: usize, video: String },
    #[error("loss branch does not match regime on video {0}")]
    GatingViolation(String),
    #[error("validation video {0} has no step labels")]
    MissingValLabels(String),
    #[error("bad train config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    F1,
    Acc,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_frames: usize,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 1e-3,
            weight_decay: 5e-4,
            batch_frames: 64,
            seed: 1,
            selection_metric: SelectionMetric::F1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be >= 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(TrainError::BadConfig("lr must be > 0".into()));
        }
        if self.batch_frames == 0 {
            return Err(TrainError::BadConfig("batch_frames must be >= 1".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(TrainError::BadConfig("weight_decay must be >= 0".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

/// Per-epoch summary. Mean losses are reported per supervision regime and
/// absent when the epoch saw no batch of that regime; provenance records
/// which loss branch each batch actually took.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub step_loss: Option<f64>,
    pub dep_loss: Option<f64>,
    pub provenance: Vec<(String, LossBranch)>,
}

/// One pass over the training videos in a seeded shuffled order. Every video
/// is processed as contiguous `batch_frames` chunks in temporal order with
/// the feature buffer reset at its start; each chunk takes one gated loss,
/// one backward pass, and (for lr > 0) one optimizer step. An lr of exactly
/// zero runs the full forward/backward pipeline but leaves parameters and
/// moments untouched.
pub fn train_epoch(
    state: &mut ModelState,
    videos: &[(VideoRecord, Regime)],
    ontology: &Ontology,
    weights: &ClassWeights,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats, TrainError> {
    let mut order: Vec<usize> = (0..videos.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1_000 + epoch as u64);
    order.shuffle(&mut rng);

    let hp = cfg.adam();
    let mut buffer = FeatureBuffer::new(state.config.feat_dim);
    let mut step_sum = 0.0;
    let mut step_batches = 0usize;
    let mut dep_sum = 0.0;
    let mut dep_batches = 0usize;
    let mut provenance = Vec::new();

    for &vi in &order {
        let (record, regime) = &videos[vi];
        record.check_training_labels(ontology)?;
        let frames = record.frames();
        buffer.reset(&record.video_id);
        let mut start = 0;
        while start < frames {
            let len = cfg.batch_frames.min(frames - start);
            let chunk = record.obs.slice(ndarray::s![start..start + len, ..]).to_owned();
            let mut graph = Graph::new();
            let bound = state.bind(&mut graph, true)?;
            let logits =
                forward_video_online(&mut graph, &bound, &mut buffer, &record.video_id, start, &chunk)?;
            debug_assert!(buffer.len() <= frames);
            let view = record.batch_view(start, len);
            let (loss, branch) = total_loss(&mut graph, logits, view, ontology, weights)?;
            let expected = match regime {
                Regime::Full => LossBranch::Step,
                Regime::PhaseOnly => LossBranch::Dependency,
                Regime::Unlabeled => return Err(TrainError::GatingViolation(record.video_id.clone())),
            };
            if branch != expected {
                return Err(TrainError::GatingViolation(record.video_id.clone()));
            }
            let loss_value = graph.scalar(loss);
            if !loss_value.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    video: record.video_id.clone(),
                });
            }
            graph.backward(loss)?;
            if cfg.lr > 0.0 {
                let grads = state.read_grads(&graph, &bound);
                adam_step(&mut state.params, &grads, &mut state.adam, &hp)?;
            }
            match branch {
                LossBranch::Step => {
                    step_sum += loss_value;
                    step_batches += 1;
                }
                LossBranch::Dependency => {
                    dep_sum += loss_value;
                    dep_batches += 1;
                }
            }
            provenance.push((record.video_id.clone(), branch));
            start += len;
        }
        debug_assert_eq!(buffer.len(), frames);
    }

    Ok(EpochStats {
        step_loss: (step_batches > 0).then(|| step_sum / step_batches as f64),
        dep_loss: (dep_batches > 0).then(|| dep_sum / dep_batches as f64),
        provenance,
    })
}

/// Step-recognition metrics of a frozen model over fully labeled videos.
pub fn evaluate_model(
    state: &ModelState,
    videos: &[&VideoRecord],
) -> Result<(Vec<VideoMetrics>, DatasetMetrics), TrainError> {
    if videos.is_empty() {
        return Err(TrainError::EmptySplit("eval"));
    }
    let mut per_video = Vec::with_capacity(videos.len());
    for video in videos {
        let gt = video
            .step_labels
            .as_ref()
            .ok_or_else(|| TrainError::MissingValLabels(video.video_id.clone()))?;
        let pred = predict_steps(state, &video.obs)?;
        per_video.push(video_metrics(
            &video.video_id,
            gt,
            &pred,
            state.config.num_steps,
        )?);
    }
    let aggregate = dataset_metrics(&per_video)?;
    Ok((per_video, aggregate))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step_loss: Option<f64>,
    pub dep_loss: Option<f64>,
    pub val_acc: f64,
    pub val_pr: f64,
    pub val_re: f64,
    pub val_f1: f64,
}

pub struct FitOutcome {
    pub best_state: ModelState,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    pub weights: ClassWeights,
}

/// Full training run: class weights once from the train split, `epochs`
/// epochs, validation after each, returning the checkpoint that maximized
/// the selection metric (earliest epoch wins ties).
pub fn fit(
    train_videos: &[(VideoRecord, Regime)],
    val_videos: &[&VideoRecord],
    ontology: &Ontology,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
) -> Result<FitOutcome, TrainError> {
    cfg.validate()?;
    if train_videos.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val_videos.is_empty() {
        return Err(TrainError::EmptySplit("val"));
    }
    if model_cfg.num_steps != ontology.num_steps() {
        return Err(TrainError::BadConfig(format!(
            "model has {} step classes but the ontology defines {}",
            model_cfg.num_steps,
            ontology.num_steps()
        )));
    }
    let weights = compute_class_weights(train_videos, ontology)?;
    let mut state = init_model(model_cfg, cfg.seed)?;
    let mut best_state = state.clone();
    let mut best_epoch = 0usize;
    let mut best_metric = f64::NEG_INFINITY;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let stats = train_epoch(&mut state, train_videos, ontology, &weights, cfg, epoch)?;
        let (_, val) = evaluate_model(&state, val_videos)?;
        let metric = match cfg.selection_metric {
            SelectionMetric::F1 => val.mean.f1,
            SelectionMetric::Acc => val.mean.acc,
        };
        if metric > best_metric {
            best_metric = metric;
            best_epoch = epoch;
            best_state = state.clone();
        }
        log.push(EpochRecord {
            epoch,
            step_loss: stats.step_loss,
            dep_loss: stats.dep_loss,
            val_acc: val.mean.acc,
            val_pr: val.mean.pr,
            val_re: val.mean.re,
            val_f1: val.mean.f1,
        });
    }
    Ok(FitOutcome {
        best_state,
        best_epoch,
        log,
        weights,
    })
}

/// Training log as line-delimited JSON, one record per epoch.
pub fn log_to_jsonl(log: &[EpochRecord]) -> String {
    let mut out = String::new();
    for record in log {
        out.push_str(&serde_json::to_string(record).expect("log records serialize"));
        out.push('\n');
    }
    out
}
