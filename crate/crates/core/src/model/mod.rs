//! Frame encoder and the causal single-stage TCN, plus the online feature
//! buffer used during end-to-end training.
//!
//! The encoder is a two-layer perceptron standing in for an image backbone;
//! the temporal model contains neither pooling nor fully connected layers,
//! only an input 1×1 projection, a stack of dilated residual layers
//! (dilation 2^l at layer l, causal convolutions that read only the current
//! and earlier frames), and a 1×1 output head.

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdamState, AutodiffError, Graph, Matrix, Tensor};

pub use checkpoint::{read_checkpoint, write_checkpoint};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("online forward out of sequence: {0}")]
    Sequencing(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub obs_dim: usize,
    /// Encoder output width N_f.
    pub feat_dim: usize,
    pub encoder_hidden: usize,
    pub tcn_filters: usize,
    pub tcn_layers: usize,
    pub kernel_size: usize,
    pub num_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            obs_dim: 32,
            feat_dim: 64,
            encoder_hidden: 64,
            tcn_filters: 32,
            tcn_layers: 8,
            kernel_size: 3,
            num_steps: 19,
        }
    }
}

/// Hard cap on the dilation stack. 2^16 already dwarfs any desk-scale video.
pub const MAX_TCN_LAYERS: usize = 16;

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("obs_dim", self.obs_dim),
            ("feat_dim", self.feat_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("tcn_filters", self.tcn_filters),
            ("tcn_layers", self.tcn_layers),
            ("kernel_size", self.kernel_size),
            ("num_steps", self.num_steps),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(ModelError::BadConfig(format!("{name} must be >= 1")));
            }
        }
        if self.tcn_layers > MAX_TCN_LAYERS {
            return Err(ModelError::BadConfig(format!(
                "tcn_layers {} exceeds {MAX_TCN_LAYERS}",
                self.tcn_layers
            )));
        }
        Ok(())
    }

    /// Number of past frames (including the current one) that can influence
    /// one output frame: 1 + (K−1)·(2^L − 1).
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * ((1usize << self.tcn_layers) - 1)
    }

    /// Parameter matrices in their fixed declared order. Convolution kernels
    /// are stored as [filters × K·filters] with tap K−1 reading the current
    /// frame; biases are 1-row matrices.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let f = self.tcn_filters;
        let mut shapes = vec![
            (self.encoder_hidden, self.obs_dim),
            (1, self.encoder_hidden),
            (self.feat_dim, self.encoder_hidden),
            (1, self.feat_dim),
            (f, self.feat_dim),
            (1, f),
        ];
        for _ in 0..self.tcn_layers {
            shapes.push((f, self.kernel_size * f));
            shapes.push((1, f));
            shapes.push((f, f));
            shapes.push((1, f));
        }
        shapes.push((self.num_steps, f));
        shapes.push((1, self.num_steps));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(r, c)| r * c).sum()
    }
}

// Indices into the declared parameter order.
const ENC_W1: usize = 0;
const ENC_B1: usize = 1;
const ENC_W2: usize = 2;
const ENC_B2: usize = 3;
const IN_W: usize = 4;
const IN_B: usize = 5;
const LAYER_BASE: usize = 6;

fn layer_conv_w(l: usize) -> usize {
    LAYER_BASE + 4 * l
}

fn head_w(layers: usize) -> usize {
    LAYER_BASE + 4 * layers
}

/// Encoder + TCN parameters and the optimizer moments that travel with them.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Vec<Matrix>,
    pub adam: AdamState,
}

/// Seeded uniform fan-in initialization: weights from U(±1/√fan_in), biases
/// zero. Identical seeds produce bit-identical parameters.
pub fn init_model(config: ModelConfig, seed: u64) -> Result<ModelState, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = config.param_shapes();
    let params: Vec<Matrix> = shapes
        .iter()
        .map(|&(rows, cols)| {
            if rows == 1 {
                // bias row
                Matrix::zeros((rows, cols))
            } else {
                let bound = 1.0 / (cols as f64).sqrt();
                Matrix::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
            }
        })
        .collect();
    let adam = AdamState::new(&params);
    Ok(ModelState {
        config,
        params,
        adam,
    })
}

/// Parameter handles inside one graph, ready for forward passes.
pub struct BoundModel {
    config: ModelConfig,
    handles: Vec<Tensor>,
}

impl BoundModel {
    /// Assembles a bound model from pre-registered leaves in declared
    /// parameter order; used by verification harnesses that manage their own
    /// graph leaves.
    pub fn from_parts(config: ModelConfig, handles: Vec<Tensor>) -> Self {
        assert_eq!(handles.len(), config.param_shapes().len());
        BoundModel { config, handles }
    }
}

impl ModelState {
    /// Registers every parameter as a graph leaf. Trainable binds carry
    /// gradients; frozen binds are for inference.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> Result<BoundModel, ModelError> {
        let handles = self
            .params
            .iter()
            .map(|p| graph.leaf(p.clone(), trainable))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoundModel {
            config: self.config,
            handles,
        })
    }

    /// Gradients of every parameter, in declared order, after a backward
    /// pass through the graph the model was bound into.
    pub fn read_grads(&self, graph: &Graph, bound: &BoundModel) -> Vec<Matrix> {
        bound.handles.iter().map(|&h| graph.grad(h).clone()).collect()
    }
}

/// Per-frame feature map: linear → relu → linear. Rows are independent.
pub fn encode_frames(
    graph: &mut Graph,
    bound: &BoundModel,
    obs: Tensor,
) -> Result<Tensor, ModelError> {
    let h = graph.pointwise_linear(obs, bound.handles[ENC_W1], bound.handles[ENC_B1])?;
    let h = graph.relu(h);
    Ok(graph.pointwise_linear(h, bound.handles[ENC_W2], bound.handles[ENC_B2])?)
}

/// The single-stage TCN over encoded frames: input projection, L dilated
/// causal residual layers (conv → relu → 1×1 → residual add), output head.
pub fn tcn_forward(
    graph: &mut Graph,
    bound: &BoundModel,
    feats: Tensor,
) -> Result<Tensor, ModelError> {
    let cfg = &bound.config;
    let mut hidden = graph.pointwise_linear(feats, bound.handles[IN_W], bound.handles[IN_B])?;
    for l in 0..cfg.tcn_layers {
        let base = layer_conv_w(l);
        let conv = graph.conv1d_causal(
            hidden,
            bound.handles[base],
            bound.handles[base + 1],
            cfg.kernel_size,
            1usize << l,
        )?;
        let activated = graph.relu(conv);
        let projected =
            graph.pointwise_linear(activated, bound.handles[base + 2], bound.handles[base + 3])?;
        hidden = graph.residual_add(hidden, projected)?;
    }
    let head = head_w(cfg.tcn_layers);
    Ok(graph.pointwise_linear(hidden, bound.handles[head], bound.handles[head + 1])?)
}

/// Cache of encoder outputs for all processed frames of the current video.
/// Entries are value snapshots: once stored they no longer carry gradients,
/// so later batches see them as constants even after parameter updates.
#[derive(Debug, Clone)]
pub struct FeatureBuffer {
    video_id: String,
    feat_dim: usize,
    data: Vec<f64>,
}

impl FeatureBuffer {
    pub fn new(feat_dim: usize) -> Self {
        FeatureBuffer {
            video_id: String::new(),
            feat_dim,
            data: Vec::new(),
        }
    }

    /// Clears stored features and rebinds the buffer to a new video.
    pub fn reset(&mut self, video_id: &str) {
        self.video_id = video_id.to_string();
        self.data.clear();
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    /// Number of frames currently stored.
    pub fn len(&self) -> usize {
        self.data.len() / self.feat_dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn push_rows(&mut self, rows: &Matrix) {
        debug_assert_eq!(rows.ncols(), self.feat_dim);
        self.data.extend(rows.iter());
    }

    fn as_matrix(&self) -> Matrix {
        Matrix::from_shape_vec((self.len(), self.feat_dim), self.data.clone())
            .expect("buffer rows are contiguous")
    }
}

/// One online training step over the next contiguous chunk of a video:
/// encodes the chunk with gradients, appends value snapshots to the buffer,
/// runs the TCN over all buffered history plus the chunk, and returns logits
/// for the chunk's frames only. Gradients reach the encoder solely through
/// the current chunk; buffered features are constants.
pub fn forward_video_online(
    graph: &mut Graph,
    bound: &BoundModel,
    buffer: &mut FeatureBuffer,
    video_id: &str,
    start: usize,
    obs_chunk: &Matrix,
) -> Result<Tensor, ModelError> {
    if buffer.video_id() != video_id {
        return Err(ModelError::Sequencing(format!(
            "buffer holds video {:?} but got a chunk of {video_id:?}",
            buffer.video_id()
        )));
    }
    if start != buffer.len() {
        return Err(ModelError::Sequencing(format!(
            "chunk starts at frame {start} but buffer holds {} frames",
            buffer.len()
        )));
    }
    if obs_chunk.ncols() != bound.config.obs_dim {
        return Err(ModelError::Sequencing(format!(
            "chunk has {} observation dims, model expects {}",
            obs_chunk.ncols(),
            bound.config.obs_dim
        )));
    }
    if obs_chunk.nrows() == 0 {
        return Err(ModelError::Sequencing("empty chunk".into()));
    }
    let obs = graph.leaf(obs_chunk.clone(), false)?;
    let feats = encode_frames(graph, bound, obs)?;
    let snapshot = graph.values(feats).clone();
    let past_len = buffer.len();
    let sequence = if past_len == 0 {
        feats
    } else {
        let past = graph.constant(buffer.as_matrix())?;
        graph.concat_rows(past, feats)?
    };
    let logits_all = tcn_forward(graph, bound, sequence)?;
    let logits = if past_len == 0 {
        logits_all
    } else {
        graph.slice_rows(logits_all, past_len)?
    };
    buffer.push_rows(&snapshot);
    Ok(logits)
}

/// Offline inference: encode every frame, run the TCN once, no gradients.
pub fn forward_logits(state: &ModelState, obs: &Matrix) -> Result<Matrix, ModelError> {
    let mut graph = Graph::new();
    let bound = state.bind(&mut graph, false)?;
    let x = graph.leaf(obs.clone(), false)?;
    let feats = encode_frames(&mut graph, &bound, x)?;
    let logits = tcn_forward(&mut graph, &bound, feats)?;
    Ok(graph.values(logits).clone())
}

/// Per-frame argmax step predictions (ties resolve to the lowest index).
pub fn predict_steps(state: &ModelState, obs: &Matrix) -> Result<Vec<usize>, ModelError> {
    let logits = forward_logits(state, obs)?;
    Ok(logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_v = row[0];
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best = i;
                    best_v = v;
                }
            }
            best
        })
        .collect())
}
