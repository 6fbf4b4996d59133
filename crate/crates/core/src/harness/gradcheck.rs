//! Whole-model and per-op gradient verification against finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, AutodiffError, Matrix};
use crate::losses::{total_loss, BatchView, ClassWeights, DEFAULT_EPS_LOG};
use crate::model::{encode_frames, tcn_forward, BoundModel, ModelConfig};
use crate::ontology::Ontology;

use super::HarnessError;

/// Linear ops must agree with central differences to near round-off.
pub const LINEAR_OP_THRESHOLD: f64 = 1e-6;
/// Smooth nonlinear compositions get a second-order truncation allowance.
pub const NONLINEAR_OP_THRESHOLD: f64 = 1e-5;
/// The composed model check mirrors training-scale conditioning.
pub const FULL_MODEL_THRESHOLD: f64 = 1e-4;

/// Configuration used by the `gradcheck` command when none is supplied:
/// a 4-layer, 16-filter TCN checked over 32 frames.
pub fn default_check_config() -> ModelConfig {
    ModelConfig {
        obs_dim: 8,
        feat_dim: 12,
        encoder_hidden: 12,
        tcn_filters: 16,
        tcn_layers: 4,
        kernel_size: 3,
        num_steps: 19,
    }
}

pub const DEFAULT_CHECK_FRAMES: usize = 32;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    pub error: f64,
    pub threshold: f64,
}

impl GradCheckEntry {
    pub fn passed(&self) -> bool {
        self.error < self.threshold
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed())
    }

    /// Worst full-model relative error across supervision regimes.
    pub fn max_full_model(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.name.starts_with("full model"))
            .map(|e| e.error)
            .fold(0.0, f64::max)
    }
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

/// Random values bounded away from zero, for kink-free relu probing.
fn rand_matrix_offset(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| {
        let v: f64 = rng.gen_range(0.05..1.0);
        if rng.gen::<bool>() {
            v
        } else {
            -v
        }
    })
}

/// A simple partition hierarchy over `steps` classes for checking the
/// phase-space path of the dependency loss.
fn partition_ontology(steps: usize) -> Ontology {
    let phases = steps.min(5).max(1);
    let pairs: Vec<(usize, usize)> = (0..steps).map(|s| (s, s % phases)).collect();
    Ontology::new(
        (0..steps).map(|s| format!("step{s}")).collect(),
        (0..phases).map(|p| format!("phase{p}")).collect(),
        &pairs,
    )
    .expect("partition hierarchy is well formed")
}

fn per_op_entries(seed: u64) -> Result<Vec<GradCheckEntry>, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();

    // conv1d_causal over kernel and bias (linear in both).
    let x = rand_matrix(&mut rng, 10, 3, 1.0);
    let kernel = rand_matrix(&mut rng, 4, 9, 0.7);
    let bias = rand_matrix(&mut rng, 1, 4, 0.2);
    let x_conv = x.clone();
    let err = grad_check(
        &[kernel, bias],
        move |g, hs| {
            let xt = g.leaf(x_conv.clone(), false)?;
            let y = g.conv1d_causal(xt, hs[0], hs[1], 3, 2)?;
            Ok(g.sum(y))
        },
        1e-4,
    )?;
    entries.push(GradCheckEntry {
        name: "conv1d_causal".into(),
        error: err,
        threshold: LINEAR_OP_THRESHOLD,
    });

    // pointwise_linear over weights, bias, and input.
    let w = rand_matrix(&mut rng, 5, 3, 0.8);
    let b = rand_matrix(&mut rng, 1, 5, 0.3);
    let xin = rand_matrix(&mut rng, 6, 3, 1.0);
    let err = grad_check(
        &[w, b, xin],
        |g, hs| {
            let y = g.pointwise_linear(hs[2], hs[0], hs[1])?;
            Ok(g.sum(y))
        },
        1e-4,
    )?;
    entries.push(GradCheckEntry {
        name: "pointwise_linear".into(),
        error: err,
        threshold: LINEAR_OP_THRESHOLD,
    });

    // residual_add.
    let a = rand_matrix(&mut rng, 4, 4, 1.0);
    let bb = rand_matrix(&mut rng, 4, 4, 1.0);
    let err = grad_check(
        &[a, bb],
        |g, hs| {
            let y = g.residual_add(hs[0], hs[1])?;
            Ok(g.sum(y))
        },
        1e-4,
    )?;
    entries.push(GradCheckEntry {
        name: "residual_add".into(),
        error: err,
        threshold: LINEAR_OP_THRESHOLD,
    });

    // phase transform (constant matmul).
    let probs = rand_matrix(&mut rng, 5, 6, 1.0);
    let membership = Matrix::from_shape_fn((6, 3), |(s, p)| if s % 3 == p { 1.0 } else { 0.0 });
    let err = grad_check(
        &[probs],
        move |g, hs| {
            let y = g.matmul_const(hs[0], &membership)?;
            Ok(g.sum(y))
        },
        1e-4,
    )?;
    entries.push(GradCheckEntry {
        name: "phase_transform".into(),
        error: err,
        threshold: LINEAR_OP_THRESHOLD,
    });

    // relu, sampled away from the kink.
    let xr = rand_matrix_offset(&mut rng, 6, 5);
    let err = grad_check(
        &[xr],
        |g, hs| {
            let y = g.relu(hs[0]);
            Ok(g.sum(y))
        },
        1e-4,
    )?;
    entries.push(GradCheckEntry {
        name: "relu".into(),
        error: err,
        threshold: LINEAR_OP_THRESHOLD,
    });

    // softmax + weighted NLL (the only genuinely nonlinear composition).
    let logits = rand_matrix(&mut rng, 7, 5, 2.0);
    let targets: Vec<usize> = (0..7).map(|t| (t * 2) % 5).collect();
    let err = grad_check(
        &[logits],
        move |g, hs| {
            let probs = g.softmax_rows(hs[0]);
            g.weighted_nll_rows(probs, &targets, &[1.0, 2.0, 0.5, 1.5, 0.25], DEFAULT_EPS_LOG)
        },
        1e-4,
    )?;
    entries.push(GradCheckEntry {
        name: "softmax+weighted_nll".into(),
        error: err,
        threshold: NONLINEAR_OP_THRESHOLD,
    });

    Ok(entries)
}

/// Runs per-op checks plus full-model checks (every parameter of an
/// initialized model, through encoder, TCN, and both loss regimes) on a
/// synthetic video of `frames` frames.
pub fn model_grad_check(
    config: &ModelConfig,
    frames: usize,
    seed: u64,
) -> Result<GradCheckReport, HarnessError> {
    config.validate()?;
    let mut entries = per_op_entries(seed).map_err(|e| HarnessError::Train(e.into()))?;

    let ontology = partition_ontology(config.num_steps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let obs = rand_matrix(&mut rng, frames, config.obs_dim, 1.0);
    let step_labels: Vec<usize> = (0..frames)
        .map(|_| rng.gen_range(0..config.num_steps))
        .collect();
    let phase_labels: Vec<usize> = (0..frames)
        .map(|_| rng.gen_range(0..ontology.num_phases()))
        .collect();
    let weights = ClassWeights {
        step_weights: (0..config.num_steps)
            .map(|_| rng.gen_range(0.25..2.0))
            .collect(),
        phase_weights: (0..ontology.num_phases())
            .map(|_| rng.gen_range(0.25..2.0))
            .collect(),
        eps_log: DEFAULT_EPS_LOG,
    };

    let state = crate::model::init_model(*config, seed)?;
    for (regime_name, delta) in [("step supervision", true), ("phase supervision", false)] {
        let cfg = *config;
        let obs = obs.clone();
        let steps = step_labels.clone();
        let phases = phase_labels.clone();
        let w = weights.clone();
        let ont = ontology.clone();
        let err = grad_check(
            &state.params,
            move |g, hs| {
                let bound = BoundModel::from_parts(cfg, hs.to_vec());
                let x = g.leaf(obs.clone(), false)?;
                let feats =
                    encode_frames(g, &bound, x).map_err(|e| AutodiffError::Contract(e.to_string()))?;
                let logits = tcn_forward(g, &bound, feats)
                    .map_err(|e| AutodiffError::Contract(e.to_string()))?;
                let view = BatchView {
                    delta_step: delta,
                    step_labels: Some(&steps),
                    phase_labels: Some(&phases),
                };
                total_loss(g, logits, view, &ont, &w)
                    .map(|(loss, _)| loss)
                    .map_err(|e| AutodiffError::Contract(e.to_string()))
            },
            1e-4,
        )
        .map_err(|e| HarnessError::Train(e.into()))?;
        entries.push(GradCheckEntry {
            name: format!("full model ({regime_name})"),
            error: err,
            threshold: FULL_MODEL_THRESHOLD,
        });
    }

    Ok(GradCheckReport { entries })
}
