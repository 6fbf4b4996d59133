//! Class weighting and the gated training losses.
//!
//! Videos with step labels train through a weighted step cross-entropy; the
//! rest train through the step-phase dependency loss, which pushes predicted
//! step probability mass through the binary membership matrix into phase
//! space and applies weighted cross-entropy against the phase labels there.
//! Per video, exactly one branch is active:
//!
//! ```text
//! L_total = δ_step · L_step + (1 − δ_step) · L_dep
//! ```

use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Tensor};
use crate::data::{DataError, Regime, VideoRecord};
use crate::ontology::{Ontology, OntologyError};

pub const DEFAULT_EPS_LOG: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("all label counts are zero")]
    AllZeroCounts,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("logits have {logits_classes} columns but the ontology has {steps} steps")]
    OntologyMismatch { logits_classes: usize, steps: usize },
    #[error("missing {0} labels for the active supervision regime")]
    MissingLabels(&'static str),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Median-frequency balanced class weights for steps and phases, plus the
/// clamp applied inside every log.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub step_weights: Vec<f64>,
    pub phase_weights: Vec<f64>,
    pub eps_log: f64,
}

/// Median frequency balancing: w_c = median frequency of the classes present
/// in the data divided by the frequency of class c. Classes with zero count
/// get weight zero. Computed on raw counts (the total cancels), so exact
/// integer ratios stay exact.
pub fn median_frequency_weights(label_counts: &[u64]) -> Result<Vec<f64>, LossError> {
    let mut present: Vec<u64> = label_counts.iter().copied().filter(|&c| c > 0).collect();
    if present.is_empty() {
        return Err(LossError::AllZeroCounts);
    }
    present.sort_unstable();
    let median = if present.len() % 2 == 1 {
        present[present.len() / 2] as f64
    } else {
        (present[present.len() / 2 - 1] as f64 + present[present.len() / 2] as f64) / 2.0
    };
    Ok(label_counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { median / c as f64 })
        .collect())
}

/// Weighted step cross-entropy: softmax over step logits, then weighted NLL
/// against the step labels.
pub fn step_loss(
    graph: &mut Graph,
    logits: Tensor,
    step_labels: &[usize],
    weights: &ClassWeights,
) -> Result<Tensor, LossError> {
    let probs = graph.softmax_rows(logits);
    Ok(graph.weighted_nll_rows(probs, step_labels, &weights.step_weights, weights.eps_log)?)
}

/// Step-phase dependency loss: softmax over step logits, linear transform
/// into phase space through the membership matrix (no renormalization), then
/// weighted NLL against the phase labels. Fully differentiable back to the
/// logits; transformed probabilities are epsilon-clamped inside the log
/// because they can be exactly zero.
pub fn dependency_loss(
    graph: &mut Graph,
    logits: Tensor,
    phase_labels: &[usize],
    ontology: &Ontology,
    weights: &ClassWeights,
) -> Result<Tensor, LossError> {
    let (_, classes) = graph.shape(logits);
    if classes != ontology.num_steps() {
        return Err(LossError::OntologyMismatch {
            logits_classes: classes,
            steps: ontology.num_steps(),
        });
    }
    let probs = graph.softmax_rows(logits);
    let phase_scores = ontology.phase_transform(graph, probs)?;
    Ok(graph.weighted_nll_rows(
        phase_scores,
        phase_labels,
        &weights.phase_weights,
        weights.eps_log,
    )?)
}

/// Which branch of the gated total loss produced a value; used by the
/// training loop to assert exclusive gradient flow per regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossBranch {
    Step,
    Dependency,
}

/// One contiguous chunk of a video's labels plus its supervision gate.
#[derive(Debug, Clone, Copy)]
pub struct BatchView<'a> {
    pub delta_step: bool,
    pub step_labels: Option<&'a [usize]>,
    pub phase_labels: Option<&'a [usize]>,
}

impl VideoRecord {
    /// View of frames `start..start+len` for loss computation.
    pub fn batch_view(&self, start: usize, len: usize) -> BatchView<'_> {
        BatchView {
            delta_step: self.delta_step,
            step_labels: self.step_labels.as_ref().map(|l| &l[start..start + len]),
            phase_labels: self.phase_labels.as_ref().map(|l| &l[start..start + len]),
        }
    }
}

/// The gated total loss. Exactly one branch is evaluated, so with δ = 1 the
/// result is bit-identical to `step_loss` and with δ = 0 to
/// `dependency_loss` on the same inputs.
pub fn total_loss(
    graph: &mut Graph,
    logits: Tensor,
    view: BatchView<'_>,
    ontology: &Ontology,
    weights: &ClassWeights,
) -> Result<(Tensor, LossBranch), LossError> {
    if view.delta_step {
        let labels = view.step_labels.ok_or(LossError::MissingLabels("step"))?;
        Ok((
            step_loss(graph, logits, labels, weights)?,
            LossBranch::Step,
        ))
    } else {
        let labels = view.phase_labels.ok_or(LossError::MissingLabels("phase"))?;
        Ok((
            dependency_loss(graph, logits, labels, ontology, weights)?,
            LossBranch::Dependency,
        ))
    }
}

/// Class weights from a training split. Step counts come from step-labeled
/// videos only; phase counts use the given phase labels of phase-only videos
/// plus phase labels derived from the step labels of step-labeled videos, so
/// every video contributes to the phase frequency estimate. A regime with no
/// step-labeled (or no phase-usable) videos yields all-zero weights on that
/// side, which is fine because the corresponding loss is then never gated in.
pub fn compute_class_weights(
    records: &[(VideoRecord, Regime)],
    ontology: &Ontology,
) -> Result<ClassWeights, LossError> {
    let mut step_counts = vec![0u64; ontology.num_steps()];
    let mut phase_counts = vec![0u64; ontology.num_phases()];
    for (record, regime) in records {
        match regime {
            Regime::Full => {
                let steps = record
                    .step_labels
                    .as_ref()
                    .ok_or(LossError::MissingLabels("step"))?;
                for &s in steps {
                    if s >= step_counts.len() {
                        return Err(LossError::LabelOutOfRange {
                            label: s,
                            classes: step_counts.len(),
                        });
                    }
                    step_counts[s] += 1;
                }
                for p in ontology.derive_phase_labels(steps)? {
                    phase_counts[p] += 1;
                }
            }
            Regime::PhaseOnly => {
                let phases = record
                    .phase_labels
                    .as_ref()
                    .ok_or(LossError::MissingLabels("phase"))?;
                for &p in phases {
                    if p >= phase_counts.len() {
                        return Err(LossError::LabelOutOfRange {
                            label: p,
                            classes: phase_counts.len(),
                        });
                    }
                    phase_counts[p] += 1;
                }
            }
            Regime::Unlabeled => {}
        }
    }
    let step_weights = if step_counts.iter().all(|&c| c == 0) {
        vec![0.0; step_counts.len()]
    } else {
        median_frequency_weights(&step_counts)?
    };
    let phase_weights = if phase_counts.iter().all(|&c| c == 0) {
        vec![0.0; phase_counts.len()]
    } else {
        median_frequency_weights(&phase_counts)?
    };
    Ok(ClassWeights {
        step_weights,
        phase_weights,
        eps_log: DEFAULT_EPS_LOG,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Matrix};
    use crate::ontology::builtin_cataracts_ontology;
    use ndarray::Array2;

    fn unit_weights(steps: usize, phases: usize) -> ClassWeights {
        ClassWeights {
            step_weights: vec![1.0; steps],
            phase_weights: vec![1.0; phases],
            eps_log: DEFAULT_EPS_LOG,
        }
    }

    /// Naive per-frame scalar reference for the dependency loss.
    fn dependency_loss_oracle(
        logits: &Matrix,
        phase_labels: &[usize],
        ontology: &Ontology,
        phase_weights: &[f64],
        eps: f64,
    ) -> f64 {
        let (t_len, steps) = logits.dim();
        let mut total = 0.0;
        for t in 0..t_len {
            let row: Vec<f64> = logits.row(t).to_vec();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let y = phase_labels[t];
            let mut mass = 0.0;
            for s in 0..steps {
                if ontology.step_in_phase(s, y) {
                    mass += exps[s] / sum;
                }
            }
            total += -phase_weights[y] * mass.max(eps).ln();
        }
        total / t_len as f64
    }

    #[test]
    fn median_weights_hand_example() {
        let w = median_frequency_weights(&[10, 30, 60]).unwrap();
        assert_eq!(w, vec![3.0, 1.0, 0.5]);
    }

    #[test]
    fn median_weights_uniform_counts() {
        let w = median_frequency_weights(&[25, 25, 25, 25]).unwrap();
        assert_eq!(w, vec![1.0; 4]);
    }

    #[test]
    fn median_weights_zero_counts_excluded() {
        let w = median_frequency_weights(&[5, 0, 5]).unwrap();
        assert_eq!(w, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn median_weights_all_zero_is_error() {
        assert!(matches!(
            median_frequency_weights(&[0, 0]),
            Err(LossError::AllZeroCounts)
        ));
    }

    #[test]
    fn median_weights_scale_invariant() {
        let base = [12u64, 7, 91, 0, 33];
        let w = median_frequency_weights(&base).unwrap();
        for scale in [2u64, 10, 1000] {
            let scaled: Vec<u64> = base.iter().map(|c| c * scale).collect();
            assert_eq!(median_frequency_weights(&scaled).unwrap(), w);
        }
    }

    #[test]
    fn step_loss_uniform_logits() {
        let mut g = Graph::new();
        let logits = g.constant(Matrix::zeros((6, 4))).unwrap();
        let w = unit_weights(4, 1);
        let loss = step_loss(&mut g, logits, &[0, 1, 2, 3, 0, 1], &w).unwrap();
        assert!((g.scalar(loss) - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn step_loss_confident_predictions() {
        let mut g = Graph::new();
        let mut lv = Matrix::zeros((4, 3));
        let labels = [2usize, 0, 1, 2];
        for (t, &y) in labels.iter().enumerate() {
            lv[[t, y]] = 30.0;
        }
        let logits = g.leaf(lv, false).unwrap();
        let w = unit_weights(3, 1);
        let loss = step_loss(&mut g, logits, &labels, &w).unwrap();
        assert!(g.scalar(loss) < 1e-3);
    }

    #[test]
    fn step_loss_matches_scalar_oracle() {
        let logits = Matrix::from_shape_fn((9, 5), |(t, c)| ((t * 5 + c) % 11) as f64 * 0.37 - 1.5);
        let labels: Vec<usize> = (0..9).map(|t| (t * 2) % 5).collect();
        let weights = ClassWeights {
            step_weights: vec![0.5, 2.0, 1.0, 0.1, 3.0],
            phase_weights: vec![1.0],
            eps_log: DEFAULT_EPS_LOG,
        };
        let mut expected = 0.0;
        for (t, &y) in labels.iter().enumerate() {
            let row: Vec<f64> = logits.row(t).to_vec();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let p = (logits[[t, y]] - max).exp() / sum;
            expected += -weights.step_weights[y] * p.max(weights.eps_log).ln();
        }
        expected /= labels.len() as f64;

        let mut g = Graph::new();
        let l = g.leaf(logits, false).unwrap();
        let loss = step_loss(&mut g, l, &labels, &weights).unwrap();
        assert!((g.scalar(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn dependency_loss_correct_single_phase_step_is_zero() {
        let o = builtin_cataracts_ontology();
        let mut g = Graph::new();
        let mut lv = Matrix::zeros((3, 19));
        for t in 0..3 {
            lv[[t, 8]] = 1000.0; // Phacoemulsification step, phase 2 only
        }
        let logits = g.leaf(lv, false).unwrap();
        let w = unit_weights(19, 5);
        let loss = dependency_loss(&mut g, logits, &[2, 2, 2], &o, &w).unwrap();
        assert!(g.scalar(loss).abs() < 1e-9);
    }

    #[test]
    fn dependency_loss_disjoint_phase_hits_clamp() {
        let o = builtin_cataracts_ontology();
        let mut g = Graph::new();
        let mut lv = Matrix::zeros((1, 19));
        lv[[0, 8]] = 1000.0; // all mass in phase 2
        let logits = g.leaf(lv, false).unwrap();
        let w = unit_weights(19, 5);
        // Label is Closure (4); Phacoemulsification contributes zero mass.
        let loss = dependency_loss(&mut g, logits, &[4], &o, &w).unwrap();
        assert_eq!(g.scalar(loss), -DEFAULT_EPS_LOG.ln());
    }

    #[test]
    fn dependency_loss_uniform_distribution_table_value() {
        let o = builtin_cataracts_ontology();
        let mut g = Graph::new();
        let logits = g.constant(Matrix::zeros((1, 19))).unwrap();
        let w = unit_weights(19, 5);
        let loss = dependency_loss(&mut g, logits, &[2], &o, &w).unwrap();
        // Uniform step mass puts 5/19 in the Phacoemulsification column.
        assert!((g.scalar(loss) - -(5.0f64 / 19.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn dependency_loss_matches_naive_oracle() {
        let o = builtin_cataracts_ontology();
        let w = ClassWeights {
            step_weights: vec![1.0; 19],
            phase_weights: vec![0.3, 1.7, 0.9, 2.2, 0.5],
            eps_log: DEFAULT_EPS_LOG,
        };
        for instance in 0..25 {
            let logits = Matrix::from_shape_fn((11, 19), |(t, c)| {
                (((instance * 1000 + t * 19 + c) * 2654435761usize) % 997) as f64 / 997.0 * 6.0
                    - 3.0
            });
            let labels: Vec<usize> = (0..11).map(|t| (instance + t) % 5).collect();
            let expected =
                dependency_loss_oracle(&logits, &labels, &o, &w.phase_weights, w.eps_log);
            let mut g = Graph::new();
            let l = g.leaf(logits, false).unwrap();
            let loss = dependency_loss(&mut g, l, &labels, &o, &w).unwrap();
            assert!(
                (g.scalar(loss) - expected).abs() < 1e-12,
                "instance {instance}: {} vs {expected}",
                g.scalar(loss)
            );
        }
    }

    #[test]
    fn dependency_loss_invariant_to_same_phase_redistribution() {
        let o = builtin_cataracts_ontology();
        let w = unit_weights(19, 5);
        // Steps 7 (Nucleus Breaking) and 9 (Vitrectomy) both live only in
        // phase 2; shifting mass between them must not change the loss.
        let mut p = vec![0.02f64; 19];
        p[7] = 0.3;
        p[9] = 0.1;
        let norm: f64 = p.iter().sum();
        let base: Vec<f64> = p.iter().map(|v| v / norm).collect();
        let mut shifted = base.clone();
        shifted[7] = base[7] - 0.15;
        shifted[9] = base[9] + 0.15;
        let to_logits = |probs: &[f64]| {
            Matrix::from_shape_fn((4, 19), |(_, c)| probs[c].ln())
        };
        let labels = [2usize, 0, 3, 2];
        let mut g = Graph::new();
        let a = g.leaf(to_logits(&base), false).unwrap();
        let la = dependency_loss(&mut g, a, &labels, &o, &w).unwrap();
        let b = g.leaf(to_logits(&shifted), false).unwrap();
        let lb = dependency_loss(&mut g, b, &labels, &o, &w).unwrap();
        assert!((g.scalar(la) - g.scalar(lb)).abs() < 1e-9);
    }

    #[test]
    fn dependency_loss_partition_ontology_equals_phase_ce() {
        // Every step in exactly one phase: dependency loss is plain weighted
        // phase cross-entropy on summed step probabilities.
        let o = Ontology::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec!["p".into(), "q".into()],
            &[(0, 0), (1, 0), (2, 1), (3, 1)],
        )
        .unwrap();
        let w = ClassWeights {
            step_weights: vec![1.0; 4],
            phase_weights: vec![1.5, 0.75],
            eps_log: DEFAULT_EPS_LOG,
        };
        let logits = Matrix::from_shape_fn((6, 4), |(t, c)| ((t + c * 3) % 7) as f64 * 0.5 - 1.0);
        let labels = [0usize, 1, 1, 0, 1, 0];
        let expected = dependency_loss_oracle(&logits, &labels, &o, &w.phase_weights, w.eps_log);
        let mut g = Graph::new();
        let l = g.leaf(logits, false).unwrap();
        let loss = dependency_loss(&mut g, l, &labels, &o, &w).unwrap();
        assert!((g.scalar(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn dependency_loss_rejects_ontology_mismatch() {
        let o = builtin_cataracts_ontology();
        let mut g = Graph::new();
        let logits = g.constant(Matrix::zeros((2, 7))).unwrap();
        let w = unit_weights(19, 5);
        assert!(matches!(
            dependency_loss(&mut g, logits, &[0, 1], &o, &w),
            Err(LossError::OntologyMismatch { .. })
        ));
    }

    #[test]
    fn total_loss_gates_bitwise() {
        let o = builtin_cataracts_ontology();
        let w = ClassWeights {
            step_weights: (0..19).map(|i| 0.2 + i as f64 * 0.1).collect(),
            phase_weights: vec![1.0, 0.5, 2.0, 0.25, 1.25],
            eps_log: DEFAULT_EPS_LOG,
        };
        let logits = Matrix::from_shape_fn((8, 19), |(t, c)| ((t * 19 + c) % 13) as f64 * 0.21);
        let steps: Vec<usize> = (0..8).map(|t| (t * 5) % 19).collect();
        let phases: Vec<usize> = (0..8).map(|t| t % 5).collect();

        let step_view = BatchView {
            delta_step: true,
            step_labels: Some(&steps),
            phase_labels: Some(&phases),
        };
        let mut g1 = Graph::new();
        let l1 = g1.leaf(logits.clone(), false).unwrap();
        let (total, branch) = total_loss(&mut g1, l1, step_view, &o, &w).unwrap();
        assert_eq!(branch, LossBranch::Step);
        let mut g2 = Graph::new();
        let l2 = g2.leaf(logits.clone(), false).unwrap();
        let plain = step_loss(&mut g2, l2, &steps, &w).unwrap();
        assert_eq!(g1.scalar(total).to_bits(), g2.scalar(plain).to_bits());

        let phase_view = BatchView {
            delta_step: false,
            step_labels: None,
            phase_labels: Some(&phases),
        };
        let mut g3 = Graph::new();
        let l3 = g3.leaf(logits.clone(), false).unwrap();
        let (total, branch) = total_loss(&mut g3, l3, phase_view, &o, &w).unwrap();
        assert_eq!(branch, LossBranch::Dependency);
        let mut g4 = Graph::new();
        let l4 = g4.leaf(logits, false).unwrap();
        let plain = dependency_loss(&mut g4, l4, &phases, &o, &w).unwrap();
        assert_eq!(g3.scalar(total).to_bits(), g4.scalar(plain).to_bits());
    }

    #[test]
    fn total_loss_missing_labels_is_error() {
        let o = builtin_cataracts_ontology();
        let w = unit_weights(19, 5);
        let mut g = Graph::new();
        let logits = g.constant(Matrix::zeros((2, 19))).unwrap();
        let view = BatchView {
            delta_step: true,
            step_labels: None,
            phase_labels: None,
        };
        assert!(matches!(
            total_loss(&mut g, logits, view, &o, &w),
            Err(LossError::MissingLabels("step"))
        ));
    }

    #[test]
    fn total_loss_gradients_check_in_both_regimes() {
        let o = builtin_cataracts_ontology();
        let w = ClassWeights {
            step_weights: (0..19).map(|i| 0.5 + (i % 3) as f64).collect(),
            phase_weights: vec![1.0, 2.0, 0.5, 1.5, 0.75],
            eps_log: DEFAULT_EPS_LOG,
        };
        let logits = Matrix::from_shape_fn((5, 19), |(t, c)| ((t * 7 + c * 3) % 17) as f64 * 0.2);
        let steps = vec![4usize, 0, 8, 13, 17];
        let phases = vec![1usize, 0, 2, 3, 4];

        let steps_c = steps.clone();
        let w1 = w.clone();
        let o1 = o.clone();
        let err = grad_check(
            &[logits.clone()],
            move |g, hs| {
                let view = BatchView {
                    delta_step: true,
                    step_labels: Some(&steps_c),
                    phase_labels: None,
                };
                total_loss(g, hs[0], view, &o1, &w1)
                    .map(|(t, _)| t)
                    .map_err(|e| AutodiffError::Contract(e.to_string()))
            },
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-4, "step regime gradient error {err}");

        let err = grad_check(
            &[logits],
            move |g, hs| {
                let view = BatchView {
                    delta_step: false,
                    step_labels: None,
                    phase_labels: Some(&phases),
                };
                total_loss(g, hs[0], view, &o, &w)
                    .map(|(t, _)| t)
                    .map_err(|e| AutodiffError::Contract(e.to_string()))
            },
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-4, "dependency regime gradient error {err}");
    }

    #[test]
    fn class_weights_follow_regime_policy() {
        let o = builtin_cataracts_ontology();
        // Step video: 4 frames of step 8 (phase 2), 2 of step 16 (phase 4).
        let step_video = VideoRecord {
            video_id: "s".into(),
            obs: Array2::zeros((6, 3)),
            step_labels: Some(vec![8, 8, 8, 8, 16, 16]),
            phase_labels: None,
            delta_step: true,
        };
        // Phase video: 6 frames of phase 1, 3 of phase 2.
        let phase_video = VideoRecord {
            video_id: "p".into(),
            obs: Array2::zeros((9, 3)),
            step_labels: None,
            phase_labels: Some(vec![1, 1, 1, 1, 1, 1, 2, 2, 2]),
            delta_step: false,
        };
        let records = vec![
            (step_video, Regime::Full),
            (phase_video, Regime::PhaseOnly),
        ];
        let w = compute_class_weights(&records, &o).unwrap();
        // Steps: counts 4 and 2, median 3 → weights 0.75 and 1.5.
        assert_eq!(w.step_weights[8], 0.75);
        assert_eq!(w.step_weights[16], 1.5);
        assert_eq!(w.step_weights[0], 0.0);
        // Phases: derived from the step video (4× phase 2, 2× phase 4) plus
        // the given labels (6× phase 1, 3× phase 2): counts [0, 6, 7, 0, 2].
        // Median of {6, 7, 2} is 6.
        assert_eq!(w.phase_weights, vec![0.0, 1.0, 6.0 / 7.0, 0.0, 3.0]);
    }

    #[test]
    fn loss_bounds_hold() {
        let o = builtin_cataracts_ontology();
        let w = ClassWeights {
            step_weights: vec![2.0; 19],
            phase_weights: vec![2.0; 5],
            eps_log: DEFAULT_EPS_LOG,
        };
        let bound = 2.0 * -(DEFAULT_EPS_LOG.ln());
        let logits = Matrix::from_shape_fn((6, 19), |(t, c)| ((t * c) % 9) as f64 * 3.0 - 12.0);
        let steps: Vec<usize> = (0..6).map(|t| (t * 3) % 19).collect();
        let phases: Vec<usize> = (0..6).map(|t| t % 5).collect();
        let mut g = Graph::new();
        let l = g.leaf(logits, false).unwrap();
        let sl = step_loss(&mut g, l, &steps, &w).unwrap();
        let dl = dependency_loss(&mut g, l, &phases, &o, &w).unwrap();
        for v in [g.scalar(sl), g.scalar(dl)] {
            assert!((0.0..=bound).contains(&v), "loss {v} outside [0, {bound}]");
        }
    }
}
