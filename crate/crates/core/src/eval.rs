//! Frame accuracy and class-wise precision/recall/F1 with per-video
//! aggregation and cross-video mean ± standard deviation.
//!
//! Per class c within one video: PR = |GT∩P| / |P|, RE = |GT∩P| / |GT|,
//! F1 = harmonic mean, where GT and P are the frame sets labeled/predicted
//! as c. Classes absent from both GT and P in a video are not applicable and
//! are excluded from the video's class average; |P| = 0 with |GT| > 0 gives
//! PR = 0, |GT| = 0 with |P| > 0 gives RE = 0, and F1 = 0 when PR + RE = 0.
//! Dataset-level spread uses the sample standard deviation across videos.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth has {gt} frames, prediction has {pred}")]
    LengthMismatch { gt: usize, pred: usize },
    #[error("empty label sequence")]
    Empty,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

/// Precision/recall/F1 for one class within one video, or `None` when the
/// class appears in neither the ground truth nor the prediction.
pub type ClassPrf = Option<(f64, f64, f64)>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub video_id: String,
    pub acc: f64,
    pub pr: f64,
    pub re: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub acc: f64,
    pub pr: f64,
    pub re: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub mean: MetricRow,
    pub std: MetricRow,
    pub num_videos: usize,
}

/// Fraction of frames where prediction equals ground truth.
pub fn frame_accuracy(gt: &[usize], pred: &[usize]) -> Result<f64, EvalError> {
    if gt.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(EvalError::Empty);
    }
    let correct = gt.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / gt.len() as f64)
}

/// Per-class precision, recall, and F1 over one video.
pub fn per_class_prf(
    gt: &[usize],
    pred: &[usize],
    num_classes: usize,
) -> Result<Vec<ClassPrf>, EvalError> {
    if gt.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut gt_count = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut both = vec![0usize; num_classes];
    for (&g, &p) in gt.iter().zip(pred) {
        if g >= num_classes {
            return Err(EvalError::LabelOutOfRange {
                label: g,
                classes: num_classes,
            });
        }
        if p >= num_classes {
            return Err(EvalError::LabelOutOfRange {
                label: p,
                classes: num_classes,
            });
        }
        gt_count[g] += 1;
        pred_count[p] += 1;
        if g == p {
            both[g] += 1;
        }
    }
    Ok((0..num_classes)
        .map(|c| {
            if gt_count[c] == 0 && pred_count[c] == 0 {
                return None;
            }
            let pr = if pred_count[c] == 0 {
                0.0
            } else {
                both[c] as f64 / pred_count[c] as f64
            };
            let re = if gt_count[c] == 0 {
                0.0
            } else {
                both[c] as f64 / gt_count[c] as f64
            };
            let f1 = if pr + re == 0.0 {
                0.0
            } else {
                2.0 * pr * re / (pr + re)
            };
            Some((pr, re, f1))
        })
        .collect())
}

/// Frame accuracy plus unweighted class averages of PR/RE/F1 over the
/// applicable classes of one video.
pub fn video_metrics(
    video_id: &str,
    gt: &[usize],
    pred: &[usize],
    num_classes: usize,
) -> Result<VideoMetrics, EvalError> {
    let acc = frame_accuracy(gt, pred)?;
    let per_class = per_class_prf(gt, pred, num_classes)?;
    let applicable: Vec<(f64, f64, f64)> = per_class.into_iter().flatten().collect();
    let n = applicable.len() as f64;
    let (mut pr, mut re, mut f1) = (0.0, 0.0, 0.0);
    for (p, r, f) in &applicable {
        pr += p;
        re += r;
        f1 += f;
    }
    Ok(VideoMetrics {
        video_id: video_id.to_string(),
        acc,
        pr: pr / n,
        re: re / n,
        f1: f1 / n,
    })
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Unweighted mean and sample standard deviation of each metric across
/// videos. A single video yields zero standard deviation.
pub fn dataset_metrics(videos: &[VideoMetrics]) -> Result<DatasetMetrics, EvalError> {
    if videos.is_empty() {
        return Err(EvalError::Empty);
    }
    let collect = |f: fn(&VideoMetrics) -> f64| videos.iter().map(f).collect::<Vec<_>>();
    let (acc_m, acc_s) = mean_and_sample_std(&collect(|v| v.acc));
    let (pr_m, pr_s) = mean_and_sample_std(&collect(|v| v.pr));
    let (re_m, re_s) = mean_and_sample_std(&collect(|v| v.re));
    let (f1_m, f1_s) = mean_and_sample_std(&collect(|v| v.f1));
    Ok(DatasetMetrics {
        mean: MetricRow {
            acc: acc_m,
            pr: pr_m,
            re: re_m,
            f1: f1_m,
        },
        std: MetricRow {
            acc: acc_s,
            pr: pr_s,
            re: re_s,
            f1: f1_s,
        },
        num_videos: videos.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent confusion-matrix oracle.
    fn oracle_prf(gt: &[usize], pred: &[usize], classes: usize) -> Vec<ClassPrf> {
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&g, &p) in gt.iter().zip(pred) {
            confusion[g][p] += 1;
        }
        (0..classes)
            .map(|c| {
                let tp = confusion[c][c];
                let gt_total: usize = confusion[c].iter().sum();
                let pred_total: usize = (0..classes).map(|g| confusion[g][c]).sum();
                if gt_total == 0 && pred_total == 0 {
                    return None;
                }
                let pr = if pred_total == 0 {
                    0.0
                } else {
                    tp as f64 / pred_total as f64
                };
                let re = if gt_total == 0 {
                    0.0
                } else {
                    tp as f64 / gt_total as f64
                };
                let f1 = if pr + re == 0.0 {
                    0.0
                } else {
                    2.0 * pr * re / (pr + re)
                };
                Some((pr, re, f1))
            })
            .collect()
    }

    #[test]
    fn accuracy_basics() {
        assert_eq!(frame_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(frame_accuracy(&[1, 1], &[2, 2]).unwrap(), 0.0);
        assert_eq!(frame_accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert!(matches!(
            frame_accuracy(&[0], &[0, 1]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn worked_example_from_definition() {
        let gt = [0usize, 0, 1, 1];
        let pred = [0usize, 1, 1, 1];
        let prf = per_class_prf(&gt, &pred, 2).unwrap();
        let (pr0, re0, f10) = prf[0].unwrap();
        assert_eq!((pr0, re0), (1.0, 0.5));
        assert!((f10 - 2.0 / 3.0).abs() < 1e-12);
        let (pr1, re1, f11) = prf[1].unwrap();
        assert!((pr1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(re1, 1.0);
        assert!((f11 - 0.8).abs() < 1e-12);

        let vm = video_metrics("v", &gt, &pred, 2).unwrap();
        assert_eq!(vm.acc, 0.75);
        assert!((vm.pr - 5.0 / 6.0).abs() < 1e-12);
        assert!((vm.re - 0.75).abs() < 1e-12);
        assert!((vm.f1 - 11.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_is_all_ones() {
        let gt = [3usize, 3, 1, 0, 1];
        let prf = per_class_prf(&gt, &gt, 4).unwrap();
        for c in [0, 1, 3] {
            assert_eq!(prf[c], Some((1.0, 1.0, 1.0)));
        }
        assert_eq!(prf[2], None);
        let vm = video_metrics("v", &gt, &gt, 4).unwrap();
        assert_eq!((vm.acc, vm.pr, vm.re, vm.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn absent_class_branches() {
        // class 2: predicted but never true -> RE = 0; class 1: true but
        // never predicted -> PR = 0; class 3: in neither -> not applicable.
        let gt = [0usize, 1, 1, 0];
        let pred = [0usize, 2, 2, 0];
        let prf = per_class_prf(&gt, &pred, 4).unwrap();
        assert_eq!(prf[0], Some((1.0, 1.0, 1.0)));
        assert_eq!(prf[1], Some((0.0, 0.0, 0.0)));
        assert_eq!(prf[2], Some((0.0, 0.0, 0.0)));
        assert_eq!(prf[3], None);
    }

    #[test]
    fn matches_confusion_matrix_oracle_on_random_instances() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move |bound: usize| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % bound as u64) as usize
        };
        for _ in 0..300 {
            let classes = 2 + next(6);
            let frames = 1 + next(40);
            let gt: Vec<usize> = (0..frames).map(|_| next(classes)).collect();
            let pred: Vec<usize> = (0..frames).map(|_| next(classes)).collect();
            let ours = per_class_prf(&gt, &pred, classes).unwrap();
            let reference = oracle_prf(&gt, &pred, classes);
            for c in 0..classes {
                match (ours[c], reference[c]) {
                    (None, None) => {}
                    (Some(a), Some(b)) => {
                        assert!((a.0 - b.0).abs() < 1e-12);
                        assert!((a.1 - b.1).abs() < 1e-12);
                        assert!((a.2 - b.2).abs() < 1e-12);
                    }
                    other => panic!("applicability mismatch: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn relabeling_consistency() {
        let gt = [0usize, 1, 2, 1, 0, 2, 2];
        let pred = [0usize, 2, 2, 1, 1, 0, 2];
        let vm = video_metrics("v", &gt, &pred, 3).unwrap();
        // Swap labels 0 <-> 2 everywhere.
        let swap = |l: usize| match l {
            0 => 2,
            2 => 0,
            other => other,
        };
        let gt2: Vec<usize> = gt.iter().map(|&l| swap(l)).collect();
        let pred2: Vec<usize> = pred.iter().map(|&l| swap(l)).collect();
        let vm2 = video_metrics("v", &gt2, &pred2, 3).unwrap();
        assert!((vm.acc - vm2.acc).abs() < 1e-12);
        assert!((vm.pr - vm2.pr).abs() < 1e-12);
        assert!((vm.re - vm2.re).abs() < 1e-12);
        assert!((vm.f1 - vm2.f1).abs() < 1e-12);
    }

    #[test]
    fn dataset_moments() {
        let v = |id: &str, acc: f64| VideoMetrics {
            video_id: id.into(),
            acc,
            pr: acc,
            re: acc,
            f1: acc,
        };
        let single = dataset_metrics(&[v("a", 0.7)]).unwrap();
        assert_eq!(single.mean.acc, 0.7);
        assert_eq!(single.std.acc, 0.0);

        let pair = dataset_metrics(&[v("a", 0.4), v("b", 0.6)]).unwrap();
        assert!((pair.mean.acc - 0.5).abs() < 1e-12);
        assert!((pair.std.acc - 0.02f64.sqrt()).abs() < 1e-12);

        // Permutation invariance.
        let swapped = dataset_metrics(&[v("b", 0.6), v("a", 0.4)]).unwrap();
        assert_eq!(pair.mean.acc, swapped.mean.acc);
        assert_eq!(pair.std.acc, swapped.std.acc);

        assert!(matches!(dataset_metrics(&[]), Err(EvalError::Empty)));
    }

    #[test]
    fn all_values_in_unit_interval() {
        let gt = [0usize, 1, 2, 3, 4, 0, 1];
        let pred = [4usize, 3, 2, 1, 0, 0, 0];
        let vm = video_metrics("v", &gt, &pred, 5).unwrap();
        for v in [vm.acc, vm.pr, vm.re, vm.f1] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
