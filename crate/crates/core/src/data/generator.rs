//! Synthetic hierarchical-workflow generator.
//!
//! Each video walks the phase list left to right (optionally skipping
//! interior phases), fills every visited phase with step segments drawn from
//! that phase's allowed steps, and emits per-frame observations
//!
//! ```text
//! obs[t] = step_mean[s_t] + phase_mean[p_t] + N(0, noise_sigma²·I)
//! ```
//!
//! Confusable step pairs share a step mean separated by a small offset, so
//! steps that perform similar actions produce near-identical observations;
//! cross-phase pairs are the confusions that phase supervision can resolve.
//! Ambiguous steps (those occurring in several phases) are never placed as
//! the first or last segment of a phase when the phase has any unambiguous
//! step, which keeps lookup-based phase derivation exact.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, VideoRecord};
use crate::ontology::Ontology;

/// Segment durations are floor + geometric with this mean.
const SEGMENT_FLOOR: usize = 3;
const SEGMENT_MEAN: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Ontology reference: `builtin:cataracts` or a JSON file path.
    pub ontology: String,
    pub num_videos: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub obs_dim: usize,
    pub mean_scale: f64,
    pub noise_sigma: f64,
    pub confusable_pairs: Vec<(usize, usize)>,
    pub confusable_offset: f64,
    pub phase_skip_prob: f64,
    pub seed: u64,
    /// Train/val/test sizes; defaults to a 60/15/25 split.
    #[serde(default)]
    pub split: Option<SplitCounts>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            ontology: "builtin:cataracts".into(),
            num_videos: 40,
            frames_min: 200,
            frames_max: 400,
            obs_dim: 32,
            mean_scale: 1.0,
            noise_sigma: 2.0,
            // Cross-phase lookalikes (resolvable from phase supervision) and
            // same-phase lookalikes (not resolvable), over the cataract steps.
            confusable_pairs: vec![
                (5, 11),  // Capsulorhexis / Preparing Implant
                (1, 16),  // Toric Marking / Suturing
                (7, 12),  // Nucleus Breaking / Manual Aspiration
                (2, 17),  // Implant Ejection / Sealing Control
                (8, 9),   // Phacoemulsification / Vitrectomy (same phase)
                (13, 14), // Implantation / Positioning (same phase)
            ],
            confusable_offset: 0.25,
            phase_skip_prob: 0.15,
            seed: 7,
            split: None,
        }
    }
}

impl GeneratorConfig {
    pub fn split_counts(&self) -> SplitCounts {
        self.split.unwrap_or_else(|| {
            let train = self.num_videos * 6 / 10;
            let val = self.num_videos * 3 / 20;
            SplitCounts {
                train,
                val,
                test: self.num_videos - train - val,
            }
        })
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<(), DataError> {
        if self.num_videos == 0 {
            return Err(DataError::BadConfig("num_videos must be >= 1".into()));
        }
        if self.frames_min > self.frames_max || self.frames_min == 0 {
            return Err(DataError::BadConfig(format!(
                "need 1 <= frames_min <= frames_max, got {}..{}",
                self.frames_min, self.frames_max
            )));
        }
        if self.frames_min < SEGMENT_FLOOR * ontology.num_phases() {
            return Err(DataError::BadConfig(format!(
                "frames_min {} cannot cover {} phases at {} frames each",
                self.frames_min,
                ontology.num_phases(),
                SEGMENT_FLOOR
            )));
        }
        if self.obs_dim == 0 {
            return Err(DataError::BadConfig("obs_dim must be >= 1".into()));
        }
        if self.noise_sigma <= 0.0 {
            return Err(DataError::BadConfig("noise_sigma must be > 0".into()));
        }
        if self.mean_scale <= 0.0 {
            return Err(DataError::BadConfig("mean_scale must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.phase_skip_prob) {
            return Err(DataError::BadConfig(
                "phase_skip_prob must lie in [0, 1)".into(),
            ));
        }
        for &(a, b) in &self.confusable_pairs {
            if a == b {
                return Err(DataError::BadConfig(format!(
                    "confusable pair ({a}, {b}) is not a pair of distinct steps"
                )));
            }
            if a >= ontology.num_steps() || b >= ontology.num_steps() {
                return Err(DataError::BadConfig(format!(
                    "confusable pair ({a}, {b}) out of range for {} steps",
                    ontology.num_steps()
                )));
            }
        }
        let s = self.split_counts();
        if s.train + s.val + s.test > self.num_videos {
            return Err(DataError::BadConfig(format!(
                "split {}+{}+{} exceeds num_videos {}",
                s.train, s.val, s.test, self.num_videos
            )));
        }
        Ok(())
    }
}

/// The per-step and per-phase observation means implied by the config seed.
/// Exposed so tests and diagnostics can reconstruct the generative model.
pub fn class_means(ontology: &Ontology, cfg: &GeneratorConfig) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.mean_scale).expect("validated sigma");
    let mut step_means =
        Array2::from_shape_fn((ontology.num_steps(), cfg.obs_dim), |_| normal.sample(&mut rng));
    let phase_means =
        Array2::from_shape_fn((ontology.num_phases(), cfg.obs_dim), |_| normal.sample(&mut rng));
    let unit = Normal::new(0.0, 1.0).unwrap();
    for &(a, b) in &cfg.confusable_pairs {
        let mut dir: Vec<f64> = (0..cfg.obs_dim).map(|_| unit.sample(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        dir.iter_mut().for_each(|v| *v /= norm);
        for d in 0..cfg.obs_dim {
            step_means[[b, d]] = step_means[[a, d]] + cfg.confusable_offset * dir[d];
        }
    }
    (step_means, phase_means)
}

fn geometric_extra(rng: &mut ChaCha8Rng) -> usize {
    // Failures before first success at p = floor/(mean-floor+floor) chosen so
    // floor + extra has mean SEGMENT_MEAN.
    let p = 1.0 / (SEGMENT_MEAN - SEGMENT_FLOOR as f64 + 1.0);
    let u: f64 = rng.gen();
    let extra = ((1.0 - u).ln() / (1.0 - p).ln()).floor();
    (extra as usize).min(200)
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [usize]) -> usize {
    pool[rng.gen_range(0..pool.len())]
}

/// Phase budgets proportional to random weights, each at least the segment
/// floor, summing exactly to `total`.
fn phase_budgets(rng: &mut ChaCha8Rng, total: usize, phases: usize) -> Vec<usize> {
    let weights: Vec<f64> = (0..phases).map(|_| rng.gen_range(0.5..1.5)).collect();
    let sum: f64 = weights.iter().sum();
    let mut budgets: Vec<usize> = weights
        .iter()
        .map(|w| ((total as f64 * w / sum).floor() as usize).max(SEGMENT_FLOOR))
        .collect();
    let mut current: usize = budgets.iter().sum();
    let mut i = 0;
    while current < total {
        budgets[i % phases] += 1;
        current += 1;
        i += 1;
    }
    while current > total {
        let j = (0..phases).max_by_key(|&j| budgets[j]).unwrap();
        debug_assert!(budgets[j] > SEGMENT_FLOOR);
        budgets[j] -= 1;
        current -= 1;
    }
    budgets
}

/// Step segments filling `budget` frames of one phase. The first and last
/// segments avoid ambiguous steps whenever the phase has an unambiguous one.
fn phase_segments(
    rng: &mut ChaCha8Rng,
    allowed: &[usize],
    unambiguous: &[usize],
    budget: usize,
) -> Vec<(usize, usize)> {
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut remaining = budget;
    while remaining > 0 {
        let step = match segments.last() {
            None => {
                if unambiguous.is_empty() {
                    pick(rng, allowed)
                } else {
                    pick(rng, unambiguous)
                }
            }
            Some(&(prev, _)) => {
                let pool: Vec<usize> = allowed.iter().copied().filter(|&s| s != prev).collect();
                if pool.is_empty() {
                    prev
                } else {
                    pick(rng, &pool)
                }
            }
        };
        let duration = (SEGMENT_FLOOR + geometric_extra(rng)).min(remaining);
        segments.push((step, duration));
        remaining -= duration;
    }
    let last = segments.len() - 1;
    let (last_step, _) = segments[last];
    if !unambiguous.is_empty() && !unambiguous.contains(&last_step) {
        let prev = if last > 0 { Some(segments[last - 1].0) } else { None };
        let pool: Vec<usize> = unambiguous
            .iter()
            .copied()
            .filter(|&s| Some(s) != prev)
            .collect();
        segments[last].0 = if pool.is_empty() {
            pick(rng, unambiguous)
        } else {
            pick(rng, &pool)
        };
    }
    segments
}

/// Generates a fully labeled synthetic dataset: every record carries both
/// step and phase ground truth and has delta_step set. Deterministic per
/// seed; each video draws from its own RNG stream, so generation could be
/// parallelized without changing output.
pub fn generate_synthetic_dataset(
    ontology: &Ontology,
    cfg: &GeneratorConfig,
) -> Result<Vec<VideoRecord>, DataError> {
    let violations = ontology.validate();
    if !violations.is_empty() {
        return Err(DataError::Ontology(crate::ontology::OntologyError::Invalid(
            violations,
        )));
    }
    cfg.validate(ontology)?;
    let (step_means, phase_means) = class_means(ontology, cfg);
    let phases = ontology.num_phases();
    let allowed_by_phase: Vec<Vec<usize>> = (0..phases).map(|p| ontology.steps_of_phase(p)).collect();
    let unambiguous_by_phase: Vec<Vec<usize>> = allowed_by_phase
        .iter()
        .map(|steps| {
            steps
                .iter()
                .copied()
                .filter(|&s| !ontology.is_ambiguous(s))
                .collect()
        })
        .collect();

    let mut videos = Vec::with_capacity(cfg.num_videos);
    for v in 0..cfg.num_videos {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1 + v as u64);

        let total = rng.gen_range(cfg.frames_min..=cfg.frames_max);
        // First and last phases always happen; interior ones may be skipped.
        let present: Vec<usize> = (0..phases)
            .filter(|&p| {
                p == 0 || p == phases - 1 || rng.gen::<f64>() >= cfg.phase_skip_prob
            })
            .collect();
        let budgets = phase_budgets(&mut rng, total, present.len());

        let mut step_labels = Vec::with_capacity(total);
        let mut phase_labels = Vec::with_capacity(total);
        for (&phase, &budget) in present.iter().zip(&budgets) {
            let segments = phase_segments(
                &mut rng,
                &allowed_by_phase[phase],
                &unambiguous_by_phase[phase],
                budget,
            );
            for (step, duration) in segments {
                for _ in 0..duration {
                    step_labels.push(step);
                    phase_labels.push(phase);
                }
            }
        }
        debug_assert_eq!(step_labels.len(), total);

        let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
        let mut obs = Array2::zeros((total, cfg.obs_dim));
        for t in 0..total {
            let s = step_labels[t];
            let p = phase_labels[t];
            for d in 0..cfg.obs_dim {
                obs[[t, d]] =
                    step_means[[s, d]] + phase_means[[p, d]] + noise.sample(&mut rng);
            }
        }

        videos.push(VideoRecord {
            video_id: format!("vid{v:04}"),
            obs,
            step_labels: Some(step_labels),
            phase_labels: Some(phase_labels),
            delta_step: true,
        });
    }
    Ok(videos)
}
