//! Experiment harness: weak-supervision grids (FSA vs DEP), phase-count
//! sweeps, report emission, and prediction ribbon rendering.

pub mod cli;
mod gradcheck;
mod report;
mod ribbon;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    assign_annotation_regime, generate_synthetic_dataset, DataError, Dataset, GeneratorConfig,
    Regime, Split, VideoRecord,
};
use crate::eval::{EvalError, MetricRow};
use crate::losses::LossError;
use crate::model::{ModelConfig, ModelError};
use crate::ontology::{Ontology, OntologyError};
use crate::train::{evaluate_model, fit, TrainConfig, TrainError};

pub use gradcheck::{
    default_check_config, model_grad_check, GradCheckEntry, GradCheckReport,
    DEFAULT_CHECK_FRAMES, FULL_MODEL_THRESHOLD, LINEAR_OP_THRESHOLD,
};
pub use report::{emit_report, results_to_csv, results_to_json, results_to_markdown, ReportFormat};
pub use ribbon::emit_ribbon_svg;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad experiment spec: {0}")]
    Spec(String),
    #[error("run {config} failed: {source}")]
    Run {
        config: String,
        #[source]
        source: Box<TrainError>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "FSA")]
    Fsa,
    #[serde(rename = "DEP")]
    Dep,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Fsa => write!(f, "FSA"),
            Mode::Dep => write!(f, "DEP"),
        }
    }
}

/// How many phase-annotated videos accompany the k step-annotated ones:
/// `"rest"` uses every remaining training video; an explicit list drives the
/// phase-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MPolicy {
    Explicit(Vec<usize>),
    Named(String),
}

impl Default for MPolicy {
    fn default() -> Self {
        MPolicy::Named("rest".into())
    }
}

impl MPolicy {
    fn is_rest(&self) -> Result<bool, HarnessError> {
        match self {
            MPolicy::Named(name) if name == "rest" => Ok(true),
            MPolicy::Named(name) => Err(HarnessError::Spec(format!(
                "unknown m_policy {name:?} (expected \"rest\" or a list)"
            ))),
            MPolicy::Explicit(_) => Ok(false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// FSA vs DEP across k values, phase videos = rest (Tables III/V shape).
    WeakSupervision,
    /// Fixed k, varying number of phase videos (Tables IV/VI shape).
    PhaseCount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    /// Synthetic dataset definition; ignored when `manifest` is set.
    pub generator: GeneratorConfig,
    /// Optional path to an existing dataset manifest.
    pub manifest: Option<String>,
    /// Overrides the generator seed when set.
    pub dataset_seed: Option<u64>,
    /// One full run (regime assignment + init + training) per seed.
    pub model_seeds: Vec<u64>,
    pub k_values: Vec<usize>,
    pub m_policy: MPolicy,
    pub modes: Vec<Mode>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            experiment: ExperimentKind::WeakSupervision,
            generator: GeneratorConfig::default(),
            manifest: None,
            dataset_seed: None,
            model_seeds: vec![1, 2, 3],
            k_values: vec![3, 6, 12, 18],
            m_policy: MPolicy::default(),
            modes: vec![Mode::Fsa, Mode::Dep],
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Dataset splits resolved into memory for grid runs.
pub struct GridDataset {
    pub ontology: Ontology,
    pub train: Vec<VideoRecord>,
    pub val: Vec<VideoRecord>,
    pub test: Vec<VideoRecord>,
}

impl ExperimentSpec {
    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let spec: ExperimentSpec = serde_json::from_str(&text)?;
        Ok(spec)
    }

    /// Resolves the dataset: loads the manifest when given, otherwise
    /// generates the synthetic dataset and splits it in generation order.
    pub fn materialize_dataset(&self) -> Result<GridDataset, HarnessError> {
        if let Some(manifest) = &self.manifest {
            let ds = Dataset::load(std::path::Path::new(manifest))?;
            let by = |split: Split| -> Vec<VideoRecord> {
                ds.videos
                    .iter()
                    .filter(|(_, s, _)| *s == split)
                    .map(|(v, _, _)| v.clone())
                    .collect()
            };
            return Ok(GridDataset {
                train: by(Split::Train),
                val: by(Split::Val),
                test: by(Split::Test),
                ontology: ds.ontology,
            });
        }
        let mut gen_cfg = self.generator.clone();
        if let Some(seed) = self.dataset_seed {
            gen_cfg.seed = seed;
        }
        let ontology = crate::ontology::resolve_ontology_ref(
            &gen_cfg.ontology,
            std::path::Path::new("."),
        )?;
        let videos = generate_synthetic_dataset(&ontology, &gen_cfg)?;
        let counts = gen_cfg.split_counts();
        let train = videos[..counts.train].to_vec();
        let val = videos[counts.train..counts.train + counts.val].to_vec();
        let test =
            videos[counts.train + counts.val..counts.train + counts.val + counts.test].to_vec();
        Ok(GridDataset {
            ontology,
            train,
            val,
            test,
        })
    }

    fn validate(&self, n_train: usize) -> Result<(), HarnessError> {
        if self.model_seeds.is_empty() {
            return Err(HarnessError::Spec("model_seeds is empty".into()));
        }
        if self.k_values.is_empty() {
            return Err(HarnessError::Spec("k_values is empty".into()));
        }
        if self.modes.is_empty() {
            return Err(HarnessError::Spec("modes is empty".into()));
        }
        for &k in &self.k_values {
            if k == 0 || k > n_train {
                return Err(HarnessError::Spec(format!(
                    "k = {k} outside 1..={n_train} training videos"
                )));
            }
        }
        Ok(())
    }
}

/// Result of one (mode, k, m, seed) training run, evaluated on the test
/// split: mean and cross-video standard deviation of each metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub mean: MetricRow,
    pub std: MetricRow,
    pub best_epoch: usize,
}

/// One grid row: a (model, k, m) configuration aggregated over seeds. The
/// row mean averages per-seed means; the row std averages the per-seed
/// cross-video standard deviations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub k: usize,
    pub m: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunResult>,
    pub mean: MetricRow,
    pub std: MetricRow,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridResults {
    /// Policy note for per-video absent classes, carried into every report.
    pub absent_class_policy: String,
    pub rows: Vec<ResultRow>,
}

pub const ABSENT_CLASS_POLICY: &str = "classes absent from both gt and prediction in a video are \
excluded from that video's class average; PR or RE with an empty denominator is 0";

/// FNV-1a over the canonical spec JSON; lets every row name the exact
/// configuration that produced it.
fn spec_hash(spec: &ExperimentSpec) -> String {
    let canonical = serde_json::to_string(spec).expect("spec serializes");
    let mut h = 0xcbf29ce484222325u64;
    for b in canonical.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

struct Cell {
    mode: Mode,
    k: usize,
    m: usize,
}

fn run_cell_seed(
    spec: &ExperimentSpec,
    data: &GridDataset,
    cell: &Cell,
    seed: u64,
) -> Result<RunResult, HarnessError> {
    let context = format!("{} k={} m={} seed={}", cell.mode, cell.k, cell.m, seed);
    let run = || -> Result<RunResult, TrainError> {
        let assigned = assign_annotation_regime(&data.train, cell.k, cell.m, seed)?;
        let train: Vec<(VideoRecord, Regime)> = assigned
            .into_iter()
            .filter(|(_, r)| *r != Regime::Unlabeled)
            .collect();
        let val: Vec<&VideoRecord> = data.val.iter().collect();
        let mut train_cfg = spec.train;
        train_cfg.seed = seed;
        let mut model_cfg = spec.model;
        model_cfg.num_steps = data.ontology.num_steps();
        let outcome = fit(&train, &val, &data.ontology, model_cfg, &train_cfg)?;
        let test: Vec<&VideoRecord> = data.test.iter().collect();
        let (_, aggregate) = evaluate_model(&outcome.best_state, &test)?;
        Ok(RunResult {
            seed,
            mean: aggregate.mean,
            std: aggregate.std,
            best_epoch: outcome.best_epoch,
        })
    };
    run().map_err(|e| HarnessError::Run {
        config: context,
        source: Box::new(e),
    })
}

fn aggregate_rows(
    spec: &ExperimentSpec,
    cells: Vec<Cell>,
    results: Vec<RunResult>,
) -> GridResults {
    let hash = spec_hash(spec);
    let seeds_per_cell = spec.model_seeds.len();
    let mut rows = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let runs: Vec<RunResult> =
            results[i * seeds_per_cell..(i + 1) * seeds_per_cell].to_vec();
        let n = runs.len() as f64;
        let mut mean = MetricRow::default();
        let mut std = MetricRow::default();
        for run in &runs {
            mean.acc += run.mean.acc / n;
            mean.pr += run.mean.pr / n;
            mean.re += run.mean.re / n;
            mean.f1 += run.mean.f1 / n;
            std.acc += run.std.acc / n;
            std.pr += run.std.pr / n;
            std.re += run.std.re / n;
            std.f1 += run.std.f1 / n;
        }
        rows.push(ResultRow {
            model: cell.mode.to_string(),
            k: cell.k,
            m: cell.m,
            seeds: spec.model_seeds.clone(),
            runs,
            mean,
            std,
            config_hash: hash.clone(),
        });
    }
    GridResults {
        absent_class_policy: ABSENT_CLASS_POLICY.into(),
        rows,
    }
}

fn run_cells(
    spec: &ExperimentSpec,
    data: &GridDataset,
    cells: Vec<Cell>,
) -> Result<GridResults, HarnessError> {
    // One job per (cell, seed); rayon preserves input order on collect, so
    // the merged results are deterministic regardless of completion order.
    let jobs: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, _)| spec.model_seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Result<Vec<RunResult>, HarnessError> = jobs
        .par_iter()
        .map(|&(i, seed)| run_cell_seed(spec, data, &cells[i], seed))
        .collect();
    Ok(aggregate_rows(spec, cells, results?))
}

/// FSA vs DEP across the requested k values. DEP rows take all remaining
/// training videos as phase supervision; a DEP cell with no remaining videos
/// (k = n) is skipped.
pub fn run_weak_supervision_grid(
    spec: &ExperimentSpec,
    data: &GridDataset,
) -> Result<GridResults, HarnessError> {
    spec.validate(data.train.len())?;
    if !spec.m_policy.is_rest()? {
        return Err(HarnessError::Spec(
            "the weak-supervision grid uses m_policy \"rest\"".into(),
        ));
    }
    let n = data.train.len();
    let mut cells = Vec::new();
    for &k in &spec.k_values {
        for &mode in &spec.modes {
            match mode {
                Mode::Fsa => cells.push(Cell { mode, k, m: 0 }),
                Mode::Dep => {
                    let m = n - k;
                    if m >= 1 {
                        cells.push(Cell { mode, k, m });
                    }
                }
            }
        }
    }
    run_cells(spec, data, cells)
}

/// Fixed k, sweeping the number of phase-annotated videos. An m of zero is
/// always included as the FSA baseline row; with the "rest" policy the sweep
/// is {0, n−k}.
pub fn run_phase_count_sweep(
    spec: &ExperimentSpec,
    data: &GridDataset,
) -> Result<GridResults, HarnessError> {
    spec.validate(data.train.len())?;
    if spec.k_values.len() != 1 {
        return Err(HarnessError::Spec(format!(
            "phase-count sweep needs exactly one k, got {:?}",
            spec.k_values
        )));
    }
    let k = spec.k_values[0];
    let n = data.train.len();
    let requested: Vec<usize> = if spec.m_policy.is_rest()? {
        vec![n - k]
    } else if let MPolicy::Explicit(list) = &spec.m_policy {
        list.clone()
    } else {
        unreachable!()
    };
    for &m in &requested {
        if k + m > n {
            return Err(HarnessError::Spec(format!(
                "m = {m} with k = {k} exceeds {n} training videos"
            )));
        }
    }
    let mut m_values = vec![0usize];
    for &m in &requested {
        if m != 0 && !m_values.contains(&m) {
            m_values.push(m);
        }
    }
    let cells: Vec<Cell> = m_values
        .into_iter()
        .map(|m| Cell {
            mode: if m == 0 { Mode::Fsa } else { Mode::Dep },
            k,
            m,
        })
        .collect();
    run_cells(spec, data, cells)
}

/// Dispatches on the spec's experiment kind.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<GridResults, HarnessError> {
    let data = spec.materialize_dataset()?;
    match spec.experiment {
        ExperimentKind::WeakSupervision => run_weak_supervision_grid(spec, &data),
        ExperimentKind::PhaseCount => run_phase_count_sweep(spec, &data),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            generator: GeneratorConfig {
                num_videos: 8,
                frames_min: 40,
                frames_max: 60,
                obs_dim: 6,
                split: Some(crate::data::SplitCounts {
                    train: 5,
                    val: 1,
                    test: 2,
                }),
                ..Default::default()
            },
            model_seeds: vec![1],
            k_values: vec![2],
            model: ModelConfig {
                obs_dim: 6,
                feat_dim: 8,
                encoder_hidden: 8,
                tcn_filters: 8,
                tcn_layers: 2,
                kernel_size: 3,
                num_steps: 19,
            },
            train: TrainConfig {
                epochs: 2,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn grid_produces_expected_cells() {
        let mut spec = tiny_spec();
        spec.k_values = vec![2, 5];
        let data = spec.materialize_dataset().unwrap();
        let results = run_weak_supervision_grid(&spec, &data).unwrap();
        // k=2: FSA + DEP(m=3); k=5: FSA only (m would be 0).
        let summary: Vec<(String, usize, usize)> = results
            .rows
            .iter()
            .map(|r| (r.model.clone(), r.k, r.m))
            .collect();
        assert_eq!(
            summary,
            vec![
                ("FSA".to_string(), 2, 0),
                ("DEP".to_string(), 2, 3),
                ("FSA".to_string(), 5, 0),
            ]
        );
    }

    #[test]
    fn grid_is_deterministic() {
        let spec = tiny_spec();
        let data = spec.materialize_dataset().unwrap();
        let a = run_weak_supervision_grid(&spec, &data).unwrap();
        let b = run_weak_supervision_grid(&spec, &data).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn sweep_includes_fsa_baseline_row() {
        let mut spec = tiny_spec();
        spec.experiment = ExperimentKind::PhaseCount;
        spec.m_policy = MPolicy::Explicit(vec![1, 3]);
        let data = spec.materialize_dataset().unwrap();
        let results = run_phase_count_sweep(&spec, &data).unwrap();
        let summary: Vec<(String, usize)> =
            results.rows.iter().map(|r| (r.model.clone(), r.m)).collect();
        assert_eq!(
            summary,
            vec![
                ("FSA".to_string(), 0),
                ("DEP".to_string(), 1),
                ("DEP".to_string(), 3),
            ]
        );
    }

    #[test]
    fn sweep_m_zero_row_equals_fsa_grid_row() {
        let mut grid_spec = tiny_spec();
        grid_spec.modes = vec![Mode::Fsa];
        let data = grid_spec.materialize_dataset().unwrap();
        let grid = run_weak_supervision_grid(&grid_spec, &data).unwrap();

        let mut sweep_spec = tiny_spec();
        sweep_spec.experiment = ExperimentKind::PhaseCount;
        sweep_spec.m_policy = MPolicy::Explicit(vec![1]);
        let sweep = run_phase_count_sweep(&sweep_spec, &data).unwrap();

        let a = &grid.rows[0];
        let b = &sweep.rows[0];
        assert_eq!(a.mean.f1.to_bits(), b.mean.f1.to_bits());
        assert_eq!(a.mean.acc.to_bits(), b.mean.acc.to_bits());
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut spec = tiny_spec();
        spec.k_values = vec![99];
        let data = tiny_spec().materialize_dataset().unwrap();
        assert!(matches!(
            run_weak_supervision_grid(&spec, &data),
            Err(HarnessError::Spec(_))
        ));

        let mut spec = tiny_spec();
        spec.m_policy = MPolicy::Named("everything".into());
        assert!(matches!(
            run_weak_supervision_grid(&spec, &data),
            Err(HarnessError::Spec(_))
        ));

        let mut spec = tiny_spec();
        spec.experiment = ExperimentKind::PhaseCount;
        spec.m_policy = MPolicy::Explicit(vec![50]);
        assert!(matches!(
            run_phase_count_sweep(&spec, &data),
            Err(HarnessError::Spec(_))
        ));
    }
}
