//! Command-line interface.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
//! divergence or failed gradient check.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::data::{generate_synthetic_dataset, write_dataset, DataError, Dataset, GeneratorConfig, Split};
use crate::model::{ModelConfig, ModelError};
use crate::ontology::{resolve_ontology_ref, OntologyError};
use crate::train::{
    evaluate_model, fit, load_checkpoint, log_to_jsonl, save_checkpoint, TrainConfig, TrainError,
};

use super::{
    default_check_config, emit_report, model_grad_check, results_to_markdown, run_experiment,
    ExperimentSpec, HarnessError, ReportFormat, ABSENT_CLASS_POLICY, DEFAULT_CHECK_FRAMES,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: i32,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

fn config_err(message: impl Into<String>) -> CliError {
    CliError {
        message: message.into(),
        code: EXIT_CONFIG,
    }
}

fn train_code(err: &TrainError) -> i32 {
    match err {
        TrainError::Divergence { .. } => EXIT_NUMERIC,
        TrainError::BadConfig(_) => EXIT_CONFIG,
        TrainError::Autodiff(crate::autodiff::AutodiffError::NonFinite { .. }) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

impl From<HarnessError> for CliError {
    fn from(err: HarnessError) -> Self {
        let code = match &err {
            HarnessError::Spec(_) | HarnessError::Json(_) => EXIT_CONFIG,
            HarnessError::Run { source, .. } => train_code(source),
            HarnessError::Train(t) => train_code(t),
            HarnessError::Model(ModelError::BadConfig(_)) => EXIT_CONFIG,
            HarnessError::Data(DataError::BadConfig(_)) => EXIT_CONFIG,
            HarnessError::Ontology(OntologyError::Invalid(_))
            | HarnessError::Ontology(OntologyError::Json(_)) => EXIT_CONFIG,
            _ => EXIT_DATA,
        };
        CliError {
            message: err.to_string(),
            code,
        }
    }
}

impl From<DataError> for CliError {
    fn from(err: DataError) -> Self {
        CliError::from(HarnessError::Data(err))
    }
}

impl From<TrainError> for CliError {
    fn from(err: TrainError) -> Self {
        CliError::from(HarnessError::Train(err))
    }
}

impl From<ModelError> for CliError {
    fn from(err: ModelError) -> Self {
        CliError::from(HarnessError::Model(err))
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError {
            message: err.to_string(),
            code: EXIT_DATA,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "stepseg",
    about = "Weakly supervised temporal step segmentation: synthetic datasets, \
             training with the step-phase dependency loss, evaluation, and study grids",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (videos + manifest) from a generator config.
    GenData {
        /// Generator config JSON; defaults to the built-in desk-scale dataset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on a manifest's train split, honoring per-video regimes.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Train config JSON; defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model config JSON; defaults (sized to the ontology) otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the train config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on one split of a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment spec (weak-supervision grid or phase-count sweep).
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Render the prediction ribbon SVG for one video.
    Plot {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        video: PathBuf,
        #[arg(long, default_value = "builtin:cataracts")]
        ontology: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        /// Model config JSON; defaults to the standard check configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_CHECK_FRAMES)]
        frames: usize,
    },
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| config_err(format!("cannot parse {what} {}: {e}", path.display())))
}

fn cmd_gen_data(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg: GeneratorConfig = match &config {
        Some(path) => load_json(path, "generator config")?,
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let base = config
        .as_deref()
        .and_then(Path::parent)
        .unwrap_or(Path::new("."));
    let ontology = resolve_ontology_ref(&cfg.ontology, base).map_err(HarnessError::Ontology)?;
    let videos = generate_synthetic_dataset(&ontology, &cfg)?;
    let manifest = write_dataset(&out, &cfg, &videos)?;
    let counts = cfg.split_counts();
    println!(
        "wrote {} videos ({} train / {} val / {} test) and {}",
        counts.train + counts.val + counts.test,
        counts.train,
        counts.val,
        counts.test,
        manifest.display()
    );
    Ok(())
}

fn cmd_train(
    manifest: PathBuf,
    config: Option<PathBuf>,
    model: Option<PathBuf>,
    out: PathBuf,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let dataset = Dataset::load(&manifest)?;
    let mut train_cfg: TrainConfig = match &config {
        Some(path) => load_json(path, "train config")?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        train_cfg.seed = seed;
    }
    let model_cfg: ModelConfig = match &model {
        Some(path) => load_json(path, "model config")?,
        None => {
            let sample = dataset
                .videos
                .first()
                .ok_or_else(|| config_err("manifest lists no videos"))?;
            ModelConfig {
                obs_dim: sample.0.obs_dim(),
                num_steps: dataset.ontology.num_steps(),
                ..Default::default()
            }
        }
    };
    let train_records = dataset.train_records()?;
    let val = dataset.split(Split::Val);
    let outcome = fit(
        &train_records,
        &val,
        &dataset.ontology,
        model_cfg,
        &train_cfg,
    )?;
    std::fs::create_dir_all(&out)?;
    let ckpt = out.join("checkpoint.hwck");
    save_checkpoint(&outcome.best_state, &ckpt)?;
    std::fs::write(out.join("train_log.jsonl"), log_to_jsonl(&outcome.log))?;
    let best = &outcome.log[outcome.best_epoch];
    println!(
        "best epoch {}: val acc {:.4}, F1 {:.4}; checkpoint at {}",
        outcome.best_epoch,
        best.val_acc,
        best.val_f1,
        ckpt.display()
    );
    Ok(())
}

fn parse_split(name: &str) -> Result<Split, CliError> {
    match name {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(config_err(format!(
            "unknown split {other:?} (train|val|test)"
        ))),
    }
}

fn cmd_eval(
    checkpoint: PathBuf,
    manifest: PathBuf,
    split: String,
    format: String,
    out: PathBuf,
) -> Result<(), CliError> {
    let split = parse_split(&split)?;
    let state = load_checkpoint(&checkpoint)?;
    let dataset = Dataset::load(&manifest)?;
    let videos = dataset.split(split);
    if videos.is_empty() {
        return Err(CliError::from(TrainError::EmptySplit("requested")));
    }
    let (per_video, aggregate) = evaluate_model(&state, &videos)?;
    std::fs::create_dir_all(&out)?;
    let path = match format.as_str() {
        "json" => {
            let doc = serde_json::json!({
                "split": split.to_string(),
                "absent_class_policy": ABSENT_CLASS_POLICY,
                "aggregate": aggregate,
                "videos": per_video,
            });
            let path = out.join("metrics.json");
            std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap() + "\n")?;
            path
        }
        "csv" => {
            let mut text = String::from("video_id,acc,pr,re,f1\n");
            for v in &per_video {
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    v.video_id, v.acc, v.pr, v.re, v.f1
                ));
            }
            text.push_str(&format!(
                "mean,{},{},{},{}\n",
                aggregate.mean.acc, aggregate.mean.pr, aggregate.mean.re, aggregate.mean.f1
            ));
            text.push_str(&format!(
                "std,{},{},{},{}\n",
                aggregate.std.acc, aggregate.std.pr, aggregate.std.re, aggregate.std.f1
            ));
            let path = out.join("metrics.csv");
            std::fs::write(&path, text)?;
            path
        }
        other => return Err(config_err(format!("unknown format {other:?} (json|csv)"))),
    };
    println!(
        "{} split: acc {:.4} ± {:.4}, F1 {:.4} ± {:.4} over {} videos -> {}",
        split,
        aggregate.mean.acc,
        aggregate.std.acc,
        aggregate.mean.f1,
        aggregate.std.f1,
        aggregate.num_videos,
        path.display()
    );
    Ok(())
}

fn cmd_grid(config: PathBuf, out: PathBuf, format: String) -> Result<(), CliError> {
    let spec = ExperimentSpec::load(&config)?;
    let format: ReportFormat = format.parse().map_err(config_err)?;
    let results = run_experiment(&spec)?;
    let path = emit_report(&results, format, &out)?;
    print!("{}", results_to_markdown(&results));
    println!("report written to {}", path.display());
    Ok(())
}

fn cmd_plot(
    checkpoint: PathBuf,
    video: PathBuf,
    ontology: String,
    out: PathBuf,
) -> Result<(), CliError> {
    let state = load_checkpoint(&checkpoint)?;
    let record = crate::data::read_video_file(&video)?;
    let base = video.parent().unwrap_or(Path::new("."));
    let ontology = resolve_ontology_ref(&ontology, base).map_err(HarnessError::Ontology)?;
    let gt_steps = record
        .step_labels
        .as_ref()
        .ok_or_else(|| CliError::from(DataError::MissingLabels(record.video_id.clone())))?;
    let gt_phases = match &record.phase_labels {
        Some(p) => p.clone(),
        None => ontology
            .derive_phase_labels(gt_steps)
            .map_err(HarnessError::Ontology)?,
    };
    let pred = crate::model::predict_steps(&state, &record.obs)?;
    let derived = ontology
        .derive_phase_labels(&pred)
        .map_err(HarnessError::Ontology)?;
    std::fs::create_dir_all(&out)?;
    let path = out.join(format!("{}_ribbon.svg", record.video_id));
    super::emit_ribbon_svg(&ontology, gt_steps, &pred, &gt_phases, &derived, &path)?;
    println!("ribbon written to {}", path.display());
    Ok(())
}

fn cmd_gradcheck(config: Option<PathBuf>, seed: u64, frames: usize) -> Result<(), CliError> {
    let cfg: ModelConfig = match &config {
        Some(path) => load_json(path, "model config")?,
        None => default_check_config(),
    };
    if frames == 0 {
        return Err(config_err("frames must be >= 1"));
    }
    let report = model_grad_check(&cfg, frames, seed)?;
    for entry in &report.entries {
        println!(
            "{:32} {:>12.3e}  (threshold {:.0e})  {}",
            entry.name,
            entry.error,
            entry.threshold,
            if entry.passed() { "ok" } else { "FAIL" }
        );
    }
    println!("max full-model relative error: {:.3e}", report.max_full_model());
    if report.passed() {
        Ok(())
    } else {
        Err(CliError {
            message: "gradient check failed".into(),
            code: EXIT_NUMERIC,
        })
    }
}

/// Parses argv and runs the requested command, translating failures into
/// exit codes.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { config, out, seed } => cmd_gen_data(config, out, seed),
        Command::Train {
            manifest,
            config,
            model,
            out,
            seed,
        } => cmd_train(manifest, config, model, out, seed),
        Command::Eval {
            checkpoint,
            manifest,
            split,
            format,
            out,
        } => cmd_eval(checkpoint, manifest, split, format, out),
        Command::Grid {
            config,
            out,
            format,
        } => cmd_grid(config, out, format),
        Command::Plot {
            checkpoint,
            video,
            ontology,
            out,
        } => cmd_plot(checkpoint, video, ontology, out),
        Command::Gradcheck {
            config,
            seed,
            frames,
        } => cmd_gradcheck(config, seed, frames),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err.message);
            err.code
        }
    }
}
