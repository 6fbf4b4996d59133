//! Result tables as CSV, JSON, and markdown.

use std::path::{Path, PathBuf};

use super::{GridResults, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown format {other:?} (csv|json|md)")),
        }
    }
}

/// CSV with full-precision values (shortest round-trip float formatting),
/// one row per configuration.
pub fn results_to_csv(results: &GridResults) -> String {
    let mut out = String::from(
        "model,k,m,seeds,acc_mean,acc_std,pr_mean,pr_std,re_mean,re_std,f1_mean,f1_std,config_hash\n",
    );
    for row in &results.rows {
        let seeds = row
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join("+");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.model,
            row.k,
            row.m,
            seeds,
            row.mean.acc,
            row.std.acc,
            row.mean.pr,
            row.std.pr,
            row.mean.re,
            row.std.re,
            row.mean.f1,
            row.std.f1,
            row.config_hash,
        ));
    }
    out
}

pub fn results_to_json(results: &GridResults) -> String {
    let mut text = serde_json::to_string_pretty(results).expect("results serialize");
    text.push('\n');
    text
}

/// Markdown table shaped like the study tables: percentages at two decimals
/// with a ± spread column per metric.
pub fn results_to_markdown(results: &GridResults) -> String {
    let pct = |mean: f64, std: f64| format!("{:.2} ± {:.2}", mean * 100.0, std * 100.0);
    let mut out = String::new();
    out.push_str("| Model | #Step | #Phase | ACC | PR | RE | F1 |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for row in &results.rows {
        let phase = if row.m == 0 {
            "-".to_string()
        } else {
            row.m.to_string()
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            row.model,
            row.k,
            phase,
            pct(row.mean.acc, row.std.acc),
            pct(row.mean.pr, row.std.pr),
            pct(row.mean.re, row.std.re),
            pct(row.mean.f1, row.std.f1),
        ));
    }
    out.push_str(&format!("\n_{}_\n", results.absent_class_policy));
    out
}

/// Writes the report in the requested format under `out_dir` and returns the
/// file path.
pub fn emit_report(
    results: &GridResults,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let (name, body) = match format {
        ReportFormat::Csv => ("report.csv", results_to_csv(results)),
        ReportFormat::Json => ("report.json", results_to_json(results)),
        ReportFormat::Markdown => ("report.md", results_to_markdown(results)),
    };
    let path = out_dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}
