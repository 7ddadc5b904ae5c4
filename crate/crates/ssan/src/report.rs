//! JSON run and aggregate reports, plus flat CSV tables for plotting.
//!
//! Every artifact carries the resolved experiment. Wall-clock time lives in
//! the `timing` field only, so two identical runs produce identical files
//! once that field is removed.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ssan_core::eval::{PseudoLabelStats, Summary, WelchResult};
use ssan_core::losses::LossWeights;
use ssan_core::training::{EpochLosses, EpochRecord, TrainConfig};

use crate::cli::ExperimentSpec;
use crate::error::{CliError, Result};

pub const RUN_SCHEMA: &str = "ssan-run/1";
pub const AGGREGATE_SCHEMA: &str = "ssan-aggregate/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source_rows: usize,
    pub labeled_rows: usize,
    pub unlabeled_rows: usize,
    pub source_dim: usize,
    pub target_dim: usize,
    pub classes: usize,
    pub has_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub experiment: ExperimentSpec,
    pub variant: String,
    pub seed: u64,
    /// Configuration of this run, with the variant's switches and seed applied.
    pub config: TrainConfig,
    /// Loss weights after the switches.
    pub effective_weights: LossWeights,
    pub dataset: DatasetSummary,
    /// Accuracy on the unlabeled target rows, when their truth is known.
    pub accuracy: Option<f64>,
    pub final_losses: Option<EpochLosses>,
    pub pseudo_labels: Option<PseudoLabelStats>,
    pub history: Vec<EpochRecord>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    /// Mean and sample standard deviation of `accuracies`.
    pub summary: Option<Summary>,
    /// Welch's t-test of the full method against this variant.
    pub versus_full: Option<WelchResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema: String,
    pub experiment: ExperimentSpec,
    pub variants: Vec<VariantSummary>,
    pub timing: Timing,
}

/// One row of a class-prediction histogram: the mean predicted probability
/// of `predicted_class` over the rows whose true class is `true_class`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    pub variant: String,
    pub seed: u64,
    pub domain: &'static str,
    pub temperature: f64,
    pub true_class: usize,
    pub predicted_class: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelRow {
    pub variant: String,
    pub seed: u64,
    pub stats: PseudoLabelStats,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn config_header(experiment: &ExperimentSpec) -> String {
    format!(
        "# config: {}\n",
        serde_json::to_string(experiment).expect("experiment serializes")
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn aggregate_csv(report: &AggregateReport) -> String {
    let mut out = config_header(&report.experiment);
    out.push_str("variant,runs,mean,std,t,df,p,neg_log_p\n");
    for v in &report.variants {
        let w = v.versus_full;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            v.variant,
            v.accuracies.len(),
            opt(v.summary.map(|s| s.mean)),
            opt(v.summary.map(|s| s.std)),
            opt(w.map(|w| w.t)),
            opt(w.map(|w| w.df)),
            opt(w.map(|w| w.p)),
            opt(w.map(|w| w.neg_log_p)),
        )
        .unwrap();
    }
    out
}

pub fn histograms_csv(experiment: &ExperimentSpec, rows: &[HistogramRow]) -> String {
    let mut out = config_header(experiment);
    out.push_str("variant,seed,domain,temperature,true_class,predicted_class,probability\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.variant, r.seed, r.domain, r.temperature, r.true_class, r.predicted_class, r.probability
        )
        .unwrap();
    }
    out
}

pub fn pseudolabel_csv(experiment: &ExperimentSpec, rows: &[PseudoLabelRow]) -> String {
    let mut out = config_header(experiment);
    out.push_str(
        "variant,seed,both_correct,nn_correct_gs_wrong,gs_correct_nn_wrong,both_wrong_agree,both_wrong_disagree\n",
    );
    for r in rows {
        let s = r.stats;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.variant,
            r.seed,
            s.both_correct,
            s.nn_correct_gs_wrong,
            s.gs_correct_nn_wrong,
            s.both_wrong_agree,
            s.both_wrong_disagree
        )
        .unwrap();
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
