//! Runs a resolved [`ExperimentSpec`]: data preparation per repetition,
//! training of every variant, and all report files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ssan_core::checks;
use ssan_core::data::{self, HdaDataset, LabeledSet, SynthSpec};
use ssan_core::eval::{self, WelchResult};
use ssan_core::training::{self, Ablation, TrainConfig, TrainOutcome};

use crate::checkpoint;
use crate::cli::{DataSource, ExperimentSpec, Mode, TargetFiles};
use crate::error::{CliError, Result};
use crate::features::{self, FeatureFile};
use crate::report::{
    self, AggregateReport, DatasetSummary, HistogramRow, PseudoLabelRow, RunReport, Timing, VariantSummary,
};

/// Name of the full method among the variants.
pub const FULL: &str = "full";
pub const TARGET_ONLY: &str = "target-only";

/// The six configurations compared by `ablate`, in table order.
pub fn ablation_variants() -> [(&'static str, Ablation); 6] {
    let off = Ablation::default();
    [
        (FULL, off),
        ("alpha=0", Ablation { no_soft: true, ..off }),
        ("beta=0", Ablation { no_esa: true, ..off }),
        ("gamma=0", Ablation { no_adv: true, ..off }),
        (
            "no-temperature",
            Ablation {
                no_temperature: true,
                ..off
            },
        ),
        ("no-gs", Ablation { no_gs: true, ..off }),
    ]
}

/// What a finished experiment produced, for printing.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Aggregate(Box<AggregateReport>),
    Synthesized(PathBuf),
    GradientCheck(Vec<checks::CheckResult>),
}

enum Loaded {
    Synthetic(SynthSpec),
    Pool {
        source: LabeledSet,
        pool: LabeledSet,
        classes: usize,
    },
    Fixed(HdaDataset),
}

fn labeled_set(file: FeatureFile, path: &Path) -> Result<LabeledSet> {
    let y = file.require_labels(path)?;
    Ok(LabeledSet::new(file.x, y)?)
}

fn class_count(sets: &[&[usize]]) -> Result<usize> {
    sets.iter()
        .flat_map(|s| s.iter())
        .max()
        .map(|&k| k + 1)
        .ok_or_else(|| CliError::Core(ssan_core::Error::Protocol("no labeled rows".into())))
}

fn load(data: &DataSource) -> Result<Loaded> {
    let (source_path, target) = match data {
        DataSource::Synthetic(spec) => return Ok(Loaded::Synthetic(*spec)),
        DataSource::Files { source, target } => (source, target),
    };
    let source = labeled_set(features::load_feature_csv(source_path)?, source_path)?;
    match target {
        TargetFiles::Pool { path } => {
            let pool = labeled_set(features::load_feature_csv(path)?, path)?;
            let classes = class_count(&[&source.y, &pool.y])?;
            Ok(Loaded::Pool { source, pool, classes })
        }
        TargetFiles::Split { labeled, unlabeled } => {
            let l = labeled_set(features::load_feature_csv(labeled)?, labeled)?;
            let u = features::load_feature_csv(unlabeled)?;
            let truth = u.all_or_no_labels(unlabeled)?;
            let classes = class_count(&[&source.y, &l.y])?;
            Ok(Loaded::Fixed(HdaDataset::new(source, l, u.x, truth, classes)?))
        }
    }
}

fn dataset_for(loaded: &Loaded, m: usize, seed: u64) -> Result<HdaDataset> {
    let raw = match loaded {
        Loaded::Synthetic(spec) => data::synth_generate(&SynthSpec { seed, ..*spec })?,
        Loaded::Pool { source, pool, classes } => {
            let split = data::split_protocol(pool, *classes, m, seed)?;
            HdaDataset::new(
                source.clone(),
                split.labeled,
                split.unlabeled,
                Some(split.unlabeled_truth),
                *classes,
            )?
        }
        Loaded::Fixed(d) => d.clone(),
    };
    Ok(raw.standardized()?)
}

fn summarize(d: &HdaDataset) -> DatasetSummary {
    DatasetSummary {
        source_rows: d.source.len(),
        labeled_rows: d.labeled.len(),
        unlabeled_rows: d.unlabeled.rows(),
        source_dim: d.source.x.cols(),
        target_dim: d.labeled.x.cols(),
        classes: d.classes,
        has_truth: d.unlabeled_truth.is_some(),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome> {
    match spec.mode {
        Mode::Gradcheck => gradcheck(spec),
        Mode::Synth => synthesize(spec),
        Mode::Train | Mode::Ablate | Mode::Baseline => train_variants(spec),
    }
}

fn gradcheck(spec: &ExperimentSpec) -> Result<Outcome> {
    let results = checks::gradient_suite(spec.train.seed)?;
    if let Some(bad) = results.iter().find(|r| !r.passed()) {
        return Err(CliError::GradientCheck(format!(
            "{}: relative error {:e} exceeds {:e}",
            bad.name,
            bad.max_relative_error,
            checks::FD_TOLERANCE
        )));
    }
    Ok(Outcome::GradientCheck(results))
}

fn synthesize(spec: &ExperimentSpec) -> Result<Outcome> {
    let DataSource::Synthetic(synth) = &spec.data else {
        return Err(CliError::Usage("synth mode takes no input files".into()));
    };
    let seed = spec.train.seed;
    let synth = SynthSpec { seed, ..*synth };
    let pool = data::synth_pool(&synth)?;
    let split = data::split_protocol(&pool.target, synth.classes, synth.labeled_per_class, seed)?;
    create_dir(&spec.out)?;
    let some = |y: &[usize]| y.iter().map(|&v| Some(v)).collect::<Vec<_>>();
    let write = |name: &str, x, y: &[usize]| features::write_feature_csv(&spec.out.join(name), x, &some(y));
    write("source.csv", &pool.source.x, &pool.source.y)?;
    write("target_pool.csv", &pool.target.x, &pool.target.y)?;
    write("target_labeled.csv", &split.labeled.x, &split.labeled.y)?;
    write("target_unlabeled.csv", &split.unlabeled, &split.unlabeled_truth)?;
    Ok(Outcome::Synthesized(spec.out.clone()))
}

struct Collected {
    histograms: Vec<HistogramRow>,
    pseudo: Vec<PseudoLabelRow>,
}

fn run_one(
    spec: &ExperimentSpec,
    variant: &str,
    config: &TrainConfig,
    dataset: &HdaDataset,
    dir: &Path,
    collected: &mut Collected,
) -> Result<Option<f64>> {
    let started = Instant::now();
    let outcome: TrainOutcome = if variant == TARGET_ONLY {
        training::train_target_only(dataset, config)?
    } else {
        training::train(dataset, config)?
    };
    let seconds = started.elapsed().as_secs_f64();
    let seed = config.seed;
    log::info!(
        "{variant} seed {seed}: accuracy {:?} in {seconds:.1}s",
        outcome.accuracy
    );

    let temperature = config.effective_weights().temperature;
    let mut add_histogram = |domain: &'static str, t: f64, h: eval::ClassHistogram| {
        for (k, row) in h.rows.row_iter().enumerate().filter(|(k, _)| h.defined[*k]) {
            for (j, &p) in row.iter().enumerate() {
                collected.histograms.push(HistogramRow {
                    variant: variant.to_string(),
                    seed,
                    domain,
                    temperature: t,
                    true_class: k,
                    predicted_class: j,
                    probability: p,
                });
            }
        }
    };
    if variant != TARGET_ONLY {
        let h = training::source_prediction_histogram(&outcome.model, &dataset.training_view(), temperature)?;
        add_histogram("source", temperature, h);
    }
    if let Some(truth) = &dataset.unlabeled_truth {
        let h = training::target_prediction_histogram(&outcome.model, &dataset.unlabeled, truth, dataset.classes, 1.0)?;
        add_histogram("target", 1.0, h);
    }
    if let Some(stats) = outcome.pseudo_label_stats {
        collected.pseudo.push(PseudoLabelRow {
            variant: variant.to_string(),
            seed,
            stats,
        });
    }

    let report = RunReport {
        schema: report::RUN_SCHEMA.into(),
        experiment: spec.clone(),
        variant: variant.to_string(),
        seed,
        config: *config,
        effective_weights: config.effective_weights(),
        dataset: summarize(dataset),
        accuracy: outcome.accuracy,
        final_losses: outcome.history.last().map(|r| r.losses),
        pseudo_labels: outcome.pseudo_label_stats,
        history: outcome.history,
        timing: Timing { seconds },
    };
    report::write_json(&dir.join(format!("run_{seed}.json")), &report)?;
    if spec.save_model {
        checkpoint::save(&outcome.model, &dir.join(format!("model_{seed}.txt")))?;
    }
    Ok(outcome.accuracy)
}

fn train_variants(spec: &ExperimentSpec) -> Result<Outcome> {
    let started = Instant::now();
    let variants: Vec<(&str, Ablation)> = match spec.mode {
        Mode::Ablate => ablation_variants().to_vec(),
        Mode::Baseline => vec![(TARGET_ONLY, Ablation::default())],
        _ => vec![("ssan", spec.train.ablation)],
    };
    let loaded = load(&spec.data)?;
    create_dir(&spec.out)?;
    let seeds: Vec<u64> = (0..spec.reps as u64).map(|i| spec.train.seed + i).collect();
    let mut accuracies: Vec<Vec<f64>> = vec![Vec::new(); variants.len()];
    let mut collected = Collected {
        histograms: Vec::new(),
        pseudo: Vec::new(),
    };

    for &seed in &seeds {
        let dataset = dataset_for(&loaded, spec.m, seed)?;
        for (i, (name, ablation)) in variants.iter().enumerate() {
            let dir = if spec.mode == Mode::Ablate {
                spec.out.join(name)
            } else {
                spec.out.clone()
            };
            create_dir(&dir)?;
            let config = TrainConfig {
                seed,
                ablation: *ablation,
                ..spec.train
            };
            if let Some(acc) = run_one(spec, name, &config, &dataset, &dir, &mut collected)? {
                accuracies[i].push(acc);
            }
        }
    }

    let full = accuracies[0].clone();
    let summaries = variants
        .iter()
        .zip(&accuracies)
        .enumerate()
        .map(|(i, ((name, _), accs))| {
            let versus_full: Option<WelchResult> = if spec.mode == Mode::Ablate && i > 0 {
                eval::welch_ttest(&full, accs).ok()
            } else {
                None
            };
            VariantSummary {
                variant: name.to_string(),
                seeds: seeds.clone(),
                accuracies: accs.clone(),
                summary: eval::aggregate_runs(accs).ok(),
                versus_full,
            }
        })
        .collect();
    let aggregate = AggregateReport {
        schema: report::AGGREGATE_SCHEMA.into(),
        experiment: spec.clone(),
        variants: summaries,
        timing: Timing {
            seconds: started.elapsed().as_secs_f64(),
        },
    };
    report::write_json(&spec.out.join("aggregate.json"), &aggregate)?;
    report::write_text(&spec.out.join("aggregate.csv"), &report::aggregate_csv(&aggregate))?;
    report::write_text(
        &spec.out.join("histograms.csv"),
        &report::histograms_csv(spec, &collected.histograms),
    )?;
    report::write_text(
        &spec.out.join("pseudolabel_stats.csv"),
        &report::pseudolabel_csv(spec, &collected.pseudo),
    )?;
    Ok(Outcome::Aggregate(Box::new(aggregate)))
}
