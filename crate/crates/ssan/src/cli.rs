//! Command-line parsing and resolution of flags, config file and defaults
//! into one [`ExperimentSpec`]. Flags win over the config file, which wins
//! over built-in defaults.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use ssan_core::data::SynthSpec;
use ssan_core::training::{Ablation, TrainConfig};

use crate::config::ConfigFile;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "ssan", version, about = "Heterogeneous domain adaptation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on feature files or a synthetic task and evaluate on the unlabeled target rows.
    Train(Flags),
    /// Write a synthetic task as feature files.
    Synth(Flags),
    /// Check every loss gradient against finite differences.
    Gradcheck(Flags),
    /// Run the full method and its five ablations under paired seeds.
    Ablate(Flags),
    /// Train the target-only network on the labeled target rows.
    Baseline(Flags),
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// Labeled source features.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Labeled target pool, split into `m` labeled rows per class and the rest unlabeled.
    #[arg(long)]
    pub target_pool: Option<PathBuf>,
    /// Labeled target rows (use with --target-unlabeled instead of --target-pool).
    #[arg(long)]
    pub target_labeled: Option<PathBuf>,
    /// Unlabeled target rows; labels, if present on every row, are used for evaluation only.
    #[arg(long)]
    pub target_unlabeled: Option<PathBuf>,
    /// Labeled target rows per class.
    #[arg(long)]
    pub m: Option<usize>,

    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub dim_common: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Base seed; repetition `i` uses `seed + i`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// `key = value` file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write each trained model as `model_<seed>.txt`.
    #[arg(long)]
    pub save_model: bool,

    #[arg(long)]
    pub no_soft: bool,
    #[arg(long)]
    pub no_esa: bool,
    #[arg(long)]
    pub no_adv: bool,
    #[arg(long)]
    pub no_temp: bool,
    #[arg(long)]
    pub no_gs: bool,

    /// Synthetic task: number of classes.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Synthetic task: samples per class in each domain.
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub source_dim: Option<usize>,
    #[arg(long)]
    pub target_dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Synth,
    Gradcheck,
    Ablate,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFiles {
    Pool { path: PathBuf },
    Split { labeled: PathBuf, unlabeled: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Files {
        source: PathBuf,
        target: TargetFiles,
    },
    /// Regenerated for every repetition with that repetition's seed.
    Synthetic(SynthSpec),
}

/// Everything an experiment needs, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub data: DataSource,
    /// Labeled target rows per class when splitting a pool or a synthetic task.
    pub m: usize,
    pub train: TrainConfig,
    pub reps: usize,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub save_model: bool,
}

const KNOWN_KEYS: &[&str] = &[
    "source",
    "target-pool",
    "target-labeled",
    "target-unlabeled",
    "m",
    "alpha",
    "beta",
    "gamma",
    "temperature",
    "dim-common",
    "hidden",
    "epochs",
    "lr",
    "seed",
    "reps",
    "out",
    "save-model",
    "no-soft",
    "no-esa",
    "no-adv",
    "no-temp",
    "no-gs",
    "classes",
    "per-class",
    "latent-dim",
    "source-dim",
    "target-dim",
    "separation",
    "noise",
    "student-temperature",
];

pub fn parse_args<I, T>(argv: I) -> std::result::Result<ExperimentSpec, ParseFailure>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(ParseFailure::Clap)?;
    resolve(cli.command).map_err(ParseFailure::Resolve)
}

/// Why the command line did not yield a spec. Clap failures include
/// `--help` and `--version`, which print and exit successfully.
#[derive(Debug)]
pub enum ParseFailure {
    Clap(clap::Error),
    Resolve(CliError),
}

pub fn resolve(command: Command) -> Result<ExperimentSpec> {
    let (mode, flags) = match command {
        Command::Train(f) => (Mode::Train, f),
        Command::Synth(f) => (Mode::Synth, f),
        Command::Gradcheck(f) => (Mode::Gradcheck, f),
        Command::Ablate(f) => (Mode::Ablate, f),
        Command::Baseline(f) => (Mode::Baseline, f),
    };
    let file = match &flags.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(key) = file.keys().find(|k| !KNOWN_KEYS.contains(k)) {
        return Err(CliError::Usage(format!("unknown config key {key:?}")));
    }

    fn pick<T: std::str::FromStr>(flag: Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => file.get(key),
        }
    }
    let switch = |flag: bool, key: &str| -> Result<bool> { Ok(flag || file.get::<bool>(key)?.unwrap_or(false)) };
    let path = |flag: &Option<PathBuf>, key: &str| -> Option<PathBuf> {
        flag.clone().or_else(|| file.raw(key).map(PathBuf::from))
    };

    let defaults = TrainConfig::default();
    let mut train = defaults;
    train.weights.alpha = pick(flags.alpha, &file, "alpha")?.unwrap_or(defaults.weights.alpha);
    train.weights.beta = pick(flags.beta, &file, "beta")?.unwrap_or(defaults.weights.beta);
    train.weights.gamma = pick(flags.gamma, &file, "gamma")?.unwrap_or(defaults.weights.gamma);
    train.weights.temperature = pick(flags.temperature, &file, "temperature")?.unwrap_or(defaults.weights.temperature);
    train.common_dim = pick(flags.dim_common, &file, "dim-common")?.unwrap_or(defaults.common_dim);
    train.hidden = pick(flags.hidden, &file, "hidden")?.unwrap_or(defaults.hidden);
    train.epochs = pick(flags.epochs, &file, "epochs")?.unwrap_or(defaults.epochs);
    train.adam.lr = pick(flags.lr, &file, "lr")?.unwrap_or(defaults.adam.lr);
    train.seed = pick(flags.seed, &file, "seed")?.unwrap_or(defaults.seed);
    // Only reachable from a config file: it changes the soft loss itself.
    train.student_temperature = switch(false, "student-temperature")?;
    train.ablation = Ablation {
        no_soft: switch(flags.no_soft, "no-soft")?,
        no_esa: switch(flags.no_esa, "no-esa")?,
        no_adv: switch(flags.no_adv, "no-adv")?,
        no_temperature: switch(flags.no_temp, "no-temp")?,
        no_gs: switch(flags.no_gs, "no-gs")?,
    };
    train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if train.common_dim == 0 || train.hidden == 0 {
        return Err(CliError::Usage("--dim-common and --hidden must be at least 1".into()));
    }

    let m = pick(flags.m, &file, "m")?.unwrap_or(3);
    if m == 0 {
        return Err(CliError::Usage("--m must be at least 1".into()));
    }
    let reps = pick(flags.reps, &file, "reps")?.unwrap_or(1);
    if reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }

    let source = path(&flags.source, "source");
    let pool = path(&flags.target_pool, "target-pool");
    let labeled = path(&flags.target_labeled, "target-labeled");
    let unlabeled = path(&flags.target_unlabeled, "target-unlabeled");
    let any_path = source.is_some() || pool.is_some() || labeled.is_some() || unlabeled.is_some();
    let data = if any_path {
        if mode == Mode::Synth || mode == Mode::Gradcheck {
            return Err(CliError::Usage(
                format!("{mode:?} mode does not read feature files").to_lowercase(),
            ));
        }
        let source = source.ok_or_else(|| CliError::Usage("--source is required with target files".into()))?;
        let target = match (pool, labeled, unlabeled) {
            (Some(path), None, None) => TargetFiles::Pool { path },
            (None, Some(labeled), Some(unlabeled)) => TargetFiles::Split { labeled, unlabeled },
            _ => {
                return Err(CliError::Usage(
                    "give either --target-pool or both --target-labeled and --target-unlabeled".into(),
                ))
            }
        };
        DataSource::Files { source, target }
    } else {
        let d = SynthSpec::default();
        let spec = SynthSpec {
            classes: pick(flags.classes, &file, "classes")?.unwrap_or(d.classes),
            latent_dim: pick(flags.latent_dim, &file, "latent-dim")?.unwrap_or(d.latent_dim),
            source_dim: pick(flags.source_dim, &file, "source-dim")?.unwrap_or(d.source_dim),
            target_dim: pick(flags.target_dim, &file, "target-dim")?.unwrap_or(d.target_dim),
            separation: pick(flags.separation, &file, "separation")?.unwrap_or(d.separation),
            noise: pick(flags.noise, &file, "noise")?.unwrap_or(d.noise),
            per_class: pick(flags.per_class, &file, "per-class")?.unwrap_or(d.per_class),
            labeled_per_class: m,
            seed: train.seed,
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        DataSource::Synthetic(spec)
    };

    Ok(ExperimentSpec {
        mode,
        data,
        m,
        train,
        reps,
        out: path(&flags.out, "out").unwrap_or_else(|| PathBuf::from("ssan-out")),
        save_model: switch(flags.save_model, "save-model")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(args: &[&str]) -> ExperimentSpec {
        let argv = std::iter::once("ssan").chain(args.iter().copied());
        match parse_args(argv) {
            Ok(s) => s,
            Err(e) => panic!("{e:?}"),
        }
    }

    #[test]
    fn train_with_pool_and_m() {
        let s = spec(&[
            "train",
            "--source",
            "s.csv",
            "--target-pool",
            "t.csv",
            "--m",
            "3",
            "--seed",
            "7",
        ]);
        assert_eq!(s.mode, Mode::Train);
        assert_eq!(s.m, 3);
        assert_eq!(s.train.seed, 7);
        assert_eq!(
            s.data,
            DataSource::Files {
                source: "s.csv".into(),
                target: TargetFiles::Pool { path: "t.csv".into() }
            }
        );
    }

    #[test]
    fn weights_are_echoed() {
        let s = spec(&[
            "train",
            "--alpha",
            "0.1",
            "--beta",
            "0.004",
            "--gamma",
            "0.01",
            "--temperature",
            "5",
        ]);
        let w = s.train.weights;
        assert_eq!((w.alpha, w.beta, w.gamma, w.temperature), (0.1, 0.004, 0.01, 5.0));
    }

    #[test]
    fn defaults_without_flags() {
        let s = spec(&["ablate"]);
        assert_eq!(s.train, TrainConfig::default());
        assert_eq!((s.m, s.reps), (3, 1));
        assert!(matches!(s.data, DataSource::Synthetic(_)));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        std::fs::write(
            &cfg,
            "epochs = 500\nalpha = 0.3\nno-gs = true\nstudent-temperature = true\n",
        )
        .unwrap();
        let s = spec(&["train", "--config", cfg.to_str().unwrap(), "--epochs", "100"]);
        assert_eq!(s.train.epochs, 100);
        assert_eq!(s.train.weights.alpha, 0.3);
        assert!(s.train.ablation.no_gs);
        assert!(s.train.student_temperature);
    }

    #[test]
    fn usage_errors() {
        let fails = |args: &[&str]| parse_args(std::iter::once("ssan").chain(args.iter().copied())).is_err();
        assert!(fails(&["train", "--bogus"]));
        assert!(fails(&["train", "--epochs", "ten"]));
        assert!(fails(&["train", "--target-pool", "t.csv"]));
        assert!(fails(&["train", "--source", "s.csv", "--target-labeled", "l.csv"]));
        assert!(fails(&["train", "--alpha", "1.5"]));
        assert!(fails(&["train", "--reps", "0"]));
        assert!(fails(&[]));
    }
}
