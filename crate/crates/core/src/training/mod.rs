//! Full-batch alternating minimax training.
//!
//! Each epoch performs one forward pass over all data, refreshes the
//! detached per-epoch quantities (soft-label bank, supervised centroids,
//! consensus pseudo-labels) from that pass, then takes one discriminator
//! step on `-gamma·L_D` and one step of the encoders and classifier on
//! `L_S + L_ISC + beta·L_ESA + gamma·L_D`. Both steps use gradients from the
//! same forward pass.

mod adam;

use alloc::vec::Vec;

pub use adam::{adam_step, AdamConfig, OptimizerState};

use crate::data::{HdaDataset, TrainingData};
use crate::error::{Error, Result};
use crate::eval::{self, PseudoLabelStats};
use crate::losses::{self, LossParts, LossWeights, SoftLabelBank};
use crate::model::{player_of, InitSpec, ModelShape, Player, SsanModel};
use crate::numerics::{Matrix, Tape};
use crate::semantics::{self, CentroidSet, PseudoLabelAssignment};

/// Switches that remove one ingredient of the method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ablation {
    /// Drop the soft-label term (`alpha = 0`).
    pub no_soft: bool,
    /// Drop the centroid alignment loss (`beta = 0`).
    pub no_esa: bool,
    /// Drop the adversarial loss (`gamma = 0`).
    pub no_adv: bool,
    /// Build soft labels at temperature 1.
    pub no_temperature: bool,
    /// Select pseudo-labels from the classifier alone.
    pub no_gs: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub common_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub leaky_slope: f64,
    pub seed: u64,
    pub ablation: Ablation,
    /// Also divide the student logits by the temperature in the soft loss.
    pub student_temperature: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            common_dim: 256,
            hidden: 256,
            epochs: 500,
            adam: AdamConfig::default(),
            leaky_slope: crate::model::DEFAULT_SLOPE,
            seed: 0,
            ablation: Ablation::default(),
            student_temperature: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.adam.lr > 0.0) {
            return Err(Error::Parameter(alloc::format!(
                "learning rate must be positive, got {}",
                self.adam.lr
            )));
        }
        crate::numerics::ops::check_slope(self.leaky_slope)
    }

    /// Weights after applying the ablation switches.
    pub fn effective_weights(&self) -> LossWeights {
        let a = self.ablation;
        let w = self.weights;
        LossWeights {
            alpha: if a.no_soft { 0.0 } else { w.alpha },
            beta: if a.no_esa { 0.0 } else { w.beta },
            gamma: if a.no_adv { 0.0 } else { w.gamma },
            temperature: if a.no_temperature { 1.0 } else { w.temperature },
        }
    }

    pub fn model_shape(&self, data: &TrainingData<'_>) -> ModelShape {
        ModelShape {
            source_dim: data.source_dim(),
            target_dim: data.target_dim(),
            hidden: self.hidden,
            common_dim: self.common_dim,
            classes: data.classes,
        }
    }

    pub fn init_model(&self, data: &TrainingData<'_>) -> Result<SsanModel> {
        SsanModel::init(self.model_shape(data), &InitSpec { seed: self.seed })?.with_slope(self.leaky_slope)
    }
}

/// Optimizer state of both players.
#[derive(Debug, Clone, Default)]
pub struct Optimizers {
    pub main: OptimizerState,
    pub discriminator: OptimizerState,
}

/// Loss values of one forward pass. Switched-off terms are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLosses {
    pub supervised: f64,
    pub isc: f64,
    pub esa: Option<f64>,
    pub domain: Option<f64>,
}

/// Quantities refreshed at the start of an epoch, plus its losses.
#[derive(Debug, Clone)]
pub struct EpochState {
    pub epoch: usize,
    pub bank: SoftLabelBank,
    pub centroids: CentroidSet,
    pub assignment: PseudoLabelAssignment,
    pub losses: EpochLosses,
}

impl EpochState {
    pub fn selected_count(&self) -> usize {
        self.assignment.selected_count()
    }
}

fn range(start: usize, end: usize) -> Vec<usize> {
    (start..end).collect()
}

/// One epoch: refresh, forward, discriminator step, main step.
pub fn run_epoch(
    model: &mut SsanModel,
    data: &TrainingData<'_>,
    config: &TrainConfig,
    epoch: usize,
    optimizers: &mut Optimizers,
) -> Result<EpochState> {
    let weights = config.effective_weights();
    let classes = data.classes;
    let n_l = data.labeled.len();
    let n_t = n_l + data.unlabeled.rows();
    let labeled_rows = range(0, n_l);
    let unlabeled_rows = range(n_l, n_t);

    let mut tape = Tape::new();
    let vars = model.register(&mut tape)?;
    let xs = tape.constant(data.source.x.clone());
    let xt = tape.constant(data.labeled.x.vstack(data.unlabeled)?);
    let zs = vars.encode_source(&mut tape, xs)?;
    let logits_s = vars.classify(&mut tape, zs)?;
    let zt = vars.encode_target(&mut tape, xt)?;
    let logits_t = vars.classify(&mut tape, zt)?;

    // Per-epoch refresh. The parameters have not moved yet this epoch, so
    // the forward values above are exactly a fresh pass over the data.
    let mut bank = losses::compute_soft_labels(tape.value(logits_s), &data.source.y, weights.temperature)?;
    bank.epoch_computed = epoch;
    let zt_value = tape.value(zt);
    let centroids = semantics::supervised_centroids(
        tape.value(zs),
        &data.source.y,
        &zt_value.select_rows(&labeled_rows)?,
        &data.labeled.y,
        classes,
    )?;
    let mut assignment = semantics::refine_pseudo_labels(
        &tape.value(logits_t).select_rows(&unlabeled_rows)?,
        &zt_value.select_rows(&unlabeled_rows)?,
        &centroids,
    )?;
    if config.ablation.no_gs {
        assignment = assignment.select_all_nn();
    }

    let supervised = losses::supervised_loss(&mut tape, logits_s, &data.source.y)?;
    let logits_l = tape.select_rows(logits_t, &labeled_rows)?;
    let student_t = if config.student_temperature {
        weights.temperature
    } else {
        1.0
    };
    let isc = losses::isc_loss(&mut tape, logits_l, &data.labeled.y, &bank, weights.alpha, student_t)?;

    let esa = if weights.beta > 0.0 {
        let mut rows = labeled_rows.clone();
        let mut labels = data.labeled.y.clone();
        for (i, y) in assignment.selected() {
            rows.push(n_l + i);
            labels.push(y);
        }
        let z_target = tape.select_rows(zt, &rows)?;
        let triplet = semantics::triplet_centroids(&mut tape, zs, &data.source.y, z_target, &labels, classes)?;
        Some(losses::esa_loss(&mut tape, &triplet)?)
    } else {
        None
    };

    let domain = if weights.gamma > 0.0 {
        let ds = vars.discriminate(&mut tape, zs)?;
        let dt = vars.discriminate(&mut tape, zt)?;
        Some(losses::domain_loss(&mut tape, ds, dt)?)
    } else {
        None
    };

    let parts = LossParts {
        supervised,
        isc,
        esa,
        domain,
    };
    let main_objective = losses::total_objective(&mut tape, &parts, &weights, Player::EncoderClassifier)?;
    let main_grads = tape.backward_where(main_objective, |n| player_of(n) == Player::EncoderClassifier)?;
    if parts.domain.is_some() {
        let disc_objective = losses::total_objective(&mut tape, &parts, &weights, Player::Discriminator)?;
        let disc_grads = tape.backward_where(disc_objective, |n| player_of(n) == Player::Discriminator)?;
        adam_step(
            model.params_mut(),
            &disc_grads,
            &mut optimizers.discriminator,
            &config.adam,
        )?;
    }
    adam_step(model.params_mut(), &main_grads, &mut optimizers.main, &config.adam)?;

    let scalar = |v| tape.value(v).item();
    let losses = EpochLosses {
        supervised: scalar(supervised)?,
        isc: scalar(isc)?,
        esa: esa.map(scalar).transpose()?,
        domain: domain.map(scalar).transpose()?,
    };
    Ok(EpochState {
        epoch,
        bank,
        centroids,
        assignment,
        losses,
    })
}

/// Per-epoch summary, with ground-truth diagnostics when available.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: EpochLosses,
    pub selected: usize,
    /// Accuracy of the assigned pseudo-labels on the selected instances.
    pub selected_accuracy: Option<f64>,
    /// Accuracy of the classifier argmax over all unlabeled instances.
    pub nn_accuracy: Option<f64>,
    /// Accuracy of the geometric-similarity labels over all unlabeled instances.
    pub gs_accuracy: Option<f64>,
}

impl EpochRecord {
    pub fn new(state: &EpochState, truth: Option<&[usize]>) -> Result<Self> {
        let labels = &state.assignment.labels;
        let (mut selected_accuracy, mut nn_accuracy, mut gs_accuracy) = (None, None, None);
        if let Some(truth) = truth {
            let nn: Vec<usize> = labels.iter().map(|l| l.nn).collect();
            let gs: Vec<usize> = labels.iter().map(|l| l.gs).collect();
            nn_accuracy = Some(eval::accuracy(&nn, truth)?);
            gs_accuracy = Some(eval::accuracy(&gs, truth)?);
            let (pred, sel_truth): (Vec<usize>, Vec<usize>) =
                state.assignment.selected().map(|(i, y)| (y, truth[i])).unzip();
            if !pred.is_empty() {
                selected_accuracy = Some(eval::accuracy(&pred, &sel_truth)?);
            }
        }
        Ok(Self {
            epoch: state.epoch,
            losses: state.losses,
            selected: state.selected_count(),
            selected_accuracy,
            nn_accuracy,
            gs_accuracy,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SsanModel,
    pub history: Vec<EpochRecord>,
    /// State of the last epoch, if any epoch ran.
    pub last_state: Option<EpochState>,
    /// Predicted classes of the unlabeled target rows by the final model.
    pub predictions: Vec<usize>,
    /// Accuracy of `predictions`, when ground truth is present.
    pub accuracy: Option<f64>,
    /// Pseudo-label agreement counts of the last epoch, when ground truth is present.
    pub pseudo_label_stats: Option<PseudoLabelStats>,
}

/// Trains from a fresh initialization for `config.epochs` epochs.
pub fn train(dataset: &HdaDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let view = dataset.training_view();
    let model = config.init_model(&view)?;
    train_from(model, dataset, config)
}

/// Trains an already initialized model.
pub fn train_from(mut model: SsanModel, dataset: &HdaDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let view = dataset.training_view();
    let truth = dataset.unlabeled_truth.as_deref();
    let mut optimizers = Optimizers::default();
    let mut history = Vec::with_capacity(config.epochs);
    let mut last_state = None;
    for epoch in 0..config.epochs {
        let state = run_epoch(&mut model, &view, config, epoch, &mut optimizers)?;
        history.push(EpochRecord::new(&state, truth)?);
        last_state = Some(state);
    }
    let predictions = model.predict_target(&dataset.unlabeled)?;
    let accuracy = truth.map(|t| eval::accuracy(&predictions, t)).transpose()?;
    let pseudo_label_stats = match (&last_state, truth) {
        (Some(state), Some(t)) => Some(eval::pseudo_label_stats(&state.assignment, t)?),
        _ => None,
    };
    Ok(TrainOutcome {
        model,
        history,
        last_state,
        predictions,
        accuracy,
        pseudo_label_stats,
    })
}

/// Target-only reference: trains the target encoder and classifier on the
/// labeled target rows alone, with the same budget and optimizer.
pub fn train_target_only(dataset: &HdaDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let view = dataset.training_view();
    let mut model = config.init_model(&view)?;
    let mut state = OptimizerState::new();
    let mut history = Vec::with_capacity(config.epochs);
    let is_target_net = |n: &str| n.starts_with("target_encoder.") || n.starts_with("classifier.");
    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let vars = model.register(&mut tape)?;
        let x = tape.constant(view.labeled.x.clone());
        let z = vars.encode_target(&mut tape, x)?;
        let logits = vars.classify(&mut tape, z)?;
        let loss = losses::supervised_loss(&mut tape, logits, &view.labeled.y)?;
        let grads = tape.backward_where(loss, is_target_net)?;
        adam_step(model.params_mut(), &grads, &mut state, &config.adam)?;
        history.push(EpochRecord {
            epoch,
            losses: EpochLosses {
                supervised: tape.value(loss).item()?,
                isc: 0.0,
                esa: None,
                domain: None,
            },
            selected: 0,
            selected_accuracy: None,
            nn_accuracy: None,
            gs_accuracy: None,
        });
    }
    let predictions = model.predict_target(&dataset.unlabeled)?;
    let accuracy = dataset
        .unlabeled_truth
        .as_deref()
        .map(|t| eval::accuracy(&predictions, t))
        .transpose()?;
    Ok(TrainOutcome {
        model,
        history,
        last_state: None,
        predictions,
        accuracy,
        pseudo_label_stats: None,
    })
}

/// Class-prediction histogram of the source rows at `temperature`
/// (rows average the predicted distributions of each true class).
pub fn source_prediction_histogram(
    model: &SsanModel,
    data: &TrainingData<'_>,
    temperature: f64,
) -> Result<eval::ClassHistogram> {
    let logits = model.classify(&model.encode_source(&data.source.x)?)?;
    let probs = crate::numerics::softmax_rows(&logits, temperature)?;
    eval::class_prediction_histogram(&probs, &data.source.y, data.classes)
}

/// Same as [`source_prediction_histogram`] for the unlabeled target rows,
/// grouped by their ground truth.
pub fn target_prediction_histogram(
    model: &SsanModel,
    unlabeled: &Matrix,
    truth: &[usize],
    classes: usize,
    temperature: f64,
) -> Result<eval::ClassHistogram> {
    let logits = model.classify(&model.encode_target(unlabeled)?)?;
    let probs = crate::numerics::softmax_rows(&logits, temperature)?;
    eval::class_prediction_histogram(&probs, truth, classes)
}
