//! Finite-difference verification of every loss term on a small random batch.

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::losses::{self, LossParts, LossWeights, SoftLabelBank};
use crate::model::{InitSpec, ModelShape, ModelVars, Player, SsanModel};
use crate::numerics::{grad_check, Matrix, ParamSet, ParamVars, Tape, Var};
use crate::rng::{self, Stream};
use crate::semantics;

/// Central-difference step used by [`gradient_suite`].
pub const FD_STEP: f64 = 1e-5;
/// Largest relative error accepted by [`gradient_suite`].
pub const FD_TOLERANCE: f64 = 1e-4;

const SHAPE: ModelShape = ModelShape {
    source_dim: 5,
    target_dim: 4,
    hidden: 6,
    common_dim: 3,
    classes: 3,
};
const SOURCE_LABELS: [usize; 4] = [0, 1, 2, 0];
const TARGET_LABELS: [usize; 4] = [0, 1, 2, 1];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_relative_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error < FD_TOLERANCE
    }
}

struct Batch {
    xs: Matrix,
    xt: Matrix,
    bank: SoftLabelBank,
    weights: LossWeights,
}

fn gaussian(rows: usize, cols: usize, rng: &mut rng::Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::new(rows, cols, data).expect("sized to rows * cols")
}

struct Forward {
    vars: ModelVars,
    zs: Var,
    zt: Var,
    logits_s: Var,
    logits_t: Var,
}

fn forward(tape: &mut Tape, params: &ParamVars, batch: &Batch) -> Result<Forward> {
    let vars = ModelVars::from_vars(SHAPE, crate::model::DEFAULT_SLOPE, params)?;
    let xs = tape.constant(batch.xs.clone());
    let xt = tape.constant(batch.xt.clone());
    let zs = vars.encode_source(tape, xs)?;
    let zt = vars.encode_target(tape, xt)?;
    let logits_s = vars.classify(tape, zs)?;
    let logits_t = vars.classify(tape, zt)?;
    Ok(Forward {
        vars,
        zs,
        zt,
        logits_s,
        logits_t,
    })
}

fn parts(tape: &mut Tape, f: &Forward, batch: &Batch) -> Result<LossParts> {
    let supervised = losses::supervised_loss(tape, f.logits_s, &SOURCE_LABELS)?;
    let isc = losses::isc_loss(tape, f.logits_t, &TARGET_LABELS, &batch.bank, batch.weights.alpha, 1.0)?;
    let triplet = semantics::triplet_centroids(tape, f.zs, &SOURCE_LABELS, f.zt, &TARGET_LABELS, SHAPE.classes)?;
    let esa = losses::esa_loss(tape, &triplet)?;
    let ds = f.vars.discriminate(tape, f.zs)?;
    let dt = f.vars.discriminate(tape, f.zt)?;
    let domain = losses::domain_loss(tape, ds, dt)?;
    Ok(LossParts {
        supervised,
        isc,
        esa: Some(esa),
        domain: Some(domain),
    })
}

/// Checks each loss term and both players' objectives of a freshly
/// initialized model (seeded by `seed`) against central finite differences.
///
/// The soft-label bank is computed once from the initial source logits and
/// held fixed, as it is within a training epoch.
pub fn gradient_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let model = SsanModel::init(SHAPE, &InitSpec { seed })?;
    let mut rng = rng::stream(seed, Stream::Synth);
    let xs = gaussian(SOURCE_LABELS.len(), SHAPE.source_dim, &mut rng);
    let xt = gaussian(TARGET_LABELS.len(), SHAPE.target_dim, &mut rng);
    let source_logits = model.classify(&model.encode_source(&xs)?)?;
    let weights = LossWeights::default();
    let bank = losses::compute_soft_labels(&source_logits, &SOURCE_LABELS, weights.temperature)?;
    let batch = Batch { xs, xt, bank, weights };

    let params: ParamSet = model
        .params()
        .iter()
        .map(|(name, value)| ((*name).into(), (*value).clone()))
        .collect();

    type Builder = fn(&mut Tape, &Forward, &Batch) -> Result<Var>;
    let builders: [(&'static str, Builder); 7] = [
        ("source cross-entropy", |t, f, _| {
            losses::supervised_loss(t, f.logits_s, &SOURCE_LABELS)
        }),
        ("soft-label loss", |t, f, b| {
            let probs = t.softmax_rows(f.logits_t, 1.0)?;
            losses::soft_loss(t, probs, &TARGET_LABELS, &b.bank)
        }),
        ("implicit semantic correlation", |t, f, b| Ok(parts(t, f, b)?.isc)),
        ("explicit semantic alignment", |t, f, b| {
            Ok(parts(t, f, b)?.esa.expect("built"))
        }),
        ("domain adversarial", |t, f, b| {
            Ok(parts(t, f, b)?.domain.expect("built"))
        }),
        ("encoder-classifier objective", |t, f, b| {
            let p = parts(t, f, b)?;
            losses::total_objective(t, &p, &b.weights, Player::EncoderClassifier)
        }),
        ("discriminator objective", |t, f, b| {
            let p = parts(t, f, b)?;
            losses::total_objective(t, &p, &b.weights, Player::Discriminator)
        }),
    ];

    let mut results = Vec::with_capacity(builders.len());
    for (name, builder) in builders {
        let error = grad_check(
            |tape, vars| {
                let f = forward(tape, vars, &batch)?;
                builder(tape, &f, &batch)
            },
            &params,
            FD_STEP,
        )?;
        results.push(CheckResult {
            name,
            max_relative_error: error,
        });
    }
    Ok(results)
}
