//! Datasets, the labeled-target split, per-domain standardization and a
//! synthetic heterogeneous task generator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::losses::check_labels;
use crate::numerics::Matrix;
use crate::rng::{self, Stream};

/// Features with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl LabeledSet {
    pub fn new(x: Matrix, y: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Dimension {
                op: "LabeledSet::new",
                lhs: x.shape(),
                rhs: (y.len(), x.cols()),
            });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Labeled source, labeled target and unlabeled target data.
///
/// `unlabeled_truth` is only ever read by evaluation code; training works on
/// a [`TrainingData`] view that has no access to it.
#[derive(Debug, Clone, PartialEq)]
pub struct HdaDataset {
    pub source: LabeledSet,
    pub labeled: LabeledSet,
    pub unlabeled: Matrix,
    pub unlabeled_truth: Option<Vec<usize>>,
    pub classes: usize,
}

/// The part of an [`HdaDataset`] training is allowed to see.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub source: &'a LabeledSet,
    pub labeled: &'a LabeledSet,
    pub unlabeled: &'a Matrix,
    pub classes: usize,
}

impl TrainingData<'_> {
    pub fn source_dim(&self) -> usize {
        self.source.x.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.labeled.x.cols()
    }
}

fn require_every_class(labels: &[usize], classes: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; classes];
    for &y in labels {
        seen[y] = true;
    }
    if let Some(k) = seen.iter().position(|&s| !s) {
        return Err(Error::Protocol(format!("class {k} has no {what} instance")));
    }
    Ok(())
}

impl HdaDataset {
    pub fn new(
        source: LabeledSet,
        labeled: LabeledSet,
        unlabeled: Matrix,
        unlabeled_truth: Option<Vec<usize>>,
        classes: usize,
    ) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Parameter("class count must be at least 1".into()));
        }
        check_labels(&source.y, classes)?;
        check_labels(&labeled.y, classes)?;
        require_every_class(&source.y, classes, "source")?;
        require_every_class(&labeled.y, classes, "labeled target")?;
        if labeled.x.cols() != unlabeled.cols() {
            return Err(Error::Dimension {
                op: "HdaDataset::new(target widths)",
                lhs: labeled.x.shape(),
                rhs: unlabeled.shape(),
            });
        }
        if unlabeled.rows() == 0 {
            return Err(Error::Protocol("no unlabeled target instance".into()));
        }
        if let Some(truth) = &unlabeled_truth {
            if truth.len() != unlabeled.rows() {
                return Err(Error::Dimension {
                    op: "HdaDataset::new(truth)",
                    lhs: unlabeled.shape(),
                    rhs: (truth.len(), 1),
                });
            }
            check_labels(truth, classes)?;
        }
        if labeled.len() > unlabeled.rows() {
            log::warn!(
                "more labeled ({}) than unlabeled ({}) target instances",
                labeled.len(),
                unlabeled.rows()
            );
        }
        Ok(Self {
            source,
            labeled,
            unlabeled,
            unlabeled_truth,
            classes,
        })
    }

    pub fn training_view(&self) -> TrainingData<'_> {
        TrainingData {
            source: &self.source,
            labeled: &self.labeled,
            unlabeled: &self.unlabeled,
            classes: self.classes,
        }
    }

    /// Standardizes each domain with its own statistics: source from the
    /// source rows, target from labeled and unlabeled rows together.
    pub fn standardized(&self) -> Result<Self> {
        let source = Standardizer::fit(&self.source.x);
        let target = Standardizer::fit(&self.labeled.x.vstack(&self.unlabeled)?);
        Ok(Self {
            source: LabeledSet {
                x: source.apply(&self.source.x)?,
                y: self.source.y.clone(),
            },
            labeled: LabeledSet {
                x: target.apply(&self.labeled.x)?,
                y: self.labeled.y.clone(),
            },
            unlabeled: target.apply(&self.unlabeled)?,
            unlabeled_truth: self.unlabeled_truth.clone(),
            classes: self.classes,
        })
    }
}

/// Result of drawing the labeled target subset from a labeled pool.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSplit {
    pub labeled: LabeledSet,
    pub unlabeled: Matrix,
    pub unlabeled_truth: Vec<usize>,
    /// Pool rows that became labeled, ascending.
    pub labeled_rows: Vec<usize>,
    /// Pool rows that became unlabeled, ascending.
    pub unlabeled_rows: Vec<usize>,
}

/// Picks exactly `m` labeled rows per class, uniformly without replacement
/// from the seed's split stream; every other row becomes unlabeled.
pub fn split_protocol(pool: &LabeledSet, classes: usize, m: usize, seed: u64) -> Result<TargetSplit> {
    check_labels(&pool.y, classes)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in pool.y.iter().enumerate() {
        by_class[y].push(i);
    }
    for (k, rows) in by_class.iter().enumerate() {
        if rows.len() <= m {
            return Err(Error::Protocol(format!(
                "class {k} has {} instances, need more than m = {m}",
                rows.len()
            )));
        }
    }

    let mut rng = rng::stream(seed, Stream::Split);
    let mut is_labeled = vec![false; pool.len()];
    for rows in &mut by_class {
        let (chosen, _) = rows.partial_shuffle(&mut rng, m);
        for &i in chosen.iter() {
            is_labeled[i] = true;
        }
    }
    let labeled_rows: Vec<usize> = (0..pool.len()).filter(|&i| is_labeled[i]).collect();
    let unlabeled_rows: Vec<usize> = (0..pool.len()).filter(|&i| !is_labeled[i]).collect();

    Ok(TargetSplit {
        labeled: LabeledSet {
            x: pool.x.select_rows(&labeled_rows)?,
            y: labeled_rows.iter().map(|&i| pool.y[i]).collect(),
        },
        unlabeled: pool.x.select_rows(&unlabeled_rows)?,
        unlabeled_truth: unlabeled_rows.iter().map(|&i| pool.y[i]).collect(),
        labeled_rows,
        unlabeled_rows,
    })
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// `None` marks a (near) constant feature that is only centered.
    pub scale: Vec<Option<f64>>,
}

const VARIANCE_FLOOR: f64 = 1e-12;

impl Standardizer {
    pub fn fit(reference: &Matrix) -> Self {
        let (n, d) = reference.shape();
        let mut mean = vec![0.0; d];
        let mut scale = vec![None; d];
        if n == 0 {
            return Self { mean, scale };
        }
        for row in reference.row_iter() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; d];
        for row in reference.row_iter() {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for (s, v) in scale.iter_mut().zip(var) {
            let v = v / n as f64;
            if v >= VARIANCE_FLOOR {
                *s = Some(libm::sqrt(v));
            }
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::Dimension {
                op: "Standardizer::apply",
                lhs: x.shape(),
                rhs: (1, self.mean.len()),
            });
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, &m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v -= m;
                if let Some(s) = s {
                    *v /= s;
                }
            }
        }
        Ok(out)
    }
}

/// Standardizes every matrix in `apply_to` with statistics of `reference`.
pub fn standardize(reference: &Matrix, apply_to: &[&Matrix]) -> Result<Vec<Matrix>> {
    let s = Standardizer::fit(reference);
    apply_to.iter().map(|m| s.apply(m)).collect()
}

/// Parameters of a synthetic heterogeneous task.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub classes: usize,
    pub latent_dim: usize,
    pub source_dim: usize,
    pub target_dim: usize,
    /// Distance of every class mean from the latent origin.
    pub separation: f64,
    /// Standard deviation of the latent within-class noise.
    pub noise: f64,
    pub per_class: usize,
    /// Labeled target instances per class.
    pub labeled_per_class: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 6,
            latent_dim: 8,
            source_dim: 40,
            target_dim: 24,
            separation: 3.0,
            noise: 0.5,
            per_class: 60,
            labeled_per_class: 3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("classes", self.classes),
            ("latent_dim", self.latent_dim),
            ("source_dim", self.source_dim),
            ("target_dim", self.target_dim),
            ("per_class", self.per_class),
            ("labeled_per_class", self.labeled_per_class),
        ];
        for (name, c) in counts {
            if c == 0 {
                return Err(Error::Parameter(format!("{name} must be at least 1")));
            }
        }
        if !(self.separation > 0.0) {
            return Err(Error::Parameter(format!(
                "separation must be positive, got {}",
                self.separation
            )));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise must be non-negative, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Fully labeled synthetic source and target pools plus their latents.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPool {
    pub source: LabeledSet,
    pub target: LabeledSet,
    pub source_latent: Matrix,
    pub target_latent: Matrix,
    pub class_means: Matrix,
}

fn gaussian_matrix(rng: &mut rng::Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::new(rows, cols, data).expect("length matches shape")
}

/// Draws a task where both domains observe the same latent classes through
/// independent random maps: `x = tanh(latent · A) + eps`.
pub fn synth_pool(spec: &SynthSpec) -> Result<SynthPool> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Stream::Synth);

    let mut class_means = gaussian_matrix(&mut rng, spec.classes, spec.latent_dim, 1.0);
    for k in 0..spec.classes {
        let row = class_means.row_mut(k);
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>()).max(1e-12);
        for v in row {
            *v *= spec.separation / norm;
        }
    }
    let proj_scale = 1.0 / libm::sqrt(spec.latent_dim as f64);
    let a_s = gaussian_matrix(&mut rng, spec.latent_dim, spec.source_dim, proj_scale);
    let a_t = gaussian_matrix(&mut rng, spec.latent_dim, spec.target_dim, proj_scale);

    let mut draw = |proj: &Matrix| -> Result<(LabeledSet, Matrix)> {
        let n = spec.classes * spec.per_class;
        let mut latent = Matrix::zeros(n, spec.latent_dim);
        let mut labels = Vec::with_capacity(n);
        for k in 0..spec.classes {
            for j in 0..spec.per_class {
                let row = latent.row_mut(k * spec.per_class + j);
                for (v, &m) in row.iter_mut().zip(class_means.row(k)) {
                    *v = m + spec.noise * rng.sample::<f64, _>(StandardNormal);
                }
                labels.push(k);
            }
        }
        let mut x = latent.matmul(proj)?.map(libm::tanh);
        for v in x.as_mut_slice() {
            *v += spec.noise * rng.sample::<f64, _>(StandardNormal);
        }
        Ok((LabeledSet { x, y: labels }, latent))
    };
    let (source, source_latent) = draw(&a_s)?;
    let (target, target_latent) = draw(&a_t)?;
    Ok(SynthPool {
        source,
        target,
        source_latent,
        target_latent,
        class_means,
    })
}

/// Synthetic task with the target pool split into `labeled_per_class`
/// labeled rows per class and the rest unlabeled (truth retained).
pub fn synth_generate(spec: &SynthSpec) -> Result<HdaDataset> {
    let pool = synth_pool(spec)?;
    let split = split_protocol(&pool.target, spec.classes, spec.labeled_per_class, spec.seed)?;
    HdaDataset::new(
        pool.source,
        split.labeled,
        split.unlabeled,
        Some(split.unlabeled_truth),
        spec.classes,
    )
}
