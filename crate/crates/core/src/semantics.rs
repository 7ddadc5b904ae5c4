//! Class centroids, geometric-similarity labels and consensus pseudo-labels.
//!
//! Two kinds of centroids are in play. [`supervised_centroids`] averages the
//! labeled source and labeled target features of each class; it is plain
//! data, refreshed once per epoch, and only used to vote on pseudo-labels.
//! [`triplet_centroids`] builds the per-class source, target and combined
//! means on the tape so that the alignment loss reaches the encoders.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::check_labels;
use crate::numerics::{argmax, dot, Matrix, Tape, Var};

/// Norm below which a vector is treated as zero.
const NORM_FLOOR: f64 = 1e-12;

/// Cosine of the angle between `a` and `b`.
///
/// Returns `-1` when either vector has (near) zero norm so that such a
/// comparison can never win an argmax.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            op: "cosine_similarity",
            lhs: (1, a.len()),
            rhs: (1, b.len()),
        });
    }
    let na = libm::sqrt(dot(a, a));
    let nb = libm::sqrt(dot(b, b));
    if na < NORM_FLOOR || nb < NORM_FLOOR {
        return Ok(-1.0);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Per-class mean of labeled features from both domains.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    pub mu: Matrix,
    /// `defined[k]` is false when class `k` had no contributing instance.
    pub defined: Vec<bool>,
}

impl CentroidSet {
    pub fn classes(&self) -> usize {
        self.mu.rows()
    }
}

fn check_features(z: &Matrix, labels: &[usize], op: &'static str) -> Result<()> {
    if z.rows() != labels.len() {
        return Err(Error::Dimension {
            op,
            lhs: z.shape(),
            rhs: (labels.len(), z.cols()),
        });
    }
    Ok(())
}

/// Centroid of each class over the encoded labeled source and labeled
/// target instances together.
pub fn supervised_centroids(
    z_source: &Matrix,
    y_source: &[usize],
    z_labeled: &Matrix,
    y_labeled: &[usize],
    classes: usize,
) -> Result<CentroidSet> {
    check_features(z_source, y_source, "supervised_centroids(source)")?;
    check_features(z_labeled, y_labeled, "supervised_centroids(target)")?;
    if z_source.cols() != z_labeled.cols() {
        return Err(Error::Dimension {
            op: "supervised_centroids",
            lhs: z_source.shape(),
            rhs: z_labeled.shape(),
        });
    }
    check_labels(y_source, classes)?;
    check_labels(y_labeled, classes)?;

    let mut mu = Matrix::zeros(classes, z_source.cols());
    let mut counts = vec![0usize; classes];
    let rows = y_source
        .iter()
        .enumerate()
        .map(|(i, &y)| (y, z_source.row(i)))
        .chain(y_labeled.iter().enumerate().map(|(i, &y)| (y, z_labeled.row(i))));
    for (y, row) in rows {
        counts[y] += 1;
        for (acc, &v) in mu.row_mut(y).iter_mut().zip(row) {
            *acc += v;
        }
    }
    for (k, &count) in counts.iter().enumerate() {
        if count > 0 {
            for v in mu.row_mut(k) {
                *v /= count as f64;
            }
        }
    }
    Ok(CentroidSet {
        mu,
        defined: counts.iter().map(|&c| c > 0).collect(),
    })
}

/// Class whose defined centroid is most cosine-similar to `z`.
/// Ties resolve to the lowest class index.
pub fn gs_label(z: &[f64], centroids: &CentroidSet) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in 0..centroids.classes() {
        if !centroids.defined[k] {
            continue;
        }
        let s = cosine_similarity(z, centroids.mu.row(k))?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| Error::Protocol("no class centroid is defined".into()))
}

/// Classifier and geometric votes for one unlabeled instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PseudoLabel {
    /// Classifier argmax.
    pub nn: usize,
    /// Geometric-similarity label.
    pub gs: usize,
    pub selected: bool,
}

impl PseudoLabel {
    pub fn assigned(&self) -> Option<usize> {
        self.selected.then_some(self.nn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PseudoLabelAssignment {
    pub labels: Vec<PseudoLabel>,
}

impl PseudoLabelAssignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.labels.iter().filter(|l| l.selected).count()
    }

    /// `(row, assigned class)` for every selected instance, in row order.
    pub fn selected(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.assigned().map(|y| (i, y)))
    }

    /// Classifier-only selection: every instance keeps its argmax label.
    pub fn select_all_nn(mut self) -> Self {
        for l in &mut self.labels {
            l.selected = true;
        }
        self
    }
}

/// Keeps an unlabeled instance only where the classifier argmax and the
/// geometric-similarity label agree. No confidence threshold is involved.
pub fn refine_pseudo_labels(logits_u: &Matrix, z_u: &Matrix, centroids: &CentroidSet) -> Result<PseudoLabelAssignment> {
    if logits_u.rows() != z_u.rows() {
        return Err(Error::Dimension {
            op: "refine_pseudo_labels",
            lhs: logits_u.shape(),
            rhs: z_u.shape(),
        });
    }
    if z_u.cols() != centroids.mu.cols() || logits_u.cols() != centroids.classes() {
        return Err(Error::Dimension {
            op: "refine_pseudo_labels",
            lhs: z_u.shape(),
            rhs: centroids.mu.shape(),
        });
    }
    let labels = (0..z_u.rows())
        .map(|i| {
            let nn = argmax(logits_u.row(i));
            let gs = gs_label(z_u.row(i), centroids)?;
            Ok(PseudoLabel {
                nn,
                gs,
                selected: nn == gs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PseudoLabelAssignment { labels })
}

/// Per-class source, target and combined centroids living on a tape.
///
/// Rows of classes without members on a side are zero; `active` marks the
/// classes that have at least one source and one target member.
#[derive(Debug, Clone)]
pub struct TripletCentroids {
    pub mu_s: Var,
    pub mu_t: Var,
    pub mu_st: Var,
    pub active: Vec<bool>,
    pub source_counts: Vec<usize>,
    pub target_counts: Vec<usize>,
}

impl TripletCentroids {
    pub fn active_classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(k, _)| k)
    }
}

fn class_counts(labels: &[usize], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for &y in labels {
        counts[y] += 1;
    }
    counts
}

/// `out[k][i] = 1 / denom[k]` where `labels[i] == k` (zero rows for empty classes).
fn averaging_matrix(labels: &[usize], denom: &[usize]) -> Matrix {
    let mut a = Matrix::zeros(denom.len(), labels.len());
    for (i, &y) in labels.iter().enumerate() {
        if denom[y] > 0 {
            a.set(y, i, 1.0 / denom[y] as f64);
        }
    }
    a
}

/// Builds the triplet centroids of every class as differentiable functions
/// of the encoded source rows `z_s` and target rows `z_t` (labeled plus
/// consensus pseudo-labeled).
///
/// The combined centroid is the mean over the pooled members, i.e. the
/// count-weighted combination of the source and target means.
pub fn triplet_centroids(
    tape: &mut Tape,
    z_s: Var,
    y_s: &[usize],
    z_t: Var,
    y_t: &[usize],
    classes: usize,
) -> Result<TripletCentroids> {
    check_features(tape.value(z_s), y_s, "triplet_centroids(source)")?;
    check_features(tape.value(z_t), y_t, "triplet_centroids(target)")?;
    check_labels(y_s, classes)?;
    check_labels(y_t, classes)?;

    let source_counts = class_counts(y_s, classes);
    let target_counts = class_counts(y_t, classes);
    let pooled: Vec<usize> = source_counts.iter().zip(&target_counts).map(|(a, b)| a + b).collect();

    let avg_s = tape.constant(averaging_matrix(y_s, &source_counts));
    let avg_t = tape.constant(averaging_matrix(y_t, &target_counts));
    let pool_s = tape.constant(averaging_matrix(y_s, &pooled));
    let pool_t = tape.constant(averaging_matrix(y_t, &pooled));

    let mu_s = tape.matmul(avg_s, z_s)?;
    let mu_t = tape.matmul(avg_t, z_t)?;
    let part_s = tape.matmul(pool_s, z_s)?;
    let part_t = tape.matmul(pool_t, z_t)?;
    let mu_st = tape.add(part_s, part_t)?;

    let active = source_counts
        .iter()
        .zip(&target_counts)
        .map(|(&a, &b)| a > 0 && b > 0)
        .collect();
    Ok(TripletCentroids {
        mu_s,
        mu_t,
        mu_st,
        active,
        source_counts,
        target_counts,
    })
}
