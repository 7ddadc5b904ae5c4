//! Accuracy, run aggregation, Welch's t-test and pseudo-label diagnostics.

pub mod stats;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::check_labels;
use crate::numerics::Matrix;
use crate::semantics::PseudoLabelAssignment;

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension {
            op: "accuracy",
            lhs: (predicted.len(), 1),
            rhs: (truth.len(), 1),
        });
    }
    if truth.is_empty() {
        return Err(Error::Protocol("accuracy of an empty set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub mean: f64,
    /// Bessel-corrected; zero for a single value.
    pub std: f64,
    pub count: usize,
}

pub fn aggregate_runs(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Protocol("cannot aggregate zero runs".into()));
    }
    let n = values.len() as f64;
    let mean = if values.iter().all(|&v| v == values[0]) {
        values[0]
    } else {
        values.iter().fold(0.0, |a, &v| a + v) / n
    };
    let std = if values.len() < 2 {
        0.0
    } else {
        let ss = values.iter().fold(0.0, |a, &v| a + (v - mean) * (v - mean));
        libm::sqrt(ss / (n - 1.0))
    };
    Ok(Summary {
        mean,
        std,
        count: values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value, in `(0, 1]`.
    pub p: f64,
    pub neg_log_p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().fold(0.0, |a, &v| a + v) / n;
    let ss = x.iter().fold(0.0, |a, &v| a + (v - mean) * (v - mean));
    (mean, ss / (n - 1.0))
}

/// Welch's unequal-variance t-test.
///
/// When both samples have zero variance the statistic is taken at its limit:
/// equal means give `t = 0, p = 1`; different means give `t = ±inf` and `p`
/// is reported as the smallest positive normal `f64`, keeping `-ln p` finite.
/// Degrees of freedom then fall back to `n_a + n_b - 2`.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Parameter(format!(
            "welch_ttest needs at least two values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;

    let (t, df, p) = if se2 == 0.0 {
        let df = na + nb - 2.0;
        if ma == mb {
            (0.0, df, 1.0)
        } else {
            let t = if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY };
            (t, df, 0.0)
        }
    } else {
        let t = (ma - mb) / libm::sqrt(se2);
        let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
        (t, df, stats::student_t_two_sided(t, df))
    };
    let p = p.max(f64::MIN_POSITIVE);
    Ok(WelchResult {
        t,
        df,
        p,
        neg_log_p: -libm::log(p),
    })
}

/// Agreement of classifier and geometric labels against the ground truth.
/// The five counts partition the unlabeled set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PseudoLabelStats {
    /// Both votes correct (hence agreeing, hence selected).
    pub both_correct: usize,
    pub nn_correct_gs_wrong: usize,
    pub gs_correct_nn_wrong: usize,
    /// Both wrong with the same label (selected, wrongly).
    pub both_wrong_agree: usize,
    pub both_wrong_disagree: usize,
}

impl PseudoLabelStats {
    pub fn total(&self) -> usize {
        self.both_correct
            + self.nn_correct_gs_wrong
            + self.gs_correct_nn_wrong
            + self.both_wrong_agree
            + self.both_wrong_disagree
    }

    pub fn selected(&self) -> usize {
        self.both_correct + self.both_wrong_agree
    }
}

pub fn pseudo_label_stats(assignment: &PseudoLabelAssignment, truth: &[usize]) -> Result<PseudoLabelStats> {
    if assignment.len() != truth.len() {
        return Err(Error::Dimension {
            op: "pseudo_label_stats",
            lhs: (assignment.len(), 1),
            rhs: (truth.len(), 1),
        });
    }
    let mut s = PseudoLabelStats::default();
    for (l, &y) in assignment.labels.iter().zip(truth) {
        match (l.nn == y, l.gs == y) {
            (true, true) => s.both_correct += 1,
            (true, false) => s.nn_correct_gs_wrong += 1,
            (false, true) => s.gs_correct_nn_wrong += 1,
            (false, false) if l.nn == l.gs => s.both_wrong_agree += 1,
            (false, false) => s.both_wrong_disagree += 1,
        }
    }
    Ok(s)
}

/// Mean predicted distribution per true class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHistogram {
    pub rows: Matrix,
    /// False for classes without any instance (their row is zero).
    pub defined: Vec<bool>,
}

pub fn class_prediction_histogram(probs: &Matrix, labels: &[usize], classes: usize) -> Result<ClassHistogram> {
    if probs.rows() != labels.len() {
        return Err(Error::Dimension {
            op: "class_prediction_histogram",
            lhs: probs.shape(),
            rhs: (labels.len(), probs.cols()),
        });
    }
    check_labels(labels, classes)?;
    let mut rows = Matrix::zeros(classes, probs.cols());
    let mut counts = vec![0usize; classes];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (acc, &p) in rows.row_mut(y).iter_mut().zip(probs.row(i)) {
            *acc += p;
        }
    }
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 {
            for v in rows.row_mut(k) {
                *v /= c as f64;
            }
        }
    }
    Ok(ClassHistogram {
        rows,
        defined: counts.iter().map(|&c| c > 0).collect(),
    })
}
