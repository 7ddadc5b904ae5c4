//! Loss terms of the joint objective.
//!
//! Every differentiable loss takes tape handles and returns a 1x1 node.
//! Constants derived from the data (one-hot targets, soft-label rows,
//! averaging weights) enter the tape as constants, so they never receive
//! gradients.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Player;
use crate::numerics::{ops, Matrix, Tape, Var};
use crate::semantics::TripletCentroids;

/// Mixing and balancing weights of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    /// Share of the soft-label term inside the implicit correlation loss.
    pub alpha: f64,
    /// Weight of the explicit centroid alignment loss.
    pub beta: f64,
    /// Weight of the adversarial domain loss.
    pub gamma: f64,
    /// Softmax temperature used to build the soft-label bank.
    pub temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.004,
            gamma: 0.01,
            temperature: 5.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Parameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Parameter(format!(
                "beta and gamma must be non-negative, got {} and {}",
                self.beta, self.gamma
            )));
        }
        ops::check_temperature(self.temperature)
    }
}

/// Per-class average of temperature-softened source predictions.
///
/// Row `k` is the teacher distribution for class `k`. The bank is plain
/// data: it is rebuilt once per epoch and enters the tape only as a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelBank {
    pub q: Matrix,
    pub temperature: f64,
    pub epoch_computed: usize,
}

impl SoftLabelBank {
    pub fn classes(&self) -> usize {
        self.q.rows()
    }

    pub fn row(&self, class: usize) -> &[f64] {
        self.q.row(class)
    }
}

pub(crate) fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Label { row, label, classes });
        }
    }
    Ok(())
}

fn check_rows(rows: usize, labels: usize, op: &'static str) -> Result<()> {
    if rows != labels {
        return Err(Error::Dimension {
            op,
            lhs: (rows, 0),
            rhs: (labels, 0),
        });
    }
    if rows == 0 {
        return Err(Error::Protocol(format!("{op}: empty batch")));
    }
    Ok(())
}

/// Mean cross-entropy `-log softmax(logits)[label]`.
pub fn supervised_loss(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let (n, k) = tape.value(logits).shape();
    check_rows(n, labels.len(), "supervised_loss")?;
    check_labels(labels, k)?;
    let mut weights = Matrix::zeros(n, k);
    let w = -1.0 / n as f64;
    for (i, &y) in labels.iter().enumerate() {
        weights.set(i, y, w);
    }
    let log_p = tape.log_softmax_rows(logits, 1.0)?;
    let picked = tape.mul_const(log_p, weights)?;
    Ok(tape.sum(picked))
}

/// Builds the soft-label bank: `q[k] = mean over source rows of class k of
/// softmax(logits / temperature)`.
pub fn compute_soft_labels(source_logits: &Matrix, source_labels: &[usize], temperature: f64) -> Result<SoftLabelBank> {
    let (n, k) = source_logits.shape();
    check_rows(n, source_labels.len(), "compute_soft_labels")?;
    check_labels(source_labels, k)?;
    let probs = ops::softmax_rows(source_logits, temperature)?;
    let mut q = Matrix::zeros(k, k);
    let mut counts = alloc::vec![0usize; k];
    for (i, &y) in source_labels.iter().enumerate() {
        counts[y] += 1;
        for (acc, &p) in q.row_mut(y).iter_mut().zip(probs.row(i)) {
            *acc += p;
        }
    }
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::Protocol(format!("class {class} has no source instance")));
        }
        for v in q.row_mut(class) {
            *v /= count as f64;
        }
    }
    Ok(SoftLabelBank {
        q,
        temperature,
        epoch_computed: 0,
    })
}

/// `-(1/n) Σ_i q[y_i]ᵀ log p_i` with `log` floored at 1e-12.
pub fn soft_loss(tape: &mut Tape, target_probs: Var, labels: &[usize], bank: &SoftLabelBank) -> Result<Var> {
    let (n, k) = tape.value(target_probs).shape();
    check_rows(n, labels.len(), "soft_loss")?;
    if bank.classes() != k || bank.q.cols() != k {
        return Err(Error::Dimension {
            op: "soft_loss",
            lhs: (n, k),
            rhs: bank.q.shape(),
        });
    }
    check_labels(labels, k)?;
    let w = -1.0 / n as f64;
    let mut weights = Matrix::zeros(n, k);
    for (i, &y) in labels.iter().enumerate() {
        for (dst, &q) in weights.row_mut(i).iter_mut().zip(bank.row(y)) {
            *dst = w * q;
        }
    }
    let log_p = tape.log_clamped(target_probs);
    let weighted = tape.mul_const(log_p, weights)?;
    Ok(tape.sum(weighted))
}

/// `(1 - alpha)·J_sup + alpha·J_soft` on labeled target rows.
///
/// The student distribution is `softmax(logits / student_temperature)`;
/// pass `1.0` for the form used by default. At `alpha == 0` or `alpha == 1`
/// the unused term is not built at all.
pub fn isc_loss(
    tape: &mut Tape,
    target_logits: Var,
    labels: &[usize],
    bank: &SoftLabelBank,
    alpha: f64,
    student_temperature: f64,
) -> Result<Var> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if alpha == 0.0 {
        return supervised_loss(tape, target_logits, labels);
    }
    let probs = tape.softmax_rows(target_logits, student_temperature)?;
    let soft = soft_loss(tape, probs, labels, bank)?;
    if alpha == 1.0 {
        return Ok(soft);
    }
    let sup = supervised_loss(tape, target_logits, labels)?;
    let sup = tape.scale(sup, 1.0 - alpha);
    let soft = tape.scale(soft, alpha);
    tape.add(sup, soft)
}

/// Sum over active classes of the three pairwise squared distances between
/// the source, target and combined centroids. Returns a constant zero when
/// no class is active.
pub fn esa_loss(tape: &mut Tape, triplet: &TripletCentroids) -> Result<Var> {
    let active: Vec<usize> = triplet.active_classes().collect();
    if active.is_empty() {
        log::warn!("esa_loss: no class has both source and target centroids; contributing 0");
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    let mu_s = tape.select_rows(triplet.mu_s, &active)?;
    let mu_t = tape.select_rows(triplet.mu_t, &active)?;
    let mu_st = tape.select_rows(triplet.mu_st, &active)?;
    let mut total = None;
    for (a, b) in [(mu_s, mu_t), (mu_s, mu_st), (mu_t, mu_st)] {
        let d = tape.sub(a, b)?;
        let sq = tape.sum_squares(d);
        total = Some(match total {
            None => sq,
            Some(acc) => tape.add(acc, sq)?,
        });
    }
    Ok(total.expect("three terms"))
}

fn mean_log(tape: &mut Tape, p: Var, op: &'static str) -> Result<Var> {
    let (n, c) = tape.value(p).shape();
    if c != 1 {
        return Err(Error::Dimension {
            op,
            lhs: (n, c),
            rhs: (n, 1),
        });
    }
    if n == 0 {
        return Err(Error::Protocol(format!("{op}: empty domain")));
    }
    let logs = tape.log_clamped(p);
    let total = tape.sum(logs);
    Ok(tape.scale(total, 1.0 / n as f64))
}

/// Binary discriminator log-likelihood:
/// `mean log D(f_S) + mean log(1 - D(f_T))`, the target mean running over
/// labeled and unlabeled rows together.
pub fn domain_loss(tape: &mut Tape, d_source: Var, d_target: Var) -> Result<Var> {
    let src = mean_log(tape, d_source, "domain_loss(source)")?;
    let (n, c) = tape.value(d_target).shape();
    let ones = tape.constant(Matrix::filled(n, c, 1.0));
    let complement = tape.sub(ones, d_target)?;
    let tgt = mean_log(tape, complement, "domain_loss(target)")?;
    tape.add(src, tgt)
}

/// Loss terms of one forward pass. Absent terms are switched off.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub supervised: Var,
    pub isc: Var,
    pub esa: Option<Var>,
    pub domain: Option<Var>,
}

/// Objective each player minimizes.
///
/// Encoders and classifier: `L_S + L_ISC + beta·L_ESA + gamma·L_D`.
/// Discriminator: `-gamma·L_D`, i.e. ascent on `L_D`.
pub fn total_objective(tape: &mut Tape, parts: &LossParts, weights: &LossWeights, role: Player) -> Result<Var> {
    match role {
        Player::EncoderClassifier => {
            let mut total = tape.add(parts.supervised, parts.isc)?;
            if let Some(esa) = parts.esa.filter(|_| weights.beta != 0.0) {
                let term = tape.scale(esa, weights.beta);
                total = tape.add(total, term)?;
            }
            if let Some(domain) = parts.domain.filter(|_| weights.gamma != 0.0) {
                let term = tape.scale(domain, weights.gamma);
                total = tape.add(total, term)?;
            }
            Ok(total)
        }
        Player::Discriminator => match parts.domain {
            Some(domain) => Ok(tape.scale(domain, -weights.gamma)),
            None => Ok(tape.constant(Matrix::scalar(0.0))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::triplet_centroids;

    const LN2: f64 = core::f64::consts::LN_2;

    fn scalar(tape: &Tape, v: Var) -> f64 {
        tape.value(v).item().unwrap()
    }

    #[test]
    fn supervised_loss_examples() {
        let mut tape = Tape::new();
        let z = tape.constant(Matrix::zeros(3, 2));
        let l = supervised_loss(&mut tape, z, &[0, 1, 1]).unwrap();
        assert!((scalar(&tape, l) - LN2).abs() < 1e-12);

        let confident = tape.constant(Matrix::from_rows(&[[50.0, -50.0], [-50.0, 50.0]]).unwrap());
        let l = supervised_loss(&mut tape, confident, &[0, 1]).unwrap();
        assert!(scalar(&tape, l) < 1e-40);

        let logits = Matrix::from_rows(&[[0.2, 1.0, -0.3], [2.0, 0.0, 0.1]]).unwrap();
        let doubled = logits.vstack(&logits).unwrap();
        let a = tape.constant(logits);
        let b = tape.constant(doubled);
        let la = supervised_loss(&mut tape, a, &[2, 0]).unwrap();
        let lb = supervised_loss(&mut tape, b, &[2, 0, 2, 0]).unwrap();
        assert!((scalar(&tape, la) - scalar(&tape, lb)).abs() < 1e-15);
    }

    #[test]
    fn supervised_loss_reports_bad_label_row() {
        let mut tape = Tape::new();
        let z = tape.constant(Matrix::zeros(3, 2));
        assert_eq!(
            supervised_loss(&mut tape, z, &[0, 1, 2]).unwrap_err(),
            Error::Label {
                row: 2,
                label: 2,
                classes: 2
            }
        );
    }

    #[test]
    fn soft_label_examples() {
        let bank = compute_soft_labels(&Matrix::zeros(4, 2), &[0, 1, 0, 1], 5.0).unwrap();
        assert!(bank.q.as_slice().iter().all(|&v| (v - 0.5).abs() < 1e-15));

        let logits = Matrix::from_rows(&[[1.0, 2.0, 0.0], [0.0, 0.0, 3.0], [-1.0, 4.0, 0.5]]).unwrap();
        let bank = compute_soft_labels(&logits, &[0, 2, 1], 2.0).unwrap();
        let probs = ops::softmax_rows(&logits, 2.0).unwrap();
        assert_eq!(bank.row(0), probs.row(0));
        assert_eq!(bank.row(2), probs.row(1));
        assert_eq!(bank.row(1), probs.row(2));

        // K = 2, T = 1: softmax([ln 4, 0]) = [4/5, 1/5], softmax([0, 0]) = [1/2, 1/2],
        // so q[0] = [13/20, 7/20].
        let logits = Matrix::from_rows(&[[libm::log(4.0), 0.0], [0.0, 0.0], [0.0, 1.0]]).unwrap();
        let bank = compute_soft_labels(&logits, &[0, 0, 1], 1.0).unwrap();
        for (a, b) in bank.row(0).iter().zip([13.0 / 20.0, 7.0 / 20.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn soft_label_three_class_hand_average() {
        // K = 3: softmax([ln 4, 0, 0]) = [4/6, 1/6, 1/6], averaged with the uniform row.
        let logits = Matrix::from_rows(&[
            [libm::log(4.0), 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 9.0],
            [0.0, 9.0, 0.0],
        ])
        .unwrap();
        let bank = compute_soft_labels(&logits, &[0, 0, 2, 1], 1.0).unwrap();
        let expected = [
            (4.0 / 6.0 + 1.0 / 3.0) / 2.0,
            (1.0 / 6.0 + 1.0 / 3.0) / 2.0,
            (1.0 / 6.0 + 1.0 / 3.0) / 2.0,
        ];
        for (a, b) in bank.row(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_source_class_is_a_protocol_error() {
        let err = compute_soft_labels(&Matrix::zeros(2, 3), &[0, 2], 1.0).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn soft_loss_examples() {
        let mut tape = Tape::new();
        let bank = SoftLabelBank {
            q: Matrix::filled(2, 2, 0.5),
            temperature: 5.0,
            epoch_computed: 0,
        };
        let p = tape.constant(Matrix::filled(3, 2, 0.5));
        let l = soft_loss(&mut tape, p, &[0, 1, 1], &bank).unwrap();
        assert!((scalar(&tape, l) - LN2).abs() < 1e-12);

        let one_hot = SoftLabelBank {
            q: Matrix::identity(2),
            temperature: 1.0,
            epoch_computed: 0,
        };
        let p = tape.constant(Matrix::identity(2));
        let l = soft_loss(&mut tape, p, &[0, 1], &one_hot).unwrap();
        assert_eq!(scalar(&tape, l), 0.0);

        let probs = Matrix::from_rows(&[[0.2, 0.8], [0.9, 0.1]]).unwrap();
        let bank = SoftLabelBank {
            q: Matrix::from_rows(&[[0.7, 0.3], [0.4, 0.6]]).unwrap(),
            temperature: 5.0,
            epoch_computed: 0,
        };
        let a = tape.constant(probs.clone());
        let b = tape.constant(probs.vstack(&probs).unwrap());
        let la = soft_loss(&mut tape, a, &[1, 0], &bank).unwrap();
        let lb = soft_loss(&mut tape, b, &[1, 0, 1, 0], &bank).unwrap();
        assert!((scalar(&tape, la) - scalar(&tape, lb)).abs() < 1e-15);

        let empty = tape.constant(Matrix::zeros(0, 2));
        assert!(matches!(
            soft_loss(&mut tape, empty, &[], &bank),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn isc_boundaries_and_mix() {
        let logits = Matrix::from_rows(&[[0.3, -1.0, 2.0], [1.0, 0.5, 0.0]]).unwrap();
        let labels = [2, 1];
        let bank = SoftLabelBank {
            q: Matrix::from_rows(&[[0.6, 0.2, 0.2], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]]).unwrap(),
            temperature: 5.0,
            epoch_computed: 0,
        };
        let mut tape = Tape::new();
        let x = tape.constant(logits);
        let sup = supervised_loss(&mut tape, x, &labels).unwrap();
        let probs = tape.softmax_rows(x, 1.0).unwrap();
        let soft = soft_loss(&mut tape, probs, &labels, &bank).unwrap();
        let (sup, soft) = (scalar(&tape, sup), scalar(&tape, soft));

        let l0 = isc_loss(&mut tape, x, &labels, &bank, 0.0, 1.0).unwrap();
        assert_eq!(scalar(&tape, l0), sup);
        let l1 = isc_loss(&mut tape, x, &labels, &bank, 1.0, 1.0).unwrap();
        assert_eq!(scalar(&tape, l1), soft);
        for alpha in [0.1, 0.5, 0.9] {
            let l = isc_loss(&mut tape, x, &labels, &bank, alpha, 1.0).unwrap();
            let expected = (1.0 - alpha) * sup + alpha * soft;
            assert!((scalar(&tape, l) - expected).abs() < 1e-14);
        }
        assert!(isc_loss(&mut tape, x, &labels, &bank, 1.5, 1.0).is_err());
        // convex combination arithmetic
        assert!((0.5 * 0.2 + 0.5 * 0.6 - 0.4f64).abs() < 1e-15);
    }

    #[test]
    fn esa_two_point_case() {
        let mut tape = Tape::new();
        let zs = tape.constant(Matrix::row_vector(&[1.0, 0.0]));
        let zt = tape.constant(Matrix::row_vector(&[0.0, 0.0]));
        let triplet = triplet_centroids(&mut tape, zs, &[0], zt, &[0], 1).unwrap();
        assert_eq!(tape.value(triplet.mu_st).as_slice(), &[0.5, 0.0]);
        let l = esa_loss(&mut tape, &triplet).unwrap();
        assert!((scalar(&tape, l) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn esa_zero_for_collapsed_centroids_and_translation_invariant() {
        let feats = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]).unwrap();
        let mut tape = Tape::new();
        let zs = tape.constant(feats.clone());
        let zt = tape.constant(feats.clone());
        let t = triplet_centroids(&mut tape, zs, &[0, 1, 1], zt, &[0, 1, 1], 2).unwrap();
        let l = esa_loss(&mut tape, &t).unwrap();
        assert_eq!(scalar(&tape, l), 0.0);

        let src = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]).unwrap();
        let tgt = Matrix::from_rows(&[[0.0, 1.0], [2.0, 2.0]]).unwrap();
        let shift = Matrix::row_vector(&[10.0, -7.0]);
        let value = |s: &Matrix, t: &Matrix| {
            let mut tape = Tape::new();
            let zs = tape.constant(s.clone());
            let zt = tape.constant(t.clone());
            let tri = triplet_centroids(&mut tape, zs, &[0, 1, 1], zt, &[1, 0], 2).unwrap();
            let l = esa_loss(&mut tape, &tri).unwrap();
            tape.value(l).item().unwrap()
        };
        let base = value(&src, &tgt);
        let moved = value(
            &src.add_row_broadcast(&shift).unwrap(),
            &tgt.add_row_broadcast(&shift).unwrap(),
        );
        assert!((base - moved).abs() < 1e-10);
    }

    #[test]
    fn esa_with_no_active_class_is_zero() {
        let mut tape = Tape::new();
        let zs = tape.constant(Matrix::row_vector(&[1.0, 0.0]));
        let zt = tape.constant(Matrix::zeros(0, 2));
        let t = triplet_centroids(&mut tape, zs, &[0], zt, &[], 2).unwrap();
        let l = esa_loss(&mut tape, &t).unwrap();
        assert_eq!(scalar(&tape, l), 0.0);
    }

    #[test]
    fn domain_loss_examples() {
        let mut tape = Tape::new();
        let ds = tape.constant(Matrix::filled(3, 1, 0.5));
        let dt = tape.constant(Matrix::filled(5, 1, 0.5));
        let l = domain_loss(&mut tape, ds, dt).unwrap();
        assert!((scalar(&tape, l) - 2.0 * libm::log(0.5)).abs() < 1e-12);
        assert!((scalar(&tape, l) + 1.3863).abs() < 1e-4);

        let ds = tape.constant(Matrix::filled(2, 1, 1.0 - 1e-7));
        let dt = tape.constant(Matrix::filled(2, 1, 1e-7));
        let l = domain_loss(&mut tape, ds, dt).unwrap();
        assert!(scalar(&tape, l) > -1e-6 && scalar(&tape, l) < 0.0);

        let ds = tape.constant(Matrix::from_rows(&[[0.3], [0.6]]).unwrap());
        let ds2 = tape.constant(Matrix::from_rows(&[[0.6], [0.3], [0.6], [0.3]]).unwrap());
        let dt = tape.constant(Matrix::from_rows(&[[0.2]]).unwrap());
        let a = domain_loss(&mut tape, ds, dt).unwrap();
        let b = domain_loss(&mut tape, ds2, dt).unwrap();
        assert!((scalar(&tape, a) - scalar(&tape, b)).abs() < 1e-15);

        let empty = tape.constant(Matrix::zeros(0, 1));
        assert!(matches!(domain_loss(&mut tape, empty, dt), Err(Error::Protocol(_))));
    }

    #[test]
    fn objective_roles() {
        let mut tape = Tape::new();
        let parts = LossParts {
            supervised: tape.constant(Matrix::scalar(0.7)),
            isc: tape.constant(Matrix::scalar(0.2)),
            esa: Some(tape.constant(Matrix::scalar(3.0))),
            domain: Some(tape.constant(Matrix::scalar(-1.3863))),
        };
        let w = LossWeights::default();
        let main = total_objective(&mut tape, &parts, &w, Player::EncoderClassifier).unwrap();
        let disc = total_objective(&mut tape, &parts, &w, Player::Discriminator).unwrap();
        let expected = 0.7 + 0.2 + 0.004 * 3.0 + 0.01 * -1.3863;
        assert!((scalar(&tape, main) - expected).abs() < 1e-15);
        assert!((scalar(&tape, disc) - 0.013863).abs() < 1e-15);
        // opposite-sign, equal-magnitude domain contributions
        assert_eq!(scalar(&tape, disc), -(0.01 * -1.3863));

        let off = LossWeights {
            beta: 0.0,
            gamma: 0.0,
            ..w
        };
        let main = total_objective(&mut tape, &parts, &off, Player::EncoderClassifier).unwrap();
        assert_eq!(scalar(&tape, main), 0.7 + 0.2);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let bad = LossWeights {
            alpha: 1.1,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
        let bad = LossWeights {
            temperature: 0.0,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
        let bad = LossWeights {
            gamma: -0.1,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
    }
}
