use proptest::prelude::*;
use ssan_core::eval::{self, class_prediction_histogram, pseudo_label_stats, welch_ttest};
use ssan_core::losses::{compute_soft_labels, esa_loss};
use ssan_core::numerics::{grad_check, softmax_rows, Matrix, ParamSet, Tape};
use ssan_core::semantics::{
    gs_label, refine_pseudo_labels, supervised_centroids, triplet_centroids, CentroidSet, PseudoLabel,
    PseudoLabelAssignment,
};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn matrix(rows: usize, cols: usize, range: std::ops::Range<f64>) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(range, rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

/// Matrix whose entries keep at least `gap` away from zero, so that kinks
/// of piecewise-linear functions are not straddled by a finite difference.
fn off_zero(rows: usize, cols: usize, gap: f64) -> impl Strategy<Value = Matrix> {
    matrix(rows, cols, -2.0..2.0).prop_map(move |m| m.map(|v| if v.abs() < gap { v.signum() * gap + v } else { v }))
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..5, 1usize..5, 1usize..5)
}

fn params(pairs: &[(&str, &Matrix)]) -> ParamSet {
    pairs.iter().map(|(n, m)| (n.to_string(), (*m).clone())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn linear_ops_match_finite_differences(
        (n, k, m) in dims(),
        seed in any::<u64>(),
    ) {
        let mut rng = ssan_core::rng::stream(seed, ssan_core::rng::Stream::Init);
        let mut draw = |r: usize, c: usize| {
            let d = (0..r * c).map(|_| rand_unit(&mut rng)).collect();
            Matrix::new(r, c, d).unwrap()
        };
        let (a, b, bias, other, weights) = (draw(n, k), draw(k, m), draw(1, m), draw(n, m), draw(n, m));
        let rows: Vec<usize> = (0..n).rev().chain(0..1).collect();
        let set = params(&[("a", &a), ("b", &b), ("bias", &bias), ("other", &other)]);
        let err = grad_check(
            |t, p| {
                let prod = t.matmul(p["a"], p["b"])?;
                let shifted = t.add_bias(prod, p["bias"])?;
                let diff = t.sub(shifted, p["other"])?;
                let summed = t.add(diff, p["other"])?;
                let scaled = t.scale(summed, -0.7);
                let weighted = t.mul_const(scaled, weights.clone())?;
                let picked = t.select_rows(weighted, &rows)?;
                let sq = t.sum_squares(picked);
                let lin = t.sum(picked);
                t.add(sq, lin)
            },
            &set,
            EPS,
        ).unwrap();
        prop_assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn pointwise_ops_match_finite_differences(
        x in off_zero(3, 4, 1e-3),
        slope in 0.01f64..0.5,
        w in matrix(3, 4, -1.0..1.0),
    ) {
        let set = params(&[("x", &x)]);
        let err = grad_check(
            |t, p| {
                let h = t.leaky_relu(p["x"], slope)?;
                let s = t.sigmoid(h);
                let c = t.clamp(s, 1e-7, 1.0 - 1e-7);
                let l = t.log(c, 1e-12);
                let weighted = t.mul_const(l, w.clone())?;
                Ok(t.sum(weighted))
            },
            &set,
            EPS,
        ).unwrap();
        prop_assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn softmax_ops_match_finite_differences(
        x in matrix(3, 5, -3.0..3.0),
        temperature in 0.5f64..8.0,
        w in matrix(3, 5, -1.0..1.0),
    ) {
        let set = params(&[("x", &x)]);
        let err = grad_check(
            |t, p| {
                let s = t.softmax_rows(p["x"], temperature)?;
                let ls = t.log_softmax_rows(p["x"], 1.0)?;
                let a = t.mul_const(s, w.clone())?;
                let b = t.mul_const(ls, w.clone())?;
                let sum = t.add(a, b)?;
                Ok(t.sum(sum))
            },
            &set,
            EPS,
        ).unwrap();
        prop_assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn softmax_rows_are_distributions_and_shift_invariant(
        x in matrix(4, 6, -30.0..30.0),
        shifts in proptest::collection::vec(-100.0f64..100.0, 4),
        temperature in 0.1f64..10.0,
    ) {
        let p = softmax_rows(&x, temperature).unwrap();
        for row in p.row_iter() {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let mut shifted = x.clone();
        for (r, c) in shifts.iter().enumerate() {
            for v in shifted.row_mut(r) {
                *v += c;
            }
        }
        let q = softmax_rows(&shifted, temperature).unwrap();
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_products_are_bitwise_consistent(
        (n, k, m) in (1usize..9, 1usize..6, 1usize..6),
        seed in any::<u64>(),
    ) {
        let mut rng = ssan_core::rng::stream(seed, ssan_core::rng::Stream::Init);
        let mut draw = |r: usize, c: usize| {
            let d = (0..r * c).map(|_| rand_unit(&mut rng)).collect();
            Matrix::new(r, c, d).unwrap()
        };
        let (a, g, b) = (draw(n, k), draw(n, m), draw(k, m));
        prop_assert_eq!(a.matmul_tn(&g).unwrap(), a.transpose().matmul(&g).unwrap());
        prop_assert_eq!(g.matmul_nt(&b).unwrap(), g.matmul(&b.transpose()).unwrap());
    }

    #[test]
    fn gs_label_is_scale_invariant(
        z in matrix(1, 4, -2.0..2.0),
        mu in matrix(3, 4, -2.0..2.0),
        c in 1e-3f64..1e3,
    ) {
        prop_assume!(z.sum_squares() > 1e-6);
        let centroids = CentroidSet { mu, defined: vec![true; 3] };
        let scaled = z.scale(c);
        prop_assert_eq!(
            gs_label(z.row(0), &centroids).unwrap(),
            gs_label(scaled.row(0), &centroids).unwrap()
        );
    }

    #[test]
    fn selection_depends_only_on_the_vote_pair(
        logits in matrix(12, 3, -2.0..2.0),
        z in matrix(12, 4, -2.0..2.0),
        mu in matrix(3, 4, -2.0..2.0),
    ) {
        let centroids = CentroidSet { mu, defined: vec![true; 3] };
        let assignment = refine_pseudo_labels(&logits, &z, &centroids).unwrap();
        for l in &assignment.labels {
            prop_assert_eq!(l.selected, l.nn == l.gs);
            prop_assert_eq!(l.assigned(), if l.nn == l.gs { Some(l.nn) } else { None });
        }
    }

    #[test]
    fn esa_is_nonnegative_and_pooled_mean_is_count_weighted(
        zs in matrix(6, 3, -2.0..2.0),
        zt in matrix(4, 3, -2.0..2.0),
        ys in proptest::collection::vec(0usize..3, 6),
        yt in proptest::collection::vec(0usize..3, 4),
    ) {
        let mut tape = Tape::new();
        let s = tape.constant(zs.clone());
        let t = tape.constant(zt.clone());
        let tri = triplet_centroids(&mut tape, s, &ys, t, &yt, 3).unwrap();
        let loss = esa_loss(&mut tape, &tri).unwrap();
        prop_assert!(tape.value(loss).item().unwrap() >= 0.0);
        let (ms, mt, mst) = (tape.value(tri.mu_s), tape.value(tri.mu_t), tape.value(tri.mu_st));
        for k in tri.active_classes() {
            let (ns, nt) = (tri.source_counts[k] as f64, tri.target_counts[k] as f64);
            for j in 0..3 {
                let expected = (ns * ms.get(k, j) + nt * mt.get(k, j)) / (ns + nt);
                prop_assert!((mst.get(k, j) - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn welch_is_symmetric_and_affine_invariant(
        a in proptest::collection::vec(0.0f64..1.0, 3..8),
        b in proptest::collection::vec(0.0f64..1.0, 3..8),
        shift in -10.0f64..10.0,
        scale in 0.1f64..10.0,
    ) {
        let ab = welch_ttest(&a, &b).unwrap();
        let ba = welch_ttest(&b, &a).unwrap();
        prop_assert!((ab.t + ba.t).abs() < 1e-12 * ab.t.abs().max(1.0));
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
        let map = |x: &[f64]| x.iter().map(|v| v * scale + shift).collect::<Vec<_>>();
        let moved = welch_ttest(&map(&a), &map(&b)).unwrap();
        prop_assert!((moved.t - ab.t).abs() < 1e-6 * ab.t.abs().max(1.0));
        prop_assert!((moved.p - ab.p).abs() < 1e-8);
        prop_assert!(ab.p > 0.0 && ab.p <= 1.0);
    }

    #[test]
    fn pseudo_label_stats_partition_the_unlabeled_set(
        votes in proptest::collection::vec((0usize..4, 0usize..4, 0usize..4), 0..40),
    ) {
        let assignment = PseudoLabelAssignment {
            labels: votes.iter().map(|&(nn, gs, _)| PseudoLabel { nn, gs, selected: nn == gs }).collect(),
        };
        let truth: Vec<usize> = votes.iter().map(|v| v.2).collect();
        let stats = pseudo_label_stats(&assignment, &truth).unwrap();
        prop_assert_eq!(stats.total(), votes.len());
        prop_assert_eq!(stats.selected(), assignment.selected_count());
    }

    #[test]
    fn histogram_rows_are_distributions(
        logits in matrix(10, 4, -3.0..3.0),
        labels in proptest::collection::vec(0usize..4, 10),
    ) {
        let probs = softmax_rows(&logits, 1.0).unwrap();
        let h = class_prediction_histogram(&probs, &labels, 4).unwrap();
        for (k, row) in h.rows.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if h.defined[k] {
                prop_assert!((s - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(s, 0.0);
            }
        }
    }

    #[test]
    fn soft_label_rows_sum_to_one_and_flatten_with_temperature(
        logits in matrix(8, 4, -4.0..4.0),
    ) {
        let labels = [0, 1, 2, 3, 0, 1, 2, 3];
        let spread = logits.as_slice().iter().cloned().fold(f64::MIN, f64::max)
            - logits.as_slice().iter().cloned().fold(f64::MAX, f64::min);
        for t in [1.0, 5.0, 1e6] {
            let bank = compute_soft_labels(&logits, &labels, t).unwrap();
            for k in 0..4 {
                prop_assert!((bank.row(k).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        let hot = compute_soft_labels(&logits, &labels, 1e6).unwrap();
        let bound = 2.0 * spread / 1e6;
        for k in 0..4 {
            prop_assert!(hot.row(k).iter().all(|&v| (v - 0.25).abs() <= bound));
        }

        // With one instance per class each row is a single softmax, whose
        // peak can only fall as the temperature rises.
        let single = logits.select_rows(&[0, 1, 2, 3]).unwrap();
        let cold = compute_soft_labels(&single, &labels[..4], 1.0).unwrap();
        let warm = compute_soft_labels(&single, &labels[..4], 5.0).unwrap();
        let max = |r: &[f64]| r.iter().cloned().fold(f64::MIN, f64::max);
        for k in 0..4 {
            prop_assert!(max(warm.row(k)) <= max(cold.row(k)) + 1e-15);
        }
    }
}

fn rand_unit(rng: &mut ssan_core::rng::Rng) -> f64 {
    use rand::Rng;
    rng.random_range(-1.0..1.0)
}

#[test]
fn supervised_centroids_feed_gs_labels() {
    let z = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    let c = supervised_centroids(&z, &[0, 1], &Matrix::zeros(0, 2), &[], 2).unwrap();
    assert_eq!(gs_label(&[2.0, 0.1], &c).unwrap(), 0);
    assert_eq!(gs_label(&[0.1, 2.0], &c).unwrap(), 1);
    assert_eq!(eval::accuracy(&[0, 1], &[0, 1]).unwrap(), 1.0);
}
