use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

use crate::error::{Error, Result};
use crate::numerics::{Gradients, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    first: Matrix,
    second: Matrix,
}

/// First/second moment accumulators for the parameters one optimizer owns.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    moments: BTreeMap<String, Moments>,
    step: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, name: &str) -> Option<&Matrix> {
        self.moments.get(name).map(|m| &m.first)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Matrix> {
        self.moments.get(name).map(|m| &m.second)
    }
}

/// One bias-corrected Adam update of every parameter that has an entry in
/// `grads`. Parameters without a gradient are left untouched.
pub fn adam_step<'p>(
    params: impl IntoIterator<Item = (&'p str, &'p mut Matrix)>,
    grads: &Gradients,
    state: &mut OptimizerState,
    cfg: &AdamConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as f64;
    let correction1 = 1.0 - libm::pow(cfg.beta1, t);
    let correction2 = 1.0 - libm::pow(cfg.beta2, t);

    for (name, param) in params {
        let Some(grad) = grads.get(name) else { continue };
        if grad.shape() != param.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                lhs: param.shape(),
                rhs: grad.shape(),
            });
        }
        let (rows, cols) = param.shape();
        let moments = state.moments.entry(name.to_string()).or_insert_with(|| Moments {
            first: Matrix::zeros(rows, cols),
            second: Matrix::zeros(rows, cols),
        });
        let m = moments.first.as_mut_slice();
        let v = moments.second.as_mut_slice();
        for (((p, &g), m), v) in param.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    fn grads_for(name: &str, g: Matrix) -> Gradients {
        // Gradients are only built by the tape; d(sum(w ⊙ g))/dw = g.
        let mut tape = Tape::new();
        let w = tape.param(name, Matrix::zeros(g.rows(), g.cols())).unwrap();
        let prod = tape.mul_const(w, g).unwrap();
        let loss = tape.sum(prod);
        tape.backward(loss).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let cfg = AdamConfig::default();
        let mut state = OptimizerState::new();
        let mut w = Matrix::row_vector(&[1.0, -2.0]);
        adam_step(
            [("w", &mut w)],
            &grads_for("w", Matrix::row_vector(&[0.5, 0.5])),
            &mut state,
            &cfg,
        )
        .unwrap();
        let before = w.clone();
        let m_before = state.first_moment("w").unwrap().clone();
        adam_step([("w", &mut w)], &grads_for("w", Matrix::zeros(1, 2)), &mut state, &cfg).unwrap();
        assert_ne!(w, before, "momentum still moves the parameter");

        let mut fresh = OptimizerState::new();
        let mut z = Matrix::row_vector(&[1.0, -2.0]);
        adam_step([("w", &mut z)], &grads_for("w", Matrix::zeros(1, 2)), &mut fresh, &cfg).unwrap();
        assert_eq!(z.as_slice(), &[1.0, -2.0]);
        let m_after = state.first_moment("w").unwrap();
        assert!((m_after.get(0, 0) - 0.9 * m_before.get(0, 0)).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient() {
        let cfg = AdamConfig::default();
        let mut state = OptimizerState::new();
        let mut w = Matrix::row_vector(&[0.0, 0.0, 0.0]);
        adam_step(
            [("w", &mut w)],
            &grads_for("w", Matrix::row_vector(&[3.0, -0.02, 1e3])),
            &mut state,
            &cfg,
        )
        .unwrap();
        // m_hat = g, v_hat = g², so each step is lr·g/(|g| + eps)
        let expected = [
            -1e-3 * 3.0 / (3.0 + 1e-8),
            1e-3 * 0.02 / (0.02 + 1e-8),
            -1e-3 * 1e3 / (1e3 + 1e-8),
        ];
        for (a, b) in w.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert_eq!(state.steps(), 1);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let cfg = AdamConfig::default();
            let mut state = OptimizerState::new();
            let mut w = Matrix::row_vector(&[0.3, -0.7]);
            for i in 0..10 {
                let g = Matrix::row_vector(&[libm::sin(i as f64), libm::cos(i as f64)]);
                adam_step([("w", &mut w)], &grads_for("w", g), &mut state, &cfg).unwrap();
            }
            w
        };
        let a: alloc::vec::Vec<u64> = run().as_slice().iter().map(|v| v.to_bits()).collect();
        let b: alloc::vec::Vec<u64> = run().as_slice().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = OptimizerState::new();
        let mut w = Matrix::zeros(2, 2);
        let err = adam_step(
            [("w", &mut w)],
            &grads_for("w", Matrix::zeros(1, 2)),
            &mut state,
            &AdamConfig::default(),
        );
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }
}
