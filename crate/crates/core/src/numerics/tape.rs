//! Define-by-run reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation in execution order, so node inputs
//! always precede the node itself. Leaves are either named parameters
//! (which receive gradients) or anonymous constants (which never do).
//! The tape is meant to be rebuilt for every training step.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::ops::{self, LOG_FLOOR};
use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    MulConst(usize, Matrix),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Clamp(usize, f64, f64),
    Log(usize, f64),
    Softmax(usize, f64),
    LogSoftmax(usize, f64),
    SumAll(usize),
    SumSquares(usize),
    SelectRows(usize, Vec<usize>),
}

impl Op {
    fn inputs(&self) -> [Option<usize>; 2] {
        match *self {
            Op::Leaf => [None, None],
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Add(a, b) | Op::Sub(a, b) => [Some(a), Some(b)],
            Op::Scale(a, _)
            | Op::MulConst(a, _)
            | Op::LeakyRelu(a, _)
            | Op::Sigmoid(a)
            | Op::Clamp(a, _, _)
            | Op::Log(a, _)
            | Op::Softmax(a, _)
            | Op::LogSoftmax(a, _)
            | Op::SumAll(a)
            | Op::SumSquares(a)
            | Op::SelectRows(a, _) => [Some(a), None],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
    param: Option<String>,
}

/// Gradients of a scalar with respect to named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    by_name: BTreeMap<String, Matrix>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.by_name.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn into_map(self) -> BTreeMap<String, Matrix> {
        self.by_name
    }
}

/// Operation record for reverse-mode differentiation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, usize>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value, param: None });
        Var(self.nodes.len() - 1)
    }

    /// Registers a named trainable leaf. Names must be unique per tape.
    pub fn param(&mut self, name: &str, value: Matrix) -> Result<Var> {
        if self.params.contains_key(name) {
            return Err(Error::Parameter(format!("parameter {name:?} registered twice")));
        }
        let var = self.push(Op::Leaf, value);
        self.nodes[var.0].param = Some(name.to_string());
        self.params.insert(name.to_string(), var.0);
        Ok(var)
    }

    /// Adds a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    /// Names of the registered parameters, in sorted order.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a.0, b.0), value))
    }

    /// Adds a `1 x cols` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.value(a).add_row_broadcast(self.value(bias))?;
        Ok(self.push(Op::AddBias(a.0, bias.0), value))
    }

    /// `x·w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a.0, b.0), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a.0, b.0), value))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        self.push(Op::Scale(a.0, c), value)
    }

    /// Elementwise product with a constant matrix.
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Result<Var> {
        let value = self.value(a).hadamard(&c)?;
        Ok(self.push(Op::MulConst(a.0, c), value))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let value = ops::leaky_relu(self.value(a), slope)?;
        Ok(self.push(Op::LeakyRelu(a.0, slope), value))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = ops::sigmoid(self.value(a));
        self.push(Op::Sigmoid(a.0), value)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping was active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        self.push(Op::Clamp(a.0, lo, hi), value)
    }

    /// `ln(max(x, floor))`.
    pub fn log(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).map(|v| libm::log(v.max(floor)));
        self.push(Op::Log(a.0, floor), value)
    }

    /// `ln(max(x, 1e-12))`.
    pub fn log_clamped(&mut self, a: Var) -> Var {
        self.log(a, LOG_FLOOR)
    }

    pub fn softmax_rows(&mut self, a: Var, temperature: f64) -> Result<Var> {
        let value = ops::softmax_rows(self.value(a), temperature)?;
        Ok(self.push(Op::Softmax(a.0, temperature), value))
    }

    pub fn log_softmax_rows(&mut self, a: Var, temperature: f64) -> Result<Var> {
        let value = ops::log_softmax_rows(self.value(a), temperature)?;
        Ok(self.push(Op::LogSoftmax(a.0, temperature), value))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(Op::SumAll(a.0), value)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum_squares());
        self.push(Op::SumSquares(a.0), value)
    }

    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let value = self.value(a).select_rows(indices)?;
        Ok(self.push(Op::SelectRows(a.0, indices.to_vec()), value))
    }

    /// Gradients of `loss` with respect to every registered parameter.
    /// Parameters the loss does not depend on receive zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.backward_where(loss, |_| true)
    }

    /// Like [`Tape::backward`], restricted to parameters accepted by `include`.
    /// Sub-graphs that reach no included parameter are skipped entirely.
    pub fn backward_where(&self, loss: Var, include: impl Fn(&str) -> bool) -> Result<Gradients> {
        let (rows, cols) = self.value(loss).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NotScalar { rows, cols });
        }

        let mut needs = vec![false; loss.0 + 1];
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            needs[i] = match (&node.op, &node.param) {
                (Op::Leaf, Some(name)) => include(name),
                (Op::Leaf, None) => false,
                (op, _) => op.inputs().iter().flatten().any(|&j| needs[j]),
            };
        }

        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        if needs[loss.0] {
            grads[loss.0] = Some(Matrix::scalar(1.0));
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &needs, &mut grads)?;
        }

        let mut by_name = BTreeMap::new();
        for (name, &idx) in &self.params {
            if !include(name) {
                continue;
            }
            let grad = match grads.get_mut(idx).and_then(Option::take) {
                Some(g) => g,
                None => {
                    let (r, c) = self.nodes[idx].value.shape();
                    Matrix::zeros(r, c)
                }
            };
            by_name.insert(name.clone(), grad);
        }
        Ok(Gradients { by_name })
    }

    fn propagate(&self, node: &Node, g: &Matrix, needs: &[bool], grads: &mut [Option<Matrix>]) -> Result<()> {
        let val = |j: usize| &self.nodes[j].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs[*a] {
                    accumulate(grads, *a, g.matmul_nt(val(*b))?)?;
                }
                if needs[*b] {
                    accumulate(grads, *b, val(*a).matmul_tn(g)?)?;
                }
            }
            Op::AddBias(a, b) => {
                if needs[*a] {
                    accumulate(grads, *a, g.clone())?;
                }
                if needs[*b] {
                    accumulate(grads, *b, g.column_sums())?;
                }
            }
            Op::Add(a, b) => {
                if needs[*a] {
                    accumulate(grads, *a, g.clone())?;
                }
                if needs[*b] {
                    accumulate(grads, *b, g.clone())?;
                }
            }
            Op::Sub(a, b) => {
                if needs[*a] {
                    accumulate(grads, *a, g.clone())?;
                }
                if needs[*b] {
                    accumulate(grads, *b, g.scale(-1.0))?;
                }
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.scale(*c))?,
            Op::MulConst(a, c) => accumulate(grads, *a, g.hadamard(c)?)?,
            Op::LeakyRelu(a, slope) => {
                let local = g.zip_map(val(*a), "leaky_relu'", |g, x| if x >= 0.0 { g } else { g * slope })?;
                accumulate(grads, *a, local)?;
            }
            Op::Sigmoid(a) => {
                let local = g.zip_map(&node.value, "sigmoid'", |g, y| g * y * (1.0 - y))?;
                accumulate(grads, *a, local)?;
            }
            Op::Clamp(a, lo, hi) => {
                let local = g.zip_map(val(*a), "clamp'", |g, x| if x >= *lo && x <= *hi { g } else { 0.0 })?;
                accumulate(grads, *a, local)?;
            }
            Op::Log(a, floor) => {
                let local = g.zip_map(val(*a), "log'", |g, x| if x >= *floor { g / x } else { 0.0 })?;
                accumulate(grads, *a, local)?;
            }
            Op::Softmax(a, t) => {
                let y = &node.value;
                let mut local = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let s = super::dot(yr, gr);
                    for ((o, &yv), &gv) in local.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - s) / t;
                    }
                }
                accumulate(grads, *a, local)?;
            }
            Op::LogSoftmax(a, t) => {
                let y = &node.value;
                let mut local = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let total = gr.iter().fold(0.0, |acc, &v| acc + v);
                    for ((o, &yv), &gv) in local.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = (gv - libm::exp(yv) * total) / t;
                    }
                }
                accumulate(grads, *a, local)?;
            }
            Op::SumAll(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, *a, Matrix::filled(r, c, g.item()?))?;
            }
            Op::SumSquares(a) => {
                let gv = g.item()?;
                accumulate(grads, *a, val(*a).scale(2.0 * gv))?;
            }
            Op::SelectRows(a, indices) => {
                let (r, c) = val(*a).shape();
                let mut local = Matrix::zeros(r, c);
                for (k, &i) in indices.iter().enumerate() {
                    for (o, &v) in local.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                accumulate(grads, *a, local)?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], idx: usize, g: Matrix) -> Result<()> {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
