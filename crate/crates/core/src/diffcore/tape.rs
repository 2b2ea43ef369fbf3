//! Reverse-mode gradient tape over [`Tensor2`].
//!
//! Ops are recorded eagerly; `backward` walks the tape in reverse and
//! accumulates gradients into every node. Parents always precede children,
//! so a single reverse sweep suffices.

use std::rc::Rc;

use rand::RngCore;

use crate::error::{Error, Result};

use super::tensor::{self, BoolMat, Tensor2, BCE_EPS};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Clone)]
enum Op {
    Leaf,
    Matmul(VarId, VarId),
    Add(VarId, VarId),
    AddRowBroadcast(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId, f64),
    Sigmoid(VarId),
    LeakyRelu(VarId, f64),
    Elu(VarId, f64),
    Relu(VarId),
    SoftmaxRows(VarId, Option<Rc<BoolMat>>),
    Dropout(VarId, Rc<Vec<f64>>),
    ConcatRows(VarId, VarId),
    ConcatCols(VarId, VarId),
    PairwiseSum(VarId, VarId),
    RowSelect(VarId, Rc<Vec<usize>>),
    MeanRows(VarId),
    Reshape(VarId),
    Transpose(VarId),
    SumAll(VarId),
    BceLoss(VarId, Rc<Tensor2>),
}

struct Node {
    value: Tensor2,
    grad: Tensor2,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor2, op: Op) -> VarId {
        let grad = Tensor2::zeros(value.rows(), value.cols());
        self.nodes.push(Node { value, grad, op });
        VarId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor2) -> VarId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: VarId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: VarId) -> &Tensor2 {
        &self.nodes[id.0].grad
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Matmul(a, b)))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// `a` (N x F) plus row vector `b` (1 x F).
    pub fn add_row_broadcast(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = tensor::add_row_broadcast(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::AddRowBroadcast(a, b)))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = tensor::mul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: VarId, factor: f64) -> VarId {
        let value = self.value(a).map(|x| x * factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: VarId) -> VarId {
        let value = tensor::sigmoid(self.value(a));
        self.push(value, Op::Sigmoid(a))
    }

    pub fn leaky_relu(&mut self, a: VarId, slope: f64) -> VarId {
        let value = tensor::leaky_relu(self.value(a), slope);
        self.push(value, Op::LeakyRelu(a, slope))
    }

    pub fn elu(&mut self, a: VarId, alpha: f64) -> VarId {
        let value = tensor::elu(self.value(a), alpha);
        self.push(value, Op::Elu(a, alpha))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let value = tensor::relu(self.value(a));
        self.push(value, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: VarId, mask: Option<Rc<BoolMat>>) -> Result<VarId> {
        let value = tensor::softmax_rows(self.value(a), mask.as_deref())?;
        Ok(self.push(value, Op::SoftmaxRows(a, mask)))
    }

    /// Inverted dropout. In eval mode (or at rate 0) this is the identity and
    /// records nothing. In train mode each entry is zeroed with probability
    /// `rate` and survivors are scaled by 1/(1-rate).
    pub fn dropout(
        &mut self,
        a: VarId,
        rate: f64,
        train: bool,
        rng: &mut dyn RngCore,
    ) -> Result<VarId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate {rate} outside [0,1)"
            )));
        }
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let x = self.value(a);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| {
                let u = rand::Rng::gen::<f64>(rng);
                if u < rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let mut value = x.clone();
        for (v, m) in value.data_mut().iter_mut().zip(mask.iter()) {
            *v *= m;
        }
        Ok(self.push(value, Op::Dropout(a, Rc::new(mask))))
    }

    pub fn concat_rows(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(Error::Shape(format!(
                "concat_rows: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        let value = Tensor2::from_vec(ta.rows() + tb.rows(), ta.cols(), data);
        Ok(self.push(value, Op::ConcatRows(a, b)))
    }

    pub fn concat_cols(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(Error::Shape(format!(
                "concat_cols: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        for r in 0..ta.rows() {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let value = Tensor2::from_vec(ta.rows(), ta.cols() + tb.cols(), data);
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    /// Column vectors `a` (N x 1) and `b` (M x 1) to the N x M matrix
    /// `out[i][j] = a[i] + b[j]`.
    pub fn pairwise_sum(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != 1 || tb.cols() != 1 {
            return Err(Error::Shape(format!(
                "pairwise_sum wants column vectors, got {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (n, m) = (ta.rows(), tb.rows());
        let mut value = Tensor2::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                value.set(i, j, ta.get(i, 0) + tb.get(j, 0));
            }
        }
        Ok(self.push(value, Op::PairwiseSum(a, b)))
    }

    /// Gather rows of `a` by index; duplicates allowed.
    pub fn row_select(&mut self, a: VarId, indices: &[usize]) -> Result<VarId> {
        let ta = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= ta.rows()) {
            return Err(Error::Shape(format!(
                "row_select: index {bad} out of range for {} rows",
                ta.rows()
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * ta.cols());
        for &i in indices {
            data.extend_from_slice(ta.row(i));
        }
        let value = Tensor2::from_vec(indices.len(), ta.cols(), data);
        Ok(self.push(value, Op::RowSelect(a, Rc::new(indices.to_vec()))))
    }

    /// Mean over rows: (N x F) to (1 x F).
    pub fn mean_rows(&mut self, a: VarId) -> Result<VarId> {
        let ta = self.value(a);
        if ta.rows() == 0 {
            return Err(Error::Shape("mean_rows of empty tensor".into()));
        }
        let n = ta.rows() as f64;
        let mut value = Tensor2::zeros(1, ta.cols());
        let mut terms = vec![0.0; ta.rows()];
        for c in 0..ta.cols() {
            for (r, term) in terms.iter_mut().enumerate() {
                *term = ta.get(r, c);
            }
            value.set(0, c, tensor::stable_sum(&mut terms) / n);
        }
        Ok(self.push(value, Op::MeanRows(a)))
    }

    pub fn reshape(&mut self, a: VarId, rows: usize, cols: usize) -> Result<VarId> {
        let value = self.value(a).reshape(rows, cols)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    pub fn transpose(&mut self, a: VarId) -> VarId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn sum_all(&mut self, a: VarId) -> VarId {
        let mut terms = self.value(a).data().to_vec();
        let value = Tensor2::from_vec(1, 1, vec![tensor::stable_sum(&mut terms)]);
        self.push(value, Op::SumAll(a))
    }

    /// Mean binary cross-entropy against constant targets; returns a scalar node.
    pub fn bce_loss(&mut self, probs: VarId, targets: Rc<Tensor2>) -> Result<VarId> {
        let loss = tensor::bce_loss(self.value(probs), &targets)?;
        let value = Tensor2::from_vec(1, 1, vec![loss]);
        Ok(self.push(value, Op::BceLoss(probs, targets)))
    }

    fn add_grad(&mut self, id: VarId, delta: &Tensor2) {
        let g = &mut self.nodes[id.0].grad;
        debug_assert_eq!(g.shape(), delta.shape());
        for (gi, di) in g.data_mut().iter_mut().zip(delta.data().iter()) {
            *gi += di;
        }
    }

    /// Backpropagate from a scalar node, accumulating into every `grad`.
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Shape(format!(
                "backward expects a scalar node, got {shape:?}"
            )));
        }
        self.nodes[loss.0].grad.set(0, 0, 1.0);
        for i in (0..=loss.0).rev() {
            let g = self.nodes[i].grad.clone();
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let da = tensor::matmul(&g, &self.value(b).transpose())?;
                    let db = tensor::matmul(&self.value(a).transpose(), &g)?;
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
                Op::Add(a, b) => {
                    self.add_grad(a, &g);
                    self.add_grad(b, &g);
                }
                Op::AddRowBroadcast(a, b) => {
                    self.add_grad(a, &g);
                    let mut db = Tensor2::zeros(1, g.cols());
                    let mut terms = vec![0.0; g.rows()];
                    for c in 0..g.cols() {
                        for (r, term) in terms.iter_mut().enumerate() {
                            *term = g.get(r, c);
                        }
                        db.set(0, c, tensor::stable_sum(&mut terms));
                    }
                    self.add_grad(b, &db);
                }
                Op::Mul(a, b) => {
                    let da = tensor::mul(&g, self.value(b))?;
                    let db = tensor::mul(&g, self.value(a))?;
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
                Op::Scale(a, factor) => {
                    let da = g.map(|x| x * factor);
                    self.add_grad(a, &da);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let da = Tensor2::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(y.data().iter())
                            .map(|(&gi, &yi)| gi * yi * (1.0 - yi))
                            .collect(),
                    );
                    self.add_grad(a, &da);
                }
                Op::LeakyRelu(a, slope) => {
                    let x = self.value(a);
                    let da = Tensor2::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(x.data().iter())
                            .map(|(&gi, &xi)| gi * if xi > 0.0 { 1.0 } else { slope })
                            .collect(),
                    );
                    self.add_grad(a, &da);
                }
                Op::Elu(a, alpha) => {
                    let x = self.value(a).clone();
                    let y = &self.nodes[i].value;
                    let da = Tensor2::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(x.data().iter().zip(y.data().iter()))
                            .map(|(&gi, (&xi, &yi))| {
                                gi * if xi > 0.0 { 1.0 } else { yi + alpha }
                            })
                            .collect(),
                    );
                    self.add_grad(a, &da);
                }
                Op::Relu(a) => {
                    let x = self.value(a);
                    let da = Tensor2::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(x.data().iter())
                            .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                            .collect(),
                    );
                    self.add_grad(a, &da);
                }
                Op::SoftmaxRows(a, mask) => {
                    let y = self.nodes[i].value.clone();
                    let mut da = Tensor2::zeros(y.rows(), y.cols());
                    let mut terms = Vec::with_capacity(y.cols());
                    for r in 0..y.rows() {
                        let live =
                            |c: usize| mask.as_ref().is_none_or(|m| m.get(r, c));
                        terms.clear();
                        for c in 0..y.cols() {
                            if live(c) {
                                terms.push(g.get(r, c) * y.get(r, c));
                            }
                        }
                        let dot = tensor::stable_sum(&mut terms);
                        for c in 0..y.cols() {
                            if live(c) {
                                da.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                            }
                        }
                    }
                    self.add_grad(a, &da);
                }
                Op::Dropout(a, mask) => {
                    let da = Tensor2::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(mask.iter())
                            .map(|(&gi, &mi)| gi * mi)
                            .collect(),
                    );
                    self.add_grad(a, &da);
                }
                Op::ConcatRows(a, b) => {
                    let rows_a = self.value(a).rows();
                    let cols = g.cols();
                    let da = Tensor2::from_vec(rows_a, cols, g.data()[..rows_a * cols].to_vec());
                    let db = Tensor2::from_vec(
                        g.rows() - rows_a,
                        cols,
                        g.data()[rows_a * cols..].to_vec(),
                    );
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
                Op::ConcatCols(a, b) => {
                    let cols_a = self.value(a).cols();
                    let mut da = Tensor2::zeros(g.rows(), cols_a);
                    let mut db = Tensor2::zeros(g.rows(), g.cols() - cols_a);
                    for r in 0..g.rows() {
                        for c in 0..cols_a {
                            da.set(r, c, g.get(r, c));
                        }
                        for c in cols_a..g.cols() {
                            db.set(r, c - cols_a, g.get(r, c));
                        }
                    }
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
                Op::PairwiseSum(a, b) => {
                    let (n, m) = g.shape();
                    let mut da = Tensor2::zeros(n, 1);
                    let mut db = Tensor2::zeros(m, 1);
                    let mut terms = vec![0.0; m];
                    for r in 0..n {
                        terms.copy_from_slice(g.row(r));
                        da.set(r, 0, tensor::stable_sum(&mut terms));
                    }
                    let mut terms = vec![0.0; n];
                    for c in 0..m {
                        for (r, term) in terms.iter_mut().enumerate() {
                            *term = g.get(r, c);
                        }
                        db.set(c, 0, tensor::stable_sum(&mut terms));
                    }
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
                Op::RowSelect(a, indices) => {
                    let src = self.value(a);
                    let mut da = Tensor2::zeros(src.rows(), src.cols());
                    for (r, &i) in indices.iter().enumerate() {
                        for c in 0..g.cols() {
                            da.set(i, c, da.get(i, c) + g.get(r, c));
                        }
                    }
                    self.add_grad(a, &da);
                }
                Op::MeanRows(a) => {
                    let src = self.value(a);
                    let n = src.rows() as f64;
                    let mut da = Tensor2::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        for c in 0..src.cols() {
                            da.set(r, c, g.get(0, c) / n);
                        }
                    }
                    self.add_grad(a, &da);
                }
                Op::Reshape(a) => {
                    let src_shape = self.value(a).shape();
                    let da = Tensor2::from_vec(src_shape.0, src_shape.1, g.data().to_vec());
                    self.add_grad(a, &da);
                }
                Op::Transpose(a) => {
                    let da = g.transpose();
                    self.add_grad(a, &da);
                }
                Op::SumAll(a) => {
                    let src_shape = self.value(a).shape();
                    let da = Tensor2::filled(src_shape.0, src_shape.1, g.get(0, 0));
                    self.add_grad(a, &da);
                }
                Op::BceLoss(p, targets) => {
                    let probs = self.value(p);
                    let n = probs.len() as f64;
                    let scale = g.get(0, 0);
                    let da = Tensor2::from_vec(
                        probs.rows(),
                        probs.cols(),
                        probs
                            .data()
                            .iter()
                            .zip(targets.data().iter())
                            .map(|(&pi, &yi)| {
                                let pc = pi.clamp(BCE_EPS, 1.0 - BCE_EPS);
                                scale * (pc - yi) / (pc * (1.0 - pc) * n)
                            })
                            .collect(),
                    );
                    self.add_grad(p, &da);
                }
            }
        }
        Ok(())
    }
}
