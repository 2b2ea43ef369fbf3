//! Dense row-major rank-2 tensor and the raw (non-differentiated) kernels.
//!
//! Every reduction funnels through [`stable_sum`], which sums values in a
//! canonical order (sorted by IEEE total order). Reductions therefore give
//! bit-identical results no matter how the summands were produced or indexed,
//! which is what makes graph-layer outputs exactly invariant under node
//! relabeling and training runs byte-reproducible.

use crate::error::{Error, Result};

/// Sum in a canonical order: sort by total order, then fold left.
/// The result depends only on the multiset of values.
pub fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

/// Dense boolean matrix used as softmax support masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

impl BoolMat {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), rows * cols);
        BoolMat { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        BoolMat {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }
}

/// Row-major rank-2 tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} != {}x{}",
            data.len(),
            rows,
            cols
        );
        Tensor2 { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map(|v| v.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor2 { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor2::zeros(n, n);
        for i in 0..n {
            t.set(i, i, 1.0);
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Reinterpret the same row-major data under a new shape.
    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Tensor2> {
        if rows * cols != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {}x{} into {}x{}",
                self.rows, self.cols, rows, cols
            )));
        }
        Ok(Tensor2 {
            rows,
            cols,
            data: self.data.clone(),
        })
    }
}

/// Standard matrix product with canonical-order inner sums.
pub fn matmul(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Tensor2::zeros(a.rows, b.cols);
    let mut terms = vec![0.0; a.cols];
    for i in 0..a.rows {
        for j in 0..b.cols {
            for (k, term) in terms.iter_mut().enumerate() {
                *term = a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, stable_sum(&mut terms));
        }
    }
    Ok(out)
}

pub fn add(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "add: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a
        .data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| x + y)
        .collect();
    Ok(Tensor2 {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

/// Elementwise product.
pub fn mul(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "mul: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a
        .data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| x * y)
        .collect();
    Ok(Tensor2 {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

/// `a` (N x F) plus a single row `b` (1 x F) broadcast over rows.
pub fn add_row_broadcast(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if b.rows != 1 || b.cols != a.cols {
        return Err(Error::Shape(format!(
            "add_row_broadcast: {:?} plus {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = a.clone();
    for r in 0..a.rows {
        for c in 0..a.cols {
            out.set(r, c, a.get(r, c) + b.get(0, c));
        }
    }
    Ok(out)
}

pub fn sigmoid(x: &Tensor2) -> Tensor2 {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

pub fn leaky_relu(x: &Tensor2, slope: f64) -> Tensor2 {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn elu(x: &Tensor2, alpha: f64) -> Tensor2 {
    x.map(|v| if v > 0.0 { v } else { alpha * (v.exp() - 1.0) })
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Row softmax with optional support mask and max-subtraction stabilization.
/// Masked entries come out exactly 0; each row must keep at least one
/// unmasked entry.
pub fn softmax_rows(x: &Tensor2, mask: Option<&BoolMat>) -> Result<Tensor2> {
    if let Some(m) = mask {
        if (m.rows, m.cols) != x.shape() {
            return Err(Error::Shape(format!(
                "softmax mask {:?} vs input {:?}",
                (m.rows, m.cols),
                x.shape()
            )));
        }
    }
    let mut out = Tensor2::zeros(x.rows, x.cols);
    let mut exps = Vec::with_capacity(x.cols);
    for r in 0..x.rows {
        let live = |c: usize| mask.is_none_or(|m| m.get(r, c));
        let mut max = f64::NEG_INFINITY;
        for c in 0..x.cols {
            if live(c) {
                max = max.max(x.get(r, c));
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::Shape(format!("softmax_rows: row {r} fully masked")));
        }
        exps.clear();
        for c in 0..x.cols {
            if live(c) {
                exps.push((x.get(r, c) - max).exp());
            }
        }
        let mut denom_terms = exps.clone();
        let denom = stable_sum(&mut denom_terms);
        let mut k = 0;
        for c in 0..x.cols {
            if live(c) {
                out.set(r, c, exps[k] / denom);
                k += 1;
            }
        }
    }
    Ok(out)
}

pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over all entries, probs clamped into
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_loss(probs: &Tensor2, targets: &Tensor2) -> Result<f64> {
    if probs.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "bce_loss: {:?} vs {:?}",
            probs.shape(),
            targets.shape()
        )));
    }
    let n = probs.len() as f64;
    let mut terms: Vec<f64> = probs
        .data
        .iter()
        .zip(targets.data.iter())
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .collect();
    Ok(stable_sum(&mut terms) / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let x = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let out = matmul(&Tensor2::identity(2), &x).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Tensor2::from_rows(&[vec![1.0], vec![1.0]]);
        let out = matmul(&a, &b).unwrap();
        assert_eq!(out, Tensor2::from_rows(&[vec![3.0], vec![7.0]]));
    }

    #[test]
    fn matmul_shape_error() {
        let a = Tensor2::zeros(2, 3);
        let b = Tensor2::zeros(2, 2);
        assert!(matmul(&a, &b).is_err());
    }

    #[test]
    fn softmax_symmetric_row() {
        let x = Tensor2::from_rows(&[vec![0.7, 0.7, 0.7]]);
        let s = softmax_rows(&x, None).unwrap();
        for c in 0..3 {
            assert_eq!(s.get(0, c), 1.0 / 3.0);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let x = Tensor2::from_rows(&[vec![2.0f64.ln(), 0.0]]);
        let s = softmax_rows(&x, None).unwrap();
        assert!((s.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_single_survivor() {
        let x = Tensor2::from_rows(&[vec![5.0, 100.0]]);
        let mask = BoolMat::new(1, 2, vec![true, false]);
        let s = softmax_rows(&x, Some(&mask)).unwrap();
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn softmax_fully_masked_row_errors() {
        let x = Tensor2::zeros(1, 2);
        let mask = BoolMat::filled(1, 2, false);
        assert!(softmax_rows(&x, Some(&mask)).is_err());
    }

    #[test]
    fn pointwise_definitions() {
        assert_eq!(sigmoid(&Tensor2::zeros(1, 1)).get(0, 0), 0.5);
        let x = Tensor2::from_rows(&[vec![-1.0]]);
        assert_eq!(leaky_relu(&x, 0.2).get(0, 0), -0.2);
    }

    #[test]
    fn bce_half_is_ln2() {
        let probs = Tensor2::filled(3, 4, 0.5);
        let targets = Tensor2::from_vec(3, 4, vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let loss = bce_loss(&probs, &targets).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_perfect_fit_is_tiny() {
        let probs = Tensor2::from_vec(1, 2, vec![1.0, 0.0]);
        let targets = Tensor2::from_vec(1, 2, vec![1.0, 0.0]);
        let loss = bce_loss(&probs, &targets).unwrap();
        // entries clamp to 1-eps / eps, so per-entry loss is -ln(1-eps)
        assert!(loss >= 0.0);
        assert!(loss <= 1.1e-7);
    }

    #[test]
    fn bce_single_entry_closed_form() {
        let probs = Tensor2::from_vec(1, 1, vec![(-1.0f64).exp()]);
        let targets = Tensor2::from_vec(1, 1, vec![1.0]);
        let loss = bce_loss(&probs, &targets).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stable_sum_order_independent() {
        let mut a = vec![1e16, 1.0, -1e16, 0.1, 3.7];
        let mut b = vec![0.1, -1e16, 3.7, 1e16, 1.0];
        assert_eq!(stable_sum(&mut a).to_bits(), stable_sum(&mut b).to_bits());
    }
}
