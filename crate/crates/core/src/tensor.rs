//! Dense row-major matrices and the ledgered primitives built on them.

use std::fmt;

use crate::error::{Error, Result};
use crate::ledger::{Category, Direction, FlopLedger};

/// Variance floor used by every layer norm.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Dense 2-D array of `f64` in row-major order.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty shape {rows}x{cols}");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty shape {rows}x{cols}");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Copy of columns `start..start + width`.
    pub fn columns(&self, start: usize, width: usize) -> Matrix {
        assert!(start + width <= self.cols);
        Matrix::from_fn(self.rows, width, |i, j| self.get(i, start + j))
    }

    /// Overwrite columns `start..start + block.cols()` with `block`.
    pub fn set_columns(&mut self, start: usize, block: &Matrix) {
        assert_eq!(block.rows, self.rows);
        assert!(start + block.cols <= self.cols);
        for i in 0..self.rows {
            let dst = i * self.cols + start;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(i));
        }
    }

    /// Copy of rows `start..start + count`.
    pub fn row_range(&self, start: usize, count: usize) -> Matrix {
        assert!(start + count <= self.rows);
        Matrix {
            rows: count,
            cols: self.cols,
            data: self.data[start * self.cols..(start + count) * self.cols].to_vec(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_error("add", self, other));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

fn shape_error(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        left_rows: a.rows,
        left_cols: a.cols,
        right_rows: b.rows,
        right_cols: b.cols,
    }
}

/// Dense product `a · b`, charging `m·k·p` multiply-adds to the ledger.
pub fn matmul(
    a: &Matrix,
    b: &Matrix,
    ledger: &mut FlopLedger,
    category: Category,
    direction: Direction,
) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(shape_error("matmul", a, b));
    }
    let (m, k, p) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let out_row = &mut out[i * p..(i + 1) * p];
        for (kk, &aik) in a.row(i).iter().enumerate() {
            let b_row = &b.data[kk * p..(kk + 1) * p];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    ledger.add(category, direction, (m * k * p) as u64);
    Ok(Matrix {
        rows: m,
        cols: p,
        data: out,
    })
}

/// Row-wise softmax with max subtraction. `-inf` entries map to exactly 0.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..m.rows {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::FullyMaskedRow { row: i });
        }
        if !max.is_finite() {
            return Err(Error::NonFinite("softmax input"));
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = if *v == f64::NEG_INFINITY {
                0.0
            } else {
                (*v - max).exp()
            };
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

/// `gain ⊙ (x − mean)/sqrt(var + ε) + bias` for one row; charges `d` flops.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], ledger: &mut FlopLedger) -> Vec<f64> {
    let (xhat, _) = normalize(x);
    ledger.add(Category::LayerNorm, Direction::Forward, x.len() as u64);
    xhat.iter()
        .zip(gain)
        .zip(bias)
        .map(|((v, g), b)| g * v + b)
        .collect()
}

/// Zero-mean unit-variance copy of `x` and the inverse standard deviation used.
pub(crate) fn normalize(x: &[f64]) -> (Vec<f64>, f64) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    (x.iter().map(|v| (v - mean) * inv_std).collect(), inv_std)
}

/// Layer norm applied to every row, keeping what the backward pass needs.
#[derive(Debug, Clone)]
pub struct NormOutput {
    pub out: Matrix,
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm_rows(
    x: &Matrix,
    gain: &Matrix,
    bias: &Matrix,
    ledger: &mut FlopLedger,
) -> NormOutput {
    let d = x.cols;
    let mut out = Matrix::zeros(x.rows, d);
    let mut xhat = Matrix::zeros(x.rows, d);
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let (h, s) = normalize(x.row(i));
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = gain.data[j] * h[j] + bias.data[j];
        }
        xhat.row_mut(i).copy_from_slice(&h);
        inv_std.push(s);
    }
    ledger.add(Category::LayerNorm, Direction::Forward, (x.rows * d) as u64);
    NormOutput { out, xhat, inv_std }
}

/// Gradients of a row-wise layer norm. Returns `dx`; accumulates into
/// `dgain` and `dbias`. Charges `d` flops per row to the backward ledger.
pub(crate) fn layer_norm_rows_backward(
    dy: &Matrix,
    norm: &NormOutput,
    gain: &Matrix,
    dgain: &mut Matrix,
    dbias: &mut Matrix,
    ledger: &mut FlopLedger,
) -> Matrix {
    let d = dy.cols;
    let df = d as f64;
    let mut dx = Matrix::zeros(dy.rows, d);
    for i in 0..dy.rows {
        let dyr = dy.row(i);
        let xh = norm.xhat.row(i);
        let mut dxhat = vec![0.0; d];
        for j in 0..d {
            dgain.data[j] += dyr[j] * xh[j];
            dbias.data[j] += dyr[j];
            dxhat[j] = dyr[j] * gain.data[j];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / df;
        let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / df;
        let row = dx.row_mut(i);
        for j in 0..d {
            row[j] = norm.inv_std[i] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    ledger.add(
        Category::LayerNorm,
        Direction::Backward,
        (dy.rows * d) as u64,
    );
    dx
}
