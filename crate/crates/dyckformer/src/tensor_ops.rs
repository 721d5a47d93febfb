//! Dense f64 kernels: matrix-vector products, softmax and hardmax, ReLU, and
//! the two normalizations. Every operation checks dimensions; nothing
//! broadcasts.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dim { op: &'static str, expected: usize, got: usize },
    #[error("{0} of an empty vector")]
    Empty(&'static str),
    #[error("NaN in {0} input")]
    Nan(&'static str),
    #[error("ragged matrix rows")]
    Ragged,
}

fn dim(op: &'static str, expected: usize, got: usize) -> Result<(), TensorError> {
    if expected == got {
        Ok(())
    } else {
        Err(TensorError::Dim { op, expected, got })
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TensorError::Ragged);
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    /// Builds from a row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        dim("from_vec", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    /// Stacks matrices vertically.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix, TensorError> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            dim("vstack", cols, m.cols)?;
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Stacks matrices horizontally.
    pub fn hstack(parts: &[&Matrix]) -> Result<Matrix, TensorError> {
        let rows = parts.first().map_or(0, |m| m.rows);
        for m in parts {
            dim("hstack", rows, m.rows)?;
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for m in parts {
                out.row_mut(r)[off..off + m.cols].copy_from_slice(m.row(r));
                off += m.cols;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * c).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, TensorError> {
        dim("matmul", self.cols, rhs.rows)?;
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out.row_mut(i).iter_mut().zip(rhs.row(l)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Returns a copy padded with zero rows/columns to `rows × cols`.
    pub fn padded(&self, rows: usize, cols: usize) -> Matrix {
        let mut out = Matrix::zeros(rows.max(self.rows), cols.max(self.cols));
        for r in 0..self.rows {
            out.row_mut(r)[..self.cols].copy_from_slice(self.row(r));
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of {}x{}", self.rows, self.cols);
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of {}x{}", self.rows, self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MatrixRepr { rows: self.rows, cols: self.cols, data: self.to_rows() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = MatrixRepr::deserialize(d)?;
        if r.data.len() != r.rows || r.data.iter().any(|row| row.len() != r.cols) {
            return Err(serde::de::Error::custom(format!(
                "matrix data does not match declared shape {}x{}",
                r.rows, r.cols
            )));
        }
        Ok(Matrix { rows: r.rows, cols: r.cols, data: r.data.concat() })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `map · x`.
pub fn linear(map: &Matrix, x: &[f64]) -> Result<Vec<f64>, TensorError> {
    dim("linear", map.cols, x.len())?;
    Ok((0..map.rows).map(|r| dot(map.row(r), x)).collect())
}

/// `[x]₊` elementwise.
pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Max-subtracted softmax.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>, TensorError> {
    if scores.is_empty() {
        return Err(TensorError::Empty("softmax"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(TensorError::Nan("softmax"));
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

/// Uniform weight over the exact argmax set.
pub fn hardmax(scores: &[f64]) -> Result<Vec<f64>, TensorError> {
    if scores.is_empty() {
        return Err(TensorError::Empty("hardmax"));
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let count = scores.iter().filter(|&&s| s == m).count();
    let w = 1.0 / count as f64;
    Ok(scores.iter().map(|&s| if s == m { w } else { 0.0 }).collect())
}

/// `γ ⊙ y / RMS(y) + β` with no epsilon; a zero vector maps to `β`.
pub fn rms_layernorm(y: &[f64], gamma: &[f64], beta: &[f64]) -> Result<Vec<f64>, TensorError> {
    dim("rms_layernorm gamma", y.len(), gamma.len())?;
    dim("rms_layernorm beta", y.len(), beta.len())?;
    let ss: f64 = y.iter().map(|v| v * v).sum();
    if ss == 0.0 {
        return Ok(beta.to_vec());
    }
    let rms = (ss / y.len() as f64).sqrt();
    Ok(y.iter().zip(gamma).zip(beta).map(|((v, g), b)| g * v / rms + b).collect())
}

/// Standard layer normalization `γ ⊙ (y − μ)/σ + β`; `σ = 0` maps to `β`.
pub fn layernorm(y: &[f64], gamma: &[f64], beta: &[f64]) -> Result<Vec<f64>, TensorError> {
    dim("layernorm gamma", y.len(), gamma.len())?;
    dim("layernorm beta", y.len(), beta.len())?;
    if y.is_empty() {
        return Ok(Vec::new());
    }
    let n = y.len() as f64;
    let mu = y.iter().sum::<f64>() / n;
    let centered: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let var = centered.iter().map(|v| v * v).sum::<f64>() / n;
    if var == 0.0 {
        return Ok(beta.to_vec());
    }
    let sd = var.sqrt();
    Ok(centered.iter().zip(gamma).zip(beta).map(|((v, g), b)| g * v / sd + b).collect())
}
