//! Small dense arrays and the scalar functions the attention block and loss
//! need. Everything is `f64`, row-major.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;

use crate::error::{Error, Result};

/// Clamp applied to probabilities before taking logarithms in [`bce`].
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} tensor needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = 1.0;
        }
        t
    }

    /// Entries drawn uniformly from `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        Self { rows, cols, data }
    }

    /// Glorot-style uniform init, `±√(6/(fan_in+fan_out))`.
    pub fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Self::uniform(rows, cols, bound, rng)
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor2 {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, |a, b| a * b)
    }

    fn zip_with(&self, other: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Result<Tensor2> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "elementwise op on {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Adds `bias` to every row.
    pub fn add_row(&self, bias: &[f64]) -> Result<Tensor2> {
        if bias.len() != self.cols {
            return Err(Error::Shape(format!(
                "bias of length {} for {} columns",
                bias.len(),
                self.cols
            )));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (v, b) in out.row_mut(i).iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(out)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows as f64;
        self.column_sums().into_iter().map(|s| s / n).collect()
    }

    /// Columns `start..start+width` as a new tensor.
    pub fn columns(&self, start: usize, width: usize) -> Tensor2 {
        let mut out = Tensor2::zeros(self.rows, width);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..start + width]);
        }
        out
    }

    /// Writes `block` into columns starting at `start`.
    pub fn set_columns(&mut self, start: usize, block: &Tensor2) {
        for i in 0..self.rows {
            let w = block.cols;
            self.row_mut(i)[start..start + w].copy_from_slice(block.row(i));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor2) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Tensor2 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Tensor2 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Spatial feature block of shape `h × w × c`, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::Shape(format!(
                "{h}x{w}x{c} block needs {} entries, got {}",
                h * w * c,
                data.len()
            )));
        }
        Ok(Self { h, w, c, data })
    }

    pub fn uniform<R: Rng + ?Sized>(h: usize, w: usize, c: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..h * w * c).map(|_| rng.random_range(-bound..=bound)).collect();
        Self { h, w, c, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize, ch: usize) -> f64 {
        self.data[(i * self.w + j) * self.c + ch]
    }

    pub fn set(&mut self, i: usize, j: usize, ch: usize, v: f64) {
        self.data[(i * self.w + j) * self.c + ch] = v;
    }

    /// Channel vector at spatial position `(i, j)`.
    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.w + j) * self.c;
        &self.data[start..start + self.c]
    }
}

pub fn matmul(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Tensor2::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

pub fn row_softmax(a: &Tensor2) -> Tensor2 {
    let mut out = a.clone();
    for i in 0..a.rows {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// `d/dx [x·Φ(x)] = Φ(x) + x·φ(x)`.
pub fn gelu_derivative(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    normal_cdf(x) + x * pdf
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy in its non-positive form `y·ln x + (1−y)·ln(1−x)`,
/// with `x` clamped to `[ε, 1−ε]`.
pub fn bce(x: f64, y: f64) -> f64 {
    let x = x.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    y * x.ln() + (1.0 - y) * (1.0 - x).ln()
}
