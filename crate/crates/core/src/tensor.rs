//! Dense row-major `f64` matrices and the handful of operations the
//! alignment pipeline needs.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data. Both dimensions must be positive
    /// and every element finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
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
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `wa * a + wb * b`, elementwise.
    pub fn lin_comb(a: &Matrix, wa: f64, b: &Matrix, wb: f64) -> Result<Matrix> {
        if a.shape() != b.shape() {
            return Err(Error::Shape {
                op: "lin_comb",
                left: a.shape(),
                right: b.shape(),
            });
        }
        Ok(Matrix {
            rows: a.rows,
            cols: a.cols,
            data: a
                .data
                .iter()
                .zip(&b.data)
                .map(|(x, y)| wa * x + wb * y)
                .collect(),
        })
    }

    /// Returns a copy with `column` appended on the right.
    pub fn with_column(&self, column: &[f64]) -> Result<Matrix> {
        if column.len() != self.rows {
            return Err(Error::Shape {
                op: "with_column",
                left: self.shape(),
                right: (column.len(), 1),
            });
        }
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for (i, c) in column.iter().enumerate() {
            data.extend_from_slice(self.row(i));
            data.push(*c);
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Standard matrix product. Summation runs over the inner index in
/// ascending order for every output element.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in orow.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `a · x` for a column vector `x`.
pub fn mat_vec(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if a.cols != x.len() {
        return Err(Error::Shape {
            op: "mat_vec",
            left: a.shape(),
            right: (x.len(), 1),
        });
    }
    Ok((0..a.rows)
        .map(|i| a.row(i).iter().zip(x).map(|(w, v)| w * v).sum())
        .collect())
}

/// `aᵀ · x` without materializing the transpose.
pub fn mat_t_vec(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if a.rows != x.len() {
        return Err(Error::Shape {
            op: "mat_t_vec",
            left: a.shape(),
            right: (x.len(), 1),
        });
    }
    let mut out = vec![0.0; a.cols];
    for (i, &xi) in x.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(a.row(i)) {
            *o += w * xi;
        }
    }
    Ok(out)
}

pub fn transpose(a: &Matrix) -> Matrix {
    Matrix::from_fn(a.cols, a.rows, |i, j| a[(j, i)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distance {
    #[default]
    Euclidean,
    SquaredEuclidean,
}

/// `D[i][j] = ‖a_i − b_j‖₂` over the rows of two equally shaped matrices.
pub fn row_distance_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    row_distance_matrix_with(a, b, Distance::Euclidean)
}

pub fn row_distance_matrix_with(a: &Matrix, b: &Matrix, kind: Distance) -> Result<Matrix> {
    if a.cols != b.cols || a.rows != b.rows {
        return Err(Error::Shape {
            op: "row_distance_matrix",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let d = Matrix::from_fn(a.rows, b.rows, |i, j| {
        let sq: f64 = a
            .row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        match kind {
            Distance::Euclidean => sq.sqrt(),
            Distance::SquaredEuclidean => sq,
        }
    });
    if !d.is_finite() {
        return Err(Error::NonFinite("row_distance_matrix"));
    }
    Ok(d)
}
