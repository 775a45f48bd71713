//! Dense row-major `f64` matrices.
//!
//! Rows index batch samples everywhere downstream. Apart from
//! [`Matrix::add_rowwise`] there is no broadcasting; every binary operation
//! checks shapes and fails with both shapes in the error.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::InvalidShape {
                rows,
                cols,
                reason: "data length does not equal rows * cols",
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        check_dims(rows.len(), cols)?;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::InvalidShape {
                    rows: rows.len(),
                    cols,
                    reason: "ragged rows",
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::filled(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Result<Self> {
        Self::filled(rows, cols, 1.0)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    /// Zeros with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: vec![0.0; self.data.len()],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// New matrix made of the given rows of `self`, in order. Indices may repeat.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        check_dims(indices.len(), self.cols)?;
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::invalid(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::placeholder();
        self.matmul_into(other, &mut out)?;
        Ok(out)
    }

    /// [`Matrix::matmul`] writing into `out`, reusing its allocation.
    pub fn matmul_into(&self, other: &Matrix, out: &mut Matrix) -> Result<()> {
        if self.cols != other.rows {
            return Err(mismatch("matmul", self, other));
        }
        out.reshape_uninit(self.rows, other.cols);
        // a: m x k, b: k x n, both row-major
        gemm(
            self.rows,
            self.cols,
            other.cols,
            (&self.data, self.cols as isize, 1),
            (&other.data, other.cols as isize, 1),
            &mut out.data,
            false,
        );
        Ok(())
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::placeholder();
        self.matmul_transposed_into(other, &mut out)?;
        Ok(out)
    }

    /// [`Matrix::matmul_transposed`] writing into `out`, reusing its allocation.
    pub fn matmul_transposed_into(&self, other: &Matrix, out: &mut Matrix) -> Result<()> {
        if self.cols != other.cols {
            return Err(mismatch("matmul_transposed", self, other));
        }
        out.reshape_uninit(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            (&self.data, self.cols as isize, 1),
            (&other.data, 1, other.cols as isize),
            &mut out.data,
            false,
        );
        Ok(())
    }

    /// Overwrites `self` with a copy of `other`, reusing the allocation.
    pub fn copy_from(&mut self, other: &Matrix) {
        self.rows = other.rows;
        self.cols = other.cols;
        self.data.clear();
        self.data.extend_from_slice(&other.data);
    }

    /// A 1 x 1 zero matrix for buffers that are filled later.
    pub(crate) fn placeholder() -> Matrix {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![0.0],
        }
    }

    /// Sets the shape; entries are left stale and must be overwritten by the caller.
    pub(crate) fn reshape_uninit(&mut self, rows: usize, cols: usize) {
        if self.data.len() != rows * cols {
            self.data.clear();
            self.data.resize(rows * cols, 0.0);
        }
        self.rows = rows;
        self.cols = cols;
    }

    /// `self^T * other` without materializing the transpose.
    pub fn transposed_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(mismatch("transposed_matmul", self, other));
        }
        let mut out = vec![0.0; self.cols * other.cols];
        gemm(
            self.cols,
            self.rows,
            other.cols,
            (&self.data, 1, self.cols as isize),
            (&other.data, other.cols as isize, 1),
            &mut out,
            false,
        );
        Ok(Matrix {
            rows: self.cols,
            cols: other.cols,
            data: out,
        })
    }

    /// Adds the `1 x cols` row `bias` to every row.
    pub fn add_rowwise(&self, bias: &Matrix) -> Result<Matrix> {
        let mut out = self.clone();
        out.add_rowwise_in_place(bias)?;
        Ok(out)
    }

    pub fn add_rowwise_in_place(&mut self, bias: &Matrix) -> Result<()> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(mismatch("add_rowwise", self, bias));
        }
        for row in self.data.chunks_exact_mut(self.cols) {
            for (x, b) in row.iter_mut().zip(&bias.data) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|x| x * s)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    fn zip_with(
        &self,
        op: &'static str,
        other: &Matrix,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(mismatch(op, self, other));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `1 x cols` row of per-column sums.
    pub fn column_sums(&self) -> Matrix {
        let mut sums = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (s, x) in sums.iter_mut().zip(row) {
                *s += x;
            }
        }
        Matrix {
            rows: 1,
            cols: self.cols,
            data: sums,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(mismatch("max_abs_diff", self, other));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidShape {
            rows,
            cols,
            reason: "matrices need at least one row and one column",
        });
    }
    Ok(())
}

fn mismatch(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

/// `c = a * b` for an `m x k` operand `a` and `k x n` operand `b`, each given
/// as (data, row stride, column stride). `c` is dense row-major `m x n`.
/// Inner dimensions up to this size skip packing and use a direct loop.
const SMALL_K: usize = 8;

fn small_k_gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    match k {
        1 => small_k::<1>(m, n, a, b, c, accumulate),
        2 => small_k::<2>(m, n, a, b, c, accumulate),
        3 => small_k::<3>(m, n, a, b, c, accumulate),
        4 => small_k::<4>(m, n, a, b, c, accumulate),
        5 => small_k::<5>(m, n, a, b, c, accumulate),
        6 => small_k::<6>(m, n, a, b, c, accumulate),
        7 => small_k::<7>(m, n, a, b, c, accumulate),
        8 => small_k::<8>(m, n, a, b, c, accumulate),
        _ => unreachable!("small_k_gemm called with k = {k}"),
    }
}

fn small_k<const K: usize>(
    m: usize,
    n: usize,
    (a, ars, acs): (&[f64], isize, isize),
    (b, brs, bcs): (&[f64], isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    let (ars, acs, brs, bcs) = (ars as usize, acs as usize, brs as usize, bcs as usize);
    for (i, row) in c.chunks_exact_mut(n).enumerate().take(m) {
        let ai: [f64; K] = std::array::from_fn(|p| a[i * ars + p * acs]);
        if bcs == 1 {
            let rows: [&[f64]; K] = std::array::from_fn(|p| &b[p * brs..p * brs + n]);
            for (j, cj) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for p in 0..K {
                    acc += ai[p] * rows[p][j];
                }
                if accumulate {
                    *cj += acc;
                } else {
                    *cj = acc;
                }
            }
        } else {
            for (j, cj) in row.iter_mut().enumerate() {
                let bj = &b[j * bcs..];
                let mut acc = 0.0;
                for p in 0..K {
                    acc += ai[p] * bj[p * brs];
                }
                if accumulate {
                    *cj += acc;
                } else {
                    *cj = acc;
                }
            }
        }
    }
}

/// Few output columns with contiguous rows of `a` and columns of `b`: one
/// dot product per output.
fn dot_gemm(
    m: usize,
    k: usize,
    n: usize,
    (a, ars, _): (&[f64], isize, isize),
    (b, _, bcs): (&[f64], isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    let (ars, bcs) = (ars as usize, bcs as usize);
    for (i, row) in c.chunks_exact_mut(n).enumerate().take(m) {
        let ai = &a[i * ars..i * ars + k];
        for (j, cj) in row.iter_mut().enumerate() {
            let acc = dot(ai, &b[j * bcs..j * bcs + k]);
            if accumulate {
                *cj += acc;
            } else {
                *cj = acc;
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(p, q)| p * q).sum();
    for (p, q) in xc.zip(yc) {
        for l in 0..4 {
            acc[l] += p[l] * q[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Row-major `c = a * b`, or `c += a * b` when `accumulate` is set. Operands
/// are `(data, row stride, column stride)`.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.0.len(), m * k);
    debug_assert_eq!(b.0.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if k <= SMALL_K {
        small_k_gemm(m, k, n, a, b, c, accumulate);
        return;
    }
    if n <= SMALL_K && a.2 == 1 && b.1 == 1 {
        dot_gemm(m, k, n, a, b, c, accumulate);
        return;
    }
    // SAFETY: the strides describe exactly the buffers checked above, and `c`
    // is a distinct, exclusively borrowed buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            if accumulate { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
