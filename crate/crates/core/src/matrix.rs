//! Minimal dense row-major matrix used by the network code.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

/// Whether an operand enters a product as stored or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    /// Wraps a row-major buffer. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[S]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
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
    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    /// Reshapes in place, reusing the allocation. Contents are unspecified
    /// afterwards unless the caller overwrites them.
    pub fn resize(&mut self, rows: usize, cols: usize) {
        self.rows = rows;
        self.cols = cols;
        self.data.resize(rows * cols, S::zero());
    }

    /// Copies the selected rows of `src` into `self`, resizing as needed.
    pub fn gather_rows(&mut self, src: &Matrix<S>, indices: &[usize]) {
        self.resize(indices.len(), src.cols);
        for (dst, &i) in indices.iter().enumerate() {
            self.row_mut(dst).copy_from_slice(src.row(i));
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(S) -> S) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn dims(&self, op: Op) -> (usize, usize) {
        match op {
            Op::N => (self.rows, self.cols),
            Op::T => (self.cols, self.rows),
        }
    }

    fn strides(&self, op: Op) -> (isize, isize) {
        match op {
            Op::N => (self.cols as isize, 1),
            Op::T => (1, self.cols as isize),
        }
    }
}

/// `c = alpha * op(a) op(b) + beta * c`. `c` must already have the result
/// shape.
pub fn gemm<S: Scalar>(alpha: S, a: &Matrix<S>, op_a: Op, b: &Matrix<S>, op_b: Op, beta: S, c: &mut Matrix<S>) {
    let (m, k) = a.dims(op_a);
    let (kb, n) = b.dims(op_b);
    assert_eq!(k, kb, "inner dimensions differ");
    assert_eq!((c.rows, c.cols), (m, n), "output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c.data {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = a.strides(op_a);
    let (rsb, csb) = b.strides(op_b);
    // SAFETY: shapes and strides were derived from the owning buffers above
    // and `c` is borrowed mutably, so it cannot alias `a` or `b`.
    unsafe {
        S::gemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix<f64>, op_a: Op, b: &Matrix<f64>, op_b: Op) -> Matrix<f64> {
        let at = |i, j| match op_a {
            Op::N => a.get(i, j),
            Op::T => a.get(j, i),
        };
        let bt = |i, j| match op_b {
            Op::N => b.get(i, j),
            Op::T => b.get(j, i),
        };
        let (m, k) = a.dims(op_a);
        let n = b.dims(op_b).1;
        let mut c = Matrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += at(i, p) * bt(p, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_for_all_transpositions() {
        let a = Matrix::from_vec(3, 4, (0..12).map(|v| v as f64 * 0.5 - 2.0).collect());
        let b = Matrix::from_vec(4, 3, (0..12).map(|v| (v as f64).sin()).collect());
        let bt = Matrix::from_vec(3, 4, (0..12).map(|v| (v as f64).cos()).collect());
        for (lhs, op_a, rhs, op_b) in [
            (&a, Op::N, &b, Op::N),
            (&a, Op::N, &bt, Op::T),
            (&b, Op::T, &bt, Op::T),
            (&b, Op::T, &b, Op::N),
        ] {
            let expected = naive(lhs, op_a, rhs, op_b);
            let mut c = Matrix::zeros(expected.rows(), expected.cols());
            gemm(1.0, lhs, op_a, rhs, op_b, 0.0, &mut c);
            for (x, y) in c.as_slice().iter().zip(expected.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gemm_accumulates_with_beta() {
        let a = Matrix::<f64>::identity(2);
        let mut c = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = c.clone();
        gemm(2.0, &a, Op::N, &b, Op::N, 1.0, &mut c);
        assert_eq!(c.as_slice(), &[3.0, 6.0, 9.0, 12.0]);
    }

    #[test]
    fn gather_rows_copies_selection() {
        let src = Matrix::from_rows(&[[1.0f32, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let mut dst = Matrix::zeros(0, 0);
        dst.gather_rows(&src, &[2, 0]);
        assert_eq!(dst.as_slice(), &[5.0, 6.0, 1.0, 2.0]);
    }
}
