//! Dense row-major matrices and the handful of constructions the rank
//! machinery needs: products, transposes, Kronecker products, and the
//! stacked tangent-space matrix `[I (x) B; A^T (x) I]` whose rank encodes
//! the matrix-factorization rank stratum.

use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixT<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> MatrixT<S> {
    /// Build from row-major data. Rejects empty shapes, length mismatches
    /// and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("matrix shape {rows}x{cols} is empty")));
        }
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix shape {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        Ok(MatrixT { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatrixT {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        MatrixT { rows, cols, data }
    }

    /// Convenience for literal test matrices.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(invalid("ragged rows"));
        }
        Self::new(r, c, rows.iter().flatten().copied().collect())
    }

    /// Entries i.i.d. standard normal.
    pub fn random_normal(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| S::of(rng.standard_normal()))
            .collect();
        MatrixT { rows, cols, data }
    }

    /// Random `d x d` matrix of exact rank `r`, built as a product of a
    /// `d x r` and an `r x d` standard-normal factor (rank `r` almost surely).
    /// `r = 0` gives the zero matrix.
    pub fn random_with_rank(d: usize, r: usize, rng: &mut Rng) -> Self {
        if r == 0 {
            return Self::zeros(d, d);
        }
        let left = Self::random_normal(d, r, rng);
        let right = Self::random_normal(r, d, rng);
        left.matmul(&right)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == S::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + aik * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn scale(&self, c: S) -> Self {
        MatrixT {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, &x| acc + x * x)
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Kronecker product. Shape `(ra*rb) x (ca*cb)`; errors if that overflows.
pub fn kron<S: Scalar>(a: &MatrixT<S>, b: &MatrixT<S>) -> Result<MatrixT<S>> {
    let rows = a
        .rows()
        .checked_mul(b.rows())
        .ok_or_else(|| invalid("kron: row count overflows"))?;
    let cols = a
        .cols()
        .checked_mul(b.cols())
        .ok_or_else(|| invalid("kron: column count overflows"))?;
    rows.checked_mul(cols)
        .ok_or_else(|| invalid("kron: entry count overflows"))?;
    let mut out = MatrixT::zeros(rows, cols);
    for ia in 0..a.rows() {
        for ja in 0..a.cols() {
            let v = a.get(ia, ja);
            for ib in 0..b.rows() {
                for jb in 0..b.cols() {
                    out.set(ia * b.rows() + ib, ja * b.cols() + jb, v * b.get(ib, jb));
                }
            }
        }
    }
    Ok(out)
}

/// The `2d^2 x d^2` stack `[I (x) B]` over `[A^T (x) I]` for square `A`, `B`.
/// Its rank is `d^2 - (d - rank A)(d - rank B)`.
pub fn gamma_matrix<S: Scalar>(a: &MatrixT<S>, b: &MatrixT<S>) -> Result<MatrixT<S>> {
    if a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows() {
        return Err(invalid(format!(
            "gamma_matrix needs square matrices of equal side, got {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let d = a.rows();
    let eye = MatrixT::<S>::identity(d);
    let top = kron(&eye, b)?;
    let bottom = kron(&a.transpose(), &eye)?;
    let mut out = MatrixT::zeros(2 * d * d, d * d);
    for i in 0..d * d {
        for j in 0..d * d {
            out.set(i, j, top.get(i, j));
            out.set(d * d + i, j, bottom.get(i, j));
        }
    }
    Ok(out)
}
