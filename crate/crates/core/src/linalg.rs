//! Dense matrix primitives: row-major storage, norms, a cyclic Jacobi
//! symmetric eigensolver and Gram-Schmidt orthonormalization.
//!
//! Shapes are small (d ≤ a few dozen) so everything is plain loops over a
//! `Vec<f64>`. Arithmetic helpers panic on shape mismatch; the public
//! operations that take user data validate and return [`Error`] instead.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Maximum asymmetry absorbed by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative off-diagonal Frobenius tolerance for Jacobi convergence.
pub const JACOBI_TOL: f64 = 1e-13;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Columns with smallest singular value at or below this are rank deficient.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:>12.5e} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Serialized as a list of rows.
impl serde::Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq((0..self.rows).map(|i| self.row(i)))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Single column matrix.
    pub fn column_vector(v: &[f64]) -> Self {
        Matrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
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

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols, "column range out of bounds");
        Matrix::from_fn(self.rows, end - start, |i, j| self[(i, start + j)])
    }

    /// Copy padded with zero columns (or truncated) to `cols` columns.
    pub fn resize_cols(&self, cols: usize) -> Matrix {
        Matrix::from_fn(self.rows, cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// `self · rhs`.
    ///
    /// # Panics
    /// If the inner dimensions differ.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for p in 0..self.cols {
                let a = self.data[i * self.cols + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &rhs.data[p * rhs.cols..(p + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs` without forming the transpose.
    pub fn t_matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.rows, rhs.rows, "t_matmul shape mismatch");
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for p in 0..self.rows {
            let brow = &rhs.data[p * rhs.cols..(p + 1) * rhs.cols];
            for i in 0..self.cols {
                let a = self.data[p * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.cols, "matmul_t shape mismatch");
        Matrix::from_fn(self.rows, rhs.rows, |i, j| {
            dot(self.row(i), rhs.row(j))
        })
    }

    /// `self · selfᵀ`, exactly symmetric.
    pub fn gram_outer(&self) -> SymMatrix {
        let n = self.rows;
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(self.row(i), self.row(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        SymMatrix(g)
    }

    /// `selfᵀ · self`, exactly symmetric.
    pub fn gram_inner(&self) -> SymMatrix {
        let g = self.t_matmul(self);
        SymMatrix::symmetrized(g)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        self.zip(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        self.zip(rhs, |a, b| a - b)
    }

    /// `self + s·rhs`.
    pub fn add_scaled(&self, s: f64, rhs: &Matrix) -> Matrix {
        self.zip(rhs, |a, b| a + s * b)
    }

    pub fn add_scaled_in_place(&mut self, s: f64, rhs: &Matrix) {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
    }

    fn zip(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `diag(d) · self`, scaling row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &[f64]) -> Matrix {
        assert_eq!(d.len(), self.rows, "diagonal length mismatch");
        Matrix::from_fn(self.rows, self.cols, |i, j| d[i] * self[(i, j)])
    }

    /// `self · diag(d)`, scaling column `j` by `d[j]`.
    pub fn scale_cols(&self, d: &[f64]) -> Matrix {
        assert_eq!(d.len(), self.cols, "diagonal length mismatch");
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * d[j])
    }

    /// Entrywise sum of products.
    pub fn frobenius_dot(&self, rhs: &Matrix) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch");
        dot(&self.data, &rhs.data)
    }

    pub fn max_abs_diff(&self, rhs: &Matrix) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Frobenius norm without the finiteness check.
    pub fn fro(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Square matrix that is symmetric by construction.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym{:?}", self.0)
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, ij: (usize, usize)) -> &f64 {
        &self.0[ij]
    }
}

impl AsRef<Matrix> for SymMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

impl SymMatrix {
    /// Validates symmetry. Asymmetry up to [`SYMMETRY_TOL`] is averaged away.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid(format!(
                "symmetric matrix must be square, got {}x{}",
                m.rows, m.cols
            )));
        }
        if !m.is_finite() {
            return Err(Error::invalid("non-finite matrix entry"));
        }
        let n = m.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if worst > SYMMETRY_TOL {
            return Err(Error::invalid(format!(
                "matrix is not symmetric (max asymmetry {worst:e})"
            )));
        }
        Ok(Self::symmetrized(m))
    }

    /// `(M + Mᵀ)/2` with no tolerance check. Internal use on products that
    /// are symmetric in exact arithmetic.
    pub(crate) fn symmetrized(mut m: Matrix) -> Self {
        let n = m.rows;
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        SymMatrix(Matrix::from_diag(diag))
    }

    /// Builds from the row-major upper triangle (diagonal included),
    /// `n(n+1)/2` values.
    pub fn from_packed_upper(n: usize, packed: &[f64]) -> Result<Self> {
        if packed.len() != packed_len(n) {
            return Err(Error::invalid(format!(
                "packed upper triangle of dim {n} needs {} values, got {}",
                packed_len(n),
                packed.len()
            )));
        }
        let mut m = Matrix::zeros(n, n);
        let mut p = 0;
        for i in 0..n {
            for j in i..n {
                m[(i, j)] = packed[p];
                m[(j, i)] = packed[p];
                p += 1;
            }
        }
        Ok(SymMatrix(m))
    }

    pub fn to_packed_upper(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(packed_len(n));
        for i in 0..n {
            out.extend_from_slice(&self.0.row(i)[i..]);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn add(&self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.add(&rhs.0))
    }

    pub fn sub(&self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.sub(&rhs.0))
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(self.0.scale(s))
    }

    /// Subtracts `diag(d)` from the leading diagonal.
    pub fn sub_diag(&self, d: &[f64]) -> SymMatrix {
        assert_eq!(d.len(), self.dim(), "diagonal length mismatch");
        let mut m = self.0.clone();
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] -= v;
        }
        SymMatrix(m)
    }
}

/// Number of stored entries in a packed upper triangle.
pub const fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Eigen-decomposition ordered by descending absolute eigenvalue.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// Orthonormal columns aligned with `values`.
    pub vectors: Matrix,
}

impl EigenPairs {
    /// `V · diag(values) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = Matrix::from_fn(self.vectors.rows, self.vectors.cols, |i, j| {
            self.vectors[(i, j)] * self.values[j]
        });
        scaled.matmul_t(&self.vectors)
    }
}

/// Anything with a spectral and Frobenius norm.
pub trait Norms {
    fn spectral_norm(&self) -> Result<f64>;
    fn frobenius_norm(&self) -> Result<f64>;
}

impl Norms for Matrix {
    /// Largest singular value from the eigenvalues of the smaller Gram matrix.
    fn spectral_norm(&self) -> Result<f64> {
        check_finite(self)?;
        Ok(spectral_unchecked(self))
    }

    fn frobenius_norm(&self) -> Result<f64> {
        check_finite(self)?;
        Ok(self.fro())
    }
}

impl Norms for SymMatrix {
    fn spectral_norm(&self) -> Result<f64> {
        check_finite(&self.0)?;
        Ok(sym_spectral_unchecked(self))
    }

    fn frobenius_norm(&self) -> Result<f64> {
        self.0.frobenius_norm()
    }
}

pub fn spectral_norm<M: Norms + ?Sized>(m: &M) -> Result<f64> {
    m.spectral_norm()
}

pub fn frobenius_norm<M: Norms + ?Sized>(m: &M) -> Result<f64> {
    m.frobenius_norm()
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("non-finite matrix entry"))
    }
}

/// Spectral norm of a finite rectangular matrix.
pub(crate) fn spectral_unchecked(m: &Matrix) -> f64 {
    if m.rows == 0 || m.cols == 0 {
        return 0.0;
    }
    let gram = if m.rows <= m.cols {
        m.gram_outer()
    } else {
        m.gram_inner()
    };
    let top = jacobi_values(gram.0).into_iter().fold(0.0, f64::max);
    top.max(0.0).sqrt()
}

/// Spectral norm of a finite symmetric matrix.
pub(crate) fn sym_spectral_unchecked(m: &SymMatrix) -> f64 {
    jacobi_values(m.0.clone())
        .into_iter()
        .fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenPairs> {
    check_finite(&m.0)?;
    let n = m.dim();
    let mut a = m.0.clone();
    let mut v = Matrix::identity(n);
    jacobi(&mut a, Some(&mut v))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].abs().total_cmp(&a[(i, i)].abs()));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(EigenPairs { values, vectors })
}

/// Eigenvalues only, unordered. Falls back to whatever the last sweep
/// produced if the cap is hit, which for norm evaluation is still accurate
/// to far better than the tolerances used downstream.
fn jacobi_values(mut a: Matrix) -> Vec<f64> {
    let _ = jacobi(&mut a, None);
    (0..a.rows).map(|i| a[(i, i)]).collect()
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Diagonalizes `a` in place; accumulates rotations into `v` if given.
fn jacobi(a: &mut Matrix, mut v: Option<&mut Matrix>) -> Result<()> {
    let n = a.rows;
    let scale = a.fro();
    if scale == 0.0 {
        return Ok(());
    }
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(a) <= JACOBI_TOL * scale {
            return Ok(());
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(a, v.as_deref_mut(), p, q, c, s);
            }
        }
    }
    let residual = off_diagonal_norm(a);
    if residual <= JACOBI_TOL * scale {
        Ok(())
    } else {
        Err(Error::NumericFailure {
            message: format!("Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"),
            residual,
        })
    }
}

/// `a ← Jᵀ a J`, `v ← v J` with `J` the (p, q) rotation by (c, s).
fn rotate(a: &mut Matrix, v: Option<&mut Matrix>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows;
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    if let Some(v) = v {
        for k in 0..v.rows {
            let vkp = v[(k, p)];
            let vkq = v[(k, q)];
            v[(k, p)] = c * vkp - s * vkq;
            v[(k, q)] = s * vkp + c * vkq;
        }
    }
}

/// Singular values by one-sided (Hestenes) Jacobi, descending.
/// Independent of [`sym_eig`], so tests can use it as a cross-check.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    check_finite(m)?;
    let work = if m.rows >= m.cols { m.clone() } else { m.transpose() };
    let (rows, cols) = work.shape();
    // Column-major copy makes the column sweeps contiguous.
    let mut c: Vec<Vec<f64>> = (0..cols).map(|j| work.column(j)).collect();
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(&c[p], &c[p]);
                let beta = dot(&c[q], &c[q]);
                let gamma = dot(&c[p], &c[q]);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..rows {
                    let xp = c[p][i];
                    let xq = c[q][i];
                    c[p][i] = cs * xp - sn * xq;
                    c[q][i] = sn * xp + cs * xq;
                }
            }
        }
        if !rotated {
            let mut sv: Vec<f64> = c.iter().map(|col| dot(col, col).sqrt()).collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            return Ok(sv);
        }
    }
    Err(Error::NumericFailure {
        message: "one-sided Jacobi SVD did not converge".into(),
        residual: f64::NAN,
    })
}

/// Orthonormal basis for the column space of `m`, with the same column
/// order (QR with positive R diagonal).
pub fn orthonormalize(m: &Matrix) -> Result<Matrix> {
    check_finite(m)?;
    let (rows, cols) = m.shape();
    if cols > rows {
        return Err(Error::invalid(format!(
            "cannot orthonormalize {cols} columns in dimension {rows}"
        )));
    }
    if cols == 0 {
        return Ok(m.clone());
    }
    let smallest = *singular_values(m)?.last().unwrap_or(&0.0);
    if smallest <= RANK_TOL {
        return Err(Error::invalid(format!(
            "matrix is rank deficient (smallest singular value {smallest:e})"
        )));
    }
    // Modified Gram-Schmidt, run twice for full working precision.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut v = m.column(j);
        for _pass in 0..2 {
            for prev in &q {
                let proj = dot(prev, &v);
                for (vi, pi) in v.iter_mut().zip(prev) {
                    *vi -= proj * pi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }
    Ok(Matrix::from_fn(rows, cols, |i, j| q[j][i]))
}
