//! Small dense matrices and the factorizations the filters need.
//!
//! Everything here is sized for state dimensions up to 8 and factor widths
//! up to 16; no blocking, no pivoting beyond what the algorithms require.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};

/// Relative Frobenius tolerance for factor reconstructions.
pub const RECON_TOL: f64 = 1e-10;
/// Scale of the diagonal jitter added on the single Cholesky retry.
pub const JITTER_SCALE: f64 = 1e-10;
/// Eigenvalue floor applied by [`psd_repair`].
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Smallest admissible diagonal entry of a [`tria`] factor.
pub const RANK_TOL: f64 = 1e-14;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows<const C: usize>(rows: &[[f64; C]]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Matrix { rows: rows.len(), cols: C, data }
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn column(v: &[f64]) -> Self {
        Matrix { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "mul_vec dimension");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    /// ½(A + Aᵀ).
    pub fn symmetrized(&self) -> Matrix {
        assert!(self.is_square());
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// A·Aᵀ.
    pub fn gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in 0..=i {
                let v: f64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "hstack rows");
        let cols = self.cols + other.cols;
        let mut m = Matrix::zeros(self.rows, cols);
        for i in 0..self.rows {
            m.data[i * cols..i * cols + self.cols].copy_from_slice(self.row(i));
            m.data[i * cols + self.cols..(i + 1) * cols].copy_from_slice(other.row(i));
        }
        m
    }

    /// Vertical concatenation.
    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "vstack cols");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix { rows: self.rows + other.rows, cols: self.cols, data }
    }

    /// `blockdiag(self, other)`.
    pub fn block_diag(&self, other: &Matrix) -> Matrix {
        let mut m = Matrix::zeros(self.rows + other.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self[(i, j)];
            }
        }
        for i in 0..other.rows {
            for j in 0..other.cols {
                m[(self.rows + i, self.cols + j)] = other[(i, j)];
            }
        }
        m
    }

    /// Sub-block copy of rows `r0..r0+nr`, columns `c0..c0+nc`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Matrix {
        let mut m = Matrix::zeros(nr, nc);
        for i in 0..nr {
            for j in 0..nc {
                m[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
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

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "mul shape");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }
}

/// Lower-triangular factor `S` with positive diagonal such that `P = S·Sᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareRootFactor(Matrix);

impl SquareRootFactor {
    /// Wraps a lower-triangular matrix after checking the invariants.
    pub fn from_lower(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch);
        }
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        for i in 0..m.rows() {
            if m[(i, i)] <= 0.0 {
                return Err(Error::NotPositiveDefinite);
            }
            for j in i + 1..m.cols() {
                if m[(i, j)] != 0.0 {
                    return Err(Error::InvalidParameter("factor is not lower triangular"));
                }
            }
        }
        Ok(SquareRootFactor(m))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// `S·Sᵀ`.
    pub fn covariance(&self) -> Matrix {
        self.0.gram()
    }

    /// Solves `S·X = B` by forward substitution.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let s = &self.0;
        let n = s.rows();
        assert_eq!(b.rows(), n, "solve rows");
        let mut x = b.clone();
        for c in 0..b.cols() {
            for i in 0..n {
                let mut acc = x[(i, c)];
                for k in 0..i {
                    acc -= s[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = acc / s[(i, i)];
            }
        }
        x
    }

    /// Solves `Sᵀ·X = B` by back substitution.
    pub fn solve_transposed(&self, b: &Matrix) -> Matrix {
        let s = &self.0;
        let n = s.rows();
        assert_eq!(b.rows(), n, "solve_transposed rows");
        let mut x = b.clone();
        for c in 0..b.cols() {
            for i in (0..n).rev() {
                let mut acc = x[(i, c)];
                for k in i + 1..n {
                    acc -= s[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = acc / s[(i, i)];
            }
        }
        x
    }

    /// Solves `S·Sᵀ·X = B`.
    pub fn solve_covariance(&self, b: &Matrix) -> Matrix {
        self.solve_transposed(&self.solve(b))
    }
}

fn cholesky_raw(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = libm::sqrt(d);
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Some(l)
}

/// Lower Cholesky factor of the symmetrized input, with one jitter retry.
pub fn cholesky_lower(p: &Matrix) -> Result<SquareRootFactor> {
    if !p.is_square() {
        return Err(Error::DimensionMismatch);
    }
    if !p.is_finite() {
        return Err(Error::NonFinite);
    }
    let sym = p.symmetrized();
    if let Some(l) = cholesky_raw(&sym) {
        return Ok(SquareRootFactor(l));
    }
    let n = sym.rows();
    let jitter = JITTER_SCALE * sym.trace() / n as f64;
    if jitter > 0.0 {
        let mut retry = sym;
        for i in 0..n {
            retry[(i, i)] += jitter;
        }
        if let Some(l) = cholesky_raw(&retry) {
            return Ok(SquareRootFactor(l));
        }
    }
    Err(Error::NotPositiveDefinite)
}

/// Upper-triangular `R` (n×n) of the Householder QR of a k×n matrix, k ≥ n.
fn householder_r(mut m: Matrix) -> Matrix {
    let (k, n) = (m.rows(), m.cols());
    let mut v = vec![0.0; k];
    for j in 0..n.min(k) {
        let norm = libm::sqrt((j..k).map(|i| m[(i, j)] * m[(i, j)]).sum::<f64>());
        if norm == 0.0 {
            continue;
        }
        let alpha = if m[(j, j)] > 0.0 { -norm } else { norm };
        for i in j..k {
            v[i] = m[(i, j)];
        }
        v[j] -= alpha;
        let vtv: f64 = (j..k).map(|i| v[i] * v[i]).sum();
        if vtv == 0.0 {
            continue;
        }
        for c in j..n {
            let dot: f64 = (j..k).map(|i| v[i] * m[(i, c)]).sum();
            let f = 2.0 * dot / vtv;
            for i in j..k {
                m[(i, c)] -= f * v[i];
            }
        }
        for i in j + 1..k {
            m[(i, j)] = 0.0;
        }
    }
    m.block(0, 0, n, n)
}

/// General triangularization: lower-triangular `S` with `S·Sᵀ = A·Aᵀ`.
///
/// `A` is n×k with k ≥ n. The factor comes from a QR decomposition of `Aᵀ`
/// with columns sign-flipped so the diagonal is non-negative.
pub fn tria(a: &Matrix) -> Result<SquareRootFactor> {
    let (n, k) = (a.rows(), a.cols());
    if k < n {
        return Err(Error::DimensionMismatch);
    }
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let r = householder_r(a.transpose());
    let mut s = r.transpose();
    for j in 0..n {
        if s[(j, j)] < 0.0 {
            for i in j..n {
                s[(i, j)] = -s[(i, j)];
            }
        }
        if s[(j, j)] < RANK_TOL {
            return Err(Error::RankDeficient);
        }
    }
    Ok(SquareRootFactor(s))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are eigenvectors.
pub(crate) fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if libm::sqrt(off) <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diagonal(), v)
}

/// Symmetrizes and clamps eigenvalues to at least [`EIGEN_FLOOR`].
///
/// Inputs that are already symmetric with every eigenvalue above the floor
/// come back unchanged.
pub fn psd_repair(p: &Matrix) -> Result<Matrix> {
    if !p.is_square() {
        return Err(Error::DimensionMismatch);
    }
    if !p.is_finite() {
        return Err(Error::NonFinite);
    }
    let sym = p.symmetrized();
    let (vals, vecs) = symmetric_eigen(&sym);
    if vals.iter().all(|&l| l >= EIGEN_FLOOR) {
        return Ok(sym);
    }
    let n = sym.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &l) in vals.iter().enumerate() {
        let l = l.max(EIGEN_FLOOR);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += l * vecs[(i, k)] * vecs[(j, k)];
            }
        }
    }
    Ok(out.symmetrized())
}

/// Γ(a) for a > 0.
pub fn gamma_fn(a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::DomainError);
    }
    Ok(libm::tgamma(a))
}

/// ln Γ(a) for a > 0.
pub fn ln_gamma(a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::DomainError);
    }
    Ok(libm::lgamma(a))
}

/// Least-squares solution of `A·x ≈ b` via Householder QR.
///
/// Returns the solution and a condition estimate `max|Rᵢᵢ| / min|Rᵢᵢ|`.
pub fn lstsq(a: &Matrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (k, n) = (a.rows(), a.cols());
    if b.len() != k || k < n {
        return Err(Error::DimensionMismatch);
    }
    let aug = a.hstack(&Matrix::column(b));
    let mut m = aug;
    // QR on the augmented matrix keeps Qᵀb in the last column.
    let mut v = vec![0.0; k];
    for j in 0..n {
        let norm = libm::sqrt((j..k).map(|i| m[(i, j)] * m[(i, j)]).sum::<f64>());
        if norm == 0.0 {
            continue;
        }
        let alpha = if m[(j, j)] > 0.0 { -norm } else { norm };
        for i in j..k {
            v[i] = m[(i, j)];
        }
        v[j] -= alpha;
        let vtv: f64 = (j..k).map(|i| v[i] * v[i]).sum();
        for c in j..=n {
            let dot: f64 = (j..k).map(|i| v[i] * m[(i, c)]).sum();
            let f = 2.0 * dot / vtv;
            for i in j..k {
                m[(i, c)] -= f * v[i];
            }
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    if !cond.is_finite() {
        return Err(Error::IllConditioned { estimate: cond });
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = m[(i, n)];
        for c in i + 1..n {
            acc -= m[(i, c)] * x[c];
        }
        x[i] = acc / m[(i, i)];
    }
    Ok((x, cond))
}
