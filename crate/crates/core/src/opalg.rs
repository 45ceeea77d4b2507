//! Dense complex linear algebra for few-qubit operators.
//!
//! Matrices are stored row-major.  Sizes in this crate are tiny (at most
//! 256x256 for two-qubit process reconstruction), so everything is dense and
//! allocation churn is irrelevant.  Spectral routines (`svd`,
//! [`hermitian_eig`]) are backed by nalgebra; eigenvalues and singular values
//! are always returned in descending order.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Max allowed entry of |A - A^dag| before a matrix is rejected as non-Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Max allowed entry of |U^dag U - I| for a matrix to count as unitary.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Decompositions must reproduce their input to this accuracy (max entry).
pub const RECONSTRUCTION_TOL: f64 = 1e-9;
/// Eigenvalues in [-PSD_CLIP, 0) are clipped to zero; anything lower is an error.
pub const PSD_CLIP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("matrix is not Hermitian: max |A - A^dag| entry {deviation:.3e} exceeds {tol:.1e}")]
    NotHermitian { deviation: f64, tol: f64 },
    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:.3e} is below -{tol:.1e}")]
    NotPsd { eigenvalue: f64, tol: f64 },
    #[error("singular value decomposition did not converge")]
    SvdFailure,
    #[error("cannot normalize a vector with zero norm")]
    ZeroNorm,
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major data.  Rejects empty shapes, length
    /// mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, OpalgError> {
        if rows == 0 || cols == 0 {
            return Err(OpalgError::DimensionMismatch(format!(
                "matrix shape {rows}x{cols} has a zero dimension"
            )));
        }
        if data.len() != rows * cols {
            return Err(OpalgError::DimensionMismatch(format!(
                "matrix shape {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(OpalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be nonzero");
        Self { rows, cols, data: vec![C64::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, z) in diag.iter().enumerate() {
            m[(i, i)] = *z;
        }
        m
    }

    /// Convenience constructor from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self, OpalgError> {
        Self::new(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
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

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square(), "trace requires a square matrix");
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// Hilbert-Schmidt inner product tr(self^dag other).
    pub fn hs_inner(&self, other: &Self) -> C64 {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "hs_inner requires equal shapes"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "max_abs_diff requires equal shapes"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Max entry of |A - A^dag|.
    pub fn hermitian_deviation(&self) -> f64 {
        assert!(self.is_square(), "hermitian_deviation requires a square matrix");
        let mut dev: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                dev = dev.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian_within(&self, tol: f64) -> bool {
        self.is_square() && self.hermitian_deviation() <= tol
    }

    /// (A + A^dag) / 2.
    pub fn hermitized(&self) -> Self {
        assert!(self.is_square(), "hermitized requires a square matrix");
        Self::from_fn(self.rows, self.cols, |r, c| {
            (self[(r, c)] + self[(c, r)].conj()) * 0.5
        })
    }

    pub fn column(&self, c: usize) -> ComplexVector {
        assert!(c < self.cols, "column index out of range");
        ComplexVector {
            data: (0..self.rows).map(|r| self[(r, c)]).collect(),
        }
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &ComplexVector) -> ComplexVector {
        assert_eq!(self.cols, v.dim(), "apply requires cols == vector dim");
        let mut out = vec![C64::ZERO; self.rows];
        for r in 0..self.rows {
            let mut acc = C64::ZERO;
            for c in 0..self.cols {
                acc += self[(r, c)] * v.data[c];
            }
            out[r] = acc;
        }
        ComplexVector { data: out }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        assert!(r < self.rows && c < self.cols, "matrix index out of range");
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        assert!(r < self.rows && c < self.cols, "matrix index out of range");
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "matrix addition requires equal shapes"
        );
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "matrix subtraction requires equal shapes"
        );
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matrix product requires lhs cols == rhs rows"
        );
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == C64::ZERO {
                    continue;
                }
                for c in 0..rhs.cols {
                    out[(r, c)] += a * rhs[(k, c)];
                }
            }
        }
        out
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Dense complex column vector.
#[derive(Clone, PartialEq)]
pub struct ComplexVector {
    data: Vec<C64>,
}

impl ComplexVector {
    pub fn new(data: Vec<C64>) -> Result<Self, OpalgError> {
        if data.is_empty() {
            return Err(OpalgError::DimensionMismatch(
                "vector must be nonempty".into(),
            ));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(OpalgError::NonFinite);
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector dim must be nonzero");
        Self { data: vec![C64::ZERO; dim] }
    }

    /// Computational basis ket |k> in the given dimension.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index out of range");
        let mut v = Self::zeros(dim);
        v.data[k] = C64::ONE;
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self, OpalgError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(OpalgError::ZeroNorm);
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn add_scaled(&mut self, factor: C64, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "add_scaled requires equal dims");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    /// <self|other>, conjugate-linear in self.
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.dim(), other.dim(), "inner requires equal dims");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Rank-one projector |self><self| (not normalized).
    pub fn outer(&self) -> ComplexMatrix {
        let n = self.dim();
        ComplexMatrix::from_fn(n, n, |r, c| self.data[r] * self.data[c].conj())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "max_abs_diff requires equal dims");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for ComplexVector {
    type Output = C64;

    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for ComplexVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.data[i]
    }
}

impl fmt::Debug for ComplexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexVector [")?;
        for z in &self.data {
            write!(f, " {:+.6}{:+.6}i", z.re, z.im)?;
        }
        write!(f, " ]")
    }
}

/// Kronecker product a (x) b.  Index convention: the left factor is the most
/// significant block, so (a (x) b)[(i*rb + k), (j*cb + l)] = a[i,j] b[k,l].
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ra, ca) = (a.rows, a.cols);
    let (rb, cb) = (b.rows, b.cols);
    let mut out = ComplexMatrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == C64::ZERO {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of column vectors, same ordering as [`tensor_product`].
pub fn tensor_product_vec(a: &ComplexVector, b: &ComplexVector) -> ComplexVector {
    let mut data = Vec::with_capacity(a.dim() * b.dim());
    for i in 0..a.dim() {
        for k in 0..b.dim() {
            data.push(a[i] * b[k]);
        }
    }
    ComplexVector { data }
}

/// Conjugate transpose, as a free function for pipeline-style call sites.
pub fn dagger(a: &ComplexMatrix) -> ComplexMatrix {
    a.dagger()
}

/// Eigendecomposition of a Hermitian matrix.  Columns of `eigenvectors` are
/// orthonormal and ordered to match `eigenvalues` (descending), so
/// A = V diag(w) V^dag.
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

/// Rejects non-square or non-Hermitian input (tolerance [`HERMITICITY_TOL`]),
/// then diagonalizes the Hermitian part (A + A^dag)/2.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<HermitianEig, OpalgError> {
    if !a.is_square() {
        return Err(OpalgError::DimensionMismatch(format!(
            "hermitian_eig requires a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let deviation = a.hermitian_deviation();
    if deviation > HERMITICITY_TOL {
        return Err(OpalgError::NotHermitian { deviation, tol: HERMITICITY_TOL });
    }
    let eig = nalgebra::SymmetricEigen::new(to_na(&a.hermitized()));
    // nalgebra does not order the spectrum; sort descending and permute the
    // eigenvector columns to match.
    let n = a.rows;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEig { eigenvalues, eigenvectors })
}

/// Thin singular value decomposition, a = u diag(s) v^dag.  Columns of `u`
/// and `v` are orthonormal; `singular_values` are nonnegative and descending.
pub struct Svd {
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
    pub v: ComplexMatrix,
}

pub fn svd(a: &ComplexMatrix) -> Result<Svd, OpalgError> {
    // 5*EPSILON matches what nalgebra's infallible svd() uses internally; a
    // tighter eps derails deflation on matrices with exact zero structure.
    let res = to_na(a)
        .try_svd(true, true, f64::EPSILON * 5.0, 100_000)
        .ok_or(OpalgError::SvdFailure)?;
    let u_na = res.u.expect("u was requested");
    let vt_na = res.v_t.expect("v_t was requested");
    let k = res.singular_values.len();
    // nalgebra sorts descending already; re-sort defensively so the ordering
    // contract never silently depends on the backend.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        res.singular_values[j]
            .partial_cmp(&res.singular_values[i])
            .unwrap()
    });
    let singular_values: Vec<f64> = order.iter().map(|&i| res.singular_values[i]).collect();
    let u = ComplexMatrix::from_fn(u_na.nrows(), k, |r, c| u_na[(r, order[c])]);
    let v = ComplexMatrix::from_fn(vt_na.ncols(), k, |r, c| vt_na[(order[c], r)].conj());
    Ok(Svd { u, singular_values, v })
}

/// Principal square root of a positive semidefinite matrix.
///
/// Eigenvalues in [-PSD_CLIP, 0) are treated as rounding noise and clipped to
/// zero; anything below that window is a genuine negative eigenvalue and
/// yields [`OpalgError::NotPsd`].
pub fn matrix_sqrt_psd(a: &ComplexMatrix) -> Result<ComplexMatrix, OpalgError> {
    let eig = hermitian_eig(a)?;
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &w in &eig.eigenvalues {
        if w < -PSD_CLIP {
            return Err(OpalgError::NotPsd { eigenvalue: w, tol: PSD_CLIP });
        }
        roots.push(C64::new(w.max(0.0).sqrt(), 0.0));
    }
    let v = eig.eigenvectors;
    Ok(&(&v * &ComplexMatrix::from_diag(&roots)) * &v.dagger())
}

/// Realignment of a bipartite operator on dim_a (x) dim_b.
///
/// For O = A (x) B the result is the rank-one matrix vec(A) vec(B)^T built
/// from row-major vectorizations, so the SVD of the realignment is exactly
/// the operator-Schmidt decomposition.  Index map:
/// R[i*dim_a + j, k*dim_b + l] = O[i*dim_b + k, j*dim_b + l].
pub fn realign(o: &ComplexMatrix, dim_a: usize, dim_b: usize) -> Result<ComplexMatrix, OpalgError> {
    check_bipartite_shape(o, dim_a, dim_b)?;
    let mut r = ComplexMatrix::zeros(dim_a * dim_a, dim_b * dim_b);
    for i in 0..dim_a {
        for j in 0..dim_a {
            for k in 0..dim_b {
                for l in 0..dim_b {
                    r[(i * dim_a + j, k * dim_b + l)] = o[(i * dim_b + k, j * dim_b + l)];
                }
            }
        }
    }
    Ok(r)
}

/// Inverse of [`realign`]: rebuilds the operator from its realignment.
pub fn unrealign(
    r: &ComplexMatrix,
    dim_a: usize,
    dim_b: usize,
) -> Result<ComplexMatrix, OpalgError> {
    if r.rows != dim_a * dim_a || r.cols != dim_b * dim_b {
        return Err(OpalgError::DimensionMismatch(format!(
            "realignment of a {dim_a}x{dim_b} bipartition must be {}x{}, got {}x{}",
            dim_a * dim_a,
            dim_b * dim_b,
            r.rows,
            r.cols
        )));
    }
    let d = dim_a * dim_b;
    let mut o = ComplexMatrix::zeros(d, d);
    for i in 0..dim_a {
        for j in 0..dim_a {
            for k in 0..dim_b {
                for l in 0..dim_b {
                    o[(i * dim_b + k, j * dim_b + l)] = r[(i * dim_a + j, k * dim_b + l)];
                }
            }
        }
    }
    Ok(o)
}

fn check_bipartite_shape(
    o: &ComplexMatrix,
    dim_a: usize,
    dim_b: usize,
) -> Result<(), OpalgError> {
    if dim_a == 0 || dim_b == 0 {
        return Err(OpalgError::DimensionMismatch(
            "bipartite dims must be nonzero".into(),
        ));
    }
    let d = dim_a * dim_b;
    if o.rows != d || o.cols != d {
        return Err(OpalgError::DimensionMismatch(format!(
            "operator on a {dim_a}x{dim_b} bipartition must be {d}x{d}, got {}x{}",
            o.rows, o.cols
        )));
    }
    Ok(())
}

fn to_na(m: &ComplexMatrix) -> nalgebra::DMatrix<C64> {
    nalgebra::DMatrix::from_fn(m.rows, m.cols, |r, c| m[(r, c)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn assert_matrix_close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64, what: &str) {
        let diff = a.max_abs_diff(b);
        assert!(diff <= tol, "{what}: max entry diff {diff:e} exceeds {tol:e}\nleft: {a:?}\nright: {b:?}");
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            ComplexMatrix::new(2, 2, vec![C64::ONE; 3]),
            Err(OpalgError::DimensionMismatch(_))
        ));
        assert!(matches!(
            ComplexMatrix::new(0, 2, vec![]),
            Err(OpalgError::DimensionMismatch(_))
        ));
        assert!(matches!(
            ComplexMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]),
            Err(OpalgError::NonFinite)
        ));
        assert!(matches!(
            ComplexVector::new(vec![c(0.0, f64::INFINITY)]),
            Err(OpalgError::NonFinite)
        ));
    }

    #[test]
    fn product_trace_dagger_basics() {
        let a = ComplexMatrix::new(2, 2, vec![c(1.0, 1.0), c(2.0, 0.0), c(0.0, -1.0), c(3.0, 2.0)])
            .unwrap();
        let b = ComplexMatrix::identity(2);
        assert_matrix_close(&(&a * &b), &a, 0.0, "A * I");
        assert_eq!(a.trace(), c(4.0, 3.0));

        // (AB)^dag = B^dag A^dag
        let b = ComplexMatrix::new(2, 2, vec![c(0.0, 2.0), c(1.0, 0.0), c(5.0, -3.0), c(0.0, 0.0)])
            .unwrap();
        let lhs = (&a * &b).dagger();
        let rhs = &b.dagger() * &a.dagger();
        assert_matrix_close(&lhs, &rhs, 1e-15, "(AB)^dag");

        // dagger is an involution
        assert_matrix_close(&a.dagger().dagger(), &a, 0.0, "double dagger");
    }

    #[test]
    fn tensor_product_of_diagonals() {
        let a = ComplexMatrix::from_diag(&[c(1.0, 0.0), c(2.0, 0.0)]);
        let b = ComplexMatrix::from_diag(&[c(3.0, 0.0), c(4.0, 0.0)]);
        let expect = ComplexMatrix::from_diag(&[c(3.0, 0.0), c(4.0, 0.0), c(6.0, 0.0), c(8.0, 0.0)]);
        assert_matrix_close(&tensor_product(&a, &b), &expect, 0.0, "diag kron");
    }

    #[test]
    fn tensor_product_mixed_product_rule() {
        let a = ComplexMatrix::new(2, 2, vec![c(1.0, 0.5), c(0.0, 2.0), c(3.0, 0.0), c(1.0, -1.0)])
            .unwrap();
        let b = ComplexMatrix::new(2, 2, vec![c(0.0, 1.0), c(2.0, 0.0), c(1.0, 1.0), c(0.5, 0.0)])
            .unwrap();
        let cm = ComplexMatrix::new(2, 2, vec![c(2.0, 0.0), c(0.0, -1.0), c(1.0, 0.0), c(4.0, 1.0)])
            .unwrap();
        let d = ComplexMatrix::new(2, 2, vec![c(1.0, 0.0), c(0.0, 0.0), c(2.0, 2.0), c(3.0, 0.0)])
            .unwrap();
        let lhs = &tensor_product(&a, &b) * &tensor_product(&cm, &d);
        let rhs = tensor_product(&(&a * &cm), &(&b * &d));
        assert_matrix_close(&lhs, &rhs, 1e-12, "(A x B)(C x D) = AC x BD");
    }

    #[test]
    fn tensor_product_vec_ordering() {
        // |0> x |1> = |01> = e_1 in a 4-dim space (left factor most significant).
        let v = tensor_product_vec(&ComplexVector::basis(2, 0), &ComplexVector::basis(2, 1));
        assert_eq!(v.data(), ComplexVector::basis(4, 1).data());
    }

    #[test]
    fn hermitian_eig_sorts_descending_and_reconstructs() {
        let a = ComplexMatrix::new(
            2,
            2,
            vec![c(-1.0, 0.0), c(0.0, -2.0), c(0.0, 2.0), c(2.0, 0.0)],
        )
        .unwrap();
        let eig = hermitian_eig(&a).unwrap();
        // Spectrum of [[-1, -2i], [2i, 2]]: (1 +- sqrt(25))/2 = 3, -2.
        assert!((eig.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((eig.eigenvalues[1] + 2.0).abs() < 1e-12);

        let v = &eig.eigenvectors;
        let w = ComplexMatrix::from_diag(
            &eig.eigenvalues.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>(),
        );
        assert_matrix_close(&(&(v * &w) * &v.dagger()), &a, 1e-12, "V W V^dag");
        assert_matrix_close(
            &(&v.dagger() * v),
            &ComplexMatrix::identity(2),
            1e-12,
            "eigenvector orthonormality",
        );
    }

    #[test]
    fn hermitian_eig_rejects_non_hermitian() {
        let a = ComplexMatrix::new(2, 2, vec![C64::ZERO, C64::ONE, C64::ZERO, C64::ZERO]).unwrap();
        assert!(matches!(
            hermitian_eig(&a),
            Err(OpalgError::NotHermitian { .. })
        ));
    }

    #[test]
    fn svd_nilpotent_and_rectangular() {
        let a = ComplexMatrix::new(2, 2, vec![C64::ZERO, c(2.0, 0.0), C64::ZERO, C64::ZERO])
            .unwrap();
        let s = svd(&a).unwrap();
        assert!((s.singular_values[0] - 2.0).abs() < 1e-12);
        assert!(s.singular_values[1].abs() < 1e-12);

        let b = ComplexMatrix::new(
            2,
            3,
            vec![c(1.0, 1.0), c(0.0, 2.0), c(3.0, 0.0), c(-1.0, 0.5), c(2.0, -2.0), c(0.0, 0.0)],
        )
        .unwrap();
        let s = svd(&b).unwrap();
        assert_eq!(s.u.rows(), 2);
        assert_eq!(s.v.rows(), 3);
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let sm = ComplexMatrix::from_diag(
            &s.singular_values.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>(),
        );
        assert_matrix_close(&(&(&s.u * &sm) * &s.v.dagger()), &b, RECONSTRUCTION_TOL, "u s v^dag");
    }

    #[test]
    fn svd_of_zero_matrix() {
        let z = ComplexMatrix::zeros(3, 2);
        let s = svd(&z).unwrap();
        assert!(s.singular_values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sqrt_psd_examples() {
        let a = ComplexMatrix::from_diag(&[c(4.0, 0.0), c(9.0, 0.0)]);
        let r = matrix_sqrt_psd(&a).unwrap();
        assert_matrix_close(
            &r,
            &ComplexMatrix::from_diag(&[c(2.0, 0.0), c(3.0, 0.0)]),
            1e-12,
            "sqrt(diag(4,9))",
        );

        // Square of the root reproduces a non-diagonal PSD matrix: A = B^dag B.
        let b = ComplexMatrix::new(2, 2, vec![c(1.0, 2.0), c(0.0, 1.0), c(2.0, -1.0), c(3.0, 0.0)])
            .unwrap();
        let a = &b.dagger() * &b;
        let r = matrix_sqrt_psd(&a).unwrap();
        assert_matrix_close(&(&r * &r), &a, RECONSTRUCTION_TOL, "sqrt squared");

        // Clip window: a -5e-11 eigenvalue is rounding noise, not a failure.
        let noisy = ComplexMatrix::from_diag(&[c(1.0, 0.0), c(-5e-11, 0.0)]);
        let r = matrix_sqrt_psd(&noisy).unwrap();
        assert!((r[(1, 1)]).norm() == 0.0);

        assert!(matches!(
            matrix_sqrt_psd(&ComplexMatrix::from_diag(&[c(1.0, 0.0), c(-1.0, 0.0)])),
            Err(OpalgError::NotPsd { .. })
        ));
    }

    #[test]
    fn realign_of_kron_is_rank_one() {
        let a = ComplexMatrix::new(2, 2, vec![c(1.0, 1.0), c(2.0, 0.0), c(0.0, 3.0), c(-1.0, 0.0)])
            .unwrap();
        let b = ComplexMatrix::new(2, 2, vec![c(0.0, 1.0), c(1.0, 0.0), c(2.0, -2.0), c(0.5, 0.0)])
            .unwrap();
        let r = realign(&tensor_product(&a, &b), 2, 2).unwrap();
        let s = svd(&r).unwrap();
        assert!((s.singular_values[0] - a.frobenius_norm() * b.frobenius_norm()).abs() < 1e-10);
        assert!(s.singular_values[1..].iter().all(|&x| x < 1e-10));
    }

    #[test]
    fn realign_unrealign_roundtrip() {
        let o = ComplexMatrix::from_fn(4, 4, |r, c_| c(r as f64 + 1.0, c_ as f64 * 0.5 - 1.0));
        let r = realign(&o, 2, 2).unwrap();
        assert_matrix_close(&unrealign(&r, 2, 2).unwrap(), &o, 0.0, "unrealign(realign)");

        let o6 = ComplexMatrix::from_fn(6, 6, |r, c_| c(0.1 * r as f64, 0.3 * c_ as f64));
        let r6 = realign(&o6, 2, 3).unwrap();
        assert_eq!((r6.rows(), r6.cols()), (4, 9));
        assert_matrix_close(&unrealign(&r6, 2, 3).unwrap(), &o6, 0.0, "2x3 roundtrip");
    }

    #[test]
    fn realign_cnot_singular_values() {
        // CNOT = P0 x I + P1 x X has orthogonal factor pairs with norms
        // (1*sqrt2, 1*sqrt2), so the realignment spectrum is (sqrt2, sqrt2, 0, 0).
        let mut cnot = ComplexMatrix::identity(4);
        cnot[(2, 2)] = C64::ZERO;
        cnot[(3, 3)] = C64::ZERO;
        cnot[(2, 3)] = C64::ONE;
        cnot[(3, 2)] = C64::ONE;
        let s = svd(&realign(&cnot, 2, 2).unwrap()).unwrap();
        let sqrt2 = 2.0_f64.sqrt();
        assert!((s.singular_values[0] - sqrt2).abs() < 1e-12);
        assert!((s.singular_values[1] - sqrt2).abs() < 1e-12);
        assert!(s.singular_values[2].abs() < 1e-12);
        assert!(s.singular_values[3].abs() < 1e-12);
    }

    #[test]
    fn realign_shape_errors() {
        let o = ComplexMatrix::identity(4);
        assert!(matches!(realign(&o, 2, 3), Err(OpalgError::DimensionMismatch(_))));
        assert!(matches!(
            unrealign(&ComplexMatrix::identity(4), 2, 3),
            Err(OpalgError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn vector_basics() {
        let v = ComplexVector::new(vec![c(3.0, 0.0), c(0.0, 4.0)]).unwrap();
        assert!((v.norm() - 5.0).abs() < 1e-15);
        let n = v.normalized().unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-15);
        assert!(matches!(
            ComplexVector::zeros(2).normalized(),
            Err(OpalgError::ZeroNorm)
        ));

        // <v|w> conjugates the left argument.
        let w = ComplexVector::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(v.inner(&w), c(3.0, -4.0));

        // |0><0| projector.
        let p = ComplexVector::basis(2, 0).outer();
        assert_eq!(p[(0, 0)], C64::ONE);
        assert_eq!(p[(1, 1)], C64::ZERO);
    }
}
