//! Dense matrix primitives shared by every stage of the pipeline.
//!
//! Everything here works on small dense `f64` matrices (tens of rows at most).
//! Symmetric matrices are wrapped in [`SymMatrix`] so that the symmetry
//! invariant is checked once, at construction, instead of at every use site.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Absolute asymmetry tolerated by [`SymMatrix::new`] (scaled by the largest entry when that exceeds one).
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_REJECT_TOL, 0)` are clipped to zero; anything lower is rejected.
pub const PSD_REJECT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: max |M - M^T| = {asymmetry:e}")]
    Asymmetric { asymmetry: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eig:e}")]
    NotPsd { min_eig: f64 },
    #[error("matrix is not Schur stable: spectral radius {spectral_radius}")]
    Unstable { spectral_radius: f64 },
    #[error("symmetric eigensolver did not converge for a {dim}x{dim} matrix")]
    EigenNoConvergence { dim: usize },
    #[error("linear system is singular")]
    Singular,
}

/// A real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Checks symmetry and stores the averaged matrix `(M + M^T) / 2`.
    pub fn new(m: Matrix) -> Result<Self, MatError> {
        if !m.is_square() {
            return Err(MatError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let asymmetry = max_abs(&(&m - m.transpose()));
        let scale = max_abs(&m).max(1.0);
        if asymmetry > SYMMETRY_TOL * scale {
            return Err(MatError::Asymmetric { asymmetry });
        }
        Ok(Self::symmetrize(m))
    }

    /// Averages with the transpose without checking how far off `m` was.
    pub fn symmetrize(m: Matrix) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self, MatError> {
        if data.len() != dim * dim {
            return Err(MatError::DimensionMismatch(format!(
                "{} entries for a {dim}x{dim} matrix",
                data.len()
            )));
        }
        Self::new(Matrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(Matrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(Matrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Congruence `L S L^T`, symmetric by construction.
    pub fn congruence(&self, l: &Matrix) -> SymMatrix {
        SymMatrix::symmetrize(l * &self.0 * l.transpose())
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(&self.0 * s)
    }

    pub fn add_identity(&self, s: f64) -> SymMatrix {
        let n = self.dim();
        SymMatrix(&self.0 + Matrix::identity(n, n) * s)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        extreme_eigenvalues(&self.0).0
    }

    pub fn max_eigenvalue(&self) -> f64 {
        extreme_eigenvalues(&self.0).1
    }

    /// Row-major nested representation, used by the JSON formats.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.0)
    }
}

impl Deref for SymMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Eigendecomposition `S = U diag(values) U^T` with values sorted descending.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: Vector,
    pub vectors: Matrix,
}

impl EigenPair {
    pub fn reconstruct(&self) -> Matrix {
        &self.vectors * Matrix::from_diagonal(&self.values) * self.vectors.transpose()
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Builds a matrix from row-major nested vectors. Rows must be non-empty and of equal length.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix, MatError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(MatError::DimensionMismatch("empty matrix".into()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(MatError::DimensionMismatch(format!(
            "row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn extreme_eigenvalues(m: &Matrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Symmetric eigendecomposition, values descending.
///
/// Each eigenvector is flipped so that its largest-magnitude entry is positive
/// (first such entry on ties), which makes downstream factors reproducible.
pub fn sym_eig(s: &SymMatrix) -> Result<EigenPair, MatError> {
    let n = s.dim();
    let eig = SymmetricEigen::try_new(s.as_matrix().clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or(MatError::EigenNoConvergence { dim: n })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() + 1e-14 {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenPair { values, vectors })
}

/// Principal square root of a PSD matrix; eigenvalues in `[-1e-6, 0)` are clipped to zero.
pub fn sqrtm_psd(s: &SymMatrix) -> Result<SymMatrix, MatError> {
    let eig = sym_eig(s)?;
    let min_eig = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -PSD_REJECT_TOL {
        return Err(MatError::NotPsd { min_eig });
    }
    let roots = eig.values.map(|v| v.max(0.0).sqrt());
    let r = &eig.vectors * Matrix::from_diagonal(&roots) * eig.vectors.transpose();
    Ok(SymMatrix::symmetrize(r))
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Solves the discrete Lyapunov equation `A P A^T - P + W = 0`.
///
/// Uses the Kronecker form `(I - A (x) A) vec(P) = vec(W)` followed by one step
/// of iterative refinement. Intended for state dimensions up to about 100.
pub fn dlyap(a: &Matrix, w: &SymMatrix) -> Result<SymMatrix, MatError> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(MatError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if w.dim() != n {
        return Err(MatError::DimensionMismatch(format!(
            "A is {n}x{n} but W is {d}x{d}",
            d = w.dim()
        )));
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(MatError::Unstable {
            spectral_radius: rho,
        });
    }

    let lhs = Matrix::identity(n * n, n * n) - a.kronecker(a);
    let lu = lhs.lu();
    let solve = |rhs: &Matrix| -> Result<Matrix, MatError> {
        let v = DVector::from_column_slice(rhs.as_slice());
        let x = lu.solve(&v).ok_or(MatError::Singular)?;
        Ok(Matrix::from_column_slice(n, n, x.as_slice()))
    };

    let mut p = solve(w.as_matrix())?;
    p = (&p + p.transpose()) * 0.5;
    let residual = w.as_matrix() + a * &p * a.transpose() - &p;
    let correction = solve(&residual)?;
    p += correction;
    Ok(SymMatrix::symmetrize(p))
}

/// Residual `A P A^T - P + W` of a discrete Lyapunov solution.
pub fn dlyap_residual(a: &Matrix, p: &SymMatrix, w: &SymMatrix) -> Matrix {
    a * p.as_matrix() * a.transpose() - p.as_matrix() + w.as_matrix()
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Assembles a 2x2 block matrix `[[a, b], [c, d]]`.
pub fn block2(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Matrix {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    assert_eq!(b.shape(), (r1, c2), "upper-right block has the wrong shape");
    assert_eq!(c.shape(), (r2, c1), "lower-left block has the wrong shape");
    let mut out = Matrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn sym_eig_identity_and_diagonal() {
        let e = sym_eig(&SymMatrix::identity(2)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0]);
        assert_relative_eq!(e.vectors, Matrix::identity(2, 2), epsilon = 1e-12);

        let e = sym_eig(&SymMatrix::from_diagonal(&[1.0, 2.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[2.0, 1.0]);
        assert_relative_eq!(e.vectors, m(2, 2, &[0.0, 1.0, 1.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn sym_eig_two_by_two() {
        let s = SymMatrix::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = sym_eig(&s).unwrap();
        assert_relative_eq!(e.values[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e.values[1], 1.0, epsilon = 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // first column (1,1)/sqrt2; second is (1,-1)/sqrt2 up to the sign rule, which
        // picks the first entry on a magnitude tie
        assert_relative_eq!(e.vectors, m(2, 2, &[h, h, h, -h]), epsilon = 1e-12);
    }

    #[test]
    fn sqrtm_examples() {
        let r = sqrtm_psd(&SymMatrix::identity(3)).unwrap();
        assert_relative_eq!(*r, Matrix::identity(3, 3), epsilon = 1e-12);

        let r = sqrtm_psd(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert_relative_eq!(*r, m(2, 2, &[2.0, 0.0, 0.0, 3.0]), epsilon = 1e-12);

        let s = SymMatrix::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let r = sqrtm_psd(&s).unwrap();
        let a = (3f64.sqrt() + 1.0) / 2.0;
        let b = (3f64.sqrt() - 1.0) / 2.0;
        assert_relative_eq!(*r, m(2, 2, &[a, b, b, a]), epsilon = 1e-12);
        assert_relative_eq!(r[(0, 0)], 1.3660, epsilon = 1e-4);
        assert_relative_eq!(r[(0, 1)], 0.3660, epsilon = 1e-4);
    }

    #[test]
    fn sqrtm_rejects_indefinite_and_clips_noise() {
        let err = sqrtm_psd(&SymMatrix::from_diagonal(&[1.0, -1e-3])).unwrap_err();
        assert!(matches!(err, MatError::NotPsd { .. }));
        let r = sqrtm_psd(&SymMatrix::from_diagonal(&[1.0, -1e-9])).unwrap();
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn construction_rejects_asymmetry() {
        let err = SymMatrix::new(m(2, 2, &[1.0, 0.1, 0.0, 1.0])).unwrap_err();
        assert!(matches!(err, MatError::Asymmetric { .. }));
        assert!(SymMatrix::new(m(2, 2, &[1.0, 1e-13, 0.0, 1.0])).is_ok());
        assert!(matches!(
            SymMatrix::new(Matrix::zeros(2, 3)),
            Err(MatError::NotSquare { .. })
        ));
    }

    #[test]
    fn dlyap_examples() {
        let b = m(2, 1, &[1.0, 2.0]);
        let bqb = SymMatrix::symmetrize(&b * 3.0 * b.transpose());
        let p = dlyap(&Matrix::zeros(2, 2), &bqb).unwrap();
        assert_relative_eq!(*p, *bqb, epsilon = 1e-14);

        let p = dlyap(&m(1, 1, &[0.5]), &SymMatrix::identity(1)).unwrap();
        assert_relative_eq!(p[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);

        let a = m(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let p = dlyap(&a, &SymMatrix::zeros(2)).unwrap();
        assert_eq!(max_abs(&p), 0.0);
    }

    #[test]
    fn dlyap_rejects_unstable() {
        let err = dlyap(&m(1, 1, &[1.0]), &SymMatrix::identity(1)).unwrap_err();
        assert!(matches!(err, MatError::Unstable { .. }));
    }

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(spectral_radius(&Matrix::identity(3, 3)), 1.0, epsilon = 1e-12);
        assert_eq!(spectral_radius(&Matrix::zeros(3, 3)), 0.0);
        let a = m(2, 2, &[0.78, -0.03, -0.03, 0.83]);
        let expected = 0.805 + 0.001525f64.sqrt();
        assert_relative_eq!(spectral_radius(&a), expected, max_relative = 1e-10);
        assert_relative_eq!(spectral_radius(&a), 0.84405, epsilon = 1e-5);
        // complex pair
        let rot = m(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert_relative_eq!(spectral_radius(&rot), 0.9, epsilon = 1e-12);
    }

    #[test]
    fn block_helpers() {
        let a = m(1, 1, &[1.0]);
        let b = m(2, 2, &[2.0, 3.0, 4.0, 5.0]);
        let d = block_diag(&[&a, &b]);
        assert_eq!(d, m(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 3.0, 0.0, 4.0, 5.0]));
        let full = block2(&a, &m(1, 2, &[6.0, 7.0]), &m(2, 1, &[8.0, 9.0]), &b);
        assert_eq!(full, m(3, 3, &[1.0, 6.0, 7.0, 8.0, 2.0, 3.0, 9.0, 4.0, 5.0]));
    }

    #[test]
    fn rows_round_trip() {
        let x = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(matrix_from_rows(&matrix_to_rows(&x)).unwrap(), x);
        assert!(matrix_from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(matrix_from_rows(&[]).is_err());
    }
}
