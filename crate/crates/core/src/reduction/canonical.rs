//! Observable canonical forms.
//!
//! Single-output systems use the classical observable canonical form
//!
//! ```text
//!      [ -a₁ 1 0 … 0 ]
//!      [ -a₂ 0 1 … 0 ]
//! A' = [  ⋮        ⋱ ]     C' = [1 0 … 0]
//!      [ -aₙ 0 0 … 0 ]
//! ```
//!
//! with `T = M O`, where `O` is the observability matrix and `M` the unit lower
//! triangular Toeplitz matrix of the characteristic polynomial coefficients.
//!
//! Multi-output systems use the orthogonal observability staircase, computed as
//! the controllability staircase of `(Aᵀ, Cᵀ)`: an orthogonal `U` such that `Cᵀ`
//! is compressed into its leading rows and each subdiagonal block of `Uᵀ Aᵀ U`
//! is compressed in turn, with `T = Uᵀ`.

use super::{DiscreteLtiSystem, ReductionError};
use crate::matops::Matrix;

/// Relative rank tolerance for observability tests.
pub const RANK_TOL: f64 = 1e-8;

/// Numerical rank of `[C; CA; ...; CA^{n-1}]` at relative tolerance [`RANK_TOL`].
pub fn observability_rank(sys: &DiscreteLtiSystem) -> usize {
    let n = sys.n();
    let p = sys.p();
    let mut obs = Matrix::zeros(n * p, n);
    let mut row = sys.c().clone();
    for k in 0..n {
        obs.view_mut((k * p, 0), (p, n)).copy_from(&row);
        row = &row * sys.a();
    }
    let sv = obs.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * top).count()
}

/// Householder compression with column pivoting: returns an orthogonal `Q`
/// (`rows x rows`) with `Qᵀ M = [R; 0]`, and the numerical rank of `M`.
///
/// Reflections are skipped for columns that are already compressed, and the
/// columns of `Q` are signed so that the diagonal of `R` is positive. A matrix
/// whose leading block is already upper triangular with positive diagonal and
/// zeros below therefore yields `Q = I`.
fn compress(m: &Matrix, abs_tol: f64) -> (Matrix, usize) {
    let rows = m.nrows();
    let mut r = m.clone();
    let mut q = Matrix::identity(rows, rows);
    let mut rank = 0;
    for k in 0..rows.min(r.ncols()) {
        let (mut pivot, mut best) = (k, -1.0f64);
        for j in k..r.ncols() {
            let norm = r.view((k, j), (rows - k, 1)).norm();
            if norm > best + 1e-14 * best.abs() {
                pivot = j;
                best = norm;
            }
        }
        if best <= abs_tol {
            break;
        }
        r.swap_columns(k, pivot);
        let x = r.view((k, k), (rows - k, 1)).clone_owned();
        let tail = x.rows(1, rows - k - 1).norm();
        if tail > 0.0 {
            let alpha = -x[0].signum() * x.norm();
            let mut v = x.clone();
            v[0] -= alpha;
            let vnorm2 = v.norm_squared();
            // H = I - 2 v vᵀ / (vᵀ v) applied to rows k.. of R and columns k.. of Q
            let mut rk = r.rows_mut(k, rows - k);
            let w = (v.transpose() * &rk) * (2.0 / vnorm2);
            rk -= &v * w;
            let mut qk = q.columns_mut(k, rows - k);
            let w = (&qk * &v) * (2.0 / vnorm2);
            qk -= w * v.transpose();
        }
        if r[(k, k)] < 0.0 {
            r.row_mut(k).neg_mut();
            q.column_mut(k).neg_mut();
        }
        rank += 1;
    }
    (q, rank)
}

/// Transforms `sys` to observable canonical form (staircase form when `p > 1`).
///
/// Returns the transformed system and `T` with `A' = T A T⁻¹`, `B' = T B`, `C' = C T⁻¹`.
pub fn to_observable_canonical(
    sys: &DiscreteLtiSystem,
) -> Result<(DiscreteLtiSystem, Matrix), ReductionError> {
    let n = sys.n();
    let rank = observability_rank(sys);
    if rank < n {
        return Err(ReductionError::Unobservable { rank, n });
    }
    let t = if sys.p() == 1 {
        companion_transform(sys)
    } else {
        staircase_transform(sys)?
    };
    // same inverse as ReducedModel::working_system, so both see identical matrices
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or(ReductionError::Matrix(crate::matops::MatError::Singular))?;
    let transformed = sys.transformed(&t, &t_inv);
    Ok((transformed, t))
}

/// Orthogonal working transform for order `r`.
///
/// The reduction program only depends on the subspace spanned by the first
/// `r` canonical coordinates, `S = T⁻¹ span(e₁..e_r)`, since any change of
/// basis that maps `span(e₁..e_r)` onto itself preserves the `diag(Z₁, 0)`
/// structure. The returned `W = [Q₁ Q₂]ᵀ` has `Q₁` an orthonormal basis of `S`
/// and `Q₂` one of its complement, which keeps the working data as well
/// scaled as the original.
pub fn reduction_basis(sys: &DiscreteLtiSystem, r: usize) -> Result<Matrix, ReductionError> {
    let n = sys.n();
    super::check_order(r, n)?;
    let (_, t) = to_observable_canonical(sys)?;
    let mut lead = Matrix::zeros(n, r);
    lead.view_mut((0, 0), (r, r)).fill_with_identity();
    let span = t
        .lu()
        .solve(&lead)
        .ok_or(ReductionError::Matrix(crate::matops::MatError::Singular))?;
    let mut stacked = Matrix::zeros(n, r + n);
    stacked.columns_mut(0, r).copy_from(&span);
    stacked.columns_mut(r, n).fill_with_identity();
    // unpivoted, so the first r columns of Q span the first r columns of `stacked`
    Ok(stacked.qr().q().transpose())
}

/// Coefficients `a₁..aₙ` of `det(zI - A) = zⁿ + a₁ zⁿ⁻¹ + … + aₙ`.
pub(crate) fn char_poly(a: &Matrix) -> Vec<f64> {
    let mut coeffs = vec![nalgebra::Complex::new(1.0, 0.0)];
    for lambda in a.complex_eigenvalues().iter() {
        let mut next = coeffs.clone();
        next.push(nalgebra::Complex::new(0.0, 0.0));
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] -= c * lambda;
        }
        coeffs = next;
    }
    coeffs.iter().skip(1).map(|c| c.re).collect()
}

fn companion_transform(sys: &DiscreteLtiSystem) -> Matrix {
    let n = sys.n();
    let mut obs = Matrix::zeros(n, n);
    let mut row = sys.c().clone();
    for k in 0..n {
        obs.set_row(k, &row.row(0));
        row = &row * sys.a();
    }
    let a = char_poly(sys.a());
    let mut m = Matrix::identity(n, n);
    for i in 1..n {
        for j in 0..i {
            m[(i, j)] = a[i - j - 1];
        }
    }
    m * obs
}

fn staircase_transform(sys: &DiscreteLtiSystem) -> Result<Matrix, ReductionError> {
    let n = sys.n();
    let scale = crate::matops::max_abs(sys.a())
        .max(crate::matops::max_abs(sys.c()))
        .max(1.0);
    let abs_tol = RANK_TOL * scale;

    let mut at = sys.a().transpose();
    let mut u = Matrix::identity(n, n);
    let mut block = sys.c().transpose();
    let mut offset = 0;
    while offset < n {
        let (q, k) = compress(&block, abs_tol);
        if k == 0 {
            return Err(ReductionError::Unobservable { rank: offset, n });
        }
        let mut full = Matrix::identity(n, n);
        full.view_mut((offset, offset), (n - offset, n - offset))
            .copy_from(&q);
        at = full.transpose() * &at * &full;
        u = &u * &full;
        let prev = offset;
        offset += k;
        if offset < n {
            block = at.view((offset, prev), (n - offset, k)).clone_owned();
        }
    }
    Ok(u.transpose())
}
