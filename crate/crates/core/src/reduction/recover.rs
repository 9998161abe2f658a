use super::{DiscreteLtiSystem, ModelOrigin, RecoveryFactors, ReducedModel, ReductionError};
use crate::matops::{sym_eig, Matrix, SymMatrix};

/// Smallest eigenvalue of `Z₁` accepted at recovery.
pub const Z1_FLOOR: f64 = 1e-9;

/// `(Â, B̂, Ĉ) = (P₂ᵀ P₁⁻¹ A P₂ P₃⁻¹, P₂ᵀ P₁⁻¹ B, C P₂ P₃⁻¹)` for arbitrary factors.
pub fn reduced_matrices(
    p1: &SymMatrix,
    p2: &Matrix,
    p3: &SymMatrix,
    sys: &DiscreteLtiSystem,
) -> Result<(Matrix, Matrix, Matrix), ReductionError> {
    let n = sys.n();
    let r = p3.dim();
    if p1.dim() != n || p2.shape() != (n, r) {
        return Err(ReductionError::DimensionMismatch(format!(
            "P1 is {0}x{0}, P2 is {1}x{2}, P3 is {r}x{r} for n = {n}",
            p1.dim(),
            p2.nrows(),
            p2.ncols()
        )));
    }
    let p1_inv = p1
        .as_matrix()
        .clone()
        .try_inverse()
        .ok_or(ReductionError::Matrix(crate::matops::MatError::Singular))?;
    let p3_inv = p3
        .as_matrix()
        .clone()
        .try_inverse()
        .ok_or(ReductionError::Matrix(crate::matops::MatError::Singular))?;
    let left = p2.transpose() * p1_inv;
    Ok((
        &left * sys.a() * p2 * &p3_inv,
        &left * sys.b(),
        sys.c() * p2 * p3_inv,
    ))
}

/// Builds `(Â, B̂, Ĉ)` from an LMI solution via `Z₁ = U T Uᵀ`, `P₂ = [U; 0]`, `P₃ = T⁻¹`:
///
/// `Â = P₂ᵀ P₁⁻¹ A P₂ P₃⁻¹`, `B̂ = P₂ᵀ P₁⁻¹ B`, `Ĉ = C P₂ P₃⁻¹`.
pub fn recover_reduced(
    p1: &SymMatrix,
    z1: &SymMatrix,
    sys: &DiscreteLtiSystem,
    r: usize,
) -> Result<ReducedModel, ReductionError> {
    let n = sys.n();
    if p1.dim() != n || z1.dim() != r || r == 0 || r > n {
        return Err(ReductionError::DimensionMismatch(format!(
            "P1 is {0}x{0} and Z1 is {1}x{1} for n = {n}, r = {r}",
            p1.dim(),
            z1.dim()
        )));
    }
    let eig = sym_eig(z1)?;
    let min_eig = eig.values[r - 1];
    if min_eig < Z1_FLOOR {
        return Err(ReductionError::RankDeficient { min_eig });
    }
    let p1_inv = p1
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| ReductionError::Invariant("P1 is not positive definite".into()))?
        .inverse();

    let u = &eig.vectors;
    let t = Matrix::from_diagonal(&eig.values);
    let mut p2 = Matrix::zeros(n, r);
    p2.view_mut((0, 0), (r, r)).copy_from(u);
    let p3 = SymMatrix::symmetrize(Matrix::from_diagonal(&eig.values.map(|v| 1.0 / v)));

    let left = p2.transpose() * &p1_inv;
    let a_hat = &left * sys.a() * &p2 * &t;
    let b_hat = &left * sys.b();
    let c_hat = sys.c() * &p2 * &t;

    let model = ReducedModel {
        a_hat,
        b_hat,
        c_hat,
        factors: Some(RecoveryFactors {
            p1: p1.clone(),
            p2,
            p3,
            z1: z1.clone(),
        }),
        transform: Matrix::identity(n, n),
        origin: ModelOrigin::Dromor,
    };
    check_invariants(&model, n)?;
    Ok(model)
}

fn check_invariants(model: &ReducedModel, n: usize) -> Result<(), ReductionError> {
    let rho = model.spectral_radius();
    if rho >= 1.0 {
        return Err(ReductionError::Invariant(format!(
            "reduced model is unstable (spectral radius {rho})"
        )));
    }
    let f = model.factors.as_ref().expect("recovered models carry factors");
    let r = f.z1.dim();
    let orth = crate::matops::max_abs(&(f.p2.transpose() * &f.p2 - Matrix::identity(r, r)));
    if orth > 1e-10 {
        return Err(ReductionError::Invariant(format!(
            "P2 is not orthonormal (deviation {orth:e})"
        )));
    }
    let p3_inv = f
        .p3
        .as_matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| ReductionError::Invariant("P3 is singular".into()))?;
    let z = &f.p2 * p3_inv * f.p2.transpose();
    let target = super::lmi::embed_z(&f.z1, n);
    let dev = crate::matops::max_abs(&(z - target.as_matrix()));
    if dev > 1e-7 * crate::matops::max_abs(f.z1.as_matrix()).max(1.0) {
        return Err(ReductionError::Invariant(format!(
            "P2 P3⁻¹ P2ᵀ differs from diag(Z1, 0) by {dev:e}"
        )));
    }
    Ok(())
}
