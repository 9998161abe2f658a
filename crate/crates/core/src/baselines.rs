//! Balanced truncation with an input-covariance-weighted controllability gramian.

use crate::matops::{dlyap, sym_eig, Matrix, SymMatrix, Vector};
use crate::reduction::{DiscreteLtiSystem, ModelOrigin, ReducedModel, ReductionError};

/// Hankel values below this trigger a warning when retained.
pub const HANKEL_WARN: f64 = 1e-10;

const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

/// `Wc` solves `A Wc Aᵀ - Wc + B Q Bᵀ = 0`, `Wo` solves `Aᵀ Wo A - Wo + Cᵀ C = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianPair {
    pub wc: SymMatrix,
    pub wo: SymMatrix,
}

pub fn gramians(sys: &DiscreteLtiSystem, q: &SymMatrix) -> Result<GramianPair, ReductionError> {
    if q.dim() != sys.m() {
        return Err(ReductionError::DimensionMismatch(format!(
            "Q is {0}x{0} but the system has {1} inputs",
            q.dim(),
            sys.m()
        )));
    }
    sys.require_stable()?;
    let wc = dlyap(sys.a(), &q.congruence(sys.b()))?;
    let ct = sys.c().transpose();
    let wo = dlyap(&sys.a().transpose(), &SymMatrix::symmetrize(&ct * sys.c()))?;
    Ok(GramianPair { wc, wo })
}

/// A square factor `L` with `L Lᵀ = W`: Cholesky when every pivot clears
/// the tolerance, otherwise `V diag(√λ⁺)` from the eigendecomposition.
fn factor(w: &SymMatrix) -> Result<Matrix, ReductionError> {
    if let Some(ch) = w.as_matrix().clone().cholesky() {
        let l = ch.unpack();
        let scale = crate::matops::max_abs(w.as_matrix()).max(f64::MIN_POSITIVE).sqrt();
        if l.diagonal().iter().all(|d| *d > CHOLESKY_PIVOT_TOL * scale) {
            return Ok(l);
        }
    }
    let eig = sym_eig(w)?;
    let roots: Vector = eig.values.map(|v| v.max(0.0).sqrt());
    Ok(&eig.vectors * Matrix::from_diagonal(&roots))
}

/// Square-root balanced truncation keeping the `r` largest Hankel values.
pub fn balanced_truncation(
    sys: &DiscreteLtiSystem,
    q: &SymMatrix,
    r: usize,
) -> Result<ReducedModel, ReductionError> {
    let n = sys.n();
    if r == 0 || r > n {
        return Err(ReductionError::InvalidOrder { r, n });
    }
    let g = gramians(sys, q)?;
    let lc = factor(&g.wc)?;
    let lo = factor(&g.wo)?;
    let svd = (lo.transpose() * &lc).svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");

    // nalgebra does not guarantee ordering
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let hankel: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let sigma_r = hankel[r - 1];
    if sigma_r <= 0.0 {
        return Err(ReductionError::RankDeficient { min_eig: sigma_r });
    }
    if sigma_r < HANKEL_WARN {
        log::warn!("truncating at Hankel value {sigma_r:e}; the retained part is nearly unobservable or uncontrollable");
    }

    let mut left = Matrix::zeros(r, n);
    let mut right = Matrix::zeros(n, r);
    for (k, &i) in order.iter().take(r).enumerate() {
        let s = hankel[k].sqrt();
        left.set_row(k, &((lo.clone() * u.column(i)).transpose() / s));
        right.set_column(k, &(&lc * v_t.row(i).transpose() / s));
    }

    Ok(ReducedModel {
        a_hat: &left * sys.a() * &right,
        b_hat: &left * sys.b(),
        c_hat: sys.c() * &right,
        factors: None,
        transform: Matrix::identity(n, n),
        origin: ModelOrigin::BalancedTruncation {
            hankel_values: hankel,
            left,
            right,
        },
    })
}
