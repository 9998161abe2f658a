//! Zero-mean Gaussian inputs, Gelbrich balls of covariances, and the
//! worst-case covariance program.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matops::{sqrtm_psd, MatError, Matrix, SymMatrix, Vector};
use crate::sdp::{
    self, ConicProgram, Constraint, MatExpr, ScalarExpr, SdpError, SolveReport, SolveStatus,
};

/// Tolerance on negative eigenvalues accepted for covariance inputs, relative to their scale.
pub const COVARIANCE_PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmbiguityError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{what} is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { what: String, min_eig: f64 },
    #[error("mean must be exactly zero")]
    NonZeroMean,
    #[error("squared radius must be finite and nonnegative, got {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error("worst-case solve failed: {0}")]
    Solver(#[from] SdpError),
}

fn check_psd(what: &str, q: &SymMatrix) -> Result<(), AmbiguityError> {
    let min_eig = q.min_eigenvalue();
    let scale = crate::matops::max_abs(q.as_matrix()).max(1.0);
    if min_eig < -COVARIANCE_PSD_TOL * scale {
        return Err(AmbiguityError::NotPsd {
            what: what.into(),
            min_eig,
        });
    }
    Ok(())
}

fn check_dims(a: &SymMatrix, b: &SymMatrix) -> Result<(), AmbiguityError> {
    if a.dim() != b.dim() {
        return Err(AmbiguityError::DimensionMismatch(format!(
            "{0}x{0} vs {1}x{1}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// A zero-mean Gaussian `N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    mean: Vector,
    covariance: SymMatrix,
}

impl GaussianSpec {
    pub fn new(covariance: SymMatrix) -> Result<Self, AmbiguityError> {
        check_psd("covariance", &covariance)?;
        Ok(Self {
            mean: Vector::zeros(covariance.dim()),
            covariance,
        })
    }

    /// Accepts an explicit mean, which must be all zeros.
    pub fn with_mean(mean: Vector, covariance: SymMatrix) -> Result<Self, AmbiguityError> {
        if mean.len() != covariance.dim() {
            return Err(AmbiguityError::DimensionMismatch(format!(
                "mean has length {} but covariance is {1}x{1}",
                mean.len(),
                covariance.dim()
            )));
        }
        if mean.iter().any(|v| *v != 0.0) {
            return Err(AmbiguityError::NonZeroMean);
        }
        Self::new(covariance)
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn covariance(&self) -> &SymMatrix {
        &self.covariance
    }
}

/// Covariances within Gelbrich distance `ρ` of a center `Q̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BallRepr", into = "BallRepr")]
pub struct GelbrichBall {
    center: SymMatrix,
    rho2: f64,
}

#[derive(Serialize, Deserialize)]
struct BallRepr {
    center: Vec<Vec<f64>>,
    rho2: f64,
}

impl TryFrom<BallRepr> for GelbrichBall {
    type Error = AmbiguityError;
    fn try_from(r: BallRepr) -> Result<Self, Self::Error> {
        let m = crate::matops::matrix_from_rows(&r.center)?;
        GelbrichBall::new(SymMatrix::new(m)?, r.rho2)
    }
}

impl From<GelbrichBall> for BallRepr {
    fn from(b: GelbrichBall) -> Self {
        BallRepr {
            center: b.center.to_rows(),
            rho2: b.rho2,
        }
    }
}

impl GelbrichBall {
    pub fn new(center: SymMatrix, rho2: f64) -> Result<Self, AmbiguityError> {
        if !rho2.is_finite() || rho2 < 0.0 {
            return Err(AmbiguityError::InvalidRadius(rho2));
        }
        check_psd("ball center", &center)?;
        Ok(Self { center, rho2 })
    }

    pub fn center(&self) -> &SymMatrix {
        &self.center
    }

    pub fn rho2(&self) -> f64 {
        self.rho2
    }

    pub fn rho(&self) -> f64 {
        self.rho2.sqrt()
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// `ρ² + 2ρ·sqrt(tr Q̄)`, the optimal value of [`worst_case_trace`].
    pub fn worst_case_trace_closed_form(&self) -> f64 {
        self.rho2 + 2.0 * self.rho() * self.center.trace().max(0.0).sqrt()
    }
}

/// Squared Gelbrich distance `tr(Q1 + Q2 - 2 (Q2^{1/2} Q1 Q2^{1/2})^{1/2})`, clipped at zero.
pub fn gelbrich_distance_squared(q1: &SymMatrix, q2: &SymMatrix) -> Result<f64, AmbiguityError> {
    check_dims(q1, q2)?;
    check_psd("first covariance", q1)?;
    check_psd("second covariance", q2)?;
    let r2 = sqrtm_psd(q2)?;
    let cross = sqrtm_psd(&q1.congruence(r2.as_matrix()))?;
    Ok((q1.trace() + q2.trace() - 2.0 * cross.trace()).max(0.0))
}

pub fn gelbrich_distance(q1: &SymMatrix, q2: &SymMatrix) -> Result<f64, AmbiguityError> {
    gelbrich_distance_squared(q1, q2).map(f64::sqrt)
}

/// 2-Wasserstein distance between two Gaussians.
pub fn wasserstein2_gaussian(g1: &GaussianSpec, g2: &GaussianSpec) -> Result<f64, AmbiguityError> {
    if g1.dim() != g2.dim() {
        return Err(AmbiguityError::DimensionMismatch(format!(
            "dimension {} vs {}",
            g1.dim(),
            g2.dim()
        )));
    }
    let mean_gap = (g1.mean() - g2.mean()).norm_squared();
    let s1 = sqrtm_psd(g1.covariance())?;
    let cross = sqrtm_psd(&g2.covariance().congruence(s1.as_matrix()))?;
    let bures = g1.covariance().trace() + g2.covariance().trace() - 2.0 * cross.trace();
    Ok((mean_gap + bures).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MembershipMode {
    #[default]
    Direct,
    Sdp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub inside: bool,
    /// `ρ² - G(Q, Q̄)²`; nonnegative exactly when inside.
    pub margin: f64,
}

pub fn membership(
    ball: &GelbrichBall,
    q: &SymMatrix,
    mode: MembershipMode,
) -> Result<Membership, AmbiguityError> {
    check_dims(ball.center(), q)?;
    check_psd("covariance", q)?;
    let margin = match mode {
        MembershipMode::Direct => ball.rho2 - gelbrich_distance_squared(q, ball.center())?,
        MembershipMode::Sdp => {
            let q_delta = q.sub(ball.center());
            let (prog, e) = membership_program(ball, &q_delta)?;
            let sol = sdp::solve(&prog, sdp::DEFAULT_TOL)?;
            let e_val = sol.values.matrix(e);
            ball.rho2 - (q_delta.trace() + 2.0 * ball.center().trace() - 2.0 * e_val.trace())
        }
    };
    Ok(Membership {
        inside: margin >= 0.0,
        margin,
    })
}

/// The `2m x 2m` block `[[Q̄², E], [E, I]]` with `E` a variable; callers add the `Q_Δ` term.
fn coupling_block(center: &SymMatrix, e: sdp::Var) -> MatExpr {
    let m = center.dim();
    let mut top = Matrix::zeros(2 * m, m);
    top.view_mut((0, 0), (m, m)).fill_with_identity();
    let mut bottom = Matrix::zeros(2 * m, m);
    bottom.view_mut((m, 0), (m, m)).fill_with_identity();

    let mut block = MatExpr::zeros(2 * m);
    let mut fixed = Matrix::zeros(2 * m, 2 * m);
    fixed
        .view_mut((0, 0), (m, m))
        .copy_from(&(center.as_matrix() * center.as_matrix()));
    fixed
        .view_mut((m, m), (m, m))
        .fill_with_identity();
    block.add_constant(&SymMatrix::symmetrize(fixed));
    block.add_lxr(e, &top, &bottom.transpose(), 2.0);
    block
}

fn membership_program(
    ball: &GelbrichBall,
    q_delta: &SymMatrix,
) -> Result<(ConicProgram, sdp::Var), AmbiguityError> {
    let m = ball.dim();
    let root = sqrtm_psd(ball.center())?;
    let mut p = ConicProgram::new();
    let e = p.sym_var("E_Q", m);
    let mut obj = ScalarExpr::zero();
    obj.add_trace(e, &Matrix::identity(m, m), 1.0);
    p.maximize(obj);
    let mut block = coupling_block(ball.center(), e);
    block.add_constant(&SymMatrix::symmetrize(embed_top_left(
        &q_delta.congruence(root.as_matrix()),
        2 * m,
    )));
    p.add(Constraint::psd("coupling", block));
    p.add(Constraint::psd("E_Q >= 0", MatExpr::var(e)));
    Ok((p, e))
}

fn embed_top_left(s: &SymMatrix, dim: usize) -> Matrix {
    let mut out = Matrix::zeros(dim, dim);
    out.view_mut((0, 0), (s.dim(), s.dim())).copy_from(s.as_matrix());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseResult {
    pub beta_star: f64,
    pub q_delta: SymMatrix,
    pub e_q: SymMatrix,
    pub solver_report: SolveReport,
}

impl WorstCaseResult {
    /// Effective covariance `Q̄ + β* I`.
    pub fn q_eff(&self, ball: &GelbrichBall) -> SymMatrix {
        ball.center().add_identity(self.beta_star)
    }
}

/// Builds the worst-case trace program: maximize `tr Q_Δ` over `(Q_Δ, E_Q)` subject to
/// `tr(Q_Δ + 2Q̄ - 2E_Q) ≤ ρ²`, the coupling block, `E_Q ⪰ 0` and `Q̄ + Q_Δ ⪰ 0`.
pub fn worst_case_program(
    ball: &GelbrichBall,
) -> Result<(ConicProgram, sdp::Var, sdp::Var), AmbiguityError> {
    let m = ball.dim();
    let root = sqrtm_psd(ball.center())?;
    let id = Matrix::identity(m, m);
    let mut p = ConicProgram::new();
    let qd = p.sym_var("Q_delta", m);
    let e = p.sym_var("E_Q", m);

    let mut obj = ScalarExpr::zero();
    obj.add_trace(qd, &id, 1.0);
    p.maximize(obj);

    let mut budget = ScalarExpr::constant(ball.rho2 - 2.0 * ball.center().trace());
    budget.add_trace(qd, &id, -1.0).add_trace(e, &id, 2.0);
    p.add(Constraint::geq("radius budget", budget));

    let mut block = coupling_block(ball.center(), e);
    let mut top = Matrix::zeros(2 * m, m);
    top.view_mut((0, 0), (m, m)).copy_from(root.as_matrix());
    block.add_lxr(qd, &top, &top.transpose(), 1.0);
    p.add(Constraint::psd("coupling", block));

    p.add(Constraint::psd("E_Q >= 0", MatExpr::var(e)));
    let mut cov = MatExpr::var(qd);
    cov.add_constant(ball.center());
    p.add(Constraint::psd("Q_bar + Q_delta >= 0", cov));
    Ok((p, qd, e))
}

/// Largest trace increment `β* = max tr Q_Δ` over the ball.
///
/// A zero radius has no strictly feasible point, so it returns `Q_Δ = 0`,
/// `E_Q = Q̄` directly.
pub fn worst_case_trace(ball: &GelbrichBall, tol: f64) -> Result<WorstCaseResult, AmbiguityError> {
    let m = ball.dim();
    if ball.rho2 == 0.0 {
        return Ok(WorstCaseResult {
            beta_star: 0.0,
            q_delta: SymMatrix::zeros(m),
            e_q: ball.center().clone(),
            solver_report: SolveReport {
                status: SolveStatus::Optimal,
                objective_value: Some(0.0),
                primal_residual: 0.0,
                gap: 0.0,
                solve_time: 0.0,
                iterations: 0,
            },
        });
    }
    let (p, qd, e) = worst_case_program(ball)?;
    let sol = sdp::solve(&p, tol)?;
    let beta = sol.objective().max(0.0);
    log::debug!(
        "worst-case trace {beta} (closed form {})",
        ball.worst_case_trace_closed_form()
    );
    Ok(WorstCaseResult {
        beta_star: beta,
        q_delta: sol.values.matrix(qd),
        e_q: sol.values.matrix(e),
        solver_report: sol.report,
    })
}
