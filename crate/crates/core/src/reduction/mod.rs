//! Reduction pipeline: worst-case covariance, the reduction LMI, and recovery of
//! `(Â, B̂, Ĉ)` from the LMI solution.

mod canonical;
mod lmi;
mod recover;

use std::fmt;

use thiserror::Error;

use crate::ambiguity::{self, AmbiguityError, GelbrichBall};
use crate::matops::{spectral_radius, MatError, Matrix, SymMatrix};
use crate::sdp::{SdpError, SolveReport, DEFAULT_EPSILON, DEFAULT_TOL};

pub use canonical::{observability_rank, reduction_basis, to_observable_canonical, RANK_TOL};
pub use lmi::{
    build_psi, build_sufficient_lmi, dromor_program, solve_dromor_sdp, DromorProgram,
    DromorSolution, LambdaChoice, LmiForm,
};
pub use recover::{recover_reduced, reduced_matrices, Z1_FLOOR};
pub(crate) use lmi::embed_z;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validation,
    WorstCase,
    Canonical,
    Sdp,
    Recovery,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Validation => "validation",
            Stage::WorstCase => "worst-case covariance",
            Stage::Canonical => "observable canonical form",
            Stage::Sdp => "reduction LMI",
            Stage::Recovery => "recovery",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("A is not asymptotically stable (spectral radius {spectral_radius})")]
    Unstable { spectral_radius: f64 },
    #[error("reduced order {r} must satisfy 1 <= r < {n}")]
    InvalidOrder { r: usize, n: usize },
    #[error("(A, C) is not observable (observability rank {rank} < {n}); truncate the unobservable subspace first")]
    Unobservable { rank: usize, n: usize },
    #[error("Z1 is rank deficient (smallest eigenvalue {min_eig:e})")]
    RankDeficient { min_eig: f64 },
    #[error("reduction LMI is infeasible")]
    Infeasible(SolveReport),
    #[error("reduced model violates an invariant: {0}")]
    Invariant(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error(transparent)]
    Ambiguity(#[from] AmbiguityError),
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<ReductionError>,
    },
}

impl ReductionError {
    fn at(self, stage: Stage) -> Self {
        match self {
            e @ ReductionError::Stage { .. } => e,
            e => ReductionError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, with stage tags removed.
    pub fn root(&self) -> &ReductionError {
        match self {
            ReductionError::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            ReductionError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(
            self.root(),
            ReductionError::Infeasible(_)
                | ReductionError::Solver(SdpError::Infeasible(_))
                | ReductionError::Ambiguity(AmbiguityError::Solver(SdpError::Infeasible(_)))
        )
    }

    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.root(),
            ReductionError::Solver(_)
                | ReductionError::Ambiguity(AmbiguityError::Solver(_))
                | ReductionError::RankDeficient { .. }
                | ReductionError::Invariant(_)
        ) && !self.is_infeasible()
    }
}

/// `x_{k+1} = A x_k + B u_k`, `y_k = C x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLtiSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
}

impl DiscreteLtiSystem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self, ReductionError> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(ReductionError::DimensionMismatch(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(ReductionError::DimensionMismatch(format!(
                "B must have {n} rows and at least one column, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(ReductionError::DimensionMismatch(format!(
                "C must have {n} columns and at least one row, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(ReductionError::InvalidInput("system matrices must be finite".into()));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    pub fn require_stable(&self) -> Result<(), ReductionError> {
        let rho = self.spectral_radius();
        if rho >= 1.0 {
            return Err(ReductionError::Unstable {
                spectral_radius: rho,
            });
        }
        Ok(())
    }

    /// Markov parameters `C A^k B` for `k = 0..count`.
    pub fn markov_parameters(&self, count: usize) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(count);
        let mut x = self.b.clone();
        for _ in 0..count {
            out.push(&self.c * &x);
            x = &self.a * x;
        }
        out
    }

    /// `(T A T⁻¹, T B, C T⁻¹)`.
    pub fn transformed(&self, t: &Matrix, t_inv: &Matrix) -> DiscreteLtiSystem {
        DiscreteLtiSystem {
            a: t * &self.a * t_inv,
            b: t * &self.b,
            c: &self.c * t_inv,
        }
    }
}

/// How a [`ReducedModel`] was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelOrigin {
    /// Recovered from the reduction LMI; `factors` is populated.
    Dromor,
    /// Balanced truncation: `Â = W A V`, `B̂ = W B`, `Ĉ = C V`.
    BalancedTruncation {
        hankel_values: Vec<f64>,
        left: Matrix,
        right: Matrix,
    },
}

/// Recovery factors `P₁`, `P₂ = [U; 0]`, `P₃ = T⁻¹`, `Z₁ = U T Uᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryFactors {
    pub p1: SymMatrix,
    pub p2: Matrix,
    pub p3: SymMatrix,
    pub z1: SymMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub a_hat: Matrix,
    pub b_hat: Matrix,
    pub c_hat: Matrix,
    pub factors: Option<RecoveryFactors>,
    /// State transform `T` applied before reduction (identity when none was used).
    pub transform: Matrix,
    pub origin: ModelOrigin,
}

impl ReducedModel {
    pub fn order(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a_hat)
    }

    pub fn as_system(&self) -> Result<DiscreteLtiSystem, ReductionError> {
        DiscreteLtiSystem::new(self.a_hat.clone(), self.b_hat.clone(), self.c_hat.clone())
    }

    pub fn markov_parameters(&self, count: usize) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(count);
        let mut x = self.b_hat.clone();
        for _ in 0..count {
            out.push(&self.c_hat * &x);
            x = &self.a_hat * x;
        }
        out
    }

    /// The system in the coordinates the LMI was solved in.
    pub fn working_system(&self, sys: &DiscreteLtiSystem) -> Result<DiscreteLtiSystem, ReductionError> {
        let t_inv = self
            .transform
            .clone()
            .try_inverse()
            .ok_or(ReductionError::Matrix(MatError::Singular))?;
        Ok(sys.transformed(&self.transform, &t_inv))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub beta_star: f64,
    pub gamma_tilde_star: f64,
    pub q_eff: SymMatrix,
    pub p1: SymMatrix,
    pub z1: SymMatrix,
    /// Largest eigenvalue of `Ψ(P₁, diag(Z₁, 0), Q_eff)`.
    pub psi_max_eig: f64,
    /// `γ̃* - tr(C (P₁ - Z) Cᵀ)` in working coordinates.
    pub trace_slack: f64,
    /// Smallest eigenvalue of the sufficient LMI `L(λ)` when that form was solved.
    pub lmi_min_eig: Option<f64>,
    pub lambda: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionOptions {
    pub epsilon: f64,
    pub tol: f64,
    pub canonical: bool,
    pub form: LmiForm,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            tol: DEFAULT_TOL,
            canonical: true,
            form: LmiForm::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguousReductionProblem {
    pub system: DiscreteLtiSystem,
    pub ball: GelbrichBall,
    pub r: usize,
}

impl AmbiguousReductionProblem {
    pub fn new(
        system: DiscreteLtiSystem,
        ball: GelbrichBall,
        r: usize,
    ) -> Result<Self, ReductionError> {
        if ball.dim() != system.m() {
            return Err(ReductionError::DimensionMismatch(format!(
                "ball has dimension {} but B has {} columns",
                ball.dim(),
                system.m()
            )));
        }
        check_order(r, system.n())?;
        Ok(Self { system, ball, r })
    }
}

fn check_order(r: usize, n: usize) -> Result<(), ReductionError> {
    if r == 0 || r >= n {
        return Err(ReductionError::InvalidOrder { r, n });
    }
    Ok(())
}

fn check_covariance(sys: &DiscreteLtiSystem, q: &SymMatrix) -> Result<(), ReductionError> {
    if q.dim() != sys.m() {
        return Err(ReductionError::DimensionMismatch(format!(
            "covariance is {0}x{0} but B has {1} columns",
            q.dim(),
            sys.m()
        )));
    }
    let min_eig = q.min_eigenvalue();
    if min_eig < -ambiguity::COVARIANCE_PSD_TOL * crate::matops::max_abs(q).max(1.0) {
        return Err(ReductionError::Ambiguity(AmbiguityError::NotPsd {
            what: "covariance".into(),
            min_eig,
        }));
    }
    Ok(())
}

/// Reduction for a known input covariance `Q` (`β* = 0`).
pub fn reduce_certain(
    sys: &DiscreteLtiSystem,
    q: &SymMatrix,
    r: usize,
    opts: &ReductionOptions,
) -> Result<(ReducedModel, Certificate), ReductionError> {
    check_order(r, sys.n()).map_err(|e| e.at(Stage::Validation))?;
    check_covariance(sys, q).map_err(|e| e.at(Stage::Validation))?;
    sys.require_stable().map_err(|e| e.at(Stage::Validation))?;
    reduce_with(sys, q.clone(), 0.0, r, opts)
}

/// Distributionally robust reduction over the problem's Gelbrich ball.
pub fn reduce_robust(
    prob: &AmbiguousReductionProblem,
    opts: &ReductionOptions,
) -> Result<(ReducedModel, Certificate), ReductionError> {
    prob.system
        .require_stable()
        .map_err(|e| e.at(Stage::Validation))?;
    let worst = ambiguity::worst_case_trace(&prob.ball, opts.tol)
        .map_err(|e| ReductionError::from(e).at(Stage::WorstCase))?;
    let q_eff = worst.q_eff(&prob.ball);
    log::info!("worst-case trace increment {:.6}", worst.beta_star);
    reduce_with(&prob.system, q_eff, worst.beta_star, prob.r, opts)
}

fn reduce_with(
    sys: &DiscreteLtiSystem,
    q_eff: SymMatrix,
    beta_star: f64,
    r: usize,
    opts: &ReductionOptions,
) -> Result<(ReducedModel, Certificate), ReductionError> {
    let (work, transform) = if opts.canonical {
        let t = reduction_basis(sys, r).map_err(|e| e.at(Stage::Canonical))?;
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or(ReductionError::Matrix(MatError::Singular))
            .map_err(|e| e.at(Stage::Canonical))?;
        (sys.transformed(&t, &t_inv), t)
    } else {
        (sys.clone(), Matrix::identity(sys.n(), sys.n()))
    };
    let sol = solve_dromor_sdp(&work, &q_eff, r, opts).map_err(|e| e.at(Stage::Sdp))?;
    let mut model =
        recover_reduced(&sol.p1, &sol.z1, &work, r).map_err(|e| e.at(Stage::Recovery))?;
    model.transform = transform;

    let z = lmi::embed_z(&sol.z1, sys.n());
    let psi = build_psi(&sol.p1, &z, &q_eff, &work)?;
    let lmi_min_eig = match sol.lambda {
        Some(lambda) => Some(
            build_sufficient_lmi(&sol.p1, &z, &q_eff, &work, lambda)?.min_eigenvalue(),
        ),
        None => None,
    };
    let bound = (work.c() * sol.p1.sub(&z).as_matrix() * work.c().transpose()).trace();
    let cert = Certificate {
        beta_star,
        gamma_tilde_star: sol.gamma,
        q_eff,
        p1: sol.p1,
        z1: sol.z1,
        psi_max_eig: psi.max_eigenvalue(),
        trace_slack: sol.gamma - bound,
        lmi_min_eig,
        lambda: sol.lambda,
        epsilon: opts.epsilon,
    };
    Ok((model, cert))
}

#[cfg(test)]
mod tests;
