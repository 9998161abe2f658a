//! The reduction LMI in `(P₁, Z₁, γ)` with `Z = diag(Z₁, 0)`.
//!
//! Two forms are available. [`LmiForm::Literal`] imposes `Ψ ⪯ -εI` on the
//! `2n x 2n` block matrix built by [`build_psi`]. Because the lower blocks of
//! `Ψ` coincide, `[x; -x]ᵀ Ψ [x; -x] = xᵀ A (P₁ - Z) Aᵀ x`, which is nonnegative
//! whenever `P₁ ⪰ Z`, so that form is always infeasible. [`LmiForm::Sufficient`]
//! instead imposes, for a fixed `λ > 0`,
//!
//! ```text
//! L(λ) = [[2λP₁ - Z - λ²(AZAᵀ + BQBᵀ),  λΨ₂],
//!         [λΨ₂,                       -Ψ₁]] ⪰ εI
//! ```
//!
//! which implies that the augmented error dynamics admit `P_D` as a Lyapunov
//! bound, so `tr(C (P₁ - Z) Cᵀ)` still bounds the asymptotic error.

use rayon::prelude::*;

use super::{check_covariance, check_order, DiscreteLtiSystem, ReductionError, ReductionOptions};
use crate::matops::{Matrix, SymMatrix};
use crate::sdp::{
    self, strictify, ConicProgram, Constraint, MatExpr, MatSense, ScalarExpr, SdpError,
    SolveReport, Var,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    /// Geometric grid followed by a golden-section refinement.
    Search,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LmiForm {
    Literal,
    Sufficient(LambdaChoice),
}

impl Default for LmiForm {
    fn default() -> Self {
        LmiForm::Sufficient(LambdaChoice::Search)
    }
}

const GRID_POINTS: usize = 8;
const GOLDEN_STEPS: usize = 14;
const LAMBDA_MAX: f64 = 2.0;

pub(crate) fn embed_z(z1: &SymMatrix, n: usize) -> SymMatrix {
    let mut z = Matrix::zeros(n, n);
    z.view_mut((0, 0), (z1.dim(), z1.dim())).copy_from(z1.as_matrix());
    SymMatrix::symmetrize(z)
}

fn check_blocks(
    p1: &SymMatrix,
    z: &SymMatrix,
    q: &SymMatrix,
    sys: &DiscreteLtiSystem,
) -> Result<(), ReductionError> {
    let n = sys.n();
    if p1.dim() != n || z.dim() != n || q.dim() != sys.m() {
        return Err(ReductionError::DimensionMismatch(format!(
            "P1 is {}x{}, Z is {}x{}, Q is {}x{} for n = {n}, m = {}",
            p1.dim(),
            p1.dim(),
            z.dim(),
            z.dim(),
            q.dim(),
            q.dim(),
            sys.m()
        )));
    }
    Ok(())
}

/// `Ψ = [[Ψ₁, Ψ₂], [Ψ₂, Ψ₂]]` with `Ψ₁ = AP₁Aᵀ - P₁ + BQBᵀ` and `Ψ₂ = AZAᵀ - P₁ + BQBᵀ`.
pub fn build_psi(
    p1: &SymMatrix,
    z: &SymMatrix,
    q: &SymMatrix,
    sys: &DiscreteLtiSystem,
) -> Result<SymMatrix, ReductionError> {
    check_blocks(p1, z, q, sys)?;
    let a = sys.a();
    let bqb = q.congruence(sys.b());
    let psi1 = a * p1.as_matrix() * a.transpose() - p1.as_matrix() + bqb.as_matrix();
    let psi2 = a * z.as_matrix() * a.transpose() - p1.as_matrix() + bqb.as_matrix();
    let m = crate::matops::block2(&psi1, &psi2, &psi2, &psi2);
    Ok(SymMatrix::symmetrize(m))
}

/// Evaluates `L(λ)` at fixed `(P₁, Z)`.
pub fn build_sufficient_lmi(
    p1: &SymMatrix,
    z: &SymMatrix,
    q: &SymMatrix,
    sys: &DiscreteLtiSystem,
    lambda: f64,
) -> Result<SymMatrix, ReductionError> {
    check_blocks(p1, z, q, sys)?;
    let a = sys.a();
    let bqb = q.congruence(sys.b());
    let azab = z.congruence(a);
    let psi1 = p1.congruence(a).sub(p1).add(&bqb);
    let psi2 = azab.sub(p1).add(&bqb);
    let top = p1.scale(2.0 * lambda).sub(z).sub(&azab.add(&bqb).scale(lambda * lambda));
    let m = crate::matops::block2(
        top.as_matrix(),
        &(psi2.as_matrix() * lambda),
        &(psi2.as_matrix() * lambda),
        &(-psi1.as_matrix()),
    );
    Ok(SymMatrix::symmetrize(m))
}

/// A built reduction program and handles to its variables.
#[derive(Debug, Clone)]
pub struct DromorProgram {
    pub program: ConicProgram,
    pub p1: Var,
    pub z1: Var,
    pub gamma: Var,
}

/// Builds the reduction program; `lambda = None` gives the literal `Ψ ⪯ -εI` form.
pub fn dromor_program(
    sys: &DiscreteLtiSystem,
    q_eff: &SymMatrix,
    r: usize,
    lambda: Option<f64>,
    epsilon: f64,
) -> Result<DromorProgram, ReductionError> {
    let n = sys.n();
    check_order(r, n)?;
    let a = sys.a();
    let c = sys.c();
    let bqb = q_eff.congruence(sys.b());

    // selectors: E = [I_r; 0] (n x r), J1 = [I; 0] and J2 = [0; I] (2n x n)
    let mut e = Matrix::zeros(n, r);
    e.view_mut((0, 0), (r, r)).fill_with_identity();
    let mut j1 = Matrix::zeros(2 * n, n);
    j1.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut j2 = Matrix::zeros(2 * n, n);
    j2.view_mut((n, 0), (n, n)).fill_with_identity();
    let ae = a * &e;

    let mut prog = ConicProgram::new();
    let p1 = prog.sym_var("P1", n);
    let z1 = prog.sym_var("Z1", r);
    let gamma = prog.scalar_var("gamma");

    let mut obj = ScalarExpr::zero();
    obj.add_scalar(gamma, 1.0);
    prog.minimize(obj);

    prog.add(strictify("P1 > 0", MatExpr::var(p1), MatSense::Psd, epsilon)?);
    prog.add(strictify("Z1 > 0", MatExpr::var(z1), MatSense::Psd, epsilon)?);

    let mut gap = MatExpr::var(p1);
    gap.add_lxr(z1, &e, &e.transpose(), -1.0);
    prog.add(strictify("P1 - Z > 0", gap, MatSense::Psd, epsilon)?);

    let mut bound = ScalarExpr::zero();
    bound.add_scalar(gamma, 1.0);
    let ctc = c.transpose() * c;
    bound.add_trace(p1, &ctc, -1.0);
    bound.add_trace(z1, &(e.transpose() * &ctc * &e), 1.0);
    prog.add(Constraint::geq("trace bound", bound));

    match lambda {
        None => {
            let k = &j1 + &j2;
            let mut psi = MatExpr::zeros(2 * n);
            psi.add_lxr(p1, &(&j1 * a), &(a.transpose() * j1.transpose()), 1.0)
                .add_lxr(p1, &k, &k.transpose(), -1.0)
                .add_lxr(z1, &(&k * &ae), &(ae.transpose() * k.transpose()), 1.0)
                .add_lxr(z1, &(&j1 * &ae), &(ae.transpose() * j1.transpose()), -1.0)
                .add_constant(&bqb.congruence(&k));
            prog.add(strictify("Psi < 0", psi, MatSense::Nsd, epsilon)?);
        }
        Some(lambda) => {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(ReductionError::InvalidInput(format!(
                    "lambda must be positive and finite, got {lambda}"
                )));
            }
            let l2 = lambda * lambda;
            let mut lmi = MatExpr::zeros(2 * n);
            // top-left: 2λP₁ - Z - λ²(AZAᵀ + BQBᵀ)
            lmi.add_lxr(p1, &j1, &j1.transpose(), 2.0 * lambda)
                .add_lxr(z1, &(&j1 * &e), &(e.transpose() * j1.transpose()), -1.0)
                .add_lxr(z1, &(&j1 * &ae), &(ae.transpose() * j1.transpose()), -l2)
                .add_constant(&bqb.congruence(&j1).scale(-l2));
            // off-diagonal: λΨ₂ = λ(AZAᵀ - P₁ + BQBᵀ)
            lmi.add_lxr(z1, &(&j1 * &ae), &(ae.transpose() * j2.transpose()), 2.0 * lambda)
                .add_lxr(p1, &j1, &j2.transpose(), -2.0 * lambda);
            let cross = &j1 * bqb.as_matrix() * j2.transpose() * lambda;
            lmi.add_constant(&SymMatrix::symmetrize(&cross + cross.transpose()));
            // bottom-right: -Ψ₁ = P₁ - AP₁Aᵀ - BQBᵀ
            lmi.add_lxr(p1, &j2, &j2.transpose(), 1.0)
                .add_lxr(p1, &(&j2 * a), &(a.transpose() * j2.transpose()), -1.0)
                .add_constant(&bqb.congruence(&j2).scale(-1.0));
            prog.add(strictify("L(lambda) > 0", lmi, MatSense::Psd, epsilon)?);
        }
    }
    Ok(DromorProgram {
        program: prog,
        p1,
        z1,
        gamma,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DromorSolution {
    pub p1: SymMatrix,
    pub z1: SymMatrix,
    pub gamma: f64,
    pub lambda: Option<f64>,
    pub report: SolveReport,
    /// Number of programs solved (more than one when `λ` is searched).
    pub solves: usize,
}

fn solve_once(
    sys: &DiscreteLtiSystem,
    q_eff: &SymMatrix,
    r: usize,
    lambda: Option<f64>,
    opts: &ReductionOptions,
) -> Result<DromorSolution, ReductionError> {
    let built = dromor_program(sys, q_eff, r, lambda, opts.epsilon)?;
    let sol = match sdp::solve(&built.program, opts.tol) {
        Ok(s) => s,
        Err(SdpError::Infeasible(report)) => return Err(ReductionError::Infeasible(report)),
        Err(e) => return Err(e.into()),
    };
    Ok(DromorSolution {
        p1: sol.values.matrix(built.p1),
        z1: sol.values.matrix(built.z1),
        gamma: sol.values.scalar(built.gamma),
        lambda,
        report: sol.report,
        solves: 1,
    })
}

/// Minimizes `γ` subject to the reduction LMI at covariance `q_eff`.
pub fn solve_dromor_sdp(
    sys: &DiscreteLtiSystem,
    q_eff: &SymMatrix,
    r: usize,
    opts: &ReductionOptions,
) -> Result<DromorSolution, ReductionError> {
    sys.require_stable()?;
    check_order(r, sys.n())?;
    check_covariance(sys, q_eff)?;
    match opts.form {
        LmiForm::Literal => solve_once(sys, q_eff, r, None, opts),
        LmiForm::Sufficient(LambdaChoice::Fixed(lambda)) => {
            solve_once(sys, q_eff, r, Some(lambda), opts)
        }
        LmiForm::Sufficient(LambdaChoice::Search) => search_lambda(sys, q_eff, r, opts),
    }
}

fn search_lambda(
    sys: &DiscreteLtiSystem,
    q_eff: &SymMatrix,
    r: usize,
    opts: &ReductionOptions,
) -> Result<DromorSolution, ReductionError> {
    let rho = sys.spectral_radius();
    let lo = 0.5 * (1.0 - rho * rho);
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| lo * (LAMBDA_MAX / lo).powf(k as f64 / (GRID_POINTS - 1) as f64))
        .collect();
    let results: Vec<Result<DromorSolution, ReductionError>> = grid
        .par_iter()
        .map(|&l| solve_once(sys, q_eff, r, Some(l), opts))
        .collect();
    let mut solves = grid.len();

    let mut best: Option<(usize, DromorSolution)> = None;
    let mut first_error: Option<ReductionError> = None;
    for (k, res) in results.into_iter().enumerate() {
        match res {
            Ok(s) => {
                if best.as_ref().is_none_or(|(_, b)| s.gamma < b.gamma) {
                    best = Some((k, s));
                }
            }
            Err(e) => {
                log::debug!("lambda = {:.4}: {e}", grid[k]);
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    let Some((k, mut best)) = best else {
        return Err(first_error.expect("grid is nonempty"));
    };

    // golden-section refinement in log(λ) over the neighbouring grid cells
    let left = grid[k.saturating_sub(1)].ln();
    let right = grid[(k + 1).min(grid.len() - 1)].ln();
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |t: f64, solves: &mut usize| -> Option<DromorSolution> {
        *solves += 1;
        solve_once(sys, q_eff, r, Some(t.exp()), opts).ok()
    };
    let value = |s: &Option<DromorSolution>| s.as_ref().map_or(f64::INFINITY, |s| s.gamma);
    let (mut a, mut b) = (left, right);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut s1 = eval(x1, &mut solves);
    let mut s2 = eval(x2, &mut solves);
    for _ in 0..GOLDEN_STEPS {
        if value(&s1) <= value(&s2) {
            b = x2;
            x2 = x1;
            s2 = s1.take();
            x1 = b - phi * (b - a);
            s1 = eval(x1, &mut solves);
        } else {
            a = x1;
            x1 = x2;
            s1 = s2.take();
            x2 = a + phi * (b - a);
            s2 = eval(x2, &mut solves);
        }
    }
    for s in [s1, s2].into_iter().flatten() {
        if s.gamma < best.gamma {
            best = s;
        }
    }
    log::debug!(
        "lambda search: best lambda {:.6} gamma {:e} after {solves} solves",
        best.lambda.unwrap_or(f64::NAN),
        best.gamma
    );
    best.solves = solves;
    Ok(best)
}
