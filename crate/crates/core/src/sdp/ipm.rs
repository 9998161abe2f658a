//! Infeasible-start primal-dual path-following solver for block-diagonal SDPs.
//!
//! The program is compiled to
//!
//! ```text
//! minimize  c^T y   subject to   S_b = F_b0 + Σ_i y_i F_bi ⪰ 0   for every block b
//! ```
//!
//! whose conic dual is `maximize -Σ_b <F_b0, X_b>` over `X_b ⪰ 0` with
//! `Σ_b <F_bi, X_b> = c_i`. Each iteration solves the Schur-complement system for
//! a Mehrotra predictor-corrector step using either the HKM or the
//! Nesterov-Todd scaling.
//!
//! Once progress stalls for several iterations the current iterate is accepted
//! if `y` is feasible and complementarity is within [`NEAR_FACTOR`] times the
//! tolerance, with the residual of `X` allowed up to `sqrt(tol)`.

use std::time::Instant;

use nalgebra::{Cholesky, DVector, SymmetricEigen};

use super::{
    ConicProgram, Objective, SdpBackend, SdpError, Solution, SolveReport, SolveStatus, Values,
    DEFAULT_TOL,
};
use crate::matops::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchDirection {
    /// Helmberg-Kojima-Monteiro: `ΔX = ... - sym(X ΔS S⁻¹)`.
    Hkm,
    /// Nesterov-Todd: `ΔX = ... - W ΔS W` with `W S W = X`.
    Nt,
}

#[derive(Debug, Clone)]
pub struct InteriorPoint {
    pub tol: f64,
    pub max_iter: usize,
    pub direction: SearchDirection,
}

impl Default for InteriorPoint {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: 200,
            direction: SearchDirection::Hkm,
        }
    }
}

impl InteriorPoint {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn direction(mut self, direction: SearchDirection) -> Self {
        self.direction = direction;
        self
    }
}

impl SdpBackend for InteriorPoint {
    fn name(&self) -> &str {
        match self.direction {
            SearchDirection::Hkm => "ipm-hkm",
            SearchDirection::Nt => "ipm-nt",
        }
    }

    fn solve(&self, program: &ConicProgram) -> Result<Solution, SdpError> {
        program.validate()?;
        let compiled = Compiled::new(program);
        let start = Instant::now();
        let outcome = run(&compiled, self);
        let elapsed = start.elapsed().as_secs_f64();

        let values = Values::from_flat(program, outcome.y.as_slice());
        let primal_residual = program
            .constraints()
            .iter()
            .map(|c| (-c.slack(&values)).max(0.0))
            .fold(0.0, f64::max);
        let mut report = SolveReport {
            status: SolveStatus::NumericalFailure,
            objective_value: None,
            primal_residual,
            gap: outcome.gap,
            solve_time: elapsed,
            iterations: outcome.iterations,
        };
        match outcome.verdict {
            Verdict::Optimal => {
                report.status = SolveStatus::Optimal;
                report.objective_value = Some(program.objective().eval(&values));
                log::debug!(
                    "{}: optimal after {} iterations, gap {:e}, residual {:e}",
                    self.name(),
                    report.iterations,
                    report.gap,
                    report.primal_residual
                );
                Ok(Solution { report, values })
            }
            Verdict::Infeasible => {
                report.status = SolveStatus::Infeasible;
                Err(SdpError::Infeasible(report))
            }
            Verdict::IterationLimit => Err(SdpError::IterationLimit(report)),
            Verdict::Failure(reason) => Err(SdpError::NumericalFailure { reason, report }),
        }
    }
}

struct Block {
    dim: usize,
    f0: Matrix,
    terms: Vec<(usize, Matrix)>,
}

struct Compiled {
    n: usize,
    c: DVector<f64>,
    blocks: Vec<Block>,
}

impl Compiled {
    fn new(program: &ConicProgram) -> Self {
        let mut offsets = Vec::with_capacity(program.vars().len());
        let mut n = 0;
        for decl in program.vars() {
            offsets.push(n);
            n += decl.shape.n_coords();
        }
        let sign = match program.sense() {
            Objective::Minimize => 1.0,
            Objective::Maximize => -1.0,
        };
        let mut c = DVector::zeros(n);
        for ((var, coord), a) in program.objective().terms() {
            c[offsets[*var] + coord] += sign * a;
        }
        let blocks = program
            .constraints()
            .iter()
            .map(|con| {
                let g = con.as_psd_block();
                Block {
                    dim: g.dim(),
                    f0: g.constant_part().clone(),
                    terms: g
                        .terms()
                        .map(|((var, coord), m)| (offsets[*var] + coord, m.clone()))
                        .collect(),
                }
            })
            .collect();
        Self { n, c, blocks }
    }

    fn lin(&self, b: usize, y: &DVector<f64>) -> Matrix {
        let blk = &self.blocks[b];
        let mut out = Matrix::zeros(blk.dim, blk.dim);
        for (i, f) in &blk.terms {
            if y[*i] != 0.0 {
                out += f * y[*i];
            }
        }
        out
    }

    /// `A(X)_i = Σ_b <F_bi, X_b>`.
    fn adjoint(&self, xs: &[Matrix]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (blk, x) in self.blocks.iter().zip(xs) {
            for (i, f) in &blk.terms {
                out[*i] += f.dot(x);
            }
        }
        out
    }
}

/// Residuals within this multiple of the tolerance are accepted when the iteration cannot continue.
const NEAR_FACTOR: f64 = 100.0;
const STALL_RATIO: f64 = 0.5;
const REFINE_STEPS: usize = 2;
const STALL_NEAR: usize = 8;
const STALL_FAR: usize = 30;

fn settle(near: bool, reason: &str) -> Verdict {
    if near {
        log::debug!("accepting near-optimal iterate: {reason}");
        Verdict::Optimal
    } else {
        Verdict::Failure(reason.into())
    }
}

enum Verdict {
    Optimal,
    Infeasible,
    IterationLimit,
    Failure(String),
}

struct Outcome {
    y: DVector<f64>,
    verdict: Verdict,
    iterations: usize,
    gap: f64,
}

fn inner(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn sym(m: Matrix) -> Matrix {
    let t = m.transpose();
    (m + t) * 0.5
}

fn inverse_spd(m: &Matrix) -> Option<Matrix> {
    Cholesky::new(m.clone()).map(|c| c.inverse())
}

/// Largest `α` keeping `X + α ΔX ⪰ 0` (infinite when the direction never leaves the cone).
fn max_step(x: &Matrix, dx: &Matrix) -> f64 {
    let Some(chol) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let scaled = sym(&linv * dx * linv.transpose());
    let min = SymmetricEigen::new(scaled)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

/// Nesterov-Todd scaling point `W = S^{-1/2} (S^{1/2} X S^{1/2})^{1/2} S^{-1/2}`.
fn nt_scaling(x: &Matrix, s: &Matrix) -> Option<Matrix> {
    let eig = SymmetricEigen::new(s.clone());
    if eig.eigenvalues.iter().any(|v| *v <= 0.0) {
        return None;
    }
    let u = &eig.eigenvectors;
    let half = u * Matrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * u.transpose();
    let inv_half = u * Matrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt())) * u.transpose();
    let mid = SymmetricEigen::new(sym(&half * x * &half));
    let mid_root = &mid.eigenvectors
        * Matrix::from_diagonal(&mid.eigenvalues.map(|v| v.max(0.0).sqrt()))
        * mid.eigenvectors.transpose();
    Some(sym(&inv_half * mid_root * &inv_half))
}

fn run(p: &Compiled, settings: &InteriorPoint) -> Outcome {
    let tol = settings.tol;
    let nb = p.blocks.len();
    let total_dim: usize = p.blocks.iter().map(|b| b.dim).sum();
    let mut y = DVector::zeros(p.n);

    if nb == 0 || p.n == 0 {
        return Outcome {
            y,
            verdict: if p.c.iter().all(|v| *v == 0.0) {
                Verdict::Optimal
            } else {
                Verdict::Failure("objective unbounded: no constraints".into())
            },
            iterations: 0,
            gap: 0.0,
        };
    }

    let norm_f0 = p.blocks.iter().map(|b| b.f0.norm_squared()).sum::<f64>().sqrt();
    let norm_c = p.c.norm();

    let mut xs: Vec<Matrix> = Vec::with_capacity(nb);
    let mut ss: Vec<Matrix> = Vec::with_capacity(nb);
    for blk in &p.blocks {
        let d = blk.dim as f64;
        let mut xi: f64 = 10f64.max(d.sqrt());
        let mut eta: f64 = 10f64.max(d.sqrt()).max(blk.f0.norm());
        for (i, f) in &blk.terms {
            let fnorm = f.norm();
            xi = xi.max(d * (1.0 + p.c[*i].abs()) / (1.0 + fnorm));
            eta = eta.max(fnorm);
        }
        xs.push(Matrix::identity(blk.dim, blk.dim) * xi);
        ss.push(Matrix::identity(blk.dim, blk.dim) * eta);
    }

    let mut gap_rel = f64::INFINITY;
    let mut near = false;
    let mut stalled = 0;
    let mut best_merit = f64::INFINITY;
    let mut since_progress = 0;
    for iter in 0..settings.max_iter {
        // residuals
        let rd: Vec<Matrix> = (0..nb)
            .map(|b| &p.blocks[b].f0 + p.lin(b, &y) - &ss[b])
            .collect();
        let ax = p.adjoint(&xs);
        let rp = &p.c - &ax;
        let xs_dot = inner(&xs, &ss);
        let mu = xs_dot / total_dim as f64;
        let pobj = p.c.dot(&y);
        let dobj = -p.blocks.iter().zip(&xs).map(|(b, x)| b.f0.dot(x)).sum::<f64>();

        let pinf = rd.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt() / (1.0 + norm_f0);
        let dinf = rp.norm() / (1.0 + norm_c);
        let scale = 1.0 + pobj.abs() + dobj.abs();
        gap_rel = (xs_dot.abs().max((pobj - dobj).abs())) / scale;

        if !(pinf.is_finite() && dinf.is_finite() && gap_rel.is_finite()) {
            return Outcome {
                y,
                verdict: Verdict::Failure("non-finite iterate".into()),
                iterations: iter,
                gap: gap_rel,
            };
        }
        log::trace!("it {iter} pinf {pinf:.2e} dinf {dinf:.2e} gap {gap_rel:.2e} mu {mu:.2e}");
        // y stays feasible, so a stalled iterate is judged on complementarity
        // with a looser floor on the certificate side
        let complementarity = xs_dot.abs() / scale;
        near = pinf < NEAR_FACTOR * tol && dinf < tol.sqrt() && complementarity < NEAR_FACTOR * tol;
        if pinf < tol && dinf < tol && gap_rel < tol {
            return Outcome {
                y,
                verdict: Verdict::Optimal,
                iterations: iter,
                gap: gap_rel,
            };
        }
        let certificate_ratio = if dobj > 0.0 { ax.norm() / dobj } else { f64::INFINITY };
        let merit = pinf.max(dinf).max(gap_rel).min(certificate_ratio);
        if merit < STALL_RATIO * best_merit {
            best_merit = merit;
            since_progress = 0;
        } else {
            since_progress += 1;
        }
        if (near && since_progress >= STALL_NEAR) || since_progress >= STALL_FAR {
            return Outcome {
                y,
                verdict: settle(near, "progress stalled"),
                iterations: iter,
                gap: gap_rel,
            };
        }
        // infeasibility certificate: X ⪰ 0, A(X) ≈ 0, <F0, X> < 0
        let certificate_value = -dobj;
        if dobj > 0.0 && ax.norm() < tol * dobj && dobj > 1.0 / tol {
            log::debug!("infeasibility certificate at iteration {iter}, <F0,X> = {certificate_value:e}");
            return Outcome {
                y,
                verdict: Verdict::Infeasible,
                iterations: iter,
                gap: gap_rel,
            };
        }
        if pobj < -1e14 * (1.0 + norm_c) {
            return Outcome {
                y,
                verdict: Verdict::Failure("objective appears unbounded below".into()),
                iterations: iter,
                gap: gap_rel,
            };
        }

        // scaling operators
        let mut sinv = Vec::with_capacity(nb);
        let mut wmats = Vec::with_capacity(nb);
        for b in 0..nb {
            let Some(si) = inverse_spd(&ss[b]) else {
                return Outcome {
                    y,
                    verdict: settle(near, "dual slack lost definiteness"),
                    iterations: iter,
                    gap: gap_rel,
                };
            };
            if settings.direction == SearchDirection::Nt {
                match nt_scaling(&xs[b], &ss[b]) {
                    Some(w) => wmats.push(w),
                    None => {
                        return Outcome {
                            y,
                            verdict: settle(near, "NT scaling failed"),
                            iterations: iter,
                            gap: gap_rel,
                        }
                    }
                }
            }
            sinv.push(si);
        }
        let apply_k = |b: usize, m: &Matrix| -> Matrix {
            match settings.direction {
                SearchDirection::Hkm => sym(&xs[b] * m * &sinv[b]),
                SearchDirection::Nt => &wmats[b] * m * &wmats[b],
            }
        };

        // Schur complement
        let mut schur = Matrix::zeros(p.n, p.n);
        for (b, blk) in p.blocks.iter().enumerate() {
            for (j, fj) in &blk.terms {
                let g = match settings.direction {
                    SearchDirection::Hkm => &xs[b] * fj * &sinv[b],
                    SearchDirection::Nt => &wmats[b] * fj * &wmats[b],
                };
                for (i, fi) in &blk.terms {
                    schur[(*i, *j)] += fi.dot(&g);
                }
            }
        }
        let schur = sym(schur);
        let factor = factor_schur(&schur);
        let Some(factor) = factor else {
            return Outcome {
                y,
                verdict: settle(near, "Schur complement is singular"),
                iterations: iter,
                gap: gap_rel,
            };
        };

        let k_rd: Vec<Matrix> = (0..nb).map(|b| apply_k(b, &rd[b])).collect();
        let direction = |rc: &[Matrix]| -> (DVector<f64>, Vec<Matrix>, Vec<Matrix>) {
            let diff: Vec<Matrix> = rc.iter().zip(&k_rd).map(|(a, b)| a - b).collect();
            let rhs = p.adjoint(&diff) - &rp;
            let mut dy = factor.solve(&rhs);
            for _ in 0..REFINE_STEPS {
                let res = &rhs - &schur * &dy;
                dy += factor.solve(&res);
            }
            let ds: Vec<Matrix> = (0..nb).map(|b| &rd[b] + p.lin(b, &dy)).collect();
            let dx: Vec<Matrix> = (0..nb).map(|b| sym(&rc[b] - apply_k(b, &ds[b]))).collect();
            (dy, dx, ds)
        };

        let step_lengths = |dx: &[Matrix], ds: &[Matrix]| -> (f64, f64) {
            let ap = (0..nb).map(|b| max_step(&xs[b], &dx[b])).fold(f64::INFINITY, f64::min);
            let ad = (0..nb).map(|b| max_step(&ss[b], &ds[b])).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // predictor
        let rc_pred: Vec<Matrix> = xs.iter().map(|x| -x).collect();
        let (_, dx_p, ds_p) = direction(&rc_pred);
        let (ap, ad) = step_lengths(&dx_p, &ds_p);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let trial: f64 = (0..nb)
            .map(|b| (&xs[b] + &dx_p[b] * ap).dot(&(&ss[b] + &ds_p[b] * ad)))
            .sum();
        let sigma = if xs_dot > 0.0 {
            (trial / xs_dot).max(0.0).powi(3).min(1.0)
        } else {
            0.5
        };

        // corrector
        let rc: Vec<Matrix> = (0..nb)
            .map(|b| {
                &sinv[b] * (sigma * mu) - &xs[b] - sym(&dx_p[b] * &ds_p[b] * &sinv[b])
            })
            .collect();
        let (dy, dx, ds) = direction(&rc);
        let (ap, ad) = step_lengths(&dx, &ds);
        let damp = 0.95;
        let mut ap = (damp * ap).min(1.0);
        let mut ad = (damp * ad).min(1.0);
        // roundoff can leave the boundary estimate slightly optimistic
        for _ in 0..30 {
            let ok_x = (0..nb).all(|b| Cholesky::new(sym(&xs[b] + &dx[b] * ap)).is_some());
            let ok_s = (0..nb).all(|b| Cholesky::new(sym(&ss[b] + &ds[b] * ad)).is_some());
            if ok_x && ok_s {
                break;
            }
            if !ok_x {
                ap *= 0.5;
            }
            if !ok_s {
                ad *= 0.5;
            }
        }

        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
        } else {
            stalled = 0;
        }
        if stalled >= 3 {
            return Outcome {
                y,
                verdict: settle(near, "step length collapsed"),
                iterations: iter,
                gap: gap_rel,
            };
        }

        for b in 0..nb {
            xs[b] += &dx[b] * ap;
            ss[b] += &ds[b] * ad;
            xs[b] = sym(xs[b].clone());
            ss[b] = sym(ss[b].clone());
        }
        y += dy * ad;
    }
    Outcome {
        y,
        verdict: if near {
            Verdict::Optimal
        } else {
            Verdict::IterationLimit
        },
        iterations: settings.max_iter,
        gap: gap_rel,
    }
}

enum SchurFactor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurFactor::Chol(c) => c.solve(rhs),
            SchurFactor::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}

fn factor_schur(m: &Matrix) -> Option<SchurFactor> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(SchurFactor::Chol(c));
    }
    let n = m.nrows();
    let reg = 1e-13 * m.diagonal().amax().max(1e-300);
    if let Some(c) = Cholesky::new(m + Matrix::identity(n, n) * reg) {
        return Some(SchurFactor::Chol(c));
    }
    let lu = m.clone().lu();
    if lu.is_invertible() {
        Some(SchurFactor::Lu(lu))
    } else {
        None
    }
}
