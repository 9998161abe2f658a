//! Exact asymptotic error, Monte Carlo simulation, and certificate checks.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::join;
use thiserror::Error;

use crate::ambiguity::{self, AmbiguityError, GelbrichBall, MembershipMode};
use crate::matops::{dlyap, sqrtm_psd, sym_eig, MatError, Matrix, SymMatrix, Vector};
use crate::reduction::{
    build_psi, build_sufficient_lmi, embed_z, Certificate, DiscreteLtiSystem, ReducedModel,
    ReductionError,
};

/// Exact errors in `[-ERROR_CLIP, 0)` are reported as zero.
pub const ERROR_CLIP: f64 = 1e-10;
/// Fraction of steps averaged for the asymptotic estimate.
pub const TAIL_FRACTION: f64 = 0.2;
/// Slack allowed when comparing an error against a bound `γ`: `1e-6 (1 + γ)`.
pub const BOUND_REL_TOL: f64 = 1e-6;
/// Eigenvalues of `Q_eff - Q` above `-LOEWNER_TOL` count as nonnegative.
pub const LOEWNER_TOL: f64 = 1e-10;

const LEAF: usize = 64;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{which} system is unstable (spectral radius {spectral_radius})")]
    Unstable {
        which: &'static str,
        spectral_radius: f64,
    },
    #[error("{0}")]
    NotApplicable(String),
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Ambiguity(#[from] AmbiguityError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Whether `error ≤ γ + 1e-6 (1 + γ)`.
pub fn within_bound(error: f64, gamma: f64) -> bool {
    error <= gamma + BOUND_REL_TOL * (1.0 + gamma)
}

/// Original and reduced model run side by side on a shared input:
/// `A_Δ = diag(A, Â)`, `B_Δ = [B; B̂]`, `C_Δ = [C, -Ĉ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub a_delta: Matrix,
    pub b_delta: Matrix,
    pub c_delta: Matrix,
    n: usize,
}

impl AugmentedSystem {
    pub fn new(sys: &DiscreteLtiSystem, red: &ReducedModel) -> Result<Self, ValidationError> {
        let r = red.order();
        if red.a_hat.shape() != (r, r)
            || red.b_hat.shape() != (r, sys.m())
            || red.c_hat.shape() != (sys.p(), r)
        {
            return Err(ValidationError::DimensionMismatch(format!(
                "reduced model (Â {}x{}, B̂ {}x{}, Ĉ {}x{}) does not match a system with {} inputs and {} outputs",
                red.a_hat.nrows(),
                red.a_hat.ncols(),
                red.b_hat.nrows(),
                red.b_hat.ncols(),
                red.c_hat.nrows(),
                red.c_hat.ncols(),
                sys.m(),
                sys.p()
            )));
        }
        let n = sys.n();
        let a_delta = crate::matops::block_diag(&[sys.a(), &red.a_hat]);
        let mut b_delta = Matrix::zeros(n + r, sys.m());
        b_delta.rows_mut(0, n).copy_from(sys.b());
        b_delta.rows_mut(n, r).copy_from(&red.b_hat);
        let mut c_delta = Matrix::zeros(sys.p(), n + r);
        c_delta.columns_mut(0, n).copy_from(sys.c());
        c_delta.columns_mut(n, r).copy_from(&(-&red.c_hat));
        Ok(AugmentedSystem {
            a_delta,
            b_delta,
            c_delta,
            n,
        })
    }

    pub fn full_order(&self) -> usize {
        self.n
    }

    pub fn require_stable(&self) -> Result<(), ValidationError> {
        let n = self.n;
        let r = self.a_delta.nrows() - n;
        for (which, block) in [
            ("original", self.a_delta.view((0, 0), (n, n)).clone_owned()),
            ("reduced", self.a_delta.view((n, n), (r, r)).clone_owned()),
        ] {
            let rho = crate::matops::spectral_radius(&block);
            if rho >= 1.0 {
                return Err(ValidationError::Unstable {
                    which,
                    spectral_radius: rho,
                });
            }
        }
        Ok(())
    }

    /// `A_Δ P A_Δᵀ - P + B_Δ Q B_Δᵀ`.
    pub fn lyapunov_operator(&self, p: &SymMatrix, q: &SymMatrix) -> SymMatrix {
        p.congruence(&self.a_delta)
            .sub(p)
            .add(&q.congruence(&self.b_delta))
    }

    /// Stationary state covariance `P_Δ` under inputs with covariance `Q`.
    pub fn stationary_covariance(&self, q: &SymMatrix) -> Result<SymMatrix, ValidationError> {
        if q.dim() != self.b_delta.ncols() {
            return Err(ValidationError::DimensionMismatch(format!(
                "Q is {0}x{0} but the system has {1} inputs",
                q.dim(),
                self.b_delta.ncols()
            )));
        }
        self.require_stable()?;
        Ok(dlyap(&self.a_delta, &q.congruence(&self.b_delta))?)
    }
}

/// `lim E‖y_k - ŷ_k‖² = tr(C_Δ P_Δ C_Δᵀ)`.
pub fn asymptotic_error_exact(
    sys: &DiscreteLtiSystem,
    red: &ReducedModel,
    q: &SymMatrix,
) -> Result<f64, ValidationError> {
    let aug = AugmentedSystem::new(sys, red)?;
    let p = aug.stationary_covariance(q)?;
    let err = p.congruence(&aug.c_delta).trace();
    Ok(if (-ERROR_CLIP..0.0).contains(&err) { 0.0 } else { err })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoewnerCheck {
    /// Eigenvalues of `Q_eff - Q_true`, descending.
    pub margin_eigs: Vec<f64>,
    pub holds: bool,
}

pub fn loewner_check(q_eff: &SymMatrix, q: &SymMatrix) -> Result<LoewnerCheck, ValidationError> {
    if q_eff.dim() != q.dim() {
        return Err(ValidationError::DimensionMismatch(format!(
            "Q_eff is {0}x{0} but Q is {1}x{1}",
            q_eff.dim(),
            q.dim()
        )));
    }
    let eig = sym_eig(&q_eff.sub(q))?;
    let margin_eigs: Vec<f64> = eig.values.iter().copied().collect();
    let holds = margin_eigs.iter().all(|v| *v >= -LOEWNER_TOL);
    Ok(LoewnerCheck { margin_eigs, holds })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueCovarianceCheck {
    pub loewner: LoewnerCheck,
    pub exact_error: f64,
    pub bound_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub gamma_tilde_star: f64,
    pub psi_max_eig: f64,
    pub lmi_min_eig: Option<f64>,
    /// Recomputed `γ̃* - tr(C (P₁ - Z) Cᵀ)`.
    pub trace_slack: f64,
    pub spectral_radius: f64,
    pub error_at_q_eff: f64,
    pub true_covariance: Option<TrueCovarianceCheck>,
}

impl CertificateReport {
    pub fn psi_negative(&self) -> bool {
        self.psi_max_eig < 0.0
    }

    /// The sufficient LMI held strictly when it was the form solved.
    pub fn lmi_holds(&self) -> bool {
        self.lmi_min_eig.is_none_or(|v| v > 0.0)
    }

    pub fn trace_bound_holds(&self) -> bool {
        self.trace_slack >= -1e-8
    }

    pub fn bound_at_q_eff(&self) -> bool {
        within_bound(self.error_at_q_eff, self.gamma_tilde_star)
    }

    /// Every check that the certificate is designed to guarantee.
    pub fn sound(&self) -> bool {
        self.lmi_holds()
            && self.trace_bound_holds()
            && self.spectral_radius < 1.0
            && self.bound_at_q_eff()
            && self
                .true_covariance
                .as_ref()
                .is_none_or(|t| !t.loewner.holds || t.bound_satisfied)
    }
}

/// Recomputes every certificate quantity from the model's recovery factors.
pub fn check_certificate(
    sys: &DiscreteLtiSystem,
    red: &ReducedModel,
    cert: &Certificate,
    q_true: Option<&SymMatrix>,
) -> Result<CertificateReport, ValidationError> {
    let factors = red.factors.as_ref().ok_or_else(|| {
        ValidationError::NotApplicable("model carries no recovery factors to certify".into())
    })?;
    let work = red.working_system(sys)?;
    let z = embed_z(&factors.z1, sys.n());
    let psi = build_psi(&cert.p1, &z, &cert.q_eff, &work)?;
    let lmi_min_eig = match cert.lambda {
        Some(l) => Some(build_sufficient_lmi(&cert.p1, &z, &cert.q_eff, &work, l)?.min_eigenvalue()),
        None => None,
    };
    let bound = cert.p1.sub(&z).congruence(work.c()).trace();
    let error_at_q_eff = asymptotic_error_exact(sys, red, &cert.q_eff)?;
    let true_covariance = match q_true {
        Some(q) => {
            let exact_error = asymptotic_error_exact(sys, red, q)?;
            Some(TrueCovarianceCheck {
                loewner: loewner_check(&cert.q_eff, q)?,
                exact_error,
                bound_satisfied: within_bound(exact_error, cert.gamma_tilde_star),
            })
        }
        None => None,
    };
    Ok(CertificateReport {
        gamma_tilde_star: cert.gamma_tilde_star,
        psi_max_eig: psi.max_eigenvalue(),
        lmi_min_eig,
        trace_slack: cert.gamma_tilde_star - bound,
        spectral_radius: red.spectral_radius(),
        error_at_q_eff,
        true_covariance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationStats {
    pub steps: usize,
    pub trajectories: usize,
    pub seed: u64,
    /// Mean of `‖y_k - ŷ_k‖²` over trajectories, for `k = 0..steps`.
    pub mean_error: Vec<f64>,
    pub tail_start: usize,
    pub tail_mean: f64,
    pub tail_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub y: Vec<Vector>,
    pub y_hat: Vec<Vector>,
}

impl Trajectory {
    pub fn squared_error(&self, k: usize) -> f64 {
        (&self.y[k] - &self.y_hat[k]).norm_squared()
    }
}

struct Simulator<'a> {
    aug: AugmentedSystem,
    root: SymMatrix,
    sys: &'a DiscreteLtiSystem,
    steps: usize,
    seed: u64,
}

impl<'a> Simulator<'a> {
    fn new(
        sys: &'a DiscreteLtiSystem,
        red: &ReducedModel,
        q: &SymMatrix,
        steps: usize,
        seed: u64,
    ) -> Result<Self, ValidationError> {
        if steps == 0 {
            return Err(ValidationError::DimensionMismatch("steps must be at least 1".into()));
        }
        let aug = AugmentedSystem::new(sys, red)?;
        if q.dim() != sys.m() {
            return Err(ValidationError::DimensionMismatch(format!(
                "Q is {0}x{0} but the system has {1} inputs",
                q.dim(),
                sys.m()
            )));
        }
        aug.require_stable()?;
        Ok(Simulator {
            aug,
            root: sqrtm_psd(q)?,
            sys,
            steps,
            seed,
        })
    }

    /// Runs trajectory `t` and calls `visit(k, x_Δ)` for every step.
    fn run(&self, t: u64, mut visit: impl FnMut(usize, &Vector)) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(t);
        let dim = self.aug.a_delta.nrows();
        let m = self.sys.m();
        let mut x = Vector::zeros(dim);
        let mut next = Vector::zeros(dim);
        let mut z = Vector::zeros(m);
        let mut u = Vector::zeros(m);
        for k in 0..self.steps {
            visit(k, &x);
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            u.gemv(1.0, self.root.as_matrix(), &z, 0.0);
            next.gemv(1.0, &self.aug.a_delta, &x, 0.0);
            next.gemv(1.0, &self.aug.b_delta, &u, 1.0);
            std::mem::swap(&mut x, &mut next);
        }
    }

    fn errors(&self, t: u64, out: &mut [f64]) {
        let mut e = Vector::zeros(self.sys.p());
        self.run(t, |k, x| {
            e.gemv(1.0, &self.aug.c_delta, x, 0.0);
            out[k] = e.norm_squared();
        });
    }

    /// Per-step error sums and per-trajectory tail means over `range`,
    /// split at fixed midpoints so the result does not depend on scheduling.
    fn accumulate(&self, lo: usize, hi: usize, tail_start: usize) -> (Vec<f64>, Vec<f64>) {
        if hi - lo <= LEAF {
            let mut sums = vec![0.0; self.steps];
            let mut tails = Vec::with_capacity(hi - lo);
            let mut buf = vec![0.0; self.steps];
            for t in lo..hi {
                self.errors(t as u64, &mut buf);
                for (s, e) in sums.iter_mut().zip(&buf) {
                    *s += e;
                }
                let tail = &buf[tail_start..];
                tails.push(tail.iter().sum::<f64>() / tail.len() as f64);
            }
            return (sums, tails);
        }
        let mid = lo + (hi - lo) / 2;
        let ((mut a, mut ta), (b, tb)) = join(
            || self.accumulate(lo, mid, tail_start),
            || self.accumulate(mid, hi, tail_start),
        );
        for (x, y) in a.iter_mut().zip(&b) {
            *x += y;
        }
        ta.extend(tb);
        (a, ta)
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Monte Carlo estimate of the asymptotic error. Trajectory `t` draws its
/// inputs from ChaCha stream `t` under a key derived from `seed`; both models
/// start at rest.
pub fn simulate(
    sys: &DiscreteLtiSystem,
    red: &ReducedModel,
    q: &SymMatrix,
    steps: usize,
    trajectories: usize,
    seed: u64,
) -> Result<SimulationStats, ValidationError> {
    if trajectories == 0 {
        return Err(ValidationError::DimensionMismatch(
            "trajectories must be at least 1".into(),
        ));
    }
    let sim = Simulator::new(sys, red, q, steps, seed)?;
    let tail_len = ((steps as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, steps);
    let tail_start = steps - tail_len;
    let (sums, tails) = sim.accumulate(0, trajectories, tail_start);
    let count = trajectories as f64;
    let tail_mean = pairwise_sum(&tails) / count;
    let tail_stderr = if trajectories > 1 {
        let dev: Vec<f64> = tails.iter().map(|v| (v - tail_mean).powi(2)).collect();
        (pairwise_sum(&dev) / (count - 1.0) / count).sqrt()
    } else {
        f64::NAN
    };
    Ok(SimulationStats {
        steps,
        trajectories,
        seed,
        mean_error: sums.into_iter().map(|s| s / count).collect(),
        tail_start,
        tail_mean,
        tail_stderr,
    })
}

/// The outputs of trajectory `index` exactly as [`simulate`] draws it.
pub fn simulate_trajectory(
    sys: &DiscreteLtiSystem,
    red: &ReducedModel,
    q: &SymMatrix,
    steps: usize,
    seed: u64,
    index: u64,
) -> Result<Trajectory, ValidationError> {
    let sim = Simulator::new(sys, red, q, steps, seed)?;
    let n = sim.aug.full_order();
    let mut traj = Trajectory {
        y: Vec::with_capacity(steps),
        y_hat: Vec::with_capacity(steps),
    };
    sim.run(index, |_, x| {
        let r = x.len() - n;
        traj.y.push(sys.c() * x.rows(0, n));
        traj.y_hat.push(&red.c_hat * x.rows(n, r));
    });
    Ok(traj)
}

/// Header `k,y_1..y_p,yhat_1..yhat_p,sqerr`.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<(), ValidationError> {
    let p = traj.y.first().map_or(0, |v| v.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["k".to_string()];
    header.extend((1..=p).map(|i| format!("y_{i}")));
    header.extend((1..=p).map(|i| format!("yhat_{i}")));
    header.push("sqerr".into());
    out.write_record(&header)?;
    for k in 0..traj.y.len() {
        let mut row = vec![k.to_string()];
        row.extend(traj.y[k].iter().map(|v| v.to_string()));
        row.extend(traj.y_hat[k].iter().map(|v| v.to_string()));
        row.push(traj.squared_error(k).to_string());
        out.write_record(&row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Header `k,mean_sqerr`, or `k,<label>,...` for several series.
pub fn write_mean_error_csv<W: Write>(
    w: W,
    series: &[(&str, &SimulationStats)],
) -> Result<(), ValidationError> {
    let steps = series.first().map_or(0, |s| s.1.steps);
    if series.iter().any(|s| s.1.steps != steps) {
        return Err(ValidationError::DimensionMismatch(
            "all series need the same number of steps".into(),
        ));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["k".to_string()];
    header.extend(series.iter().map(|s| s.0.to_string()));
    out.write_record(&header)?;
    for k in 0..steps {
        let mut row = vec![k.to_string()];
        row.extend(series.iter().map(|s| s.1.mean_error[k].to_string()));
        out.write_record(&row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallSample {
    pub q: SymMatrix,
    pub gelbrich_squared: f64,
    pub loewner: LoewnerCheck,
    pub exact_error: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallReport {
    pub gamma_tilde_star: f64,
    pub samples: Vec<BallSample>,
    pub proposals: usize,
}

impl BallReport {
    /// Samples with `Q ⪯ Q_eff` whose error exceeds the bound.
    pub fn bound_failures(&self) -> Vec<&BallSample> {
        self.samples
            .iter()
            .filter(|s| s.loewner.holds && !s.within_bound)
            .collect()
    }

    /// Samples outside `Q ⪯ Q_eff`, where the bound is not claimed.
    pub fn premise_violations(&self) -> Vec<&BallSample> {
        self.samples.iter().filter(|s| !s.loewner.holds).collect()
    }
}

/// Draws `count` covariances from the ball by rejection: proposals
/// `(Q̄^{1/2} + G)(Q̄^{1/2} + G)ᵀ` with `G` uniform in `[-ρ, ρ]` entrywise are kept
/// when the direct membership test accepts them.
pub fn sample_ball(
    ball: &GelbrichBall,
    count: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<SymMatrix>, usize), ValidationError> {
    let root = sqrtm_psd(ball.center())?;
    let d = ball.dim();
    let rho = ball.rho();
    let mut out = Vec::with_capacity(count);
    let mut proposals = 0;
    while out.len() < count {
        proposals += 1;
        let g = Matrix::from_fn(d, d, |_, _| {
            if rho > 0.0 {
                rng.random_range(-rho..=rho)
            } else {
                0.0
            }
        });
        let m = root.as_matrix() + g;
        let q = SymMatrix::symmetrize(&m * m.transpose());
        if ambiguity::membership(ball, &q, MembershipMode::Direct)?.inside {
            out.push(q);
        }
        if proposals > 1000 * count.max(1) {
            return Err(ValidationError::NotApplicable(
                "rejection sampling acceptance rate is too low".into(),
            ));
        }
    }
    Ok((out, proposals))
}

/// Exact error of `red` at covariances sampled from `ball`, with the Loewner
/// premise `Q ⪯ Q_eff` recorded for every sample.
pub fn ball_robustness_report(
    sys: &DiscreteLtiSystem,
    red: &ReducedModel,
    cert: &Certificate,
    ball: &GelbrichBall,
    count: usize,
    seed: u64,
) -> Result<BallReport, ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (qs, proposals) = sample_ball(ball, count, &mut rng)?;
    let samples = qs
        .into_iter()
        .map(|q| {
            let exact_error = asymptotic_error_exact(sys, red, &q)?;
            Ok(BallSample {
                gelbrich_squared: ambiguity::gelbrich_distance_squared(&q, ball.center())?,
                loewner: loewner_check(&cert.q_eff, &q)?,
                exact_error,
                within_bound: within_bound(exact_error, cert.gamma_tilde_star),
                q,
            })
        })
        .collect::<Result<Vec<_>, ValidationError>>()?;
    Ok(BallReport {
        gamma_tilde_star: cert.gamma_tilde_star,
        samples,
        proposals,
    })
}
