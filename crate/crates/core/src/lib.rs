//! Distributionally robust model order reduction for discrete-time LTI systems
//! driven by zero-mean inputs whose covariance is only known to lie in a
//! Gelbrich ball.
//!
//! The pipeline is [`ambiguity::worst_case_trace`] for the effective input
//! covariance, then [`reduction::reduce_robust`] for the reduced model and its
//! error certificate. [`validation`] recomputes errors independently and
//! [`baselines`] provides balanced truncation for comparison.

pub mod ambiguity;
pub mod baselines;
pub mod io;
pub mod matops;
pub mod reduction;
pub mod sdp;
pub mod validation;

pub use ambiguity::{GaussianSpec, GelbrichBall, Membership, MembershipMode, WorstCaseResult};
pub use baselines::{balanced_truncation, gramians, GramianPair};
pub use matops::{Matrix, SymMatrix, Vector};
pub use reduction::{
    reduce_certain, reduce_robust, AmbiguousReductionProblem, Certificate, DiscreteLtiSystem,
    LambdaChoice, LmiForm, ReducedModel, ReductionError, ReductionOptions, Stage,
};
pub use sdp::{SolveReport, SolveStatus};
pub use validation::{
    asymptotic_error_exact, check_certificate, simulate, CertificateReport, SimulationStats,
};
