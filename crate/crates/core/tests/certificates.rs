use std::time::Instant;

use approx::assert_relative_eq;
use dromor::matops::{max_abs, Matrix, SymMatrix};
use dromor::reduction::{
    build_psi, dromor_program, reduce_certain, reduce_robust, reduced_matrices,
    AmbiguousReductionProblem, DiscreteLtiSystem, ModelOrigin, ReducedModel, ReductionOptions,
};
use dromor::sdp::{dump, InteriorPoint, SdpBackend, SearchDirection};
use dromor::validation::{asymptotic_error_exact, check_certificate, within_bound, AugmentedSystem};
use dromor::GelbrichBall;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn four_state_system() -> DiscreteLtiSystem {
    DiscreteLtiSystem::new(
        Matrix::from_row_slice(
            4,
            4,
            &[
                0.82, -0.02, 0.17, 0.03, -0.02, 0.82, 0.03, 0.17, -0.08, -0.01, -0.01, -0.01,
                -0.01, -0.08, -0.01, -0.02,
            ],
        ),
        Matrix::from_row_slice(4, 2, &[0.17, 0.03, 0.03, 0.17, 0.09, 0.02, 0.02, 0.09]),
        Matrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]),
    )
    .unwrap()
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_stable(n: usize, m: usize, p: usize, rng: &mut ChaCha8Rng) -> DiscreteLtiSystem {
    let a = gaussian(n, n, rng);
    let target = rng.random_range(0.3..0.95);
    let a = &a * (target / dromor::matops::spectral_radius(&a));
    DiscreteLtiSystem::new(a, gaussian(n, m, rng), gaussian(p, n, rng)).unwrap()
}

fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let g = gaussian(n, n, rng);
    SymMatrix::symmetrize(&g * g.transpose()).add_identity(0.05)
}

#[test]
fn two_state_example_certificate_holds() {
    let sys = DiscreteLtiSystem::new(
        Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]),
        Matrix::identity(2, 2),
        Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .unwrap();
    let opts = ReductionOptions {
        canonical: false,
        ..ReductionOptions::default()
    };
    let q = SymMatrix::identity(2);
    let (model, cert) = reduce_certain(&sys, &q, 1, &opts).unwrap();
    let err = asymptotic_error_exact(&sys, &model, &q).unwrap();
    assert!(within_bound(err, cert.gamma_tilde_star), "{err} > {}", cert.gamma_tilde_star);
    assert_eq!(cert.beta_star, 0.0);
}

#[test]
fn four_state_certificate_checks() {
    let sys = four_state_system();
    let ball = GelbrichBall::new(SymMatrix::from_diagonal(&[0.01, 1.0]), 2.0).unwrap();
    let prob = AmbiguousReductionProblem::new(sys.clone(), ball, 2).unwrap();
    let (model, cert) = reduce_robust(&prob, &ReductionOptions::default()).unwrap();
    let q_true = SymMatrix::from_diagonal(&[1.0, 0.01]);
    let report = check_certificate(&sys, &model, &cert, Some(&q_true)).unwrap();
    assert!(report.sound());
    let t = report.true_covariance.as_ref().unwrap();
    assert!(t.loewner.holds);
    assert!(t.bound_satisfied);
    assert_eq!(report.trace_slack, cert.trace_slack);
    assert_eq!(report.psi_max_eig, cert.psi_max_eig);

    let mut tampered = cert.clone();
    tampered.gamma_tilde_star /= 2.0;
    let bad = check_certificate(&sys, &model, &tampered, Some(&q_true)).unwrap();
    assert!(!bad.trace_bound_holds() || !bad.bound_at_q_eff());
    assert!(!bad.sound());
}

#[test]
fn random_certificates_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..=3);
        let p = rng.random_range(1..=2);
        let r = rng.random_range(1..n);
        let sys = random_stable(n, m, p, &mut rng);
        let q = random_pd(m, &mut rng);
        let start = Instant::now();
        let (model, cert) = reduce_certain(&sys, &q, r, &ReductionOptions::default()).unwrap();
        let report = check_certificate(&sys, &model, &cert, None).unwrap();
        eprintln!(
            "n={n} r={r} gamma={:.3e} error={:.3e} {:?}",
            cert.gamma_tilde_star,
            report.error_at_q_eff,
            start.elapsed()
        );
        assert!(report.sound(), "{report:?}");
    }
}

#[test]
fn congruence_identity_on_random_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let r = rng.random_range(1..n);
        let m = rng.random_range(1..=3);
        let sys = random_stable(n, m, 2, &mut rng);
        let q = random_pd(m, &mut rng);
        let p1 = random_pd(n, &mut rng);
        let p2 = gaussian(n, r, &mut rng);
        let p1_inv = p1.as_matrix().clone().try_inverse().unwrap();
        let schur = SymMatrix::symmetrize(p2.transpose() * &p1_inv * &p2);
        let p3 = schur.add(&random_pd(r, &mut rng));

        let (a_hat, b_hat, c_hat) = reduced_matrices(&p1, &p2, &p3, &sys).unwrap();
        let model = ReducedModel {
            a_hat,
            b_hat,
            c_hat,
            factors: None,
            transform: Matrix::identity(n, n),
            origin: ModelOrigin::Dromor,
        };
        let aug = AugmentedSystem::new(&sys, &model).unwrap();
        let p_d = SymMatrix::symmetrize(dromor::matops::block2(
            p1.as_matrix(),
            &p2,
            &p2.transpose(),
            p3.as_matrix(),
        ));
        let theta = aug.lyapunov_operator(&p_d, &q);
        let gap = p3.sub(&schur);
        let mut rhs = theta.as_matrix().clone();
        let mut lower = rhs.view_mut((n, n), (r, r));
        lower += gap.as_matrix();

        let z = SymMatrix::symmetrize(&p2 * p3.as_matrix().clone().try_inverse().unwrap() * p2.transpose());
        let psi = build_psi(&p1, &z, &q, &sys).unwrap();
        let left = dromor::matops::block_diag(&[&Matrix::identity(n, n), &(p2.transpose() * &p1_inv)]);
        let congruent = &left * psi.as_matrix() * left.transpose();
        let scale = max_abs(&congruent).max(1.0);
        assert!(
            (rhs - congruent).norm() <= 1e-8 * scale,
            "identity fails for n={n}, r={r}"
        );
    }
}

#[test]
fn backends_agree_on_the_reduction_program() {
    let sys = four_state_system();
    let q = SymMatrix::from_diagonal(&[0.01 + 4.842_534_08, 1.0 + 4.842_534_08]);
    let prog = dromor_program(&sys, &q, 2, Some(0.9), 1e-6).unwrap();
    let hkm = InteriorPoint::with_tol(1e-8).solve(&prog.program).unwrap();
    let nt = InteriorPoint::with_tol(1e-8)
        .direction(SearchDirection::Nt)
        .solve(&prog.program)
        .unwrap();
    assert_relative_eq!(hkm.objective(), nt.objective(), max_relative = 1e-6);

    let text = dump::dump(&prog.program);
    let back = dump::parse(&text).unwrap();
    assert_eq!(dump::dump(&back), text);
    let again = InteriorPoint::with_tol(1e-8).solve(&back).unwrap();
    assert_eq!(again.objective(), hkm.objective());
}
