use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ambiguity::GelbrichBall;
use crate::matops::{max_abs, Matrix, SymMatrix};

fn four_state_system() -> DiscreteLtiSystem {
    let a = Matrix::from_row_slice(
        4,
        4,
        &[
            0.82, -0.02, 0.17, 0.03, //
            -0.02, 0.82, 0.03, 0.17, //
            -0.08, -0.01, -0.01, -0.01, //
            -0.01, -0.08, -0.01, -0.02,
        ],
    );
    let b = Matrix::from_row_slice(4, 2, &[0.17, 0.03, 0.03, 0.17, 0.09, 0.02, 0.02, 0.09]);
    let c = Matrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
    DiscreteLtiSystem::new(a, b, c).unwrap()
}

fn two_state() -> DiscreteLtiSystem {
    DiscreteLtiSystem::new(
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.0])),
        Matrix::identity(2, 2),
        Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .unwrap()
}

fn scalar_sys(a: f64, b: f64, c: f64) -> DiscreteLtiSystem {
    DiscreteLtiSystem::new(
        Matrix::from_element(1, 1, a),
        Matrix::from_element(1, 1, b),
        Matrix::from_element(1, 1, c),
    )
    .unwrap()
}

fn no_canonical() -> ReductionOptions {
    ReductionOptions {
        canonical: false,
        ..ReductionOptions::default()
    }
}

#[test]
fn system_validation() {
    let a = Matrix::identity(2, 2);
    assert!(DiscreteLtiSystem::new(a.clone(), Matrix::zeros(3, 1), Matrix::zeros(1, 2)).is_err());
    assert!(DiscreteLtiSystem::new(a.clone(), Matrix::zeros(2, 1), Matrix::zeros(1, 3)).is_err());
    assert!(DiscreteLtiSystem::new(Matrix::zeros(2, 3), Matrix::zeros(2, 1), Matrix::zeros(1, 2)).is_err());
    let sys = DiscreteLtiSystem::new(a, Matrix::zeros(2, 1), Matrix::zeros(1, 2)).unwrap();
    assert!(matches!(sys.require_stable(), Err(ReductionError::Unstable { .. })));
}

#[test]
fn psi_examples() {
    // A = 0, B = 0, P1 = I
    let sys = DiscreteLtiSystem::new(Matrix::zeros(2, 2), Matrix::zeros(2, 1), Matrix::zeros(1, 2)).unwrap();
    let psi = build_psi(&SymMatrix::identity(2), &SymMatrix::zeros(2), &SymMatrix::identity(1), &sys).unwrap();
    let minus_i = -Matrix::identity(2, 2);
    let expected = crate::matops::block2(&minus_i, &minus_i, &minus_i, &minus_i);
    assert_relative_eq!(*psi.as_matrix(), expected);

    // scalar a = 0.5, b = 1, q = 1, P1 = 2, Z = 1
    let sys = scalar_sys(0.5, 1.0, 1.0);
    let psi = build_psi(
        &SymMatrix::from_diagonal(&[2.0]),
        &SymMatrix::from_diagonal(&[1.0]),
        &SymMatrix::identity(1),
        &sys,
    )
    .unwrap();
    assert_relative_eq!(
        *psi.as_matrix(),
        Matrix::from_row_slice(2, 2, &[-0.5, -0.75, -0.75, -0.75]),
        epsilon = 1e-15
    );

    // Z = P1 makes all blocks equal
    let sys = four_state_system();
    let p1 = SymMatrix::identity(4).add(&SymMatrix::from_diagonal(&[0.3, 0.1, 0.0, 0.2]));
    let psi = build_psi(&p1, &p1, &SymMatrix::identity(2), &sys).unwrap();
    let tl = psi.as_matrix().view((0, 0), (4, 4)).clone_owned();
    for (i, j) in [(0, 4), (4, 0), (4, 4)] {
        assert_relative_eq!(psi.as_matrix().view((i, j), (4, 4)).clone_owned(), tl, epsilon = 1e-15);
    }

    assert!(matches!(
        build_psi(&SymMatrix::identity(3), &SymMatrix::zeros(4), &SymMatrix::identity(2), &sys),
        Err(ReductionError::DimensionMismatch(_))
    ));
}

#[test]
fn literal_psi_has_a_nonnegative_direction() {
    // [x; -x]ᵀ Ψ [x; -x] = xᵀ A (P1 - Z) Aᵀ x for any P1, Z
    let sys = four_state_system();
    let p1 = SymMatrix::from_diagonal(&[2.0, 1.5, 1.0, 0.7]);
    let z = SymMatrix::from_diagonal(&[1.0, 0.5, 0.0, 0.0]);
    let psi = build_psi(&p1, &z, &SymMatrix::identity(2), &sys).unwrap();
    let x = nalgebra::DVector::from_vec(vec![0.3, -0.2, 0.9, 0.1]);
    let mut v = nalgebra::DVector::zeros(8);
    v.rows_mut(0, 4).copy_from(&x);
    v.rows_mut(4, 4).copy_from(&(-&x));
    let lhs = (v.transpose() * psi.as_matrix() * &v)[(0, 0)];
    let ax = sys.a().transpose() * &x;
    let rhs = (ax.transpose() * p1.sub(&z).as_matrix() * &ax)[(0, 0)];
    assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
    assert!(psi.max_eigenvalue() >= 0.0);
}

#[test]
fn literal_form_is_reported_infeasible() {
    let sys = four_state_system();
    let opts = ReductionOptions {
        form: LmiForm::Literal,
        ..no_canonical()
    };
    let err = solve_dromor_sdp(&sys, &SymMatrix::from_diagonal(&[0.01, 1.0]), 2, &opts).unwrap_err();
    assert!(err.is_infeasible(), "{err:?}");
}

#[test]
fn unstable_system_is_rejected_before_solving() {
    let sys = scalar_sys(1.2, 1.0, 1.0);
    let sys2 = DiscreteLtiSystem::new(
        Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]),
        Matrix::identity(2, 2),
        Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
    )
    .unwrap();
    assert!(matches!(sys.require_stable(), Err(ReductionError::Unstable { .. })));
    let err = solve_dromor_sdp(&sys2, &SymMatrix::identity(2), 1, &no_canonical()).unwrap_err();
    assert!(matches!(err, ReductionError::Unstable { .. }));
    let err = reduce_certain(&sys2, &SymMatrix::identity(2), 1, &no_canonical()).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Validation));
    assert!(matches!(err.root(), ReductionError::Unstable { .. }));
}

#[test]
fn order_is_validated() {
    let sys = four_state_system();
    let ball = GelbrichBall::new(SymMatrix::identity(2), 1.0).unwrap();
    assert!(matches!(
        AmbiguousReductionProblem::new(sys.clone(), ball.clone(), 4),
        Err(ReductionError::InvalidOrder { r: 4, n: 4 })
    ));
    assert!(AmbiguousReductionProblem::new(sys.clone(), ball, 0).is_err());
    let ball3 = GelbrichBall::new(SymMatrix::identity(3), 1.0).unwrap();
    assert!(matches!(
        AmbiguousReductionProblem::new(sys, ball3, 2),
        Err(ReductionError::DimensionMismatch(_))
    ));
}

#[test]
fn recovery_with_identity_factors_truncates() {
    let sys = four_state_system();
    let model = recover_reduced(&SymMatrix::identity(4), &SymMatrix::identity(2), &sys, 2).unwrap();
    assert_relative_eq!(model.a_hat, sys.a().view((0, 0), (2, 2)).clone_owned(), epsilon = 1e-15);
    assert_relative_eq!(model.b_hat, sys.b().rows(0, 2).clone_owned(), epsilon = 1e-15);
    assert_relative_eq!(model.c_hat, sys.c().columns(0, 2).clone_owned(), epsilon = 1e-15);
    let f = model.factors.unwrap();
    assert_relative_eq!(f.p2.transpose() * &f.p2, Matrix::identity(2, 2), epsilon = 1e-10);
}

#[test]
fn recovery_reconstructs_z() {
    let sys = four_state_system();
    let z1 = SymMatrix::from_row_slice(2, &[0.8, 0.3, 0.3, 0.5]).unwrap();
    let p1 = SymMatrix::from_diagonal(&[2.0, 2.0, 1.0, 1.0]);
    let model = recover_reduced(&p1, &z1, &sys, 2).unwrap();
    let f = model.factors.as_ref().unwrap();
    let z = &f.p2 * f.p3.as_matrix().clone().try_inverse().unwrap() * f.p2.transpose();
    let mut target = Matrix::zeros(4, 4);
    target.view_mut((0, 0), (2, 2)).copy_from(z1.as_matrix());
    assert!(max_abs(&(z - target)) < 1e-10);
    assert_relative_eq!(f.p2.transpose() * &f.p2, Matrix::identity(2, 2), epsilon = 1e-10);

    let (a, b, c) = reduced_matrices(&f.p1, &f.p2, &f.p3, &sys).unwrap();
    assert_relative_eq!(a, model.a_hat, epsilon = 1e-12);
    assert_relative_eq!(b, model.b_hat, epsilon = 1e-12);
    assert_relative_eq!(c, model.c_hat, epsilon = 1e-12);
}

#[test]
fn recovery_rejects_rank_deficient_z1() {
    let sys = four_state_system();
    let z1 = SymMatrix::from_diagonal(&[1.0, 1e-12]);
    let err = recover_reduced(&SymMatrix::identity(4), &z1, &sys, 2).unwrap_err();
    assert!(matches!(err, ReductionError::RankDeficient { .. }));
}

#[test]
fn char_poly_of_companion_matrix() {
    // (z - 0.5)(z + 0.2)(z - 0.1) = z³ - 0.4 z² - 0.07 z + 0.01
    let a = Matrix::from_row_slice(3, 3, &[0.4, 1.0, 0.0, 0.07, 0.0, 1.0, -0.01, 0.0, 0.0]);
    let coeffs = canonical::char_poly(&a);
    for (c, e) in coeffs.iter().zip([-0.4, -0.07, 0.01]) {
        assert_relative_eq!(*c, e, epsilon = 1e-12);
    }
}

#[test]
fn canonical_form_of_canonical_input_is_identity() {
    let a = Matrix::from_row_slice(3, 3, &[0.4, 1.0, 0.0, 0.07, 0.0, 1.0, -0.01, 0.0, 0.0]);
    let sys = DiscreteLtiSystem::new(
        a,
        Matrix::from_row_slice(3, 1, &[1.0, 0.5, 0.2]),
        Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
    )
    .unwrap();
    let (same, t) = to_observable_canonical(&sys).unwrap();
    assert_relative_eq!(t, Matrix::identity(3, 3), epsilon = 1e-12);
    assert_relative_eq!(same.a(), sys.a(), epsilon = 1e-12);
}

#[test]
fn canonical_form_preserves_markov_parameters() {
    let sys = four_state_system();
    let (can, _) = to_observable_canonical(&sys).unwrap();
    for (x, y) in sys.markov_parameters(9).iter().zip(can.markov_parameters(9)) {
        assert!(max_abs(&(x - y)) < 1e-8);
    }
    // C' = e₁ᵀ and A' is zero apart from its first column and the superdiagonal of ones
    assert_relative_eq!(can.c().clone(), Matrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]), epsilon = 1e-12);
    for i in 0..4 {
        for j in 1..4 {
            let expected = if j == i + 1 { 1.0 } else { 0.0 };
            assert!((can.a()[(i, j)] - expected).abs() < 1e-10, "A'[{i},{j}] = {}", can.a()[(i, j)]);
        }
    }
}

#[test]
fn canonical_form_multi_output() {
    let a = Matrix::from_fn(5, 5, |i, j| {
        if i == j {
            0.1 * (i + 1) as f64
        } else {
            0.05 * ((i * 5 + j) as f64 * 0.7).sin()
        }
    });
    let b = Matrix::from_fn(5, 2, |i, j| ((i + j) as f64).cos());
    let c = Matrix::from_fn(2, 5, |i, j| ((i * 3 + j) as f64 * 1.3).sin());
    let sys = DiscreteLtiSystem::new(a, b, c).unwrap();
    let (can, t) = to_observable_canonical(&sys).unwrap();
    for (x, y) in sys.markov_parameters(11).iter().zip(can.markov_parameters(11)) {
        assert!(max_abs(&(x - y)) < 1e-8);
    }
    // orthogonal staircase: C' = [C₁ 0], A' block lower Hessenberg
    assert_relative_eq!(&t * t.transpose(), Matrix::identity(5, 5), epsilon = 1e-12);
    assert!(max_abs(&can.c().columns(2, 3).clone_owned()) < 1e-12);
    assert!(max_abs(&can.a().view((0, 4), (2, 1)).clone_owned()) < 1e-12);
}

#[test]
fn unobservable_pairs_are_rejected() {
    let sys = DiscreteLtiSystem::new(four_state_system().a().clone(), four_state_system().b().clone(), Matrix::zeros(1, 4)).unwrap();
    assert!(matches!(to_observable_canonical(&sys), Err(ReductionError::Unobservable { rank: 0, n: 4 })));
    assert_eq!(observability_rank(&two_state()), 1);
    let err = reduce_certain(&two_state(), &SymMatrix::identity(2), 1, &ReductionOptions::default()).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Canonical));
}

fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> Vec<f64> {
    let d = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = (0..=d)
        .map(|i| {
            let mut x = x0.to_vec();
            if i > 0 {
                x[i - 1] += step * x[i - 1].abs().max(0.1);
            }
            let fx = f(&x);
            (x, fx)
        })
        .collect();
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|p| p.0[k]).sum::<f64>() / d as f64)
            .collect();
        let worst = simplex[d].clone();
        let refl = lerp(&centroid, &worst.0, -1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = lerp(&centroid, &worst.0, -2.0);
            let fe = f(&exp);
            simplex[d] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (refl, fr);
        } else {
            let con = lerp(&centroid, &worst.0, 0.5);
            let fc = f(&con);
            if fc < worst.1 {
                simplex[d] = (con, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    p.0 = lerp(&best, &p.0, 0.5);
                    p.1 = f(&p.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}

/// Log-barrier path over `(P₁ entries, Z₁, ln λ)` minimizing `tr(C (P₁ - Z) Cᵀ)`
/// subject to the same strict constraints as the program, each inner problem
/// solved by Nelder-Mead. `tr P₁` is capped to keep the barrier bounded below.
/// Returns a feasible objective value.
fn barrier_oracle(sys: &DiscreteLtiSystem, q: &SymMatrix, eps: f64) -> f64 {
    const TRACE_CAP: f64 = 100.0;
    let parts = |x: &[f64]| -> Option<(f64, f64)> {
        let p1 = SymMatrix::from_row_slice(2, &[x[0], x[1], x[1], x[2]]).ok()?;
        let z = SymMatrix::from_diagonal(&[x[3], 0.0]);
        let l = build_sufficient_lmi(&p1, &z, q, sys, x[4].exp()).ok()?;
        let mut logs = 0.0;
        for m in [&p1, &p1.sub(&z), &l, &SymMatrix::from_diagonal(&[x[3]])] {
            for v in crate::matops::sym_eig(m).ok()?.values.iter() {
                if *v <= eps {
                    return None;
                }
                logs += (v - eps).ln();
            }
        }
        let room = TRACE_CAP - x[0] - x[2];
        if room <= 0.0 {
            return None;
        }
        logs += room.ln();
        let gamma = (sys.c() * p1.sub(&z).as_matrix() * sys.c().transpose()).trace();
        Some((gamma, logs))
    };
    let mut x = vec![10.0, 0.0, 10.0, 1.0, 0.5f64.ln()];
    assert!(parts(&x).is_some(), "starting point is feasible");
    let mut mu = 1.0;
    while mu > 1e-10 {
        let f = |y: &[f64]| parts(y).map_or(f64::INFINITY, |(g, l)| g - mu * l);
        for _ in 0..3 {
            x = nelder_mead(&f, &x, 0.2, 3000);
        }
        mu *= 0.2;
    }
    parts(&x).unwrap().0
}

#[test]
fn lossy_two_state_bound_matches_barrier_oracle() {
    let sys = DiscreteLtiSystem::new(
        Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.3]),
        Matrix::identity(2, 2),
        Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
    )
    .unwrap();
    let q = SymMatrix::identity(2);
    let opts = no_canonical();
    let sol = solve_dromor_sdp(&sys, &q, 1, &opts).unwrap();
    let oracle = barrier_oracle(&sys, &q, opts.epsilon);
    assert!(
        (sol.gamma - oracle).abs() <= 0.05 * oracle,
        "sdp {} vs oracle {oracle}",
        sol.gamma
    );
}

#[test]
fn two_state_observable_part_is_captured() {
    // only the first state is observable, so a first-order model is exact
    let sol = solve_dromor_sdp(&two_state(), &SymMatrix::identity(2), 1, &no_canonical()).unwrap();
    assert!(sol.gamma < 1e-4, "gamma = {}", sol.gamma);
    let model = recover_reduced(&sol.p1, &sol.z1, &two_state(), 1).unwrap();
    assert_relative_eq!(model.a_hat[(0, 0)], 0.5, epsilon = 1e-3);
}

#[test]
fn four_state_robust_reduction() {
    let sys = four_state_system();
    let ball = GelbrichBall::new(SymMatrix::from_diagonal(&[0.01, 1.0]), 2.0).unwrap();
    let prob = AmbiguousReductionProblem::new(sys, ball, 2).unwrap();
    let (model, cert) = reduce_robust(&prob, &ReductionOptions::default()).unwrap();
    assert!(model.spectral_radius() < 1.0);
    assert!(cert.gamma_tilde_star > 0.0 && cert.gamma_tilde_star.is_finite());
    assert!(cert.trace_slack >= -1e-8);
    assert!(cert.lmi_min_eig.unwrap() >= cert.epsilon / 2.0);
    assert_relative_eq!(cert.beta_star, 4.842_534_08, max_relative = 1e-6);
    assert_relative_eq!(cert.q_eff.as_matrix()[(0, 0)], 0.01 + cert.beta_star);
}

#[test]
fn zero_radius_matches_certain_reduction() {
    let sys = four_state_system();
    let qbar = SymMatrix::from_diagonal(&[0.01, 1.0]);
    let ball = GelbrichBall::new(qbar.clone(), 0.0).unwrap();
    let prob = AmbiguousReductionProblem::new(sys.clone(), ball, 2).unwrap();
    let opts = ReductionOptions::default();
    let (m1, c1) = reduce_robust(&prob, &opts).unwrap();
    let (m2, c2) = reduce_certain(&sys, &qbar, 2, &opts).unwrap();
    assert_eq!(c1, c2);
    assert_eq!(m1, m2);
}

#[test]
fn fixed_lambda_is_an_upper_bound_on_search() {
    let sys = four_state_system();
    let q = SymMatrix::from_diagonal(&[0.01, 1.0]);
    let searched = solve_dromor_sdp(&sys, &q, 2, &no_canonical()).unwrap();
    let fixed = solve_dromor_sdp(
        &sys,
        &q,
        2,
        &ReductionOptions {
            form: LmiForm::Sufficient(LambdaChoice::Fixed(0.4)),
            ..no_canonical()
        },
    )
    .unwrap();
    assert!(searched.gamma <= fixed.gamma * (1.0 + 1e-9));
    assert!(searched.solves > 1);
    assert_eq!(fixed.solves, 1);
}

fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let x = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::symmetrize(&x * x.transpose()).add_identity(0.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_is_monotone_in_covariance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = four_state_system();
        let p1 = random_pd(4, &mut rng);
        let z = random_pd(4, &mut rng);
        let small = random_pd(2, &mut rng);
        let big = small.add(&random_pd(2, &mut rng));
        let lo = build_psi(&p1, &z, &small, &sys).unwrap();
        let hi = build_psi(&p1, &z, &big, &sys).unwrap();
        prop_assert!(hi.sub(&lo).min_eigenvalue() >= -1e-12);
    }
}
