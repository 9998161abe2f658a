//! Fixtures shared by the pipeline benchmarks.

use dromor::{DiscreteLtiSystem, GelbrichBall, Matrix, SymMatrix};

/// Four-state, two-input, single-output test system.
pub fn four_state() -> DiscreteLtiSystem {
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
    .expect("fixture dimensions agree")
}

pub fn four_state_ball() -> GelbrichBall {
    GelbrichBall::new(SymMatrix::from_diagonal(&[0.01, 1.0]), 2.0).expect("valid ball")
}

/// Stable `n`-state chain: `0.9` on the diagonal, `0.3` on the superdiagonal,
/// one input into every state, output from the first.
pub fn chain(n: usize) -> DiscreteLtiSystem {
    let a = Matrix::from_fn(n, n, |i, j| match j as isize - i as isize {
        0 => 0.9 - 0.3 * i as f64 / n as f64,
        1 => 0.3,
        _ => 0.0,
    });
    let b = Matrix::from_element(n, 1, 1.0);
    let mut c = Matrix::zeros(1, n);
    c[(0, 0)] = 1.0;
    DiscreteLtiSystem::new(a, b, c).expect("fixture dimensions agree")
}
