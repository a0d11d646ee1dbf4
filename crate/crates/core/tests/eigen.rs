mod support;

use proptest::prelude::*;
use rsg_core::eigen::{
    collatz_wielandt_bounds, principal_eigenpair, principal_eigenpair_from, Bracket, EigenMethod,
    EigenOptions,
};
use rsg_core::{
    build_grid, discretize, Error, GameModel, GridGame, MarkovStrategy, Player, StencilMatrix,
};
use support::oracle::{cosine, dense_perron};

/// Irreducible Metzler matrix of order `n`: a positive tridiagonal skeleton,
/// extra couplings from `extra` and the diagonal from `diag`.
fn metzler(n: usize, diag: &[f64], links: &[f64], extra: &[(usize, usize, f64)]) -> StencilMatrix {
    let rows = (0..n)
        .map(|i| {
            let mut row = vec![(i, diag[i % diag.len()])];
            if i > 0 {
                row.push((i - 1, links[(2 * i) % links.len()]));
            }
            if i + 1 < n {
                row.push((i + 1, links[(2 * i + 1) % links.len()]));
            }
            for &(a, b, v) in extra {
                if a % n == i && b % n != i {
                    row.push((b % n, v));
                }
            }
            row
        })
        .collect();
    StencilMatrix::from_rows(rows).unwrap()
}

fn metzler_strategy() -> impl Strategy<Value = StencilMatrix> {
    (
        2usize..60,
        prop::collection::vec(-8.0f64..4.0, 1..60),
        prop::collection::vec(0.05f64..3.0, 1..120),
        prop::collection::vec((0usize..60, 0usize..60, 0.0f64..1.0), 0..20),
    )
        .prop_map(|(n, d, l, e)| metzler(n, &d, &l, &e))
}

fn methods() -> [EigenOptions; 2] {
    [EigenOptions::default(), EigenOptions::power(1e-10, 200_000)]
}

fn sup_norm_diff(m: &StencilMatrix, lambda: f64, psi: &[f64]) -> f64 {
    let mut y = vec![0.0; psi.len()];
    m.mul_vec(psi, &mut y);
    let top = psi.iter().fold(0.0f64, |a, &b| a.max(b));
    y.iter()
        .zip(psi)
        .map(|(y, p)| (y - lambda * p).abs())
        .fold(0.0, f64::max)
        / top
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_dense_oracle(m in metzler_strategy()) {
        let (lambda, vector) = dense_perron(&m);
        for opts in methods() {
            let e = match principal_eigenpair(&m, 0, &opts) {
                Ok(e) => e,
                // Plain power iteration may stall on a tiny spectral gap; the
                // bracket it gives up with must still hold the eigenvalue.
                Err(Error::NoConvergence { lo, hi, .. }) if opts.method == EigenMethod::Power => {
                    prop_assert!(lo <= lambda + 1e-12 * (1.0 + lambda.abs()));
                    prop_assert!(lambda <= hi + 1e-12 * (1.0 + lambda.abs()));
                    continue;
                }
                Err(e) => return Err(TestCaseError::fail(format!("{:?}: {e}", opts.method))),
            };
            prop_assert!((e.lambda - lambda).abs() <= 1e-9 * (1.0 + lambda.abs()), "{:?}: {} vs {}", opts.method, e.lambda, lambda);
            prop_assert!(e.psi.iter().all(|&p| p > 0.0));
            prop_assert_eq!(e.psi[0], 1.0);
            prop_assert!(cosine(&e.psi, &vector).abs() >= 1.0 - 1e-8);
            prop_assert!(e.lower <= e.lambda && e.lambda <= e.upper);
            prop_assert!(e.upper - e.lower <= opts.tol * (1.0 + e.lambda.abs()));
            prop_assert!((e.residual - sup_norm_diff(&m, e.lambda, &e.psi)).abs() <= 1e-9 * (1.0 + e.lambda.abs()));
        }
    }

    #[test]
    fn shift_moves_eigenvalue_and_keeps_vector(m in metzler_strategy(), s in -5.0f64..5.0) {
        let opts = EigenOptions::default();
        let a = principal_eigenpair(&m, 0, &opts).unwrap();
        let b = principal_eigenpair(&m.shifted(s), 0, &opts).unwrap();
        let scale = 1.0 + a.lambda.abs() + s.abs() + m.max_abs_diag();
        prop_assert!((b.lambda - (a.lambda + s)).abs() <= 1e-9 * scale);
        prop_assert!(cosine(&a.psi, &b.psi) >= 1.0 - 1e-8);
    }

    #[test]
    fn restart_from_eigenvector_is_stationary(m in metzler_strategy()) {
        let opts = EigenOptions::default();
        let a = principal_eigenpair(&m, 0, &opts).unwrap();
        let b = principal_eigenpair_from(&m, 0, Some(&a.psi), &opts, &mut |_| {}).unwrap();
        prop_assert!((a.lambda - b.lambda).abs() <= 1e-9 * (1.0 + a.lambda.abs()));
        prop_assert!(b.iterations <= a.iterations);
        prop_assert!(cosine(&a.psi, &b.psi) >= 1.0 - 1e-10);
    }

    #[test]
    fn bracket_never_widens(m in metzler_strategy()) {
        for opts in methods() {
            let mut seen: Vec<Bracket> = Vec::new();
            // Stalled power runs still report their brackets.
            let _ = principal_eigenpair_from(&m, 0, None, &opts, &mut |b| seen.push(*b));
            let scale = 1.0 + m.max_abs_diag();
            for w in seen.windows(2) {
                prop_assert!(w[1].lo >= w[0].lo - 1e-12 * scale, "{:?}", w);
                prop_assert!(w[1].hi <= w[0].hi + 1e-12 * scale, "{:?}", w);
            }
        }
    }

    #[test]
    fn collatz_wielandt_encloses_any_positive_vector(
        m in metzler_strategy(),
        raw in prop::collection::vec(0.01f64..10.0, 60),
    ) {
        let psi: Vec<f64> = raw[..m.n()].to_vec();
        let (lambda, _) = dense_perron(&m);
        let (lo, hi) = collatz_wielandt_bounds(&m, &psi).unwrap();
        let slack = 1e-10 * (1.0 + lambda.abs());
        prop_assert!(lo <= lambda + slack && lambda <= hi + slack, "{} not in [{}, {}]", lambda, lo, hi);
    }
}

fn laplacian(radius: f64, h: f64) -> (GridGame<'static>, StencilMatrix) {
    let model: &'static GameModel = Box::leak(Box::new(
        GameModel::builder(1)
            .drift(Player::One, ["0"])
            .sigma(["1"])
            .cost(Player::One, Player::One, "0")
            .build()
            .unwrap(),
    ));
    let game = GridGame::new(build_grid(1, radius, h).unwrap(), model).unwrap();
    let v1 = MarkovStrategy::uniform(Player::One, game.grid(), 1);
    let v2 = MarkovStrategy::uniform(Player::Two, game.grid(), 1);
    let m = discretize(&game, Player::One, &v1, &v2).unwrap();
    (game, m)
}

#[test]
fn discrete_laplacian_matches_closed_form_and_dense() {
    let (radius, h) = (1.0, 0.01);
    let (game, m) = laplacian(radius, h);
    let cells = (2.0 * radius / h).round();
    // a = 1/2, eigenvalue -(4a/h^2) sin^2(pi / (2 cells)).
    let exact = -(2.0 / (h * h)) * (std::f64::consts::PI / (2.0 * cells)).sin().powi(2);
    let (dense, _) = dense_perron(&m);
    let e =
        principal_eigenpair(&m, game.grid().origin_interior(), &EigenOptions::default()).unwrap();
    assert!(
        (e.lambda - dense).abs() <= 1e-8,
        "{} vs dense {}",
        e.lambda,
        dense
    );
    assert!(
        (e.lambda - exact).abs() <= 1e-8,
        "{} vs closed form {}",
        e.lambda,
        exact
    );
    assert!((exact + std::f64::consts::PI.powi(2) / 8.0).abs() < 1e-3);

    // The eigenvector is cos(pi x / 2R) sampled on the grid.
    for (k, &node) in game.grid().interior_nodes().iter().enumerate() {
        let x = game.grid().coords(node)[0];
        let want = (std::f64::consts::PI * x / (2.0 * radius)).cos();
        assert!((e.psi[k] - want).abs() < 1e-7, "x = {x}");
    }
}

#[test]
fn power_and_shift_invert_agree_on_laplacian() {
    let (game, m) = laplacian(1.0, 0.05);
    let x0 = game.grid().origin_interior();
    let a = principal_eigenpair(&m, x0, &EigenOptions::default()).unwrap();
    let b = principal_eigenpair(&m, x0, &EigenOptions::power(1e-10, 5_000_000)).unwrap();
    assert_eq!(EigenOptions::default().method, EigenMethod::ShiftInvert);
    assert!((a.lambda - b.lambda).abs() < 1e-9);
    assert!(b.iterations > a.iterations);
}

#[test]
fn rejects_non_positive_vectors() {
    let (_, m) = laplacian(1.0, 0.25);
    assert!(collatz_wielandt_bounds(&m, &[1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    assert!(collatz_wielandt_bounds(&m, &[1.0, 1.0]).is_err());
}
