//! Nash equilibria in stationary Markov strategies by damped simultaneous best
//! response, and verification by unilateral deviations.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eigen::{EigenOptions, EigenPair};
use crate::error::{Error, Result};
use crate::grid::GridGame;
use crate::hjb::{
    frozen_eigenpair, semilinear_residual, solve_semilinear_eigen, SemilinearSolveReport,
    SolveOptions,
};
use crate::math;
use crate::model::{MarkovStrategy, Player};

/// Starting strategies for [`find_nash`].
#[derive(Debug, Clone, PartialEq)]
pub enum NashInit {
    Uniform,
    /// Node-wise random mixtures drawn from the given seed.
    Random(u64),
    Given(MarkovStrategy, MarkovStrategy),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashOptions {
    pub solve: SolveOptions,
    /// Weight of the best response in the damped update, in `(0, 1]`.
    pub damping: f64,
    pub tol_strategy: f64,
    pub tol_res: f64,
    pub max_iter: usize,
    pub init: NashInit,
}

impl Default for NashOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            damping: 0.5,
            tol_strategy: 1e-8,
            tol_res: 1e-6,
            max_iter: 200,
            init: NashInit::Uniform,
        }
    }
}

/// Both best responses to a strategy pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub v1: MarkovStrategy,
    pub v2: MarkovStrategy,
    pub reports: [SemilinearSolveReport; 2],
}

/// One outer step of [`find_nash`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NashIterate {
    pub iteration: usize,
    /// Best-response values of the two players at this step.
    pub lambda1: f64,
    pub lambda2: f64,
    /// Sup-norm change of the strategy pair.
    pub change: f64,
    /// Whether the step ended on an exact pure fixed point.
    pub snapped: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NashReport {
    pub v1: MarkovStrategy,
    pub v2: MarkovStrategy,
    /// Frozen-pair eigenpairs of both players at `(v1, v2)`.
    pub eigen: [EigenPair; 2],
    /// Coupled-HJB residuals per player.
    pub residuals: [f64; 2],
    pub trace: Vec<NashIterate>,
    pub converged: bool,
    pub cycle_detected: bool,
}

impl NashReport {
    pub fn lambda(&self, p: Player) -> f64 {
        self.eigen[p.index()].lambda
    }

    pub fn strategy(&self, p: Player) -> &MarkovStrategy {
        match p {
            Player::One => &self.v1,
            Player::Two => &self.v2,
        }
    }
}

/// Simultaneous best responses: each player's optimal strategy against the
/// other player's *input* strategy. The inputs serve as warm starts.
pub fn best_response_map(
    game: &GridGame<'_>,
    v1: &MarkovStrategy,
    v2: &MarkovStrategy,
    opts: &SolveOptions,
) -> Result<BestResponse> {
    let r1 = solve_semilinear_eigen(game, Player::One, v2, Some(v1), opts)?;
    let r2 = solve_semilinear_eigen(game, Player::Two, v1, Some(v2), opts)?;
    Ok(BestResponse {
        v1: r1.strategy.clone(),
        v2: r2.strategy.clone(),
        reports: [r1, r2],
    })
}

/// Coupled-HJB residual of player `i` at the pair `(v1, v2)`.
pub fn hjb_residual(
    game: &GridGame<'_>,
    v1: &MarkovStrategy,
    v2: &MarkovStrategy,
    eigen: &EigenPair,
    i: Player,
) -> Result<f64> {
    let opponent = match i {
        Player::One => v2,
        Player::Two => v1,
    };
    semilinear_residual(game, i, opponent, eigen)
}

fn random_strategy(
    player: Player,
    game: &GridGame<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<MarkovStrategy> {
    let m = game.action_count(player);
    let n = game.grid().node_count();
    let mut probs = Vec::with_capacity(n * m);
    for _ in 0..n {
        let start = probs.len();
        let mut total = 0.0;
        for _ in 0..m {
            let w: f64 = rng.random::<f64>() + 1e-3;
            total += w;
            probs.push(w);
        }
        probs[start..].iter_mut().for_each(|w| *w /= total);
    }
    MarkovStrategy::from_mixtures(player, game.grid(), m, probs)
}

fn initial_pair(game: &GridGame<'_>, init: &NashInit) -> Result<(MarkovStrategy, MarkovStrategy)> {
    let grid = game.grid();
    match init {
        NashInit::Uniform => Ok((
            MarkovStrategy::uniform(Player::One, grid, game.action_count(Player::One)),
            MarkovStrategy::uniform(Player::Two, grid, game.action_count(Player::Two)),
        )),
        NashInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let v1 = random_strategy(Player::One, game, &mut rng)?;
            let v2 = random_strategy(Player::Two, game, &mut rng)?;
            Ok((v1, v2))
        }
        NashInit::Given(v1, v2) => {
            for (p, v) in [(Player::One, v1), (Player::Two, v2)] {
                v.validate(grid)?;
                if v.player() != p || v.action_count() != game.action_count(p) {
                    return Err(Error::InvalidStrategy(format!(
                        "initial strategy does not fit player {}",
                        p.number()
                    )));
                }
            }
            Ok((v1.clone(), v2.clone()))
        }
    }
}

fn cycle_key(lambda1: f64, lambda2: f64) -> (i64, i64) {
    (
        math::round(lambda1 * 1e9) as i64,
        math::round(lambda2 * 1e9) as i64,
    )
}

/// Damped best-response iteration
/// `v <- (1 - omega) v + omega BR(v)`.
///
/// When two consecutive best responses coincide and are a fixed point of the
/// best-response map, the iterate jumps to that pure pair. Non-convergence is
/// reported through `converged = false`, not as an error.
pub fn find_nash(game: &GridGame<'_>, opts: &NashOptions) -> Result<NashReport> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping {} outside (0, 1]",
            opts.damping
        )));
    }
    let (mut v1, mut v2) = initial_pair(game, &opts.init)?;
    let mut trace: Vec<NashIterate> = Vec::new();
    let mut keys: Vec<(i64, i64)> = Vec::new();
    let mut cycle_detected = false;
    let mut previous: Option<(MarkovStrategy, MarkovStrategy)> = None;
    let mut settled = false;

    for iteration in 0..opts.max_iter {
        let br = best_response_map(game, &v1, &v2, &opts.solve)?;
        let (l1, l2) = (br.reports[0].eigen.lambda, br.reports[1].eigen.lambda);
        let repeated = previous
            .as_ref()
            .is_some_and(|(p1, p2)| *p1 == br.v1 && *p2 == br.v2);
        let mut snapped = false;
        let (n1, n2) = if br.v1 == v1 && br.v2 == v2 {
            snapped = true;
            (br.v1.clone(), br.v2.clone())
        } else if repeated {
            let check = best_response_map(game, &br.v1, &br.v2, &opts.solve)?;
            if check.v1 == br.v1 && check.v2 == br.v2 {
                snapped = true;
                (br.v1.clone(), br.v2.clone())
            } else {
                (
                    v1.blend(&br.v1, opts.damping),
                    v2.blend(&br.v2, opts.damping),
                )
            }
        } else {
            (
                v1.blend(&br.v1, opts.damping),
                v2.blend(&br.v2, opts.damping),
            )
        };
        debug_assert!(n1.validate(game.grid()).is_ok() && n2.validate(game.grid()).is_ok());
        let change = n1.sup_distance(&v1).max(n2.sup_distance(&v2));
        trace.push(NashIterate {
            iteration,
            lambda1: l1,
            lambda2: l2,
            change,
            snapped,
        });

        let key = cycle_key(l1, l2);
        let k = keys.len();
        if k >= 2 && keys[k - 2] == key && keys[k - 1] != key {
            cycle_detected = true;
        }
        keys.push(key);

        v1 = n1;
        v2 = n2;
        previous = Some((br.v1, br.v2));
        if change <= opts.tol_strategy {
            settled = true;
            break;
        }
    }

    let e1 = frozen_eigenpair(game, Player::One, &v1, &v2, None, &opts.solve.eigen)?;
    let e2 = frozen_eigenpair(game, Player::Two, &v1, &v2, None, &opts.solve.eigen)?;
    let residuals = [
        hjb_residual(game, &v1, &v2, &e1, Player::One)?,
        hjb_residual(game, &v1, &v2, &e2, Player::Two)?,
    ];
    let converged = settled && residuals.iter().all(|&r| r <= opts.tol_res);
    Ok(NashReport {
        v1,
        v2,
        eigen: [e1, e2],
        residuals,
        trace,
        converged,
        cycle_detected,
    })
}

/// Principal eigenvalue of one player under a unilateral deviation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviationEntry {
    pub player: Player,
    pub id: String,
    pub lambda: f64,
    pub equilibrium_lambda: f64,
}

impl DeviationEntry {
    /// Amount by which the deviation lowers the player's cost (positive is bad).
    pub fn gain(&self) -> f64 {
        self.equilibrium_lambda - self.lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviationTable {
    pub tol_dev: f64,
    pub entries: Vec<DeviationEntry>,
}

impl DeviationTable {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.gain() <= self.tol_dev)
    }

    pub fn worst_gain(&self) -> f64 {
        self.entries
            .iter()
            .map(DeviationEntry::gain)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Deviations to test in [`verify_nash`].
#[derive(Debug, Clone, PartialEq)]
pub enum Deviations {
    /// `count` seeded random Dirac strategies per player.
    Random {
        count: usize,
        seed: u64,
    },
    Given(Vec<MarkovStrategy>),
}

fn random_dirac(
    player: Player,
    game: &GridGame<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<MarkovStrategy> {
    let m = game.action_count(player);
    let choices: Vec<usize> = (0..game.grid().node_count())
        .map(|_| rng.random_range(0..m))
        .collect();
    MarkovStrategy::pure(player, game.grid(), m, &choices)
}

/// Frozen-pair eigenvalues under unilateral deviations from `report`.
///
/// Returns [`Error::NashViolation`] with the full table when a deviation lowers
/// a player's eigenvalue by more than `tol_dev`.
pub fn verify_nash(
    game: &GridGame<'_>,
    report: &NashReport,
    deviations: &Deviations,
    tol_dev: f64,
    eigen: &EigenOptions,
) -> Result<DeviationTable> {
    let mut list: Vec<(String, MarkovStrategy)> = Vec::new();
    match deviations {
        Deviations::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for p in Player::BOTH {
                for k in 0..*count {
                    list.push((
                        format!("p{}-random-{k}", p.number()),
                        random_dirac(p, game, &mut rng)?,
                    ));
                }
            }
        }
        Deviations::Given(given) => {
            for (k, s) in given.iter().enumerate() {
                list.push((format!("p{}-given-{k}", s.player().number()), s.clone()));
            }
        }
    }
    let mut entries = Vec::with_capacity(list.len());
    for (id, s) in list {
        let p = s.player();
        let e = match p {
            Player::One => frozen_eigenpair(game, p, &s, &report.v2, None, eigen)?,
            Player::Two => frozen_eigenpair(game, p, &report.v1, &s, None, eigen)?,
        };
        entries.push(DeviationEntry {
            player: p,
            id,
            lambda: e.lambda,
            equilibrium_lambda: report.lambda(p),
        });
    }
    let table = DeviationTable { tol_dev, entries };
    if table.passed() {
        Ok(table)
    } else {
        Err(Error::NashViolation(Box::new(table)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::model::GameModel;
    use alloc::vec;

    fn decoupled() -> GameModel {
        GameModel::builder(1)
            .actions(Player::One, [("l", vec![-1.0]), ("r", vec![1.0])])
            .actions(Player::Two, [("lo", vec![0.0]), ("hi", vec![1.0])])
            .drift(Player::One, ["-x0 + 0.3*a0"])
            .sigma(["1"])
            .cost(Player::One, Player::One, "0.1*x0^2 + 0.05*(x0 - a0)^2")
            .cost(Player::Two, Player::Two, "0.2 + 0.1*a0")
            .build()
            .unwrap()
    }

    #[test]
    fn single_action_converges_at_once() {
        let model = GameModel::builder(1)
            .drift(Player::One, ["-x0"])
            .sigma(["1"])
            .cost(Player::One, Player::One, "0.3")
            .cost(Player::Two, Player::Two, "x0^2")
            .build()
            .unwrap();
        let game = GridGame::new(build_grid(1, 2.0, 0.05).unwrap(), &model).unwrap();
        let rep = find_nash(&game, &NashOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.trace.len(), 1);
        assert!(rep.residuals[0] < 1e-8 && rep.residuals[1] < 1e-8);
    }

    #[test]
    fn decoupled_game_matches_independent_solves() {
        let model = decoupled();
        let game = GridGame::new(build_grid(1, 3.0, 0.05).unwrap(), &model).unwrap();
        let rep = find_nash(&game, &NashOptions::default()).unwrap();
        assert!(rep.converged, "{:?}", rep.trace);
        let opts = SolveOptions::default();
        // player 1's problem ignores player 2; player 2 then faces player 1's optimum
        let idle2 = MarkovStrategy::uniform(Player::Two, game.grid(), 2);
        let s1 = solve_semilinear_eigen(&game, Player::One, &idle2, None, &opts).unwrap();
        let s2 = solve_semilinear_eigen(&game, Player::Two, &s1.strategy, None, &opts).unwrap();
        assert!((rep.lambda(Player::One) - s1.eigen.lambda).abs() < 1e-8);
        assert!((rep.lambda(Player::Two) - s2.eigen.lambda).abs() < 1e-8);
        assert!(rep.lambda(Player::Two) < 0.2);
    }

    #[test]
    fn fixed_point_is_idempotent_and_verified() {
        let model = decoupled();
        let game = GridGame::new(build_grid(1, 3.0, 0.05).unwrap(), &model).unwrap();
        let rep = find_nash(&game, &NashOptions::default()).unwrap();
        let br = best_response_map(&game, &rep.v1, &rep.v2, &SolveOptions::default()).unwrap();
        assert_eq!((&br.v1, &br.v2), (&rep.v1, &rep.v2));
        let eig = EigenOptions::default();
        let table = verify_nash(
            &game,
            &rep,
            &Deviations::Random { count: 5, seed: 7 },
            1e-8,
            &eig,
        )
        .unwrap();
        assert_eq!(table.entries.len(), 10);
        let same = verify_nash(
            &game,
            &rep,
            &Deviations::Given(alloc::vec![rep.v1.clone()]),
            1e-8,
            &eig,
        )
        .unwrap();
        assert!(same.entries[0].gain().abs() < 1e-12);
    }

    #[test]
    fn profitable_deviation_is_reported() {
        let model = decoupled();
        let game = GridGame::new(build_grid(1, 3.0, 0.05).unwrap(), &model).unwrap();
        let mut rep = find_nash(&game, &NashOptions::default()).unwrap();
        // pretend player 2 plays the expensive action
        rep.v2 = MarkovStrategy::constant(
            Player::Two,
            game.grid(),
            &crate::model::MixedAction::dirac(2, 1),
        );
        rep.eigen[1].lambda = 0.3;
        let err = verify_nash(
            &game,
            &rep,
            &Deviations::Random { count: 3, seed: 1 },
            1e-8,
            &EigenOptions::default(),
        );
        assert!(matches!(err, Err(Error::NashViolation(_))));
    }

    #[test]
    fn bad_damping_is_rejected() {
        let model = decoupled();
        let game = GridGame::new(build_grid(1, 1.0, 0.1).unwrap(), &model).unwrap();
        let opts = NashOptions {
            damping: 0.0,
            ..NashOptions::default()
        };
        assert!(find_nash(&game, &opts).is_err());
    }
}
