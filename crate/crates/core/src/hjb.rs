//! Semi-linear principal eigenproblem for one player against a frozen
//! opponent, solved by policy iteration, and the sweep over growing boxes.
//!
//! For player `i` with opponent strategy `v_j` the discrete Hamiltonian at an
//! interior node `x` and pure action `u` is
//!
//! ```text
//! H(x, u) = (A^{u, v_j(x)} psi)(x) + r_i(x, u, v_j(x)) psi(x)
//! ```
//!
//! where `A` is the upwind row of the generator. The semi-linear equation reads
//! `min_u H(x, u) = lambda psi(x)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::eigen::{principal_eigenpair_from, EigenOptions, EigenPair};
use crate::error::{Error, Result};
use crate::grid::{build_grid, discretize, Grid, GridGame};
use crate::math;
use crate::model::{GameModel, MarkovStrategy, MixedAction, Player};

/// Relative gap below which the current action is kept during policy
/// iteration, so that rounding noise cannot make two tied actions alternate.
const KEEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveOptions {
    pub eigen: EigenOptions,
    /// Policy iteration stops once lambda decreases by less than this.
    pub tol_lambda: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            eigen: EigenOptions::default(),
            tol_lambda: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Termination {
    StrategyFixed,
    LambdaStalled,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SemilinearSolveReport {
    pub player: Player,
    pub eigen: EigenPair,
    pub strategy: MarkovStrategy,
    /// Principal eigenvalue after each outer step.
    pub history: Vec<f64>,
    pub termination: Termination,
    /// Semi-linear residual of the final pair, see [`semilinear_residual`].
    pub residual: f64,
}

fn pair<'a>(
    i: Player,
    own: &'a MarkovStrategy,
    opponent: &'a MarkovStrategy,
) -> (&'a MarkovStrategy, &'a MarkovStrategy) {
    match i {
        Player::One => (own, opponent),
        Player::Two => (opponent, own),
    }
}

/// Scratch space for evaluating Hamiltonians at one node.
struct Hamiltonians<'g, 'm> {
    game: &'g GridGame<'m>,
    i: Player,
    dirac: Vec<f64>,
}

impl<'g, 'm> Hamiltonians<'g, 'm> {
    fn new(game: &'g GridGame<'m>, i: Player) -> Self {
        Self {
            game,
            i,
            dirac: vec![0.0; game.action_count(i)],
        }
    }

    /// `H(x_k, u)` together with the sum of absolute row terms, which sets the
    /// rounding scale of `H`.
    fn value(&mut self, k: usize, u: usize, opp: &[f64], psi: &[f64]) -> (f64, f64) {
        self.dirac.iter_mut().for_each(|p| *p = 0.0);
        self.dirac[u] = 1.0;
        let (m1, m2) = match self.i {
            Player::One => (&self.dirac[..], opp),
            Player::Two => (opp, &self.dirac[..]),
        };
        let mut b = [0.0; 2];
        self.game.node_drift(k, m1, m2, &mut b);
        let r = self.game.node_cost(self.i, k, m1, m2);
        let row = self.game.assemble_row(k, &b, r);
        let mut scale = math::abs(row.diag * psi[k]);
        for &(j, v) in row.neighbors() {
            scale += math::abs(v * psi[j]);
        }
        (row.apply(k, psi), scale)
    }
}

/// `H(x_k, u)` at interior node `k` for every pure action `u` of player `i`.
pub fn hamiltonian_values(
    game: &GridGame<'_>,
    i: Player,
    opponent: &MarkovStrategy,
    psi: &[f64],
    k: usize,
) -> Vec<f64> {
    let node = game.grid().interior_nodes()[k];
    let mut h = Hamiltonians::new(game, i);
    (0..game.action_count(i))
        .map(|u| h.value(k, u, opponent.node(node), psi).0)
        .collect()
}

fn check_psi(game: &GridGame<'_>, psi: &[f64]) -> Result<()> {
    if psi.len() != game.grid().interior_count() {
        return Err(Error::InvalidArgument(format!(
            "psi has {} entries for {} interior nodes",
            psi.len(),
            game.grid().interior_count()
        )));
    }
    if let Some(index) = psi.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveVector { index });
    }
    Ok(())
}

/// Pointwise minimizing pure strategy for `psi`, lowest index on ties.
/// Boundary nodes get action 0.
pub fn improve_strategy(
    game: &GridGame<'_>,
    i: Player,
    opponent: &MarkovStrategy,
    psi: &[f64],
) -> Result<MarkovStrategy> {
    improve(game, i, opponent, psi, None)
}

fn improve(
    game: &GridGame<'_>,
    i: Player,
    opponent: &MarkovStrategy,
    psi: &[f64],
    current: Option<&MarkovStrategy>,
) -> Result<MarkovStrategy> {
    check_psi(game, psi)?;
    let grid = game.grid();
    let m = game.action_count(i);
    let mut choices = vec![0usize; grid.node_count()];
    let mut h = Hamiltonians::new(game, i);
    // (value, rounding scale) per action
    let mut values = vec![(0.0, 0.0); m];
    for (k, &node) in grid.interior_nodes().iter().enumerate() {
        let opp = opponent.node(node);
        let mut best = 0;
        let mut best_value = f64::INFINITY;
        for (u, slot) in values.iter_mut().enumerate() {
            *slot = h.value(k, u, opp, psi);
            if slot.0 < best_value {
                best = u;
                best_value = slot.0;
            }
        }
        if let Some(held) = current.and_then(|s| s.pure_choice(node)) {
            let (v, scale) = values[held];
            if v - best_value <= KEEP_TOL * scale {
                best = held;
            }
        }
        choices[node] = best;
    }
    MarkovStrategy::pure(i, grid, m, &choices)
}

/// `sup_x |min_u H(x, u) - lambda psi(x)| / ||psi||_inf`.
pub fn semilinear_residual(
    game: &GridGame<'_>,
    i: Player,
    opponent: &MarkovStrategy,
    eigen: &EigenPair,
) -> Result<f64> {
    check_psi(game, &eigen.psi)?;
    let psi = &eigen.psi;
    let mut h = Hamiltonians::new(game, i);
    let mut worst = 0.0f64;
    for (k, &node) in game.grid().interior_nodes().iter().enumerate() {
        let opp = opponent.node(node);
        let min = (0..game.action_count(i))
            .map(|u| h.value(k, u, opp, psi).0)
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(math::abs(min - eigen.lambda * psi[k]));
    }
    let norm = psi.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(worst / norm)
}

/// Frozen-pair principal eigenpair of `L^{v1,v2} + r_i`.
pub fn frozen_eigenpair(
    game: &GridGame<'_>,
    i: Player,
    v1: &MarkovStrategy,
    v2: &MarkovStrategy,
    init: Option<&[f64]>,
    opts: &EigenOptions,
) -> Result<EigenPair> {
    let m = discretize(game, i, v1, v2)?;
    principal_eigenpair_from(&m, game.grid().origin_interior(), init, opts, &mut |_| {})
}

/// Policy iteration for player `i` against the frozen `opponent`, starting
/// from `warm` (uniform mixtures when `None`).
pub fn solve_semilinear_eigen(
    game: &GridGame<'_>,
    i: Player,
    opponent: &MarkovStrategy,
    warm: Option<&MarkovStrategy>,
    opts: &SolveOptions,
) -> Result<SemilinearSolveReport> {
    solve_with_guess(game, i, opponent, warm, None, opts)
}

fn solve_with_guess(
    game: &GridGame<'_>,
    i: Player,
    opponent: &MarkovStrategy,
    warm: Option<&MarkovStrategy>,
    psi_guess: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<SemilinearSolveReport> {
    let grid = game.grid();
    let m = game.action_count(i);
    let mut strategy = match warm {
        Some(s) => {
            s.validate(grid)?;
            if s.player() != i || s.action_count() != m {
                return Err(Error::InvalidStrategy(format!(
                    "warm start is not a strategy of player {} with {m} actions",
                    i.number()
                )));
            }
            s.clone()
        }
        None => MarkovStrategy::uniform(i, grid, m),
    };
    let mut history = Vec::new();
    let mut guess: Option<Vec<f64>> = psi_guess.map(|p| p.to_vec());
    let mut eigen = {
        let (v1, v2) = pair(i, &strategy, opponent);
        frozen_eigenpair(game, i, v1, v2, guess.as_deref(), &opts.eigen)?
    };
    history.push(eigen.lambda);
    let mut termination = Termination::MaxIter;
    for _ in 0..opts.max_iter {
        let next = improve(game, i, opponent, &eigen.psi, Some(&strategy))?;
        if next == strategy {
            termination = Termination::StrategyFixed;
            break;
        }
        guess = Some(eigen.psi.clone());
        let (v1, v2) = pair(i, &next, opponent);
        let candidate = frozen_eigenpair(game, i, v1, v2, guess.as_deref(), &opts.eigen)?;
        let previous = eigen.lambda;
        strategy = next;
        eigen = candidate;
        history.push(eigen.lambda);
        if previous - eigen.lambda < opts.tol_lambda {
            termination = Termination::LambdaStalled;
            break;
        }
    }
    let residual = semilinear_residual(game, i, opponent, &eigen)?;
    Ok(SemilinearSolveReport {
        player: i,
        eigen,
        strategy,
        history,
        termination,
        residual,
    })
}

/// How the frozen opponent is placed on each grid of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum OpponentRule {
    Uniform,
    /// The same pure action at every node.
    Pure(usize),
    /// The same mixture at every node.
    Mixture(MixedAction),
    /// Nearest-node transfer of a strategy defined on another grid.
    Transfer {
        grid: Grid,
        strategy: MarkovStrategy,
    },
}

impl OpponentRule {
    pub fn place(&self, player: Player, grid: &Grid, actions: usize) -> Result<MarkovStrategy> {
        match self {
            OpponentRule::Uniform => Ok(MarkovStrategy::uniform(player, grid, actions)),
            OpponentRule::Pure(u) => {
                if *u >= actions {
                    return Err(Error::InvalidStrategy(format!(
                        "opponent action {u} out of range"
                    )));
                }
                Ok(MarkovStrategy::constant(
                    player,
                    grid,
                    &MixedAction::dirac(actions, *u),
                ))
            }
            OpponentRule::Mixture(m) => {
                if m.as_slice().len() != actions {
                    return Err(Error::InvalidStrategy(format!(
                        "opponent mixture has {} weights for {actions} actions",
                        m.as_slice().len()
                    )));
                }
                Ok(MarkovStrategy::constant(player, grid, m))
            }
            OpponentRule::Transfer {
                grid: from,
                strategy,
            } => Ok(strategy.transfer(from, grid).relabel(player)),
        }
    }
}

/// Grid spacing used for a given radius.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StepRule {
    Fixed(f64),
    /// `h = R / n`.
    CellsPerRadius(usize),
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::CellsPerRadius(300)
    }
}

impl StepRule {
    pub fn spacing(&self, radius: f64) -> f64 {
        match *self {
            StepRule::Fixed(h) => h,
            StepRule::CellsPerRadius(n) => radius / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepEntry {
    pub radius: f64,
    pub h: f64,
    pub interior_nodes: usize,
    pub lambda: f64,
    pub outer_iterations: usize,
    pub termination: Termination,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    /// Value at the largest radius.
    pub lambda_inf: f64,
    /// Grid and full report of the largest radius.
    pub last_grid: Grid,
    pub last: SemilinearSolveReport,
}

/// Allowed decrease of `lambda_R` between consecutive radii.
pub const SWEEP_SLACK: f64 = 1e-9;

/// Solves on `[-R, R]^d` for each radius in increasing order.
///
/// With `warm_start` each solve starts from the previous radius' strategy and
/// eigenvector, transferred by nearest node.
pub fn dirichlet_sweep(
    model: &GameModel,
    i: Player,
    opponent: &OpponentRule,
    radii: &[f64],
    step: StepRule,
    opts: &SolveOptions,
    warm_start: bool,
) -> Result<SweepResult> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("no radii given".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "radii must be strictly increasing".into(),
        ));
    }
    let j = i.other();
    let mut entries: Vec<SweepEntry> = Vec::with_capacity(radii.len());
    let mut last: Option<(Grid, SemilinearSolveReport)> = None;
    for &radius in radii {
        let h = step.spacing(radius);
        let grid = build_grid(model.dim(), radius, h)?;
        let opp = opponent.place(j, &grid, model.action_count(j))?;
        let (warm, guess) = match (&last, warm_start) {
            (Some((g, rep)), true) => {
                let s = rep.strategy.transfer(g, &grid);
                let psi = transfer_interior(g, &rep.eigen.psi, &grid);
                (Some(s), Some(psi))
            }
            _ => (None, None),
        };
        let game = GridGame::new(grid.clone(), model)?;
        let report = solve_with_guess(&game, i, &opp, warm.as_ref(), guess.as_deref(), opts)?;
        if let Some(prev) = entries.last() {
            if report.eigen.lambda < prev.lambda - SWEEP_SLACK {
                return Err(Error::MonotonicityViolation {
                    radius,
                    previous: prev.lambda,
                    current: report.eigen.lambda,
                });
            }
        }
        entries.push(SweepEntry {
            radius,
            h: grid.h(),
            interior_nodes: grid.interior_count(),
            lambda: report.eigen.lambda,
            outer_iterations: report.history.len(),
            termination: report.termination,
            residual: report.residual,
        });
        last = Some((grid, report));
    }
    let (last_grid, last) = last.expect("at least one radius");
    Ok(SweepResult {
        lambda_inf: last.eigen.lambda,
        entries,
        last_grid,
        last,
    })
}

/// Nearest-interior-node transfer of an interior vector.
pub fn transfer_interior(from: &Grid, values: &[f64], target: &Grid) -> Vec<f64> {
    let mut x = [0.0; 2];
    target
        .interior_nodes()
        .iter()
        .map(|&node| {
            target.coords_into(node, &mut x);
            values[from.nearest_interior(&x[..target.dim()])]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::principal_eigenpair;

    fn lq() -> GameModel {
        GameModel::builder(1)
            .drift(Player::One, ["-x0"])
            .sigma(["1"])
            .cost(Player::One, Player::One, "0.25*x0^2")
            .build()
            .unwrap()
    }

    fn controlled() -> GameModel {
        GameModel::builder(1)
            .actions(
                Player::One,
                [
                    ("left", vec![-1.0]),
                    ("stay", vec![0.0]),
                    ("right", vec![1.0]),
                ],
            )
            .drift(Player::One, ["-x0 + 0.5*a0"])
            .sigma(["1"])
            .cost(Player::One, Player::One, "0.2*x0^2 + 0.1*a0^2")
            .build()
            .unwrap()
    }

    #[test]
    fn single_action_matches_plain_eigenpair() {
        let model = lq();
        let game = GridGame::new(build_grid(1, 3.0, 0.05).unwrap(), &model).unwrap();
        let opp = MarkovStrategy::uniform(Player::Two, game.grid(), 1);
        let own = MarkovStrategy::uniform(Player::One, game.grid(), 1);
        let rep = solve_semilinear_eigen(&game, Player::One, &opp, None, &SolveOptions::default())
            .unwrap();
        let m = discretize(&game, Player::One, &own, &opp).unwrap();
        let e = principal_eigenpair(&m, game.grid().origin_interior(), &EigenOptions::default())
            .unwrap();
        assert_eq!(rep.termination, Termination::StrategyFixed);
        assert!((rep.eigen.lambda - e.lambda).abs() < 1e-12);
        assert!(rep.residual < 1e-8);
    }

    #[test]
    fn dominated_action_never_chosen() {
        let model = GameModel::builder(1)
            .actions(Player::One, [("zero", vec![0.0]), ("one", vec![1.0])])
            .drift(Player::One, ["-x0"])
            .sigma(["1"])
            .cost(Player::One, Player::One, "a0^2")
            .build()
            .unwrap();
        let game = GridGame::new(build_grid(1, 2.0, 0.1).unwrap(), &model).unwrap();
        let opp = MarkovStrategy::uniform(Player::Two, game.grid(), 1);
        let psi = vec![1.0; game.grid().interior_count()];
        let s = improve_strategy(&game, Player::One, &opp, &psi).unwrap();
        assert!((0..game.grid().node_count()).all(|k| s.pure_choice(k) == Some(0)));
    }

    #[test]
    fn policy_iteration_is_monotone_and_minimizing() {
        let model = controlled();
        let game = GridGame::new(build_grid(1, 3.0, 0.05).unwrap(), &model).unwrap();
        let opp = MarkovStrategy::uniform(Player::Two, game.grid(), 1);
        let rep = solve_semilinear_eigen(&game, Player::One, &opp, None, &SolveOptions::default())
            .unwrap();
        for w in rep.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{:?}", rep.history);
        }
        assert!(rep.residual < 1e-8, "residual {}", rep.residual);
        let again = improve_strategy(&game, Player::One, &opp, &rep.eigen.psi).unwrap();
        for (k, &node) in game.grid().interior_nodes().iter().enumerate() {
            let h = hamiltonian_values(&game, Player::One, &opp, &rep.eigen.psi, k);
            let chosen = h[rep.strategy.pure_choice(node).unwrap()];
            let best = h[again.pure_choice(node).unwrap()];
            assert!((chosen - best).abs() <= 1e-10 * (1.0 + best.abs()));
        }
    }

    #[test]
    fn constant_cost_sweep_rises_toward_cost() {
        let model = GameModel::builder(1)
            .drift(Player::One, ["-x0"])
            .sigma(["1"])
            .cost(Player::One, Player::One, "0.3")
            .build()
            .unwrap();
        let sweep = dirichlet_sweep(
            &model,
            Player::One,
            &OpponentRule::Uniform,
            &[1.0, 2.0, 3.0],
            StepRule::CellsPerRadius(100),
            &SolveOptions::default(),
            true,
        )
        .unwrap();
        let l: Vec<f64> = sweep.entries.iter().map(|e| e.lambda).collect();
        assert!(l[0] < l[1] && l[1] < l[2] && l[2] < 0.3, "{l:?}");
    }

    #[test]
    fn warm_start_does_not_change_results() {
        let model = controlled();
        let run = |warm| {
            dirichlet_sweep(
                &model,
                Player::One,
                &OpponentRule::Uniform,
                &[1.5, 2.5],
                StepRule::CellsPerRadius(50),
                &SolveOptions::default(),
                warm,
            )
            .unwrap()
        };
        let (a, b) = (run(true), run(false));
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert!((x.lambda - y.lambda).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_rejects_bad_radii() {
        let model = lq();
        let opts = SolveOptions::default();
        for radii in [&[][..], &[2.0, 1.0][..]] {
            assert!(dirichlet_sweep(
                &model,
                Player::One,
                &OpponentRule::Uniform,
                radii,
                StepRule::default(),
                &opts,
                true
            )
            .is_err());
        }
        let one = dirichlet_sweep(
            &model,
            Player::One,
            &OpponentRule::Uniform,
            &[2.0],
            StepRule::CellsPerRadius(40),
            &opts,
            true,
        )
        .unwrap();
        assert_eq!(one.entries.len(), 1);
    }
}
