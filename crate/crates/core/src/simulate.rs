//! Euler–Maruyama simulation of the controlled diffusion under a pair of
//! stationary Markov strategies.
//!
//! Coefficients are the relaxed drift and cost at the current state, with the
//! mixtures of the nearest interior grid node. Path `p` draws its normals from
//! a ChaCha8 stream seeded with `seed + p`, so paths can be simulated in any
//! order or in parallel and still reproduce bit for bit.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::math::{self, CompensatedSum};
use crate::model::{GameModel, MarkovStrategy, Player};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    /// The state is projected onto `[-clamp, clamp]^d` after every step.
    pub clamp: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.horizon >= 100.0 * self.dt && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon {} is shorter than 100 steps of {}",
                self.horizon, self.dt
            )));
        }
        if self.paths < 2 {
            return Err(Error::InvalidArgument(
                "at least two paths are needed".into(),
            ));
        }
        if !(self.clamp > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "clamp radius {} must be positive",
                self.clamp
            )));
        }
        Ok(())
    }

    /// Number of Euler steps, `round(horizon / dt)`.
    pub fn steps(&self) -> usize {
        math::round(self.horizon / self.dt) as usize
    }
}

/// Cost integral of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathSummary {
    pub index: u64,
    /// Time average of the running cost over `[0, T]`.
    pub average: f64,
    /// Time average over `[0, T/2]`.
    pub half_average: f64,
    /// Simulated time, `steps * dt`.
    pub time: f64,
}

impl PathSummary {
    /// `S_p = integral of the running cost over [0, T]`.
    pub fn integral(&self) -> f64 {
        self.average * self.time
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostEstimate {
    /// `(1/T) log mean_p exp(S_p)`.
    pub estimate: f64,
    /// Delta-method standard error of `estimate`.
    pub stderr: f64,
    /// Same estimate at horizon `T/2`.
    pub half_estimate: f64,
    pub half_stderr: f64,
    pub horizon: f64,
    pub paths: Vec<PathSummary>,
}

/// Stable `log mean exp(values)` and the delta-method standard error of it.
pub fn log_mean_exp(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = CompensatedSum::default();
    let mut sq = CompensatedSum::default();
    for &v in values {
        let w = math::exp(v - top);
        sum.add(w);
        sq.add(w * w);
    }
    let mean = sum.value() / n;
    let var = ((sq.value() / n - mean * mean) * n / (n - 1.0)).max(0.0);
    let se = math::sqrt(var / n) / mean;
    (top + math::ln(mean), se)
}

/// Risk-sensitive estimate from time averages `A_p` over a horizon `t`:
/// `max A + (1/t) log mean exp(t (A_p - max A))`.
fn rate(averages: &[f64], t: f64) -> (f64, f64) {
    let top = averages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = averages.iter().map(|a| t * (a - top)).collect();
    let (l, se) = log_mean_exp(&scaled);
    (top + l / t, se / t)
}

/// Combines per-path summaries in the order given.
pub fn summarize_cost(paths: Vec<PathSummary>) -> Result<CostEstimate> {
    if paths.len() < 2 {
        return Err(Error::InvalidArgument(
            "at least two paths are needed".into(),
        ));
    }
    if let Some(p) = paths
        .iter()
        .find(|p| !(p.average.is_finite() && p.half_average.is_finite()))
    {
        return Err(Error::NumericalOverflow { path: p.index });
    }
    let horizon = paths[0].time;
    let full: Vec<f64> = paths.iter().map(|p| p.average).collect();
    let half: Vec<f64> = paths.iter().map(|p| p.half_average).collect();
    let (estimate, stderr) = rate(&full, horizon);
    let (half_estimate, half_stderr) = rate(&half, 0.5 * horizon);
    Ok(CostEstimate {
        estimate,
        stderr,
        half_estimate,
        half_stderr,
        horizon,
        paths,
    })
}

/// A strategy pair on a grid, ready for path simulation.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    model: &'a GameModel,
    grid: &'a Grid,
    v1: &'a MarkovStrategy,
    v2: &'a MarkovStrategy,
}

impl<'a> Simulator<'a> {
    pub fn new(
        model: &'a GameModel,
        grid: &'a Grid,
        v1: &'a MarkovStrategy,
        v2: &'a MarkovStrategy,
    ) -> Result<Self> {
        if grid.dim() != model.dim() {
            return Err(Error::BadGeometry(
                "grid and model dimensions differ".into(),
            ));
        }
        for (p, v) in [(Player::One, v1), (Player::Two, v2)] {
            v.validate(grid)?;
            if v.player() != p || v.action_count() != model.action_count(p) {
                return Err(Error::InvalidStrategy(format!(
                    "strategy does not fit player {}",
                    p.number()
                )));
            }
        }
        Ok(Self {
            model,
            grid,
            v1,
            v2,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn model(&self) -> &'a GameModel {
        self.model
    }

    pub fn grid(&self) -> &'a Grid {
        self.grid
    }

    fn mixtures(&self, x: &[f64]) -> (&'a [f64], &'a [f64]) {
        let node = self.grid.interior_nodes()[self.grid.nearest_interior(x)];
        (self.v1.node(node), self.v2.node(node))
    }

    /// Running cost of `payer` at `x`.
    pub fn cost(&self, payer: Player, x: &[f64]) -> Result<f64> {
        let (m1, m2) = self.mixtures(x);
        self.model.relaxed_cost(payer, x, m1, m2)
    }

    /// One Euler–Maruyama step in place.
    fn step(&self, x: &mut [f64], dt: f64, clamp: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        let d = x.len();
        let (m1, m2) = self.mixtures(x);
        let mut b = [0.0; 2];
        let mut s = [0.0; 2];
        self.model.relaxed_drift_into(x, m1, m2, &mut b[..d])?;
        self.model.sigma(x, &mut s[..d])?;
        let root = math::sqrt(dt);
        for k in 0..d {
            let xi: f64 = StandardNormal.sample(rng);
            x[k] = (x[k] + b[k] * dt + s[k] * root * xi).clamp(-clamp, clamp);
        }
        Ok(())
    }

    /// Cost path `index` of `payer` from `x0`.
    pub fn cost_path(
        &self,
        payer: Player,
        x0: &[f64],
        cfg: &SimConfig,
        index: u64,
    ) -> Result<PathSummary> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index));
        let steps = cfg.steps();
        let half = steps / 2;
        let mut x = [0.0; 2];
        let d = self.model.dim();
        x[..d].copy_from_slice(x0);
        let mut sum = CompensatedSum::default();
        let mut half_sum = 0.0;
        for k in 0..steps {
            if k == half {
                half_sum = sum.value();
            }
            sum.add(self.cost(payer, &x[..d])?);
            self.step(&mut x[..d], cfg.dt, cfg.clamp, &mut rng)?;
        }
        let average = sum.value() / steps as f64;
        let half_average = if half == 0 {
            average
        } else {
            half_sum / half as f64
        };
        if !(average.is_finite() && half_average.is_finite()) {
            return Err(Error::NumericalOverflow { path: index });
        }
        Ok(PathSummary {
            index,
            average,
            half_average,
            time: steps as f64 * cfg.dt,
        })
    }

    /// Hitting-time functional of path `index`: starting at `x0`, run until
    /// `|X| <= r_ball` or the horizon, accumulating `(r - lambda) dt`.
    pub fn hitting_path(
        &self,
        payer: Player,
        target: &RepTarget<'_>,
        x0: &[f64],
        cfg: &SimConfig,
        index: u64,
    ) -> Result<HittingPath> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index));
        let steps = cfg.steps();
        let d = self.model.dim();
        let mut x = [0.0; 2];
        x[..d].copy_from_slice(x0);
        let mut sum = CompensatedSum::default();
        for k in 0..steps {
            sum.add(self.cost(payer, &x[..d])? - target.lambda);
            self.step(&mut x[..d], cfg.dt, cfg.clamp, &mut rng)?;
            if norm(&x[..d]) <= target.r_ball {
                let psi = target.psi[self.grid.nearest_interior(&x[..d])];
                return Ok(HittingPath {
                    index,
                    tau: (k + 1) as f64 * cfg.dt,
                    value: Some(math::exp(sum.value() * cfg.dt) * psi),
                });
            }
        }
        Ok(HittingPath {
            index,
            tau: steps as f64 * cfg.dt,
            value: None,
        })
    }
}

fn norm(x: &[f64]) -> f64 {
    math::sqrt(x.iter().map(|v| v * v).sum())
}

/// Sequential risk-sensitive cost estimate of player `payer` from `x0`.
pub fn estimate_rho(
    model: &GameModel,
    grid: &Grid,
    payer: Player,
    v1: &MarkovStrategy,
    v2: &MarkovStrategy,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<CostEstimate> {
    cfg.validate()?;
    check_start(model, x0)?;
    let sim = Simulator::new(model, grid, v1, v2)?;
    let paths = (0..cfg.paths as u64)
        .map(|p| sim.cost_path(payer, x0, cfg, p))
        .collect::<Result<Vec<_>>>()?;
    summarize_cost(paths)
}

fn check_start(model: &GameModel, x0: &[f64]) -> Result<()> {
    if x0.len() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "start point has {} coordinates, model has {}",
            x0.len(),
            model.dim()
        )));
    }
    Ok(())
}

/// One path of the stochastic-representation check; `value` is `None` when
/// the path reached the horizon before the ball.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HittingPath {
    pub index: u64,
    pub tau: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RepCheck {
    /// `psi` at the node nearest to the start point.
    pub lhs: f64,
    /// Mean of `exp(int (r - lambda) dt) psi(X_tau)` over paths that hit.
    pub rhs: f64,
    pub stderr: f64,
    pub used: usize,
    pub capped: usize,
    pub mean_tau: f64,
    pub paths: Vec<HittingPath>,
}

impl RepCheck {
    pub fn relative_error(&self) -> f64 {
        math::abs(self.lhs - self.rhs) / self.lhs
    }
}

/// Combines hitting paths in the order given.
pub fn summarize_hitting(lhs: f64, paths: Vec<HittingPath>) -> Result<RepCheck> {
    let capped = paths.iter().filter(|p| p.value.is_none()).count();
    if 5 * capped > paths.len() {
        return Err(Error::TooManyCapped {
            capped,
            paths: paths.len(),
        });
    }
    let mut sum = CompensatedSum::default();
    let mut sq = CompensatedSum::default();
    let mut tau = CompensatedSum::default();
    let mut used = 0usize;
    for p in &paths {
        if let Some(v) = p.value {
            if !v.is_finite() {
                return Err(Error::NumericalOverflow { path: p.index });
            }
            sum.add(v);
            sq.add(v * v);
            tau.add(p.tau);
            used += 1;
        }
    }
    if used < 2 {
        return Err(Error::TooManyCapped {
            capped,
            paths: paths.len(),
        });
    }
    let n = used as f64;
    let rhs = sum.value() / n;
    let var = ((sq.value() / n - rhs * rhs) * n / (n - 1.0)).max(0.0);
    Ok(RepCheck {
        lhs,
        rhs,
        stderr: math::sqrt(var / n),
        used,
        capped,
        mean_tau: tau.value() / n,
        paths,
    })
}

/// Eigenpair and ball of a stochastic-representation check.
#[derive(Debug, Clone, Copy)]
pub struct RepTarget<'a> {
    pub lambda: f64,
    /// Values on the interior nodes.
    pub psi: &'a [f64],
    pub r_ball: f64,
}

/// Monte Carlo check of `psi(x0) = E[exp(int_0^tau (r_i - lambda) dt) psi(X_tau)]`
/// with `tau` the first entry into `{|x| <= r_ball}`.
pub fn check_stochastic_rep(
    sim: &Simulator<'_>,
    payer: Player,
    target: &RepTarget<'_>,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<RepCheck> {
    let lhs = prepare_rep(sim, target, x0, cfg)?;
    let paths = (0..cfg.paths as u64)
        .map(|p| sim.hitting_path(payer, target, x0, cfg, p))
        .collect::<Result<Vec<_>>>()?;
    summarize_hitting(lhs, paths)
}

/// Validates the inputs of the representation check and returns `psi` at the
/// node nearest to `x0`.
pub fn prepare_rep(
    sim: &Simulator<'_>,
    target: &RepTarget<'_>,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_start(sim.model, x0)?;
    let grid = sim.grid;
    if target.psi.len() != grid.interior_count() {
        return Err(Error::InvalidArgument(format!(
            "psi has {} entries for {} interior nodes",
            target.psi.len(),
            grid.interior_count()
        )));
    }
    let r_ball = target.r_ball;
    if !(r_ball > 0.0) || norm(x0) <= r_ball {
        return Err(Error::InvalidArgument(format!(
            "start point must lie outside the ball of radius {r_ball}"
        )));
    }
    if x0.iter().any(|v| math::abs(*v) >= grid.radius()) || r_ball >= grid.radius() {
        return Err(Error::InvalidArgument(
            "grid must contain the start point and the ball".into(),
        ));
    }
    Ok(target.psi[grid.nearest_interior(x0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use alloc::vec;

    fn ou(cost: &str) -> GameModel {
        GameModel::builder(1)
            .drift(Player::One, ["-x0"])
            .sigma(["1"])
            .cost(Player::One, Player::One, cost)
            .build()
            .unwrap()
    }

    fn idle(grid: &Grid) -> (MarkovStrategy, MarkovStrategy) {
        (
            MarkovStrategy::uniform(Player::One, grid, 1),
            MarkovStrategy::uniform(Player::Two, grid, 1),
        )
    }

    fn cfg(paths: usize) -> SimConfig {
        SimConfig {
            dt: 1e-2,
            horizon: 5.0,
            paths,
            seed: 11,
            clamp: 4.0,
        }
    }

    #[test]
    fn constant_cost_is_exact() {
        let model = ou("0.3");
        let grid = build_grid(1, 4.0, 0.1).unwrap();
        let (v1, v2) = idle(&grid);
        let est = estimate_rho(&model, &grid, Player::One, &v1, &v2, &[0.5], &cfg(20)).unwrap();
        assert_eq!(est.estimate, 0.3);
        assert_eq!(est.half_estimate, 0.3);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn seeds_reproduce_bit_for_bit() {
        let model = ou("0.25*x0^2");
        let grid = build_grid(1, 4.0, 0.1).unwrap();
        let (v1, v2) = idle(&grid);
        let a = estimate_rho(&model, &grid, Player::One, &v1, &v2, &[0.0], &cfg(30)).unwrap();
        let b = estimate_rho(&model, &grid, Player::One, &v1, &v2, &[0.0], &cfg(30)).unwrap();
        assert_eq!(a, b);
        let c = estimate_rho(
            &model,
            &grid,
            Player::One,
            &v1,
            &v2,
            &[0.0],
            &SimConfig {
                seed: 12,
                ..cfg(30)
            },
        )
        .unwrap();
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn log_mean_exp_survives_large_exponents() {
        let v = [700.0, 699.0, 698.5];
        let (l, _) = log_mean_exp(&v);
        let reference = 700.0 + libm::log((1.0 + libm::exp(-1.0) + libm::exp(-1.5)) / 3.0);
        assert!((l - reference).abs() <= 1e-9 * reference);
        let (l, se) = log_mean_exp(&[800.0, 800.0]);
        assert_eq!((l, se), (800.0, 0.0));
    }

    #[test]
    fn representation_identity_is_exact() {
        let model = ou("0.3");
        let grid = build_grid(1, 4.0, 0.1).unwrap();
        let (v1, v2) = idle(&grid);
        let psi = vec![1.0; grid.interior_count()];
        let sim = Simulator::new(&model, &grid, &v1, &v2).unwrap();
        let target = RepTarget {
            lambda: 0.3,
            psi: &psi,
            r_ball: 1.0,
        };
        let rep = check_stochastic_rep(&sim, Player::One, &target, &[2.0], &cfg(50)).unwrap();
        assert_eq!(rep.rhs, 1.0);
        assert_eq!(rep.lhs, 1.0);
        assert_eq!(rep.capped, 0);
    }

    #[test]
    fn capped_paths_are_reported() {
        let model = ou("0.3");
        let grid = build_grid(1, 4.0, 0.1).unwrap();
        let (v1, v2) = idle(&grid);
        let psi = vec![1.0; grid.interior_count()];
        let short = SimConfig {
            horizon: 1.0,
            ..cfg(40)
        };
        let sim = Simulator::new(&model, &grid, &v1, &v2).unwrap();
        let target = RepTarget {
            lambda: 0.3,
            psi: &psi,
            r_ball: 0.05,
        };
        let r = check_stochastic_rep(&sim, Player::One, &target, &[3.5], &short);
        assert!(matches!(r, Err(Error::TooManyCapped { .. })));
    }

    #[test]
    fn config_is_validated() {
        assert!(SimConfig { dt: 0.0, ..cfg(2) }.validate().is_err());
        assert!(SimConfig {
            horizon: 0.5,
            ..cfg(2)
        }
        .validate()
        .is_err());
        assert!(cfg(1).validate().is_err());
        assert!(cfg(2).validate().is_ok());
    }
}
