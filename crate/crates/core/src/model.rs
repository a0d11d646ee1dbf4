//! Game datum: finite action sets, additively separable drift and costs, and a
//! diagonal state-dependent diffusion.
//!
//! Drift and cost are split by the player whose action they depend on:
//! `b(x, u1, u2) = b1(x, u1) + b2(x, u2)` and `r_i(x, u1, u2) = r_i1(x, u1) + r_i2(x, u2)`.
//! A relaxed (mixed) action is a probability vector over the finite action set
//! and the coefficients extend to it by averaging.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr};
use crate::grid::Grid;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::One, Player::Two];

    /// Zero-based index.
    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }

    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }

    pub fn from_number(n: usize) -> Option<Player> {
        match n {
            1 => Some(Player::One),
            2 => Some(Player::Two),
            _ => None,
        }
    }

    pub fn number(self) -> usize {
        self.index() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Action {
    pub name: String,
    pub features: Vec<f64>,
}

impl Action {
    pub fn new(name: impl Into<String>, features: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            features,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    player: Player,
    actions: Vec<Action>,
    feature_len: usize,
}

impl ActionSet {
    pub fn new(player: Player, actions: Vec<Action>) -> Result<Self> {
        let Some(first) = actions.first() else {
            return Err(Error::InvalidModel(format!(
                "player {} has no actions",
                player.number()
            )));
        };
        let feature_len = first.features.len();
        for (k, a) in actions.iter().enumerate() {
            if a.features.len() != feature_len {
                return Err(Error::InvalidModel(format!(
                    "action `{}` of player {} has {} features, expected {}",
                    a.name,
                    player.number(),
                    a.features.len(),
                    feature_len
                )));
            }
            if actions[..k].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidModel(format!(
                    "duplicate action `{}` for player {}",
                    a.name,
                    player.number()
                )));
            }
        }
        Ok(Self {
            player,
            actions,
            feature_len,
        })
    }

    /// A single featureless action.
    pub fn single(player: Player) -> Self {
        Self {
            player,
            actions: vec![Action::new("idle", Vec::new())],
            feature_len: 0,
        }
    }

    pub fn player(&self) -> Player {
        self.player
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn features(&self, u: usize) -> &[f64] {
        &self.actions[u].features
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.name == name)
    }
}

/// The full problem datum. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GameModel {
    dim: usize,
    actions: [ActionSet; 2],
    /// `drift[j]` holds the components of `b_{j+1}(x, u_{j+1})`.
    drift: [Vec<Expr>; 2],
    /// Diagonal of the dispersion matrix.
    sigma: Vec<Expr>,
    /// `cost[i][j]` is `r_{i+1, j+1}(x, u_{j+1})`.
    cost: [[Expr; 2]; 2],
    a_min: f64,
}

impl GameModel {
    pub fn new(
        dim: usize,
        actions: [ActionSet; 2],
        drift: [Vec<Expr>; 2],
        sigma: Vec<Expr>,
        cost: [[Expr; 2]; 2],
        a_min: f64,
    ) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidModel(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if !(a_min > 0.0) {
            return Err(Error::InvalidModel(format!(
                "a_min must be positive, got {a_min}"
            )));
        }
        if sigma.len() != dim {
            return Err(Error::InvalidModel(format!(
                "sigma has {} entries, expected {dim}",
                sigma.len()
            )));
        }
        for s in &sigma {
            s.check_scope(dim, 0)?;
        }
        for p in Player::BOTH {
            let j = p.index();
            if actions[j].player != p {
                return Err(Error::InvalidModel(format!(
                    "action set {} is declared for player {}",
                    p.number(),
                    actions[j].player.number()
                )));
            }
            let nf = actions[j].feature_len;
            if drift[j].len() != dim {
                return Err(Error::InvalidModel(format!(
                    "drift of player {} has {} components, expected {dim}",
                    p.number(),
                    drift[j].len()
                )));
            }
            for e in &drift[j] {
                e.check_scope(dim, nf)?;
            }
            for row in &cost {
                row[j].check_scope(dim, nf)?;
            }
        }
        Ok(Self {
            dim,
            actions,
            drift,
            sigma,
            cost,
            a_min,
        })
    }

    pub fn builder(dim: usize) -> GameModelBuilder {
        GameModelBuilder::new(dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a_min(&self) -> f64 {
        self.a_min
    }

    pub fn actions(&self, player: Player) -> &ActionSet {
        &self.actions[player.index()]
    }

    pub fn action_count(&self, player: Player) -> usize {
        self.actions[player.index()].len()
    }

    pub fn drift_exprs(&self, player: Player) -> &[Expr] {
        &self.drift[player.index()]
    }

    pub fn sigma_exprs(&self) -> &[Expr] {
        &self.sigma
    }

    /// `r_{i, j}`: cost of player `payer` contributed by the action of `actor`.
    pub fn cost_expr(&self, payer: Player, actor: Player) -> &Expr {
        &self.cost[payer.index()][actor.index()]
    }

    /// Adds `weight * b_j(x, u)` into `out`.
    pub fn add_drift_component(
        &self,
        actor: Player,
        x: &[f64],
        u: usize,
        weight: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let env = Env::new(x, self.actions[actor.index()].features(u));
        for (o, e) in out.iter_mut().zip(&self.drift[actor.index()]) {
            *o += weight * e.eval(&env)?;
        }
        Ok(())
    }

    /// `r_{payer, actor}(x, u)`.
    pub fn cost_component(&self, payer: Player, actor: Player, x: &[f64], u: usize) -> Result<f64> {
        let env = Env::new(x, self.actions[actor.index()].features(u));
        Ok(self.cost[payer.index()][actor.index()].eval(&env)?)
    }

    /// Diffusion coefficients `a_kk = sigma_kk^2 / 2`.
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let env = Env::state(x);
        for (o, s) in out.iter_mut().zip(&self.sigma) {
            let v = s.eval(&env)?;
            *o = 0.5 * v * v;
        }
        Ok(())
    }

    pub fn sigma(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let env = Env::state(x);
        for (o, s) in out.iter_mut().zip(&self.sigma) {
            *o = s.eval(&env)?;
        }
        Ok(())
    }

    /// Drift under the pure action pair `(u1, u2)`.
    pub fn pure_drift(&self, x: &[f64], u1: usize, u2: usize, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.add_drift_component(Player::One, x, u1, 1.0, out)?;
        self.add_drift_component(Player::Two, x, u2, 1.0, out)
    }

    pub fn pure_cost(&self, payer: Player, x: &[f64], u1: usize, u2: usize) -> Result<f64> {
        Ok(self.cost_component(payer, Player::One, x, u1)?
            + self.cost_component(payer, Player::Two, x, u2)?)
    }

    /// `b(x, m1, m2)` written into `out`.
    pub fn relaxed_drift_into(
        &self,
        x: &[f64],
        m1: &[f64],
        m2: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (p, m) in [(Player::One, m1), (Player::Two, m2)] {
            for (u, &w) in m.iter().enumerate() {
                if w != 0.0 {
                    self.add_drift_component(p, x, u, w, out)?;
                }
            }
        }
        Ok(())
    }

    /// Measure-averaged drift `sum m1(u1) b1(x,u1) + sum m2(u2) b2(x,u2)`.
    pub fn relaxed_drift(&self, x: &[f64], m1: &[f64], m2: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.relaxed_drift_into(x, m1, m2, &mut out)?;
        Ok(out)
    }

    /// Measure-averaged running cost of player `payer`.
    pub fn relaxed_cost(&self, payer: Player, x: &[f64], m1: &[f64], m2: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (p, m) in [(Player::One, m1), (Player::Two, m2)] {
            for (u, &w) in m.iter().enumerate() {
                if w != 0.0 {
                    total += w * self.cost_component(payer, p, x, u)?;
                }
            }
        }
        Ok(total)
    }

    /// Swaps the roles of the two players.
    pub fn swapped(&self) -> GameModel {
        let [a1, a2] = self.actions.clone();
        let [d1, d2] = self.drift.clone();
        let [[r11, r12], [r21, r22]] = self.cost.clone();
        GameModel {
            dim: self.dim,
            actions: [
                ActionSet {
                    player: Player::One,
                    ..a2
                },
                ActionSet {
                    player: Player::Two,
                    ..a1
                },
            ],
            drift: [d2, d1],
            sigma: self.sigma.clone(),
            cost: [[r22, r21], [r12, r11]],
            a_min: self.a_min,
        }
    }
}

/// Convenience constructor taking expression source text.
#[derive(Debug, Clone)]
pub struct GameModelBuilder {
    dim: usize,
    actions: [Option<Vec<Action>>; 2],
    drift: [Option<Vec<String>>; 2],
    sigma: Option<Vec<String>>,
    cost: [[Option<String>; 2]; 2],
    a_min: Option<f64>,
}

impl GameModelBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            actions: [None, None],
            drift: [None, None],
            sigma: None,
            cost: [[None, None], [None, None]],
            a_min: None,
        }
    }

    pub fn actions<I, S>(mut self, player: Player, actions: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        self.actions[player.index()] = Some(
            actions
                .into_iter()
                .map(|(n, f)| Action::new(n, f))
                .collect(),
        );
        self
    }

    pub fn drift<I, S>(mut self, player: Player, components: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.drift[player.index()] = Some(components.into_iter().map(Into::into).collect());
        self
    }

    pub fn sigma<I, S>(mut self, diagonal: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.sigma = Some(diagonal.into_iter().map(Into::into).collect());
        self
    }

    /// Sets `r_{payer, actor}`.
    pub fn cost(mut self, payer: Player, actor: Player, text: impl Into<String>) -> Self {
        self.cost[payer.index()][actor.index()] = Some(text.into());
        self
    }

    pub fn a_min(mut self, a_min: f64) -> Self {
        self.a_min = Some(a_min);
        self
    }

    pub fn build(self) -> Result<GameModel> {
        let dim = self.dim;
        let parse = |s: &str| -> Result<Expr> { Ok(Expr::parse(s)?) };
        let mut sets = Vec::with_capacity(2);
        for p in Player::BOTH {
            sets.push(match &self.actions[p.index()] {
                Some(list) => ActionSet::new(p, list.clone())?,
                None => ActionSet::single(p),
            });
        }
        let sigma_src = self
            .sigma
            .ok_or_else(|| Error::InvalidModel("sigma is required".to_string()))?;
        let sigma = sigma_src
            .iter()
            .map(|s| parse(s))
            .collect::<Result<Vec<_>>>()?;
        let mut drift: [Vec<Expr>; 2] = [Vec::new(), Vec::new()];
        for p in Player::BOTH {
            drift[p.index()] = match &self.drift[p.index()] {
                Some(c) => c.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?,
                None => vec![Expr::Num(0.0); dim],
            };
        }
        let cost_of = |i: usize, j: usize| -> Result<Expr> {
            match &self.cost[i][j] {
                Some(s) => parse(s),
                None => Ok(Expr::Num(0.0)),
            }
        };
        let cost = [
            [cost_of(0, 0)?, cost_of(0, 1)?],
            [cost_of(1, 0)?, cost_of(1, 1)?],
        ];
        let a_min = match self.a_min {
            Some(a) => a,
            None => default_a_min(&sigma, dim)?,
        };
        let mut sets = sets.into_iter();
        let actions = [
            sets.next().expect("two sets"),
            sets.next().expect("two sets"),
        ];
        GameModel::new(dim, actions, drift, sigma, cost, a_min)
    }
}

/// For constant diffusion the tightest bound is `min sigma_kk^2 / 2`; otherwise
/// a conservative small value that validation will still check.
pub fn default_a_min(sigma: &[Expr], dim: usize) -> Result<f64> {
    if sigma.iter().all(Expr::is_constant) {
        let zero = vec![0.0; dim];
        let env = Env::state(&zero);
        let mut a = f64::INFINITY;
        for s in sigma {
            let v = s.eval(&env)?;
            a = a.min(0.5 * v * v);
        }
        if a > 0.0 {
            return Ok(a);
        }
    }
    Ok(1e-6)
}

/// Probability vector over one player's actions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixedAction(Vec<f64>);

impl MixedAction {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights)?;
        Ok(Self(weights))
    }

    pub fn dirac(m: usize, u: usize) -> Self {
        let mut w = vec![0.0; m];
        w[u] = 1.0;
        Self(w)
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub(crate) fn check_simplex(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidStrategy("empty mixture".to_string()));
    }
    let mut sum = 0.0;
    for (k, &p) in w.iter().enumerate() {
        if !(p >= 0.0) {
            return Err(Error::InvalidStrategy(format!(
                "negative weight {p} at action {k}"
            )));
        }
        sum += p;
    }
    if math::abs(sum - 1.0) > MixedAction::SUM_TOL {
        return Err(Error::InvalidStrategy(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// A stationary Markov strategy on a grid: one mixture per grid node.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarkovStrategy {
    player: Player,
    grid_id: u64,
    actions: usize,
    probs: Vec<f64>,
}

impl MarkovStrategy {
    pub fn uniform(player: Player, grid: &Grid, actions: usize) -> Self {
        let w = 1.0 / actions as f64;
        Self {
            player,
            grid_id: grid.id(),
            actions,
            probs: vec![w; actions * grid.node_count()],
        }
    }

    /// Same mixture at every node.
    pub fn constant(player: Player, grid: &Grid, mixture: &MixedAction) -> Self {
        let m = mixture.as_slice();
        let mut probs = Vec::with_capacity(m.len() * grid.node_count());
        for _ in 0..grid.node_count() {
            probs.extend_from_slice(m);
        }
        Self {
            player,
            grid_id: grid.id(),
            actions: m.len(),
            probs,
        }
    }

    /// Dirac strategy choosing `choices[node]` at each node.
    pub fn pure(player: Player, grid: &Grid, actions: usize, choices: &[usize]) -> Result<Self> {
        if choices.len() != grid.node_count() {
            return Err(Error::InvalidStrategy(format!(
                "{} choices for {} nodes",
                choices.len(),
                grid.node_count()
            )));
        }
        let mut probs = vec![0.0; actions * choices.len()];
        for (k, &u) in choices.iter().enumerate() {
            if u >= actions {
                return Err(Error::InvalidStrategy(format!(
                    "action {u} out of range at node {k}"
                )));
            }
            probs[k * actions + u] = 1.0;
        }
        Ok(Self {
            player,
            grid_id: grid.id(),
            actions,
            probs,
        })
    }

    pub fn from_mixtures(
        player: Player,
        grid: &Grid,
        actions: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        let s = Self {
            player,
            grid_id: grid.id(),
            actions,
            probs,
        };
        s.validate(grid)?;
        Ok(s)
    }

    pub fn player(&self) -> Player {
        self.player
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn action_count(&self) -> usize {
        self.actions
    }

    pub fn node_count(&self) -> usize {
        self.probs.len() / self.actions.max(1)
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.probs[k * self.actions..(k + 1) * self.actions]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.probs[k * self.actions..(k + 1) * self.actions]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// The chosen action at `k` when the mixture there is a Dirac mass.
    pub fn pure_choice(&self, k: usize) -> Option<usize> {
        let m = self.node(k);
        let u = m.iter().position(|&p| p == 1.0)?;
        m.iter()
            .enumerate()
            .all(|(v, &p)| v == u || p == 0.0)
            .then_some(u)
    }

    pub fn is_pure(&self) -> bool {
        (0..self.node_count()).all(|k| self.pure_choice(k).is_some())
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.grid_id != grid.id() {
            return Err(Error::InvalidStrategy(
                "strategy belongs to a different grid".to_string(),
            ));
        }
        if self.actions == 0 || self.probs.len() != self.actions * grid.node_count() {
            return Err(Error::InvalidStrategy(format!(
                "expected {} nodes with {} actions",
                grid.node_count(),
                self.actions
            )));
        }
        for k in 0..grid.node_count() {
            check_simplex(self.node(k))
                .map_err(|e| Error::InvalidStrategy(format!("node {k}: {e}")))?;
        }
        Ok(())
    }

    /// Sup-norm distance between mixture vectors.
    pub fn sup_distance(&self, other: &MarkovStrategy) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .fold(0.0, |acc, (a, b)| acc.max(math::abs(a - b)))
    }

    /// `(1 - omega) * self + omega * target`, node-wise.
    pub fn blend(&self, target: &MarkovStrategy, omega: f64) -> MarkovStrategy {
        let probs = self
            .probs
            .iter()
            .zip(&target.probs)
            .map(|(&a, &b)| {
                if a == b {
                    a
                } else {
                    (1.0 - omega) * a + omega * b
                }
            })
            .collect();
        MarkovStrategy {
            probs,
            ..self.clone()
        }
    }

    /// Same mixtures, relabelled for the other player.
    pub fn relabel(&self, player: Player) -> MarkovStrategy {
        MarkovStrategy {
            player,
            ..self.clone()
        }
    }

    /// Transfers the strategy to `target` by nearest-node lookup.
    pub fn transfer(&self, from: &Grid, target: &Grid) -> MarkovStrategy {
        let mut probs = Vec::with_capacity(self.actions * target.node_count());
        let mut x = [0.0; 2];
        for k in 0..target.node_count() {
            target.coords_into(k, &mut x);
            let src = from.nearest_node(&x[..target.dim()]);
            probs.extend_from_slice(self.node(src));
        }
        MarkovStrategy {
            player: self.player,
            grid_id: target.id(),
            actions: self.actions,
            probs,
        }
    }
}

/// A single failed check from [`validate_model`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Violation {
    pub point: Vec<f64>,
    pub what: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationReport {
    pub probes: usize,
    /// Smallest `C0` with `sup_u <b, x>^+ + |sigma|^2 <= C0 (1 + |x|^2)` on the probes.
    pub growth_constant: f64,
}

/// Numerical checks of cost nonnegativity, nondegeneracy and affine growth on
/// the probe points.
pub fn validate_model(model: &GameModel, probe: &[Vec<f64>]) -> Result<ValidationReport> {
    let d = model.dim;
    let mut violations = Vec::new();
    let mut growth: f64 = 0.0;
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d];
    for x in probe {
        if x.len() != d {
            return Err(Error::InvalidArgument(format!(
                "probe point has {} coordinates, expected {d}",
                x.len()
            )));
        }
        for payer in Player::BOTH {
            for actor in Player::BOTH {
                for u in 0..model.action_count(actor) {
                    let r = model.cost_component(payer, actor, x, u)?;
                    if !(r >= 0.0) {
                        violations.push(Violation {
                            point: x.clone(),
                            what: format!(
                                "negative cost r{}{} at action `{}`",
                                payer.number(),
                                actor.number(),
                                model.actions(actor).actions()[u].name
                            ),
                            value: r,
                        });
                    }
                }
            }
        }
        model.sigma(x, &mut s)?;
        let mut sigma_norm2 = 0.0;
        for (k, &sk) in s.iter().enumerate() {
            sigma_norm2 += sk * sk;
            if !(sk * sk >= 2.0 * model.a_min) {
                violations.push(Violation {
                    point: x.clone(),
                    what: format!("degenerate diffusion on axis {k}"),
                    value: sk * sk,
                });
            }
        }
        let mut inward: f64 = 0.0;
        for u1 in 0..model.action_count(Player::One) {
            for u2 in 0..model.action_count(Player::Two) {
                model.pure_drift(x, u1, u2, &mut b)?;
                let dot: f64 = b.iter().zip(x).map(|(bi, xi)| bi * xi).sum();
                inward = inward.max(dot.max(0.0));
            }
        }
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        growth = growth.max((inward + sigma_norm2) / (1.0 + norm2));
    }
    if violations.is_empty() {
        Ok(ValidationReport {
            probes: probe.len(),
            growth_constant: growth,
        })
    } else {
        Err(Error::ValidationFailed(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(b1: &str, f1: &[f64], b2: &str) -> GameModel {
        GameModel::builder(1)
            .actions(
                Player::One,
                f1.iter()
                    .enumerate()
                    .map(|(k, &f)| (format!("u{k}"), vec![f])),
            )
            .drift(Player::One, [b1])
            .drift(Player::Two, [b2])
            .sigma(["1"])
            .build()
            .unwrap()
    }

    #[test]
    fn relaxed_drift_cases() {
        let m = one_d("a0", &[-1.0, 1.0], "0");
        let v = m.relaxed_drift(&[0.3], &[0.5, 0.5], &[1.0]).unwrap();
        assert_eq!(v, vec![0.0]);
        let dirac = m.relaxed_drift(&[0.3], &[0.0, 1.0], &[1.0]).unwrap();
        assert_eq!(dirac, vec![1.0]);

        let m = one_d("a0", &[0.0, 1.0], "-x0");
        let v = m.relaxed_drift(&[2.0], &[0.3, 0.7], &[1.0]).unwrap();
        assert!((v[0] - (-1.3)).abs() < 1e-15);
    }

    #[test]
    fn relaxed_cost_cases() {
        let m = GameModel::builder(1)
            .actions(Player::One, [("z", vec![0.0]), ("o", vec![1.0])])
            .sigma(["1"])
            .cost(Player::One, Player::One, "a0^2")
            .cost(Player::Two, Player::One, "0.25")
            .cost(Player::Two, Player::Two, "0.5")
            .build()
            .unwrap();
        assert_eq!(
            m.relaxed_cost(Player::One, &[1.0], &[0.5, 0.5], &[1.0])
                .unwrap(),
            0.5
        );
        assert_eq!(
            m.relaxed_cost(Player::Two, &[9.0], &[0.2, 0.8], &[1.0])
                .unwrap(),
            0.75
        );
        assert_eq!(
            m.relaxed_cost(Player::One, &[1.0], &[0.0, 1.0], &[1.0])
                .unwrap(),
            1.0
        );
    }

    #[test]
    fn validation() {
        let ou = one_d("-x0", &[0.0], "0");
        let probes: Vec<Vec<f64>> = (-10..=10).map(|k| vec![k as f64 * 0.5]).collect();
        let rep = validate_model(&ou, &probes).unwrap();
        assert!((rep.growth_constant - 1.0).abs() < 1e-15);
        let far: Vec<Vec<f64>> = probes
            .iter()
            .filter(|p| p[0].abs() >= 1.0)
            .cloned()
            .collect();
        let rep = validate_model(&ou, &far).unwrap();
        assert!(rep.growth_constant <= 0.5 + 1e-15);

        let neg = GameModel::builder(1)
            .sigma(["1"])
            .cost(Player::One, Player::One, "-1")
            .build()
            .unwrap();
        assert!(matches!(
            validate_model(&neg, &probes),
            Err(Error::ValidationFailed(v)) if v.len() == probes.len()
        ));

        let flat = GameModel::builder(1).sigma(["0"]).build().unwrap();
        assert!(matches!(
            validate_model(&flat, &probes),
            Err(Error::ValidationFailed(_))
        ));
    }

    #[test]
    fn construction_errors() {
        let bad = GameModel::builder(1)
            .actions(Player::One, [("a", vec![0.0]), ("b", vec![1.0, 2.0])])
            .sigma(["1"])
            .build();
        assert!(matches!(bad, Err(Error::InvalidModel(m)) if m.contains("`b`")));
        let dup = ActionSet::new(
            Player::One,
            vec![Action::new("a", vec![]), Action::new("a", vec![])],
        );
        assert!(dup.is_err());
        let scope = GameModel::builder(1).sigma(["x1"]).build();
        assert!(matches!(scope, Err(Error::Expr(_))));
        let feat = GameModel::builder(1)
            .drift(Player::Two, ["a0"])
            .sigma(["1"])
            .build();
        assert!(feat.is_err());
        assert!(GameModel::builder(1).build().is_err());
        assert!(GameModel::builder(3)
            .sigma(["1", "1", "1"])
            .build()
            .is_err());
    }

    #[test]
    fn mixed_action_simplex() {
        assert!(MixedAction::new(vec![0.3, 0.7]).is_ok());
        assert!(MixedAction::new(vec![0.3, 0.6]).is_err());
        assert!(MixedAction::new(vec![-0.1, 1.1]).is_err());
        assert_eq!(MixedAction::dirac(3, 1).as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn swapping_players_twice_is_identity() {
        let m = GameModel::builder(1)
            .actions(Player::One, [("l", vec![-1.0]), ("r", vec![1.0])])
            .drift(Player::One, ["a0"])
            .drift(Player::Two, ["-x0"])
            .cost(Player::One, Player::Two, "1")
            .cost(Player::Two, Player::One, "a0^2")
            .sigma(["1"])
            .build()
            .unwrap();
        let s = m.swapped();
        assert_eq!(s.action_count(Player::Two), 2);
        assert_eq!(
            s.cost_expr(Player::One, Player::Two),
            m.cost_expr(Player::Two, Player::One)
        );
        let back = s.swapped();
        assert_eq!(back.drift_exprs(Player::One), m.drift_exprs(Player::One));
    }
}
