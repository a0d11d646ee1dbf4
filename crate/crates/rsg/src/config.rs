//! TOML run configuration.
//!
//! The file is deserialized into raw sections first and then converted into
//! validated core types, so that every error can name the offending key.

use std::fmt;
use std::path::Path;

use rsg_core::eigen::{EigenMethod, EigenOptions};
use rsg_core::hjb::{OpponentRule, SolveOptions, StepRule};
use rsg_core::lyapunov::{LyapunovCase, LyapunovSpec};
use rsg_core::model::{default_a_min, validate_model, Action};
use rsg_core::nash::{NashInit, NashOptions};
use rsg_core::simulate::SimConfig;
use rsg_core::{ActionSet, Expr, GameModel, MixedAction, Player};
use serde::Deserialize;

/// A configuration problem at a key path such as `model.sigma`.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {reason}")]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, reason: impl fmt::Display) -> Self {
        Self {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Exprs {
    One(String),
    Many(Vec<String>),
}

impl Exprs {
    fn into_vec(self) -> Vec<String> {
        match self {
            Exprs::One(s) => vec![s],
            Exprs::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    threads: usize,
    model: Option<RawModel>,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    simulate: RawSimulate,
    lyapunov: Option<RawLyapunov>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    dimension: Option<usize>,
    a_min: Option<f64>,
    sigma: Option<Exprs>,
    #[serde(default)]
    drift: RawDrift,
    #[serde(default)]
    cost: RawCost,
    player1: Option<RawPlayer>,
    player2: Option<RawPlayer>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    b1: Option<Exprs>,
    b2: Option<Exprs>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    r11: Option<String>,
    r12: Option<String>,
    r21: Option<String>,
    r22: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlayer {
    actions: Vec<RawAction>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    name: String,
    #[serde(default)]
    features: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    radius: Option<f64>,
    radii: Option<Vec<f64>>,
    h: Option<f64>,
    cells_per_radius: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    player: Option<usize>,
    opponent: Option<RawOpponent>,
    tol_eig: Option<f64>,
    tol_lambda: Option<f64>,
    tol_strategy: Option<f64>,
    tol_res: Option<f64>,
    tol_dev: Option<f64>,
    damping: Option<f64>,
    max_iter: Option<usize>,
    max_outer: Option<usize>,
    eigen_max_iter: Option<usize>,
    eigen_method: Option<String>,
    init: Option<String>,
    deviations: Option<usize>,
    warm_start: Option<bool>,
    export_stencil: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawOpponent {
    Named(String),
    Table(RawOpponentTable),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOpponentTable {
    pure: Option<String>,
    mixture: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    dt: Option<f64>,
    horizon: Option<f64>,
    paths: Option<usize>,
    clamp: Option<f64>,
    x0: Option<Vec<f64>>,
    strategies: Option<String>,
    dump_paths: Option<bool>,
    representation: Option<RawRepresentation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRepresentation {
    r_ball: f64,
    x0: Vec<f64>,
    paths: Option<usize>,
    dt: Option<f64>,
    horizon: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLyapunov {
    v: String,
    case: String,
    delta: Option<f64>,
    ell: Option<String>,
    k_radius: f64,
    h_chk: Option<f64>,
}

/// Geometry of the solves: radii (the last one is used by single-grid
/// commands) and the spacing rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub radii: Vec<f64>,
    pub step: StepRule,
}

impl GridConfig {
    pub fn radius(&self) -> f64 {
        *self.radii.last().expect("validated non-empty")
    }

    pub fn h(&self) -> f64 {
        self.step.spacing(self.radius())
    }
}

/// Which strategy pair the `simulate` command uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimStrategies {
    /// Best response of `solver.player` against the configured opponent.
    BestResponse,
    /// The pair returned by the Nash search.
    Nash,
    /// Uniform mixtures for both players.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepConfig {
    pub r_ball: f64,
    pub x0: Vec<f64>,
    pub sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub sim: SimConfig,
    pub x0: Vec<f64>,
    pub strategies: SimStrategies,
    pub dump_paths: bool,
    pub representation: Option<RepConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovConfig {
    pub spec: LyapunovSpec,
    pub h_chk: Option<f64>,
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub model: GameModel,
    pub grid: GridConfig,
    pub player: Player,
    pub opponent: OpponentRule,
    pub solve: SolveOptions,
    pub nash: NashOptions,
    pub tol_dev: f64,
    pub deviations: usize,
    pub warm_start: bool,
    pub export_stencil: bool,
    pub simulate: SimulateConfig,
    pub lyapunov: Option<LyapunovConfig>,
}

impl RunConfig {
    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.simulate.sim.seed = seed;
        if let Some(rep) = &mut self.simulate.representation {
            rep.sim.seed = seed;
        }
        if let NashInit::Random(_) = self.nash.init {
            self.nash.init = NashInit::Random(seed);
        }
        self
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(path.display().to_string(), e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let reason = e.message().to_string();
        ConfigError::new("<toml>", format!("{reason}{}", location(text, e.span())))
    })?;
    convert(raw)
}

fn location(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

fn parse_expr(path: &str, text: &str) -> Result<Expr> {
    Expr::parse(text).map_err(|e| ConfigError::new(path, format!("{e} in {text:?}")))
}

fn parse_exprs(path: &str, src: Option<Exprs>, dim: usize, default: &str) -> Result<Vec<Expr>> {
    let list = match src {
        Some(e) => e.into_vec(),
        None => vec![default.to_string(); dim],
    };
    if list.len() != dim {
        return Err(ConfigError::new(
            path,
            format!("expected {dim} component(s), found {}", list.len()),
        ));
    }
    list.iter()
        .enumerate()
        .map(|(k, s)| parse_expr(&format!("{path}[{k}]"), s))
        .collect()
}

fn positive(path: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(
            path,
            format!("must be positive, found {v}"),
        ))
    }
}

fn convert_model(raw: RawModel) -> Result<GameModel> {
    let dim = raw
        .dimension
        .ok_or_else(|| ConfigError::new("model.dimension", "missing"))?;
    if !(1..=2).contains(&dim) {
        return Err(ConfigError::new(
            "model.dimension",
            format!("{dim} is not 1 or 2"),
        ));
    }
    let sigma_src = raw
        .sigma
        .ok_or_else(|| ConfigError::new("model.sigma", "missing"))?;
    let sigma = parse_exprs("model.sigma", Some(sigma_src), dim, "")?;
    let drift = [
        parse_exprs("model.drift.b1", raw.drift.b1, dim, "0")?,
        parse_exprs("model.drift.b2", raw.drift.b2, dim, "0")?,
    ];
    let cost_of = |key: &str, src: Option<String>| -> Result<Expr> {
        parse_expr(&format!("model.cost.{key}"), src.as_deref().unwrap_or("0"))
    };
    let cost = [
        [cost_of("r11", raw.cost.r11)?, cost_of("r12", raw.cost.r12)?],
        [cost_of("r21", raw.cost.r21)?, cost_of("r22", raw.cost.r22)?],
    ];
    let mut sets = Vec::with_capacity(2);
    for (p, player) in [(Player::One, raw.player1), (Player::Two, raw.player2)] {
        let path = format!("model.player{}.actions", p.number());
        sets.push(match player {
            None => ActionSet::single(p),
            Some(list) => {
                let actions = list
                    .actions
                    .into_iter()
                    .map(|a| Action::new(a.name, a.features))
                    .collect();
                ActionSet::new(p, actions).map_err(|e| ConfigError::new(&path, e))?
            }
        });
    }
    let mut sets = sets.into_iter();
    let actions = [
        sets.next().expect("two sets"),
        sets.next().expect("two sets"),
    ];
    let a_min = match raw.a_min {
        Some(a) => positive("model.a_min", a)?,
        None => default_a_min(&sigma, dim).map_err(|e| ConfigError::new("model.sigma", e))?,
    };
    GameModel::new(dim, actions, drift, sigma, cost, a_min)
        .map_err(|e| ConfigError::new("model", e))
}

fn convert_grid(raw: RawGrid) -> Result<GridConfig> {
    let radii = match (raw.radius, raw.radii) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::new(
                "grid",
                "give either radius or radii, not both",
            ))
        }
        (Some(r), None) => vec![positive("grid.radius", r)?],
        (None, Some(list)) => {
            if list.is_empty() {
                return Err(ConfigError::new("grid.radii", "empty list"));
            }
            for (k, &r) in list.iter().enumerate() {
                positive(&format!("grid.radii[{k}]"), r)?;
            }
            if list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ConfigError::new(
                    "grid.radii",
                    "must be strictly increasing",
                ));
            }
            list
        }
        (None, None) => return Err(ConfigError::new("grid.radius", "missing")),
    };
    let step = match (raw.h, raw.cells_per_radius) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::new(
                "grid",
                "give either h or cells_per_radius, not both",
            ))
        }
        (Some(h), None) => StepRule::Fixed(positive("grid.h", h)?),
        (None, Some(0)) => {
            return Err(ConfigError::new(
                "grid.cells_per_radius",
                "must be positive",
            ))
        }
        (None, Some(n)) => StepRule::CellsPerRadius(n),
        (None, None) => StepRule::default(),
    };
    for (k, &r) in radii.iter().enumerate() {
        let h = step.spacing(r);
        rsg_core::build_grid(1, r, h)
            .map_err(|e| ConfigError::new(format!("grid.radii[{k}]"), e))?;
    }
    Ok(GridConfig { radii, step })
}

fn convert_opponent(
    raw: Option<RawOpponent>,
    model: &GameModel,
    j: Player,
) -> Result<OpponentRule> {
    let path = "solver.opponent";
    match raw {
        None => Ok(OpponentRule::Uniform),
        Some(RawOpponent::Named(s)) if s == "uniform" => Ok(OpponentRule::Uniform),
        Some(RawOpponent::Named(s)) => Err(ConfigError::new(path, format!("unknown rule {s:?}"))),
        Some(RawOpponent::Table(t)) => match (t.pure, t.mixture) {
            (Some(name), None) => model
                .actions(j)
                .position(&name)
                .map(OpponentRule::Pure)
                .ok_or_else(|| {
                    ConfigError::new(format!("{path}.pure"), format!("no action {name:?}"))
                }),
            (None, Some(w)) => {
                if w.len() != model.action_count(j) {
                    return Err(ConfigError::new(
                        format!("{path}.mixture"),
                        format!("{} weights for {} actions", w.len(), model.action_count(j)),
                    ));
                }
                MixedAction::new(w)
                    .map(OpponentRule::Mixture)
                    .map_err(|e| ConfigError::new(format!("{path}.mixture"), e))
            }
            _ => Err(ConfigError::new(
                path,
                "give exactly one of pure or mixture",
            )),
        },
    }
}

fn convert_simulate(
    raw: RawSimulate,
    seed: u64,
    grid: &GridConfig,
    dim: usize,
) -> Result<SimulateConfig> {
    let clamp = match raw.clamp {
        Some(c) => positive("simulate.clamp", c)?,
        None => grid.radius(),
    };
    let sim = SimConfig {
        dt: positive("simulate.dt", raw.dt.unwrap_or(1e-3))?,
        horizon: positive("simulate.horizon", raw.horizon.unwrap_or(50.0))?,
        paths: raw.paths.unwrap_or(2000),
        seed,
        clamp,
    };
    sim.validate()
        .map_err(|e| ConfigError::new("simulate", e))?;
    let x0 = raw.x0.unwrap_or_else(|| vec![0.0; dim]);
    if x0.len() != dim {
        return Err(ConfigError::new(
            "simulate.x0",
            format!("expected {dim} coordinates"),
        ));
    }
    let strategies = match raw.strategies.as_deref().unwrap_or("best-response") {
        "best-response" => SimStrategies::BestResponse,
        "nash" => SimStrategies::Nash,
        "uniform" => SimStrategies::Uniform,
        other => {
            return Err(ConfigError::new(
                "simulate.strategies",
                format!("unknown value {other:?}"),
            ))
        }
    };
    let representation = match raw.representation {
        None => None,
        Some(r) => {
            if r.x0.len() != dim {
                return Err(ConfigError::new(
                    "simulate.representation.x0",
                    format!("expected {dim} coordinates"),
                ));
            }
            let rep_sim = SimConfig {
                dt: positive("simulate.representation.dt", r.dt.unwrap_or(sim.dt))?,
                horizon: positive(
                    "simulate.representation.horizon",
                    r.horizon.unwrap_or(sim.horizon),
                )?,
                paths: r.paths.unwrap_or(sim.paths),
                ..sim
            };
            rep_sim
                .validate()
                .map_err(|e| ConfigError::new("simulate.representation", e))?;
            Some(RepConfig {
                r_ball: positive("simulate.representation.r_ball", r.r_ball)?,
                x0: r.x0,
                sim: rep_sim,
            })
        }
    };
    Ok(SimulateConfig {
        sim,
        x0,
        strategies,
        dump_paths: raw.dump_paths.unwrap_or(false),
        representation,
    })
}

fn convert_lyapunov(raw: RawLyapunov, dim: usize) -> Result<LyapunovConfig> {
    let v = parse_expr("lyapunov.v", &raw.v)?;
    v.check_scope(dim, 0)
        .map_err(|e| ConfigError::new("lyapunov.v", e))?;
    let case = match raw.case.as_str() {
        "bounded" => LyapunovCase::Bounded {
            delta: positive(
                "lyapunov.delta",
                raw.delta.ok_or_else(|| {
                    ConfigError::new("lyapunov.delta", "missing for the bounded case")
                })?,
            )?,
        },
        "unbounded" => {
            let text = raw.ell.ok_or_else(|| {
                ConfigError::new("lyapunov.ell", "missing for the unbounded case")
            })?;
            let ell = parse_expr("lyapunov.ell", &text)?;
            ell.check_scope(dim, 0)
                .map_err(|e| ConfigError::new("lyapunov.ell", e))?;
            LyapunovCase::Unbounded { ell }
        }
        other => {
            return Err(ConfigError::new(
                "lyapunov.case",
                format!("unknown case {other:?}"),
            ))
        }
    };
    Ok(LyapunovConfig {
        spec: LyapunovSpec {
            v,
            case,
            k_radius: positive("lyapunov.k_radius", raw.k_radius)?,
        },
        h_chk: raw
            .h_chk
            .map(|h| positive("lyapunov.h_chk", h))
            .transpose()?,
    })
}

/// Probe points for model validation: a coarse lattice over the largest box.
fn probe_points(dim: usize, radius: f64) -> Vec<Vec<f64>> {
    const SIDE: usize = 21;
    let axis: Vec<f64> = (0..SIDE)
        .map(|k| -radius + 2.0 * radius * k as f64 / (SIDE - 1) as f64)
        .collect();
    if dim == 1 {
        axis.iter().map(|&x| vec![x]).collect()
    } else {
        axis.iter()
            .flat_map(|&x| axis.iter().map(move |&y| vec![x, y]))
            .collect()
    }
}

fn convert(raw: RawConfig) -> Result<RunConfig> {
    let model_raw = raw
        .model
        .ok_or_else(|| ConfigError::new("model", "missing section"))?;
    let model = convert_model(model_raw)?;
    let grid = convert_grid(raw.grid)?;
    if let Err(e) = validate_model(&model, &probe_points(model.dim(), grid.radius())) {
        let reason = match e {
            rsg_core::Error::ValidationFailed(list) => list
                .iter()
                .take(5)
                .map(|v| format!("{} = {} at {:?}", v.what, v.value, v.point))
                .collect::<Vec<_>>()
                .join("; "),
            other => other.to_string(),
        };
        return Err(ConfigError::new("model", reason));
    }

    let s = raw.solver;
    let player = match s.player.unwrap_or(1) {
        n @ (1 | 2) => Player::from_number(n).expect("1 or 2"),
        n => {
            return Err(ConfigError::new(
                "solver.player",
                format!("{n} is not 1 or 2"),
            ))
        }
    };
    let opponent = convert_opponent(s.opponent, &model, player.other())?;
    let method = match s.eigen_method.as_deref().unwrap_or("shift-invert") {
        "shift-invert" => EigenMethod::ShiftInvert,
        "power" => EigenMethod::Power,
        other => {
            return Err(ConfigError::new(
                "solver.eigen_method",
                format!("unknown method {other:?}"),
            ))
        }
    };
    let eigen = EigenOptions {
        tol: positive("solver.tol_eig", s.tol_eig.unwrap_or(1e-10))?,
        max_iter: s.eigen_max_iter.unwrap_or(EigenOptions::default().max_iter),
        method,
    };
    let solve = SolveOptions {
        eigen,
        tol_lambda: positive("solver.tol_lambda", s.tol_lambda.unwrap_or(1e-10))?,
        max_iter: s.max_outer.unwrap_or(SolveOptions::default().max_iter),
    };
    let damping = s.damping.unwrap_or(0.5);
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(ConfigError::new(
            "solver.damping",
            format!("{damping} is outside (0, 1]"),
        ));
    }
    let init = match s.init.as_deref().unwrap_or("uniform") {
        "uniform" => NashInit::Uniform,
        "random" => NashInit::Random(raw.seed),
        other => {
            return Err(ConfigError::new(
                "solver.init",
                format!("unknown value {other:?}"),
            ))
        }
    };
    let nash = NashOptions {
        solve,
        damping,
        tol_strategy: positive("solver.tol_strategy", s.tol_strategy.unwrap_or(1e-8))?,
        tol_res: positive("solver.tol_res", s.tol_res.unwrap_or(1e-6))?,
        max_iter: s.max_iter.unwrap_or(NashOptions::default().max_iter),
        init,
    };
    let simulate = convert_simulate(raw.simulate, raw.seed, &grid, model.dim())?;
    let lyapunov = raw
        .lyapunov
        .map(|l| convert_lyapunov(l, model.dim()))
        .transpose()?;
    Ok(RunConfig {
        seed: raw.seed,
        threads: raw.threads,
        model,
        grid,
        player,
        opponent,
        solve,
        nash,
        tol_dev: positive("solver.tol_dev", s.tol_dev.unwrap_or(1e-8))?,
        deviations: s.deviations.unwrap_or(20),
        warm_start: s.warm_start.unwrap_or(true),
        export_stencil: s.export_stencil.unwrap_or(false),
        simulate,
        lyapunov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
dimension = 1
sigma = "1"
drift.b1 = "-x0"

[grid]
radius = 2.0
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.model.dim(), 1);
        assert_eq!(c.model.action_count(Player::One), 1);
        assert_eq!(c.grid.step, StepRule::CellsPerRadius(300));
        assert_eq!(c.solve.eigen.tol, 1e-10);
        assert_eq!(c.nash.damping, 0.5);
        assert_eq!(c.tol_dev, 1e-8);
        assert_eq!(c.simulate.sim.clamp, 2.0);
        assert_eq!(c.player, Player::One);
    }

    #[test]
    fn missing_sigma_names_the_key() {
        let text = MINIMAL.replace("sigma = \"1\"\n", "");
        assert_eq!(parse_config(&text).unwrap_err().path, "model.sigma");
    }

    #[test]
    fn feature_length_mismatch_names_the_action() {
        let text = format!(
            "{MINIMAL}\n[[model.player1.actions]]\nname = \"a\"\nfeatures = [1.0]\n\n[[model.player1.actions]]\nname = \"wide\"\nfeatures = [1.0, 2.0]\n"
        );
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.path, "model.player1.actions");
        assert!(err.reason.contains("wide"), "{err}");
    }

    #[test]
    fn expression_errors_carry_location() {
        let text = MINIMAL.replace("drift.b1 = \"-x0\"", "drift.b1 = \"-x0 +\"");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.path, "model.drift.b1[0]");
        assert!(err.reason.contains("byte 5"), "{err}");
    }

    #[test]
    fn invalid_model_is_rejected() {
        let text = MINIMAL.replace("sigma = \"1\"", "sigma = \"0\"");
        assert_eq!(parse_config(&text).unwrap_err().path, "model");
        let text = format!("{MINIMAL}\n[model.cost]\nr11 = \"-1\"\n");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("radius = 2.0", "radius = 2.0\nspacing = 0.1");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn seed_override_reaches_every_consumer() {
        let text = format!("{MINIMAL}\n[solver]\ninit = \"random\"\n");
        let c = parse_config(&text).unwrap().with_seed(99);
        assert_eq!(c.simulate.sim.seed, 99);
        assert_eq!(c.nash.init, NashInit::Random(99));
    }
}
