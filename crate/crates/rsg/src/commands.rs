//! Command dispatch.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rsg_core::eigen::EigenPair;
use rsg_core::hjb::{
    dirichlet_sweep, frozen_eigenpair, solve_semilinear_eigen, OpponentRule, SemilinearSolveReport,
    Termination,
};
use rsg_core::lyapunov::{check_lyapunov, cost_bound};
use rsg_core::nash::{find_nash, verify_nash, Deviations, NashReport};
use rsg_core::simulate::{RepTarget, Simulator};
use rsg_core::{build_grid, discretize, Error, Grid, GridGame, MarkovStrategy, Player};

use crate::config::{ConfigError, RunConfig, SimStrategies};
use crate::error::RunError;
use crate::parallel;
use crate::report::{
    CostSummary, EigenReport, EigenSummary, GridInfo, Infeasible, LyapunovOutput, Metadata,
    NashOutput, OutDir, RepSummary, SimulateReport, SweepReport, Verification,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Eigen,
    Sweep,
    Nash,
    Simulate,
    CheckLyapunov,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::Sweep => "sweep",
            Command::Nash => "nash",
            Command::Simulate => "simulate",
            Command::CheckLyapunov => "check-lyapunov",
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The run finished but reports non-convergence or a failed check.
    Negative(String),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Negative(_) => 2,
        }
    }

    fn unless(ok: bool, reason: impl Into<String>) -> Self {
        if ok {
            Outcome::Success
        } else {
            Outcome::Negative(reason.into())
        }
    }
}

/// Runs `command` and writes its reports and `metadata.json` into `out`.
pub fn run(
    command: Command,
    cfg: &RunConfig,
    config_path: &str,
    out: &Path,
) -> Result<Outcome, RunError> {
    let mut dir = OutDir::create(out)?;
    let outcome = match command {
        Command::Eigen => eigen(cfg, &mut dir)?,
        Command::Sweep => sweep(cfg, &mut dir)?,
        Command::Nash => nash(cfg, &mut dir)?,
        Command::Simulate => simulate(cfg, &mut dir)?,
        Command::CheckLyapunov => lyapunov(cfg, &mut dir)?,
    };
    let unix_time = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = Metadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config_path.to_string(),
        seed: cfg.seed,
        threads: cfg.threads,
        unix_time,
        files: dir.files().to_vec(),
    };
    dir.json("metadata.json", command.name(), meta)?;
    Ok(outcome)
}

fn describe(rule: &OpponentRule, cfg: &RunConfig) -> String {
    let j = cfg.player.other();
    match rule {
        OpponentRule::Uniform => "uniform".into(),
        OpponentRule::Pure(u) => format!("pure:{}", cfg.model.actions(j).actions()[*u].name),
        OpponentRule::Mixture(m) => format!("mixture:{:?}", m.as_slice()),
        OpponentRule::Transfer { .. } => "transfer".into(),
    }
}

fn final_grid(cfg: &RunConfig) -> Result<Grid, RunError> {
    Ok(build_grid(
        cfg.model.dim(),
        cfg.grid.radius(),
        cfg.grid.h(),
    )?)
}

/// Orders a player's strategy and the opponent's into `(v1, v2)`.
fn pair<'a>(
    i: Player,
    own: &'a MarkovStrategy,
    other: &'a MarkovStrategy,
) -> (&'a MarkovStrategy, &'a MarkovStrategy) {
    match i {
        Player::One => (own, other),
        Player::Two => (other, own),
    }
}

fn best_response(
    cfg: &RunConfig,
    game: &GridGame<'_>,
) -> Result<(SemilinearSolveReport, MarkovStrategy), RunError> {
    let j = cfg.player.other();
    let opp = cfg
        .opponent
        .place(j, game.grid(), cfg.model.action_count(j))?;
    let rep = solve_semilinear_eigen(game, cfg.player, &opp, None, &cfg.solve)?;
    Ok((rep, opp))
}

fn eigen(cfg: &RunConfig, dir: &mut OutDir) -> Result<Outcome, RunError> {
    let grid = final_grid(cfg)?;
    let game = GridGame::new(grid.clone(), &cfg.model)?;
    let (rep, opp) = best_response(cfg, &game)?;
    let (v1, v2) = pair(cfg.player, &rep.strategy, &opp);
    if cfg.export_stencil {
        let mut text = String::new();
        discretize(&game, cfg.player, v1, v2)?
            .write_text(&mut text)
            .expect("writing to a String");
        dir.text("stencil.txt", &text)?;
    }
    dir.json(
        "eigen.json",
        "eigen",
        EigenReport {
            player: cfg.player.number(),
            opponent: describe(&cfg.opponent, cfg),
            grid: GridInfo::from(&grid),
            eigen: EigenSummary::from(&rep.eigen),
            history: rep.history.clone(),
            termination: rep.termination,
            hjb_residual: rep.residual,
        },
    )?;
    dir.psi_csv("psi.csv", &grid, &rep.eigen.psi)?;
    dir.strategies(&grid, &cfg.model, v1, v2)?;
    Ok(Outcome::unless(
        rep.termination != Termination::MaxIter,
        "policy iteration hit its iteration limit",
    ))
}

fn sweep(cfg: &RunConfig, dir: &mut OutDir) -> Result<Outcome, RunError> {
    let res = dirichlet_sweep(
        &cfg.model,
        cfg.player,
        &cfg.opponent,
        &cfg.grid.radii,
        cfg.grid.step,
        &cfg.solve,
        cfg.warm_start,
    )?;
    let lambdas: Vec<f64> = res.entries.iter().map(|e| e.lambda).collect();
    let all_converged = res
        .entries
        .iter()
        .all(|e| e.termination != Termination::MaxIter);
    let grid = &res.last_grid;
    let j = cfg.player.other();
    let opp = cfg.opponent.place(j, grid, cfg.model.action_count(j))?;
    dir.json(
        "sweep.json",
        "sweep",
        SweepReport {
            player: cfg.player.number(),
            opponent: describe(&cfg.opponent, cfg),
            warm_start: cfg.warm_start,
            nondecreasing: lambdas.windows(2).all(|w| w[1] >= w[0]),
            lambdas,
            entries: res.entries.clone(),
            lambda_inf: res.lambda_inf,
            grid: GridInfo::from(grid),
            eigen: EigenSummary::from(&res.last.eigen),
        },
    )?;
    dir.psi_csv("psi.csv", grid, &res.last.eigen.psi)?;
    let (v1, v2) = pair(cfg.player, &res.last.strategy, &opp);
    dir.strategies(grid, &cfg.model, v1, v2)?;
    Ok(Outcome::unless(
        all_converged,
        "policy iteration hit its iteration limit on some radius",
    ))
}

fn nash(cfg: &RunConfig, dir: &mut OutDir) -> Result<Outcome, RunError> {
    let grid = final_grid(cfg)?;
    let game = GridGame::new(grid.clone(), &cfg.model)?;
    let rep = find_nash(&game, &cfg.nash)?;
    let verification = if rep.converged {
        let deviations = Deviations::Random {
            count: cfg.deviations,
            seed: cfg.seed,
        };
        match verify_nash(&game, &rep, &deviations, cfg.tol_dev, &cfg.solve.eigen) {
            Ok(table) => Some(Verification::from(table)),
            Err(Error::NashViolation(table)) => Some(Verification::from(*table)),
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let verified = verification.as_ref().is_some_and(|v| v.passed);
    write_nash(dir, &grid, cfg, &rep, verification)?;
    Ok(if !rep.converged {
        Outcome::Negative("best-response iteration did not converge".into())
    } else {
        Outcome::unless(verified, "a unilateral deviation lowers a player's cost")
    })
}

fn write_nash(
    dir: &mut OutDir,
    grid: &Grid,
    cfg: &RunConfig,
    rep: &NashReport,
    verification: Option<Verification>,
) -> Result<(), RunError> {
    dir.json(
        "nash.json",
        "nash",
        NashOutput {
            grid: GridInfo::from(grid),
            converged: rep.converged,
            cycle_detected: rep.cycle_detected,
            lambda: [rep.lambda(Player::One), rep.lambda(Player::Two)],
            eigen: [
                EigenSummary::from(&rep.eigen[0]),
                EigenSummary::from(&rep.eigen[1]),
            ],
            residuals: rep.residuals,
            trace: rep.trace.clone(),
            verification,
        },
    )?;
    dir.psi_csv("psi_p1.csv", grid, &rep.eigen[0].psi)?;
    dir.psi_csv("psi_p2.csv", grid, &rep.eigen[1].psi)?;
    dir.strategies(grid, &cfg.model, &rep.v1, &rep.v2)
}

/// Strategy pair for `simulate`, with the payer's eigenpair under it.
struct SimPair {
    v1: MarkovStrategy,
    v2: MarkovStrategy,
    eigen: EigenPair,
    converged: bool,
}

fn sim_pair(cfg: &RunConfig, game: &GridGame<'_>) -> Result<SimPair, RunError> {
    let i = cfg.player;
    Ok(match cfg.simulate.strategies {
        SimStrategies::BestResponse => {
            let (rep, opp) = best_response(cfg, game)?;
            let (v1, v2) = pair(i, &rep.strategy, &opp);
            SimPair {
                v1: v1.clone(),
                v2: v2.clone(),
                converged: rep.termination != Termination::MaxIter,
                eigen: rep.eigen,
            }
        }
        SimStrategies::Nash => {
            let rep = find_nash(game, &cfg.nash)?;
            SimPair {
                eigen: rep.eigen[i.index()].clone(),
                converged: rep.converged,
                v1: rep.v1,
                v2: rep.v2,
            }
        }
        SimStrategies::Uniform => {
            let grid = game.grid();
            let v1 =
                MarkovStrategy::uniform(Player::One, grid, cfg.model.action_count(Player::One));
            let v2 =
                MarkovStrategy::uniform(Player::Two, grid, cfg.model.action_count(Player::Two));
            let eigen = frozen_eigenpair(game, i, &v1, &v2, None, &cfg.solve.eigen)?;
            SimPair {
                v1,
                v2,
                eigen,
                converged: true,
            }
        }
    })
}

fn simulate(cfg: &RunConfig, dir: &mut OutDir) -> Result<Outcome, RunError> {
    let grid = final_grid(cfg)?;
    let game = GridGame::new(grid.clone(), &cfg.model)?;
    let sp = sim_pair(cfg, &game)?;
    let sim = Simulator::new(&cfg.model, &grid, &sp.v1, &sp.v2)?;
    let pool = parallel::pool(cfg.threads)?;
    let sc = &cfg.simulate;
    let est = parallel::estimate_rho(&pool, &sim, cfg.player, &sc.x0, &sc.sim)?;
    let rep = match &sc.representation {
        None => None,
        Some(r) => {
            let target = RepTarget {
                lambda: sp.eigen.lambda,
                psi: &sp.eigen.psi,
                r_ball: r.r_ball,
            };
            let check =
                parallel::check_stochastic_rep(&pool, &sim, cfg.player, &target, &r.x0, &r.sim)?;
            Some((
                RepSummary::new(r.r_ball, r.x0.clone(), sp.eigen.lambda, &check),
                check,
            ))
        }
    };
    dir.json(
        "simulate.json",
        "simulate",
        SimulateReport {
            payer: cfg.player.number(),
            strategies: match sc.strategies {
                SimStrategies::BestResponse => "best-response",
                SimStrategies::Nash => "nash",
                SimStrategies::Uniform => "uniform",
            }
            .into(),
            grid: GridInfo::from(&grid),
            x0: sc.x0.clone(),
            dt: sc.sim.dt,
            seed: sc.sim.seed,
            clamp: sc.sim.clamp,
            reference_lambda: Some(sp.eigen.lambda),
            cost: CostSummary::from(&est),
            representation: rep.as_ref().map(|(s, _)| s.clone()),
        },
    )?;
    if sc.dump_paths {
        dir.cost_paths_csv("paths.csv", &est)?;
        if let Some((_, check)) = &rep {
            dir.hitting_paths_csv("rep_paths.csv", &check.paths)?;
        }
    }
    dir.psi_csv("psi.csv", &grid, &sp.eigen.psi)?;
    dir.strategies(&grid, &cfg.model, &sp.v1, &sp.v2)?;
    Ok(Outcome::unless(
        sp.converged,
        "the strategy solve did not converge",
    ))
}

fn lyapunov(cfg: &RunConfig, dir: &mut OutDir) -> Result<Outcome, RunError> {
    let lc = cfg
        .lyapunov
        .as_ref()
        .ok_or_else(|| ConfigError::new("lyapunov", "missing section"))?;
    let grid = final_grid(cfg)?;
    let h_chk = lc.h_chk.unwrap_or(grid.h());
    let out = match check_lyapunov(&cfg.model, &lc.spec, &grid, h_chk) {
        Ok(report) => LyapunovOutput {
            grid: GridInfo::from(&grid),
            passed: report.passed,
            infeasible: None,
            cost_bound: report.passed.then(|| cost_bound(&report)),
            report: Some(report),
        },
        Err(Error::SpecInfeasible {
            node,
            action1,
            action2,
            excess,
        }) => LyapunovOutput {
            grid: GridInfo::from(&grid),
            passed: false,
            infeasible: Some(Infeasible {
                node,
                action1,
                action2,
                excess,
            }),
            report: None,
            cost_bound: None,
        },
        Err(e) => return Err(e.into()),
    };
    let passed = out.passed;
    dir.json("lyapunov.json", "check-lyapunov", out)?;
    Ok(Outcome::unless(
        passed,
        "the Lyapunov conditions do not hold",
    ))
}
