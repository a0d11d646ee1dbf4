//! Path-parallel Monte Carlo on a rayon pool.
//!
//! Paths are simulated in parallel and collected in index order, so the
//! sequential summaries see the same input for every thread count.

use rayon::prelude::*;
use rayon::ThreadPool;
use rsg_core::simulate::{
    prepare_rep, summarize_cost, summarize_hitting, CostEstimate, RepCheck, RepTarget, SimConfig,
    Simulator,
};
use rsg_core::Player;

use crate::error::RunError;

/// A pool with `threads` workers, or one per core when `threads` is 0.
pub fn pool(threads: usize) -> Result<ThreadPool, RunError> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?)
}

pub fn estimate_rho(
    pool: &ThreadPool,
    sim: &Simulator<'_>,
    payer: Player,
    x0: &[f64],
    cfg: &SimConfig,
) -> rsg_core::Result<CostEstimate> {
    cfg.validate()?;
    if x0.len() != sim.dim() {
        return Err(rsg_core::Error::InvalidArgument(format!(
            "start point has {} coordinates, model has {}",
            x0.len(),
            sim.dim()
        )));
    }
    let paths = pool.install(|| {
        (0..cfg.paths as u64)
            .into_par_iter()
            .map(|p| sim.cost_path(payer, x0, cfg, p))
            .collect::<rsg_core::Result<Vec<_>>>()
    })?;
    summarize_cost(paths)
}

pub fn check_stochastic_rep(
    pool: &ThreadPool,
    sim: &Simulator<'_>,
    payer: Player,
    target: &RepTarget<'_>,
    x0: &[f64],
    cfg: &SimConfig,
) -> rsg_core::Result<RepCheck> {
    let lhs = prepare_rep(sim, target, x0, cfg)?;
    let paths = pool.install(|| {
        (0..cfg.paths as u64)
            .into_par_iter()
            .map(|p| sim.hitting_path(payer, target, x0, cfg, p))
            .collect::<rsg_core::Result<Vec<_>>>()
    })?;
    summarize_hitting(lhs, paths)
}
