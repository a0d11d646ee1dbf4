//! Numerical Foster–Lyapunov check for a candidate `V >= 1` and the ceiling it
//! puts on the risk-sensitive cost.
//!
//! At every interior node the generator is applied to `V` with central
//! differences of step `h_chk` and maximized over all pure action pairs. The
//! required inequality is
//!
//! ```text
//! bounded:    sup_u L^u V <= alpha 1_K - delta V
//! unbounded:  sup_u L^u V <= alpha 1_K - ell V
//! ```
//!
//! with `K = {|x| <= k_radius}`. The smallest feasible `alpha` is reported.
//! Inf-compactness of `ell - sup r` cannot be verified on a bounded grid; it is
//! replaced by a surrogate that asks for monotone growth outward along each
//! axis beyond `K`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr};
use crate::grid::Grid;
use crate::math;
use crate::model::{GameModel, Player};

/// Slack for the outward monotonicity surrogate.
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovCase {
    Bounded { delta: f64 },
    Unbounded { ell: Expr },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    pub v: Expr,
    pub case: LyapunovCase,
    /// Radius of the compact set `K`.
    pub k_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LyapunovReport {
    /// `"bounded"` or `"unbounded"`.
    pub case: String,
    pub passed: bool,
    /// Smallest `alpha` satisfying the inequality on `K`.
    pub alpha: f64,
    /// `(rhs - sup_u L^u V) / V` per interior node.
    pub margins: Vec<f64>,
    /// Smallest margin outside `K`, `None` when every node is in `K`.
    pub min_margin_outside: Option<f64>,
    pub nodes_in_k: usize,
    pub min_v_in_k: f64,
    /// `max_i sup_{x, u} r_i` over the interior nodes.
    pub cost_sup: f64,
    /// Bounded case: `cost_sup < delta`.
    pub cost_below_delta: Option<bool>,
    /// Unbounded case: `ell > 0` at every node outside `K`.
    pub ell_positive: Option<bool>,
    /// Unbounded case, surrogate check: `ell - sup r` is nondecreasing
    /// outward along every axis beyond `K`.
    pub surrogate_monotone: Option<bool>,
    /// Nodes where the surrogate fails.
    pub surrogate_violations: Vec<Vec<f64>>,
    pub kappa1: f64,
    pub cost_bound: f64,
    pub h_chk: f64,
}

fn norm(x: &[f64]) -> f64 {
    math::sqrt(x.iter().map(|v| v * v).sum())
}

fn eval_at(e: &Expr, x: &[f64]) -> Result<f64> {
    Ok(e.eval(&Env::state(x))?)
}

/// `L^{u1,u2} V(x)` with central differences of step `h`.
pub fn generator_fd(
    model: &GameModel,
    v: &Expr,
    x: &[f64],
    u1: usize,
    u2: usize,
    h: f64,
) -> Result<f64> {
    let d = model.dim();
    let mut a = [0.0; 2];
    let mut b = [0.0; 2];
    model.diffusion(x, &mut a[..d])?;
    model.pure_drift(x, u1, u2, &mut b[..d])?;
    let center = eval_at(v, x)?;
    let mut y = [0.0; 2];
    y[..d].copy_from_slice(x);
    let mut total = 0.0;
    for k in 0..d {
        y[k] = x[k] + h;
        let up = eval_at(v, &y[..d])?;
        y[k] = x[k] - h;
        let down = eval_at(v, &y[..d])?;
        y[k] = x[k];
        total += a[k] * (up - 2.0 * center + down) / (h * h) + b[k] * (up - down) / (2.0 * h);
    }
    Ok(total)
}

/// `sup_u L^u V(x)` with the maximizing pair.
fn sup_generator(model: &GameModel, v: &Expr, x: &[f64], h: f64) -> Result<(f64, usize, usize)> {
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for u1 in 0..model.action_count(Player::One) {
        for u2 in 0..model.action_count(Player::Two) {
            let g = generator_fd(model, v, x, u1, u2, h)?;
            if g > best.0 {
                best = (g, u1, u2);
            }
        }
    }
    Ok(best)
}

/// `max_i sup_u r_i(x, u)`.
fn sup_cost(model: &GameModel, x: &[f64]) -> Result<f64> {
    let mut top = f64::NEG_INFINITY;
    for payer in Player::BOTH {
        for u1 in 0..model.action_count(Player::One) {
            for u2 in 0..model.action_count(Player::Two) {
                top = top.max(model.pure_cost(payer, x, u1, u2)?);
            }
        }
    }
    Ok(top)
}

/// Checks the Foster–Lyapunov inequality at every interior node of `grid`.
///
/// Returns [`Error::SpecInfeasible`] with the worst node outside `K` when the
/// drift inequality fails there. Failures of the cost conditions are reported
/// through `passed = false`.
pub fn check_lyapunov(
    model: &GameModel,
    spec: &LyapunovSpec,
    grid: &Grid,
    h_chk: f64,
) -> Result<LyapunovReport> {
    if grid.dim() != model.dim() {
        return Err(Error::BadGeometry(
            "grid and model dimensions differ".into(),
        ));
    }
    if !(h_chk > 0.0 && h_chk <= grid.h() * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "h_chk = {h_chk} must be positive and at most the grid spacing {}",
            grid.h()
        )));
    }
    if !(spec.k_radius > 0.0 && spec.k_radius < grid.radius()) {
        return Err(Error::InvalidArgument(format!(
            "K radius {} must lie inside the grid radius {}",
            spec.k_radius,
            grid.radius()
        )));
    }
    spec.v.check_scope(model.dim(), 0)?;
    if let LyapunovCase::Unbounded { ell } = &spec.case {
        ell.check_scope(model.dim(), 0)?;
    }

    let d = model.dim();
    let n = grid.interior_count();
    let mut x = [0.0; 2];
    let mut values = vec![0.0; n];
    let mut sup_lv = vec![0.0; n];
    let mut rate = vec![0.0; n];
    let mut costs = vec![0.0; n];
    let mut inside = vec![false; n];
    let mut witness: Option<(Vec<f64>, usize, usize, f64)> = None;
    for (k, &node) in grid.interior_nodes().iter().enumerate() {
        grid.coords_into(node, &mut x);
        let x = &x[..d];
        let v = eval_at(&spec.v, x)?;
        if !(v >= 1.0) {
            return Err(Error::InvalidArgument(format!("V = {v} < 1 at {x:?}")));
        }
        let (g, u1, u2) = sup_generator(model, &spec.v, x, h_chk)?;
        values[k] = v;
        sup_lv[k] = g;
        costs[k] = sup_cost(model, x)?;
        rate[k] = match &spec.case {
            LyapunovCase::Bounded { delta } => *delta,
            LyapunovCase::Unbounded { ell } => eval_at(ell, x)?,
        };
        inside[k] = norm(x) <= spec.k_radius;
        if !inside[k] {
            let excess = g + rate[k] * v;
            if excess > 0.0 && witness.as_ref().is_none_or(|w| excess / v > w.3) {
                witness = Some((x.to_vec(), u1, u2, excess / v));
            }
        }
    }
    if let Some((node, action1, action2, excess)) = witness {
        return Err(Error::SpecInfeasible {
            node,
            action1,
            action2,
            excess,
        });
    }

    let mut alpha = 0.0f64;
    let mut min_v_in_k = f64::INFINITY;
    let mut nodes_in_k = 0;
    for k in 0..n {
        if inside[k] {
            alpha = alpha.max(sup_lv[k] + rate[k] * values[k]);
            min_v_in_k = min_v_in_k.min(values[k]);
            nodes_in_k += 1;
        }
    }
    let mut margins = vec![0.0; n];
    let mut min_margin_outside: Option<f64> = None;
    for k in 0..n {
        let indicator = if inside[k] { alpha } else { 0.0 };
        margins[k] = (indicator - rate[k] * values[k] - sup_lv[k]) / values[k];
        if !inside[k] {
            min_margin_outside = Some(min_margin_outside.map_or(margins[k], |m| m.min(margins[k])));
        }
    }
    let cost_sup = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut report = LyapunovReport {
        case: "bounded".into(),
        passed: true,
        alpha,
        margins,
        min_margin_outside,
        nodes_in_k,
        min_v_in_k,
        cost_sup,
        cost_below_delta: None,
        ell_positive: None,
        surrogate_monotone: None,
        surrogate_violations: Vec::new(),
        kappa1: 0.0,
        cost_bound: 0.0,
        h_chk,
    };
    match &spec.case {
        LyapunovCase::Bounded { delta } => {
            let ok = cost_sup < *delta;
            report.cost_below_delta = Some(ok);
            report.passed = ok;
            report.kappa1 = cost_sup.max(0.0);
        }
        LyapunovCase::Unbounded { .. } => {
            report.case = "unbounded".into();
            let positive = (0..n).all(|k| inside[k] || rate[k] > 0.0);
            let gap: Vec<f64> = (0..n).map(|k| rate[k] - costs[k]).collect();
            let violations = outward_violations(grid, spec.k_radius, &gap);
            report.ell_positive = Some(positive);
            report.surrogate_monotone = Some(violations.is_empty());
            report.surrogate_violations = violations;
            report.passed = positive && report.surrogate_monotone == Some(true);
            report.kappa1 = pointwise_excess(model, grid, &rate)?;
        }
    }
    report.cost_bound = report.kappa1 + alpha / min_v_in_k;
    Ok(report)
}

/// `max over nodes, actions and players of (r_i - ell)^+`.
fn pointwise_excess(model: &GameModel, grid: &Grid, ell: &[f64]) -> Result<f64> {
    let d = model.dim();
    let mut x = [0.0; 2];
    let mut top = 0.0f64;
    for (k, &node) in grid.interior_nodes().iter().enumerate() {
        grid.coords_into(node, &mut x);
        for payer in Player::BOTH {
            for u1 in 0..model.action_count(Player::One) {
                for u2 in 0..model.action_count(Player::Two) {
                    top = top.max(model.pure_cost(payer, &x[..d], u1, u2)? - ell[k]);
                }
            }
        }
    }
    Ok(top)
}

/// Nodes outside the ball where `values` drops toward an outward neighbor.
fn outward_violations(grid: &Grid, k_radius: f64, values: &[f64]) -> Vec<Vec<f64>> {
    let d = grid.dim();
    let mut out = Vec::new();
    let mut x = [0.0; 2];
    let mut y = [0.0; 2];
    for (k, &node) in grid.interior_nodes().iter().enumerate() {
        grid.coords_into(node, &mut x);
        if norm(&x[..d]) <= k_radius {
            continue;
        }
        for axis in 0..d {
            if x[axis] == 0.0 {
                continue;
            }
            y[..d].copy_from_slice(&x[..d]);
            y[axis] += x[axis].signum() * grid.h();
            if math::abs(y[axis]) >= grid.radius() - 0.5 * grid.h() {
                continue;
            }
            let j = grid.nearest_interior(&y[..d]);
            let scale = 1.0 + math::abs(values[k]);
            if values[j] < values[k] - MONOTONE_SLACK * scale {
                out.push(x[..d].to_vec());
                break;
            }
        }
    }
    out
}

/// `kappa1 + alpha / min_K V` from a report of [`check_lyapunov`].
pub fn cost_bound(report: &LyapunovReport) -> f64 {
    report.cost_bound
}

/// `max psi / V` over the interior nodes, a diagnostic for the growth of an
/// eigenfunction relative to the Lyapunov candidate.
pub fn max_psi_ratio(grid: &Grid, spec: &LyapunovSpec, psi: &[f64]) -> Result<f64> {
    let d = grid.dim();
    let mut x = [0.0; 2];
    let mut top = 0.0f64;
    for (k, &node) in grid.interior_nodes().iter().enumerate() {
        grid.coords_into(node, &mut x);
        top = top.max(psi[k] / eval_at(&spec.v, &x[..d])?);
    }
    Ok(top)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use alloc::vec;

    fn ou(drift: &str, cost: &str) -> GameModel {
        GameModel::builder(1)
            .actions(Player::One, [("down", vec![-0.25]), ("up", vec![0.25])])
            .actions(Player::Two, [("down", vec![-0.25]), ("up", vec![0.25])])
            .drift(Player::One, [drift])
            .drift(Player::Two, ["a0"])
            .sigma(["1"])
            .cost(Player::One, Player::One, cost)
            .build()
            .unwrap()
    }

    fn unbounded() -> LyapunovSpec {
        LyapunovSpec {
            v: Expr::parse("exp(0.25*x0^2)").unwrap(),
            case: LyapunovCase::Unbounded {
                ell: Expr::parse("0.3*x0^2 - 1").unwrap(),
            },
            k_radius: 3.0,
        }
    }

    #[test]
    fn closed_form_generator_matches_differences() {
        let model = ou("-x0 + a0", "0");
        let v = Expr::parse("exp(0.25*x0^2)").unwrap();
        let h = 1e-3;
        let mut worst = 0.0f64;
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            for (u1, u2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let u = [-0.25, 0.25][u1] + [-0.25, 0.25][u2];
                let exact = (0.25 + (0.125 - 0.5) * x * x + 0.5 * x * u) * libm::exp(0.25 * x * x);
                let fd = generator_fd(&model, &v, &[x], u1, u2, h).unwrap();
                worst = worst.max((fd - exact).abs() / libm::exp(0.25 * x * x));
            }
        }
        assert!(worst < 10.0 * h * h, "relative error {worst}");
    }

    #[test]
    fn ou_example_passes_unbounded_case() {
        let model = ou("-x0 + a0", "0.1*x0^2");
        let grid = build_grid(1, 6.0, 0.05).unwrap();
        let rep = check_lyapunov(&model, &unbounded(), &grid, 0.01).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.min_margin_outside.unwrap() > 0.0);
        assert!(rep.margins.iter().all(|&m| m >= -1e-12));
        assert!(rep.cost_bound.is_finite() && rep.cost_bound >= 0.0);
    }

    #[test]
    fn outward_drift_is_infeasible() {
        let model = ou("x0 + a0", "0");
        let grid = build_grid(1, 6.0, 0.05).unwrap();
        let err = check_lyapunov(&model, &unbounded(), &grid, 0.01).unwrap_err();
        match err {
            Error::SpecInfeasible { node, excess, .. } => {
                assert!(node[0].abs() > 3.0 && excess > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_cost_bounded_case() {
        let model = ou("-x0 + a0", "0");
        let grid = build_grid(1, 6.0, 0.05).unwrap();
        let spec = LyapunovSpec {
            v: Expr::parse("exp(0.25*x0^2)").unwrap(),
            case: LyapunovCase::Bounded { delta: 0.5 },
            k_radius: 3.0,
        };
        let rep = check_lyapunov(&model, &spec, &grid, 0.01).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.cost_below_delta, Some(true));
        assert!(rep.alpha > 0.0);
        assert!(rep.cost_bound >= 0.0);
    }

    #[test]
    fn non_monotone_cost_gap_fails_surrogate() {
        let model = ou("-x0 + a0", "0.5*x0^2*(1 + sin(5*x0))");
        let grid = build_grid(1, 6.0, 0.05).unwrap();
        let rep = check_lyapunov(&model, &unbounded(), &grid, 0.01).unwrap();
        assert_eq!(rep.surrogate_monotone, Some(false));
        assert!(!rep.passed);
    }
}
