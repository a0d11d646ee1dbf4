//! JSON reports and CSV tables.
//!
//! Every JSON report is wrapped in an [`Envelope`] carrying [`SCHEMA`]. After
//! writing, the file is read back and must parse to the same value. Run
//! metadata that varies between runs (the timestamp) goes to a separate
//! `metadata.json`, so reports are byte-identical for identical inputs.

use std::fs;
use std::path::{Path, PathBuf};

use rsg_core::eigen::EigenPair;
use rsg_core::hjb::{SweepEntry, Termination};
use rsg_core::lyapunov::LyapunovReport;
use rsg_core::nash::{DeviationTable, NashIterate};
use rsg_core::simulate::{CostEstimate, HittingPath, RepCheck};
use rsg_core::{GameModel, Grid, MarkovStrategy};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::RunError;

pub const SCHEMA: &str = "rsg-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: String,
    pub command: String,
    pub report: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub dim: usize,
    pub radius: f64,
    pub h: f64,
    pub nodes: usize,
    pub interior_nodes: usize,
}

impl From<&Grid> for GridInfo {
    fn from(g: &Grid) -> Self {
        Self {
            dim: g.dim(),
            radius: g.radius(),
            h: g.h(),
            nodes: g.node_count(),
            interior_nodes: g.interior_count(),
        }
    }
}

/// An eigenpair without the eigenvector, which goes to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    pub residual: f64,
    pub iterations: usize,
    pub psi_min: f64,
    pub psi_max: f64,
}

impl From<&EigenPair> for EigenSummary {
    fn from(e: &EigenPair) -> Self {
        Self {
            lambda: e.lambda,
            lower: e.lower,
            upper: e.upper,
            residual: e.residual,
            iterations: e.iterations,
            psi_min: e.psi.iter().copied().fold(f64::INFINITY, f64::min),
            psi_max: e.psi.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub player: usize,
    pub opponent: String,
    pub grid: GridInfo,
    pub eigen: EigenSummary,
    pub history: Vec<f64>,
    pub termination: Termination,
    pub hjb_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub player: usize,
    pub opponent: String,
    pub warm_start: bool,
    pub entries: Vec<SweepEntry>,
    pub lambdas: Vec<f64>,
    pub nondecreasing: bool,
    pub lambda_inf: f64,
    pub grid: GridInfo,
    pub eigen: EigenSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashOutput {
    pub grid: GridInfo,
    pub converged: bool,
    pub cycle_detected: bool,
    pub lambda: [f64; 2],
    pub eigen: [EigenSummary; 2],
    pub residuals: [f64; 2],
    pub trace: Vec<NashIterate>,
    /// Absent when the search did not converge.
    pub verification: Option<Verification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub passed: bool,
    pub worst_gain: f64,
    pub table: DeviationTable,
}

impl From<DeviationTable> for Verification {
    fn from(table: DeviationTable) -> Self {
        Self {
            passed: table.passed(),
            worst_gain: table.worst_gain(),
            table,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub estimate: f64,
    pub stderr: f64,
    pub half_estimate: f64,
    pub half_stderr: f64,
    pub horizon: f64,
    pub paths: usize,
}

impl From<&CostEstimate> for CostSummary {
    fn from(c: &CostEstimate) -> Self {
        Self {
            estimate: c.estimate,
            stderr: c.stderr,
            half_estimate: c.half_estimate,
            half_stderr: c.half_stderr,
            horizon: c.horizon,
            paths: c.paths.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSummary {
    pub r_ball: f64,
    pub x0: Vec<f64>,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub relative_error: f64,
    pub used: usize,
    pub capped: usize,
    pub mean_tau: f64,
}

impl RepSummary {
    pub fn new(r_ball: f64, x0: Vec<f64>, lambda: f64, c: &RepCheck) -> Self {
        Self {
            r_ball,
            x0,
            lambda,
            lhs: c.lhs,
            rhs: c.rhs,
            stderr: c.stderr,
            relative_error: c.relative_error(),
            used: c.used,
            capped: c.capped,
            mean_tau: c.mean_tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub payer: usize,
    pub strategies: String,
    pub grid: GridInfo,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
    pub clamp: f64,
    /// Eigenvalue of the solve that produced the strategies, if any.
    pub reference_lambda: Option<f64>,
    pub cost: CostSummary,
    pub representation: Option<RepSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovOutput {
    pub grid: GridInfo,
    pub passed: bool,
    /// Set when some node has no feasible constant at all.
    pub infeasible: Option<Infeasible>,
    pub report: Option<LyapunovReport>,
    pub cost_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Infeasible {
    pub node: Vec<f64>,
    pub action1: usize,
    pub action2: usize,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub config: String,
    pub seed: u64,
    pub threads: usize,
    pub unix_time: u64,
    pub files: Vec<String>,
}

/// Collects the files written into one output directory.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(root).map_err(|e| RunError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn record(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.path(name)
    }

    /// Writes `report` as pretty JSON and checks that it reads back unchanged.
    pub fn json<T>(&mut self, name: &str, command: &str, report: T) -> Result<(), RunError>
    where
        T: Serialize + DeserializeOwned + PartialEq,
    {
        let path = self.record(name);
        let env = Envelope {
            schema: SCHEMA.to_string(),
            command: command.to_string(),
            report,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(|source| RunError::Json {
            path: path.clone(),
            source,
        })?;
        text.push('\n');
        fs::write(&path, &text).map_err(|e| RunError::io(&path, e))?;
        let back: Envelope<T> = read_report(&path)?;
        if back != env {
            return Err(RunError::Schema {
                path,
                reason: "re-parsed report differs from the written one".into(),
            });
        }
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        let path = self.record(name);
        fs::write(&path, text).map_err(|e| RunError::io(&path, e))
    }

    pub fn csv(
        &mut self,
        name: &str,
        header: &[String],
        rows: impl IntoIterator<Item = Vec<f64>>,
    ) -> Result<(), RunError> {
        let path = self.record(name);
        let csv_err = |source| RunError::Csv {
            path: path.clone(),
            source,
        };
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row.iter().map(f64::to_string))
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| RunError::io(&path, e))
    }

    /// Interior-node eigenvector: coordinates then `psi`.
    pub fn psi_csv(&mut self, name: &str, grid: &Grid, psi: &[f64]) -> Result<(), RunError> {
        let mut header = coord_header(grid.dim());
        header.push("psi".into());
        let rows = grid.interior_nodes().iter().zip(psi).map(|(&node, &p)| {
            let mut row = grid.coords(node);
            row.push(p);
            row
        });
        self.csv(name, &header, rows)
    }

    /// One row per grid node: coordinates then one probability per action.
    pub fn strategy_csv(
        &mut self,
        name: &str,
        grid: &Grid,
        model: &GameModel,
        s: &MarkovStrategy,
    ) -> Result<(), RunError> {
        let mut header = coord_header(grid.dim());
        header.extend(
            model
                .actions(s.player())
                .actions()
                .iter()
                .map(|a| format!("prob_{}", a.name)),
        );
        let rows = (0..grid.node_count()).map(|node| {
            let mut row = grid.coords(node);
            row.extend_from_slice(s.node(node));
            row
        });
        self.csv(name, &header, rows)
    }

    pub fn strategies(
        &mut self,
        grid: &Grid,
        model: &GameModel,
        v1: &MarkovStrategy,
        v2: &MarkovStrategy,
    ) -> Result<(), RunError> {
        self.strategy_csv("strategy_p1.csv", grid, model, v1)?;
        self.strategy_csv("strategy_p2.csv", grid, model, v2)
    }

    /// `path_index,S_p,tau_or_T` for cost paths.
    pub fn cost_paths_csv(&mut self, name: &str, est: &CostEstimate) -> Result<(), RunError> {
        let header = path_header();
        let rows = est
            .paths
            .iter()
            .map(|p| vec![p.index as f64, p.integral(), p.time]);
        self.csv(name, &header, rows)
    }

    /// `path_index,S_p,tau_or_T` for hitting paths; `S_p` is empty for capped paths.
    pub fn hitting_paths_csv(&mut self, name: &str, paths: &[HittingPath]) -> Result<(), RunError> {
        let path = self.record(name);
        let csv_err = |source| RunError::Csv {
            path: path.clone(),
            source,
        };
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(csv_err)?;
        w.write_record(path_header()).map_err(csv_err)?;
        for p in paths {
            let value = p.value.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([p.index.to_string(), value, p.tau.to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| RunError::io(&path, e))
    }
}

fn coord_header(dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("x{k}")).collect()
}

fn path_header() -> Vec<String> {
    ["path_index", "S_p", "tau_or_T"].map(String::from).to_vec()
}

/// Reads a report and checks its schema string.
pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<Envelope<T>, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    let env: Envelope<T> = serde_json::from_str(&text).map_err(|source| RunError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if env.schema != SCHEMA {
        return Err(RunError::Schema {
            path: path.to_path_buf(),
            reason: format!("schema {:?}, expected {SCHEMA:?}", env.schema),
        });
    }
    Ok(env)
}
