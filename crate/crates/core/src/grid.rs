//! Box grids `[-R, R]^d` and the monotone upwind discretization of the frozen
//! operator `L^{v1,v2} + r_i` with homogeneous Dirichlet boundary.
//!
//! For an interior node and axis `k`, with `a = sigma_kk^2 / 2` and drift `b_k`:
//!
//! ```text
//! left  += a / h^2 + max(-b_k, 0) / h
//! right += a / h^2 + max( b_k, 0) / h
//! diag  -= 2 a / h^2 + |b_k| / h
//! ```
//!
//! and the diagonal receives `+ r_i`. Off-diagonal entries are nonnegative, so
//! `M + cI` is a nonnegative irreducible matrix for a large enough shift `c`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math;
use crate::model::{GameModel, MarkovStrategy, Player};

const BOUNDARY: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Grid {
    dim: usize,
    radius: f64,
    h: f64,
    cells: usize,
    interior: Vec<usize>,
    interior_of: Vec<usize>,
    origin: usize,
}

/// Builds the uniform grid on `[-radius, radius]^dim` with spacing `h`.
///
/// `2 radius / h` must be an integer of at least 2, so that at least one node
/// is interior. Nodes are ordered
/// lexicographically with `x0` the slowest coordinate.
pub fn build_grid(dim: usize, radius: f64, h: f64) -> Result<Grid> {
    if !(1..=2).contains(&dim) {
        return Err(Error::BadGeometry(format!(
            "dimension {dim} not in {{1, 2}}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite() && h > 0.0 && h.is_finite()) {
        return Err(Error::BadGeometry(format!(
            "radius {radius} and spacing {h} must be positive"
        )));
    }
    let ratio = 2.0 * radius / h;
    let cells = math::round(ratio);
    if math::abs(ratio - cells) > 1e-9 * cells.max(1.0) {
        return Err(Error::BadGeometry(format!(
            "2R/h = {ratio} is not an integer"
        )));
    }
    if cells < 2.0 {
        return Err(Error::BadGeometry(format!(
            "2R/h = {cells} leaves no interior node"
        )));
    }
    let cells = cells as usize;
    let side = cells + 1;
    let count = side.pow(dim as u32);
    let mut interior = Vec::new();
    let mut interior_of = vec![BOUNDARY; count];
    let mut idx = [0usize; 2];
    for node in 0..count {
        split(node, dim, side, &mut idx);
        if idx[..dim].iter().all(|&i| i > 0 && i < cells) {
            interior_of[node] = interior.len();
            interior.push(node);
        }
    }
    let mid = cells / 2;
    let origin = if dim == 1 { mid } else { mid * side + mid };
    Ok(Grid {
        dim,
        radius,
        h: 2.0 * radius / cells as f64,
        cells,
        interior,
        interior_of,
        origin,
    })
}

fn split(node: usize, dim: usize, side: usize, out: &mut [usize; 2]) {
    if dim == 1 {
        out[0] = node;
    } else {
        out[0] = node / side;
        out[1] = node % side;
    }
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of cells per axis, `2R/h`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn node_count(&self) -> usize {
        self.interior_of.len()
    }

    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    /// Node indices of the interior nodes, in order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Interior index of `node`, if it is interior.
    pub fn interior_index(&self, node: usize) -> Option<usize> {
        match self.interior_of[node] {
            BOUNDARY => None,
            k => Some(k),
        }
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.interior_of[node] == BOUNDARY
    }

    /// Node nearest the origin.
    pub fn origin_node(&self) -> usize {
        self.origin
    }

    /// Interior index of the origin node; the eigenfunction is normalized there.
    pub fn origin_interior(&self) -> usize {
        self.interior_of[self.origin]
    }

    fn coordinate(&self, i: usize) -> f64 {
        -self.radius + 2.0 * self.radius * i as f64 / self.cells as f64
    }

    /// Writes the coordinates of `node` into `out[..dim]`.
    pub fn coords_into(&self, node: usize, out: &mut [f64]) {
        let mut idx = [0usize; 2];
        split(node, self.dim, self.cells + 1, &mut idx);
        for k in 0..self.dim {
            out[k] = self.coordinate(idx[k]);
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.coords_into(node, &mut x);
        x
    }

    fn axis_index(&self, v: f64, lo: usize, hi: usize) -> usize {
        let t = math::round((v + self.radius) / self.h);
        if !(t > lo as f64) {
            lo
        } else if t >= hi as f64 {
            hi
        } else {
            t as usize
        }
    }

    fn node_of(&self, idx: &[usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * (self.cells + 1) + idx[1]
        }
    }

    /// Nearest node, clamping `x` to the box.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut idx = [0usize; 2];
        for k in 0..self.dim {
            idx[k] = self.axis_index(x[k], 0, self.cells);
        }
        self.node_of(&idx)
    }

    /// Nearest interior node, clamping `x` to the interior.
    pub fn nearest_interior(&self, x: &[f64]) -> usize {
        let mut idx = [0usize; 2];
        for k in 0..self.dim {
            idx[k] = self.axis_index(x[k], 1, self.cells - 1);
        }
        self.interior_of[self.node_of(&idx)]
    }

    /// Fingerprint of the geometry; strategies carry it to detect grid mismatch.
    pub fn id(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(&(self.dim as u64).to_le_bytes());
        feed(&(self.cells as u64).to_le_bytes());
        feed(&self.radius.to_bits().to_le_bytes());
        hash
    }

    /// Neighbors of `node` along `axis` (lower, upper), if they exist.
    fn neighbors(&self, node: usize, axis: usize) -> (usize, usize) {
        let stride = if self.dim == 1 || axis == 1 {
            1
        } else {
            self.cells + 1
        };
        (node - stride, node + stride)
    }

    /// All node coordinates, in node order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.node_count()).map(|n| self.coords(n)).collect()
    }
}

/// Row-compressed square matrix over interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl StencilMatrix {
    /// Builds from per-row `(column, value)` lists. Duplicate columns are
    /// summed; a diagonal entry is always stored.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag_pos = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.push((i, 0.0));
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                if c >= n {
                    return Err(Error::InvalidArgument(format!(
                        "column {c} out of range in row {i}"
                    )));
                }
                if cols.len() > start && *cols.last().expect("nonempty") == c {
                    *vals.last_mut().expect("nonempty") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            let d = start
                + cols[start..]
                    .iter()
                    .position(|&c| c == i)
                    .expect("diagonal");
            diag_pos.push(d);
            row_ptr.push(cols.len());
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            vals,
            diag_pos,
        })
    }

    /// Dense row-major input; zero off-diagonal entries are not stored.
    pub fn from_dense(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "{} entries for a {n}x{n} matrix",
                entries.len()
            )));
        }
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j == i || entries[i * n + j] != 0.0)
                    .map(|j| (j, entries[i * n + j]))
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.vals[self.diag_pos[i]]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[i * self.n + j] = v;
            }
        }
        out
    }

    /// `y = M x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            *yi = acc;
        }
    }

    /// `M + s I`.
    pub fn shifted(&self, s: f64) -> StencilMatrix {
        let mut out = self.clone();
        for &p in &out.diag_pos {
            out.vals[p] += s;
        }
        out
    }

    pub fn min_diag(&self) -> f64 {
        self.diag_pos
            .iter()
            .fold(f64::INFINITY, |acc, &p| acc.min(self.vals[p]))
    }

    pub fn max_abs_diag(&self) -> f64 {
        self.diag_pos
            .iter()
            .fold(0.0, |acc, &p| acc.max(math::abs(self.vals[p])))
    }

    /// Smallest off-diagonal entry (`+inf` when there is none).
    pub fn min_offdiag(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j != i {
                    m = m.min(v);
                }
            }
        }
        m
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    /// Lower and upper bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut hi = 0;
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j < i {
                    lo = lo.max(i - j);
                } else {
                    hi = hi.max(j - i);
                }
            }
        }
        (lo, hi)
    }

    /// Strong connectivity of the pattern of nonzero off-diagonal entries.
    /// Returns the first node not reachable in one of the two directions.
    pub fn check_irreducible(&self) -> Result<()> {
        if self.n <= 1 {
            return Ok(());
        }
        let mut transpose: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j != i && v != 0.0 {
                    transpose[j].push(i);
                }
            }
        }
        let forward = |i: usize, out: &mut Vec<usize>| {
            out.extend(
                self.row(i)
                    .filter(|&(j, v)| j != i && v != 0.0)
                    .map(|(j, _)| j),
            );
        };
        let backward = |i: usize, out: &mut Vec<usize>| out.extend_from_slice(&transpose[i]);
        for step in [&forward as &dyn Fn(usize, &mut Vec<usize>), &backward] {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut next = Vec::new();
            while let Some(i) = stack.pop() {
                next.clear();
                step(i, &mut next);
                for &j in &next {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            if let Some(node) = seen.iter().position(|s| !s) {
                return Err(Error::Reducible { node });
            }
        }
        Ok(())
    }

    /// One `row col value` line per stored entry, 0-based interior indices.
    pub fn write_text<W: fmt::Write>(&self, out: &mut W) -> fmt::Result {
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j == i || v != 0.0 {
                    writeln!(out, "{i} {j} {v}")?;
                }
            }
        }
        Ok(())
    }
}

/// One assembled stencil row: diagonal plus up to four neighbors.
#[derive(Debug, Clone, Copy)]
pub struct StencilRow {
    pub diag: f64,
    neighbors: [(usize, f64); 4],
    len: usize,
}

impl StencilRow {
    pub fn neighbors(&self) -> &[(usize, f64)] {
        &self.neighbors[..self.len]
    }

    /// `(row · psi)` at interior index `k`.
    #[inline]
    pub fn apply(&self, k: usize, psi: &[f64]) -> f64 {
        let mut acc = self.diag * psi[k];
        for &(j, v) in self.neighbors() {
            acc += v * psi[j];
        }
        acc
    }
}

/// A model tabulated on a grid: drift, cost and diffusion per interior node
/// and pure action, so that assembly and improvement steps are table lookups.
#[derive(Debug, Clone)]
pub struct GridGame<'m> {
    grid: Grid,
    model: &'m GameModel,
    diffusion: Vec<f64>,
    drift: [Vec<f64>; 2],
    cost: [[Vec<f64>; 2]; 2],
}

impl<'m> GridGame<'m> {
    pub fn new(grid: Grid, model: &'m GameModel) -> Result<Self> {
        let d = model.dim();
        if grid.dim() != d {
            return Err(Error::BadGeometry(format!(
                "grid dimension {} does not match model dimension {d}",
                grid.dim()
            )));
        }
        let n = grid.interior_count();
        let mut diffusion = vec![0.0; n * d];
        let mut drift = [Vec::new(), Vec::new()];
        let mut cost = [[Vec::new(), Vec::new()], [Vec::new(), Vec::new()]];
        for p in Player::BOTH {
            let m = model.action_count(p);
            drift[p.index()] = vec![0.0; n * m * d];
            for payer in Player::BOTH {
                cost[payer.index()][p.index()] = vec![0.0; n * m];
            }
        }
        let mut x = [0.0; 2];
        for (k, &node) in grid.interior_nodes().iter().enumerate() {
            grid.coords_into(node, &mut x);
            let x = &x[..d];
            model.diffusion(x, &mut diffusion[k * d..(k + 1) * d])?;
            for (axis, &a) in diffusion[k * d..(k + 1) * d].iter().enumerate() {
                if !(a > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "diffusion vanishes on axis {axis} at {x:?}"
                    )));
                }
            }
            for p in Player::BOTH {
                let m = model.action_count(p);
                for u in 0..m {
                    let slot = &mut drift[p.index()][(k * m + u) * d..(k * m + u + 1) * d];
                    model.add_drift_component(p, x, u, 1.0, slot)?;
                    for payer in Player::BOTH {
                        cost[payer.index()][p.index()][k * m + u] =
                            model.cost_component(payer, p, x, u)?;
                    }
                }
            }
        }
        Ok(Self {
            grid,
            model,
            diffusion,
            drift,
            cost,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &'m GameModel {
        self.model
    }

    pub fn action_count(&self, p: Player) -> usize {
        self.model.action_count(p)
    }

    /// Relaxed drift at interior node `k`, accumulated in player order.
    pub fn node_drift(&self, k: usize, m1: &[f64], m2: &[f64], out: &mut [f64; 2]) {
        let d = self.grid.dim();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (p, m) in [(Player::One, m1), (Player::Two, m2)] {
            let na = m.len();
            let table = &self.drift[p.index()];
            for (u, &w) in m.iter().enumerate() {
                if w != 0.0 {
                    let base = (k * na + u) * d;
                    for axis in 0..d {
                        out[axis] += w * table[base + axis];
                    }
                }
            }
        }
    }

    /// Relaxed cost of `payer` at interior node `k`.
    pub fn node_cost(&self, payer: Player, k: usize, m1: &[f64], m2: &[f64]) -> f64 {
        let mut total = 0.0;
        for (p, m) in [(Player::One, m1), (Player::Two, m2)] {
            let na = m.len();
            let table = &self.cost[payer.index()][p.index()];
            for (u, &w) in m.iter().enumerate() {
                if w != 0.0 {
                    total += w * table[k * na + u];
                }
            }
        }
        total
    }

    /// Upwind row at interior node `k` for a given drift and diagonal cost.
    pub fn assemble_row(&self, k: usize, drift: &[f64; 2], cost: f64) -> StencilRow {
        let d = self.grid.dim();
        let h = self.grid.h();
        let node = self.grid.interior_nodes()[k];
        let mut row = StencilRow {
            diag: cost,
            neighbors: [(0, 0.0); 4],
            len: 0,
        };
        for axis in 0..d {
            let a = self.diffusion[k * d + axis];
            let b = drift[axis];
            let diff = a / (h * h);
            let lower = diff + (-b).max(0.0) / h;
            let upper = diff + b.max(0.0) / h;
            row.diag -= 2.0 * diff + math::abs(b) / h;
            let (l, u) = self.grid.neighbors(node, axis);
            for (nb, v) in [(l, lower), (u, upper)] {
                if let Some(j) = self.grid.interior_index(nb) {
                    row.neighbors[row.len] = (j, v);
                    row.len += 1;
                }
            }
        }
        row
    }

    fn check_pair(&self, v1: &MarkovStrategy, v2: &MarkovStrategy) -> Result<()> {
        for (p, v) in [(Player::One, v1), (Player::Two, v2)] {
            if v.player() != p {
                return Err(Error::InvalidStrategy(format!(
                    "expected a strategy of player {}",
                    p.number()
                )));
            }
            if v.grid_id() != self.grid.id() || v.node_count() != self.grid.node_count() {
                return Err(Error::InvalidStrategy(
                    "strategy is not defined on this grid".to_string(),
                ));
            }
            if v.action_count() != self.model.action_count(p) {
                return Err(Error::InvalidStrategy(format!(
                    "strategy of player {} has {} actions, model has {}",
                    p.number(),
                    v.action_count(),
                    self.model.action_count(p)
                )));
            }
        }
        Ok(())
    }

    fn assemble(
        &self,
        payer: Option<Player>,
        v1: &MarkovStrategy,
        v2: &MarkovStrategy,
    ) -> Result<StencilMatrix> {
        self.check_pair(v1, v2)?;
        let mut rows = Vec::with_capacity(self.grid.interior_count());
        let mut b = [0.0; 2];
        for (k, &node) in self.grid.interior_nodes().iter().enumerate() {
            let (m1, m2) = (v1.node(node), v2.node(node));
            self.node_drift(k, m1, m2, &mut b);
            let r = payer.map_or(0.0, |p| self.node_cost(p, k, m1, m2));
            let row = self.assemble_row(k, &b, r);
            let mut entries = Vec::with_capacity(row.len + 1);
            entries.push((k, row.diag));
            entries.extend_from_slice(row.neighbors());
            rows.push(entries);
        }
        StencilMatrix::from_rows(rows)
    }

    /// Generator part `L^{v1,v2}` only (no cost on the diagonal).
    pub fn generator(&self, v1: &MarkovStrategy, v2: &MarkovStrategy) -> Result<StencilMatrix> {
        self.assemble(None, v1, v2)
    }
}

/// Assembles `L^{v1,v2} + diag(r_payer)` over the interior nodes.
pub fn discretize(
    game: &GridGame<'_>,
    payer: Player,
    v1: &MarkovStrategy,
    v2: &MarkovStrategy,
) -> Result<StencilMatrix> {
    game.assemble(Some(payer), v1, v2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    fn model(b: &str, sigma: &str, r: &str) -> GameModel {
        GameModel::builder(1)
            .drift(Player::One, [b])
            .sigma([sigma])
            .cost(Player::One, Player::One, r)
            .build()
            .unwrap()
    }

    fn single(game: &GridGame<'_>) -> (MarkovStrategy, MarkovStrategy) {
        (
            MarkovStrategy::uniform(Player::One, game.grid(), 1),
            MarkovStrategy::uniform(Player::Two, game.grid(), 1),
        )
    }

    #[test]
    fn grid_counts() {
        let g = build_grid(1, 1.0, 0.5).unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.interior_count(), 3);
        assert_eq!(g.coords(g.origin_node()), vec![0.0]);
        assert_eq!(g.origin_interior(), 1);

        let g = build_grid(2, 1.0, 1.0).unwrap();
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.interior_count(), 1);
        assert_eq!(g.coords(g.origin_node()), vec![0.0, 0.0]);

        assert!(matches!(
            build_grid(1, 1.0, 0.3),
            Err(Error::BadGeometry(_))
        ));
        assert!(matches!(
            build_grid(1, 1.0, 2.0),
            Err(Error::BadGeometry(_))
        ));
        assert!(build_grid(3, 1.0, 0.5).is_err());
    }

    #[test]
    fn boundary_is_exactly_the_box_faces() {
        let g = build_grid(2, 1.5, 0.5).unwrap();
        for n in 0..g.node_count() {
            let x = g.coords(n);
            let on_face = x.iter().any(|v| v.abs() == 1.5);
            assert_eq!(on_face, g.is_boundary(n), "{x:?}");
        }
        assert_eq!(g.coords(g.node_count() - 1), vec![1.5, 1.5]);
    }

    #[test]
    fn nearest_lookups_clamp() {
        let g = build_grid(1, 1.0, 0.25).unwrap();
        assert_eq!(g.nearest_node(&[5.0]), 8);
        assert_eq!(g.nearest_node(&[-5.0]), 0);
        assert_eq!(g.nearest_interior(&[5.0]), 6);
        assert_eq!(g.nearest_interior(&[0.1]), g.origin_interior());
    }

    #[test]
    fn laplacian_row() {
        let m = model("0", "sqrt(2)", "0");
        let h = 0.25;
        let game = GridGame::new(build_grid(1, 1.0, h).unwrap(), &m).unwrap();
        let (v1, v2) = single(&game);
        let s = discretize(&game, Player::One, &v1, &v2).unwrap();
        let scale = 1.0 / (h * h);
        let tol = 1e-12 * scale;
        assert!((s.get(3, 2) - scale).abs() < tol);
        assert!((s.get(3, 3) + 2.0 * scale).abs() < tol);
        assert!((s.get(3, 4) - scale).abs() < tol);
    }

    #[test]
    fn upwind_row_with_positive_drift() {
        let m = model("1", "sqrt(2)", "0");
        let game = GridGame::new(build_grid(1, 1.0, 0.5).unwrap(), &m).unwrap();
        let (v1, v2) = single(&game);
        let s = discretize(&game, Player::One, &v1, &v2).unwrap();
        assert!((s.get(1, 0) - 4.0).abs() < 1e-12);
        assert!((s.get(1, 2) - 6.0).abs() < 1e-12);
        assert!((s.get(1, 1) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn cost_shifts_diagonal_only() {
        let base = model("-x0", "1", "0");
        let shifted = model("-x0", "1", "0.7");
        let ga = GridGame::new(build_grid(1, 2.0, 0.25).unwrap(), &base).unwrap();
        let gb = GridGame::new(build_grid(1, 2.0, 0.25).unwrap(), &shifted).unwrap();
        let (v1, v2) = single(&ga);
        let a = discretize(&ga, Player::One, &v1, &v2).unwrap();
        let b = discretize(&gb, Player::One, &v1, &v2).unwrap();
        for i in 0..a.n() {
            for (j, v) in a.row(i) {
                if i == j {
                    assert_eq!(b.get(i, j), v + 0.7);
                } else {
                    assert_eq!(b.get(i, j), v);
                }
            }
        }
    }

    #[test]
    fn second_difference_of_quadratic_is_exact() {
        let m = model("0", "sqrt(2)", "0");
        let game = GridGame::new(build_grid(1, 1.0, 0.125).unwrap(), &m).unwrap();
        let (v1, v2) = single(&game);
        let s = discretize(&game, Player::One, &v1, &v2).unwrap();
        let phi: Vec<f64> = game
            .grid()
            .interior_nodes()
            .iter()
            .map(|&n| game.grid().coords(n)[0].powi(2))
            .collect();
        let mut y = vec![0.0; phi.len()];
        s.mul_vec(&phi, &mut y);
        // Rows away from the boundary see the full stencil.
        for &v in &y[1..y.len() - 1] {
            assert!((v - 2.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn two_d_generator_is_negated_m_matrix() {
        let m = GameModel::builder(2)
            .actions(Player::One, [("l", vec![-0.5]), ("r", vec![0.5])])
            .drift(Player::One, ["-x0 + a0", "-x1 + x0*a0"])
            .sigma(["1", "1 + 0.2*sin(x0)"])
            .cost(Player::One, Player::One, "x0^2 + x1^2")
            .build()
            .unwrap();
        let game = GridGame::new(build_grid(2, 1.5, 0.25).unwrap(), &m).unwrap();
        let v1 = MarkovStrategy::uniform(Player::One, game.grid(), 2);
        let v2 = MarkovStrategy::uniform(Player::Two, game.grid(), 1);
        let a = game.generator(&v1, &v2).unwrap();
        assert!(a.min_offdiag() >= 0.0);
        let sums = a.row_sums();
        let g = game.grid();
        for (k, &node) in g.interior_nodes().iter().enumerate() {
            let x = g.coords(node);
            let near = x.iter().any(|v| (v.abs() - (1.5 - 0.25)).abs() < 1e-12);
            if near {
                assert!(sums[k] < 0.0);
            } else {
                assert!(sums[k].abs() < 1e-9, "{}", sums[k]);
            }
        }
        a.check_irreducible().unwrap();
        let full = discretize(&game, Player::One, &v1, &v2).unwrap();
        assert_eq!(full.bandwidth(), (11, 11));
    }

    #[test]
    fn reducible_pattern_detected() {
        let s =
            StencilMatrix::from_dense(3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            s.check_irreducible(),
            Err(Error::Reducible { node: 2 })
        ));
        let one_way = StencilMatrix::from_dense(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(one_way.check_irreducible().is_err());
    }

    #[test]
    fn text_export_is_row_major() {
        let s = StencilMatrix::from_dense(2, &[-2.0, 1.0, 0.5, -1.0]).unwrap();
        let mut out = String::new();
        s.write_text(&mut out).unwrap();
        assert_eq!(out, "0 0 -2\n0 1 1\n1 0 0.5\n1 1 -1\n");
    }

    #[test]
    fn strategy_transfer_between_grids() {
        let coarse = build_grid(1, 1.0, 0.5).unwrap();
        let fine = build_grid(1, 2.0, 0.25).unwrap();
        let s = MarkovStrategy::pure(Player::One, &coarse, 2, &[0, 1, 0, 1, 0]).unwrap();
        let t = s.transfer(&coarse, &fine);
        t.validate(&fine).unwrap();
        assert_eq!(t.pure_choice(fine.origin_node()), Some(0));
        assert_eq!(t.pure_choice(fine.nearest_node(&[0.5])), Some(1));
    }
}
