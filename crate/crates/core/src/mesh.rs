//! Spatial meshes, (non-uniform) time grids and nodal space-time fields.
//!
//! Time intervals are indexed by their left node: interval `i` is
//! `(taus[i], taus[i + 1]]` with length `deltas[i]`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Uniform 1-D mesh on `[x_left, x_right]` with `cells` linear elements.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMesh {
    x_left: f64,
    x_right: f64,
    nodes: Vec<f64>,
    h: f64,
}

impl SpatialMesh {
    pub fn uniform(x_left: f64, x_right: f64, cells: usize) -> Result<Self> {
        if !(x_left.is_finite() && x_right.is_finite()) || x_left >= x_right {
            return Err(invalid!("spatial domain must satisfy x_left < x_right, got [{x_left}, {x_right}]"));
        }
        if cells == 0 {
            return Err(invalid!("spatial mesh needs at least one cell"));
        }
        let h = (x_right - x_left) / cells as f64;
        let mut nodes: Vec<f64> = (0..=cells).map(|j| x_left + j as f64 * h).collect();
        nodes[cells] = x_right;
        Ok(Self {
            x_left,
            x_right,
            nodes,
            h,
        })
    }

    /// Unit interval `[0, 1]` with `cells` cells.
    pub fn unit(cells: usize) -> Result<Self> {
        Self::uniform(0.0, 1.0, cells)
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn is_boundary(&self, j: usize) -> bool {
        j == 0 || j + 1 == self.nodes.len()
    }

    fn same_domain(&self, other: &SpatialMesh) -> bool {
        let tol = 1e-12 * self.length();
        (self.x_left - other.x_left).abs() <= tol && (self.x_right - other.x_right).abs() <= tol
    }

    /// Plain-text listing of the nodes, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# x\n");
        for x in &self.nodes {
            let _ = writeln!(out, "{x:.16e}");
        }
        out
    }
}

/// Strictly increasing time nodes `0 = tau_0 < ... < tau_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    taus: Vec<f64>,
    deltas: Vec<f64>,
}

impl TimeGrid {
    /// `n` equal intervals on `[0, horizon]`.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid!("time horizon must be positive, got {horizon}"));
        }
        if n == 0 {
            return Err(invalid!("time grid needs at least one interval"));
        }
        let mut taus: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        taus[n] = horizon;
        Self::from_nodes(taus)
    }

    /// Validates an explicit node list.
    pub fn from_nodes(taus: Vec<f64>) -> Result<Self> {
        if taus.len() < 2 {
            return Err(invalid!("time grid needs at least two nodes"));
        }
        if taus[0] != 0.0 {
            return Err(invalid!("time grid must start at 0, got {}", taus[0]));
        }
        if taus.iter().any(|t| !t.is_finite()) {
            return Err(invalid!("time grid contains non-finite nodes"));
        }
        let deltas: Vec<f64> = taus.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(i) = deltas.iter().position(|&d| d <= 0.0) {
            return Err(invalid!(
                "time nodes must be strictly increasing (interval {i}: {} -> {})",
                taus[i],
                taus[i + 1]
            ));
        }
        Ok(Self { taus, deltas })
    }

    pub fn horizon(&self) -> f64 {
        *self.taus.last().unwrap()
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.deltas.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.taus.len()
    }

    /// Splits every marked interval at its midpoint.
    pub fn bisect(&self, marks: &[usize]) -> Result<TimeGrid> {
        let n = self.intervals();
        if let Some(&bad) = marks.iter().find(|&&i| i >= n) {
            return Err(invalid!("interval index {bad} out of range (grid has {n} intervals)"));
        }
        let marked: BTreeSet<usize> = marks.iter().copied().collect();
        let mut taus = Vec::with_capacity(self.taus.len() + marked.len());
        for i in 0..n {
            taus.push(self.taus[i]);
            if marked.contains(&i) {
                taus.push(0.5 * (self.taus[i] + self.taus[i + 1]));
            }
        }
        taus.push(self.taus[n]);
        TimeGrid::from_nodes(taus)
    }

    /// Index of the interval containing `t`, using the `(tau_i, tau_{i+1}]`
    /// convention; `t = 0` maps to interval 0.
    pub fn interval_of(&self, t: f64) -> usize {
        let k = self.taus.partition_point(|&tau| tau < t);
        k.saturating_sub(1).min(self.intervals() - 1)
    }

    fn same_span(&self, other: &TimeGrid) -> bool {
        (self.horizon() - other.horizon()).abs() <= 1e-12 * self.horizon()
    }

    /// Grid file contents: one node per line, ascending.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# tau\n");
        for t in &self.taus {
            let _ = writeln!(out, "{t:.16e}");
        }
        out
    }

    /// Parses the grid file format; `#` starts a comment line, blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut taus = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let t: f64 = line
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: not a number: {line:?}", lineno + 1)))?;
            taus.push(t);
        }
        Self::from_nodes(taus)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        Self::parse(&text)
    }
}

/// Nodal values of a scalar field on `TimeGrid x SpatialMesh`, time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    tgrid: TimeGrid,
    smesh: SpatialMesh,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(tgrid: &TimeGrid, smesh: &SpatialMesh) -> Self {
        let len = tgrid.num_nodes() * smesh.num_nodes();
        Self {
            tgrid: tgrid.clone(),
            smesh: smesh.clone(),
            values: vec![0.0; len],
        }
    }

    pub fn from_fn(tgrid: &TimeGrid, smesh: &SpatialMesh, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(tgrid.num_nodes() * smesh.num_nodes());
        for &t in tgrid.taus() {
            for &x in smesh.nodes() {
                values.push(f(t, x));
            }
        }
        Self {
            tgrid: tgrid.clone(),
            smesh: smesh.clone(),
            values,
        }
    }

    pub fn from_values(tgrid: &TimeGrid, smesh: &SpatialMesh, values: Vec<f64>) -> Result<Self> {
        let expected = tgrid.num_nodes() * smesh.num_nodes();
        if values.len() != expected {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grids need {expected}",
                values.len()
            )));
        }
        Ok(Self {
            tgrid: tgrid.clone(),
            smesh: smesh.clone(),
            values,
        })
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn smesh(&self) -> &SpatialMesh {
        &self.smesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.smesh.num_nodes() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let nx = self.smesh.num_nodes();
        self.values[i * nx + j] = v;
    }

    /// Spatial slice at time node `i`.
    pub fn slice(&self, i: usize) -> &[f64] {
        let nx = self.smesh.num_nodes();
        &self.values[i * nx..(i + 1) * nx]
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut [f64] {
        let nx = self.smesh.num_nodes();
        &mut self.values[i * nx..(i + 1) * nx]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Tensor-product piecewise-linear interpolation onto new grids covering
    /// the same space-time rectangle.
    pub fn interpolate(&self, dst_tgrid: &TimeGrid, dst_smesh: &SpatialMesh) -> Result<SpaceTimeField> {
        if !self.tgrid.same_span(dst_tgrid) {
            return Err(Error::GridMismatch(format!(
                "time horizons differ: {} vs {}",
                self.tgrid.horizon(),
                dst_tgrid.horizon()
            )));
        }
        if !self.smesh.same_domain(dst_smesh) {
            return Err(Error::GridMismatch(format!(
                "spatial domains differ: [{}, {}] vs [{}, {}]",
                self.smesh.x_left, self.smesh.x_right, dst_smesh.x_left, dst_smesh.x_right
            )));
        }
        let tw: Vec<(usize, f64)> = dst_tgrid.taus().iter().map(|&t| locate(self.tgrid.taus(), t)).collect();
        let xw: Vec<(usize, f64)> = dst_smesh.nodes().iter().map(|&x| locate(self.smesh.nodes(), x)).collect();
        let mut out = SpaceTimeField::zeros(dst_tgrid, dst_smesh);
        for (i, &(ti, lt)) in tw.iter().enumerate() {
            let row = out.slice_mut(i);
            for (j, &(xj, lx)) in xw.iter().enumerate() {
                let v00 = self.get(ti, xj);
                row[j] = if lt == 0.0 && lx == 0.0 {
                    v00
                } else if lt == 0.0 {
                    (1.0 - lx) * v00 + lx * self.get(ti, xj + 1)
                } else if lx == 0.0 {
                    (1.0 - lt) * v00 + lt * self.get(ti + 1, xj)
                } else {
                    (1.0 - lt) * ((1.0 - lx) * v00 + lx * self.get(ti, xj + 1))
                        + lt * ((1.0 - lx) * self.get(ti + 1, xj) + lx * self.get(ti + 1, xj + 1))
                };
            }
        }
        Ok(out)
    }
}

/// Returns `(k, lambda)` with `s = (1 - lambda) nodes[k] + lambda nodes[k + 1]`;
/// `lambda == 0` exactly when `s` coincides with a node.
fn locate(nodes: &[f64], s: f64) -> (usize, f64) {
    let last = nodes.len() - 1;
    let tol = 1e-12 * (nodes[last] - nodes[0]);
    let k = nodes.partition_point(|&v| v < s);
    if k <= last && (nodes[k] - s).abs() <= tol {
        return (k, 0.0);
    }
    if k > 0 && (s - nodes[k - 1]).abs() <= tol {
        return (k - 1, 0.0);
    }
    let k = k.clamp(1, last) - 1;
    let lambda = ((s - nodes[k]) / (nodes[k + 1] - nodes[k])).clamp(0.0, 1.0);
    (k, lambda)
}
