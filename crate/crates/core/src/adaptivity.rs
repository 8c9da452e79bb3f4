//! Residual-based time indicators, marking and the adaptive refinement loop.

use std::fmt::Write as _;

use crate::assimilation::ProblemSpec;
use crate::elliptic::{self, EllipticSolution};
use crate::error::{invalid, Result};
use crate::fem1d::GaussRule;
use crate::forward;
use crate::mesh::{SpatialMesh, TimeGrid};

/// Each time interval is integrated with a composite rule on this many
/// equal pieces so that layers narrower than the interval are seen.
pub const TIME_SUBCELLS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorIndicators {
    /// `eta_i^2` per time interval.
    pub per_interval: Vec<f64>,
    /// `eta^2`, the sum of the entries.
    pub total: f64,
}

impl ErrorIndicators {
    pub fn from_values(per_interval: Vec<f64>) -> Result<Self> {
        if per_interval.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid!("indicators must be finite and non-negative"));
        }
        let total = per_interval.iter().sum();
        Ok(Self { per_interval, total })
    }

    /// `eta = sqrt(eta^2)`.
    pub fn eta(&self) -> f64 {
        self.total.sqrt()
    }

    pub fn len(&self) -> usize {
        self.per_interval.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_interval.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Bisect the single interval with the largest indicator.
    Max,
    /// Bisect a minimal set carrying the given fraction of `eta^2`.
    Doerfler(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub strategy: Strategy,
    pub n_initial: usize,
    pub n_max: usize,
    /// Upper bound on bisections per cycle.
    pub max_marks: Option<usize>,
    /// Solve on a fine uniform grid and record `|p(0) - p_k(0)|` per cycle.
    pub record_reference_error: bool,
    /// Evaluate indicators with the discrete solution terms included.
    pub use_solution: bool,
    pub quad_order: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Max,
            n_initial: 5,
            n_max: 40,
            max_marks: None,
            record_reference_error: false,
            use_solution: false,
            quad_order: 3,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_initial == 0 {
            return Err(invalid!("adapt.n_initial must be at least 1"));
        }
        if self.n_initial > self.n_max {
            return Err(invalid!("adapt.n_initial ({}) exceeds adapt.n_max ({})", self.n_initial, self.n_max));
        }
        if let Strategy::Doerfler(theta) = self.strategy {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(invalid!("Doerfler fraction must lie in (0, 1), got {theta}"));
            }
        }
        if self.max_marks == Some(0) {
            return Err(invalid!("adapt.max_marks must be at least 1"));
        }
        GaussRule::new(self.quad_order)?;
        Ok(())
    }
}

/// One row of the refinement history.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub n: usize,
    pub taus: Vec<f64>,
    pub indicators: ErrorIndicators,
    pub true_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdaptHistory {
    pub cycles: Vec<CycleRecord>,
}

impl AdaptHistory {
    /// CSV with columns `cycle,N,eta_total,true_error`; `eta_total` is `eta`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cycle,N,eta_total,true_error\n");
        for c in &self.cycles {
            let err = c.true_error.map(|e| format!("{e:.16e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{},{:.16e},{}", c.cycle, c.n, c.indicators.eta(), err);
        }
        out
    }
}

/// Per-interval `eta_i^2 = dt_i^2 * int_{I_i} int_Omega R^2` with
/// `R = f - dt y_d - A y_d + p_tt - A q`.
///
/// For linear elements `p_tt` vanishes on each interval and `A q` reduces to
/// `-a' q_x + a0 q`, so without a solution only the data part is used.
pub fn compute_indicators(
    problem: &ProblemSpec,
    sol: Option<&EllipticSolution>,
    smesh: &SpatialMesh,
    tgrid: &TimeGrid,
    quad_order: usize,
) -> Result<ErrorIndicators> {
    problem.check_grids(smesh, tgrid)?;
    let rule = GaussRule::new(quad_order)?;
    if let Some(s) = sol {
        if s.q.tgrid().taus() != tgrid.taus() || s.q.smesh().num_nodes() != smesh.num_nodes() {
            return Err(crate::error::Error::GridMismatch("solution does not live on the indicator grids".into()));
        }
    }
    let taus = tgrid.taus();
    let xs = smesh.nodes();
    let fd_step = 1e-6 * smesh.length();
    let slope = |x: f64| (problem.diffusion(x + fd_step) - problem.diffusion(x - fd_step)) / (2.0 * fd_step);
    let mut values = Vec::with_capacity(tgrid.intervals());
    for (i, &dt) in tgrid.deltas().iter().enumerate() {
        let mut integral = 0.0;
        let pieces = (0..TIME_SUBCELLS).flat_map(|k| {
            let a = taus[i] + dt * k as f64 / TIME_SUBCELLS as f64;
            let b = taus[i] + dt * (k + 1) as f64 / TIME_SUBCELLS as f64;
            rule.mapped(a, b).map(move |(t, w, _)| (t, w))
        });
        for (t, wt) in pieces {
            let st = (t - taus[i]) / dt;
            for e in 0..smesh.cells() {
                let h = xs[e + 1] - xs[e];
                for (x, wx, sx) in rule.mapped(xs[e], xs[e + 1]) {
                    let mut r = problem.data_residual(t, x);
                    if let Some(s) = sol {
                        let q = |j: usize| (1.0 - st) * s.q.get(i, j) + st * s.q.get(i + 1, j);
                        let (q0, q1) = (q(e), q(e + 1));
                        let qx = (q1 - q0) / h;
                        let qv = (1.0 - sx) * q0 + sx * q1;
                        r -= -slope(x) * qx + problem.reaction(x) * qv;
                    }
                    integral += wt * wx * r * r;
                }
            }
        }
        values.push(dt * dt * integral);
    }
    ErrorIndicators::from_values(values)
}

/// Marked interval indices in ascending order; empty when all indicators vanish.
pub fn mark(ind: &ErrorIndicators, strategy: Strategy) -> Vec<usize> {
    if ind.is_empty() || ind.total <= 0.0 {
        return Vec::new();
    }
    let v = &ind.per_interval;
    match strategy {
        Strategy::Max => {
            let mut best = 0;
            for (i, &x) in v.iter().enumerate() {
                if x > v[best] {
                    best = i;
                }
            }
            vec![best]
        }
        Strategy::Doerfler(theta) => {
            let mut order: Vec<usize> = (0..v.len()).collect();
            order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
            let goal = theta * ind.total;
            let mut acc = 0.0;
            let mut chosen = Vec::new();
            for i in order {
                chosen.push(i);
                acc += v[i];
                if acc >= goal {
                    break;
                }
            }
            chosen.sort_unstable();
            chosen
        }
    }
}

/// Greedy marking restricted to at most `cap` intervals, keeping the largest.
fn cap_marks(marks: Vec<usize>, ind: &ErrorIndicators, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(c) if marks.len() > c => {
            let v = &ind.per_interval;
            let mut m = marks;
            m.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
            m.truncate(c);
            m.sort_unstable();
            m
        }
        _ => marks,
    }
}

/// Solve, estimate, mark and bisect until `N >= n_max` or nothing is marked.
pub fn adapt_loop(problem: &ProblemSpec, smesh: &SpatialMesh, cfg: &AdaptConfig) -> Result<(TimeGrid, AdaptHistory)> {
    cfg.validate()?;
    let horizon = problem.horizon();
    let mut grid = TimeGrid::uniform(horizon, cfg.n_initial)?;
    problem.check_grids(smesh, &grid)?;

    let reference = if cfg.record_reference_error {
        let fine = TimeGrid::uniform(horizon, 4 * cfg.n_max)?;
        let sys = elliptic::assemble(problem, smesh, &fine, cfg.quad_order)?;
        Some(elliptic::solve_sparse(&sys)?.p.slice(0).to_vec())
    } else {
        None
    };

    let mut history = AdaptHistory::default();
    for cycle in 0.. {
        let sol = if cfg.use_solution || reference.is_some() {
            let sys = elliptic::assemble(problem, smesh, &grid, cfg.quad_order)?;
            Some(elliptic::solve_sparse(&sys)?)
        } else {
            None
        };
        let ind = compute_indicators(
            problem,
            if cfg.use_solution { sol.as_ref() } else { None },
            smesh,
            &grid,
            cfg.quad_order,
        )?;
        let true_error = match (&reference, &sol) {
            (Some(r), Some(s)) => {
                let diff: Vec<f64> = r.iter().zip(s.p.slice(0)).map(|(a, b)| a - b).collect();
                Some(forward::l2_norm(smesh, &diff)?)
            }
            _ => None,
        };
        let marks = cap_marks(mark(&ind, cfg.strategy), &ind, cfg.max_marks);
        history.cycles.push(CycleRecord {
            cycle,
            n: grid.intervals(),
            taus: grid.taus().to_vec(),
            indicators: ind,
            true_error,
        });
        if grid.intervals() >= cfg.n_max || marks.is_empty() {
            break;
        }
        grid = grid.bisect(&marks)?;
    }
    Ok((grid, history))
}
