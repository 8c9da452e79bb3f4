//! Experiment drivers shared by the commands and the acceptance suite.

use assim_core::adaptivity::{self, AdaptConfig, AdaptHistory};
use assim_core::assimilation::{self, AssimilationOptions};
use assim_core::elliptic;
use assim_core::forward::{self, ThetaSchemeConfig};
use assim_core::problems::{self, Example1Variant};
use assim_core::{ProblemSpec, Result, SpaceTimeField, SpatialMesh, TimeGrid};

pub const TABLE1_ALPHAS: [f64; 7] = [0.01, 0.1, 0.25, 0.5, 1.0, 3.0, 10.0];

/// Published values; the first entry of each row is the background run.
pub const TABLE1_PUBLISHED: [[f64; 8]; 2] = [
    [0.3436, 0.0076, 0.0640, 0.1252, 0.1835, 0.2392, 0.3000, 0.3292],
    [0.5298, 0.0210, 0.1425, 0.2401, 0.3215, 0.3952, 0.4738, 0.5114],
];

pub const EXAMPLE2_PUBLISHED: [(&str, f64); 4] = [
    ("rmse_before", 0.7301),
    ("rmse_after", 0.5314),
    ("e_max_before", 1.514),
    ("e_max_after", 1.062),
];

pub const EXAMPLE3_EPS: [f64; 6] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Entry {
    pub variant: Example1Variant,
    /// `None` for the background run.
    pub alpha: Option<f64>,
    pub published: f64,
    pub computed: f64,
}

impl Table1Entry {
    pub fn setting(&self) -> String {
        let v = match self.variant {
            Example1Variant::I => "example1i",
            Example1Variant::II => "example1ii",
        };
        match self.alpha {
            Some(a) => format!("{v} alpha={a}"),
            None => format!("{v} background"),
        }
    }
}

/// Background and assimilated RMSE of both Example 1 variants.
pub fn table1(nu: f64, d: usize, n: usize, opts: &AssimilationOptions) -> Result<Vec<Table1Entry>> {
    let sm = SpatialMesh::unit(d)?;
    let tg = TimeGrid::uniform(1.0, n)?;
    let cfg = ThetaSchemeConfig::new(opts.theta, tg.clone())?;
    let mut out = Vec::with_capacity(16);
    for (row, variant) in [Example1Variant::I, Example1Variant::II].into_iter().enumerate() {
        let base = problems::example1(variant, 1.0, nu)?;
        let y = assimilation::background_run(&base, &sm, &cfg)?;
        out.push(Table1Entry {
            variant,
            alpha: None,
            published: TABLE1_PUBLISHED[row][0],
            computed: assimilation::rmse(&y, &|t, x| base.observation(t, x)),
        });
        for (k, &alpha) in TABLE1_ALPHAS.iter().enumerate() {
            let p = base.with_alpha(alpha)?;
            let r = assimilation::assimilate_with(&p, &sm, &tg, opts)?;
            out.push(Table1Entry {
                variant,
                alpha: Some(alpha),
                published: TABLE1_PUBLISHED[row][k + 1],
                computed: r.rmse,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Example2Report {
    pub rmse_before: f64,
    pub rmse_after: f64,
    pub e_max_before: f64,
    pub e_max_after: f64,
    pub abs_error_before: SpaceTimeField,
    pub abs_error_after: SpaceTimeField,
}

impl Example2Report {
    pub fn values(&self) -> [f64; 4] {
        [self.rmse_before, self.rmse_after, self.e_max_before, self.e_max_after]
    }
}

fn abs_error(y: &SpaceTimeField, p: &ProblemSpec) -> Result<SpaceTimeField> {
    let mut values = Vec::with_capacity(y.values().len());
    for (i, &t) in y.tgrid().taus().iter().enumerate() {
        for (j, &x) in y.smesh().nodes().iter().enumerate() {
            values.push((p.observation(t, x) - y.get(i, j)).abs());
        }
    }
    SpaceTimeField::from_values(y.tgrid(), y.smesh(), values)
}

/// Model without the inflow, started from the background and from the
/// assimilated control, compared against the observation.
pub fn example2(alpha: f64, nu: f64, eps: f64, d: usize, n: usize, opts: &AssimilationOptions) -> Result<Example2Report> {
    let p = problems::example2(alpha, nu, eps)?.problem;
    let sm = SpatialMesh::unit(d)?;
    let tg = TimeGrid::uniform(1.0, n)?;
    let cfg = ThetaSchemeConfig::new(opts.theta, tg.clone())?;
    let before = assimilation::background_run(&p, &sm, &cfg)?;
    let after = assimilation::assimilate_with(&p, &sm, &tg, opts)?;
    let obs = |t: f64, x: f64| p.observation(t, x);
    Ok(Example2Report {
        rmse_before: assimilation::rmse(&before, &obs),
        rmse_after: after.rmse,
        e_max_before: assimilation::max_abs_error(&before, &obs),
        e_max_after: assimilation::max_abs_error(&after.state, &obs),
        abs_error_before: abs_error(&before, &p)?,
        abs_error_after: abs_error(&after.state, &p)?,
    })
}

/// Initial adjoint at the nodes for a given time grid.
pub fn initial_adjoint(problem: &ProblemSpec, smesh: &SpatialMesh, tgrid: &TimeGrid, quad_order: usize) -> Result<Vec<f64>> {
    let sys = elliptic::assemble(problem, smesh, tgrid, quad_order)?;
    Ok(elliptic::solve_sparse(&sys)?.p.slice(0).to_vec())
}

/// Adaptive versus uniform error of `p(0)` per refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub n: usize,
    pub adaptive_mse: f64,
    pub uniform_mse: f64,
}

/// Compares every grid of an adaptive history with the uniform grid of the
/// same size against `reference`.
pub fn error_vs_n(
    problem: &ProblemSpec,
    smesh: &SpatialMesh,
    history: &AdaptHistory,
    reference: &[f64],
    quad_order: usize,
) -> Result<Vec<ErrorRow>> {
    let mut rows = Vec::with_capacity(history.cycles.len());
    for c in &history.cycles {
        let adaptive = TimeGrid::from_nodes(c.taus.clone())?;
        let uniform = TimeGrid::uniform(problem.horizon(), c.n)?;
        let pa = initial_adjoint(problem, smesh, &adaptive, quad_order)?;
        let pu = initial_adjoint(problem, smesh, &uniform, quad_order)?;
        rows.push(ErrorRow {
            n: c.n,
            adaptive_mse: assimilation::mse_initial(&pa, reference)?,
            uniform_mse: assimilation::mse_initial(&pu, reference)?,
        });
    }
    Ok(rows)
}

/// Reference initial adjoint: closed form when the catalog has one,
/// otherwise a solve on a uniform grid with four times `n_max` intervals.
pub fn reference_initial_adjoint(
    name: &str,
    params: &problems::CatalogParams,
    problem: &ProblemSpec,
    smesh: &SpatialMesh,
    n_max: usize,
    quad_order: usize,
) -> Result<Vec<f64>> {
    if name == "example3" {
        let ex = problems::example3(params.alpha, params.nu, params.m, params.eps)?;
        return Ok(smesh.nodes().iter().map(|&x| (ex.exact_p)(0.0, x)).collect());
    }
    let fine = TimeGrid::uniform(problem.horizon(), 4 * n_max)?;
    initial_adjoint(problem, smesh, &fine, quad_order)
}

#[derive(Debug, Clone)]
pub struct Example3Report {
    pub eps: f64,
    pub grid: TimeGrid,
    pub adaptive_mse: f64,
    pub uniform_mse: f64,
    /// Share of inserted nodes inside `[m - 2 eps, m + 2 eps]`.
    pub inserted_in_window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example3Setup {
    pub alpha: f64,
    pub nu: f64,
    pub m: f64,
    pub eps: f64,
    pub d: usize,
    pub n_initial: usize,
    pub n_max: usize,
    pub quad_order: usize,
}

impl Default for Example3Setup {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            nu: 0.1,
            m: 0.5,
            eps: 0.05,
            d: 40,
            n_initial: 5,
            n_max: 30,
            quad_order: 3,
        }
    }
}

/// Max-marking adaptive run compared with the uniform grid of equal size.
pub fn example3(setup: &Example3Setup) -> Result<Example3Report> {
    let Example3Setup {
        alpha,
        nu,
        m,
        eps,
        d,
        n_initial,
        n_max,
        quad_order,
    } = *setup;
    let ex = problems::example3(alpha, nu, m, eps)?;
    let sm = SpatialMesh::unit(d)?;
    let cfg = AdaptConfig {
        n_initial,
        n_max,
        quad_order,
        ..AdaptConfig::default()
    };
    let (grid, _) = adaptivity::adapt_loop(&ex.problem, &sm, &cfg)?;
    let exact: Vec<f64> = sm.nodes().iter().map(|&x| (ex.exact_p)(0.0, x)).collect();
    let uniform = TimeGrid::uniform(1.0, grid.intervals())?;
    let pa = initial_adjoint(&ex.problem, &sm, &grid, quad_order)?;
    let pu = initial_adjoint(&ex.problem, &sm, &uniform, quad_order)?;
    let initial = TimeGrid::uniform(1.0, n_initial)?;
    let inserted: Vec<f64> = grid
        .taus()
        .iter()
        .copied()
        .filter(|t| !initial.taus().iter().any(|s| (s - t).abs() <= 1e-12))
        .collect();
    let inside = inserted.iter().filter(|&&t| t >= m - 2.0 * eps && t <= m + 2.0 * eps).count();
    Ok(Example3Report {
        eps,
        grid,
        adaptive_mse: assimilation::mse_initial(&pa, &exact)?,
        uniform_mse: assimilation::mse_initial(&pu, &exact)?,
        inserted_in_window: if inserted.is_empty() { 0.0 } else { inside as f64 / inserted.len() as f64 },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleLevel {
    pub level: usize,
    pub relative_difference: f64,
    /// Observed order against the previous level.
    pub order: Option<f64>,
}

/// Differences below this are treated as agreement to rounding.
const AGREEMENT_FLOOR: f64 = 1e-13;

/// Dense oracle versus elliptic control on `d = N = level` grids.
pub fn oracle_study(problem: &ProblemSpec, levels: &[usize], opts: &AssimilationOptions) -> Result<Vec<OracleLevel>> {
    for &l in levels {
        let size = (l + 1) * l.saturating_sub(1);
        if size > forward::ORACLE_SIZE_CAP {
            return Err(assim_core::Error::TooLarge(format!(
                "oracle level d=N={l} needs {size} unknowns, cap is {}",
                forward::ORACLE_SIZE_CAP
            )));
        }
    }
    let mut out: Vec<OracleLevel> = Vec::with_capacity(levels.len());
    for &l in levels {
        let sm = SpatialMesh::unit(l)?;
        let tg = TimeGrid::uniform(problem.horizon(), l)?;
        let u_oracle = forward::kkt_oracle(problem, &sm, &tg)?;
        let r = assimilation::assimilate_with(problem, &sm, &tg, opts)?;
        let num: f64 = r.control.iter().zip(&u_oracle).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = u_oracle.iter().map(|b| b * b).sum::<f64>().sqrt();
        let diff = num / den;
        let order = out.last().map(|prev| {
            if diff <= AGREEMENT_FLOOR && prev.relative_difference <= AGREEMENT_FLOOR {
                f64::INFINITY
            } else {
                (prev.relative_difference / diff).ln() / (l as f64 / prev.level as f64).ln()
            }
        });
        out.push(OracleLevel {
            level: l,
            relative_difference: diff,
            order,
        });
    }
    Ok(out)
}

/// Smallest observed order across consecutive levels.
pub fn worst_order(levels: &[OracleLevel]) -> f64 {
    levels.iter().filter_map(|l| l.order).fold(f64::INFINITY, f64::min)
}
