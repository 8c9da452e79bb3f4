//! Theta-scheme time stepping for the state and adjoint equations, and a
//! dense reduced-space optimizer used as an independent oracle.

use nalgebra::{DMatrix, DVector};

use crate::assimilation::{field_fn, ProblemSpec};
use crate::error::{invalid, Error, Result};
use crate::fem1d::{self, GaussRule};
use crate::mesh::{SpaceTimeField, SpatialMesh, TimeGrid};
use crate::sparse::CsrMatrix;

/// Largest `(N + 1) * (d - 1)` the dense oracle accepts.
pub const ORACLE_SIZE_CAP: usize = 2000;

const QUAD_ORDER: usize = 3;
/// Sub-steps of the composite rule for the forcing moment of one time step.
const FORCING_SUBSTEPS: usize = 16;

#[derive(Debug, Clone)]
pub struct ThetaSchemeConfig {
    theta: f64,
    tgrid: TimeGrid,
}

impl ThetaSchemeConfig {
    pub fn new(theta: f64, tgrid: TimeGrid) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(invalid!("theta must lie in [0, 1], got {theta}"));
        }
        Ok(Self { theta, tgrid })
    }

    pub fn crank_nicolson(tgrid: TimeGrid) -> Self {
        Self { theta: 0.5, tgrid }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }
}

/// Interior tridiagonal block of a 1-D finite element matrix.
struct Tridiag {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiag {
    fn interior(mass: &CsrMatrix, op: &CsrMatrix, scale: f64) -> Self {
        let n = mass.nrows() - 2;
        let entry = |r: usize, c: usize| mass.get(r, c) + scale * op.get(r, c);
        Self {
            lower: (0..n).map(|k| if k == 0 { 0.0 } else { entry(k + 1, k) }).collect(),
            diag: (0..n).map(|k| entry(k + 1, k + 1)).collect(),
            upper: (0..n).map(|k| if k + 1 == n { 0.0 } else { entry(k + 1, k + 2) }).collect(),
        }
    }

    /// Thomas algorithm; the matrices here are symmetric positive definite.
    fn solve(&self, rhs: &mut [f64]) {
        let n = self.diag.len();
        let mut c = vec![0.0; n];
        c[0] = self.upper[0] / self.diag[0];
        rhs[0] /= self.diag[0];
        for k in 1..n {
            let m = self.diag[k] - self.lower[k] * c[k - 1];
            c[k] = self.upper[k] / m;
            rhs[k] = (rhs[k] - self.lower[k] * rhs[k - 1]) / m;
        }
        for k in (0..n - 1).rev() {
            rhs[k] -= c[k] * rhs[k + 1];
        }
    }
}

struct SpatialPair {
    mass: CsrMatrix,
    op: CsrMatrix,
}

impl SpatialPair {
    fn new(problem: &ProblemSpec, smesh: &SpatialMesh) -> Result<Self> {
        if smesh.cells() < 2 {
            return Err(invalid!("spatial mesh needs at least 2 cells, got {}", smesh.cells()));
        }
        let m = fem1d::assemble_spatial_matrices(
            smesh,
            &|x| problem.diffusion(x),
            &|x| problem.reaction(x),
            QUAD_ORDER,
        )?;
        let op = m.operator();
        Ok(Self { mass: m.mass, op })
    }

    /// Right-hand side `(M - c K) v + dt M g` on all nodes.
    fn explicit_part(&self, v: &[f64], c: f64, dt: f64, g: &[f64]) -> Vec<f64> {
        let mv = self.mass.mul_vec(v);
        let kv = self.op.mul_vec(v);
        let mg = self.mass.mul_vec(g);
        (0..v.len()).map(|k| mv[k] - c * kv[k] + dt * mg[k]).collect()
    }
}

/// Nodal `int_0^1 w(s) f(t0 + s dt, x) ds` with the linear weight
/// `w(s) = (4 - 6 theta) + (12 theta - 6) s`.
///
/// The weight has unit mass and first moment `theta`, so the result equals
/// `theta f(t1) + (1 - theta) f(t0)` whenever `f` is linear in time, while
/// narrow pulses inside a step are still integrated.
fn forcing_moment(problem: &ProblemSpec, smesh: &SpatialMesh, t0: f64, dt: f64, theta: f64, rule: &GaussRule) -> Vec<f64> {
    let mut out = vec![0.0; smesh.num_nodes()];
    let h = 1.0 / FORCING_SUBSTEPS as f64;
    for k in 0..FORCING_SUBSTEPS {
        for (s, ws, _) in rule.mapped(k as f64 * h, (k + 1) as f64 * h) {
            let w = ws * ((4.0 - 6.0 * theta) + (12.0 * theta - 6.0) * s);
            let t = t0 + s * dt;
            for (o, &x) in out.iter_mut().zip(smesh.nodes()) {
                *o += w * problem.forcing(t, x);
            }
        }
    }
    out
}

fn same_grid(a: &TimeGrid, b: &TimeGrid) -> bool {
    a.taus().len() == b.taus().len() && a.taus().iter().zip(b.taus()).all(|(x, y)| (x - y).abs() <= 1e-12 * b.horizon())
}

/// Marches the state equation forward from `u0` with homogeneous Dirichlet
/// boundary values.
pub fn solve_state(problem: &ProblemSpec, u0: &[f64], cfg: &ThetaSchemeConfig, smesh: &SpatialMesh) -> Result<SpaceTimeField> {
    let nx = smesh.num_nodes();
    if u0.len() != nx {
        return Err(invalid!("initial state has {} values, mesh has {nx} nodes", u0.len()));
    }
    if u0[0].abs() > 1e-12 || u0[nx - 1].abs() > 1e-12 {
        return Err(invalid!(
            "initial state must vanish on the boundary, got {} and {}",
            u0[0],
            u0[nx - 1]
        ));
    }
    let tgrid = &cfg.tgrid;
    problem.check_grids(smesh, tgrid)?;
    let pair = SpatialPair::new(problem, smesh)?;
    let theta = cfg.theta;
    let rule = GaussRule::new(QUAD_ORDER)?;

    let mut y = SpaceTimeField::zeros(tgrid, smesh);
    y.slice_mut(0)[1..nx - 1].copy_from_slice(&u0[1..nx - 1]);
    let taus = tgrid.taus();
    for (j, &dt) in tgrid.deltas().iter().enumerate() {
        let f = forcing_moment(problem, smesh, taus[j], dt, theta, &rule);
        let rhs = pair.explicit_part(y.slice(j), (1.0 - theta) * dt, dt, &f);
        let mut interior = rhs[1..nx - 1].to_vec();
        Tridiag::interior(&pair.mass, &pair.op, theta * dt).solve(&mut interior);
        y.slice_mut(j + 1)[1..nx - 1].copy_from_slice(&interior);
    }
    Ok(y)
}

/// Marches `-p_t + A p = y - y_d`, `p(T) = 0` backward with the same scheme.
pub fn solve_adjoint_classic(problem: &ProblemSpec, y: &SpaceTimeField, cfg: &ThetaSchemeConfig) -> Result<SpaceTimeField> {
    let tgrid = &cfg.tgrid;
    if !same_grid(y.tgrid(), tgrid) {
        return Err(Error::GridMismatch("state trajectory and scheme use different time grids".into()));
    }
    let smesh = y.smesh();
    problem.check_grids(smesh, tgrid)?;
    let pair = SpatialPair::new(problem, smesh)?;
    let nx = smesh.num_nodes();
    let theta = cfg.theta;
    let taus = tgrid.taus();
    let source = |i: usize| -> Vec<f64> {
        smesh
            .nodes()
            .iter()
            .enumerate()
            .map(|(j, &x)| y.get(i, j) - problem.observation(taus[i], x))
            .collect()
    };

    let mut p = SpaceTimeField::zeros(tgrid, smesh);
    let n = tgrid.intervals();
    let mut g_next = source(n);
    for j in (0..n).rev() {
        let dt = tgrid.deltas()[j];
        let g_here = source(j);
        let g: Vec<f64> = g_here.iter().zip(&g_next).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let rhs = pair.explicit_part(p.slice(j + 1), (1.0 - theta) * dt, dt, &g);
        let mut interior = rhs[1..nx - 1].to_vec();
        Tridiag::interior(&pair.mass, &pair.op, theta * dt).solve(&mut interior);
        p.slice_mut(j)[1..nx - 1].copy_from_slice(&interior);
        g_next = g_here;
    }
    Ok(p)
}

/// Trapezoid weights of a time grid.
fn trapezoid_weights(tgrid: &TimeGrid) -> Vec<f64> {
    let mut w = vec![0.0; tgrid.num_nodes()];
    for (i, &dt) in tgrid.deltas().iter().enumerate() {
        w[i] += 0.5 * dt;
        w[i + 1] += 0.5 * dt;
    }
    w
}

/// Discrete minimizer of `1/2 |y(u) - y_d|_W^2 + alpha/2 |u - y_b|_M^2` over
/// interior nodal controls, with `y(u)` from the Crank-Nicolson scheme and
/// `W` the trapezoid rule in time times the spatial mass matrix.
pub fn kkt_oracle(problem: &ProblemSpec, smesh: &SpatialMesh, tgrid: &TimeGrid) -> Result<Vec<f64>> {
    let nx = smesh.num_nodes();
    let nt = tgrid.num_nodes();
    let n_int = nx.saturating_sub(2);
    let size = nt * n_int;
    if size > ORACLE_SIZE_CAP {
        return Err(Error::TooLarge(format!(
            "oracle limited to (N+1)(d-1) <= {ORACLE_SIZE_CAP}, got {size} (N={}, d={})",
            tgrid.intervals(),
            smesh.cells()
        )));
    }
    let cfg = ThetaSchemeConfig::crank_nicolson(tgrid.clone());
    let unforced = problem.with_forcing(field_fn(|_, _| 0.0));
    let pair = SpatialPair::new(problem, smesh)?;
    let weights = trapezoid_weights(tgrid);

    // W-weighted trajectory, flattened time-major
    let weigh = |y: &SpaceTimeField| -> Vec<f64> {
        let mut out = Vec::with_capacity(nt * nx);
        for (i, w) in weights.iter().enumerate() {
            out.extend(pair.mass.mul_vec(y.slice(i)).into_iter().map(|v| w * v));
        }
        out
    };

    let mut columns = Vec::with_capacity(n_int);
    for k in 0..n_int {
        let mut e = vec![0.0; nx];
        e[k + 1] = 1.0;
        columns.push(solve_state(&unforced, &e, &cfg, smesh)?);
    }
    let offset = solve_state(problem, &vec![0.0; nx], &cfg, smesh)?;
    let target = problem.observation_field(tgrid, smesh);
    let misfit: Vec<f64> = target.values().iter().zip(offset.values()).map(|(d, c)| d - c).collect();

    let weighted: Vec<Vec<f64>> = columns.iter().map(weigh).collect();
    let mut normal = DMatrix::<f64>::zeros(n_int, n_int);
    let mut rhs = DVector::<f64>::zeros(n_int);
    let alpha = problem.alpha();
    let yb = pair.mass.mul_vec(&problem.background_nodal(smesh));
    for a in 0..n_int {
        for b in 0..=a {
            let v: f64 = weighted[a].iter().zip(columns[b].values()).map(|(x, y)| x * y).sum();
            let reg = alpha * pair.mass.get(a + 1, b + 1);
            normal[(a, b)] = v + reg;
            normal[(b, a)] = v + reg;
        }
        rhs[a] = weighted[a].iter().zip(&misfit).map(|(x, y)| x * y).sum::<f64>() + alpha * yb[a + 1];
    }
    let chol = normal.cholesky().ok_or_else(|| Error::Solver {
        reason: "oracle normal equations are not positive definite".into(),
        residual: f64::NAN,
    })?;
    let u = chol.solve(&rhs);
    let mut out = vec![0.0; nx];
    out[1..nx - 1].copy_from_slice(u.as_slice());
    Ok(out)
}

/// `|u - (y_b - p(0)/alpha)|` in the spatial L2 norm, with `p` the adjoint of
/// the trajectory started from `u`.
pub fn optimality_residual(problem: &ProblemSpec, u: &[f64], cfg: &ThetaSchemeConfig, smesh: &SpatialMesh) -> Result<f64> {
    let y = solve_state(problem, u, cfg, smesh)?;
    let p = solve_adjoint_classic(problem, &y, cfg)?;
    let p0 = p.slice(0);
    let alpha = problem.alpha();
    let r: Vec<f64> = smesh
        .nodes()
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            if smesh.is_boundary(j) {
                u[j]
            } else {
                u[j] - (problem.background(x) - p0[j] / alpha)
            }
        })
        .collect();
    let pair = SpatialPair::new(problem, smesh)?;
    Ok(mass_norm(&pair.mass, &r))
}

/// `sqrt(v^T M v)` for the spatial mass matrix of `smesh`.
pub fn l2_norm(smesh: &SpatialMesh, v: &[f64]) -> Result<f64> {
    let m = fem1d::assemble_spatial_matrices(smesh, &|_| 1.0, &|_| 0.0, 1)?;
    Ok(mass_norm(&m.mass, v))
}

fn mass_norm(mass: &CsrMatrix, v: &[f64]) -> f64 {
    mass.quad_form(v, v).max(0.0).sqrt()
}
