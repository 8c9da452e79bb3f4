//! Problem description and the end-to-end assimilation pipeline:
//! solve the mixed space-time system for the adjoint, extract the control
//! from its initial slice, and run the model from that control.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::{self, EllipticSolution};
use crate::error::{invalid, Error, Result};
use crate::forward::{self, ThetaSchemeConfig};
use crate::mesh::{SpaceTimeField, SpatialMesh, TimeGrid};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub fn scalar_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

pub fn field_fn(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> FieldFn {
    Arc::new(f)
}

/// Raw problem ingredients; validated by [`ProblemSpec::new`].
///
/// The operator is `A v = -(diffusion(x) v')' + reaction(x) v`. The
/// observation `y_d` must come with its time derivative and with `A y_d`
/// so the load of the fourth-order problem can be evaluated pointwise.
#[derive(Clone)]
pub struct ProblemData {
    pub name: String,
    pub diffusion: ScalarFn,
    pub reaction: ScalarFn,
    pub alpha: f64,
    pub horizon: f64,
    pub domain: (f64, f64),
    pub forcing: FieldFn,
    pub observation: FieldFn,
    pub observation_dt: FieldFn,
    pub observation_op: FieldFn,
    pub background: ScalarFn,
}

#[derive(Clone)]
pub struct ProblemSpec {
    data: ProblemData,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.data.name)
            .field("alpha", &self.data.alpha)
            .field("horizon", &self.data.horizon)
            .field("domain", &self.data.domain)
            .finish_non_exhaustive()
    }
}

const SPOT_CHECK_SAMPLES: usize = 20;
const SPOT_CHECK_SEED: u64 = 0x5eed_da7a;
const SPOT_CHECK_TOL: f64 = 1e-4;

impl ProblemSpec {
    pub fn new(data: ProblemData) -> Result<Self> {
        if !(data.alpha.is_finite() && data.alpha > 0.0) {
            return Err(invalid!("alpha must be positive, got {}", data.alpha));
        }
        if !(data.horizon.is_finite() && data.horizon > 0.0) {
            return Err(invalid!("horizon T must be positive, got {}", data.horizon));
        }
        let (xl, xr) = data.domain;
        if !(xl.is_finite() && xr.is_finite() && xl < xr) {
            return Err(invalid!("domain must satisfy x_left < x_right, got [{xl}, {xr}]"));
        }
        let spec = Self { data };
        spec.spot_check_time_derivative()?;
        Ok(spec)
    }

    /// Compares `observation_dt` against a fourth-order central difference of
    /// `observation` at pseudo-random interior points.
    fn spot_check_time_derivative(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(SPOT_CHECK_SEED);
        let t_end = self.data.horizon;
        let (xl, xr) = self.data.domain;
        let h = 1e-4 * t_end;
        for _ in 0..SPOT_CHECK_SAMPLES {
            let t = rng.random_range(3.0 * h..t_end - 3.0 * h);
            let x = rng.random_range(xl..xr);
            let y = |s: f64| (self.data.observation)(s, x);
            let fd = (y(t - 2.0 * h) - 8.0 * y(t - h) + 8.0 * y(t + h) - y(t + 2.0 * h)) / (12.0 * h);
            let exact = (self.data.observation_dt)(t, x);
            let scale = exact.abs().max(1e-6);
            if !((fd - exact).abs() <= SPOT_CHECK_TOL * scale) {
                return Err(Error::InconsistentData(format!(
                    "{}: observation time derivative mismatch at (t={t:.6}, x={x:.6}): \
                     callback {exact:e}, finite difference {fd:e}",
                    self.data.name
                )));
            }
        }
        Ok(())
    }

    /// Same problem with a different trust coefficient.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid!("alpha must be positive, got {alpha}"));
        }
        let mut data = self.data.clone();
        data.alpha = alpha;
        Ok(Self { data })
    }

    /// Same problem with a different model forcing.
    pub fn with_forcing(&self, forcing: FieldFn) -> Self {
        let mut data = self.data.clone();
        data.forcing = forcing;
        Self { data }
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn name(&self) -> &str {
        &self.data.name
    }

    pub fn alpha(&self) -> f64 {
        self.data.alpha
    }

    pub fn horizon(&self) -> f64 {
        self.data.horizon
    }

    pub fn domain(&self) -> (f64, f64) {
        self.data.domain
    }

    pub fn diffusion(&self, x: f64) -> f64 {
        (self.data.diffusion)(x)
    }

    pub fn reaction(&self, x: f64) -> f64 {
        (self.data.reaction)(x)
    }

    pub fn forcing(&self, t: f64, x: f64) -> f64 {
        (self.data.forcing)(t, x)
    }

    pub fn observation(&self, t: f64, x: f64) -> f64 {
        (self.data.observation)(t, x)
    }

    pub fn observation_dt(&self, t: f64, x: f64) -> f64 {
        (self.data.observation_dt)(t, x)
    }

    pub fn observation_op(&self, t: f64, x: f64) -> f64 {
        (self.data.observation_op)(t, x)
    }

    pub fn background(&self, x: f64) -> f64 {
        (self.data.background)(x)
    }

    /// Interior load of the fourth-order problem, `f - dt y_d - A y_d`.
    pub fn data_residual(&self, t: f64, x: f64) -> f64 {
        self.forcing(t, x) - self.observation_dt(t, x) - self.observation_op(t, x)
    }

    /// Checks that the grids cover the problem's space-time rectangle.
    pub fn check_grids(&self, smesh: &SpatialMesh, tgrid: &TimeGrid) -> Result<()> {
        let (xl, xr) = self.data.domain;
        let len = xr - xl;
        if (smesh.x_left() - xl).abs() > 1e-12 * len || (smesh.x_right() - xr).abs() > 1e-12 * len {
            return Err(Error::GridMismatch(format!(
                "mesh spans [{}, {}], problem domain is [{xl}, {xr}]",
                smesh.x_left(),
                smesh.x_right()
            )));
        }
        let t_end = self.data.horizon;
        if (tgrid.horizon() - t_end).abs() > 1e-12 * t_end {
            return Err(Error::GridMismatch(format!(
                "time grid ends at {}, problem horizon is {t_end}",
                tgrid.horizon()
            )));
        }
        Ok(())
    }

    /// Background guess at the mesh nodes.
    pub fn background_nodal(&self, smesh: &SpatialMesh) -> Vec<f64> {
        smesh.nodes().iter().map(|&x| self.background(x)).collect()
    }

    pub fn observation_field(&self, tgrid: &TimeGrid, smesh: &SpatialMesh) -> SpaceTimeField {
        SpaceTimeField::from_fn(tgrid, smesh, |t, x| self.observation(t, x))
    }
}

/// Knobs of the pipeline.
#[derive(Debug, Clone)]
pub struct AssimilationOptions {
    pub quad_order: usize,
    pub theta: f64,
    /// Grid for the forward run of the assimilated state; defaults to the
    /// grid of the elliptic solve.
    pub state_grid: Option<TimeGrid>,
}

impl Default for AssimilationOptions {
    fn default() -> Self {
        Self {
            quad_order: 3,
            theta: 0.5,
            state_grid: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AssimilationResult {
    pub solution: EllipticSolution,
    /// Control (updated initial state) at the spatial nodes.
    pub control: Vec<f64>,
    /// Model trajectory started from the control.
    pub state: SpaceTimeField,
    pub rmse: f64,
    pub alpha: f64,
}

impl AssimilationResult {
    pub fn adjoint(&self) -> &SpaceTimeField {
        &self.solution.p
    }

    pub fn auxiliary(&self) -> &SpaceTimeField {
        &self.solution.q
    }
}

pub fn assimilate(problem: &ProblemSpec, smesh: &SpatialMesh, tgrid: &TimeGrid) -> Result<AssimilationResult> {
    assimilate_with(problem, smesh, tgrid, &AssimilationOptions::default())
}

pub fn assimilate_with(
    problem: &ProblemSpec,
    smesh: &SpatialMesh,
    tgrid: &TimeGrid,
    opts: &AssimilationOptions,
) -> Result<AssimilationResult> {
    let system = elliptic::assemble(problem, smesh, tgrid, opts.quad_order)?;
    let solution = elliptic::solve_sparse(&system)?;
    let control = control_from_adjoint(problem, smesh, solution.p.slice(0));
    let state_grid = opts.state_grid.as_ref().unwrap_or(tgrid);
    let cfg = ThetaSchemeConfig::new(opts.theta, state_grid.clone())?;
    let state = forward::solve_state(problem, &control, &cfg, smesh)?;
    let rmse = rmse(&state, &|t, x| problem.observation(t, x));
    Ok(AssimilationResult {
        solution,
        control,
        state,
        rmse,
        alpha: problem.alpha(),
    })
}

/// `u = y_b - p(0) / alpha` at interior nodes, zero on the boundary.
pub fn control_from_adjoint(problem: &ProblemSpec, smesh: &SpatialMesh, p0: &[f64]) -> Vec<f64> {
    let alpha = problem.alpha();
    smesh
        .nodes()
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            if smesh.is_boundary(j) {
                0.0
            } else {
                problem.background(x) - p0[j] / alpha
            }
        })
        .collect()
}

/// Runs the model from the background guess instead of an assimilated control.
pub fn background_run(problem: &ProblemSpec, smesh: &SpatialMesh, cfg: &ThetaSchemeConfig) -> Result<SpaceTimeField> {
    let mut u0 = problem.background_nodal(smesh);
    let last = u0.len() - 1;
    u0[0] = 0.0;
    u0[last] = 0.0;
    forward::solve_state(problem, &u0, cfg, smesh)
}

/// Nodewise projection onto `lower <= g <= upper`.
pub fn project_box(g: &[f64], lower: &[f64], upper: &[f64]) -> Result<Vec<f64>> {
    if g.len() != lower.len() || g.len() != upper.len() {
        return Err(invalid!(
            "length mismatch: g {}, lower {}, upper {}",
            g.len(),
            lower.len(),
            upper.len()
        ));
    }
    if let Some(j) = lower.iter().zip(upper).position(|(l, u)| l > u) {
        return Err(invalid!("crossed bounds at node {j}: lower {} > upper {}", lower[j], upper[j]));
    }
    Ok(g.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&l, &u))| {
            if v < l {
                l
            } else if v > u {
                u
            } else {
                v
            }
        })
        .collect())
}

/// Root-mean-square deviation from `y_ref` over all space-time nodes.
pub fn rmse(y: &SpaceTimeField, y_ref: &dyn Fn(f64, f64) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &t) in y.tgrid().taus().iter().enumerate() {
        for (j, &x) in y.smesh().nodes().iter().enumerate() {
            let d = y_ref(t, x) - y.get(i, j);
            sum += d * d;
            count += 1;
        }
    }
    (sum / count as f64).sqrt()
}

/// Largest nodal deviation from `y_ref`.
pub fn max_abs_error(y: &SpaceTimeField, y_ref: &dyn Fn(f64, f64) -> f64) -> f64 {
    let mut m: f64 = 0.0;
    for (i, &t) in y.tgrid().taus().iter().enumerate() {
        for (j, &x) in y.smesh().nodes().iter().enumerate() {
            m = m.max((y_ref(t, x) - y.get(i, j)).abs());
        }
    }
    m
}

/// Mean-square nodal difference of two initial slices.
pub fn mse_initial(p0: &[f64], p0_ref: &[f64]) -> Result<f64> {
    if p0.len() != p0_ref.len() || p0.is_empty() {
        return Err(invalid!("mse needs equal non-empty vectors ({} vs {})", p0.len(), p0_ref.len()));
    }
    let s: f64 = p0.iter().zip(p0_ref).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok(s / p0.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;

    #[test]
    fn projection_cases() {
        let lo = vec![0.0; 4];
        let hi = vec![1.0; 4];
        let g = vec![0.2, 0.5, 0.9, 1.0];
        assert_eq!(project_box(&g, &lo, &hi).unwrap(), g);
        assert_eq!(project_box(&[2.0; 4], &lo, &hi).unwrap(), vec![1.0; 4]);
        assert_eq!(project_box(&[-3.0, 0.5], &[0.0, 0.0], &[1.0, 1.0]).unwrap(), vec![0.0, 0.5]);
        let g = vec![-1.0, 0.3, 7.0, 0.99];
        let once = project_box(&g, &lo, &hi).unwrap();
        assert_eq!(project_box(&once, &lo, &hi).unwrap(), once);
        assert!(project_box(&[0.0], &[1.0], &[0.0]).is_err());
        assert!(project_box(&[0.0, 1.0], &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn rmse_definition() {
        let tg = TimeGrid::uniform(1.0, 3).unwrap();
        let sm = SpatialMesh::unit(4).unwrap();
        let f = |t: f64, x: f64| t * x + 1.0;
        let y = SpaceTimeField::from_fn(&tg, &sm, f);
        assert_eq!(rmse(&y, &f), 0.0);
        let shifted = SpaceTimeField::from_fn(&tg, &sm, |t, x| f(t, x) - 0.3);
        assert!((rmse(&shifted, &f) - 0.3).abs() < 1e-15);
        assert!((max_abs_error(&shifted, &f) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn mse_definition() {
        assert_eq!(mse_initial(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_initial(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!(mse_initial(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn alpha_validation() {
        let p = problems::example1(problems::Example1Variant::I, 0.01, 0.1).unwrap();
        assert!(p.with_alpha(0.0).is_err());
        assert!(p.with_alpha(-1.0).is_err());
        let mut data = p.data().clone();
        data.alpha = 0.0;
        assert!(ProblemSpec::new(data).is_err());
    }

    #[test]
    fn spot_check_catches_wrong_derivative() {
        let p = problems::example1(problems::Example1Variant::I, 0.01, 0.1).unwrap();
        let mut data = p.data().clone();
        data.observation_dt = field_fn(|t, x| (std::f64::consts::PI * x).sin() * (-t).exp());
        assert!(matches!(ProblemSpec::new(data), Err(Error::InconsistentData(_))));
    }

    #[test]
    fn extraction_identity_is_exact() {
        let p = problems::example1(problems::Example1Variant::I, 0.25, 0.1).unwrap();
        let sm = SpatialMesh::unit(10).unwrap();
        let tg = TimeGrid::uniform(1.0, 10).unwrap();
        let r = assimilate(&p, &sm, &tg).unwrap();
        let p0 = r.adjoint().slice(0);
        for (j, &x) in sm.nodes().iter().enumerate().skip(1).take(9) {
            assert_eq!(r.control[j], p.background(x) - p0[j] / p.alpha());
            assert!((r.control[j] + p0[j] / p.alpha() - p.background(x)).abs() <= 1e-15 * (1.0 + p0[j].abs() / p.alpha()));
        }
        assert_eq!(r.control[0], 0.0);
        assert_eq!(r.control[10], 0.0);
    }
}
