//! Fully discrete mixed space-time system for the adjoint state.
//!
//! The unknowns are the adjoint `p` and the auxiliary field `q = A p`, both
//! continuous and piecewise linear in space and in time. Trial and test
//! spaces differ only in their constraints: the trial `q` carries the trace
//! `-y_d` on the spatial boundary, all test functions vanish there, and the
//! `p` test functions also vanish at the final time.
//!
//! With temporal matrices `Mt, Kt` and spatial matrices `M, Â = K_a + M_a0`
//! the bilinear form becomes
//!
//! ```text
//!            p-trial                          q-trial
//! p-test  [ Kt ⊗ M + e0 e0ᵀ ⊗ (Â + M/α)       Mt ⊗ Â ]
//! q-test  [ -Mt ⊗ Â                           Mt ⊗ M ]
//! ```
//!
//! whose off-diagonal blocks cancel in the quadratic form.

use std::io::{self, Write};

use crate::assimilation::ProblemSpec;
use crate::error::{invalid, Error, Result};
use crate::fem1d::{self, GaussRule};
use crate::mesh::{SpaceTimeField, SpatialMesh, TimeGrid};
use crate::sparse::{self, BandedLu, CsrMatrix, TripletBuilder};

pub const SOLVER_TOLERANCE: f64 = 1e-10;
const ZERO_RHS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dof {
    Free(usize),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Field {
    P,
    Q,
}

/// Classification of every `(field, time node, space node)` triple.
///
/// Free unknowns are numbered p-block first, then q-block, each time-major.
#[derive(Debug, Clone)]
pub struct DofMap {
    nt: usize,
    nx: usize,
    p: Vec<Dof>,
    q: Vec<Dof>,
    n_free_p: usize,
    n_free_q: usize,
    free_nodes: Vec<(Field, usize, usize)>,
}

impl DofMap {
    pub fn new(problem: &ProblemSpec, smesh: &SpatialMesh, tgrid: &TimeGrid) -> Self {
        let nt = tgrid.num_nodes();
        let nx = smesh.num_nodes();
        let mut p = Vec::with_capacity(nt * nx);
        let mut q = Vec::with_capacity(nt * nx);
        let mut free_nodes = Vec::new();
        let mut next = 0;
        for i in 0..nt {
            for j in 0..nx {
                if smesh.is_boundary(j) || i + 1 == nt {
                    p.push(Dof::Fixed(0.0));
                } else {
                    p.push(Dof::Free(next));
                    free_nodes.push((Field::P, i, j));
                    next += 1;
                }
            }
        }
        let n_free_p = next;
        for (i, &t) in tgrid.taus().iter().enumerate() {
            for (j, &x) in smesh.nodes().iter().enumerate() {
                if smesh.is_boundary(j) {
                    q.push(Dof::Fixed(-problem.observation(t, x)));
                } else {
                    q.push(Dof::Free(next));
                    free_nodes.push((Field::Q, i, j));
                    next += 1;
                }
            }
        }
        Self {
            nt,
            nx,
            p,
            q,
            n_free_p,
            n_free_q: next - n_free_p,
            free_nodes,
        }
    }

    pub fn p(&self, i: usize, j: usize) -> Dof {
        self.p[i * self.nx + j]
    }

    pub fn q(&self, i: usize, j: usize) -> Dof {
        self.q[i * self.nx + j]
    }

    pub fn get(&self, field: Field, i: usize, j: usize) -> Dof {
        match field {
            Field::P => self.p(i, j),
            Field::Q => self.q(i, j),
        }
    }

    pub fn n_free(&self) -> usize {
        self.n_free_p + self.n_free_q
    }

    pub fn n_free_p(&self) -> usize {
        self.n_free_p
    }

    pub fn n_free_q(&self) -> usize {
        self.n_free_q
    }

    /// Node of the `k`-th free unknown.
    pub fn free_node(&self, k: usize) -> (Field, usize, usize) {
        self.free_nodes[k]
    }

    pub fn time_nodes(&self) -> usize {
        self.nt
    }

    pub fn space_nodes(&self) -> usize {
        self.nx
    }

    /// Free-dof vector gathered from nodal fields.
    pub fn gather(&self, p: &SpaceTimeField, q: &SpaceTimeField) -> Vec<f64> {
        self.free_nodes
            .iter()
            .map(|&(f, i, j)| match f {
                Field::P => p.get(i, j),
                Field::Q => q.get(i, j),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dofmap: DofMap,
    pub tgrid: TimeGrid,
    pub smesh: SpatialMesh,
}

impl AssembledSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Coordinate dump `row col value`, one entry per line.
    pub fn write_matrix<W: Write>(&self, w: W) -> io::Result<()> {
        self.matrix.write_coo(w)
    }

    pub fn write_rhs<W: Write>(&self, mut w: W) -> io::Result<()> {
        for v in &self.rhs {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub p: SpaceTimeField,
    pub q: SpaceTimeField,
    pub solver_residual: f64,
}

pub fn assemble(problem: &ProblemSpec, smesh: &SpatialMesh, tgrid: &TimeGrid, quad_order: usize) -> Result<AssembledSystem> {
    if smesh.cells() < 2 {
        return Err(invalid!("spatial mesh needs at least 2 cells, got {}", smesh.cells()));
    }
    problem.check_grids(smesh, tgrid)?;
    let alpha = problem.alpha();
    let rule = GaussRule::new(quad_order)?;

    let spatial = fem1d::assemble_spatial_matrices(
        smesh,
        &|x| problem.diffusion(x),
        &|x| problem.reaction(x),
        quad_order,
    )?;
    let mass_x = &spatial.mass;
    let op_x = spatial.operator();
    let initial_x = fem1d::add(&op_x, mass_x, 1.0 / alpha);
    let (mass_t, stiff_t) = fem1d::matrices_on_nodes(tgrid.taus())?;

    let dofs = DofMap::new(problem, smesh, tgrid);
    let nt = tgrid.num_nodes();
    let nx = smesh.num_nodes();
    let mut rhs = vec![0.0; dofs.n_free()];
    let mut b = TripletBuilder::with_capacity(dofs.n_free(), dofs.n_free(), 36 * dofs.n_free());

    let load = data_load(problem, smesh, tgrid, &rule)?;
    for (k, &(field, i, j)) in dofs.free_nodes.iter().enumerate() {
        if field == Field::P {
            rhs[k] = load[i * nx + j];
        }
    }

    let neighbors = |n: usize, i: usize| i.saturating_sub(1)..=(i + 1).min(n - 1);
    let mut put = |row: usize, trial: Dof, value: f64, rhs: &mut [f64]| match trial {
        Dof::Free(col) => b.push(row, col, value),
        Dof::Fixed(v) => rhs[row] -= value * v,
    };
    for i in 0..nt {
        for k in neighbors(nt, i) {
            let mt = mass_t.get(i, k);
            let kt = stiff_t.get(i, k);
            for j in 0..nx {
                for l in neighbors(nx, j) {
                    let mx = mass_x.get(j, l);
                    let ax = op_x.get(j, l);
                    if let Dof::Free(row) = dofs.p(i, j) {
                        let mut pp = kt * mx;
                        if i == 0 && k == 0 {
                            pp += initial_x.get(j, l);
                        }
                        put(row, dofs.p(k, l), pp, &mut rhs);
                        put(row, dofs.q(k, l), mt * ax, &mut rhs);
                    }
                    if let Dof::Free(row) = dofs.q(i, j) {
                        put(row, dofs.q(k, l), mt * mx, &mut rhs);
                        put(row, dofs.p(k, l), -mass_t.get(k, i) * op_x.get(l, j), &mut rhs);
                    }
                }
            }
        }
    }

    Ok(AssembledSystem {
        matrix: b.build(),
        rhs,
        dofmap: dofs,
        tgrid: tgrid.clone(),
        smesh: smesh.clone(),
    })
}

/// Nodal load `int (f - dt y_d - A y_d) w` over the space-time cylinder plus
/// `int (y_b - y_d(0)) w(0)` at the initial time, for all `p` test nodes.
fn data_load(problem: &ProblemSpec, smesh: &SpatialMesh, tgrid: &TimeGrid, rule: &GaussRule) -> Result<Vec<f64>> {
    let nx = smesh.num_nodes();
    let mut load = vec![0.0; tgrid.num_nodes() * nx];
    let taus = tgrid.taus();
    let xs = smesh.nodes();
    for it in 0..tgrid.intervals() {
        for (t, wt, st) in rule.mapped(taus[it], taus[it + 1]) {
            let phit = [1.0 - st, st];
            for ex in 0..smesh.cells() {
                for (x, wx, sx) in rule.mapped(xs[ex], xs[ex + 1]) {
                    let g = wt * wx * problem.data_residual(t, x);
                    let phix = [1.0 - sx, sx];
                    for (a, pt) in phit.iter().enumerate() {
                        for (c, px) in phix.iter().enumerate() {
                            load[(it + a) * nx + ex + c] += g * pt * px;
                        }
                    }
                }
            }
        }
    }
    let initial = fem1d::load_vector(
        smesh,
        &|x| problem.background(x) - problem.observation(0.0, x),
        rule.len(),
    )?;
    for (j, v) in initial.into_iter().enumerate() {
        load[j] += v;
    }
    Ok(load)
}

/// Bandwidth-reducing order: time slice, then space node, then field.
fn interleaved_order(dofs: &DofMap) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dofs.n_free()).collect();
    order.sort_by_key(|&k| {
        let (f, i, j) = dofs.free_nodes[k];
        (i, j, f)
    });
    order
}

/// Solves the assembled system with a banded LU on an interleaved ordering
/// and reshapes the result onto the grids.
pub fn solve_sparse(sys: &AssembledSystem) -> Result<EllipticSolution> {
    let n = sys.dim();
    let order = interleaved_order(&sys.dofmap);
    let mut position = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let mut t = TripletBuilder::with_capacity(n, n, sys.matrix.nnz());
    for (r, c, v) in sys.matrix.iter() {
        t.push(position[r], position[c], v);
    }
    let permuted = t.build();
    let lu = BandedLu::factor(&permuted)?;

    let b_perm: Vec<f64> = order.iter().map(|&old| sys.rhs[old]).collect();
    let mut x_perm = lu.solve(&b_perm);
    let b_norm = sparse::norm2(&b_perm);
    let target = if b_norm > 0.0 {
        SOLVER_TOLERANCE * b_norm
    } else {
        ZERO_RHS_TOLERANCE
    };
    let mut res = residual_vec(&permuted, &x_perm, &b_perm);
    let mut r_norm = sparse::norm2(&res);
    // a couple of refinement sweeps recover digits lost to pivot growth
    for _ in 0..3 {
        if r_norm <= 1e-3 * target {
            break;
        }
        let corr = lu.solve(&res);
        let trial: Vec<f64> = x_perm.iter().zip(&corr).map(|(x, c)| x - c).collect();
        let trial_res = residual_vec(&permuted, &trial, &b_perm);
        let trial_norm = sparse::norm2(&trial_res);
        if trial_norm >= r_norm {
            break;
        }
        x_perm = trial;
        res = trial_res;
        r_norm = trial_norm;
    }
    let reported = if b_norm > 0.0 { r_norm / b_norm } else { r_norm };
    if !(r_norm <= target) {
        return Err(Error::Solver {
            reason: format!("residual above tolerance for {n} unknowns"),
            residual: reported,
        });
    }

    let mut x = vec![0.0; n];
    for (new, &old) in order.iter().enumerate() {
        x[old] = x_perm[new];
    }
    let (p, q) = scatter(sys, &x);
    Ok(EllipticSolution {
        p,
        q,
        solver_residual: reported,
    })
}

fn residual_vec(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.mul_vec(x).iter().zip(b).map(|(ax, bi)| ax - bi).collect()
}

/// Fills nodal fields from a free-dof vector and the fixed values.
pub fn scatter(sys: &AssembledSystem, x: &[f64]) -> (SpaceTimeField, SpaceTimeField) {
    let mut p = SpaceTimeField::zeros(&sys.tgrid, &sys.smesh);
    let mut q = SpaceTimeField::zeros(&sys.tgrid, &sys.smesh);
    let d = &sys.dofmap;
    for i in 0..d.time_nodes() {
        for j in 0..d.space_nodes() {
            let pv = match d.p(i, j) {
                Dof::Free(k) => x[k],
                Dof::Fixed(v) => v,
            };
            let qv = match d.q(i, j) {
                Dof::Free(k) => x[k],
                Dof::Fixed(v) => v,
            };
            p.set(i, j, pv);
            q.set(i, j, qv);
        }
    }
    (p, q)
}

/// Relative algebraic residual `||A x - b|| / ||b||` of a solution
/// (absolute when `b = 0`).
pub fn residual_check(sys: &AssembledSystem, sol: &EllipticSolution) -> f64 {
    let x = sys.dofmap.gather(&sol.p, &sol.q);
    let (r, b) = sparse::residual_norms(&sys.matrix, &x, &sys.rhs);
    if b > 0.0 {
        r / b
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assimilation::{field_fn, scalar_fn, ProblemData};
    use crate::problems;

    fn zero_problem(alpha: f64) -> ProblemSpec {
        ProblemSpec::new(ProblemData {
            name: "zero".into(),
            diffusion: scalar_fn(|_| 0.1),
            reaction: scalar_fn(|_| 0.0),
            alpha,
            horizon: 1.0,
            domain: (0.0, 1.0),
            forcing: field_fn(|_, _| 0.0),
            observation: field_fn(|_, _| 0.0),
            observation_dt: field_fn(|_, _| 0.0),
            observation_op: field_fn(|_, _| 0.0),
            background: scalar_fn(|_| 0.0),
        })
        .unwrap()
    }

    #[test]
    fn dof_counts() {
        let p = problems::example1(problems::Example1Variant::I, 0.01, 0.1).unwrap();
        let sm = SpatialMesh::unit(40).unwrap();
        let tg = TimeGrid::uniform(1.0, 40).unwrap();
        let d = DofMap::new(&p, &sm, &tg);
        assert_eq!(d.n_free_p(), 40 * 39);
        assert_eq!(d.n_free_q(), 41 * 39);
        let sys = assemble(&p, &sm, &tg, 3).unwrap();
        assert_eq!(sys.dim(), 3159);
    }

    #[test]
    fn zero_data_gives_zero_rhs_and_solution() {
        let p = zero_problem(0.01);
        let sm = SpatialMesh::unit(6).unwrap();
        let tg = TimeGrid::from_nodes(vec![0.0, 0.1, 0.5, 0.6, 1.0]).unwrap();
        let sys = assemble(&p, &sm, &tg, 3).unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
        let sol = solve_sparse(&sys).unwrap();
        assert_eq!(sol.p.max_abs(), 0.0);
        assert_eq!(sol.q.max_abs(), 0.0);
        assert_eq!(residual_check(&sys, &sol), 0.0);
    }

    #[test]
    fn rejects_degenerate_meshes() {
        let p = zero_problem(1.0);
        let tg = TimeGrid::uniform(1.0, 3).unwrap();
        assert!(assemble(&p, &SpatialMesh::unit(1).unwrap(), &tg, 3).is_err());
        assert!(assemble(&p, &SpatialMesh::uniform(0.0, 2.0, 4).unwrap(), &tg, 3).is_err());
    }

    #[test]
    fn fixed_values_are_exact_and_residual_small() {
        let p = problems::example2(0.01, 0.1, 0.05).unwrap().problem;
        let sm = SpatialMesh::unit(8).unwrap();
        let tg = TimeGrid::uniform(1.0, 6).unwrap();
        let sys = assemble(&p, &sm, &tg, 3).unwrap();
        let sol = solve_sparse(&sys).unwrap();
        assert!(sol.solver_residual <= SOLVER_TOLERANCE);
        for (i, &t) in tg.taus().iter().enumerate() {
            for (j, &x) in sm.nodes().iter().enumerate() {
                if sm.is_boundary(j) {
                    assert_eq!(sol.p.get(i, j), 0.0);
                    assert_eq!(sol.q.get(i, j), -p.observation(t, x));
                }
                if i == tg.intervals() {
                    assert_eq!(sol.p.get(i, j), 0.0);
                }
            }
        }
        let r = residual_check(&sys, &sol);
        assert!(r <= SOLVER_TOLERANCE);
        let mut bumped = sol.clone();
        bumped.p.set(2, 3, bumped.p.get(2, 3) + 1e-3);
        assert!(residual_check(&sys, &bumped) > r);
    }

    #[test]
    fn debug_dump_formats() {
        let p = zero_problem(1.0);
        let sys = assemble(&p, &SpatialMesh::unit(3).unwrap(), &TimeGrid::uniform(1.0, 2).unwrap(), 2).unwrap();
        let mut m = Vec::new();
        sys.write_matrix(&mut m).unwrap();
        let text = String::from_utf8(m).unwrap();
        assert_eq!(text.lines().count(), sys.matrix.nnz());
        let first: Vec<&str> = text.lines().next().unwrap().split(' ').collect();
        assert_eq!(first.len(), 3);
        let mut r = Vec::new();
        sys.write_rhs(&mut r).unwrap();
        assert_eq!(String::from_utf8(r).unwrap().lines().count(), sys.dim());
    }
}
