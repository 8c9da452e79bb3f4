//! Piecewise-linear finite elements in one dimension.
//!
//! The same building blocks serve both directions of the space-time
//! discretization: spatial matrices for the elliptic operator
//! `A v = -(a(x) v')' + a0(x) v`, and per-interval temporal matrices on
//! non-uniform time grids.

use crate::error::{invalid, Error, Result};
use crate::mesh::SpatialMesh;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Exact element integrals of the two hat functions on an interval of given length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMatrices {
    pub mass: [[f64; 2]; 2],
    pub stiffness: [[f64; 2]; 2],
}

pub fn element_matrices(length: f64) -> Result<ElementMatrices> {
    if !(length.is_finite() && length > 0.0) {
        return Err(invalid!("element length must be positive, got {length}"));
    }
    let m = length / 6.0;
    let k = 1.0 / length;
    Ok(ElementMatrices {
        mass: [[2.0 * m, m], [m, 2.0 * m]],
        stiffness: [[k, -k], [-k, k]],
    })
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Supported orders are 1, 2 and 3 (exact up to degree `2 * order - 1`).
    pub fn new(order: usize) -> Result<Self> {
        let (points, weights) = match order {
            1 => (vec![0.0], vec![2.0]),
            2 => {
                let p = 1.0 / 3.0_f64.sqrt();
                (vec![-p, p], vec![1.0, 1.0])
            }
            3 => {
                let p = (3.0_f64 / 5.0).sqrt();
                (vec![-p, 0.0, p], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
            _ => return Err(invalid!("unsupported Gauss rule order {order} (expected 1, 2 or 3)")),
        };
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points and weights mapped onto `[a, b]`, with the reference
    /// coordinate `s in [0, 1]` of each point (for evaluating hat functions).
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(&p, &w)| (mid + half * p, w * half, 0.5 * (p + 1.0)))
    }
}

/// Global mass `M`, weighted stiffness `K_a` and weighted mass `M_a0` on a spatial mesh.
#[derive(Debug, Clone)]
pub struct SpatialOperatorMatrices {
    pub mass: CsrMatrix,
    pub stiffness_a: CsrMatrix,
    pub mass_a0: CsrMatrix,
}

impl SpatialOperatorMatrices {
    /// `K_a + M_a0`, the Galerkin matrix of the elliptic operator.
    pub fn operator(&self) -> CsrMatrix {
        add(&self.stiffness_a, &self.mass_a0, 1.0)
    }
}

pub fn assemble_spatial_matrices(
    smesh: &SpatialMesh,
    a: &dyn Fn(f64) -> f64,
    a0: &dyn Fn(f64) -> f64,
    quad_order: usize,
) -> Result<SpatialOperatorMatrices> {
    let rule = GaussRule::new(quad_order)?;
    let n = smesh.num_nodes();
    let nodes = smesh.nodes();
    let mut mass = TripletBuilder::with_capacity(n, n, 4 * smesh.cells());
    let mut stiff = TripletBuilder::with_capacity(n, n, 4 * smesh.cells());
    let mut react = TripletBuilder::with_capacity(n, n, 4 * smesh.cells());
    for e in 0..smesh.cells() {
        let (x0, x1) = (nodes[e], nodes[e + 1]);
        let h = x1 - x0;
        let em = element_matrices(h)?;
        let mut a_int = 0.0;
        let mut r = [[0.0; 2]; 2];
        for (x, w, s) in rule.mapped(x0, x1) {
            let av = a(x);
            if !(av > 0.0) || !av.is_finite() {
                return Err(Error::InconsistentData(format!(
                    "diffusion coefficient must be positive, a({x}) = {av}"
                )));
            }
            let rv = a0(x);
            if !(rv >= 0.0) || !rv.is_finite() {
                return Err(Error::InconsistentData(format!(
                    "reaction coefficient must be non-negative, a0({x}) = {rv}"
                )));
            }
            a_int += w * av;
            let phi = [1.0 - s, s];
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] += w * rv * phi[i] * phi[j];
                }
            }
        }
        // hat derivatives are constant (+-1/h) on the element
        let ka = a_int / (h * h);
        for i in 0..2 {
            for j in 0..2 {
                let (gi, gj) = (e + i, e + j);
                mass.push(gi, gj, em.mass[i][j]);
                stiff.push(gi, gj, if i == j { ka } else { -ka });
                react.push(gi, gj, r[i][j]);
            }
        }
    }
    Ok(SpatialOperatorMatrices {
        mass: mass.build(),
        stiffness_a: stiff.build(),
        mass_a0: react.build(),
    })
}

/// Temporal (or any 1-D) mass and stiffness matrices for arbitrary node
/// positions, built from per-interval element matrices.
pub fn matrices_on_nodes(nodes: &[f64]) -> Result<(CsrMatrix, CsrMatrix)> {
    let n = nodes.len();
    let mut mass = TripletBuilder::with_capacity(n, n, 4 * n);
    let mut stiff = TripletBuilder::with_capacity(n, n, 4 * n);
    for e in 0..n.saturating_sub(1) {
        let em = element_matrices(nodes[e + 1] - nodes[e])?;
        for i in 0..2 {
            for j in 0..2 {
                mass.push(e + i, e + j, em.mass[i][j]);
                stiff.push(e + i, e + j, em.stiffness[i][j]);
            }
        }
    }
    Ok((mass.build(), stiff.build()))
}

/// Load vector `int g phi_j dx` by Gauss quadrature.
pub fn load_vector(smesh: &SpatialMesh, g: &dyn Fn(f64) -> f64, quad_order: usize) -> Result<Vec<f64>> {
    let rule = GaussRule::new(quad_order)?;
    let nodes = smesh.nodes();
    let mut out = vec![0.0; smesh.num_nodes()];
    for e in 0..smesh.cells() {
        for (x, w, s) in rule.mapped(nodes[e], nodes[e + 1]) {
            let gw = w * g(x);
            out[e] += gw * (1.0 - s);
            out[e + 1] += gw * s;
        }
    }
    Ok(out)
}

/// `A + scale * B` for matrices of equal shape.
pub fn add(a: &CsrMatrix, b: &CsrMatrix, scale: f64) -> CsrMatrix {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut t = TripletBuilder::with_capacity(a.nrows(), a.ncols(), a.nnz() + b.nnz());
    for (r, c, v) in a.iter() {
        t.push(r, c, v);
    }
    for (r, c, v) in b.iter() {
        t.push(r, c, scale * v);
    }
    t.build()
}
