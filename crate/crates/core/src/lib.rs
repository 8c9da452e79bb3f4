//! Initial-condition data assimilation for 1-D parabolic problems through a
//! fourth-order space-time elliptic reformulation of the optimality system.
//!
//! The adjoint `p` and `q = A p` are computed together from one mixed
//! Petrov-Galerkin system on a tensor space-time grid; the control follows
//! as `u = y_b - p(0) / alpha`. Time grids can be adapted with a
//! residual-based indicator that needs only the problem data.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptivity;
pub mod assimilation;
pub mod elliptic;
pub mod error;
pub mod fem1d;
pub mod forward;
pub mod mesh;
pub mod problems;
pub mod sparse;

pub use adaptivity::{adapt_loop, compute_indicators, mark, AdaptConfig, AdaptHistory, ErrorIndicators, Strategy};
pub use assimilation::{assimilate, assimilate_with, AssimilationOptions, AssimilationResult, ProblemData, ProblemSpec};
pub use elliptic::{assemble, solve_sparse, AssembledSystem, EllipticSolution};
pub use error::{Error, Result};
pub use forward::ThetaSchemeConfig;
pub use mesh::{SpaceTimeField, SpatialMesh, TimeGrid};
