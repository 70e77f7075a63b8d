//! Differentiable finite-element toolkit for the Poisson problem.
//!
//! The crate discretizes `-div(kappa grad u) = f` on the unit square with
//! homogeneous Dirichlet conditions using P1 triangles, and exposes the solve
//! as a differentiable primitive: the tangent-linear system gives
//! Jacobian-vector products, the adjoint system gives vector-Jacobian
//! products at a cost independent of the parameter count. A small
//! reverse-mode tape composes the solver with functionals and a feed-forward
//! network, and a bound-constrained L-BFGS driver runs two optimization
//! experiments: optimal control of the source term and inversion of the
//! conductivity field from noisy state measurements.
//!
//! Hot loops (assembly, sparse matrix-vector products, network field
//! evaluation) run data-parallel under the default `parallel` feature and
//! fall back to sequential code with `--no-default-features`. Both paths
//! produce bit-identical results.

pub mod diff_solve;
mod error;
pub mod experiments;
pub mod fem;
pub mod finite_diff;
pub mod io;
pub mod lbfgsb;
pub mod mesh;
pub mod nn;
pub mod sparse;
pub mod tape;

pub use error::{Error, Result};
