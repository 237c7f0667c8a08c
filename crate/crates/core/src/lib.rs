//! Batch and online alternating direction method solvers.
//!
//! The batch solver minimizes f(x) + g(z) subject to Ax + Bz = c. The online
//! solver sees one loss f_t per round and tracks objective regret together
//! with cumulative constraint violation. Baseline online learners and an
//! experiment harness sit on top.

pub mod adm;
pub mod baselines;
pub mod bregman;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod oadm;
pub mod problems;
mod subproblem;

pub use bregman::DivergenceSpec;
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use problems::{ConstraintSpec, Dataset, LossTerm, Objective, QuadraticLoss, Regularizer};
