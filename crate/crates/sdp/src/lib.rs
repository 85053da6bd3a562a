//! A small dense semidefinite-programming engine.
//!
//! Problems are posed over real symmetric or complex Hermitian blocks with
//! affine equality constraints (see [`SdpProblem`]) and solved by a
//! homogeneous self-dual primal-dual interior-point method. Infeasible
//! problems come back with a Farkas certificate instead of an error.
//!
//! Sized for blocks up to a few hundred rows and a few thousand constraints;
//! everything is dense except the constraint matrices.

mod problem;
mod solver;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub use problem::{BlockKind, Constraint, SdpProblem, Sense, SolverOptions, Term};

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("problem exceeds solver capacity: {0}")]
    Capacity(String),
    #[error("malformed problem: {0}")]
    Invalid(String),
    #[error("numerical failure after {iterations} iterations: {reason}")]
    Numerical { iterations: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Optimal,
    /// No feasible point; [`SdpSolution::certificate`] holds the proof.
    Infeasible,
    /// Objective unbounded; `primal` holds a normalized improving ray.
    Unbounded,
}

/// Farkas ray `y` with `A*(y) <= residual * I` and `b'y = margin`, `|y| = 1`.
///
/// For any feasible `X`, `b'y = <A*(y), X> <= residual * tr X`, so a positive
/// `violation = margin - residual * trace_bound` proves infeasibility.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub y: Vec<f64>,
    pub margin: f64,
    pub residual: f64,
    pub violation: f64,
}

#[derive(Clone, Debug)]
pub enum BlockValue {
    Real(DMatrix<f64>),
    Hermitian(DMatrix<Complex64>),
}

impl BlockValue {
    /// The block as a complex matrix regardless of kind.
    pub fn to_complex(&self) -> DMatrix<Complex64> {
        match self {
            BlockValue::Real(m) => m.map(|v| Complex64::new(v, 0.0)),
            BlockValue::Hermitian(m) => m.clone(),
        }
    }

    pub fn as_real(&self) -> Option<&DMatrix<f64>> {
        match self {
            BlockValue::Real(m) => Some(m),
            BlockValue::Hermitian(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: Status,
    pub primal: Vec<BlockValue>,
    /// Multipliers of the original constraints.
    pub dual: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    /// Largest absolute constraint violation of the returned primal point.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub certificate: Option<Certificate>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn block(&self, k: usize) -> &BlockValue {
        &self.primal[k]
    }

    /// The scalar held by a `1 x 1` block.
    pub fn scalar(&self, k: usize) -> f64 {
        match &self.primal[k] {
            BlockValue::Real(m) => m[(0, 0)],
            BlockValue::Hermitian(m) => m[(0, 0)].re,
        }
    }
}

/// Solves `problem`. See the crate docs for the status contract.
pub fn solve(problem: &SdpProblem) -> Result<SdpSolution, SdpError> {
    solver::solve(problem)
}

impl SdpProblem {
    pub fn solve(&self) -> Result<SdpSolution, SdpError> {
        solve(self)
    }
}
