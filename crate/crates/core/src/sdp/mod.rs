//! Convex programs with one linear matrix inequality.
//!
//! [`solve`] handles `min c'x + 1/2 x'Qx` subject to `A0 + sum_k x_k A_k <= 0`
//! and optional sign constraints. Programs with few variables go to a barrier
//! interior-point method ([`Method::InteriorPoint`]); large ones to an operator
//! splitting loop built on [`project_psd`] ([`Method::Splitting`]).

mod barrier;
mod bisect;
mod dump;
mod program;
mod psd;
mod splitting;

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use bisect::bisect_feasibility;
pub use dump::write_triplets;
pub use program::{LmiProgram, VariableBlock};
pub use psd::{max_eigenvalue, project_psd, Cone};
pub use splitting::{repair_toward_strict_point, SplitState};

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("bracket [{lo}, {hi}] does not straddle the feasibility threshold")]
    Bracketing { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical_failure",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Interior point up to [`AUTO_INTERIOR_POINT_MAX_VARS`] variables, splitting above.
    #[default]
    Auto,
    InteriorPoint,
    Splitting,
}

pub const AUTO_INTERIOR_POINT_MAX_VARS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub enum WarmStart<S: Scalar> {
    Point(DVector<S>),
    Split(SplitState<S>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<S: Scalar> {
    /// Relative feasibility tolerance: the constraint's largest eigenvalue must not
    /// exceed `eps_feas * (1 + max |entry|)`.
    pub eps_feas: S,
    /// Relative optimality tolerance (duality gap or KKT residual).
    pub eps_opt: S,
    /// Newton steps (interior point) or iterations (splitting); `None` picks the method default.
    pub max_iter: Option<usize>,
    pub method: Method,
    pub warm_start: Option<WarmStart<S>>,
}

impl<S: Scalar> Default for SolveOptions<S> {
    fn default() -> Self {
        Self {
            eps_feas: S::lit(1e-8).max(S::lit(100.0) * S::machine_eps()),
            eps_opt: S::lit(1e-7).max(S::lit(1000.0) * S::machine_eps()),
            max_iter: None,
            method: Method::Auto,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult<S: Scalar> {
    pub x: DVector<S>,
    pub objective: S,
    /// Largest eigenvalue of the constraint at `x` (sign constraints count as 1x1 blocks).
    pub feasibility_margin: S,
    /// Duality gap bound (interior point) or relative KKT residual (splitting).
    pub residual: S,
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_time: Duration,
    pub blocks: Vec<VariableBlock>,
    /// Final splitting iterate, reusable as a warm start.
    pub warm: Option<SplitState<S>>,
}

impl<S: Scalar> SolveResult<S> {
    pub fn value(&self, name: &str) -> Option<DMatrix<S>> {
        let b = self.blocks.iter().find(|b| b.name == name)?;
        Some(DMatrix::from_fn(b.rows, b.cols, |r, c| self.x[b.index(r, c)]))
    }

    pub fn scalar(&self, name: &str) -> Option<S> {
        self.value(name).map(|m| m[(0, 0)])
    }
}

pub fn solve<S: Scalar>(p: &LmiProgram<S>, opts: &SolveOptions<S>) -> Result<SolveResult<S>, SdpError> {
    p.validate()?;
    if let Some(WarmStart::Point(x)) = &opts.warm_start {
        if x.len() != p.num_vars() {
            return Err(SdpError::Malformed(format!(
                "warm start has {} entries for {} variables",
                x.len(),
                p.num_vars()
            )));
        }
    }
    if let Some(WarmStart::Split(s)) = &opts.warm_start {
        if s.x.len() != p.num_vars() || s.slack.shape() != (p.dim(), p.dim()) || s.sign_slack.len() != p.nonneg().len() {
            return Err(SdpError::Malformed("warm start shapes do not match the program".into()));
        }
    }
    if !(opts.eps_feas > S::zero() && opts.eps_opt > S::zero()) {
        return Err(SdpError::Malformed("tolerances must be positive".into()));
    }
    let method = match opts.method {
        Method::Auto if p.num_vars() <= AUTO_INTERIOR_POINT_MAX_VARS => Method::InteriorPoint,
        Method::Auto => Method::Splitting,
        m => m,
    };
    Ok(match method {
        Method::InteriorPoint => barrier::solve(p, opts),
        _ => splitting::solve(p, opts),
    })
}
