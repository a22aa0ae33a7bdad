//! Counterexamples showing that coupled multipliers do not yield valid bounds.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::{build_p, empirical_lower_bound, incremental_form, CertError, CoupledMultiplier, Sampler};
use crate::nn::fixtures::cosine_network;
use crate::nn::Activation;
use crate::sdp::max_eigenvalue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoupledExample {
    /// LMI on the cosine network with `T = (e1 - e2)(e1 - e2)'` is feasible at tiny `L`.
    CosineLmi,
    /// Incremental quadratic form with ReLU and the same `T` goes negative.
    ReluLemma,
}

impl std::str::FromStr for CoupledExample {
    type Err = CertError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine-lmi" | "cosine_lmi" => Ok(Self::CosineLmi),
            "relu-lemma" | "relu_lemma" => Ok(Self::ReluLemma),
            other => Err(CertError::UnknownExample(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefutationReport {
    CosineLmi {
        l2: f64,
        max_eigenvalue: f64,
        empirical_lower_bound: f64,
        refuted: bool,
    },
    ReluLemma {
        x: [f64; 2],
        y: [f64; 2],
        quadratic_form: f64,
        /// Value quoted with the original counterexample; direct evaluation differs.
        quoted_value: f64,
        refuted: bool,
    },
}

impl RefutationReport {
    pub fn refuted(&self) -> bool {
        match self {
            RefutationReport::CosineLmi { refuted, .. } | RefutationReport::ReluLemma { refuted, .. } => *refuted,
        }
    }
}

impl fmt::Display for RefutationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefutationReport::CosineLmi { l2, max_eigenvalue, empirical_lower_bound, refuted } => {
                writeln!(f, "example: cosine-lmi")?;
                writeln!(f, "multiplier: T = (e1 - e2)(e1 - e2)'")?;
                writeln!(f, "L2: {l2:e}")?;
                writeln!(f, "implied bound L: {:e}", l2.sqrt())?;
                writeln!(f, "max_eig(P): {max_eigenvalue:e}")?;
                writeln!(f, "empirical lower bound on [-3, 3]: {empirical_lower_bound:.6}")?;
                writeln!(f, "verdict: {}", if *refuted { "REFUTED" } else { "NOT REFUTED" })
            }
            RefutationReport::ReluLemma { x, y, quadratic_form, quoted_value, refuted } => {
                writeln!(f, "example: relu-lemma")?;
                writeln!(f, "multiplier: T = (e1 - e2)(e1 - e2)'")?;
                writeln!(f, "x: [{}, {}]  y: [{}, {}]", x[0], x[1], y[0], y[1])?;
                writeln!(f, "quadratic form (direct evaluation): {quadratic_form}")?;
                writeln!(f, "quadratic form (quoted): {quoted_value}")?;
                writeln!(f, "verdict: {}", if *refuted { "REFUTED" } else { "NOT REFUTED" })
            }
        }
    }
}

pub fn refute_coupled(example: CoupledExample) -> Result<RefutationReport, CertError> {
    let t = CoupledMultiplier::<f64>::single_pair(2, 0, 1)?.to_matrix();
    match example {
        CoupledExample::CosineLmi => {
            let net = cosine_network::<f64>();
            let l2 = 1e-6;
            let p = build_p(&net, l2, &t)?;
            let eig = max_eigenvalue(&p);
            let lb = empirical_lower_bound(&net, &Sampler::cube(1, -3.0, 3.0, 1000, 10_000, 0))?;
            let refuted = eig.abs() <= 1e-9 && lb >= 0.9 && lb > l2.sqrt();
            Ok(RefutationReport::CosineLmi { l2, max_eigenvalue: eig, empirical_lower_bound: lb, refuted })
        }
        CoupledExample::ReluLemma => {
            let x = [0.0, 1.0];
            let y = [-1.5, 0.0];
            let v = incremental_form(Activation::Relu, &t, &DVector::from_row_slice(&x), &DVector::from_row_slice(&y))?;
            Ok(RefutationReport::ReluLemma { x, y, quadratic_form: v, quoted_value: -2.0, refuted: v < 0.0 })
        }
    }
}

/// The form with any nonnegative diagonal multiplier, for contrast with the coupled case.
pub fn relu_lemma_with_diagonal(t: &DVector<f64>) -> Result<f64, CertError> {
    incremental_form(
        Activation::Relu,
        &DMatrix::from_diagonal(t),
        &DVector::from_row_slice(&[0.0, 1.0]),
        &DVector::from_row_slice(&[-1.5, 0.0]),
    )
}
