//! Training under Lipschitz constraints by alternating a loss step, an LMI
//! step and a dual step on the consensus constraint `W = Wbar`.
//!
//! Two modes share the loop: [`Mode::Regularize`] adds `mu L^2` to the loss and
//! lets `L^2` float; [`Mode::Enforce`] pins `L^2 = l_des^2`, so every `Wbar`
//! iterate carries a certificate at `l_des`.

mod steps;
mod train;

pub use steps::{dual_update, lip_program, lip_update, loss_update, LipUpdate};
pub use train::{select_t, train_enforced, train_regularized, write_trace_csv, AdmmOutcome, TraceRow, TRACE_HEADER};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::cert::{CertError, DiagonalMultiplier};
use crate::nn::{LossKind, Network, NnError, SgdConfig};
use crate::scalar::Scalar;
use crate::sdp::{Method, SdpError, SolveOptions, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode<S> {
    Regularize { mu: S },
    Enforce { l_des: S },
}

#[derive(Debug, Clone)]
pub struct AdmmConfig<S: Scalar> {
    pub mode: Mode<S>,
    pub rho: S,
    /// Fixed multiplier, usually from [`select_t`].
    pub t: DiagonalMultiplier<S>,
    /// Entries of `t` below `t_floor * max(t)` are raised to it, keeping the hidden block definite.
    pub t_floor: S,
    pub loss: LossKind,
    /// SGD settings for one loss step; `seed` is offset by the outer iteration.
    pub inner_sgd: SgdConfig<S>,
    pub max_outer_iters: usize,
    /// `None` means `1e-3 * sqrt(weight count)`.
    pub eps_primal: Option<S>,
    pub eps_dual: Option<S>,
    pub solver: SolveOptions<S>,
}

impl<S: Scalar> AdmmConfig<S> {
    pub fn new(mode: Mode<S>, t: DiagonalMultiplier<S>, loss: LossKind, inner_sgd: SgdConfig<S>) -> Self {
        Self {
            mode,
            rho: S::lit(0.25),
            t,
            t_floor: S::lit(1e-6),
            loss,
            inner_sgd,
            max_outer_iters: 50,
            eps_primal: None,
            eps_dual: None,
            solver: SolveOptions {
                eps_opt: S::lit(1e-6).max(S::lit(1000.0) * S::machine_eps()),
                method: Method::Auto,
                ..SolveOptions::default()
            },
        }
    }

    pub fn validate(&self, net: &Network<S>) -> Result<(), AdmmError> {
        match self.mode {
            Mode::Regularize { mu } if !(mu >= S::zero() && mu.is_finite()) => {
                return Err(AdmmError::Config(format!("mu must be finite and >= 0, got {mu}")))
            }
            Mode::Enforce { l_des } if !(l_des > S::zero() && l_des.is_finite()) => {
                return Err(AdmmError::Config(format!("l_des must be positive, got {l_des}")))
            }
            _ => {}
        }
        if !(self.rho > S::zero() && self.rho.is_finite()) {
            return Err(AdmmError::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if self.t.len() != net.hidden_neurons() {
            return Err(AdmmError::Config(format!(
                "multiplier has {} entries, network has {} hidden neurons",
                self.t.len(),
                net.hidden_neurons()
            )));
        }
        if !(self.t_floor > S::zero()) {
            return Err(AdmmError::Config("t_floor must be positive".into()));
        }
        if self.max_outer_iters == 0 {
            return Err(AdmmError::Config("max_outer_iters must be at least 1".into()));
        }
        let sector = net.activation().sector::<S>();
        if sector.alpha != S::zero() {
            return Err(AdmmError::Cert(CertError::UnsupportedSector(sector.alpha.to_f64_lossy())));
        }
        self.inner_sgd.validate()?;
        Ok(())
    }

    pub fn tolerances(&self, weight_count: usize) -> (S, S) {
        let default = S::lit(1e-3) * S::from_usize_lossy(weight_count).sqrt();
        (self.eps_primal.unwrap_or(default), self.eps_dual.unwrap_or(default))
    }

    pub(crate) fn effective_t(&self) -> DiagonalMultiplier<S> {
        self.t.floored(self.t_floor)
    }
}

/// Iterate of the splitting loop. `y[i]` has the shape of `w[i]`.
#[derive(Debug, Clone)]
pub struct AdmmState<S: Scalar> {
    pub w: Vec<DMatrix<S>>,
    pub w_bar: Vec<DMatrix<S>>,
    pub y: Vec<DMatrix<S>>,
    pub biases: Vec<DVector<S>>,
    pub l2: S,
    pub k: usize,
    /// `||W - Wbar||_F`
    pub r_primal: S,
    /// `rho ||Wbar_k - Wbar_{k-1}||_F`
    pub r_dual: S,
    pub(crate) warm: Option<crate::sdp::WarmStart<S>>,
}

impl<S: Scalar> AdmmState<S> {
    /// `W = Wbar = ` the network's weights, `Y = 0`.
    pub fn from_network(net: &Network<S>, l2: S) -> Self {
        let w = net.weights().to_vec();
        Self {
            y: w.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect(),
            w_bar: w.clone(),
            w,
            biases: net.biases().to_vec(),
            l2,
            k: 0,
            r_primal: S::zero(),
            r_dual: S::zero(),
            warm: None,
        }
    }

    /// Network built from the certified weights `Wbar`.
    pub fn certified_network(&self, template: &Network<S>) -> Result<Network<S>, NnError> {
        template.with_parameters(self.w_bar.clone(), self.biases.clone())
    }
}

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss step diverged in outer iteration {outer} (inner epoch {epoch})")]
    Diverged { outer: usize, epoch: usize },
    #[error("LMI step in outer iteration {outer} ended with status {status} (margin {margin:e})")]
    Solver { outer: usize, status: SolveStatus, margin: f64 },
    #[error("iterate {k} certified at {bound} which exceeds the enforced bound {l_des}")]
    InvariantViolation { k: usize, bound: f64, l_des: f64 },
    #[error("no scaling of the initial weights satisfies the enforced bound")]
    NoFeasibleStart,
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}
