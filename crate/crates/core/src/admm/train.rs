use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;

use super::steps::{dual_update, lip_update, loss_update};
use super::{AdmmConfig, AdmmError, AdmmState, Mode};
use crate::cert::{certify, CertError, CertifyMode, DiagonalMultiplier};
use crate::nn::{loss, Network, Targets};
use crate::scalar::Scalar;

/// Multiplier that minimizes the certified bound of `pretrained`.
pub fn select_t<S: Scalar>(pretrained: &Network<S>) -> Result<DiagonalMultiplier<S>, CertError> {
    let cert = certify(pretrained, &CertifyMode::OptimizeT)?;
    Ok(cert.multiplier.expect("LMI certificates carry a multiplier"))
}

pub const TRACE_HEADER: [&str; 7] = ["k", "r_primal", "r_dual", "L2", "cel_train", "wall_loss_step_s", "wall_lip_step_s"];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<S> {
    pub k: usize,
    pub r_primal: S,
    pub r_dual: S,
    pub l2: S,
    /// Training loss of the `Wbar` network.
    pub cel_train: S,
    pub wall_loss_step_s: f64,
    pub wall_lip_step_s: f64,
    /// Fixed-multiplier certificate of `Wbar_k`.
    pub certified_bound: S,
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome<S: Scalar> {
    /// Network from the final `Wbar` and biases.
    pub network: Network<S>,
    pub trace: Vec<TraceRow<S>>,
    pub converged: bool,
    pub state: AdmmState<S>,
    /// Multiplier used throughout (after flooring).
    pub t: DiagonalMultiplier<S>,
    /// Fixed-multiplier certificate of `Wbar_0`.
    pub initial_bound: S,
}

impl<S: Scalar> AdmmOutcome<S> {
    pub fn mean_loss_step_s(&self) -> f64 {
        mean(self.trace.iter().map(|r| r.wall_loss_step_s))
    }

    pub fn mean_lip_step_s(&self) -> f64 {
        mean(self.trace.iter().map(|r| r.wall_lip_step_s))
    }
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len();
    if n == 0 {
        0.0
    } else {
        it.sum::<f64>() / n as f64
    }
}

pub fn write_trace_csv<S: Scalar, W: Write>(rows: &[TraceRow<S>], out: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(TRACE_HEADER)?;
    for r in rows {
        wtr.write_record(&[
            r.k.to_string(),
            r.r_primal.to_string(),
            r.r_dual.to_string(),
            r.l2.to_string(),
            r.cel_train.to_string(),
            format!("{:.6}", r.wall_loss_step_s),
            format!("{:.6}", r.wall_lip_step_s),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

fn frob<S: Scalar>(a: &[DMatrix<S>], b: &[DMatrix<S>]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (x, y)| acc + (x - y).norm_squared()).sqrt()
}

fn certify_fixed<S: Scalar>(net: &Network<S>, w_bar: &[DMatrix<S>], t: &DiagonalMultiplier<S>) -> Result<S, AdmmError> {
    let n = net.with_weights(w_bar.to_vec())?;
    Ok(certify(&n, &CertifyMode::FixedT(t.clone()))?.bound)
}

/// Loss plus `mu L^2` with the LMI on `(L2, Wbar)`; starts from `init` (typically an L2-regularized net).
pub fn train_regularized<S: Scalar>(
    init: &Network<S>,
    inputs: &DMatrix<S>,
    targets: Targets<'_, S>,
    cfg: &AdmmConfig<S>,
) -> Result<AdmmOutcome<S>, AdmmError> {
    if !matches!(cfg.mode, Mode::Regularize { .. }) {
        return Err(AdmmError::Config("train_regularized needs Mode::Regularize".into()));
    }
    cfg.validate(init)?;
    let t = cfg.effective_t();
    let b0 = certify_fixed(init, init.weights(), &t)?;
    let state = AdmmState::from_network(init, b0 * b0);
    run(init, state, b0, inputs, targets, cfg)
}

/// Loss minimization with `L^2` pinned to `l_des^2`; every `Wbar_k` is re-certified.
///
/// When `init` is not certified at `l_des`, `Wbar_0` is `init` scaled by the largest
/// power of 1/2 that is.
pub fn train_enforced<S: Scalar>(
    init: &Network<S>,
    inputs: &DMatrix<S>,
    targets: Targets<'_, S>,
    cfg: &AdmmConfig<S>,
) -> Result<AdmmOutcome<S>, AdmmError> {
    let Mode::Enforce { l_des } = cfg.mode else {
        return Err(AdmmError::Config("train_enforced needs Mode::Enforce".into()));
    };
    cfg.validate(init)?;
    let t = cfg.effective_t();
    let mut state = AdmmState::from_network(init, l_des * l_des);
    let mut scale = S::one();
    let mut bound = certify_fixed(init, init.weights(), &t)?;
    let mut tries = 0;
    while bound > l_des {
        tries += 1;
        if tries > 60 {
            return Err(AdmmError::NoFeasibleStart);
        }
        scale *= S::lit(0.5);
        state.w_bar = init.weights().iter().map(|w| w * scale).collect();
        bound = certify_fixed(init, &state.w_bar, &t)?;
    }
    if tries > 0 {
        log::info!("initial weights scaled by {scale} to meet the bound ({bound} <= {l_des})");
    }
    run(init, state, bound, inputs, targets, cfg)
}

fn run<S: Scalar>(
    template: &Network<S>,
    mut state: AdmmState<S>,
    initial_bound: S,
    inputs: &DMatrix<S>,
    targets: Targets<'_, S>,
    cfg: &AdmmConfig<S>,
) -> Result<AdmmOutcome<S>, AdmmError> {
    let t = cfg.effective_t();
    let (eps_p, eps_d) = cfg.tolerances(template.weight_count());
    let enforce = match cfg.mode {
        Mode::Enforce { l_des } => Some(l_des),
        Mode::Regularize { .. } => None,
    };
    let mut trace = Vec::new();
    let mut converged = false;
    for k in 1..=cfg.max_outer_iters {
        state.k = k;
        let t0 = Instant::now();
        let net_w = loss_update(&state, template, inputs, targets, cfg)?;
        let wall_loss = t0.elapsed().as_secs_f64();
        state.w = net_w.weights().to_vec();
        state.biases = net_w.biases().to_vec();

        let t1 = Instant::now();
        let lip = lip_update(&state, template.activation(), cfg)?;
        let wall_lip = t1.elapsed().as_secs_f64();
        state.r_dual = cfg.rho * frob(&lip.w_bar, &state.w_bar);
        state.w_bar = lip.w_bar;
        state.l2 = lip.l2;
        state.warm = Some(lip.warm);
        state.y = dual_update(&state.y, &state.w, &state.w_bar, cfg.rho);
        state.r_primal = frob(&state.w, &state.w_bar);

        let bound = certify_fixed(template, &state.w_bar, &t)?;
        if let Some(l_des) = enforce {
            if bound > l_des * (S::one() + S::lit(1e-6)) {
                return Err(AdmmError::InvariantViolation {
                    k,
                    bound: bound.to_f64_lossy(),
                    l_des: l_des.to_f64_lossy(),
                });
            }
        }
        let net_bar = state.certified_network(template)?;
        let cel = loss(&net_bar, inputs, targets, cfg.loss, S::zero())?;
        log::debug!(
            "admm k={k} r_primal={} r_dual={} L2={} loss={} bound={}",
            state.r_primal,
            state.r_dual,
            state.l2,
            cel,
            bound
        );
        trace.push(TraceRow {
            k,
            r_primal: state.r_primal,
            r_dual: state.r_dual,
            l2: state.l2,
            cel_train: cel,
            wall_loss_step_s: wall_loss,
            wall_lip_step_s: wall_lip,
            certified_bound: bound,
        });
        if state.r_primal <= eps_p && state.r_dual <= eps_d {
            converged = true;
            break;
        }
    }
    Ok(AdmmOutcome { network: state.certified_network(template)?, trace, converged, state, t, initial_bound })
}
