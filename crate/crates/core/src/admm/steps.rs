use nalgebra::{DMatrix, DVector};

use super::{AdmmConfig, AdmmError, AdmmState, Mode};
use crate::cert::{certify, CertifyMode};
use crate::nn::{sgd_train, Activation, Augment, Network, NnError, Targets};
use crate::scalar::Scalar;
use crate::sdp::{self, repair_toward_strict_point, LmiProgram, SolveResult, SolveStatus, WarmStart};

/// Loss step: SGD on `loss(W) + sum <Y, W - Wbar> + rho/2 ||W - Wbar||^2`, starting from `state.w`.
///
/// Biases follow the plain loss gradient. Returns the network carrying the new `W`.
pub fn loss_update<S: Scalar>(
    state: &AdmmState<S>,
    template: &Network<S>,
    inputs: &DMatrix<S>,
    targets: Targets<'_, S>,
    cfg: &AdmmConfig<S>,
) -> Result<Network<S>, AdmmError> {
    let net = template.with_parameters(state.w.clone(), state.biases.clone())?;
    let augment = Augment { y: &state.y, w_bar: &state.w_bar, rho: cfg.rho };
    let mut sgd = cfg.inner_sgd.clone();
    sgd.seed = sgd.seed.wrapping_add(state.k as u64);
    sgd_train(&net, inputs, targets, cfg.loss, &sgd, Some(&augment)).map_err(|e| match e {
        NnError::Diverged { epoch } => AdmmError::Diverged { outer: state.k, epoch },
        other => other.into(),
    })
}

/// Program of the LMI step over `Wbar` (and `L2` when regularizing).
///
/// Constraint: the Schur-complement matrix of `(L2, Wbar)` for the fixed multiplier is
/// negative semidefinite. Objective: `mu L2 + sum <Y, W - Wbar> + rho/2 ||W - Wbar||^2`.
/// With `mu = 0` the objective ignores `L2` while the feasible set grows with it, so
/// `L2` is pinned at the cap `1e4 * max(1, state.l2)` instead of being a variable.
pub fn lip_program<S: Scalar>(state: &AdmmState<S>, activation: Activation, cfg: &AdmmConfig<S>) -> LmiProgram<S> {
    let (w, y, mode, rho) = (&state.w, &state.y, cfg.mode, cfg.rho);
    let t = cfg.effective_t();
    let pinned_l2 = match mode {
        Mode::Enforce { l_des } => Some(l_des * l_des),
        Mode::Regularize { mu } if mu == S::zero() => Some(S::lit(1e4) * state.l2.max(S::one())),
        Mode::Regularize { .. } => None,
    };
    let beta = activation.beta::<S>();
    let layers = w.len();
    let n0 = w[0].ncols();
    let hidden: Vec<usize> = w[..layers - 1].iter().map(|m| m.nrows()).collect();
    let n: usize = hidden.iter().sum();
    let n_out = w[layers - 1].nrows();
    let mut offs = Vec::with_capacity(hidden.len());
    let mut acc = 0;
    for &h in &hidden {
        offs.push(acc);
        acc += h;
    }
    let lam = t.lambda();

    let dim = n0 + n + n_out;
    let mut p = LmiProgram::new(dim);
    let mut a0 = DMatrix::zeros(dim, dim);
    for j in 0..n {
        a0[(n0 + j, n0 + j)] = -S::lit(2.0) * lam[j];
    }
    for r in 0..n_out {
        a0[(n0 + n + r, n0 + n + r)] = -S::one();
    }
    let mut strict = Vec::new();
    match (mode, pinned_l2) {
        (_, Some(l2)) => {
            for i in 0..n0 {
                a0[(i, i)] = -l2;
            }
        }
        (Mode::Regularize { mu }, None) => {
            let l2 = p.add_variable("L2", 1, 1);
            for i in 0..n0 {
                p.add_coefficient(l2.offset, i, i, -S::one());
            }
            p.add_linear(l2.offset, mu);
            p.require_nonneg(l2.offset);
            strict.push(S::one());
        }
        (Mode::Enforce { .. }, None) => unreachable!("enforce mode always pins L2"),
    }
    p.set_constant(a0);

    let mut constant = S::zero();
    for (i, wi) in w.iter().enumerate() {
        let block = p.add_variable(&format!("Wbar{i}"), wi.nrows(), wi.ncols());
        let col0 = if i == 0 { 0 } else { n0 + offs[i - 1] };
        for r in 0..wi.nrows() {
            for c in 0..wi.ncols() {
                let k = block.index(r, c);
                if i + 1 < layers {
                    let row = n0 + offs[i] + r;
                    p.add_coefficient(k, col0 + c, row, beta * lam[offs[i] + r]);
                } else {
                    p.add_coefficient(k, col0 + c, n0 + n + r, S::one());
                }
                p.add_linear(k, -y[i][(r, c)] - rho * wi[(r, c)]);
                p.add_quadratic(k, k, rho);
                strict.push(S::zero());
            }
        }
        constant += y[i].dot(wi) + rho * S::lit(0.5) * wi.norm_squared();
    }
    p.set_objective_constant(constant);
    p.set_strict_point(DVector::from_vec(strict));
    p
}

#[derive(Debug, Clone)]
pub struct LipUpdate<S: Scalar> {
    pub l2: S,
    pub w_bar: Vec<DMatrix<S>>,
    pub result: SolveResult<S>,
    pub(crate) warm: WarmStart<S>,
}

/// LMI step. The returned `Wbar` satisfies the constraint with a nonpositive
/// eigenvalue margin; in regularize mode `l2` is the smallest value certified
/// for `Wbar` with the fixed multiplier.
pub fn lip_update<S: Scalar>(
    state: &AdmmState<S>,
    activation: Activation,
    cfg: &AdmmConfig<S>,
) -> Result<LipUpdate<S>, AdmmError> {
    let t = cfg.effective_t();
    let p = lip_program(state, activation, cfg);
    let mut opts = cfg.solver.clone();
    opts.warm_start = state.warm.clone();
    let result = sdp::solve(&p, &opts)?;
    let fail = |status| AdmmError::Solver { outer: state.k, status, margin: result.feasibility_margin.to_f64_lossy() };
    if matches!(result.status, SolveStatus::Infeasible | SolveStatus::NumericalFailure) {
        return Err(fail(result.status));
    }
    if result.status == SolveStatus::MaxIter {
        log::warn!(
            "LMI step {} hit the iteration limit (residual {:e}); keeping the repaired iterate",
            state.k,
            result.residual
        );
    }
    let x = repair_toward_strict_point(&p, &result.x).ok_or_else(|| fail(SolveStatus::NumericalFailure))?;
    let w_bar: Vec<DMatrix<S>> =
        (0..state.w.len()).map(|i| p.extract(&x, &format!("Wbar{i}")).expect("block exists")).collect();
    let l2 = match cfg.mode {
        Mode::Enforce { l_des } => l_des * l_des,
        Mode::Regularize { .. } => {
            let dims: Vec<usize> = std::iter::once(w_bar[0].ncols()).chain(w_bar.iter().map(|m| m.nrows())).collect();
            let biases = dims[1..].iter().map(|&d| DVector::zeros(d)).collect();
            let net = Network::new(dims, w_bar.clone(), biases, activation)?;
            let b = certify(&net, &CertifyMode::FixedT(t))?.bound;
            b * b
        }
    };
    let warm = match &result.warm {
        Some(s) => WarmStart::Split(s.clone()),
        None => WarmStart::Point(x),
    };
    Ok(LipUpdate { l2, w_bar, result, warm })
}

/// `Y + rho (W - Wbar)`, layer by layer.
pub fn dual_update<S: Scalar>(y: &[DMatrix<S>], w: &[DMatrix<S>], w_bar: &[DMatrix<S>], rho: S) -> Vec<DMatrix<S>> {
    y.iter().zip(w).zip(w_bar).map(|((y, w), wb)| y + (w - wb) * rho).collect()
}
