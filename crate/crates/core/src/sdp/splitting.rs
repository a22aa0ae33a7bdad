//! Operator splitting (ADMM) on `min f(x)  s.t.  G(x) = Z,  Z in NSD x R_-`.
//!
//! Each iteration solves one linear system in `x` by Jacobi-preconditioned CG,
//! projects onto the cone with one eigendecomposition, and updates the scaled
//! dual. The penalty adapts by residual balancing. When the program carries a
//! strict point, the final iterate is pulled toward it just far enough to make
//! the constraint hold exactly.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{project_psd, Cone, LmiProgram, SolveOptions, SolveResult, SolveStatus};
use crate::scalar::Scalar;

/// Iterate carried between solves of related programs.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitState<S: Scalar> {
    pub x: DVector<S>,
    pub slack: DMatrix<S>,
    pub dual: DMatrix<S>,
    pub sign_slack: DVector<S>,
    pub sign_dual: DVector<S>,
    pub sigma: S,
}

struct Operator<'a, S: Scalar> {
    p: &'a LmiProgram<S>,
    sigma: S,
    diag: DVector<S>,
}

impl<S: Scalar> Operator<'_, S> {
    fn apply(&self, x: &DVector<S>) -> DVector<S> {
        let mut out = self.p.quadratic_apply(x) + self.p.adjoint(&self.p.linear_map(x)) * self.sigma;
        for &k in self.p.nonneg() {
            out[k] += self.sigma * x[k];
        }
        out
    }

    fn solve(&self, rhs: &DVector<S>, x0: &DVector<S>) -> DVector<S> {
        let mut x = x0.clone();
        let mut r = rhs - self.apply(&x);
        let rhs_norm = rhs.norm().max(S::machine_eps());
        let tol = S::lit(1e-12).max(S::lit(10.0) * S::machine_eps()) * rhs_norm;
        if r.norm() <= tol {
            return x;
        }
        let mut z = r.component_div(&self.diag);
        let mut d = z.clone();
        let mut rz = r.dot(&z);
        for _ in 0..(4 * x.len()).clamp(10, 500) {
            let ad = self.apply(&d);
            let denom = d.dot(&ad);
            if denom <= S::zero() {
                break;
            }
            let alpha = rz / denom;
            x.axpy(alpha, &d, S::one());
            r.axpy(-alpha, &ad, S::one());
            if r.norm() <= tol {
                break;
            }
            z = r.component_div(&self.diag);
            let rz_new = r.dot(&z);
            d = &z + &d * (rz_new / rz);
            rz = rz_new;
        }
        x
    }
}

/// Moves `x` toward the program's strict point until the constraint margin is nonpositive.
///
/// The weight on `x` is bisected, so the result is within a relative `1e-6`
/// of the boundary along the segment. Returns `None` without a strict point.
pub fn repair_toward_strict_point<S: Scalar>(p: &LmiProgram<S>, x: &DVector<S>) -> Option<DVector<S>> {
    let margin = p.margin(x);
    if margin <= S::zero() {
        return Some(x.clone());
    }
    let anchor = p.strict_point()?;
    let anchor_margin = p.margin(anchor);
    if !(anchor_margin < S::zero()) || !margin.is_finite() {
        return None;
    }
    let at = |c: S| anchor + (x - anchor) * c;
    // The margin is convex along the segment, so this weight is always feasible.
    let mut lo = -anchor_margin / (margin - anchor_margin);
    let mut best = at(lo);
    while p.margin(&best) > S::zero() {
        lo *= S::lit(0.5);
        if lo < S::machine_eps() {
            return Some(anchor.clone());
        }
        best = at(lo);
    }
    let mut hi = S::one();
    for _ in 0..20 {
        if hi - lo <= S::lit(1e-6) * hi {
            break;
        }
        let mid = (lo + hi) * S::lit(0.5);
        let cand = at(mid);
        if p.margin(&cand) <= S::zero() {
            lo = mid;
            best = cand;
        } else {
            hi = mid;
        }
    }
    Some(best)
}

pub(super) fn solve<S: Scalar>(p: &LmiProgram<S>, opts: &SolveOptions<S>) -> SolveResult<S> {
    let start = Instant::now();
    let n = p.num_vars();
    let m = p.dim();
    let max_iter = opts.max_iter.unwrap_or(100_000);
    let c = DVector::from_column_slice(p.linear());
    let norms = p.coefficient_norms_sq();
    let q_diag = {
        let mut d = DVector::<S>::zeros(n);
        for &(k, l, v) in p.quadratic() {
            if k == l {
                d[k] += v;
            }
        }
        d
    };
    let mut is_nonneg = vec![false; n];
    for &k in p.nonneg() {
        is_nonneg[k] = true;
    }

    let mut state = match &opts.warm_start {
        Some(super::WarmStart::Split(s)) if s.x.len() == n && s.slack.nrows() == m => s.clone(),
        _ => {
            let x = match (&opts.warm_start, p.strict_point()) {
                (Some(super::WarmStart::Point(x)), _) if x.len() == n => x.clone(),
                (_, Some(x)) => x.clone(),
                _ => DVector::zeros(n),
            };
            let g = p.constraint_at(&x);
            SplitState {
                slack: project_psd(&g, Cone::Nsd).unwrap_or_else(|_| DMatrix::zeros(m, m)),
                dual: DMatrix::zeros(m, m),
                sign_slack: DVector::from_iterator(p.nonneg().len(), p.nonneg().iter().map(|&k| (-x[k]).min(S::zero()))),
                sign_dual: DVector::zeros(p.nonneg().len()),
                sigma: S::one(),
                x,
            }
        }
    };

    let eps = opts.eps_opt;
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = S::max_value().unwrap();
    let mut failure = false;
    while iterations < max_iter {
        iterations += 1;
        let sigma = state.sigma;
        let diag = DVector::from_iterator(
            n,
            (0..n).map(|k| {
                let d = q_diag[k] + sigma * norms[k] + if is_nonneg[k] { sigma } else { S::zero() };
                if d > S::zero() { d } else { S::one() }
            }),
        );
        let op = Operator { p, sigma, diag };
        // rhs = -c - sigma A'(A0 - Z + U) - sigma E'(Zv - Uv)
        let inner = p.constant() - &state.slack + &state.dual;
        let mut rhs = -&c - p.adjoint(&inner) * sigma;
        for (idx, &k) in p.nonneg().iter().enumerate() {
            rhs[k] -= sigma * (state.sign_slack[idx] - state.sign_dual[idx]);
        }
        let x = op.solve(&rhs, &state.x);
        if x.iter().any(|v| !v.is_finite()) {
            failure = true;
            break;
        }
        let g = p.constraint_at(&x);
        let Ok(slack) = project_psd(&(&g + &state.dual), Cone::Nsd) else {
            failure = true;
            break;
        };
        let h = DVector::from_iterator(p.nonneg().len(), p.nonneg().iter().map(|&k| -x[k]));
        let sign_slack = (&h + &state.sign_dual).map(|v| v.min(S::zero()));

        let r_mat = &g - &slack;
        let r_vec = &h - &sign_slack;
        let primal = (r_mat.norm_squared() + r_vec.norm_squared()).sqrt();
        let mut dual_vec = p.adjoint(&(&slack - &state.slack));
        for (idx, &k) in p.nonneg().iter().enumerate() {
            dual_vec[k] -= sign_slack[idx] - state.sign_slack[idx];
        }
        let dual = dual_vec.norm() * sigma;

        state.dual += &r_mat;
        state.sign_dual += &r_vec;
        state.slack = slack;
        state.sign_slack = sign_slack;
        state.x = x;

        let primal_scale = S::one() + g.norm().max(state.slack.norm());
        let mut y_adj = p.adjoint(&state.dual);
        for (idx, &k) in p.nonneg().iter().enumerate() {
            y_adj[k] -= state.sign_dual[idx];
        }
        let cost_scale = (&c + p.quadratic_apply(&state.x)).norm();
        let dual_scale = S::one() + cost_scale.max(y_adj.norm() * sigma);
        let rel_p = primal / primal_scale;
        let rel_d = dual / dual_scale;
        residual = rel_p.max(rel_d);
        if rel_p <= eps && rel_d <= eps {
            converged = true;
            break;
        }
        if iterations % 10 == 0 {
            let ratio = S::lit(5.0);
            let factor = if rel_p > ratio * rel_d {
                Some(S::lit(2.0))
            } else if rel_d > ratio * rel_p {
                Some(S::lit(0.5))
            } else {
                None
            };
            if let Some(f) = factor {
                state.sigma *= f;
                state.dual /= f;
                state.sign_dual /= f;
            }
        }
    }

    let mut x = state.x.clone();
    let mut margin = p.margin(&x);
    let tol = p.feasibility_tolerance(&x, opts.eps_feas);
    if margin > S::zero() {
        if let Some(fixed) = repair_toward_strict_point(p, &x) {
            x = fixed;
            margin = p.margin(&x);
        }
    }
    let status = if failure {
        SolveStatus::NumericalFailure
    } else if converged && margin <= tol {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIter
    };
    SolveResult {
        objective: p.objective(&x),
        x,
        feasibility_margin: margin,
        residual,
        status,
        iterations,
        wall_time: start.elapsed(),
        blocks: p.blocks().to_vec(),
        warm: Some(state),
    }
}
