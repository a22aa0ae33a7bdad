//! Primal log-barrier method for programs with a modest number of variables.
//!
//! The LMI is relaxed to `G(x) <= eps I` with `eps = eps_feas / 2`, which keeps
//! problems whose feasible set has empty interior (a fixed singular block, say)
//! solvable. A phase-I problem `min s  s.t.  G(x) <= s I` supplies a strictly
//! feasible start when none is known. On exit the central-path duality gap
//! `m / t` bounds the distance to the optimum.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{LmiProgram, SolveOptions, SolveResult, SolveStatus};
use crate::scalar::Scalar;

/// Above this many entries (variables x dim^2) the Hessian is assembled entrywise instead of by one product.
const DENSE_HESSIAN_ENTRIES: usize = 10_000_000;

struct Problem<S: Scalar> {
    n: usize,
    dim: usize,
    a0: DMatrix<S>,
    coeffs: Vec<Vec<(usize, usize, S)>>,
    /// Rows `a'x + b <= 0`.
    lin: Vec<(Vec<(usize, S)>, S)>,
    c: DVector<S>,
    quad: Vec<(usize, usize, S)>,
}

struct Point<S: Scalar> {
    chol: Cholesky<S, Dyn>,
    lin_slack: Vec<S>,
}

impl<S: Scalar> Problem<S> {
    fn constraint(&self, x: &DVector<S>) -> DMatrix<S> {
        let mut g = self.a0.clone();
        for (k, entries) in self.coeffs.iter().enumerate() {
            let xk = x[k];
            if xk == S::zero() {
                continue;
            }
            for &(i, j, v) in entries {
                g[(i, j)] += xk * v;
                if i != j {
                    g[(j, i)] += xk * v;
                }
            }
        }
        g
    }

    fn point(&self, x: &DVector<S>) -> Option<Point<S>> {
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut lin_slack = Vec::with_capacity(self.lin.len());
        for (a, b) in &self.lin {
            let s = -(a.iter().fold(*b, |acc, &(k, v)| acc + v * x[k]));
            if s <= S::zero() {
                return None;
            }
            lin_slack.push(s);
        }
        let chol = Cholesky::new(-self.constraint(x))?;
        Some(Point { chol, lin_slack })
    }

    fn quad_apply(&self, x: &DVector<S>) -> DVector<S> {
        let mut out = DVector::zeros(self.n);
        for &(k, l, v) in &self.quad {
            out[k] += v * x[l];
            if k != l {
                out[l] += v * x[k];
            }
        }
        out
    }

    fn objective(&self, x: &DVector<S>) -> S {
        self.c.dot(x) + S::lit(0.5) * x.dot(&self.quad_apply(x))
    }

    fn barrier(&self, pt: &Point<S>) -> S {
        let l = pt.chol.l_dirty();
        let logdet = (0..self.dim).fold(S::zero(), |acc, i| acc + l[(i, i)].ln()) * S::lit(2.0);
        -logdet - pt.lin_slack.iter().fold(S::zero(), |acc, s| acc + s.ln())
    }

    fn merit(&self, x: &DVector<S>, t: S) -> Option<S> {
        let pt = self.point(x)?;
        Some(t * self.objective(x) + self.barrier(&pt))
    }

    fn total_constraints(&self) -> usize {
        self.dim + self.lin.len()
    }

    /// Gradient and Hessian of the barrier term.
    fn barrier_derivatives(&self, pt: &Point<S>) -> (DVector<S>, DMatrix<S>) {
        let sinv = pt.chol.inverse();
        let mut cols: Vec<Vec<usize>> = Vec::with_capacity(self.n);
        let mut blocks: Vec<DMatrix<S>> = Vec::with_capacity(self.n);
        let mut grad = DVector::zeros(self.n);
        for entries in &self.coeffs {
            let mut touched: Vec<usize> = entries.iter().flat_map(|&(i, j, _)| [i, j]).collect();
            touched.sort_unstable();
            touched.dedup();
            let pos = |c: usize| touched.binary_search(&c).expect("column recorded");
            // Block holds (S^{-1} A_k)[:, touched]; S = -G so dS/dx_k = -A_k.
            let mut block = DMatrix::zeros(self.dim, touched.len());
            for &(i, j, v) in entries {
                let mut col = block.column_mut(pos(j));
                col.axpy(v, &sinv.column(i), S::one());
                if i != j {
                    let mut col = block.column_mut(pos(i));
                    col.axpy(v, &sinv.column(j), S::one());
                }
            }
            cols.push(touched);
            blocks.push(block);
        }
        for k in 0..self.n {
            grad[k] = cols[k].iter().enumerate().fold(S::zero(), |acc, (bi, &b)| acc + blocks[k][(b, bi)]);
        }
        let mut hess = if self.n * self.dim * self.dim <= DENSE_HESSIAN_ENTRIES {
            // H_kl = tr(X_k X_l) with X_k = S^{-1} A_k, as one product of vectorized blocks.
            let d = self.dim;
            let mut v = DMatrix::zeros(d * d, self.n);
            let mut vt = DMatrix::zeros(d * d, self.n);
            for k in 0..self.n {
                for (bi, &b) in cols[k].iter().enumerate() {
                    for a in 0..d {
                        let x = blocks[k][(a, bi)];
                        v[(b * d + a, k)] = x;
                        vt[(a * d + b, k)] = x;
                    }
                }
            }
            let h = v.tr_mul(&vt);
            (&h + h.transpose()) * S::lit(0.5)
        } else {
            let mut hess = DMatrix::zeros(self.n, self.n);
            for k in 0..self.n {
                for l in k..self.n {
                    let mut acc = S::zero();
                    for (bi, &b) in cols[k].iter().enumerate() {
                        for (ai, &a) in cols[l].iter().enumerate() {
                            acc += blocks[k][(a, bi)] * blocks[l][(b, ai)];
                        }
                    }
                    hess[(k, l)] = acc;
                    hess[(l, k)] = acc;
                }
            }
            hess
        };
        for ((a, _), &s) in self.lin.iter().zip(&pt.lin_slack) {
            let inv = S::one() / s;
            for &(k, vk) in a {
                grad[k] += vk * inv;
                for &(l, vl) in a {
                    hess[(k, l)] += vk * vl * inv * inv;
                }
            }
        }
        (grad, hess)
    }
}

struct Outcome<S: Scalar> {
    x: DVector<S>,
    newton_steps: usize,
    gap: S,
    status: SolveStatus,
}

fn solve_newton_system<S: Scalar>(mut h: DMatrix<S>, g: &DVector<S>) -> Option<DVector<S>> {
    // Symmetric Jacobi scaling keeps Cholesky stable when curvatures differ by many orders.
    let d = h.diagonal().map(|v| if v > S::zero() { S::one() / v.sqrt() } else { S::one() });
    for j in 0..h.ncols() {
        for i in 0..h.nrows() {
            h[(i, j)] *= d[i] * d[j];
        }
    }
    let gs = g.component_mul(&d);
    let mut shift = S::zero();
    for _ in 0..12 {
        if let Some(ch) = Cholesky::new(h.clone()) {
            return Some(-ch.solve(&gs).component_mul(&d));
        }
        let bump = if shift == S::zero() { S::lit(1e-14) } else { shift * S::lit(10.0) };
        for i in 0..h.nrows() {
            h[(i, i)] += bump - shift;
        }
        shift = bump;
    }
    None
}

/// Runs the barrier method from a strictly feasible `x`. `stop_early` is
/// checked after each Newton step (used by phase I).
fn barrier_method<S: Scalar>(
    prob: &Problem<S>,
    mut x: DVector<S>,
    eps_opt: S,
    max_newton: usize,
    stop_early: impl Fn(&DVector<S>) -> bool,
) -> Outcome<S> {
    let m = S::from_usize_lossy(prob.total_constraints());
    let mut t = (m / prob.objective(&x).abs().max(S::one())).max(S::lit(1e-3));
    let mu = S::lit(20.0);
    let mut steps = 0;
    loop {
        // Centering.
        for _ in 0..200 {
            let Some(pt) = prob.point(&x) else {
                return Outcome { x, newton_steps: steps, gap: S::max_value().unwrap(), status: SolveStatus::NumericalFailure };
            };
            let (gb, hb) = prob.barrier_derivatives(&pt);
            let g = (&prob.c + prob.quad_apply(&x)) * t + gb;
            let mut h = hb;
            for &(k, l, v) in &prob.quad {
                h[(k, l)] += t * v;
                if k != l {
                    h[(l, k)] += t * v;
                }
            }
            let Some(dx) = solve_newton_system(h, &g) else {
                return Outcome { x, newton_steps: steps, gap: m / t, status: SolveStatus::NumericalFailure };
            };
            steps += 1;
            let slope = g.dot(&dx);
            if -slope * S::lit(0.5) <= S::lit(1e-10) {
                break;
            }
            let f0 = prob.merit(&x, t).expect("current point is strictly feasible");
            let mut step = S::one();
            let mut accepted = false;
            for _ in 0..80 {
                let cand = &x + &dx * step;
                if let Some(f1) = prob.merit(&cand, t) {
                    if f1 <= f0 + S::lit(0.01) * step * slope {
                        x = cand;
                        accepted = true;
                        break;
                    }
                }
                step *= S::lit(0.5);
            }
            // Short steps with a small decrement only move the merit at rounding
            // level: the point is centered.
            if accepted && step < S::lit(1e-6) && -slope * S::lit(0.5) <= S::lit(1e-6) {
                break;
            }
            if stop_early(&x) {
                return Outcome { x, newton_steps: steps, gap: m / t, status: SolveStatus::Optimal };
            }
            if !accepted || steps >= max_newton {
                break;
            }
        }
        let gap = m / t;
        let f = prob.objective(&x);
        if gap <= eps_opt * f.abs().max(S::one()) {
            return Outcome { x, newton_steps: steps, gap, status: SolveStatus::Optimal };
        }
        if steps >= max_newton {
            return Outcome { x, newton_steps: steps, gap, status: SolveStatus::MaxIter };
        }
        t *= mu;
    }
}

fn build_problem<S: Scalar>(p: &LmiProgram<S>, relax: S) -> Problem<S> {
    let n = p.num_vars();
    let mut a0 = p.constant().clone();
    for i in 0..p.dim() {
        a0[(i, i)] -= relax;
    }
    Problem {
        n,
        dim: p.dim(),
        a0,
        coeffs: (0..n).map(|k| p.coefficients(k).to_vec()).collect(),
        lin: p.nonneg().iter().map(|&k| (vec![(k, -S::one())], S::zero())).collect(),
        c: DVector::from_column_slice(p.linear()),
        quad: p.quadratic().to_vec(),
    }
}

pub(super) fn solve<S: Scalar>(p: &LmiProgram<S>, opts: &SolveOptions<S>) -> SolveResult<S> {
    let start = Instant::now();
    let relax = opts.eps_feas * S::lit(0.5);
    let prob = build_problem(p, relax);
    let n = prob.n;
    let max_newton = opts.max_iter.unwrap_or(200 * 50);

    let mut candidates: Vec<DVector<S>> = Vec::new();
    if let Some(super::WarmStart::Point(x)) = &opts.warm_start {
        candidates.push(x.clone());
    }
    if let Some(x) = p.strict_point() {
        candidates.push(x.clone());
    }
    let mut default = DVector::zeros(n);
    for &k in p.nonneg() {
        default[k] = S::one();
    }
    candidates.push(default);

    let mut iterations = 0;
    let start_x = match candidates.iter().find(|x| x.len() == n && prob.point(x).is_some()) {
        Some(x) => x.clone(),
        None => {
            // Phase I over (x, s).
            let seed = candidates.last().expect("default candidate").clone();
            let worst_lin = prob
                .lin
                .iter()
                .map(|(a, b)| a.iter().fold(*b, |acc, &(k, v)| acc + v * seed[k]))
                .fold(S::min_value().unwrap(), |a, b| a.max(b));
            let s0 = super::max_eigenvalue(&prob.constraint(&seed)).max(worst_lin) + S::one();
            let mut coeffs = prob.coeffs.clone();
            coeffs.push((0..prob.dim).map(|i| (i, i, -S::one())).collect());
            let mut c = DVector::zeros(n + 1);
            c[n] = S::one();
            let phase1 = Problem {
                n: n + 1,
                dim: prob.dim,
                a0: prob.a0.clone(),
                coeffs,
                lin: prob
                    .lin
                    .iter()
                    .map(|(a, b)| {
                        let mut a = a.clone();
                        a.push((n, -S::one()));
                        (a, *b)
                    })
                    .collect(),
                c,
                quad: Vec::new(),
            };
            let x1 = seed.clone().insert_row(n, s0);
            let target = -relax;
            let out = barrier_method(&phase1, x1, opts.eps_opt, max_newton, |x| x[n] < target);
            iterations += out.newton_steps;
            let cand = out.x.rows(0, n).into_owned();
            if out.x[n] >= S::zero() || prob.point(&cand).is_none() {
                let margin = p.margin(&cand);
                return SolveResult {
                    x: cand.clone(),
                    objective: p.objective(&cand),
                    feasibility_margin: margin,
                    residual: out.gap,
                    status: SolveStatus::Infeasible,
                    iterations,
                    wall_time: start.elapsed(),
                    blocks: p.blocks().to_vec(),
                    warm: None,
                };
            }
            cand
        }
    };

    let out = barrier_method(&prob, start_x, opts.eps_opt, max_newton.saturating_sub(iterations).max(1), |_| false);
    iterations += out.newton_steps;
    let margin = p.margin(&out.x);
    let tol = p.feasibility_tolerance(&out.x, opts.eps_feas);
    let status = match out.status {
        SolveStatus::Optimal if margin <= tol => SolveStatus::Optimal,
        SolveStatus::Optimal => SolveStatus::NumericalFailure,
        other => other,
    };
    SolveResult {
        objective: p.objective(&out.x),
        x: out.x,
        feasibility_margin: margin,
        residual: out.gap,
        status,
        iterations,
        wall_time: start.elapsed(),
        blocks: p.blocks().to_vec(),
        warm: None,
    }
}
