//! Lipschitz upper bounds: spectral-norm product and the LMI certificate.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use super::lmi::{build_p, hidden_offsets};
use super::{CertError, DiagonalMultiplier};
use crate::nn::Network;
use crate::scalar::Scalar;
use crate::sdp::{self, max_eigenvalue, LmiProgram, SolveOptions, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertMethod {
    TrivialProduct,
    LipSdpFixedT,
    LipSdpOptT,
}

impl fmt::Display for CertMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CertMethod::TrivialProduct => "trivial-product",
            CertMethod::LipSdpFixedT => "lipsdp-fixed-t",
            CertMethod::LipSdpOptT => "lipsdp-opt-t",
        })
    }
}

#[derive(Debug, Clone)]
pub enum CertifyMode<S: Scalar> {
    FixedT(DiagonalMultiplier<S>),
    OptimizeT,
}

#[derive(Debug, Clone)]
pub struct CertifyOptions<S: Scalar> {
    /// Relative tolerance of the final eigenvalue re-check.
    pub eps_feas: S,
    pub solver: SolveOptions<S>,
}

impl<S: Scalar> Default for CertifyOptions<S> {
    fn default() -> Self {
        let solver = SolveOptions::default();
        Self { eps_feas: solver.eps_feas, solver }
    }
}

#[derive(Debug, Clone)]
pub struct LipschitzCertificate<S: Scalar> {
    pub bound: S,
    /// `None` for the trivial product bound.
    pub multiplier: Option<DiagonalMultiplier<S>>,
    pub method: CertMethod,
    /// Largest eigenvalue of the LMI matrix at `(bound^2, T)`; zero for the trivial bound.
    pub feasibility_margin: S,
    /// Status of the optimization over `T`, when one was run.
    pub solve_status: Option<SolveStatus>,
    pub iterations: usize,
    pub wall_time: Duration,
}

impl<S: Scalar> fmt::Display for LipschitzCertificate<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method: {}", self.method)?;
        writeln!(f, "bound: {}", self.bound)?;
        writeln!(f, "feasibility_margin: {:e}", self.feasibility_margin)?;
        match self.solve_status {
            Some(s) => writeln!(f, "solver_status: {s}")?,
            None => writeln!(f, "solver_status: none")?,
        }
        writeln!(f, "solver_iterations: {}", self.iterations)?;
        writeln!(f, "wall_time_s: {:.6}", self.wall_time.as_secs_f64())
    }
}

fn spectral_norm<S: Scalar>(w: &DMatrix<S>) -> S {
    if w.is_empty() {
        return S::zero();
    }
    w.clone().singular_values().iter().fold(S::zero(), |a, &b| a.max(b))
}

/// `beta^l * prod_i ||W_i||_2`.
pub fn trivial_bound<S: Scalar>(net: &Network<S>) -> LipschitzCertificate<S> {
    let start = Instant::now();
    let beta = net.activation().beta::<S>();
    let mut bound = S::one();
    for _ in 0..net.hidden_layers() {
        bound *= beta;
    }
    for w in net.weights() {
        bound *= spectral_norm(w);
    }
    LipschitzCertificate {
        bound,
        multiplier: None,
        method: CertMethod::TrivialProduct,
        feasibility_margin: S::zero(),
        solve_status: None,
        iterations: 0,
        wall_time: start.elapsed(),
    }
}

pub fn certify<S: Scalar>(net: &Network<S>, mode: &CertifyMode<S>) -> Result<LipschitzCertificate<S>, CertError> {
    certify_with(net, mode, &CertifyOptions::default())
}

pub fn certify_with<S: Scalar>(
    net: &Network<S>,
    mode: &CertifyMode<S>,
    opts: &CertifyOptions<S>,
) -> Result<LipschitzCertificate<S>, CertError> {
    let sector = net.activation().sector::<S>();
    if sector.alpha != S::zero() {
        return Err(CertError::UnsupportedSector(sector.alpha.to_f64_lossy()));
    }
    let start = Instant::now();
    match mode {
        CertifyMode::FixedT(t) => {
            let (l2, margin) = fixed_t_l2(net, t, opts.eps_feas)?;
            Ok(LipschitzCertificate {
                bound: l2.sqrt(),
                multiplier: Some(t.clone()),
                method: CertMethod::LipSdpFixedT,
                feasibility_margin: margin,
                solve_status: None,
                iterations: 0,
                wall_time: start.elapsed(),
            })
        }
        CertifyMode::OptimizeT => {
            let program = lipsdp_program(net);
            let res = sdp::solve(&program, &opts.solver)?;
            if matches!(res.status, SolveStatus::Infeasible | SolveStatus::NumericalFailure) {
                return Err(CertError::Solver(res.status));
            }
            let lam = res.value("lambda").expect("program defines lambda");
            let t = DiagonalMultiplier::new(DVector::from_iterator(lam.nrows(), lam.iter().map(|v| v.max(S::zero()))))?;
            let (l2, margin) = fixed_t_l2(net, &t, opts.eps_feas)?;
            Ok(LipschitzCertificate {
                bound: l2.sqrt(),
                multiplier: Some(t),
                method: CertMethod::LipSdpOptT,
                feasibility_margin: margin,
                solve_status: Some(res.status),
                iterations: res.iterations,
                wall_time: start.elapsed(),
            })
        }
    }
}

/// `min L2 + 1e-9 sum(lambda)  s.t.  P(L2, diag(lambda)) <= 0,  L2, lambda >= 0`.
///
/// The tiny weight on `lambda` keeps the program bounded when a neuron has no
/// incoming or outgoing weights (its multiplier is otherwise free to diverge).
pub fn lipsdp_program<S: Scalar>(net: &Network<S>) -> LmiProgram<S> {
    let n0 = net.input_dim();
    let n = net.hidden_neurons();
    let dims = net.dims();
    let w = net.weights();
    let sector = net.activation().sector::<S>();
    let offs = hidden_offsets(net);
    let mut p = LmiProgram::new(n0 + n);
    let l2 = p.add_variable("L2", 1, 1);
    let lam = p.add_variable("lambda", n, 1);

    let mut a0 = DMatrix::zeros(n0 + n, n0 + n);
    let last = &w[w.len() - 1];
    let top = n0 + offs[offs.len() - 1];
    let nl = last.ncols();
    a0.view_mut((top, top), (nl, nl)).copy_from(&(last.transpose() * last));
    p.set_constant(a0);

    for i in 0..n0 {
        p.add_coefficient(l2.offset, i, i, -S::one());
    }
    let ab = sector.alpha * sector.beta * S::lit(2.0);
    let apb = sector.alpha + sector.beta;
    for (layer, &off) in offs.iter().enumerate() {
        let col0 = if layer == 0 { 0 } else { n0 + offs[layer - 1] };
        for r in 0..dims[layer + 1] {
            let k = lam.index(off + r, 0);
            let row = w[layer].row(r);
            if ab != S::zero() {
                for a in 0..dims[layer] {
                    for b in a..dims[layer] {
                        let v = -ab * row[a] * row[b];
                        if v != S::zero() {
                            p.add_coefficient(k, col0 + a, col0 + b, v);
                        }
                    }
                }
            }
            for c in 0..dims[layer] {
                let v = apb * row[c];
                if v != S::zero() {
                    p.add_coefficient(k, col0 + c, n0 + off + r, v);
                }
            }
            p.add_coefficient(k, n0 + off + r, n0 + off + r, -S::lit(2.0));
        }
    }
    p.add_linear(l2.offset, S::one());
    for j in 0..n {
        p.add_linear(lam.index(j, 0), S::lit(1e-9));
    }
    for k in 0..p.num_vars() {
        p.require_nonneg(k);
    }
    if let Some(x) = lipsdp_strict_point(net) {
        if p.margin(&x) < S::zero() {
            p.set_strict_point(x);
        }
    }
    p
}

/// A strictly feasible `(L2, lambda)` for [`lipsdp_program`], so the solver can
/// skip phase I.
///
/// With `T = c_i I` on hidden layer `i`, the hidden block `-H` is block
/// tridiagonal. Choosing `c_last = ||W_last||^2 + 1` and, backwards,
/// `c_i = (alpha + beta)^2 c_{i+1} ||W_{i+1}||^2 + 1` keeps every Schur
/// complement above `c_i I`, so `-H > 0`; `L2` is then twice the closed form plus one.
fn lipsdp_strict_point<S: Scalar>(net: &Network<S>) -> Option<DVector<S>> {
    let w = net.weights();
    let dims = net.dims();
    let sector = net.activation().sector::<S>();
    let apb = sector.alpha + sector.beta;
    let layers = w.len() - 1;
    if layers == 0 {
        return None;
    }
    let mut c = vec![S::zero(); layers];
    let nl = spectral_norm(&w[layers]);
    c[layers - 1] = nl * nl + S::one();
    for i in (0..layers - 1).rev() {
        let n = spectral_norm(&w[i + 1]);
        c[i] = apb * apb * c[i + 1] * n * n + S::one();
    }
    let mut lam = Vec::with_capacity(net.hidden_neurons());
    for (i, &ci) in c.iter().enumerate() {
        lam.extend(std::iter::repeat(ci).take(dims[i + 1]));
    }
    let t = DiagonalMultiplier::new(DVector::from_vec(lam.clone())).ok()?;
    let (l2, _) = fixed_t_l2(net, &t, S::lit(1e-12)).ok()?;
    let mut x = Vec::with_capacity(lam.len() + 1);
    x.push(l2 * S::lit(2.0) + S::one());
    x.extend(lam);
    let x = DVector::from_vec(x);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn margin_tolerance<S: Scalar>(p: &DMatrix<S>, eps: S) -> S {
    eps * (S::one() + p.amax())
}

/// Smallest `L2` (up to the re-check tolerance) with `P(L2, T) <= eps (1 + max|P|) I`.
fn fixed_t_l2<S: Scalar>(net: &Network<S>, t: &DiagonalMultiplier<S>, eps: S) -> Result<(S, S), CertError> {
    let tm = t.to_matrix();
    let p0 = build_p(net, S::zero(), &tm)?;
    let n0 = net.input_dim();
    let n = net.hidden_neurons();
    let h = p0.view((n0, n0), (n, n)).clone_owned();
    let p_hx = p0.view((n0, 0), (n, n0)).clone_owned();

    let mut l2 = match (-&h).cholesky() {
        Some(chol) => {
            // lambda_max(P_xh (-H)^-1 P_hx) = ||L^-1 P_hx||_2^2 with -H = L L'.
            let z = chol.l().solve_lower_triangular(&p_hx).ok_or_else(|| CertError::Numerical("triangular solve".into()))?;
            let s = spectral_norm(&z);
            s * s
        }
        None => bisect_l2(net, &tm, eps)?,
    };
    if !l2.is_finite() {
        return Err(CertError::Numerical("non-finite bound".into()));
    }
    l2 = l2.max(S::zero());
    for _ in 0..200 {
        let p = build_p(net, l2, &tm)?;
        let margin = max_eigenvalue(&p);
        if !margin.is_finite() {
            return Err(CertError::Numerical("eigenvalue check failed".into()));
        }
        let tol = margin_tolerance(&p, eps);
        if margin <= tol {
            return Ok((l2, margin));
        }
        // The largest eigenvalue falls by at most the shift.
        l2 += margin.max(l2 * S::machine_eps() * S::lit(16.0));
    }
    Err(CertError::Infeasible)
}

fn bisect_l2<S: Scalar>(net: &Network<S>, t: &DMatrix<S>, eps: S) -> Result<S, CertError> {
    let check = |l2: S| -> bool {
        build_p(net, l2, t).map(|p| max_eigenvalue(&p) <= margin_tolerance(&p, eps)).unwrap_or(false)
    };
    let triv = trivial_bound(net).bound;
    let mut hi = (triv * triv).max(S::one());
    let mut found = false;
    for _ in 0..64 {
        if check(hi) {
            found = true;
            break;
        }
        hi *= S::lit(4.0);
    }
    if !found {
        return Err(CertError::Infeasible);
    }
    let tol = (hi * S::lit(1e-12)).max(S::machine_eps());
    Ok(sdp::bisect_feasibility(check, S::zero(), hi, tol)?)
}
