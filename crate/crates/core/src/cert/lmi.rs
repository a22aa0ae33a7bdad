//! Quadratic-constraint and LMI matrices for slope-restricted networks.

use nalgebra::{DMatrix, DVector};

use super::{CertError, DiagonalMultiplier};
use crate::nn::{Activation, Network, Sector};
use crate::scalar::Scalar;

/// `[[-2ab T, (a+b) T], [(a+b) T, -2 T]]` for the sector `[a, b]`.
pub fn build_f<S: Scalar>(t: &DMatrix<S>, sector: Sector<S>) -> DMatrix<S> {
    let n = t.nrows();
    let two = S::lit(2.0);
    let mut f = DMatrix::zeros(2 * n, 2 * n);
    f.view_mut((0, 0), (n, n)).copy_from(&(t * (-two * sector.alpha * sector.beta)));
    let off = t * (sector.alpha + sector.beta);
    f.view_mut((0, n), (n, n)).copy_from(&off);
    f.view_mut((n, 0), (n, n)).copy_from(&off);
    f.view_mut((n, n), (n, n)).copy_from(&(t * -two));
    f
}

/// Value of the incremental quadratic form for stacked neuron inputs `x` and `y`.
pub fn incremental_form<S: Scalar>(
    activation: Activation,
    t: &DMatrix<S>,
    x: &DVector<S>,
    y: &DVector<S>,
) -> Result<S, CertError> {
    let n = t.nrows();
    if t.ncols() != n || x.len() != n || y.len() != n {
        return Err(CertError::Shape(format!("T is {}x{}, inputs have {} and {} entries", n, t.ncols(), x.len(), y.len())));
    }
    let dx = x - y;
    let dphi = x.map(|v| activation.apply(v)) - y.map(|v| activation.apply(v));
    let mut z = DVector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(&dx);
    z.rows_mut(n, n).copy_from(&dphi);
    let f = build_f(t, activation.sector());
    Ok(z.dot(&(f * &z)))
}

/// Offsets of the hidden layers inside the stacked neuron vector.
pub(crate) fn hidden_offsets<S: Scalar>(net: &Network<S>) -> Vec<usize> {
    let dims = net.dims();
    let mut out = Vec::with_capacity(net.hidden_layers());
    let mut acc = 0;
    for &d in &dims[1..dims.len() - 1] {
        out.push(acc);
        acc += d;
    }
    out
}

fn check_t<S: Scalar>(net: &Network<S>, rows: usize, cols: usize) -> Result<(), CertError> {
    let n = net.hidden_neurons();
    if rows != n || cols != n {
        return Err(CertError::Shape(format!("multiplier is {rows}x{cols}, network has {n} hidden neurons")));
    }
    Ok(())
}

/// `[A; B]' F(T) [A; B] + blockdiag(-L2 I, 0, W_l' W_l)`, of size `n0 + n`.
pub fn build_p<S: Scalar>(net: &Network<S>, l2: S, t: &DMatrix<S>) -> Result<DMatrix<S>, CertError> {
    check_t(net, t.nrows(), t.ncols())?;
    let n0 = net.input_dim();
    let n = net.hidden_neurons();
    let dims = net.dims();
    let w = net.weights();
    let offs = hidden_offsets(net);
    // Stacked [A; B]: rows 0..n are neuron inputs, rows n..2n the neuron outputs.
    let mut ab = DMatrix::zeros(2 * n, n0 + n);
    for (i, &off) in offs.iter().enumerate() {
        let col = if i == 0 { 0 } else { n0 + offs[i - 1] };
        ab.view_mut((off, col), (dims[i + 1], dims[i])).copy_from(&w[i]);
    }
    for j in 0..n {
        ab[(n + j, n0 + j)] = S::one();
    }
    let f = build_f(t, net.activation().sector());
    let mut p = ab.transpose() * f * &ab;
    for i in 0..n0 {
        p[(i, i)] -= l2;
    }
    let last = w.last().expect("network has an output layer");
    let nl = dims[dims.len() - 2];
    let top = n0 + offs[offs.len() - 1];
    let mut block = p.view_mut((top, top), (nl, nl));
    block += last.transpose() * last;
    symmetrize(&mut p);
    Ok(p)
}

/// Schur-complement form, affine in `L2` and every weight matrix for fixed `T`.
///
/// Block order: input, hidden layers, output. Requires `alpha = 0`.
pub fn build_m<S: Scalar>(net: &Network<S>, l2: S, t: &DiagonalMultiplier<S>) -> Result<DMatrix<S>, CertError> {
    let sector = net.activation().sector::<S>();
    if sector.alpha != S::zero() {
        return Err(CertError::UnsupportedSector(sector.alpha.to_f64_lossy()));
    }
    check_t(net, t.len(), t.len())?;
    let n0 = net.input_dim();
    let n = net.hidden_neurons();
    let dims = net.dims();
    let m_out = net.output_dim();
    let w = net.weights();
    let offs = hidden_offsets(net);
    let lam = t.lambda();
    let dim = n0 + n + m_out;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..n0 {
        m[(i, i)] = -l2;
    }
    for j in 0..n {
        m[(n0 + j, n0 + j)] = -S::lit(2.0) * lam[j];
    }
    for i in 0..m_out {
        m[(n0 + n + i, n0 + n + i)] = -S::one();
    }
    for (i, &off) in offs.iter().enumerate() {
        let col0 = if i == 0 { 0 } else { n0 + offs[i - 1] };
        // entry (col0 + c, n0 + off + r) = beta * W[r, c] * lambda[off + r]
        for r in 0..dims[i + 1] {
            let s = sector.beta * lam[off + r];
            for c in 0..dims[i] {
                let v = w[i][(r, c)] * s;
                m[(col0 + c, n0 + off + r)] = v;
                m[(n0 + off + r, col0 + c)] = v;
            }
        }
    }
    let last = &w[w.len() - 1];
    let top = n0 + offs[offs.len() - 1];
    for r in 0..m_out {
        for c in 0..last.ncols() {
            m[(n0 + n + r, top + c)] = last[(r, c)];
            m[(top + c, n0 + n + r)] = last[(r, c)];
        }
    }
    Ok(m)
}

pub(crate) fn symmetrize<S: Scalar>(m: &mut DMatrix<S>) {
    let half = S::lit(0.5);
    for j in 0..m.ncols() {
        for i in 0..j {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
