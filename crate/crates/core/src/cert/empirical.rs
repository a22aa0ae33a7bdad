//! Sampling-based lower bounds on the Lipschitz constant.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CertError;
use crate::nn::Network;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Sampler<S: Scalar> {
    pub num_pairs: usize,
    pub num_grad_points: usize,
    /// Per-coordinate `(lower, upper)` bounds of the input box.
    pub input_box: Vec<(S, S)>,
    pub seed: u64,
}

impl<S: Scalar> Sampler<S> {
    /// Same interval in every input coordinate.
    pub fn cube(dim: usize, lo: S, hi: S, num_pairs: usize, num_grad_points: usize, seed: u64) -> Self {
        Self { num_pairs, num_grad_points, input_box: vec![(lo, hi); dim], seed }
    }
}

fn uniform_point<S: Scalar>(rng: &mut ChaCha8Rng, bounds: &[(S, S)]) -> DVector<S> {
    DVector::from_iterator(
        bounds.len(),
        bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * S::lit(rng.random::<f64>())),
    )
}

/// Largest observed slope: pair quotients `|f(x) - f(y)| / |x - y|` and Jacobian spectral norms.
///
/// Gradient points are split between a regular grid (when the input dimension
/// allows at least two points per axis) and uniform random draws.
pub fn empirical_lower_bound<S: Scalar>(net: &Network<S>, sampler: &Sampler<S>) -> Result<S, CertError> {
    let n0 = net.input_dim();
    if sampler.input_box.len() != n0 {
        return Err(CertError::Sampling(format!("box has {} coordinates, network input has {n0}", sampler.input_box.len())));
    }
    if let Some(i) = sampler.input_box.iter().position(|&(lo, hi)| !(hi > lo) || !lo.is_finite() || !hi.is_finite()) {
        return Err(CertError::Sampling(format!("input box is degenerate in coordinate {i}")));
    }
    if sampler.num_pairs == 0 || sampler.num_grad_points == 0 {
        return Err(CertError::Sampling("sample counts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut best = S::zero();

    let mut points: Vec<DVector<S>> = Vec::with_capacity(sampler.num_grad_points);
    let per_axis = ((sampler.num_grad_points / 2) as f64).powf(1.0 / n0 as f64).floor() as usize;
    if per_axis >= 2 {
        let total = per_axis.pow(n0 as u32);
        for idx in 0..total {
            let mut rem = idx;
            points.push(DVector::from_iterator(
                n0,
                sampler.input_box.iter().map(|&(lo, hi)| {
                    let k = rem % per_axis;
                    rem /= per_axis;
                    lo + (hi - lo) * S::from_usize_lossy(k) / S::from_usize_lossy(per_axis - 1)
                }),
            ));
        }
    }
    while points.len() < sampler.num_grad_points {
        points.push(uniform_point(&mut rng, &sampler.input_box));
    }
    for x in &points {
        let j = net.jacobian(x)?;
        best = best.max(spectral_norm(j));
    }

    for _ in 0..sampler.num_pairs {
        let x = uniform_point(&mut rng, &sampler.input_box);
        let y = uniform_point(&mut rng, &sampler.input_box);
        let dx = (&x - &y).norm();
        if dx <= S::zero() {
            continue;
        }
        let df = (net.forward(&x)? - net.forward(&y)?).norm();
        best = best.max(df / dx);
    }
    Ok(best)
}

fn spectral_norm<S: Scalar>(j: DMatrix<S>) -> S {
    j.singular_values().iter().fold(S::zero(), |a, &b| a.max(b))
}
