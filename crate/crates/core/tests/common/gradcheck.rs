//! Central-difference check of analytic loss gradients.

use lipnet::nn::{grad, loss, Activation, Augment, LossKind, Network, Targets};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

/// Worst `|analytic - fd| / (1 + |analytic|)` over one configuration.
pub struct Check {
    pub label: String,
    pub worst: f64,
    pub coordinates: usize,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= TOL
    }
}

/// Random net with random biases whose pre-activations all stay at least
/// `1e-3` away from zero on `inputs`, so the ReLU kink never falls inside
/// the difference stencil.
fn smooth_net(dims: &[usize], act: Activation, inputs: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Network<f64> {
    loop {
        let base = Network::<f64>::glorot(dims, act, rng.random()).unwrap();
        let biases = base.biases().iter().map(|b| DVector::from_fn(b.len(), |_, _| rng.random_range(-0.5..0.5))).collect();
        let net = base.with_parameters(base.weights().to_vec(), biases).unwrap();
        let cache = net.forward_cached(inputs).unwrap();
        if cache.pre_activations.iter().all(|z| z.iter().all(|v| v.abs() >= 1e-3)) {
            return net;
        }
    }
}

fn check_one(
    label: String,
    net: &Network<f64>,
    inputs: &DMatrix<f64>,
    targets: Targets<'_, f64>,
    kind: LossKind,
    l2: f64,
    augment: Option<&Augment<'_, f64>>,
) -> Check {
    let objective = |n: &Network<f64>| {
        let mut v = loss(n, inputs, targets, kind, l2).unwrap();
        if let Some(a) = augment {
            v += a.value(n).unwrap();
        }
        v
    };
    let g = grad(net, inputs, targets, kind, l2, augment).unwrap();
    let mut worst = 0.0f64;
    let mut coordinates = 0;
    for i in 0..net.weights().len() {
        let (r, c) = net.weights()[i].shape();
        for idx in 0..r * c {
            let shifted = |d: f64| {
                let mut w = net.weights().to_vec();
                w[i][idx] += d;
                objective(&net.with_weights(w).unwrap())
            };
            let fd = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
            let a = g.weights[i][idx];
            worst = worst.max((a - fd).abs() / (1.0 + a.abs()));
            coordinates += 1;
        }
        for idx in 0..net.biases()[i].len() {
            let shifted = |d: f64| {
                let mut b = net.biases().to_vec();
                b[i][idx] += d;
                objective(&net.with_parameters(net.weights().to_vec(), b).unwrap())
            };
            let fd = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
            let a = g.biases[i][idx];
            worst = worst.max((a - fd).abs() / (1.0 + a.abs()));
            coordinates += 1;
        }
    }
    Check { label, worst, coordinates }
}

/// Every activation and loss on 2-3-2 and 3-4-5-3 nets, with and without the
/// weight penalty and the augmented-Lagrangian terms.
pub fn run_suite(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for dims in [vec![2, 3, 2], vec![3, 4, 5, 3]] {
        let (n0, m) = (dims[0], 6);
        let n_out = dims[dims.len() - 1];
        for act in [Activation::Tanh, Activation::Relu, Activation::Sigmoid] {
            let inputs = DMatrix::from_fn(n0, m, |_, _| rng.random_range(-1.0..1.0));
            let net = smooth_net(&dims, act, &inputs, &mut rng);
            let classes: Vec<usize> = (0..m).map(|_| rng.random_range(0..n_out)).collect();
            let values = DMatrix::from_fn(n_out, m, |_, _| rng.random_range(-1.0..1.0));
            let y: Vec<DMatrix<f64>> =
                net.weights().iter().map(|w| DMatrix::from_fn(w.nrows(), w.ncols(), |_, _| rng.random_range(-0.5..0.5))).collect();
            let w_bar: Vec<DMatrix<f64>> =
                net.weights().iter().map(|w| w.map(|v| v + rng.random_range(-0.3..0.3))).collect();
            let aug = Augment { y: &y, w_bar: &w_bar, rho: 0.7 };
            for kind in [LossKind::CrossEntropy, LossKind::MeanSquaredError] {
                let targets = match kind {
                    LossKind::CrossEntropy => Targets::Classes(&classes),
                    LossKind::MeanSquaredError => Targets::Values(&values),
                };
                for (l2, augment) in [(0.0, None), (0.01, None), (0.0, Some(&aug))] {
                    let label = format!("{dims:?} {act:?} {kind:?} l2={l2} augmented={}", augment.is_some());
                    out.push(check_one(label, &net, &inputs, targets, kind, l2, augment));
                }
            }
        }
    }
    out
}
