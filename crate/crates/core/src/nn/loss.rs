use nalgebra::{DMatrix, DVector};

use super::{Network, NnError};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Softmax over logits fused with negative log-likelihood.
    CrossEntropy,
    /// Mean over output coordinates of the squared error.
    MeanSquaredError,
}

/// Supervision for a batch whose columns are samples.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a, S: Scalar> {
    Classes(&'a [usize]),
    /// One column per sample, `n_out` rows.
    Values(&'a DMatrix<S>),
}

impl<S: Scalar> Targets<'_, S> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.ncols(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Augmented-Lagrangian coupling `sum_i <Y^i, W^i - Wbar^i> + rho/2 ||W^i - Wbar^i||_F^2`.
///
/// `y[i]` has the same shape as `W^i`.
#[derive(Debug, Clone, Copy)]
pub struct Augment<'a, S: Scalar> {
    pub y: &'a [DMatrix<S>],
    pub w_bar: &'a [DMatrix<S>],
    pub rho: S,
}

impl<S: Scalar> Augment<'_, S> {
    fn check(&self, net: &Network<S>) -> Result<(), NnError> {
        if self.rho <= S::zero() {
            return Err(NnError::Config(format!("rho must be positive, got {}", self.rho)));
        }
        let weights = net.weights();
        if self.y.len() != weights.len() || self.w_bar.len() != weights.len() {
            return Err(NnError::Shape(format!(
                "augmentation has {} multipliers and {} consensus matrices for {} layers",
                self.y.len(),
                self.w_bar.len(),
                weights.len()
            )));
        }
        for (i, w) in weights.iter().enumerate() {
            if self.y[i].shape() != w.shape() || self.w_bar[i].shape() != w.shape() {
                return Err(NnError::Shape(format!(
                    "augmentation layer {i}: Y {:?}, Wbar {:?}, W {:?}",
                    self.y[i].shape(),
                    self.w_bar[i].shape(),
                    w.shape()
                )));
            }
        }
        Ok(())
    }

    /// Value of the coupling terms at the network's weights.
    pub fn value(&self, net: &Network<S>) -> Result<S, NnError> {
        self.check(net)?;
        let mut total = S::zero();
        for ((w, y), wb) in net.weights().iter().zip(self.y).zip(self.w_bar) {
            let diff = w - wb;
            total += y.dot(&diff) + self.rho * lit(0.5) * diff.norm_squared();
        }
        Ok(total)
    }
}

/// Gradient with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<S: Scalar> {
    pub weights: Vec<DMatrix<S>>,
    pub biases: Vec<DVector<S>>,
}

fn check_targets<S: Scalar>(
    net: &Network<S>,
    inputs: &DMatrix<S>,
    targets: Targets<'_, S>,
    kind: LossKind,
) -> Result<(), NnError> {
    if inputs.ncols() == 0 {
        return Err(NnError::Data("empty batch".into()));
    }
    if targets.len() != inputs.ncols() {
        return Err(NnError::Data(format!(
            "{} targets for {} samples",
            targets.len(),
            inputs.ncols()
        )));
    }
    match targets {
        Targets::Classes(labels) => {
            let n_out = net.output_dim();
            if let Some((idx, &bad)) = labels.iter().enumerate().find(|(_, &c)| c >= n_out) {
                return Err(NnError::Data(format!(
                    "label {bad} at sample {idx} outside [0, {n_out})"
                )));
            }
        }
        Targets::Values(v) => {
            if kind == LossKind::CrossEntropy {
                return Err(NnError::Data("cross entropy needs class labels".into()));
            }
            if v.nrows() != net.output_dim() {
                return Err(NnError::Shape(format!(
                    "targets have {} rows, network outputs {}",
                    v.nrows(),
                    net.output_dim()
                )));
            }
        }
    }
    Ok(())
}

/// Returns the summed per-sample loss and, optionally, its gradient with respect to the outputs.
fn data_term<S: Scalar>(
    output: &DMatrix<S>,
    targets: Targets<'_, S>,
    kind: LossKind,
    want_grad: bool,
) -> (S, Option<DMatrix<S>>) {
    let (n_out, m) = output.shape();
    let mut total = S::zero();
    let mut grad = want_grad.then(|| DMatrix::zeros(n_out, m));
    match kind {
        LossKind::CrossEntropy => {
            let Targets::Classes(labels) = targets else {
                unreachable!("checked by check_targets")
            };
            for (j, col) in output.column_iter().enumerate() {
                let peak = col.max();
                let sum_exp = col.iter().fold(S::zero(), |acc, &z| acc + (z - peak).exp());
                let log_norm = peak + sum_exp.ln();
                total += log_norm - col[labels[j]];
                if let Some(g) = grad.as_mut() {
                    for r in 0..n_out {
                        g[(r, j)] = (col[r] - log_norm).exp();
                    }
                    g[(labels[j], j)] -= S::one();
                }
            }
        }
        LossKind::MeanSquaredError => {
            let scale = S::one() / S::from_usize_lossy(n_out);
            for (j, col) in output.column_iter().enumerate() {
                for r in 0..n_out {
                    let target = match targets {
                        Targets::Classes(labels) => {
                            if labels[j] == r {
                                S::one()
                            } else {
                                S::zero()
                            }
                        }
                        Targets::Values(v) => v[(r, j)],
                    };
                    let e = col[r] - target;
                    total += scale * e * e;
                    if let Some(g) = grad.as_mut() {
                        g[(r, j)] = lit::<S>(2.0) * scale * e;
                    }
                }
            }
        }
    }
    (total, grad)
}

fn l2_penalty<S: Scalar>(net: &Network<S>, l2_lambda: S) -> S {
    if l2_lambda == S::zero() {
        return S::zero();
    }
    l2_lambda * net.weights().iter().fold(S::zero(), |acc, w| acc + w.norm_squared())
}

/// Mean per-sample loss plus `l2_lambda * sum ||W^i||_F^2` (biases excluded).
pub fn loss<S: Scalar>(
    net: &Network<S>,
    inputs: &DMatrix<S>,
    targets: Targets<'_, S>,
    kind: LossKind,
    l2_lambda: S,
) -> Result<S, NnError> {
    if l2_lambda < S::zero() {
        return Err(NnError::Config(format!("l2_lambda must be nonnegative, got {l2_lambda}")));
    }
    check_targets(net, inputs, targets, kind)?;
    let output = net.forward_batch(inputs)?;
    let (total, _) = data_term(&output, targets, kind, false);
    Ok(total / S::from_usize_lossy(inputs.ncols()) + l2_penalty(net, l2_lambda))
}

/// Gradient of [`loss`] plus, when `augment` is given, `Y^i + rho (W^i - Wbar^i)` on each weight.
pub fn grad<S: Scalar>(
    net: &Network<S>,
    inputs: &DMatrix<S>,
    targets: Targets<'_, S>,
    kind: LossKind,
    l2_lambda: S,
    augment: Option<&Augment<'_, S>>,
) -> Result<Gradient<S>, NnError> {
    Ok(loss_and_grad(net, inputs, targets, kind, l2_lambda, augment)?.1)
}

/// Loss (without augmentation terms) and gradient in one pass.
pub fn loss_and_grad<S: Scalar>(
    net: &Network<S>,
    inputs: &DMatrix<S>,
    targets: Targets<'_, S>,
    kind: LossKind,
    l2_lambda: S,
    augment: Option<&Augment<'_, S>>,
) -> Result<(S, Gradient<S>), NnError> {
    if l2_lambda < S::zero() {
        return Err(NnError::Config(format!("l2_lambda must be nonnegative, got {l2_lambda}")));
    }
    check_targets(net, inputs, targets, kind)?;
    if let Some(aug) = augment {
        aug.check(net)?;
    }
    let m = S::from_usize_lossy(inputs.ncols());
    let cache = net.forward_cached(inputs)?;
    let (total, delta) = data_term(&cache.output, targets, kind, true);
    let mut delta = delta.expect("gradient requested") / m;

    let layers = net.weights().len();
    let mut g_w = vec![DMatrix::zeros(0, 0); layers];
    let mut g_b = vec![DVector::zeros(0); layers];
    for i in (0..layers).rev() {
        g_w[i] = &delta * cache.activations[i].transpose();
        g_b[i] = delta.column_sum();
        if i > 0 {
            let mut back = net.weights()[i].transpose() * &delta;
            let act = net.activation();
            back.zip_apply(&cache.pre_activations[i - 1], |d, z| *d *= act.derivative(z));
            delta = back;
        }
    }
    if l2_lambda > S::zero() {
        for (g, w) in g_w.iter_mut().zip(net.weights()) {
            *g += w * (lit::<S>(2.0) * l2_lambda);
        }
    }
    if let Some(aug) = augment {
        for (i, g) in g_w.iter_mut().enumerate() {
            *g += &aug.y[i] + (&net.weights()[i] - &aug.w_bar[i]) * aug.rho;
        }
    }
    let value = total / m + l2_penalty(net, l2_lambda);
    Ok((value, Gradient { weights: g_w, biases: g_b }))
}

/// Index of the largest output per sample.
pub fn predict<S: Scalar>(net: &Network<S>, inputs: &DMatrix<S>) -> Result<Vec<usize>, NnError> {
    let out = net.forward_batch(inputs)?;
    Ok(out.column_iter().map(|c| c.argmax().0).collect())
}

/// Fraction of samples whose arg-max output equals the label.
pub fn accuracy<S: Scalar>(
    net: &Network<S>,
    inputs: &DMatrix<S>,
    labels: &[usize],
) -> Result<f64, NnError> {
    if labels.len() != inputs.ncols() || labels.is_empty() {
        return Err(NnError::Data(format!(
            "{} labels for {} samples",
            labels.len(),
            inputs.ncols()
        )));
    }
    let pred = predict(net, inputs)?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n0: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n0, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn uniform_logits_give_log_class_count() {
        let c = 4;
        let dims = vec![2, 3, c];
        let net = Network::<f64>::new(
            dims,
            vec![DMatrix::zeros(3, 2), DMatrix::zeros(c, 3)],
            vec![DVector::zeros(3), DVector::from_element(c, 0.7)],
            Activation::Tanh,
        )
        .unwrap();
        let x = random_batch(2, 5, 1);
        let labels = [0, 1, 2, 3, 1];
        let v = loss(&net, &x, Targets::Classes(&labels), LossKind::CrossEntropy, 0.0).unwrap();
        assert!((v - (c as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn frobenius_penalty_arithmetic() {
        // Output bias reproduces the target exactly, so only the penalty remains.
        let net = Network::<f64>::new(
            vec![1, 2, 1],
            vec![DMatrix::from_row_slice(2, 1, &[3.0, 4.0]), DMatrix::zeros(1, 2)],
            vec![DVector::zeros(2), DVector::from_element(1, 0.5)],
            Activation::Relu,
        )
        .unwrap();
        let x = DMatrix::from_element(1, 3, 0.2);
        let y = DMatrix::from_element(1, 3, 0.5);
        let with = loss(&net, &x, Targets::Values(&y), LossKind::MeanSquaredError, 1.0).unwrap();
        let without = loss(&net, &x, Targets::Values(&y), LossKind::MeanSquaredError, 0.0).unwrap();
        assert_eq!(without, 0.0);
        assert!((with - 25.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_labels_are_data_errors() {
        let net = Network::<f64>::glorot(&[2, 3, 2], Activation::Tanh, 0).unwrap();
        let x = random_batch(2, 2, 0);
        let r = loss(&net, &x, Targets::Classes(&[0, 2]), LossKind::CrossEntropy, 0.0);
        assert!(matches!(r, Err(NnError::Data(_))));
    }

    #[test]
    fn augment_with_zero_multiplier_at_consensus_is_plain_gradient() {
        let net = Network::<f64>::glorot(&[2, 3, 2], Activation::Tanh, 4).unwrap();
        let x = random_batch(2, 6, 2);
        let labels = [0, 1, 1, 0, 1, 0];
        let t = Targets::Classes(&labels);
        let zeros: Vec<_> = net.weights().iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        let aug = Augment { y: &zeros, w_bar: net.weights(), rho: 0.7 };
        let plain = grad(&net, &x, t, LossKind::CrossEntropy, 0.0, None).unwrap();
        let augmented = grad(&net, &x, t, LossKind::CrossEntropy, 0.0, Some(&aug)).unwrap();
        assert_eq!(plain, augmented);
    }

    #[test]
    fn proximal_term_gradient_is_the_offset() {
        // Zero weights and a bias that fits the targets: the data term has zero gradient.
        let net = Network::<f64>::new(
            vec![2, 3, 1],
            vec![DMatrix::zeros(3, 2), DMatrix::zeros(1, 3)],
            vec![DVector::zeros(3), DVector::from_element(1, 0.25)],
            Activation::Tanh,
        )
        .unwrap();
        let x = random_batch(2, 4, 3);
        let y = DMatrix::from_element(1, 4, 0.25);
        let deltas = vec![
            DMatrix::from_fn(3, 2, |r, c| 0.1 * (r as f64 + 1.0) - 0.2 * c as f64),
            DMatrix::from_fn(1, 3, |_, c| c as f64 - 1.0),
        ];
        let w_bar: Vec<_> = net.weights().iter().zip(&deltas).map(|(w, d)| w - d).collect();
        let zeros: Vec<_> = deltas.iter().map(|d| DMatrix::zeros(d.nrows(), d.ncols())).collect();
        let aug = Augment { y: &zeros, w_bar: &w_bar, rho: 1.0 };
        let g = grad(&net, &x, Targets::Values(&y), LossKind::MeanSquaredError, 0.0, Some(&aug)).unwrap();
        for (gw, d) in g.weights.iter().zip(&deltas) {
            assert!((gw - d).norm() < 1e-15);
        }
    }

    #[test]
    fn augment_shape_mismatch_is_rejected() {
        let net = Network::<f64>::glorot(&[2, 3, 2], Activation::Tanh, 4).unwrap();
        let x = random_batch(2, 2, 2);
        let y = vec![DMatrix::zeros(3, 2)];
        let aug = Augment { y: &y, w_bar: &y, rho: 1.0 };
        let r = grad(&net, &x, Targets::Classes(&[0, 1]), LossKind::CrossEntropy, 0.0, Some(&aug));
        assert!(matches!(r, Err(NnError::Shape(_))));
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let net = Network::<f64>::new(
            vec![2, 2, 2],
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            vec![DVector::zeros(2), DVector::zeros(2)],
            Activation::Relu,
        )
        .unwrap();
        let x = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 2.0, 0.5]);
        assert_eq!(accuracy(&net, &x, &[0, 1, 1]).unwrap(), 2.0 / 3.0);
    }
}
