use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss, loss_and_grad, Augment, LossKind, Targets};
use super::{Network, NnError};
use crate::scalar::Scalar;

/// Plain minibatch SGD settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig<S> {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: S,
    pub seed: u64,
    pub l2_lambda: S,
}

impl<S: Scalar> SgdConfig<S> {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.epochs == 0 {
            return Err(NnError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be at least 1".into()));
        }
        if self.learning_rate < S::zero() || !self.learning_rate.is_finite() {
            return Err(NnError::Config(format!(
                "learning_rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.l2_lambda < S::zero() {
            return Err(NnError::Config(format!(
                "l2_lambda must be nonnegative, got {}",
                self.l2_lambda
            )));
        }
        Ok(())
    }
}

fn batch_targets<'a, S: Scalar>(
    targets: Targets<'_, S>,
    idx: &[usize],
    labels: &'a mut Vec<usize>,
    values: &'a mut DMatrix<S>,
) -> Targets<'a, S> {
    match targets {
        Targets::Classes(all) => {
            labels.clear();
            labels.extend(idx.iter().map(|&i| all[i]));
            Targets::Classes(labels)
        }
        Targets::Values(all) => {
            *values = all.select_columns(idx);
            Targets::Values(values)
        }
    }
}

/// Trains with SGD and returns the network together with the full-data objective
/// (loss, L2 penalty and augmentation terms) measured after every epoch.
///
/// Samples are reshuffled each epoch with a Fisher-Yates shuffle seeded from
/// `cfg.seed`, so the result is a pure function of the arguments.
pub fn sgd_train_with_history<S: Scalar>(
    net: &Network<S>,
    inputs: &DMatrix<S>,
    targets: Targets<'_, S>,
    kind: LossKind,
    cfg: &SgdConfig<S>,
    augment: Option<&Augment<'_, S>>,
) -> Result<(Network<S>, Vec<S>), NnError> {
    cfg.validate()?;
    let m = inputs.ncols();
    if m == 0 || targets.len() != m {
        return Err(NnError::Data(format!("{} targets for {m} samples", targets.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..m).collect();
    let mut current = net.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut label_buf = Vec::with_capacity(cfg.batch_size);
    let mut value_buf = DMatrix::zeros(0, 0);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut weights = current.weights().to_vec();
        let mut biases = current.biases().to_vec();
        for chunk in order.chunks(cfg.batch_size) {
            let xb = inputs.select_columns(chunk);
            let tb = batch_targets(targets, chunk, &mut label_buf, &mut value_buf);
            let (value, g) = loss_and_grad(&current, &xb, tb, kind, cfg.l2_lambda, augment)?;
            if !value.is_finite() {
                return Err(NnError::Diverged { epoch });
            }
            let lr = cfg.learning_rate;
            for (w, gw) in weights.iter_mut().zip(&g.weights) {
                w.zip_apply(gw, |a, d| *a -= lr * d);
            }
            for (b, gb) in biases.iter_mut().zip(&g.biases) {
                b.zip_apply(gb, |a, d| *a -= lr * d);
            }
            current = current
                .with_parameters(weights.clone(), biases.clone())
                .map_err(|_| NnError::Diverged { epoch })?;
        }
        let mut objective = loss(&current, inputs, targets, kind, cfg.l2_lambda)?;
        if let Some(aug) = augment {
            objective += aug.value(&current)?;
        }
        if !objective.is_finite() {
            return Err(NnError::Diverged { epoch });
        }
        history.push(objective);
    }
    Ok((current, history))
}

pub fn sgd_train<S: Scalar>(
    net: &Network<S>,
    inputs: &DMatrix<S>,
    targets: Targets<'_, S>,
    kind: LossKind,
    cfg: &SgdConfig<S>,
    augment: Option<&Augment<'_, S>>,
) -> Result<Network<S>, NnError> {
    sgd_train_with_history(net, inputs, targets, kind, cfg, augment).map(|(n, _)| n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{accuracy, Activation};
    use rand::Rng;

    fn xor_data(seed: u64, n: usize) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(2, n);
        let mut labels = Vec::with_capacity(n);
        for j in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            x[(0, j)] = a;
            x[(1, j)] = b;
            labels.push(usize::from(a * b > 0.0));
        }
        (x, labels)
    }

    fn cfg(epochs: usize, lr: f64) -> SgdConfig<f64> {
        SgdConfig { epochs, batch_size: 16, learning_rate: lr, seed: 7, l2_lambda: 0.0 }
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let net = Network::<f64>::glorot(&[2, 8, 2], Activation::Tanh, 1).unwrap();
        let (x, y) = xor_data(1, 64);
        let out = sgd_train(&net, &x, Targets::Classes(&y), LossKind::CrossEntropy, &cfg(1, 0.0), None)
            .unwrap();
        assert_eq!(out, net);
    }

    #[test]
    fn training_is_deterministic() {
        let net = Network::<f64>::glorot(&[2, 8, 2], Activation::Tanh, 1).unwrap();
        let (x, y) = xor_data(1, 64);
        let run = || {
            sgd_train(&net, &x, Targets::Classes(&y), LossKind::CrossEntropy, &cfg(5, 0.1), None)
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn learns_xor_quadrants() {
        let net = Network::<f64>::glorot(&[2, 8, 2], Activation::Tanh, 2).unwrap();
        let (x, y) = xor_data(3, 200);
        let trained =
            sgd_train(&net, &x, Targets::Classes(&y), LossKind::CrossEntropy, &cfg(500, 0.1), None)
                .unwrap();
        let acc = accuracy(&trained, &x, &y).unwrap();
        assert!(acc >= 0.95, "training accuracy {acc}");
    }

    #[test]
    fn divergence_names_the_epoch() {
        let net = Network::<f64>::glorot(&[1, 4, 1], Activation::Relu, 2).unwrap();
        let x = DMatrix::from_fn(1, 32, |_, c| c as f64);
        let y = DMatrix::from_fn(1, 32, |_, c| 1e3 * c as f64);
        let r = sgd_train(&net, &x, Targets::Values(&y), LossKind::MeanSquaredError, &cfg(500, 10.0), None);
        assert!(matches!(r, Err(NnError::Diverged { .. })), "{r:?}");
    }

    #[test]
    fn rejects_zero_epochs() {
        let net = Network::<f64>::glorot(&[2, 3, 2], Activation::Tanh, 1).unwrap();
        let (x, y) = xor_data(1, 8);
        let r = sgd_train(&net, &x, Targets::Classes(&y), LossKind::CrossEntropy, &cfg(0, 0.1), None);
        assert!(matches!(r, Err(NnError::Config(_))));
    }

    #[test]
    fn single_precision_training_runs() {
        let net = Network::<f32>::glorot(&[2, 8, 2], Activation::Tanh, 2).unwrap();
        let (x, y) = xor_data(3, 100);
        let x = x.map(|v| v as f32);
        let c = SgdConfig { epochs: 200, batch_size: 16, learning_rate: 0.1f32, seed: 7, l2_lambda: 0.0 };
        let trained = sgd_train(&net, &x, Targets::Classes(&y), LossKind::CrossEntropy, &c, None).unwrap();
        assert!(accuracy(&trained, &x, &y).unwrap() > 0.9);
    }
}
