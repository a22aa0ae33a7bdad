use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Activation, NnError};
use crate::scalar::{lit, Scalar};

/// Fully-connected feed-forward network with `l >= 1` hidden layers.
///
/// `weights[i]` maps layer `i` (width `dims[i]`) to layer `i + 1`. Hidden layers
/// apply `activation`; the output layer is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<S: Scalar> {
    dims: Vec<usize>,
    weights: Vec<DMatrix<S>>,
    biases: Vec<DVector<S>>,
    activation: Activation,
}

/// Per-layer values recorded during a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<S: Scalar> {
    /// `activations[0]` is the input batch, `activations[i]` the post-activation of hidden layer `i`.
    pub activations: Vec<DMatrix<S>>,
    /// Pre-activations of hidden layers `1..=l`.
    pub pre_activations: Vec<DMatrix<S>>,
    /// Network output, one column per sample.
    pub output: DMatrix<S>,
}

impl<S: Scalar> Network<S> {
    pub fn new(
        dims: Vec<usize>,
        weights: Vec<DMatrix<S>>,
        biases: Vec<DVector<S>>,
        activation: Activation,
    ) -> Result<Self, NnError> {
        if dims.len() < 3 {
            return Err(NnError::Shape(format!(
                "need at least one hidden layer, got dims {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(NnError::Shape(format!("zero-width layer in dims {dims:?}")));
        }
        let layers = dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(NnError::Shape(format!(
                "dims {dims:?} imply {layers} layers, got {} weights and {} biases",
                weights.len(),
                biases.len()
            )));
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.shape() != (dims[i + 1], dims[i]) {
                return Err(NnError::Shape(format!(
                    "weights[{i}] is {}x{}, expected {}x{}",
                    w.nrows(),
                    w.ncols(),
                    dims[i + 1],
                    dims[i]
                )));
            }
            if b.len() != dims[i + 1] {
                return Err(NnError::Shape(format!(
                    "biases[{i}] has length {}, expected {}",
                    b.len(),
                    dims[i + 1]
                )));
            }
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(format!("layer {i}")));
            }
        }
        Ok(Self { dims, weights, biases, activation })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(dims: &[usize], activation: Activation, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite Glorot limit");
            // Row-major fill so the draw order does not depend on storage layout.
            let mut w = DMatrix::<S>::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    w[(r, c)] = lit(dist.sample(&mut rng));
                }
            }
            weights.push(w);
            biases.push(DVector::zeros(fan_out));
        }
        Self::new(dims.to_vec(), weights, biases, activation)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[DMatrix<S>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<S>] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("validated dims")
    }

    /// Number of hidden layers `l`.
    pub fn hidden_layers(&self) -> usize {
        self.dims.len() - 2
    }

    /// Total hidden neurons `n = n_1 + ... + n_l`.
    pub fn hidden_neurons(&self) -> usize {
        self.dims[1..self.dims.len() - 1].iter().sum()
    }

    pub fn weight_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// Replace all weight matrices, keeping biases.
    pub fn with_weights(&self, weights: Vec<DMatrix<S>>) -> Result<Self, NnError> {
        Self::new(self.dims.clone(), weights, self.biases.clone(), self.activation)
    }

    pub fn with_parameters(
        &self,
        weights: Vec<DMatrix<S>>,
        biases: Vec<DVector<S>>,
    ) -> Result<Self, NnError> {
        Self::new(self.dims.clone(), weights, biases, self.activation)
    }

    /// Evaluate the network on a single input.
    pub fn forward(&self, x: &DVector<S>) -> Result<DVector<S>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &h + b;
            if i < last {
                z.apply(|v| *v = self.activation.apply(*v));
            }
            h = z;
        }
        Ok(h)
    }

    /// Evaluate on a batch whose columns are samples.
    pub fn forward_batch(&self, inputs: &DMatrix<S>) -> Result<DMatrix<S>, NnError> {
        Ok(self.forward_cached(inputs)?.output)
    }

    pub fn forward_cached(&self, inputs: &DMatrix<S>) -> Result<ForwardCache<S>, NnError> {
        if inputs.nrows() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "batch rows {} differ from network input dim {}",
                inputs.nrows(),
                self.input_dim()
            )));
        }
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len());
        let mut pre_activations = Vec::with_capacity(last);
        activations.push(inputs.clone());
        let mut output = DMatrix::zeros(0, 0);
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * activations.last().expect("input pushed");
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if i < last {
                let a = z.map(|v| self.activation.apply(v));
                pre_activations.push(z);
                activations.push(a);
            } else {
                output = z;
            }
        }
        Ok(ForwardCache { activations, pre_activations, output })
    }

    /// Input-output Jacobian at `x`, accumulated in reverse from the output layer.
    pub fn jacobian(&self, x: &DVector<S>) -> Result<DMatrix<S>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let l = self.hidden_layers();
        let mut slopes = Vec::with_capacity(l);
        let mut h = x.clone();
        for i in 0..l {
            let z = &self.weights[i] * &h + &self.biases[i];
            slopes.push(z.map(|v| self.activation.derivative(v)));
            h = z.map(|v| self.activation.apply(v));
        }
        let mut jac = self.weights[l].clone();
        for i in (0..l).rev() {
            for (c, d) in slopes[i].iter().enumerate() {
                let mut col = jac.column_mut(c);
                col *= *d;
            }
            jac = &jac * &self.weights[i];
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::fixtures::cosine_network;

    #[test]
    fn zero_weight_network_outputs_last_bias() {
        let dims = vec![3, 4, 2];
        let weights = vec![DMatrix::zeros(4, 3), DMatrix::zeros(2, 4)];
        let biases = vec![DVector::from_element(4, 0.3), DVector::from_vec(vec![1.5, -2.0])];
        let net = Network::<f64>::new(dims, weights, biases, Activation::Tanh).unwrap();
        for x in [[0.0, 0.0, 0.0], [5.0, -1.0, 2.0]] {
            let y = net.forward(&DVector::from_row_slice(&x)).unwrap();
            assert_eq!(y.as_slice(), &[1.5, -2.0]);
        }
    }

    #[test]
    fn cosine_network_at_origin() {
        let net = cosine_network::<f64>();
        let y = net.forward(&DVector::from_element(1, 0.0)).unwrap();
        let expected = -1.0 * (-1.0f64).tanh() + 1.0f64.tanh() - 0.5;
        assert!((y[0] - expected).abs() < 1e-12);
        assert!((y[0] - 1.02319).abs() < 1e-5);
    }

    #[test]
    fn cosine_network_tracks_cosine() {
        let net = cosine_network::<f64>();
        let n = 10_000;
        let half_pi = std::f64::consts::FRAC_PI_2;
        let max_dev = (0..n)
            .map(|k| {
                let x = -half_pi + 2.0 * half_pi * k as f64 / (n - 1) as f64;
                let y = net.forward(&DVector::from_element(1, x)).unwrap()[0];
                (y - x.cos()).abs()
            })
            .fold(0.0, f64::max);
        assert!((max_dev - 0.0843).abs() < 5e-3, "max deviation {max_dev}");
    }

    #[test]
    fn shape_errors_are_reported() {
        let net = cosine_network::<f64>();
        assert!(matches!(net.forward(&DVector::zeros(2)), Err(NnError::Shape(_))));
        let bad = Network::<f64>::new(
            vec![1, 2, 1],
            vec![DMatrix::zeros(2, 2), DMatrix::zeros(1, 2)],
            vec![DVector::zeros(2), DVector::zeros(1)],
            Activation::Tanh,
        );
        assert!(matches!(bad, Err(NnError::Shape(_))));
        let no_hidden = Network::<f64>::new(
            vec![1, 1],
            vec![DMatrix::zeros(1, 1)],
            vec![DVector::zeros(1)],
            Activation::Tanh,
        );
        assert!(no_hidden.is_err());
    }

    #[test]
    fn batch_forward_matches_single() {
        let net = Network::<f64>::glorot(&[3, 5, 4, 2], Activation::Sigmoid, 3).unwrap();
        let batch = DMatrix::from_fn(3, 7, |r, c| (r as f64 - c as f64) * 0.3);
        let out = net.forward_batch(&batch).unwrap();
        for c in 0..7 {
            let single = net.forward(&batch.column(c).into_owned()).unwrap();
            assert!((out.column(c) - single).norm() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let net = Network::<f64>::glorot(&[3, 4, 4, 2], Activation::Tanh, 5).unwrap();
        let x = DVector::from_vec(vec![0.2, -0.4, 0.7]);
        let jac = net.jacobian(&x).unwrap();
        let h = 1e-6;
        for c in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let fd = (net.forward(&xp).unwrap() - net.forward(&xm).unwrap()) / (2.0 * h);
            assert!((jac.column(c) - fd).norm() < 1e-7);
        }
    }

    #[test]
    fn glorot_is_seeded() {
        let a = Network::<f32>::glorot(&[4, 6, 3], Activation::Relu, 9).unwrap();
        let b = Network::<f32>::glorot(&[4, 6, 3], Activation::Relu, 9).unwrap();
        let c = Network::<f32>::glorot(&[4, 6, 3], Activation::Relu, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
