use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{DataError, Dataset};
use crate::scalar::Scalar;

/// Additive input noise in normalized pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// `N(0, sigma^2)` per input coordinate.
    Gaussian { sigma: f64 },
    /// `U(-b, b)` per input coordinate.
    Uniform { b: f64 },
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian { .. } => "gaussian",
            NoiseKind::Uniform { .. } => "uniform",
        }
    }

    pub fn level(self) -> f64 {
        match self {
            NoiseKind::Gaussian { sigma } => sigma,
            NoiseKind::Uniform { b } => b,
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.level())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let level = self.kind.level();
        if !(level >= 0.0 && level.is_finite()) {
            return Err(DataError::Config(format!("noise level must be finite and >= 0, got {level}")));
        }
        Ok(())
    }
}

/// `n` raw noise draws (before clamping), a pure function of `spec`.
pub fn sample_noise(spec: &NoiseSpec, n: usize) -> Result<Vec<f64>, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(match spec.kind {
        NoiseKind::Gaussian { sigma } => {
            let d = Normal::new(0.0, sigma).expect("validated standard deviation");
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        NoiseKind::Uniform { b } => {
            let d = Uniform::new_inclusive(-b, b).expect("validated bound");
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
    })
}

/// Adds noise to every input coordinate (column-major order) and clamps to `[0, 1]`.
pub fn corrupt<S: Scalar>(ds: &Dataset<S>, spec: &NoiseSpec) -> Result<Dataset<S>, DataError> {
    let noise = sample_noise(spec, ds.inputs().len())?;
    let mut inputs = ds.inputs().clone();
    for (v, e) in inputs.iter_mut().zip(noise) {
        *v = (*v + S::lit(e)).max(S::zero()).min(S::one());
    }
    ds.with_inputs(inputs)
}
