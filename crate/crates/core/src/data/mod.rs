//! Datasets, preprocessing, noise corruption and the three-model experiment.
//!
//! Inputs are stored one sample per column (`n0 x m`), the layout every
//! network routine consumes.

mod experiment;
mod mnist;
mod noise;

pub use experiment::{
    default_noise_levels, evaluate_noise, load_experiment_data, run_experiment, write_noise_csv, write_report_csv, ExperimentConfig,
    ExperimentError, ExperimentName, ExperimentReport, MnistConfig, ModelKind, ModelReport, NoisePoint, Toy2dConfig,
    NOISE_HEADER, REPORT_HEADER,
};
pub use mnist::{avg_pool, load_mnist, load_mnist_limited, parse_idx_images, parse_idx_labels, IdxImages};
pub use noise::{corrupt, sample_noise, NoiseKind, NoiseSpec};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

/// Where a dataset came from: a source tag plus the seed of any random stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMeta {
    pub source: String,
    pub seed: Option<u64>,
}

/// Labelled samples with inputs in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S: Scalar> {
    inputs: DMatrix<S>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
    meta: DatasetMeta,
}

impl<S: Scalar> Dataset<S> {
    /// Checks label range, finiteness and the sample count.
    pub fn new(
        inputs: DMatrix<S>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
        meta: DatasetMeta,
    ) -> Result<Self, DataError> {
        if labels.len() != inputs.ncols() {
            return Err(DataError::Invalid(format!("{} labels for {} samples", labels.len(), inputs.ncols())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::Invalid(format!("label {bad} outside [0, {num_classes})")));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite input".into()));
        }
        Ok(Self { inputs, labels, num_classes, split, meta })
    }

    pub fn inputs(&self) -> &DMatrix<S> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    /// Same labels and metadata with new inputs of the same sample count.
    pub fn with_inputs(&self, inputs: DMatrix<S>) -> Result<Self, DataError> {
        Self::new(inputs, self.labels.clone(), self.num_classes, self.split, self.meta.clone())
    }

    /// First `n` samples (all of them when `n >= len`).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            inputs: self.inputs.columns(0, n).into_owned(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
            split: self.split,
            meta: self.meta.clone(),
        }
    }
}

pub const GEN2D_CENTER: (f64, f64) = (0.5, 0.5);
pub const GEN2D_RADIUS: f64 = 0.3;
pub const GEN2D_STD: f64 = 0.12;
pub const GEN2D_ANGLES_DEG: [f64; 3] = [90.0, 210.0, 330.0];

/// Three-class 2D data in the unit square.
///
/// Class `c` is an isotropic Gaussian with standard deviation [`GEN2D_STD`]
/// around the point at angle [`GEN2D_ANGLES_DEG`]`[c]` on the circle of radius
/// [`GEN2D_RADIUS`] about [`GEN2D_CENTER`]; coordinates are clipped to `[0, 1]`.
/// Samples are ordered class by class. Train and test sets drawn with different
/// seeds are disjoint with probability one.
pub fn gen_2d<S: Scalar>(n_per_class: usize, seed: u64, split: Split) -> Result<Dataset<S>, DataError> {
    if n_per_class == 0 {
        return Err(DataError::Config("n_per_class must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, GEN2D_STD).expect("positive standard deviation");
    let m = 3 * n_per_class;
    let mut inputs = DMatrix::zeros(2, m);
    let mut labels = Vec::with_capacity(m);
    for (c, deg) in GEN2D_ANGLES_DEG.iter().enumerate() {
        let a = deg * PI / 180.0;
        let (cx, cy) = (GEN2D_CENTER.0 + GEN2D_RADIUS * a.cos(), GEN2D_CENTER.1 + GEN2D_RADIUS * a.sin());
        for i in 0..n_per_class {
            let j = c * n_per_class + i;
            let x: f64 = cx + normal.sample(&mut rng);
            let y: f64 = cy + normal.sample(&mut rng);
            inputs[(0, j)] = S::lit(x.clamp(0.0, 1.0));
            inputs[(1, j)] = S::lit(y.clamp(0.0, 1.0));
            labels.push(c);
        }
    }
    Dataset::new(inputs, labels, 3, split, DatasetMeta { source: "toy2d".into(), seed: Some(seed) })
}
