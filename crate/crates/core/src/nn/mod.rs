//! Fully-connected networks: evaluation, losses, backpropagation and SGD.

mod activation;
mod io;
mod loss;
mod network;
mod sgd;

pub use activation::{Activation, Sector};
pub use io::{from_model_json, load_model, save_model, to_model_json};
pub use loss::{accuracy, grad, loss, loss_and_grad, predict, Augment, Gradient, LossKind, Targets};
pub use network::{ForwardCache, Network};
pub use sgd::{sgd_train, sgd_train_with_history, SgdConfig};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite parameter in {0}")]
    NonFinite(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("model parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Small reference networks used across modules and tests.
pub mod fixtures {
    use nalgebra::{DMatrix, DVector};

    use super::{Activation, Network};
    use crate::scalar::{lit, Scalar};

    /// 1-2-1 tanh network approximating `cos` on `[-pi/2, pi/2]`.
    pub fn cosine_network<S: Scalar>() -> Network<S> {
        Network::new(
            vec![1, 2, 1],
            vec![
                DMatrix::from_row_slice(2, 1, &[lit(-1.0), lit(-1.0)]),
                DMatrix::from_row_slice(1, 2, &[lit(-1.0), lit(1.0)]),
            ],
            vec![
                DVector::from_vec(vec![lit(-1.0), lit(1.0)]),
                DVector::from_vec(vec![lit(-0.5)]),
            ],
            Activation::Tanh,
        )
        .expect("fixture shapes are consistent")
    }
}
