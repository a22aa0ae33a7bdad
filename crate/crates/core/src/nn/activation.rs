use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Scalar};

/// Slope-restricted scalar activation applied elementwise in hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

/// Slope bounds `alpha <= (phi(x) - phi(y)) / (x - y) <= beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector<S> {
    pub alpha: S,
    pub beta: S,
}

impl<S: Scalar> Sector<S> {
    pub fn new(alpha: S, beta: S) -> Self {
        debug_assert!(alpha >= S::zero() && alpha < beta);
        Self { alpha, beta }
    }
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Tanh, Activation::Relu, Activation::Sigmoid];

    /// Tightest sector with `alpha = 0`.
    pub fn sector<S: Scalar>(self) -> Sector<S> {
        match self {
            Activation::Tanh | Activation::Relu => Sector::new(S::zero(), S::one()),
            Activation::Sigmoid => Sector::new(S::zero(), lit(0.25)),
        }
    }

    pub fn beta<S: Scalar>(self) -> S {
        self.sector::<S>().beta
    }

    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > S::zero() {
                    x
                } else {
                    S::zero()
                }
            }
            Activation::Sigmoid => S::one() / (S::one() + (-x).exp()),
        }
    }

    /// Derivative at `x`; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                S::one() - t * t
            }
            Activation::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Sigmoid => {
                let s = self.apply(x);
                s * (S::one() - s)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}
