//! Training fully-connected networks under certified Lipschitz bounds.
//!
//! The crate is generic over the floating-point type through [`Scalar`]; the
//! `*64` / `*32` aliases below name the common instantiations.

pub mod admm;
pub mod cert;
pub mod data;
pub mod nn;
pub mod sdp;
pub mod scalar;

pub use scalar::Scalar;

pub type Network64 = nn::Network<f64>;
pub type Network32 = nn::Network<f32>;
