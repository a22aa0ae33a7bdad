//! Model files.
//!
//! JSON document with four fields:
//!
//! ```json
//! {"activation": "tanh", "dims": [1, 2, 1],
//!  "weights": [[[-1.0], [-1.0]], [[-1.0, 1.0]]],
//!  "biases": [[-1.0, 1.0], [-0.5]]}
//! ```
//!
//! `weights[i]` lists the rows of `W^i`. Numbers are written as the shortest
//! decimal that parses back to the same `f64`, so save/load is exact for both
//! `f32` and `f64` networks.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Activation, Network, NnError};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    activation: Activation,
    dims: Vec<usize>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

pub fn to_model_json<S: Scalar>(net: &Network<S>) -> String {
    let file = ModelFile {
        activation: net.activation(),
        dims: net.dims().to_vec(),
        weights: net
            .weights()
            .iter()
            .map(|w| {
                w.row_iter()
                    .map(|r| r.iter().map(|v| v.to_f64_lossy()).collect())
                    .collect()
            })
            .collect(),
        biases: net
            .biases()
            .iter()
            .map(|b| b.iter().map(|v| v.to_f64_lossy()).collect())
            .collect(),
    };
    let mut text = serde_json::to_string(&file).expect("model serializes");
    text.push('\n');
    text
}

pub fn from_model_json<S: Scalar>(text: &str) -> Result<Network<S>, NnError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| NnError::Parse(e.to_string()))?;
    let dims = &file.dims;
    if dims.len() < 3 {
        return Err(NnError::Parse(format!("dims: need at least 3 entries, got {dims:?}")));
    }
    if file.weights.len() != dims.len() - 1 {
        return Err(NnError::Parse(format!(
            "weights: {} matrices for dims {dims:?}",
            file.weights.len()
        )));
    }
    if file.biases.len() != dims.len() - 1 {
        return Err(NnError::Parse(format!(
            "biases: {} vectors for dims {dims:?}",
            file.biases.len()
        )));
    }
    let mut weights = Vec::with_capacity(file.weights.len());
    for (i, rows) in file.weights.iter().enumerate() {
        let (r, c) = (dims[i + 1], dims[i]);
        if rows.len() != r || rows.iter().any(|row| row.len() != c) {
            return Err(NnError::Parse(format!(
                "weights[{i}]: expected {r}x{c} to match dims {dims:?}"
            )));
        }
        weights.push(DMatrix::from_fn(r, c, |a, b| S::lit(rows[a][b])));
    }
    let mut biases = Vec::with_capacity(file.biases.len());
    for (i, b) in file.biases.iter().enumerate() {
        if b.len() != dims[i + 1] {
            return Err(NnError::Parse(format!(
                "biases[{i}]: expected length {} to match dims {dims:?}",
                dims[i + 1]
            )));
        }
        biases.push(DVector::from_iterator(b.len(), b.iter().map(|&v| S::lit(v))));
    }
    Network::new(file.dims, weights, biases, file.activation)
        .map_err(|e| NnError::Parse(e.to_string()))
}

pub fn save_model<S: Scalar>(net: &Network<S>, path: impl AsRef<Path>) -> Result<(), NnError> {
    let path = path.as_ref();
    fs::write(path, to_model_json(net)).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))
}

pub fn load_model<S: Scalar>(path: impl AsRef<Path>) -> Result<Network<S>, NnError> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
    from_model_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::fixtures::cosine_network;
    use proptest::prelude::*;

    #[test]
    fn cosine_network_round_trips_exactly() {
        let net = cosine_network::<f64>();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cos.json");
        save_model(&net, &path).unwrap();
        let back: Network<f64> = load_model(&path).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn mismatched_dims_name_the_field() {
        let text = r#"{"activation":"tanh","dims":[1,3,1],
            "weights":[[[-1.0],[-1.0]],[[-1.0,1.0]]],"biases":[[-1.0,1.0],[-0.5]]}"#;
        let err = from_model_json::<f64>(text).unwrap_err().to_string();
        assert!(err.contains("weights[0]"), "{err}");
    }

    #[test]
    fn missing_and_unknown_fields_are_rejected() {
        let missing = r#"{"activation":"tanh","weights":[],"biases":[]}"#;
        assert!(from_model_json::<f64>(missing).unwrap_err().to_string().contains("dims"));
        let unknown = r#"{"activation":"tanh","dims":[1,1,1],"weights":[[[1.0]],[[1.0]]],
            "biases":[[0.0],[0.0]],"extra":1}"#;
        assert!(from_model_json::<f64>(unknown).unwrap_err().to_string().contains("extra"));
        let bad_act = r#"{"activation":"gelu","dims":[1,1,1],"weights":[[[1.0]],[[1.0]]],"biases":[[0.0],[0.0]]}"#;
        assert!(from_model_json::<f64>(bad_act).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(seed in 0u64..1000, hidden in 1usize..6, act in 0usize..3) {
            let net = Network::<f64>::glorot(&[3, hidden, 2], Activation::ALL[act], seed).unwrap();
            let scaled = net.with_weights(net.weights().iter().map(|w| w * 1.0e-3_f64.powi((seed % 7) as i32)).collect()).unwrap();
            prop_assert_eq!(from_model_json::<f64>(&to_model_json(&scaled)).unwrap(), scaled.clone());
            let single = Network::<f32>::glorot(&[3, hidden, 2], Activation::ALL[act], seed).unwrap();
            prop_assert_eq!(from_model_json::<f32>(&to_model_json(&single)).unwrap(), single);
        }
    }
}
