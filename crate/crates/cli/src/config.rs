//! TOML run configuration. Every key is optional and falls back to the
//! experiment defaults of the selected dataset; unknown keys are errors.
//!
//! ```toml
//! seed = 1
//! dataset = "toy2d"          # toy2d | mnist
//!
//! [network]
//! hidden = [10, 10]
//! activation = "tanh"        # tanh | relu | sigmoid
//!
//! [train]                    # nominal and L2 models
//! epochs = 3000
//! batch_size = 30
//! learning_rate = 0.1
//! l2_lambda = 4e-3
//!
//! [admm]                     # Lipschitz-regularized and -enforced models
//! rho = 0.25
//! mu = 3e-4
//! l_des = 10.0               # required by lip-enforce
//! outer_iters = 50
//! inner_epochs = 20
//! learning_rate = 0.05
//! t_floor = 1e-6
//!
//! [toy2d]
//! n_per_class_train = 100
//! n_per_class_test = 300
//!
//! [mnist]
//! dir = "data/mnist"         # overridden by LIPNET_MNIST_DIR
//! n_train = 10000
//! n_test = 10000
//! pool = true
//!
//! [noise]
//! levels = [0.05, 0.1]
//! ```

use std::path::{Path, PathBuf};

use lipnet::data::{ExperimentConfig, ExperimentName};
use lipnet::nn::Activation;
use serde::Deserialize;

pub const MNIST_DIR_ENV: &str = "LIPNET_MNIST_DIR";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    dataset: Option<String>,
    network: Option<RawNetwork>,
    train: Option<RawTrain>,
    admm: Option<RawAdmm>,
    toy2d: Option<RawToy2d>,
    mnist: Option<RawMnist>,
    noise: Option<RawNoise>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    hidden: Option<Vec<usize>>,
    activation: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    l2_lambda: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdmm {
    rho: Option<f64>,
    mu: Option<f64>,
    l_des: Option<f64>,
    outer_iters: Option<usize>,
    inner_epochs: Option<usize>,
    learning_rate: Option<f64>,
    t_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawToy2d {
    n_per_class_train: Option<usize>,
    n_per_class_test: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMnist {
    dir: Option<PathBuf>,
    n_train: Option<usize>,
    n_test: Option<usize>,
    pool: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    levels: Option<Vec<f64>>,
}

/// Validated configuration of one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: ExperimentName,
    pub experiment: ExperimentConfig,
    pub l_des: Option<f64>,
    pub t_floor: f64,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl RunConfig {
    /// Parses TOML text; `mnist_dir_env` (when set) replaces `mnist.dir`.
    ///
    /// `expect` is the dataset named on the command line, if any; it supplies the
    /// defaults and must agree with the `dataset` key when both are present.
    pub fn from_toml(text: &str, mnist_dir_env: Option<PathBuf>, expect: Option<ExperimentName>) -> Result<Self, String> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        let named = raw.dataset.as_deref().map(str::parse::<ExperimentName>).transpose()?;
        let dataset = match (named, expect) {
            (Some(a), Some(b)) if a != b => return Err(format!("config dataset is {a} but {b} was requested")),
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => ExperimentName::Toy2d,
        };
        let mut e = ExperimentConfig::defaults(dataset);
        set(&mut e.seed, raw.seed);
        let net = raw.network.unwrap_or_default();
        set(&mut e.hidden, net.hidden);
        if let Some(a) = net.activation {
            e.activation = a.parse::<Activation>().map_err(|err| format!("network.activation: {err}"))?;
        }
        let tr = raw.train.unwrap_or_default();
        set(&mut e.epochs, tr.epochs);
        set(&mut e.batch_size, tr.batch_size);
        set(&mut e.learning_rate, tr.learning_rate);
        set(&mut e.l2_lambda, tr.l2_lambda);
        let ad = raw.admm.unwrap_or_default();
        set(&mut e.rho, ad.rho);
        set(&mut e.mu, ad.mu);
        set(&mut e.admm_outer_iters, ad.outer_iters);
        set(&mut e.admm_inner_epochs, ad.inner_epochs);
        set(&mut e.admm_learning_rate, ad.learning_rate);
        let toy = raw.toy2d.unwrap_or_default();
        set(&mut e.toy2d.n_per_class_train, toy.n_per_class_train);
        set(&mut e.toy2d.n_per_class_test, toy.n_per_class_test);
        let mn = raw.mnist.unwrap_or_default();
        set(&mut e.mnist.dir, mn.dir);
        set(&mut e.mnist.dir, mnist_dir_env);
        set(&mut e.mnist.n_train, mn.n_train);
        set(&mut e.mnist.n_test, mn.n_test);
        set(&mut e.mnist.pool, mn.pool);
        set(&mut e.noise_levels, raw.noise.unwrap_or_default().levels);
        e.validate().map_err(|err| err.to_string())?;
        if e.toy2d.n_per_class_train == 0 || e.toy2d.n_per_class_test == 0 {
            return Err("toy2d sample counts must be at least 1".into());
        }
        if e.mnist.n_train == 0 || e.mnist.n_test == 0 {
            return Err("mnist sample counts must be at least 1".into());
        }
        if let Some(l) = ad.l_des {
            if !(l > 0.0 && l.is_finite()) {
                return Err(format!("admm.l_des must be positive, got {l}"));
            }
        }
        let t_floor = ad.t_floor.unwrap_or(1e-6);
        if !(t_floor > 0.0 && t_floor.is_finite()) {
            return Err(format!("admm.t_floor must be positive, got {t_floor}"));
        }
        Ok(Self { dataset, experiment: e, l_des: ad.l_des, t_floor })
    }

    pub fn load(path: &Path, expect: Option<ExperimentName>) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
        let env = std::env::var_os(MNIST_DIR_ENV).map(PathBuf::from);
        Self::from_toml(&text, env, expect).map_err(|e| format!("{}: {e}", path.display()))
    }
}
