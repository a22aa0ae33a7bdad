//! Nominal, L2-regularized and Lipschitz-regularized training on one dataset,
//! with certification, accuracy, timing and noise-robustness evaluation.

use std::fmt;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use super::{avg_pool, corrupt, gen_2d, load_mnist_limited, DataError, Dataset, NoiseKind, NoiseSpec, Split};
use crate::admm::{select_t, train_regularized, write_trace_csv, AdmmConfig, AdmmError, Mode, TraceRow};
use crate::cert::{certify, CertError, CertifyMode, LipschitzCertificate};
use crate::nn::{accuracy, loss, predict, save_model, sgd_train, Activation, LossKind, Network, NnError, SgdConfig, Targets};

pub const REPORT_HEADER: [&str; 7] =
    ["model", "cel", "accuracy", "lipschitz_bound", "t_total_s", "t_loss_step_s", "t_lip_step_s"];
pub const NOISE_HEADER: [&str; 4] = ["model", "kind", "level", "accuracy"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Admm(#[from] AdmmError),
    #[error("writing {path}: {message}")]
    Output { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentName {
    Toy2d,
    Mnist,
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentName::Toy2d => "toy2d",
            ExperimentName::Mnist => "mnist",
        })
    }
}

impl FromStr for ExperimentName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy2d" => Ok(ExperimentName::Toy2d),
            "mnist" => Ok(ExperimentName::Mnist),
            other => Err(format!("unknown experiment '{other}' (expected toy2d or mnist)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Nominal,
    L2,
    Lip,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Nominal, ModelKind::L2, ModelKind::Lip];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nominal => "nominal",
            ModelKind::L2 => "l2",
            ModelKind::Lip => "lip",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Toy2dConfig {
    pub n_per_class_train: usize,
    pub n_per_class_test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistConfig {
    pub dir: PathBuf,
    pub n_train: usize,
    pub n_test: usize,
    /// 2x2 mean pooling to 14x14 inputs.
    pub pool: bool,
}

/// Every hyperparameter of an experiment; all randomness derives from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// SGD epochs of the nominal and L2 models.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub rho: f64,
    pub mu: f64,
    pub admm_outer_iters: usize,
    /// SGD epochs per loss step.
    pub admm_inner_epochs: usize,
    pub admm_learning_rate: f64,
    /// Levels of both noise kinds; empty disables the sweep.
    pub noise_levels: Vec<f64>,
    pub toy2d: Toy2dConfig,
    pub mnist: MnistConfig,
}

/// `0.05, 0.10, ..., 0.50`.
pub fn default_noise_levels() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.05).collect()
}

impl ExperimentConfig {
    pub fn defaults(name: ExperimentName) -> Self {
        let toy2d = Toy2dConfig { n_per_class_train: 100, n_per_class_test: 300 };
        let mnist = MnistConfig { dir: PathBuf::from("data/mnist"), n_train: 10_000, n_test: 10_000, pool: true };
        match name {
            ExperimentName::Toy2d => Self {
                seed: 1,
                hidden: vec![10, 10],
                activation: Activation::Tanh,
                epochs: 3000,
                batch_size: 30,
                learning_rate: 0.1,
                l2_lambda: 4e-3,
                rho: 0.25,
                mu: 3e-4,
                admm_outer_iters: 50,
                admm_inner_epochs: 20,
                admm_learning_rate: 0.05,
                noise_levels: Vec::new(),
                toy2d,
                mnist,
            },
            ExperimentName::Mnist => Self {
                seed: 1,
                hidden: vec![50],
                activation: Activation::Tanh,
                epochs: 100,
                batch_size: 50,
                learning_rate: 0.1,
                l2_lambda: 3e-3,
                rho: 0.25,
                mu: 0.01,
                admm_outer_iters: 50,
                admm_inner_epochs: 20,
                admm_learning_rate: 0.05,
                noise_levels: default_noise_levels(),
                toy2d,
                mnist,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden sizes must be nonempty and positive, got {:?}", self.hidden));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.admm_outer_iters == 0 || self.admm_inner_epochs == 0 {
            return bad("epochs, batch_size, admm_outer_iters and admm_inner_epochs must be at least 1".into());
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("admm_learning_rate", self.admm_learning_rate),
            ("l2_lambda", self.l2_lambda),
            ("mu", self.mu),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if let Some(l) = self.noise_levels.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return bad(format!("noise levels must be finite and >= 0, got {l}"));
        }
        if self.activation.sector::<f64>().alpha != 0.0 {
            return bad(format!("activation {} is not supported by the LMI step", self.activation));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ModelReport {
    pub kind: ModelKind,
    pub network: Network<f64>,
    /// Cross-entropy on the test set.
    pub cel: f64,
    /// Accuracy on the test set.
    pub accuracy: f64,
    pub certificate: LipschitzCertificate<f64>,
    /// Training wall time; for `Lip` this is multiplier selection plus the splitting loop.
    pub t_total_s: f64,
    /// Mean seconds per SGD epoch (nominal, L2) or per loss step (Lip).
    pub t_loss_step_s: f64,
    /// Mean seconds per LMI step; zero for the models trained without one.
    pub t_lip_step_s: f64,
}

impl ModelReport {
    pub fn lipschitz_bound(&self) -> f64 {
        self.certificate.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePoint {
    pub model: ModelKind,
    pub kind: &'static str,
    pub level: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub name: ExperimentName,
    /// Ordered nominal, L2, Lip.
    pub models: Vec<ModelReport>,
    pub noise: Vec<NoisePoint>,
    /// Per-iteration trace of the Lipschitz-regularized run.
    pub trace: Vec<TraceRow<f64>>,
    pub admm_converged: bool,
}

impl ExperimentReport {
    pub fn model(&self, kind: ModelKind) -> &ModelReport {
        self.models.iter().find(|m| m.kind == kind).expect("every experiment reports all three models")
    }
}

fn output_err(path: &Path, e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Output { path: path.display().to_string(), message: e.to_string() }
}

pub fn write_report_csv<W: Write>(models: &[ModelReport], out: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(REPORT_HEADER)?;
    for m in models {
        wtr.write_record(&[
            m.kind.name().to_string(),
            m.cel.to_string(),
            m.accuracy.to_string(),
            m.lipschitz_bound().to_string(),
            format!("{:.6}", m.t_total_s),
            format!("{:.6}", m.t_loss_step_s),
            format!("{:.6}", m.t_lip_step_s),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_noise_csv<W: Write>(points: &[NoisePoint], out: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(NOISE_HEADER)?;
    for p in points {
        wtr.write_record(&[p.model.name().to_string(), p.kind.to_string(), p.level.to_string(), p.accuracy.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Test accuracy of every model under each noise kind and level.
///
/// Each (kind, level) pair draws one corrupted copy of `test` that all models
/// share, so the curves are paired comparisons.
pub fn evaluate_noise(
    models: &[(ModelKind, &Network<f64>)],
    test: &Dataset<f64>,
    levels: &[f64],
    seed: u64,
) -> Result<Vec<NoisePoint>, ExperimentError> {
    let mut out = Vec::new();
    let kinds: [fn(f64) -> NoiseKind; 2] = [|s| NoiseKind::Gaussian { sigma: s }, |b| NoiseKind::Uniform { b }];
    for (ki, make) in kinds.iter().enumerate() {
        for (li, &level) in levels.iter().enumerate() {
            let spec = NoiseSpec { kind: make(level), seed: seed.wrapping_add((ki * 1000 + li) as u64) };
            let noisy = corrupt(test, &spec)?;
            for (kind, net) in models {
                out.push(NoisePoint {
                    model: *kind,
                    kind: spec.kind.name(),
                    level,
                    accuracy: accuracy(net, noisy.inputs(), noisy.labels())?,
                });
            }
        }
    }
    Ok(out)
}

/// Train and test splits of the named experiment as configured.
pub fn load_experiment_data(name: ExperimentName, cfg: &ExperimentConfig) -> Result<(Dataset<f64>, Dataset<f64>), ExperimentError> {
    match name {
        ExperimentName::Toy2d => Ok((
            gen_2d(cfg.toy2d.n_per_class_train, cfg.seed.wrapping_add(100), Split::Train)?,
            gen_2d(cfg.toy2d.n_per_class_test, cfg.seed.wrapping_add(101), Split::Test)?,
        )),
        ExperimentName::Mnist => {
            let (train, test) = load_mnist_limited(&cfg.mnist.dir, cfg.mnist.n_train, cfg.mnist.n_test)?;
            if !cfg.mnist.pool {
                return Ok((train, test));
            }
            let pool = |d: &Dataset<f64>| -> Result<Dataset<f64>, DataError> { d.with_inputs(avg_pool(d.inputs(), 28, 28)?) };
            Ok((pool(&train)?, pool(&test)?))
        }
    }
}

struct Persist<'a> {
    dir: Option<&'a Path>,
}

impl Persist<'_> {
    fn file(&self, name: &str, write: impl FnOnce(File) -> Result<(), String>) -> Result<(), ExperimentError> {
        let Some(dir) = self.dir else { return Ok(()) };
        let path = dir.join(name);
        let f = File::create(&path).map_err(|e| output_err(&path, e))?;
        write(f).map_err(|e| output_err(&path, e))
    }

    fn model(&self, kind: ModelKind, net: &Network<f64>) -> Result<(), ExperimentError> {
        let Some(dir) = self.dir else { return Ok(()) };
        let path = dir.join(format!("{}.json", kind.name()));
        save_model(net, &path).map_err(|e| output_err(&path, e))
    }
}

fn finish_model(
    kind: ModelKind,
    network: Network<f64>,
    test: &Dataset<f64>,
    timing: (f64, f64, f64),
) -> Result<ModelReport, ExperimentError> {
    let targets = Targets::Classes(test.labels());
    let cel = loss(&network, test.inputs(), targets, LossKind::CrossEntropy, 0.0)?;
    let acc = accuracy(&network, test.inputs(), test.labels())?;
    let certificate = certify(&network, &CertifyMode::OptimizeT)?;
    log::info!("{kind}: test cel {cel:.4}, accuracy {acc:.4}, certified bound {:.4}", certificate.bound);
    Ok(ModelReport {
        kind,
        network,
        cel,
        accuracy: acc,
        certificate,
        t_total_s: timing.0,
        t_loss_step_s: timing.1,
        t_lip_step_s: timing.2,
    })
}

fn write_grid(nets: &[&Network<f64>], f: File) -> Result<(), String> {
    const N: usize = 101;
    let pts = nalgebra::DMatrix::from_fn(2, N * N, |r, c| if r == 0 { (c % N) as f64 } else { (c / N) as f64 } / (N - 1) as f64);
    let preds: Vec<Vec<usize>> = nets.iter().map(|n| predict(n, &pts)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut wtr = csv::Writer::from_writer(f);
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend(ModelKind::ALL.iter().map(|k| k.name().to_string()));
    wtr.write_record(&header).map_err(|e| e.to_string())?;
    for c in 0..N * N {
        let mut row = vec![pts[(0, c)].to_string(), pts[(1, c)].to_string()];
        row.extend(preds.iter().map(|p| p[c].to_string()));
        wtr.write_record(&row).map_err(|e| e.to_string())?;
    }
    wtr.flush().map_err(|e| e.to_string())
}

/// Trains nominal, then L2-regularized, then Lipschitz-regularized models (the
/// last initialized from the L2 model, with the multiplier selected on it),
/// certifies all three and evaluates them on the test split.
///
/// With `out` set, each model file is written as soon as it is trained, then
/// `report.csv`, `lip_trace.csv`, and `noise.csv` (when levels are configured)
/// or `toy2d_grid.csv` (decision regions on a 101x101 grid).
pub fn run_experiment(
    name: ExperimentName,
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    }
    let persist = Persist { dir: out };
    let (train, test) = load_experiment_data(name, cfg)?;
    log::info!("{name}: {} training / {} test samples, input dim {}", train.len(), test.len(), train.input_dim());
    let mut dims = vec![train.input_dim()];
    dims.extend(&cfg.hidden);
    dims.push(train.num_classes());
    let init = Network::<f64>::glorot(&dims, cfg.activation, cfg.seed)?;
    let targets = Targets::Classes(train.labels());
    let sgd = |l2_lambda: f64| SgdConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed.wrapping_add(1),
        l2_lambda,
    };

    let mut models = Vec::with_capacity(3);
    for (kind, lambda) in [(ModelKind::Nominal, 0.0), (ModelKind::L2, cfg.l2_lambda)] {
        let t0 = Instant::now();
        let net = sgd_train(&init, train.inputs(), targets, LossKind::CrossEntropy, &sgd(lambda), None)?;
        let total = t0.elapsed().as_secs_f64();
        persist.model(kind, &net)?;
        models.push(finish_model(kind, net, &test, (total, total / cfg.epochs as f64, 0.0))?);
    }

    let t0 = Instant::now();
    let l2_net = &models[1].network;
    let t = select_t(l2_net)?;
    let inner = SgdConfig {
        epochs: cfg.admm_inner_epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.admm_learning_rate,
        seed: cfg.seed.wrapping_add(2),
        l2_lambda: 0.0,
    };
    let mut admm = AdmmConfig::new(Mode::Regularize { mu: cfg.mu }, t, LossKind::CrossEntropy, inner);
    admm.rho = cfg.rho;
    admm.max_outer_iters = cfg.admm_outer_iters;
    let outcome = train_regularized(l2_net, train.inputs(), targets, &admm)?;
    let total = t0.elapsed().as_secs_f64();
    persist.model(ModelKind::Lip, &outcome.network)?;
    persist.file("lip_trace.csv", |f| write_trace_csv(&outcome.trace, f).map_err(|e| e.to_string()))?;
    let timing = (total, outcome.mean_loss_step_s(), outcome.mean_lip_step_s());
    models.push(finish_model(ModelKind::Lip, outcome.network.clone(), &test, timing)?);
    persist.file("report.csv", |f| write_report_csv(&models, f).map_err(|e| e.to_string()))?;

    let nets: Vec<(ModelKind, &Network<f64>)> = models.iter().map(|m| (m.kind, &m.network)).collect();
    let noise = if cfg.noise_levels.is_empty() {
        Vec::new()
    } else {
        let points = evaluate_noise(&nets, &test, &cfg.noise_levels, cfg.seed.wrapping_add(1000))?;
        persist.file("noise.csv", |f| write_noise_csv(&points, f).map_err(|e| e.to_string()))?;
        points
    };
    if name == ExperimentName::Toy2d {
        let only: Vec<&Network<f64>> = nets.iter().map(|(_, n)| *n).collect();
        persist.file("toy2d_grid.csv", |f| write_grid(&only, f))?;
    }
    Ok(ExperimentReport { name, models, noise, trace: outcome.trace, admm_converged: outcome.converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for n in [ExperimentName::Toy2d, ExperimentName::Mnist] {
            assert_eq!(n.to_string().parse::<ExperimentName>().unwrap(), n);
        }
        assert!("cifar".parse::<ExperimentName>().is_err());
    }

    #[test]
    fn defaults_validate() {
        ExperimentConfig::defaults(ExperimentName::Toy2d).validate().unwrap();
        let m = ExperimentConfig::defaults(ExperimentName::Mnist);
        m.validate().unwrap();
        assert_eq!(m.noise_levels.len(), 10);
        assert!((m.noise_levels[9] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = ExperimentConfig::defaults(ExperimentName::Toy2d);
        c.rho = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::defaults(ExperimentName::Toy2d);
        c.hidden.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::defaults(ExperimentName::Toy2d);
        c.noise_levels = vec![0.1, -0.1];
        assert!(c.validate().is_err());
    }
}
