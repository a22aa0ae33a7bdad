//! `lipnet`: train, certify and benchmark Lipschitz-bounded networks.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 training, solver
//! or evaluation failure, 4 a refutation fixture that did not reproduce.

mod config;

use std::fmt::Display;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lipnet::admm::{select_t, train_enforced, train_regularized, write_trace_csv, AdmmConfig, Mode};
use lipnet::cert::{
    certify, empirical_lower_bound, refute_coupled, trivial_bound, CertifyMode, CoupledExample, DiagonalMultiplier,
    Sampler,
};
use lipnet::data::{load_experiment_data, run_experiment, ExperimentName};
use lipnet::nn::{accuracy, load_model, save_model, sgd_train_with_history, LossKind, Network, SgdConfig, Targets};
use nalgebra::DVector;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "lipnet", version, about = "Lipschitz-certified training of fully-connected networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write model.json, trace.csv and certificate.txt.
    Train {
        #[arg(long, value_enum)]
        mode: TrainMode,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Start from this model instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Print Lipschitz bounds of a saved model.
    Certify {
        #[arg(long)]
        model: PathBuf,
        /// Optimize the multiplier (the default when no multiplier file is given).
        #[arg(long, conflicts_with = "t_file")]
        optimize_t: bool,
        /// Fixed diagonal multiplier: whitespace- or comma-separated nonnegative entries.
        #[arg(long)]
        t_file: Option<PathBuf>,
        /// Also print the spectral-norm product bound.
        #[arg(long)]
        trivial: bool,
        /// Also print a sampled lower bound over the input box.
        #[arg(long)]
        empirical: bool,
        #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
        input_lo: f64,
        #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
        input_hi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reproduce a counterexample against coupled multipliers.
    Refute {
        #[arg(value_parser = parse_fixture)]
        fixture: CoupledExample,
    },
    /// Train nominal, L2 and Lipschitz-regularized models and write the reports.
    Bench {
        #[arg(value_parser = parse_experiment)]
        experiment: ExperimentName,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainMode {
    Nominal,
    L2,
    LipReg,
    LipEnforce,
}

fn parse_fixture(s: &str) -> Result<CoupledExample, String> {
    s.parse().map_err(|_| format!("unknown fixture '{s}' (expected cosine-lmi or relu-lemma)"))
}

fn parse_experiment(s: &str) -> Result<ExperimentName, String> {
    s.parse()
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(m: impl Display) -> Failure {
    Failure { code: 2, message: m.to_string() }
}

fn compute(m: impl Display) -> Failure {
    Failure { code: 3, message: m.to_string() }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { mode, config, out, init, force } => cmd_train(mode, &config, &out, init.as_deref(), force),
        Command::Certify { model, optimize_t: _, t_file, trivial, empirical, input_lo, input_hi, seed } => {
            cmd_certify(&model, t_file.as_deref(), trivial, empirical.then_some((input_lo, input_hi, seed)))
        }
        Command::Refute { fixture } => cmd_refute(fixture),
        Command::Bench { experiment, config, out, force } => cmd_bench(experiment, &config, &out, force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn prepare_out(out: &Path, force: bool) -> Result<(), Failure> {
    if out.exists() {
        let non_empty = fs::read_dir(out).map_err(usage)?.next().is_some();
        if non_empty && !force {
            return Err(usage(format!("output directory {} is not empty (use --force)", out.display())));
        }
    }
    fs::create_dir_all(out).map_err(|e| usage(format!("creating {}: {e}", out.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| compute(format!("writing {}: {e}", path.display())))
}

fn cmd_train(mode: TrainMode, config: &Path, out: &Path, init: Option<&Path>, force: bool) -> Result<(), Failure> {
    let cfg = RunConfig::load(config, None).map_err(usage)?;
    let l_des = match (mode, cfg.l_des) {
        (TrainMode::LipEnforce, None) => return Err(usage(format!("{}: lip-enforce needs admm.l_des", config.display()))),
        (_, l) => l,
    };
    let init_net = init.map(load_model::<f64>).transpose().map_err(usage)?;
    prepare_out(out, force)?;
    let e = &cfg.experiment;
    let (train, test) = load_experiment_data(cfg.dataset, e).map_err(compute)?;
    let init_net = match init_net {
        Some(n) => n,
        None => {
            let mut dims = vec![train.input_dim()];
            dims.extend(&e.hidden);
            dims.push(train.num_classes());
            Network::glorot(&dims, e.activation, e.seed).map_err(usage)?
        }
    };
    if init_net.input_dim() != train.input_dim() || init_net.output_dim() != train.num_classes() {
        return Err(usage(format!(
            "initial model maps {} -> {} but the data has {} inputs and {} classes",
            init_net.input_dim(),
            init_net.output_dim(),
            train.input_dim(),
            train.num_classes()
        )));
    }
    let targets = Targets::Classes(train.labels());
    let trace_path = out.join("trace.csv");
    let net = match mode {
        TrainMode::Nominal | TrainMode::L2 => {
            let sgd = SgdConfig {
                epochs: e.epochs,
                batch_size: e.batch_size,
                learning_rate: e.learning_rate,
                seed: e.seed.wrapping_add(1),
                l2_lambda: if mode == TrainMode::L2 { e.l2_lambda } else { 0.0 },
            };
            let (net, history) =
                sgd_train_with_history(&init_net, train.inputs(), targets, LossKind::CrossEntropy, &sgd, None)
                    .map_err(compute)?;
            let mut text = String::from("epoch,objective\n");
            for (i, v) in history.iter().enumerate() {
                text.push_str(&format!("{},{v}\n", i + 1));
            }
            write_file(&trace_path, &text)?;
            net
        }
        TrainMode::LipReg | TrainMode::LipEnforce => {
            let t = select_t(&init_net).map_err(compute)?;
            let inner = SgdConfig {
                epochs: e.admm_inner_epochs,
                batch_size: e.batch_size,
                learning_rate: e.admm_learning_rate,
                seed: e.seed.wrapping_add(2),
                l2_lambda: 0.0,
            };
            let admm_mode = match l_des {
                Some(l) if mode == TrainMode::LipEnforce => Mode::Enforce { l_des: l },
                _ => Mode::Regularize { mu: e.mu },
            };
            let mut admm = AdmmConfig::new(admm_mode, t, LossKind::CrossEntropy, inner);
            admm.rho = e.rho;
            admm.t_floor = cfg.t_floor;
            admm.max_outer_iters = e.admm_outer_iters;
            let outcome = if mode == TrainMode::LipEnforce {
                train_enforced(&init_net, train.inputs(), targets, &admm)
            } else {
                train_regularized(&init_net, train.inputs(), targets, &admm)
            }
            .map_err(compute)?;
            let f = File::create(&trace_path).map_err(|e| compute(format!("writing {}: {e}", trace_path.display())))?;
            write_trace_csv(&outcome.trace, f).map_err(compute)?;
            outcome.network
        }
    };
    let model_path = out.join("model.json");
    save_model(&net, &model_path).map_err(compute)?;
    let cert = certify(&net, &CertifyMode::OptimizeT).map_err(compute)?;
    let acc = accuracy(&net, test.inputs(), test.labels()).map_err(compute)?;
    let report = format!("{cert}test_accuracy: {acc}\n");
    write_file(&out.join("certificate.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn read_multiplier(path: &Path) -> Result<DiagonalMultiplier<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| usage(format!("{}: '{s}': {e}", path.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    DiagonalMultiplier::new(DVector::from_vec(values)).map_err(usage)
}

fn cmd_certify(model: &Path, t_file: Option<&Path>, trivial: bool, empirical: Option<(f64, f64, u64)>) -> Result<(), Failure> {
    let net = load_model::<f64>(model).map_err(usage)?;
    let mode = match t_file {
        Some(p) => {
            let t = read_multiplier(p)?;
            if t.len() != net.hidden_neurons() {
                return Err(usage(format!("multiplier has {} entries, network has {} hidden neurons", t.len(), net.hidden_neurons())));
            }
            CertifyMode::FixedT(t)
        }
        None => CertifyMode::OptimizeT,
    };
    let cert = certify(&net, &mode).map_err(compute)?;
    let mut stdout = std::io::stdout().lock();
    let mut lines = format!("{cert}certified_bound: {}\n", cert.bound);
    if trivial {
        lines.push_str(&format!("trivial_bound: {}\n", trivial_bound(&net).bound));
    }
    if let Some((lo, hi, seed)) = empirical {
        if !(lo < hi) {
            return Err(usage(format!("empty input box [{lo}, {hi}]")));
        }
        let sampler = Sampler::cube(net.input_dim(), lo, hi, 1000, 10_000, seed);
        let lb = empirical_lower_bound(&net, &sampler).map_err(compute)?;
        lines.push_str(&format!("empirical_lower_bound: {lb}\n"));
    }
    stdout.write_all(lines.as_bytes()).map_err(compute)
}

fn cmd_refute(fixture: CoupledExample) -> Result<(), Failure> {
    let report = refute_coupled(fixture).map_err(|e| Failure { code: 4, message: e.to_string() })?;
    print!("{report}");
    if report.refuted() {
        Ok(())
    } else {
        Err(Failure { code: 4, message: "the counterexample did not reproduce".into() })
    }
}

fn cmd_bench(name: ExperimentName, config: &Path, out: &Path, force: bool) -> Result<(), Failure> {
    let cfg = RunConfig::load(config, Some(name)).map_err(usage)?;
    prepare_out(out, force)?;
    let report = run_experiment(name, &cfg.experiment, Some(out)).map_err(compute)?;
    for m in &report.models {
        println!(
            "{}: cel {:.4}, accuracy {:.4}, certified bound {:.4}, {:.1} s",
            m.kind,
            m.cel,
            m.accuracy,
            m.lipschitz_bound(),
            m.t_total_s
        );
    }
    Ok(())
}
