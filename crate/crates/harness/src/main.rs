use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dp_ntk::dp::{check_dp_conditions, min_k, GsmSampler, SensitivityInputs};
use dp_ntk::regression::{fit, fit_private_with_kernel, PrivateFitConfig, Predictor};
use dp_ntk::RngStream;
use dp_ntk_harness::config::ExperimentConfig;
use dp_ntk_harness::data::{classes_of, load_features_csv, save_features_csv};
use dp_ntk_harness::persist::{load_model, save_model, SavedModel};
use dp_ntk_harness::tradeoff::{accuracy, choose_k, load_or_generate, predicted_class, prepare, run_prepared};
use dp_ntk_harness::verify::{verify_bounds, VerifyConfig};
use dp_ntk_harness::{HarnessError, Result};
use log::{info, warn};

/// Exit status when a verification row fails.
const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "dpntk", version, about = "Differentially private NTK regression experiments")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the ε grid and write the privacy-utility table as CSV.
    Tradeoff {
        #[command(flatten)]
        config: ConfigArgs,
        /// Exit with status 3 when any grid point is infeasible.
        #[arg(long)]
        strict: bool,
    },
    /// Compare every implemented bound with its measured counterpart.
    Verify(VerifyArgs),
    /// Fit a model on the training split and save it.
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Total privacy budget ε of the private fit.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Fit the exact (non-private) model instead.
        #[arg(long)]
        non_private: bool,
        /// Refuse to fit when the privacy conditions fail (exit status 3).
        #[arg(long)]
        strict: bool,
        /// Where to write the model.
        #[arg(long)]
        model: PathBuf,
    },
    /// Predict classes for a feature CSV with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Queries in the feature CSV layout; labels are only used for the
        /// reported accuracy.
        #[arg(long)]
        input: PathBuf,
        /// Scale query rows to unit norm.
        #[arg(long)]
        normalize: bool,
        /// Output path; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the synthetic dataset of a configuration as CSV.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Experiment flags; each overrides the key of the same name in `--config`.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of synthetic points [default: 500].
    #[arg(long)]
    n: Option<String>,
    /// Feature dimension [default: 16].
    #[arg(long)]
    d: Option<String>,
    /// Number of classes [default: 2].
    #[arg(long)]
    n_cls: Option<String>,
    /// Number of hidden neurons.
    #[arg(long)]
    m: Option<String>,
    /// `max-k` or a fixed number of Gaussian samples.
    #[arg(long)]
    k: Option<String>,
    /// Ridge parameter λ [default: 10].
    #[arg(long)]
    lambda: Option<String>,
    /// Standard deviation of the hidden weights [default: 1].
    #[arg(long)]
    sigma: Option<String>,
    /// Neighbour distance β of the privacy guarantee [default: 1e-6].
    #[arg(long)]
    beta: Option<String>,
    /// Public bound B on feature norms [default: 1].
    #[arg(long)]
    bound_b: Option<String>,
    /// Total δ [default: 2e-3].
    #[arg(long)]
    delta: Option<String>,
    /// Comma-separated, strictly increasing ε values [default: 30,100,300,1e3,3e3,1e4,3e4].
    #[arg(long)]
    epsilon_grid: Option<String>,
    /// Share of ε spent on the feature noise [default: 0.5].
    #[arg(long)]
    eps_split: Option<String>,
    /// Share of δ spent on the feature noise [default: 0.5].
    #[arg(long)]
    delta_split: Option<String>,
    /// Share of points in the training split [default: 0.2].
    #[arg(long)]
    train_fraction: Option<String>,
    /// Distance between synthetic class centres [default: 1].
    #[arg(long)]
    separation: Option<String>,
    /// Within-class noise scale of synthetic data [default: 0.6].
    #[arg(long)]
    spread: Option<String>,
    /// `protocol` or `composed`.
    #[arg(long)]
    m_rule: Option<String>,
    /// Failure probability γ of the concentration radius ρ [default: 0.01].
    #[arg(long)]
    gamma: Option<String>,
    /// Constant of the concentration radius ρ [default: 1].
    #[arg(long)]
    c_rho: Option<String>,
    /// Defaults to `$DPNTK_SEED`, then 0.
    #[arg(long)]
    seed: Option<String>,
    /// Feature CSV to use instead of synthetic data.
    #[arg(long)]
    input: Option<String>,
    /// Project input rows onto the unit sphere instead of rejecting rows above B.
    #[arg(long)]
    normalize: bool,
    /// Output path; stdout when absent.
    #[arg(long)]
    output: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_env()?;
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("n", &self.n),
            ("d", &self.d),
            ("n-cls", &self.n_cls),
            ("m", &self.m),
            ("k", &self.k),
            ("lambda", &self.lambda),
            ("sigma", &self.sigma),
            ("beta", &self.beta),
            ("bound-b", &self.bound_b),
            ("delta", &self.delta),
            ("epsilon-grid", &self.epsilon_grid),
            ("eps-split", &self.eps_split),
            ("delta-split", &self.delta_split),
            ("train-fraction", &self.train_fraction),
            ("separation", &self.separation),
            ("spread", &self.spread),
            ("m-rule", &self.m_rule),
            ("gamma", &self.gamma),
            ("c-rho", &self.c_rho),
            ("seed", &self.seed),
            ("input", &self.input),
            ("output", &self.output),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.normalize {
            cfg.normalize = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    #[arg(long, default_value_t = 200)]
    utility_instances: usize,
    /// Multiply every theoretical bound (values below 1 should fail).
    #[arg(long, default_value_t = 1.0)]
    bound_scale: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn write_out(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p).map_err(|e| HarnessError::io(p, e))?;
            let mut w = std::io::BufWriter::new(file);
            f(&mut w).map_err(|e| HarnessError::io(p, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).map_err(|e| HarnessError::io("<stdout>", e))
        }
    }
}

fn run_tradeoff_cmd(config: &ConfigArgs, strict: bool) -> Result<()> {
    let cfg = config.resolve()?;
    let prep = prepare(&cfg)?;
    let table = run_prepared(&cfg, &prep)?;
    write_out(cfg.output.as_deref(), |w| table.write_csv(w))?;
    if strict && table.any_infeasible() {
        let bad: Vec<String> = table
            .rows
            .iter()
            .filter(|r| !r.feasible)
            .map(|r| r.epsilon.to_string())
            .collect();
        return Err(HarnessError::Infeasible(format!("grid points ε = {}", bad.join(", "))));
    }
    Ok(())
}

fn run_verify_cmd(args: &VerifyArgs) -> Result<bool> {
    let seed = match args.seed {
        Some(s) => s,
        None => ExperimentConfig::from_env()?.seed,
    };
    let cfg = VerifyConfig {
        n: args.n,
        d: args.d,
        sigma: args.sigma,
        beta: args.beta,
        trials: args.trials,
        m: args.m,
        utility_instances: args.utility_instances,
        bound_scale: args.bound_scale,
        seed,
        ..VerifyConfig::default()
    };
    let report = verify_bounds(&cfg)?;
    write_out(args.output.as_deref(), |w| report.write_csv(w))?;
    for row in report.rows.iter().filter(|r| !r.passed) {
        warn!("bound `{}` violated: empirical {} vs {}", row.name, row.empirical, row.theoretical);
    }
    Ok(report.all_passed())
}

fn run_fit_cmd(config: &ConfigArgs, epsilon: Option<f64>, non_private: bool, strict: bool, model: &Path) -> Result<()> {
    let cfg = config.resolve()?;
    let prep = prepare(&cfg)?;
    let saved = if non_private {
        let m = fit(&prep.train, &prep.weights, cfg.lambda)?;
        info!("test accuracy {:.4}", accuracy(&m, &prep.test)?);
        SavedModel::Plain(m)
    } else {
        let epsilon = epsilon.ok_or_else(|| HarnessError::Usage("a private fit needs --epsilon".into()))?;
        let (dp_x, dp_alpha) = cfg.split_budget(epsilon)?;
        let sens = SensitivityInputs {
            n: prep.train.n(),
            sigma: cfg.sigma,
            bound_b: prep.train.bound_b(),
            beta: cfg.beta,
        };
        let eta_min = prep.kernel.eta_min();
        let conditions = cfg.conditions();
        let k = match choose_k(&cfg, dp_alpha, &sens, eta_min) {
            Some(k) => k,
            None if strict => {
                return Err(HarnessError::Infeasible(format!("no admissible k at ε = {epsilon}")));
            }
            None => {
                let k = min_k(dp_alpha.delta());
                warn!("no admissible k at ε = {epsilon}; using k = {k} without a privacy guarantee");
                k
            }
        };
        let report = check_dp_conditions(dp_alpha, k, &sens, eta_min, &conditions);
        if !report.feasible() {
            warn!("privacy conditions fail: {report}");
        }
        let fit_cfg = PrivateFitConfig {
            lambda: cfg.lambda,
            k,
            dp_alpha,
            dp_x,
            beta: cfg.beta,
            enforce: strict,
            conditions,
            sampler: GsmSampler::Auto,
        };
        let root = RngStream::new(cfg.seed);
        let m = fit_private_with_kernel(&prep.train, &prep.kernel, &prep.weights, &fit_cfg, &root.substream("fit"))?;
        info!(
            "private fit: k = {k}, budget {}, test accuracy {:.4}",
            m.budget(),
            accuracy(&m, &prep.test)?
        );
        SavedModel::Private(m)
    };
    save_model(&saved, model)
}

fn run_predict_cmd(model: &Path, input: &Path, normalize: bool, output: Option<&Path>) -> Result<()> {
    let saved = load_model(model)?;
    let predictor: &dyn Predictor = match &saved {
        SavedModel::Plain(m) => m,
        SavedModel::Private(m) => m,
    };
    // queries are not bounded by the model's B; predictions extrapolate
    let queries = load_features_csv(input, f64::MAX, normalize)?;
    let mut lines = Vec::with_capacity(queries.n());
    let truth = classes_of(&queries);
    let mut hits = 0usize;
    for (i, &label) in truth.iter().enumerate() {
        let x = queries.row(i);
        let out = predictor.predict(&x)?;
        let class = predicted_class(predictor, &x)?;
        hits += usize::from(class == label);
        let mut fields = vec![i.to_string(), class.to_string()];
        fields.extend(out.iter().map(|v| format!("{v}")));
        lines.push(fields.join(","));
    }
    info!("accuracy against the label column: {:.4}", hits as f64 / queries.n() as f64);
    let header = std::iter::once("row,class".to_string())
        .chain((0..predictor.n_outputs()).map(|c| format!("out{c}")))
        .collect::<Vec<_>>()
        .join(",");
    write_out(output, |w| {
        writeln!(w, "{header}")?;
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        w.flush()
    })
}

fn run_gen_data_cmd(config: &ConfigArgs) -> Result<()> {
    let cfg = config.resolve()?;
    if cfg.input.is_some() {
        return Err(HarnessError::Usage("gen-data does not take --input".into()));
    }
    let data = load_or_generate(&cfg, &RngStream::new(cfg.seed))?;
    match &cfg.output {
        Some(p) => save_features_csv(&data, p),
        None => dp_ntk_harness::data::write_features_csv(&data, std::io::stdout().lock())
            .map_err(|e| HarnessError::io("<stdout>", e)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match &cli.command {
        Command::Tradeoff { config, strict } => run_tradeoff_cmd(config, *strict).map(|_| true),
        Command::Verify(args) => run_verify_cmd(args),
        Command::Fit {
            config,
            epsilon,
            non_private,
            strict,
            model,
        } => run_fit_cmd(config, *epsilon, *non_private, *strict, model).map(|_| true),
        Command::Predict {
            model,
            input,
            normalize,
            output,
        } => run_predict_cmd(model, input, *normalize, output.as_deref()).map(|_| true),
        Command::GenData { config } => run_gen_data_cmd(config).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY_FAILED),
        Err(e) => {
            eprintln!("dpntk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
