use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use deepcnf::bench::{run_bench, BenchConfig, BenchReport};
use deepcnf::chebyshev::DEFAULT_DEGREE;
use deepcnf::dcnn::{Activation, NetworkArch, DEFAULT_HIDDEN_LAYERS, DEFAULT_NEURONS, DEFAULT_WINDOW};
use deepcnf::gradcheck::{gradcheck, GradcheckConfig};
use deepcnf::metrics::{format_predictions, predict_dataset, report_from_predictions};
use deepcnf::model::Model;
use deepcnf::objectives::{ObjectiveKind, RegConfig, DEFAULT_LAMBDA};
use deepcnf::optimizer::{InitConfig, LbfgsConfig};
use deepcnf::seqdata::{generate_synthetic, label_frequencies, load_dataset, save_dataset, SyntheticSpec};
use deepcnf::training::{trace_tsv, train, TrainConfig};
use deepcnf::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "deepcnf", version, about = "Deep convolutional neural fields for sequence labeling")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Seed for initialization and data generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-sequence evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Bit-reproducible mode. Sequence results are always reduced in input
    /// order, so this only records the intent.
    #[arg(long, global = true)]
    deterministic: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write it as JSON; the training trace goes to stdout.
    Train(TrainArgs),
    /// Write decoded labels and marginals for every position.
    Predict(PredictArgs),
    /// Report Qx, per-label metrics, mean Mcc and mean AUC.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients on a tiny instance.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train all three objectives on synthetic data and compare them.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ObjectiveName {
    Mle,
    Label,
    Auc,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ActivationName {
    Sigmoid,
    Tanh,
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Sigmoid => Activation::Sigmoid,
            ActivationName::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ObjectiveArgs {
    #[arg(long, value_enum, default_value = "mle")]
    objective: ObjectiveName,
    /// Polynomial degree of the AUC step approximation.
    #[arg(long, default_value_t = DEFAULT_DEGREE)]
    degree: usize,
    /// Sigmoid sharpness of the labelwise objective.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
}

impl ObjectiveArgs {
    fn kind(&self) -> ObjectiveKind {
        match self.objective {
            ObjectiveName::Mle => ObjectiveKind::Likelihood,
            ObjectiveName::Label => ObjectiveKind::Labelwise { lambda: self.lambda },
            ObjectiveName::Auc => ObjectiveKind::Auc { degree: self.degree },
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Network shape: `layers=<hidden layers>,neurons=<width>,window=<odd>`.
    #[arg(long, default_value = "layers=5,neurons=50,window=11")]
    arch: String,
    #[arg(long, value_enum, default_value = "sigmoid")]
    activation: ActivationName,
}

#[derive(Args, Debug, Clone)]
struct OptimArgs {
    /// L2 penalty coefficient.
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Half-width of the uniform initialization of convolution weights and U.
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Stop when the gradient max-norm falls below this.
    #[arg(long, default_value_t = 1e-5)]
    grad_tol: f64,
    /// L-BFGS history length.
    #[arg(long, default_value_t = 10)]
    memory: usize,
}

impl OptimArgs {
    fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            memory: self.memory,
            max_iterations: self.max_iter,
            grad_tolerance: self.grad_tol,
            ..LbfgsConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[command(flatten)]
    objective: ObjectiveArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "mle")]
    objective: ObjectiveName,
    #[arg(long, default_value_t = 7)]
    degree: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    /// Test hook: perturb one analytic gradient entry.
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

#[derive(Args, Debug, Clone)]
struct SynthSpecArgs {
    /// Number of sequences.
    #[arg(long, default_value_t = 200)]
    sequences: usize,
    /// Sequence length, either `N` or `MIN..MAX`.
    #[arg(long, default_value = "100")]
    length: String,
    /// Alphabet size (defaults to the number of priors).
    #[arg(long)]
    labels: Option<usize>,
    /// Comma-separated label priors (default: uniform over --labels, or 0.5,0.5).
    #[arg(long)]
    priors: Option<String>,
    /// Extra self-transition probability.
    #[arg(long, default_value_t = 0.8)]
    stickiness: f64,
    /// Mean shift of a label's feature.
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
    /// Features per position (default: one per label).
    #[arg(long)]
    feature_dim: Option<usize>,
}

impl SynthSpecArgs {
    fn spec(&self, seed: u64) -> Result<SyntheticSpec> {
        let priors = match (&self.priors, self.labels) {
            (Some(p), _) => parse_list(p)?,
            (None, Some(n)) if n > 0 => vec![1.0 / n as f64; n],
            (None, _) => vec![0.5, 0.5],
        };
        let alphabet_size = self.labels.unwrap_or(priors.len());
        Ok(SyntheticSpec {
            num_sequences: self.sequences,
            length_range: parse_length(&self.length)?,
            alphabet_size,
            label_priors: priors,
            transition_stickiness: self.stickiness,
            feature_dim: self.feature_dim.unwrap_or(alphabet_size),
            emission_separation: self.separation,
            seed,
        })
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    spec: SynthSpecArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    spec: SynthSpecArgs,
    /// Held-out sequences.
    #[arg(long, default_value_t = 100)]
    test_sequences: usize,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    #[arg(long, default_value_t = DEFAULT_DEGREE)]
    degree: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Write every report as a JSON array.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("'{t}' is not a number in '{s}'")))
        })
        .collect()
}

fn parse_length(s: &str) -> Result<(usize, usize)> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("invalid length '{s}'")))
    };
    match s.split_once("..") {
        Some((a, b)) => Ok((num(a)?, num(b)?)),
        None => {
            let n = num(s)?;
            Ok((n, n))
        }
    }
}

/// Parse the `--arch` grammar; keys may be omitted and default to the
/// standard 5 × 50 network with window 11.
fn parse_arch(s: &str, input_dim: usize, activation: Activation) -> Result<NetworkArch> {
    let (mut layers, mut neurons, mut window) = (DEFAULT_HIDDEN_LAYERS, DEFAULT_NEURONS, DEFAULT_WINDOW);
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value in --arch, got '{part}'")))?;
        let v: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("--arch {k}: '{v}' is not a count")))?;
        match k.trim() {
            "layers" => layers = v,
            "neurons" => neurons = v,
            "window" => window = v,
            other => return Err(Error::Config(format!("unknown --arch key '{other}'"))),
        }
    }
    NetworkArch::uniform(input_dim, layers, neurons, window, activation)
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_train(common: &Common, a: &TrainArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let arch = parse_arch(&a.model.arch, data.feature_dim(), a.model.activation.into())?;
    let cfg = TrainConfig {
        objective: a.objective.kind(),
        reg: RegConfig { l2: a.optim.l2 },
        init: InitConfig {
            seed: common.seed,
            scale: a.optim.init_scale,
        },
        lbfgs: a.optim.lbfgs(),
    };
    info!(
        "training {} on {} sequences ({} positions)",
        cfg.objective.short_name(),
        data.sequences.len(),
        data.total_positions()
    );
    let (model, trace) = train(&data, &arch, &cfg)?;
    print!("{}", trace_tsv(&trace));
    model.save(&a.model_out)?;
    info!("stopped: {:?}; model written to {}", trace.stop, a.model_out.display());
    Ok(())
}

fn load_pair(model: &Path, data: &Path) -> Result<(Model, deepcnf::seqdata::Dataset)> {
    let model = Model::load(model)?;
    let data = load_dataset(data)?;
    model.check_data(&data.alphabet, data.feature_dim())?;
    Ok((model, data))
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let (model, data) = load_pair(&a.model, &a.data)?;
    let preds = predict_dataset(&model.params, &data)?;
    let text = format_predictions(&data, &preds)?;
    match &a.out {
        Some(p) => write_output(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let (model, data) = load_pair(&a.model, &a.data)?;
    let preds = predict_dataset(&model.params, &data)?;
    let report = report_from_predictions(&data, &preds)?;
    print!("{}\n{}", report.to_table(), report.to_text());
    if let Some(p) = &a.json_out {
        write_output(p, &(report.to_json() + "\n"))?;
    }
    Ok(())
}

fn cmd_gradcheck(common: &Common, a: &GradcheckArgs) -> Result<bool> {
    let objective = ObjectiveArgs {
        objective: a.objective,
        degree: a.degree,
        lambda: a.lambda,
    }
    .kind();
    let cfg = GradcheckConfig {
        objective,
        seed: common.seed,
        epsilon: a.epsilon,
        tolerance: a.tolerance,
        l2: a.l2,
        corrupt: a.corrupt_gradient,
    };
    let r = gradcheck(&cfg)?;
    println!("objective={}", objective.short_name());
    println!("parameters={}", r.num_params);
    println!("max_relative_error={:.3e}", r.max_relative_error);
    println!("worst_coordinate={}", r.worst_coordinate);
    println!("analytic={:.10e}", r.analytic);
    println!("numeric={:.10e}", r.numeric);
    println!("tolerance={:.1e}", a.tolerance);
    println!("result={}", if r.passed { "pass" } else { "fail" });
    Ok(r.passed)
}

fn cmd_synth(common: &Common, a: &SynthArgs) -> Result<()> {
    let data = generate_synthetic(&a.spec.spec(common.seed)?)?;
    save_dataset(&data, &a.out)?;
    let freq = label_frequencies(&data)?;
    info!("label frequencies {freq:?}");
    Ok(())
}

fn cmd_bench(common: &Common, a: &BenchArgs) -> Result<()> {
    let mut reports: Vec<BenchReport> = Vec::new();
    for k in 0..a.repeats.max(1) {
        let seed = common.seed + k;
        let spec = a.spec.spec(seed)?;
        let arch = parse_arch(&a.model.arch, spec.feature_dim, a.model.activation.into())?;
        let mut cfg = BenchConfig::new(spec, a.test_sequences, arch);
        cfg.lambda = a.lambda;
        cfg.degree = a.degree;
        cfg.l2 = a.optim.l2;
        cfg.init_scale = a.optim.init_scale;
        cfg.lbfgs = a.optim.lbfgs();
        let report = run_bench(&cfg)?;
        println!("seed {seed}");
        println!("{}", report.to_table());
        reports.push(report);
    }
    if reports.len() > 1 {
        let wins = |f: &dyn Fn(&BenchReport) -> bool| reports.iter().filter(|r| f(r)).count();
        let auc_wins = wins(&|r| r.results[2].minority_auc.unwrap_or(0.0) >= r.results[1].minority_auc.unwrap_or(0.0));
        let mcc_wins =
            wins(&|r| r.results[2].test.mean_mcc.unwrap_or(-1.0) > r.results[1].test.mean_mcc.unwrap_or(-1.0));
        println!("auc vs label: minority AUC >= in {auc_wins}/{}, mean Mcc > in {mcc_wins}/{}", reports.len(), reports.len());
    }
    if let Some(p) = &a.json_out {
        write_output(p, &(serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n"))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            warn!("could not configure the thread pool: {e}");
        }
    }
    match &cli.command {
        Command::Train(a) => cmd_train(&cli.common, a).map(|_| true),
        Command::Predict(a) => cmd_predict(a).map(|_| true),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(&cli.common, a),
        Command::Synth(a) => cmd_synth(&cli.common, a).map(|_| true),
        Command::Bench(a) => cmd_bench(&cli.common, a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
