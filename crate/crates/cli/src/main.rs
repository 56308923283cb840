use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mlcm_core::bench::{combine, run_bench_with_threads, BenchConfig, Method};
use mlcm_core::io;
use mlcm_core::metrics::{evaluate, ApVariant, EvalOptions};
use mlcm_core::synth::{generate, SynthSpec};
use mlcm_core::{ConsensusConfig, MlcmError, TiePolicy};
use serde_json::json;

#[derive(Parser)]
#[command(name = "mlcm", version, about = "Multilabel consensus maximization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic ground truth and base-model predictions.
    Synth(SynthArgs),
    /// Combine base-model prediction files into one score file.
    Combine(CombineArgs),
    /// Evaluate a score file against ground truth.
    Eval(EvalArgs),
    /// Compare all methods over several seeds of synthetic data.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mv,
    BgcmBr,
    MlcmR,
    MlcmA,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mv => Method::Mv,
            MethodArg::BgcmBr => Method::BgcmBr,
            MethodArg::MlcmR => Method::MlcmR,
            MethodArg::MlcmA => Method::MlcmA,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    Strict,
    Half,
}

impl From<TieArg> for TiePolicy {
    fn from(t: TieArg) -> Self {
        match t {
            TieArg::Strict => TiePolicy::Strict,
            TieArg::Half => TiePolicy::Half,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Anchor weight of group nodes to their own label (MLCM-r, BGCM-BR).
    #[arg(long)]
    alpha: Option<f64>,
    /// Maximum MLCM-a iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Early-stop threshold on the max-abs change between iterates.
    #[arg(long)]
    tol: Option<f64>,
    /// Diagonal loading of the MLCM-a covariance.
    #[arg(long)]
    ridge: Option<f64>,
    /// Column-center scores before estimating the MLCM-a covariance.
    #[arg(long)]
    center: bool,
}

impl SolverArgs {
    fn resolve(&self, tie: TiePolicy, seed: u64) -> ConsensusConfig {
        let d = ConsensusConfig::default();
        ConsensusConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            iters: self.iters.unwrap_or(d.iters),
            tol: self.tol.unwrap_or(d.tol),
            ridge: self.ridge.unwrap_or(d.ridge),
            tie_policy: tie,
            center: self.center,
            seed,
        }
    }
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long, value_enum, default_value = "strict")]
    tie_policy: TieArg,
    /// Use average precision at relevant ranks instead of over all cutoffs.
    #[arg(long)]
    std_ap: bool,
}

impl EvalFlags {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            tie_policy: self.tie_policy.into(),
            ap_variant: if self.std_ap { ApVariant::Standard } else { ApVariant::Cutoff },
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// JSON spec file; individual flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    prototypes: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    flip_in: Option<f64>,
    #[arg(long)]
    flip_out: Option<f64>,
    /// Number of base models.
    #[arg(long)]
    models: Option<usize>,
    /// Flip rate applied to every base model.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for truth.csv, pred_{k}.csv and spec.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CombineArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output score CSV.
    #[arg(long)]
    out: PathBuf,
    /// Base-model prediction CSVs, in model order.
    #[arg(required = true)]
    predictions: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[command(flatten)]
    flags: EvalFlags,
    /// Method name recorded in the report.
    #[arg(long, default_value = "unknown")]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional path for the report JSON (always printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON synthetic spec; defaults to the built-in one.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Seeds as a list (1,2,3) or inclusive range (1..10).
    #[arg(long, default_value = "1..10")]
    seeds: String,
    /// Comma-separated methods.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mv,bgcm-br,mlcm-r,mlcm-a")]
    methods: Vec<MethodArg>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    flags: EvalFlags,
    /// Output directory for bench.json and bench.md.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, MlcmError> {
    let bad = || MlcmError::InvalidConfig(format!("cannot parse seeds `{text}`"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn thread_cap() -> usize {
    std::env::var("MLCM_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn ensure_dir(dir: &Path) -> Result<(), MlcmError> {
    std::fs::create_dir_all(dir).map_err(|source| MlcmError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn cmd_synth(args: SynthArgs) -> Result<(), MlcmError> {
    let mut spec = match &args.spec {
        Some(p) => io::read_json::<SynthSpec>(p)?,
        None => SynthSpec::default(),
    };
    if let Some(v) = args.n {
        spec.n = v;
    }
    if let Some(v) = args.l {
        spec.l = v;
    }
    if let Some(v) = args.prototypes {
        spec.prototypes = v;
    }
    if let Some(v) = args.density {
        spec.prototype_density = v;
    }
    if let Some(v) = args.flip_in {
        spec.flip_in = v;
    }
    if let Some(v) = args.flip_out {
        spec.flip_out = v;
    }
    if args.models.is_some() || args.noise.is_some() {
        let m = args.models.unwrap_or(spec.model_noise.len());
        let noise = args.noise.unwrap_or_else(|| spec.model_noise.first().copied().unwrap_or(0.25));
        spec.model_noise = vec![noise; m];
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }

    let (truth, set) = generate(&spec)?;
    ensure_dir(&args.out)?;
    io::save_label_matrix(&truth, args.out.join("truth.csv"))?;
    for (y, path) in set.models().iter().zip(io::prediction_paths(&args.out, set.m())) {
        io::save_label_matrix(y, path)?;
    }
    io::write_json(&spec, args.out.join("spec.json"))?;
    println!("{}", serde_json::to_string_pretty(&spec)?);
    Ok(())
}

fn cmd_combine(args: CombineArgs) -> Result<(), MlcmError> {
    let method: Method = args.method.into();
    let config = args.solver.resolve(TiePolicy::default(), args.seed);
    config.validate()?;
    let echo = json!({
        "method": method.id(),
        "config": config,
        "predictions": args.predictions,
        "out": args.out,
    });
    println!("{}", serde_json::to_string_pretty(&echo)?);

    let set = io::load_prediction_set(&args.predictions)?;
    let scores = combine(method, &set, &config)?;
    io::save_scores(&scores, &args.out)
}

fn cmd_eval(args: EvalArgs) -> Result<(), MlcmError> {
    let scores = io::load_scores(&args.scores)?;
    let truth = io::load_label_matrix(&args.truth)?;
    let opts = args.flags.options();
    let report = evaluate(&scores, &truth, &opts)?;
    let out = json!({
        "method": args.method,
        "metrics": report,
        "config": opts,
        "seed": args.seed,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    if let Some(path) = &args.out {
        io::write_json(&out, path)?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), MlcmError> {
    let spec = match &args.spec {
        Some(p) => io::read_json::<SynthSpec>(p)?,
        None => SynthSpec::default(),
    };
    let opts = args.flags.options();
    let config = BenchConfig {
        spec,
        seeds: parse_seeds(&args.seeds)?,
        methods: args.methods.iter().map(|&m| m.into()).collect(),
        consensus: args.solver.resolve(opts.tie_policy, 0),
        eval: opts,
    };
    let report = run_bench_with_threads(&config, thread_cap())?;
    let table = report.to_markdown();
    print!("{table}");
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        io::write_json(&report, dir.join("bench.json"))?;
        std::fs::write(dir.join("bench.md"), &table).map_err(|source| MlcmError::Io {
            path: dir.join("bench.md"),
            source,
        })?;
    }
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(MlcmError::InvalidConfig(format!(
            "{} benchmark job(s) failed; see report",
            report.failures.len()
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Combine(a) => cmd_combine(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
