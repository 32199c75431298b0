//! `fcpca` command-line tool: simulate data, cross-validate, benchmark on
//! train/test pairs, fit and apply saved models.
//!
//! Exit status: 0 on success, 2 for usage errors (bad flags or parameters),
//! 3 for file, format and compatibility errors, 4 for numerical failures.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fcpca::dataio::{load_delimited, load_split, write_delimited, write_results, Delimiter, RawDataset};
use fcpca::experiment::{
    cross_validate, fit_raw, grand_mean_accuracy, predict_raw, resample_benchmark, simulation_study, EvalReport,
    PipelineConfig,
};
use fcpca::simgen::{simulate, BrownianTime, ModelId, SimSpec};
use fcpca::{Error, Execution, FcpcaModel, PriorMode};

const EXIT_USAGE: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "fcpca", version, about = "Functional classwise PCA classifier")]
struct Cli {
    /// Worker threads for folds, resamples and batch work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated data set and write it as `<ID>.tsv`.
    Simulate(SimulateArgs),
    /// Stratified k-fold cross-validation on a data file or simulated design.
    Cv(CvArgs),
    /// Resampled train/test benchmark on an archive pair.
    Benchmark(BenchmarkArgs),
    /// Fit a model on a labelled data file and save it.
    Fit(FitArgs),
    /// Classify the series in a data file with a saved model.
    Predict(PredictArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Design id: TOY, BMDD1-3, BMDV, BMDDV1-2, BMCP, GPDM1-2 or GP3.
    model: ModelId,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(short, long, default_value = ".")]
    out: PathBuf,
    /// Curves per class (default: the design's published size).
    #[arg(long)]
    n_per_class: Option<usize>,
    /// Points per curve.
    #[arg(long, default_value_t = fcpca::simgen::DEFAULT_GRID)]
    m: usize,
    /// Time scale of the Brownian designs: `step` (unit time per sample) or `unit` ([0, 1]).
    #[arg(long, default_value = "step")]
    bm_time: BrownianTime,
    /// Standard deviation of the GP3 white noise.
    #[arg(long, default_value_t = 1.0)]
    gp3_noise_sd: f64,
    /// Phase shift of the second toy class.
    #[arg(long, default_value_t = 1.0)]
    toy_shift: f64,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// key=value file supplying any of: n_basis, order, threshold, priors,
    /// zero_tol, seed, k, resamples. Flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of B-spline basis functions (capped at the series length) [default: 20].
    #[arg(long)]
    n_basis: Option<usize>,
    /// B-spline order [default: 6].
    #[arg(long)]
    order: Option<usize>,
    /// Share of within-class variance kept by each class's components [default: 0.9].
    #[arg(long)]
    threshold: Option<f64>,
    /// Class priors: equal or empirical [default: equal].
    #[arg(long)]
    priors: Option<PriorMode>,
    /// Random seed for folds and resamples [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CvArgs {
    /// Labelled data file (label first, then the series).
    #[arg(required_unless_present = "sim", conflicts_with = "sim")]
    data: Option<PathBuf>,
    /// Cross-validate a simulated design instead of a file.
    #[arg(long)]
    sim: Option<ModelId>,
    /// Simulation repetitions, data seeds `seed..seed+repeats`.
    #[arg(long, default_value_t = 1, requires = "sim")]
    repeats: u64,
    /// Number of folds [default: 10].
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    k: Option<u64>,
    #[command(flatten)]
    model: ModelArgs,
    /// Results CSV (appended to).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Leave the runtime column empty so repeated runs write identical files.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct BenchmarkArgs {
    train: PathBuf,
    test: PathBuf,
    /// Number of resamples, the first being the original split [default: 100].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    resamples: Option<u64>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct FitArgs {
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Model file to write.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    model: PathBuf,
    data: PathBuf,
    /// Write predictions here instead of standard output.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

/// An error that should exit with the usage status.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Settings after merging defaults, the config file and flags.
struct Settings {
    pipeline: PipelineConfig,
    seed: u64,
    k: usize,
    resamples: usize,
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), no + 1)))?;
        out.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| usage(format!("config key `{key}`: cannot parse `{value}`")))
}

fn settings(args: &ModelArgs, k: Option<u64>, resamples: Option<u64>) -> Result<Settings> {
    let mut s = Settings {
        pipeline: PipelineConfig::default(),
        seed: 0,
        k: 10,
        resamples: 100,
    };
    if let Some(path) = &args.config {
        for (key, value) in read_config(path)? {
            match key.as_str() {
                "n_basis" => s.pipeline.n_basis = parse_value(&key, &value)?,
                "order" => s.pipeline.order = parse_value(&key, &value)?,
                "threshold" => s.pipeline.model.var_threshold = parse_value(&key, &value)?,
                "priors" => s.pipeline.model.priors = parse_value(&key, &value)?,
                "zero_tol" => s.pipeline.model.zero_tol = parse_value(&key, &value)?,
                "seed" => s.seed = parse_value(&key, &value)?,
                "k" => s.k = parse_value(&key, &value)?,
                "resamples" => s.resamples = parse_value(&key, &value)?,
                other => return Err(usage(format!("unknown config key `{other}`"))),
            }
        }
    }
    if let Some(v) = args.n_basis {
        s.pipeline.n_basis = v;
    }
    if let Some(v) = args.order {
        s.pipeline.order = v;
    }
    if let Some(v) = args.threshold {
        s.pipeline.model.var_threshold = v;
    }
    if let Some(v) = args.priors {
        s.pipeline.model.priors = v;
    }
    if let Some(v) = args.seed {
        s.seed = v;
    }
    if let Some(v) = k {
        s.k = v as usize;
    }
    if let Some(v) = resamples {
        s.resamples = v as usize;
    }
    if s.k < 2 {
        return Err(usage(format!("k must be at least 2, got {}", s.k)));
    }
    if s.resamples < 1 {
        return Err(usage("resamples must be at least 1"));
    }
    let t = s.pipeline.model.var_threshold;
    if !(t > 0.0 && t <= 1.0) {
        return Err(usage(format!("threshold must lie in (0, 1], got {t}")));
    }
    Ok(s)
}

fn emit(reports: &[EvalReport], out: Option<&Path>, timing: bool) -> Result<()> {
    for r in reports {
        println!("{} seed {}: {}", r.dataset, r.seed, r.summary());
    }
    if reports.len() > 1 {
        println!("grand mean {:.3}", grand_mean_accuracy(reports));
    }
    if let Some(path) = out {
        let records: Vec<_> = reports.iter().flat_map(|r| r.records(timing)).collect();
        write_results(&records, path)?;
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let spec = SimSpec {
        n_per_class: args.n_per_class.unwrap_or_else(|| args.model.default_per_class()),
        m: args.m,
        toy_shift: args.toy_shift,
        gp3_noise_sd: args.gp3_noise_sd,
        bm_time: args.bm_time,
        ..SimSpec::new(args.model, args.seed)
    };
    let raw: RawDataset = simulate(&spec)?.into();
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join(format!("{}.tsv", args.model.name()));
    write_delimited(&raw, &path, Delimiter::Tab)?;
    println!(
        "{}: N={} m={} c={}",
        path.display(),
        raw.len(),
        raw.series_length(),
        raw.class_count()
    );
    Ok(())
}

fn run_cv(args: CvArgs, exec: Execution) -> Result<()> {
    let s = settings(&args.model, args.k, None)?;
    let reports = if let Some(model) = args.sim {
        let seeds: Vec<u64> = (s.seed..s.seed + args.repeats).collect();
        simulation_study(model, &seeds, s.k, &s.pipeline, exec)?
    } else {
        let path = args.data.as_ref().expect("clap requires data or --sim");
        let raw = load_delimited(path, None)?;
        vec![cross_validate(&raw, &s.pipeline, s.k, s.seed, exec)?]
    };
    emit(&reports, args.out.as_deref(), !args.no_timing)
}

fn run_benchmark(args: BenchmarkArgs, exec: Execution) -> Result<()> {
    let s = settings(&args.model, None, args.resamples)?;
    let (raw, n_train) = load_split(&args.train, &args.test)?;
    let report = resample_benchmark(&raw, n_train, &s.pipeline, s.resamples, s.seed, exec)?;
    emit(&[report], args.out.as_deref(), !args.no_timing)
}

fn run_fit(args: FitArgs, exec: Execution) -> Result<()> {
    let s = settings(&args.model, None, None)?;
    let raw = load_delimited(&args.data, None)?;
    let model = fit_raw(&raw, &s.pipeline, exec)?;
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    model.save(&mut w)?;
    w.flush()?;
    let dims: Vec<String> = model.subspaces.iter().map(|s| s.dim().to_string()).collect();
    println!(
        "{}: {} classes, subspace dimensions [{}]",
        args.out.display(),
        model.class_count(),
        dims.join(", ")
    );
    Ok(())
}

fn run_predict(args: PredictArgs, exec: Execution) -> Result<()> {
    let file = File::open(&args.model).with_context(|| format!("opening {}", args.model.display()))?;
    let model = FcpcaModel::load(std::io::BufReader::new(file))?;
    let raw = load_delimited(&args.data, None)?;
    let batch = predict_raw(&model, &raw, exec)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "index\tlabel\tsubspace\tconfidence")?;
    for (i, p) in batch.predictions.iter().enumerate() {
        writeln!(
            out,
            "{i}\t{}\t{}\t{:.6}",
            model.class_labels[p.label], model.class_labels[p.winning_subspace], p.confidence
        )?;
    }
    out.flush()?;
    if let Some(acc) = batch.accuracy {
        eprintln!("accuracy {acc:.3}");
    }
    Ok(())
}

fn configure_threads(jobs: Option<usize>) -> Result<Execution> {
    match jobs {
        Some(0) => Err(usage("--jobs must be at least 1")),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| anyhow::anyhow!("cannot start {n} worker threads: {e}"))?;
            #[cfg(not(feature = "parallel"))]
            log::warn!("built without the parallel feature; ignoring --jobs {n}");
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e {
            _ if e.is_numerical() => EXIT_NUMERICAL,
            Error::Parameter(_)
            | Error::InvalidBasis(_)
            | Error::InvalidInterval { .. }
            | Error::Domain { .. } => EXIT_USAGE,
            _ => EXIT_FORMAT,
        };
    }
    EXIT_FORMAT
}

fn run(cli: Cli) -> Result<()> {
    let exec = configure_threads(cli.jobs)?;
    match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Cv(a) => run_cv(a, exec),
        Command::Benchmark(a) => run_benchmark(a, exec),
        Command::Fit(a) => run_fit(a, exec),
        Command::Predict(a) => run_predict(a, exec),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
