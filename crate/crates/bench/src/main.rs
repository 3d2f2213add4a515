use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use optlcms::codec;
use optlcms::optimizer::DEFAULT_GROUPS;
use optlcms::score::DEFAULT_NUM_BINS;
use optlcms::{BuildConfig, FrequencyEstimator, OptLcms, QueryModel, ScoreOracle};
use optlcms_bench::{
    gen_zipf, read_stream, run_eval, run_sweep, write_csv, write_stream, BenchError, Method,
    Result, Source, StreamSpec, SweepConfig, Workload,
};

#[derive(Parser)]
#[command(
    name = "optlcms",
    version,
    about = "Score-partitioned count-min sketches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic Zipf stream, one token per line.
    Gen(GenArgs),
    /// Optimise and fill a sketch from a stream file, then serialise it.
    Build(BuildArgs),
    /// Load a serialised sketch and report its error on a stream.
    Eval(EvalArgs),
    /// Run methods across budgets, query modes and seeds; emits CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ZipfArgs {
    #[arg(long, default_value_t = 1.0)]
    zipf_exponent: f64,
    #[arg(long, default_value_t = 100_000)]
    support: u64,
    #[arg(long, default_value_t = 1_000_000)]
    length: u64,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    zipf: ZipfArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Tuning {
    /// Overrides epsilon = e * b / M.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GROUPS)]
    groups: usize,
    #[arg(long, default_value_t = DEFAULT_NUM_BINS)]
    bins: usize,
    #[arg(long, default_value_t = 4)]
    counter_bytes: usize,
    #[arg(long, default_value_t = 20)]
    ub_bytes: usize,
    /// Leading fraction of the stream used to train the scorer.
    #[arg(long, default_value_t = 0.2)]
    train_fraction: f64,
}

impl Tuning {
    fn config(&self, mode: QueryModel, seed: u64) -> BuildConfig {
        BuildConfig {
            max_groups: self.groups,
            num_bins: self.bins,
            query_model: mode,
            counter_bytes: self.counter_bytes,
            ub_bytes: self.ub_bytes,
            epsilon: self.epsilon,
            seed,
            ..BuildConfig::default()
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    /// Stream file: one token per line, or `token<TAB>count`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    memory_bytes: usize,
    #[arg(long, default_value = "uniform")]
    query_mode: QueryModel,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    tuning: Tuning,
    /// Print the optimised plan.
    #[arg(long)]
    explain: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Serialised sketch written by `build`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "uniform")]
    query_mode: QueryModel,
    /// Defaults to the epsilon the sketch was planned with.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Append the report as CSV here instead of printing key=value lines.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated budgets in bytes.
    #[arg(long, value_delimiter = ',', default_values_t = [100_000usize, 250_000, 500_000, 1_000_000, 2_000_000, 4_000_000])]
    memory_bytes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = Method::ALL)]
    methods: Vec<Method>,
    /// Both modes when omitted.
    #[arg(long)]
    query_mode: Option<QueryModel>,
    /// First seed; seeds run from here.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Read the stream from a file instead of generating one.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    zipf: ZipfArgs,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| BenchError::io(path, e))?,
    ))
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn stdout_err(e: io::Error) -> BenchError {
    BenchError::io(Path::new("<stdout>"), e)
}

fn gen(args: GenArgs) -> Result<()> {
    let spec = StreamSpec {
        source: Source::Synthetic,
        zipf_exponent: args.zipf.zipf_exponent,
        support_size: args.zipf.support,
        stream_length: args.zipf.length,
        seed: args.seed,
    };
    let stream = gen_zipf(&spec)?;
    let path = args.out.clone().unwrap_or_else(|| "<stdout>".into());
    write_stream(&stream, output(&args.out)?).map_err(|e| BenchError::io(&path, e))
}

fn build(args: BuildArgs) -> Result<()> {
    let workload = Workload::new(read_stream(&args.input)?, args.tuning.train_fraction)?;
    let config = args.tuning.config(args.query_mode, args.seed);
    let started = Instant::now();
    let oracle = (*workload.oracle).clone();
    let sketch = OptLcms::build(oracle, &workload.stream, args.memory_bytes, &config)?;
    let seconds = started.elapsed().as_secs_f64();
    if args.explain {
        let mut out = io::stdout().lock();
        write!(out, "{}", sketch.plan().explain()).map_err(stdout_err)?;
        writeln!(out, "realized_ub_keys={}", sketch.unique_bucket().len()).map_err(stdout_err)?;
        writeln!(out, "accounted_memory_bytes={}", sketch.memory_bytes()).map_err(stdout_err)?;
        writeln!(out, "model_bytes={}", sketch.oracle().footprint_bytes()).map_err(stdout_err)?;
        writeln!(out, "build_seconds={seconds:.6}").map_err(stdout_err)?;
    }
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        codec::write_to(&sketch, &mut w).map_err(|e| BenchError::io(path, e))?;
        w.flush().map_err(|e| BenchError::io(path, e))?;
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let file = File::open(&args.model).map_err(|e| BenchError::io(&args.model, e))?;
    let sketch = codec::read_from(io::BufReader::new(file))
        .map_err(|e| BenchError::io(&args.model, e))??;
    let stream = read_stream(&args.input)?;
    let epsilon = args.epsilon.unwrap_or(sketch.plan().epsilon);
    let metrics = run_eval(&sketch, &stream.unique_counts(), args.query_mode, epsilon);
    let report = optlcms_bench::EvalReport {
        method: Method::OptLcms.as_str().into(),
        memory_bytes: sketch.memory_bytes(),
        model_bytes: sketch.oracle().footprint_bytes(),
        epsilon,
        intolerable_prob: metrics.intolerable_prob,
        mean_error: metrics.mean_error,
        build_seconds: 0.0,
        seed: args.seed,
        query_mode: args.query_mode,
        predicted_ub_keys: Some(sketch.plan().ub_keys),
        realized_ub_keys: Some(sketch.unique_bucket().len() as u64),
        failure_bound: Some(sketch.plan().objective()),
    };
    match &args.out {
        Some(path) => {
            write_csv(&[report], create(path)?).map_err(|e| BenchError::io(path, e.into()))
        }
        None => {
            let mut out = io::stdout().lock();
            let lines = [
                format!("method={}", report.method),
                format!("memory_bytes={}", report.memory_bytes),
                format!("model_bytes={}", report.model_bytes),
                format!("query_mode={}", report.query_mode),
                format!("epsilon={}", report.epsilon),
                format!("queries={}", metrics.queries),
                format!("intolerable_prob={}", report.intolerable_prob),
                format!("mean_error={}", report.mean_error),
                format!("failure_bound={}", sketch.plan().objective()),
                format!("predicted_ub_keys={}", sketch.plan().ub_keys),
                format!("realized_ub_keys={}", sketch.unique_bucket().len()),
            ];
            for l in lines {
                writeln!(out, "{l}").map_err(stdout_err)?;
            }
            Ok(())
        }
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    let source = match args.input {
        Some(p) => Source::File(p),
        None => Source::Synthetic,
    };
    let config = SweepConfig {
        methods: args.methods,
        memory_list: args.memory_bytes,
        spec: StreamSpec {
            source,
            zipf_exponent: args.zipf.zipf_exponent,
            support_size: args.zipf.support,
            stream_length: args.zipf.length,
            seed: args.seed,
        },
        query_modes: match args.query_mode {
            Some(m) => vec![m],
            None => QueryModel::ALL.to_vec(),
        },
        seeds: (args.seed..args.seed + args.seeds).collect(),
        train_fraction: args.tuning.train_fraction,
        build: args.tuning.config(QueryModel::Uniform, args.seed),
    };
    let reports = run_sweep(&config)?;
    let path = args.out.clone().unwrap_or_else(|| "<stdout>".into());
    write_csv(&reports, output(&args.out)?).map_err(|e| BenchError::io(&path, e.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Build(a) => build(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
