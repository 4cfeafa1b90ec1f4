//! Command-line harness: run one algorithm with seeded restarts, compare
//! several algorithms, materialize synthetic datasets and inspect manifests.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines;
use crate::data_io::{self, SyntheticSpec};
use crate::error::{Error, Result};
use crate::kernel::KernelSet;
use crate::metrics::{aggregate, AggregateReport, MetricTriple};
use crate::simple_mkkm::{self, SolveResult, SolverOptions};
use crate::spectral::ClusterLabels;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Simplemkkm,
    KammR,
    KammA,
    Mkkm,
    MkkmMm,
    AvgKkm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Simplemkkm => "simplemkkm",
            Algorithm::KammR => "kamm-r",
            Algorithm::KammA => "kamm-a",
            Algorithm::Mkkm => "mkkm",
            Algorithm::MkkmMm => "mkkm-mm",
            Algorithm::AvgKkm => "avg-kkm",
        }
    }

    pub fn run(self, ks: &KernelSet, k: usize, opts: &SolverOptions, seed: u64) -> Result<SolveResult> {
        match self {
            Algorithm::Simplemkkm => simple_mkkm::solve(ks, k, opts, seed),
            Algorithm::KammR => simple_mkkm::solve_kamm_r(ks, k, opts, seed),
            Algorithm::KammA => baselines::kamm_a(ks, k, opts, seed).map(|(r, _)| r),
            Algorithm::Mkkm => baselines::mkkm(ks, k, opts, seed).map(|(r, _)| r),
            Algorithm::MkkmMm => baselines::mkkm_mm(ks, k, opts, seed).map(|(r, _)| r),
            Algorithm::AvgKkm => baselines::avg_kkm(ks, k, opts, seed),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "simplemkkm", version, about = "Multiple kernel k-means clustering toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one algorithm with seeded restarts and write results.
    Run(RunArgs),
    /// Run several algorithms on one dataset and emit a comparison table.
    Bench(BenchArgs),
    /// Materialize a synthetic spec as a manifest directory.
    Gen(GenArgs),
    /// Print a summary of a manifest's kernels and labels.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
#[group(id = "input", required = true, multiple = false)]
pub struct InputArgs {
    /// Dataset manifest (manifest.toml).
    #[arg(long, group = "input")]
    pub manifest: Option<PathBuf>,
    /// Synthetic dataset spec (TOML), generated in memory.
    #[arg(long, group = "input")]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Number of clusters; defaults to the dataset's k_true.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub restarts: usize,
    /// Restart i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip writing per-iteration traces.
    #[arg(long = "no-trace")]
    pub no_trace: bool,
    /// Worker threads for restarts (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long = "algo", value_enum)]
    pub algo: Algorithm,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated or repeated algorithm names.
    #[arg(long = "algo", value_enum, value_delimiter = ',', num_args = 1..)]
    pub algos: Vec<Algorithm>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Resolved settings of one `run`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub restarts: usize,
    pub base_seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub out: PathBuf,
    pub write_trace: bool,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..SolverOptions::default()
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and executes the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Gen(a) => cmd_gen(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

struct Input {
    kernels: KernelSet,
    labels: Option<ClusterLabels>,
    k_hint: Option<usize>,
}

fn load_input(input: &InputArgs) -> CliResult<Input> {
    if let Some(path) = &input.manifest {
        let ds = data_io::load_dataset(path)?;
        let k_hint = ds.manifest.k_true.or_else(|| ds.labels.as_ref().map(ClusterLabels::distinct));
        return Ok(Input {
            kernels: ds.kernels,
            labels: ds.labels,
            k_hint,
        });
    }
    let path = input.spec.as_ref().expect("clap enforces one input");
    let spec = SyntheticSpec::read(path).map_err(|e| match e {
        Error::InvalidInput(msg) => CliError::Usage(msg),
        other => CliError::Runtime(other),
    })?;
    let (kernels, labels) = data_io::generate(&spec)?;
    Ok(Input {
        kernels,
        labels: Some(labels),
        k_hint: Some(spec.k),
    })
}

fn resolve_config(algorithm: Algorithm, common: &CommonArgs, input: &Input) -> CliResult<RunConfig> {
    let k = common
        .k
        .or(input.k_hint)
        .ok_or_else(|| CliError::Usage("--k is required when the dataset declares no k_true or labels".into()))?;
    if common.restarts == 0 {
        return Err(CliError::Usage("--restarts must be at least 1".into()));
    }
    if common.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let config = RunConfig {
        algorithm,
        k,
        restarts: common.restarts,
        base_seed: common.seed,
        tol: common.tol,
        max_iter: common.max_iter,
        out: common.out.clone(),
        write_trace: !common.no_trace,
        jobs: common.jobs,
    };
    config.solver_options().validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

/// Outcome of one restart.
#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub restart: usize,
    pub seed: u64,
    pub result: SolveResult,
    pub metrics: Option<MetricTriple>,
    /// Solver wall time (excludes I/O).
    pub seconds: f64,
}

/// Executes restarts `0..restarts` with seeds `base_seed + i`, optionally in
/// parallel; results come back in restart order.
pub fn run_restarts(ks: &KernelSet, labels: Option<&ClusterLabels>, config: &RunConfig) -> Result<Vec<RestartOutcome>> {
    let opts = config.solver_options();
    let one = |i: usize| -> Result<RestartOutcome> {
        let seed = config.base_seed.wrapping_add(i as u64);
        let start = Instant::now();
        let result = config.algorithm.run(ks, config.k, &opts, seed)?;
        let seconds = start.elapsed().as_secs_f64();
        let metrics = labels.map(|t| MetricTriple::evaluate(&result.labels, t)).transpose()?;
        Ok(RestartOutcome {
            restart: i,
            seed,
            result,
            metrics,
            seconds,
        })
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = config.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?;
    pool.install(|| (0..config.restarts).into_par_iter().map(one).collect())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    restart: usize,
    seed: u64,
    objective: f64,
    iterations: usize,
    converged: bool,
    gamma: &'a [f64],
    metrics: Option<MetricTriple>,
}

#[derive(Serialize)]
struct ResultsFile<'a> {
    algorithm: &'static str,
    k: usize,
    n: usize,
    m: usize,
    restarts: usize,
    base_seed: u64,
    tol: f64,
    max_iter: usize,
    kernel_names: Vec<String>,
    runs: Vec<RunRecord<'a>>,
    aggregate: Option<AggregateReport>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn gamma_header(m: usize) -> String {
    (0..m).map(|p| format!("gamma_{p}")).collect::<Vec<_>>().join(",")
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes `results.json`, `results.csv`, `aggregate.csv`, `weights.csv` and
/// (unless disabled) `trace.csv` into `config.out`.
pub fn write_run_outputs(
    ks: &KernelSet,
    config: &RunConfig,
    outcomes: &[RestartOutcome],
) -> Result<Option<AggregateReport>> {
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let m = ks.m();
    let triples: Option<Vec<MetricTriple>> = outcomes.iter().map(|o| o.metrics).collect();
    let agg = triples.as_deref().map(aggregate);

    let results = ResultsFile {
        algorithm: config.algorithm.name(),
        k: config.k,
        n: ks.n(),
        m,
        restarts: config.restarts,
        base_seed: config.base_seed,
        tol: config.tol,
        max_iter: config.max_iter,
        kernel_names: ks.names(),
        runs: outcomes
            .iter()
            .map(|o| RunRecord {
                restart: o.restart,
                seed: o.seed,
                objective: o.result.objective,
                iterations: o.result.iterations(),
                converged: o.result.converged,
                gamma: o.result.weights.as_slice(),
                metrics: o.metrics,
            })
            .collect(),
        aggregate: agg,
    };
    let json = serde_json::to_string_pretty(&results).expect("results serialize");
    write_file(&config.out.join("results.json"), &(json + "\n"))?;

    let mut csv = String::from("restart,seed,acc,nmi,purity,objective,iterations,converged\n");
    for o in outcomes {
        let (a, nm, p) = o.metrics.map_or((f64::NAN, f64::NAN, f64::NAN), |t| (t.acc, t.nmi, t.purity));
        let _ = writeln!(
            csv,
            "{},{},{a},{nm},{p},{},{},{}",
            o.restart,
            o.seed,
            o.result.objective,
            o.result.iterations(),
            o.result.converged
        );
    }
    write_file(&config.out.join("results.csv"), &csv)?;

    let mut agg_csv = String::from("metric,mean,std,count\n");
    if let Some(a) = &agg {
        for (name, ms) in [("acc", a.acc), ("nmi", a.nmi), ("purity", a.purity)] {
            let _ = writeln!(agg_csv, "{name},{},{},{}", ms.mean, ms.std, a.count);
        }
    }
    write_file(&config.out.join("aggregate.csv"), &agg_csv)?;

    let mut weights = format!("restart,{}\n", ks.names().join(","));
    for o in outcomes {
        let _ = writeln!(weights, "{},{}", o.restart, join_floats(o.result.weights.as_slice()));
    }
    write_file(&config.out.join("weights.csv"), &weights)?;

    if config.write_trace {
        let mut trace = format!("restart,iter,objective,alpha,{},eigen_gap\n", gamma_header(m));
        for o in outcomes {
            for r in &o.result.trace.iterations {
                let _ = writeln!(
                    trace,
                    "{},{},{},{},{},{}",
                    o.restart,
                    r.iter,
                    r.objective,
                    r.alpha,
                    join_floats(&r.gamma),
                    r.eigen_gap
                );
            }
        }
        write_file(&config.out.join("trace.csv"), &trace)?;
    }
    Ok(agg)
}

fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let input = load_input(&args.input)?;
    let config = resolve_config(args.algo, &args.common, &input)?;
    let outcomes = run_restarts(&input.kernels, input.labels.as_ref(), &config)?;
    let agg = write_run_outputs(&input.kernels, &config, &outcomes)?;
    let seconds: f64 = outcomes.iter().map(|o| o.seconds).sum();
    println!(
        "{}: {} restarts, n = {}, m = {}, k = {}, solver time {seconds:.3}s",
        config.algorithm.name(),
        config.restarts,
        input.kernels.n(),
        input.kernels.m(),
        config.k
    );
    match agg {
        Some(a) => println!(
            "ACC {:.4} ± {:.4}  NMI {:.4} ± {:.4}  purity {:.4} ± {:.4}",
            a.acc.mean, a.acc.std, a.nmi.mean, a.nmi.std, a.purity.mean, a.purity.std
        ),
        None => println!("no ground-truth labels: metrics skipped"),
    }
    println!("results written to {}", config.out.display());
    Ok(())
}

/// One row of the comparison table.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub algorithm: Algorithm,
    pub report: AggregateReport,
    pub seconds: f64,
}

pub fn render_bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("algorithm,acc_mean,acc_std,nmi_mean,nmi_std,purity_mean,purity_std,restarts,seconds\n");
    for r in rows {
        let a = &r.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.algorithm.name(),
            a.acc.mean,
            a.acc.std,
            a.nmi.mean,
            a.nmi.std,
            a.purity.mean,
            a.purity.std,
            a.count,
            r.seconds
        );
    }
    out
}

pub fn render_bench_table(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:<12} {:>17} {:>17} {:>17} {:>10}\n",
        "algorithm", "ACC", "NMI", "purity", "seconds"
    );
    for r in rows {
        let a = &r.report;
        let cell = |ms: crate::metrics::MeanStd| format!("{:.4} ± {:.4}", ms.mean, ms.std);
        let _ = writeln!(
            out,
            "{:<12} {:>17} {:>17} {:>17} {:>10.3}",
            r.algorithm.name(),
            cell(a.acc),
            cell(a.nmi),
            cell(a.purity),
            r.seconds
        );
    }
    out
}

fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    if args.algos.is_empty() {
        return Err(CliError::Usage("--algo needs at least one algorithm".into()));
    }
    let input = load_input(&args.input)?;
    let labels = input
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("bench needs ground-truth labels".into()))?;
    let mut rows = Vec::with_capacity(args.algos.len());
    for &algo in &args.algos {
        let config = resolve_config(algo, &args.common, &input)?;
        let outcomes = run_restarts(&input.kernels, Some(labels), &config)?;
        let triples: Vec<MetricTriple> = outcomes.iter().filter_map(|o| o.metrics).collect();
        rows.push(BenchRow {
            algorithm: algo,
            report: aggregate(&triples),
            seconds: outcomes.iter().map(|o| o.seconds).sum(),
        });
    }
    let out = &args.common.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join("bench.csv"), &render_bench_csv(&rows))?;
    let table = render_bench_table(&rows);
    write_file(&out.join("bench.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let spec = SyntheticSpec::read(&args.spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let (ks, labels) = data_io::generate(&spec)?;
    let manifest = data_io::save(&ks, Some(&labels), &args.out)?;
    println!(
        "wrote {} kernels (n = {}) to {}",
        manifest.m,
        manifest.n,
        args.out.join(data_io::MANIFEST_FILE).display()
    );
    Ok(())
}

/// Human-readable dataset summary, as printed by `inspect`.
pub fn inspect_report(manifest_path: &Path) -> Result<String> {
    let ds = data_io::load_dataset(manifest_path)?;
    let mut out = String::new();
    let _ = writeln!(out, "manifest: {}", manifest_path.display());
    let _ = writeln!(out, "n: {}", ds.kernels.n());
    let _ = writeln!(out, "m: {}", ds.kernels.m());
    let _ = writeln!(out, "trace_normalize: {}", ds.manifest.trace_normalize);
    for (p, (km, r)) in ds.kernels.kernels().iter().zip(&ds.reports).enumerate() {
        let psd = if r.psd {
            "ok".to_string()
        } else if r.repaired {
            format!("repaired ({} negative eigenvalues clipped)", r.clipped_eigenvalues)
        } else {
            "FAILED (not repaired)".to_string()
        };
        let _ = writeln!(
            out,
            "kernel {p} `{}`: trace {}, rank ~{}, eigenvalues [{:.6e}, {:.6e}], psd {psd}",
            km.name(),
            km.trace(),
            r.rank_estimate,
            r.min_eigenvalue,
            r.max_eigenvalue
        );
        if r.asymmetry_warning {
            let _ = writeln!(
                out,
                "  warning: asymmetric input (max |K - K^T| = {:e}), repaired by symmetrization",
                r.max_asymmetry
            );
        }
    }
    match &ds.labels {
        None => {
            let _ = writeln!(out, "labels: none");
        }
        Some(l) => {
            let mut sizes = vec![0usize; l.k()];
            l.as_slice().iter().for_each(|&c| sizes[c] += 1);
            let _ = writeln!(out, "labels: {} entries, {} classes, sizes {:?}", l.len(), l.distinct(), sizes);
        }
    }
    Ok(out)
}

fn cmd_inspect(args: &InspectArgs) -> CliResult<()> {
    print!("{}", inspect_report(&args.manifest)?);
    Ok(())
}
