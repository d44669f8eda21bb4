//! `cafs`: command-line front end for causally admissible feature selection.
//!
//! Exit status is 0 on success, 1 on any input or I/O error and 2 when a
//! verification run finds a violation.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cafs::analysis::{c_sum, reachable_point, MonteCarloOptions};
use cafs::experiment::{run_experiment, write_outputs, ExperimentConfig};
use cafs::graph::random::{backdoor_sweep, theorem10_sweep, SweepReport};
use cafs::graph::{parse_dag, CausalDag};
use cafs::optimizer::{optimize, OptimizeOptions, PriceBox, RobustProblem};
use cafs::regression::{fit, LinearModel, ModelRecord};
use cafs::selection::{select, Method, Scaling, SelectionOptions};
use cafs::sem::{generate_network, generate_sem, Dataset, LinearSem, SemConfig, SemParams};
use cafs::seed::rng_from_seed;
use cafs::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cafs", version, about = "Causally admissible feature selection for price optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a causal graph file.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Generate linear SEMs and sample from them.
    #[command(subcommand)]
    Sem(SemCommand),
    /// Select features with the group-lasso Markov blanket.
    Select(SelectArgs),
    /// Least-squares fit on selected features.
    Fit(FitArgs),
    /// Robust price optimization with a fitted model.
    Optimize(OptimizeArgs),
    /// Monte-Carlo error decomposition at one price and feature state.
    Decompose(DecomposeArgs),
    /// Run the FS versus CF study.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Brute-force verification of the adjustment theorems on random networks.
    #[command(subcommand)]
    Verify(VerifyCommand),
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Report structural assumptions and answer back-door queries.
    Check {
        file: PathBuf,
        /// Back-door query `X/Y/S`, each part a comma-separated label list; S may be empty.
        #[arg(long = "backdoor", value_name = "X/Y/S")]
        backdoor: Vec<String>,
        /// External labels whose premise of the feature-set criterion is checked.
        #[arg(long, value_name = "LABELS", num_args = 0..=1, default_missing_value = "")]
        premise: Option<String>,
    },
}

#[derive(Subcommand)]
enum SemCommand {
    /// Draw a random network and SEM; prints its parameters as JSON.
    Generate {
        #[arg(long, default_value_t = 10)]
        products: usize,
        #[arg(long, default_value_t = 10)]
        features: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 100.0)]
        noise_var: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample observational records from a SEM parameter file as CSV.
    Sample {
        #[arg(long)]
        sem: PathBuf,
        #[arg(long)]
        records: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fs,
    Cf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    Raw,
    Standardized,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, default_value_t = 200.0)]
    mu: f64,
    #[arg(long, value_enum, default_value_t = ScalingArg::Raw)]
    scaling: ScalingArg,
    #[arg(long, default_value_t = 1e-6)]
    threshold: f64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Zero-based feature indices, comma separated.
    #[arg(long, default_value = "")]
    kappa: String,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Training data used to estimate the covariances.
    #[arg(long)]
    data: PathBuf,
    /// Values of the selected features, comma separated.
    #[arg(long, default_value = "")]
    z: String,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    box_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    box_hi: f64,
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    sem: PathBuf,
    /// Zero-based feature indices, comma separated.
    #[arg(long, default_value = "")]
    kappa: String,
    /// Price vector; defaults to a reachable sampled point.
    #[arg(long)]
    x: Option<String>,
    /// Full feature vector; required with `--x`.
    #[arg(long)]
    z: Option<String>,
    #[arg(long, default_value_t = 200)]
    records: usize,
    #[arg(long, default_value_t = 200)]
    replications: usize,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Run the study described by a TOML config and write its outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory; overrides the config value.
        #[arg(long, env = "CAFS_OUTPUT_DIR")]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 5)]
    nodes: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Sets passing the feature-set premise on admissible networks.
    Thm10(SweepArgs),
    /// Sets passing the back-door criterion on arbitrary networks.
    Thm3(SweepArgs),
}

enum Outcome {
    Ok,
    VerificationFailed,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::InvalidInput(format!("bad {what} entry `{s}`")))
        })
        .collect()
}

fn labels_to_nodes(dag: &CausalDag, text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|l| dag.find(l).ok_or_else(|| Error::InvalidInput(format!("unknown node `{l}`"))))
        .collect()
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_sem(path: &Path) -> Result<LinearSem> {
    let params: SemParams = serde_json::from_str(&fs::read_to_string(path)?)?;
    LinearSem::from_params(&params)
}

fn load_data(path: &Path) -> Result<Dataset> {
    Dataset::read_csv(fs::File::open(path)?)
}

fn graph_check(file: &Path, backdoor: &[String], premise: Option<&str>) -> Result<Outcome> {
    let dag = parse_dag(&fs::read_to_string(file)?)?;
    let mut report = serde_json::Map::new();
    report.insert("nodes".into(), dag.len().into());
    report.insert("edges".into(), dag.edges().len().into());
    report.insert("temporal_assumption".into(), dag.check_temporal_assumption().into());
    report.insert("external_admissible".into(), dag.check_external_admissible().into());
    let mut queries = Vec::new();
    for q in backdoor {
        let parts: Vec<&str> = q.split('/').collect();
        let [x, y, s] = parts[..] else {
            return Err(Error::InvalidInput(format!("query `{q}` is not X/Y/S")));
        };
        let (x, y, s) = (labels_to_nodes(&dag, x)?, labels_to_nodes(&dag, y)?, labels_to_nodes(&dag, s)?);
        queries.push(serde_json::json!({
            "query": q,
            "satisfies_backdoor": dag.satisfies_backdoor(&x, &y, &s)?,
        }));
    }
    report.insert("backdoor".into(), queries.into());
    if let Some(labels) = premise {
        let kappa = labels_to_nodes(&dag, labels)?;
        report.insert("premise".into(), dag.check_thm10_premise(&kappa)?.into());
    }
    print_json(&report)?;
    Ok(Outcome::Ok)
}

fn run_select(args: &SelectArgs) -> Result<Outcome> {
    let data = load_data(&args.data)?;
    let method = match args.method {
        MethodArg::Fs => Method::Fs,
        MethodArg::Cf => Method::Cf,
    };
    let opts = SelectionOptions {
        mu: args.mu,
        threshold: args.threshold,
        scaling: match args.scaling {
            ScalingArg::Raw => Scaling::Raw,
            ScalingArg::Standardized => Scaling::Standardized,
        },
        ..SelectionOptions::default()
    };
    let sel = select(&data, method, &opts)?;
    let labels = data.labels();
    let mut json = serde_json::to_value(sel.record())?;
    json["blanket_labels"] = sel.blanket.iter().map(|&v| labels[v].clone()).collect::<Vec<_>>().into();
    print_json(&json)?;
    Ok(Outcome::Ok)
}

fn run_fit(args: &FitArgs) -> Result<Outcome> {
    let data = load_data(&args.data)?;
    let kappa: Vec<usize> = parse_list(&args.kappa, "kappa")?;
    print_json(&fit(&data, &kappa)?.record())?;
    Ok(Outcome::Ok)
}

fn run_optimize(args: &OptimizeArgs) -> Result<Outcome> {
    let record: ModelRecord = serde_json::from_str(&fs::read_to_string(&args.model)?)?;
    let model = LinearModel::from_record(&record)?;
    let data = load_data(&args.data)?;
    let z = DVector::from_vec(parse_list(&args.z, "z")?);
    let bounds = PriceBox::uniform(model.products(), args.box_lo, args.box_hi)?;
    let problem = RobustProblem::from_data(model, &data, args.lambda, bounds)?;
    let opts = OptimizeOptions {
        starts: args.starts,
        seed: args.seed,
        ..OptimizeOptions::default()
    };
    print_json(&optimize(&problem, &z, &opts)?)?;
    Ok(Outcome::Ok)
}

fn run_decompose(args: &DecomposeArgs) -> Result<Outcome> {
    let sem = load_sem(&args.sem)?;
    let kappa: Vec<usize> = parse_list(&args.kappa, "kappa")?;
    let (x, z) = match (&args.x, &args.z) {
        (Some(x), Some(z)) => (DVector::from_vec(parse_list(x, "x")?), DVector::from_vec(parse_list(z, "z")?)),
        (None, None) => reachable_point(&sem, args.seed)?,
        _ => return Err(Error::InvalidInput("give both --x and --z or neither".into())),
    };
    let opts = MonteCarloOptions {
        sample_size: args.records,
        replications: args.replications,
        bootstrap: args.bootstrap,
        seed: args.seed,
    };
    print_json(&c_sum(&sem, &kappa, &x, &z, &opts)?)?;
    Ok(Outcome::Ok)
}

fn run_sweep(args: &SweepArgs, backdoor: bool) -> Result<Outcome> {
    if args.nodes < 3 || args.nodes > 12 {
        return Err(Error::InvalidInput("--nodes must lie in 3..=12".into()));
    }
    let mut rng = rng_from_seed(args.seed);
    let report: SweepReport = if backdoor {
        backdoor_sweep(&mut rng, args.nodes, args.trials, args.tol)?
    } else {
        theorem10_sweep(&mut rng, args.nodes, args.trials, args.tol)?
    };
    print_json(&report)?;
    eprintln!("{} violations", report.violations);
    Ok(if report.violations == 0 {
        Outcome::Ok
    } else {
        Outcome::VerificationFailed
    })
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Graph(GraphCommand::Check { file, backdoor, premise }) => graph_check(&file, &backdoor, premise.as_deref()),
        Command::Sem(SemCommand::Generate {
            products,
            features,
            alpha,
            noise_var,
            seed,
            out,
        }) => {
            let cfg = SemConfig {
                products,
                features,
                alpha,
                noise_var,
                seed,
                ..SemConfig::default()
            };
            let sem = generate_sem(&generate_network(&cfg)?, &cfg)?;
            let text = serde_json::to_string_pretty(&sem.to_params())? + "\n";
            write_or_print(&text, out.as_deref())?;
            Ok(Outcome::Ok)
        }
        Command::Sem(SemCommand::Sample { sem, records, seed, out }) => {
            let data = load_sem(&sem)?.sample(records, seed)?;
            let mut buf = Vec::new();
            data.write_csv(&mut buf)?;
            write_or_print(&String::from_utf8_lossy(&buf), out.as_deref())?;
            Ok(Outcome::Ok)
        }
        Command::Select(args) => run_select(&args),
        Command::Fit(args) => run_fit(&args),
        Command::Optimize(args) => run_optimize(&args),
        Command::Decompose(args) => run_decompose(&args),
        Command::Experiment(ExperimentCommand::Run { config, jobs, output }) => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            let out = run_experiment(&cfg, jobs)?;
            write_outputs(&cfg, &out, &dir)?;
            eprintln!("wrote {} rows to {}", out.rows.len(), dir.display());
            Ok(Outcome::Ok)
        }
        Command::Verify(VerifyCommand::Thm10(args)) => run_sweep(&args, false),
        Command::Verify(VerifyCommand::Thm3(args)) => run_sweep(&args, true),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
