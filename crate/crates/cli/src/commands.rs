use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use synergy_core::bounds::{bounds_with_rui, DisagreementConfig, SynergyBounds};
use synergy_core::coupling::greedy_coupling;
use synergy_core::ingest::{run_pipeline, IngestOptions, IngestTables, DEFAULT_K, DEFAULT_PCA_DIM};
use synergy_core::performance::{estimate_for_marginals, estimate_pm, total_information_window};
use synergy_core::pid::{compute_pid_full, compute_rui, compute_rui_labeled, PidResult};
use synergy_core::synthetic::{canonical, run_sweep, write_records_csv, CanonicalName, SweepConfig};
use synergy_core::{io, pairwise_marginals, DiscreteJoint, Error, PairwiseMarginals, SolverConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "synergy-lab", version, about = "Quantify multimodal interactions from discrete marginals")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Redundancy, uniqueness and (with a full joint) synergy.
    Pid(PidArgs),
    /// Lower and upper bounds on synergy from pairwise marginals.
    Bounds(BoundsArgs),
    /// Bounds against true synergy over random joints.
    Sweep(SweepArgs),
    /// Accuracy bounds for the best multimodal classifier.
    Perf(PerfArgs),
    /// Greedy min-entropy coupling of two distributions.
    Couple(CoupleArgs),
    /// Discretize real-valued features into pairwise marginals.
    Discretize(DiscretizeArgs),
    /// Write one of the built-in example joints.
    Canonical(CanonicalArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Joint CSV with columns x1,x2,y,p.
    #[arg(long, conflicts_with_all = ["m1", "m2", "m12"])]
    from_joint: Option<PathBuf>,
    /// p(x1, y) CSV with columns x1,y,p.
    #[arg(long)]
    m1: Option<PathBuf>,
    /// p(x2, y) CSV with columns x2,y,p.
    #[arg(long)]
    m2: Option<PathBuf>,
    /// p(x1, x2) CSV with columns x1,x2,p.
    #[arg(long)]
    m12: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Marginal-constraint tolerance.
    #[arg(long, default_value_t = SolverConfig::default().marginal_tolerance)]
    tol: f64,
    /// Cap on barrier stages per solve.
    #[arg(long, default_value_t = SolverConfig::default().max_outer_iterations)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            marginal_tolerance: self.tol,
            max_outer_iterations: self.max_iters,
            seed: self.seed,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct DisagreementArgs {
    /// Multiplier on the disagreement term.
    #[arg(long)]
    c: Option<f64>,
    /// Relaxed triangle-inequality constant of the label distance.
    #[arg(long, default_value_t = 1.0)]
    c_d: f64,
}

impl DisagreementArgs {
    fn config(&self) -> DisagreementConfig {
        let base = DisagreementConfig::with_c_d(self.c_d);
        match self.c {
            Some(c) => base.with_c(c),
            None => base,
        }
    }
}

#[derive(Debug, Args)]
struct PidArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    disagreement: DisagreementArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Alphabet sizes as `n1,n2,ny`.
    #[arg(long, default_value = "2,2,2", value_parser = parse_dims)]
    dims: (usize, usize, usize),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-sample records.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Run metadata and summary statistics.
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value_t = SolverConfig::default().marginal_tolerance)]
    tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().max_outer_iterations)]
    max_iters: usize,
    #[command(flatten)]
    disagreement: DisagreementArgs,
}

#[derive(Debug, Args)]
struct PerfArgs {
    #[command(flatten)]
    input: InputArgs,
    /// JSON written by `pid`.
    #[arg(long, requires = "bounds_json", conflicts_with_all = ["from_joint", "m1", "m2", "m12"])]
    pid_json: Option<PathBuf>,
    /// JSON written by `bounds`.
    #[arg(long, requires = "pid_json")]
    bounds_json: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    disagreement: DisagreementArgs,
}

#[derive(Debug, Args)]
struct CoupleArgs {
    /// Distribution CSV with columns x,p.
    #[arg(long)]
    p: PathBuf,
    #[arg(long)]
    q: PathBuf,
    /// Where to write the coupling matrix (columns x1,x2,p).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiscretizeArgs {
    /// Directory holding features1.csv, features2.csv, labels1.csv,
    /// labels2.csv and pairs.csv.
    #[arg(long)]
    input_dir: PathBuf,
    /// Receives m1.csv, m2.csv, m12.csv and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_PCA_DIM)]
    pca_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pseudo-count added to every cell.
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
    /// Largest total-variation gap tolerated between shared marginals.
    #[arg(long, default_value_t = IngestOptions::default().tolerance)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct CanonicalArgs {
    #[arg(long)]
    name: CanonicalName,
    #[arg(long)]
    out: PathBuf,
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(format!("expected n1,n2,ny, got {s:?}")),
    }
}

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NonConvergence { .. } => 3,
            e if e.is_data_error() => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

type Outcome = Result<String, Failure>;

/// `value` as a JSON object with the schema version first.
fn payload<T: Serialize>(value: &T) -> Outcome {
    let body = serde_json::to_value(value).map_err(|e| usage(e.to_string()))?;
    let Value::Object(fields) = body else {
        return Err(usage("payload is not a JSON object"));
    };
    let mut out = serde_json::Map::new();
    out.insert("schema".into(), json!(SCHEMA_VERSION));
    out.extend(fields);
    serde_json::to_string_pretty(&Value::Object(out)).map_err(|e| usage(e.to_string()))
}

fn write_json(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, format!("{text}\n")).map_err(|e| Failure::from(Error::Io(e)))
}

fn create(path: &Path) -> Result<File, Failure> {
    File::create(path).map_err(|e| {
        Failure::from(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    })
}

enum Input {
    Joint(DiscreteJoint),
    Marginals(PairwiseMarginals),
}

impl Input {
    fn marginals(&self) -> PairwiseMarginals {
        match self {
            Input::Joint(j) => pairwise_marginals(j),
            Input::Marginals(m) => m.clone(),
        }
    }
}

fn read_input(args: &InputArgs) -> Result<Input, Failure> {
    if let Some(path) = &args.from_joint {
        return Ok(Input::Joint(io::read_joint_file(path)?));
    }
    match (&args.m1, &args.m2, &args.m12) {
        (Some(m1), Some(m2), Some(m12)) => Ok(Input::Marginals(io::read_pairwise_files(m1, m2, m12)?)),
        _ => Err(usage("pass --from-joint, or all of --m1, --m2 and --m12")),
    }
}

fn pid(args: PidArgs) -> Outcome {
    let cfg = args.solver.config();
    let result = match (&args.input.from_joint, &args.input.m1, &args.input.m2, &args.input.m12) {
        (Some(_), ..) => match read_input(&args.input)? {
            Input::Joint(j) => compute_pid_full(&j, &cfg)?,
            Input::Marginals(_) => unreachable!("--from-joint reads a joint"),
        },
        (None, Some(_), Some(_), Some(_)) => compute_rui(&read_input(&args.input)?.marginals(), &cfg)?,
        (None, Some(m1), Some(m2), None) => {
            let (m1, m2) = io::read_labeled_files(m1, m2)?;
            compute_rui_labeled(&m1, &m2, &cfg)?
        }
        _ => return Err(usage("pass --from-joint, or --m1 and --m2 (optionally --m12)")),
    };
    payload(&result)
}

fn solve_bounds(
    m: &PairwiseMarginals,
    solver: &SolverArgs,
    disagreement: &DisagreementArgs,
) -> Result<(PidResult, SynergyBounds), Failure> {
    let cfg = solver.config();
    let dcfg = disagreement.config();
    dcfg.validate()?;
    let rui = compute_rui(m, &cfg)?;
    let sb = bounds_with_rui(m, &rui, &cfg, &dcfg)?;
    Ok((rui, sb))
}

fn bounds(args: BoundsArgs) -> Outcome {
    let m = read_input(&args.input)?.marginals();
    let (_, sb) = solve_bounds(&m, &args.solver, &args.disagreement)?;
    payload(&sb)
}

fn sweep(args: SweepArgs) -> Outcome {
    let cfg = SweepConfig {
        solver: SolverConfig {
            marginal_tolerance: args.tol,
            max_outer_iterations: args.max_iters,
            seed: args.seed,
            ..SolverConfig::default()
        },
        disagreement: args.disagreement.config(),
        jobs: args.jobs,
    };
    let report = run_sweep(args.n, args.dims, &cfg, args.seed)?;
    if let Some(path) = &args.out_csv {
        write_records_csv(&report.records, create(path)?)?;
    }
    let text = payload(&json!({
        "n_samples": report.n_samples,
        "dims": report.dims,
        "seed": report.seed,
        "sampling_law": report.sampling_law,
        "c_effective": report.c_effective,
        "summary": report.summary,
    }))?;
    if let Some(path) = &args.out_json {
        write_json(path, &text)?;
    }
    Ok(text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::from(Error::Io(e)))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn perf(args: PerfArgs) -> Outcome {
    let result = match (&args.pid_json, &args.bounds_json) {
        (Some(p), Some(b)) => {
            let rui: PidResult = read_json(p)?;
            let sb: SynergyBounds = read_json(b)?;
            estimate_pm(total_information_window(&rui, &sb), sb.h_y, sb.y_cardinality)?
        }
        _ => {
            let m = read_input(&args.input)?.marginals();
            let (rui, sb) = solve_bounds(&m, &args.solver, &args.disagreement)?;
            estimate_for_marginals(&m, &rui, &sb)?
        }
    };
    if result.uniform_y_assumption_violated {
        log::warn!("p(y) is far from uniform; the upper accuracy bound assumes uniform labels");
    }
    payload(&result)
}

fn couple(args: CoupleArgs) -> Outcome {
    let p = io::read_distribution_file(&args.p)?;
    let q = io::read_distribution_file(&args.q)?;
    let c = greedy_coupling(&p, &q);
    if let Some(path) = &args.out {
        io::write_matrix(&c.matrix, ["x1", "x2"], create(path)?)?;
    }
    payload(&json!({
        "entropy": c.entropy_bits,
        "glb_entropy": c.glb_entropy_bits,
        "gap": c.gap_bits,
    }))
}

fn discretize(args: DiscretizeArgs) -> Outcome {
    let tables = IngestTables::read_dir(&args.input_dir)?;
    let opts = IngestOptions {
        k: args.k,
        pca_dim: args.pca_dim,
        seed: args.seed,
        smoothing: args.smoothing,
        tolerance: args.tolerance,
    };
    let (m, manifest) = run_pipeline(&tables, &opts)?;
    io::write_pairwise_dir(&m, &args.out_dir)?;
    let text = payload(&manifest)?;
    write_json(&args.out_dir.join("manifest.json"), &text)?;
    Ok(text)
}

fn canonical_cmd(args: CanonicalArgs) -> Outcome {
    io::write_joint(&canonical(args.name), create(&args.out)?)?;
    payload(&json!({ "name": args.name.as_str(), "out": args.out }))
}

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Pid(a) => pid(a),
        Command::Bounds(a) => bounds(a),
        Command::Sweep(a) => sweep(a),
        Command::Perf(a) => perf(a),
        Command::Couple(a) => couple(a),
        Command::Discretize(a) => discretize(a),
        Command::Canonical(a) => canonical_cmd(a),
    }
}
