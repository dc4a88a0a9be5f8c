//! `mca` — command-line front end for instance generation, solving, sweeps
//! and the convergence/benchmark experiments.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 internal
//! invariant violation, 4 enumeration budget exceeded.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mca_core::baselines::OracleBudget;
use mca_core::sgpa;
use mca_core::simharness::{
    fig1_experiment, oracle_compare, run_algorithm, run_sweep, sample_instance, write_results_csv, Algorithm,
    CapSpec, GenParams, SweepConfig, SweepMetadata, WeightMode,
};
use mca_core::{check_feasibility, Error, ProblemInstance, SgpaConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_INVARIANT: u8 = 3;
const EXIT_BUDGET: u8 = 4;

#[derive(Parser)]
#[command(name = "mca", version, about = "Joint CC/RB allocation for massive carrier aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a random instance and write it as JSON.
    Gen(GenArgs),
    /// Solve an instance with one algorithm and print WSU and feasibility.
    Solve(SolveArgs),
    /// Run a Monte-Carlo sweep from a JSON config and write a CSV.
    Sweep(SweepArgs),
    /// Write the beta trajectories of the isolated Fig. 1 experiment.
    Fig1(Fig1Args),
    /// Compare SGPA and the heuristic against the exhaustive oracle.
    OracleCompare(OracleCompareArgs),
    /// Time SGPA (fixed 20 iterations) and the heuristic across an M grid.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Equal,
    Simplex,
}

impl From<WeightArg> for WeightMode {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Equal => WeightMode::Equal,
            WeightArg::Simplex => WeightMode::UniformSimplex,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Sgpa,
    Heuristic,
    Greedy,
    Oracle,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Sgpa => Algorithm::Sgpa,
            AlgorithmArg::Heuristic => Algorithm::Heuristic,
            AlgorithmArg::Greedy => Algorithm::Greedy,
            AlgorithmArg::Oracle => Algorithm::Oracle,
        }
    }
}

/// Generator flags shared by `gen` and `oracle-compare`.
#[derive(Args)]
struct GenFlags {
    /// Number of UEs (K ≥ 2).
    #[arg(long = "K")]
    k: usize,
    /// Number of CCs (M ≥ 2).
    #[arg(long = "M")]
    m: usize,
    /// RBs per CC (N ≥ 2).
    #[arg(long = "N")]
    n: usize,
    /// Per-UE CC cap M_k; defaults to min(2, M).
    #[arg(long = "Mk")]
    mk: Option<usize>,
    /// System CC cap limit; effective M_0 = min(M, limit). Defaults to M.
    #[arg(long = "M0")]
    m0: Option<usize>,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    snr_low_db: f64,
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    snr_high_db: f64,
    #[arg(long, value_enum, default_value = "simplex")]
    weights: WeightArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GenFlags {
    fn params(&self) -> Result<GenParams, Error> {
        for (name, v) in [("K", self.k), ("M", self.m), ("N", self.n)] {
            if v < 2 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 2 (got {v})")));
            }
        }
        let params = GenParams {
            num_ues: self.k,
            num_ccs: self.m,
            num_rbs: self.n,
            ue_cc_cap: CapSpec::Uniform(self.mk.unwrap_or(2.min(self.m))),
            system_cc_cap_limit: self.m0.unwrap_or(self.m),
            snr_db_range: (self.snr_low_db, self.snr_high_db),
            weight_mode: self.weights.into(),
            seed: self.seed,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    gen: GenFlags,
    /// Output path of the instance JSON.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file.
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(short, long, value_enum, default_value = "sgpa")]
    algorithm: AlgorithmArg,
    /// SgpaConfig JSON file; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    snap_tolerance: Option<f64>,
    #[arg(long)]
    zero_tolerance: Option<f64>,
    #[arg(long)]
    convergence_tolerance: Option<f64>,
    /// Write the SGPA trace as CSV (iteration,relaxed_wsu,max_change).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the binary allocation as JSON.
    #[arg(long)]
    allocation: Option<PathBuf>,
    /// Oracle enumeration budget.
    #[arg(long, default_value_t = OracleBudget::default().max_enumerations)]
    oracle_budget: u64,
}

#[derive(Args)]
struct SweepArgs {
    /// SweepConfig JSON file.
    #[arg(short, long)]
    config: PathBuf,
    /// Results CSV; metadata goes to `<stem>.meta.json` next to it.
    #[arg(short, long)]
    output: PathBuf,
    /// Worker threads; overrides the config's `jobs`.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct Fig1Args {
    #[arg(long = "M", default_value_t = 20)]
    m: usize,
    #[arg(long = "Mk", default_value_t = 3)]
    mk: usize,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct OracleCompareArgs {
    #[arg(long = "K", default_value_t = 2)]
    k: usize,
    #[arg(long = "M", default_value_t = 3)]
    m: usize,
    #[arg(long = "N", default_value_t = 2)]
    n: usize,
    #[arg(long = "Mk", default_value_t = 1)]
    mk: usize,
    #[arg(long = "M0", default_value_t = 2)]
    m0: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = OracleBudget::default().max_enumerations)]
    oracle_budget: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long = "K", default_value_t = 10)]
    k: usize,
    #[arg(long = "N", default_value_t = 20)]
    n: usize,
    #[arg(long = "Mk", default_value_t = 2)]
    mk: usize,
    /// M grid, comma separated.
    #[arg(long = "M", value_delimiter = ',', default_values_t = [10, 20, 30, 40])]
    m_values: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(short, long)]
    output: PathBuf,
}

/// Command failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BudgetExceeded { .. } => EXIT_BUDGET,
            Error::LpFailed(_) | Error::NoTrace => EXIT_INVARIANT,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: format!("{}: {e}", path.display()),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values serialize"));
}

fn cmd_gen(args: &GenArgs) -> Result<(), Failure> {
    let instance = sample_instance(&args.gen.params()?)?;
    write(&args.output, &instance.to_json()?)?;
    let (k, m, n) = instance.dims();
    println!("wrote {} (K={k}, M={m}, N={n}, M0={})", args.output.display(), instance.system_cc_cap());
    Ok(())
}

fn sgpa_config(args: &SolveArgs) -> Result<SgpaConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => SgpaConfig::from_json(&read(path)?)?,
        None => SgpaConfig::default(),
    };
    if let Some(v) = args.max_iterations {
        cfg.max_iterations = v;
    }
    if let Some(v) = args.snap_tolerance {
        cfg.snap_tolerance = v;
    }
    if let Some(v) = args.zero_tolerance {
        cfg.zero_tolerance = v;
    }
    if let Some(v) = args.convergence_tolerance {
        cfg.convergence_tolerance = v;
    }
    cfg.record_trace |= args.trace.is_some();
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let instance = ProblemInstance::from_json(&read(&args.instance)?)?;
    let cfg = sgpa_config(args)?;
    let budget = OracleBudget {
        max_enumerations: args.oracle_budget,
    };
    let algorithm: Algorithm = args.algorithm.into();

    let mut extra = json!({});
    let (allocation, wsu) = if let Algorithm::Sgpa = algorithm {
        let res = sgpa::solve(&instance, &cfg)?;
        if let Some(path) = &args.trace {
            res.write_trace_csv(create(path)?)?;
        }
        extra = json!({ "iterations_run": res.iterations_run, "converged": res.converged });
        (res.binary, res.wsu)
    } else {
        run_algorithm(algorithm, &instance, &cfg, budget)?
    };

    let report = check_feasibility(&instance, &allocation)?;
    if let Some(path) = &args.allocation {
        write(path, &allocation.to_json()?)?;
    }
    let mut out = json!({
        "algorithm": algorithm.name(),
        "wsu": wsu,
        "feasible": report.is_feasible(),
        "feasibility": report,
    });
    if let (Some(o), Some(e)) = (out.as_object_mut(), extra.as_object()) {
        o.extend(e.clone());
    }
    print_json(&out);

    // The greedy reference ignores C2/C3 by design; every other algorithm
    // must emit a feasible allocation.
    if !report.is_feasible() && algorithm != Algorithm::Greedy {
        return Err(Failure {
            code: EXIT_INVARIANT,
            message: format!("{} produced an infeasible allocation", algorithm.name()),
        });
    }
    Ok(())
}

fn metadata_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.meta.json"))
}

fn write_sweep(cfg: &SweepConfig, output: &Path) -> Result<Vec<mca_core::simharness::ResultRow>, Failure> {
    let rows = run_sweep(cfg)?;
    write_results_csv(&rows, create(output)?)?;
    let meta = SweepMetadata::new(cfg, &rows);
    let meta_json = serde_json::to_string_pretty(&meta).map_err(Error::from)?;
    write(&metadata_path(output), &meta_json)?;
    Ok(rows)
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut cfg = SweepConfig::from_json(&read(&args.config)?)?;
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    let rows = write_sweep(&cfg, &args.output)?;
    println!("wrote {} rows to {}", rows.len(), args.output.display());
    for r in rows.iter().filter(|r| r.skipped.is_some()) {
        eprintln!("skipped {} at M={} Mk={}: {}", r.algorithm, r.m, r.mk, r.skipped.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn cmd_fig1(args: &Fig1Args) -> Result<(), Failure> {
    let traj = fig1_experiment(args.m, args.mk, args.iterations, args.seed)?;
    traj.write_csv(create(&args.output)?)?;
    println!("wrote {} iterations to {}", args.iterations, args.output.display());
    Ok(())
}

fn cmd_oracle_compare(args: &OracleCompareArgs) -> Result<(), Failure> {
    let template = GenParams::new(args.k, args.m, args.n, args.mk, args.m0);
    let budget = OracleBudget {
        max_enumerations: args.oracle_budget,
    };
    let cmp = oracle_compare(&template, args.trials, args.seed, &SgpaConfig::default(), budget)?;
    print_json(&serde_json::to_value(&cmp).map_err(Error::from)?);
    if !cmp.all_feasible || cmp.max_excess_over_oracle > 1e-9 {
        return Err(Failure {
            code: EXIT_INVARIANT,
            message: "an algorithm was infeasible or beat the oracle".into(),
        });
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let max_m = args.m_values.iter().copied().max().unwrap_or(0);
    let cfg = SweepConfig {
        algorithms: vec![Algorithm::Sgpa, Algorithm::Heuristic],
        m_values: args.m_values.clone(),
        mk_values: vec![],
        trials: args.trials,
        base_seed: args.seed,
        template: GenParams::new(args.k, max_m.max(1), args.n, args.mk, max_m.max(1)),
        sgpa: SgpaConfig {
            max_iterations: 20,
            // No early stop: every solve runs all 20 iterations.
            convergence_tolerance: f64::MIN_POSITIVE,
            ..SgpaConfig::default()
        },
        oracle_budget: OracleBudget::default(),
        jobs: args.jobs,
    };
    let rows = write_sweep(&cfg, &args.output)?;
    let sgpa_rows: Vec<_> = rows.iter().filter(|r| r.algorithm == "sgpa").collect();
    if let (Some(first), Some(last)) = (sgpa_rows.first(), sgpa_rows.last()) {
        print_json(&json!({
            "M_first": first.m,
            "M_last": last.m,
            "sgpa_time_ratio": last.mean_solve_seconds / first.mean_solve_seconds,
            "output": args.output.display().to_string(),
        }));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Fig1(a) => cmd_fig1(a),
        Command::OracleCompare(a) => cmd_oracle_compare(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
