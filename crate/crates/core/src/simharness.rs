//! Seeded Monte-Carlo harness: random instances with capacity utilities,
//! algorithm sweeps over CC counts and caps, and the isolated `beta`
//! convergence experiment.
//!
//! Randomness comes from `ChaCha8Rng`. Each trial gets its own stream whose
//! seed is a SplitMix64 mix of the base seed, the grid index and the trial
//! index, so results do not depend on execution order or thread count.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{brute_force_oracle, greedy_unconstrained, heuristic_solve, oracle_enumeration_count, OracleBudget};
use crate::error::{Error, Result};
use crate::model::{check_feasibility, evaluate_wsu, BinaryAllocation, ProblemInstance};
use crate::sgpa::{self, SgpaConfig};

pub const GENERATOR_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), per-trial seeds by SplitMix64";

/// Per-UE CC cap: one value for every UE, or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapSpec {
    Uniform(usize),
    PerUe(Vec<usize>),
}

impl CapSpec {
    fn expand(&self, num_ues: usize) -> Result<Vec<usize>> {
        match self {
            CapSpec::Uniform(c) => Ok(vec![*c; num_ues]),
            CapSpec::PerUe(v) if v.len() == num_ues => Ok(v.clone()),
            CapSpec::PerUe(v) => Err(Error::DimensionMismatch {
                what: "ue_cc_cap",
                expected: num_ues,
                found: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WeightMode {
    /// `w_k = 1` (sum capacity).
    Equal,
    /// Uniform over the probability simplex.
    #[default]
    UniformSimplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    #[serde(rename = "K")]
    pub num_ues: usize,
    #[serde(rename = "M")]
    pub num_ccs: usize,
    #[serde(rename = "N")]
    pub num_rbs: usize,
    pub ue_cc_cap: CapSpec,
    /// The system cap is `min(M, system_cc_cap_limit)`.
    pub system_cc_cap_limit: usize,
    #[serde(default = "default_snr_range")]
    pub snr_db_range: (f64, f64),
    #[serde(default)]
    pub weight_mode: WeightMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_snr_range() -> (f64, f64) {
    (-10.0, 20.0)
}

impl GenParams {
    pub fn new(num_ues: usize, num_ccs: usize, num_rbs: usize, ue_cc_cap: usize, system_cc_cap_limit: usize) -> Self {
        Self {
            num_ues,
            num_ccs,
            num_rbs,
            ue_cc_cap: CapSpec::Uniform(ue_cc_cap),
            system_cc_cap_limit,
            snr_db_range: default_snr_range(),
            weight_mode: WeightMode::UniformSimplex,
            seed: 0,
        }
    }

    pub fn system_cc_cap(&self) -> usize {
        self.num_ccs.min(self.system_cc_cap_limit)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_ues == 0 || self.num_ccs == 0 || self.num_rbs == 0 {
            return Err(Error::InvalidArgument("K, M and N must be positive".into()));
        }
        let caps = self.ue_cc_cap.expand(self.num_ues)?;
        if let Some(c) = caps.iter().find(|&&c| c == 0 || c > self.num_ccs) {
            return Err(Error::InvalidArgument(format!(
                "per-UE CC cap {c} outside [1, {}]",
                self.num_ccs
            )));
        }
        if self.system_cc_cap_limit == 0 {
            return Err(Error::InvalidArgument("system CC cap limit must be positive".into()));
        }
        let (lo, hi) = self.snr_db_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("invalid SNR range [{lo}, {hi}] dB")));
        }
        Ok(())
    }
}

/// Normalized link capacity `log2(1 + g·snr) / N`.
pub fn capacity_utility(gain: f64, snr_linear: f64, num_rbs: usize) -> f64 {
    (gain * snr_linear).ln_1p() / std::f64::consts::LN_2 / num_rbs as f64
}

/// Draws an instance: unit-mean exponential gains per `(k, m, n)`, SNR
/// uniform in dB per `(k, m)`, capacity utilities, and weights per
/// `params.weight_mode`.
pub fn sample_instance(params: &GenParams) -> Result<ProblemInstance> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (k, m, n) = (params.num_ues, params.num_ccs, params.num_rbs);
    let (lo, hi) = params.snr_db_range;

    let snr: Vec<f64> = (0..k * m)
        .map(|_| 10f64.powf(rng.random_range(lo..hi) / 10.0))
        .collect();
    let mut phi = Vec::with_capacity(k * m * n);
    for &s in &snr {
        for _ in 0..n {
            let g: f64 = rng.sample(Exp1);
            phi.push(capacity_utility(g, s, n));
        }
    }
    let weights = match params.weight_mode {
        WeightMode::Equal => vec![1.0; k],
        WeightMode::UniformSimplex => {
            // Normalized i.i.d. exponentials are uniform on the simplex.
            // Floor at the smallest positive normal keeps every weight > 0.
            let draws: Vec<f64> = (0..k)
                .map(|_| rng.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE))
                .collect();
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|d| d / total).collect()
        }
    };
    ProblemInstance::from_flat(
        k,
        m,
        n,
        weights,
        phi,
        params.ue_cc_cap.expand(k)?,
        params.system_cc_cap(),
    )
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at grid point `grid`.
pub fn trial_seed(base_seed: u64, grid: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ grid as u64) ^ trial as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgpa,
    Heuristic,
    Greedy,
    Oracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgpa => "sgpa",
            Algorithm::Heuristic => "heuristic",
            Algorithm::Greedy => "greedy",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgpa" => Ok(Algorithm::Sgpa),
            "heuristic" => Ok(Algorithm::Heuristic),
            "greedy" => Ok(Algorithm::Greedy),
            "oracle" => Ok(Algorithm::Oracle),
            other => Err(Error::InvalidArgument(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Runs one algorithm and returns its allocation and WSU.
pub fn run_algorithm(
    algorithm: Algorithm,
    instance: &ProblemInstance,
    sgpa_config: &SgpaConfig,
    budget: OracleBudget,
) -> Result<(BinaryAllocation, f64)> {
    match algorithm {
        Algorithm::Sgpa => {
            let res = sgpa::solve(instance, sgpa_config)?;
            Ok((res.binary, res.wsu))
        }
        Algorithm::Heuristic => {
            let alloc = heuristic_solve(instance)?;
            let wsu = evaluate_wsu(instance, &alloc)?;
            Ok((alloc, wsu))
        }
        Algorithm::Greedy => {
            let alloc = greedy_unconstrained(instance).allocation;
            let wsu = evaluate_wsu(instance, &alloc)?;
            Ok((alloc, wsu))
        }
        Algorithm::Oracle => brute_force_oracle(instance, budget),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub algorithms: Vec<Algorithm>,
    /// CC counts to sweep; empty means the template's `M` only.
    #[serde(default)]
    pub m_values: Vec<usize>,
    /// Uniform per-UE caps to sweep; empty means the template's cap.
    #[serde(default)]
    pub mk_values: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub template: GenParams,
    #[serde(default)]
    pub sgpa: SgpaConfig,
    #[serde(default)]
    pub oracle_budget: OracleBudget,
    /// Worker threads for trials; 1 runs sequentially.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_jobs() -> usize {
    1
}

impl SweepConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Generator parameters of every grid point, `M` outer and `M_k` inner.
    pub fn grid(&self) -> Result<Vec<GenParams>> {
        let ms = if self.m_values.is_empty() {
            vec![self.template.num_ccs]
        } else {
            self.m_values.clone()
        };
        let mut out = Vec::new();
        for &m in &ms {
            let caps: Vec<CapSpec> = if self.mk_values.is_empty() {
                vec![self.template.ue_cc_cap.clone()]
            } else {
                self.mk_values.iter().map(|&c| CapSpec::Uniform(c)).collect()
            };
            for cap in caps {
                let p = GenParams {
                    num_ccs: m,
                    ue_cc_cap: cap,
                    ..self.template.clone()
                };
                p.validate()?;
                out.push(p);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub algorithm: String,
    #[serde(rename = "M")]
    pub m: usize,
    /// Per-UE cap; the first UE's value when caps differ.
    #[serde(rename = "Mk")]
    pub mk: usize,
    #[serde(rename = "M0")]
    pub m0: usize,
    pub trials: usize,
    pub mean_wsu: f64,
    pub stderr_wsu: f64,
    pub mean_solve_seconds: f64,
    /// Why the row has no data, when the algorithm could not run.
    #[serde(skip)]
    pub skipped: Option<String>,
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

struct TrialOutcome {
    wsu: Vec<f64>,
    seconds: Vec<f64>,
}

fn run_trial(
    params: &GenParams,
    algorithms: &[Algorithm],
    sgpa_config: &SgpaConfig,
    budget: OracleBudget,
) -> Result<TrialOutcome> {
    let instance = sample_instance(params)?;
    let mut wsu = Vec::with_capacity(algorithms.len());
    let mut seconds = Vec::with_capacity(algorithms.len());
    for &alg in algorithms {
        let start = Instant::now();
        let (_, value) = run_algorithm(alg, &instance, sgpa_config, budget)?;
        seconds.push(start.elapsed().as_secs_f64());
        wsu.push(value);
    }
    Ok(TrialOutcome { wsu, seconds })
}

/// Runs every algorithm on the same seeded instances at each grid point and
/// aggregates mean WSU, its standard error and mean solve time.
pub fn run_sweep(sweep: &SweepConfig) -> Result<Vec<ResultRow>> {
    if sweep.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if sweep.algorithms.is_empty() {
        return Err(Error::InvalidArgument("no algorithms selected".into()));
    }
    sweep.sgpa.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let mut rows = Vec::new();
    for (g, params) in sweep.grid()?.into_iter().enumerate() {
        let caps = params.ue_cc_cap.expand(params.num_ues)?;
        let m0 = params.system_cc_cap();

        let mut skipped = vec![None; sweep.algorithms.len()];
        if let Some(pos) = sweep.algorithms.iter().position(|&a| a == Algorithm::Oracle) {
            // The enumeration count depends on dimensions and caps only.
            let probe = sample_instance(&params)?;
            let count = oracle_enumeration_count(&probe);
            if count > sweep.oracle_budget.max_enumerations as u128 {
                skipped[pos] = Some(format!(
                    "oracle enumeration count {count} exceeds budget {}",
                    sweep.oracle_budget.max_enumerations
                ));
            }
        }
        let active: Vec<Algorithm> = sweep
            .algorithms
            .iter()
            .zip(&skipped)
            .filter(|(_, s)| s.is_none())
            .map(|(&a, _)| a)
            .collect();

        let run = |t: usize| {
            let p = GenParams {
                seed: trial_seed(sweep.base_seed, g, t),
                ..params.clone()
            };
            run_trial(&p, &active, &sweep.sgpa, sweep.oracle_budget)
        };
        let outcomes: Vec<TrialOutcome> = if sweep.jobs > 1 {
            pool.install(|| (0..sweep.trials).into_par_iter().map(run).collect::<Result<_>>())?
        } else {
            (0..sweep.trials).map(run).collect::<Result<_>>()?
        };

        let mut slot = 0;
        for (alg, skip) in sweep.algorithms.iter().zip(skipped) {
            let mut row = ResultRow {
                algorithm: alg.name().to_string(),
                m: params.num_ccs,
                mk: caps[0],
                m0,
                trials: 0,
                mean_wsu: f64::NAN,
                stderr_wsu: f64::NAN,
                mean_solve_seconds: f64::NAN,
                skipped: skip,
            };
            if row.skipped.is_none() {
                let wsu: Vec<f64> = outcomes.iter().map(|o| o.wsu[slot]).collect();
                let secs: Vec<f64> = outcomes.iter().map(|o| o.seconds[slot]).collect();
                let (mean, se) = mean_and_stderr(&wsu);
                row.trials = sweep.trials;
                row.mean_wsu = mean;
                row.stderr_wsu = se;
                row.mean_solve_seconds = secs.iter().sum::<f64>() / secs.len() as f64;
                slot += 1;
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

pub const RESULT_CSV_HEADER: [&str; 8] = [
    "algorithm",
    "M",
    "Mk",
    "M0",
    "trials",
    "mean_wsu",
    "stderr_wsu",
    "mean_solve_seconds",
];

/// Writes rows as CSV. Skipped rows carry `trials = 0` and empty statistics.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULT_CSV_HEADER)?;
    for r in rows {
        let stat = |v: f64| if r.skipped.is_some() { String::new() } else { v.to_string() };
        w.write_record([
            r.algorithm.clone(),
            r.m.to_string(),
            r.mk.to_string(),
            r.m0.to_string(),
            r.trials.to_string(),
            stat(r.mean_wsu),
            stat(r.stderr_wsu),
            stat(r.mean_solve_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedRow {
    pub algorithm: String,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Mk")]
    pub mk: usize,
    pub reason: String,
}

/// Sidecar written next to a results CSV.
#[derive(Debug, Clone, Serialize)]
pub struct SweepMetadata {
    pub base_seed: u64,
    pub generator: String,
    pub version: String,
    pub config: SweepConfig,
    pub skipped: Vec<SkippedRow>,
}

impl SweepMetadata {
    pub fn new(config: &SweepConfig, rows: &[ResultRow]) -> Self {
        Self {
            base_seed: config.base_seed,
            generator: GENERATOR_NAME.to_string(),
            version: concat!("mca-core ", env!("CARGO_PKG_VERSION"), " (", env!("MCA_GIT_DESCRIBE"), ")").to_string(),
            config: config.clone(),
            skipped: rows
                .iter()
                .filter_map(|r| {
                    r.skipped.as_ref().map(|reason| SkippedRow {
                        algorithm: r.algorithm.clone(),
                        m: r.m,
                        mk: r.mk,
                        reason: reason.clone(),
                    })
                })
                .collect(),
        }
    }
}

/// Trajectories of the isolated `beta` update with `alpha = gamma = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Trajectory {
    /// Effective CC utilities, strictly decreasing.
    pub rates: Vec<f64>,
    /// `iterations + 1` rows of length `M`; row 0 is the initial point.
    pub beta: Vec<Vec<f64>>,
    /// Multiplier of each iteration.
    pub kappa: Vec<f64>,
}

impl Fig1Trajectory {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iteration".to_string()];
        header.extend((0..self.rates.len()).map(|m| format!("beta_{m}")));
        w.write_record(&header)?;
        for (i, row) in self.beta.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Indices of the `count` largest values (lowest index on ties), ascending.
pub fn top_indices(values: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Runs only the `beta` update of one UE with `alpha = gamma = 1`.
///
/// The effective utilities form a random decreasing cascade whose
/// consecutive ratios are drawn from `[1/0.85, 1/0.3]`, which keeps them
/// distinct by a fixed margin. The start point is random and positive with
/// entries summing to `M_k` where that fits under one.
pub fn fig1_experiment(
    num_ccs: usize,
    ue_cc_cap: usize,
    iterations: usize,
    seed: u64,
) -> Result<Fig1Trajectory> {
    if num_ccs == 0 || ue_cc_cap == 0 || ue_cc_cap > num_ccs {
        return Err(Error::InvalidArgument(format!(
            "need M >= M_k >= 1, got M={num_ccs} M_k={ue_cc_cap}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rates = Vec::with_capacity(num_ccs);
    let mut r = 1.0;
    for _ in 0..num_ccs {
        rates.push(r);
        r *= rng.random_range(0.3..0.85);
    }
    let draws: Vec<f64> = (0..num_ccs).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = draws.iter().sum();
    let start: Vec<f64> = draws
        .iter()
        .map(|d| (d * ue_cc_cap as f64 / total).min(1.0))
        .collect();

    let cfg = SgpaConfig::default();
    let mut beta = Vec::with_capacity(iterations + 1);
    let mut kappa = Vec::with_capacity(iterations);
    beta.push(start);
    for _ in 0..iterations {
        let (next, k) = sgpa::fixed_rate_step(beta.last().expect("non-empty"), &rates, ue_cc_cap, &cfg)?;
        beta.push(next);
        kappa.push(k);
    }
    Ok(Fig1Trajectory { rates, beta, kappa })
}

/// Aggregate of SGPA and heuristic against the exhaustive optimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub trials: usize,
    pub mean_sgpa_wsu: f64,
    pub mean_heuristic_wsu: f64,
    pub mean_oracle_wsu: f64,
    /// `mean(sgpa) / mean(oracle)`.
    pub sgpa_ratio: f64,
    pub heuristic_ratio: f64,
    /// Largest `algorithm WSU - oracle WSU` seen; never positive beyond rounding.
    pub max_excess_over_oracle: f64,
    pub all_feasible: bool,
}

/// Runs SGPA, the heuristic and the oracle on `trials` seeded instances.
pub fn oracle_compare(
    template: &GenParams,
    trials: usize,
    base_seed: u64,
    sgpa_config: &SgpaConfig,
    budget: OracleBudget,
) -> Result<OracleComparison> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let mut sums = [0.0; 3];
    let mut max_excess = f64::NEG_INFINITY;
    let mut all_feasible = true;
    for t in 0..trials {
        let params = GenParams {
            seed: trial_seed(base_seed, 0, t),
            ..template.clone()
        };
        let inst = sample_instance(&params)?;
        let (_, oracle) = brute_force_oracle(&inst, budget)?;
        let res = sgpa::solve(&inst, sgpa_config)?;
        let heur = heuristic_solve(&inst)?;
        let heur_wsu = evaluate_wsu(&inst, &heur)?;
        all_feasible &= check_feasibility(&inst, &res.binary)?.is_feasible()
            && check_feasibility(&inst, &heur)?.is_feasible();
        max_excess = max_excess.max(res.wsu - oracle).max(heur_wsu - oracle);
        sums[0] += res.wsu;
        sums[1] += heur_wsu;
        sums[2] += oracle;
    }
    let n = trials as f64;
    Ok(OracleComparison {
        trials,
        mean_sgpa_wsu: sums[0] / n,
        mean_heuristic_wsu: sums[1] / n,
        mean_oracle_wsu: sums[2] / n,
        sgpa_ratio: sums[0] / sums[2],
        heuristic_ratio: sums[1] / sums[2],
        max_excess_over_oracle: max_excess,
        all_feasible,
    })
}
