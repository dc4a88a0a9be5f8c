//! Successive geometric-programming approximation (SGPA) solver.
//!
//! Each iteration replaces the three variable blocks by the closed-form
//! optimum of the monomial approximation built at the previous iterate:
//!
//! * `alpha` per RB column: multiplicative reweighting by `beta * w * phi`,
//!   normalized to sum one over UEs;
//! * `beta` per UE and `gamma` over CCs: `min(1, x * r / kappa)`, where the
//!   multiplier `kappa` is fixed by the cap (`M_k` resp. `M_0`) and is found
//!   by [`capped_simplex_normalize`].
//!
//! All three updates read only the previous iterate (Jacobi order).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate_relaxed_wsu, evaluate_wsu, quantize, BinaryAllocation, ProblemInstance, RelaxedAllocation};

/// Solution of `Σ_p min(1, v_p / kappa) = L`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSolution {
    pub kappa: f64,
    pub x: Vec<f64>,
    /// Number of entries equal to one.
    pub saturated_count: usize,
}

/// Exact solve of the capped-simplex normalization `Σ_p min(1, v_p/κ) = L`.
///
/// The positive entries are sorted in decreasing order and the breakpoint
/// `t` (number of saturated entries) is found by a linear scan, so the
/// result is exact up to rounding and needs no iteration. When at most `L`
/// entries are positive the sum cannot reach `L`; every positive entry is
/// then saturated and `kappa` is the smallest positive value.
pub fn capped_simplex_normalize(v: &[f64], cap: usize) -> Result<NormalizationSolution> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("cannot normalize an empty vector".into()));
    }
    if cap == 0 || cap > v.len() {
        return Err(Error::InvalidArgument(format!(
            "cap {cap} must lie in [1, {}]",
            v.len()
        )));
    }
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "normalization inputs must be nonnegative and finite, got {bad}"
        )));
    }

    let mut order: Vec<usize> = (0..v.len()).filter(|&p| v[p] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::NoPositiveEntries);
    }
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    let sorted: Vec<f64> = order.iter().map(|&p| v[p]).collect();
    let positives = sorted.len();

    let mut x = vec![0.0; v.len()];
    if positives <= cap {
        for &p in &order {
            x[p] = 1.0;
        }
        return Ok(NormalizationSolution {
            kappa: sorted[positives - 1],
            x,
            saturated_count: positives,
        });
    }

    // suffix[j] = Σ_{i ≥ j} sorted[i], accumulated from the smallest value up.
    let mut suffix = vec![0.0; positives + 1];
    for j in (0..positives).rev() {
        suffix[j] = suffix[j + 1] + sorted[j];
    }

    // With t entries saturated, kappa = suffix[t] / (L - t) must exceed the
    // (t+1)-th largest value. t = L - 1 always qualifies in exact arithmetic.
    let mut saturated = cap - 1;
    let mut kappa = suffix[saturated];
    for t in 0..cap {
        let candidate = suffix[t] / (cap - t) as f64;
        if candidate > sorted[t] {
            saturated = t;
            kappa = candidate;
            break;
        }
    }

    for (j, &p) in order.iter().enumerate() {
        x[p] = if j < saturated {
            1.0
        } else {
            (sorted[j] / kappa).min(1.0)
        };
    }
    let saturated_count = x.iter().filter(|&&xi| xi == 1.0).count();
    Ok(NormalizationSolution {
        kappa,
        x,
        saturated_count,
    })
}

/// How the first iterate is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum Initialization {
    /// `alpha = 1/K`, `beta = 1/M_k`, `gamma = 1/M_0`.
    #[default]
    PaperUniform,
    Custom(RelaxedAllocation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgpaConfig {
    pub max_iterations: usize,
    /// Values at or above `1 - snap_tolerance` are set to exactly one.
    pub snap_tolerance: f64,
    /// Values at or below this are set to zero and stay there.
    pub zero_tolerance: f64,
    /// Iteration stops once the largest change of any variable is below this.
    pub convergence_tolerance: f64,
    pub initialization: Initialization,
    pub record_trace: bool,
}

impl Default for SgpaConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            snap_tolerance: 1e-9,
            zero_tolerance: 1e-12,
            convergence_tolerance: 1e-10,
            initialization: Initialization::PaperUniform,
            record_trace: false,
        }
    }
}

impl SgpaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("snap_tolerance", self.snap_tolerance)?;
        positive("zero_tolerance", self.zero_tolerance)?;
        positive("convergence_tolerance", self.convergence_tolerance)?;
        if self.snap_tolerance >= 0.5 {
            return Err(Error::InvalidArgument(format!(
                "snap_tolerance must be below 0.5, got {}",
                self.snap_tolerance
            )));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Diagnostics for one iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub relaxed_wsu: f64,
    pub max_change: f64,
    /// RB columns whose update denominator vanished and were held.
    pub held_columns: usize,
    /// UEs with no positive CC rate whose `beta` row was held.
    pub held_ues: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgpaResult {
    pub relaxed: RelaxedAllocation,
    pub binary: BinaryAllocation,
    pub wsu: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub trace: Option<Vec<TraceRecord>>,
}

impl SgpaResult {
    /// Per-iteration relaxed WSU as `(iteration, value)` pairs.
    pub fn relaxed_wsu_trace(&self) -> Result<Vec<(usize, f64)>> {
        relaxed_wsu_trace(self)
    }

    /// Writes the trace as CSV with columns `iteration,relaxed_wsu,max_change`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let trace = self.trace.as_ref().ok_or(Error::NoTrace)?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "relaxed_wsu", "max_change"])?;
        for rec in trace {
            w.write_record([
                rec.iteration.to_string(),
                rec.relaxed_wsu.to_string(),
                rec.max_change.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn relaxed_wsu_trace(result: &SgpaResult) -> Result<Vec<(usize, f64)>> {
    let trace = result.trace.as_ref().ok_or(Error::NoTrace)?;
    Ok(trace.iter().map(|r| (r.iteration, r.relaxed_wsu)).collect())
}

/// The starting iterate implied by `config.initialization`.
pub fn initial_allocation(instance: &ProblemInstance, config: &SgpaConfig) -> Result<RelaxedAllocation> {
    match &config.initialization {
        Initialization::PaperUniform => {
            let (num_ues, num_ccs, _) = instance.dims();
            let mut x = RelaxedAllocation::filled(
                instance,
                1.0 / num_ues as f64,
                0.0,
                1.0 / instance.system_cc_cap() as f64,
            );
            for k in 0..num_ues {
                let b = 1.0 / instance.ue_cc_cap(k) as f64;
                x.beta[k * num_ccs..(k + 1) * num_ccs].fill(b);
            }
            Ok(x)
        }
        Initialization::Custom(x) => {
            x.check_dims(instance)?;
            if let Some(bad) = x.values().find(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument(format!(
                    "initial values must lie in [0, 1], got {bad}"
                )));
            }
            Ok(x.clone())
        }
    }
}

/// Floor used by the stand-alone block updates (the default zero tolerance).
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Value of another block's variable as a multiplier in an update.
///
/// Variables live in `[floor, 1]` (C4' strict positivity). An entry snapped
/// to 0 has left its own active set, but still enters other blocks' updates
/// at the floor so that, for example, the RB shares of a switched-off CC
/// keep resolving instead of freezing at a zero denominator.
fn floored(x: f64, floor: f64) -> f64 {
    x.max(floor)
}

fn alpha_step(instance: &ProblemInstance, prev: &RelaxedAllocation, floor: f64) -> (Vec<f64>, usize) {
    let (num_ues, num_ccs, num_rbs) = instance.dims();
    let phi = instance.utilities();
    let mut next = prev.alpha.clone();
    let mut den = vec![0.0; num_rbs];
    let mut held = 0;
    for m in 0..num_ccs {
        den.fill(0.0);
        for k in 0..num_ues {
            let scale = floored(prev.beta_at(k, m), floor) * instance.weight(k);
            let base = instance.index(k, m, 0);
            for n in 0..num_rbs {
                den[n] += prev.alpha[base + n] * scale * phi[base + n];
            }
        }
        held += den.iter().filter(|&&d| d <= 0.0).count();
        for k in 0..num_ues {
            let scale = floored(prev.beta_at(k, m), floor) * instance.weight(k);
            let base = instance.index(k, m, 0);
            for n in 0..num_rbs {
                if den[n] > 0.0 {
                    next[base + n] = prev.alpha[base + n] * scale * phi[base + n] / den[n];
                }
            }
        }
    }
    (next, held)
}

/// RB-share update. Columns whose weighted sum vanishes keep their values.
pub fn update_alpha(instance: &ProblemInstance, prev: &RelaxedAllocation) -> Result<Vec<f64>> {
    prev.check_dims(instance)?;
    Ok(alpha_step(instance, prev, DEFAULT_FLOOR).0)
}

/// Effective CC rates of UE `k`: `w_k γ_m Σ_n α_kmn φ_kmn`, with `γ` floored.
fn ue_rates(instance: &ProblemInstance, prev: &RelaxedAllocation, k: usize, floor: f64) -> Vec<f64> {
    let (_, num_ccs, num_rbs) = instance.dims();
    let phi = instance.utilities();
    (0..num_ccs)
        .map(|m| {
            let base = instance.index(k, m, 0);
            let s: f64 = (0..num_rbs).map(|n| prev.alpha[base + n] * phi[base + n]).sum();
            instance.weight(k) * floored(prev.gamma[m], floor) * s
        })
        .collect()
}

fn beta_step(instance: &ProblemInstance, prev: &RelaxedAllocation, floor: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    let (num_ues, num_ccs, _) = instance.dims();
    let mut next = prev.beta.clone();
    let mut held = Vec::new();
    for k in 0..num_ues {
        let rates = ue_rates(instance, prev, k, floor);
        let row = &prev.beta[k * num_ccs..(k + 1) * num_ccs];
        let v: Vec<f64> = row.iter().zip(&rates).map(|(b, r)| b * r).collect();
        match capped_simplex_normalize(&v, instance.ue_cc_cap(k)) {
            Ok(sol) => next[k * num_ccs..(k + 1) * num_ccs].copy_from_slice(&sol.x),
            Err(Error::NoPositiveEntries) => held.push(k),
            Err(e) => return Err(e),
        }
    }
    Ok((next, held))
}

/// UE-to-CC share update. A UE without any positive rate keeps its row.
pub fn update_beta(instance: &ProblemInstance, prev: &RelaxedAllocation) -> Result<Vec<f64>> {
    prev.check_dims(instance)?;
    Ok(beta_step(instance, prev, DEFAULT_FLOOR)?.0)
}

/// CC-activation update.
pub fn update_gamma(instance: &ProblemInstance, prev: &RelaxedAllocation) -> Result<Vec<f64>> {
    prev.check_dims(instance)?;
    let (num_ues, num_ccs, num_rbs) = instance.dims();
    let phi = instance.utilities();
    let mut rates = vec![0.0; num_ccs];
    for k in 0..num_ues {
        for (m, rate) in rates.iter_mut().enumerate() {
            let base = instance.index(k, m, 0);
            let s: f64 = (0..num_rbs).map(|n| prev.alpha[base + n] * phi[base + n]).sum();
            *rate += instance.weight(k) * prev.beta_at(k, m) * s;
        }
    }
    let v: Vec<f64> = prev.gamma.iter().zip(&rates).map(|(g, r)| g * r).collect();
    match capped_simplex_normalize(&v, instance.system_cc_cap()) {
        Ok(sol) => Ok(sol.x),
        Err(Error::NoPositiveEntries) => Err(Error::DegenerateInstance(
            "every CC has zero aggregate rate".into(),
        )),
        Err(e) => Err(e),
    }
}

/// Snaps near-one entries to one and near-zero entries to zero, then
/// rescales the remaining fractional entries so the block sum is unchanged.
pub(crate) fn snap_block(values: &mut [f64], snap_tolerance: f64, zero_tolerance: f64) {
    let target: f64 = values.iter().sum();
    let mut ones = 0usize;
    let mut free_sum = 0.0;
    for x in values.iter_mut() {
        if *x >= 1.0 - snap_tolerance {
            *x = 1.0;
            ones += 1;
        } else if *x <= zero_tolerance {
            *x = 0.0;
        } else {
            free_sum += *x;
        }
    }
    if free_sum == 0.0 {
        return;
    }
    let remaining = target - ones as f64;
    let free = values.iter_mut().filter(|x| **x > 0.0 && **x < 1.0);
    if remaining <= snap_tolerance {
        free.for_each(|x| *x = 0.0);
    } else {
        let scale = remaining / free_sum;
        free.for_each(|x| *x = (*x * scale).min(1.0));
    }
}

fn snap_iterate(x: &mut RelaxedAllocation, config: &SgpaConfig) {
    let (snap, zero) = (config.snap_tolerance, config.zero_tolerance);
    let (num_ues, num_ccs, num_rbs) = (x.num_ues, x.num_ccs, x.num_rbs);
    let mut column = vec![0.0; num_ues];
    for m in 0..num_ccs {
        for n in 0..num_rbs {
            let idx = |k: usize| (k * num_ccs + m) * num_rbs + n;
            for (k, c) in column.iter_mut().enumerate() {
                *c = x.alpha[idx(k)];
            }
            snap_block(&mut column, snap, zero);
            for (k, c) in column.iter().enumerate() {
                x.alpha[idx(k)] = *c;
            }
        }
    }
    for row in x.beta.chunks_mut(num_ccs) {
        snap_block(row, snap, zero);
    }
    snap_block(&mut x.gamma, snap, zero);
}

/// One Jacobi iteration (all three blocks from `prev`), followed by snapping.
pub fn iterate(
    instance: &ProblemInstance,
    prev: &RelaxedAllocation,
    config: &SgpaConfig,
) -> Result<(RelaxedAllocation, usize, Vec<usize>)> {
    prev.check_dims(instance)?;
    let floor = config.zero_tolerance;
    let (alpha, held_columns) = alpha_step(instance, prev, floor);
    let (beta, held_ues) = beta_step(instance, prev, floor)?;
    let gamma = update_gamma(instance, prev)?;
    let mut next = RelaxedAllocation {
        alpha,
        beta,
        gamma,
        ..prev.clone()
    };
    snap_iterate(&mut next, config);
    Ok((next, held_columns, held_ues))
}

/// Runs the SGPA iteration and quantizes the final iterate.
pub fn solve(instance: &ProblemInstance, config: &SgpaConfig) -> Result<SgpaResult> {
    config.validate()?;
    let mut x = initial_allocation(instance, config)?;
    let mut trace = config.record_trace.then(Vec::new);
    let mut iterations_run = 0;
    let mut converged = false;

    for i in 1..=config.max_iterations {
        let (next, held_columns, held_ues) = iterate(instance, &x, config)?;
        let max_change = next.max_abs_diff(&x);
        x = next;
        iterations_run = i;
        if let Some(t) = trace.as_mut() {
            t.push(TraceRecord {
                iteration: i,
                relaxed_wsu: evaluate_relaxed_wsu(instance, &x)?,
                max_change,
                held_columns,
                held_ues,
            });
        }
        if max_change < config.convergence_tolerance {
            converged = true;
            break;
        }
    }

    let binary = quantize(instance, &x)?;
    let wsu = evaluate_wsu(instance, &binary)?;
    Ok(SgpaResult {
        relaxed: x,
        binary,
        wsu,
        iterations_run,
        converged,
        trace,
    })
}

/// One step of `x ← min(1, x·r/κ)` with constant rates, including snapping.
///
/// This is the isolated update of a single block with every other block
/// frozen; it returns the new values and the multiplier.
pub fn fixed_rate_step(
    x: &[f64],
    rates: &[f64],
    cap: usize,
    config: &SgpaConfig,
) -> Result<(Vec<f64>, f64)> {
    if x.len() != rates.len() {
        return Err(Error::DimensionMismatch {
            what: "rates",
            expected: x.len(),
            found: rates.len(),
        });
    }
    let v: Vec<f64> = x.iter().zip(rates).map(|(a, r)| a * r).collect();
    let sol = capped_simplex_normalize(&v, cap)?;
    let mut next = sol.x;
    snap_block(&mut next, config.snap_tolerance, config.zero_tolerance);
    Ok((next, sol.kappa))
}
