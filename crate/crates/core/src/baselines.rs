//! Reference allocators: per-RB winner-takes-all, the LP-relaxation
//! heuristic, and an exhaustive oracle for small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::model::{quantize_cc_blocks, BinaryAllocation, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub max_enumerations: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_enumerations: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub allocation: BinaryAllocation,
    /// Whether the per-UE and system CC caps happen to hold.
    pub caps_respected: bool,
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: impl IntoIterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Winner-takes-all: each RB goes to the UE maximizing `w_k φ_kmn`.
///
/// Optimal when `M_k = M_0 = M`; on other instances the caps are ignored and
/// reported through [`GreedyOutcome::caps_respected`].
pub fn greedy_unconstrained(instance: &ProblemInstance) -> GreedyOutcome {
    let (num_ues, num_ccs, num_rbs) = instance.dims();
    let mut alloc = BinaryAllocation::empty(instance);
    for m in 0..num_ccs {
        for n in 0..num_rbs {
            let winner = argmax((0..num_ues).map(|k| (k, instance.weight(k) * instance.utility(k, m, n))));
            if let Some(k) = winner {
                alloc.assign(k, m, n);
            }
        }
    }
    let per_ue_ok = (0..num_ues)
        .all(|k| (0..num_ccs).filter(|&m| alloc.beta_at(k, m)).count() <= instance.ue_cc_cap(k));
    let system_ok = alloc.gamma.iter().filter(|&&g| g).count() <= instance.system_cc_cap();
    GreedyOutcome {
        allocation: alloc,
        caps_respected: per_ue_ok && system_ok,
    }
}

/// The heuristic's CC-level LP over `β_km`, `γ_m` and `t_km`, all in
/// `[0, 1]`: maximize `Σ c_km t_km` with `t ≤ β`, `t ≤ γ`, `Σ_m β_km ≤ M_k`
/// and `Σ_m γ_m ≤ M_0`, where `c_km = w_k Σ_n φ_kmn`.
///
/// Variable layout: `β` at `k·M + m`, `γ` at `K·M + m`, `t` at
/// `K·M + M + k·M + m`.
pub fn heuristic_lp(instance: &ProblemInstance) -> LinearProgram {
    let (num_ues, num_ccs, num_rbs) = instance.dims();
    let km = num_ues * num_ccs;
    let n_vars = 2 * km + num_ccs;
    let beta = |k: usize, m: usize| k * num_ccs + m;
    let gamma = |m: usize| km + m;
    let t = |k: usize, m: usize| km + num_ccs + k * num_ccs + m;

    let mut objective = vec![0.0; n_vars];
    let mut rows = Vec::with_capacity(2 * km + num_ues + 1);
    let mut rhs = Vec::with_capacity(rows.capacity());
    for k in 0..num_ues {
        for m in 0..num_ccs {
            let base = instance.index(k, m, 0);
            let c: f64 = instance.utilities()[base..base + num_rbs].iter().sum();
            objective[t(k, m)] = instance.weight(k) * c;

            let mut row = vec![0.0; n_vars];
            row[t(k, m)] = 1.0;
            row[beta(k, m)] = -1.0;
            rows.push(row);
            rhs.push(0.0);

            let mut row = vec![0.0; n_vars];
            row[t(k, m)] = 1.0;
            row[gamma(m)] = -1.0;
            rows.push(row);
            rhs.push(0.0);
        }
    }
    for k in 0..num_ues {
        let mut row = vec![0.0; n_vars];
        for m in 0..num_ccs {
            row[beta(k, m)] = 1.0;
        }
        rows.push(row);
        rhs.push(instance.ue_cc_cap(k) as f64);
    }
    let mut row = vec![0.0; n_vars];
    for m in 0..num_ccs {
        row[gamma(m)] = 1.0;
    }
    rows.push(row);
    rhs.push(instance.system_cc_cap() as f64);

    LinearProgram {
        objective,
        constraint_matrix: rows,
        constraint_rhs: rhs,
        variable_bounds: vec![(0.0, 1.0); n_vars],
    }
}

/// LP-relaxation heuristic.
///
/// Solves [`heuristic_lp`] with all RB shares set to one, quantizes `γ` and
/// then `β` the same way [`crate::model::quantize`] does, and finally gives
/// every RB of an active CC to the UE maximizing `w_k φ_kmn` among UEs
/// holding that CC.
pub fn heuristic_solve(instance: &ProblemInstance) -> Result<BinaryAllocation> {
    let (num_ues, num_ccs, num_rbs) = instance.dims();
    let km = num_ues * num_ccs;
    let sol = solve_lp(&heuristic_lp(instance))?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::LpFailed(sol.status));
    }
    let beta = &sol.x[..km];
    let gamma = &sol.x[km..km + num_ccs];
    let (gamma_bin, beta_bin) = quantize_cc_blocks(instance, gamma, beta);

    let mut alloc = BinaryAllocation {
        num_ues,
        num_ccs,
        num_rbs,
        alpha: vec![false; km * num_rbs],
        beta: beta_bin,
        gamma: gamma_bin,
    };
    for m in (0..num_ccs).filter(|&m| alloc.gamma[m]) {
        for n in 0..num_rbs {
            let holders = (0..num_ues).filter(|&k| alloc.beta_at(k, m));
            if let Some(k) = argmax(holders.map(|k| (k, instance.weight(k) * instance.utility(k, m, n)))) {
                alloc.alpha[instance.index(k, m, n)] = true;
            }
        }
    }
    Ok(alloc)
}

fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of `(S, {B_k})` combinations the oracle visits.
pub fn oracle_enumeration_count(instance: &ProblemInstance) -> u128 {
    let (_, num_ccs, _) = instance.dims();
    let mut total: u128 = 0;
    for size in 0..=instance.system_cc_cap() {
        let per_set = instance.ue_cc_caps().iter().fold(1u128, |acc, &cap| {
            let choices: u128 = (0..=cap.min(size)).map(|j| binomial(size, j)).sum();
            acc.saturating_mul(choices)
        });
        total = total.saturating_add(binomial(num_ccs, size).saturating_mul(per_set));
    }
    total
}

/// Subsets of `items` with at most `max_size` elements, by increasing size
/// and lexicographically within a size.
fn bounded_subsets(items: &[usize], max_size: usize) -> Vec<Vec<usize>> {
    fn extend(items: &[usize], start: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            extend(items, i + 1, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 0..=max_size.min(items.len()) {
        extend(items, 0, size, &mut Vec::with_capacity(size), &mut out);
    }
    out
}

/// Exhaustive optimum over active CC sets and per-UE CC subsets.
///
/// With CC memberships fixed the problem separates per RB, so each RB goes
/// to the best UE holding its CC. Ties keep the first combination found.
pub fn brute_force_oracle(
    instance: &ProblemInstance,
    budget: OracleBudget,
) -> Result<(BinaryAllocation, f64)> {
    let count = oracle_enumeration_count(instance);
    if count > budget.max_enumerations as u128 {
        return Err(Error::BudgetExceeded {
            count,
            budget: budget.max_enumerations,
        });
    }
    let (num_ues, num_ccs, num_rbs) = instance.dims();
    // value[k][m][n] = w_k φ_kmn
    let value: Vec<f64> = (0..num_ues * num_ccs * num_rbs)
        .map(|i| instance.weight(i / (num_ccs * num_rbs)) * instance.utilities()[i])
        .collect();

    let all_ccs: Vec<usize> = (0..num_ccs).collect();
    let mut best_wsu = f64::NEG_INFINITY;
    let mut best: Option<(Vec<usize>, Vec<Vec<usize>>)> = None;

    for active in bounded_subsets(&all_ccs, instance.system_cc_cap()) {
        let options: Vec<Vec<Vec<usize>>> = (0..num_ues)
            .map(|k| bounded_subsets(&active, instance.ue_cc_cap(k)))
            .collect();
        let mut choice = vec![0usize; num_ues];
        let mut holds = vec![false; num_ues * num_ccs];
        'combos: loop {
            holds.fill(false);
            for k in 0..num_ues {
                for &m in &options[k][choice[k]] {
                    holds[k * num_ccs + m] = true;
                }
            }
            let mut wsu = 0.0;
            for &m in &active {
                for n in 0..num_rbs {
                    let top = (0..num_ues)
                        .filter(|&k| holds[k * num_ccs + m])
                        .map(|k| value[(k * num_ccs + m) * num_rbs + n])
                        .fold(0.0_f64, f64::max);
                    wsu += top;
                }
            }
            if wsu > best_wsu {
                best_wsu = wsu;
                let subsets = (0..num_ues).map(|k| options[k][choice[k]].clone()).collect();
                best = Some((active.clone(), subsets));
            }
            // Odometer over per-UE subset choices, last UE fastest.
            let mut k = num_ues;
            loop {
                if k == 0 {
                    break 'combos;
                }
                k -= 1;
                choice[k] += 1;
                if choice[k] < options[k].len() {
                    break;
                }
                choice[k] = 0;
            }
        }
    }

    let (active, subsets) = best.expect("the empty activation set is always enumerated");
    let mut alloc = BinaryAllocation::empty(instance);
    for &m in &active {
        alloc.gamma[m] = true;
    }
    for (k, set) in subsets.iter().enumerate() {
        for &m in set {
            alloc.beta[k * num_ccs + m] = true;
        }
    }
    for &m in &active {
        for n in 0..num_rbs {
            let holders = (0..num_ues).filter(|&k| alloc.beta_at(k, m));
            if let Some(k) = argmax(holders.map(|k| (k, value[(k * num_ccs + m) * num_rbs + n]))) {
                alloc.alpha[instance.index(k, m, n)] = true;
            }
        }
    }
    let wsu = crate::model::evaluate_wsu(instance, &alloc)?;
    Ok((alloc, wsu))
}
