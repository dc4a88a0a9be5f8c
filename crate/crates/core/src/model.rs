//! Problem data, allocations, utility evaluation, feasibility checking and
//! quantization of relaxed allocations.
//!
//! All three-index tensors are stored flat in `[k][m][n]` row-major order
//! (UE, CC, RB); two-index matrices in `[k][m]` order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable problem data: dimensions, UE weights, the utility tensor and
/// the per-UE / system CC caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceDoc", into = "InstanceDoc")]
pub struct ProblemInstance {
    num_ues: usize,
    num_ccs: usize,
    num_rbs: usize,
    weights: Vec<f64>,
    utilities: Vec<f64>,
    ue_cc_caps: Vec<usize>,
    system_cc_cap: usize,
}

impl ProblemInstance {
    /// Builds an instance from a flat `[k][m][n]` utility vector.
    pub fn from_flat(
        num_ues: usize,
        num_ccs: usize,
        num_rbs: usize,
        weights: Vec<f64>,
        utilities: Vec<f64>,
        ue_cc_caps: Vec<usize>,
        system_cc_cap: usize,
    ) -> Result<Self> {
        if num_ues == 0 || num_ccs == 0 || num_rbs == 0 {
            return Err(Error::InvalidInstance(format!(
                "dimensions must be positive, got K={num_ues} M={num_ccs} N={num_rbs}"
            )));
        }
        expect_len("weights", num_ues, weights.len())?;
        expect_len("utilities", num_ues * num_ccs * num_rbs, utilities.len())?;
        expect_len("ue_cc_caps", num_ues, ue_cc_caps.len())?;
        if let Some((k, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidInstance(format!(
                "weight of UE {k} must be positive and finite, got {w}"
            )));
        }
        if let Some(u) = utilities.iter().find(|u| !(u.is_finite() && **u >= 0.0)) {
            return Err(Error::InvalidInstance(format!(
                "utilities must be nonnegative and finite, got {u}"
            )));
        }
        if let Some((k, cap)) = ue_cc_caps
            .iter()
            .enumerate()
            .find(|(_, c)| **c == 0 || **c > num_ccs)
        {
            return Err(Error::InvalidInstance(format!(
                "CC cap of UE {k} must lie in [1, {num_ccs}], got {cap}"
            )));
        }
        if system_cc_cap == 0 || system_cc_cap > num_ccs {
            return Err(Error::InvalidInstance(format!(
                "system CC cap must lie in [1, {num_ccs}], got {system_cc_cap}"
            )));
        }
        Ok(Self {
            num_ues,
            num_ccs,
            num_rbs,
            weights,
            utilities,
            ue_cc_caps,
            system_cc_cap,
        })
    }

    /// Builds an instance from a nested `phi[k][m][n]` utility tensor.
    pub fn new(
        weights: Vec<f64>,
        utilities: Vec<Vec<Vec<f64>>>,
        ue_cc_caps: Vec<usize>,
        system_cc_cap: usize,
    ) -> Result<Self> {
        let ((k, m, n), flat) = flatten3("phi", utilities)?;
        Self::from_flat(k, m, n, weights, flat, ue_cc_caps, system_cc_cap)
    }

    /// Same utilities and weights with both cap families set to `M`.
    pub fn with_slack_caps(&self) -> Self {
        Self {
            ue_cc_caps: vec![self.num_ccs; self.num_ues],
            system_cc_cap: self.num_ccs,
            ..self.clone()
        }
    }

    /// Same utilities and weights with new caps.
    pub fn with_caps(&self, ue_cc_caps: Vec<usize>, system_cc_cap: usize) -> Result<Self> {
        Self::from_flat(
            self.num_ues,
            self.num_ccs,
            self.num_rbs,
            self.weights.clone(),
            self.utilities.clone(),
            ue_cc_caps,
            system_cc_cap,
        )
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn num_ccs(&self) -> usize {
        self.num_ccs
    }

    pub fn num_rbs(&self) -> usize {
        self.num_rbs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// Flat `[k][m][n]` utility tensor.
    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    #[inline]
    pub fn utility(&self, k: usize, m: usize, n: usize) -> f64 {
        self.utilities[self.index(k, m, n)]
    }

    pub fn ue_cc_caps(&self) -> &[usize] {
        &self.ue_cc_caps
    }

    pub fn ue_cc_cap(&self, k: usize) -> usize {
        self.ue_cc_caps[k]
    }

    pub fn system_cc_cap(&self) -> usize {
        self.system_cc_cap
    }

    /// Flat offset of `(k, m, n)`.
    #[inline]
    pub fn index(&self, k: usize, m: usize, n: usize) -> usize {
        (k * self.num_ccs + m) * self.num_rbs + n
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.num_ues, self.num_ccs, self.num_rbs)
    }

    /// `true` when no cap can bind (`M_k = M_0 = M` for all UEs).
    pub fn caps_are_slack(&self) -> bool {
        self.system_cc_cap == self.num_ccs && self.ue_cc_caps.iter().all(|&c| c == self.num_ccs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    weights: Vec<f64>,
    #[serde(rename = "Mk")]
    mk: Vec<usize>,
    #[serde(rename = "M0")]
    m0: usize,
    phi: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<InstanceDoc> for ProblemInstance {
    type Error = Error;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        let (dims, flat) = flatten3("phi", doc.phi)?;
        if dims != (doc.k, doc.m, doc.n) {
            return Err(Error::InvalidInstance(format!(
                "phi has shape {dims:?} but header says K={} M={} N={}",
                doc.k, doc.m, doc.n
            )));
        }
        Self::from_flat(doc.k, doc.m, doc.n, doc.weights, flat, doc.mk, doc.m0)
    }
}

impl From<ProblemInstance> for InstanceDoc {
    fn from(p: ProblemInstance) -> Self {
        let phi = nest3(&p.utilities, p.num_ues, p.num_ccs, p.num_rbs);
        InstanceDoc {
            k: p.num_ues,
            m: p.num_ccs,
            n: p.num_rbs,
            weights: p.weights,
            mk: p.ue_cc_caps,
            m0: p.system_cc_cap,
            phi,
        }
    }
}

/// Continuous-valued iterate of the relaxed problem.
///
/// `alpha` is `[k][m][n]`, `beta` is `[k][m]`, `gamma` is `[m]`. Entries lie
/// in `[0, 1]`; an entry that reached zero is absorbed and never revived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RelaxedDoc", into = "RelaxedDoc")]
pub struct RelaxedAllocation {
    pub num_ues: usize,
    pub num_ccs: usize,
    pub num_rbs: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl RelaxedAllocation {
    /// Constant-valued allocation with the given per-block values.
    pub fn filled(instance: &ProblemInstance, alpha: f64, beta: f64, gamma: f64) -> Self {
        let (k, m, n) = instance.dims();
        Self {
            num_ues: k,
            num_ccs: m,
            num_rbs: n,
            alpha: vec![alpha; k * m * n],
            beta: vec![beta; k * m],
            gamma: vec![gamma; m],
        }
    }

    pub fn from_parts(
        instance: &ProblemInstance,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        let (k, m, n) = instance.dims();
        let alloc = Self {
            num_ues: k,
            num_ccs: m,
            num_rbs: n,
            alpha,
            beta,
            gamma,
        };
        alloc.check_dims(instance)?;
        Ok(alloc)
    }

    /// Relaxed image of a binary allocation (0/1 as reals).
    pub fn from_binary(binary: &BinaryAllocation) -> Self {
        let to_f = |v: &[bool]| v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self {
            num_ues: binary.num_ues,
            num_ccs: binary.num_ccs,
            num_rbs: binary.num_rbs,
            alpha: to_f(&binary.alpha),
            beta: to_f(&binary.beta),
            gamma: to_f(&binary.gamma),
        }
    }

    pub fn check_dims(&self, instance: &ProblemInstance) -> Result<()> {
        let (k, m, n) = instance.dims();
        expect_len("alpha", k * m * n, self.alpha.len())?;
        expect_len("beta", k * m, self.beta.len())?;
        expect_len("gamma", m, self.gamma.len())?;
        if (self.num_ues, self.num_ccs, self.num_rbs) != (k, m, n) {
            return Err(Error::InvalidArgument(format!(
                "allocation shape {:?} does not match instance {:?}",
                (self.num_ues, self.num_ccs, self.num_rbs),
                (k, m, n)
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn alpha_at(&self, k: usize, m: usize, n: usize) -> f64 {
        self.alpha[(k * self.num_ccs + m) * self.num_rbs + n]
    }

    #[inline]
    pub fn beta_at(&self, k: usize, m: usize) -> f64 {
        self.beta[k * self.num_ccs + m]
    }

    /// Iterator over every variable of the three blocks.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.alpha
            .iter()
            .chain(self.beta.iter())
            .chain(self.gamma.iter())
            .copied()
    }

    /// Largest absolute elementwise difference to `other` (same shape).
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values()
            .zip(other.values())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

#[derive(Serialize, Deserialize)]
struct RelaxedDoc {
    alpha: Vec<Vec<Vec<f64>>>,
    beta: Vec<Vec<f64>>,
    gamma: Vec<f64>,
}

impl TryFrom<RelaxedDoc> for RelaxedAllocation {
    type Error = Error;

    fn try_from(doc: RelaxedDoc) -> Result<Self> {
        let ((k, m, n), alpha) = flatten3("alpha", doc.alpha)?;
        let ((bk, bm), beta) = flatten2("beta", doc.beta)?;
        if (bk, bm) != (k, m) || doc.gamma.len() != m {
            return Err(Error::InvalidArgument(
                "alpha, beta and gamma shapes disagree".into(),
            ));
        }
        Ok(Self {
            num_ues: k,
            num_ccs: m,
            num_rbs: n,
            alpha,
            beta,
            gamma: doc.gamma,
        })
    }
}

impl From<RelaxedAllocation> for RelaxedDoc {
    fn from(a: RelaxedAllocation) -> Self {
        RelaxedDoc {
            alpha: nest3(&a.alpha, a.num_ues, a.num_ccs, a.num_rbs),
            beta: a.beta.chunks(a.num_ccs).map(<[f64]>::to_vec).collect(),
            gamma: a.gamma,
        }
    }
}

/// A 0/1 allocation in the original problem's variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BinaryDoc", into = "BinaryDoc")]
pub struct BinaryAllocation {
    pub num_ues: usize,
    pub num_ccs: usize,
    pub num_rbs: usize,
    pub alpha: Vec<bool>,
    pub beta: Vec<bool>,
    pub gamma: Vec<bool>,
}

impl BinaryAllocation {
    pub fn empty(instance: &ProblemInstance) -> Self {
        let (k, m, n) = instance.dims();
        Self {
            num_ues: k,
            num_ccs: m,
            num_rbs: n,
            alpha: vec![false; k * m * n],
            beta: vec![false; k * m],
            gamma: vec![false; m],
        }
    }

    #[inline]
    pub fn alpha_at(&self, k: usize, m: usize, n: usize) -> bool {
        self.alpha[(k * self.num_ccs + m) * self.num_rbs + n]
    }

    #[inline]
    pub fn beta_at(&self, k: usize, m: usize) -> bool {
        self.beta[k * self.num_ccs + m]
    }

    /// Gives RB `(m, n)` to UE `k` and marks the CC as used by `k` and active.
    pub fn assign(&mut self, k: usize, m: usize, n: usize) {
        self.alpha[(k * self.num_ccs + m) * self.num_rbs + n] = true;
        self.beta[k * self.num_ccs + m] = true;
        self.gamma[m] = true;
    }

    /// Owner of RB `(m, n)`, if any; lowest UE index when C1 is violated.
    pub fn owner(&self, m: usize, n: usize) -> Option<usize> {
        (0..self.num_ues).find(|&k| self.alpha_at(k, m, n))
    }

    pub fn check_dims(&self, instance: &ProblemInstance) -> Result<()> {
        let (k, m, n) = instance.dims();
        expect_len("alpha", k * m * n, self.alpha.len())?;
        expect_len("beta", k * m, self.beta.len())?;
        expect_len("gamma", m, self.gamma.len())?;
        if (self.num_ues, self.num_ccs, self.num_rbs) != (k, m, n) {
            return Err(Error::InvalidArgument(format!(
                "allocation shape {:?} does not match instance {:?}",
                (self.num_ues, self.num_ccs, self.num_rbs),
                (k, m, n)
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Serialize, Deserialize)]
struct BinaryDoc {
    alpha: Vec<Vec<Vec<u8>>>,
    beta: Vec<Vec<u8>>,
    gamma: Vec<u8>,
}

impl TryFrom<BinaryDoc> for BinaryAllocation {
    type Error = Error;

    fn try_from(doc: BinaryDoc) -> Result<Self> {
        let ((k, m, n), alpha) = flatten3("alpha", doc.alpha)?;
        let ((bk, bm), beta) = flatten2("beta", doc.beta)?;
        if (bk, bm) != (k, m) || doc.gamma.len() != m {
            return Err(Error::InvalidArgument(
                "alpha, beta and gamma shapes disagree".into(),
            ));
        }
        let to_bool = |v: Vec<u8>| -> Result<Vec<bool>> {
            v.into_iter()
                .map(|b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::InvalidArgument(format!(
                        "binary allocation entries must be 0 or 1, got {other}"
                    ))),
                })
                .collect()
        };
        Ok(Self {
            num_ues: k,
            num_ccs: m,
            num_rbs: n,
            alpha: to_bool(alpha)?,
            beta: to_bool(beta)?,
            gamma: to_bool(doc.gamma)?,
        })
    }
}

impl From<BinaryAllocation> for BinaryDoc {
    fn from(a: BinaryAllocation) -> Self {
        let to_u8 = |v: &[bool]| v.iter().map(|&b| u8::from(b)).collect::<Vec<_>>();
        BinaryDoc {
            alpha: nest3(&to_u8(&a.alpha), a.num_ues, a.num_ccs, a.num_rbs),
            beta: a.beta.chunks(a.num_ccs).map(to_u8).collect(),
            gamma: to_u8(&a.gamma),
        }
    }
}

/// Outcome of one constraint family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintCheck {
    pub pass: bool,
    /// Index tuple of the first violation found, in scan order.
    pub first_violation: Option<Vec<usize>>,
}

impl ConstraintCheck {
    fn from_violation(v: Option<Vec<usize>>) -> Self {
        Self {
            pass: v.is_none(),
            first_violation: v,
        }
    }
}

/// Per-constraint feasibility of a binary allocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeasibilityReport {
    /// At most one UE per RB; violation index `(m, n)`.
    pub c1: ConstraintCheck,
    /// At most `M_k` CCs per UE; violation index `(k)`.
    pub c2: ConstraintCheck,
    /// At most `M_0` active CCs; violation index is the active count.
    pub c3: ConstraintCheck,
    /// `alpha = 1` implies `beta = 1` and `gamma = 1`; violation `(k, m, n)`.
    pub consistency: ConstraintCheck,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.c1.pass && self.c2.pass && self.c3.pass && self.consistency.pass
    }
}

/// Weighted sum utility of a binary allocation.
///
/// Only triples where `gamma_m`, `beta_{k,m}` and `alpha_{k,m,n}` are all
/// set contribute, so inconsistent entries count as zero.
pub fn evaluate_wsu(instance: &ProblemInstance, alloc: &BinaryAllocation) -> Result<f64> {
    alloc.check_dims(instance)?;
    let (num_ues, num_ccs, num_rbs) = instance.dims();
    let mut total = 0.0;
    for k in 0..num_ues {
        let mut ue_sum = 0.0;
        for m in 0..num_ccs {
            if !(alloc.gamma[m] && alloc.beta_at(k, m)) {
                continue;
            }
            for n in 0..num_rbs {
                if alloc.alpha_at(k, m, n) {
                    ue_sum += instance.utility(k, m, n);
                }
            }
        }
        total += instance.weight(k) * ue_sum;
    }
    Ok(total)
}

/// Weighted sum utility in product form, `Σ_k w_k Σ_m γ_m β_km Σ_n α_kmn φ_kmn`.
pub fn evaluate_relaxed_wsu(instance: &ProblemInstance, alloc: &RelaxedAllocation) -> Result<f64> {
    alloc.check_dims(instance)?;
    let (num_ues, num_ccs, num_rbs) = instance.dims();
    let mut total = 0.0;
    for k in 0..num_ues {
        let mut ue_sum = 0.0;
        for m in 0..num_ccs {
            let scale = alloc.gamma[m] * alloc.beta_at(k, m);
            if scale == 0.0 {
                continue;
            }
            let base = instance.index(k, m, 0);
            let rb_sum: f64 = alloc.alpha[base..base + num_rbs]
                .iter()
                .zip(&instance.utilities()[base..base + num_rbs])
                .map(|(a, phi)| a * phi)
                .sum();
            ue_sum += scale * rb_sum;
        }
        total += instance.weight(k) * ue_sum;
    }
    Ok(total)
}

pub fn check_feasibility(
    instance: &ProblemInstance,
    alloc: &BinaryAllocation,
) -> Result<FeasibilityReport> {
    alloc.check_dims(instance)?;
    let (num_ues, num_ccs, num_rbs) = instance.dims();

    let mut c1 = None;
    'rb: for m in 0..num_ccs {
        for n in 0..num_rbs {
            let owners = (0..num_ues).filter(|&k| alloc.alpha_at(k, m, n)).count();
            if owners > 1 {
                c1 = Some(vec![m, n]);
                break 'rb;
            }
        }
    }

    let c2 = (0..num_ues)
        .find(|&k| (0..num_ccs).filter(|&m| alloc.beta_at(k, m)).count() > instance.ue_cc_cap(k))
        .map(|k| vec![k]);

    let active = alloc.gamma.iter().filter(|&&g| g).count();
    let c3 = (active > instance.system_cc_cap()).then(|| vec![active]);

    let mut consistency = None;
    'triple: for k in 0..num_ues {
        for m in 0..num_ccs {
            for n in 0..num_rbs {
                if alloc.alpha_at(k, m, n) && !(alloc.beta_at(k, m) && alloc.gamma[m]) {
                    consistency = Some(vec![k, m, n]);
                    break 'triple;
                }
            }
        }
    }

    Ok(FeasibilityReport {
        c1: ConstraintCheck::from_violation(c1),
        c2: ConstraintCheck::from_violation(c2),
        c3: ConstraintCheck::from_violation(c3),
        consistency: ConstraintCheck::from_violation(consistency),
    })
}

/// Indices of the `count` largest strictly positive values, ties broken by
/// lowest index. Returns fewer than `count` indices when fewer are positive.
pub(crate) fn top_positive(values: impl IntoIterator<Item = (usize, f64)>, count: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = values.into_iter().filter(|&(_, v)| v > 0.0).collect();
    // Stable sort keeps ascending index order among equal values.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(count);
    ranked.into_iter().map(|(i, _)| i).collect()
}

/// Quantizes the CC-activation and UE-to-CC blocks (`gamma` then `beta`).
///
/// `beta` is selected only among CCs whose quantized `gamma` is set.
pub(crate) fn quantize_cc_blocks(
    instance: &ProblemInstance,
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<bool>, Vec<bool>) {
    let (num_ues, num_ccs, _) = instance.dims();
    let mut gamma_bin = vec![false; num_ccs];
    for m in top_positive(gamma.iter().copied().enumerate(), instance.system_cc_cap()) {
        gamma_bin[m] = true;
    }
    let mut beta_bin = vec![false; num_ues * num_ccs];
    for k in 0..num_ues {
        let row = &beta[k * num_ccs..(k + 1) * num_ccs];
        let candidates = (0..num_ccs).filter(|&m| gamma_bin[m]).map(|m| (m, row[m]));
        for m in top_positive(candidates, instance.ue_cc_cap(k)) {
            beta_bin[k * num_ccs + m] = true;
        }
    }
    (gamma_bin, beta_bin)
}

/// Maps a relaxed allocation to a feasible binary one.
///
/// Order is `gamma` (top `M_0`), then `beta` per UE (top `M_k` among active
/// CCs), then per RB of an active CC the UE with the largest relaxed `alpha`
/// among those holding the CC. Only strictly positive relaxed entries are
/// eligible; ties go to the lowest index.
pub fn quantize(instance: &ProblemInstance, relaxed: &RelaxedAllocation) -> Result<BinaryAllocation> {
    relaxed.check_dims(instance)?;
    let (num_ues, num_ccs, num_rbs) = instance.dims();
    let (gamma, beta) = quantize_cc_blocks(instance, &relaxed.gamma, &relaxed.beta);
    let mut out = BinaryAllocation {
        num_ues,
        num_ccs,
        num_rbs,
        alpha: vec![false; num_ues * num_ccs * num_rbs],
        beta,
        gamma,
    };
    for m in (0..num_ccs).filter(|&m| out.gamma[m]) {
        for n in 0..num_rbs {
            let mut best: Option<(usize, f64)> = None;
            for k in (0..num_ues).filter(|&k| out.beta_at(k, m)) {
                let a = relaxed.alpha_at(k, m, n);
                if a > 0.0 && best.is_none_or(|(_, b)| a > b) {
                    best = Some((k, a));
                }
            }
            if let Some((k, _)) = best {
                out.alpha[instance.index(k, m, n)] = true;
            }
        }
    }
    Ok(out)
}

pub(crate) fn expect_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

fn nest3<T: Clone>(flat: &[T], k: usize, m: usize, n: usize) -> Vec<Vec<Vec<T>>> {
    debug_assert_eq!(flat.len(), k * m * n);
    flat.chunks(m * n)
        .map(|ue| ue.chunks(n).map(<[T]>::to_vec).collect())
        .collect()
}

fn flatten2<T>(what: &'static str, nested: Vec<Vec<T>>) -> Result<((usize, usize), Vec<T>)> {
    let rows = nested.len();
    let cols = nested.first().map_or(0, Vec::len);
    let mut flat = Vec::with_capacity(rows * cols);
    for row in nested {
        expect_len(what, cols, row.len())?;
        flat.extend(row);
    }
    Ok(((rows, cols), flat))
}

fn flatten3<T>(
    what: &'static str,
    nested: Vec<Vec<Vec<T>>>,
) -> Result<((usize, usize, usize), Vec<T>)> {
    let k = nested.len();
    let m = nested.first().map_or(0, Vec::len);
    let n = nested
        .first()
        .and_then(|ue| ue.first())
        .map_or(0, Vec::len);
    let mut flat = Vec::with_capacity(k * m * n);
    for ue in nested {
        expect_len(what, m, ue.len())?;
        for cc in ue {
            expect_len(what, n, cc.len())?;
            flat.extend(cc);
        }
    }
    Ok(((k, m, n), flat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_ue_instance() -> ProblemInstance {
        ProblemInstance::new(
            vec![1.0, 1.0],
            vec![vec![vec![3.0], vec![1.0]], vec![vec![2.0], vec![4.0]]],
            vec![2, 2],
            2,
        )
        .unwrap()
    }

    fn two_ue_binary(inst: &ProblemInstance) -> BinaryAllocation {
        let mut b = BinaryAllocation::empty(inst);
        b.assign(0, 0, 0);
        b.assign(1, 1, 0);
        b
    }

    #[test]
    fn wsu_single_term() {
        let inst = ProblemInstance::new(vec![1.0], vec![vec![vec![2.5]]], vec![1], 1).unwrap();
        let mut b = BinaryAllocation::empty(&inst);
        b.assign(0, 0, 0);
        assert_eq!(evaluate_wsu(&inst, &b).unwrap(), 2.5);
    }

    #[test]
    fn wsu_empty_allocation_is_zero() {
        let inst = two_ue_instance();
        assert_eq!(evaluate_wsu(&inst, &BinaryAllocation::empty(&inst)).unwrap(), 0.0);
    }

    #[test]
    fn wsu_two_ue_hand_sum() {
        let inst = two_ue_instance();
        let b = two_ue_binary(&inst);
        assert_eq!(evaluate_wsu(&inst, &b).unwrap(), 7.0);
    }

    #[test]
    fn wsu_ignores_inconsistent_triples() {
        let inst = two_ue_instance();
        let mut b = two_ue_binary(&inst);
        b.gamma[1] = false;
        assert_eq!(evaluate_wsu(&inst, &b).unwrap(), 3.0);
    }

    #[test]
    fn wsu_dimension_mismatch() {
        let inst = two_ue_instance();
        let other = ProblemInstance::new(vec![1.0], vec![vec![vec![1.0]]], vec![1], 1).unwrap();
        let b = BinaryAllocation::empty(&other);
        assert!(matches!(
            evaluate_wsu(&inst, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn relaxed_wsu_products() {
        let inst = ProblemInstance::new(vec![1.0], vec![vec![vec![1.0, 2.0]]], vec![1], 1).unwrap();
        let ones = RelaxedAllocation::filled(&inst, 1.0, 1.0, 1.0);
        assert_eq!(evaluate_relaxed_wsu(&inst, &ones).unwrap(), 3.0);
        let half_beta = RelaxedAllocation::filled(&inst, 1.0, 0.5, 1.0);
        assert_eq!(evaluate_relaxed_wsu(&inst, &half_beta).unwrap(), 1.5);
    }

    #[test]
    fn relaxed_wsu_matches_binary_on_binary_input() {
        let inst = two_ue_instance();
        let b = two_ue_binary(&inst);
        let r = RelaxedAllocation::from_binary(&b);
        assert_eq!(evaluate_relaxed_wsu(&inst, &r).unwrap(), 7.0);
    }

    #[test]
    fn feasibility_reports() {
        let inst = ProblemInstance::new(
            vec![1.0, 1.0],
            vec![vec![vec![1.0; 2]; 3]; 2],
            vec![1, 2],
            2,
        )
        .unwrap();
        let empty = BinaryAllocation::empty(&inst);
        assert!(check_feasibility(&inst, &empty).unwrap().is_feasible());

        let mut clash = BinaryAllocation::empty(&inst);
        clash.assign(0, 1, 1);
        clash.assign(1, 1, 1);
        let rep = check_feasibility(&inst, &clash).unwrap();
        assert!(!rep.c1.pass);
        assert_eq!(rep.c1.first_violation, Some(vec![1, 1]));
        assert!(rep.c2.pass && rep.c3.pass && rep.consistency.pass);

        let mut over = BinaryAllocation::empty(&inst);
        over.assign(0, 0, 0);
        over.assign(0, 1, 0);
        let rep = check_feasibility(&inst, &over).unwrap();
        assert_eq!(rep.c2.first_violation, Some(vec![0]));

        let mut many = BinaryAllocation::empty(&inst);
        many.assign(1, 0, 0);
        many.assign(1, 1, 0);
        many.gamma[2] = true;
        let rep = check_feasibility(&inst, &many).unwrap();
        assert!(rep.c2.pass);
        assert_eq!(rep.c3.first_violation, Some(vec![3]));

        let mut loose = BinaryAllocation::empty(&inst);
        loose.alpha[inst.index(1, 2, 1)] = true;
        let rep = check_feasibility(&inst, &loose).unwrap();
        assert_eq!(rep.consistency.first_violation, Some(vec![1, 2, 1]));
    }

    #[test]
    fn quantize_is_identity_on_binary_input() {
        let inst = two_ue_instance();
        let b = two_ue_binary(&inst);
        let q = quantize(&inst, &RelaxedAllocation::from_binary(&b)).unwrap();
        assert_eq!(q, b);
    }

    #[test]
    fn quantize_gamma_top_two() {
        let inst = ProblemInstance::new(vec![1.0, 1.0], vec![vec![vec![1.0; 2]; 4]; 2], vec![4, 4], 2)
            .unwrap();
        let mut r = RelaxedAllocation::filled(&inst, 0.5, 0.5, 0.0);
        r.gamma = vec![0.9, 0.1, 0.8, 0.2];
        let q = quantize(&inst, &r).unwrap();
        assert_eq!(q.gamma, vec![true, false, true, false]);
    }

    #[test]
    fn quantize_beta_top_one() {
        let inst = ProblemInstance::new(vec![1.0], vec![vec![vec![1.0; 2]; 3]], vec![1], 3).unwrap();
        let mut r = RelaxedAllocation::filled(&inst, 1.0, 0.0, 1.0);
        r.beta = vec![0.2, 0.7, 0.1];
        let q = quantize(&inst, &r).unwrap();
        assert_eq!(q.beta, vec![false, true, false]);
    }

    #[test]
    fn quantize_ties_go_to_lowest_index() {
        let inst = ProblemInstance::new(vec![1.0, 1.0], vec![vec![vec![1.0]; 3]; 2], vec![3, 3], 2)
            .unwrap();
        let r = RelaxedAllocation::filled(&inst, 0.5, 0.5, 0.5);
        let q = quantize(&inst, &r).unwrap();
        assert_eq!(q.gamma, vec![true, true, false]);
        assert_eq!(q.owner(0, 0), Some(0));
        assert_eq!(q.owner(2, 0), None);
    }

    #[test]
    fn instance_json_schema() {
        let inst = two_ue_instance();
        let json = inst.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["K", "M", "N", "weights", "Mk", "M0", "phi"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["phi"][1][1][0], 4.0);
        assert_eq!(ProblemInstance::from_json(&json).unwrap(), inst);
    }

    #[test]
    fn instance_json_rejects_bad_shapes() {
        let bad = r#"{"K":2,"M":1,"N":1,"weights":[1,1],"Mk":[1,1],"M0":1,"phi":[[[1.0]]]}"#;
        assert!(ProblemInstance::from_json(bad).is_err());
        let ragged = r#"{"K":1,"M":2,"N":1,"weights":[1],"Mk":[1],"M0":1,"phi":[[[1.0],[1.0,2.0]]]}"#;
        assert!(ProblemInstance::from_json(ragged).is_err());
        let cap = r#"{"K":1,"M":1,"N":1,"weights":[1],"Mk":[2],"M0":1,"phi":[[[1.0]]]}"#;
        assert!(ProblemInstance::from_json(cap).is_err());
    }

    #[test]
    fn binary_json_uses_nested_indices() {
        let inst = two_ue_instance();
        let b = two_ue_binary(&inst);
        let v: serde_json::Value = serde_json::from_str(&b.to_json().unwrap()).unwrap();
        assert_eq!(v["alpha"][1][1][0], 1);
        assert_eq!(v["alpha"][0][1][0], 0);
        assert_eq!(v["beta"][0], serde_json::json!([1, 0]));
        let back: BinaryAllocation = serde_json::from_value(v).unwrap();
        assert_eq!(back, b);
    }

    // Quantizes each block on its own and then drops triples that are not
    // consistent; the baseline the consistency-aware order must never lose to.
    fn literal_quantize(inst: &ProblemInstance, r: &RelaxedAllocation) -> BinaryAllocation {
        let (kk, mm, nn) = inst.dims();
        let mut out = BinaryAllocation::empty(inst);
        for m in top_positive(r.gamma.iter().copied().enumerate(), inst.system_cc_cap()) {
            out.gamma[m] = true;
        }
        for k in 0..kk {
            let row = (0..mm).map(|m| (m, r.beta_at(k, m)));
            for m in top_positive(row, inst.ue_cc_cap(k)) {
                out.beta[k * mm + m] = true;
            }
        }
        for m in 0..mm {
            for n in 0..nn {
                if let Some(&k) = top_positive((0..kk).map(|k| (k, r.alpha_at(k, m, n))), 1).first() {
                    if out.beta_at(k, m) && out.gamma[m] {
                        out.alpha[inst.index(k, m, n)] = true;
                    }
                }
            }
        }
        out
    }

    fn arb_case() -> impl Strategy<Value = (ProblemInstance, RelaxedAllocation)> {
        (1usize..4, 1usize..5, 1usize..4).prop_flat_map(|(k, m, n)| {
            (
                proptest::collection::vec(0.1f64..3.0, k),
                proptest::collection::vec(0.0f64..5.0, k * m * n),
                proptest::collection::vec(1..=m, k),
                1..=m,
                proptest::collection::vec(0.0f64..=1.0, k * m * n),
                proptest::collection::vec(0.0f64..=1.0, k * m),
                proptest::collection::vec(0.0f64..=1.0, m),
            )
                .prop_map(move |(w, phi, caps, m0, a, b, g)| {
                    let inst = ProblemInstance::from_flat(k, m, n, w, phi, caps, m0).unwrap();
                    let r = RelaxedAllocation::from_parts(&inst, a, b, g).unwrap();
                    (inst, r)
                })
        })
    }

    proptest! {
        #[test]
        fn quantize_always_feasible((inst, r) in arb_case()) {
            let q = quantize(&inst, &r).unwrap();
            prop_assert!(check_feasibility(&inst, &q).unwrap().is_feasible());
        }

        #[test]
        fn quantize_dominates_literal_variant((inst, r) in arb_case()) {
            let ours = evaluate_wsu(&inst, &quantize(&inst, &r).unwrap()).unwrap();
            let lit = literal_quantize(&inst, &r);
            prop_assert!(check_feasibility(&inst, &lit).unwrap().c1.pass);
            let theirs = evaluate_wsu(&inst, &lit).unwrap();
            prop_assert!(ours >= theirs - 1e-12, "{ours} < {theirs}");
        }

        #[test]
        fn quantize_invariant_under_monotone_maps((inst, mut r) in arb_case(), pick in 0usize..3) {
            // Keep entries strictly positive so the maps preserve eligibility.
            for v in r.beta.iter_mut().chain(r.gamma.iter_mut()) {
                *v = 0.01 + 0.99 * *v;
            }
            let f: fn(f64) -> f64 = match pick {
                0 => f64::sqrt,
                1 => |x| x * x * x,
                _ => f64::ln_1p,
            };
            let before = quantize(&inst, &r).unwrap();
            let mut mapped = r.clone();
            mapped.gamma.iter_mut().for_each(|v| *v = f(*v));
            mapped.beta.iter_mut().for_each(|v| *v = f(*v));
            let after = quantize(&inst, &mapped).unwrap();
            prop_assert_eq!(before.gamma, after.gamma);
            prop_assert_eq!(before.beta, after.beta);
        }
    }
}
