//! Stopover (open-population) model: arrival mixture, behavioural retention
//! groups, daily detection, and the marginal likelihood of encounter
//! histories plus unmarked counts.
//!
//! Each of the `N` animals in the super-population carries a latent record
//! `z = (g, b, d)`: behavioural group, entry day, and exit day. The
//! likelihood marginalizes `z` over the region compatible with an observed
//! history — entry no later than first capture, exit no earlier than last
//! detection — and over all of `1 <= b <= d <= T` for the animals never
//! captured. Counts of unmarked animals on resight days are Binomial with a
//! success probability that itself marginalizes the latent record.
//!
//! The marginal sums are evaluated with cumulative log-space tables: a
//! retention table `R_g(b, d)` built by recurrence, capture-miss and
//! resight-miss prefix offsets, and per-group corner tables
//! `J_g(f, l) = logsumexp over {b <= f, d >= l}` of the latent kernel. One
//! state evaluation costs `O(G * T^2)` regardless of how many histories the
//! dataset holds; each history is then an `O(G)` lookup. An evaluator caches
//! the tables per parameter block (arrival / retention / detection), so a
//! proposal that touches one block only rebuilds what depends on it.
//!
//! Everything reduces across mixture components in a canonical order (sorted
//! by component parameters), which makes every likelihood value exactly
//! invariant under relabelling of arrival components or behavioural groups.

use crate::data::{History, Mark, ObservedData, StudyDesign};
use crate::math::{
    inv_logit, ln_binomial_pmf, ln_gamma, ln_inv_logit, log_add_exp, log_sum_exp,
    normal_cell_mass,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("arrival window must span at least 2 days, got {t}")]
    WindowTooShort { t: usize },
    #[error("invalid parameter state: {what}")]
    InvalidState { what: String },
    #[error("day {day} is not a resight day")]
    NotResightDay { day: usize },
    #[error("{what}")]
    DimensionMismatch { what: String },
}

/// Normal mixture over arrival times; component `m` has weight
/// `weights[m]`, mean `means[m]`, and standard deviation `sds[m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl ArrivalMixture {
    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self, t: usize) -> Result<(), ModelError> {
        let m = self.m();
        if m == 0 || self.means.len() != m || self.sds.len() != m {
            return Err(ModelError::InvalidState {
                what: format!(
                    "arrival mixture needs equal-length non-empty blocks, got {}/{}/{}",
                    m,
                    self.means.len(),
                    self.sds.len()
                ),
            });
        }
        validate_proportions("arrival weights", &self.weights)?;
        for (i, (&mu, &sd)) in self.means.iter().zip(&self.sds).enumerate() {
            if !mu.is_finite() {
                return Err(ModelError::InvalidState {
                    what: format!("arrival mean {i} is not finite"),
                });
            }
            if !(sd > 0.1 && sd < t as f64) {
                return Err(ModelError::InvalidState {
                    what: format!("arrival sd {i} = {sd} outside (0.1, {t})"),
                });
            }
        }
        Ok(())
    }
}

/// Behavioural groups: group shares, per-group retention intercepts, and
/// the shared calendar-day and age slopes of the retention logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviourModel {
    pub shares: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub day_slope: f64,
    pub age_slope: f64,
}

impl BehaviourModel {
    pub fn g(&self) -> usize {
        self.shares.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.g() == 0 || self.intercepts.len() != self.g() {
            return Err(ModelError::InvalidState {
                what: "behaviour blocks must be non-empty and equal length".into(),
            });
        }
        validate_proportions("group shares", &self.shares)?;
        for v in self.intercepts.iter().chain([&self.day_slope, &self.age_slope]) {
            if !v.is_finite() {
                return Err(ModelError::InvalidState {
                    what: "behaviour coefficients must be finite".into(),
                });
            }
        }
        Ok(())
    }
}

/// Capture logistic regression (intercept, effort slope, two location
/// offsets) plus the constant resighting probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub intercept: f64,
    pub effort_slope: f64,
    pub loc2_effect: f64,
    pub loc3_effect: f64,
    pub resight_prob: f64,
}

impl DetectionModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let coeffs = [self.intercept, self.effort_slope, self.loc2_effect, self.loc3_effect];
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidState {
                what: "detection coefficients must be finite".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.resight_prob) {
            return Err(ModelError::InvalidState {
                what: format!("resight probability {} outside [0, 1]", self.resight_prob),
            });
        }
        Ok(())
    }
}

/// Full parameter state of the stopover model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenParamState {
    /// Super-population size.
    pub n_super: u64,
    pub arrival: ArrivalMixture,
    pub behaviour: BehaviourModel,
    pub detection: DetectionModel,
}

impl OpenParamState {
    pub fn validate(&self, t: usize) -> Result<(), ModelError> {
        self.arrival.validate(t)?;
        self.behaviour.validate()?;
        self.detection.validate()
    }
}

/// Latent record of one animal: behavioural group (0-based index), entry
/// day, and exit day (both 1-based, inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentHistory {
    pub group: usize,
    pub entry_day: usize,
    pub exit_day: usize,
}

fn validate_proportions(what: &str, v: &[f64]) -> Result<(), ModelError> {
    if v.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(ModelError::InvalidState {
            what: format!("{what} must lie in [0, 1]"),
        });
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(ModelError::InvalidState {
            what: format!("{what} sum to {sum}, expected 1"),
        });
    }
    Ok(())
}

/// Indices of arrival components in canonical (mean, sd, weight) order.
///
/// All cross-component reductions run in this order, which is what makes
/// likelihood values exactly label-invariant.
pub(crate) fn arrival_order(a: &ArrivalMixture) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..a.m()).collect();
    idx.sort_by(|&i, &j| {
        (a.means[i], a.sds[i], a.weights[i])
            .partial_cmp(&(a.means[j], a.sds[j], a.weights[j]))
            .expect("validated mixture has no NaN")
    });
    idx
}

/// Indices of behavioural groups in canonical (intercept, share) order.
pub(crate) fn group_order(b: &BehaviourModel) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..b.g()).collect();
    idx.sort_by(|&i, &j| {
        (b.intercepts[i], b.shares[i])
            .partial_cmp(&(b.intercepts[j], b.shares[j]))
            .expect("validated behaviour model has no NaN")
    });
    idx
}

/// Entry probabilities `beta[b-1]`, `b = 1..=t`: the mixture mass falling in
/// each arrival cell, with open-ended first and last cells so the vector
/// sums to one by construction.
pub fn entry_probabilities(arrival: &ArrivalMixture, t: usize) -> Result<Vec<f64>, ModelError> {
    if t < 2 {
        return Err(ModelError::WindowTooShort { t });
    }
    arrival.validate(t)?;
    let mut beta = vec![0.0; t];
    for &m in &arrival_order(arrival) {
        let (w, mu, sd) = (arrival.weights[m], arrival.means[m], arrival.sds[m]);
        beta[0] += w * normal_cell_mass(mu, sd, f64::NEG_INFINITY, 1.0);
        for b in 2..t {
            beta[b - 1] += w * normal_cell_mass(mu, sd, (b - 1) as f64, b as f64);
        }
        beta[t - 1] += w * normal_cell_mass(mu, sd, (t - 1) as f64, f64::INFINITY);
    }
    Ok(beta)
}

/// Retention logit for group `g` (0-based) on day `t` at residence age `a`.
pub fn retention_logit(behaviour: &BehaviourModel, g: usize, t: usize, a: usize) -> f64 {
    assert!(g < behaviour.g(), "group index {g} out of range");
    behaviour.intercepts[g] + behaviour.day_slope * t as f64 + behaviour.age_slope * a as f64
}

/// Probability that an animal of group `g` present on day `t` at residence
/// age `a` stays through to day `t + 1`.
pub fn retention_probability(behaviour: &BehaviourModel, g: usize, t: usize, a: usize) -> f64 {
    inv_logit(retention_logit(behaviour, g, t, a))
}

/// Capture logit on a capture day (effort plus location effects).
pub fn capture_logit(detection: &DetectionModel, design: &StudyDesign, day: usize) -> f64 {
    assert!(
        design.is_capture(day),
        "capture probability queried on non-capture day {day}"
    );
    let loc = design.location(day);
    detection.intercept
        + detection.effort_slope * design.effort(day)
        + if loc == 2 { detection.loc2_effect } else { 0.0 }
        + if loc == 3 { detection.loc3_effect } else { 0.0 }
}

/// Capture probability on a capture day.
pub fn capture_probability(detection: &DetectionModel, design: &StudyDesign, day: usize) -> f64 {
    inv_logit(capture_logit(detection, design, day))
}

/// Log-probability of one latent record: group share, entry cell, daily
/// retention through the stay, and the departure factor when the animal
/// leaves before the window closes.
pub fn latent_history_logprob(
    state: &OpenParamState,
    entry_probs: &[f64],
    z: &LatentHistory,
    t: usize,
) -> f64 {
    assert!(z.group < state.behaviour.g(), "group index out of range");
    assert!(
        1 <= z.entry_day && z.entry_day <= z.exit_day && z.exit_day <= t,
        "latent record ({}, {}) outside 1 <= b <= d <= {t}",
        z.entry_day,
        z.exit_day
    );
    assert_eq!(entry_probs.len(), t, "entry probabilities must have length {t}");
    let mut lp = state.behaviour.shares[z.group].ln() + entry_probs[z.entry_day - 1].ln();
    for day in z.entry_day..z.exit_day {
        lp += ln_inv_logit(retention_logit(&state.behaviour, z.group, day, day - z.entry_day + 1));
    }
    if z.exit_day < t {
        lp += ln_inv_logit(-retention_logit(
            &state.behaviour,
            z.group,
            z.exit_day,
            z.exit_day - z.entry_day + 1,
        ));
    }
    lp
}

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

/// Static, detection-independent facts about one distinct history.
#[derive(Debug, Clone)]
struct HistMeta {
    /// First capture day.
    first: usize,
    /// Last detection day.
    last: usize,
    /// Capture days with a `1`.
    one_days: Vec<usize>,
    /// Resightings recorded.
    n_twos: f64,
    /// Resight days in `[first, last]` with a `0`.
    n_res_misses: f64,
    /// Multiplicity.
    count: f64,
}

fn hist_meta(design: &StudyDesign, h: &History) -> HistMeta {
    let first = h.first_capture();
    let last = h.last_detection();
    let mut one_days = Vec::new();
    let mut n_twos = 0.0;
    let mut n_res_misses = 0.0;
    for day in 1..=design.t() {
        match h.marks[day - 1] {
            Some(Mark::Caught) => one_days.push(day),
            Some(Mark::Resighted) => n_twos += 1.0,
            Some(Mark::Missed) => {
                if design.is_resight(day) && (first..=last).contains(&day) {
                    n_res_misses += 1.0;
                }
            }
            None => {}
        }
    }
    HistMeta {
        first,
        last,
        one_days,
        n_twos,
        n_res_misses,
        count: h.count as f64,
    }
}

/// Two-entry cache keyed by parameter-block content; enough to keep both the
/// current state's tables and one proposal's tables alive through an
/// accept/reject cycle.
struct TwoSlot<K, V> {
    slots: Vec<(K, V)>,
}

impl<K: PartialEq + Clone, V> TwoSlot<K, V> {
    fn new() -> Self {
        TwoSlot { slots: Vec::new() }
    }

    fn get_or_build(&mut self, key: &K, build: impl FnOnce() -> V) -> &V {
        if let Some(pos) = self.slots.iter().position(|(k, _)| k == key) {
            let entry = self.slots.remove(pos);
            self.slots.insert(0, entry);
        } else {
            if self.slots.len() == 2 {
                self.slots.pop();
            }
            self.slots.insert(0, (key.clone(), build()));
        }
        &self.slots[0].1
    }

    fn get(&self, key: &K) -> Option<&V> {
        self.slots.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }
}

struct ArrivalTables {
    log_beta: Vec<f64>,
}

/// Retention tables for one behaviour block. `r[(b, d)]` is the cumulative
/// log-retention from entry day `b` through day `d - 1`; `dep[(b, d)]` the
/// log departure factor at exit day `d` (zero on `d = T` where no departure
/// is observed).
struct RetTables {
    r: Vec<f64>,
    dep: Vec<f64>,
}

struct DetTables {
    /// Prefix sums: `q0[d]` = sum of `ln(1-p)` over capture days `<= d`,
    /// `r0[d]` = sum of `ln(1-s)` over resight days `<= d`.
    q0: Vec<f64>,
    r0: Vec<f64>,
    /// Per-history detection constant (marks at known days, resight hits
    /// and misses between first capture and last detection).
    hist_const: Vec<f64>,
}

struct KernelTables {
    /// Corner tables `j[g][(f, l)]`: logsumexp of the marked-animal kernel
    /// over `b <= f`, `d >= max(l, b)`.
    j: Vec<f64>,
    /// Per-group logsumexp of the unmarked kernel over all `b <= d`.
    zero_part: Vec<f64>,
    /// `zeta0[g][t]`: probability an animal of group `g` is present and
    /// still unmarked on day `t` (before the share weight and `s`).
    zeta0: Vec<f64>,
}

type RetKey = (Vec<f64>, f64, f64);
type KernelKey = (ArrivalMixture, RetKey, DetectionModel);

/// Likelihood engine for one dataset. Holds per-history constants plus
/// content-keyed caches of every parameter-block table, so repeated
/// evaluations along an MCMC sweep only rebuild what a proposal changed.
pub struct OpenEvaluator<'d> {
    design: &'d StudyDesign,
    t: usize,
    hists: Vec<HistMeta>,
    /// Total marked animals.
    d_total: u64,
    /// Data-constant part of the multinomial coefficient.
    ln_count_factorials: f64,
    /// `(day, y)` pairs for resight-day counts.
    counts: Vec<(usize, u64)>,
    arrival: TwoSlot<ArrivalMixture, ArrivalTables>,
    retention: TwoSlot<RetKey, RetTables>,
    detection: TwoSlot<DetectionModel, DetTables>,
    kernels: TwoSlot<KernelKey, KernelTables>,
}

impl<'d> OpenEvaluator<'d> {
    pub fn new(design: &'d StudyDesign, data: &ObservedData) -> Result<Self, ModelError> {
        if data.t() != design.t() {
            return Err(ModelError::DimensionMismatch {
                what: format!(
                    "data covers {} days but design covers {}",
                    data.t(),
                    design.t()
                ),
            });
        }
        let hists: Vec<HistMeta> = data.histories.iter().map(|h| hist_meta(design, h)).collect();
        let ln_count_factorials = data
            .histories
            .iter()
            .map(|h| ln_gamma(h.count as f64 + 1.0))
            .sum();
        let counts = (1..=design.t())
            .filter_map(|day| data.count_on(day).map(|y| (day, y)))
            .collect();
        Ok(OpenEvaluator {
            design,
            t: design.t(),
            hists,
            d_total: data.d(),
            ln_count_factorials,
            counts,
            arrival: TwoSlot::new(),
            retention: TwoSlot::new(),
            detection: TwoSlot::new(),
            kernels: TwoSlot::new(),
        })
    }

    /// Joint log-likelihood: marked histories plus unmarked counts.
    pub fn log_likelihood(&mut self, state: &OpenParamState) -> f64 {
        self.marked_log_likelihood(state) + self.counts_log_likelihood(state)
    }

    /// Log-likelihood of the multinomial over distinct histories and the
    /// never-captured balance of the super-population.
    pub fn marked_log_likelihood(&mut self, state: &OpenParamState) -> f64 {
        debug_assert!(state.validate(self.t.max(2)).is_ok());
        let n = state.n_super;
        if n < self.d_total {
            return f64::NEG_INFINITY;
        }
        let order = group_order(&state.behaviour);
        let hist_lls = self.history_lls(state, &order);
        let zero_ll = self.zero_ll(state, &order);
        let nf = n as f64;
        let df = self.d_total as f64;
        let mut ll = ln_gamma(nf + 1.0) - self.ln_count_factorials - ln_gamma(nf - df + 1.0);
        for (meta, hll) in self.hists.iter().zip(&hist_lls) {
            ll += meta.count * hll;
        }
        // An empty unmarked pool contributes exp(0); skipping the product
        // also avoids 0 * -inf when no animal can escape detection.
        if n > self.d_total {
            ll += (nf - df) * zero_ll;
        }
        ll
    }

    /// Log-likelihood of the unmarked counts on resight days.
    pub fn counts_log_likelihood(&mut self, state: &OpenParamState) -> f64 {
        if self.counts.is_empty() {
            return 0.0;
        }
        let zetas = self.count_success_probs(state);
        let mut ll = 0.0;
        for (&(_, y), &(_, zeta)) in self.counts.iter().zip(&zetas) {
            ll += ln_binomial_pmf(y, state.n_super, zeta);
        }
        ll
    }

    /// Marginal log-likelihood of each distinct history, in data order.
    pub fn history_log_likelihoods(&mut self, state: &OpenParamState) -> Vec<f64> {
        self.history_lls(state, &group_order(&state.behaviour))
    }

    /// Log-probability that one animal of the super-population is never
    /// captured.
    pub fn zero_history_log_likelihood(&mut self, state: &OpenParamState) -> f64 {
        self.zero_ll(state, &group_order(&state.behaviour))
    }

    /// `(day, zeta_day)` for every resight day: the probability an animal is
    /// present, unmarked, and counted that day.
    pub fn count_success_probs(&mut self, state: &OpenParamState) -> Vec<(usize, f64)> {
        let order = group_order(&state.behaviour);
        let t = self.t;
        let kernels = build_kernels(
            self.design,
            &self.hists,
            t,
            &mut self.arrival,
            &mut self.retention,
            &mut self.detection,
            &mut self.kernels,
            state,
        );
        self.design
            .resight_days()
            .map(|day| {
                let mut zeta = 0.0;
                for &g in &order {
                    zeta += state.behaviour.shares[g] * kernels.zeta0[g * t + (day - 1)];
                }
                (day, (zeta * state.detection.resight_prob).clamp(0.0, 1.0))
            })
            .collect()
    }

    fn history_lls(&mut self, state: &OpenParamState, order: &[usize]) -> Vec<f64> {
        let t = self.t;
        let kernels = build_kernels(
            self.design,
            &self.hists,
            t,
            &mut self.arrival,
            &mut self.retention,
            &mut self.detection,
            &mut self.kernels,
            state,
        );
        let det = self
            .detection
            .get(&state.detection)
            .expect("detection tables are built together with the kernels");
        let mut buf = vec![0.0; order.len()];
        self.hists
            .iter()
            .enumerate()
            .map(|(h, meta)| {
                for (slot, &g) in buf.iter_mut().zip(order) {
                    *slot = state.behaviour.shares[g].ln()
                        + kernels.j[(g * t + (meta.first - 1)) * t + (meta.last - 1)];
                }
                det.hist_const[h] + log_sum_exp(&buf)
            })
            .collect()
    }

    fn zero_ll(&mut self, state: &OpenParamState, order: &[usize]) -> f64 {
        let t = self.t;
        let kernels = build_kernels(
            self.design,
            &self.hists,
            t,
            &mut self.arrival,
            &mut self.retention,
            &mut self.detection,
            &mut self.kernels,
            state,
        );
        let terms: Vec<f64> = order
            .iter()
            .map(|&g| state.behaviour.shares[g].ln() + kernels.zero_part[g])
            .collect();
        log_sum_exp(&terms)
    }
}

fn build_arrival(arrival: &ArrivalMixture, t: usize) -> ArrivalTables {
    let beta = if t == 1 {
        // Degenerate single-day window: all mass in the one open-ended cell.
        vec![1.0]
    } else {
        entry_probabilities(arrival, t).expect("validated state")
    };
    ArrivalTables {
        log_beta: beta.iter().map(|&b| b.ln()).collect(),
    }
}

fn build_retention(behaviour: &BehaviourModel, t: usize) -> RetTables {
    let g_n = behaviour.g();
    let mut r = vec![0.0; g_n * t * t];
    let mut dep = vec![0.0; g_n * t * t];
    for g in 0..g_n {
        let base = g * t * t;
        for b in 1..=t {
            let row = base + (b - 1) * t;
            let mut acc = 0.0;
            for d in b..=t {
                if d > b {
                    acc += ln_inv_logit(retention_logit(behaviour, g, d - 1, d - b));
                }
                r[row + (d - 1)] = acc;
                if d < t {
                    dep[row + (d - 1)] = ln_inv_logit(-retention_logit(behaviour, g, d, d - b + 1));
                }
            }
        }
    }
    RetTables { r, dep }
}

fn build_detection(
    detection: &DetectionModel,
    design: &StudyDesign,
    hists: &[HistMeta],
) -> DetTables {
    let t = design.t();
    let mut ln_p = vec![0.0; t + 1];
    let mut ln_q = vec![0.0; t + 1];
    let mut q0 = vec![0.0; t + 1];
    let mut r0 = vec![0.0; t + 1];
    let s = detection.resight_prob;
    let (ln_s, ln_1ms) = (s.ln(), (-s).ln_1p());
    for day in 1..=t {
        q0[day] = q0[day - 1];
        r0[day] = r0[day - 1];
        if design.is_capture(day) {
            let logit = capture_logit(detection, design, day);
            ln_p[day] = ln_inv_logit(logit);
            ln_q[day] = ln_inv_logit(-logit);
            q0[day] += ln_q[day];
        } else if design.is_resight(day) {
            r0[day] += ln_1ms;
        }
    }
    let hist_const = hists
        .iter()
        .map(|meta| {
            let mut c = meta.n_twos * ln_s + meta.n_res_misses * ln_1ms - r0[meta.last];
            for &day in &meta.one_days {
                c += ln_p[day] - ln_q[day];
            }
            c
        })
        .collect();
    DetTables { q0, r0, hist_const }
}

/// Build (or fetch) every table the current state needs and return the
/// combined kernel tables. Free function rather than a method so the borrow
/// of each cache slot stays disjoint.
#[allow(clippy::too_many_arguments)]
fn build_kernels<'c>(
    design: &StudyDesign,
    hists: &[HistMeta],
    t: usize,
    arrival_cache: &mut TwoSlot<ArrivalMixture, ArrivalTables>,
    retention_cache: &mut TwoSlot<RetKey, RetTables>,
    detection_cache: &mut TwoSlot<DetectionModel, DetTables>,
    kernel_cache: &'c mut TwoSlot<KernelKey, KernelTables>,
    state: &OpenParamState,
) -> &'c KernelTables {
    let ret_key: RetKey = (
        state.behaviour.intercepts.clone(),
        state.behaviour.day_slope,
        state.behaviour.age_slope,
    );
    let kernel_key: KernelKey = (state.arrival.clone(), ret_key.clone(), state.detection.clone());
    let arrival = arrival_cache.get_or_build(&state.arrival, || build_arrival(&state.arrival, t));
    let retention = retention_cache.get_or_build(&ret_key, || build_retention(&state.behaviour, t));
    let detection =
        detection_cache.get_or_build(&state.detection, || build_detection(&state.detection, design, hists));
    kernel_cache.get_or_build(&kernel_key, || {
        let g_n = state.behaviour.g();
        let mut j = vec![f64::NEG_INFINITY; g_n * t * t];
        let mut zero_part = vec![f64::NEG_INFINITY; g_n];
        let mut zeta0 = vec![0.0; g_n * t];
        let log_beta = &arrival.log_beta;
        let mut suffix_rows = vec![f64::NEG_INFINITY; t * t];
        for g in 0..g_n {
            let base = g * t * t;
            let mut zero_acc = f64::NEG_INFINITY;
            for b in 1..=t {
                let row = base + (b - 1) * t;
                let lead = log_beta[b - 1] - detection.q0[b - 1];
                let mut suffix = f64::NEG_INFINITY;
                for d in (b..=t).rev() {
                    let kernel0 = lead
                        + retention.r[row + (d - 1)]
                        + retention.dep[row + (d - 1)]
                        + detection.q0[d];
                    zero_acc = log_add_exp(zero_acc, kernel0);
                    suffix = log_add_exp(suffix, kernel0 + detection.r0[d]);
                    suffix_rows[(b - 1) * t + (d - 1)] = suffix;
                }
                // Presence-and-unmarked mass for count success probabilities
                // (no departure factor: the animal is still present on day d).
                for d in b..=t {
                    zeta0[g * t + (d - 1)] +=
                        (lead + retention.r[row + (d - 1)] + detection.q0[d]).exp();
                }
            }
            zero_part[g] = zero_acc;
            // Corner accumulation: running logsumexp over entry days b <= f
            // of the exit-day suffixes.
            for f in 1..=t {
                for l in 1..=t {
                    let q = suffix_rows[(f - 1) * t + (l.max(f) - 1)];
                    let above = if f > 1 {
                        j[(g * t + (f - 2)) * t + (l - 1)]
                    } else {
                        f64::NEG_INFINITY
                    };
                    j[(g * t + (f - 1)) * t + (l - 1)] = log_add_exp(above, q);
                }
            }
        }
        KernelTables { j, zero_part, zeta0 }
    })
}

// ---------------------------------------------------------------------------
// Free-function entry points
// ---------------------------------------------------------------------------

fn counts_placeholder(design: &StudyDesign) -> Vec<Option<u64>> {
    (1..=design.t())
        .map(|day| design.is_resight(day).then_some(0))
        .collect()
}

/// Marginal log-likelihood of a single encounter history (validated against
/// the design before evaluation).
pub fn history_loglik(
    state: &OpenParamState,
    design: &StudyDesign,
    marks: Vec<Option<Mark>>,
) -> Result<f64, ModelError> {
    let data = ObservedData::from_parts(design, vec![(marks, 1)], counts_placeholder(design))
        .map_err(|e| ModelError::InvalidState { what: e.to_string() })?;
    let mut eval = OpenEvaluator::new(design, &data)?;
    Ok(eval.history_log_likelihoods(state)[0])
}

/// Log-probability that an animal is never captured during the study.
pub fn zero_history_loglik(state: &OpenParamState, design: &StudyDesign) -> Result<f64, ModelError> {
    let data = ObservedData::from_parts(design, Vec::new(), counts_placeholder(design))
        .map_err(|e| ModelError::InvalidState { what: e.to_string() })?;
    let mut eval = OpenEvaluator::new(design, &data)?;
    Ok(eval.zero_history_log_likelihood(state))
}

/// Probability that an animal is present, still unmarked, and counted on
/// resight day `day`.
pub fn count_success_prob(
    state: &OpenParamState,
    design: &StudyDesign,
    day: usize,
) -> Result<f64, ModelError> {
    if day < 1 || day > design.t() || !design.is_resight(day) {
        return Err(ModelError::NotResightDay { day });
    }
    let data = ObservedData::from_parts(design, Vec::new(), counts_placeholder(design))
        .map_err(|e| ModelError::InvalidState { what: e.to_string() })?;
    let mut eval = OpenEvaluator::new(design, &data)?;
    let zetas = eval.count_success_probs(state);
    Ok(zetas.into_iter().find(|&(d, _)| d == day).expect("resight day").1)
}

/// Joint log-likelihood of a dataset under one parameter state.
pub fn open_log_likelihood(
    state: &OpenParamState,
    design: &StudyDesign,
    data: &ObservedData,
) -> Result<f64, ModelError> {
    let mut eval = OpenEvaluator::new(design, data)?;
    Ok(eval.log_likelihood(state))
}
