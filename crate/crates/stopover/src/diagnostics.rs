//! Posterior summaries, model probabilities, and convergence diagnostics
//! computed over completed traces.
//!
//! Nothing here touches the sampler: every function is a pure map from a
//! record slice to numbers, so results are identical however the trace was
//! produced, stored, or reloaded. Mixture labels are aligned at this
//! reporting stage only — arrival components by ascending mean, behaviour
//! groups by ascending retention intercept — which relabels but never
//! reweighs anything.

use crate::math::{inv_logit, mean, quantile_sorted, sample_variance};
use crate::open::{entry_probabilities, ArrivalMixture, BehaviourModel, ModelError};
use crate::trace::{ClosedRecord, OpenRecord};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("no retained states match the requested condition")]
    EmptySubset,
    #[error("series length {len} is below the minimum of {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("window of {len} points is too short for batch-mean variance")]
    WindowTooSmall { len: usize },
    #[error("window fractions must be positive and sum to at most 1")]
    BadFractions,
    #[error("credible level must lie strictly inside (0, 1)")]
    BadLevel,
    #[error("unknown quantity `{name}`")]
    UnknownQuantity { name: String },
    #[error("quantity `{name}` is per-component; condition on {dimension} to use it")]
    ConditionRequired { name: String, dimension: &'static str },
    #[error("component index {index} outside 1..={count} for `{name}`")]
    IndexOutOfRange { name: String, index: usize, count: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One (M, G) cell of the model-posterior table. `m` is None for the
/// closed model, which has no arrival mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCell {
    pub m: Option<usize>,
    pub g: usize,
    pub count: u64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelProbabilities {
    pub cells: Vec<ModelCell>,
    pub total: u64,
}

/// Empirical posterior over (M, G): visit frequencies of the retained chain.
pub fn model_probabilities(records: &[OpenRecord]) -> Result<ModelProbabilities, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::EmptyTrace);
    }
    let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for r in records {
        *counts.entry((r.m, r.g)).or_default() += 1;
    }
    let total = records.len() as u64;
    let cells = counts
        .into_iter()
        .map(|((m, g), count)| ModelCell {
            m: Some(m),
            g,
            count,
            probability: count as f64 / total as f64,
        })
        .collect();
    Ok(ModelProbabilities { cells, total })
}

/// Closed-model counterpart: empirical posterior over the group count.
pub fn group_probabilities(records: &[ClosedRecord]) -> Result<ModelProbabilities, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::EmptyTrace);
    }
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for r in records {
        *counts.entry(r.g).or_default() += 1;
    }
    let total = records.len() as u64;
    let cells = counts
        .into_iter()
        .map(|(g, count)| ModelCell {
            m: None,
            g,
            count,
            probability: count as f64 / total as f64,
        })
        .collect();
    Ok(ModelProbabilities { cells, total })
}

/// Geweke diagnostic outcome: either a z-score or a flag that a window had
/// zero variance, where a z-score would be meaningless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GewekeResult {
    Z(f64),
    Degenerate,
}

const GEWEKE_MIN_LEN: usize = 100;

fn batch_long_run_variance(window: &[f64]) -> Result<f64, DiagnosticsError> {
    let n = window.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return Err(DiagnosticsError::WindowTooSmall { len: n });
    }
    let len = n / batches;
    let batch_means: Vec<f64> = (0..batches)
        .map(|i| mean(&window[i * len..(i + 1) * len]))
        .collect();
    Ok(len as f64 * sample_variance(&batch_means))
}

/// Geweke convergence z-score comparing the first `first_frac` of a series
/// against its last `last_frac`, with window variances estimated by
/// non-overlapping batch means (batch count = floor of the square root of
/// the window length). Batch means are a deliberate simplification over
/// spectral density estimation: no bandwidth or window-shape tunables, and
/// at these chain lengths the difference is well inside Monte Carlo noise.
pub fn geweke_z(
    series: &[f64],
    first_frac: f64,
    last_frac: f64,
) -> Result<GewekeResult, DiagnosticsError> {
    if !(first_frac > 0.0 && last_frac > 0.0 && first_frac + last_frac <= 1.0) {
        return Err(DiagnosticsError::BadFractions);
    }
    let n = series.len();
    if n < GEWEKE_MIN_LEN {
        return Err(DiagnosticsError::SeriesTooShort { len: n, min: GEWEKE_MIN_LEN });
    }
    let n1 = (first_frac * n as f64) as usize;
    let n2 = (last_frac * n as f64) as usize;
    let first = &series[..n1];
    let last = &series[n - n2..];
    let v1 = batch_long_run_variance(first)?;
    let v2 = batch_long_run_variance(last)?;
    if v1 == 0.0 || v2 == 0.0 {
        return Ok(GewekeResult::Degenerate);
    }
    let z = (mean(first) - mean(last)) / (v1 / n1 as f64 + v2 / n2 as f64).sqrt();
    Ok(GewekeResult::Z(z))
}

/// Default windows: first 10% against last 50%.
pub fn geweke_z_default(series: &[f64]) -> Result<GewekeResult, DiagnosticsError> {
    geweke_z(series, 0.1, 0.5)
}

/// Per-quantity posterior summary with an equal-tailed credible interval.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

fn summarize(name: &str, values: Vec<f64>, level: f64) -> PosteriorSummary {
    let m = mean(&values);
    let sd = sample_variance(&values).sqrt();
    let mut sorted = values;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in traces"));
    let tail = (1.0 - level) / 2.0;
    PosteriorSummary {
        name: name.to_string(),
        n: sorted.len(),
        mean: m,
        sd,
        lower: quantile_sorted(&sorted, tail),
        upper: quantile_sorted(&sorted, 1.0 - tail),
    }
}

/// Restriction of a trace to fixed component counts. `None` leaves the
/// dimension unconstrained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelCondition {
    pub m: Option<usize>,
    pub g: Option<usize>,
}

impl ModelCondition {
    fn matches_open(&self, r: &OpenRecord) -> bool {
        self.m.is_none_or(|m| r.m == m) && self.g.is_none_or(|g| r.g == g)
    }
}

enum OpenQuantity {
    N,
    DaySlope,
    AgeSlope,
    CapIntercept,
    CapEffort,
    CapLoc2,
    CapLoc3,
    ResightProb,
    LogLik,
    LogPrior,
    Weight(usize),
    ArrivalMean(usize),
    ArrivalSd(usize),
    Share(usize),
    Intercept(usize),
}

fn parse_index(name: &str, base: &str) -> Result<Option<usize>, DiagnosticsError> {
    let Some(rest) = name.strip_prefix(base) else {
        return Ok(None);
    };
    let inner = rest
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| DiagnosticsError::UnknownQuantity { name: name.to_string() })?;
    let idx: usize = inner
        .parse()
        .map_err(|_| DiagnosticsError::UnknownQuantity { name: name.to_string() })?;
    if idx == 0 {
        return Err(DiagnosticsError::IndexOutOfRange {
            name: name.to_string(),
            index: 0,
            count: 0,
        });
    }
    Ok(Some(idx))
}

fn parse_open_quantity(name: &str) -> Result<OpenQuantity, DiagnosticsError> {
    let plain = match name {
        "n" => Some(OpenQuantity::N),
        "day_slope" => Some(OpenQuantity::DaySlope),
        "age_slope" => Some(OpenQuantity::AgeSlope),
        "cap_intercept" => Some(OpenQuantity::CapIntercept),
        "cap_effort" => Some(OpenQuantity::CapEffort),
        "cap_loc2" => Some(OpenQuantity::CapLoc2),
        "cap_loc3" => Some(OpenQuantity::CapLoc3),
        "resight_prob" => Some(OpenQuantity::ResightProb),
        "log_likelihood" => Some(OpenQuantity::LogLik),
        "log_prior" => Some(OpenQuantity::LogPrior),
        _ => None,
    };
    if let Some(q) = plain {
        return Ok(q);
    }
    if let Some(i) = parse_index(name, "weight")? {
        return Ok(OpenQuantity::Weight(i));
    }
    if let Some(i) = parse_index(name, "mean")? {
        return Ok(OpenQuantity::ArrivalMean(i));
    }
    if let Some(i) = parse_index(name, "sd")? {
        return Ok(OpenQuantity::ArrivalSd(i));
    }
    if let Some(i) = parse_index(name, "share")? {
        return Ok(OpenQuantity::Share(i));
    }
    if let Some(i) = parse_index(name, "intercept")? {
        return Ok(OpenQuantity::Intercept(i));
    }
    Err(DiagnosticsError::UnknownQuantity { name: name.to_string() })
}

fn arrival_view(r: &OpenRecord) -> ArrivalMixture {
    ArrivalMixture {
        weights: r.weights.clone(),
        means: r.means.clone(),
        sds: r.sds.clone(),
    }
}

fn behaviour_view(r: &OpenRecord) -> BehaviourModel {
    BehaviourModel {
        shares: r.shares.clone(),
        intercepts: r.intercepts.clone(),
        day_slope: r.day_slope,
        age_slope: r.age_slope,
    }
}

fn sorted_arrival_index(r: &OpenRecord, k: usize) -> usize {
    crate::open::arrival_order(&arrival_view(r))[k - 1]
}

fn sorted_group_index(r: &OpenRecord, k: usize) -> usize {
    crate::open::group_order(&behaviour_view(r))[k - 1]
}

/// Summary of one scalar quantity over the sub-trace matching `condition`.
///
/// Per-component quantities are indexed 1-based in the reporting order
/// (`mean[1]` is the earliest-arriving component, `intercept[1]` the group
/// with the lowest retention intercept) and require the corresponding
/// component count to be pinned by the condition, otherwise the index would
/// mean different things in different records.
pub fn conditional_summary(
    records: &[OpenRecord],
    condition: ModelCondition,
    quantity: &str,
    level: f64,
) -> Result<PosteriorSummary, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::EmptyTrace);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(DiagnosticsError::BadLevel);
    }
    let q = parse_open_quantity(quantity)?;
    match q {
        OpenQuantity::Weight(i) | OpenQuantity::ArrivalMean(i) | OpenQuantity::ArrivalSd(i) => {
            let m = condition.m.ok_or(DiagnosticsError::ConditionRequired {
                name: quantity.to_string(),
                dimension: "M",
            })?;
            if i > m {
                return Err(DiagnosticsError::IndexOutOfRange {
                    name: quantity.to_string(),
                    index: i,
                    count: m,
                });
            }
        }
        OpenQuantity::Share(i) | OpenQuantity::Intercept(i) => {
            let g = condition.g.ok_or(DiagnosticsError::ConditionRequired {
                name: quantity.to_string(),
                dimension: "G",
            })?;
            if i > g {
                return Err(DiagnosticsError::IndexOutOfRange {
                    name: quantity.to_string(),
                    index: i,
                    count: g,
                });
            }
        }
        _ => {}
    }
    let values: Vec<f64> = records
        .iter()
        .filter(|r| condition.matches_open(r))
        .map(|r| match q {
            OpenQuantity::N => r.n_super as f64,
            OpenQuantity::DaySlope => r.day_slope,
            OpenQuantity::AgeSlope => r.age_slope,
            OpenQuantity::CapIntercept => r.cap_intercept,
            OpenQuantity::CapEffort => r.cap_effort,
            OpenQuantity::CapLoc2 => r.cap_loc2,
            OpenQuantity::CapLoc3 => r.cap_loc3,
            OpenQuantity::ResightProb => r.resight_prob,
            OpenQuantity::LogLik => r.log_likelihood,
            OpenQuantity::LogPrior => r.log_prior,
            OpenQuantity::Weight(i) => r.weights[sorted_arrival_index(r, i)],
            OpenQuantity::ArrivalMean(i) => r.means[sorted_arrival_index(r, i)],
            OpenQuantity::ArrivalSd(i) => r.sds[sorted_arrival_index(r, i)],
            OpenQuantity::Share(i) => r.shares[sorted_group_index(r, i)],
            OpenQuantity::Intercept(i) => r.intercepts[sorted_group_index(r, i)],
        })
        .collect();
    if values.is_empty() {
        return Err(DiagnosticsError::EmptySubset);
    }
    Ok(summarize(quantity, values, level))
}

/// Closed-model scalar summaries; groups are reported in ascending capture
/// probability order via `p[k]` and `share[k]`.
pub fn closed_conditional_summary(
    records: &[ClosedRecord],
    g_condition: Option<usize>,
    quantity: &str,
    level: f64,
) -> Result<PosteriorSummary, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::EmptyTrace);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(DiagnosticsError::BadLevel);
    }
    enum Q {
        N,
        LogLik,
        LogPrior,
        P(usize),
        Share(usize),
    }
    let q = match quantity {
        "n" => Q::N,
        "log_likelihood" => Q::LogLik,
        "log_prior" => Q::LogPrior,
        other => {
            if let Some(i) = parse_index(other, "p")? {
                Q::P(i)
            } else if let Some(i) = parse_index(other, "share")? {
                Q::Share(i)
            } else {
                return Err(DiagnosticsError::UnknownQuantity { name: other.to_string() });
            }
        }
    };
    if let Q::P(i) | Q::Share(i) = q {
        let g = g_condition.ok_or(DiagnosticsError::ConditionRequired {
            name: quantity.to_string(),
            dimension: "G",
        })?;
        if i > g {
            return Err(DiagnosticsError::IndexOutOfRange {
                name: quantity.to_string(),
                index: i,
                count: g,
            });
        }
    }
    let order = |r: &ClosedRecord| {
        crate::closed::closed_group_order(&crate::closed::ClosedParamState {
            n_pop: r.n_pop,
            shares: r.shares.clone(),
            capture_probs: r.capture_probs.clone(),
        })
    };
    let values: Vec<f64> = records
        .iter()
        .filter(|r| g_condition.is_none_or(|g| r.g == g))
        .map(|r| match q {
            Q::N => r.n_pop as f64,
            Q::LogLik => r.log_likelihood,
            Q::LogPrior => r.log_prior,
            Q::P(i) => r.capture_probs[order(r)[i - 1]],
            Q::Share(i) => r.shares[order(r)[i - 1]],
        })
        .collect();
    if values.is_empty() {
        return Err(DiagnosticsError::EmptySubset);
    }
    Ok(summarize(quantity, values, level))
}

/// Model-averaged daily entry probabilities: each retained state's mixture
/// is converted to its entry vector and the per-day values are pooled
/// across the whole trace, whatever M each state had. Visit frequency is
/// the model weight, so pooling is the model average.
pub fn model_averaged_entry(
    records: &[OpenRecord],
    t: usize,
    level: f64,
) -> Result<Vec<PosteriorSummary>, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::EmptyTrace);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(DiagnosticsError::BadLevel);
    }
    let mut per_day: Vec<Vec<f64>> = vec![Vec::with_capacity(records.len()); t];
    for r in records {
        let beta = entry_probabilities(&arrival_view(r), t)?;
        for (day, &b) in beta.iter().enumerate() {
            per_day[day].push(b);
        }
    }
    Ok(per_day
        .into_iter()
        .enumerate()
        .map(|(day, values)| summarize(&format!("beta[{}]", day + 1), values, level))
        .collect())
}

/// One (retention probability, group share) sample for joint-density plots.
#[derive(Debug, Clone, PartialEq)]
pub struct RetentionPoint {
    pub iteration: u64,
    /// 1-based group index in reporting order.
    pub group: usize,
    pub phi: f64,
    pub pi: f64,
}

/// Joint (φ, π) samples at a fixed day and age, conditional on the group
/// count. Each matching record contributes one point per group, aligned by
/// the reporting sort.
pub fn retention_group_density(
    records: &[OpenRecord],
    day: usize,
    age: usize,
    g: usize,
) -> Result<Vec<RetentionPoint>, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::EmptyTrace);
    }
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.g == g) {
        let behaviour = behaviour_view(r);
        let order = crate::open::group_order(&behaviour);
        for (rank, &idx) in order.iter().enumerate() {
            let logit = r.intercepts[idx] + r.day_slope * day as f64 + r.age_slope * age as f64;
            out.push(RetentionPoint {
                iteration: r.iteration,
                group: rank + 1,
                phi: inv_logit(logit),
                pi: r.shares[idx],
            });
        }
    }
    if out.is_empty() {
        return Err(DiagnosticsError::EmptySubset);
    }
    Ok(out)
}

pub fn summaries_to_csv(rows: &[PosteriorSummary]) -> String {
    let mut out = String::from("quantity,n,mean,sd,lower,upper\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.name, r.n, r.mean, r.sd, r.lower, r.upper);
    }
    out
}

pub fn model_probabilities_to_csv(table: &ModelProbabilities) -> String {
    let mut out = String::from("m,g,count,probability\n");
    for c in &table.cells {
        let m = c.m.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", m, c.g, c.count, c.probability);
    }
    out
}

pub fn retention_density_to_csv(points: &[RetentionPoint]) -> String {
    let mut out = String::from("iteration,group,phi,pi\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.iteration, p.group, p.phi, p.pi);
    }
    out
}
