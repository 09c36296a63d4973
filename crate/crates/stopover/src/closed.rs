//! Closed-population model: a fixed population of size `N` sampled on `T`
//! capture occasions, with latent heterogeneity groups that share a
//! time-constant capture probability.

use crate::data::{Mark, ObservedData, StudyDesign};
use crate::math::{ln_gamma, log_sum_exp};
use crate::open::ModelError;
use serde::{Deserialize, Serialize};

/// Parameter state of the closed model: group fractions, per-group capture
/// probabilities, and the population size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedParamState {
    pub n_pop: u64,
    pub shares: Vec<f64>,
    pub capture_probs: Vec<f64>,
}

impl ClosedParamState {
    pub fn g(&self) -> usize {
        self.shares.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.g() == 0 || self.capture_probs.len() != self.g() {
            return Err(ModelError::InvalidState {
                what: "closed model needs equal-length non-empty share and probability blocks".into(),
            });
        }
        if self.shares.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(ModelError::InvalidState {
                what: "group shares must lie in [0, 1]".into(),
            });
        }
        let sum: f64 = self.shares.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::InvalidState {
                what: format!("group shares sum to {sum}, expected 1"),
            });
        }
        if self.capture_probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(ModelError::InvalidState {
                what: "capture probabilities must lie strictly inside (0, 1)".into(),
            });
        }
        Ok(())
    }
}

/// Group indices in canonical (capture probability, share) order; all
/// mixture reductions run in this order so values are exactly invariant
/// under relabelling.
pub(crate) fn closed_group_order(state: &ClosedParamState) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..state.g()).collect();
    idx.sort_by(|&i, &j| {
        (state.capture_probs[i], state.shares[i])
            .partial_cmp(&(state.capture_probs[j], state.shares[j]))
            .expect("validated state has no NaN")
    });
    idx
}

fn ln_mixture(state: &ClosedParamState, order: &[usize], ones: f64, zeros: f64) -> f64 {
    let terms: Vec<f64> = order
        .iter()
        .map(|&g| {
            let p = state.capture_probs[g];
            state.shares[g].ln() + ones * p.ln() + zeros * (-p).ln_1p()
        })
        .collect();
    log_sum_exp(&terms)
}

/// Log-probability of one binary capture history, mixed over groups.
pub fn closed_history_loglik(state: &ClosedParamState, x: &[bool]) -> f64 {
    debug_assert!(state.validate().is_ok());
    let ones = x.iter().filter(|&&v| v).count() as f64;
    let zeros = x.len() as f64 - ones;
    ln_mixture(state, &closed_group_order(state), ones, zeros)
}

/// Joint log-likelihood of a closed-model dataset: multinomial coefficient,
/// observed histories, and the never-captured balance of the population.
///
/// The design must have no resight days; Null days carry no information and
/// are skipped.
pub fn closed_loglik(
    state: &ClosedParamState,
    design: &StudyDesign,
    data: &ObservedData,
) -> Result<f64, ModelError> {
    debug_assert!(state.validate().is_ok());
    if design.resight_days().next().is_some() {
        return Err(ModelError::InvalidState {
            what: "closed model requires a design without resight days".into(),
        });
    }
    if data.t() != design.t() {
        return Err(ModelError::DimensionMismatch {
            what: format!("data covers {} days but design covers {}", data.t(), design.t()),
        });
    }
    let occasions = design.capture_days().count() as f64;
    let d_total = data.d();
    let n = state.n_pop;
    if n < d_total {
        return Ok(f64::NEG_INFINITY);
    }
    let order = closed_group_order(state);
    let nf = n as f64;
    let df = d_total as f64;
    let mut ll = ln_gamma(nf + 1.0) - ln_gamma(nf - df + 1.0);
    for h in &data.histories {
        let ones = h.marks.iter().flatten().filter(|&&m| m == Mark::Caught).count() as f64;
        ll += h.count as f64 * ln_mixture(state, &order, ones, occasions - ones)
            - ln_gamma(h.count as f64 + 1.0);
    }
    ll += (nf - df) * ln_mixture(state, &order, 0.0, occasions);
    Ok(ll)
}
