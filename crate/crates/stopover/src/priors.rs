//! Prior configuration, joint log-prior evaluation, and sampling of
//! new-component parameters for trans-dimensional birth moves.
//!
//! The log-prior carries the component-count mass, the symmetric Dirichlet
//! density over proportions, and the label-symmetry factorials (`M!(M-1)!`
//! and `G!(G-1)!`) in one place, so both within-model Metropolis-Hastings
//! and the birth/death acceptance ratios work against a single target
//! density.

use crate::closed::ClosedParamState;
use crate::math::{ln_gamma, normal_logpdf};
use crate::open::{arrival_order, group_order, OpenParamState};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Hyperparameters of every prior block. Arrival-location hyperparameters
/// default to values derived from the study-window length and can be pinned
/// explicitly in the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Upper bound of the uniform prior on the number of arrival components.
    pub m_max: usize,
    /// Mean of the shifted Poisson prior on the number of behaviour groups
    /// (`G - 1 ~ Poisson(mean)`).
    pub g_poisson_mean: f64,
    /// Upper bound of the uniform prior on closed-model group counts.
    pub g_max_closed: usize,
    /// Normal prior on the open-model super-population size.
    pub n_mean: f64,
    pub n_sd: f64,
    /// Closed-model reciprocal prior support is `{D, ..., n_max_factor * D}`.
    pub n_max_factor: u64,
    /// Normal prior on arrival means; `None` defaults to `T / 2`.
    pub mu_mean: Option<f64>,
    pub mu_sd: Option<f64>,
    /// Uniform prior support for arrival spreads; the ceiling defaults to `T`.
    pub sigma_floor: f64,
    pub sigma_ceiling: Option<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            m_max: 20,
            g_poisson_mean: 1.0,
            g_max_closed: 10,
            n_mean: 55_000.0,
            n_sd: 10_000.0,
            n_max_factor: 10,
            mu_mean: None,
            mu_sd: None,
            sigma_floor: 0.1,
            sigma_ceiling: None,
        }
    }
}

impl PriorConfig {
    pub fn mu_mean(&self, t: usize) -> f64 {
        self.mu_mean.unwrap_or(t as f64 / 2.0)
    }

    pub fn mu_sd(&self, t: usize) -> f64 {
        self.mu_sd.unwrap_or(t as f64 / 2.0)
    }

    pub fn sigma_ceiling(&self, t: usize) -> f64 {
        self.sigma_ceiling.unwrap_or(t as f64)
    }
}

/// Standard deviation of the mean-0 normal prior on logistic-regression
/// coefficients with `n` covariates: variance `pi^2 / (3 (n + 1))` splits
/// the logistic variance evenly across intercept and covariates.
pub fn coeff_sd(n_covariates: usize) -> f64 {
    (std::f64::consts::PI.powi(2) / (3.0 * (n_covariates as f64 + 1.0))).sqrt()
}

/// Retention logit has two covariates (calendar day, residence age).
pub fn retention_coeff_sd() -> f64 {
    coeff_sd(2)
}

/// Capture logit has three covariates (effort, two location dummies).
pub fn capture_coeff_sd() -> f64 {
    coeff_sd(3)
}

/// Log-mass of the shifted Poisson prior on a component count `g >= 1`.
pub(crate) fn g_count_log_mass(g: usize, mean: f64) -> f64 {
    -mean + (g as f64 - 1.0) * mean.ln() - ln_gamma(g as f64)
}

/// Joint log-prior of an open-model state. Returns negative infinity
/// outside the support (component counts beyond their bounds, arrival
/// spreads outside their uniform window, invalid proportion blocks).
pub fn log_prior_open(state: &OpenParamState, config: &PriorConfig, t: usize) -> f64 {
    if state.validate(t).is_err() {
        return f64::NEG_INFINITY;
    }
    let m = state.arrival.m();
    if m > config.m_max {
        return f64::NEG_INFINITY;
    }
    let g = state.behaviour.g();
    let mut lp = -(config.m_max as f64).ln() + g_count_log_mass(g, config.g_poisson_mean);
    // Symmetric Dirichlet(1,...,1) densities and the label-symmetry
    // factorials for both component blocks.
    lp += ln_gamma(m as f64) + ln_gamma(m as f64 + 1.0);
    lp += ln_gamma(g as f64) + ln_gamma(g as f64 + 1.0);
    let (mu_mean, mu_sd) = (config.mu_mean(t), config.mu_sd(t));
    let (s_lo, s_hi) = (config.sigma_floor, config.sigma_ceiling(t));
    for &i in &arrival_order(&state.arrival) {
        let sd = state.arrival.sds[i];
        if !(sd > s_lo && sd < s_hi) {
            return f64::NEG_INFINITY;
        }
        lp += normal_logpdf(state.arrival.means[i], mu_mean, mu_sd) - (s_hi - s_lo).ln();
    }
    let ret_sd = retention_coeff_sd();
    for &gi in &group_order(&state.behaviour) {
        lp += normal_logpdf(state.behaviour.intercepts[gi], 0.0, ret_sd);
    }
    lp += normal_logpdf(state.behaviour.day_slope, 0.0, ret_sd);
    lp += normal_logpdf(state.behaviour.age_slope, 0.0, ret_sd);
    let cap_sd = capture_coeff_sd();
    let det = &state.detection;
    for c in [det.intercept, det.effort_slope, det.loc2_effect, det.loc3_effect] {
        lp += normal_logpdf(c, 0.0, cap_sd);
    }
    // Resighting probability is Beta(1,1): zero log-density on [0,1].
    lp + normal_logpdf(state.n_super as f64, config.n_mean, config.n_sd)
}

/// Joint log-prior of a closed-model state given the number of marked
/// animals `d_total` (which anchors the reciprocal prior's support).
pub fn log_prior_closed(state: &ClosedParamState, config: &PriorConfig, d_total: u64) -> f64 {
    if state.validate().is_err() {
        return f64::NEG_INFINITY;
    }
    let g = state.g();
    if g > config.g_max_closed {
        return f64::NEG_INFINITY;
    }
    let n_floor = d_total.max(1);
    let n_max = config.n_max_factor * n_floor;
    if state.n_pop < n_floor || state.n_pop > n_max {
        return f64::NEG_INFINITY;
    }
    // Capture probabilities are Beta(1,1): zero log-density on (0,1).
    -(config.g_max_closed as f64).ln()
        + ln_gamma(g as f64)
        + ln_gamma(g as f64 + 1.0)
        - (state.n_pop as f64).ln()
}

/// Which component family a birth move is adding to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BirthKind {
    Arrival,
    Behaviour,
    CaptureGroup,
}

/// Parameters of a freshly born component, drawn from the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BirthDraw {
    Arrival { mean: f64, sd: f64 },
    Behaviour { intercept: f64 },
    CaptureGroup { prob: f64 },
}

/// Draw new-component parameters from the same prior `log_prior_*` uses, so
/// the proposal density cancels against the prior in the birth/death ratio.
pub fn sample_birth_component<R: Rng + ?Sized>(
    kind: BirthKind,
    config: &PriorConfig,
    t: usize,
    rng: &mut R,
) -> BirthDraw {
    match kind {
        BirthKind::Arrival => {
            let z: f64 = rng.sample(StandardNormal);
            let mean = config.mu_mean(t) + config.mu_sd(t) * z;
            let (lo, hi) = (config.sigma_floor, config.sigma_ceiling(t));
            let sd = lo + (hi - lo) * rng.random::<f64>();
            BirthDraw::Arrival { mean, sd }
        }
        BirthKind::Behaviour => {
            let z: f64 = rng.sample(StandardNormal);
            BirthDraw::Behaviour { intercept: retention_coeff_sd() * z }
        }
        BirthKind::CaptureGroup => BirthDraw::CaptureGroup { prob: rng.random::<f64>() },
    }
}

/// Log-density of a birth draw under the prior; the explicit counterpart of
/// `sample_birth_component` used in the reversible-jump ratio.
pub fn birth_log_density(draw: &BirthDraw, config: &PriorConfig, t: usize) -> f64 {
    match *draw {
        BirthDraw::Arrival { mean, sd } => {
            let (lo, hi) = (config.sigma_floor, config.sigma_ceiling(t));
            if !(sd > lo && sd < hi) {
                return f64::NEG_INFINITY;
            }
            normal_logpdf(mean, config.mu_mean(t), config.mu_sd(t)) - (hi - lo).ln()
        }
        BirthDraw::Behaviour { intercept } => normal_logpdf(intercept, 0.0, retention_coeff_sd()),
        BirthDraw::CaptureGroup { prob } => {
            if (0.0..1.0).contains(&prob) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}
