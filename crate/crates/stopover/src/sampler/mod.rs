//! Reversible-jump MCMC samplers for both model families.
//!
//! Every iteration runs one within-model sweep (scalar random walks over the
//! continuous parameters, a population-size update, and sum-preserving pair
//! updates on each proportion block) and then attempts one component-count
//! move per mixture block. Dimension moves are a birth/death pair: a birth
//! splits mass off a uniformly chosen donor and draws the new component's
//! parameters from the prior, a death merges a uniformly chosen component
//! into another. Drawing fresh parameters from the prior makes the proposal
//! density cancel against the prior's density terms, so the acceptance ratio
//! reduces to the likelihood ratio times a handful of counting terms; those
//! terms live in [`birth_log_acceptance`] and [`death_log_acceptance`] where
//! tests can audit that every birth/death pair multiplies to one.

mod closed;
mod open;

pub use closed::{run_closed_chain, tune_closed, ClosedRun, ClosedSampler};
pub use open::{initial_state, run_open_chain, tune_open, OpenRun, OpenSampler};

use crate::open::ModelError;
use crate::trace::MoveStats;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {what}")]
    InvalidConfig { what: String },
    #[error(
        "incrementally tracked log-likelihood diverged from a fresh recomputation \
         at iteration {iteration}: tracked {tracked}, recomputed {recomputed}"
    )]
    CacheDivergence { iteration: u64, tracked: f64, recomputed: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Random-walk scales, one per parameter family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSizes {
    pub arrival_mean: f64,
    pub arrival_sd: f64,
    pub retention_intercept: f64,
    pub retention_slope: f64,
    pub capture_coeff: f64,
    pub resight: f64,
    /// Closed-model per-group capture probability walk.
    pub capture_prob: f64,
    /// Half-width of the symmetric integer walk on the population size.
    pub n_halfwidth: u64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            arrival_mean: 1.0,
            arrival_sd: 0.5,
            retention_intercept: 0.5,
            retention_slope: 0.1,
            capture_coeff: 0.3,
            resight: 0.1,
            capture_prob: 0.1,
            n_halfwidth: 250,
        }
    }
}

/// Proposal family for the population-size update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NProposal {
    #[serde(rename = "symmetric-integer-walk")]
    SymmetricIntegerWalk,
    #[serde(rename = "poisson-mean-N", alias = "poisson-mean-n")]
    PoissonMeanN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Total iterations, burn-in included.
    pub iterations: u64,
    pub burn_in: u64,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: u64,
    /// Pair-update window fraction: the perturbation is uniform on
    /// `(-gamma*(pi_a+pi_b), +gamma*(pi_a+pi_b))`.
    pub gamma_prop: f64,
    pub steps: StepSizes,
    pub n_proposal: NProposal,
    /// Per-iteration probability of attempting an arrival-component move.
    pub m_move_prob: f64,
    /// Per-iteration probability of attempting a group-count move.
    pub g_move_prob: f64,
    pub max_m: usize,
    pub max_g: usize,
    /// Tune step sizes during burn-in; they are frozen afterwards either way.
    pub adapt: bool,
    pub adapt_interval: u64,
    /// How often the tracked log-likelihood is audited against a fresh
    /// evaluation.
    pub check_interval: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::default_open()
    }
}

impl SamplerConfig {
    pub fn default_open() -> Self {
        SamplerConfig {
            iterations: 20_000,
            burn_in: 5_000,
            thin: 10,
            gamma_prop: 0.3,
            steps: StepSizes::default(),
            n_proposal: NProposal::SymmetricIntegerWalk,
            m_move_prob: 0.5,
            g_move_prob: 0.5,
            max_m: 20,
            max_g: 15,
            adapt: true,
            adapt_interval: 50,
            check_interval: 1_000,
        }
    }

    pub fn default_closed() -> Self {
        SamplerConfig {
            n_proposal: NProposal::PoissonMeanN,
            max_g: 10,
            ..SamplerConfig::default_open()
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let fail = |what: &str| Err(SamplerError::InvalidConfig { what: what.into() });
        if self.iterations == 0 {
            return fail("iterations must be positive");
        }
        if self.burn_in >= self.iterations {
            return fail("burn_in must be smaller than iterations");
        }
        if self.thin == 0 {
            return fail("thin must be at least 1");
        }
        if !(self.gamma_prop > 0.0 && self.gamma_prop < 1.0) {
            return fail("gamma_prop must lie strictly inside (0, 1)");
        }
        for (name, v) in [("m_move_prob", self.m_move_prob), ("g_move_prob", self.g_move_prob)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.max_m == 0 || self.max_g == 0 {
            return fail("component caps must be at least 1");
        }
        let s = &self.steps;
        let scalars = [
            s.arrival_mean,
            s.arrival_sd,
            s.retention_intercept,
            s.retention_slope,
            s.capture_coeff,
            s.resight,
            s.capture_prob,
        ];
        if scalars.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return fail("step sizes must be positive and finite");
        }
        if s.n_halfwidth == 0 {
            return fail("n_halfwidth must be at least 1");
        }
        if self.adapt_interval == 0 || self.check_interval == 0 {
            return fail("adapt_interval and check_interval must be at least 1");
        }
        Ok(())
    }
}

/// Labels for the proposal tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MoveKind {
    ArrivalMean,
    ArrivalSd,
    RetentionIntercept,
    RetentionSlope,
    CaptureCoeff,
    Resight,
    CaptureProb,
    PopulationSize,
    WeightPair,
    SharePair,
    BirthM,
    DeathM,
    BirthG,
    DeathG,
}

impl MoveKind {
    pub fn name(self) -> &'static str {
        match self {
            MoveKind::ArrivalMean => "arrival_mean",
            MoveKind::ArrivalSd => "arrival_sd",
            MoveKind::RetentionIntercept => "retention_intercept",
            MoveKind::RetentionSlope => "retention_slope",
            MoveKind::CaptureCoeff => "capture_coeff",
            MoveKind::Resight => "resight",
            MoveKind::CaptureProb => "capture_prob",
            MoveKind::PopulationSize => "population_size",
            MoveKind::WeightPair => "weight_pair",
            MoveKind::SharePair => "share_pair",
            MoveKind::BirthM => "birth_m",
            MoveKind::DeathM => "death_m",
            MoveKind::BirthG => "birth_g",
            MoveKind::DeathG => "death_g",
        }
    }
}

/// Proposal/acceptance tallies by move kind.
#[derive(Debug, Clone, Default)]
pub struct MoveLedger {
    counts: BTreeMap<MoveKind, MoveStats>,
}

impl MoveLedger {
    pub fn propose(&mut self, kind: MoveKind) {
        self.counts.entry(kind).or_default().proposed += 1;
    }

    pub fn accept(&mut self, kind: MoveKind) {
        self.counts.entry(kind).or_default().accepted += 1;
    }

    pub fn stats(&self, kind: MoveKind) -> MoveStats {
        self.counts.get(&kind).copied().unwrap_or_default()
    }

    pub fn reset(&mut self) {
        self.counts.clear();
    }

    pub fn to_report(&self) -> BTreeMap<String, MoveStats> {
        self.counts.iter().map(|(k, v)| (k.name().to_string(), *v)).collect()
    }
}

/// Up/down attempt probabilities for a component count on `{min..max}`,
/// reflecting at the boundaries: interior counts split evenly, the bottom
/// count always proposes a birth and the top always a death.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionProbs {
    pub min: usize,
    pub max: usize,
}

impl TransitionProbs {
    pub fn new(min: usize, max: usize) -> Self {
        assert!(min >= 1 && min <= max, "need 1 <= min <= max, got {min}..{max}");
        TransitionProbs { min, max }
    }

    pub fn p_up(&self, k: usize) -> f64 {
        debug_assert!((self.min..=self.max).contains(&k));
        if self.min == self.max {
            0.0
        } else if k == self.min {
            1.0
        } else if k == self.max {
            0.0
        } else {
            0.5
        }
    }

    pub fn p_down(&self, k: usize) -> f64 {
        debug_assert!((self.min..=self.max).contains(&k));
        if self.min == self.max {
            0.0
        } else if k == self.min {
            0.0
        } else if k == self.max {
            1.0
        } else {
            0.5
        }
    }
}

/// Log acceptance ratio of a birth move from `k` to `k+1` components.
///
/// `delta_posterior` is the full posterior log-density difference, so the
/// component-count mass, Dirichlet normalization, symmetry factorials, and
/// the new component's prior density are already inside it. What remains is
/// the proposal bookkeeping: the direction probabilities, the reverse
/// death's 1/(k+1) choice of victim (the forward donor choice cancels
/// against the reverse receiver choice), the donor-mass split density
/// 1/`donor_mass`, and the prior density `new_param_log_density` the fresh
/// parameters were drawn from.
pub fn birth_log_acceptance(
    delta_posterior: f64,
    k: usize,
    trans: &TransitionProbs,
    donor_mass: f64,
    new_param_log_density: f64,
) -> f64 {
    delta_posterior + trans.p_down(k + 1).ln() - trans.p_up(k).ln() - ((k + 1) as f64).ln()
        + donor_mass.ln()
        - new_param_log_density
}

/// Log acceptance ratio of a death move from `k` to `k-1` components,
/// mirroring [`birth_log_acceptance`]: `merged_mass` is the combined mass of
/// the removed component and its receiver, and `removed_param_log_density`
/// is the prior density of the parameters being discarded.
pub fn death_log_acceptance(
    delta_posterior: f64,
    k: usize,
    trans: &TransitionProbs,
    merged_mass: f64,
    removed_param_log_density: f64,
) -> f64 {
    delta_posterior + trans.p_up(k - 1).ln() - trans.p_down(k).ln() + (k as f64).ln()
        - merged_mass.ln()
        + removed_param_log_density
}

/// Metropolis-Hastings accept/reject on a log ratio. A non-negative ratio
/// accepts without drawing; a NaN ratio is a bug upstream and panics rather
/// than silently biasing the chain.
pub fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R, context: &str) -> bool {
    assert!(!log_ratio.is_nan(), "acceptance ratio is NaN in {context} move");
    if log_ratio >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// One Gaussian random-walk update of a scalar against an arbitrary log
/// target. Returns the (possibly unchanged) value, its log target, and
/// whether the proposal was accepted.
pub fn mh_scalar_step<R, F>(
    value: f64,
    current_log_target: f64,
    step: f64,
    log_target: F,
    rng: &mut R,
) -> (f64, f64, bool)
where
    R: Rng + ?Sized,
    F: FnOnce(f64) -> f64,
{
    let z: f64 = rng.sample(StandardNormal);
    let proposal = value + step * z;
    let lt = log_target(proposal);
    if mh_accept(lt - current_log_target, rng, "scalar random-walk") {
        (proposal, lt, true)
    } else {
        (value, current_log_target, false)
    }
}

/// Sum-preserving pair proposal on a proportion block: distinct indices
/// `a != b` are drawn uniformly, `a` is perturbed by Unif(-eps, eps) with
/// `eps = gamma * (v[a] + v[b])`, and `b` receives the exact complement.
/// Returns None when either part would go negative (the caller rejects
/// without touching the likelihood) or when the block has a single entry.
pub fn propose_pair<R: Rng + ?Sized>(
    values: &[f64],
    gamma: f64,
    rng: &mut R,
) -> Option<(usize, usize, f64, f64)> {
    let k = values.len();
    if k < 2 {
        return None;
    }
    let a = rng.random_range(0..k);
    let mut b = rng.random_range(0..k - 1);
    if b >= a {
        b += 1;
    }
    let total = values[a] + values[b];
    let x = (2.0 * rng.random::<f64>() - 1.0) * gamma * total;
    let new_a = values[a] + x;
    let new_b = total - new_a;
    if new_a < 0.0 || new_b < 0.0 {
        return None;
    }
    Some((a, b, new_a, new_b))
}

/// Symmetric integer walk on a population size: a magnitude from
/// `{1..halfwidth}` is added or subtracted with equal probability. Returns
/// None when the step would cross zero, which the caller rejects outright.
pub(crate) fn propose_walk_n<R: Rng + ?Sized>(n: u64, halfwidth: u64, rng: &mut R) -> Option<u64> {
    let mag = rng.random_range(1..=halfwidth.max(1));
    if rng.random::<f64>() < 0.5 {
        Some(n.saturating_add(mag))
    } else {
        n.checked_sub(mag)
    }
}

/// Poisson proposal centred on the current population size, returning the
/// draw and its log Hastings correction `log q(new -> old) - log q(old -> new)`.
/// The asymmetry matters: Poisson(n) and Poisson(n') put different mass on
/// each other's modes. A zero current size is a degenerate proposal and
/// stays put.
pub(crate) fn propose_poisson_n<R: Rng + ?Sized>(n: u64, rng: &mut R) -> (u64, f64) {
    if n == 0 {
        return (0, 0.0);
    }
    let draw: f64 = rand_distr::Poisson::new(n as f64).expect("positive mean").sample(rng);
    let n_new = draw as u64;
    if n_new == n {
        return (n, 0.0);
    }
    let (a, b) = (n as f64, n_new as f64);
    let forward = -a + b * a.ln() - crate::math::ln_gamma(b + 1.0);
    let reverse = -b + a * b.ln() - crate::math::ln_gamma(a + 1.0);
    (n_new, reverse - forward)
}

/// Dead-band step tuning: acceptance above the 20-40% band inflates the
/// step, below deflates it, inside leaves it alone (so a well-tuned
/// configuration passes through unchanged).
pub fn adapted_step(step: f64, rate: f64) -> f64 {
    const LO: f64 = 0.2;
    const HI: f64 = 0.4;
    if rate > HI {
        step * (1.0 + 2.0 * (rate - HI))
    } else if rate < LO {
        step / (1.0 + 2.0 * (LO - rate))
    } else {
        step
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn transition_probs_reflect_at_bounds() {
        let m = TransitionProbs::new(1, 20);
        assert_eq!(m.p_up(1), 1.0);
        assert_eq!(m.p_down(1), 0.0);
        assert_eq!(m.p_up(20), 0.0);
        assert_eq!(m.p_down(20), 1.0);
        assert_eq!(m.p_up(7), 0.5);
        assert_eq!(m.p_down(7), 0.5);
        let g = TransitionProbs::new(1, 15);
        assert_eq!(g.p_down(15), 1.0);
        // Degenerate range: no dimension move is ever possible.
        let fixed = TransitionProbs::new(3, 3);
        assert_eq!(fixed.p_up(3), 0.0);
        assert_eq!(fixed.p_down(3), 0.0);
    }

    #[test]
    fn birth_acceptance_matches_hand_reduced_form() {
        // Single component splitting its whole mass: the likelihood ratio is
        // one, the prior's Dirichlet/symmetry terms contribute ln 2, and the
        // new parameters' prior density cancels against the proposal, so the
        // ratio collapses to p_down(2)/p_up(1) = 1/2.
        let trans = TransitionProbs::new(1, 20);
        let f_new = -1.234;
        let delta_posterior = 2.0_f64.ln() + f_new;
        let ln_a = birth_log_acceptance(delta_posterior, 1, &trans, 1.0, f_new);
        assert_abs_diff_eq!(ln_a, 0.5_f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn birth_death_pairs_cancel_exactly() {
        let trans = TransitionProbs::new(1, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let k = rng.random_range(1..20);
            let mass = rng.random::<f64>();
            let dens = 4.0 * rng.random::<f64>() - 2.0;
            let delta = 10.0 * rng.random::<f64>() - 5.0;
            let up = birth_log_acceptance(delta, k, &trans, mass, dens);
            let down = death_log_acceptance(-delta, k + 1, &trans, mass, dens);
            assert_abs_diff_eq!(up + down, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mh_accept_handles_certain_and_impossible_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(mh_accept(0.0, &mut rng, "test"));
        assert!(mh_accept(3.5, &mut rng, "test"));
        assert!(!mh_accept(f64::NEG_INFINITY, &mut rng, "test"));
        // A just-below-zero ratio accepts about e^(-0.01) of the time.
        let mut hits = 0;
        for _ in 0..2000 {
            if mh_accept(-0.01, &mut rng, "test") {
                hits += 1;
            }
        }
        assert!((hits as f64 / 2000.0 - 0.99).abs() < 0.02);
    }

    #[test]
    #[should_panic(expected = "acceptance ratio is NaN")]
    fn mh_accept_panics_on_nan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        mh_accept(f64::NAN, &mut rng, "broken");
    }

    #[test]
    fn pair_proposal_preserves_sum_and_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values = [0.5, 0.5];
        for _ in 0..5000 {
            let (a, b, new_a, new_b) = propose_pair(&values, 0.2, &mut rng).unwrap();
            assert_ne!(a, b);
            // eps = 0.2 * 1.0, so the perturbed part stays inside [0.3, 0.7].
            assert!((0.3..=0.7).contains(&new_a), "new_a = {new_a}");
            assert_relative_eq!(new_a + new_b, 1.0, epsilon = 1e-15);
        }
        assert!(propose_pair(&[1.0], 0.2, &mut rng).is_none());
    }

    #[test]
    fn pair_proposal_rejects_negative_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values = [0.02, 0.9, 0.08];
        let mut saw_none = false;
        for _ in 0..2000 {
            match propose_pair(&values, 0.9, &mut rng) {
                Some((_, _, a, b)) => {
                    assert!(a >= 0.0 && b >= 0.0);
                }
                None => saw_none = true,
            }
        }
        assert!(saw_none, "a wide window over lopsided masses must overshoot sometimes");
    }

    #[test]
    fn dead_band_tuning_is_monotone_and_idle_in_band() {
        assert_eq!(adapted_step(0.7, 0.3), 0.7);
        assert_eq!(adapted_step(0.7, 0.2), 0.7);
        assert_eq!(adapted_step(0.7, 0.4), 0.7);
        assert!(adapted_step(0.7, 0.8) > 0.7);
        assert!(adapted_step(0.7, 0.05) < 0.7);
        // Zero acceptance keeps shrinking the step run over run.
        let mut step = 10.0;
        let mut last = step;
        for _ in 0..10 {
            step = adapted_step(step, 0.0);
            assert!(step < last);
            last = step;
        }
    }

    #[test]
    fn scalar_walk_samples_a_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let target = |x: f64| -0.5 * x * x;
        let mut x = 0.0;
        let mut lt = target(x);
        let mut accepted = 0u64;
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let (nx, nlt, acc) = mh_scalar_step(x, lt, 2.4, target, &mut rng);
            x = nx;
            lt = nlt;
            accepted += acc as u64;
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let rate = accepted as f64 / n as f64;
        assert!((0.15..=0.5).contains(&rate), "acceptance {rate}");
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn dead_band_controller_recovers_a_bad_step() {
        // Start the scalar walk with an absurd step and let the burn-in
        // controller fix it: windows of 50 proposals, dead-band update after
        // each. The final window's acceptance must sit in a usable range.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target = |x: f64| -0.5 * x * x;
        for start in [200.0, 1e-4] {
            let mut step = start;
            let mut x = 0.0;
            let mut lt = target(x);
            let mut last_rate = 0.0;
            for _ in 0..60 {
                let mut acc = 0;
                for _ in 0..50 {
                    let (nx, nlt, a) = mh_scalar_step(x, lt, step, target, &mut rng);
                    x = nx;
                    lt = nlt;
                    acc += a as i32;
                }
                last_rate = acc as f64 / 50.0;
                step = adapted_step(step, last_rate).clamp(1e-6, 1e6);
            }
            assert!(
                (0.1..=0.55).contains(&last_rate),
                "controller left acceptance at {last_rate} from start {start}"
            );
        }
    }

    #[test]
    fn walk_proposal_is_symmetric_and_floored_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut up = 0u64;
        let mut down = 0u64;
        let mut crossed = 0u64;
        for _ in 0..20_000 {
            match propose_walk_n(3, 5, &mut rng) {
                Some(n) if n > 3 => {
                    assert!((4..=8).contains(&n));
                    up += 1;
                }
                Some(n) => {
                    assert!(n <= 2);
                    down += 1;
                }
                None => crossed = crossed + 1,
            }
        }
        // Magnitudes 4 and 5 downwards cross zero: 2/10 of all proposals.
        assert!((crossed as f64 / 20_000.0 - 0.2).abs() < 0.02);
        assert!((up as f64 / 20_000.0 - 0.5).abs() < 0.02);
        assert!(down > 0);
    }

    #[test]
    fn poisson_proposal_correction_matches_pmf_ratio() {
        let ln_pmf = |mean: f64, k: u64| {
            let mut ln_fact = 0.0;
            for i in 2..=k {
                ln_fact += (i as f64).ln();
            }
            -mean + k as f64 * mean.ln() - ln_fact
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut seen_asymmetric = false;
        for _ in 0..200 {
            let n = rng.random_range(1..40u64);
            let (n_new, corr) = propose_poisson_n(n, &mut rng);
            if n_new == 0 {
                // The reverse proposal from zero is degenerate at zero.
                assert_eq!(corr, f64::NEG_INFINITY);
                continue;
            }
            let expected = ln_pmf(n_new as f64, n) - ln_pmf(n as f64, n_new);
            assert_abs_diff_eq!(corr, expected, epsilon = 1e-10);
            if corr.abs() > 1e-12 {
                seen_asymmetric = true;
            }
        }
        assert!(seen_asymmetric);
        assert_eq!(propose_poisson_n(0, &mut rng), (0, 0.0));
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        assert!(SamplerConfig::default_open().validate().is_ok());
        assert!(SamplerConfig::default_closed().validate().is_ok());
        let mut c = SamplerConfig::default_open();
        c.burn_in = c.iterations;
        assert!(matches!(c.validate(), Err(SamplerError::InvalidConfig { .. })));
        let mut c = SamplerConfig::default_open();
        c.gamma_prop = 1.0;
        assert!(c.validate().is_err());
        let mut c = SamplerConfig::default_open();
        c.thin = 0;
        assert!(c.validate().is_err());
        let mut c = SamplerConfig::default_open();
        c.steps.arrival_sd = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json_with_spelled_proposal_names() {
        let c = SamplerConfig::default_closed();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("poisson-mean-N"));
        let back: SamplerConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        // Partial configs fall back to defaults field by field.
        let sparse: SamplerConfig =
            serde_json::from_str(r#"{"iterations": 500, "burn_in": 100}"#).unwrap();
        assert_eq!(sparse.iterations, 500);
        assert_eq!(sparse.thin, SamplerConfig::default_open().thin);
    }

    #[test]
    fn move_ledger_tracks_and_reports() {
        let mut ledger = MoveLedger::default();
        for _ in 0..10 {
            ledger.propose(MoveKind::ArrivalMean);
        }
        ledger.accept(MoveKind::ArrivalMean);
        ledger.accept(MoveKind::ArrivalMean);
        ledger.propose(MoveKind::BirthM);
        let report = ledger.to_report();
        assert_eq!(report["arrival_mean"].proposed, 10);
        assert_eq!(report["arrival_mean"].accepted, 2);
        assert_eq!(report["birth_m"].accepted, 0);
        assert!(ledger.stats(MoveKind::DeathG).proposed == 0);
    }
}
