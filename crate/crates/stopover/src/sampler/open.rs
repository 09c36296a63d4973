//! Chain driver for the stopover (open-population) model.

use super::{
    adapted_step, birth_log_acceptance, death_log_acceptance, mh_accept, propose_pair,
    propose_poisson_n, propose_walk_n, MoveKind, MoveLedger, NProposal, SamplerConfig,
    SamplerError, StepSizes, TransitionProbs,
};
use crate::data::{ObservedData, StudyDesign};
use crate::open::{ArrivalMixture, BehaviourModel, DetectionModel, OpenEvaluator, OpenParamState};
use crate::priors::{
    birth_log_density, log_prior_open, sample_birth_component, BirthDraw, BirthKind, PriorConfig,
};
use crate::trace::{AcceptanceReport, ChainTrace, OpenRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Everything a finished open-model run hands back: the retained trace,
/// per-move acceptance tallies, and the configuration with burn-in-adapted
/// proposal scales folded in (useful as a warm start for further chains).
pub struct OpenRun {
    pub trace: ChainTrace<OpenRecord>,
    pub acceptance: AcceptanceReport,
    pub tuned: SamplerConfig,
    pub final_state: OpenParamState,
}

/// Deterministic starting state: one arrival component centred in the
/// window, one behaviour group, zero regression coefficients, and a
/// population size just above what the data forces.
pub fn initial_state(design: &StudyDesign, data: &ObservedData, priors: &PriorConfig) -> OpenParamState {
    let t = design.t();
    let tf = t as f64;
    let (lo, hi) = (priors.sigma_floor, priors.sigma_ceiling(t));
    let mut sd = tf / 4.0;
    if !(sd > lo && sd < hi) {
        sd = lo + 0.5 * (hi - lo);
    }
    // The population must dominate both the marked total and the largest
    // unmarked count, or the binomial count terms start at zero mass.
    let max_count = (1..=t).filter_map(|day| data.count_on(day)).max().unwrap_or(0);
    OpenParamState {
        n_super: 2 * data.d().max(max_count) + 1,
        arrival: ArrivalMixture {
            weights: vec![1.0],
            means: vec![tf / 2.0],
            sds: vec![sd],
        },
        behaviour: BehaviourModel {
            shares: vec![1.0],
            intercepts: vec![0.0],
            day_slope: 0.0,
            age_slope: 0.0,
        },
        detection: DetectionModel {
            intercept: 0.0,
            effort_slope: 0.0,
            loc2_effect: 0.0,
            loc3_effect: 0.0,
            resight_prob: 0.5,
        },
    }
}

pub struct OpenSampler<'a> {
    design: &'a StudyDesign,
    data: &'a ObservedData,
    evaluator: OpenEvaluator<'a>,
    priors: PriorConfig,
    config: SamplerConfig,
    steps: StepSizes,
    gamma: f64,
    state: OpenParamState,
    log_lik: f64,
    log_prior: f64,
    ledger: MoveLedger,
    window: MoveLedger,
    rng: ChaCha20Rng,
    seed: u64,
    t: usize,
    d_total: u64,
}

impl<'a> OpenSampler<'a> {
    pub fn new(
        design: &'a StudyDesign,
        data: &'a ObservedData,
        priors: &PriorConfig,
        config: &SamplerConfig,
        seed: u64,
    ) -> Result<Self, SamplerError> {
        config.validate()?;
        let mut evaluator = OpenEvaluator::new(design, data)?;
        let state = initial_state(design, data, priors);
        let t = design.t();
        let log_prior = log_prior_open(&state, priors, t);
        assert!(
            log_prior.is_finite(),
            "initial state falls outside the prior support"
        );
        let log_lik = evaluator.log_likelihood(&state);
        Ok(OpenSampler {
            design,
            data,
            evaluator,
            priors: priors.clone(),
            steps: config.steps.clone(),
            gamma: config.gamma_prop,
            config: config.clone(),
            state,
            log_lik,
            log_prior,
            ledger: MoveLedger::default(),
            window: MoveLedger::default(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            seed,
            t,
            d_total: data.d(),
        })
    }

    pub fn state(&self) -> &OpenParamState {
        &self.state
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_lik
    }

    pub fn log_prior(&self) -> f64 {
        self.log_prior
    }

    /// Prior-then-likelihood accept/reject for an already-built proposal.
    /// `extra` carries any non-symmetric proposal terms (Hastings
    /// corrections, reversible-jump bookkeeping). Proposals outside the
    /// prior support are rejected before the likelihood is touched.
    fn consider(&mut self, kind: MoveKind, proposal: OpenParamState, extra: f64) {
        let lp = log_prior_open(&proposal, &self.priors, self.t);
        if lp == f64::NEG_INFINITY {
            return;
        }
        let ll = self.evaluator.log_likelihood(&proposal);
        let ratio = (ll + lp) - (self.log_lik + self.log_prior) + extra;
        if mh_accept(ratio, &mut self.rng, kind.name()) {
            self.state = proposal;
            self.log_lik = ll;
            self.log_prior = lp;
            self.ledger.accept(kind);
            self.window.accept(kind);
        }
    }

    fn scalar_move(
        &mut self,
        kind: MoveKind,
        step: f64,
        apply: impl FnOnce(&mut OpenParamState, f64),
    ) {
        self.ledger.propose(kind);
        self.window.propose(kind);
        let z: f64 = self.rng.sample(StandardNormal);
        let mut proposal = self.state.clone();
        apply(&mut proposal, step * z);
        self.consider(kind, proposal, 0.0);
    }

    fn n_move(&mut self) {
        self.ledger.propose(MoveKind::PopulationSize);
        self.window.propose(MoveKind::PopulationSize);
        let (n_new, extra) = match self.config.n_proposal {
            NProposal::SymmetricIntegerWalk => {
                match propose_walk_n(self.state.n_super, self.steps.n_halfwidth, &mut self.rng) {
                    Some(n) => (n, 0.0),
                    None => return,
                }
            }
            NProposal::PoissonMeanN => propose_poisson_n(self.state.n_super, &mut self.rng),
        };
        if n_new < self.d_total {
            // Fewer animals than were marked: zero likelihood, skip the eval.
            return;
        }
        if n_new == self.state.n_super {
            self.ledger.accept(MoveKind::PopulationSize);
            self.window.accept(MoveKind::PopulationSize);
            return;
        }
        let mut proposal = self.state.clone();
        proposal.n_super = n_new;
        self.consider(MoveKind::PopulationSize, proposal, extra);
    }

    fn pair_move(&mut self, kind: MoveKind) {
        let block: &[f64] = match kind {
            MoveKind::WeightPair => &self.state.arrival.weights,
            _ => &self.state.behaviour.shares,
        };
        if block.len() < 2 {
            return;
        }
        self.ledger.propose(kind);
        self.window.propose(kind);
        let Some((a, b, new_a, new_b)) = propose_pair(block, self.gamma, &mut self.rng) else {
            return;
        };
        let mut proposal = self.state.clone();
        let target = match kind {
            MoveKind::WeightPair => &mut proposal.arrival.weights,
            _ => &mut proposal.behaviour.shares,
        };
        target[a] = new_a;
        target[b] = new_b;
        self.consider(kind, proposal, 0.0);
    }

    fn sweep(&mut self) {
        for i in 0..self.state.arrival.m() {
            self.scalar_move(MoveKind::ArrivalMean, self.steps.arrival_mean, |s, d| {
                s.arrival.means[i] += d;
            });
            self.scalar_move(MoveKind::ArrivalSd, self.steps.arrival_sd, |s, d| {
                s.arrival.sds[i] += d;
            });
        }
        for g in 0..self.state.behaviour.g() {
            self.scalar_move(
                MoveKind::RetentionIntercept,
                self.steps.retention_intercept,
                |s, d| s.behaviour.intercepts[g] += d,
            );
        }
        self.scalar_move(MoveKind::RetentionSlope, self.steps.retention_slope, |s, d| {
            s.behaviour.day_slope += d;
        });
        self.scalar_move(MoveKind::RetentionSlope, self.steps.retention_slope, |s, d| {
            s.behaviour.age_slope += d;
        });
        self.scalar_move(MoveKind::CaptureCoeff, self.steps.capture_coeff, |s, d| {
            s.detection.intercept += d;
        });
        self.scalar_move(MoveKind::CaptureCoeff, self.steps.capture_coeff, |s, d| {
            s.detection.effort_slope += d;
        });
        self.scalar_move(MoveKind::CaptureCoeff, self.steps.capture_coeff, |s, d| {
            s.detection.loc2_effect += d;
        });
        self.scalar_move(MoveKind::CaptureCoeff, self.steps.capture_coeff, |s, d| {
            s.detection.loc3_effect += d;
        });
        self.scalar_move(MoveKind::Resight, self.steps.resight, |s, d| {
            s.detection.resight_prob += d;
        });
        self.n_move();
        self.pair_move(MoveKind::WeightPair);
        self.pair_move(MoveKind::SharePair);
    }

    fn m_move(&mut self) {
        let trans = TransitionProbs::new(1, self.config.max_m);
        if trans.min == trans.max {
            return;
        }
        let m = self.state.arrival.m();
        if self.rng.random::<f64>() < trans.p_up(m) {
            self.m_birth(m, &trans);
        } else {
            self.m_death(m, &trans);
        }
    }

    fn m_birth(&mut self, m: usize, trans: &TransitionProbs) {
        self.ledger.propose(MoveKind::BirthM);
        self.window.propose(MoveKind::BirthM);
        let donor = self.rng.random_range(0..m);
        let donor_mass = self.state.arrival.weights[donor];
        let split = self.rng.random::<f64>() * donor_mass;
        let draw = sample_birth_component(BirthKind::Arrival, &self.priors, self.t, &mut self.rng);
        let BirthDraw::Arrival { mean, sd } = draw else {
            unreachable!("arrival birth draws arrival parameters")
        };
        let mut proposal = self.state.clone();
        proposal.arrival.weights[donor] = donor_mass - split;
        proposal.arrival.weights.push(split);
        proposal.arrival.means.push(mean);
        proposal.arrival.sds.push(sd);
        let extra = birth_log_acceptance(
            0.0,
            m,
            trans,
            donor_mass,
            birth_log_density(&draw, &self.priors, self.t),
        );
        self.consider(MoveKind::BirthM, proposal, extra);
    }

    fn m_death(&mut self, m: usize, trans: &TransitionProbs) {
        self.ledger.propose(MoveKind::DeathM);
        self.window.propose(MoveKind::DeathM);
        let victim = self.rng.random_range(0..m);
        let mut receiver = self.rng.random_range(0..m - 1);
        if receiver >= victim {
            receiver += 1;
        }
        let merged = self.state.arrival.weights[victim] + self.state.arrival.weights[receiver];
        let removed = BirthDraw::Arrival {
            mean: self.state.arrival.means[victim],
            sd: self.state.arrival.sds[victim],
        };
        let mut proposal = self.state.clone();
        proposal.arrival.weights[receiver] += proposal.arrival.weights[victim];
        proposal.arrival.weights.remove(victim);
        proposal.arrival.means.remove(victim);
        proposal.arrival.sds.remove(victim);
        let extra = death_log_acceptance(
            0.0,
            m,
            trans,
            merged,
            birth_log_density(&removed, &self.priors, self.t),
        );
        self.consider(MoveKind::DeathM, proposal, extra);
    }

    fn g_move(&mut self) {
        let trans = TransitionProbs::new(1, self.config.max_g);
        if trans.min == trans.max {
            return;
        }
        let g = self.state.behaviour.g();
        if self.rng.random::<f64>() < trans.p_up(g) {
            self.g_birth(g, &trans);
        } else {
            self.g_death(g, &trans);
        }
    }

    fn g_birth(&mut self, g: usize, trans: &TransitionProbs) {
        self.ledger.propose(MoveKind::BirthG);
        self.window.propose(MoveKind::BirthG);
        let donor = self.rng.random_range(0..g);
        let donor_mass = self.state.behaviour.shares[donor];
        let split = self.rng.random::<f64>() * donor_mass;
        let draw = sample_birth_component(BirthKind::Behaviour, &self.priors, self.t, &mut self.rng);
        let BirthDraw::Behaviour { intercept } = draw else {
            unreachable!("behaviour birth draws an intercept")
        };
        let mut proposal = self.state.clone();
        proposal.behaviour.shares[donor] = donor_mass - split;
        proposal.behaviour.shares.push(split);
        proposal.behaviour.intercepts.push(intercept);
        let extra = birth_log_acceptance(
            0.0,
            g,
            trans,
            donor_mass,
            birth_log_density(&draw, &self.priors, self.t),
        );
        self.consider(MoveKind::BirthG, proposal, extra);
    }

    fn g_death(&mut self, g: usize, trans: &TransitionProbs) {
        self.ledger.propose(MoveKind::DeathG);
        self.window.propose(MoveKind::DeathG);
        let victim = self.rng.random_range(0..g);
        let mut receiver = self.rng.random_range(0..g - 1);
        if receiver >= victim {
            receiver += 1;
        }
        let merged = self.state.behaviour.shares[victim] + self.state.behaviour.shares[receiver];
        let removed = BirthDraw::Behaviour {
            intercept: self.state.behaviour.intercepts[victim],
        };
        let mut proposal = self.state.clone();
        proposal.behaviour.shares[receiver] += proposal.behaviour.shares[victim];
        proposal.behaviour.shares.remove(victim);
        proposal.behaviour.intercepts.remove(victim);
        let extra = death_log_acceptance(
            0.0,
            g,
            trans,
            merged,
            birth_log_density(&removed, &self.priors, self.t),
        );
        self.consider(MoveKind::DeathG, proposal, extra);
    }

    fn adapt(&mut self) {
        let scalar_kinds: [(MoveKind, &mut f64); 6] = [
            (MoveKind::ArrivalMean, &mut self.steps.arrival_mean),
            (MoveKind::ArrivalSd, &mut self.steps.arrival_sd),
            (MoveKind::RetentionIntercept, &mut self.steps.retention_intercept),
            (MoveKind::RetentionSlope, &mut self.steps.retention_slope),
            (MoveKind::CaptureCoeff, &mut self.steps.capture_coeff),
            (MoveKind::Resight, &mut self.steps.resight),
        ];
        for (kind, step) in scalar_kinds {
            let s = self.window.stats(kind);
            if s.proposed > 0 {
                *step = adapted_step(*step, s.rate()).clamp(1e-6, 1e6);
            }
        }
        let n_stats = self.window.stats(MoveKind::PopulationSize);
        if self.config.n_proposal == NProposal::SymmetricIntegerWalk && n_stats.proposed > 0 {
            let scaled = adapted_step(self.steps.n_halfwidth as f64, n_stats.rate());
            self.steps.n_halfwidth = (scaled.round() as u64).clamp(1, 100_000_000);
        }
        let w = self.window.stats(MoveKind::WeightPair);
        let p = self.window.stats(MoveKind::SharePair);
        if w.proposed + p.proposed > 0 {
            let rate = (w.accepted + p.accepted) as f64 / (w.proposed + p.proposed) as f64;
            self.gamma = adapted_step(self.gamma, rate).clamp(1e-4, 0.95);
        }
        self.window.reset();
    }

    /// Audit the incrementally tracked log-likelihood against a fresh
    /// evaluator built from scratch. Any drift beyond rounding noise means
    /// a stale cache entry was served, which would silently corrupt the
    /// whole chain, so the run aborts.
    fn check_tracked(&self, iteration: u64) -> Result<(), SamplerError> {
        let mut fresh = OpenEvaluator::new(self.design, self.data)?;
        let recomputed = fresh.log_likelihood(&self.state);
        let tol = 1e-8 * recomputed.abs().max(1.0);
        if (recomputed - self.log_lik).abs() > tol {
            return Err(SamplerError::CacheDivergence {
                iteration,
                tracked: self.log_lik,
                recomputed,
            });
        }
        Ok(())
    }

    fn record(&self, iteration: u64) -> OpenRecord {
        OpenRecord {
            iteration,
            m: self.state.arrival.m(),
            g: self.state.behaviour.g(),
            n_super: self.state.n_super,
            weights: self.state.arrival.weights.clone(),
            means: self.state.arrival.means.clone(),
            sds: self.state.arrival.sds.clone(),
            shares: self.state.behaviour.shares.clone(),
            intercepts: self.state.behaviour.intercepts.clone(),
            day_slope: self.state.behaviour.day_slope,
            age_slope: self.state.behaviour.age_slope,
            cap_intercept: self.state.detection.intercept,
            cap_effort: self.state.detection.effort_slope,
            cap_loc2: self.state.detection.loc2_effect,
            cap_loc3: self.state.detection.loc3_effect,
            resight_prob: self.state.detection.resight_prob,
            log_likelihood: self.log_lik,
            log_prior: self.log_prior,
        }
    }

    fn tuned_config(&self) -> SamplerConfig {
        let mut c = self.config.clone();
        c.steps = self.steps.clone();
        c.gamma_prop = self.gamma;
        c
    }

    pub fn run(mut self, config_hash: &str) -> Result<OpenRun, SamplerError> {
        let retain = (self.config.iterations - self.config.burn_in) / self.config.thin;
        let mut records = Vec::with_capacity(retain as usize);
        for it in 1..=self.config.iterations {
            self.sweep();
            if self.rng.random::<f64>() < self.config.m_move_prob {
                self.m_move();
            }
            if self.rng.random::<f64>() < self.config.g_move_prob {
                self.g_move();
            }
            if self.config.adapt && it <= self.config.burn_in && it % self.config.adapt_interval == 0
            {
                self.adapt();
            }
            if it % self.config.check_interval == 0 {
                self.check_tracked(it)?;
            }
            debug_assert!(self.state.validate(self.t).is_ok());
            if it > self.config.burn_in && (it - self.config.burn_in) % self.config.thin == 0 {
                records.push(self.record(it));
            }
        }
        let acceptance = AcceptanceReport {
            config_hash: config_hash.to_string(),
            seed: self.seed,
            iterations: self.config.iterations,
            burn_in: self.config.burn_in,
            thin: self.config.thin,
            moves: self.ledger.to_report(),
        };
        Ok(OpenRun {
            trace: ChainTrace {
                config_hash: config_hash.to_string(),
                seed: self.seed,
                records,
            },
            acceptance,
            tuned: self.tuned_config(),
            final_state: self.state,
        })
    }
}

/// Run one open-model chain end to end.
pub fn run_open_chain(
    design: &StudyDesign,
    data: &ObservedData,
    priors: &PriorConfig,
    config: &SamplerConfig,
    seed: u64,
    config_hash: &str,
) -> Result<OpenRun, SamplerError> {
    OpenSampler::new(design, data, priors, config, seed)?.run(config_hash)
}

/// Burn-in-only pilot run that returns the configuration with adapted
/// proposal scales. A configuration whose moves already accept inside the
/// 20-40% band comes back unchanged.
pub fn tune_open(
    design: &StudyDesign,
    data: &ObservedData,
    priors: &PriorConfig,
    config: &SamplerConfig,
    seed: u64,
) -> Result<SamplerConfig, SamplerError> {
    let mut pilot = config.clone();
    pilot.adapt = true;
    let span = config.burn_in.max(config.adapt_interval * 10).max(500);
    pilot.iterations = span + 1;
    pilot.burn_in = span;
    pilot.thin = 1;
    let run = run_open_chain(design, data, priors, &pilot, seed, "tune")?;
    let mut out = config.clone();
    out.steps = run.tuned.steps;
    out.gamma_prop = run.tuned.gamma_prop;
    Ok(out)
}
