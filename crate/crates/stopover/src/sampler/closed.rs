//! Chain driver for the closed-population mixture model.

use super::{
    adapted_step, birth_log_acceptance, death_log_acceptance, mh_accept, propose_pair,
    propose_poisson_n, propose_walk_n, MoveKind, MoveLedger, NProposal, SamplerConfig,
    SamplerError, StepSizes, TransitionProbs,
};
use crate::closed::{closed_loglik, ClosedParamState};
use crate::data::{ObservedData, StudyDesign};
use crate::priors::{
    birth_log_density, log_prior_closed, sample_birth_component, BirthDraw, BirthKind, PriorConfig,
};
use crate::trace::{AcceptanceReport, ChainTrace, ClosedRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub struct ClosedRun {
    pub trace: ChainTrace<ClosedRecord>,
    pub acceptance: AcceptanceReport,
    pub tuned: SamplerConfig,
    pub final_state: ClosedParamState,
}

pub struct ClosedSampler<'a> {
    design: &'a StudyDesign,
    data: &'a ObservedData,
    priors: PriorConfig,
    config: SamplerConfig,
    steps: StepSizes,
    gamma: f64,
    state: ClosedParamState,
    log_lik: f64,
    log_prior: f64,
    ledger: MoveLedger,
    window: MoveLedger,
    rng: ChaCha20Rng,
    seed: u64,
    d_total: u64,
}

impl<'a> ClosedSampler<'a> {
    pub fn new(
        design: &'a StudyDesign,
        data: &'a ObservedData,
        priors: &PriorConfig,
        config: &SamplerConfig,
        seed: u64,
    ) -> Result<Self, SamplerError> {
        config.validate()?;
        let d_total = data.d();
        let n_floor = d_total.max(1);
        let n_max = priors.n_max_factor * n_floor;
        let state = ClosedParamState {
            n_pop: (2 * d_total + 1).clamp(n_floor, n_max),
            shares: vec![1.0],
            capture_probs: vec![0.5],
        };
        // Surfaces design/data mismatches (e.g. resight days) right away.
        let log_lik = closed_loglik(&state, design, data)?;
        let log_prior = log_prior_closed(&state, priors, d_total);
        assert!(log_prior.is_finite(), "initial state falls outside the prior support");
        Ok(ClosedSampler {
            design,
            data,
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
            d_total,
        })
    }

    pub fn state(&self) -> &ClosedParamState {
        &self.state
    }

    fn eval(&self, state: &ClosedParamState) -> f64 {
        closed_loglik(state, self.design, self.data).expect("design validated at construction")
    }

    fn consider(&mut self, kind: MoveKind, proposal: ClosedParamState, extra: f64) {
        let lp = log_prior_closed(&proposal, &self.priors, self.d_total);
        if lp == f64::NEG_INFINITY {
            return;
        }
        let ll = self.eval(&proposal);
        let ratio = (ll + lp) - (self.log_lik + self.log_prior) + extra;
        if mh_accept(ratio, &mut self.rng, kind.name()) {
            self.state = proposal;
            self.log_lik = ll;
            self.log_prior = lp;
            self.ledger.accept(kind);
            self.window.accept(kind);
        }
    }

    fn n_move(&mut self) {
        self.ledger.propose(MoveKind::PopulationSize);
        self.window.propose(MoveKind::PopulationSize);
        let (n_new, extra) = match self.config.n_proposal {
            NProposal::PoissonMeanN => propose_poisson_n(self.state.n_pop, &mut self.rng),
            NProposal::SymmetricIntegerWalk => {
                match propose_walk_n(self.state.n_pop, self.steps.n_halfwidth, &mut self.rng) {
                    Some(n) => (n, 0.0),
                    None => return,
                }
            }
        };
        if n_new < self.d_total {
            return;
        }
        if n_new == self.state.n_pop {
            self.ledger.accept(MoveKind::PopulationSize);
            self.window.accept(MoveKind::PopulationSize);
            return;
        }
        let mut proposal = self.state.clone();
        proposal.n_pop = n_new;
        self.consider(MoveKind::PopulationSize, proposal, extra);
    }

    fn sweep(&mut self) {
        for i in 0..self.state.g() {
            self.ledger.propose(MoveKind::CaptureProb);
            self.window.propose(MoveKind::CaptureProb);
            let z: f64 = self.rng.sample(StandardNormal);
            let mut proposal = self.state.clone();
            proposal.capture_probs[i] += self.steps.capture_prob * z;
            self.consider(MoveKind::CaptureProb, proposal, 0.0);
        }
        self.n_move();
        if self.state.g() >= 2 {
            self.ledger.propose(MoveKind::SharePair);
            self.window.propose(MoveKind::SharePair);
            if let Some((a, b, new_a, new_b)) =
                propose_pair(&self.state.shares, self.gamma, &mut self.rng)
            {
                let mut proposal = self.state.clone();
                proposal.shares[a] = new_a;
                proposal.shares[b] = new_b;
                self.consider(MoveKind::SharePair, proposal, 0.0);
            }
        }
    }

    fn g_move(&mut self) {
        let trans = TransitionProbs::new(1, self.config.max_g);
        if trans.min == trans.max {
            return;
        }
        let g = self.state.g();
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
        let donor_mass = self.state.shares[donor];
        let split = self.rng.random::<f64>() * donor_mass;
        let draw = sample_birth_component(BirthKind::CaptureGroup, &self.priors, 1, &mut self.rng);
        let BirthDraw::CaptureGroup { prob } = draw else {
            unreachable!("capture-group birth draws a capture probability")
        };
        let mut proposal = self.state.clone();
        proposal.shares[donor] = donor_mass - split;
        proposal.shares.push(split);
        proposal.capture_probs.push(prob);
        let extra =
            birth_log_acceptance(0.0, g, trans, donor_mass, birth_log_density(&draw, &self.priors, 1));
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
        let merged = self.state.shares[victim] + self.state.shares[receiver];
        let removed = BirthDraw::CaptureGroup {
            prob: self.state.capture_probs[victim],
        };
        let mut proposal = self.state.clone();
        proposal.shares[receiver] += proposal.shares[victim];
        proposal.shares.remove(victim);
        proposal.capture_probs.remove(victim);
        let extra =
            death_log_acceptance(0.0, g, trans, merged, birth_log_density(&removed, &self.priors, 1));
        self.consider(MoveKind::DeathG, proposal, extra);
    }

    fn adapt(&mut self) {
        let p_stats = self.window.stats(MoveKind::CaptureProb);
        if p_stats.proposed > 0 {
            self.steps.capture_prob =
                adapted_step(self.steps.capture_prob, p_stats.rate()).clamp(1e-6, 1e6);
        }
        let n_stats = self.window.stats(MoveKind::PopulationSize);
        if self.config.n_proposal == NProposal::SymmetricIntegerWalk && n_stats.proposed > 0 {
            let scaled = adapted_step(self.steps.n_halfwidth as f64, n_stats.rate());
            self.steps.n_halfwidth = (scaled.round() as u64).clamp(1, 100_000_000);
        }
        let s_stats = self.window.stats(MoveKind::SharePair);
        if s_stats.proposed > 0 {
            self.gamma = adapted_step(self.gamma, s_stats.rate()).clamp(1e-4, 0.95);
        }
        self.window.reset();
    }

    fn check_tracked(&self, iteration: u64) -> Result<(), SamplerError> {
        let recomputed = self.eval(&self.state);
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

    fn record(&self, iteration: u64) -> ClosedRecord {
        ClosedRecord {
            iteration,
            g: self.state.g(),
            n_pop: self.state.n_pop,
            shares: self.state.shares.clone(),
            capture_probs: self.state.capture_probs.clone(),
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

    pub fn run(mut self, config_hash: &str) -> Result<ClosedRun, SamplerError> {
        let retain = (self.config.iterations - self.config.burn_in) / self.config.thin;
        let mut records = Vec::with_capacity(retain as usize);
        for it in 1..=self.config.iterations {
            self.sweep();
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
            debug_assert!(self.state.validate().is_ok());
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
        Ok(ClosedRun {
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

/// Run one closed-model chain end to end.
pub fn run_closed_chain(
    design: &StudyDesign,
    data: &ObservedData,
    priors: &PriorConfig,
    config: &SamplerConfig,
    seed: u64,
    config_hash: &str,
) -> Result<ClosedRun, SamplerError> {
    ClosedSampler::new(design, data, priors, config, seed)?.run(config_hash)
}

/// Closed-model counterpart of the burn-in pilot tuner.
pub fn tune_closed(
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
    let run = run_closed_chain(design, data, priors, &pilot, seed, "tune")?;
    let mut out = config.clone();
    out.steps = run.tuned.steps;
    out.gamma_prop = run.tuned.gamma_prop;
    Ok(out)
}
