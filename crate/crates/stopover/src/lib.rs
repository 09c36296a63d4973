//! Bayesian inference for stopover populations with heterogeneous residence
//! behaviour, plus a closed-population mixture companion model.
//!
//! The primary model describes a migratory stopover study: a super-population
//! of `N` animals arrives over a window of `T` days following a normal
//! mixture with an unknown number of components, stays according to
//! group-specific daily retention probabilities, and is observed through
//! physical captures, resightings of marked animals, and daily counts of
//! unmarked animals. Both the number of arrival-mixture components and the
//! number of behavioural groups are unknown, so the posterior is explored
//! with a reversible-jump MCMC sampler whose moves add, delete, and perturb
//! mixture components.
//!
//! Crate layout:
//!
//! * [`data`] — study designs and encounter-history/count ingestion;
//! * [`open`] — the stopover (open-population) likelihood;
//! * [`closed`] — the closed-population mixture likelihood;
//! * [`priors`] — prior configuration and log-prior evaluation;
//! * [`sampler`] — within-model and trans-dimensional MCMC;
//! * [`oracle`] — deliberately naive reference implementations used to
//!   validate the fast paths on tiny instances;
//! * [`trace`] — chain traces and their CSV form;
//! * [`diagnostics`] — posterior summaries, model probabilities, Geweke
//!   convergence scores;
//! * [`ppc`] — forward simulation and goodness-of-fit statistics;
//! * [`config`] / [`cli`] — the command-line front end.

pub mod cli;
pub mod closed;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod math;
pub mod open;
pub mod oracle;
pub mod ppc;
pub mod priors;
pub mod sampler;
pub mod trace;
