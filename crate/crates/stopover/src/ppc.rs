//! Posterior predictive checks: simulate datasets from sampled parameter
//! states and compare summary statistics of the simulations against the
//! data that was actually observed.
//!
//! The generative process here is the forward reading of the same model the
//! likelihood evaluates, so simulation and likelihood validate each other:
//! the fraction of simulated animals producing a given history must match
//! that history's probability, and simulated unmarked counts must be
//! binomial with the count model's success probability.

use crate::data::{Mark, ObservedData, StudyDesign};
use crate::math::sample_variance;
use crate::open::{
    capture_probability, entry_probabilities, retention_probability, LatentHistory, ModelError,
    OpenEvaluator, OpenParamState,
};
use crate::trace::OpenRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpcError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("no retained states have G = {g}")]
    EmptyCondition { g: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One simulated animal: its latent record plus the day it entered the
/// marked population, if it ever did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulatedAnimal {
    pub latent: LatentHistory,
    pub first_capture: Option<usize>,
}

/// Full per-animal outcome, including the induced history row and the
/// resight days on which the animal was counted while still unmarked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnimalRecord {
    pub animal: SimulatedAnimal,
    pub marks: Vec<Option<Mark>>,
    pub counted: Vec<usize>,
}

/// A dataset simulated from one parameter state: the observable part
/// (validated like real data) plus the latent truth behind it.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub observed: ObservedData,
    pub animals: Vec<SimulatedAnimal>,
}

/// Reassemble a parameter state from a trace record.
pub fn record_state(r: &OpenRecord) -> OpenParamState {
    OpenParamState {
        n_super: r.n_super,
        arrival: crate::open::ArrivalMixture {
            weights: r.weights.clone(),
            means: r.means.clone(),
            sds: r.sds.clone(),
        },
        behaviour: crate::open::BehaviourModel {
            shares: r.shares.clone(),
            intercepts: r.intercepts.clone(),
            day_slope: r.day_slope,
            age_slope: r.age_slope,
        },
        detection: crate::open::DetectionModel {
            intercept: r.cap_intercept,
            effort_slope: r.cap_effort,
            loc2_effect: r.cap_loc2,
            loc3_effect: r.cap_loc3,
            resight_prob: r.resight_prob,
        },
    }
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Simulate one animal's passage and detection given precomputed entry
/// probabilities and per-day capture probabilities (`None` off capture
/// days).
fn simulate_animal(
    state: &OpenParamState,
    design: &StudyDesign,
    entry_probs: &[f64],
    capture_probs: &[Option<f64>],
    rng: &mut impl Rng,
) -> AnimalRecord {
    let t = design.t();
    let group = sample_categorical(&state.behaviour.shares, rng);
    let entry_day = sample_categorical(entry_probs, rng) + 1;
    let mut exit_day = entry_day;
    while exit_day < t {
        let age = exit_day - entry_day + 1;
        if rng.random::<f64>() < retention_probability(&state.behaviour, group, exit_day, age) {
            exit_day += 1;
        } else {
            break;
        }
    }

    let s = state.detection.resight_prob;
    let mut marks: Vec<Option<Mark>> = (1..=t)
        .map(|day| match design.kind(day) {
            crate::data::OccasionType::Null => None,
            _ => Some(Mark::Missed),
        })
        .collect();
    let mut first_capture = None;
    let mut counted = Vec::new();
    for day in entry_day..=exit_day {
        if let Some(p) = capture_probs[day - 1] {
            if rng.random::<f64>() < p {
                marks[day - 1] = Some(Mark::Caught);
                first_capture.get_or_insert(day);
            }
        } else if design.is_resight(day) {
            let detected = rng.random::<f64>() < s;
            if first_capture.is_some() {
                if detected {
                    marks[day - 1] = Some(Mark::Resighted);
                }
            } else if detected {
                counted.push(day);
            }
        }
    }
    AnimalRecord {
        animal: SimulatedAnimal {
            latent: LatentHistory { group, entry_day, exit_day },
            first_capture,
        },
        marks,
        counted,
    }
}

fn per_day_capture_probs(state: &OpenParamState, design: &StudyDesign) -> Vec<Option<f64>> {
    (1..=design.t())
        .map(|day| design.is_capture(day).then(|| capture_probability(&state.detection, design, day)))
        .collect()
}

/// Simulate a complete dataset of `state.n_super` animals.
///
/// Panics if the state is invalid for this design; validity is the caller's
/// contract, checked up front so failures name the offending field.
pub fn simulate_dataset(
    state: &OpenParamState,
    design: &StudyDesign,
    rng: &mut impl Rng,
) -> SimulatedDataset {
    state
        .validate(design.t())
        .expect("simulation requires a valid parameter state");
    let t = design.t();
    let entry_probs =
        entry_probabilities(&state.arrival, t).expect("validated arrival mixture yields entry cells");
    let capture_probs = per_day_capture_probs(state, design);
    let mut rows: Vec<(Vec<Option<Mark>>, u64)> = Vec::new();
    let mut counts: Vec<Option<u64>> =
        (1..=t).map(|day| design.is_resight(day).then_some(0)).collect();
    let mut animals = Vec::with_capacity(state.n_super as usize);
    for _ in 0..state.n_super {
        let rec = simulate_animal(state, design, &entry_probs, &capture_probs, rng);
        for &day in &rec.counted {
            *counts[day - 1].as_mut().expect("counted on a resight day") += 1;
        }
        if rec.animal.first_capture.is_some() {
            rows.push((rec.marks, 1));
        }
        animals.push(rec.animal);
    }
    let observed = ObservedData::from_parts(design, rows, counts)
        .expect("simulated records satisfy the data invariants");
    SimulatedDataset { observed, animals }
}

/// Simulate a closed-population dataset: every animal is present on all
/// days, groups differ only in capture probability. The design must have
/// no resight days. Animals never captured leave no record.
pub fn simulate_closed_dataset(
    state: &crate::closed::ClosedParamState,
    design: &StudyDesign,
    rng: &mut impl Rng,
) -> ObservedData {
    state.validate().expect("simulation requires a valid parameter state");
    assert!(
        design.resight_days().next().is_none(),
        "closed-model simulation requires a design without resight days"
    );
    let t = design.t();
    let mut rows: Vec<(Vec<Option<Mark>>, u64)> = Vec::new();
    for _ in 0..state.n_pop {
        let g = sample_categorical(&state.shares, rng);
        let p = state.capture_probs[g];
        let mut caught = false;
        let marks: Vec<Option<Mark>> = (1..=t)
            .map(|day| {
                design.is_capture(day).then(|| {
                    if rng.random::<f64>() < p {
                        caught = true;
                        Mark::Caught
                    } else {
                        Mark::Missed
                    }
                })
            })
            .collect();
        if caught {
            rows.push((marks, 1));
        }
    }
    ObservedData::from_parts(design, rows, vec![None; t])
        .expect("simulated records satisfy the data invariants")
}

fn select_draws(len: usize, draws: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = if draws <= len {
        rand::seq::index::sample(rng, len, draws).into_iter().collect()
    } else {
        (0..draws).map(|_| rng.random_range(0..len)).collect()
    };
    idx.sort_unstable();
    idx
}

fn child_seeds(n: usize, rng: &mut impl Rng) -> Vec<u64> {
    (0..n).map(|_| rng.random()).collect()
}

/// Paired log-likelihood values for one retained state: the real data
/// against one dataset simulated from that same state.
#[derive(Debug, Clone, PartialEq)]
pub struct LoglikPair {
    pub iteration: u64,
    pub real: f64,
    pub simulated: f64,
}

/// For `draws` randomly chosen retained states, evaluate the log-likelihood
/// of the real data and of one fresh simulation under each state. When the
/// model fits, the two collections of values sit on top of each other.
///
/// Draws get independent, deterministically derived generator seeds, so the
/// result depends only on the trace and the caller's generator state.
pub fn gof_loglik_density(
    records: &[OpenRecord],
    data: &ObservedData,
    design: &StudyDesign,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<Vec<LoglikPair>, PpcError> {
    if records.is_empty() {
        return Err(PpcError::EmptyTrace);
    }
    let chosen = select_draws(records.len(), draws, rng);
    let seeds = child_seeds(chosen.len(), rng);
    let mut real_eval = OpenEvaluator::new(design, data)?;
    let mut out = Vec::with_capacity(chosen.len());
    for (&i, &seed) in chosen.iter().zip(&seeds) {
        let state = record_state(&records[i]);
        let real = real_eval.log_likelihood(&state);
        let mut draw_rng = ChaCha20Rng::seed_from_u64(seed);
        let sim = simulate_dataset(&state, design, &mut draw_rng);
        let mut sim_eval = OpenEvaluator::new(design, &sim.observed)?;
        let simulated = sim_eval.log_likelihood(&state);
        out.push(LoglikPair { iteration: records[i].iteration, real, simulated });
    }
    Ok(out)
}

/// Per-occasion statistics from one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct OccasionDraw {
    pub iteration: u64,
    /// New marks per capture day, aligned with `OccasionStats::capture_days`.
    pub first_caught: Vec<u64>,
    /// Unmarked counts per resight day, aligned with `resight_days`.
    pub unmarked: Vec<u64>,
}

/// Distribution of per-occasion statistics over posterior draws, with the
/// real data's values attached for comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OccasionStats {
    pub capture_days: Vec<usize>,
    pub resight_days: Vec<usize>,
    pub real_first_caught: Vec<u64>,
    pub real_unmarked: Vec<u64>,
    pub draws: Vec<OccasionDraw>,
}

fn first_caught_by_day(data: &ObservedData, capture_days: &[usize]) -> Vec<u64> {
    capture_days
        .iter()
        .map(|&day| {
            data.histories
                .iter()
                .filter(|h| h.first_capture() == day)
                .map(|h| h.count)
                .sum()
        })
        .collect()
}

/// Numbers first caught per capture day and unmarked counts per resight
/// day, simulated under `draws` randomly chosen retained states.
pub fn gof_occasion_stats(
    records: &[OpenRecord],
    data: &ObservedData,
    design: &StudyDesign,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<OccasionStats, PpcError> {
    if records.is_empty() {
        return Err(PpcError::EmptyTrace);
    }
    let capture_days: Vec<usize> = design.capture_days().collect();
    let resight_days: Vec<usize> = design.resight_days().collect();
    let real_first_caught = first_caught_by_day(data, &capture_days);
    let real_unmarked: Vec<u64> = resight_days
        .iter()
        .map(|&day| data.count_on(day).expect("count present on resight day"))
        .collect();
    let chosen = select_draws(records.len(), draws, rng);
    let seeds = child_seeds(chosen.len(), rng);
    let mut out = Vec::with_capacity(chosen.len());
    for (&i, &seed) in chosen.iter().zip(&seeds) {
        let state = record_state(&records[i]);
        let mut draw_rng = ChaCha20Rng::seed_from_u64(seed);
        let sim = simulate_dataset(&state, design, &mut draw_rng);
        let first_caught = first_caught_by_day(&sim.observed, &capture_days);
        let unmarked: Vec<u64> = resight_days
            .iter()
            .map(|&day| sim.observed.count_on(day).expect("count present on resight day"))
            .collect();
        out.push(OccasionDraw { iteration: records[i].iteration, first_caught, unmarked });
    }
    Ok(OccasionStats {
        capture_days,
        resight_days,
        real_first_caught,
        real_unmarked,
        draws: out,
    })
}

/// Mean and spread of observed stopover duration for one behavioural group
/// in one simulated cohort. "Observed" animals are those captured at least
/// once — resightings can only follow marking, so capture is what promotes
/// an animal into the observed population. Groups are numbered in
/// reporting order (ascending retention intercept). A group nobody from
/// which was detected yields NaN mean and spread with `detected = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationRow {
    pub draw: usize,
    pub iteration: u64,
    /// 1-based group index in reporting order.
    pub group: usize,
    pub detected: u64,
    pub mean_days: f64,
    pub sd_days: f64,
}

/// Observed stopover duration (exit − entry + 1 among detected animals) by
/// behavioural group, simulated under retained states with exactly `g`
/// groups.
pub fn observed_stopover_durations(
    records: &[OpenRecord],
    design: &StudyDesign,
    draws: usize,
    g: usize,
    rng: &mut impl Rng,
) -> Result<Vec<DurationRow>, PpcError> {
    if records.is_empty() {
        return Err(PpcError::EmptyTrace);
    }
    let subset: Vec<&OpenRecord> = records.iter().filter(|r| r.g == g).collect();
    if subset.is_empty() {
        return Err(PpcError::EmptyCondition { g });
    }
    let chosen = select_draws(subset.len(), draws, rng);
    let seeds = child_seeds(chosen.len(), rng);
    let mut out = Vec::with_capacity(chosen.len() * g);
    for (draw, (&i, &seed)) in chosen.iter().zip(&seeds).enumerate() {
        let state = record_state(subset[i]);
        let mut draw_rng = ChaCha20Rng::seed_from_u64(seed);
        let sim = simulate_dataset(&state, design, &mut draw_rng);
        let mut durations: Vec<Vec<f64>> = vec![Vec::new(); g];
        for animal in &sim.animals {
            if animal.first_capture.is_some() {
                let z = animal.latent;
                durations[z.group].push((z.exit_day - z.entry_day + 1) as f64);
            }
        }
        let order = crate::open::group_order(&state.behaviour);
        for (rank, &label) in order.iter().enumerate() {
            let xs = &durations[label];
            let mean = if xs.is_empty() {
                f64::NAN
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            };
            out.push(DurationRow {
                draw,
                iteration: subset[i].iteration,
                group: rank + 1,
                detected: xs.len() as u64,
                mean_days: mean,
                sd_days: if xs.is_empty() { f64::NAN } else { sample_variance(xs).sqrt() },
            });
        }
    }
    Ok(out)
}

pub fn loglik_pairs_to_csv(pairs: &[LoglikPair]) -> String {
    let mut out = String::from("iteration,real_loglik,sim_loglik\n");
    for p in pairs {
        let _ = writeln!(out, "{},{},{}", p.iteration, p.real, p.simulated);
    }
    out
}

fn occasion_csv(
    real_days: &[usize],
    real_values: &[u64],
    draws: &[OccasionDraw],
    pick: impl Fn(&OccasionDraw) -> &[u64],
) -> String {
    let mut out = String::from("kind,iteration,day,count\n");
    for (&day, &v) in real_days.iter().zip(real_values) {
        let _ = writeln!(out, "real,,{day},{v}");
    }
    for d in draws {
        for (&day, &v) in real_days.iter().zip(pick(d)) {
            let _ = writeln!(out, "simulated,{},{day},{v}", d.iteration);
        }
    }
    out
}

pub fn first_caught_to_csv(stats: &OccasionStats) -> String {
    occasion_csv(&stats.capture_days, &stats.real_first_caught, &stats.draws, |d| {
        &d.first_caught
    })
}

pub fn unmarked_to_csv(stats: &OccasionStats) -> String {
    occasion_csv(&stats.resight_days, &stats.real_unmarked, &stats.draws, |d| &d.unmarked)
}

pub fn durations_to_csv(rows: &[DurationRow]) -> String {
    let mut out = String::from("draw,iteration,group,detected,mean_days,sd_days\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.draw, r.iteration, r.group, r.detected, r.mean_days, r.sd_days
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_design;
    use crate::open::{ArrivalMixture, BehaviourModel, DetectionModel};

    fn design_t10() -> StudyDesign {
        let mut text = String::from("day,type,effort,location\n");
        for day in 1..=10 {
            if day % 3 == 1 {
                text.push_str(&format!("{day},C,1.0,{}\n", 1 + (day % 3)));
            } else if day % 3 == 2 {
                text.push_str(&format!("{day},R,,\n"));
            } else {
                text.push_str(&format!("{day},N,,\n"));
            }
        }
        parse_design(&text).unwrap()
    }

    fn state(n: u64) -> OpenParamState {
        OpenParamState {
            n_super: n,
            arrival: ArrivalMixture {
                weights: vec![0.6, 0.4],
                means: vec![2.5, 7.0],
                sds: vec![1.2, 2.0],
            },
            behaviour: BehaviourModel {
                shares: vec![0.7, 0.3],
                intercepts: vec![-0.5, 1.5],
                day_slope: -0.02,
                age_slope: -0.05,
            },
            detection: DetectionModel {
                intercept: -0.8,
                effort_slope: 0.2,
                loc2_effect: 0.3,
                loc3_effect: -0.3,
                resight_prob: 0.4,
            },
        }
    }

    fn trace_records(n: usize) -> Vec<OpenRecord> {
        (0..n)
            .map(|i| {
                let s = state(60);
                OpenRecord {
                    iteration: i as u64,
                    m: 2,
                    g: 2,
                    n_super: s.n_super,
                    weights: s.arrival.weights.clone(),
                    means: s.arrival.means.clone(),
                    sds: s.arrival.sds.clone(),
                    shares: s.behaviour.shares.clone(),
                    intercepts: s.behaviour.intercepts.clone(),
                    day_slope: s.behaviour.day_slope,
                    age_slope: s.behaviour.age_slope,
                    cap_intercept: s.detection.intercept,
                    cap_effort: s.detection.effort_slope,
                    cap_loc2: s.detection.loc2_effect,
                    cap_loc3: s.detection.loc3_effect,
                    resight_prob: s.detection.resight_prob,
                    log_likelihood: -100.0,
                    log_prior: -10.0,
                }
            })
            .collect()
    }

    fn real_data(design: &StudyDesign) -> ObservedData {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        simulate_dataset(&state(80), design, &mut rng).observed
    }

    #[test]
    fn undetectable_state_yields_empty_dataset() {
        let design = design_t10();
        let mut s = state(200);
        s.detection.intercept = -1000.0;
        s.detection.effort_slope = 0.0;
        s.detection.loc2_effect = 0.0;
        s.detection.loc3_effect = 0.0;
        s.detection.resight_prob = 0.0;
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let sim = simulate_dataset(&s, &design, &mut rng);
        assert_eq!(sim.observed.h(), 0);
        assert_eq!(sim.observed.d(), 0);
        for day in design.resight_days() {
            assert_eq!(sim.observed.count_on(day), Some(0));
        }
        assert_eq!(sim.animals.len(), 200);
    }

    #[test]
    fn zero_retention_caps_residence_at_one_day() {
        let design = design_t10();
        let mut s = state(500);
        s.behaviour.intercepts = vec![-1000.0, -1000.0];
        s.behaviour.day_slope = 0.0;
        s.behaviour.age_slope = 0.0;
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let sim = simulate_dataset(&s, &design, &mut rng);
        for a in &sim.animals {
            assert_eq!(a.latent.exit_day, a.latent.entry_day);
        }
    }

    #[test]
    fn latent_records_stay_inside_the_window() {
        let design = design_t10();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let sim = simulate_dataset(&state(400), &design, &mut rng);
        for a in &sim.animals {
            let z = a.latent;
            assert!(1 <= z.entry_day && z.entry_day <= z.exit_day && z.exit_day <= 10);
            assert!(z.group < 2);
        }
    }

    #[test]
    fn arrival_histogram_matches_entry_probabilities() {
        // Chi-squared goodness of fit of simulated entry days against the
        // entry cell masses, 9 degrees of freedom; 21.666 is the 1% critical
        // value.
        let design = design_t10();
        let s = state(100_000);
        let beta = entry_probabilities(&s.arrival, 10).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let sim = simulate_dataset(&s, &design, &mut rng);
        let mut observed = vec![0u64; 10];
        for a in &sim.animals {
            observed[a.latent.entry_day - 1] += 1;
        }
        let n = s.n_super as f64;
        let stat: f64 = beta
            .iter()
            .zip(&observed)
            .map(|(&b, &o)| {
                let expected = n * b;
                (o as f64 - expected).powi(2) / expected
            })
            .sum();
        assert!(stat < 21.665994333461924, "chi-squared statistic {stat}");
    }

    #[test]
    fn simulation_agrees_with_history_and_count_likelihoods() {
        // Forward simulation and the likelihood are two readings of one
        // model: the frequency of each observed history must match its
        // probability, the never-captured fraction the zero-history mass,
        // and mean unmarked counts the binomial success probabilities.
        let design = design_t10();
        let s = state(100_000);
        let mut eval = {
            let data = real_data(&design);
            OpenEvaluator::new(&design, &data).unwrap()
        };
        let zero_lp = eval.zero_history_log_likelihood(&s);
        let zeta = eval.count_success_probs(&s);

        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let sim = simulate_dataset(&s, &design, &mut rng);
        let undetected = sim.animals.iter().filter(|a| a.first_capture.is_none()).count();
        let n = s.n_super as f64;
        let p_zero = zero_lp.exp();
        let se_zero = (p_zero * (1.0 - p_zero) / n).sqrt();
        assert!(
            (undetected as f64 / n - p_zero).abs() < 3.0 * se_zero,
            "undetected fraction {} vs zero-history probability {p_zero}",
            undetected as f64 / n
        );
        for (day, z) in zeta {
            let y = sim.observed.count_on(day).unwrap() as f64;
            let se = (n * z * (1.0 - z)).sqrt();
            assert!(
                (y - n * z).abs() < 3.0 * se,
                "day {day}: count {y} vs expected {}",
                n * z
            );
        }
    }

    #[test]
    fn history_frequency_matches_history_probability() {
        // Pin one concrete history and compare its simulated frequency to
        // exp of its log-probability.
        let design = design_t10();
        let s = state(1_000_000);
        let marks: Vec<Option<Mark>> = (1..=10)
            .map(|day| match design.kind(day) {
                crate::data::OccasionType::Null => None,
                _ => Some(if day == 1 { Mark::Caught } else { Mark::Missed }),
            })
            .collect();
        let data = ObservedData::from_parts(
            &design,
            vec![(marks.clone(), 1)],
            (1..=10).map(|d| design.is_resight(d).then_some(0)).collect(),
        )
        .unwrap();
        let mut eval = OpenEvaluator::new(&design, &data).unwrap();
        let target_lp = eval.history_log_likelihoods(&s)[0];
        let p = target_lp.exp();

        let entry_probs = entry_probabilities(&s.arrival, 10).unwrap();
        let capture_probs = per_day_capture_probs(&s, &design);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut hits = 0u64;
        for _ in 0..s.n_super {
            let rec = simulate_animal(&s, &design, &entry_probs, &capture_probs, &mut rng);
            if rec.animal.first_capture.is_some() && rec.marks == marks {
                hits += 1;
            }
        }
        let n = s.n_super as f64;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!(
            (hits as f64 / n - p).abs() < 3.0 * se,
            "frequency {} vs probability {p}",
            hits as f64 / n
        );
    }

    #[test]
    fn loglik_pairs_are_deterministic_and_sized() {
        let design = design_t10();
        let data = real_data(&design);
        let records = trace_records(150);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let pairs = gof_loglik_density(&records, &data, &design, 100, &mut rng).unwrap();
        assert_eq!(pairs.len(), 100);
        let mut rng2 = ChaCha20Rng::seed_from_u64(8);
        let again = gof_loglik_density(&records, &data, &design, 100, &mut rng2).unwrap();
        assert_eq!(pairs, again);
        for p in &pairs {
            assert!(p.real.is_finite());
            assert!(p.simulated.is_finite());
        }
        let csv = loglik_pairs_to_csv(&pairs);
        assert_eq!(csv.lines().count(), 101);
        assert!(gof_loglik_density(&[], &data, &design, 10, &mut rng).is_err());
    }

    #[test]
    fn occasion_stats_cover_every_sampled_day() {
        let design = design_t10();
        let data = real_data(&design);
        let records = trace_records(40);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let stats = gof_occasion_stats(&records, &data, &design, 25, &mut rng).unwrap();
        assert_eq!(stats.capture_days.len() + stats.resight_days.len(), design.k());
        assert_eq!(stats.draws.len(), 25);
        let real_marks: u64 = stats.real_first_caught.iter().sum();
        assert_eq!(real_marks, data.d());
        for d in &stats.draws {
            assert_eq!(d.first_caught.len(), stats.capture_days.len());
            assert_eq!(d.unmarked.len(), stats.resight_days.len());
        }
        let csv = first_caught_to_csv(&stats);
        assert_eq!(
            csv.lines().count(),
            1 + stats.capture_days.len() * (1 + stats.draws.len())
        );
        assert!(csv.lines().nth(1).unwrap().starts_with("real,,"));
    }

    #[test]
    fn undetectable_states_simulate_zero_occasion_stats() {
        let design = design_t10();
        let data = real_data(&design);
        let mut records = trace_records(10);
        for r in &mut records {
            r.cap_intercept = -1000.0;
            r.cap_effort = 0.0;
            r.cap_loc2 = 0.0;
            r.cap_loc3 = 0.0;
            r.resight_prob = 0.0;
        }
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let stats = gof_occasion_stats(&records, &data, &design, 5, &mut rng).unwrap();
        for d in &stats.draws {
            assert!(d.first_caught.iter().all(|&v| v == 0));
            assert!(d.unmarked.iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn durations_collapse_to_one_day_without_retention() {
        let design = design_t10();
        let mut records = trace_records(12);
        for r in &mut records {
            r.intercepts = vec![-1000.0, -1000.0];
            r.day_slope = 0.0;
            r.age_slope = 0.0;
            r.n_super = 400;
        }
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let rows = observed_stopover_durations(&records, &design, 6, 2, &mut rng).unwrap();
        assert_eq!(rows.len(), 12);
        for row in &rows {
            assert!(row.detected > 0);
            assert_eq!(row.mean_days, 1.0);
            assert_eq!(row.sd_days, 0.0);
        }
    }

    #[test]
    fn retention_gap_separates_group_durations() {
        // Constant retention 0.119 vs 0.953: geometric residence alone
        // differs by more than an order of magnitude, so even with the
        // detected-only bias the group means separate clearly.
        let design = design_t10();
        let mut records = trace_records(10);
        for r in &mut records {
            r.intercepts = vec![-2.0, 3.0];
            r.day_slope = 0.0;
            r.age_slope = 0.0;
            r.n_super = 3000;
        }
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let rows = observed_stopover_durations(&records, &design, 8, 2, &mut rng).unwrap();
        assert_eq!(rows.len(), 16);
        for pair in rows.chunks(2) {
            assert_eq!(pair[0].group, 1);
            assert_eq!(pair[1].group, 2);
            assert!(
                pair[1].mean_days > 3.0 * pair[0].mean_days,
                "short {} vs long {}",
                pair[0].mean_days,
                pair[1].mean_days
            );
        }
        assert!(matches!(
            observed_stopover_durations(&records, &design, 4, 1, &mut rng),
            Err(PpcError::EmptyCondition { g: 1 })
        ));
        let csv = durations_to_csv(&rows);
        assert_eq!(csv.lines().count(), 17);
    }

    #[test]
    fn closed_simulation_matches_binomial_capture_counts() {
        let design = parse_design(
            "day,type,effort,location\n1,C,1.0,1\n2,C,1.0,1\n3,N,,\n4,C,1.0,1\n",
        )
        .unwrap();
        let state = crate::closed::ClosedParamState {
            n_pop: 50_000,
            shares: vec![1.0],
            capture_probs: vec![0.3],
        };
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let data = simulate_closed_dataset(&state, &design, &mut rng);
        // Detection probability over three occasions: 1 - 0.7^3.
        let p_detect = 1.0 - 0.7f64.powi(3);
        let n = state.n_pop as f64;
        let se = (n * p_detect * (1.0 - p_detect)).sqrt();
        assert!((data.d() as f64 - n * p_detect).abs() < 3.0 * se);
        for day in 1..=4 {
            assert_eq!(data.count_on(day), None);
        }
    }

    #[test]
    fn simulated_counts_respect_data_invariants() {
        let design = design_t10();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let sim = simulate_dataset(&state(300), &design, &mut rng);
        for day in 1..=10 {
            assert_eq!(sim.observed.count_on(day).is_some(), design.is_resight(day));
        }
        let total: u64 = sim.observed.histories.iter().map(|h| h.count).sum();
        let detected = sim.animals.iter().filter(|a| a.first_capture.is_some()).count() as u64;
        assert_eq!(total, detected);
    }
}
