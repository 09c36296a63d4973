//! Command-line front end: binds configuration, data, samplers, oracles,
//! diagnostics, and predictive checks into reproducible runs.
//!
//! Every run is driven by one JSON config plus optional overrides, and every
//! output file is stamped with the config hash and seed, so a result can
//! always be traced back to the exact inputs that produced it. Exit codes
//! separate configuration mistakes (2), data problems (3), and numeric or
//! internal failures (4).

use crate::config::{
    load_config, ConfigContext, ConfigError, ModelFamily, TruthConfig,
};
use crate::data::{load_design, load_observations, serialize_observations, DataError, StudyDesign};
use crate::diagnostics::{
    closed_conditional_summary, conditional_summary, geweke_z_default, group_probabilities,
    model_averaged_entry, model_probabilities, model_probabilities_to_csv, summaries_to_csv,
    DiagnosticsError, GewekeResult, ModelCell, ModelCondition, PosteriorSummary,
};
use crate::open::{ModelError, OpenEvaluator};
use crate::oracle::{
    brute_count_success_prob, brute_history_loglik, brute_zero_history_loglik,
    rejection_posterior_closed, OracleError,
};
use crate::ppc::{
    durations_to_csv, first_caught_to_csv, gof_loglik_density, gof_occasion_stats,
    loglik_pairs_to_csv, observed_stopover_durations, simulate_closed_dataset,
    simulate_dataset, unmarked_to_csv, PpcError,
};
use crate::sampler::{initial_state, run_closed_chain, run_open_chain, SamplerError};
use crate::trace::{ChainTrace, ClosedRecord, OpenRecord, TraceError};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Ppc(#[from] PpcError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Exit code taxonomy: 2 config, 3 data, 4 numeric/internal.
pub fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Config(_) => 2,
        CliError::Data(_) | CliError::Trace(_) | CliError::Io { .. } => 3,
        CliError::Sampler(SamplerError::InvalidConfig { .. }) => 2,
        CliError::Sampler(_) => 4,
        CliError::Oracle(OracleError::BudgetExceeded { .. })
        | CliError::Oracle(OracleError::GridTooLarge { .. }) => 2,
        CliError::Oracle(_) => 4,
        CliError::Model(_) | CliError::Diagnostics(_) | CliError::Ppc(_) => 4,
    }
}

#[derive(Parser)]
#[command(
    name = "stopover",
    version,
    about = "Trans-dimensional Bayesian fitting of stopover and closed capture-recapture models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit the configured model by reversible-jump MCMC
    Fit(CommonArgs),
    /// Simulate a dataset from the truth parameters in the config
    Simulate(CommonArgs),
    /// Posterior predictive checks against a fitted trace
    Gof(CommonArgs),
    /// Convergence diagnostics and posterior summaries for a trace
    Diagnose(CommonArgs),
    /// Small-instance reference answers (enumeration, rejection sampling)
    Oracle(CommonArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// JSON run configuration
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Independent chains to run (fit only)
    #[arg(long)]
    pub chains: Option<usize>,
    /// Override any config field by dot path, e.g. --set sampler.iterations=5000
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            let mut shown = format!("error: {err}");
            eprintln!("{shown}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                let text = s.to_string();
                if !shown.contains(&text) {
                    eprintln!("  caused by: {text}");
                    shown = text;
                }
                source = s.source();
            }
            exit_code(&err)
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (args, run) = match cli.command {
        Command::Fit(a) => (a, cmd_fit as fn(ConfigContext) -> Result<(), CliError>),
        Command::Simulate(a) => (a, cmd_simulate as _),
        Command::Gof(a) => (a, cmd_gof as _),
        Command::Diagnose(a) => (a, cmd_diagnose as _),
        Command::Oracle(a) => (a, cmd_oracle as _),
    };
    let ctx = load_config(
        &args.config,
        &args.sets,
        args.seed,
        args.out.as_deref().and_then(Path::to_str),
        args.chains,
    )?;
    run(ctx)
}

const LEVEL: f64 = 0.95;

const OPEN_SCALARS: [&str; 10] = [
    "n",
    "day_slope",
    "age_slope",
    "cap_intercept",
    "cap_effort",
    "cap_loc2",
    "cap_loc3",
    "resight_prob",
    "log_likelihood",
    "log_prior",
];

fn header(ctx: &ConfigContext) -> String {
    format!("# config_hash={} seed={}\n", ctx.hash, ctx.run.seed)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    std::fs::write(&path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn json_doc(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON output serializes");
    s.push('\n');
    s
}

/// Most-visited value over one margin of the model table; ties go to the
/// smaller value.
fn modal<K: Ord + Copy>(cells: &[ModelCell], key: impl Fn(&ModelCell) -> Option<K>) -> Option<K> {
    let mut counts: BTreeMap<K, u64> = BTreeMap::new();
    for c in cells {
        if let Some(k) = key(c) {
            *counts.entry(k).or_default() += c.count;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
}

fn summary_table(rows: &[(String, PosteriorSummary)]) -> String {
    let mut out = String::from("quantity,condition,n,mean,sd,lower,upper\n");
    for (condition, s) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.name, condition, s.n, s.mean, s.sd, s.lower, s.upper
        );
    }
    out
}

/// Unconditional scalar summaries plus per-component summaries under the
/// modal (M, G); the condition column records the restriction each row was
/// computed under.
fn open_summaries_csv(records: &[OpenRecord]) -> Result<String, CliError> {
    let table = model_probabilities(records)?;
    let m_star = modal(&table.cells, |c| c.m).expect("open table has M values");
    let g_star = modal(&table.cells, |c| Some(c.g)).expect("table is non-empty");
    let mut rows = Vec::new();
    for q in OPEN_SCALARS {
        let s = conditional_summary(records, ModelCondition::default(), q, LEVEL)?;
        rows.push((String::new(), s));
    }
    let m_cond = ModelCondition { m: Some(m_star), g: None };
    for k in 1..=m_star {
        for base in ["weight", "mean", "sd"] {
            let s = conditional_summary(records, m_cond, &format!("{base}[{k}]"), LEVEL)?;
            rows.push((format!("m={m_star}"), s));
        }
    }
    let g_cond = ModelCondition { m: None, g: Some(g_star) };
    for k in 1..=g_star {
        for base in ["share", "intercept"] {
            let s = conditional_summary(records, g_cond, &format!("{base}[{k}]"), LEVEL)?;
            rows.push((format!("g={g_star}"), s));
        }
    }
    Ok(summary_table(&rows))
}

fn closed_summaries_csv(records: &[ClosedRecord]) -> Result<String, CliError> {
    let table = group_probabilities(records)?;
    let g_star = modal(&table.cells, |c| Some(c.g)).expect("table is non-empty");
    let mut rows = Vec::new();
    for q in ["n", "log_likelihood", "log_prior"] {
        rows.push((String::new(), closed_conditional_summary(records, None, q, LEVEL)?));
    }
    for k in 1..=g_star {
        for base in ["p", "share"] {
            let s = closed_conditional_summary(records, Some(g_star), &format!("{base}[{k}]"), LEVEL)?;
            rows.push((format!("g={g_star}"), s));
        }
    }
    Ok(summary_table(&rows))
}

/// Geweke z per scalar series; traces too short for the windows are marked
/// rather than failed, since a pilot run is still a legitimate run.
fn geweke_csv(series: &[(&str, Vec<f64>)]) -> Result<String, CliError> {
    let mut out = String::from("quantity,status,z\n");
    for (name, xs) in series {
        match geweke_z_default(xs) {
            Ok(GewekeResult::Z(z)) => {
                let _ = writeln!(out, "{name},ok,{z}");
            }
            Ok(GewekeResult::Degenerate) => {
                let _ = writeln!(out, "{name},degenerate,");
            }
            Err(DiagnosticsError::SeriesTooShort { .. })
            | Err(DiagnosticsError::WindowTooSmall { .. }) => {
                let _ = writeln!(out, "{name},short,");
            }
            Err(other) => return Err(other.into()),
        }
    }
    Ok(out)
}

fn open_series(records: &[OpenRecord]) -> Vec<(&'static str, Vec<f64>)> {
    let fields: [(&'static str, fn(&OpenRecord) -> f64); 10] = [
        ("n", |r| r.n_super as f64),
        ("day_slope", |r| r.day_slope),
        ("age_slope", |r| r.age_slope),
        ("cap_intercept", |r| r.cap_intercept),
        ("cap_effort", |r| r.cap_effort),
        ("cap_loc2", |r| r.cap_loc2),
        ("cap_loc3", |r| r.cap_loc3),
        ("resight_prob", |r| r.resight_prob),
        ("log_likelihood", |r| r.log_likelihood),
        ("log_prior", |r| r.log_prior),
    ];
    fields
        .into_iter()
        .map(|(name, f)| (name, records.iter().map(f).collect()))
        .collect()
}

fn closed_series(records: &[ClosedRecord]) -> Vec<(&'static str, Vec<f64>)> {
    let fields: [(&'static str, fn(&ClosedRecord) -> f64); 3] = [
        ("n", |r| r.n_pop as f64),
        ("log_likelihood", |r| r.log_likelihood),
        ("log_prior", |r| r.log_prior),
    ];
    fields
        .into_iter()
        .map(|(name, f)| (name, records.iter().map(f).collect()))
        .collect()
}

/// The modelling choices a reader of the outputs needs to know and cannot
/// recover from the numbers alone.
fn decisions_json(ctx: &ConfigContext, t: usize) -> serde_json::Value {
    let p = &ctx.run.priors;
    json!({
        "priors": {
            "arrival_components": format!("uniform on 1..={}", p.m_max),
            "behaviour_groups_open": format!("1 + Poisson({})", p.g_poisson_mean),
            "behaviour_groups_closed": format!("uniform on 1..={}", p.g_max_closed),
            "population_open": format!(
                "normal(mean={}, sd={}) on the integers, truncated below the number marked",
                p.n_mean, p.n_sd
            ),
            "population_closed": format!(
                "reciprocal on max(D,1)..={}*max(D,1)", p.n_max_factor
            ),
            "arrival_mean": format!("normal({}, {})", p.mu_mean(t), p.mu_sd(t)),
            "arrival_sd": format!("uniform({}, {})", p.sigma_floor, p.sigma_ceiling(t)),
            "weights_and_shares": "symmetric Dirichlet(1) with factorial ordering terms",
            "retention_slopes": format!("normal(0, {:.6})", crate::priors::retention_coeff_sd()),
            "capture_coefficients": format!("normal(0, {:.6})", crate::priors::capture_coeff_sd()),
            "resight": "uniform(0, 1)",
        },
        "reporting": {
            "arrival_sort": "ascending mean (ties: sd, then weight)",
            "group_sort": "ascending retention intercept (closed: ascending capture probability)",
            "model_averaging": "summaries pool every retained state; per-model mass is in the model probability table",
            "credible_level": LEVEL,
            "observed_duration": "counts animals captured at least once",
        },
        "initialization": "deterministic: one arrival component at the window centre, one behaviour group, zero slopes, resight 0.5, population just above the data floor",
    })
}

fn load_fit_inputs(
    ctx: &ConfigContext,
    command: &'static str,
) -> Result<(StudyDesign, crate::data::ObservedData), CliError> {
    let design_path = ctx.require_file("design", command, Some(ctx.design_path()))?;
    let design = load_design(&design_path)?;
    let hist_path = ctx.require_file("histories", command, ctx.histories_path())?;
    if ctx.run.model == ModelFamily::Open
        && design.resight_days().next().is_some()
        && ctx.run.counts.is_none()
    {
        return Err(ConfigError::MissingField {
            field: "counts",
            command: "fit an open model whose design has resight days",
        }
        .into());
    }
    let counts_path = match ctx.counts_path() {
        Some(p) => Some(ctx.require_file("counts", command, Some(p))?),
        None => None,
    };
    let data = load_observations(&design, &hist_path, counts_path.as_deref())?;
    Ok((design, data))
}

fn chain_name(base: &str, chain: usize, ext: &str) -> String {
    format!("{base}_{chain}.{ext}")
}

fn cmd_fit(ctx: ConfigContext) -> Result<(), CliError> {
    let (design, data) = load_fit_inputs(&ctx, "fit")?;
    if ctx.run.model == ModelFamily::Closed && design.resight_days().next().is_some() {
        return Err(ConfigError::BadField {
            field: "model",
            what: "the closed model needs a design without resight days".into(),
        }
        .into());
    }
    let out = ctx.out_dir();
    let seeds: Vec<u64> = (0..ctx.run.chains).map(|i| ctx.chain_seed(i)).collect();
    let priors = ctx.run.priors.clone();
    let sampler = ctx.sampler.clone();
    let hash = ctx.hash.clone();
    let mut chains_meta = Vec::new();
    match ctx.run.model {
        ModelFamily::Open => {
            let runs: Result<Vec<_>, SamplerError> = std::thread::scope(|scope| {
                let handles: Vec<_> = seeds
                    .iter()
                    .map(|&seed| {
                        let (design, data, priors, sampler, hash) =
                            (&design, &data, &priors, &sampler, &hash);
                        scope.spawn(move || {
                            run_open_chain(design, data, priors, sampler, seed, hash)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("chain thread panicked"))
                    .collect()
            });
            for (i, run) in runs?.into_iter().enumerate() {
                let chain = i + 1;
                write_file(&out, &chain_name("trace", chain, "csv"), &run.trace.to_csv())?;
                write_file(
                    &out,
                    &chain_name("acceptance", chain, "json"),
                    &json_doc(&serde_json::to_value(&run.acceptance).expect("report serializes")),
                )?;
                let records = &run.trace.records;
                let table = model_probabilities(records)?;
                write_file(
                    &out,
                    &chain_name("model_probabilities", chain, "csv"),
                    &format!("{}{}", header(&ctx), model_probabilities_to_csv(&table)),
                )?;
                write_file(
                    &out,
                    &chain_name("summaries", chain, "csv"),
                    &format!("{}{}", header(&ctx), open_summaries_csv(records)?),
                )?;
                let entry = model_averaged_entry(records, design.t(), LEVEL)?;
                write_file(
                    &out,
                    &chain_name("entry", chain, "csv"),
                    &format!("{}{}", header(&ctx), summaries_to_csv(&entry)),
                )?;
                chains_meta.push(json!({
                    "chain": chain,
                    "seed": seeds[i],
                    "trace": chain_name("trace", chain, "csv"),
                    "acceptance": chain_name("acceptance", chain, "json"),
                    "tuned_sampler": run.tuned,
                }));
            }
        }
        ModelFamily::Closed => {
            let runs: Result<Vec<_>, SamplerError> = std::thread::scope(|scope| {
                let handles: Vec<_> = seeds
                    .iter()
                    .map(|&seed| {
                        let (design, data, priors, sampler, hash) =
                            (&design, &data, &priors, &sampler, &hash);
                        scope.spawn(move || {
                            run_closed_chain(design, data, priors, sampler, seed, hash)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("chain thread panicked"))
                    .collect()
            });
            for (i, run) in runs?.into_iter().enumerate() {
                let chain = i + 1;
                write_file(&out, &chain_name("trace", chain, "csv"), &run.trace.to_csv())?;
                write_file(
                    &out,
                    &chain_name("acceptance", chain, "json"),
                    &json_doc(&serde_json::to_value(&run.acceptance).expect("report serializes")),
                )?;
                let records = &run.trace.records;
                let table = group_probabilities(records)?;
                write_file(
                    &out,
                    &chain_name("group_probabilities", chain, "csv"),
                    &format!("{}{}", header(&ctx), model_probabilities_to_csv(&table)),
                )?;
                write_file(
                    &out,
                    &chain_name("summaries", chain, "csv"),
                    &format!("{}{}", header(&ctx), closed_summaries_csv(records)?),
                )?;
                chains_meta.push(json!({
                    "chain": chain,
                    "seed": seeds[i],
                    "trace": chain_name("trace", chain, "csv"),
                    "acceptance": chain_name("acceptance", chain, "json"),
                    "tuned_sampler": run.tuned,
                }));
            }
        }
    }
    let metadata = json!({
        "config_hash": ctx.hash,
        "seed": ctx.run.seed,
        "command": "fit",
        "model": ctx.run.model.name(),
        "chains": chains_meta,
        "truth": ctx.run.truth,
        "decisions": decisions_json(&ctx, design.t()),
        "resolved_config": serde_json::to_value(&ctx.run).expect("config serializes"),
    });
    write_file(&out, "metadata.json", &json_doc(&metadata))
}

fn cmd_simulate(ctx: ConfigContext) -> Result<(), CliError> {
    let design_path = ctx.require_file("design", "simulate", Some(ctx.design_path()))?;
    let design = load_design(&design_path)?;
    let truth = ctx.run.truth.clone().ok_or(ConfigError::MissingField {
        field: "truth",
        command: "simulate",
    })?;
    let bad_truth = |what: String| ConfigError::BadField { field: "truth", what };
    let out = ctx.out_dir();
    let mut rng = ChaCha20Rng::seed_from_u64(ctx.run.seed);
    let (observed, truth_value) = match (&truth, ctx.run.model) {
        (TruthConfig::Open(state), ModelFamily::Open) => {
            if state.n_super == 0 {
                return Err(bad_truth("n_super must be positive".into()).into());
            }
            state
                .validate(design.t())
                .map_err(|e| bad_truth(e.to_string()))?;
            let sim = simulate_dataset(state, &design, &mut rng);
            (sim.observed, serde_json::to_value(state).expect("truth serializes"))
        }
        (TruthConfig::Closed(state), ModelFamily::Closed) => {
            if state.n_pop == 0 {
                return Err(bad_truth("n_pop must be positive".into()).into());
            }
            state.validate().map_err(|e| bad_truth(e.to_string()))?;
            if design.resight_days().next().is_some() {
                return Err(ConfigError::BadField {
                    field: "design",
                    what: "the closed model needs a design without resight days".into(),
                }
                .into());
            }
            let observed = simulate_closed_dataset(state, &design, &mut rng);
            (observed, serde_json::to_value(state).expect("truth serializes"))
        }
        _ => {
            return Err(bad_truth(format!(
                "truth parameters do not match the `{}` model family",
                ctx.run.model.name()
            ))
            .into())
        }
    };
    let (hist_text, counts_text) = serialize_observations(&observed);
    write_file(&out, "histories.csv", &format!("{}{}", header(&ctx), hist_text))?;
    let has_resight = design.resight_days().next().is_some();
    if has_resight {
        write_file(&out, "counts.csv", &format!("{}{}", header(&ctx), counts_text))?;
    }
    let truth_doc = json!({
        "config_hash": ctx.hash,
        "seed": ctx.run.seed,
        "model": ctx.run.model.name(),
        "truth": truth_value,
        "detected": observed.d(),
        "distinct_histories": observed.h(),
        "files": {
            "histories": "histories.csv",
            "counts": if has_resight { Some("counts.csv") } else { None },
        },
    });
    write_file(&out, "truth.json", &json_doc(&truth_doc))
}

fn load_open_trace(ctx: &ConfigContext, command: &'static str) -> Result<ChainTrace<OpenRecord>, CliError> {
    let path = ctx.require_file("trace", command, Some(ctx.trace_path()))?;
    let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ChainTrace::from_csv(&text)?)
}

fn cmd_gof(ctx: ConfigContext) -> Result<(), CliError> {
    if ctx.run.model != ModelFamily::Open {
        return Err(ConfigError::BadField {
            field: "model",
            what: "goodness-of-fit checks apply to the open model".into(),
        }
        .into());
    }
    let (design, data) = load_fit_inputs(&ctx, "gof")?;
    let trace = load_open_trace(&ctx, "gof")?;
    let records = &trace.records;
    let out = ctx.out_dir();
    let draws = ctx.run.gof.draws;
    let mut rng = ChaCha20Rng::seed_from_u64(ctx.run.seed);
    let pairs = gof_loglik_density(records, &data, &design, draws, &mut rng)?;
    write_file(
        &out,
        "gof_loglik.csv",
        &format!("{}{}", header(&ctx), loglik_pairs_to_csv(&pairs)),
    )?;
    let stats = gof_occasion_stats(records, &data, &design, draws, &mut rng)?;
    write_file(
        &out,
        "gof_first_caught.csv",
        &format!("{}{}", header(&ctx), first_caught_to_csv(&stats)),
    )?;
    write_file(
        &out,
        "gof_unmarked.csv",
        &format!("{}{}", header(&ctx), unmarked_to_csv(&stats)),
    )?;
    let g_star = match ctx.run.gof.duration_groups {
        Some(g) => g,
        None => {
            let table = model_probabilities(records)?;
            modal(&table.cells, |c| Some(c.g)).expect("table is non-empty")
        }
    };
    let rows = observed_stopover_durations(records, &design, draws, g_star, &mut rng).map_err(
        |e| match e {
            PpcError::EmptyCondition { g } => CliError::Config(ConfigError::BadField {
                field: "gof.duration_groups",
                what: format!("no retained states have G = {g}"),
            }),
            other => other.into(),
        },
    )?;
    write_file(
        &out,
        "durations.csv",
        &format!("{}{}", header(&ctx), durations_to_csv(&rows)),
    )
}

fn cmd_diagnose(ctx: ConfigContext) -> Result<(), CliError> {
    let design_path = ctx.require_file("design", "diagnose", Some(ctx.design_path()))?;
    let design = load_design(&design_path)?;
    let out = ctx.out_dir();
    match ctx.run.model {
        ModelFamily::Open => {
            let trace = load_open_trace(&ctx, "diagnose")?;
            let records = &trace.records;
            write_file(
                &out,
                "geweke.csv",
                &format!("{}{}", header(&ctx), geweke_csv(&open_series(records))?),
            )?;
            let table = model_probabilities(records)?;
            write_file(
                &out,
                "model_probabilities.csv",
                &format!("{}{}", header(&ctx), model_probabilities_to_csv(&table)),
            )?;
            write_file(
                &out,
                "summaries.csv",
                &format!("{}{}", header(&ctx), open_summaries_csv(records)?),
            )?;
            let entry = model_averaged_entry(records, design.t(), LEVEL)?;
            write_file(
                &out,
                "entry.csv",
                &format!("{}{}", header(&ctx), summaries_to_csv(&entry)),
            )
        }
        ModelFamily::Closed => {
            let path = ctx.require_file("trace", "diagnose", Some(ctx.trace_path()))?;
            let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let trace: ChainTrace<ClosedRecord> = ChainTrace::from_csv(&text)?;
            let records = &trace.records;
            write_file(
                &out,
                "geweke.csv",
                &format!("{}{}", header(&ctx), geweke_csv(&closed_series(records))?),
            )?;
            let table = group_probabilities(records)?;
            write_file(
                &out,
                "group_probabilities.csv",
                &format!("{}{}", header(&ctx), model_probabilities_to_csv(&table)),
            )?;
            write_file(
                &out,
                "summaries.csv",
                &format!("{}{}", header(&ctx), closed_summaries_csv(records)?),
            )
        }
    }
}

fn cmd_oracle(ctx: ConfigContext) -> Result<(), CliError> {
    let (design, data) = load_fit_inputs(&ctx, "oracle")?;
    let out = ctx.out_dir();
    let budget = ctx.run.oracle.budget();
    match ctx.run.model {
        ModelFamily::Closed => {
            let mut rng = ChaCha20Rng::seed_from_u64(ctx.run.seed);
            let result = rejection_posterior_closed(
                &design,
                &data,
                &ctx.run.priors,
                &budget,
                ctx.run.oracle.rejection_draws,
                &mut rng,
            )?;
            let mut cells: BTreeMap<(usize, u64), u64> = BTreeMap::new();
            for draw in &result.draws {
                *cells.entry((draw.g(), draw.n_pop)).or_default() += 1;
            }
            let mut csv = String::from("g,n,probability\n");
            for ((g, n), count) in &cells {
                let _ = writeln!(csv, "{g},{n},{}", *count as f64 / result.accepted as f64);
            }
            write_file(&out, "oracle_posterior.csv", &format!("{}{}", header(&ctx), csv))?;
            let doc = json!({
                "config_hash": ctx.hash,
                "seed": ctx.run.seed,
                "model": "closed",
                "method": "rejection sampling from the prior",
                "accepted": result.accepted,
                "proposed": result.proposed,
                "likelihood_bound": result.l_max,
            });
            write_file(&out, "oracle.json", &json_doc(&doc))
        }
        ModelFamily::Open => {
            let state = initial_state(&design, &data, &ctx.run.priors);
            let mut eval = OpenEvaluator::new(&design, &data)?;
            let fast_hist = eval.history_log_likelihoods(&state);
            let mut csv = String::from("quantity,reference,optimized,abs_diff\n");
            let mut max_diff = 0.0f64;
            let mut push = |csv: &mut String, name: &str, reference: f64, optimized: f64| {
                let diff = (reference - optimized).abs();
                max_diff = max_diff.max(diff);
                let _ = writeln!(csv, "{name},{reference},{optimized},{diff}");
            };
            for (i, h) in data.histories.iter().enumerate() {
                let brute = brute_history_loglik(&state, &design, &h.marks, &budget)?;
                push(&mut csv, &format!("loglik[{}]", h.encode()), brute, fast_hist[i]);
            }
            let brute_zero = brute_zero_history_loglik(&state, &design, &budget)?;
            let fast_zero = eval.zero_history_log_likelihood(&state);
            push(&mut csv, "loglik[never-captured]", brute_zero, fast_zero);
            for (day, zeta) in eval.count_success_probs(&state) {
                let brute = brute_count_success_prob(&state, &design, day, &budget)?;
                push(&mut csv, &format!("zeta[{day}]"), brute, zeta);
            }
            write_file(&out, "oracle_check.csv", &format!("{}{}", header(&ctx), csv))?;
            let doc = json!({
                "config_hash": ctx.hash,
                "seed": ctx.run.seed,
                "model": "open",
                "method": "brute-force latent enumeration at the deterministic starting state",
                "max_abs_diff": max_diff,
            });
            write_file(&out, "oracle.json", &json_doc(&doc))
        }
    }
}
