//! End-to-end tests of the command-line binary: exit codes, output files,
//! provenance headers, and rerun determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stopover")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

const CLOSED_DESIGN: &str = "day,type,effort,location\n1,C,1.0,1\n2,C,1.5,2\n3,C,0.5,1\n";
const CLOSED_HISTORIES: &str = "history,count\n110,3\n011,2\n100,4\n001,1\n";

fn closed_config(dir: &Path) -> PathBuf {
    write(dir, "design.csv", CLOSED_DESIGN);
    write(dir, "histories.csv", CLOSED_HISTORIES);
    write(
        dir,
        "config.json",
        r#"{
  "model": "closed",
  "seed": 42,
  "design": "design.csv",
  "histories": "histories.csv",
  "sampler": {"iterations": 1500, "burn_in": 300, "thin": 2}
}"#,
    )
}

const OPEN_DESIGN: &str = "day,type,effort,location\n\
1,C,1.0,1\n2,R,,\n3,C,1.2,2\n4,R,,\n5,C,0.8,1\n6,R,,\n7,C,1.0,3\n8,N,,\n9,C,1.1,1\n10,R,,\n";

const OPEN_TRUTH: &str = r#"{
    "n_super": 250,
    "arrival": {"weights": [0.6, 0.4], "means": [3.0, 7.0], "sds": [1.5, 2.0]},
    "behaviour": {"shares": [0.7, 0.3], "intercepts": [0.2, 2.0], "day_slope": -0.02, "age_slope": -0.05},
    "detection": {"intercept": -0.8, "effort_slope": 0.3, "loc2_effect": 0.2, "loc3_effect": -0.3, "resight_prob": 0.4}
  }"#;

fn open_sim_config(dir: &Path) -> PathBuf {
    write(dir, "design.csv", OPEN_DESIGN);
    write(
        dir,
        "sim.json",
        &format!(
            r#"{{
  "model": "open",
  "seed": 11,
  "design": "design.csv",
  "out_dir": "simout",
  "truth": {OPEN_TRUTH}
}}"#
        ),
    )
}

fn open_fit_config(dir: &Path) -> PathBuf {
    write(
        dir,
        "fit.json",
        &format!(
            r#"{{
  "model": "open",
  "seed": 19,
  "design": "design.csv",
  "histories": "simout/histories.csv",
  "counts": "simout/counts.csv",
  "trace": "fitout/trace_1.csv",
  "out_dir": "fitout",
  "gof": {{"draws": 10}},
  "sampler": {{"iterations": 800, "burn_in": 200, "thin": 2, "check_interval": 400}},
  "truth": {OPEN_TRUTH}
}}"#
        ),
    )
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn closed_fit_writes_stamped_outputs_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    closed_config(dir.path());
    let out = run_in(dir.path(), &["fit", "--config", "config.json", "--out", "a"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let out2 = run_in(dir.path(), &["fit", "--config", "config.json", "--out", "b"]);
    assert!(out2.status.success(), "{}", stderr_of(&out2));

    for name in [
        "trace_1.csv",
        "acceptance_1.json",
        "group_probabilities_1.csv",
        "summaries_1.csv",
        "metadata.json",
    ] {
        let a = dir.path().join("a").join(name);
        let b = dir.path().join("b").join(name);
        assert!(a.exists(), "{name} missing");
        if name == "metadata.json" {
            // Identical except for the echoed output directory itself.
            let norm = |p: &Path| {
                fs::read_to_string(p)
                    .unwrap()
                    .lines()
                    .filter(|l| !l.contains("out_dir"))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(norm(&a), norm(&b), "{name} differs beyond out_dir");
        } else {
            assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "{name} differs");
        }
    }

    // Every CSV opens with the provenance stamp; JSON carries the same fields.
    let stamp = first_line(&dir.path().join("a/trace_1.csv"));
    assert!(stamp.starts_with("# config_hash="), "{stamp}");
    assert!(stamp.ends_with("seed=42"), "{stamp}");
    for name in ["group_probabilities_1.csv", "summaries_1.csv"] {
        assert_eq!(first_line(&dir.path().join("a").join(name)), stamp);
    }
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/metadata.json")).unwrap())
            .unwrap();
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["model"], "closed");
    let hash = meta["config_hash"].as_str().unwrap();
    assert!(stamp.contains(hash), "metadata hash {hash} not in {stamp}");
    let acc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/acceptance_1.json")).unwrap())
            .unwrap();
    assert_eq!(acc["config_hash"].as_str().unwrap(), hash);
}

#[test]
fn seed_flag_overrides_config_and_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    closed_config(dir.path());
    let out = run_in(
        dir.path(),
        &["fit", "--config", "config.json", "--out", "s7", "--seed", "7"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let stamp = first_line(&dir.path().join("s7/trace_1.csv"));
    assert!(stamp.ends_with("seed=7"), "{stamp}");
    let out42 = run_in(dir.path(), &["fit", "--config", "config.json", "--out", "s42"]);
    assert!(out42.status.success());
    assert_ne!(
        fs::read_to_string(dir.path().join("s7/trace_1.csv")).unwrap(),
        fs::read_to_string(dir.path().join("s42/trace_1.csv")).unwrap(),
        "different seeds must give different chains"
    );
}

#[test]
fn chains_flag_runs_independent_seeded_chains() {
    let dir = tempfile::tempdir().unwrap();
    closed_config(dir.path());
    let out = run_in(
        dir.path(),
        &["fit", "--config", "config.json", "--out", "c", "--chains", "2"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let t1 = dir.path().join("c/trace_1.csv");
    let t2 = dir.path().join("c/trace_2.csv");
    assert!(t1.exists() && t2.exists());
    let s1 = first_line(&t1);
    let s2 = first_line(&t2);
    assert!(s1.ends_with("seed=42"), "{s1}");
    assert_ne!(s1, s2, "chains must carry distinct seeds");
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("c/metadata.json")).unwrap())
            .unwrap();
    assert_eq!(meta["chains"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("c/summaries_2.csv").exists());
}

#[test]
fn set_overrides_take_effect_and_move_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    closed_config(dir.path());
    let out = run_in(
        dir.path(),
        &[
            "fit",
            "--config",
            "config.json",
            "--out",
            "short",
            "--set",
            "sampler.iterations=900",
            "--set",
            "sampler.burn_in=100",
        ],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let base = run_in(dir.path(), &["fit", "--config", "config.json", "--out", "base"]);
    assert!(base.status.success());
    let short_rows = fs::read_to_string(dir.path().join("short/trace_1.csv")).unwrap().lines().count();
    let base_rows = fs::read_to_string(dir.path().join("base/trace_1.csv")).unwrap().lines().count();
    assert!(short_rows < base_rows, "override did not shorten the trace");
    assert_ne!(
        first_line(&dir.path().join("short/trace_1.csv")),
        first_line(&dir.path().join("base/trace_1.csv")),
        "a changed sampler setting must change the config hash"
    );
}

#[test]
fn open_missing_counts_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    open_sim_config(dir.path());
    write(
        dir.path(),
        "nocounts.json",
        &format!(
            r#"{{
  "model": "open",
  "seed": 3,
  "design": "design.csv",
  "histories": "h.csv",
  "truth": {OPEN_TRUTH}
}}"#
        ),
    );
    write(dir.path(), "h.csv", "history,count\n1000000-00,1\n");
    let out = run_in(dir.path(), &["fit", "--config", "nocounts.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("counts"), "{}", stderr_of(&out));
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    closed_config(dir.path());
    write(
        dir.path(),
        "typo.json",
        r#"{"model": "closed", "seed": 1, "design": "design.csv", "histories": "histories.csv", "iterations": 5}"#,
    );
    let out = run_in(dir.path(), &["fit", "--config", "typo.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("iterations"), "{}", stderr_of(&out));
}

#[test]
fn missing_data_path_is_reported_with_its_field() {
    let dir = tempfile::tempdir().unwrap();
    closed_config(dir.path());
    let out = run_in(
        dir.path(),
        &["fit", "--config", "config.json", "--set", "histories=\"gone.csv\""],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("histories") && err.contains("gone.csv"), "{err}");
}

#[test]
fn simulate_fit_gof_diagnose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    open_sim_config(dir.path());
    let sim = run_in(dir.path(), &["simulate", "--config", "sim.json"]);
    assert!(sim.status.success(), "{}", stderr_of(&sim));
    for name in ["histories.csv", "counts.csv", "truth.json"] {
        assert!(dir.path().join("simout").join(name).exists(), "{name} missing");
    }
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("simout/truth.json")).unwrap())
            .unwrap();
    assert_eq!(truth["truth"]["n_super"], 250);
    assert!(truth["detected"].as_u64().unwrap() > 0);

    open_fit_config(dir.path());
    let fit = run_in(dir.path(), &["fit", "--config", "fit.json"]);
    assert!(fit.status.success(), "{}", stderr_of(&fit));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fitout/metadata.json")).unwrap())
            .unwrap();
    // The generating truth rides along into the fit metadata for later scoring.
    assert_eq!(meta["truth"]["n_super"], 250);
    assert_eq!(meta["model"], "open");
    assert!(meta["decisions"]["priors"]["population_open"].is_string());
    assert!(dir.path().join("fitout/entry_1.csv").exists());

    let gof = run_in(dir.path(), &["gof", "--config", "fit.json", "--out", "gofout"]);
    assert!(gof.status.success(), "{}", stderr_of(&gof));
    let loglik = fs::read_to_string(dir.path().join("gofout/gof_loglik.csv")).unwrap();
    // provenance line + header + one row per draw
    assert_eq!(loglik.lines().count(), 2 + 10, "{loglik}");
    assert!(loglik.lines().nth(1).unwrap().starts_with("iteration,real_loglik,sim_loglik"));
    let durations = fs::read_to_string(dir.path().join("gofout/durations.csv")).unwrap();
    // One row per posterior draw per behaviour group under the modal G.
    let duration_rows = durations.lines().count() - 2;
    assert!(duration_rows >= 10 && duration_rows % 10 == 0, "{durations}");
    for name in ["gof_first_caught.csv", "gof_unmarked.csv"] {
        let text = fs::read_to_string(dir.path().join("gofout").join(name)).unwrap();
        assert!(text.lines().count() > 10, "{name} too short");
        assert!(text.lines().any(|l| l.starts_with("real,")), "{name} lacks real rows");
    }

    let diag = run_in(dir.path(), &["diagnose", "--config", "fit.json", "--out", "diagout"]);
    assert!(diag.status.success(), "{}", stderr_of(&diag));
    let geweke = fs::read_to_string(dir.path().join("diagout/geweke.csv")).unwrap();
    assert!(geweke.lines().nth(1).unwrap().starts_with("quantity,status,z"));
    // All ten monitored scalars, each resolved to a status.
    assert_eq!(geweke.lines().count(), 2 + 10, "{geweke}");
    for name in ["model_probabilities.csv", "summaries.csv", "entry.csv"] {
        assert!(dir.path().join("diagout").join(name).exists(), "{name} missing");
    }
    let summaries = fs::read_to_string(dir.path().join("diagout/summaries.csv")).unwrap();
    assert!(summaries.contains("\nn,,"), "unconditional n row missing: {summaries}");
    assert!(summaries.contains(",m="), "modal-M conditional rows missing");
    assert!(summaries.contains(",g="), "modal-G conditional rows missing");
}

#[test]
fn oracle_rejects_field_scale_instances_with_a_budget_error() {
    let dir = tempfile::tempdir().unwrap();
    // A 38-day design is far beyond what latent enumeration can visit.
    let mut design = String::from("day,type,effort,location\n");
    for day in 1..=38 {
        if day % 2 == 1 {
            design.push_str(&format!("{day},C,1.0,1\n"));
        } else {
            design.push_str(&format!("{day},R,,\n"));
        }
    }
    write(dir.path(), "big_design.csv", &design);
    let mut histories = String::from("history,count\n");
    let mut row: String = (1..=38).map(|d| if d == 1 { '1' } else { '0' }).collect();
    row.push_str(",2\n");
    histories.push_str(&row);
    write(dir.path(), "big_hist.csv", &histories);
    let mut counts = String::from("day,count\n");
    for day in 1..=38 {
        if day % 2 == 1 {
            counts.push_str(&format!("{day},\n"));
        } else {
            counts.push_str(&format!("{day},3\n"));
        }
    }
    write(dir.path(), "big_counts.csv", &counts);
    write(
        dir.path(),
        "big.json",
        r#"{"model": "open", "seed": 1, "design": "big_design.csv", "histories": "big_hist.csv", "counts": "big_counts.csv"}"#,
    );
    let out = run_in(dir.path(), &["oracle", "--config", "big.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("budget"), "{}", stderr_of(&out));
}

#[test]
fn oracle_answers_tiny_closed_instances() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "design.csv", "day,type,effort,location\n1,C,1.0,1\n2,C,1.0,1\n");
    write(dir.path(), "histories.csv", "history,count\n10,1\n");
    write(
        dir.path(),
        "tiny.json",
        r#"{
  "model": "closed",
  "seed": 5,
  "design": "design.csv",
  "histories": "histories.csv",
  "priors": {"n_max_factor": 8, "g_max_closed": 2},
  "oracle": {"rejection_draws": 5000}
}"#,
    );
    let out = run_in(dir.path(), &["oracle", "--config", "tiny.json"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let posterior = fs::read_to_string(dir.path().join("out/oracle_posterior.csv")).unwrap();
    assert!(posterior.lines().nth(1).unwrap().starts_with("g,n,probability"));
    let mass: f64 = posterior
        .lines()
        .skip(2)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((mass - 1.0).abs() < 1e-9, "posterior mass {mass}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/oracle.json")).unwrap())
            .unwrap();
    assert!(report["accepted"].as_u64().unwrap() > 0);
}

#[test]
fn simulate_requires_matching_truth_and_positive_population() {
    let dir = tempfile::tempdir().unwrap();
    open_sim_config(dir.path());
    let zero = run_in(
        dir.path(),
        &["simulate", "--config", "sim.json", "--set", "truth.n_super=0"],
    );
    assert_eq!(zero.status.code(), Some(2), "{}", stderr_of(&zero));
    assert!(stderr_of(&zero).contains("n_super"), "{}", stderr_of(&zero));

    write(
        dir.path(),
        "mismatch.json",
        r#"{
  "model": "closed",
  "seed": 2,
  "design": "design.csv",
  "truth": {"n_pop": 20, "shares": [1.0], "capture_probs": [0.4]}
}"#,
    );
    let mismatch = run_in(dir.path(), &["simulate", "--config", "mismatch.json"]);
    assert_eq!(mismatch.status.code(), Some(2), "{}", stderr_of(&mismatch));
}

#[test]
fn gof_is_an_open_model_check() {
    let dir = tempfile::tempdir().unwrap();
    closed_config(dir.path());
    let out = run_in(dir.path(), &["gof", "--config", "config.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("open"), "{}", stderr_of(&out));
}
