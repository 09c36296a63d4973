//! Chain trace records and their on-disk formats.
//!
//! Traces are CSV with one row per retained iteration. Variable-length
//! parameter blocks (one entry per mixture component) live inside single
//! cells as semicolon-joined lists, so the column set is fixed while the
//! model dimension varies row to row. Floats are written in Rust's shortest
//! round-trip form, so reading a trace back reproduces every value
//! bit-exactly. The first line is a `#` comment carrying the configuration
//! hash and seed that produced the run.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace file is missing the `# config_hash=... seed=...` metadata line")]
    MissingMeta,
    #[error("trace header mismatch: expected `{expected}`, found `{found}`")]
    BadHeader { expected: &'static str, found: String },
    #[error("trace line {line}: {msg}")]
    BadLine { line: usize, msg: String },
}

/// One retained state of an open-model chain.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenRecord {
    pub iteration: u64,
    pub m: usize,
    pub g: usize,
    pub n_super: u64,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub shares: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub day_slope: f64,
    pub age_slope: f64,
    pub cap_intercept: f64,
    pub cap_effort: f64,
    pub cap_loc2: f64,
    pub cap_loc3: f64,
    pub resight_prob: f64,
    pub log_likelihood: f64,
    pub log_prior: f64,
}

/// One retained state of a closed-model chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedRecord {
    pub iteration: u64,
    pub g: usize,
    pub n_pop: u64,
    pub shares: Vec<f64>,
    pub capture_probs: Vec<f64>,
    pub log_likelihood: f64,
    pub log_prior: f64,
}

fn join_floats(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        let _ = write!(out, "{v}");
    }
    out
}

fn parse_floats(cell: &str, line: usize) -> Result<Vec<f64>, TraceError> {
    cell.split(';')
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| TraceError::BadLine {
                line,
                msg: format!("bad float `{tok}`"),
            })
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, TraceError> {
    tok.parse().map_err(|_| TraceError::BadLine {
        line,
        msg: format!("bad {what} `{tok}`"),
    })
}

/// Row-level serialization shared by both record flavours.
pub trait TraceRecord: Sized {
    const HEADER: &'static str;
    fn to_csv_line(&self) -> String;
    fn from_csv_line(fields: &[&str], line: usize) -> Result<Self, TraceError>;
    fn iteration(&self) -> u64;
}

impl TraceRecord for OpenRecord {
    const HEADER: &'static str = "iteration,m,g,n,weights,means,sds,shares,intercepts,day_slope,age_slope,cap_intercept,cap_effort,cap_loc2,cap_loc3,resight_prob,log_likelihood,log_prior";

    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.m,
            self.g,
            self.n_super,
            join_floats(&self.weights),
            join_floats(&self.means),
            join_floats(&self.sds),
            join_floats(&self.shares),
            join_floats(&self.intercepts),
            self.day_slope,
            self.age_slope,
            self.cap_intercept,
            self.cap_effort,
            self.cap_loc2,
            self.cap_loc3,
            self.resight_prob,
            self.log_likelihood,
            self.log_prior,
        )
    }

    fn from_csv_line(fields: &[&str], line: usize) -> Result<Self, TraceError> {
        if fields.len() != 18 {
            return Err(TraceError::BadLine {
                line,
                msg: format!("expected 18 fields, found {}", fields.len()),
            });
        }
        let rec = OpenRecord {
            iteration: parse_scalar(fields[0], line, "iteration")?,
            m: parse_scalar(fields[1], line, "component count")?,
            g: parse_scalar(fields[2], line, "group count")?,
            n_super: parse_scalar(fields[3], line, "population size")?,
            weights: parse_floats(fields[4], line)?,
            means: parse_floats(fields[5], line)?,
            sds: parse_floats(fields[6], line)?,
            shares: parse_floats(fields[7], line)?,
            intercepts: parse_floats(fields[8], line)?,
            day_slope: parse_scalar(fields[9], line, "float")?,
            age_slope: parse_scalar(fields[10], line, "float")?,
            cap_intercept: parse_scalar(fields[11], line, "float")?,
            cap_effort: parse_scalar(fields[12], line, "float")?,
            cap_loc2: parse_scalar(fields[13], line, "float")?,
            cap_loc3: parse_scalar(fields[14], line, "float")?,
            resight_prob: parse_scalar(fields[15], line, "float")?,
            log_likelihood: parse_scalar(fields[16], line, "float")?,
            log_prior: parse_scalar(fields[17], line, "float")?,
        };
        if rec.weights.len() != rec.m || rec.means.len() != rec.m || rec.sds.len() != rec.m {
            return Err(TraceError::BadLine {
                line,
                msg: format!("arrival blocks disagree with m={}", rec.m),
            });
        }
        if rec.shares.len() != rec.g || rec.intercepts.len() != rec.g {
            return Err(TraceError::BadLine {
                line,
                msg: format!("behaviour blocks disagree with g={}", rec.g),
            });
        }
        Ok(rec)
    }

    fn iteration(&self) -> u64 {
        self.iteration
    }
}

impl TraceRecord for ClosedRecord {
    const HEADER: &'static str = "iteration,g,n,shares,capture_probs,log_likelihood,log_prior";

    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.g,
            self.n_pop,
            join_floats(&self.shares),
            join_floats(&self.capture_probs),
            self.log_likelihood,
            self.log_prior,
        )
    }

    fn from_csv_line(fields: &[&str], line: usize) -> Result<Self, TraceError> {
        if fields.len() != 7 {
            return Err(TraceError::BadLine {
                line,
                msg: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let rec = ClosedRecord {
            iteration: parse_scalar(fields[0], line, "iteration")?,
            g: parse_scalar(fields[1], line, "group count")?,
            n_pop: parse_scalar(fields[2], line, "population size")?,
            shares: parse_floats(fields[3], line)?,
            capture_probs: parse_floats(fields[4], line)?,
            log_likelihood: parse_scalar(fields[5], line, "float")?,
            log_prior: parse_scalar(fields[6], line, "float")?,
        };
        if rec.shares.len() != rec.g || rec.capture_probs.len() != rec.g {
            return Err(TraceError::BadLine {
                line,
                msg: format!("group blocks disagree with g={}", rec.g),
            });
        }
        Ok(rec)
    }

    fn iteration(&self) -> u64 {
        self.iteration
    }
}

/// A full retained chain plus the provenance needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace<R> {
    pub config_hash: String,
    pub seed: u64,
    pub records: Vec<R>,
}

impl<R: TraceRecord> ChainTrace<R> {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# config_hash={} seed={}\n{}\n", self.config_hash, self.seed, R::HEADER);
        for rec in &self.records {
            out.push_str(&rec.to_csv_line());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines.next().ok_or(TraceError::MissingMeta)?;
        let meta = meta.strip_prefix("# ").ok_or(TraceError::MissingMeta)?;
        let mut config_hash = None;
        let mut seed = None;
        for tok in meta.split_whitespace() {
            if let Some(v) = tok.strip_prefix("config_hash=") {
                config_hash = Some(v.to_string());
            } else if let Some(v) = tok.strip_prefix("seed=") {
                seed = v.parse::<u64>().ok();
            }
        }
        let (config_hash, seed) = match (config_hash, seed) {
            (Some(h), Some(s)) => (h, s),
            _ => return Err(TraceError::MissingMeta),
        };
        let (_, header) = lines.next().ok_or(TraceError::BadHeader {
            expected: R::HEADER,
            found: String::new(),
        })?;
        if header != R::HEADER {
            return Err(TraceError::BadHeader {
                expected: R::HEADER,
                found: header.to_string(),
            });
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            records.push(R::from_csv_line(&fields, idx + 1)?);
        }
        Ok(ChainTrace { config_hash, seed, records })
    }
}

/// Proposal/acceptance tallies for one move type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Per-move acceptance summary emitted next to every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub config_hash: String,
    pub seed: u64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub moves: BTreeMap<String, MoveStats>,
}
