//! Study design and observation ingestion.
//!
//! A study is described by two or three small CSV files:
//!
//! * a *design* file (`day,type,effort,location`) giving each day's occasion
//!   type — `C`apture, `R`esight, or `N`one — with trapping effort and
//!   location recorded only on capture days;
//! * a *histories* file (`history,count`) with one row per distinct
//!   encounter history over the alphabet `0` (missed), `1` (caught),
//!   `2` (resighted), `-` (no occasion that day), and its multiplicity;
//! * an optional *counts* file (`day,count`) with the number of unmarked
//!   animals tallied on each resight day, blank elsewhere.
//!
//! Loading validates every cross-file constraint (alphabet versus occasion
//! type, missingness pattern, resights only after first capture) so the
//! model code can assume well-formed inputs.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file} line {line}: {msg}")]
    Parse {
        file: &'static str,
        line: usize,
        msg: String,
    },
    #[error("{file} contains no data rows")]
    Empty { file: &'static str },
    #[error("design line {line}: expected day {expected}, found {found}")]
    NonContiguousDay {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("design day {day}: effort and location are only defined on capture days")]
    CovariateOnNonCapture { day: usize },
    #[error("design day {day}: capture day is missing {field}")]
    MissingCovariate { day: usize, field: &'static str },
    #[error("design day {day}: effort must be finite and non-negative, got {value}")]
    BadEffort { day: usize, value: f64 },
    #[error("design day {day}: unknown location code {code} (expected 1, 2, or 3)")]
    BadLocation { day: usize, code: String },
    #[error("histories line {line}: history has {found} entries, design has {expected} days")]
    RowLength {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("histories line {line}, day {day}: invalid symbol {symbol:?}")]
    BadSymbol {
        line: usize,
        day: usize,
        symbol: char,
    },
    #[error("histories line {line}, day {day}: '1' recorded on a non-capture day")]
    CaptureOnWrongDay { line: usize, day: usize },
    #[error("histories line {line}, day {day}: '2' recorded on a non-resight day")]
    ResightOnWrongDay { line: usize, day: usize },
    #[error("histories line {line}, day {day}: entry must be '-' exactly when the day has no occasion")]
    MissingnessMismatch { line: usize, day: usize },
    #[error("histories line {line}, day {day}: resight precedes the first capture")]
    ResightBeforeCapture { line: usize, day: usize },
    #[error("histories line {line}: history contains no capture")]
    NoCapture { line: usize },
    #[error("histories line {line}: count must be a positive integer, got {value:?}")]
    BadMultiplicity { line: usize, value: String },
    #[error("counts file has {found} rows, design has {expected} days")]
    CountRows { expected: usize, found: usize },
    #[error("counts day {day}: count given on a non-resight day")]
    CountOnNonResight { day: usize },
    #[error("counts day {day}: resight day is missing its count")]
    MissingCount { day: usize },
    #[error("counts day {day}: count must be a non-negative integer, got {value:?}")]
    BadCount { day: usize, value: String },
    #[error("design has resight days but no counts file was given")]
    MissingCountsFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccasionType {
    Capture,
    Resight,
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occasion {
    pub kind: OccasionType,
    /// Trapping effort; present exactly on capture days.
    pub effort: Option<f64>,
    /// Location code 1–3; present exactly on capture days.
    pub location: Option<u8>,
}

/// Per-day occasion layout of a study, indexed by day `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyDesign {
    occasions: Vec<Occasion>,
}

impl StudyDesign {
    pub fn new(occasions: Vec<Occasion>) -> Result<Self, DataError> {
        if occasions.is_empty() {
            return Err(DataError::Empty { file: "design" });
        }
        for (i, occ) in occasions.iter().enumerate() {
            let day = i + 1;
            match occ.kind {
                OccasionType::Capture => {
                    let effort = occ
                        .effort
                        .ok_or(DataError::MissingCovariate { day, field: "effort" })?;
                    if !effort.is_finite() || effort < 0.0 {
                        return Err(DataError::BadEffort { day, value: effort });
                    }
                    let loc = occ
                        .location
                        .ok_or(DataError::MissingCovariate { day, field: "location" })?;
                    if !(1..=3).contains(&loc) {
                        return Err(DataError::BadLocation {
                            day,
                            code: loc.to_string(),
                        });
                    }
                }
                OccasionType::Resight | OccasionType::Null => {
                    if occ.effort.is_some() || occ.location.is_some() {
                        return Err(DataError::CovariateOnNonCapture { day });
                    }
                }
            }
        }
        Ok(StudyDesign { occasions })
    }

    /// Number of days in the study window.
    pub fn t(&self) -> usize {
        self.occasions.len()
    }

    /// Number of sampling occasions (capture plus resight days).
    pub fn k(&self) -> usize {
        self.occasions
            .iter()
            .filter(|o| o.kind != OccasionType::Null)
            .count()
    }

    pub fn kind(&self, day: usize) -> OccasionType {
        self.occasions[day - 1].kind
    }

    pub fn is_capture(&self, day: usize) -> bool {
        self.kind(day) == OccasionType::Capture
    }

    pub fn is_resight(&self, day: usize) -> bool {
        self.kind(day) == OccasionType::Resight
    }

    /// Effort on a capture day; panics if called elsewhere.
    pub fn effort(&self, day: usize) -> f64 {
        self.occasions[day - 1]
            .effort
            .expect("effort queried on a non-capture day")
    }

    /// Location code on a capture day; panics if called elsewhere.
    pub fn location(&self, day: usize) -> u8 {
        self.occasions[day - 1]
            .location
            .expect("location queried on a non-capture day")
    }

    pub fn capture_days(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.t()).filter(|&d| self.is_capture(d))
    }

    pub fn resight_days(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.t()).filter(|&d| self.is_resight(d))
    }
}

/// Parse a design file from its text content.
pub fn parse_design(text: &str) -> Result<StudyDesign, DataError> {
    let mut occasions = Vec::new();
    for (idx, raw) in data_lines(text, "design", "day,type,effort,location")? {
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(DataError::Parse {
                file: "design",
                line: idx,
                msg: format!("expected 4 fields `day,type,effort,location`, found {}", fields.len()),
            });
        }
        let day: usize = fields[0].parse().map_err(|_| DataError::Parse {
            file: "design",
            line: idx,
            msg: format!("invalid day {:?}", fields[0]),
        })?;
        let expected = occasions.len() + 1;
        if day != expected {
            return Err(DataError::NonContiguousDay {
                line: idx,
                expected,
                found: day,
            });
        }
        let kind = match fields[1] {
            "C" => OccasionType::Capture,
            "R" => OccasionType::Resight,
            "N" => OccasionType::Null,
            other => {
                return Err(DataError::Parse {
                    file: "design",
                    line: idx,
                    msg: format!("unknown occasion type {other:?} (expected C, R, or N)"),
                })
            }
        };
        let effort = if fields[2].is_empty() {
            None
        } else {
            Some(fields[2].parse::<f64>().map_err(|_| DataError::Parse {
                file: "design",
                line: idx,
                msg: format!("invalid effort {:?}", fields[2]),
            })?)
        };
        let location = if fields[3].is_empty() {
            None
        } else {
            Some(fields[3].parse::<u8>().map_err(|_| DataError::BadLocation {
                day,
                code: fields[3].to_string(),
            })?)
        };
        occasions.push(Occasion { kind, effort, location });
    }
    StudyDesign::new(occasions)
}

pub fn load_design(path: &Path) -> Result<StudyDesign, DataError> {
    parse_design(&read_to_string(path)?)
}

/// Canonical text form of a design; `parse_design` inverts it exactly.
pub fn serialize_design(design: &StudyDesign) -> String {
    let mut out = String::from("day,type,effort,location\n");
    for day in 1..=design.t() {
        let occ = &design.occasions[day - 1];
        let kind = match occ.kind {
            OccasionType::Capture => "C",
            OccasionType::Resight => "R",
            OccasionType::Null => "N",
        };
        let effort = occ.effort.map(|e| e.to_string()).unwrap_or_default();
        let location = occ.location.map(|l| l.to_string()).unwrap_or_default();
        writeln!(out, "{day},{kind},{effort},{location}").unwrap();
    }
    out
}

/// One day's entry in an encounter history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mark {
    Missed,
    Caught,
    Resighted,
}

/// A distinct encounter history with its multiplicity. Entries are `None`
/// exactly on days without an occasion.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub marks: Vec<Option<Mark>>,
    pub count: u64,
}

impl History {
    /// Day of first capture (1-based).
    pub fn first_capture(&self) -> usize {
        self.marks
            .iter()
            .position(|m| *m == Some(Mark::Caught))
            .expect("validated history has a capture")
            + 1
    }

    /// Day of last detection of either kind (1-based).
    pub fn last_detection(&self) -> usize {
        self.marks
            .iter()
            .rposition(|m| matches!(m, Some(Mark::Caught) | Some(Mark::Resighted)))
            .expect("validated history has a capture")
            + 1
    }

    pub fn encode(&self) -> String {
        self.marks
            .iter()
            .map(|m| match m {
                None => '-',
                Some(Mark::Missed) => '0',
                Some(Mark::Caught) => '1',
                Some(Mark::Resighted) => '2',
            })
            .collect()
    }
}

/// First-capture and last-detection days for each distinct history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryBounds {
    pub first_capture: Vec<usize>,
    pub last_detection: Vec<usize>,
}

pub fn history_bounds(data: &ObservedData) -> HistoryBounds {
    HistoryBounds {
        first_capture: data.histories.iter().map(History::first_capture).collect(),
        last_detection: data.histories.iter().map(History::last_detection).collect(),
    }
}

/// Validated observations: merged distinct histories plus per-day unmarked
/// counts (`Some` exactly on resight days).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    t: usize,
    pub histories: Vec<History>,
    pub counts: Vec<Option<u64>>,
}

impl ObservedData {
    /// Build and fully validate observations against a design. Rows with
    /// identical marks are merged by summing their counts, preserving
    /// first-seen order. `counts` must be `None` exactly off resight days.
    pub fn from_parts(
        design: &StudyDesign,
        rows: Vec<(Vec<Option<Mark>>, u64)>,
        counts: Vec<Option<u64>>,
    ) -> Result<Self, DataError> {
        let t = design.t();
        let mut histories: Vec<History> = Vec::new();
        for (line, (marks, count)) in rows.into_iter().enumerate() {
            let line = line + 1;
            if marks.len() != t {
                return Err(DataError::RowLength {
                    line,
                    expected: t,
                    found: marks.len(),
                });
            }
            if count == 0 {
                return Err(DataError::BadMultiplicity {
                    line,
                    value: "0".into(),
                });
            }
            let mut seen_capture = false;
            for day in 1..=t {
                let entry = marks[day - 1];
                match design.kind(day) {
                    OccasionType::Null => {
                        if entry.is_some() {
                            return Err(DataError::MissingnessMismatch { line, day });
                        }
                    }
                    kind => match entry {
                        None => return Err(DataError::MissingnessMismatch { line, day }),
                        Some(Mark::Caught) => {
                            if kind != OccasionType::Capture {
                                return Err(DataError::CaptureOnWrongDay { line, day });
                            }
                            seen_capture = true;
                        }
                        Some(Mark::Resighted) => {
                            if kind != OccasionType::Resight {
                                return Err(DataError::ResightOnWrongDay { line, day });
                            }
                            if !seen_capture {
                                return Err(DataError::ResightBeforeCapture { line, day });
                            }
                        }
                        Some(Mark::Missed) => {}
                    },
                }
            }
            if !seen_capture {
                return Err(DataError::NoCapture { line });
            }
            match histories.iter_mut().find(|h| h.marks == marks) {
                Some(existing) => existing.count += count,
                None => histories.push(History { marks, count }),
            }
        }
        if counts.len() != t {
            return Err(DataError::CountRows {
                expected: t,
                found: counts.len(),
            });
        }
        for day in 1..=t {
            match (design.is_resight(day), counts[day - 1]) {
                (true, None) => return Err(DataError::MissingCount { day }),
                (false, Some(_)) => return Err(DataError::CountOnNonResight { day }),
                _ => {}
            }
        }
        Ok(ObservedData { t, histories, counts })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Number of distinct histories.
    pub fn h(&self) -> usize {
        self.histories.len()
    }

    /// Total number of marked animals.
    pub fn d(&self) -> u64 {
        self.histories.iter().map(|h| h.count).sum()
    }

    pub fn count_on(&self, day: usize) -> Option<u64> {
        self.counts[day - 1]
    }
}

fn parse_history_row(
    design: &StudyDesign,
    line: usize,
    text: &str,
) -> Result<Vec<Option<Mark>>, DataError> {
    let t = design.t();
    let n = text.chars().count();
    if n != t {
        return Err(DataError::RowLength {
            line,
            expected: t,
            found: n,
        });
    }
    text.chars()
        .enumerate()
        .map(|(i, c)| match c {
            '0' => Ok(Some(Mark::Missed)),
            '1' => Ok(Some(Mark::Caught)),
            '2' => Ok(Some(Mark::Resighted)),
            '-' => Ok(None),
            other => Err(DataError::BadSymbol {
                line,
                day: i + 1,
                symbol: other,
            }),
        })
        .collect()
}

/// Parse and validate histories (and counts, when the design has resight
/// days) from file text.
pub fn parse_observations(
    design: &StudyDesign,
    histories_text: &str,
    counts_text: Option<&str>,
) -> Result<ObservedData, DataError> {
    let mut rows = Vec::new();
    for (idx, raw) in data_lines(histories_text, "histories", "history,count")? {
        let (hist, count) = raw.split_once(',').ok_or_else(|| DataError::Parse {
            file: "histories",
            line: idx,
            msg: "expected `history,count`".into(),
        })?;
        let count: u64 = match count.trim().parse::<i64>() {
            Ok(c) if c > 0 => c as u64,
            _ => {
                return Err(DataError::BadMultiplicity {
                    line: idx,
                    value: count.trim().to_string(),
                })
            }
        };
        rows.push((parse_history_row(design, idx, hist.trim())?, count));
    }
    if rows.is_empty() {
        return Err(DataError::Empty { file: "histories" });
    }

    let counts = match counts_text {
        Some(text) => {
            let mut counts: Vec<Option<u64>> = Vec::new();
            for (idx, raw) in data_lines(text, "counts", "day,count")? {
                let (day, value) = raw.split_once(',').ok_or_else(|| DataError::Parse {
                    file: "counts",
                    line: idx,
                    msg: "expected `day,count`".into(),
                })?;
                let day: usize = day.trim().parse().map_err(|_| DataError::Parse {
                    file: "counts",
                    line: idx,
                    msg: format!("invalid day {:?}", day.trim()),
                })?;
                if day != counts.len() + 1 {
                    return Err(DataError::NonContiguousDay {
                        line: idx,
                        expected: counts.len() + 1,
                        found: day,
                    });
                }
                let value = value.trim();
                if value.is_empty() {
                    counts.push(None);
                } else {
                    match value.parse::<i64>() {
                        Ok(v) if v >= 0 => counts.push(Some(v as u64)),
                        _ => {
                            return Err(DataError::BadCount {
                                day,
                                value: value.to_string(),
                            })
                        }
                    }
                }
            }
            counts
        }
        None => {
            if design.resight_days().next().is_some() {
                return Err(DataError::MissingCountsFile);
            }
            vec![None; design.t()]
        }
    };
    ObservedData::from_parts(design, rows, counts)
}

pub fn load_observations(
    design: &StudyDesign,
    histories_path: &Path,
    counts_path: Option<&Path>,
) -> Result<ObservedData, DataError> {
    let histories = read_to_string(histories_path)?;
    let counts = counts_path.map(read_to_string).transpose()?;
    parse_observations(design, &histories, counts.as_deref())
}

/// Canonical text forms of the histories and counts files.
pub fn serialize_observations(data: &ObservedData) -> (String, String) {
    let mut hist = String::from("history,count\n");
    for h in &data.histories {
        writeln!(hist, "{},{}", h.encode(), h.count).unwrap();
    }
    let mut counts = String::from("day,count\n");
    for day in 1..=data.t() {
        match data.count_on(day) {
            Some(v) => writeln!(counts, "{day},{v}").unwrap(),
            None => writeln!(counts, "{day},").unwrap(),
        }
    }
    (hist, counts)
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Non-empty, non-comment data lines with 1-based line numbers, after
/// checking the header row is the expected one. Lines starting with `#`
/// carry provenance (config hash, seed) and are skipped.
fn data_lines<'a>(
    text: &'a str,
    file: &'static str,
    header: &'static str,
) -> Result<Vec<(usize, &'a str)>, DataError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
    match lines.next() {
        Some((line, first)) if !first.trim().eq_ignore_ascii_case(header) => Err(DataError::Parse {
            file,
            line,
            msg: format!("expected header {header:?}, found {first:?}"),
        }),
        _ => Ok(lines.collect()),
    }
}
