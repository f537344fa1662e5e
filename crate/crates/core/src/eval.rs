//! Outcome scoring for generated variations and table rendering.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Level;
use crate::jsonl;

pub const ARROW_EASIER: &str = "↓";
pub const ARROW_SIMILAR: &str = "∼";
pub const ARROW_HARDER: &str = "↑";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no outcome records to aggregate")]
    NoRecords,
    #[error("record {index}: outcome {stated:?} contradicts levels {original} -> {predicted}")]
    InconsistentOutcome { index: usize, stated: Outcome, original: Level, predicted: Level },
    #[error("record {index}: distance {distance} is not a cosine distance")]
    InvalidDistance { index: usize, distance: f64 },
    #[error("unknown report format {0:?} (expected csv or markdown)")]
    UnknownFormat(String),
    #[error("unknown group field {0:?} (expected strategy, gap, genre or level)")]
    UnknownField(String),
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Easier,
    Similar,
    Harder,
}

pub fn classify_outcome(original: Level, predicted: Level) -> Outcome {
    match predicted.cmp(&original) {
        Ordering::Less => Outcome::Easier,
        Ordering::Equal => Outcome::Similar,
        Ordering::Greater => Outcome::Harder,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub piece: String,
    pub variation: String,
    pub original_level: Level,
    pub predicted_level: Level,
    pub outcome: Outcome,
    pub distance: f64,
    pub genre: String,
    pub strategy: String,
    pub gap: u8,
}

impl OutcomeRecord {
    /// Fills in the outcome from the two levels.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        piece: &str,
        variation: &str,
        original_level: Level,
        predicted_level: Level,
        distance: f64,
        genre: &str,
        strategy: &str,
        gap: u8,
    ) -> OutcomeRecord {
        OutcomeRecord {
            piece: piece.to_string(),
            variation: variation.to_string(),
            original_level,
            predicted_level,
            outcome: classify_outcome(original_level, predicted_level),
            distance,
            genre: genre.to_string(),
            strategy: strategy.to_string(),
            gap,
        }
    }
}

pub fn parse_records(text: &str) -> Result<Vec<OutcomeRecord>, EvalError> {
    let records: Vec<OutcomeRecord> = jsonl::parse(text)?;
    for (index, r) in records.iter().enumerate() {
        check_record(index, r)?;
    }
    Ok(records)
}

fn check_record(index: usize, r: &OutcomeRecord) -> Result<(), EvalError> {
    if r.outcome != classify_outcome(r.original_level, r.predicted_level) {
        return Err(EvalError::InconsistentOutcome {
            index,
            stated: r.outcome,
            original: r.original_level,
            predicted: r.predicted_level,
        });
    }
    if !(0.0..=2.0).contains(&r.distance) {
        return Err(EvalError::InvalidDistance { index, distance: r.distance });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupField {
    Strategy,
    Gap,
    Genre,
    Level,
}

impl GroupField {
    pub fn name(self) -> &'static str {
        match self {
            GroupField::Strategy => "strategy",
            GroupField::Gap => "gap",
            GroupField::Genre => "genre",
            GroupField::Level => "level",
        }
    }
}

impl std::str::FromStr for GroupField {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<GroupField, EvalError> {
        match s {
            "strategy" => Ok(GroupField::Strategy),
            "gap" => Ok(GroupField::Gap),
            "genre" => Ok(GroupField::Genre),
            "level" => Ok(GroupField::Level),
            _ => Err(EvalError::UnknownField(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeyValue {
    Number(u8),
    Text(String),
}

impl std::fmt::Display for KeyValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KeyValue::Number(n) => write!(f, "{n}"),
            KeyValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// One value per grouping field, in the report's field order.
    pub key: Vec<KeyValue>,
    pub count: usize,
    /// Exact outcome counts: easier, similar, harder.
    pub counts: [usize; 3],
    /// Percentages in tenths of a percent; always sum to 1000.
    pub tenths: [u32; 3],
    pub mean_distance: f64,
}

impl ReportRow {
    pub fn percentages(&self) -> [f64; 3] {
        self.counts.map(|c| 100.0 * c as f64 / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub fields: Vec<GroupField>,
    pub rows: Vec<ReportRow>,
}

/// Groups records by `group_by` (deduplicated, in canonical field order).
/// Rows come out sorted by key; groups without records do not appear.
pub fn aggregate(records: &[OutcomeRecord], group_by: &[GroupField]) -> Result<Report, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut fields = group_by.to_vec();
    fields.sort();
    fields.dedup();
    let mut groups: BTreeMap<Vec<KeyValue>, ([usize; 3], Vec<f64>)> = BTreeMap::new();
    for (index, r) in records.iter().enumerate() {
        check_record(index, r)?;
        let key = fields.iter().map(|f| key_value(r, *f)).collect();
        let entry = groups.entry(key).or_default();
        entry.0[r.outcome as usize] += 1;
        entry.1.push(r.distance);
    }
    let rows = groups
        .into_iter()
        .map(|(key, (counts, mut distances))| {
            distances.sort_by(f64::total_cmp);
            let count = distances.len();
            ReportRow {
                key,
                count,
                counts,
                tenths: largest_remainder(&counts, 1000),
                mean_distance: distances.iter().sum::<f64>() / count as f64,
            }
        })
        .collect();
    Ok(Report { fields, rows })
}

fn key_value(r: &OutcomeRecord, field: GroupField) -> KeyValue {
    match field {
        GroupField::Strategy => KeyValue::Text(r.strategy.clone()),
        GroupField::Gap => KeyValue::Number(r.gap),
        GroupField::Genre => KeyValue::Text(r.genre.clone()),
        GroupField::Level => KeyValue::Number(r.original_level.get()),
    }
}

/// Apportions `total` units in proportion to `counts` so the parts sum to
/// `total` exactly; leftover units go to the largest remainders, earlier
/// entries first on ties.
fn largest_remainder(counts: &[usize; 3], total: u32) -> [u32; 3] {
    let n: usize = counts.iter().sum();
    let mut parts = [0u32; 3];
    let mut rems = [0usize; 3];
    for i in 0..3 {
        let scaled = counts[i] * total as usize;
        parts[i] = (scaled / n) as u32;
        rems[i] = scaled % n;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
    let short = total - parts.iter().sum::<u32>();
    for &i in order.iter().take(short as usize) {
        parts[i] += 1;
    }
    parts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Format, EvalError> {
        match s {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            _ => Err(EvalError::UnknownFormat(s.to_string())),
        }
    }
}

fn tenths_text(t: u32) -> String {
    format!("{}.{}", t / 10, t % 10)
}

impl Report {
    /// An empty report for `fields`; renders as a header only.
    pub fn empty(fields: &[GroupField]) -> Report {
        Report { fields: fields.to_vec(), rows: Vec::new() }
    }

    fn header(&self) -> Vec<&'static str> {
        let mut h: Vec<_> = self.fields.iter().map(|f| f.name()).collect();
        h.extend([ARROW_EASIER, ARROW_SIMILAR, ARROW_HARDER, "distance"]);
        h
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Markdown => self.to_markdown(),
        }
    }

    /// Percentages with one decimal and no sign; distances with three.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for row in &self.rows {
            let mut rec: Vec<String> = row.key.iter().map(ToString::to_string).collect();
            rec.extend(row.tenths.iter().map(|&t| tenths_text(t)));
            rec.push(format!("{:.3}", row.mean_distance));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    /// Table in the `71.8%` / `.283` style.
    pub fn to_markdown(&self) -> String {
        let header = self.header();
        let mut out = format!("| {} |\n|", header.join(" | "));
        for i in 0..header.len() {
            out.push_str(if i < self.fields.len() { "---|" } else { "---:|" });
        }
        out.push('\n');
        for row in &self.rows {
            out.push('|');
            for k in &row.key {
                let _ = write!(out, " {} |", k.to_string().replace('|', "\\|"));
            }
            for &t in &row.tenths {
                let _ = write!(out, " {}% |", tenths_text(t));
            }
            let d = format!("{:.3}", row.mean_distance);
            let _ = writeln!(out, " {} |", d.strip_prefix('0').unwrap_or(&d));
        }
        out
    }
}
