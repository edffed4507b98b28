//! File formats shared by the library and the command-line tool.

use std::io::Read;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::sigproc::{Signal, SignalError};

/// Pretty JSON with object keys in sorted order and a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    // serde_json::Value keeps keys in a BTreeMap, so a round trip sorts them.
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

#[derive(Debug, Error)]
pub enum SignalCsvError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// A signal read from a two-column `x,y` CSV, plus the x column as written.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSignal {
    pub signal: Signal,
    pub x_labels: Vec<String>,
}

const EPOCH: NaiveDate = match NaiveDate::from_ymd_opt(1970, 1, 1) {
    Some(d) => d,
    None => panic!("valid epoch"),
};

/// Parses an `x` cell: a number, or an ISO date (`YYYY-MM-DD`) mapped to
/// days since 1970-01-01.
pub fn parse_x(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<f64>() {
        return Some(v);
    }
    NaiveDate::parse_from_str(cell, "%Y-%m-%d")
        .ok()
        .map(|d| (d - EPOCH).num_days() as f64)
}

/// Inverse of the date branch of [`parse_x`].
pub fn date_from_days(days: f64) -> Option<NaiveDate> {
    EPOCH.checked_add_signed(chrono::Duration::days(days.floor() as i64))
}

/// Reads `x,y` rows; a header row is required.
pub fn read_signal_csv<R: Read>(reader: R) -> Result<LabeledSignal, SignalCsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut x_labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| SignalCsvError::Malformed { line, reason: e.to_string() })?;
        if rec.len() != 2 {
            return Err(SignalCsvError::Malformed { line, reason: format!("expected 2 columns, got {}", rec.len()) });
        }
        let x = parse_x(&rec[0])
            .ok_or_else(|| SignalCsvError::Malformed { line, reason: format!("bad x value {:?}", &rec[0]) })?;
        let y = rec[1]
            .parse::<f64>()
            .map_err(|_| SignalCsvError::Malformed { line, reason: format!("bad y value {:?}", &rec[1]) })?;
        xs.push(x);
        ys.push(y);
        x_labels.push(rec[0].to_string());
    }
    Ok(LabeledSignal { signal: Signal::new(xs, ys)?, x_labels })
}

pub fn write_signal_csv(signal: &Signal) -> String {
    let mut out = String::from("x,y\n");
    for (x, y) in signal.xs().iter().zip(signal.ys()) {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}
