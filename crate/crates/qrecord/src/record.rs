//! CSV files holding a disagreement curve.
//!
//! ```text
//! # units=dimensionless
//! t,probability
//! 0.0,0.5
//! 0.01,0.49998
//! ```
//!
//! The units line and the header are both optional on input; a missing units
//! tag means dimensionless time. Other `#` lines and blank lines are ignored.
//! Values are written in shortest round-trip form, so write-then-read is
//! bit-exact.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use qrecord_core::flipflop::{DisagreementCurve, TimeUnits};
use thiserror::Error;

pub const HEADER: &str = "t,probability";
const UNITS_TAG: &str = "units=";

#[derive(Debug, Error)]
pub enum RecordError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: time {t} does not exceed the previous time")]
    NonMonotone { line: usize, t: f64 },
    #[error("line {line}: probability {value} is outside [0, 1]")]
    OutOfRange { line: usize, value: f64 },
    #[error("the record has no data rows")]
    Empty,
}

pub type Result<T> = std::result::Result<T, RecordError>;

fn parse_error(line: usize, message: impl Into<String>) -> RecordError {
    RecordError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_units(line: usize, comment: &str) -> Result<Option<TimeUnits>> {
    let body = comment.trim_start_matches('#').trim();
    match body.strip_prefix(UNITS_TAG) {
        Some(tag) => tag
            .trim()
            .parse::<TimeUnits>()
            .map(Some)
            .map_err(|_| parse_error(line, format!("unknown units tag {:?}", tag.trim()))),
        None => Ok(None),
    }
}

fn parse_field(line: usize, name: &str, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error(line, format!("cannot parse {name} from {:?}", field.trim())))?;
    if !v.is_finite() {
        return Err(parse_error(line, format!("{name} is not finite")));
    }
    Ok(v)
}

/// Parses a record from any buffered reader.
pub fn read_record(reader: impl BufRead) -> Result<DisagreementCurve> {
    let mut units = None;
    let mut header_allowed = true;
    let mut times: Vec<f64> = Vec::new();
    let mut probs = Vec::new();
    for (idx, raw) in reader.lines().enumerate() {
        let line = idx + 1;
        let raw = raw?;
        let text = raw.trim();
        if text.is_empty() {
            continue;
        }
        if text.starts_with('#') {
            if let Some(u) = parse_units(line, text)? {
                if units.replace(u).is_some() {
                    return Err(parse_error(line, "duplicate units tag"));
                }
            }
            continue;
        }
        if header_allowed && text.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            let cols: Vec<&str> = text.split(',').map(str::trim).collect();
            if cols != ["t", "probability"] {
                return Err(parse_error(line, format!("expected header {HEADER:?}, found {text:?}")));
            }
            header_allowed = false;
            continue;
        }
        header_allowed = false;
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_error(line, format!("expected 2 fields, found {}", fields.len())));
        }
        let t = parse_field(line, "time", fields[0])?;
        let p = parse_field(line, "probability", fields[1])?;
        if times.last().is_some_and(|&prev| t <= prev) {
            return Err(RecordError::NonMonotone { line, t });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(RecordError::OutOfRange { line, value: p });
        }
        times.push(t);
        probs.push(p);
    }
    if times.is_empty() {
        return Err(RecordError::Empty);
    }
    let curve = DisagreementCurve::new(times, probs, units.unwrap_or(TimeUnits::Dimensionless))
        .expect("rows were validated while parsing");
    Ok(curve)
}

pub fn load_record_csv(path: impl AsRef<Path>) -> Result<DisagreementCurve> {
    read_record(BufReader::new(File::open(path)?))
}

pub fn write_record(curve: &DisagreementCurve, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "# {UNITS_TAG}{}", curve.units().as_str())?;
    writeln!(out, "{HEADER}")?;
    for (t, p) in curve.times().iter().zip(curve.probabilities()) {
        writeln!(out, "{t:?},{p:?}")?;
    }
    out.flush()
}

pub fn save_record_csv(curve: &DisagreementCurve, path: impl AsRef<Path>) -> io::Result<()> {
    write_record(curve, BufWriter::new(File::create(path)?))
}

/// Data and model side by side, `t,probability,fitted`, for plotting.
pub fn write_fitted(curve: &DisagreementCurve, fitted: &[f64], mut out: impl Write) -> io::Result<()> {
    assert_eq!(fitted.len(), curve.len(), "one fitted value per data point");
    writeln!(out, "# {UNITS_TAG}{}", curve.units().as_str())?;
    writeln!(out, "{HEADER},fitted")?;
    for ((t, p), f) in curve.times().iter().zip(curve.probabilities()).zip(fitted) {
        writeln!(out, "{t:?},{p:?},{f:?}")?;
    }
    out.flush()
}
