//! Reading and writing load traces as `timestamp,kw` CSV files.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::model::LoadTrace;

/// Slot duration used when a file has a single row and no spacing to infer.
pub const DEFAULT_SLOT_HOURS: f64 = 0.5;

/// Relative tolerance on the spacing between consecutive timestamps.
const SPACING_TOLERANCE: f64 = 1e-6;

const NAIVE_FORMATS: [&str; 4] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"];

/// Parses a timestamp to seconds since the Unix epoch. Accepts plain epoch
/// seconds, RFC 3339, and naive `YYYY-MM-DD[ T]HH:MM[:SS]` date-times
/// (interpreted as UTC).
pub fn parse_timestamp(text: &str) -> Option<f64> {
    let text = text.trim();
    if let Ok(secs) = text.parse::<f64>() {
        return secs.is_finite().then_some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    NAIVE_FORMATS.iter().find_map(|fmt| {
        NaiveDateTime::parse_from_str(text, fmt)
            .ok()
            .map(|dt| dt.and_utc().timestamp() as f64 + dt.and_utc().timestamp_subsec_nanos() as f64 * 1e-9)
    })
}

/// Reads a trace from CSV text with header `timestamp,kw`.
///
/// The slot duration is inferred from the timestamps, which must be evenly
/// spaced. With `target_slot_hours`, consecutive samples are averaged into
/// slots of that length; it must be a whole multiple of the input spacing,
/// and a trailing incomplete slot is dropped.
pub fn read_trace_csv<R: Read>(reader: R, target_slot_hours: Option<f64>) -> Result<LoadTrace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header_line = 1;
    let headers = rdr.headers().map_err(|e| Error::ParseError {
        line: header_line,
        message: e.to_string(),
    })?;
    let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != ["timestamp", "kw"] {
        return Err(Error::ParseError {
            line: header_line,
            message: format!("expected header 'timestamp,kw', found '{}'", names.join(",")),
        });
    }

    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::ParseError {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::ParseError { line, message };
        let stamp = parse_timestamp(&record[0]).ok_or_else(|| bad(format!("unreadable timestamp '{}'", &record[0])))?;
        let kw: f64 = record[1]
            .parse()
            .map_err(|_| bad(format!("unreadable power value '{}'", &record[1])))?;
        if !kw.is_finite() || kw < 0.0 {
            return Err(bad(format!("power value {kw} must be finite and nonnegative")));
        }
        if let Some(&prev) = stamps.last() {
            let gap: f64 = stamp - prev;
            let expected = match stamps.len() {
                1 => gap,
                _ => stamps[1] - stamps[0],
            };
            if !(gap > 0.0) || (gap - expected).abs() > SPACING_TOLERANCE * expected.abs() {
                return Err(Error::NonUniformSpacing {
                    line,
                    expected_s: expected,
                    found_s: gap,
                });
            }
        }
        stamps.push(stamp);
        values.push(kw);
    }
    if values.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let slot_hours = if stamps.len() > 1 {
        (stamps[1] - stamps[0]) / 3600.0
    } else {
        DEFAULT_SLOT_HOURS
    };
    let trace = LoadTrace::new(values, slot_hours)?;
    match target_slot_hours {
        Some(target) => resample(&trace, target),
        None => Ok(trace),
    }
}

/// Reads a trace file; see [`read_trace_csv`].
pub fn ingest_csv(path: &Path, target_slot_hours: Option<f64>) -> Result<LoadTrace> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_trace_csv(std::io::BufReader::new(file), target_slot_hours)
}

/// Averages consecutive slots into slots of `target_slot_hours`.
pub fn resample(trace: &LoadTrace, target_slot_hours: f64) -> Result<LoadTrace> {
    let ratio = target_slot_hours / trace.slot_hours();
    let factor = ratio.round();
    if !(factor >= 1.0) || (ratio - factor).abs() > 1e-9 * ratio {
        return Err(Error::InvalidParameter(format!(
            "target slot of {target_slot_hours} h is not a whole multiple of the {} h input spacing",
            trace.slot_hours()
        )));
    }
    let factor = factor as usize;
    let values: Vec<f64> = trace
        .values()
        .chunks_exact(factor)
        .map(|c| c.iter().sum::<f64>() / factor as f64)
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyTrace);
    }
    LoadTrace::new(values, target_slot_hours)
}

/// First timestamp written by [`write_trace_csv`].
pub fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2000, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

/// Writes `timestamp,kw` rows starting at `start`.
pub fn write_trace_csv<W: Write>(trace: &LoadTrace, start: NaiveDateTime, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "kw"])?;
    let step_ms = (trace.slot_hours() * 3_600_000.0).round() as i64;
    for (i, v) in trace.values().iter().enumerate() {
        let at = start + chrono::Duration::milliseconds(step_ms * i as i64);
        w.write_record([at.format("%Y-%m-%dT%H:%M:%S%.f").to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
