//! CSV event logs, ground-truth manifests, score dumps and JSON artifacts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use cohortdef_core::{EventLog, EventLogBuilder, PatientScore, Timestamp};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_HEADER: [&str; 4] = ["patient_id", "activity", "dbc", "timestamp"];

/// Ground-truth membership of one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub group_name: String,
    pub members: Vec<String>,
}

/// Accepts `YYYY-MM-DDTHH:MM:SS[.fff]`, the same with a space separator,
/// RFC 3339 with an offset (normalized to UTC) and plain dates (midnight).
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if let Some(t) = parse_fixed(s) {
        return Some(t);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// Fast path for the exact `YYYY-MM-DDTHH:MM:SS` shape written by
/// [`write_log`].
fn parse_fixed(s: &str) -> Option<Timestamp> {
    let b = s.as_bytes();
    if b.len() != 19 || b[4] != b'-' || b[7] != b'-' || b[10] != b'T' || b[13] != b':' || b[16] != b':' {
        return None;
    }
    let num = |r: std::ops::Range<usize>| -> Option<u32> {
        b[r].iter().try_fold(0u32, |acc, &c| {
            c.is_ascii_digit().then(|| acc * 10 + (c - b'0') as u32)
        })
    };
    NaiveDate::from_ymd_opt(num(0..4)? as i32, num(5..7)?, num(8..10)?)?
        .and_hms_opt(num(11..13)?, num(14..16)?, num(17..19)?)
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.format("%Y-%m-%dT%H:%M:%S%.f").to_string()
}

/// Reads a header-bearing CSV log. Errors carry the 1-based file line.
pub fn load_log<R: Read>(source: R) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header = reader.headers().map_err(|e| Error::Csv {
        line: 1,
        reason: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.is_empty() || names == [""] {
        return Err(Error::Core(cohortdef_core::Error::EmptyLog));
    }
    if names != LOG_HEADER {
        return Err(Error::Csv {
            line: 1,
            reason: format!("expected header `{}`, found `{}`", LOG_HEADER.join(","), names.join(",")),
        });
    }
    let mut builder = EventLogBuilder::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(Error::Csv {
                    line,
                    reason: e.to_string(),
                })
            }
        }
        let line = record.position().map_or(line, |p| p.line());
        if record.len() != 4 {
            return Err(Error::Csv {
                line,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let timestamp = parse_timestamp(&record[3]).ok_or_else(|| Error::Csv {
            line,
            reason: format!("unparseable timestamp `{}`", &record[3]),
        })?;
        builder
            .push(&record[0], &record[1], &record[2], timestamp)
            .map_err(|e| match e {
                cohortdef_core::Error::InvalidRecord { reason, .. } => Error::Csv { line, reason },
                other => Error::Core(other),
            })?;
    }
    Ok(builder.build()?)
}

pub fn load_log_path(path: impl AsRef<Path>) -> Result<EventLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_log(BufReader::with_capacity(1 << 20, file))
}

/// Writes a log in trace order, one event per row.
pub fn write_log<W: Write>(sink: W, log: &EventLog) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Input(format!("writing log: {e}"));
    writer.write_record(LOG_HEADER).map_err(csv_err)?;
    for r in log.records() {
        writer
            .write_record([r.patient_id, r.activity, r.dbc, &format_timestamp(&r.timestamp)])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io("<log>", e))?;
    Ok(())
}

pub fn write_log_path(path: impl AsRef<Path>, log: &EventLog) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_log(BufWriter::with_capacity(1 << 20, file), log)
}

/// Dump of `patient_id,activity_score,dbc_score,member` rows.
pub fn write_scores<W: Write>(sink: W, scores: &[PatientScore], alpha_f: u32, alpha_d: u32) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Input(format!("writing scores: {e}"));
    writer
        .write_record(["patient_id", "activity_score", "dbc_score", "member"])
        .map_err(csv_err)?;
    for s in scores {
        let member = if s.within(alpha_f, alpha_d) { "1" } else { "0" };
        writer
            .write_record([
                s.patient_id.as_str(),
                &s.activity_score.to_string(),
                &s.dbc_score.to_string(),
                member,
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io("<scores>", e))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::json(path.display().to_string(), e))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json("serializing", e))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a list of patient ids from a manifest object, a JSON array of
/// strings, or a plain text file with one id per line.
pub fn read_id_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        Ok(m.members)
    } else if trimmed.starts_with('[') {
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    } else {
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect())
    }
}
