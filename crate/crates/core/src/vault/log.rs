//! Append-only intrusion log, one record per line:
//! `<RFC 3339 UTC timestamp> | <layer> | <escaped password> | <insertion_ms>`.
//!
//! In the password field `\`, `|` and control characters are backslash
//! escaped (`\\`, `\|`, `\n`, `\r`, `\t`, otherwise `\u{hex}`).

use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};
use crate::guard::AttemptRecord;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntrusionLog {
    path: PathBuf,
}

impl IntrusionLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, records: &[AttemptRecord]) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let text: String = records.iter().map(format_record).collect();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(text.as_bytes())
            .and_then(|()| file.sync_data())
            .map_err(|e| Error::io(&self.path, e))
    }

    /// All records in insertion order; a missing file is an empty log.
    pub fn read(&self) -> Result<Vec<AttemptRecord>> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(text) => text,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        parse_log(&text)
    }
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Nanos, true)
}

pub fn parse_timestamp(text: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp {text:?}: {e}"))
}

pub fn escape_field(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => out.push_str(&format!("\\u{{{:x}}}", u32::from(c))),
            c => out.push(c),
        }
    }
    out
}

fn unescape_field(text: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('|') => out.push('|'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('t') => out.push('\t'),
            Some('u') => {
                if chars.next() != Some('{') {
                    return Err("expected `{` after \\u".into());
                }
                let hex: String = chars.by_ref().take_while(|&c| c != '}').collect();
                let ch = u32::from_str_radix(&hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| format!("invalid \\u{{{hex}}} escape"))?;
                out.push(ch);
            }
            Some(other) => return Err(format!("invalid escape \\{other}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

pub fn format_record(record: &AttemptRecord) -> String {
    format!(
        "{} | {} | {} | {}\n",
        format_timestamp(&record.timestamp),
        record.failed_layer,
        escape_field(&record.attempted_password),
        record.insertion_ms
    )
}

/// Splits on `|` not preceded by an escaping backslash.
fn split_fields(line: &str) -> Vec<&str> {
    let mut fields = Vec::with_capacity(4);
    let mut start = 0;
    let mut escaped = false;
    for (i, b) in line.bytes().enumerate() {
        match b {
            _ if escaped => escaped = false,
            b'\\' => escaped = true,
            b'|' => {
                fields.push(&line[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    fields.push(&line[start..]);
    fields
}

pub fn parse_record(line: &str) -> std::result::Result<AttemptRecord, String> {
    let fields = split_fields(line);
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let trim = |f: &'_ str, first: bool, last: bool| -> std::result::Result<String, String> {
        let f = if first { Some(f) } else { f.strip_prefix(' ') };
        let f = f.and_then(|f| if last { Some(f) } else { f.strip_suffix(' ') });
        f.map(str::to_string)
            .ok_or_else(|| "fields must be separated by ` | `".to_string())
    };
    let timestamp = parse_timestamp(&trim(fields[0], true, false)?)?;
    let failed_layer = trim(fields[1], false, false)?.parse()?;
    let attempted_password = unescape_field(&trim(fields[2], false, false)?)?;
    let ms = trim(fields[3], false, true)?;
    let insertion_ms = ms.parse().map_err(|e| format!("bad insertion_ms {ms:?}: {e}"))?;
    Ok(AttemptRecord {
        timestamp,
        failed_layer,
        attempted_password,
        insertion_ms,
    })
}

pub fn parse_log(text: &str) -> Result<Vec<AttemptRecord>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| parse_record(line).map_err(|reason| Error::MalformedLogLine { line: i + 1, reason }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::Layer;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn record(pw: &str, secs: i64) -> AttemptRecord {
        AttemptRecord {
            timestamp: Utc.timestamp_opt(1_700_000_000 + secs, 123_456_789).unwrap(),
            failed_layer: Layer::Ann,
            attempted_password: pw.to_string(),
            insertion_ms: 812,
        }
    }

    #[test]
    fn line_format() {
        let line = format_record(&record("a|b\\c\n", 0));
        assert_eq!(line, "2023-11-14T22:13:20.123456789Z | ann | a\\|b\\\\c\\n | 812\n");
        assert_eq!(parse_record(line.trim_end()).unwrap(), record("a|b\\c\n", 0));
    }

    #[test]
    fn append_and_read_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let log = IntrusionLog::new(dir.path().join("intrusions.log"));
        assert!(log.read().unwrap().is_empty());
        log.append(&[record("one", 0)]).unwrap();
        log.append(&[record("two", 1), record("three", 2)]).unwrap();
        let records = log.read().unwrap();
        let names: Vec<_> = records.iter().map(|r| r.attempted_password.as_str()).collect();
        assert_eq!(names, ["one", "two", "three"]);
        assert!(records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn invalid_escape_reports_line() {
        let good = format_record(&record("ok", 0));
        let text = format!("{good}{good}2023-11-14T22:13:20Z | ann | bad\\q | 5\n");
        match parse_log(&text) {
            Err(Error::MalformedLogLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_record("2023-11-14T22:13:20Z | ann | x | ").is_err());
        assert!(parse_record("2023-11-14T22:13:20Z | seize | x | 5").is_err());
        assert!(parse_record("garbage").is_err());
    }

    proptest! {
        #[test]
        fn any_password_round_trips(pw in "\\PC*|[\\x00-\\x1f|\\\\ ]{0,12}", ms in any::<u64>()) {
            let mut r = record(&pw, 5);
            r.insertion_ms = ms;
            let line = format_record(&r);
            prop_assert_eq!(line.matches('\n').count(), 1);
            prop_assert_eq!(parse_record(line.strip_suffix('\n').unwrap()).unwrap(), r);
        }
    }
}
