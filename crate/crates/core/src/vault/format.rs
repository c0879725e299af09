//! Line-oriented `key = value` text shared by the profile, token and server
//! files. Reals are the 16 hex digits of their IEEE-754 binary64 bits; the
//! last line is `checksum <16 hex>` over every preceding byte.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a, 64-bit.
pub fn checksum(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn encode_real(value: f64, field: &str) -> Result<String> {
    if !value.is_finite() {
        return Err(Error::SerializationOverflow {
            field: field.to_string(),
        });
    }
    Ok(format!("{:016x}", value.to_bits()))
}

pub fn decode_real(text: &str, line: usize, key: &str) -> Result<f64> {
    let malformed = |reason: &str| Error::MalformedField {
        line,
        key: key.to_string(),
        reason: reason.to_string(),
    };
    if text.len() != 16 || !text.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(malformed("expected 16 hex digits"));
    }
    let bits = u64::from_str_radix(text, 16).map_err(|e| malformed(&e.to_string()))?;
    let value = f64::from_bits(bits);
    if !value.is_finite() {
        return Err(malformed("non-finite value"));
    }
    Ok(value)
}

#[derive(Default)]
pub struct Writer {
    text: String,
}

impl Writer {
    pub fn new(header: &str) -> Self {
        let mut w = Self::default();
        w.line(header);
        w
    }

    pub fn line(&mut self, line: &str) {
        self.text.push_str(line);
        self.text.push('\n');
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key} = {value}");
    }

    pub fn real(&mut self, key: &str, value: f64) -> Result<()> {
        let encoded = encode_real(value, key)?;
        self.kv(key, encoded);
        Ok(())
    }

    pub fn reals(&mut self, key: &str, values: &[f64]) -> Result<()> {
        let encoded = values
            .iter()
            .map(|&v| encode_real(v, key))
            .collect::<Result<Vec<_>>>()?;
        self.kv(key, encoded.join(" "));
        Ok(())
    }

    pub fn payload(&self) -> &str {
        &self.text
    }

    /// Appends the checksum line and returns the finished file.
    pub fn finish(mut self) -> String {
        let sum = checksum(self.text.as_bytes());
        let _ = writeln!(self.text, "checksum {sum:016x}");
        self.text
    }
}

/// Splits a finished file into its payload and verifies the trailing
/// checksum line. Returns the payload text and the stored checksum.
pub fn verify_checksum(text: &str) -> Result<(&str, u64)> {
    let body = text.strip_suffix('\n').ok_or_else(|| Error::MalformedField {
        line: text.lines().count(),
        key: "checksum".into(),
        reason: "file must end with a newline".into(),
    })?;
    let split = body.rfind('\n').map_or(0, |i| i + 1);
    let (payload, last) = body.split_at(split);
    let line = payload.lines().count() + 1;
    let malformed = |reason: &str| Error::MalformedField {
        line,
        key: "checksum".into(),
        reason: reason.into(),
    };
    let hex = last
        .strip_prefix("checksum ")
        .ok_or_else(|| malformed("missing checksum line"))?;
    if hex.len() != 16 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(malformed("expected 16 hex digits"));
    }
    let stored = u64::from_str_radix(hex, 16).map_err(|e| malformed(&e.to_string()))?;
    let computed = checksum(payload.as_bytes());
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    Ok((payload, stored))
}

/// Checks the first line is `<magic> v1`.
pub fn check_header(text: &str, magic: &str) -> Result<()> {
    let first = text.lines().next().unwrap_or("");
    match first.strip_prefix(magic).and_then(|rest| rest.strip_prefix(' ')) {
        Some("v1") => Ok(()),
        Some(version) => Err(Error::VersionUnsupported(version.to_string())),
        None => Err(Error::MalformedField {
            line: 1,
            key: "header".into(),
            reason: format!("expected {magic:?} header"),
        }),
    }
}

/// Sequential reader over the payload lines after the header.
pub struct Reader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(payload: &'a str) -> Self {
        Self {
            lines: payload.lines().enumerate().skip(1).map(|(i, l)| (i + 1, l)).collect(),
            pos: 0,
        }
    }

    fn malformed(&self, line: usize, key: &str, reason: impl Into<String>) -> Error {
        Error::MalformedField {
            line,
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub fn next_line_no(&self) -> usize {
        self.lines
            .get(self.pos)
            .map_or_else(|| self.lines.last().map_or(2, |(n, _)| n + 1), |(n, _)| *n)
    }

    pub fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).map(|(_, l)| *l)
    }

    pub fn is_done(&self) -> bool {
        self.pos >= self.lines.len()
    }

    /// Next line as a bare (non key/value) line.
    pub fn raw(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let item = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.malformed(self.next_line_no(), what, "unexpected end of file"))?;
        self.pos += 1;
        Ok(item)
    }

    pub fn value(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (line, text) = self.raw(key)?;
        let value = text
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(" = "))
            .ok_or_else(|| self.malformed(line, key, format!("expected `{key} = ...`, found {text:?}")))?;
        Ok((line, value))
    }

    pub fn parse<V: std::str::FromStr>(&mut self, key: &str) -> Result<V>
    where
        V::Err: std::fmt::Display,
    {
        let (line, value) = self.value(key)?;
        value
            .parse()
            .map_err(|e: V::Err| self.malformed(line, key, e.to_string()))
    }

    pub fn real(&mut self, key: &str) -> Result<f64> {
        let (line, value) = self.value(key)?;
        decode_real(value, line, key)
    }

    pub fn reals(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let (line, value) = self.value(key)?;
        let values = value
            .split_whitespace()
            .map(|v| decode_real(v, line, key))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected {
            return Err(self.malformed(line, key, format!("expected {expected} values, found {}", values.len())));
        }
        Ok(values)
    }

    pub fn finish(&self) -> Result<()> {
        match self.lines.get(self.pos) {
            None => Ok(()),
            Some((line, text)) => Err(self.malformed(*line, "trailing", format!("unexpected line {text:?}"))),
        }
    }
}
