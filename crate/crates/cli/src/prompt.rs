//! Password entry with insertion-time capture.

use std::collections::VecDeque;
use std::io::IsTerminal;
use std::time::Instant;

use crate::CliError;

/// A typed password and the milliseconds between prompt display and Enter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimedEntry {
    pub text: String,
    pub insertion_ms: u64,
}

impl TimedEntry {
    pub fn new(text: impl Into<String>, insertion_ms: u64) -> Self {
        Self {
            text: text.into(),
            insertion_ms,
        }
    }
}

/// Reads one password without echo, timing the entry.
pub fn prompt_with_timing(prompt: &str) -> Result<TimedEntry, CliError> {
    if !std::io::stdin().is_terminal() {
        return Err(CliError::NoTerminal);
    }
    let started = Instant::now();
    let text = rpassword::prompt_password(prompt).map_err(|e| CliError::Io(format!("reading password: {e}")))?;
    let insertion_ms = u64::try_from(started.elapsed().as_millis()).unwrap_or(u64::MAX);
    Ok(TimedEntry { text, insertion_ms })
}

/// Source of password entries for one command: the scripted values when any
/// were given on the command line, otherwise the terminal.
#[derive(Debug)]
pub struct Entries {
    scripted: Option<VecDeque<TimedEntry>>,
}

impl Entries {
    /// `times` pairs with `passwords` by position; a missing time is 0 ms.
    pub fn scripted_or_terminal(passwords: &[String], times: &[u64]) -> Result<Self, CliError> {
        if passwords.is_empty() {
            if !times.is_empty() {
                return Err(CliError::Usage("--time-ms given without --password".into()));
            }
            return Ok(Self { scripted: None });
        }
        if times.len() > passwords.len() {
            return Err(CliError::Usage("more --time-ms values than --password values".into()));
        }
        let entries = passwords
            .iter()
            .enumerate()
            .map(|(i, p)| TimedEntry::new(p.clone(), times.get(i).copied().unwrap_or(0)))
            .collect();
        Ok(Self {
            scripted: Some(entries),
        })
    }

    pub fn is_scripted(&self) -> bool {
        self.scripted.is_some()
    }

    pub fn next(&mut self, prompt: &str) -> Result<TimedEntry, CliError> {
        match &mut self.scripted {
            Some(queue) => queue
                .pop_front()
                .ok_or_else(|| CliError::Usage(format!("not enough --password values (needed one for {prompt:?})"))),
            None => prompt_with_timing(prompt),
        }
    }

    /// Fails if scripted values were supplied but not all consumed.
    pub fn finish(&self) -> Result<(), CliError> {
        match &self.scripted {
            Some(queue) if !queue.is_empty() => {
                Err(CliError::Usage(format!("{} unused --password value(s)", queue.len())))
            }
            _ => Ok(()),
        }
    }
}
