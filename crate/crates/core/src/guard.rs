//! Hierarchical access guard: trail → length → time → ANN.
//!
//! [`evaluate_attempt`] is pure: it takes a state snapshot and returns the
//! decision, the next state and the records to append. The caller commits
//! both under exclusive access to the profile.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};

use crate::codec::encode_password;
use crate::error::{Error, Result};
use crate::template::PasswordCheck;

pub const DEFAULT_MAX_TRIALS: u32 = 3;
pub const DEFAULT_TIME_MIN_MS: u64 = 50;
pub const DEFAULT_TIME_MAX_MS: u64 = 30_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GuardConfig {
    pub max_trials: u32,
    pub time_min_ms: u64,
    pub time_max_ms: u64,
    pub time_layer_enabled: bool,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self {
            max_trials: DEFAULT_MAX_TRIALS,
            time_min_ms: DEFAULT_TIME_MIN_MS,
            time_max_ms: DEFAULT_TIME_MAX_MS,
            time_layer_enabled: true,
        }
    }
}

impl GuardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_trials == 0 {
            return Err(Error::InvalidConfig("max_trials must be at least 1".into()));
        }
        if self.time_min_ms >= self.time_max_ms {
            return Err(Error::InvalidConfig(format!(
                "time window [{}, {}] is empty",
                self.time_min_ms, self.time_max_ms
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GuardState {
    pub failed_count: u32,
    /// Absorbing; only a successful reset clears it.
    pub locked: bool,
    pub locked_at: Option<DateTime<Utc>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Trail,
    Length,
    Time,
    Ann,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Trail => "trail",
            Layer::Length => "length",
            Layer::Time => "time",
            Layer::Ann => "ann",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "trail" => Ok(Layer::Trail),
            "length" => Ok(Layer::Length),
            "time" => Ok(Layer::Time),
            "ann" => Ok(Layer::Ann),
            other => Err(format!("unknown layer {other:?}")),
        }
    }
}

/// One entered password and how long it took to type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Credential {
    pub password: String,
    pub insertion_ms: u64,
}

impl Credential {
    pub fn new(password: impl Into<String>, insertion_ms: u64) -> Self {
        Self {
            password: password.into(),
            insertion_ms,
        }
    }
}

/// Intrusion log entry for one failing candidate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttemptRecord {
    pub timestamp: DateTime<Utc>,
    pub failed_layer: Layer,
    pub attempted_password: String,
    pub insertion_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Granted,
    Denied,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GuardDecision {
    pub outcome: Outcome,
    pub failed_layer: Option<Layer>,
    /// Set only on the attempt that moved the state into `locked`.
    pub intruder_declared: bool,
}

impl GuardDecision {
    pub fn is_granted(&self) -> bool {
        self.outcome == Outcome::Granted
    }
}

pub fn layer_of_failure(decision: &GuardDecision) -> Option<Layer> {
    decision.failed_layer
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub decision: GuardDecision,
    pub state: GuardState,
    pub records: Vec<AttemptRecord>,
}

/// Which layer rejected a request, and which candidates (by index) failed it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerFailure {
    pub layer: Layer,
    pub failing: Vec<usize>,
}

/// Length layer: one candidate per check, each encodable to exactly the
/// check's input width.
fn length_layer<T>(checks: &[&dyn PasswordCheck<T>], attempt: &[Credential]) -> Option<LayerFailure> {
    if checks.len() != attempt.len() {
        return Some(LayerFailure {
            layer: Layer::Length,
            failing: (0..attempt.len()).collect(),
        });
    }
    let failing: Vec<usize> = checks
        .iter()
        .zip(attempt)
        .enumerate()
        .filter(|(_, (check, cred))| {
            encode_password(&cred.password).map(|bits| bits.len()).ok() != Some(check.input_count())
        })
        .map(|(i, _)| i)
        .collect();
    (!failing.is_empty()).then_some(LayerFailure {
        layer: Layer::Length,
        failing,
    })
}

fn time_layer(config: &GuardConfig, attempt: &[Credential]) -> Option<LayerFailure> {
    if !config.time_layer_enabled {
        return None;
    }
    let window = config.time_min_ms..=config.time_max_ms;
    let failing: Vec<usize> = attempt
        .iter()
        .enumerate()
        .filter(|(_, cred)| !window.contains(&cred.insertion_ms))
        .map(|(i, _)| i)
        .collect();
    (!failing.is_empty()).then_some(LayerFailure {
        layer: Layer::Time,
        failing,
    })
}

fn ann_layer<T>(checks: &[&dyn PasswordCheck<T>], attempt: &[Credential]) -> Option<LayerFailure> {
    let failing: Vec<usize> = checks
        .iter()
        .zip(attempt)
        .enumerate()
        .filter(|(_, (check, cred))| !check.check(&cred.password).is_ok_and(|o| o.authenticated))
        .map(|(i, _)| i)
        .collect();
    (!failing.is_empty()).then_some(LayerFailure {
        layer: Layer::Ann,
        failing,
    })
}

/// Length and ANN layers only, as used by reset mode.
pub fn check_content<T>(checks: &[&dyn PasswordCheck<T>], attempt: &[Credential]) -> Option<LayerFailure> {
    length_layer(checks, attempt).or_else(|| ann_layer(checks, attempt))
}

/// Runs one access request through all four layers in order, stopping at
/// the first failure.
pub fn evaluate_attempt<T>(
    state: &GuardState,
    config: &GuardConfig,
    checks: &[&dyn PasswordCheck<T>],
    attempt: &[Credential],
    now: DateTime<Utc>,
) -> Evaluation {
    let failure = if state.locked {
        Some(LayerFailure {
            layer: Layer::Trail,
            failing: (0..attempt.len()).collect(),
        })
    } else {
        length_layer(checks, attempt)
            .or_else(|| time_layer(config, attempt))
            .or_else(|| ann_layer(checks, attempt))
    };

    let Some(failure) = failure else {
        return Evaluation {
            decision: GuardDecision {
                outcome: Outcome::Granted,
                failed_layer: None,
                intruder_declared: false,
            },
            state: GuardState {
                failed_count: 0,
                ..*state
            },
            records: Vec::new(),
        };
    };

    let mut next = *state;
    next.failed_count = next.failed_count.saturating_add(1);
    let intruder_declared = !next.locked && next.failed_count >= config.max_trials;
    if intruder_declared {
        next.locked = true;
        next.locked_at = Some(now);
    }
    let records = failure
        .failing
        .iter()
        .map(|&i| AttemptRecord {
            timestamp: now,
            failed_layer: failure.layer,
            attempted_password: attempt[i].password.clone(),
            insertion_ms: attempt[i].insertion_ms,
        })
        .collect();

    Evaluation {
        decision: GuardDecision {
            outcome: Outcome::Denied,
            failed_layer: Some(failure.layer),
            intruder_declared,
        },
        state: next,
        records,
    }
}
