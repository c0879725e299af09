//! Enrollment and verification.
//!
//! A [`Template`] is the stored form of a password: the trained weights plus
//! the activations ("mapped values") they produce on the password. A
//! candidate is accepted only if it reproduces every hidden activation and
//! the final output.

use crate::codec::{encode_password, encoded_len, BitVector};
use crate::error::{Error, Result};
use crate::network::{forward, Architecture, WeightSet};
use crate::scalar::Scalar;
use crate::trainer::{train, TrainingConfig};

/// Largest per-node difference still counted as a match.
pub const MATCH_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingMeta<T> {
    pub eta: T,
    pub epsilon: T,
    pub target: T,
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Template<T> {
    architecture: Architecture<T>,
    weights: WeightSet<T>,
    mapped_hidden: Vec<T>,
    mapped_final: T,
    meta: TrainingMeta<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectionStage {
    /// Encoded length differs from the template's input layer; no forward pass ran.
    Length,
    /// At least one recomputed activation differs from the stored value.
    MappedValues,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOutcome<T> {
    pub authenticated: bool,
    /// `|recomputed - stored|` per hidden node, then the final output last.
    /// Empty when rejected at the length stage.
    pub diff_vector: Vec<T>,
    pub rejected_stage: Option<RejectionStage>,
}

impl<T: Scalar> VerifyOutcome<T> {
    pub(crate) fn length_rejected() -> Self {
        Self {
            authenticated: false,
            diff_vector: Vec::new(),
            rejected_stage: Some(RejectionStage::Length),
        }
    }

    pub fn max_diff(&self) -> Option<T> {
        self.diff_vector.iter().copied().reduce(T::max)
    }
}

/// Anything that can judge a candidate password against an enrolled one.
pub trait PasswordCheck<T> {
    fn input_count(&self) -> usize;
    fn check(&self, candidate: &str) -> Result<VerifyOutcome<T>>;
}

impl<T: Scalar> Template<T> {
    /// Assembles a template from stored parts, checking dimensions, finiteness
    /// and that the stored final output is within epsilon of the target.
    pub fn from_parts(
        architecture: Architecture<T>,
        weights: WeightSet<T>,
        mapped_hidden: Vec<T>,
        mapped_final: T,
        meta: TrainingMeta<T>,
    ) -> Result<Self> {
        if !weights.matches(&architecture) {
            return Err(Error::DimensionMismatch {
                what: "template weights",
                expected: architecture.parameter_count(),
                found: weights.iter().count(),
            });
        }
        if mapped_hidden.len() != architecture.hidden_count {
            return Err(Error::DimensionMismatch {
                what: "mapped_hidden",
                expected: architecture.hidden_count,
                found: mapped_hidden.len(),
            });
        }
        if !weights.all_finite() || !mapped_hidden.iter().all(|v| v.is_finite()) || !mapped_final.is_finite() {
            return Err(Error::InvalidProfile("template contains a non-finite value".into()));
        }
        if (meta.target - mapped_final).abs().partial_cmp(&meta.epsilon) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidProfile(format!(
                "mapped final output {mapped_final} is not within {} of target {}",
                meta.epsilon, meta.target
            )));
        }
        Ok(Self {
            architecture,
            weights,
            mapped_hidden,
            mapped_final,
            meta,
        })
    }

    pub fn architecture(&self) -> &Architecture<T> {
        &self.architecture
    }

    pub fn weights(&self) -> &WeightSet<T> {
        &self.weights
    }

    pub fn mapped_hidden(&self) -> &[T] {
        &self.mapped_hidden
    }

    pub fn mapped_final(&self) -> T {
        self.mapped_final
    }

    pub fn meta(&self) -> &TrainingMeta<T> {
        &self.meta
    }

    /// Compares a candidate's activations against the stored mapped values.
    /// Never modifies the template.
    pub fn verify(&self, candidate: &str) -> Result<VerifyOutcome<T>> {
        if encoded_len(candidate) != self.architecture.input_count {
            return Ok(VerifyOutcome::length_rejected());
        }
        let input = encode_password(candidate)?;
        self.verify_encoded(&input)
    }

    pub fn verify_encoded(&self, input: &BitVector) -> Result<VerifyOutcome<T>> {
        if input.len() != self.architecture.input_count {
            return Ok(VerifyOutcome::length_rejected());
        }
        let record = forward(&self.architecture, &self.weights, input)?;
        let diff_vector: Vec<T> = record
            .hidden_outputs
            .iter()
            .zip(&self.mapped_hidden)
            .map(|(&got, &stored)| (got - stored).abs())
            .chain(std::iter::once((record.final_output - self.mapped_final).abs()))
            .collect();
        let tolerance = T::of(MATCH_TOLERANCE);
        // NaN differences must not authenticate
        let authenticated = diff_vector.iter().all(|&d| d <= tolerance);
        Ok(VerifyOutcome {
            authenticated,
            diff_vector,
            rejected_stage: (!authenticated).then_some(RejectionStage::MappedValues),
        })
    }
}

impl<T: Scalar> PasswordCheck<T> for Template<T> {
    fn input_count(&self) -> usize {
        self.architecture.input_count
    }

    fn check(&self, candidate: &str) -> Result<VerifyOutcome<T>> {
        self.verify(candidate)
    }
}

/// Trains a network on the password and captures its mapped values.
pub fn enroll<T: Scalar>(password: &str, config: &TrainingConfig<T>) -> Result<Template<T>> {
    let input = encode_password(password)?;
    let trained = train(&input, config)?;
    Ok(Template {
        architecture: trained.architecture,
        weights: trained.weights,
        mapped_hidden: trained.activations.hidden_outputs,
        mapped_final: trained.activations.final_output,
        meta: TrainingMeta {
            eta: config.eta,
            epsilon: config.epsilon,
            target: config.target,
            seed: config.seed,
            epochs: trained.curve.epochs(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::forward;
    use std::sync::OnceLock;

    fn neural() -> &'static Template<f64> {
        static T: OnceLock<Template<f64>> = OnceLock::new();
        T.get_or_init(|| enroll("neural", &TrainingConfig::with_seed(1)).unwrap())
    }

    #[test]
    fn enroll_sizes_from_password() {
        let t = neural();
        assert_eq!(t.architecture().input_count, 42);
        assert_eq!(t.architecture().hidden_count, 13);
        let arch = enroll::<f64>("architecture", &TrainingConfig::with_seed(1)).unwrap();
        assert_eq!(arch.architecture().input_count, 84);
        assert_eq!(arch.architecture().hidden_count, 25);
    }

    #[test]
    fn enroll_rejects_empty() {
        assert!(matches!(
            enroll::<f64>("", &TrainingConfig::default()),
            Err(Error::EmptyPassword)
        ));
    }

    #[test]
    fn mapped_values_reproduce_exactly() {
        let t = neural();
        let record = forward(t.architecture(), t.weights(), &encode_password("neural").unwrap()).unwrap();
        assert_eq!(record.hidden_outputs, t.mapped_hidden());
        assert_eq!(record.final_output.to_bits(), t.mapped_final().to_bits());
        assert!((t.meta().target - t.mapped_final()).abs() < t.meta().epsilon);
    }

    #[test]
    fn correct_password_has_zero_diffs() {
        let outcome = neural().verify("neural").unwrap();
        assert!(outcome.authenticated);
        assert_eq!(outcome.rejected_stage, None);
        assert_eq!(outcome.diff_vector.len(), 14);
        assert!(outcome.diff_vector.iter().all(|&d| d <= MATCH_TOLERANCE));
    }

    #[test]
    fn wrong_same_length_passwords_rejected() {
        for candidate in ["meural", "neurba", "signal"] {
            let outcome = neural().verify(candidate).unwrap();
            assert!(!outcome.authenticated, "{candidate}");
            assert_eq!(outcome.rejected_stage, Some(RejectionStage::MappedValues));
            assert!(outcome.max_diff().unwrap() > MATCH_TOLERANCE);
        }
    }

    #[test]
    fn wrong_length_stops_before_forward() {
        let outcome = neural().verify("neur").unwrap();
        assert!(!outcome.authenticated);
        assert_eq!(outcome.rejected_stage, Some(RejectionStage::Length));
        assert!(outcome.diff_vector.is_empty());
        // wrong length wins over bad characters
        assert_eq!(
            neural().verify("n\u{e9}").unwrap().rejected_stage,
            Some(RejectionStage::Length)
        );
    }

    #[test]
    fn unsupported_character_is_an_error() {
        assert!(matches!(
            neural().verify("neura\t"),
            Err(Error::UnsupportedCharacter { position: 5, .. })
        ));
    }

    #[test]
    fn verify_does_not_mutate() {
        let t = neural().clone();
        let before = t.clone();
        let _ = t.verify("signal").unwrap();
        let _ = t.verify("neural").unwrap();
        assert_eq!(t, before);
    }

    #[test]
    fn from_parts_validation() {
        let t = neural();
        let rebuilt = Template::from_parts(
            *t.architecture(),
            t.weights().clone(),
            t.mapped_hidden().to_vec(),
            t.mapped_final(),
            *t.meta(),
        )
        .unwrap();
        assert_eq!(&rebuilt, t);
        assert!(Template::from_parts(
            *t.architecture(),
            t.weights().clone(),
            t.mapped_hidden()[1..].to_vec(),
            t.mapped_final(),
            *t.meta(),
        )
        .is_err());
        assert!(Template::from_parts(
            *t.architecture(),
            t.weights().clone(),
            t.mapped_hidden().to_vec(),
            0.9,
            *t.meta()
        )
        .is_err());
    }
}
