//! Gradient-descent training of a single password pattern toward a fixed
//! target output.
//!
//! The update applied to every parameter is `theta -= eta * dE/dtheta` with
//! `E = 0.5 * (target - output)^2`; the output-layer error term is
//! `(target - output)` and its sensitivity to each parameter is chained back
//! through `sigmoid_prime`.

use std::io::Write;

use crate::codec::BitVector;
use crate::error::{Error, Result};
use crate::network::{forward_bits, init_weights, sigmoid_prime, ActivationRecord, Architecture, WeightSet};
use crate::scalar::Scalar;

pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_TARGET: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MAX_EPOCHS: usize = 100_000;
/// Sigmoid steepness. At 1.0 the hidden layer of a [0, 1]-initialised net
/// saturates (net inputs of 10 to 40), flattening both training and the
/// response to changed input bits; 0.1 keeps hidden nets near the slope.
pub const DEFAULT_LAMBDA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingConfig<T> {
    pub eta: T,
    pub target: T,
    /// Training stops once `|target - output| < epsilon`.
    pub epsilon: T,
    pub max_epochs: usize,
    pub seed: u64,
    pub lambda: T,
}

impl<T: Scalar> Default for TrainingConfig<T> {
    fn default() -> Self {
        Self {
            eta: T::of(DEFAULT_ETA),
            target: T::of(DEFAULT_TARGET),
            epsilon: T::of(DEFAULT_EPSILON),
            max_epochs: DEFAULT_MAX_EPOCHS,
            seed: 0,
            lambda: T::of(DEFAULT_LAMBDA),
        }
    }
}

impl<T: Scalar> TrainingConfig<T> {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v > T::zero() && v.is_finite();
        if !positive(self.eta) {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.target > T::zero() && self.target < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "target must lie strictly inside (0, 1), got {}",
                self.target
            )));
        }
        if !positive(self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if !positive(self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// `|target - output|` after each epoch's update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve<T> {
    pub errors: Vec<T>,
}

impl<T: Scalar> LearningCurve<T> {
    pub fn epochs(&self) -> usize {
        self.errors.len()
    }

    pub fn final_error(&self) -> Option<T> {
        self.errors.last().copied()
    }

    /// Writes `epoch,error` rows, epochs numbered from 1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,error")?;
        for (epoch, error) in self.errors.iter().enumerate() {
            writeln!(out, "{},{:.9e}", epoch + 1, error.as_f64())?;
        }
        out.flush()
    }
}

/// `dE/dtheta` for every parameter, shaped like [`WeightSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightGradient<T> {
    pub d_w1: Vec<T>,
    pub d_b1: Vec<T>,
    pub d_w2: Vec<T>,
    pub d_b2: T,
}

impl<T: Scalar> WeightGradient<T> {
    /// Entries in the same canonical order as [`WeightSet::iter`].
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.d_w1
            .iter()
            .chain(&self.d_b1)
            .chain(&self.d_w2)
            .chain(std::iter::once(&self.d_b2))
    }
}

pub fn compute_gradient<T: Scalar>(
    arch: &Architecture<T>,
    weights: &WeightSet<T>,
    input: &[u8],
    target: T,
) -> Result<WeightGradient<T>> {
    let record = forward_bits(arch, weights, input)?;
    Ok(gradient_from_record(arch, weights, input, &record, target))
}

fn gradient_from_record<T: Scalar>(
    arch: &Architecture<T>,
    weights: &WeightSet<T>,
    input: &[u8],
    record: &ActivationRecord<T>,
    target: T,
) -> WeightGradient<T> {
    let output = record.final_output;
    let output_delta = -(target - output) * sigmoid_prime(output, arch.lambda);

    let d_w2: Vec<T> = record.hidden_outputs.iter().map(|&h| output_delta * h).collect();
    let d_b1: Vec<T> = record
        .hidden_outputs
        .iter()
        .zip(&weights.w2)
        .map(|(&h, &w)| output_delta * w * sigmoid_prime(h, arch.lambda))
        .collect();
    let d_w1 = d_b1
        .iter()
        .flat_map(|&delta| input.iter().map(move |&bit| if bit != 0 { delta } else { T::zero() }))
        .collect();

    WeightGradient {
        d_w1,
        d_b1,
        d_w2,
        d_b2: output_delta,
    }
}

fn apply_step<T: Scalar>(weights: &mut WeightSet<T>, gradient: &WeightGradient<T>, eta: T) {
    for (w, &g) in weights.iter_mut().zip(gradient.iter()) {
        *w = *w - eta * g;
    }
}

/// Result of a successful training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trained<T> {
    pub architecture: Architecture<T>,
    pub weights: WeightSet<T>,
    pub curve: LearningCurve<T>,
    /// Activations of the final weights on the training input.
    pub activations: ActivationRecord<T>,
}

/// Trains from `init_weights(arch, config.seed)` until the output is within
/// `epsilon` of the target.
pub fn train<T: Scalar>(input: &BitVector, config: &TrainingConfig<T>) -> Result<Trained<T>> {
    config.validate()?;
    let architecture = Architecture::for_input(input.len(), config.lambda)?;
    let bits = input.bits();
    let mut weights = init_weights(&architecture, config.seed);
    let mut record = forward_bits(&architecture, &weights, bits)?;
    let mut curve = LearningCurve { errors: Vec::new() };

    for _ in 0..config.max_epochs {
        let gradient = gradient_from_record(&architecture, &weights, bits, &record, config.target);
        apply_step(&mut weights, &gradient, config.eta);
        record = forward_bits(&architecture, &weights, bits)?;
        let error = (config.target - record.final_output).abs();
        curve.errors.push(error);
        if error < config.epsilon {
            return Ok(Trained {
                architecture,
                weights,
                curve,
                activations: record,
            });
        }
    }

    Err(Error::NoConvergence {
        epochs: curve.epochs(),
        final_error: curve.final_error().map_or(f64::NAN, Scalar::as_f64),
        curve: curve.errors.iter().map(|e| e.as_f64()).collect(),
    })
}
