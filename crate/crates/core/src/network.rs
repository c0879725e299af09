//! Three-layer feedforward network: dense input→hidden→single output, sigmoid
//! at every active node, biases on hidden and output nodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{self, BitVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Layer sizes and sigmoid steepness. The output layer is always one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Architecture<T> {
    pub input_count: usize,
    pub hidden_count: usize,
    pub lambda: T,
}

impl<T: Scalar> Architecture<T> {
    pub fn new(input_count: usize, hidden_count: usize, lambda: T) -> Result<Self> {
        if input_count == 0 || hidden_count == 0 {
            return Err(Error::InvalidConfig(format!(
                "layer sizes must be positive (input {input_count}, hidden {hidden_count})"
            )));
        }
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            input_count,
            hidden_count,
            lambda,
        })
    }

    /// Sizes the hidden layer from the encoded password length.
    pub fn for_input(input_count: usize, lambda: T) -> Result<Self> {
        Self::new(input_count, codec::hidden_count(input_count)?, lambda)
    }

    pub fn parameter_count(&self) -> usize {
        self.hidden_count * self.input_count + 2 * self.hidden_count + 1
    }
}

/// Trained (or initial) parameters. `w1` is row-major, one row per hidden node.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet<T> {
    input_count: usize,
    hidden_count: usize,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: T,
}

impl<T: Scalar> WeightSet<T> {
    pub fn zeros(input_count: usize, hidden_count: usize) -> Self {
        Self {
            input_count,
            hidden_count,
            w1: vec![T::zero(); input_count * hidden_count],
            b1: vec![T::zero(); hidden_count],
            w2: vec![T::zero(); hidden_count],
            b2: T::zero(),
        }
    }

    /// Assembles a weight set, checking that every length agrees with the dims.
    pub fn from_parts(
        input_count: usize,
        hidden_count: usize,
        w1: Vec<T>,
        b1: Vec<T>,
        w2: Vec<T>,
        b2: T,
    ) -> Result<Self> {
        let check = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { what, expected, found })
            }
        };
        check("w1", input_count * hidden_count, w1.len())?;
        check("b1", hidden_count, b1.len())?;
        check("w2", hidden_count, w2.len())?;
        Ok(Self {
            input_count,
            hidden_count,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden_count
    }

    pub fn w1_row(&self, hidden: usize) -> &[T] {
        &self.w1[hidden * self.input_count..(hidden + 1) * self.input_count]
    }

    pub fn matches(&self, arch: &Architecture<T>) -> bool {
        self.input_count == arch.input_count && self.hidden_count == arch.hidden_count
    }

    /// Every parameter in canonical order: w1 rows, b1, w2, b2.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(std::iter::once(&self.b2))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.w1
            .iter_mut()
            .chain(&mut self.b1)
            .chain(&mut self.w2)
            .chain(std::iter::once(&mut self.b2))
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Activations captured from one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationRecord<T> {
    pub hidden_outputs: Vec<T>,
    pub final_output: T,
}

/// `1 / (1 + exp(-lambda * x))`.
#[inline]
pub fn sigmoid<T: Scalar>(x: T, lambda: T) -> T {
    T::one() / (T::one() + (-lambda * x).exp())
}

/// Slope of the sigmoid expressed through its output: `lambda * s * (1 - s)`.
#[inline]
pub fn sigmoid_prime<T: Scalar>(s: T, lambda: T) -> T {
    lambda * s * (T::one() - s)
}

/// Draws every weight and bias uniformly from [0, 1] using ChaCha8 seeded
/// with `seed`, in canonical parameter order.
pub fn init_weights<T: Scalar>(arch: &Architecture<T>, seed: u64) -> WeightSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = WeightSet::zeros(arch.input_count, arch.hidden_count);
    for value in weights.iter_mut() {
        *value = T::of(rng.gen::<f64>());
    }
    weights
}

pub fn forward<T: Scalar>(
    arch: &Architecture<T>,
    weights: &WeightSet<T>,
    input: &BitVector,
) -> Result<ActivationRecord<T>> {
    forward_bits(arch, weights, input.bits())
}

/// Forward pass over raw 0/1 inputs of any length matching the architecture.
pub fn forward_bits<T: Scalar>(
    arch: &Architecture<T>,
    weights: &WeightSet<T>,
    input: &[u8],
) -> Result<ActivationRecord<T>> {
    if input.len() != arch.input_count {
        return Err(Error::DimensionMismatch {
            what: "input",
            expected: arch.input_count,
            found: input.len(),
        });
    }
    if !weights.matches(arch) {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: arch.parameter_count(),
            found: weights.iter().count(),
        });
    }
    let hidden_outputs: Vec<T> = (0..arch.hidden_count)
        .map(|i| {
            let net = weights
                .w1_row(i)
                .iter()
                .zip(input)
                .filter(|(_, &bit)| bit != 0)
                .fold(weights.b1[i], |acc, (&w, _)| acc + w);
            sigmoid(net, arch.lambda)
        })
        .collect();
    let net = weights
        .w2
        .iter()
        .zip(&hidden_outputs)
        .fold(weights.b2, |acc, (&w, &h)| acc + w * h);
    Ok(ActivationRecord {
        final_output: sigmoid(net, arch.lambda),
        hidden_outputs,
    })
}
