//! Password preprocessing: printable ASCII to a 7-bit-per-character bit
//! vector, plus the hidden-layer sizing rule derived from its length.

use crate::error::{Error, Result};

/// Bits emitted per password character.
pub const BITS_PER_CHAR: usize = 7;

const FIRST_PRINTABLE: u32 = 0x20;
const LAST_PRINTABLE: u32 = 0x7E;

/// Binary encoding of a password, 7 big-endian bits per character.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitVector {
    bits: Vec<u8>,
}

impl BitVector {
    /// Builds a vector from raw bits. Length must be a positive multiple of 7
    /// and every element 0 or 1.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() || !bits.len().is_multiple_of(BITS_PER_CHAR) {
            return Err(Error::InvalidInputCount(bits.len()));
        }
        if let Some(position) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidConfig(format!(
                "bit {position} is {} (must be 0 or 1)",
                bits[position]
            )));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn char_count(&self) -> usize {
        self.bits.len() / BITS_PER_CHAR
    }

    /// Reassembles the password, 7 bits at a time.
    pub fn decode(&self) -> String {
        self.bits
            .chunks_exact(BITS_PER_CHAR)
            .map(|chunk| {
                let code = chunk.iter().fold(0u8, |acc, &b| (acc << 1) | b);
                char::from(code)
            })
            .collect()
    }
}

/// Encodes a printable-ASCII password.
pub fn encode_password(password: &str) -> Result<BitVector> {
    if password.is_empty() {
        return Err(Error::EmptyPassword);
    }
    let mut bits = Vec::with_capacity(password.len() * BITS_PER_CHAR);
    for (position, ch) in password.chars().enumerate() {
        let code_point = u32::from(ch);
        if !(FIRST_PRINTABLE..=LAST_PRINTABLE).contains(&code_point) {
            return Err(Error::UnsupportedCharacter { position, code_point });
        }
        bits.extend((0..BITS_PER_CHAR).rev().map(|shift| ((code_point >> shift) & 1) as u8));
    }
    Ok(BitVector { bits })
}

/// Bit length a password would encode to, without validating its characters.
pub fn encoded_len(password: &str) -> usize {
    password.chars().count() * BITS_PER_CHAR
}

/// Hidden layer size: 30 % of the input count, rounded half up, at least 1.
pub fn hidden_count(input_count: usize) -> Result<usize> {
    if input_count < BITS_PER_CHAR {
        return Err(Error::InvalidInputCount(input_count));
    }
    // Integer form of floor(0.3 * n + 0.5), free of binary rounding on 0.3.
    Ok(((3 * input_count + 5) / 10).max(1))
}
