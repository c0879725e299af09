#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn printable(rng: &mut impl Rng) -> char {
    rng.gen_range(0x20u8..=0x7e) as char
}

pub fn random_password(rng: &mut impl Rng, len: usize) -> String {
    (0..len).map(|_| printable(rng)).collect()
}

/// A same-length printable string different from `password`.
pub fn random_other(rng: &mut impl Rng, password: &str) -> String {
    loop {
        let candidate = random_password(rng, password.len());
        if candidate != password {
            return candidate;
        }
    }
}
