//! Length-31 Gold sequence generator and QPSK mapping.
//!
//! Two degree-31 maximal-length shift registers, XOR-combined:
//!
//! ```text
//! x1(n+31) = x1(n+3) ^ x1(n)
//! x2(n+31) = x2(n+3) ^ x2(n+2) ^ x2(n+1) ^ x2(n)
//! c(n)     = x1(n+Nc) ^ x2(n+Nc),  Nc = 1600
//! ```
//!
//! `x1` starts from a single one in position 0; `x2` is loaded with the
//! 31-bit seed.

use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

const REGISTER_MASK: u32 = 0x7FFF_FFFF;
const WARMUP: usize = 1600;

#[derive(Debug, Clone)]
pub struct GoldSequence {
    // bit i holds x(n + i)
    x1: u32,
    x2: u32,
}

impl GoldSequence {
    pub fn new(seed: u64) -> Self {
        let mut seq = GoldSequence {
            x1: 1,
            x2: (seed as u32) & REGISTER_MASK,
        };
        for _ in 0..WARMUP {
            seq.step();
        }
        seq
    }

    #[inline]
    fn step(&mut self) {
        let f1 = (self.x1 ^ (self.x1 >> 3)) & 1;
        let f2 = (self.x2 ^ (self.x2 >> 1) ^ (self.x2 >> 2) ^ (self.x2 >> 3)) & 1;
        self.x1 = (self.x1 >> 1) | (f1 << 30);
        self.x2 = (self.x2 >> 1) | (f2 << 30);
    }

    #[inline]
    pub fn next_bit(&mut self) -> u8 {
        let bit = ((self.x1 ^ self.x2) & 1) as u8;
        self.step();
        bit
    }

    /// Consumes two bits and maps them onto the unit-energy QPSK alphabet.
    #[inline]
    pub fn next_qpsk(&mut self) -> Complex64 {
        let b0 = self.next_bit();
        let b1 = self.next_bit();
        qpsk(b0, b1)
    }
}

impl Iterator for GoldSequence {
    type Item = u8;

    fn next(&mut self) -> Option<u8> {
        Some(self.next_bit())
    }
}

#[inline]
pub fn qpsk(b0: u8, b1: u8) -> Complex64 {
    let re = if b0 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if b1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct transcription of the recurrences over explicit bit vectors.
    fn reference_bits(seed: u64, len: usize) -> Vec<u8> {
        let total = len + WARMUP + 31;
        let mut x1 = vec![0u8; total];
        let mut x2 = vec![0u8; total];
        x1[0] = 1;
        for i in 0..31 {
            x2[i] = ((seed >> i) & 1) as u8;
        }
        for n in 0..total - 31 {
            x1[n + 31] = x1[n + 3] ^ x1[n];
            x2[n + 31] = x2[n + 3] ^ x2[n + 2] ^ x2[n + 1] ^ x2[n];
        }
        (0..len).map(|n| x1[n + WARMUP] ^ x2[n + WARMUP]).collect()
    }

    #[test]
    fn matches_reference_recurrence() {
        for seed in [0u64, 1, 0x1234_5678, 0x7FFF_FFFF] {
            let fast: Vec<u8> = GoldSequence::new(seed).take(4000).collect();
            assert_eq!(fast, reference_bits(seed, 4000), "seed {seed}");
        }
    }

    #[test]
    fn roughly_balanced() {
        let ones: usize = GoldSequence::new(42).take(100_000).map(usize::from).sum();
        assert!((ones as f64 / 100_000.0 - 0.5).abs() < 0.01);
    }

    #[test]
    fn distinct_seeds_give_distinct_sequences() {
        let a: Vec<u8> = GoldSequence::new(7).take(256).collect();
        let b: Vec<u8> = GoldSequence::new(8).take(256).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn qpsk_is_unit_magnitude() {
        for (b0, b1) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((qpsk(b0, b1).norm() - 1.0).abs() < 1e-15);
        }
    }
}
