//! Scheme parameter bundle shared by every backend.
//!
//! The modulus chain follows the `l + 2` convention: one base prime that
//! holds the final plaintext, `l` scaling primes consumed one per
//! multiplication, and one special prime reserved for key switching.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HeError, Result};

/// Bit size used for the base prime and the key-switching prime when a
/// chain is generated from `(N, l, Δ)`.
pub const OUTER_PRIME_BITS: u32 = 60;

/// Claimed security level of a parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Security {
    /// A classical security claim in bits (only 128 is tabulated).
    Bits(u32),
    /// Explicitly insecure desk-scale parameters.
    InsecureTest,
}

/// Largest total modulus bit-length for 128-bit classical security with a
/// ternary secret, indexed by ring degree. Values up to 2^15 are the
/// published standard table; 2^16 and 2^17 are the usual doubling
/// extrapolation.
pub const HES_128_MAX_LOGQ: [(usize, u32); 8] = [
    (1 << 10, 27),
    (1 << 11, 54),
    (1 << 12, 109),
    (1 << 13, 218),
    (1 << 14, 438),
    (1 << 15, 881),
    (1 << 16, 1761),
    (1 << 17, 3524),
];

/// Maximum total modulus bits that remain 128-bit secure at degree `n`.
pub fn hes_max_logq(n: usize) -> Option<u32> {
    HES_128_MAX_LOGQ
        .iter()
        .find(|(deg, _)| *deg == n)
        .map(|(_, bits)| *bits)
}

/// Smallest tabulated degree whose 128-bit budget covers `total_bits`.
pub fn hes_min_degree(total_bits: u32) -> Option<usize> {
    HES_128_MAX_LOGQ
        .iter()
        .find(|(_, bits)| *bits >= total_bits)
        .map(|(deg, _)| *deg)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Ring degree N; a ciphertext carries N/2 real slots.
    pub poly_degree: usize,
    /// Prime bit sizes, base prime first and special prime last.
    pub modulus_bits: Vec<u32>,
    /// Bits of the fixed-point scaling factor Δ.
    pub scale_bits: u32,
    /// Multiplicative levels available to a fresh ciphertext.
    pub level: usize,
    /// Levels the (modelled) bootstrapping circuit consumes.
    pub bootstrap_depth: usize,
    pub security: Security,
}

impl SchemeParams {
    /// Builds a chain `[60, Δ × l, 60]` and validates it.
    pub fn new(
        poly_degree: usize,
        level: usize,
        scale_bits: u32,
        bootstrap_depth: usize,
        security: Security,
    ) -> Result<Self> {
        let mut modulus_bits = Vec::with_capacity(level + 2);
        modulus_bits.push(OUTER_PRIME_BITS);
        modulus_bits.extend(std::iter::repeat_n(scale_bits, level));
        modulus_bits.push(OUTER_PRIME_BITS);
        let params = Self {
            poly_degree,
            modulus_bits,
            scale_bits,
            level,
            bootstrap_depth,
            security,
        };
        params.validate()?;
        Ok(params)
    }

    /// Insecure desk-scale parameters.
    pub fn insecure(poly_degree: usize, level: usize, scale_bits: u32) -> Result<Self> {
        Self::new(poly_degree, level, scale_bits, 0, Security::InsecureTest)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.poly_degree;
        if n < 2 || !n.is_power_of_two() {
            return Err(HeError::InvalidParams(format!("poly_degree {n} is not a power of two")));
        }
        if self.level < 1 {
            return Err(HeError::InvalidParams("level must be at least 1".into()));
        }
        if self.modulus_bits.len() != self.level + 2 {
            return Err(HeError::InvalidParams(format!(
                "modulus chain has {} primes, expected level + 2 = {}",
                self.modulus_bits.len(),
                self.level + 2
            )));
        }
        if self.bootstrap_depth >= self.level {
            return Err(HeError::InvalidParams(format!(
                "bootstrap depth {} leaves no usable level out of {}",
                self.bootstrap_depth, self.level
            )));
        }
        if self.scale_bits == 0 || self.scale_bits > 62 {
            return Err(HeError::InvalidParams(format!(
                "scale_bits {} outside 1..=62",
                self.scale_bits
            )));
        }
        match self.security {
            Security::InsecureTest => Ok(()),
            Security::Bits(128) => {
                let total = self.total_modulus_bits();
                match hes_max_logq(n) {
                    Some(max) if total <= max => Ok(()),
                    Some(max) => Err(HeError::InvalidParams(format!(
                        "N = {n} supports at most {max} modulus bits at 128-bit security, chain has {total}"
                    ))),
                    None => Err(HeError::InvalidParams(format!(
                        "N = {n} is not in the 128-bit security table"
                    ))),
                }
            }
            Security::Bits(other) => Err(HeError::InvalidParams(format!(
                "only 128-bit claims are tabulated, got {other}"
            ))),
        }
    }

    pub fn slot_count(&self) -> usize {
        self.poly_degree / 2
    }

    /// Levels available right after a bootstrap.
    pub fn refresh_level(&self) -> usize {
        if self.bootstrap_depth > 0 {
            self.level - self.bootstrap_depth
        } else {
            self.level
        }
    }

    pub fn total_modulus_bits(&self) -> u32 {
        self.modulus_bits.iter().sum()
    }

    pub fn is_insecure(&self) -> bool {
        self.security == Security::InsecureTest
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("params serialize");
        let mut out = [0u8; 32];
        out.copy_from_slice(&Sha256::digest(&bytes));
        out
    }
}

/// Banner printed whenever insecure parameters are in use.
pub fn insecure_banner(params: &SchemeParams) -> String {
    format!(
        "WARNING: insecure-test parameters (N = {}, {} modulus bits); not for real data",
        params.poly_degree,
        params.total_modulus_bits()
    )
}
