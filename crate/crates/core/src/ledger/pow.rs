//! Hash puzzle used to gate ledger writes.
//!
//! The digest is SHA-256 over `canonical_bytes ‖ nonce`, with the nonce encoded
//! as 8 big-endian bytes. Work is measured in leading zero bits of that digest.

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Hardest difficulty the solver accepts.
pub const MAX_DIFFICULTY_BITS: u8 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PowError {
    #[error("difficulty {0} outside [1, {MAX_DIFFICULTY_BITS}]")]
    DifficultyOutOfRange(u8),
    #[error("nonce space exhausted without meeting {0} bits")]
    Exhausted(u8),
}

/// Winning nonce together with the number of digests evaluated to find it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowSolution {
    pub nonce: u64,
    pub attempts: u64,
}

pub fn pow_digest(canonical_bytes: &[u8], nonce: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(canonical_bytes);
    hasher.update(nonce.to_be_bytes());
    hasher.finalize().into()
}

pub fn leading_zero_bits(digest: &[u8; 32]) -> u32 {
    let mut count = 0;
    for byte in digest {
        let lz = byte.leading_zeros();
        count += lz;
        if lz < 8 {
            break;
        }
    }
    count
}

pub fn meets_difficulty(canonical_bytes: &[u8], nonce: u64, difficulty_bits: u8) -> bool {
    leading_zero_bits(&pow_digest(canonical_bytes, nonce)) >= u32::from(difficulty_bits)
}

/// Linear nonce search starting at zero, so the result is a pure function of
/// the input bytes and difficulty.
pub fn solve_pow(canonical_bytes: &[u8], difficulty_bits: u8) -> Result<PowSolution, PowError> {
    solve_pow_bounded(canonical_bytes, difficulty_bits, u64::MAX)
}

/// Same as [`solve_pow`] but gives up after `max_nonce` (inclusive).
pub fn solve_pow_bounded(
    canonical_bytes: &[u8],
    difficulty_bits: u8,
    max_nonce: u64,
) -> Result<PowSolution, PowError> {
    if difficulty_bits == 0 || difficulty_bits > MAX_DIFFICULTY_BITS {
        return Err(PowError::DifficultyOutOfRange(difficulty_bits));
    }
    let prefix = Sha256::new().chain_update(canonical_bytes);
    let target = u32::from(difficulty_bits);
    let mut nonce = 0u64;
    loop {
        let digest: [u8; 32] = prefix.clone().chain_update(nonce.to_be_bytes()).finalize().into();
        if leading_zero_bits(&digest) >= target {
            return Ok(PowSolution { nonce, attempts: nonce + 1 });
        }
        if nonce == max_nonce {
            return Err(PowError::Exhausted(difficulty_bits));
        }
        nonce += 1;
    }
}
