//! Chunked-code semantics: message partitioning, packet generation, and
//! the decodability predicate.
//!
//! Payloads are never simulated. Delivery time depends only on the rank
//! evolution of encoding vectors, so a packet here is a chunk id plus its
//! coefficient vector and timestamps.

use crate::error::{Error, Result};
use crate::gf2::{Gf2Basis, Gf2Vector};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

/// Message of `k` packets split into `q` chunks of `k/q` packets each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeConfig {
    pub k: usize,
    pub q: usize,
}

impl CodeConfig {
    pub fn new(k: usize, q: usize) -> Result<Self> {
        if k == 0 || q == 0 {
            return Err(Error::InvalidParameter(format!(
                "code.k and code.q must be positive, got k={k}, q={q}"
            )));
        }
        if !k.is_multiple_of(q) {
            return Err(Error::InvalidParameter(format!(
                "code.q must divide code.k, got k={k}, q={q}"
            )));
        }
        Ok(CodeConfig { k, q })
    }

    /// Packets per chunk.
    pub fn chunk_size(&self) -> usize {
        self.k / self.q
    }
}

/// A coded packet: which chunk it belongs to, its coefficients within the
/// chunk, and when it left (and, once delivered, reached) the link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub chunk: usize,
    pub vector: Gf2Vector,
    pub departure: u64,
    pub arrival: Option<u64>,
}

/// Random linear combination over all message packets of one chunk, as
/// the source emits under the feedback-free policy. Uniform over the full
/// space, zero vector included.
pub fn generate_source_packet<R: RngCore>(cfg: &CodeConfig, rng: &mut R) -> Gf2Vector {
    Gf2Vector::random(cfg.chunk_size(), rng)
}

const REJECTION_CAP: u32 = 64;

/// Draw a vector from the transmitter's span that is innovative for the
/// receiver. Rejection-samples random span members; over GF(2) each
/// attempt succeeds with probability >= 1/2, so the cap is hit with
/// probability below 2^-64, after which a basis row known to lie outside
/// the receiver span is returned.
pub fn generate_innovative_packet<R: RngCore>(
    own: &Gf2Basis,
    receiver: &Gf2Basis,
    rng: &mut R,
) -> Result<Gf2Vector> {
    for _ in 0..REJECTION_CAP {
        let v = own.random_member(rng);
        if receiver.is_innovative(&v)? {
            return Ok(v);
        }
    }
    // Deterministic fallback: if span(own) is not contained in
    // span(receiver), some basis row of own is itself innovative.
    for row in own.rows() {
        if receiver.is_innovative(row)? {
            return Ok(row.clone());
        }
    }
    Err(Error::NoInnovativePacket)
}

/// All chunks decodable: every innovative count equals the chunk size.
pub fn is_decodable(counts: &[u16], cfg: &CodeConfig) -> bool {
    debug_assert_eq!(counts.len(), cfg.q);
    counts.iter().all(|&c| c as usize == cfg.chunk_size())
}
