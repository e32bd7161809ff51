//! Packet-level discrete-time simulator and policy library for chunked
//! network codes over lossy, delayed links.
//!
//! A message of `k` packets is split into `q` chunks; every non-sink node
//! schedules one chunk per time slot and transmits a coded packet for it.
//! The library provides the GF(2) rank machinery, link loss/delay models,
//! per-link transcripts with instantaneous feedback, five scheduling
//! policies (random, RP, LRF, MCMF, MDF), the expected-innovation metric
//! behind the model-aware policies, a deterministic Monte-Carlo trial
//! engine, table-style experiment sweeps, and an exhaustive
//! schedule-enumeration check of MDF's choices on a single link.

pub mod coding;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod gf2;
pub mod linkmodel;
pub mod metric;
pub mod netstate;
pub mod optimality;
pub mod policy;
pub mod rng;

pub use coding::CodeConfig;
pub use error::{Error, Result};
pub use gf2::{Gf2Basis, Gf2Vector};
pub use linkmodel::{DelayKind, DelayModel, LinkSpec, LossModel};
pub use netstate::Topology;
pub use policy::{PolicyConfig, PolicyKind, TxMode};
