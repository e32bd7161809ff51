//! Discrete-time simulation loop and the seeded Monte-Carlo cell runner.
//!
//! Slots are 1-based. Each slot: (1) deliver every packet due now, (2)
//! stop if the sink can decode, (3) let every link's transmitter decide
//! and put sampled outcomes in flight. Delays are at least one slot, so
//! this ordering is the causally consistent one, and an arrival at slot n
//! is visible to the decisions of slot n.
//!
//! Randomness is split by role: link erasure/delay draws come from the
//! realization seed (shared by all trials of one realization), chunk
//! choices and coefficients from the trial seed. A trial is fully
//! determined by (topology, code, policy, realization seed, trial seed).

use crate::coding::{CodeConfig, Packet};
use crate::error::{Error, Result};
use crate::linkmodel::{sample_outcome, LinkOutcome};
use crate::netstate::{ArrivalOutcome, NetworkState, Topology, TxId};
use crate::policy::{LinkPolicy, Outcome, PolicyConfig};
use crate::rng::SeedTree;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// One trial's fixed inputs.
#[derive(Debug, Clone, Copy)]
pub struct TrialSettings<'a> {
    pub topology: &'a Topology,
    pub code: CodeConfig,
    pub policy: &'a PolicyConfig,
    pub max_slots: u64,
    pub record_decisions: bool,
    pub record_trace: bool,
    /// Slot-indexed delay override per link (entry t-1 applies to a packet
    /// departing at slot t); used by the schedule-enumeration verifier,
    /// which pins delays to slots. Links with a table never erase.
    pub delay_tables: Option<&'a [Vec<u32>]>,
}

impl<'a> TrialSettings<'a> {
    pub fn new(topology: &'a Topology, code: CodeConfig, policy: &'a PolicyConfig) -> Self {
        TrialSettings {
            topology,
            code,
            policy,
            max_slots: default_max_slots(&code, topology),
            record_decisions: false,
            record_trace: false,
            delay_tables: None,
        }
    }
}

/// Safety cap: two orders of magnitude beyond observed delivery times.
pub fn default_max_slots(code: &CodeConfig, topology: &Topology) -> u64 {
    200 * (code.k as u64 + topology.link_count() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DecisionRecord {
    pub slot: u64,
    pub link: usize,
    /// None when the policy idled.
    pub chunk: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Tx,
    Rx,
    Drop,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub slot: u64,
    pub link: usize,
    pub kind: TraceKind,
    pub chunk: Option<usize>,
    pub vector_hex: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    /// First slot at which every chunk was decodable at the sink.
    pub delivery: u64,
    pub decisions: Vec<DecisionRecord>,
    pub trace: Vec<TraceEvent>,
}

/// Run one trial to delivery.
pub fn run_trial(
    settings: &TrialSettings,
    realization_seed: SeedTree,
    trial_seed: SeedTree,
) -> Result<TrialResult> {
    let topo = settings.topology;
    let links = topo.link_count();
    let mut state = NetworkState::new(topo, settings.code);
    let mut policies: Vec<LinkPolicy> = topo
        .links()
        .iter()
        .map(|l| LinkPolicy::new(*settings.policy, &l.spec))
        .collect();
    let mut link_rngs: Vec<ChaCha12Rng> = (0..links)
        .map(|i| realization_seed.child("link", i as u64).rng())
        .collect();
    let mut choice_rngs: Vec<ChaCha12Rng> = (0..links)
        .map(|i| trial_seed.child("choice", i as u64).rng())
        .collect();
    let mut coeff_rngs: Vec<ChaCha12Rng> = (0..links)
        .map(|i| trial_seed.child("coeff", i as u64).rng())
        .collect();

    let mut in_flight: BTreeMap<u64, Vec<TxId>> = BTreeMap::new();
    let mut decisions = Vec::new();
    let mut trace = Vec::new();

    for now in 1..=settings.max_slots {
        if let Some(due) = in_flight.remove(&now) {
            for id in due {
                let stored = state.record_arrival(id, now)?;
                if settings.record_trace {
                    let rec = &state.transcript(id.link).transmitted(id.chunk)[id.index];
                    trace.push(TraceEvent {
                        slot: now,
                        link: id.link,
                        kind: match stored {
                            ArrivalOutcome::Stored => TraceKind::Rx,
                            ArrivalOutcome::Discarded => TraceKind::Drop,
                        },
                        chunk: Some(id.chunk),
                        vector_hex: rec.vector.to_hex(),
                    });
                }
            }
        }

        if state.sink_decodable() {
            return Ok(TrialResult {
                delivery: now,
                decisions,
                trace,
            });
        }

        for link in 0..links {
            let decision = {
                let view = state.feedback_view(link);
                policies[link].decide(&view, now, &mut choice_rngs[link], &mut coeff_rngs[link])?
            };
            if settings.record_decisions {
                decisions.push(DecisionRecord {
                    slot: now,
                    link,
                    chunk: decision.chunk(),
                });
            }
            match decision.outcome {
                Outcome::Idle => {
                    if settings.record_trace {
                        trace.push(TraceEvent {
                            slot: now,
                            link,
                            kind: TraceKind::Idle,
                            chunk: None,
                            vector_hex: String::new(),
                        });
                    }
                }
                Outcome::Transmit { chunk, vector } => {
                    if settings.record_trace {
                        trace.push(TraceEvent {
                            slot: now,
                            link,
                            kind: TraceKind::Tx,
                            chunk: Some(chunk),
                            vector_hex: vector.to_hex(),
                        });
                    }
                    let id = state.record_transmission(
                        link,
                        &Packet {
                            chunk,
                            vector,
                            departure: now,
                            arrival: None,
                        },
                    )?;
                    let outcome = match settings.delay_tables {
                        Some(tables) => LinkOutcome::Delayed(tables[link][now as usize - 1]),
                        None => {
                            sample_outcome(&topo.links()[link].spec, &mut link_rngs[link])
                        }
                    };
                    if let LinkOutcome::Delayed(z) = outcome {
                        in_flight.entry(now + z as u64).or_default().push(id);
                    }
                }
            }
        }
    }

    Err(Error::NonTermination {
        max_slots: settings.max_slots,
        sink_ranks: state.sink_ranks(),
    })
}

/// One experiment cell: a (topology, code, policy) triple averaged over
/// realizations x trials runs.
#[derive(Debug, Clone)]
pub struct CellConfig {
    pub code: CodeConfig,
    pub policy: PolicyConfig,
    pub realizations: u32,
    pub trials: u32,
    pub max_slots: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub mean: f64,
    pub stderr: f64,
    pub runs: u32,
    /// Delivery time of every run, indexed by realization * trials + trial.
    pub delivery_times: Vec<u64>,
    /// Total simulated slots across runs; the deterministic cost figure
    /// reported in result files.
    pub total_slots: u64,
}

/// Run all (realization, trial) pairs of a cell, in parallel over the
/// ambient rayon pool. Seeds are derived per run from `cell_seed`, so the
/// result is independent of the parallelism degree.
pub fn run_cell(topology: &Topology, cfg: &CellConfig, cell_seed: SeedTree) -> Result<CellResult> {
    let runs = cfg.realizations as u64 * cfg.trials as u64;
    assert!(runs > 0, "cell needs at least one run");
    let outcomes: Vec<Result<u64>> = (0..runs)
        .into_par_iter()
        .map(|idx| {
            let realization = (idx / cfg.trials as u64) as u32;
            let trial = (idx % cfg.trials as u64) as u32;
            let realization_seed = cell_seed.child("realization", realization as u64);
            let trial_seed = realization_seed.child("trial", trial as u64);
            let settings = TrialSettings {
                topology,
                code: cfg.code,
                policy: &cfg.policy,
                max_slots: cfg.max_slots,
                record_decisions: false,
                record_trace: false,
                delay_tables: None,
            };
            run_trial(&settings, realization_seed, trial_seed).map(|r| r.delivery)
        })
        .collect();

    let mut delivery_times = Vec::with_capacity(outcomes.len());
    let mut failed = 0usize;
    let mut first_failure: Option<((u32, u32), Error)> = None;
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(t) => delivery_times.push(t),
            Err(e) => {
                failed += 1;
                if first_failure.is_none() {
                    let realization = (idx as u64 / cfg.trials as u64) as u32;
                    let trial = (idx as u64 % cfg.trials as u64) as u32;
                    first_failure = Some(((realization, trial), e));
                }
            }
        }
    }
    if let Some((first_run, first_error)) = first_failure {
        return Err(Error::CellRunsFailed {
            failed,
            total: runs as usize,
            first_run,
            first_error: Box::new(first_error),
        });
    }

    let n = delivery_times.len() as f64;
    let sum: u128 = delivery_times.iter().map(|&t| t as u128).sum();
    let sum_sq: u128 = delivery_times.iter().map(|&t| (t as u128) * (t as u128)).sum();
    let mean = sum as f64 / n;
    let stderr = if delivery_times.len() > 1 {
        let var = (sum_sq as f64 - (sum as f64) * (sum as f64) / n) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(CellResult {
        mean,
        stderr,
        runs: runs as u32,
        total_slots: sum as u64,
        delivery_times,
    })
}
