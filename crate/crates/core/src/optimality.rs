//! Exhaustive schedule-enumeration check of MDF's choices.
//!
//! One lossless link, two chunks of size four, and a fixed realization:
//! a pre-drawn delay for every slot, applied to whichever packet departs
//! in that slot. MDF plays the opening slots; at the probe slot its
//! chunk choice is recorded. Every possible continuation of chunk
//! choices through the horizon is then enumerated under a counting model
//! of innovation (the first k/q arrivals of a chunk count), and each
//! successful continuation's delivery time is attributed to the chunk it
//! chose at the probe slot. MDF's choice is optimal for the fixture when
//! it lies among the chunks minimizing that conditional mean delivery.

use crate::coding::CodeConfig;
use crate::error::{Error, Result};
use crate::experiments::{delay_params, DelayModelId};
use crate::linkmodel::{DelayModel, LinkSpec, LossModel};
use crate::netstate::Topology;
use crate::policy::{PolicyConfig, PolicyKind};
use crate::rng::SeedTree;
use rayon::prelude::*;
use serde::Serialize;

/// Pre-drawn slot delays for one verifier run.
#[derive(Debug, Clone)]
pub struct RealizationFixture {
    /// delays[t-1] applies to the packet departing at slot t.
    pub delays: Vec<u32>,
    /// Probe slot: the first enumerated slot and the one whose MDF choice
    /// is judged.
    pub n0: u32,
    /// Last transmission slot covered by the enumeration.
    pub n_max: u32,
}

impl RealizationFixture {
    pub fn draw(model: &DelayModel, n0: u32, n_max: u32, seed: SeedTree) -> Result<Self> {
        if n0 < 1 || n0 >= n_max {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= n0 < n_max, got n0={n0}, n_max={n_max}"
            )));
        }
        let mut rng = seed.rng();
        Ok(RealizationFixture {
            delays: (0..n_max).map(|_| model.sample(&mut rng)).collect(),
            n0,
            n_max,
        })
    }
}

/// The trial state at the probe slot, induced by the MDF-played prefix.
#[derive(Debug, Clone)]
pub struct PrefixState {
    /// Sink's innovative counts per chunk after the probe slot's arrivals.
    pub rho: Vec<u16>,
    /// Prefix transmissions still in flight: (chunk, arrival slot,
    /// departure slot).
    pub in_flight: Vec<(usize, u64, u64)>,
    /// MDF's chunk choice at the probe slot.
    pub mdf_choice: usize,
}

/// Outcome of one fixture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityRecord {
    /// Mean delivery over successful continuations choosing each chunk at
    /// the probe slot; None when no continuation with that choice
    /// succeeds.
    pub conditional_mean: [Option<f64>; 2],
    /// Chunks minimizing the conditional mean (exact rational compare).
    pub optimal_set: Vec<usize>,
    /// MDF's choice at the probe slot.
    pub mdf_choice: usize,
    /// mdf_choice lies in optimal_set; None when either conditional mean
    /// is undefined (fixture excluded from averaging).
    pub indicator: Option<bool>,
}

/// Play MDF on the fixture through the probe slot and capture the state
/// its enumeration continues from. Mirrors one trial of the engine (same
/// slot phases, same stream roles) but stops at the probe decision; the
/// fixture's delay table replaces link sampling.
pub fn play_prefix(
    fixture: &RealizationFixture,
    metric_model: &LinkSpec,
    policy_cfg: &PolicyConfig,
    trial_seed: SeedTree,
) -> Result<PrefixState> {
    use crate::netstate::NetworkState;
    use crate::policy::{LinkPolicy, Outcome};
    use std::collections::BTreeMap;

    debug_assert!(policy_cfg.kind == PolicyKind::Mdf);
    let topology = Topology::line(vec![metric_model.clone()])?;
    let code = CodeConfig::new(8, 2)?;
    let mut state = NetworkState::new(&topology, code);
    let mut policy = LinkPolicy::new(*policy_cfg, metric_model);
    let mut choice_rng = trial_seed.child("choice", 0).rng();
    let mut coeff_rng = trial_seed.child("coeff", 0).rng();
    let mut in_flight: BTreeMap<u64, Vec<(crate::netstate::TxId, u64)>> = BTreeMap::new();

    for now in 1..=fixture.n0 as u64 {
        if let Some(due) = in_flight.remove(&now) {
            for (id, _) in due {
                state.record_arrival(id, now)?;
            }
        }
        let decision = {
            let view = state.feedback_view(0);
            policy.decide(&view, now, &mut choice_rng, &mut coeff_rng)?
        };
        let Outcome::Transmit { chunk, vector } = decision.outcome else {
            return Err(Error::SchedulingViolation(format!(
                "MDF idled at prefix slot {now} with the sink undecoded"
            )));
        };
        if now == fixture.n0 as u64 {
            // Probe decision reached: collect the enumeration state.
            let rho = state.sink_ranks();
            let mut flights: Vec<(usize, u64, u64)> = in_flight
                .iter()
                .flat_map(|(arrival, ids)| {
                    ids.iter().map(move |&(id, departure)| (id.chunk, *arrival, departure))
                })
                .collect();
            flights.sort_by_key(|&(_, arrival, departure)| (arrival, departure));
            return Ok(PrefixState {
                rho,
                in_flight: flights,
                mdf_choice: chunk,
            });
        }
        let id = state.record_transmission(
            0,
            &crate::coding::Packet {
                chunk,
                vector,
                departure: now,
                arrival: None,
            },
        )?;
        let z = fixture.delays[now as usize - 1] as u64;
        in_flight.entry(now + z).or_default().push((id, now));
    }
    unreachable!("loop returns at the probe slot");
}

/// Enumerate all chunk-choice continuations for slots n0..=n_max and
/// score MDF's probe-slot choice against the delivery-minimizing one.
pub fn enumerate_suffixes(
    fixture: &RealizationFixture,
    prefix: &PrefixState,
    code: &CodeConfig,
) -> OptimalityRecord {
    let chunk_size = code.chunk_size() as u32;
    debug_assert_eq!(code.q, 2);
    let n0 = fixture.n0 as u64;
    let slots = (fixture.n_max - fixture.n0 + 1) as usize;

    // Arrival order is continuation-independent: prefix flights have
    // fixed chunks, enumerated slots have fixed arrival times. Events
    // sorted by (arrival, departure); an event is either a fixed chunk or
    // an enumerated slot index.
    #[derive(Clone, Copy)]
    enum Event {
        Fixed(usize, u64),
        Enumerated(usize, u64),
    }
    let mut events: Vec<(u64, u64, Event)> = Vec::with_capacity(prefix.in_flight.len() + slots);
    for &(chunk, arrival, departure) in &prefix.in_flight {
        events.push((arrival, departure, Event::Fixed(chunk, arrival)));
    }
    for s in 0..slots {
        let depart = n0 + s as u64;
        let arrival = depart + fixture.delays[depart as usize - 1] as u64;
        events.push((arrival, depart, Event::Enumerated(s, arrival)));
    }
    events.sort_by_key(|&(arrival, departure, _)| (arrival, departure));

    // Accumulate exact integer sums for tie detection.
    let mut sums = [0u128; 2];
    let mut counts = [0u64; 2];
    for assignment in 0u64..1 << slots {
        let mut have = [prefix.rho[0] as u32, prefix.rho[1] as u32];
        let mut done_at = [0u64; 2];
        for &(_, _, event) in &events {
            let (chunk, arrival) = match event {
                Event::Fixed(chunk, arrival) => (chunk, arrival),
                Event::Enumerated(s, arrival) => ((assignment >> s & 1) as usize, arrival),
            };
            if have[chunk] < chunk_size {
                have[chunk] += 1;
                if have[chunk] == chunk_size {
                    done_at[chunk] = arrival;
                }
            }
        }
        if have[0] == chunk_size && have[1] == chunk_size {
            let delivery = done_at[0].max(done_at[1]);
            let probe_choice = (assignment & 1) as usize;
            sums[probe_choice] += delivery as u128;
            counts[probe_choice] += 1;
        }
    }

    let conditional_mean = [0, 1].map(|w| {
        (counts[w] > 0).then(|| sums[w] as f64 / counts[w] as f64)
    });
    let (optimal_set, indicator) = if counts[0] > 0 && counts[1] > 0 {
        // Exact rational comparison: s0/c0 vs s1/c1.
        let lhs = sums[0] * counts[1] as u128;
        let rhs = sums[1] * counts[0] as u128;
        let set: Vec<usize> = match lhs.cmp(&rhs) {
            std::cmp::Ordering::Less => vec![0],
            std::cmp::Ordering::Greater => vec![1],
            std::cmp::Ordering::Equal => vec![0, 1],
        };
        let ind = set.contains(&prefix.mdf_choice);
        (set, Some(ind))
    } else {
        (Vec::new(), None)
    };
    OptimalityRecord {
        conditional_mean,
        optimal_set,
        mdf_choice: prefix.mdf_choice,
        indicator,
    }
}

/// One (m, delta) cell of the verifier output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifierCell {
    pub m: usize,
    pub delta: u32,
    /// Share of counted fixtures where MDF's choice was optimal, percent.
    pub percent_optimal: f64,
    pub fixtures: u32,
    /// Fixtures excluded because a conditional mean was undefined.
    pub undefined: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifierResult {
    pub delay_model: String,
    pub n0: u32,
    pub n_max: u32,
    pub fixtures: u32,
    pub master_seed: u64,
    pub cells: Vec<VerifierCell>,
}

#[derive(Debug, Clone)]
pub struct VerifierConfig {
    pub delay_model: DelayModelId,
    pub m_values: Vec<usize>,
    pub delta_values: Vec<u32>,
    pub n0: u32,
    pub n_max: u32,
    pub fixtures: u32,
    pub master_seed: u64,
}

/// Run the verifier over the (m, delta) grid. Fixture realizations are
/// shared across grid cells; fixtures are independent and run in
/// parallel.
pub fn run_verifier(cfg: &VerifierConfig) -> Result<VerifierResult> {
    if cfg.n_max - cfg.n0 + 1 > 26 {
        return Err(Error::InvalidParameter(format!(
            "2^{} continuations exceed the desk-scale budget",
            cfg.n_max - cfg.n0 + 1
        )));
    }
    let (mu, sigma) = delay_params(cfg.delay_model, 1, 1);
    let delay = DelayModel::lognormal(mu, sigma)?;
    let metric_model = LinkSpec::new(LossModel::lossless(), delay.clone());
    let code = CodeConfig::new(8, 2)?;
    let tree = SeedTree::from_master(cfg.master_seed);

    let mut cells = Vec::new();
    for &m in &cfg.m_values {
        for &delta in &cfg.delta_values {
            let records: Vec<OptimalityRecord> = (0..cfg.fixtures)
                .into_par_iter()
                .map(|f| {
                    let fixture = RealizationFixture::draw(
                        &delay,
                        cfg.n0,
                        cfg.n_max,
                        tree.child("fixture", f as u64),
                    )?;
                    let mut policy = PolicyConfig::new(PolicyKind::Mdf);
                    policy.m = m;
                    policy.delta = delta;
                    let prefix = play_prefix(
                        &fixture,
                        &metric_model,
                        &policy,
                        tree.child("prefix", f as u64),
                    )?;
                    Ok(enumerate_suffixes(&fixture, &prefix, &code))
                })
                .collect::<Result<_>>()?;
            let undefined = records.iter().filter(|r| r.indicator.is_none()).count() as u32;
            let optimal = records
                .iter()
                .filter(|r| r.indicator == Some(true))
                .count() as u32;
            let counted = cfg.fixtures - undefined;
            cells.push(VerifierCell {
                m,
                delta,
                percent_optimal: if counted > 0 {
                    100.0 * optimal as f64 / counted as f64
                } else {
                    f64::NAN
                },
                fixtures: cfg.fixtures,
                undefined,
            });
        }
    }
    Ok(VerifierResult {
        delay_model: cfg.delay_model.to_string(),
        n0: cfg.n0,
        n_max: cfg.n_max,
        fixtures: cfg.fixtures,
        master_seed: cfg.master_seed,
        cells,
    })
}

/// CSV grid: one row per delta, one column per m.
pub fn render_verifier_csv(result: &VerifierResult) -> String {
    let mut ms: Vec<usize> = result.cells.iter().map(|c| c.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let mut deltas: Vec<u32> = result.cells.iter().map(|c| c.delta).collect();
    deltas.sort_unstable();
    deltas.dedup();
    let mut out = String::new();
    out.push_str(&format!(
        "# delay_model={} n0={} n_max={} fixtures={} seed={}\n",
        result.delay_model, result.n0, result.n_max, result.fixtures, result.master_seed
    ));
    out.push_str("delta");
    for m in &ms {
        out.push_str(&format!(",m{m}"));
    }
    out.push('\n');
    for &d in &deltas {
        out.push_str(&d.to_string());
        for &m in &ms {
            let cell = result
                .cells
                .iter()
                .find(|c| c.m == m && c.delta == d)
                .expect("full grid");
            out.push_str(&format!(",{:.1}", cell.percent_optimal));
        }
        out.push('\n');
    }
    out
}
