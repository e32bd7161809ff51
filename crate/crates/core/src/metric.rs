//! Expected-innovative-transmission metrics for the model-aware policies.
//!
//! For one link and one chunk, the state is the receiver's innovative
//! set, the window of recent outstanding transmissions, and optionally a
//! candidate packet assumed transmitted now. Each outstanding or
//! candidate packet either arrives within the horizon (on-time, with a
//! specific delay drawn from its window distribution) or is treated as
//! erased (late). The metric is the expectation, over that joint outcome
//! space, of the receiver's innovative count after replaying the on-time
//! arrivals in reception order.
//!
//! Two evaluation routes are provided. `metric_x`/`metric_y` exploit the
//! fact that the number of innovative arrivals depends only on the set of
//! on-time packets, not on their delays or ordering (rank is
//! order-invariant), so the delay assignments collapse into per-packet
//! on-time totals and only the 2^P on-time subsets are visited.
//! `evaluate_by_terms` walks the explicit (subset, delay-assignment) term
//! stream instead; it is the slow reference the fast route is tested
//! against.

use crate::error::{Error, Result};
use crate::gf2::{Gf2Basis, Gf2Vector, ScratchBasis};
use crate::linkmodel::{conditional_pmf, fresh_pmf, LinkSpec};
use crate::rng::uniform_f64;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// How the late-branch probability of a packet is formed from its window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateProbFormula {
    /// 1 minus the on-time window mass. The outcome space of each packet
    /// is then a probability distribution.
    #[default]
    Complement,
    /// The literal published form: 1 minus window mass plus the erasure
    /// probability, clamped into [0,1]. Erasure mass is already excluded
    /// from the window by the success factor, so this can overcount; the
    /// weight-sum deviation is surfaced as a diagnostic.
    PaperLiteral,
}

/// Snapshot from which the metrics are computed.
#[derive(Debug, Clone)]
pub struct MetricState<'a> {
    /// Receiver's innovative set for the chunk; rho is its rank.
    pub receiver_basis: Gf2Basis,
    /// Decoding target k/q.
    pub chunk_size: usize,
    /// Last min(m, tau) outstanding packets, departure-ascending.
    pub outstanding: Vec<(Gf2Vector, u64)>,
    /// Hypothetical packet transmitted at `now` (present iff evaluating
    /// the transmitted-chunk metric).
    pub candidate: Option<Gf2Vector>,
    pub now: u64,
    pub link: &'a LinkSpec,
    pub delta: u32,
    pub late_formula: LateProbFormula,
}

impl<'a> MetricState<'a> {
    pub fn rho(&self) -> usize {
        self.receiver_basis.rank()
    }

    /// Number of outcome positions: outstanding plus candidate.
    pub fn positions(&self) -> usize {
        self.outstanding.len() + self.candidate.is_some() as usize
    }
}

/// One position's window distribution: the probability of each admissible
/// delay, the on-time total, and the late-branch mass.
#[derive(Debug, Clone)]
struct Window {
    vector: Gf2Vector,
    departure: u64,
    /// (delay, probability) for the delta admissible delays.
    entries: Vec<(u32, f64)>,
    on_time: f64,
    late: f64,
    degenerate: bool,
}

fn late_mass(on_time: f64, pe: f64, formula: LateProbFormula) -> f64 {
    match formula {
        LateProbFormula::Complement => (1.0 - on_time).max(0.0),
        LateProbFormula::PaperLiteral => (1.0 - on_time + pe).clamp(0.0, 1.0),
    }
}

fn build_windows(state: &MetricState) -> Vec<Window> {
    let mut windows = Vec::with_capacity(state.positions());
    for (vector, departure) in &state.outstanding {
        debug_assert!(*departure < state.now);
        let age = state.now - departure;
        let (entries, degenerate) = match conditional_pmf(state.link, age, state.delta) {
            Ok(entries) => (entries, false),
            // No residual delay mass: the packet is certainly not still in
            // flight, so it is forced late (erased as far as the metric is
            // concerned).
            Err(Error::DegenerateDelayState { .. }) => {
                ((1..=state.delta).map(|d| (age as u32 + d, 0.0)).collect(), true)
            }
            Err(e) => unreachable!("conditional_pmf: {e}"),
        };
        let on_time: f64 = entries.iter().map(|&(_, p)| p).sum();
        windows.push(Window {
            vector: vector.clone(),
            departure: *departure,
            entries,
            on_time,
            late: late_mass(on_time, state.link.loss.pe, state.late_formula),
            degenerate,
        });
    }
    if let Some(candidate) = &state.candidate {
        let entries = fresh_pmf(state.link, state.delta).expect("delta >= 1");
        let on_time: f64 = entries.iter().map(|&(_, p)| p).sum();
        windows.push(Window {
            vector: candidate.clone(),
            departure: state.now,
            entries,
            on_time,
            late: late_mass(on_time, state.link.loss.pe, state.late_formula),
            degenerate: false,
        });
    }
    windows
}

/// One joint outcome: which positions are on-time and with which delays.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTerm {
    /// Per position (departure-ascending, candidate last): on-time flag.
    pub on_time: Vec<bool>,
    /// Per position: the assigned delay for on-time positions.
    pub delay: Vec<Option<u32>>,
    /// Joint probability of this outcome.
    pub weight: f64,
}

/// Exhaustive stream over every on-time pattern crossed with every delay
/// assignment: (1 + delta)^positions terms.
pub struct TermStream {
    windows: Vec<Window>,
    /// Mixed-radix odometer: digit 0 is late, digit d in 1..=delta picks
    /// the d-th window entry.
    digits: Vec<u32>,
    radix: u32,
    done: bool,
}

impl Iterator for TermStream {
    type Item = OutcomeTerm;

    fn next(&mut self) -> Option<OutcomeTerm> {
        if self.done {
            return None;
        }
        let mut on_time = Vec::with_capacity(self.digits.len());
        let mut delay = Vec::with_capacity(self.digits.len());
        let mut weight = 1.0;
        for (digit, win) in self.digits.iter().zip(&self.windows) {
            if *digit == 0 {
                on_time.push(false);
                delay.push(None);
                weight *= win.late;
            } else {
                let (z, p) = win.entries[*digit as usize - 1];
                on_time.push(true);
                delay.push(Some(z));
                weight *= p;
            }
        }
        // Advance the odometer.
        let mut carried = true;
        for digit in &mut self.digits {
            *digit += 1;
            if *digit <= self.radix {
                carried = false;
                break;
            }
            *digit = 0;
        }
        if carried {
            self.done = true;
        }
        Some(OutcomeTerm { on_time, delay, weight })
    }
}

/// Enumerate every joint outcome of the state's positions.
pub fn enumerate_terms(state: &MetricState) -> TermStream {
    let windows = build_windows(state);
    let done = false;
    TermStream {
        digits: vec![0; windows.len()],
        radix: state.delta,
        windows,
        done,
    }
}

/// An on-time packet with its realized reception slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrival {
    pub vector: Gf2Vector,
    pub reception: u64,
    pub departure: u64,
}

/// On-time packets of a term sorted by reception time; ties broken by
/// earlier departure.
pub fn order_arrivals(term: &OutcomeTerm, state: &MetricState) -> Vec<Arrival> {
    let mut positions: Vec<(Gf2Vector, u64)> = state.outstanding.clone();
    if let Some(c) = &state.candidate {
        positions.push((c.clone(), state.now));
    }
    let mut arrivals: Vec<Arrival> = positions
        .into_iter()
        .zip(&term.delay)
        .filter_map(|((vector, departure), z)| {
            z.map(|z| Arrival {
                vector,
                reception: departure + z as u64,
                departure,
            })
        })
        .collect();
    arrivals.sort_by_key(|a| (a.reception, a.departure));
    arrivals
}

/// Replay arrivals in order against a snapshot of the receiver basis and
/// count how many are innovative at their turn. The snapshot is local;
/// the caller's basis is untouched.
pub fn innovation_gain(arrivals: &[Arrival], receiver: &Gf2Basis) -> usize {
    let mut snapshot = receiver.clone();
    arrivals
        .iter()
        .filter(|a| snapshot.insert(&a.vector).expect("lengths fixed per chunk"))
        .count()
}

/// Evaluation result with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    /// Expected innovative count after the horizon.
    pub value: f64,
    /// Total term weight; 1 under the complement formula.
    pub weight_sum: f64,
    /// Positions whose conditional window had no residual mass and were
    /// forced late.
    pub degenerate_positions: usize,
}

fn evaluate(state: &MetricState) -> MetricValue {
    let windows = build_windows(state);
    evaluate_windows(state, &windows)
}

fn evaluate_windows(state: &MetricState, windows: &[Window]) -> MetricValue {
    let rho = state.rho() as f64;
    let mut scratch = ScratchBasis::from_basis(&state.receiver_basis);
    let mut gain_acc = 0.0;
    let mut weight_sum = 0.0;
    subset_walk(windows, 0, 1.0, 0, &mut scratch, &mut gain_acc, &mut weight_sum);
    MetricValue {
        value: rho * weight_sum + gain_acc,
        weight_sum,
        degenerate_positions: windows.iter().filter(|w| w.degenerate).count(),
    }
}

/// Visit every on-time subset, carrying the product of per-position
/// branch masses and the incremental rank gain. Delay assignments within
/// a subset share one gain, so they contribute through the on-time totals.
fn subset_walk(
    windows: &[Window],
    pos: usize,
    weight: f64,
    gain: usize,
    scratch: &mut ScratchBasis,
    gain_acc: &mut f64,
    weight_sum: &mut f64,
) {
    if pos == windows.len() {
        *gain_acc += weight * gain as f64;
        *weight_sum += weight;
        return;
    }
    let win = &windows[pos];
    if win.late > 0.0 {
        subset_walk(windows, pos + 1, weight * win.late, gain, scratch, gain_acc, weight_sum);
    }
    if win.on_time > 0.0 {
        let mark = scratch.len();
        let grew = scratch.insert(&win.vector);
        subset_walk(
            windows,
            pos + 1,
            weight * win.on_time,
            gain + grew as usize,
            scratch,
            gain_acc,
            weight_sum,
        );
        scratch.truncate(mark);
    }
}

/// Expected innovative count given the candidate transmission (the
/// transmitted-chunk metric).
pub fn metric_x(state: &MetricState) -> Result<MetricValue> {
    if state.candidate.is_none() {
        return Err(Error::InvalidParameter(
            "metric_x requires a candidate packet".into(),
        ));
    }
    Ok(evaluate(state))
}

/// Expected innovative count from outstanding packets alone (the
/// current-time metric; also every cross-chunk component).
pub fn metric_y(state: &MetricState) -> Result<MetricValue> {
    if state.candidate.is_some() {
        return Err(Error::InvalidParameter(
            "metric_y requires no candidate packet".into(),
        ));
    }
    Ok(evaluate(state))
}

/// Reference evaluation over the explicit term stream, computing each
/// term's gain by reception-ordered replay. Exponentially slower than the
/// subset route; retained for validation.
pub fn evaluate_by_terms(state: &MetricState) -> MetricValue {
    let rho = state.rho() as f64;
    let mut value = 0.0;
    let mut weight_sum = 0.0;
    let mut degenerate = 0;
    let windows = build_windows(state);
    degenerate += windows.iter().filter(|w| w.degenerate).count();
    for term in enumerate_terms(state) {
        if term.weight == 0.0 {
            continue;
        }
        let arrivals = order_arrivals(&term, state);
        let gain = innovation_gain(&arrivals, &state.receiver_basis);
        value += term.weight * (rho + gain as f64);
        weight_sum += term.weight;
    }
    MetricValue {
        value,
        weight_sum,
        degenerate_positions: degenerate,
    }
}

/// Sampling estimate of the same expectation: draw each position's
/// outcome from its window distribution, replay the realized arrivals in
/// reception order, and average the resulting innovative counts. Only
/// meaningful under the complement formula, where the outcome space is a
/// distribution.
pub fn monte_carlo_estimate<R: RngCore>(state: &MetricState, samples: u32, rng: &mut R) -> f64 {
    assert!(samples > 0);
    let windows = build_windows(state);
    let rho = state.rho();
    let mut total: u64 = 0;
    let mut arrivals: Vec<Arrival> = Vec::with_capacity(windows.len());
    for _ in 0..samples {
        arrivals.clear();
        for win in &windows {
            let u = uniform_f64(rng);
            let mut acc = 0.0;
            for &(z, p) in &win.entries {
                acc += p;
                if u < acc {
                    arrivals.push(Arrival {
                        vector: win.vector.clone(),
                        reception: win.departure + z as u64,
                        departure: win.departure,
                    });
                    break;
                }
            }
        }
        arrivals.sort_by_key(|a| (a.reception, a.departure));
        total += (rho + innovation_gain(&arrivals, &state.receiver_basis)) as u64;
    }
    total as f64 / samples as f64
}

/// Cached per-link evaluator for the policies: window probabilities
/// depend only on a packet's age (and the fixed link model and horizon),
/// so they are memoized across chunks and slots. Gains always depend on
/// the live vectors and are recomputed.
#[derive(Debug)]
pub struct MetricEngine {
    spec: LinkSpec,
    delta: u32,
    late_formula: LateProbFormula,
    by_age: HashMap<u64, CachedWindow>,
    fresh: CachedWindow,
}

#[derive(Debug, Clone)]
struct CachedWindow {
    entries: Vec<(u32, f64)>,
    on_time: f64,
    late: f64,
    degenerate: bool,
}

impl MetricEngine {
    pub fn new(spec: LinkSpec, delta: u32, late_formula: LateProbFormula) -> Self {
        let entries = fresh_pmf(&spec, delta).expect("delta >= 1");
        let on_time: f64 = entries.iter().map(|&(_, p)| p).sum();
        let fresh = CachedWindow {
            late: late_mass(on_time, spec.loss.pe, late_formula),
            entries,
            on_time,
            degenerate: false,
        };
        MetricEngine {
            spec,
            delta,
            late_formula,
            by_age: HashMap::new(),
            fresh,
        }
    }

    pub fn delta(&self) -> u32 {
        self.delta
    }

    pub fn late_formula(&self) -> LateProbFormula {
        self.late_formula
    }

    fn window_for_age(&mut self, age: u64) -> &CachedWindow {
        let spec = &self.spec;
        let delta = self.delta;
        let formula = self.late_formula;
        self.by_age.entry(age).or_insert_with(|| {
            let (entries, degenerate) = match conditional_pmf(spec, age, delta) {
                Ok(entries) => (entries, false),
                Err(_) => ((1..=delta).map(|d| (age as u32 + d, 0.0)).collect(), true),
            };
            let on_time: f64 = entries.iter().map(|&(_, p)| p).sum();
            CachedWindow {
                late: late_mass(on_time, spec.loss.pe, formula),
                entries,
                on_time,
                degenerate,
            }
        })
    }

    /// Same expectation as `metric_x`/`metric_y`, built from cached
    /// windows.
    pub fn expected_innovative(
        &mut self,
        receiver: &Gf2Basis,
        outstanding: &[(Gf2Vector, u64)],
        candidate: Option<&Gf2Vector>,
        now: u64,
    ) -> MetricValue {
        let mut windows = Vec::with_capacity(outstanding.len() + candidate.is_some() as usize);
        for (vector, departure) in outstanding {
            let cached = self.window_for_age(now - departure).clone();
            windows.push(Window {
                vector: vector.clone(),
                departure: *departure,
                entries: cached.entries,
                on_time: cached.on_time,
                late: cached.late,
                degenerate: cached.degenerate,
            });
        }
        if let Some(c) = candidate {
            windows.push(Window {
                vector: c.clone(),
                departure: now,
                entries: self.fresh.entries.clone(),
                on_time: self.fresh.on_time,
                late: self.fresh.late,
                degenerate: false,
            });
        }
        let rho = receiver.rank() as f64;
        let mut scratch = ScratchBasis::from_basis(receiver);
        let mut gain_acc = 0.0;
        let mut weight_sum = 0.0;
        subset_walk(&windows, 0, 1.0, 0, &mut scratch, &mut gain_acc, &mut weight_sum);
        MetricValue {
            value: rho * weight_sum + gain_acc,
            weight_sum,
            degenerate_positions: windows.iter().filter(|w| w.degenerate).count(),
        }
    }
}

/// Randomized cross-check of the enumeration against the sampling
/// estimate, over states spanning unit and log-normal delays, lossless
/// and lossy links, with and without a candidate.
pub mod check {
    use super::*;
    use crate::coding::generate_innovative_packet;
    use crate::linkmodel::{DelayModel, LossModel};
    use crate::rng::{uniform_index, SeedTree};
    use serde::Serialize;

    #[derive(Debug, Clone, Serialize)]
    pub struct CheckReport {
        pub states: u32,
        pub samples: u32,
        pub master_seed: u64,
        pub max_relative_deviation: f64,
        /// Index of the state attaining the maximum.
        pub worst_state: u32,
    }

    fn link_specs() -> Vec<LinkSpec> {
        let mut specs = Vec::new();
        for pe in [0.0, 1.0 / 3.0] {
            let loss = LossModel::new(pe).unwrap();
            specs.push(LinkSpec::new(loss, DelayModel::unit()));
            specs.push(LinkSpec::new(loss, DelayModel::lognormal(0.5, 0.5).unwrap()));
            specs.push(LinkSpec::new(loss, DelayModel::lognormal(1.0, 1.0).unwrap()));
        }
        specs
    }

    /// Draw one state: rho in 1..=chunk_size on a chunk of size 4 or 8,
    /// up to 6 outstanding packets with ages up to 10, delta in 1..=4.
    fn draw_state<'a>(
        specs: &'a [LinkSpec],
        rng: &mut rand_chacha::ChaCha12Rng,
        with_candidate: bool,
    ) -> MetricState<'a> {
        let link = &specs[uniform_index(rng, specs.len())];
        let chunk_size = if uniform_index(rng, 2) == 0 { 4 } else { 8 };
        let target_rho = 1 + uniform_index(rng, chunk_size);
        let mut receiver = Gf2Basis::new();
        while receiver.rank() < target_rho {
            receiver.insert(&Gf2Vector::random(chunk_size, rng)).unwrap();
        }
        let tau = uniform_index(rng, 7);
        let now = 40u64;
        let mut departures: Vec<u64> = (0..tau)
            .map(|_| now - 1 - uniform_index(rng, 10) as u64)
            .collect();
        departures.sort_unstable();
        let outstanding = departures
            .into_iter()
            .map(|d| (Gf2Vector::random(chunk_size, rng), d))
            .collect();
        let candidate = (with_candidate && receiver.rank() < chunk_size).then(|| {
            let full = Gf2Basis::full(chunk_size);
            generate_innovative_packet(&full, &receiver, rng).unwrap()
        });
        MetricState {
            receiver_basis: receiver,
            chunk_size,
            outstanding,
            candidate,
            now,
            link,
            delta: 1 + uniform_index(rng, 4) as u32,
            late_formula: LateProbFormula::Complement,
        }
    }

    /// Compare the enumeration value against a fresh sampling estimate on
    /// `states` random states.
    pub fn run(states: u32, samples: u32, master_seed: u64) -> CheckReport {
        let specs = link_specs();
        let tree = SeedTree::from_master(master_seed);
        let mut worst = 0.0f64;
        let mut worst_state = 0;
        for i in 0..states {
            let mut gen_rng = tree.child("state", i as u64).rng();
            let state = draw_state(&specs, &mut gen_rng, i % 2 == 0);
            let exact = if state.candidate.is_some() {
                metric_x(&state).unwrap().value
            } else {
                metric_y(&state).unwrap().value
            };
            let mut mc_rng = tree.child("oracle", i as u64).rng();
            let mc = monte_carlo_estimate(&state, samples, &mut mc_rng);
            let dev = if exact.abs() < 1e-9 && mc.abs() < 1e-9 {
                0.0
            } else {
                (exact - mc).abs() / exact.max(1e-9)
            };
            if dev > worst {
                worst = dev;
                worst_state = i;
            }
        }
        CheckReport {
            states,
            samples,
            master_seed,
            max_relative_deviation: worst,
            worst_state,
        }
    }
}
