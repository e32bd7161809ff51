//! Network topology and per-link transcripts.
//!
//! A trial owns one `NetworkState`: per-node, per-chunk bases of received
//! innovative packets plus per-link records of everything transmitted.
//! Feedback is instantaneous and lossless, so a transmitting node's view
//! of its link is just a read of this state: received counts come from
//! the head node's bases, outstanding packets are transmissions not yet
//! stored at the head.

use crate::coding::{CodeConfig, Packet};
use crate::error::{Error, Result};
use crate::gf2::{Gf2Basis, Gf2Vector};
use crate::linkmodel::LinkSpec;

/// A directed link with its loss/delay model.
#[derive(Debug, Clone)]
pub struct LinkDef {
    pub tail: usize,
    pub head: usize,
    pub spec: LinkSpec,
}

/// Directed topology with one source and one sink. Nodes are indexed
/// 0..node_count; links 0..L.
#[derive(Debug, Clone)]
pub struct Topology {
    links: Vec<LinkDef>,
    node_count: usize,
    source: usize,
    sink: usize,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(links: Vec<LinkDef>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::InvalidParameter("topology needs at least one link".into()));
        }
        let node_count = links
            .iter()
            .flat_map(|l| [l.tail, l.head])
            .max()
            .unwrap()
            + 1;
        let mut incoming = vec![Vec::new(); node_count];
        let mut outgoing = vec![Vec::new(); node_count];
        for (i, l) in links.iter().enumerate() {
            if l.tail == l.head {
                return Err(Error::InvalidParameter(format!(
                    "link {i} is a self-loop at node {}",
                    l.tail
                )));
            }
            outgoing[l.tail].push(i);
            incoming[l.head].push(i);
        }
        let sources: Vec<usize> = (0..node_count)
            .filter(|&n| incoming[n].is_empty() && !outgoing[n].is_empty())
            .collect();
        let sinks: Vec<usize> = (0..node_count)
            .filter(|&n| outgoing[n].is_empty() && !incoming[n].is_empty())
            .collect();
        if sources.len() != 1 || sinks.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "unicast topology requires exactly one source and one sink, found {} and {}",
                sources.len(),
                sinks.len()
            )));
        }
        Ok(Topology {
            links,
            node_count,
            source: sources[0],
            sink: sinks[0],
            incoming,
            outgoing,
        })
    }

    /// Line of `length` links: node i-1 -> node i for i in 1..=length.
    pub fn line(specs: Vec<LinkSpec>) -> Result<Self> {
        Topology::new(
            specs
                .into_iter()
                .enumerate()
                .map(|(i, spec)| LinkDef {
                    tail: i,
                    head: i + 1,
                    spec,
                })
                .collect(),
        )
    }

    pub fn links(&self) -> &[LinkDef] {
        &self.links
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Links sharing link i's head (the receiving node's in-links).
    pub fn receiver_group(&self, link: usize) -> &[usize] {
        &self.incoming[self.links[link].head]
    }

    /// Links sharing link i's tail (the transmitting node's out-links).
    pub fn transmitter_group(&self, link: usize) -> &[usize] {
        &self.outgoing[self.links[link].tail]
    }

    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }
}

/// One transmitted packet and whether it ever entered the receiver's
/// innovative set. Outstanding means "not in R": still in flight, erased,
/// or arrived non-innovative and discarded.
#[derive(Debug, Clone)]
pub struct TxRecord {
    pub vector: Gf2Vector,
    pub departure: u64,
    pub in_r: bool,
}

/// One stored (received-innovative) packet.
#[derive(Debug, Clone)]
pub struct RxRecord {
    pub vector: Gf2Vector,
    pub departure: u64,
    pub arrival: u64,
}

#[derive(Debug, Clone, Default)]
struct ChunkTranscript {
    tx: Vec<TxRecord>,
    rx: Vec<RxRecord>,
}

/// Per-link transmit/receive records, split by chunk.
#[derive(Debug, Clone)]
pub struct LinkTranscript {
    chunks: Vec<ChunkTranscript>,
    last_departure: Option<u64>,
}

impl LinkTranscript {
    fn new(q: usize) -> Self {
        LinkTranscript {
            chunks: vec![ChunkTranscript::default(); q],
            last_departure: None,
        }
    }

    pub fn transmitted(&self, chunk: usize) -> &[TxRecord] {
        &self.chunks[chunk].tx
    }

    pub fn received(&self, chunk: usize) -> &[RxRecord] {
        &self.chunks[chunk].rx
    }
}

/// Identifies a transmission within a trial, for matching arrivals back
/// to their transcript entry by packet identity rather than by vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxId {
    pub link: usize,
    pub chunk: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalOutcome {
    Stored,
    Discarded,
}

/// All mutable coding state of one trial.
#[derive(Debug)]
pub struct NetworkState<'t> {
    topo: &'t Topology,
    code: CodeConfig,
    /// [node][chunk] basis of received-innovative vectors; the source is
    /// seeded with the full space (it holds the original message packets).
    node_basis: Vec<Vec<Gf2Basis>>,
    /// [node][chunk] stored packets as received, for random combining.
    node_received: Vec<Vec<Vec<Gf2Vector>>>,
    transcripts: Vec<LinkTranscript>,
}

impl<'t> NetworkState<'t> {
    pub fn new(topo: &'t Topology, code: CodeConfig) -> Self {
        let cs = code.chunk_size();
        let mut node_basis = Vec::with_capacity(topo.node_count());
        let mut node_received = Vec::with_capacity(topo.node_count());
        for node in 0..topo.node_count() {
            if node == topo.source() {
                node_basis.push(vec![Gf2Basis::full(cs); code.q]);
                node_received.push(vec![
                    (0..cs).map(|i| Gf2Vector::unit(cs, i)).collect();
                    code.q
                ]);
            } else {
                node_basis.push(vec![Gf2Basis::new(); code.q]);
                node_received.push(vec![Vec::new(); code.q]);
            }
        }
        NetworkState {
            topo,
            code,
            node_basis,
            node_received,
            transcripts: (0..topo.link_count())
                .map(|_| LinkTranscript::new(code.q))
                .collect(),
        }
    }

    pub fn topology(&self) -> &Topology {
        self.topo
    }

    pub fn code(&self) -> &CodeConfig {
        &self.code
    }

    pub fn transcript(&self, link: usize) -> &LinkTranscript {
        &self.transcripts[link]
    }

    pub fn basis(&self, node: usize, chunk: usize) -> &Gf2Basis {
        &self.node_basis[node][chunk]
    }

    pub fn received_vectors(&self, node: usize, chunk: usize) -> &[Gf2Vector] {
        &self.node_received[node][chunk]
    }

    /// Innovative count at `node` for `chunk` (the source reads k/q).
    pub fn rank(&self, node: usize, chunk: usize) -> u16 {
        self.node_basis[node][chunk].rank() as u16
    }

    pub fn sink_ranks(&self) -> Vec<u16> {
        (0..self.code.q)
            .map(|c| self.rank(self.topo.sink(), c))
            .collect()
    }

    pub fn sink_decodable(&self) -> bool {
        let cs = self.code.chunk_size();
        (0..self.code.q).all(|c| self.node_basis[self.topo.sink()][c].rank() == cs)
    }

    /// Append a transmission to the link transcript. At most one packet
    /// per link per slot.
    pub fn record_transmission(&mut self, link: usize, packet: &Packet) -> Result<TxId> {
        let t = &mut self.transcripts[link];
        if t.last_departure == Some(packet.departure) {
            return Err(Error::SchedulingViolation(format!(
                "link {link} already transmitted at slot {}",
                packet.departure
            )));
        }
        debug_assert!(t.last_departure.is_none_or(|d| d < packet.departure));
        t.last_departure = Some(packet.departure);
        let records = &mut t.chunks[packet.chunk].tx;
        records.push(TxRecord {
            vector: packet.vector.clone(),
            departure: packet.departure,
            in_r: false,
        });
        Ok(TxId {
            link,
            chunk: packet.chunk,
            index: records.len() - 1,
        })
    }

    /// Deliver a transmitted packet to the head node at `slot`. Stored iff
    /// innovative for the node's basis of that chunk; discarded otherwise.
    pub fn record_arrival(&mut self, id: TxId, slot: u64) -> Result<ArrivalOutcome> {
        let head = self.topo.links()[id.link].head;
        let (vector, departure) = {
            let rec = &self.transcripts[id.link].chunks[id.chunk].tx[id.index];
            (rec.vector.clone(), rec.departure)
        };
        debug_assert!(slot > departure);
        let basis = &mut self.node_basis[head][id.chunk];
        if !basis.insert(&vector)? {
            return Ok(ArrivalOutcome::Discarded);
        }
        self.node_received[head][id.chunk].push(vector.clone());
        let chunk_t = &mut self.transcripts[id.link].chunks[id.chunk];
        chunk_t.tx[id.index].in_r = true;
        chunk_t.rx.push(RxRecord {
            vector,
            departure,
            arrival: slot,
        });
        Ok(ArrivalOutcome::Stored)
    }

    /// The transmitting node's feedback view of one link: pure read.
    pub fn feedback_view(&self, link: usize) -> FeedbackView<'_> {
        FeedbackView { state: self, link }
    }
}

/// What the transmitter of a link knows at decision time: received counts
/// at both ends and its own not-yet-received transmissions, with
/// timestamps.
#[derive(Debug, Clone, Copy)]
pub struct FeedbackView<'a> {
    state: &'a NetworkState<'a>,
    link: usize,
}

impl<'a> FeedbackView<'a> {
    pub fn link(&self) -> usize {
        self.link
    }

    pub fn code(&self) -> &CodeConfig {
        &self.state.code
    }

    /// True iff the transmitting node is the source.
    pub fn at_source(&self) -> bool {
        self.def().tail == self.state.topo.source()
    }

    fn def(&self) -> &'a LinkDef {
        &self.state.topo.links()[self.link]
    }

    /// Innovative count at the receiving node.
    pub fn rho(&self, chunk: usize) -> u16 {
        self.state.rank(self.def().head, chunk)
    }

    /// Innovative count at the transmitting node (k/q at the source).
    pub fn upstream(&self, chunk: usize) -> u16 {
        self.state.rank(self.def().tail, chunk)
    }

    pub fn receiver_basis(&self, chunk: usize) -> &'a Gf2Basis {
        self.state.basis(self.def().head, chunk)
    }

    pub fn own_basis(&self, chunk: usize) -> &'a Gf2Basis {
        self.state.basis(self.def().tail, chunk)
    }

    pub fn own_received(&self, chunk: usize) -> &'a [Gf2Vector] {
        self.state.received_vectors(self.def().tail, chunk)
    }

    /// Transmitted-but-not-received count for a chunk.
    pub fn outstanding_count(&self, chunk: usize) -> usize {
        self.state.transcripts[self.link].chunks[chunk]
            .tx
            .iter()
            .filter(|r| !r.in_r)
            .count()
    }

    /// All outstanding packets of a chunk, departure-ascending.
    pub fn outstanding(&self, chunk: usize) -> Vec<(Gf2Vector, u64)> {
        self.state.transcripts[self.link].chunks[chunk]
            .tx
            .iter()
            .filter(|r| !r.in_r)
            .map(|r| (r.vector.clone(), r.departure))
            .collect()
    }

    /// The last `m` outstanding packets of a chunk, departure-ascending.
    pub fn outstanding_last(&self, chunk: usize, m: usize) -> Vec<(Gf2Vector, u64)> {
        let tx = &self.state.transcripts[self.link].chunks[chunk].tx;
        let mut out: Vec<(Gf2Vector, u64)> = tx
            .iter()
            .rev()
            .filter(|r| !r.in_r)
            .take(m)
            .map(|r| (r.vector.clone(), r.departure))
            .collect();
        out.reverse();
        out
    }

    pub fn link_spec(&self) -> &'a LinkSpec {
        &self.def().spec
    }
}
