//! Named experiment presets and table-style sweeps.
//!
//! Delay models I-V assign per-link log-normal parameters, loss models
//! I-III per-link erasure probabilities, both parameterized by the
//! network length. A sweep table runs a grid of (model, length, chunk
//! size) cells for all five policies and derives the relative-improvement
//! statistics from each cell's means.

use crate::coding::CodeConfig;
use crate::engine::{default_max_slots, run_cell, CellConfig};
use crate::error::{Error, Result};
use crate::linkmodel::{DelayModel, LinkSpec, LossModel};
use crate::netstate::Topology;
use crate::policy::{PolicyConfig, PolicyKind};
use crate::rng::SeedTree;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Per-link (mu, sigma) assignments for the delayed-link experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelayModelId {
    I,
    II,
    III,
    IV,
    V,
}

/// Per-link erasure probabilities for the unit-delay experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossModelId {
    I,
    II,
    III,
}

impl fmt::Display for DelayModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DelayModelId::I => "I",
            DelayModelId::II => "II",
            DelayModelId::III => "III",
            DelayModelId::IV => "IV",
            DelayModelId::V => "V",
        })
    }
}

impl FromStr for DelayModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" => Ok(DelayModelId::I),
            "II" | "ii" | "2" => Ok(DelayModelId::II),
            "III" | "iii" | "3" => Ok(DelayModelId::III),
            "IV" | "iv" | "4" => Ok(DelayModelId::IV),
            "V" | "v" | "5" => Ok(DelayModelId::V),
            other => Err(Error::InvalidParameter(format!(
                "unknown delay model {other:?} (expected I..V)"
            ))),
        }
    }
}

impl fmt::Display for LossModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossModelId::I => "I",
            LossModelId::II => "II",
            LossModelId::III => "III",
        })
    }
}

impl FromStr for LossModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" => Ok(LossModelId::I),
            "II" | "ii" | "2" => Ok(LossModelId::II),
            "III" | "iii" | "3" => Ok(LossModelId::III),
            other => Err(Error::InvalidParameter(format!(
                "unknown loss model {other:?} (expected I..III)"
            ))),
        }
    }
}

/// (mu, sigma) of link `i` (1-based) in a length-`l` network.
pub fn delay_params(id: DelayModelId, i: usize, l: usize) -> (f64, f64) {
    debug_assert!(i >= 1 && i <= l);
    let first_half = i <= l / 2;
    match id {
        DelayModelId::I => (0.5, 0.5),
        DelayModelId::II => (1.0, 0.5),
        DelayModelId::III => (1.0, 1.0),
        DelayModelId::IV => {
            if first_half {
                (0.5, 0.5)
            } else {
                (1.0, 1.0)
            }
        }
        DelayModelId::V => {
            if first_half {
                (1.0, 1.0)
            } else {
                (0.5, 0.5)
            }
        }
    }
}

/// Erasure probability of link `i` (1-based) in a length-`l` network.
pub fn loss_pe(id: LossModelId, i: usize, l: usize) -> f64 {
    debug_assert!(i >= 1 && i <= l);
    match id {
        LossModelId::I => 1.0 / 3.0,
        LossModelId::II => (1.0 / 3.0) * (i as f64 / l as f64),
        LossModelId::III => (1.0 / 3.0) * ((l - i + 1) as f64 / l as f64),
    }
}

/// Link specs of a length-`l` line under the given presets. `None` delay
/// means unit delay; `None` loss means lossless.
pub fn preset_line_specs(
    delay: Option<DelayModelId>,
    loss: Option<LossModelId>,
    l: usize,
) -> Result<Vec<LinkSpec>> {
    (1..=l)
        .map(|i| {
            let delay_model = match delay {
                Some(id) => {
                    let (mu, sigma) = delay_params(id, i, l);
                    DelayModel::lognormal(mu, sigma)?
                }
                None => DelayModel::unit(),
            };
            let pe = loss.map_or(0.0, |id| loss_pe(id, i, l));
            Ok(LinkSpec::new(LossModel::new(pe)?, delay_model))
        })
        .collect()
}

/// Mean delivery time of each policy on one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeans {
    pub random: f64,
    pub rp: f64,
    pub lrf: f64,
    pub mdf: f64,
    pub mcmf: f64,
}

/// Relative delivery-time statistics of one cell, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// (min(RP,LRF) - MDF) / min(RP,LRF).
    pub i1: f64,
    /// (min(RP,LRF) - MCMF) / min(RP,LRF).
    pub i2: f64,
    /// (Random - policy) / Random, per feedback policy.
    pub ir_rp: f64,
    pub ir_lrf: f64,
    pub ir_mdf: f64,
    pub ir_mcmf: f64,
    /// (LRF - RP) / LRF; positive when RP is faster.
    pub ie: f64,
    /// (MCMF - MDF) / MCMF.
    pub ip: f64,
}

/// Derive every comparison statistic from one cell's means.
pub fn improvement_stats(means: &PolicyMeans) -> Result<ComparisonRow> {
    let all = [means.random, means.rp, means.lrf, means.mdf, means.mcmf];
    if all.iter().any(|&m| m.is_nan() || m <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "improvement statistics need positive means, got {means:?}"
        )));
    }
    let best_existing = means.rp.min(means.lrf);
    let pct = |num: f64, den: f64| 100.0 * num / den;
    Ok(ComparisonRow {
        i1: pct(best_existing - means.mdf, best_existing),
        i2: pct(best_existing - means.mcmf, best_existing),
        ir_rp: pct(means.random - means.rp, means.random),
        ir_lrf: pct(means.random - means.lrf, means.random),
        ir_mdf: pct(means.random - means.mdf, means.random),
        ir_mcmf: pct(means.random - means.mcmf, means.random),
        ie: pct(means.lrf - means.rp, means.lrf),
        ip: pct(means.mcmf - means.mdf, means.mcmf),
    })
}

/// The reproducible sweep tables: II/IV lossless identical links (delay
/// I-III), III/V lossless non-identical (delay IV-V), VII lossy unit
/// delay (loss I), VIII lossy non-identical (loss II-III), IX lossy all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableId {
    II,
    III,
    IV,
    V,
    VII,
    VIII,
    IX,
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableId::II => "II",
            TableId::III => "III",
            TableId::IV => "IV",
            TableId::V => "V",
            TableId::VII => "VII",
            TableId::VIII => "VIII",
            TableId::IX => "IX",
        })
    }
}

impl FromStr for TableId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "II" => Ok(TableId::II),
            "III" => Ok(TableId::III),
            "IV" => Ok(TableId::IV),
            "V" => Ok(TableId::V),
            "VII" => Ok(TableId::VII),
            "VIII" => Ok(TableId::VIII),
            "IX" => Ok(TableId::IX),
            other => Err(Error::InvalidParameter(format!(
                "unknown table {other:?} (expected II, III, IV, V, VII, VIII or IX)"
            ))),
        }
    }
}

/// Run-count scale: paper protocol or reduced desk counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    /// (realizations, trials) for a policy at this scale. Metric policies
    /// run fewer desk-scale trials; their enumeration dominates cost.
    pub fn runs(&self, kind: PolicyKind) -> (u32, u32) {
        match (self, kind.needs_link_model()) {
            (Scale::Paper, _) => (100, 100),
            (Scale::Desk, true) => (10, 10),
            (Scale::Desk, false) => (20, 20),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        })
    }
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::InvalidParameter(format!(
                "unknown scale {other:?} (expected desk or paper)"
            ))),
        }
    }
}

/// One (cell, policy) result row; the flat record behind the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub table: String,
    pub cell: String,
    pub policy: String,
    pub delay_model: String,
    pub loss_model: String,
    pub l: usize,
    pub k: usize,
    pub chunk_size: usize,
    pub m: Option<usize>,
    pub delta: Option<u32>,
    pub realizations: u32,
    pub trials: u32,
    pub mean: f64,
    pub stderr: f64,
    pub seed: u64,
    /// Total simulated slots across the cell's runs; deterministic, so
    /// result files stay byte-identical across re-runs (wall-clock timing
    /// lives in the manifest).
    pub runtime_ms: u64,
}

/// Comparison statistics of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub cell: String,
    pub means: PolicyMeans,
    pub stats: ComparisonRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableResult {
    pub table: String,
    pub scale: String,
    pub master_seed: u64,
    pub k: usize,
    /// (realizations, trials) used for the count-based policies and the
    /// metric policies, in that order.
    pub runs_plain: (u32, u32),
    pub runs_metric: (u32, u32),
    pub rows: Vec<CellRow>,
    pub comparisons: Vec<CellComparison>,
}

/// One grid cell: the line preset plus geometry.
#[derive(Debug, Clone, Copy)]
struct GridCell {
    delay: Option<DelayModelId>,
    loss: Option<LossModelId>,
    l: usize,
    chunk_size: usize,
}

impl GridCell {
    fn label(&self) -> String {
        let model = match (self.delay, self.loss) {
            (Some(d), None) => format!("delay-{d}"),
            (None, Some(p)) => format!("loss-{p}"),
            (Some(d), Some(p)) => format!("delay-{d}+loss-{p}"),
            (None, None) => "unit-lossless".to_string(),
        };
        format!("{model}_L{}_c{}", self.l, self.chunk_size)
    }
}

fn grid(table: TableId) -> Vec<GridCell> {
    let delays: &[DelayModelId] = match table {
        TableId::II | TableId::IV => &[DelayModelId::I, DelayModelId::II, DelayModelId::III],
        TableId::III | TableId::V => &[DelayModelId::IV, DelayModelId::V],
        _ => &[],
    };
    let losses: &[LossModelId] = match table {
        TableId::VII => &[LossModelId::I],
        TableId::VIII => &[LossModelId::II, LossModelId::III],
        TableId::IX => &[LossModelId::I, LossModelId::II, LossModelId::III],
        _ => &[],
    };
    let mut cells = Vec::new();
    let geometries = [(2usize, 8usize), (2, 32), (8, 8), (8, 32)];
    for &d in delays {
        for &(l, c) in &geometries {
            cells.push(GridCell {
                delay: Some(d),
                loss: None,
                l,
                chunk_size: c,
            });
        }
    }
    for &p in losses {
        for &(l, c) in &geometries {
            cells.push(GridCell {
                delay: None,
                loss: Some(p),
                l,
                chunk_size: c,
            });
        }
    }
    cells
}

/// Sweep parameters beyond the table id; defaults follow the published
/// protocol (k=64, m=delta=4).
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub k: usize,
    pub m: usize,
    pub delta: u32,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            k: 64,
            m: 4,
            delta: 4,
        }
    }
}

const POLICIES: [PolicyKind; 5] = [
    PolicyKind::Random,
    PolicyKind::Rp,
    PolicyKind::Lrf,
    PolicyKind::Mdf,
    PolicyKind::Mcmf,
];

/// Run a full table. Cell order (and therefore row order) is fixed by
/// the grid, independent of scheduling.
pub fn run_table(
    table: TableId,
    scale: Scale,
    master_seed: u64,
    opts: &SweepOptions,
) -> Result<TableResult> {
    let tree = SeedTree::from_master(master_seed).child("table", table as u64);
    let mut rows = Vec::new();
    let mut comparisons = Vec::new();
    for (cell_idx, cell) in grid(table).iter().enumerate() {
        let specs = preset_line_specs(cell.delay, cell.loss, cell.l)?;
        let topology = Topology::line(specs)?;
        if !opts.k.is_multiple_of(cell.chunk_size) {
            return Err(Error::InvalidParameter(format!(
                "chunk size {} does not divide k={}",
                cell.chunk_size, opts.k
            )));
        }
        let code = CodeConfig::new(opts.k, opts.k / cell.chunk_size)?;
        // One seed per cell, shared by all policies: every policy sees
        // the same network realizations, so on unit-delay cells MDF and
        // MCMF reproduce identically, trial for trial.
        let cell_seed = tree.child("cell", cell_idx as u64);
        let mut means = [0.0f64; 5];
        for (p_idx, &kind) in POLICIES.iter().enumerate() {
            let mut policy = PolicyConfig::new(kind);
            policy.m = opts.m;
            policy.delta = opts.delta;
            let (realizations, trials) = scale.runs(kind);
            let cfg = CellConfig {
                code,
                policy,
                realizations,
                trials,
                max_slots: default_max_slots(&code, &topology),
            };
            let result = run_cell(&topology, &cfg, cell_seed)?;
            means[p_idx] = result.mean;
            rows.push(CellRow {
                table: table.to_string(),
                cell: cell.label(),
                policy: kind.name().to_string(),
                delay_model: cell.delay.map_or_else(|| "unit".into(), |d| d.to_string()),
                loss_model: cell.loss.map_or_else(|| "lossless".into(), |p| p.to_string()),
                l: cell.l,
                k: opts.k,
                chunk_size: cell.chunk_size,
                m: kind.needs_link_model().then_some(opts.m),
                delta: kind.needs_link_model().then_some(opts.delta),
                realizations,
                trials,
                mean: result.mean,
                stderr: result.stderr,
                seed: cell_seed.seed(),
                runtime_ms: result.total_slots,
            });
        }
        let means = PolicyMeans {
            random: means[0],
            rp: means[1],
            lrf: means[2],
            mdf: means[3],
            mcmf: means[4],
        };
        comparisons.push(CellComparison {
            cell: cell.label(),
            means,
            stats: improvement_stats(&means)?,
        });
    }
    Ok(TableResult {
        table: table.to_string(),
        scale: scale.to_string(),
        master_seed,
        k: opts.k,
        runs_plain: scale.runs(PolicyKind::Random),
        runs_metric: scale.runs(PolicyKind::Mdf),
        rows,
        comparisons,
    })
}

pub const CSV_HEADER: &str = "table,cell,policy,delay_model,loss_model,L,k,chunk_size,m,delta,realizations,trials,mean,stderr,seed,runtime_ms";

fn opt_to_string<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

/// Render rows as CSV, preceded by `#`-prefixed header lines declaring
/// the protocol (scale, run counts, seed).
pub fn render_csv(result: &TableResult) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# table={} scale={} k={} seed={}\n",
        result.table, result.scale, result.k, result.master_seed
    ));
    out.push_str(&format!(
        "# runs: random/rp/lrf {}x{}, mdf/mcmf {}x{}\n",
        result.runs_plain.0, result.runs_plain.1, result.runs_metric.0, result.runs_metric.1
    ));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.4},{:.4},{},{}\n",
            r.table,
            r.cell,
            r.policy,
            r.delay_model,
            r.loss_model,
            r.l,
            r.k,
            r.chunk_size,
            opt_to_string(&r.m),
            opt_to_string(&r.delta),
            r.realizations,
            r.trials,
            r.mean,
            r.stderr,
            r.seed,
            r.runtime_ms
        ));
    }
    out
}

/// Render the per-cell comparison statistics as CSV.
pub fn render_comparisons_csv(result: &TableResult) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# table={} scale={} k={} seed={}\n",
        result.table, result.scale, result.k, result.master_seed
    ));
    out.push_str("cell,random,rp,lrf,mdf,mcmf,I1,I2,IR_rp,IR_lrf,IR_mdf,IR_mcmf,IE,IP\n");
    for c in &result.comparisons {
        let m = &c.means;
        let s = &c.stats;
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}\n",
            c.cell,
            m.random,
            m.rp,
            m.lrf,
            m.mdf,
            m.mcmf,
            s.i1,
            s.i2,
            s.ir_rp,
            s.ir_lrf,
            s.ir_mdf,
            s.ir_mcmf,
            s.ie,
            s.ip
        ));
    }
    out
}
