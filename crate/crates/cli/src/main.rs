//! chunksched: delivery-time simulator for chunked network codes over
//! lossy, delayed line networks.

mod config;
mod manifest;

use anyhow::{bail, Context};
use chunksched::engine::{run_cell, run_trial, CellConfig, TrialSettings};
use chunksched::experiments::{
    render_comparisons_csv, render_csv, run_table, Scale, SweepOptions, TableId, CSV_HEADER,
};
use chunksched::linkmodel::{lognormal_moments, DelayKind, DelayModel, DEFAULT_Z_CAP};
use chunksched::metric::check as metric_check;
use chunksched::metric::LateProbFormula;
use chunksched::optimality::{render_verifier_csv, run_verifier, VerifierConfig};
use chunksched::policy::{PolicyKind, TxMode};
use chunksched::rng::SeedTree;
use clap::{Args, Parser, Subcommand};
use config::SimConfig;
use manifest::Manifest;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(
    name = "chunksched",
    version,
    about = "Chunk-scheduling policy simulator for coded transmission over lossy, delayed links"
)]
struct Cli {
    /// Master seed (CHUNKSCHED_SEED applies when the flag is absent).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation cell from a config file.
    Simulate(SimulateArgs),
    /// Run one of the published comparison tables.
    Sweep(SweepArgs),
    /// Exhaustively check MDF's probe-slot choices on a single link.
    VerifyOptimality(VerifyArgs),
    /// Cross-check the metric enumeration against its sampling oracle.
    MetricCheck(MetricCheckArgs),
    /// Print a discretized delay pmf and its moments.
    DelayPmf(DelayPmfArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Config file (TOML). Required unless --from-manifest is given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-run the resolved config recorded in a manifest.
    #[arg(long, conflicts_with = "config")]
    from_manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write a per-event trace of the first run to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    delta: Option<u32>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    realizations: Option<u32>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    tx_mode: Option<String>,
    #[arg(long)]
    late_prob_formula: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Table id: II, III, IV, V, VII, VIII or IX.
    #[arg(long)]
    table: Option<String>,
    /// desk or paper.
    #[arg(long, default_value = "desk")]
    scale: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    delta: u32,
    #[arg(long, conflicts_with = "table")]
    from_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Delay model: I or II.
    #[arg(long, default_value = "I")]
    delay_model: String,
    /// Comma-separated window sizes.
    #[arg(long, default_value = "3")]
    m: String,
    /// Comma-separated horizons.
    #[arg(long, default_value = "3")]
    delta: String,
    #[arg(long, default_value_t = 4)]
    n0: u32,
    #[arg(long, default_value_t = 16)]
    nmax: u32,
    #[arg(long, default_value_t = 40)]
    fixtures: u32,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct MetricCheckArgs {
    /// Randomized states to draw.
    #[arg(long, default_value_t = 200)]
    states: u32,
    /// Oracle samples per state.
    #[arg(long, default_value_t = 100_000)]
    samples: u32,
    /// Write the report here as JSON, in addition to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Failure threshold on the max relative deviation.
    #[arg(long, default_value_t = 0.02)]
    threshold: f64,
}

#[derive(Args)]
struct DelayPmfArgs {
    /// unit or lognormal.
    #[arg(long, default_value = "lognormal")]
    kind: String,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = DEFAULT_Z_CAP)]
    z_cap: u32,
    /// Write the pmf as CSV here, in addition to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit codes: 1 validation, 2 runtime, 3 failed acceptance check.
enum CmdError {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
    CheckFailed(String),
}

impl From<anyhow::Error> for CmdError {
    fn from(e: anyhow::Error) -> Self {
        CmdError::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Seed precedence: --seed, then CHUNKSCHED_SEED, then (for simulate)
    // the config file, then the default.
    let explicit_seed = cli.seed.or_else(|| {
        std::env::var("CHUNKSCHED_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    let seed = explicit_seed.unwrap_or(DEFAULT_SEED);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .expect("thread pool");
    let result = pool.install(|| match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, seed, explicit_seed.is_some()),
        Command::Sweep(args) => cmd_sweep(args, seed),
        Command::VerifyOptimality(args) => cmd_verify(args, seed),
        Command::MetricCheck(args) => cmd_metric_check(args, seed),
        Command::DelayPmf(args) => cmd_delay_pmf(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CmdError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CmdError::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn ensure_out(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parse_policy(s: &str) -> anyhow::Result<PolicyKind> {
    match s {
        "random" => Ok(PolicyKind::Random),
        "rp" => Ok(PolicyKind::Rp),
        "lrf" => Ok(PolicyKind::Lrf),
        "mcmf" => Ok(PolicyKind::Mcmf),
        "mdf" => Ok(PolicyKind::Mdf),
        other => bail!("unknown policy {other:?} (expected random, rp, lrf, mcmf or mdf)"),
    }
}

fn parse_tx_mode(s: &str) -> anyhow::Result<TxMode> {
    match s {
        "random_combination" => Ok(TxMode::RandomCombination),
        "innovative" => Ok(TxMode::Innovative),
        other => bail!("unknown tx mode {other:?} (expected random_combination or innovative)"),
    }
}

fn parse_late_formula(s: &str) -> anyhow::Result<LateProbFormula> {
    match s {
        "complement" => Ok(LateProbFormula::Complement),
        "paper_literal" => Ok(LateProbFormula::PaperLiteral),
        other => bail!("unknown late formula {other:?} (expected complement or paper_literal)"),
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    policy: String,
    l: usize,
    k: usize,
    q: usize,
    realizations: u32,
    trials: u32,
    master_seed: u64,
    mean: f64,
    stderr: f64,
    total_slots: u64,
    delivery_times: Vec<u64>,
}

fn cmd_simulate(args: &SimulateArgs, seed: u64, seed_was_explicit: bool) -> Result<(), CmdError> {
    let started = Instant::now();
    let (mut cfg, mut seed) = match (&args.config, &args.from_manifest) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(CmdError::Validation)?;
            (SimConfig::parse(&text).map_err(CmdError::Validation)?, seed)
        }
        (None, Some(path)) => {
            let manifest = Manifest::load(path).map_err(CmdError::Validation)?;
            let cfg: SimConfig = serde_json::from_value(manifest.resolved)
                .context("manifest.resolved is not a simulate config")
                .map_err(CmdError::Validation)?;
            (cfg, manifest.master_seed)
        }
        _ => {
            return Err(CmdError::Validation(anyhow::anyhow!(
                "simulate needs exactly one of --config or --from-manifest"
            )))
        }
    };

    // Fold overrides into the config so the manifest records exactly what
    // ran. A config-file seed applies only when neither the flag nor the
    // environment named one.
    if args.from_manifest.is_none() && !seed_was_explicit {
        if let Some(s) = cfg.run.seed {
            seed = s;
        }
    }
    if let Some(k) = args.k {
        cfg.code.k = k;
    }
    if let Some(q) = args.q {
        cfg.code.q = q;
    }
    if let Some(length) = args.length {
        cfg.network.length = Some(length);
    }
    if let Some(kind) = &args.policy {
        cfg.policy.kind = parse_policy(kind).map_err(CmdError::Validation)?;
    }
    if let Some(m) = args.m {
        cfg.policy.m = Some(m);
    }
    if let Some(delta) = args.delta {
        cfg.policy.delta = Some(delta);
    }
    if let Some(mode) = &args.tx_mode {
        cfg.policy.tx_mode = Some(parse_tx_mode(mode).map_err(CmdError::Validation)?);
    }
    if let Some(formula) = &args.late_prob_formula {
        cfg.policy.late_prob_formula =
            Some(parse_late_formula(formula).map_err(CmdError::Validation)?);
    }
    if let Some(r) = args.realizations {
        cfg.run.realizations = r;
    }
    if let Some(t) = args.trials {
        cfg.run.trials = t;
    }
    cfg.run.seed = Some(seed);

    let resolved = cfg.resolve().map_err(CmdError::Validation)?;
    ensure_out(&args.out)?;

    let cell = CellConfig {
        code: resolved.code,
        policy: resolved.policy,
        realizations: resolved.realizations,
        trials: resolved.trials,
        max_slots: resolved.max_slots,
    };
    let cell_seed = SeedTree::from_master(seed).child("simulate", 0);
    let result = run_cell(&resolved.topology, &cell, cell_seed).context("simulation failed")?;

    let metric_policy = resolved.policy.kind.needs_link_model();
    let csv = format!(
        "{CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{},{},{},{:.4},{:.4},{},{}\n",
        "custom",
        "custom",
        resolved.policy.kind.name(),
        cfg.link.delay_model.as_deref().unwrap_or("custom"),
        cfg.link.loss_model.as_deref().unwrap_or("custom"),
        resolved.topology.link_count(),
        resolved.code.k,
        resolved.code.chunk_size(),
        if metric_policy {
            resolved.policy.m.to_string()
        } else {
            String::new()
        },
        if metric_policy {
            resolved.policy.delta.to_string()
        } else {
            String::new()
        },
        resolved.realizations,
        resolved.trials,
        result.mean,
        result.stderr,
        cell_seed.seed(),
        result.total_slots,
    );
    std::fs::write(args.out.join("simulate.csv"), &csv).context("writing simulate.csv")?;

    let summary = SimulateSummary {
        policy: resolved.policy.kind.name().into(),
        l: resolved.topology.link_count(),
        k: resolved.code.k,
        q: resolved.code.q,
        realizations: resolved.realizations,
        trials: resolved.trials,
        master_seed: seed,
        mean: result.mean,
        stderr: result.stderr,
        total_slots: result.total_slots,
        delivery_times: result.delivery_times,
    };
    std::fs::write(
        args.out.join("simulate.json"),
        serde_json::to_string_pretty(&summary).context("summary json")?,
    )
    .context("writing simulate.json")?;

    if let Some(trace_path) = &args.trace {
        let settings = TrialSettings {
            topology: &resolved.topology,
            code: resolved.code,
            policy: &resolved.policy,
            max_slots: resolved.max_slots,
            record_decisions: false,
            record_trace: true,
            delay_tables: None,
        };
        let realization_seed = cell_seed.child("realization", 0);
        let trial = run_trial(&settings, realization_seed, realization_seed.child("trial", 0))
            .context("trace trial failed")?;
        let mut text = String::from("slot,link,event,chunk,vector_hex\n");
        for e in &trial.trace {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                e.slot,
                e.link,
                match e.kind {
                    chunksched::engine::TraceKind::Tx => "tx",
                    chunksched::engine::TraceKind::Rx => "rx",
                    chunksched::engine::TraceKind::Drop => "drop",
                    chunksched::engine::TraceKind::Idle => "idle",
                },
                e.chunk.map_or(String::new(), |c| c.to_string()),
                e.vector_hex
            ));
        }
        std::fs::write(trace_path, text).context("writing trace")?;
    }

    let mut manifest = Manifest::new(
        "simulate",
        seed,
        serde_json::to_value(&cfg).context("manifest resolved")?,
    );
    manifest.outputs = vec!["simulate.csv".into(), "simulate.json".into()];
    manifest.elapsed_ms = started.elapsed().as_millis();
    manifest.write(&args.out)?;

    println!(
        "simulate: {} over L={} k={} q={}: mean {:.2} stderr {:.2} ({} runs)",
        resolved.policy.kind.name(),
        resolved.topology.link_count(),
        resolved.code.k,
        resolved.code.q,
        result.mean,
        result.stderr,
        summary.realizations * summary.trials,
    );
    Ok(())
}

#[derive(Serialize, serde::Deserialize)]
struct SweepResolved {
    table: String,
    scale: String,
    k: usize,
    m: usize,
    delta: u32,
}

fn cmd_sweep(args: &SweepArgs, seed: u64) -> Result<(), CmdError> {
    let started = Instant::now();
    let (resolved, seed) = match (&args.table, &args.from_manifest) {
        (Some(table), None) => (
            SweepResolved {
                table: table.clone(),
                scale: args.scale.clone(),
                k: args.k,
                m: args.m,
                delta: args.delta,
            },
            seed,
        ),
        (None, Some(path)) => {
            let manifest = Manifest::load(path).map_err(CmdError::Validation)?;
            let resolved: SweepResolved = serde_json::from_value(manifest.resolved)
                .context("manifest.resolved is not a sweep config")
                .map_err(CmdError::Validation)?;
            (resolved, manifest.master_seed)
        }
        _ => {
            return Err(CmdError::Validation(anyhow::anyhow!(
                "sweep needs exactly one of --table or --from-manifest"
            )))
        }
    };
    let table = TableId::from_str(&resolved.table).map_err(|e| CmdError::Validation(e.into()))?;
    let scale = Scale::from_str(&resolved.scale).map_err(|e| CmdError::Validation(e.into()))?;
    let opts = SweepOptions {
        k: resolved.k,
        m: resolved.m,
        delta: resolved.delta,
    };
    ensure_out(&args.out)?;

    let result = run_table(table, scale, seed, &opts).context("sweep failed")?;
    let base = format!("table-{table}");
    std::fs::write(args.out.join(format!("{base}.csv")), render_csv(&result))
        .context("writing table csv")?;
    std::fs::write(
        args.out.join(format!("{base}-comparisons.csv")),
        render_comparisons_csv(&result),
    )
    .context("writing comparisons csv")?;
    std::fs::write(
        args.out.join(format!("{base}.json")),
        serde_json::to_string_pretty(&result).context("table json")?,
    )
    .context("writing table json")?;

    let mut manifest = Manifest::new(
        "sweep",
        seed,
        serde_json::to_value(&resolved).context("manifest resolved")?,
    );
    manifest.outputs = vec![
        format!("{base}.csv"),
        format!("{base}-comparisons.csv"),
        format!("{base}.json"),
    ];
    manifest.elapsed_ms = started.elapsed().as_millis();
    manifest.write(&args.out)?;

    println!(
        "sweep table {table} at {scale} scale: {} rows, {} cells ({} ms)",
        result.rows.len(),
        result.comparisons.len(),
        started.elapsed().as_millis()
    );
    Ok(())
}

#[derive(Serialize, serde::Deserialize)]
struct VerifyResolved {
    delay_model: String,
    m_values: Vec<usize>,
    delta_values: Vec<u32>,
    n0: u32,
    n_max: u32,
    fixtures: u32,
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> anyhow::Result<Vec<T>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<T>()
                .map_err(|_| anyhow::anyhow!("bad {what} value {part:?}"))
        })
        .collect()
}

fn cmd_verify(args: &VerifyArgs, seed: u64) -> Result<(), CmdError> {
    let started = Instant::now();
    let (resolved, seed) = match &args.from_manifest {
        None => (
            VerifyResolved {
                delay_model: args.delay_model.clone(),
                m_values: parse_list(&args.m, "m").map_err(CmdError::Validation)?,
                delta_values: parse_list(&args.delta, "delta").map_err(CmdError::Validation)?,
                n0: args.n0,
                n_max: args.nmax,
                fixtures: args.fixtures,
            },
            seed,
        ),
        Some(path) => {
            let manifest = Manifest::load(path).map_err(CmdError::Validation)?;
            let resolved: VerifyResolved = serde_json::from_value(manifest.resolved)
                .context("manifest.resolved is not a verify-optimality config")
                .map_err(CmdError::Validation)?;
            (resolved, manifest.master_seed)
        }
    };
    let cfg = VerifierConfig {
        delay_model: resolved
            .delay_model
            .parse()
            .map_err(|e: chunksched::Error| CmdError::Validation(e.into()))?,
        m_values: resolved.m_values.clone(),
        delta_values: resolved.delta_values.clone(),
        n0: resolved.n0,
        n_max: resolved.n_max,
        fixtures: resolved.fixtures,
        master_seed: seed,
    };
    ensure_out(&args.out)?;
    let result = run_verifier(&cfg).context("verifier failed")?;

    std::fs::write(args.out.join("optimality.csv"), render_verifier_csv(&result))
        .context("writing optimality.csv")?;
    std::fs::write(
        args.out.join("optimality.json"),
        serde_json::to_string_pretty(&result).context("verifier json")?,
    )
    .context("writing optimality.json")?;

    let mut manifest = Manifest::new(
        "verify-optimality",
        seed,
        serde_json::to_value(&resolved).context("manifest resolved")?,
    );
    manifest.outputs = vec!["optimality.csv".into(), "optimality.json".into()];
    manifest.elapsed_ms = started.elapsed().as_millis();
    manifest.write(&args.out)?;

    for cell in &result.cells {
        println!(
            "verify-optimality model {} n0={} (m={}, delta={}): {:.1}% optimal over {} fixtures{}",
            result.delay_model,
            result.n0,
            cell.m,
            cell.delta,
            cell.percent_optimal,
            cell.fixtures - cell.undefined,
            if cell.undefined > 0 {
                format!(" ({} undefined, excluded)", cell.undefined)
            } else {
                String::new()
            }
        );
    }
    Ok(())
}

fn cmd_metric_check(args: &MetricCheckArgs, seed: u64) -> Result<(), CmdError> {
    if args.states == 0 || args.samples < 1000 {
        return Err(CmdError::Validation(anyhow::anyhow!(
            "metric-check needs states >= 1 and samples >= 1000"
        )));
    }
    let report = metric_check::run(args.states, args.samples, seed);
    println!(
        "metric-check: {} states x {} samples, max relative deviation {:.4}% (state {})",
        report.states,
        report.samples,
        report.max_relative_deviation * 100.0,
        report.worst_state
    );
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            ensure_out(parent)?;
        }
        std::fs::write(
            out,
            serde_json::to_string_pretty(&report).context("report json")?,
        )
        .context("writing report")?;
    }
    if report.max_relative_deviation > args.threshold {
        return Err(CmdError::CheckFailed(format!(
            "max relative deviation {:.4}% exceeds {:.2}%",
            report.max_relative_deviation * 100.0,
            args.threshold * 100.0
        )));
    }
    Ok(())
}

fn cmd_delay_pmf(args: &DelayPmfArgs) -> Result<(), CmdError> {
    let model = match args.kind.as_str() {
        "unit" => DelayModel::unit(),
        "lognormal" => DelayModel::new(
            DelayKind::Lognormal {
                mu: args.mu,
                sigma: args.sigma,
            },
            args.z_cap,
        )
        .map_err(|e| CmdError::Validation(e.into()))?,
        other => {
            return Err(CmdError::Validation(anyhow::anyhow!(
                "unknown delay kind {other:?} (expected unit or lognormal)"
            )))
        }
    };
    let mut text = String::from("z,p\n");
    for (i, &p) in model.pmf().iter().enumerate() {
        if p > 0.0 || i == 0 {
            text.push_str(&format!("{},{:.6}\n", i + 1, p));
        }
    }
    print!("{text}");
    let discrete = model.discrete_mean();
    if args.kind == "lognormal" {
        let (mean, var) = lognormal_moments(args.mu, args.sigma);
        println!("continuous mean {mean:.4} variance {var:.4}");
    }
    println!("discrete mean {discrete:.4}");
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            ensure_out(parent)?;
        }
        std::fs::write(out, text).context("writing pmf")?;
    }
    Ok(())
}
