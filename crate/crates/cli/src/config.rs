//! Simulation config file schema and validation.
//!
//! A config is a TOML document with `network`, `code`, `policy`, `link`
//! and `run` sections. Link models come either from explicit `delay` /
//! `loss` values or from the named presets, parameterized by the line
//! length. Command-line flags override individual fields.

use anyhow::{bail, Context};
use chunksched::experiments::{preset_line_specs, DelayModelId, LossModelId};
use chunksched::linkmodel::{DelayKind, DelayModel, LinkSpec, LossModel, DEFAULT_Z_CAP};
use chunksched::metric::LateProbFormula;
use chunksched::netstate::{LinkDef, Topology};
use chunksched::policy::{PolicyKind, TxMode};
use chunksched::{CodeConfig, PolicyConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub network: NetworkSection,
    pub code: CodeSection,
    pub policy: PolicySection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub kind: String,
    #[serde(default)]
    pub length: Option<usize>,
    /// Explicit links as (tail, head) node pairs; overrides `length`.
    #[serde(default)]
    pub links: Option<Vec<ExplicitLink>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitLink {
    pub tail: usize,
    pub head: usize,
    #[serde(default)]
    pub delay: Option<DelaySpec>,
    #[serde(default)]
    pub loss: Option<LossSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    pub k: usize,
    pub q: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyKind,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub delta: Option<u32>,
    #[serde(default)]
    pub late_prob_formula: Option<LateProbFormula>,
    #[serde(default)]
    pub tx_mode: Option<TxMode>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    /// Uniform delay model for all links.
    #[serde(default)]
    pub delay: Option<DelaySpec>,
    /// Uniform loss model for all links.
    #[serde(default)]
    pub loss: Option<LossSpec>,
    /// Named per-link presets (I..V / I..III), scaled by the length.
    #[serde(default)]
    pub delay_model: Option<String>,
    #[serde(default)]
    pub loss_model: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DelaySpec {
    Unit,
    Lognormal {
        mu: f64,
        sigma: f64,
        #[serde(default)]
        z_cap: Option<u32>,
    },
    Table {
        pmf: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub pe: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_runs")]
    pub realizations: u32,
    #[serde(default = "default_runs")]
    pub trials: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    /// 0 means the engine default of 200 * (k + L).
    #[serde(default)]
    pub max_slots: u64,
}

fn default_runs() -> u32 {
    20
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            realizations: default_runs(),
            trials: default_runs(),
            seed: None,
            max_slots: 0,
        }
    }
}

impl DelaySpec {
    pub fn build(&self) -> anyhow::Result<DelayModel> {
        let model = match self {
            DelaySpec::Unit => DelayModel::unit(),
            DelaySpec::Lognormal { mu, sigma, z_cap } => DelayModel::new(
                DelayKind::Lognormal {
                    mu: *mu,
                    sigma: *sigma,
                },
                z_cap.unwrap_or(DEFAULT_Z_CAP),
            )
            .context("link.delay")?,
            DelaySpec::Table { pmf } => DelayModel::table(pmf.clone()).context("link.delay")?,
        };
        Ok(model)
    }
}

/// The fully resolved inputs of a `simulate` run.
#[derive(Debug)]
pub struct ResolvedSim {
    pub topology: Topology,
    pub code: CodeConfig,
    pub policy: PolicyConfig,
    pub realizations: u32,
    pub trials: u32,
    pub max_slots: u64,
}

impl SimConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).context("config parse error")
    }

    pub fn resolve(&self) -> anyhow::Result<ResolvedSim> {
        let code = CodeConfig::new(self.code.k, self.code.q)?;

        let mut policy = PolicyConfig::new(self.policy.kind);
        if let Some(m) = self.policy.m {
            policy.m = m;
        }
        if let Some(delta) = self.policy.delta {
            if delta < 1 {
                bail!("policy.delta must be >= 1, got {delta}");
            }
            policy.delta = delta;
        }
        if let Some(f) = self.policy.late_prob_formula {
            policy.late_prob_formula = f;
        }
        if let Some(t) = self.policy.tx_mode {
            policy.tx_mode = t;
        }

        let topology = self.build_topology()?;
        let max_slots = if self.run.max_slots == 0 {
            chunksched::engine::default_max_slots(&code, &topology)
        } else {
            self.run.max_slots
        };
        if self.run.realizations == 0 || self.run.trials == 0 {
            bail!(
                "run.realizations and run.trials must be >= 1, got {} and {}",
                self.run.realizations,
                self.run.trials
            );
        }
        Ok(ResolvedSim {
            topology,
            code,
            policy,
            realizations: self.run.realizations,
            trials: self.run.trials,
            max_slots,
        })
    }

    fn default_spec(&self, length: usize) -> anyhow::Result<Vec<LinkSpec>> {
        if self.link.delay_model.is_some() || self.link.loss_model.is_some() {
            if self.link.delay.is_some() || self.link.loss.is_some() {
                bail!("link: presets (delay_model/loss_model) and explicit delay/loss are mutually exclusive");
            }
            let delay = self
                .link
                .delay_model
                .as_deref()
                .map(str::parse::<DelayModelId>)
                .transpose()?;
            let loss = self
                .link
                .loss_model
                .as_deref()
                .map(str::parse::<LossModelId>)
                .transpose()?;
            return Ok(preset_line_specs(delay, loss, length)?);
        }
        let delay = match &self.link.delay {
            Some(spec) => spec.build()?,
            None => DelayModel::unit(),
        };
        let loss = match &self.link.loss {
            Some(LossSpec { pe }) => LossModel::new(*pe).context("link.loss.pe")?,
            None => LossModel::lossless(),
        };
        Ok(vec![LinkSpec::new(loss, delay); length])
    }

    fn build_topology(&self) -> anyhow::Result<Topology> {
        match self.network.kind.as_str() {
            "line" => {
                if let Some(links) = &self.network.links {
                    // Explicit link list with optional per-link overrides.
                    let defaults = self.default_spec(links.len())?;
                    let defs = links
                        .iter()
                        .zip(defaults)
                        .map(|(l, default)| {
                            let delay = match &l.delay {
                                Some(d) => d.build()?,
                                None => default.delay.clone(),
                            };
                            let loss = match &l.loss {
                                Some(LossSpec { pe }) => {
                                    LossModel::new(*pe).context("network.links[].loss.pe")?
                                }
                                None => default.loss,
                            };
                            Ok(LinkDef {
                                tail: l.tail,
                                head: l.head,
                                spec: LinkSpec::new(loss, delay),
                            })
                        })
                        .collect::<anyhow::Result<Vec<_>>>()?;
                    return Ok(Topology::new(defs)?);
                }
                let length = self
                    .network
                    .length
                    .context("network.length is required for kind = \"line\"")?;
                if length == 0 {
                    bail!("network.length must be >= 1");
                }
                Ok(Topology::line(self.default_spec(length)?)?)
            }
            other => bail!("network.kind {other:?} not supported (expected \"line\")"),
        }
    }
}
