//! Experiment specification files.
//!
//! A spec is a TOML document. `domain` and `preset` pick a complete set of
//! defaults; any other key overrides the matching default, nested tables
//! merging key by key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::TemperatureBelief;
use crate::daytrip::{AnchoringBelief, DaytripConfig};
use crate::error::{Error, Result};
use crate::inventory::{BiasBelief, InventoryConfig};
use crate::modes::{ModeConfig, ModeKind};
use crate::planner::PlannerConfig;

/// Overrides the spec's seed base when set.
pub const SEED_ENV: &str = "AIAD_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Daytrip,
    Inventory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Reduced scale that runs on a workstation.
    Desk,
    /// The scale of the original experiments.
    Full,
}

/// What a mode's belief assumes about the agent's bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasAssumption {
    #[default]
    Infer,
    /// No bias: unanchored agents, or unbiased demand estimates.
    None,
    /// Day trip: every agent is anchored.
    Always,
    /// Inventory: demand over-estimated by one standard deviation.
    Optimistic,
    /// Inventory: demand under-estimated by one standard deviation.
    Pessimistic,
}

impl BiasAssumption {
    pub fn anchoring(self) -> Result<AnchoringBelief> {
        match self {
            BiasAssumption::Infer => Ok(AnchoringBelief::Infer),
            BiasAssumption::None => Ok(AnchoringBelief::AssumeNone),
            BiasAssumption::Always => Ok(AnchoringBelief::AssumeAlways),
            other => Err(Error::Spec(format!("bias {other:?} does not apply to day trips"))),
        }
    }

    pub fn demand(self) -> Result<BiasBelief> {
        match self {
            BiasAssumption::Infer => Ok(BiasBelief::Infer),
            BiasAssumption::None => Ok(BiasBelief::Assume { theta: 0.0 }),
            BiasAssumption::Optimistic => Ok(BiasBelief::Assume { theta: 1.0 }),
            BiasAssumption::Pessimistic => Ok(BiasBelief::Assume { theta: -1.0 }),
            BiasAssumption::Always => Err(Error::Spec("bias `always` only applies to day trips".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    /// Label used in file names and summaries; unique within a spec.
    pub name: String,
    pub kind: ModeKind,
    #[serde(default)]
    pub bias: BiasAssumption,
    /// Overrides the experiment's interaction budget for this mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irl_demos: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pl_queries: Option<usize>,
}

impl ModeSpec {
    pub fn new(name: &str, kind: ModeKind) -> Self {
        Self {
            name: name.into(),
            kind,
            bias: BiasAssumption::Infer,
            budget: None,
            irl_demos: None,
            pl_queries: None,
        }
    }

    /// The experiment's mode settings with this mode's overrides applied.
    pub fn config(&self, base: &ModeConfig, domain: DomainKind) -> ModeConfig {
        let mut cfg = base.clone();
        if let Some(b) = self.budget {
            cfg.budget = b;
            if domain == DomainKind::Daytrip {
                cfg.max_steps = cfg.max_steps.min(3 * b);
            }
        }
        if let Some(n) = self.irl_demos {
            cfg.irl_demos = n;
        }
        if let Some(n) = self.pl_queries {
            cfg.pl_queries = n;
        }
        cfg
    }
}

/// How the simulated agents' anchoring is drawn in day-trip experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAnchoring {
    /// Each agent is anchored with probability ½.
    #[default]
    Random,
    Always,
    Never,
    /// Even-numbered runs are anchored, odd-numbered runs are not.
    Alternate,
}

impl AgentAnchoring {
    /// The anchoring flag for run `index`, or `None` to sample it.
    pub fn for_run(self, index: usize) -> Option<bool> {
        match self {
            AgentAnchoring::Random => None,
            AgentAnchoring::Always => Some(true),
            AgentAnchoring::Never => Some(false),
            AgentAnchoring::Alternate => Some(index % 2 == 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub domain: DomainKind,
    pub preset: Preset,
    pub runs: usize,
    pub seed: u64,
    /// Output directory; relative paths resolve against the spec file.
    pub output: PathBuf,
    pub particles: usize,
    /// Runs executed concurrently.
    pub threads: usize,
    pub anchoring: AgentAnchoring,
    pub temperatures: TemperatureBelief,
    pub modes: Vec<ModeSpec>,
    pub settings: ModeConfig,
    pub daytrip: DaytripConfig,
    pub inventory: InventoryConfig,
}

impl ExperimentSpec {
    /// The full default spec for a domain and preset.
    pub fn preset(domain: DomainKind, preset: Preset) -> Self {
        let (runs, particles) = match (domain, preset) {
            (DomainKind::Daytrip, Preset::Desk) => (30, 1024),
            (DomainKind::Daytrip, Preset::Full) => (75, 1024),
            (DomainKind::Inventory, Preset::Desk) => (20, 2048),
            (DomainKind::Inventory, Preset::Full) => (75, 2048),
        };
        let daytrip = match preset {
            Preset::Desk => DaytripConfig::desk(),
            Preset::Full => DaytripConfig::full(),
        };
        let inventory = match preset {
            Preset::Desk => InventoryConfig::desk(),
            Preset::Full => InventoryConfig::full(),
        };
        let settings = match domain {
            DomainKind::Daytrip => {
                let (advice, automation, budget) = match preset {
                    Preset::Desk => (10_000, 10_000, 20),
                    Preset::Full => (750_000, 1_000_000, 30),
                };
                ModeConfig {
                    planner: PlannerConfig {
                        gamma: 0.95,
                        max_depth: 2,
                        iterations: advice,
                        exploration: 0.1,
                        subsample: Some(100),
                        ..PlannerConfig::default()
                    },
                    automation: PlannerConfig {
                        gamma: 0.99,
                        max_depth: 3,
                        iterations: automation,
                        exploration: 0.1,
                        subsample: Some(100),
                        ..PlannerConfig::default()
                    },
                    budget,
                    max_steps: 3 * budget,
                    irl_demos: 10,
                    pl_queries: 10,
                    pl_pool: 100,
                }
            }
            DomainKind::Inventory => {
                let (advice, automation) = match preset {
                    Preset::Desk => (20_000, 20_000),
                    Preset::Full => (500_000, 1_000_000),
                };
                let planner = PlannerConfig {
                    gamma: 0.99,
                    max_depth: 4,
                    iterations: advice,
                    exploration: 10.0,
                    subsample: Some(200),
                    ..PlannerConfig::default()
                };
                ModeConfig {
                    automation: PlannerConfig {
                        iterations: automation,
                        ..planner.clone()
                    },
                    planner,
                    budget: inventory.horizon,
                    max_steps: inventory.horizon,
                    irl_demos: 10,
                    pl_queries: 0,
                    pl_pool: 100,
                }
            }
        };
        let modes = match domain {
            DomainKind::Daytrip => vec![
                ModeSpec::new("aiad", ModeKind::Aiad),
                ModeSpec::new("aiad_automation", ModeKind::AiadAutomation),
                ModeSpec::new("unassisted", ModeKind::Unassisted),
                ModeSpec::new("irl_automation", ModeKind::IrlAutomation),
                ModeSpec::new("pl_automation", ModeKind::PlAutomation),
                ModeSpec::new("partial_automation", ModeKind::PartialAutomation),
            ],
            DomainKind::Inventory => vec![
                ModeSpec::new("aiad", ModeKind::Aiad),
                ModeSpec::new("aiad_automation", ModeKind::AiadAutomation),
                ModeSpec::new("unassisted", ModeKind::Unassisted),
                ModeSpec::new("irl_automation", ModeKind::IrlAutomation),
                ModeSpec::new("partial_automation", ModeKind::PartialAutomation),
                ModeSpec::new("oracle", ModeKind::Oracle),
            ],
        };
        let domain_name = match domain {
            DomainKind::Daytrip => "daytrip",
            DomainKind::Inventory => "inventory",
        };
        Self {
            name: domain_name.into(),
            domain,
            preset,
            runs,
            seed: 1,
            output: PathBuf::from(format!("results/{domain_name}")),
            particles,
            threads: 1,
            anchoring: AgentAnchoring::Random,
            temperatures: TemperatureBelief::default(),
            modes,
            settings,
            daytrip,
            inventory,
        }
    }

    /// Parses a spec document. `domain` is required; `preset` defaults to
    /// `desk`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e| Error::Spec(format!("{e}")))?;
        let domain: DomainKind = match user.get("domain") {
            Some(v) => v.clone().try_into().map_err(|e| Error::Spec(format!("domain: {e}")))?,
            None => return Err(Error::Spec("missing `domain`".into())),
        };
        let preset: Preset = match user.get("preset") {
            Some(v) => v.clone().try_into().map_err(|e| Error::Spec(format!("preset: {e}")))?,
            None => Preset::Desk,
        };
        let settings = user.get("settings").and_then(toml::Value::as_table);
        let budget_set = settings.is_some_and(|s| s.contains_key("budget"));
        let steps_set = settings.is_some_and(|s| s.contains_key("max_steps"));
        let base = toml::Table::try_from(Self::preset(domain, preset)).map_err(|e| Error::Spec(format!("{e}")))?;
        let merged = merge(base, user);
        let mut spec: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e| Error::Spec(format!("{e}")))?;
        // An inventory episode lasts the horizon unless told otherwise.
        if domain == DomainKind::Inventory {
            if !budget_set {
                spec.settings.budget = spec.inventory.horizon;
            }
            if !steps_set {
                spec.settings.max_steps = spec.inventory.horizon;
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec file, resolves `output` against its directory and applies
    /// the seed override from the environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut spec = Self::from_toml(&text)?;
        if spec.output.is_relative() {
            let dir = path.parent().unwrap_or(Path::new("."));
            spec.output = dir.join(&spec.output);
        }
        spec.apply_env_seed()?;
        Ok(spec)
    }

    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Spec(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec(format!("{e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Spec("runs must be at least 1".into()));
        }
        if self.particles == 0 || self.threads == 0 {
            return Err(Error::Spec("particles and threads must be positive".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Spec("no modes listed".into()));
        }
        let mut names: Vec<&str> = self.modes.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Spec("mode names must be unique".into()));
        }
        for m in &self.modes {
            if m.name.is_empty() || !m.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::Spec(format!("mode name {:?} must be alphanumeric", m.name)));
            }
            match self.domain {
                DomainKind::Daytrip => {
                    m.bias.anchoring()?;
                }
                DomainKind::Inventory => {
                    m.bias.demand()?;
                    if m.kind == ModeKind::PlAutomation {
                        return Err(Error::Spec("preference queries are only available for day trips".into()));
                    }
                }
            }
            m.config(&self.settings, self.domain).validate()?;
        }
        self.settings.validate()?;
        match self.domain {
            DomainKind::Daytrip => self.daytrip.validate(),
            DomainKind::Inventory => self.inventory.validate(),
        }
    }
}

/// Overlays `top` on `base`; tables merge recursively, everything else
/// (including arrays) is replaced.
fn merge(mut base: toml::Table, top: toml::Table) -> toml::Table {
    for (key, value) in top {
        match (base.remove(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => {
                base.insert(key, toml::Value::Table(merge(b, t)));
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
    base
}
