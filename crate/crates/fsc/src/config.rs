//! Experiment configuration: one JSON document naming the factors, the
//! current dataset, the scheme, strategy and budget, and (for `simulate`)
//! the synthetic world and seeds.

use std::collections::BTreeMap;
use std::path::Path;

use fsc_core::allocator::{Strategy, StrategyChoice, TopHalfRule};
use fsc_core::combos::ComboScheme;
use fsc_core::curves::FitConfig;
use fsc_core::domain::{factors_from_names, DatasetLedger, Factor, FactorCombo, FactorId, SchemeKind};
use fsc_core::simharness::{
    DominantFamily, FactorResponse, HarnessConfig, Interaction, Metric, NoiseModel, SyntheticWorld, WorldSpec,
};
use serde::Deserialize;
use serde_json::Value;

use crate::{read_input, CliError, Result};

pub const DEFAULT_PER_FACTOR: u64 = 30;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub factors: Vec<String>,
    #[serde(default)]
    pub ledger: LedgerConfig,
    pub scheme: SchemeConfig,
    pub strategy: StrategyConfig,
    pub budget: u64,
    #[serde(default = "default_points")]
    pub points_per_curve: usize,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub metric: Metric,
    /// Read in a second pass (see `world_config`) so that errors inside the
    /// block keep their full key path.
    #[serde(default)]
    pub world: Option<Value>,
    #[serde(default = "one")]
    pub repeats: u32,
    #[serde(default)]
    pub seeds: Option<SeedsConfig>,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_points() -> usize {
    fsc_core::curves::DEFAULT_POINTS_PER_CURVE
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerConfig {
    #[serde(default)]
    pub nominal: u64,
    #[serde(default)]
    pub counts: Counts,
}

/// Either one count for every factor or a count per factor name.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    Uniform(u64),
    ByName(BTreeMap<String, u64>),
}

impl Default for Counts {
    fn default() -> Self {
        Counts::Uniform(DEFAULT_PER_FACTOR)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    #[serde(default)]
    pub pairing: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: Strategy,
    /// Overrides `ceil(|combos| / 2)` for `top_half`.
    #[serde(default)]
    pub top_half_count: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum WorldConfig {
    Fixed(FixedWorldConfig),
    Dominant(DominantFamily),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedWorldConfig {
    pub base_score: f64,
    pub factors: BTreeMap<String, FactorResponse>,
    #[serde(default)]
    pub interactions: Vec<NamedInteraction>,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedInteraction {
    pub factors: [String; 2],
    pub gain: f64,
    pub rate: f64,
    pub exponent: f64,
}

/// `"seeds": 50` means seeds `0..50`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SeedsConfig {
    Count(u64),
    List(Vec<u64>),
}

/// A validated config with every factor name resolved to an id.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub factors: Vec<Factor>,
    pub ledger: DatasetLedger,
    pub scheme: ComboScheme,
    pub strategy: StrategyChoice,
    pub budget: u64,
    pub points_per_curve: usize,
    pub fit: FitConfig,
    pub metric: Metric,
    pub world: Option<WorldSpec>,
    pub repeats: u32,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
}

pub fn load_config(path: &Path) -> Result<Resolved> {
    let text = read_input(path)?;
    parse_config(&text).map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))
}

pub fn parse_config(text: &str) -> Result<Resolved> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::invalid(e.to_string()))?;
    let config: ExperimentConfig = tracked(value, "")?;
    config.resolve()
}

fn tracked<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = match (prefix.is_empty(), path.as_str()) {
            (true, _) => path,
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{path}"),
        };
        CliError::invalid(format!("at `{path}`: {}", e.inner()))
    })
}

impl ExperimentConfig {
    pub fn world_config(&self) -> Result<Option<WorldConfig>> {
        let Some(world) = &self.world else {
            return Ok(None);
        };
        let mut fields = match world {
            Value::Object(map) => map.clone(),
            _ => return Err(CliError::invalid("at `world`: expected an object")),
        };
        let kind = match fields.remove("kind") {
            Some(Value::String(k)) => k,
            _ => return Err(CliError::invalid("at `world.kind`: expected \"fixed\" or \"dominant\"")),
        };
        match kind.as_str() {
            "fixed" => Ok(Some(WorldConfig::Fixed(tracked(Value::Object(fields), "world")?))),
            "dominant" => {
                // The factor count comes from `factors` unless stated.
                fields.entry("n_factors").or_insert(Value::from(self.factors.len()));
                Ok(Some(WorldConfig::Dominant(tracked(Value::Object(fields), "world")?)))
            }
            other => Err(CliError::invalid(format!(
                "at `world.kind`: unknown world `{other}`, expected \"fixed\" or \"dominant\""
            ))),
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        if self.budget == 0 {
            return Err(CliError::invalid("budget must be at least 1"));
        }
        if self.points_per_curve < 2 {
            return Err(CliError::invalid("points_per_curve must be at least 2"));
        }
        if self.repeats == 0 {
            return Err(CliError::invalid("repeats must be at least 1"));
        }
        self.fit.validate()?;
        let factors = factors_from_names(&self.factors)?;
        let lookup = |name: &str, what: &str| -> Result<FactorId> {
            factors
                .iter()
                .find(|f| f.name == name)
                .map(|f| f.id)
                .ok_or_else(|| CliError::invalid(format!("{what}: unknown factor `{name}`")))
        };

        let counts: Vec<u64> = match &self.ledger.counts {
            Counts::Uniform(c) => vec![*c; factors.len()],
            Counts::ByName(map) => {
                for name in map.keys() {
                    lookup(name, "ledger.counts")?;
                }
                factors
                    .iter()
                    .map(|f| {
                        map.get(&f.name)
                            .copied()
                            .ok_or_else(|| CliError::invalid(format!("ledger.counts: missing factor `{}`", f.name)))
                    })
                    .collect::<Result<_>>()?
            }
        };
        let ledger = DatasetLedger::new(self.ledger.nominal, counts);

        let ids: Vec<FactorId> = factors.iter().map(|f| f.id).collect();
        let pairing = match &self.scheme.pairing {
            Some(parts) if self.scheme.kind == SchemeKind::Group => Some(
                parts
                    .iter()
                    .map(|p| p.iter().map(|n| lookup(n, "scheme.pairing")).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?,
            ),
            Some(_) => return Err(CliError::invalid("scheme.pairing only applies to the group scheme")),
            None => None,
        };
        let scheme = ComboScheme::build(self.scheme.kind, &ids, pairing.as_deref())?;

        let strategy = StrategyChoice {
            kind: self.strategy.kind,
            top_half_count_rule: match self.strategy.top_half_count {
                Some(0) => return Err(CliError::invalid("strategy.top_half_count must be at least 1")),
                Some(n) => TopHalfRule::Fixed(n),
                None => TopHalfRule::CeilHalfOfCombos,
            },
        };

        let world = match self.world_config()? {
            None => None,
            Some(WorldConfig::Dominant(family)) => Some(WorldSpec::Dominant(family)),
            Some(WorldConfig::Fixed(w)) => {
                for name in w.factors.keys() {
                    lookup(name, "world.factors")?;
                }
                let responses = factors
                    .iter()
                    .map(|f| {
                        w.factors
                            .get(&f.name)
                            .copied()
                            .ok_or_else(|| CliError::invalid(format!("world.factors: missing factor `{}`", f.name)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let interactions = w
                    .interactions
                    .iter()
                    .map(|i| {
                        Ok(Interaction {
                            factors: [lookup(&i.factors[0], "world.interactions")?, lookup(&i.factors[1], "world.interactions")?],
                            gain: i.gain,
                            rate: i.rate,
                            exponent: i.exponent,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let world = SyntheticWorld {
                    factors: responses,
                    base_score: w.base_score,
                    interactions,
                    noise: w.noise,
                    seed: self.master_seed,
                };
                world.validate()?;
                Some(WorldSpec::Fixed(world))
            }
        };

        let seeds = match &self.seeds {
            None => vec![0],
            Some(SeedsConfig::Count(0)) => return Err(CliError::invalid("seeds must not be empty")),
            Some(SeedsConfig::Count(n)) => (0..*n).collect(),
            Some(SeedsConfig::List(list)) if list.is_empty() => return Err(CliError::invalid("seeds must not be empty")),
            Some(SeedsConfig::List(list)) => list.clone(),
        };

        Ok(Resolved {
            factors,
            ledger,
            scheme,
            strategy,
            budget: self.budget,
            points_per_curve: self.points_per_curve,
            fit: self.fit,
            metric: self.metric,
            world,
            repeats: self.repeats,
            seeds,
            master_seed: self.master_seed,
        })
    }
}

impl Resolved {
    pub fn ids(&self) -> Vec<FactorId> {
        self.factors.iter().map(|f| f.id).collect()
    }

    pub fn name(&self, id: FactorId) -> &str {
        &self.factors[id.index()].name
    }

    /// `a+b` with member names in lexicographic order.
    pub fn label(&self, combo: &FactorCombo) -> String {
        let mut names: Vec<&str> = combo.members.iter().map(|id| self.name(*id)).collect();
        names.sort_unstable();
        names.join("+")
    }

    /// Resolves a label against the configured scheme.
    pub fn parse_combo(&self, label: &str) -> Result<FactorCombo> {
        let mut ids = Vec::new();
        for name in label.split('+') {
            let name = name.trim();
            match self.factors.iter().find(|f| f.name == name) {
                Some(f) => ids.push(f.id),
                None => return Err(CliError::invalid(format!("combo `{label}`: unknown factor `{name}`"))),
            }
        }
        ids.sort();
        self.scheme
            .combos
            .iter()
            .find(|c| c.members == ids)
            .cloned()
            .ok_or_else(|| CliError::invalid(format!("combo `{label}` is not part of the {} scheme", self.scheme.kind)))
    }

    pub fn harness(&self) -> Result<HarnessConfig> {
        let world = self
            .world
            .clone()
            .ok_or_else(|| CliError::invalid("simulate needs a `world` block in the config"))?;
        let config = HarnessConfig {
            world,
            ledger: self.ledger.clone(),
            scheme: self.scheme.kind,
            pairing: self.scheme.pairing.clone(),
            strategy: self.strategy,
            budget: self.budget,
            points_per_curve: self.points_per_curve,
            repeats: self.repeats,
            fit: self.fit,
            metric: self.metric,
            master_seed: self.master_seed,
        };
        config.validate()?;
        Ok(config)
    }
}
