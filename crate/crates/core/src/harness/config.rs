//! TOML experiment configuration.
//!
//! ```toml
//! [schema]
//! pre = [2, 2]          # alphabet size of each pre-outcome variable
//! post = []
//!
//! [[models]]
//! name = "b1"
//! family = "cpt"
//! parents = [1]         # 1-based
//! pseudo_count = 1.0
//!
//! [generator]
//! outcome = { rule = "parity", vars = [1, 2], p_odd = 0.9, p_even = 0.1 }
//!
//! [forecasters]
//! mixture = true
//! sr = { search = { kind = "uniform" } }
//! srf = { search = { kind = "uniform" }, schedule = { schedule = "fixed", k = 4 } }
//!
//! [run]
//! horizon = 10000
//! replications = 10
//! seed = 7
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::{ChainInstance, DEFAULT_STATE_CEILING};
use crate::error::{Error, Result};
use crate::harness::generator::{Generator, GeneratorSpec};
use crate::model_space::{ModelId, ModelSpace, ModelSpec, Schema};
use crate::search::SearchDistribution;
use crate::srf::TrialSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(default)]
    pub pre: Vec<u32>,
    #[serde(default)]
    pub post: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    FixedBernoulli,
    Cpt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub family: FamilyName,
    #[serde(default)]
    pub theta: Option<f64>,
    /// 1-based pre-outcome variable indices.
    #[serde(default)]
    pub parents: Option<Vec<usize>>,
    #[serde(default)]
    pub pseudo_count: Option<f64>,
    #[serde(default)]
    pub prior: Option<f64>,
}

fn default_search() -> SearchDistribution {
    SearchDistribution::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrConfig {
    #[serde(default = "default_search")]
    pub search: SearchDistribution,
    /// Names of the initial current and alternate models.
    #[serde(default)]
    pub initial: Option<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrfConfig {
    #[serde(default = "default_search")]
    pub search: SearchDistribution,
    #[serde(default)]
    pub schedule: TrialSchedule,
    #[serde(default)]
    pub initial: Option<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastersConfig {
    #[serde(default)]
    pub mixture: bool,
    #[serde(default)]
    pub sr: Option<SrConfig>,
    #[serde(default)]
    pub srf: Option<SrfConfig>,
}

fn one() -> u64 {
    1
}

fn ten() -> usize {
    10
}

fn default_epsilons() -> Vec<f64> {
    vec![0.01, 0.05, 0.1]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: usize,
    #[serde(default = "one")]
    pub replications: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Check forecast/outcome ordering on every step.
    #[serde(default)]
    pub audit: bool,
    /// Windows used for convergence summaries.
    #[serde(default = "ten")]
    pub windows: usize,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Write the mixture posterior after every step.
    #[serde(default = "yes")]
    pub posteriors: bool,
}

fn default_ks() -> Vec<usize> {
    vec![1]
}

fn default_ceiling() -> usize {
    DEFAULT_STATE_CEILING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    #[serde(default = "default_ks")]
    pub k: Vec<usize>,
    #[serde(default = "default_search")]
    pub search: SearchDistribution,
    #[serde(default = "default_ceiling")]
    pub state_ceiling: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { k: default_ks(), search: default_search(), state_ceiling: default_ceiling() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: SchemaConfig,
    pub models: Vec<ModelConfig>,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub forecasters: ForecastersConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub chain: Option<ChainConfig>,
}

#[derive(Debug, Clone)]
pub struct SrSettings {
    pub search: SearchDistribution,
    pub initial: Option<(ModelId, ModelId)>,
}

#[derive(Debug, Clone)]
pub struct SrfSettings {
    pub search: SearchDistribution,
    pub schedule: TrialSchedule,
    pub initial: Option<(ModelId, ModelId)>,
}

/// A validated configuration with names resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub space: ModelSpace,
    pub generator: Generator,
    pub mixture: bool,
    pub sr: Option<SrSettings>,
    pub srf: Option<SrfSettings>,
    pub run: RunConfig,
    pub chain: ChainConfig,
}

fn model_spec(i: usize, m: &ModelConfig, q: usize) -> Result<ModelSpec> {
    let field = |f: &str| format!("models[{i}].{f}");
    match m.family {
        FamilyName::FixedBernoulli => {
            if m.parents.is_some() || m.pseudo_count.is_some() {
                return Err(Error::config(field("family"), "fixed-bernoulli takes only `theta`"));
            }
            let theta = m.theta.ok_or_else(|| Error::config(field("theta"), "required for fixed-bernoulli"))?;
            Ok(ModelSpec::fixed_bernoulli(&m.name, theta))
        }
        FamilyName::Cpt => {
            if m.theta.is_some() {
                return Err(Error::config(field("theta"), "not used by cpt models"));
            }
            let parents = m.parents.clone().unwrap_or_default();
            let parents = parents
                .iter()
                .map(|&p| {
                    if p == 0 || p > q {
                        Err(Error::config(field("parents"), format!("variable {p} outside 1..={q}")))
                    } else {
                        Ok(p - 1)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelSpec::cpt(&m.name, parents, m.pseudo_count.unwrap_or(1.0)))
        }
    }
}

fn resolve_pair(field: &str, space: &ModelSpace, names: &Option<[String; 2]>) -> Result<Option<(ModelId, ModelId)>> {
    let Some([c, a]) = names else { return Ok(None) };
    let look = |n: &String| space.id_of(n).ok_or_else(|| Error::config(field, format!("unknown model `{n}`")));
    Ok(Some((look(c)?, look(a)?)))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            let span = e.span().map(|s| format!(" (byte {})", s.start)).unwrap_or_default();
            Error::config(path.display().to_string(), format!("{}{span}", e.message()))
        })
    }

    pub fn build(&self) -> Result<Experiment> {
        let schema = Schema::new(self.schema.pre.clone(), self.schema.post.clone())
            .map_err(|e| Error::config("schema", e.to_string()))?;
        if self.models.is_empty() {
            return Err(Error::config("models", "at least one model is required"));
        }
        let specs = self
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| model_spec(i, m, schema.q()))
            .collect::<Result<Vec<_>>>()?;
        let priors: Vec<f64> = self.models.iter().map(|m| m.prior.unwrap_or(1.0)).collect();
        let space = ModelSpace::new(schema, specs, priors).map_err(|e| Error::config("models", e.to_string()))?;
        let generator = Generator::new(&self.generator, &space).map_err(|e| Error::config("generator", e.to_string()))?;

        let f = &self.forecasters;
        if !f.mixture && f.sr.is_none() && f.srf.is_none() {
            return Err(Error::config("forecasters", "enable at least one of mixture, sr, srf"));
        }
        let sr = match &f.sr {
            Some(c) => {
                c.search.validate().map_err(|e| Error::config("forecasters.sr.search", e.to_string()))?;
                Some(SrSettings { search: c.search, initial: resolve_pair("forecasters.sr.initial", &space, &c.initial)? })
            }
            None => None,
        };
        let srf = match &f.srf {
            Some(c) => {
                c.search.validate().map_err(|e| Error::config("forecasters.srf.search", e.to_string()))?;
                c.schedule.validate().map_err(|e| Error::config("forecasters.srf.schedule", e.to_string()))?;
                Some(SrfSettings {
                    search: c.search,
                    schedule: c.schedule,
                    initial: resolve_pair("forecasters.srf.initial", &space, &c.initial)?,
                })
            }
            None => None,
        };

        let run = &self.run;
        if run.horizon == 0 {
            return Err(Error::config("run.horizon", "must be at least 1"));
        }
        if run.replications == 0 {
            return Err(Error::config("run.replications", "must be at least 1"));
        }
        if run.windows == 0 || run.windows > run.horizon {
            return Err(Error::config("run.windows", format!("must lie in 1..={}", run.horizon)));
        }
        if run.epsilons.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::config("run.epsilons", "must be non-negative"));
        }
        if let Some(s) = &srf {
            if run.horizon < s.schedule.k(1) {
                return Err(Error::config("run.horizon", "shorter than the first trial period"));
            }
        }
        let chain = self.chain.clone().unwrap_or_default();
        if chain.k.contains(&0) || chain.k.is_empty() {
            return Err(Error::config("chain.k", "every k must be at least 1"));
        }
        chain.search.validate().map_err(|e| Error::config("chain.search", e.to_string()))?;
        Ok(Experiment { space, generator, mixture: f.mixture, sr, srf, run: run.clone(), chain })
    }
}

impl Experiment {
    /// The exact-chain instance for trial length `k`.
    pub fn chain_instance(&self, k: usize) -> Result<ChainInstance> {
        ChainInstance::with_ceiling(
            self.space.clone(),
            self.generator.symbol_probs()?,
            k,
            self.chain.search,
            self.chain.state_ceiling,
        )
    }

    pub fn forecaster_names(&self) -> Vec<&'static str> {
        let mut names = vec!["truth"];
        if self.mixture {
            names.push("mixture");
        }
        if self.sr.is_some() {
            names.push("sr");
        }
        if self.srf.is_some() {
            names.push("srf");
        }
        names
    }
}
