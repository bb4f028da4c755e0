//! Model search distributions used to propose alternate models.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_space::{ModelId, ModelSpace};

/// Weight of the uniform component mixed into the neighborhood kind, so every
/// model keeps positive proposal probability.
pub const NEIGHBORHOOD_UNIFORM_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SearchDistribution {
    Uniform,
    PriorProportional,
    /// `∝ exp(-hamming(structure(current), structure(ω)) / temperature)`,
    /// mixed with uniform at rate [`NEIGHBORHOOD_UNIFORM_FLOOR`].
    Neighborhood { temperature: f64 },
}

impl SearchDistribution {
    pub fn validate(&self) -> Result<()> {
        if let SearchDistribution::Neighborhood { temperature } = self {
            if !(*temperature > 0.0) {
                return Err(Error::Search(format!("temperature {temperature} must be positive")));
            }
        }
        Ok(())
    }

    /// Proposal probabilities over the whole space given the current model.
    pub fn probabilities(&self, space: &ModelSpace, current: ModelId) -> Vec<f64> {
        let n = space.len() as f64;
        match *self {
            SearchDistribution::Uniform => vec![1.0 / n; space.len()],
            SearchDistribution::PriorProportional => space.priors().to_vec(),
            SearchDistribution::Neighborhood { temperature } => {
                let anchor = space.spec(current).structure();
                let raw: Vec<f64> = space
                    .models()
                    .iter()
                    .map(|m| {
                        let d = (anchor ^ m.structure()).count_ones() as f64;
                        (-d / temperature).exp()
                    })
                    .collect();
                let z: f64 = raw.iter().sum();
                raw.iter()
                    .map(|w| (1.0 - NEIGHBORHOOD_UNIFORM_FLOOR) * w / z + NEIGHBORHOOD_UNIFORM_FLOOR / n)
                    .collect()
            }
        }
    }
}

/// Precomputed sampler for a distribution over one model space.
#[derive(Debug, Clone)]
pub struct SearchSampler {
    dist: SearchDistribution,
    // one table when the distribution ignores the current model, else one per model
    tables: Vec<WeightedIndex<f64>>,
}

impl SearchSampler {
    pub fn new(dist: SearchDistribution, space: &ModelSpace) -> Result<Self> {
        dist.validate()?;
        let anchors: Vec<ModelId> = match dist {
            SearchDistribution::Neighborhood { .. } => space.ids().collect(),
            _ => vec![ModelId(0)],
        };
        let tables = anchors
            .into_iter()
            .map(|c| {
                WeightedIndex::new(dist.probabilities(space, c))
                    .map_err(|e| Error::Search(e.to_string()))
            })
            .collect::<Result<_>>()?;
        Ok(SearchSampler { dist, tables })
    }

    pub fn distribution(&self) -> SearchDistribution {
        self.dist
    }

    pub fn sample<R: Rng + ?Sized>(&self, current: ModelId, rng: &mut R) -> ModelId {
        let table = if self.tables.len() == 1 { &self.tables[0] } else { &self.tables[current.0] };
        ModelId(table.sample(rng))
    }
}

/// Two distinct models drawn from the prior, or the sole model twice for a
/// singleton space.
pub fn initial_pair<R: Rng + ?Sized>(space: &ModelSpace, rng: &mut R) -> Result<(ModelId, ModelId)> {
    let prior = SearchSampler::new(SearchDistribution::PriorProportional, space)?;
    let current = prior.sample(ModelId(0), rng);
    if space.len() == 1 {
        return Ok((current, current));
    }
    loop {
        let alternate = prior.sample(ModelId(0), rng);
        if alternate != current {
            return Ok((current, alternate));
        }
    }
}
