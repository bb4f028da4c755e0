//! Iid data generation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_space::{Family, ModelId, ModelSpace, ObservationVector, Schema, MAX_CONTEXTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// Marginal of each pre-outcome variable; empty means uniform for all.
    #[serde(default)]
    pub pre: Vec<Vec<f64>>,
    /// Marginal of each post-outcome variable; empty means uniform for all.
    #[serde(default)]
    pub post: Vec<Vec<f64>>,
    pub outcome: OutcomeRule,
}

/// How `P(x = 1 | b)` is produced. Variable indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OutcomeRule {
    Constant { p: f64 },
    /// `p_odd` when the listed variables sum to an odd number, else `p_even`.
    Parity { vars: Vec<usize>, p_odd: f64, p_even: f64 },
    /// One probability per configuration of `parents`, first parent fastest.
    Table { parents: Vec<usize>, p: Vec<f64> },
    /// The truth is a model of the space. Cpt models need their true table.
    InSpace {
        model: String,
        #[serde(default)]
        p: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Outcome {
    Constant(f64),
    Parity { vars: Vec<usize>, p_odd: f64, p_even: f64 },
    Table { parents: Vec<usize>, p: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Generator {
    schema: Schema,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    pre_tables: Vec<WeightedIndex<f64>>,
    post_tables: Vec<WeightedIndex<f64>>,
    outcome: Outcome,
    truth: Option<ModelId>,
}

fn open_unit(field: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Generator(format!("{field} = {p} must lie strictly between 0 and 1")))
    }
}

fn marginals(field: &str, given: &[Vec<f64>], alphabets: &[u32]) -> Result<Vec<Vec<f64>>> {
    if given.is_empty() {
        return Ok(alphabets.iter().map(|&n| vec![1.0 / n as f64; n as usize]).collect());
    }
    if given.len() != alphabets.len() {
        return Err(Error::Generator(format!(
            "{field} lists {} marginals for {} variables",
            given.len(),
            alphabets.len()
        )));
    }
    for (i, (m, &n)) in given.iter().zip(alphabets).enumerate() {
        if m.len() != n as usize {
            return Err(Error::Generator(format!("{field}[{}] has {} entries, alphabet has {n}", i + 1, m.len())));
        }
        if m.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Generator(format!("{field}[{}] entries must lie in (0, 1]", i + 1)));
        }
        let sum: f64 = m.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Generator(format!("{field}[{}] sums to {sum}", i + 1)));
        }
    }
    Ok(given.to_vec())
}

fn zero_based(field: &str, vars: &[usize], q: usize) -> Result<Vec<usize>> {
    vars.iter()
        .map(|&v| {
            if v == 0 || v > q {
                Err(Error::Generator(format!("{field} references variable {v}; valid range is 1..={q}")))
            } else {
                Ok(v - 1)
            }
        })
        .collect()
}

fn table_index(parents: &[usize], alphabets: &[u32], b: &[u32]) -> usize {
    let mut index = 0usize;
    let mut stride = 1usize;
    for &p in parents {
        index += b[p] as usize * stride;
        stride *= alphabets[p] as usize;
    }
    index
}

fn table_outcome(field: &str, schema: &Schema, parents: Vec<usize>, p: &[f64]) -> Result<Outcome> {
    let configs: usize = parents.iter().map(|&v| schema.pre_alphabets()[v] as usize).product();
    if p.len() != configs {
        return Err(Error::Generator(format!("{field} has {} entries, parents have {configs} configurations", p.len())));
    }
    for (i, &v) in p.iter().enumerate() {
        open_unit(&format!("{field}[{i}]"), v)?;
    }
    Ok(Outcome::Table { parents, p: p.to_vec() })
}

impl Generator {
    pub fn new(spec: &GeneratorSpec, space: &ModelSpace) -> Result<Self> {
        let schema = space.schema().clone();
        let q = schema.q();
        let pre = marginals("generator.pre", &spec.pre, schema.pre_alphabets())?;
        let post = marginals("generator.post", &spec.post, schema.post_alphabets())?;
        let mut truth = None;
        let outcome = match &spec.outcome {
            OutcomeRule::Constant { p } => {
                open_unit("generator.outcome.p", *p)?;
                Outcome::Constant(*p)
            }
            OutcomeRule::Parity { vars, p_odd, p_even } => {
                open_unit("generator.outcome.p_odd", *p_odd)?;
                open_unit("generator.outcome.p_even", *p_even)?;
                if vars.is_empty() {
                    return Err(Error::Generator("generator.outcome.vars is empty".into()));
                }
                Outcome::Parity { vars: zero_based("generator.outcome.vars", vars, q)?, p_odd: *p_odd, p_even: *p_even }
            }
            OutcomeRule::Table { parents, p } => {
                let parents = zero_based("generator.outcome.parents", parents, q)?;
                table_outcome("generator.outcome.p", &schema, parents, p)?
            }
            OutcomeRule::InSpace { model, p } => {
                let id = space
                    .id_of(model)
                    .ok_or_else(|| Error::Generator(format!("generator.outcome.model `{model}` is not in the space")))?;
                truth = Some(id);
                match (&space.spec(id).family, p) {
                    (Family::FixedBernoulli { theta }, None) => Outcome::Constant(*theta),
                    (Family::FixedBernoulli { .. }, Some(_)) => {
                        return Err(Error::Generator("generator.outcome.p is not used by fixed-bernoulli truths".into()))
                    }
                    (Family::Cpt { parents, .. }, Some(p)) => table_outcome("generator.outcome.p", &schema, parents.clone(), p)?,
                    (Family::Cpt { .. }, None) => {
                        return Err(Error::Generator("generator.outcome.p is required for a cpt truth".into()))
                    }
                }
            }
        };
        let table = |m: &Vec<f64>| WeightedIndex::new(m).map_err(|e| Error::Generator(e.to_string()));
        let pre_tables = pre.iter().map(table).collect::<Result<_>>()?;
        let post_tables = post.iter().map(table).collect::<Result<_>>()?;
        Ok(Generator { schema, pre, post, pre_tables, post_tables, outcome, truth })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// The in-space truth model, if the generator declares one.
    pub fn truth(&self) -> Option<ModelId> {
        self.truth
    }

    pub fn p_x1(&self, b: &[u32]) -> f64 {
        match &self.outcome {
            Outcome::Constant(p) => *p,
            Outcome::Parity { vars, p_odd, p_even } => {
                if vars.iter().map(|&v| b[v]).sum::<u32>() % 2 == 1 {
                    *p_odd
                } else {
                    *p_even
                }
            }
            Outcome::Table { parents, p } => p[table_index(parents, self.schema.pre_alphabets(), b)],
        }
    }

    pub fn prob_pre(&self, b: &[u32]) -> f64 {
        b.iter().zip(&self.pre).map(|(&v, m)| m[v as usize]).product()
    }

    fn prob_post(&self, a: &[u32]) -> f64 {
        a.iter().zip(&self.post).map(|(&v, m)| m[v as usize]).product()
    }

    /// Draws `b`, then `x`, then `a`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ObservationVector {
        let b: Vec<u32> = self.pre_tables.iter().map(|t| t.sample(rng) as u32).collect();
        let x = rng.random::<f64>() < self.p_x1(&b);
        let a: Vec<u32> = self.post_tables.iter().map(|t| t.sample(rng) as u32).collect();
        ObservationVector { b, x, a }
    }

    pub fn generate_stream<R: Rng + ?Sized>(&self, rng: &mut R, horizon: usize) -> Vec<ObservationVector> {
        (0..horizon).map(|_| self.sample(rng)).collect()
    }

    /// Probability of every observation, indexed by schema code.
    pub fn symbol_probs(&self) -> Result<Vec<f64>> {
        let n = self.schema.symbol_count();
        if n > MAX_CONTEXTS {
            return Err(Error::Generator(format!("{n} symbols are too many to enumerate")));
        }
        Ok((0..n)
            .map(|code| {
                let obs = self.schema.decode(code);
                let p1 = self.p_x1(&obs.b);
                self.prob_pre(&obs.b) * if obs.x { p1 } else { 1.0 - p1 } * self.prob_post(&obs.a)
            })
            .collect())
    }

    /// Long-run expected per-step log score of each model. Cpt models are
    /// scored at their limiting estimate `P(x = 1 | parents)`.
    pub fn expected_log_scores(&self, space: &ModelSpace) -> Result<Vec<f64>> {
        let configs = self.schema.pre_configurations();
        if configs > MAX_CONTEXTS {
            return Err(Error::Generator(format!("{configs} pre-outcome configurations are too many to enumerate")));
        }
        let cells: Vec<(Vec<u32>, f64, f64)> = (0..configs)
            .map(|c| {
                let b = self.schema.decode_pre(c);
                let pb = self.prob_pre(&b);
                let p1 = self.p_x1(&b);
                (b, pb, p1)
            })
            .collect();
        let entropy_term = |q: f64, p1: f64| p1 * q.ln() + (1.0 - p1) * (1.0 - q).ln();
        Ok(space
            .models()
            .iter()
            .map(|m| match &m.family {
                Family::FixedBernoulli { theta } => cells.iter().map(|(_, pb, p1)| pb * entropy_term(*theta, *p1)).sum(),
                Family::Cpt { parents, .. } => {
                    let alphabets = self.schema.pre_alphabets();
                    let n: usize = parents.iter().map(|&v| alphabets[v] as usize).product();
                    let mut mass = vec![0.0; n];
                    let mut ones = vec![0.0; n];
                    for (b, pb, p1) in &cells {
                        let i = table_index(parents, alphabets, b);
                        mass[i] += pb;
                        ones[i] += pb * p1;
                    }
                    mass.iter()
                        .zip(&ones)
                        .filter(|(m, _)| **m > 0.0)
                        .map(|(m, o)| m * entropy_term(o / m, o / m))
                        .sum()
                }
            })
            .collect())
    }

    /// Models attaining the largest expected log score (ties within 1e-12).
    pub fn best_models(&self, space: &ModelSpace) -> Result<Vec<ModelId>> {
        let scores = self.expected_log_scores(space)?;
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((0..scores.len()).filter(|&i| scores[i] >= max - 1e-12).map(ModelId).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_space::ModelSpec;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn parity_space() -> ModelSpace {
        let schema = Schema::new(vec![2, 2, 2], vec![]).unwrap();
        ModelSpace::uniform(
            schema,
            vec![ModelSpec::cpt("b1", vec![0], 1.0), ModelSpec::cpt("b2", vec![1], 1.0), ModelSpec::cpt("b3", vec![2], 1.0)],
        )
        .unwrap()
    }

    fn parity(pre: Vec<Vec<f64>>) -> GeneratorSpec {
        GeneratorSpec { pre, post: vec![], outcome: OutcomeRule::Parity { vars: vec![1, 2], p_odd: 0.9, p_even: 0.1 } }
    }

    #[test]
    fn same_seed_same_stream() {
        let g = Generator::new(&parity(vec![]), &parity_space()).unwrap();
        let a = g.generate_stream(&mut ChaCha20Rng::seed_from_u64(3), 500);
        let b = g.generate_stream(&mut ChaCha20Rng::seed_from_u64(3), 500);
        assert_eq!(a, b);
    }

    #[test]
    fn fair_coin_mean() {
        let space = ModelSpace::uniform(Schema::outcome_only(), vec![ModelSpec::fixed_bernoulli("half", 0.5)]).unwrap();
        let spec = GeneratorSpec { pre: vec![], post: vec![], outcome: OutcomeRule::Constant { p: 0.5 } };
        let g = Generator::new(&spec, &space).unwrap();
        let n = 100_000;
        let ones = g.generate_stream(&mut ChaCha20Rng::seed_from_u64(9), n).iter().filter(|o| o.x).count();
        let mean = ones as f64 / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn parity_marginal_is_half() {
        let g = Generator::new(&parity(vec![]), &parity_space()).unwrap();
        let probs = g.symbol_probs().unwrap();
        assert_relative_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let schema = g.schema().clone();
        let p1: f64 = probs.iter().enumerate().filter(|(c, _)| schema.decode(*c as u64).x).map(|(_, p)| p).sum();
        assert_relative_eq!(p1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn uniform_parity_ties_single_variable_models() {
        let g = Generator::new(&parity(vec![]), &parity_space()).unwrap();
        let s = g.expected_log_scores(&parity_space()).unwrap();
        assert_relative_eq!(s[0], 0.5f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(s[1], s[2], epsilon = 1e-12);
    }

    #[test]
    fn skewed_parity_has_unique_best() {
        let g = Generator::new(&parity(vec![vec![0.5, 0.5], vec![0.2, 0.8], vec![0.5, 0.5]]), &parity_space()).unwrap();
        // P(x=1 | b1=0) = 0.8*0.9 + 0.2*0.1 = 0.74
        let q: f64 = 0.74;
        let s = g.expected_log_scores(&parity_space()).unwrap();
        assert_relative_eq!(s[0], q * q.ln() + (1.0 - q) * (1.0 - q).ln(), epsilon = 1e-12);
        assert_eq!(g.best_models(&parity_space()).unwrap(), vec![ModelId(0)]);
    }

    #[test]
    fn rejects_degenerate_probabilities() {
        let space = parity_space();
        let bad = GeneratorSpec { pre: vec![], post: vec![], outcome: OutcomeRule::Parity { vars: vec![1], p_odd: 1.0, p_even: 0.1 } };
        assert!(Generator::new(&bad, &space).is_err());
        let bad = GeneratorSpec { pre: vec![], post: vec![], outcome: OutcomeRule::Parity { vars: vec![4], p_odd: 0.5, p_even: 0.1 } };
        assert!(Generator::new(&bad, &space).is_err());
        let bad = GeneratorSpec { pre: vec![vec![0.5, 0.6]; 3], post: vec![], outcome: OutcomeRule::Constant { p: 0.5 } };
        assert!(Generator::new(&bad, &space).is_err());
    }

    #[test]
    fn in_space_truth() {
        let space = ModelSpace::uniform(
            Schema::outcome_only(),
            vec![ModelSpec::fixed_bernoulli("lo", 0.3), ModelSpec::fixed_bernoulli("hi", 0.7)],
        )
        .unwrap();
        let spec = GeneratorSpec { pre: vec![], post: vec![], outcome: OutcomeRule::InSpace { model: "hi".into(), p: None } };
        let g = Generator::new(&spec, &space).unwrap();
        assert_eq!(g.truth(), Some(ModelId(1)));
        assert_eq!(g.p_x1(&[]), 0.7);
        assert_eq!(g.best_models(&space).unwrap(), vec![ModelId(1)]);
    }
}
