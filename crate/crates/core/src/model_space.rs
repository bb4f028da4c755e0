//! Observation data model and the finite space of forecasting recipes.
//!
//! Every observation is a vector `(b_1..b_q, x, a_1..a_r)`: categorical
//! variables seen before the binary outcome, the outcome itself, and
//! categorical variables seen after it. A model turns the history so far
//! plus the current `b` into a probability for `x = 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of parent contexts a single CPT model may allocate.
pub const MAX_CONTEXTS: u64 = 1 << 24;

/// Declares the pre-outcome and post-outcome variables and their alphabet sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pre: Vec<u32>,
    post: Vec<u32>,
}

impl Schema {
    pub fn new(pre: Vec<u32>, post: Vec<u32>) -> Result<Self> {
        if let Some(i) = pre.iter().position(|&n| n == 0) {
            return Err(Error::Schema(format!("pre-outcome variable {} has an empty alphabet", i + 1)));
        }
        if let Some(i) = post.iter().position(|&n| n == 0) {
            return Err(Error::Schema(format!("post-outcome variable {} has an empty alphabet", i + 1)));
        }
        if pre.len() > 64 {
            return Err(Error::Schema("at most 64 pre-outcome variables are supported".into()));
        }
        let schema = Schema { pre, post };
        if schema.symbol_count_u128() > u64::MAX as u128 {
            return Err(Error::Schema("observation alphabet does not fit in 64 bits".into()));
        }
        Ok(schema)
    }

    /// Schema with no auxiliary variables: observations are the bare outcome.
    pub fn outcome_only() -> Self {
        Schema { pre: Vec::new(), post: Vec::new() }
    }

    pub fn q(&self) -> usize {
        self.pre.len()
    }

    pub fn r(&self) -> usize {
        self.post.len()
    }

    pub fn pre_alphabets(&self) -> &[u32] {
        &self.pre
    }

    pub fn post_alphabets(&self) -> &[u32] {
        &self.post
    }

    pub fn check_pre(&self, b: &[u32]) -> Result<()> {
        check_values("pre-outcome", &self.pre, b)
    }

    pub fn check(&self, obs: &ObservationVector) -> Result<()> {
        check_values("pre-outcome", &self.pre, &obs.b)?;
        check_values("post-outcome", &self.post, &obs.a)
    }

    fn symbol_count_u128(&self) -> u128 {
        let pre: u128 = self.pre.iter().map(|&n| n as u128).product();
        let post: u128 = self.post.iter().map(|&n| n as u128).product();
        pre.saturating_mul(2).saturating_mul(post)
    }

    /// Number of distinct observation vectors.
    pub fn symbol_count(&self) -> u64 {
        self.symbol_count_u128() as u64
    }

    /// Number of distinct pre-outcome configurations.
    pub fn pre_configurations(&self) -> u64 {
        self.pre.iter().map(|&n| n as u64).product()
    }

    /// Mixed-radix code of an observation, `b_1` least significant, then
    /// `b_2..b_q`, `x`, `a_1..a_r`.
    pub fn encode(&self, obs: &ObservationVector) -> u64 {
        let mut code = 0u64;
        let mut stride = 1u64;
        for (&v, &n) in obs.b.iter().zip(&self.pre) {
            code += v as u64 * stride;
            stride *= n as u64;
        }
        code += obs.x as u64 * stride;
        stride *= 2;
        for (&v, &n) in obs.a.iter().zip(&self.post) {
            code += v as u64 * stride;
            stride *= n as u64;
        }
        code
    }

    pub fn decode(&self, mut code: u64) -> ObservationVector {
        let mut b = Vec::with_capacity(self.pre.len());
        for &n in &self.pre {
            b.push((code % n as u64) as u32);
            code /= n as u64;
        }
        let x = code % 2 == 1;
        code /= 2;
        let mut a = Vec::with_capacity(self.post.len());
        for &n in &self.post {
            a.push((code % n as u64) as u32);
            code /= n as u64;
        }
        ObservationVector { b, x, a }
    }

    /// Pre-outcome configuration for a code in `0..pre_configurations()`.
    pub fn decode_pre(&self, mut code: u64) -> Vec<u32> {
        self.pre
            .iter()
            .map(|&n| {
                let v = (code % n as u64) as u32;
                code /= n as u64;
                v
            })
            .collect()
    }
}

fn check_values(what: &str, alphabets: &[u32], values: &[u32]) -> Result<()> {
    if values.len() != alphabets.len() {
        return Err(Error::Schema(format!(
            "expected {} {what} values, got {}",
            alphabets.len(),
            values.len()
        )));
    }
    for (i, (&v, &n)) in values.iter().zip(alphabets).enumerate() {
        if v >= n {
            return Err(Error::Schema(format!(
                "{what} variable {} has value {v} outside alphabet of size {n}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// One time step's data `S_t = (b, x, a)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservationVector {
    pub b: Vec<u32>,
    pub x: bool,
    pub a: Vec<u32>,
}

impl ObservationVector {
    pub fn new(b: Vec<u32>, x: bool, a: Vec<u32>) -> Self {
        ObservationVector { b, x, a }
    }

    /// Outcome-only observation.
    pub fn outcome(x: bool) -> Self {
        ObservationVector { b: Vec::new(), x, a: Vec::new() }
    }
}

/// Append-only history of observations, `records[0]` is time 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    schema: Schema,
    records: Vec<ObservationVector>,
}

impl Trace {
    pub fn new(schema: Schema) -> Self {
        Trace { schema, records: Vec::new() }
    }

    pub fn from_records(schema: Schema, records: Vec<ObservationVector>) -> Result<Self> {
        for obs in &records {
            schema.check(obs)?;
        }
        Ok(Trace { schema, records })
    }

    pub fn push(&mut self, obs: ObservationVector) -> Result<()> {
        self.schema.check(&obs)?;
        self.records.push(obs);
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[ObservationVector] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Index of a model inside its [`ModelSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelId(pub usize);

impl ModelId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// Constant forecast `theta` regardless of history.
    FixedBernoulli { theta: f64 },
    /// Smoothed outcome frequency within the context formed by the parent
    /// pre-outcome variables (0-based indices).
    Cpt { parents: Vec<usize>, pseudo_count: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub family: Family,
}

impl ModelSpec {
    pub fn fixed_bernoulli(name: impl Into<String>, theta: f64) -> Self {
        ModelSpec { name: name.into(), family: Family::FixedBernoulli { theta } }
    }

    pub fn cpt(name: impl Into<String>, mut parents: Vec<usize>, pseudo_count: f64) -> Self {
        parents.sort_unstable();
        ModelSpec { name: name.into(), family: Family::Cpt { parents, pseudo_count } }
    }

    /// Bit mask of the pre-outcome variables this model conditions on.
    pub fn structure(&self) -> u64 {
        match &self.family {
            Family::FixedBernoulli { .. } => 0,
            Family::Cpt { parents, .. } => parents.iter().fold(0u64, |m, &p| m | (1u64 << p)),
        }
    }

    pub fn is_stateless(&self) -> bool {
        matches!(self.family, Family::FixedBernoulli { .. })
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::Model { model: self.name.clone(), reason: reason.into() }
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        match &self.family {
            Family::FixedBernoulli { theta } => {
                if !(*theta > 0.0 && *theta < 1.0) {
                    return Err(self.invalid(format!("theta {theta} must lie in (0, 1)")));
                }
            }
            Family::Cpt { parents, pseudo_count } => {
                if !(*pseudo_count > 0.0 && pseudo_count.is_finite()) {
                    return Err(self.invalid(format!("pseudo-count {pseudo_count} must be positive")));
                }
                for w in parents.windows(2) {
                    if w[0] == w[1] {
                        return Err(self.invalid(format!("parent {} listed twice", w[0] + 1)));
                    }
                }
                if let Some(&p) = parents.iter().find(|&&p| p >= schema.q()) {
                    return Err(self.invalid(format!(
                        "parent {} outside 1..={}",
                        p + 1,
                        schema.q()
                    )));
                }
                let contexts: u128 = parents.iter().map(|&p| schema.pre[p] as u128).product();
                if contexts > MAX_CONTEXTS as u128 {
                    return Err(self.invalid(format!("{contexts} parent contexts exceed {MAX_CONTEXTS}")));
                }
            }
        }
        Ok(())
    }
}

/// Sufficient statistics of one model: outcome counts per parent context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelState {
    Stateless,
    Counts(ContextCounts),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextCounts {
    /// `(parent index, alphabet size)` in mixed-radix order.
    layout: Vec<(usize, u32)>,
    /// `[n_0, n_1]` per context.
    counts: Vec<[u64; 2]>,
}

impl ContextCounts {
    fn context(&self, b: &[u32]) -> usize {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for &(p, n) in &self.layout {
            idx += b[p] as usize * stride;
            stride *= n as usize;
        }
        idx
    }

    /// `(n_1, n_0)` for the context selected by `b`.
    pub fn counts_at(&self, b: &[u32]) -> (u64, u64) {
        let c = self.counts[self.context(b)];
        (c[1], c[0])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|c| c[0] + c[1]).sum()
    }
}

impl ModelState {
    /// Statistics before any observation.
    pub fn fresh(spec: &ModelSpec, schema: &Schema) -> Self {
        match &spec.family {
            Family::FixedBernoulli { .. } => ModelState::Stateless,
            Family::Cpt { parents, .. } => {
                let layout: Vec<(usize, u32)> = parents.iter().map(|&p| (p, schema.pre[p])).collect();
                let n: usize = layout.iter().map(|&(_, n)| n as usize).product();
                ModelState::Counts(ContextCounts { layout, counts: vec![[0, 0]; n] })
            }
        }
    }

    /// Number of observations absorbed (always 0 for stateless models).
    pub fn total(&self) -> u64 {
        match self {
            ModelState::Stateless => 0,
            ModelState::Counts(c) => c.total(),
        }
    }

    /// Probability this model gives to outcome `x` after seeing `b`.
    ///
    /// `b` must already conform to the schema; [`ModelSpace::predict`] is
    /// the checked entry point.
    pub fn prob_of(&self, spec: &ModelSpec, b: &[u32], x: bool) -> f64 {
        match (&spec.family, self) {
            (Family::FixedBernoulli { theta }, _) => {
                if x {
                    *theta
                } else {
                    1.0 - theta
                }
            }
            (Family::Cpt { pseudo_count, .. }, ModelState::Counts(c)) => {
                let (n1, n0) = c.counts_at(b);
                let hit = if x { n1 } else { n0 };
                (hit as f64 + pseudo_count) / ((n1 + n0) as f64 + 2.0 * pseudo_count)
            }
            (Family::Cpt { .. }, ModelState::Stateless) => {
                panic!("model `{}` paired with stateless statistics", spec.name)
            }
        }
    }

    pub fn predict(&self, spec: &ModelSpec, b: &[u32]) -> f64 {
        self.prob_of(spec, b, true)
    }

    pub fn log_likelihood_increment(&self, spec: &ModelSpec, obs: &ObservationVector) -> f64 {
        self.prob_of(spec, &obs.b, obs.x).ln()
    }

    pub fn update(&mut self, obs: &ObservationVector) {
        if let ModelState::Counts(c) = self {
            let i = c.context(&obs.b);
            c.counts[i][obs.x as usize] += 1;
        }
    }

    pub fn counts(&self) -> Option<&ContextCounts> {
        match self {
            ModelState::Stateless => None,
            ModelState::Counts(c) => Some(c),
        }
    }
}

/// The finite model space with normalized prior weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpace {
    schema: Schema,
    models: Vec<ModelSpec>,
    priors: Vec<f64>,
    log_priors: Vec<f64>,
}

impl ModelSpace {
    pub fn new(schema: Schema, specs: Vec<ModelSpec>, priors: Vec<f64>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::ModelSpace("no models declared".into()));
        }
        if priors.len() != specs.len() {
            return Err(Error::ModelSpace(format!(
                "{} models but {} prior weights",
                specs.len(),
                priors.len()
            )));
        }
        for (spec, &w) in specs.iter().zip(&priors) {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::ModelSpace(format!(
                    "prior weight {w} for `{}` must be positive and finite",
                    spec.name
                )));
            }
            spec.validate(&schema)?;
        }
        for (i, spec) in specs.iter().enumerate() {
            if specs[..i].iter().any(|s| s.name == spec.name) {
                return Err(Error::ModelSpace(format!("duplicate model id `{}`", spec.name)));
            }
        }
        let total: f64 = priors.iter().sum();
        let priors: Vec<f64> = priors.iter().map(|w| w / total).collect();
        let log_priors = priors.iter().map(|w| w.ln()).collect();
        Ok(ModelSpace { schema, models: specs, priors, log_priors })
    }

    /// Equal prior weight on every model.
    pub fn uniform(schema: Schema, specs: Vec<ModelSpec>) -> Result<Self> {
        let n = specs.len();
        Self::new(schema, specs, vec![1.0; n])
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ModelId> {
        (0..self.models.len()).map(ModelId)
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn spec(&self, id: ModelId) -> &ModelSpec {
        &self.models[id.0]
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn prior(&self, id: ModelId) -> f64 {
        self.priors[id.0]
    }

    pub fn log_prior(&self, id: ModelId) -> f64 {
        self.log_priors[id.0]
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    pub fn id_of(&self, name: &str) -> Option<ModelId> {
        self.models.iter().position(|m| m.name == name).map(ModelId)
    }

    pub fn has_equal_priors(&self) -> bool {
        self.priors.windows(2).all(|w| w[0] == w[1])
    }

    pub fn fresh_state(&self, id: ModelId) -> ModelState {
        ModelState::fresh(&self.models[id.0], &self.schema)
    }

    pub fn predict(&self, id: ModelId, state: &ModelState, b: &[u32]) -> Result<f64> {
        self.schema.check_pre(b)?;
        Ok(state.predict(self.spec(id), b))
    }

    pub fn update_model(&self, state: &mut ModelState, obs: &ObservationVector) -> Result<()> {
        self.schema.check(obs)?;
        state.update(obs);
        Ok(())
    }

    pub fn log_likelihood_increment(
        &self,
        id: ModelId,
        state: &ModelState,
        obs: &ObservationVector,
    ) -> Result<f64> {
        self.schema.check(obs)?;
        Ok(state.log_likelihood_increment(self.spec(id), obs))
    }

    /// Replays `records` through fresh statistics, returning the summed log
    /// likelihood and the final state.
    pub fn replay(&self, id: ModelId, records: &[ObservationVector]) -> (f64, ModelState) {
        let spec = self.spec(id);
        let mut state = self.fresh_state(id);
        let mut log_lik = 0.0;
        for obs in records {
            log_lik += state.log_likelihood_increment(spec, obs);
            state.update(obs);
        }
        (log_lik, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn binary(q: usize) -> Schema {
        Schema::new(vec![2; q], vec![]).unwrap()
    }

    #[test]
    fn priors_normalize() {
        let s = ModelSpace::new(
            Schema::outcome_only(),
            vec![ModelSpec::fixed_bernoulli("a", 0.2), ModelSpec::fixed_bernoulli("b", 0.8)],
            vec![1.0, 1.0],
        )
        .unwrap();
        assert_eq!(s.priors(), &[0.5, 0.5]);

        let s = ModelSpace::new(
            Schema::outcome_only(),
            vec![
                ModelSpec::fixed_bernoulli("a", 0.2),
                ModelSpec::fixed_bernoulli("b", 0.5),
                ModelSpec::fixed_bernoulli("c", 0.8),
            ],
            vec![2.0, 1.0, 1.0],
        )
        .unwrap();
        assert_eq!(s.priors(), &[0.5, 0.25, 0.25]);
        assert!((s.priors().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn build_rejects_bad_input() {
        let schema = Schema::outcome_only();
        assert!(ModelSpace::new(schema.clone(), vec![], vec![]).is_err());
        let zero = ModelSpace::new(
            schema.clone(),
            vec![ModelSpec::fixed_bernoulli("a", 0.2), ModelSpec::fixed_bernoulli("b", 0.8)],
            vec![1.0, 0.0],
        );
        assert!(matches!(zero, Err(Error::ModelSpace(_))));
        let dup = ModelSpace::uniform(
            schema.clone(),
            vec![ModelSpec::fixed_bernoulli("a", 0.2), ModelSpec::fixed_bernoulli("a", 0.8)],
        );
        assert!(dup.is_err());
        let theta = ModelSpace::uniform(schema.clone(), vec![ModelSpec::fixed_bernoulli("a", 1.0)]);
        assert!(theta.is_err());
        let parent = ModelSpace::uniform(schema, vec![ModelSpec::cpt("c", vec![0], 1.0)]);
        assert!(parent.is_err());
        let pc = ModelSpace::uniform(binary(1), vec![ModelSpec::cpt("c", vec![0], 0.0)]);
        assert!(pc.is_err());
    }

    #[test]
    fn fixed_bernoulli_predicts_theta() {
        let space = ModelSpace::uniform(binary(2), vec![ModelSpec::fixed_bernoulli("f", 0.3)]).unwrap();
        let st = space.fresh_state(ModelId(0));
        for b in [[0, 0], [1, 0], [1, 1]] {
            assert_eq!(space.predict(ModelId(0), &st, &b).unwrap(), 0.3);
        }
        let mut st2 = st.clone();
        space.update_model(&mut st2, &ObservationVector::new(vec![1, 1], true, vec![])).unwrap();
        assert_eq!(st, st2);
    }

    #[test]
    fn cpt_smoothed_frequency() {
        let space = ModelSpace::uniform(binary(2), vec![ModelSpec::cpt("c", vec![0], 1.0)]).unwrap();
        let id = ModelId(0);
        let mut st = space.fresh_state(id);
        assert_eq!(space.predict(id, &st, &[1, 0]).unwrap(), 0.5);

        space.update_model(&mut st, &ObservationVector::new(vec![1, 0], true, vec![])).unwrap();
        assert_eq!(st.counts().unwrap().counts_at(&[1, 0]), (1, 0));

        for x in [true, true, false] {
            space.update_model(&mut st, &ObservationVector::new(vec![1, 1], x, vec![])).unwrap();
        }
        // context B1 = 1 now holds n1 = 3, n0 = 1
        assert_relative_eq!(space.predict(id, &st, &[1, 0]).unwrap(), 4.0 / 6.0, epsilon = 1e-15);
        // untouched context still at the symmetric base rate
        assert_eq!(space.predict(id, &st, &[0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn counts_conserve_observations() {
        let space = ModelSpace::uniform(binary(2), vec![ModelSpec::cpt("c", vec![0, 1], 1.0)]).unwrap();
        let mut st = space.fresh_state(ModelId(0));
        for i in 0..10u32 {
            let obs = ObservationVector::new(vec![i % 2, (i / 2) % 2], i % 3 == 0, vec![]);
            space.update_model(&mut st, &obs).unwrap();
        }
        assert_eq!(st.total(), 10);
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let space = ModelSpace::uniform(binary(2), vec![ModelSpec::cpt("c", vec![0], 1.0)]).unwrap();
        let st = space.fresh_state(ModelId(0));
        assert!(matches!(space.predict(ModelId(0), &st, &[1]), Err(Error::Schema(_))));
        assert!(matches!(space.predict(ModelId(0), &st, &[2, 0]), Err(Error::Schema(_))));
        let mut st = st;
        let bad = ObservationVector::new(vec![0, 0], true, vec![1]);
        assert!(space.update_model(&mut st, &bad).is_err());
    }

    #[test]
    fn log_increment_values() {
        let space = ModelSpace::uniform(
            Schema::outcome_only(),
            vec![ModelSpec::fixed_bernoulli("half", 0.5), ModelSpec::fixed_bernoulli("p", 0.3)],
        )
        .unwrap();
        let st = space.fresh_state(ModelId(0));
        for x in [true, false] {
            let v = space.log_likelihood_increment(ModelId(0), &st, &ObservationVector::outcome(x)).unwrap();
            assert_relative_eq!(v, -std::f64::consts::LN_2, epsilon = 1e-15);
        }
        let v = space.log_likelihood_increment(ModelId(1), &st, &ObservationVector::outcome(true)).unwrap();
        assert_eq!(v, 0.3f64.ln());
    }

    #[test]
    fn replay_matches_summed_increments() {
        let space = ModelSpace::uniform(binary(1), vec![ModelSpec::cpt("c", vec![0], 0.5)]).unwrap();
        let records: Vec<_> = (0..25u32)
            .map(|i| ObservationVector::new(vec![i % 2], (i * 7) % 5 < 2, vec![]))
            .collect();
        let mut st = space.fresh_state(ModelId(0));
        let mut sum = 0.0;
        for obs in &records {
            sum += space.log_likelihood_increment(ModelId(0), &st, obs).unwrap();
            space.update_model(&mut st, obs).unwrap();
        }
        let (replayed, rstate) = space.replay(ModelId(0), &records);
        assert_eq!(sum, replayed);
        assert_eq!(st, rstate);
    }

    #[test]
    fn encode_decode_roundtrip() {
        let schema = Schema::new(vec![3, 2], vec![4]).unwrap();
        assert_eq!(schema.symbol_count(), 3 * 2 * 2 * 4);
        for code in 0..schema.symbol_count() {
            let obs = schema.decode(code);
            schema.check(&obs).unwrap();
            assert_eq!(schema.encode(&obs), code);
        }
    }

    fn arb_obs() -> impl Strategy<Value = ObservationVector> {
        (0u32..3, 0u32..2, any::<bool>()).prop_map(|(b1, b2, x)| ObservationVector::new(vec![b1, b2], x, vec![]))
    }

    proptest! {
        #[test]
        fn state_is_permutation_invariant(
            (obs, shuffled) in prop::collection::vec(arb_obs(), 0..60)
                .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
        ) {
            let schema = Schema::new(vec![3, 2], vec![]).unwrap();
            let space = ModelSpace::uniform(schema, vec![ModelSpec::cpt("c", vec![0, 1], 1.0)]).unwrap();
            let (_, a) = space.replay(ModelId(0), &obs);
            let (_, b) = space.replay(ModelId(0), &shuffled);
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.total(), obs.len() as u64);
        }

        #[test]
        fn predictions_stay_open_unit(obs in prop::collection::vec(arb_obs(), 0..200), pc in 0.01f64..5.0) {
            let schema = Schema::new(vec![3, 2], vec![]).unwrap();
            let space = ModelSpace::uniform(schema, vec![ModelSpec::cpt("c", vec![0], pc)]).unwrap();
            let (_, st) = space.replay(ModelId(0), &obs);
            for b1 in 0..3 {
                let p = space.predict(ModelId(0), &st, &[b1, 0]).unwrap();
                prop_assert!(p > 0.0 && p < 1.0);
            }
        }
    }
}
