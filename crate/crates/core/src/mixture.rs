//! Full Bayesian mixture over the model space.
//!
//! Posterior weights are recomputed from cumulative log likelihoods with
//! max-subtraction; raw likelihood products underflow within a few hundred
//! steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_space::{ModelId, ModelSpace, ModelState, ObservationVector};
use crate::Forecaster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    log_priors: Vec<f64>,
    log_likelihoods: Vec<f64>,
    posterior: Vec<f64>,
    models: Vec<ModelState>,
    t: usize,
}

/// Exponentiates log weights after subtracting their maximum and normalizes.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

impl MixtureState {
    pub fn new(space: &ModelSpace) -> Self {
        MixtureState {
            log_priors: space.log_priors().to_vec(),
            log_likelihoods: vec![0.0; space.len()],
            posterior: space.priors().to_vec(),
            models: space.ids().map(|id| space.fresh_state(id)).collect(),
            t: 0,
        }
    }

    /// Posterior weights `α_ωt`.
    pub fn posterior(&self) -> &[f64] {
        &self.posterior
    }

    /// Cumulative `log λ_ωt`.
    pub fn log_likelihoods(&self) -> &[f64] {
        &self.log_likelihoods
    }

    pub fn model_states(&self) -> &[ModelState] {
        &self.models
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Bayes update with the probability each model gave the realized outcome.
    pub fn posterior_update(&mut self, likelihoods: &[f64]) -> Result<()> {
        if likelihoods.len() != self.posterior.len() {
            return Err(Error::Length { expected: self.posterior.len(), got: likelihoods.len() });
        }
        if let Some((model, &value)) = likelihoods.iter().enumerate().find(|(_, &l)| !(l > 0.0 && l < 1.0)) {
            return Err(Error::Likelihood { model, value });
        }
        for (ll, l) in self.log_likelihoods.iter_mut().zip(likelihoods) {
            *ll += l.ln();
        }
        let scores: Vec<f64> = self.log_priors.iter().zip(&self.log_likelihoods).map(|(p, l)| p + l).collect();
        self.posterior = normalize_log_weights(&scores);
        self.t += 1;
        Ok(())
    }

    /// `Σ_ω α_ω,t-1 · forecast_ω`.
    pub fn mixture_forecast(&self, forecasts: &[f64]) -> Result<f64> {
        if forecasts.len() != self.posterior.len() {
            return Err(Error::Length { expected: self.posterior.len(), got: forecasts.len() });
        }
        Ok(self.posterior.iter().zip(forecasts).map(|(a, p)| a * p).sum())
    }

    /// Per-model forecasts of `x = 1` from the current statistics.
    pub fn model_forecasts(&self, space: &ModelSpace, b: &[u32]) -> Vec<f64> {
        space.ids().zip(&self.models).map(|(id, st)| st.predict(space.spec(id), b)).collect()
    }

    pub fn observe(&mut self, space: &ModelSpace, obs: &ObservationVector) -> Result<()> {
        let likelihoods: Vec<f64> = space
            .ids()
            .zip(&self.models)
            .map(|(id, st)| st.prob_of(space.spec(id), &obs.b, obs.x))
            .collect();
        self.posterior_update(&likelihoods)?;
        for st in &mut self.models {
            st.update(obs);
        }
        Ok(())
    }
}

/// The mixture as a step-by-step forecaster.
#[derive(Debug, Clone)]
pub struct MixtureEngine<'a> {
    space: &'a ModelSpace,
    state: MixtureState,
}

impl<'a> MixtureEngine<'a> {
    pub fn new(space: &'a ModelSpace) -> Self {
        MixtureEngine { space, state: MixtureState::new(space) }
    }

    pub fn state(&self) -> &MixtureState {
        &self.state
    }

    pub fn into_state(self) -> MixtureState {
        self.state
    }

    /// Posterior weight of one model.
    pub fn weight(&self, id: ModelId) -> f64 {
        self.state.posterior[id.0]
    }
}

impl Forecaster for MixtureEngine<'_> {
    fn forecast(&mut self, b: &[u32]) -> f64 {
        let per_model = self.state.model_forecasts(self.space, b);
        self.state.posterior.iter().zip(&per_model).map(|(a, p)| a * p).sum()
    }

    fn observe(&mut self, obs: &ObservationVector) -> Result<()> {
        self.space.schema().check(obs)?;
        self.state.observe(self.space, obs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRun {
    /// `p_t` for `t = 1..=T`, each computed before `x_t` was consumed.
    pub forecasts: Vec<f64>,
    /// Posterior after each step.
    pub posteriors: Vec<Vec<f64>>,
    pub state: MixtureState,
}

pub fn run_mixture<I>(space: &ModelSpace, stream: I, horizon: usize) -> Result<MixtureRun>
where
    I: IntoIterator<Item = ObservationVector>,
{
    if horizon == 0 {
        return Err(Error::config("horizon", "must be at least 1"));
    }
    let mut engine = MixtureEngine::new(space);
    let mut forecasts = Vec::with_capacity(horizon);
    let mut posteriors = Vec::with_capacity(horizon);
    let mut stream = stream.into_iter();
    for t in 0..horizon {
        let obs = stream.next().ok_or(Error::StreamExhausted { needed: horizon, got: t })?;
        forecasts.push(engine.forecast(&obs.b));
        engine.observe(&obs)?;
        posteriors.push(engine.state.posterior.clone());
    }
    Ok(MixtureRun { forecasts, posteriors, state: engine.state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_space::{ModelSpec, Schema};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bernoulli_space(thetas: &[f64]) -> ModelSpace {
        ModelSpace::uniform(
            Schema::outcome_only(),
            thetas.iter().enumerate().map(|(i, &t)| ModelSpec::fixed_bernoulli(format!("m{i}"), t)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn posterior_update_examples() {
        let mut st = MixtureState::new(&bernoulli_space(&[0.8, 0.2]));
        st.posterior_update(&[0.8, 0.2]).unwrap();
        assert_relative_eq!(st.posterior()[0], 0.8, epsilon = 1e-12);
        assert_relative_eq!(st.posterior()[1], 0.2, epsilon = 1e-12);

        let mut st = MixtureState::new(&bernoulli_space(&[0.5, 0.5, 0.25]));
        st.posterior_update(&[0.5, 0.5, 0.25]).unwrap();
        for (got, want) in st.posterior().iter().zip([0.4, 0.4, 0.2]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }

        let mut st = MixtureState::new(&bernoulli_space(&[0.1, 0.5, 0.9]));
        let before = st.posterior().to_vec();
        st.posterior_update(&[0.3, 0.3, 0.3]).unwrap();
        for (a, b) in st.posterior().iter().zip(before) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn posterior_update_rejects_broken_likelihoods() {
        let mut st = MixtureState::new(&bernoulli_space(&[0.8, 0.2]));
        assert!(matches!(st.posterior_update(&[0.0, 0.5]), Err(Error::Likelihood { model: 0, .. })));
        assert!(matches!(st.posterior_update(&[0.5, 1.0]), Err(Error::Likelihood { model: 1, .. })));
        assert!(matches!(st.posterior_update(&[0.5]), Err(Error::Length { .. })));
    }

    #[test]
    fn mixture_forecast_examples() {
        let space = bernoulli_space(&[0.7, 0.2]);
        let st = MixtureState::new(&space);
        assert_relative_eq!(st.mixture_forecast(&[0.6, 0.2]).unwrap(), 0.4, epsilon = 1e-15);
        assert_relative_eq!(st.mixture_forecast(&[0.35, 0.35]).unwrap(), 0.35, epsilon = 1e-15);

        let mut st = MixtureState::new(&space);
        st.posterior = vec![1.0, 0.0];
        assert_eq!(st.mixture_forecast(&[0.7, 0.2]).unwrap(), 0.7);
    }

    #[test]
    fn singleton_mixture_is_the_model() {
        let schema = Schema::new(vec![2], vec![]).unwrap();
        let space = ModelSpace::uniform(schema.clone(), vec![ModelSpec::cpt("c", vec![0], 1.0)]).unwrap();
        let stream: Vec<_> = (0..50u32)
            .map(|i| ObservationVector::new(vec![i % 2], (i * 13) % 7 < 3, vec![]))
            .collect();
        let run = run_mixture(&space, stream.clone(), stream.len()).unwrap();
        let mut st = space.fresh_state(ModelId(0));
        for (obs, p) in stream.iter().zip(&run.forecasts) {
            assert_eq!(*p, st.predict(space.spec(ModelId(0)), &obs.b));
            st.update(obs);
        }
    }

    #[test]
    fn short_stream_errors() {
        let space = bernoulli_space(&[0.3, 0.6]);
        let stream = vec![ObservationVector::outcome(true); 3];
        assert!(matches!(
            run_mixture(&space, stream, 5),
            Err(Error::StreamExhausted { needed: 5, got: 3 })
        ));
    }

    #[test]
    fn long_runs_do_not_underflow() {
        let space = bernoulli_space(&[0.3, 0.7]);
        let stream: Vec<_> = (0..5000).map(|i| ObservationVector::outcome(i % 10 < 7)).collect();
        let run = run_mixture(&space, stream, 5000).unwrap();
        let post = run.state.posterior();
        assert!(post.iter().all(|w| w.is_finite()));
        assert!(post[1] > 1.0 - 1e-12);
    }

    proptest! {
        #[test]
        fn normalization_and_log_odds(
            xs in prop::collection::vec(any::<bool>(), 1..400),
            thetas in prop::collection::vec(0.02f64..0.98, 2..6),
            weights in prop::collection::vec(0.1f64..5.0, 6),
        ) {
            let specs: Vec<_> = thetas.iter().enumerate().map(|(i, &t)| ModelSpec::fixed_bernoulli(format!("m{i}"), t)).collect();
            let n = specs.len();
            let space = ModelSpace::new(Schema::outcome_only(), specs, weights[..n].to_vec()).unwrap();
            let mut engine = MixtureEngine::new(&space);
            for &x in &xs {
                let p = engine.forecast(&[]);
                let lo = thetas.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(p >= lo - 1e-15 && p <= hi + 1e-15);
                engine.observe(&ObservationVector::outcome(x)).unwrap();
                let post = engine.state().posterior();
                prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(post.iter().all(|&w| w >= 0.0));
            }
            let st = engine.state();
            for i in 0..n {
                for j in 0..n {
                    let lhs = (st.posterior()[i] / st.posterior()[j]).ln();
                    let rhs = space.log_priors()[i] + st.log_likelihoods()[i] - space.log_priors()[j] - st.log_likelihoods()[j];
                    // ln of the odds; a 1e-9 gap here is a 1e-9 relative error in the ratio
                    if st.posterior()[i] > 1e-300 && st.posterior()[j] > 1e-300 {
                        prop_assert!((lhs - rhs).abs() <= 1e-9);
                    }
                }
            }
        }
    }
}
