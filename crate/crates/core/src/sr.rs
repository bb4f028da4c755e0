//! Search and revise: forecast with one model, keep the better of current and
//! alternate by prior-weighted likelihood over the full history.
//!
//! Step `t` runs in this order:
//!
//! 1. forecast `x_t` with the current model `ω_c,t-1`;
//! 2. draw the next alternate `ω_at` from the search distribution, before
//!    `x_t` is seen, backfilling its likelihood over `H_{t-1}` if it was
//!    never enumerated;
//! 3. consume `x_t`, updating every enumerated model's ledger;
//! 4. choose `ω_ct` from `ω_c,t-1` and `ω_a,t-1` by comparing
//!    `log α_ω0 + log λ_ωt`, ties keeping the current model.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_space::{ModelId, ModelSpace, ModelState, ObservationVector, Trace};
use crate::search::{initial_pair, SearchDistribution, SearchSampler};
use crate::Forecaster;

/// Comparison between the current model and the pending alternate at step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrDecision {
    pub t: usize,
    pub current: ModelId,
    pub alternate: ModelId,
    pub log_lik_current: f64,
    pub log_lik_alternate: f64,
    pub chosen: ModelId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub t: usize,
    pub from: ModelId,
    pub to: ModelId,
    /// Prior-weighted log score of the new model minus that of the old one.
    pub log_score_diff: f64,
}

#[derive(Debug, Clone)]
struct LedgerEntry {
    state: ModelState,
    log_lik: f64,
}

/// Replays the full trace through fresh statistics for one model.
pub fn backfill_likelihood(space: &ModelSpace, id: ModelId, trace: &Trace) -> (f64, ModelState) {
    space.replay(id, trace.records())
}

/// Score differences within this fraction of the scores' magnitude count as
/// ties. Likelihoods that are equal in exact arithmetic (`θ` against
/// `1 − θ` on a balanced block, say) differ in the last bits once rounded.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Whether a current model scoring `score_current` survives an alternate
/// scoring `score_alternate`; ties keep the current model.
pub fn keeps_current(score_current: f64, score_alternate: f64) -> bool {
    let margin = score_current - score_alternate;
    let scale = score_current.abs().max(score_alternate.abs()).max(1.0);
    margin >= -TIE_RELATIVE_TOLERANCE * scale
}

/// Keeps `current` unless the alternate's prior-weighted log likelihood is
/// higher beyond the tie tolerance.
pub fn sr_decide(
    space: &ModelSpace,
    current: ModelId,
    log_lik_current: f64,
    alternate: ModelId,
    log_lik_alternate: f64,
) -> ModelId {
    let score_c = space.log_prior(current) + log_lik_current;
    let score_a = space.log_prior(alternate) + log_lik_alternate;
    if keeps_current(score_c, score_a) {
        current
    } else {
        alternate
    }
}

#[derive(Debug, Clone)]
pub struct SrEngine<'a, R = ChaCha20Rng> {
    space: &'a ModelSpace,
    sampler: SearchSampler,
    trace: Trace,
    current: ModelId,
    alternate: ModelId,
    proposal: Option<ModelId>,
    ledger: Vec<Option<LedgerEntry>>,
    rng: R,
    decisions: Vec<SrDecision>,
    switches: Vec<SwitchEvent>,
}

impl<'a, R: Rng> SrEngine<'a, R> {
    /// `initial` fixes `(ω_c0, ω_a0)`; otherwise two distinct models are drawn
    /// from the prior (the same model twice when the space is a singleton).
    pub fn new(
        space: &'a ModelSpace,
        dist: SearchDistribution,
        initial: Option<(ModelId, ModelId)>,
        mut rng: R,
    ) -> Result<Self> {
        let sampler = SearchSampler::new(dist, space)?;
        let (current, alternate) = match initial {
            Some((c, a)) => {
                for id in [c, a] {
                    if id.0 >= space.len() {
                        return Err(Error::ModelSpace(format!("initial model {id} outside the space")));
                    }
                }
                (c, a)
            }
            None => initial_pair(space, &mut rng)?,
        };
        let mut engine = SrEngine {
            space,
            sampler,
            trace: Trace::new(space.schema().clone()),
            current,
            alternate,
            proposal: None,
            ledger: vec![None; space.len()],
            rng,
            decisions: Vec::new(),
            switches: Vec::new(),
        };
        engine.enumerate(current);
        engine.enumerate(alternate);
        Ok(engine)
    }

    fn enumerate(&mut self, id: ModelId) {
        if self.ledger[id.0].is_none() {
            let (log_lik, state) = backfill_likelihood(self.space, id, &self.trace);
            self.ledger[id.0] = Some(LedgerEntry { state, log_lik });
        }
    }

    pub fn current(&self) -> ModelId {
        self.current
    }

    pub fn alternate(&self) -> ModelId {
        self.alternate
    }

    /// Alternate drawn for the step in progress, if any.
    pub fn pending_proposal(&self) -> Option<ModelId> {
        self.proposal
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn t(&self) -> usize {
        self.trace.len()
    }

    pub fn decisions(&self) -> &[SrDecision] {
        &self.decisions
    }

    pub fn switches(&self) -> &[SwitchEvent] {
        &self.switches
    }

    /// Cumulative log likelihood of an enumerated model.
    pub fn ledger_log_lik(&self, id: ModelId) -> Option<f64> {
        self.ledger.get(id.0)?.as_ref().map(|e| e.log_lik)
    }

    pub fn enumerated(&self) -> impl Iterator<Item = ModelId> + '_ {
        self.ledger.iter().enumerate().filter(|(_, e)| e.is_some()).map(|(i, _)| ModelId(i))
    }

    /// Draws the alternate for the current step (once per step) and makes sure
    /// its ledger entry covers the history so far.
    pub fn select_alternate(&mut self) -> ModelId {
        if let Some(id) = self.proposal {
            return id;
        }
        let id = self.sampler.sample(self.current, &mut self.rng);
        self.enumerate(id);
        self.proposal = Some(id);
        id
    }

    /// The model kept for the next step given the ledger as it stands.
    pub fn decide(&self) -> Result<ModelId> {
        let lc = self.ledger_log_lik(self.current).ok_or(Error::MissingLedger(self.current.0))?;
        let la = self.ledger_log_lik(self.alternate).ok_or(Error::MissingLedger(self.alternate.0))?;
        Ok(sr_decide(self.space, self.current, lc, self.alternate, la))
    }

    pub fn into_run(self, forecasts: Vec<f64>, forecasting_models: Vec<ModelId>) -> SrRun {
        SrRun {
            forecasts,
            forecasting_models,
            decisions: self.decisions,
            switches: self.switches,
            final_current: self.current,
        }
    }

    pub fn sr_forecast(&self, b: &[u32]) -> f64 {
        let entry = self.ledger[self.current.0].as_ref().expect("current model is always enumerated");
        entry.state.predict(self.space.spec(self.current), b)
    }
}

impl<R: Rng> Forecaster for SrEngine<'_, R> {
    fn forecast(&mut self, b: &[u32]) -> f64 {
        let p = self.sr_forecast(b);
        self.select_alternate();
        p
    }

    fn observe(&mut self, obs: &ObservationVector) -> Result<()> {
        self.space.schema().check(obs)?;
        let proposal = self.select_alternate();
        for (id, entry) in self.ledger.iter_mut().enumerate() {
            if let Some(e) = entry {
                e.log_lik += e.state.log_likelihood_increment(&self.space.models()[id], obs);
                e.state.update(obs);
            }
        }
        self.trace.push(obs.clone())?;
        let t = self.trace.len();
        let chosen = self.decide()?;
        let lc = self.ledger_log_lik(self.current).unwrap_or_default();
        let la = self.ledger_log_lik(self.alternate).unwrap_or_default();
        self.decisions.push(SrDecision {
            t,
            current: self.current,
            alternate: self.alternate,
            log_lik_current: lc,
            log_lik_alternate: la,
            chosen,
        });
        if chosen != self.current {
            let diff = (self.space.log_prior(chosen) + la) - (self.space.log_prior(self.current) + lc);
            self.switches.push(SwitchEvent { t, from: self.current, to: chosen, log_score_diff: diff });
        }
        self.current = chosen;
        self.alternate = proposal;
        self.proposal = None;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrRun {
    pub forecasts: Vec<f64>,
    /// Model that produced each forecast.
    pub forecasting_models: Vec<ModelId>,
    pub decisions: Vec<SrDecision>,
    pub switches: Vec<SwitchEvent>,
    /// Current model after the last step.
    pub final_current: ModelId,
}

pub fn run_sr<I, R>(
    space: &ModelSpace,
    dist: SearchDistribution,
    initial: Option<(ModelId, ModelId)>,
    stream: I,
    horizon: usize,
    rng: R,
) -> Result<SrRun>
where
    I: IntoIterator<Item = ObservationVector>,
    R: Rng,
{
    if horizon == 0 {
        return Err(Error::config("horizon", "must be at least 1"));
    }
    let mut engine = SrEngine::new(space, dist, initial, rng)?;
    let mut forecasts = Vec::with_capacity(horizon);
    let mut forecasting_models = Vec::with_capacity(horizon);
    let mut stream = stream.into_iter();
    for t in 0..horizon {
        let obs = stream.next().ok_or(Error::StreamExhausted { needed: horizon, got: t })?;
        forecasting_models.push(engine.current());
        forecasts.push(engine.forecast(&obs.b));
        engine.observe(&obs)?;
    }
    Ok(engine.into_run(forecasts, forecasting_models))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_space::{ModelSpec, Schema};
    use rand::SeedableRng;

    fn space_with_priors(thetas: &[f64], priors: &[f64]) -> ModelSpace {
        ModelSpace::new(
            Schema::outcome_only(),
            thetas.iter().enumerate().map(|(i, &t)| ModelSpec::fixed_bernoulli(format!("m{i}"), t)).collect(),
            priors.to_vec(),
        )
        .unwrap()
    }

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn decide_examples() {
        let space = space_with_priors(&[0.3, 0.6], &[1.0, 1.0]);
        assert_eq!(sr_decide(&space, ModelId(0), -10.0, ModelId(1), -9.0), ModelId(1));
        assert_eq!(sr_decide(&space, ModelId(0), -9.5, ModelId(1), -9.5), ModelId(0));
        let space = space_with_priors(&[0.3, 0.6], &[0.9, 0.1]);
        assert_eq!(sr_decide(&space, ModelId(0), -4.0, ModelId(1), -4.0), ModelId(0));
        assert_eq!(sr_decide(&space, ModelId(1), -4.0, ModelId(0), -4.0), ModelId(0));
    }

    #[test]
    fn decision_ignores_common_offset() {
        let space = space_with_priors(&[0.3, 0.6, 0.8], &[1.0, 2.0, 3.0]);
        for (lc, la) in [(-10.0, -9.0), (-3.25, -3.5), (-7.0, -7.0 + (1.5f64).ln())] {
            let base = sr_decide(&space, ModelId(1), lc, ModelId(2), la);
            for offset in [-1024.0, -64.0, 0.0, 256.0] {
                assert_eq!(sr_decide(&space, ModelId(1), lc + offset, ModelId(2), la + offset), base);
            }
        }
    }

    #[test]
    fn backfill_examples() {
        let space = space_with_priors(&[0.5, 0.3], &[1.0, 1.0]);
        let empty = Trace::new(Schema::outcome_only());
        assert_eq!(backfill_likelihood(&space, ModelId(0), &empty).0, 0.0);
        let trace = Trace::from_records(
            Schema::outcome_only(),
            (0..10).map(|i| ObservationVector::outcome(i % 3 == 0)).collect(),
        )
        .unwrap();
        let (ll, _) = backfill_likelihood(&space, ModelId(0), &trace);
        assert!((ll - 10.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ledger_matches_backfill() {
        let space = space_with_priors(&[0.2, 0.4, 0.6, 0.8], &[1.0, 1.0, 1.0, 1.0]);
        let mut engine = SrEngine::new(&space, SearchDistribution::Uniform, None, rng(3)).unwrap();
        for i in 0..300 {
            engine.forecast(&[]);
            engine.observe(&ObservationVector::outcome(i % 5 < 3)).unwrap();
        }
        for id in engine.enumerated().collect::<Vec<_>>() {
            let (ll, _) = backfill_likelihood(&space, id, engine.trace());
            assert!((ll - engine.ledger_log_lik(id).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn forecast_uses_current_only() {
        let space = space_with_priors(&[0.3, 0.9], &[1.0, 1.0]);
        let mut engine =
            SrEngine::new(&space, SearchDistribution::Uniform, Some((ModelId(0), ModelId(1))), rng(0)).unwrap();
        assert_eq!(engine.forecast(&[]), 0.3);
        let run = run_sr(
            &space,
            SearchDistribution::Uniform,
            None,
            (0..200).map(|i| ObservationVector::outcome(i % 2 == 0)),
            200,
            rng(1),
        )
        .unwrap();
        for (p, id) in run.forecasts.iter().zip(&run.forecasting_models) {
            let ModelSpec { family: crate::Family::FixedBernoulli { theta }, .. } = space.spec(*id) else {
                unreachable!()
            };
            assert_eq!(p, theta);
        }
    }

    #[test]
    fn proposal_is_drawn_before_the_outcome() {
        let space = space_with_priors(&[0.1, 0.3, 0.5, 0.7, 0.9], &[1.0; 5]);
        let mut base = SrEngine::new(&space, SearchDistribution::Uniform, None, rng(42)).unwrap();
        for _ in 0..200 {
            base.forecast(&[]);
            let sampled = base.pending_proposal().unwrap();
            let mut twin = base.clone();
            twin.observe(&ObservationVector::outcome(true)).unwrap();
            base.observe(&ObservationVector::outcome(false)).unwrap();
            // the sampled id is the next alternate no matter which outcome arrived
            assert_eq!(twin.alternate(), sampled);
            assert_eq!(base.alternate(), sampled);
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let space = space_with_priors(&[0.1, 0.3, 0.5, 0.7, 0.9], &[1.0; 5]);
        let stream: Vec<_> = (0..500).map(|i| ObservationVector::outcome((i * 7919) % 10 < 7)).collect();
        let a = run_sr(&space, SearchDistribution::Uniform, None, stream.clone(), 500, rng(9)).unwrap();
        let b = run_sr(&space, SearchDistribution::Uniform, None, stream, 500, rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singleton_never_switches() {
        let space = space_with_priors(&[0.4], &[1.0]);
        let run = run_sr(
            &space,
            SearchDistribution::Uniform,
            None,
            (0..100).map(|i| ObservationVector::outcome(i % 2 == 0)),
            100,
            rng(5),
        )
        .unwrap();
        assert!(run.switches.is_empty());
        assert!(run.forecasts.iter().all(|&p| p == 0.4));
    }

    #[test]
    fn missing_ledger_is_an_error() {
        let space = space_with_priors(&[0.4, 0.6], &[1.0, 1.0]);
        let mut engine =
            SrEngine::new(&space, SearchDistribution::Uniform, Some((ModelId(0), ModelId(1))), rng(5)).unwrap();
        engine.ledger[1] = None;
        assert!(matches!(engine.decide(), Err(Error::MissingLedger(1))));
    }
}
