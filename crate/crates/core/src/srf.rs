//! Search and revise with forgetting.
//!
//! Data arrive in trial periods of `k_n` observations. Within a period the
//! current model forecasts from every observation since it was first
//! enumerated, but the end-of-period comparison scores both current and
//! alternate on that period's data alone, each from fresh statistics. The
//! engine never holds observations older than the current model's
//! enumeration period.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_space::{ModelId, ModelSpace, ModelState, ObservationVector};
use crate::search::{initial_pair, SearchDistribution, SearchSampler};
use crate::Forecaster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrialSchedule {
    Fixed { k: usize },
    /// `k_n = min(cap, ceil(initial * growth^(n-1)))`.
    Geometric { initial: usize, growth: f64, cap: usize },
}

impl Default for TrialSchedule {
    fn default() -> Self {
        TrialSchedule::Geometric { initial: 1, growth: 1.5, cap: 256 }
    }
}

impl TrialSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TrialSchedule::Fixed { k: 0 } => Err(Error::Schedule("k must be at least 1".into())),
            TrialSchedule::Geometric { initial, growth, cap } => {
                if initial == 0 {
                    Err(Error::Schedule("initial k must be at least 1".into()))
                } else if !(growth >= 1.0 && growth.is_finite()) {
                    Err(Error::Schedule(format!("growth {growth} must be finite and at least 1")))
                } else if cap < initial {
                    Err(Error::Schedule(format!("cap {cap} is below initial k {initial}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, TrialSchedule::Fixed { .. })
    }

    /// Trial length of period `n` (1-based).
    pub fn k(&self, n: usize) -> usize {
        schedule_k(n, self)
    }
}

pub fn schedule_k(n: usize, schedule: &TrialSchedule) -> usize {
    debug_assert!(n >= 1);
    match *schedule {
        TrialSchedule::Fixed { k } => k,
        TrialSchedule::Geometric { initial, growth, cap } => {
            let exponent = n.saturating_sub(1).min(i32::MAX as usize) as i32;
            let raw = initial as f64 * growth.powi(exponent);
            // shave float noise so exact products such as 2 * 2^2 stay at 8
            let k = (raw * (1.0 - 1e-12)).ceil();
            if k >= cap as f64 {
                cap
            } else {
                (k as usize).max(initial)
            }
        }
    }
}

/// Log of the product of one model's predictive probabilities over a period,
/// starting from fresh statistics at the period's first observation.
pub fn trial_likelihood(space: &ModelSpace, id: ModelId, period: &[ObservationVector]) -> f64 {
    space.replay(id, period).0
}

/// Keeps the current model unless `α_a · λ_a > α_c · λ_c` beyond the tie
/// tolerance.
pub fn srf_decide(
    space: &ModelSpace,
    current: ModelId,
    log_lik_current: f64,
    alternate: ModelId,
    log_lik_alternate: f64,
) -> ModelId {
    crate::sr::sr_decide(space, current, log_lik_current, alternate, log_lik_alternate)
}

/// Dense index of a state `(period block, ω_c, ω_a)`.
///
/// The block is the base-`|S|` number whose first digit (least significant)
/// is the first observation of the period; the index is
/// `(block · |Ω| + ω_c) · |Ω| + ω_a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QStateCodec {
    pub symbol_count: u64,
    pub k: usize,
    pub n_models: usize,
}

impl QStateCodec {
    pub fn new(symbol_count: u64, k: usize, n_models: usize) -> Self {
        QStateCodec { symbol_count, k, n_models }
    }

    pub fn block_count_u128(&self) -> u128 {
        (self.symbol_count as u128).checked_pow(self.k as u32).unwrap_or(u128::MAX)
    }

    pub fn state_count_u128(&self) -> u128 {
        let m = self.n_models as u128;
        self.block_count_u128().saturating_mul(m).saturating_mul(m)
    }

    /// Whether every index fits in a `u64`.
    pub fn fits(&self) -> bool {
        self.state_count_u128() <= u64::MAX as u128
    }

    pub fn block_count(&self) -> u64 {
        self.block_count_u128() as u64
    }

    pub fn state_count(&self) -> u64 {
        self.state_count_u128() as u64
    }

    pub fn block_of(&self, symbols: &[u64]) -> u64 {
        symbols.iter().rev().fold(0u64, |acc, &s| acc * self.symbol_count + s)
    }

    pub fn block_symbols(&self, mut block: u64) -> Vec<u64> {
        (0..self.k)
            .map(|_| {
                let s = block % self.symbol_count;
                block /= self.symbol_count;
                s
            })
            .collect()
    }

    pub fn encode(&self, block: u64, current: ModelId, alternate: ModelId) -> u64 {
        let m = self.n_models as u64;
        (block * m + current.0 as u64) * m + alternate.0 as u64
    }

    pub fn decode(&self, index: u64) -> (u64, ModelId, ModelId) {
        let m = self.n_models as u64;
        let alternate = ModelId((index % m) as usize);
        let rest = index / m;
        (rest / m, ModelId((rest % m) as usize), alternate)
    }
}

/// Empirical visit counts of the period states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QOccupancy {
    pub codec: QStateCodec,
    pub periods: u64,
    pub counts: BTreeMap<u64, u64>,
}

impl QOccupancy {
    pub fn new(codec: QStateCodec) -> Self {
        QOccupancy { codec, periods: 0, counts: BTreeMap::new() }
    }

    pub fn record(&mut self, index: u64) {
        *self.counts.entry(index).or_default() += 1;
        self.periods += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodDecision {
    pub n: usize,
    pub k: usize,
    pub current: ModelId,
    pub alternate: ModelId,
    pub log_lik_current: f64,
    pub log_lik_alternate: f64,
    pub chosen: ModelId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SrfOptions {
    pub record_decisions: bool,
    /// Track visits to each `(block, ω_c, ω_a)` state; only honoured for
    /// fixed schedules whose state index fits in 64 bits.
    pub record_q_states: bool,
    /// Keep the full sequence of visited state indices as well.
    pub record_q_sequence: bool,
}

#[derive(Debug, Clone)]
pub struct SrfEngine<'a, R = ChaCha20Rng> {
    space: &'a ModelSpace,
    sampler: SearchSampler,
    schedule: TrialSchedule,
    options: SrfOptions,
    current: ModelId,
    alternate: ModelId,
    n: usize,
    k_n: usize,
    adopted_at: usize,
    buffer: Vec<ObservationVector>,
    current_state: ModelState,
    rng: R,
    decisions: Vec<PeriodDecision>,
    periods_completed: usize,
    switches: usize,
    pair_steps: BTreeMap<(ModelId, ModelId), u64>,
    q_occupancy: Option<QOccupancy>,
    q_sequence: Vec<u64>,
}

impl<'a, R: Rng> SrfEngine<'a, R> {
    pub fn new(
        space: &'a ModelSpace,
        dist: SearchDistribution,
        schedule: TrialSchedule,
        initial: Option<(ModelId, ModelId)>,
        mut rng: R,
        options: SrfOptions,
    ) -> Result<Self> {
        schedule.validate()?;
        let sampler = SearchSampler::new(dist, space)?;
        let (current, alternate) = match initial {
            Some((c, a)) if c.0 < space.len() && a.0 < space.len() => (c, a),
            Some(_) => return Err(Error::ModelSpace("initial model outside the space".into())),
            None => initial_pair(space, &mut rng)?,
        };
        let q_occupancy = match schedule {
            TrialSchedule::Fixed { k } if options.record_q_states => {
                let codec = QStateCodec::new(space.schema().symbol_count(), k, space.len());
                codec.fits().then(|| QOccupancy::new(codec))
            }
            _ => None,
        };
        Ok(SrfEngine {
            space,
            sampler,
            schedule,
            options,
            current,
            alternate,
            n: 1,
            k_n: schedule.k(1),
            adopted_at: 1,
            buffer: Vec::new(),
            current_state: space.fresh_state(current),
            rng,
            decisions: Vec::new(),
            periods_completed: 0,
            switches: 0,
            pair_steps: BTreeMap::new(),
            q_occupancy,
            q_sequence: Vec::new(),
        })
    }

    pub fn current(&self) -> ModelId {
        self.current
    }

    pub fn alternate(&self) -> ModelId {
        self.alternate
    }

    /// Index of the period in progress.
    pub fn period(&self) -> usize {
        self.n
    }

    pub fn period_length(&self) -> usize {
        self.k_n
    }

    /// Period in which the current model was first enumerated.
    pub fn adopted_at(&self) -> usize {
        self.adopted_at
    }

    pub fn period_buffer(&self) -> &[ObservationVector] {
        &self.buffer
    }

    pub fn current_state(&self) -> &ModelState {
        &self.current_state
    }

    pub fn srf_forecast(&self, b: &[u32]) -> f64 {
        self.current_state.predict(self.space.spec(self.current), b)
    }

    /// Draws `ω_a,n+1` given the just-decided current model.
    fn select_alternate(&mut self) -> ModelId {
        self.sampler.sample(self.current, &mut self.rng)
    }

    fn close_period(&mut self) {
        let (c, a) = (self.current, self.alternate);
        let ll_c = trial_likelihood(self.space, c, &self.buffer);
        let (ll_a, alt_state) = self.space.replay(a, &self.buffer);
        let chosen = srf_decide(self.space, c, ll_c, a, ll_a);

        if let Some(occ) = &mut self.q_occupancy {
            let schema = self.space.schema();
            let symbols: Vec<u64> = self.buffer.iter().map(|o| schema.encode(o)).collect();
            let index = occ.codec.encode(occ.codec.block_of(&symbols), c, a);
            occ.record(index);
            if self.options.record_q_sequence {
                self.q_sequence.push(index);
            }
        }
        if self.options.record_decisions {
            self.decisions.push(PeriodDecision {
                n: self.n,
                k: self.k_n,
                current: c,
                alternate: a,
                log_lik_current: ll_c,
                log_lik_alternate: ll_a,
                chosen,
            });
        }
        if chosen != c {
            // the adopted model's statistics are exactly its enumeration period
            self.current_state = alt_state;
            self.adopted_at = self.n;
            self.switches += 1;
        }
        self.current = chosen;
        self.alternate = self.select_alternate();
        self.buffer.clear();
        self.periods_completed += 1;
        self.n += 1;
        self.k_n = self.schedule.k(self.n);
    }

    pub fn into_run(self, forecasts: Vec<f64>) -> SrfRun {
        SrfRun {
            forecasts,
            decisions: self.decisions,
            periods_completed: self.periods_completed,
            switches: self.switches,
            final_current: self.current,
            pair_steps: self.pair_steps.into_iter().map(|((c, a), steps)| PairOccupancy { current: c, alternate: a, steps }).collect(),
            q_occupancy: self.q_occupancy,
            q_sequence: self.q_sequence,
            partial_period: (!self.buffer.is_empty()).then_some(self.buffer.len()),
        }
    }
}

impl<R: Rng> Forecaster for SrfEngine<'_, R> {
    fn forecast(&mut self, b: &[u32]) -> f64 {
        self.srf_forecast(b)
    }

    fn observe(&mut self, obs: &ObservationVector) -> Result<()> {
        self.space.schema().check(obs)?;
        *self.pair_steps.entry((self.current, self.alternate)).or_default() += 1;
        self.current_state.update(obs);
        self.buffer.push(obs.clone());
        if self.buffer.len() == self.k_n {
            self.close_period();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOccupancy {
    pub current: ModelId,
    pub alternate: ModelId,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrfRun {
    pub forecasts: Vec<f64>,
    pub decisions: Vec<PeriodDecision>,
    pub periods_completed: usize,
    pub switches: usize,
    /// Current model after the last step.
    pub final_current: ModelId,
    /// Steps spent in each `(ω_c, ω_a)` pair.
    pub pair_steps: Vec<PairOccupancy>,
    pub q_occupancy: Option<QOccupancy>,
    pub q_sequence: Vec<u64>,
    /// Length of a trailing period cut short by the horizon; it was scored
    /// for forecasts but never decided.
    pub partial_period: Option<usize>,
}

#[allow(clippy::too_many_arguments)]
pub fn run_srf<I, R>(
    space: &ModelSpace,
    dist: SearchDistribution,
    schedule: TrialSchedule,
    initial: Option<(ModelId, ModelId)>,
    stream: I,
    horizon: usize,
    rng: R,
    options: SrfOptions,
) -> Result<SrfRun>
where
    I: IntoIterator<Item = ObservationVector>,
    R: Rng,
{
    schedule.validate()?;
    if horizon < schedule.k(1) {
        return Err(Error::config("horizon", format!("{horizon} is shorter than the first trial period")));
    }
    let mut engine = SrfEngine::new(space, dist, schedule, initial, rng, options)?;
    let mut forecasts = Vec::with_capacity(horizon);
    let mut stream = stream.into_iter();
    for t in 0..horizon {
        let obs = stream.next().ok_or(Error::StreamExhausted { needed: horizon, got: t })?;
        forecasts.push(engine.forecast(&obs.b));
        engine.observe(&obs)?;
    }
    Ok(engine.into_run(forecasts))
}
