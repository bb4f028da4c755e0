//! Replications: one generated stream fanned out to every forecaster in
//! lockstep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::Experiment;
use crate::harness::rng::{derive_rng, replication_seed, Purpose};
use crate::mixture::{MixtureEngine, MixtureRun};
use crate::model_space::{ModelId, ObservationVector};
use crate::scoring::{forecast_gap_series, log_score_average, windows};
use crate::sr::{SrEngine, SrRun};
use crate::srf::{SrfEngine, SrfOptions, SrfRun};
use crate::{prob_of_realized, Forecaster};

/// Wraps a forecaster and refuses any outcome that was not preceded by a
/// forecast for the same step.
#[derive(Debug)]
pub struct Audited<F> {
    inner: F,
    strict: bool,
    step: usize,
    pending: Option<Vec<u32>>,
}

impl<F: Forecaster> Audited<F> {
    pub fn new(inner: F, strict: bool) -> Self {
        Audited { inner, strict, step: 0, pending: None }
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }

    pub fn into_inner(self) -> F {
        self.inner
    }

    pub fn forecast(&mut self, b: &[u32]) -> Result<f64> {
        if self.pending.is_some() {
            return Err(Error::Causality { step: self.step + 1, detail: "second forecast before the outcome".into() });
        }
        self.pending = Some(b.to_vec());
        Ok(self.inner.forecast(b))
    }

    pub fn observe(&mut self, obs: &ObservationVector) -> Result<()> {
        let step = self.step + 1;
        let b = self
            .pending
            .take()
            .ok_or_else(|| Error::Causality { step, detail: "outcome revealed before a forecast".into() })?;
        if self.strict && b != obs.b {
            return Err(Error::Causality { step, detail: "pre-outcome values changed after the forecast".into() });
        }
        self.inner.observe(obs)?;
        self.step = step;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replication: u64,
    pub seed: u64,
    pub stream: Vec<ObservationVector>,
    /// Generator probability of `x_t = 1`.
    pub truth: Vec<f64>,
    pub mixture: Option<MixtureRun>,
    pub sr: Option<SrRun>,
    pub srf: Option<SrfRun>,
}

impl RunRecord {
    pub fn horizon(&self) -> usize {
        self.stream.len()
    }

    /// `(name, forecasts)` for every forecaster, truth first.
    pub fn series(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![("truth", &self.truth)];
        if let Some(m) = &self.mixture {
            out.push(("mixture", &m.forecasts));
        }
        if let Some(s) = &self.sr {
            out.push(("sr", &s.forecasts));
        }
        if let Some(s) = &self.srf {
            out.push(("srf", &s.forecasts));
        }
        out
    }

    pub fn forecasts(&self, name: &str) -> Option<&[f64]> {
        self.series().into_iter().find(|(n, _)| *n == name).map(|(_, f)| f)
    }

    /// Probability each forecast gave the realized outcome.
    pub fn realized(&self, forecasts: &[f64]) -> Vec<f64> {
        forecasts.iter().zip(&self.stream).map(|(&p, o)| prob_of_realized(p, o.x)).collect()
    }
}

pub fn run_replication(exp: &Experiment, master: u64, replication: u64) -> Result<RunRecord> {
    let space = &exp.space;
    let horizon = exp.run.horizon;
    let strict = exp.run.audit;
    let stream = exp.generator.generate_stream(&mut derive_rng(master, replication, Purpose::Stream), horizon);

    let mut mixture = exp.mixture.then(|| Audited::new(MixtureEngine::new(space), strict));
    let mut sr = match &exp.sr {
        Some(s) => Some(Audited::new(
            SrEngine::new(space, s.search, s.initial, derive_rng(master, replication, Purpose::Sr))?,
            strict,
        )),
        None => None,
    };
    let mut srf = match &exp.srf {
        Some(s) => {
            let options = SrfOptions { record_decisions: true, record_q_states: true, record_q_sequence: false };
            Some(Audited::new(
                SrfEngine::new(space, s.search, s.schedule, s.initial, derive_rng(master, replication, Purpose::Srf), options)?,
                strict,
            ))
        }
        None => None,
    };

    let mut truth = Vec::with_capacity(horizon);
    let mut mix_f = Vec::with_capacity(horizon);
    let mut posteriors = Vec::new();
    let mut sr_f = Vec::with_capacity(horizon);
    let mut sr_models: Vec<ModelId> = Vec::with_capacity(horizon);
    let mut srf_f = Vec::with_capacity(horizon);
    for obs in &stream {
        truth.push(exp.generator.p_x1(&obs.b));
        if let Some(m) = &mut mixture {
            mix_f.push(m.forecast(&obs.b)?);
        }
        if let Some(s) = &mut sr {
            sr_models.push(s.inner().current());
            sr_f.push(s.forecast(&obs.b)?);
        }
        if let Some(s) = &mut srf {
            srf_f.push(s.forecast(&obs.b)?);
        }
        if let Some(m) = &mut mixture {
            m.observe(obs)?;
            if exp.run.posteriors {
                posteriors.push(m.inner().state().posterior().to_vec());
            }
        }
        if let Some(s) = &mut sr {
            s.observe(obs)?;
        }
        if let Some(s) = &mut srf {
            s.observe(obs)?;
        }
    }
    Ok(RunRecord {
        replication,
        seed: replication_seed(master, replication),
        truth,
        mixture: mixture.map(|m| MixtureRun { forecasts: mix_f, posteriors, state: m.into_inner().into_state() }),
        sr: sr.map(|s| s.into_inner().into_run(sr_f, sr_models)),
        srf: srf.map(|s| s.into_inner().into_run(srf_f)),
        stream,
    })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("BBAYES_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::config("BBAYES_THREADS", format!("`{v}` is not a thread count")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::config("BBAYES_THREADS", e.to_string()))
}

/// Runs every replication in parallel and applies `reduce` to each record as
/// it completes; results come back in replication order.
pub fn for_each_replication<T, F>(exp: &Experiment, master: u64, reduce: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(RunRecord) -> Result<T> + Sync,
{
    let pool = thread_pool()?;
    pool.install(|| {
        (0..exp.run.replications)
            .into_par_iter()
            .map(|r| run_replication(exp, master, r).and_then(&reduce))
            .collect()
    })
}

pub fn run_experiment(exp: &Experiment, master: u64) -> Result<Vec<RunRecord>> {
    for_each_replication(exp, master, Ok)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replication: u64,
    pub seed: u64,
    pub forecasters: Vec<ForecasterStats>,
    pub sr_final_current: Option<String>,
    pub sr_switches: Option<usize>,
    pub srf_final_current: Option<String>,
    pub srf_switches: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterStats {
    pub name: String,
    pub u_t: f64,
    pub first_window_gap_to_truth: f64,
    pub final_window_gap_to_truth: f64,
}

pub fn summarize_replication(exp: &Experiment, record: &RunRecord) -> Result<ReplicationSummary> {
    let count = exp.run.windows;
    let forecasters = record
        .series()
        .into_iter()
        .map(|(name, f)| {
            let gaps = forecast_gap_series(f, &record.truth, &[], count)?;
            Ok(ForecasterStats {
                name: name.to_string(),
                u_t: log_score_average(&record.realized(f))?,
                first_window_gap_to_truth: gaps.windows.first().map_or(0.0, |w| w.mean_gap),
                final_window_gap_to_truth: gaps.windows.last().map_or(0.0, |w| w.mean_gap),
            })
        })
        .collect::<Result<_>>()?;
    let name = |id: ModelId| exp.space.spec(id).name.clone();
    Ok(ReplicationSummary {
        replication: record.replication,
        seed: record.seed,
        forecasters,
        sr_final_current: record.sr.as_ref().map(|s| name(s.final_current)),
        sr_switches: record.sr.as_ref().map(|s| s.switches.len()),
        srf_final_current: record.srf.as_ref().map(|s| name(s.final_current)),
        srf_switches: record.srf.as_ref().map(|s| s.switches),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterAggregate {
    pub name: String,
    pub mean_u_t: f64,
    pub mean_first_window_gap_to_truth: f64,
    pub mean_final_window_gap_to_truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameCount {
    pub name: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub version: u32,
    pub replications: u64,
    pub horizon: usize,
    pub windows: usize,
    pub forecasters: Vec<ForecasterAggregate>,
    pub sr_final_current: Vec<NameCount>,
    pub srf_final_current: Vec<NameCount>,
    pub mean_srf_switches: Option<f64>,
    pub per_replication: Vec<ReplicationSummary>,
}

fn tally(exp: &Experiment, picks: impl Iterator<Item = Option<String>>) -> Vec<NameCount> {
    let picks: Vec<String> = picks.flatten().collect();
    exp.space
        .models()
        .iter()
        .map(|m| NameCount { name: m.name.clone(), count: picks.iter().filter(|p| **p == m.name).count() as u64 })
        .filter(|c| !picks.is_empty() && c.count > 0)
        .collect()
}

/// Single-threaded reduction over the per-replication summaries.
pub fn summarize(exp: &Experiment, reps: Vec<ReplicationSummary>) -> ExperimentSummary {
    let n = reps.len().max(1) as f64;
    let names = exp.forecaster_names();
    let forecasters = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mean = |f: fn(&ForecasterStats) -> f64| reps.iter().map(|r| f(&r.forecasters[i])).sum::<f64>() / n;
            ForecasterAggregate {
                name: name.to_string(),
                mean_u_t: mean(|s| s.u_t),
                mean_first_window_gap_to_truth: mean(|s| s.first_window_gap_to_truth),
                mean_final_window_gap_to_truth: mean(|s| s.final_window_gap_to_truth),
            }
        })
        .collect();
    let srf_switches: Vec<usize> = reps.iter().filter_map(|r| r.srf_switches).collect();
    ExperimentSummary {
        version: 1,
        replications: reps.len() as u64,
        horizon: exp.run.horizon,
        windows: windows(exp.run.horizon, exp.run.windows).len(),
        forecasters,
        sr_final_current: tally(exp, reps.iter().map(|r| r.sr_final_current.clone())),
        srf_final_current: tally(exp, reps.iter().map(|r| r.srf_final_current.clone())),
        mean_srf_switches: (!srf_switches.is_empty())
            .then(|| srf_switches.iter().sum::<usize>() as f64 / srf_switches.len() as f64),
        per_replication: reps,
    }
}
