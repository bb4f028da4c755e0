//! Log scores and convergence diagnostics over completed runs.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_space::{ModelId, ModelSpace, Trace};
use crate::sr::{keeps_current, SrDecision};

fn check_probability(step: usize, p: f64) -> Result<()> {
    if p == 0.0 {
        return Err(Error::ZeroProbability { step });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Probability { step, value: p });
    }
    Ok(())
}

/// `ln p` per step; `p` is the probability given to the realized outcome.
pub fn per_step_scores(probs: &[f64]) -> Result<Vec<f64>> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            check_probability(i + 1, p)?;
            Ok(p.ln())
        })
        .collect()
}

/// `U_T = (1/T) Σ ln p_t`.
pub fn log_score_average(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::NotApplicable("no probabilities to score".into()));
    }
    let scores = per_step_scores(probs)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Running `U_t` for `t = 1..=T`.
pub fn log_score_trajectory(probs: &[f64]) -> Result<Vec<f64>> {
    let scores = per_step_scores(probs)?;
    let mut sum = 0.0;
    Ok(scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            sum += s;
            sum / (i + 1) as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterScore {
    pub name: String,
    pub u_t: f64,
    pub steps: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub version: u32,
    pub forecasters: Vec<ForecasterScore>,
}

impl ScoreReport {
    pub fn from_series<S: AsRef<str>>(series: &[(S, Vec<f64>)]) -> Result<Self> {
        let forecasters = series
            .iter()
            .map(|(name, probs)| {
                let scores = per_step_scores(probs)?;
                let u_t = log_score_average(probs)?;
                Ok(ForecasterScore { name: name.as_ref().to_string(), u_t, steps: scores.len(), scores })
            })
            .collect::<Result<_>>()?;
        Ok(ScoreReport { version: 1, forecasters })
    }

    pub fn get(&self, name: &str) -> Option<&ForecasterScore> {
        self.forecasters.iter().find(|f| f.name == name)
    }
}

/// Splits `0..len` into `count` contiguous windows; earlier windows absorb
/// no remainder, the last one takes it.
pub fn windows(len: usize, count: usize) -> Vec<Range<usize>> {
    let count = count.max(1).min(len.max(1));
    let width = len / count;
    (0..count)
        .map(|i| {
            let start = i * width;
            let end = if i + 1 == count { len } else { start + width };
            start..end
        })
        .collect()
}

pub fn deciles(len: usize) -> Vec<Range<usize>> {
    windows(len, 10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowExceedance {
    pub start: usize,
    pub end: usize,
    pub mean_gap: f64,
    /// One fraction per epsilon, in the report's epsilon order.
    pub exceedance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub version: u32,
    pub epsilons: Vec<f64>,
    pub windows: Vec<WindowExceedance>,
    pub gaps: Vec<f64>,
}

/// `|a_t − b_t|` with per-window exceedance fractions for each epsilon.
pub fn forecast_gap_series(a: &[f64], b: &[f64], epsilons: &[f64], window_count: usize) -> Result<ConvergenceReport> {
    if a.len() != b.len() {
        return Err(Error::Length { expected: a.len(), got: b.len() });
    }
    let gaps: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    let windows = windows(gaps.len(), window_count)
        .into_iter()
        .map(|r| {
            let part = &gaps[r.clone()];
            let n = part.len().max(1) as f64;
            WindowExceedance {
                start: r.start,
                end: r.end,
                mean_gap: part.iter().sum::<f64>() / n,
                exceedance: epsilons.iter().map(|&e| part.iter().filter(|&&g| g > e).count() as f64 / n).collect(),
            }
        })
        .collect();
    Ok(ConvergenceReport { version: 1, epsilons: epsilons.to_vec(), windows, gaps })
}

/// Pointwise `forecaster / truth` on the probabilities given to realized outcomes.
pub fn truth_ratio_series(forecaster: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    if forecaster.len() != truth.len() {
        return Err(Error::Length { expected: truth.len(), got: forecaster.len() });
    }
    forecaster
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (&f, &t))| {
            check_probability(i + 1, f)?;
            check_probability(i + 1, t)?;
            Ok(f / t)
        })
        .collect()
}

/// Fraction of `series[range]` lying in `[lo, hi]`.
pub fn fraction_within(series: &[f64], range: Range<usize>, lo: f64, hi: f64) -> f64 {
    let part = &series[range];
    if part.is_empty() {
        return 0.0;
    }
    part.iter().filter(|&&v| v >= lo && v <= hi).count() as f64 / part.len() as f64
}

fn cumulative_log_likelihoods(space: &ModelSpace, trace: &Trace) -> Vec<(f64, crate::ModelState)> {
    space.ids().map(|id| space.replay(id, trace.records())).collect()
}

/// Largest one-step martingale deviation of `R_t(ω, ω*) = λ_ω / λ_ω*` after
/// the prefix, over every model and every next pre-outcome configuration.
///
/// Deviations are reported relative to `max(1, R_{t-1})`.
pub fn martingale_oracle(space: &ModelSpace, truth: ModelId, trace: &Trace) -> Result<f64> {
    if truth.0 >= space.len() {
        return Err(Error::NotApplicable(format!("truth model {truth} is not in the space")));
    }
    let schema = space.schema();
    let fitted = cumulative_log_likelihoods(space, trace);
    let truth_spec = space.spec(truth);
    let (truth_ll, truth_state) = &fitted[truth.0];
    let mut worst = 0.0f64;
    for code in 0..schema.pre_configurations() {
        let b = schema.decode_pre(code);
        for id in space.ids() {
            let (ll, state) = &fitted[id.0];
            let log_r = ll - truth_ll;
            let shift = log_r.max(0.0);
            let r_prev = (log_r - shift).exp();
            let mut expected = 0.0;
            for x in [false, true] {
                let p_true = truth_state.prob_of(truth_spec, &b, x);
                let p_model = state.prob_of(space.spec(id), &b, x);
                let log_r_next = log_r + p_model.ln() - p_true.ln();
                expected += p_true * (log_r_next - shift).exp();
            }
            worst = worst.max((expected - r_prev).abs());
        }
    }
    Ok(worst)
}

/// `ln R_t(ω*) = ln Σ_ω α_ω0 λ_ωt / λ_ω*t` for `t = 0..=T`.
pub fn mixture_log_ratio_series(space: &ModelSpace, truth: ModelId, trace: &Trace) -> Result<Vec<f64>> {
    if truth.0 >= space.len() {
        return Err(Error::NotApplicable(format!("truth model {truth} is not in the space")));
    }
    let mut states: Vec<_> = space.ids().map(|id| space.fresh_state(id)).collect();
    let mut ll = vec![0.0; space.len()];
    let log_ratio = |ll: &[f64]| {
        let terms: Vec<f64> = space.ids().map(|id| space.log_prior(id) + ll[id.0] - ll[truth.0]).collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    };
    let mut out = Vec::with_capacity(trace.len() + 1);
    out.push(log_ratio(&ll));
    for obs in trace.records() {
        for id in space.ids() {
            ll[id.0] += states[id.0].log_likelihood_increment(space.spec(id), obs);
            states[id.0].update(obs);
        }
        out.push(log_ratio(&ll));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerMismatch {
    pub t: usize,
    pub chosen: ModelId,
    pub best_scorer: ModelId,
    pub score_current: f64,
    pub score_alternate: f64,
}

/// Checks every decision against the higher past average log score among
/// `{current, alternate}`, ties (within [`crate::sr::TIE_RELATIVE_TOLERANCE`])
/// to current. Returns the first mismatch.
pub fn sr_equals_best_scorer_check(
    space: &ModelSpace,
    trace: &Trace,
    decisions: &[SrDecision],
) -> Result<Option<ScorerMismatch>> {
    if !space.has_equal_priors() {
        return Err(Error::NotApplicable("priors are not equal".into()));
    }
    // prefix[ω][t] = log likelihood of the first t records
    let prefix: Vec<Vec<f64>> = space
        .ids()
        .map(|id| {
            let mut state = space.fresh_state(id);
            let mut sum = 0.0;
            let mut row = vec![0.0];
            for obs in trace.records() {
                sum += state.log_likelihood_increment(space.spec(id), obs);
                state.update(obs);
                row.push(sum);
            }
            row
        })
        .collect();
    for d in decisions {
        if d.t == 0 || d.t > trace.len() {
            return Err(Error::Length { expected: trace.len(), got: d.t });
        }
        let u_c = prefix[d.current.0][d.t] / d.t as f64;
        let u_a = prefix[d.alternate.0][d.t] / d.t as f64;
        let best = if keeps_current(u_c, u_a) { d.current } else { d.alternate };
        if best != d.chosen {
            return Ok(Some(ScorerMismatch {
                t: d.t,
                chosen: d.chosen,
                best_scorer: best,
                score_current: u_c,
                score_alternate: u_a,
            }));
        }
    }
    Ok(None)
}
