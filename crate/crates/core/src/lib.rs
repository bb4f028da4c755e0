//! Sequential probability forecasting over a finite model space.
//!
//! Three forecasters share one observation stream:
//!
//! * [`mixture::MixtureEngine`] keeps the full Bayesian mixture, the
//!   reference every bounded forecaster is measured against.
//! * [`sr::SrEngine`] predicts with a single current model, proposes one
//!   alternate per step and keeps whichever has the higher prior-weighted
//!   likelihood over the whole history.
//! * [`srf::SrfEngine`] compares current and alternate only on a trial
//!   period of fresh data and forgets everything older than the current
//!   model's adoption.
//!
//! [`chain`] builds the exact Markov chain of the forgetting variant for
//! small instances, [`scoring`] holds the log-score and convergence
//! diagnostics, and [`harness`] wires it all into reproducible experiments.

pub mod chain;
pub mod error;
pub mod harness;
pub mod mixture;
pub mod model_space;
pub mod scoring;
pub mod search;
pub mod sr;
pub mod srf;

pub use error::{Error, Result};
pub use model_space::{Family, ModelId, ModelSpace, ModelSpec, ModelState, ObservationVector, Schema, Trace};

/// A sequential forecaster.
///
/// Callers invoke [`forecast`](Forecaster::forecast) with the pre-outcome
/// values of step `t` and only afterwards reveal the full observation via
/// [`observe`](Forecaster::observe).
pub trait Forecaster {
    /// Probability of `x_t = 1` given the history and `b_t`.
    fn forecast(&mut self, b: &[u32]) -> f64;

    fn observe(&mut self, obs: &ObservationVector) -> Result<()>;
}

/// Probability a forecast of `p` for `x = 1` assigns to the realized outcome.
#[inline]
pub fn prob_of_realized(p: f64, x: bool) -> f64 {
    if x {
        p
    } else {
        1.0 - p
    }
}
