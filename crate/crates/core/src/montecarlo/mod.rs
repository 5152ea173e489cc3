//! Stochastic oracles: uniform sampling on Orlicz balls, iid Gibbs draws,
//! importance-sampling tail estimators and the CLT / LLN experiments.
//!
//! Every operation is a pure function of its inputs and an [`RngSpec`]:
//! work is split into `stream_count` independent ChaCha8 streams and merged
//! in stream order, so results do not depend on the thread pool.

mod ball;
mod experiments;
mod importance;
mod sampler;
pub mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::gibbs::GibbsError;
use crate::solve::SolveError;

pub use ball::{sample_ball_hitandrun, BallPoint, HitAndRun};
pub use experiments::{
    clt_experiment, corollary_check, corollary_check_threshold, slln_trajectory, CltResult, SllnPoint,
};
pub use importance::{estimate_tail_is, estimate_tail_is_side, estimate_tail_star_tilt, estimate_two_sided_is, TwoSidedEstimate};
pub use sampler::{sample_gibbs_1d, InverseCdfSampler};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error(transparent)]
    Domain(#[from] GibbsError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("t = {t} is not on the requested side of m = {m}")]
    Precondition { t: f64, m: f64 },
    #[error("only {hits} of {samples} samples hit the rare region (need at least 100)")]
    DegenerateEstimate { hits: u64, samples: u64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_count: usize,
}

impl RngSpec {
    pub fn new(seed: u64, stream_count: usize) -> Self {
        Self {
            seed,
            stream_count: stream_count.max(1),
        }
    }

    pub fn stream(&self, k: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64);
        rng
    }

    /// Splits `total` items over the streams, earlier streams taking the remainder.
    pub fn split(&self, total: usize) -> Vec<usize> {
        let s = self.stream_count;
        (0..s).map(|k| total / s + usize::from(k < total % s)).collect()
    }
}

impl Default for RngSpec {
    fn default() -> Self {
        Self::new(0, 64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub stderr: f64,
    pub n_samples: u64,
    /// Authoritative when `estimate` underflows.
    pub log_estimate: f64,
    pub seed: u64,
    pub stream_count: usize,
}

impl EstimatorResult {
    /// `|estimate - value| <= k * stderr`.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.stderr
    }

    pub fn z_score(&self, value: f64) -> f64 {
        (value - self.estimate) / self.stderr
    }
}
