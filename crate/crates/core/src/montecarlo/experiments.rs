//! Hit-and-run experiments on the fluctuations of `(1/n) sum W(X_i)`.

use rayon::prelude::*;
use serde::Serialize;

use super::ball::{run_chains, Chain, HitAndRun};
use super::stats::{batch_mean_stderr, kolmogorov_distance};
use super::{EstimatorResult, MonteCarloError, RngSpec};
use crate::asymptotics::clt_sigma;
use crate::orlicz::OrliczFunction;
use crate::solve::critical_m;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltResult {
    pub d_kol: f64,
    pub sigma_sq: f64,
    pub m: f64,
    pub n: usize,
    pub n_points: usize,
}

fn normal_cdf(x: f64, sd: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / (sd * std::f64::consts::SQRT_2))
}

/// Kolmogorov distance between `(1/sqrt n) sum (W(X_i) - m)` and its
/// Gaussian limit.
#[allow(clippy::too_many_arguments)]
pub fn clt_experiment(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    n: usize,
    n_points: usize,
    sampler: HitAndRun,
    rng: RngSpec,
) -> Result<CltResult, MonteCarloError> {
    if n < 2 || n_points == 0 {
        return Err(MonteCarloError::Invalid("need n >= 2 and at least one point".into()));
    }
    let m = critical_m(v, w, r)?;
    let sigma_sq = clt_sigma(v, w, r).map_err(|e| MonteCarloError::Invalid(e.to_string()))?;
    let root_n = (n as f64).sqrt();
    let mut stats = run_chains(v, r, n, sampler, n_points, rng, |x| {
        x.iter().map(|&xi| w.eval(xi) - m).sum::<f64>() / root_n
    })
    .concat();
    stats.sort_by(f64::total_cmp);
    let sd = sigma_sq.sqrt();
    Ok(CltResult {
        d_kol: kolmogorov_distance(&stats, |s| normal_cdf(s, sd)),
        sigma_sq,
        m,
        n,
        n_points,
    })
}

/// Fraction of hit-and-run points with `(1/n) sum W <= m`.
pub fn corollary_check(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    n: usize,
    n_points: usize,
    sampler: HitAndRun,
    rng: RngSpec,
) -> Result<EstimatorResult, MonteCarloError> {
    let m = critical_m(v, w, r)?;
    corollary_check_threshold(v, w, r, n, n_points, m, sampler, rng)
}

/// Fraction of hit-and-run points with `(1/n) sum W <= threshold`.
#[allow(clippy::too_many_arguments)]
pub fn corollary_check_threshold(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    n: usize,
    n_points: usize,
    threshold: f64,
    sampler: HitAndRun,
    rng: RngSpec,
) -> Result<EstimatorResult, MonteCarloError> {
    if n < 2 || n_points == 0 {
        return Err(MonteCarloError::Invalid("need n >= 2 and at least one point".into()));
    }
    let nf = n as f64;
    let batches = run_chains(v, r, n, sampler, n_points, rng, |x| {
        x.iter().map(|&xi| w.eval(xi)).sum::<f64>() / nf <= threshold
    });
    let means: Vec<f64> = batches
        .iter()
        .map(|b| b.iter().filter(|&&hit| hit).count() as f64 / b.len().max(1) as f64)
        .collect();
    let counts: Vec<usize> = batches.iter().map(Vec::len).collect();
    let (estimate, stderr) = batch_mean_stderr(&means, &counts);
    Ok(EstimatorResult {
        estimate,
        stderr,
        n_samples: n_points as u64,
        log_estimate: estimate.ln(),
        seed: rng.seed,
        stream_count: rng.stream_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SllnPoint {
    pub n: usize,
    pub value: f64,
}

/// One hit-and-run point per `n`; each `n` uses its own stream.
pub fn slln_trajectory(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    n_grid: &[usize],
    sampler: HitAndRun,
    rng: RngSpec,
) -> Vec<SllnPoint> {
    n_grid
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rk = rng.stream(k);
            let mut chain = Chain::new(v, r, n.max(1));
            for _ in 0..sampler.burn_in.max(1) {
                chain.sweep(&mut rk);
            }
            let value = chain.coords().iter().map(|&x| w.eval(x)).sum::<f64>() / n.max(1) as f64;
            SllnPoint { n, value }
        })
        .collect()
}
