//! Importance-sampling estimators of `P[(1/n) sum W(X_i) >= t]` (or `<= t`)
//! for `X` uniform on the Orlicz ball.
//!
//! With `A` the rare event inside the ball `B`,
//!
//! ```text
//! vol(A) = e^{n(phi - aR - bt)}     E_{a,b}[1_A e^{-a(sum V - nR) - b(sum W - nt)}]
//! vol(B) = e^{n(phi* - a* R)}       E_{a*,0}[1_B e^{-a*(sum V - nR)}]
//! ```
//!
//! so the probability is `e^{-nJ}` times a ratio of two expectations whose
//! integrands lie in `[0, 1]`.

use rayon::prelude::*;
use serde::Serialize;

use super::sampler::InverseCdfSampler;
use super::stats::batch_mean_stderr;
use super::{EstimatorResult, MonteCarloError, RngSpec};
use crate::asymptotics::Side;
use crate::gibbs::TiltParams;
use crate::orlicz::OrliczFunction;
use crate::solve::{alpha_star_summary, solve_tilt_with, SolverOptions, Target};

struct Batch {
    mean: f64,
    hits: u64,
    count: usize,
}

/// Per-stream means of `1_event * e^{weight}` over iid `n`-vectors.
#[allow(clippy::too_many_arguments)]
fn tilted_batches(
    v: &OrliczFunction,
    w: &OrliczFunction,
    sampler: &InverseCdfSampler,
    n: usize,
    samples: usize,
    rng: RngSpec,
    stream_offset: usize,
    event_and_log_weight: impl Fn(f64, f64) -> Option<f64> + Sync,
) -> Vec<Batch> {
    rng.split(samples)
        .into_par_iter()
        .enumerate()
        .map(|(k, count)| {
            let mut r = rng.stream(stream_offset + k);
            let mut sum = 0.0;
            let mut hits = 0;
            for _ in 0..count {
                let (mut sv, mut sw) = (0.0, 0.0);
                for _ in 0..n {
                    let x = sampler.sample(&mut r);
                    sv += v.eval(x);
                    sw += w.eval(x);
                }
                if let Some(lw) = event_and_log_weight(sv, sw) {
                    sum += lw.exp();
                    hits += 1;
                }
            }
            Batch {
                mean: if count > 0 { sum / count as f64 } else { 0.0 },
                hits,
                count,
            }
        })
        .collect()
}

fn pooled(batches: &[Batch]) -> (f64, f64, u64) {
    let means: Vec<f64> = batches.iter().map(|b| b.mean).collect();
    let counts: Vec<usize> = batches.iter().map(|b| b.count).collect();
    let (m, se) = batch_mean_stderr(&means, &counts);
    (m, se, batches.iter().map(|b| b.hits).sum())
}

/// Upper tail `P[(1/n) sum W >= t]`, `t > m`.
pub fn estimate_tail_is(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    t: f64,
    n: usize,
    n_samples: usize,
    rng: RngSpec,
) -> Result<EstimatorResult, MonteCarloError> {
    estimate_tail_is_side(v, w, r, t, n, n_samples, Side::Upper, rng, 0, &SolverOptions::default())
}

/// One tail, sampled from the solved tilt; `stream_offset` selects a disjoint
/// block of RNG streams (this estimator uses `2 * stream_count` of them).
#[allow(clippy::too_many_arguments)]
pub fn estimate_tail_is_side(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    t: f64,
    n: usize,
    n_samples: usize,
    side: Side,
    rng: RngSpec,
    stream_offset: usize,
    opts: &SolverOptions,
) -> Result<EstimatorResult, MonteCarloError> {
    if n == 0 || n_samples < 2 {
        return Err(MonteCarloError::Invalid("n and n_samples must be positive".into()));
    }
    let star = alpha_star_summary(v, w, r, opts)?;
    let m = star.mean_w;
    let on_side = match side {
        Side::Upper => t > m,
        Side::Lower => t < m,
    };
    if !on_side {
        return Err(MonteCarloError::Precondition { t, m });
    }
    let sol = solve_tilt_with(v, w, Target::new(r, t)?, opts)?;
    let TiltParams { alpha, beta } = sol.params;
    let alpha_star = star.params.alpha;
    let j = (alpha * r + beta * t - sol.summary.phi) - (alpha_star * r - star.phi);
    let nf = n as f64;
    let (nr, nt) = (nf * r, nf * t);

    let spec = crate::gibbs::default_spec();
    let tilted = InverseCdfSampler::new(v, w, sol.params, &spec)?;
    let at_star = InverseCdfSampler::new(v, w, star.params, &spec)?;
    let s = rng.stream_count;
    let num = tilted_batches(v, w, &tilted, n, n_samples, rng, stream_offset, |sv, sw| {
        let in_event = match side {
            Side::Upper => sw >= nt,
            Side::Lower => sw <= nt,
        };
        (sv <= nr && in_event).then(|| -alpha * (sv - nr) - beta * (sw - nt))
    });
    let den = tilted_batches(v, w, &at_star, n, n_samples, rng, stream_offset + s, |sv, _| {
        (sv <= nr).then(|| -alpha_star * (sv - nr))
    });
    let (e1, se1, hits) = pooled(&num);
    let (e2, se2, _) = pooled(&den);
    if hits < 100 {
        return Err(MonteCarloError::DegenerateEstimate {
            hits,
            samples: n_samples as u64,
        });
    }
    let log_estimate = -nf * j + e1.ln() - e2.ln();
    let estimate = log_estimate.exp();
    let rel = (se1 / e1).hypot(se2 / e2);
    Ok(EstimatorResult {
        estimate,
        stderr: estimate * rel,
        n_samples: n_samples as u64,
        log_estimate,
        seed: rng.seed,
        stream_count: s,
    })
}

/// The same upper-tail probability using only `(alpha*, 0)` draws, for
/// comparison with the solved tilt.
pub fn estimate_tail_star_tilt(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    t: f64,
    n: usize,
    n_samples: usize,
    rng: RngSpec,
) -> Result<EstimatorResult, MonteCarloError> {
    let opts = SolverOptions::default();
    let star = alpha_star_summary(v, w, r, &opts)?;
    let alpha_star = star.params.alpha;
    let nf = n as f64;
    let (nr, nt) = (nf * r, nf * t);
    let sampler = InverseCdfSampler::new(v, w, star.params, &crate::gibbs::default_spec())?;
    // Each stream returns (mean over event A, mean over ball B).
    let pairs: Vec<(f64, f64, usize)> = rng
        .split(n_samples)
        .into_par_iter()
        .enumerate()
        .map(|(k, count)| {
            let mut rk = rng.stream(k);
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..count {
                let (mut sv, mut sw) = (0.0, 0.0);
                for _ in 0..n {
                    let x = sampler.sample(&mut rk);
                    sv += v.eval(x);
                    sw += w.eval(x);
                }
                if sv <= nr {
                    let wt = (-alpha_star * (sv - nr)).exp();
                    b += wt;
                    if sw >= nt {
                        a += wt;
                    }
                }
            }
            (a / count as f64, b / count as f64, count)
        })
        .collect();
    let total: f64 = pairs.iter().map(|p| p.2 as f64).sum();
    let a_bar = pairs.iter().map(|p| p.0 * p.2 as f64).sum::<f64>() / total;
    let b_bar = pairs.iter().map(|p| p.1 * p.2 as f64).sum::<f64>() / total;
    let estimate = a_bar / b_bar;
    // Linearized ratio: batch means of (a - p b) / b_bar.
    let lin: Vec<f64> = pairs.iter().map(|p| (p.0 - estimate * p.1) / b_bar).collect();
    let counts: Vec<usize> = pairs.iter().map(|p| p.2).collect();
    let (_, stderr) = batch_mean_stderr(&lin, &counts);
    Ok(EstimatorResult {
        estimate,
        stderr,
        n_samples: n_samples as u64,
        log_estimate: estimate.ln(),
        seed: rng.seed,
        stream_count: rng.stream_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSidedEstimate {
    pub upper: EstimatorResult,
    pub lower: EstimatorResult,
    /// `P[|(1/n) sum W - m| >= delta]`.
    pub total: EstimatorResult,
}

pub fn estimate_two_sided_is(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    delta: f64,
    n: usize,
    n_samples: usize,
    rng: RngSpec,
) -> Result<TwoSidedEstimate, MonteCarloError> {
    let opts = SolverOptions::default();
    let m = alpha_star_summary(v, w, r, &opts)?.mean_w;
    let s = rng.stream_count;
    let upper = estimate_tail_is_side(v, w, r, m + delta, n, n_samples, Side::Upper, rng, 0, &opts)?;
    let lower = estimate_tail_is_side(v, w, r, m - delta, n, n_samples, Side::Lower, rng, 2 * s, &opts)?;
    let estimate = upper.estimate + lower.estimate;
    let hi = upper.log_estimate.max(lower.log_estimate);
    let log_estimate = hi + ((upper.log_estimate - hi).exp() + (lower.log_estimate - hi).exp()).ln();
    Ok(TwoSidedEstimate {
        upper,
        lower,
        total: EstimatorResult {
            estimate,
            stderr: upper.stderr.hypot(lower.stderr),
            n_samples: 2 * n_samples as u64,
            log_estimate,
            seed: rng.seed,
            stream_count: s,
        },
    })
}
