//! Coordinate hit-and-run on `{x in R^n : sum V(x_i) <= nR}`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::RngSpec;
use crate::orlicz::OrliczFunction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallPoint {
    pub coords: Vec<f64>,
    pub v_budget_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitAndRun {
    /// Full sweeps (`n` coordinate steps each) discarded at the start.
    pub burn_in: usize,
    /// Sweeps between retained points.
    pub thin: usize,
}

impl Default for HitAndRun {
    fn default() -> Self {
        Self { burn_in: 50, thin: 5 }
    }
}

/// One chain started at the origin.
pub(crate) struct Chain<'a> {
    v: &'a OrliczFunction,
    budget: f64,
    x: Vec<f64>,
    vals: Vec<f64>,
    total: f64,
}

impl<'a> Chain<'a> {
    pub fn new(v: &'a OrliczFunction, r: f64, n: usize) -> Self {
        Self {
            v,
            budget: n as f64 * r,
            x: vec![0.0; n],
            vals: vec![0.0; n],
            total: 0.0,
        }
    }

    /// Resamples one random coordinate uniformly on its feasible interval.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.x.len();
        let i = if n == 1 { 0 } else { rng.random_range(0..n) };
        let slack = (self.budget - (self.total - self.vals[i])).max(0.0);
        let half = self.v.inverse_nonneg(slack);
        let u: f64 = rng.random();
        let xi = half * (2.0 * u - 1.0);
        let vi = self.v.eval(xi);
        self.total += vi - self.vals[i];
        self.x[i] = xi;
        self.vals[i] = vi;
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for _ in 0..self.x.len() {
            self.step(rng);
        }
        // Drop accumulated rounding from the running total.
        self.total = self.vals.iter().sum();
    }

    pub fn coords(&self) -> &[f64] {
        &self.x
    }
}

/// Runs one chain per stream and applies `emit` to each retained state.
pub(crate) fn run_chains<T: Send>(
    v: &OrliczFunction,
    r: f64,
    n: usize,
    sampler: HitAndRun,
    count: usize,
    rng: RngSpec,
    emit: impl Fn(&[f64]) -> T + Sync,
) -> Vec<Vec<T>> {
    rng.split(count)
        .into_par_iter()
        .enumerate()
        .map(|(k, c)| {
            let mut r_k = rng.stream(k);
            let mut chain = Chain::new(v, r, n);
            for _ in 0..sampler.burn_in {
                chain.sweep(&mut r_k);
            }
            let mut out = Vec::with_capacity(c);
            for _ in 0..c {
                for _ in 0..sampler.thin.max(1) {
                    chain.sweep(&mut r_k);
                }
                out.push(emit(chain.coords()));
            }
            out
        })
        .collect()
}

pub fn sample_ball_hitandrun(
    v: &OrliczFunction,
    r: f64,
    n: usize,
    sampler: HitAndRun,
    count: usize,
    rng: RngSpec,
) -> Vec<BallPoint> {
    run_chains(v, r, n, sampler, count, rng, |x| BallPoint {
        coords: x.to_vec(),
        v_budget_used: x.iter().map(|&xi| v.eval(xi)).sum(),
    })
    .concat()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::stats::mean_and_stderr;

    fn f(expr: &str) -> OrliczFunction {
        OrliczFunction::parse(expr, true).unwrap()
    }

    #[test]
    fn one_dimension_is_uniform() {
        let pts = sample_ball_hitandrun(&f("x^2"), 1.0, 1, HitAndRun { burn_in: 0, thin: 1 }, 100_000, RngSpec::new(5, 8));
        let sq: Vec<f64> = pts.iter().map(|p| p.coords[0].powi(2)).collect();
        let (m, se) = mean_and_stderr(&sq);
        assert!((m - 1.0 / 3.0).abs() < 4.0 * se, "{m} +- {se}");
    }

    #[test]
    fn points_stay_in_ball() {
        for expr in ["x^2", "|x|^0.5", "x^4 + x^2", "cosh(x)-1"] {
            let v = f(expr);
            let n = 50;
            let pts = sample_ball_hitandrun(&v, 2.0, n, HitAndRun::default(), 200, RngSpec::new(1, 4));
            for p in &pts {
                assert!(p.v_budget_used <= n as f64 * 2.0 * (1.0 + 1.0e-9), "{expr}: {}", p.v_budget_used);
            }
        }
    }

    #[test]
    fn deterministic() {
        let v = f("x^2");
        let a = sample_ball_hitandrun(&v, 1.0, 10, HitAndRun::default(), 50, RngSpec::new(9, 3));
        let b = sample_ball_hitandrun(&v, 1.0, 10, HitAndRun::default(), 50, RngSpec::new(9, 3));
        assert_eq!(a, b);
    }
}
