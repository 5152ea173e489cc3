//! Iid draws from `e^{aV + bW} / Z` by inverting a tabulated CDF.

use rand::Rng;
use rayon::prelude::*;

use super::{MonteCarloError, RngSpec};
use crate::gibbs::{GibbsError, TiltParams};
use crate::orlicz::OrliczFunction;
use crate::quad::{gk15, integrate_half_line, merged_breakpoints, Norm, QuadratureSpec, TiltExponent};

const INITIAL_CELLS: usize = 2048;
const CDF_TOLERANCE: f64 = 1.0e-8;
const MAX_CELLS: usize = 1 << 22;

/// Monotone piecewise-cubic CDF of `|X|` on `[0, T]`, `T` the quadrature
/// truncation point; the sign of `X` is drawn separately.
#[derive(Debug, Clone)]
pub struct InverseCdfSampler {
    knots: Vec<f64>,
    cdf: Vec<f64>,
    /// Per-cell endpoint slopes after the Fritsch–Carlson limiter.
    slopes: Vec<(f64, f64)>,
    /// `guide[j]` is the first cell whose right CDF value exceeds `j / G`.
    guide: Vec<u32>,
    params: TiltParams,
}

impl InverseCdfSampler {
    pub fn new(
        v: &OrliczFunction,
        w: &OrliczFunction,
        params: TiltParams,
        spec: &QuadratureSpec,
    ) -> Result<Self, MonteCarloError> {
        let TiltParams { alpha, beta } = params;
        let exponent = TiltExponent::new(alpha, v, beta, w);
        let nodes = merged_breakpoints(v, w);
        let line = integrate_half_line(|x| exponent.eval(x), |_| [1.0], &nodes, [Norm::Own], spec, None)
            .map_err(|source| GibbsError::Domain { alpha, beta, source })?;
        let shift = line.log_shift;
        let density = |x: f64| (exponent.eval(x) - shift).exp();
        let density_k = |x: f64| [density(x)];
        let cell_mass = |a: f64, b: f64| gk15(&density_k, a, b).0[0];

        let top = line.truncation_point;
        let mut knots: Vec<f64> = (0..=INITIAL_CELLS)
            .map(|k| top * k as f64 / INITIAL_CELLS as f64)
            .collect();
        // Also resolve the left part of the support finely, where peaked densities live.
        for &node in &nodes {
            if node > 0.0 && node < top {
                knots.push(node);
            }
        }
        knots.sort_by(f64::total_cmp);
        knots.dedup();

        loop {
            let halves: Vec<(f64, f64)> = knots
                .par_windows(2)
                .map(|c| {
                    let mid = 0.5 * (c[0] + c[1]);
                    (cell_mass(c[0], mid), cell_mass(mid, c[1]))
                })
                .collect();
            let total: f64 = halves.iter().map(|(l, r)| l + r).sum();
            let dens: Vec<f64> = knots.par_iter().map(|&x| density(x) / total).collect();
            let mut cdf = Vec::with_capacity(knots.len());
            let mut acc = 0.0;
            cdf.push(0.0);
            for (l, r) in &halves {
                acc += l + r;
                cdf.push(acc / total);
            }
            let slopes: Vec<(f64, f64)> = (0..halves.len())
                .map(|k| limited_slopes(knots[k], knots[k + 1], cdf[k], cdf[k + 1], dens[k], dens[k + 1]))
                .collect();
            let mut refined = Vec::with_capacity(knots.len());
            let mut split = false;
            for k in 0..halves.len() {
                refined.push(knots[k]);
                let (a, b) = (knots[k], knots[k + 1]);
                let exact = cdf[k] + halves[k].0 / total;
                let approx = hermite(cdf[k], cdf[k + 1], slopes[k], b - a, 0.5);
                let mid = 0.5 * (a + b);
                if (exact - approx).abs() > CDF_TOLERANCE && mid > a && mid < b {
                    refined.push(mid);
                    split = true;
                }
            }
            refined.push(*knots.last().unwrap());
            if !split || refined.len() > MAX_CELLS {
                let last = cdf.len() - 1;
                cdf[last] = 1.0;
                let guide = build_guide(&cdf, knots.len() - 1);
                return Ok(Self {
                    knots,
                    cdf,
                    slopes,
                    guide,
                    params,
                });
            }
            knots = refined;
        }
    }

    pub fn params(&self) -> TiltParams {
        self.params
    }

    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    /// Tabulated `P[|X| <= x]`.
    pub fn abs_cdf(&self, x: f64) -> f64 {
        let x = x.abs();
        let top = *self.knots.last().unwrap();
        if x >= top {
            return 1.0;
        }
        let k = self.knots.partition_point(|&k| k <= x).saturating_sub(1);
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        hermite(self.cdf[k], self.cdf[k + 1], self.slopes[k], b - a, (x - a) / (b - a))
    }

    /// Tabulated `P[X <= x]` of the symmetric law.
    pub fn cdf(&self, x: f64) -> f64 {
        let half = 0.5 * self.abs_cdf(x);
        if x >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    /// Inverse of [`Self::abs_cdf`] at `u` in `[0, 1)`.
    pub fn abs_quantile(&self, u: f64) -> f64 {
        let g = self.guide.len() - 1;
        let mut k = self.guide[((u * g as f64) as usize).min(g)] as usize;
        let cells = self.knots.len() - 1;
        while k + 1 < cells && self.cdf[k + 1] <= u {
            k += 1;
        }
        let (fa, fb) = (self.cdf[k], self.cdf[k + 1]);
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        if fb <= fa {
            return a;
        }
        let h = b - a;
        let (da, db) = self.slopes[k];
        // Newton on the cubic, bisection when a step leaves the bracket.
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut s = ((u - fa) / (fb - fa)).clamp(0.0, 1.0);
        for _ in 0..60 {
            let val = hermite(fa, fb, (da, db), h, s) - u;
            if val.abs() <= 1.0e-16 {
                break;
            }
            if val > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let deriv = hermite_deriv(fa, fb, (da, db), h, s);
            let next = s - val / deriv;
            let next = if deriv > 0.0 && next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if (next - s).abs() <= 1.0e-13 {
                s = next;
                break;
            }
            s = next;
        }
        a + s * h
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let x = self.abs_quantile(u);
        if rng.random::<bool>() {
            x
        } else {
            -x
        }
    }
}

/// Cubic Hermite interpolant of the CDF on a cell at local coordinate `s`.
fn hermite(fa: f64, fb: f64, (da, db): (f64, f64), h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * fa + (s3 - 2.0 * s2 + s) * h * da + (-2.0 * s3 + 3.0 * s2) * fb + (s3 - s2) * h * db
}

/// Derivative of [`hermite`] with respect to `s`.
fn hermite_deriv(fa: f64, fb: f64, (da, db): (f64, f64), h: f64, s: f64) -> f64 {
    let s2 = s * s;
    (6.0 * s2 - 6.0 * s) * fa + (3.0 * s2 - 4.0 * s + 1.0) * h * da + (-6.0 * s2 + 6.0 * s) * fb + (3.0 * s2 - 2.0 * s) * h * db
}

fn limited_slopes(a: f64, b: f64, fa: f64, fb: f64, da: f64, db: f64) -> (f64, f64) {
    let delta = (fb - fa) / (b - a);
    if delta <= 0.0 {
        return (0.0, 0.0);
    }
    let (ra, rb) = (da / delta, db / delta);
    let norm = ra.hypot(rb);
    if norm > 3.0 {
        let tau = 3.0 / norm;
        (tau * da, tau * db)
    } else {
        (da, db)
    }
}

fn build_guide(cdf: &[f64], cells: usize) -> Vec<u32> {
    let g = cells;
    let mut guide = Vec::with_capacity(g + 1);
    let mut k = 0usize;
    for j in 0..=g {
        let u = j as f64 / g as f64;
        while k + 1 < cells && cdf[k + 1] <= u {
            k += 1;
        }
        guide.push(k as u32);
    }
    guide
}

/// `count` iid draws from `mu_{a,b}`, split over the streams of `rng`.
pub fn sample_gibbs_1d(
    v: &OrliczFunction,
    w: &OrliczFunction,
    params: TiltParams,
    count: usize,
    rng: RngSpec,
) -> Result<Vec<f64>, MonteCarloError> {
    let sampler = InverseCdfSampler::new(v, w, params, &crate::gibbs::default_spec())?;
    let chunks: Vec<Vec<f64>> = rng
        .split(count)
        .into_par_iter()
        .enumerate()
        .map(|(k, c)| {
            let mut r = rng.stream(k);
            (0..c).map(|_| sampler.sample(&mut r)).collect()
        })
        .collect();
    Ok(chunks.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::stats::{kolmogorov_distance, mean_and_stderr};

    fn f(expr: &str) -> OrliczFunction {
        OrliczFunction::parse(expr, true).unwrap()
    }

    fn normal_cdf(x: f64) -> f64 {
        0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn gaussian_table_matches_closed_form() {
        let s = InverseCdfSampler::new(&f("x^2"), &f("x^4"), TiltParams::new(-0.5, 0.0), &crate::gibbs::default_spec())
            .unwrap();
        assert!(s.knot_count() > INITIAL_CELLS);
        for x in [-3.0, -1.0, -0.2, 0.0, 0.5, 1.7, 4.0] {
            assert!((s.cdf(x) - normal_cdf(x)).abs() < 1.0e-8, "x = {x}");
        }
        for u in [0.0, 0.1, 0.5, 0.9, 0.999_999] {
            let x = s.abs_quantile(u);
            assert!((s.abs_cdf(x) - u).abs() < 1.0e-12, "u = {u}");
        }
    }

    #[test]
    fn gaussian_draws() {
        let params = TiltParams::new(-0.5, 0.0);
        let xs = sample_gibbs_1d(&f("x^2"), &f("x^4"), params, 1_000_000, RngSpec::new(11, 16)).unwrap();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (m2, se2) = mean_and_stderr(&sq);
        assert!((m2 - 1.0).abs() < 4.0 * se2, "{m2} +- {se2}");
        let (m1, se1) = mean_and_stderr(&xs);
        assert!(m1.abs() < 4.0 * se1);
        let sampler =
            InverseCdfSampler::new(&f("x^2"), &f("x^4"), params, &crate::gibbs::default_spec()).unwrap();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(kolmogorov_distance(&sorted, |x| sampler.cdf(x)) < 2.0e-3);
    }

    #[test]
    fn peaked_and_bimodal_tilts() {
        let spec = crate::gibbs::default_spec();
        // Narrow Gaussian with variance 1e-8.
        let s = InverseCdfSampler::new(&f("x^2"), &f("x^4"), TiltParams::new(-0.5e8, 0.0), &spec).unwrap();
        assert!((s.cdf(1.0e-4) - normal_cdf(1.0)).abs() < 1.0e-8);
        // e^{-5.5 x^4 + 11 x^2} peaks at |x| = 1.
        let s = InverseCdfSampler::new(&f("x^4"), &f("x^2"), TiltParams::new(-5.5, 11.0), &spec).unwrap();
        let median = s.abs_quantile(0.5);
        assert!((median - 1.0).abs() < 0.1, "{median}");
    }

    #[test]
    fn generalized_power_cusp() {
        // |X| ~ Exp(1) for e^{-|x|}.
        let s = InverseCdfSampler::new(&f("|x|^1"), &f("x^2"), TiltParams::new(-1.0, 0.0), &crate::gibbs::default_spec())
            .unwrap();
        for x in [0.01, 0.5, 2.0, 10.0] {
            assert!((s.abs_cdf(x) + (-x).exp_m1()).abs() < 1.0e-8);
        }
    }

    #[test]
    fn reproducible() {
        let p = TiltParams::new(-1.0, 0.0);
        let a = sample_gibbs_1d(&f("x^2"), &f("x^4"), p, 1000, RngSpec::new(3, 4)).unwrap();
        let b = sample_gibbs_1d(&f("x^2"), &f("x^4"), p, 1000, RngSpec::new(3, 4)).unwrap();
        assert_eq!(a, b);
        assert!(sample_gibbs_1d(&f("x^2"), &f("x^4"), TiltParams::new(-1.0, 0.1), 10, RngSpec::new(3, 4)).is_err());
    }
}
