//! Tilt equations: `alpha*`, the critical value `m`, the Newton system
//! `grad phi(a, b) = (R, t)` and the constraint curve `b(a)`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::gibbs::{summarize, GibbsError, GibbsSummary, TiltParams};
use crate::orlicz::{classify_assumptions, OrliczFunction, Verdict};
use crate::quad::QuadratureSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("could not bracket alpha* for R = {r}: E V ranges over [{lo_mean:e}, {hi_mean:e}] on alpha in [-1e12, -1e-12]")]
    BracketFailure { r: f64, lo_mean: f64, hi_mean: f64 },
    #[error("no tilt solves grad phi = ({r}, {t}): {reason} (last in-domain iterate alpha = {}, beta = {}, residual {residual:e})", last.alpha, last.beta)]
    NoSolution {
        r: f64,
        t: f64,
        last: TiltParams,
        residual: f64,
        reason: String,
    },
    #[error("no beta gives E V = {r} at alpha = {alpha}: {reason}")]
    ConstraintUnreachable { r: f64, alpha: f64, reason: String },
    #[error(transparent)]
    Domain(#[from] GibbsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Target {
    #[serde(rename = "R")]
    pub r: f64,
    pub t: f64,
}

impl Target {
    pub fn new(r: f64, t: f64) -> Result<Self, SolveError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(SolveError::InvalidTarget(format!("R must be positive and finite, got {r}")));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(SolveError::InvalidTarget(format!("t must be positive and finite, got {t}")));
        }
        Ok(Self { r, t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltSolution {
    pub params: TiltParams,
    pub summary: GibbsSummary,
    /// `max(|E V - R|, |E W - t|)`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub quad: QuadratureSpec,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Residual bound relative to `max(R, t)`.
    pub rel_residual: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            quad: QuadratureSpec::default().with_rel_tol(1.0e-13),
            max_iterations: 60,
            max_halvings: 40,
            rel_residual: 1.0e-10,
        }
    }
}

const ALPHA_MIN: f64 = -1.0e12;
const ALPHA_MAX: f64 = -1.0e-12;

fn mean_v_at(v: &OrliczFunction, alpha: f64, spec: &QuadratureSpec) -> Result<GibbsSummary, GibbsError> {
    summarize(v, v, TiltParams::new(alpha, 0.0), spec)
}

pub fn solve_alpha_star(v: &OrliczFunction, r: f64) -> Result<f64, SolveError> {
    solve_alpha_star_with(v, r, &SolverOptions::default())
}

/// Root of `E_{alpha,0} V = R` in `alpha < 0`.
///
/// `E_{alpha,0} V` increases with `alpha`, so a geometric bracket in `|alpha|`
/// followed by safeguarded Newton (derivative `Var V`) converges.
pub fn solve_alpha_star_with(v: &OrliczFunction, r: f64, opts: &SolverOptions) -> Result<f64, SolveError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(SolveError::InvalidTarget(format!("R must be positive and finite, got {r}")));
    }
    let spec = &opts.quad;
    let tol = opts.rel_residual * r;
    // Bracket lo < root < hi, with lo more negative.
    let mut lo = -1.0;
    let mut hi = -1.0;
    let mut s = mean_v_at(v, -1.0, spec)?;
    if (s.mean_v - r).abs() <= tol {
        return Ok(-1.0);
    }
    if s.mean_v > r {
        while s.mean_v > r {
            hi = lo;
            lo *= 10.0;
            if lo < ALPHA_MIN {
                return Err(SolveError::BracketFailure {
                    r,
                    lo_mean: s.mean_v,
                    hi_mean: mean_v_at(v, ALPHA_MAX, spec)?.mean_v,
                });
            }
            s = mean_v_at(v, lo, spec)?;
        }
    } else {
        while s.mean_v < r {
            lo = hi;
            hi /= 10.0;
            if hi > ALPHA_MAX {
                return Err(SolveError::BracketFailure {
                    r,
                    lo_mean: mean_v_at(v, ALPHA_MIN, spec)?.mean_v,
                    hi_mean: s.mean_v,
                });
            }
            s = mean_v_at(v, hi, spec)?;
        }
    }
    let mut alpha = if s.params.alpha == lo { lo } else { hi };
    for _ in 0..200 {
        let f = s.mean_v - r;
        if f.abs() <= tol {
            return Ok(alpha);
        }
        if f > 0.0 {
            hi = alpha;
        } else {
            lo = alpha;
        }
        let newton = alpha - f / s.cov.vv;
        // Bisect geometrically in |alpha| when Newton leaves the bracket.
        alpha = if newton > lo && newton < hi {
            newton
        } else {
            -(lo * hi).sqrt()
        };
        s = mean_v_at(v, alpha, spec)?;
        if (hi - lo).abs() <= 4.0 * f64::EPSILON * lo.abs() {
            break;
        }
    }
    if (s.mean_v - r).abs() <= tol {
        Ok(alpha)
    } else {
        Err(SolveError::BracketFailure {
            r,
            lo_mean: mean_v_at(v, lo, spec)?.mean_v,
            hi_mean: mean_v_at(v, hi, spec)?.mean_v,
        })
    }
}

/// Tilt `(alpha*, 0)` and its summary.
pub fn alpha_star_summary(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    opts: &SolverOptions,
) -> Result<GibbsSummary, SolveError> {
    let alpha = solve_alpha_star_with(v, r, opts)?;
    Ok(summarize(v, w, TiltParams::new(alpha, 0.0), &opts.quad)?)
}

/// `m = E_{alpha*,0} W`.
pub fn critical_m(v: &OrliczFunction, w: &OrliczFunction, r: f64) -> Result<f64, SolveError> {
    Ok(alpha_star_summary(v, w, r, &SolverOptions::default())?.mean_w)
}

pub fn solve_tilt(v: &OrliczFunction, w: &OrliczFunction, target: Target) -> Result<TiltSolution, SolveError> {
    solve_tilt_with(v, w, target, &SolverOptions::default())
}

fn residual(s: &GibbsSummary, target: Target) -> f64 {
    (s.mean_v - target.r).abs().max((s.mean_w - target.t).abs())
}

fn merit(s: &GibbsSummary, target: Target) -> f64 {
    ((s.mean_v - target.r) / target.r).hypot((s.mean_w - target.t) / target.t)
}

/// Damped Newton on `(E V - R, E W - t)` with Jacobian `Sigma`.
///
/// Starts at `(alpha*, 0)`; if the direct iteration stalls, walks `t` out from
/// `m` in shrinking steps, reusing each solution as the next start.
pub fn solve_tilt_with(
    v: &OrliczFunction,
    w: &OrliczFunction,
    target: Target,
    opts: &SolverOptions,
) -> Result<TiltSolution, SolveError> {
    let target = Target::new(target.r, target.t)?;
    let star = alpha_star_summary(v, w, target.r, opts)?;
    let m = star.mean_w;
    let tol = opts.rel_residual * target.r.max(target.t);
    if (target.t - m).abs() <= tol {
        return Ok(TiltSolution {
            params: star.params,
            summary: star,
            residual: residual(&star, target),
            iterations: 0,
        });
    }
    let sign = if target.t > m { 1.0 } else { -1.0 };
    let direct = newton(v, w, target, star, sign, opts);
    let (mut start, mut failure) = match direct {
        Ok(sol) => return Ok(sol),
        Err(e) => (star, e),
    };
    // Continuation in t from m.
    let mut t_done = m;
    let mut step = (target.t - m) / 8.0;
    let mut iterations = 0;
    while step.abs() > 1.0e-6 * (target.t - m).abs() {
        let t_next = if (target.t - t_done).abs() <= step.abs() {
            target.t
        } else {
            t_done + step
        };
        let sub = Target { r: target.r, t: t_next };
        match newton(v, w, sub, start, sign, opts) {
            Ok(sol) => {
                iterations += sol.iterations;
                if t_next == target.t {
                    return Ok(TiltSolution { iterations, ..sol });
                }
                start = sol.summary;
                t_done = t_next;
                step *= 1.5;
            }
            Err(e) => {
                failure = e;
                step /= 2.0;
            }
        }
    }
    Err(match failure {
        SolveError::NoSolution { reason, .. } => SolveError::NoSolution {
            r: target.r,
            t: target.t,
            last: start.params,
            residual: residual(&start, target),
            reason: format!("continuation from m = {m} stalled at t = {t_done}: {reason}"),
        },
        other => other,
    })
}

fn newton(
    v: &OrliczFunction,
    w: &OrliczFunction,
    target: Target,
    start: GibbsSummary,
    sign: f64,
    opts: &SolverOptions,
) -> Result<TiltSolution, SolveError> {
    let tol = opts.rel_residual * target.r.max(target.t);
    let mut cur = start;
    let mut out_of_domain = 0usize;
    let no_solution = |cur: &GibbsSummary, reason: String| SolveError::NoSolution {
        r: target.r,
        t: target.t,
        last: cur.params,
        residual: residual(cur, target),
        reason,
    };
    for iter in 0..opts.max_iterations {
        let res = residual(&cur, target);
        // Accept only on the solved branch; the start point (beta = 0) never is.
        if res <= tol && cur.params.beta * sign > 0.0 {
            return Ok(TiltSolution {
                params: cur.params,
                summary: cur,
                residual: res,
                iterations: iter,
            });
        }
        let f0 = merit(&cur, target);
        let step = cur.cov.solve([target.r - cur.mean_v, target.t - cur.mean_w]);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = TiltParams::new(cur.params.alpha + lambda * step[0], cur.params.beta + lambda * step[1]);
            if trial.alpha < 0.0 && trial.beta * sign > 0.0 {
                match summarize(v, w, trial, &opts.quad) {
                    Ok(s) if merit(&s, target) < f0 || residual(&s, target) <= tol => {
                        accepted = Some(s);
                        break;
                    }
                    Ok(_) => {}
                    Err(_) => out_of_domain += 1,
                }
            }
            lambda /= 2.0;
        }
        match accepted {
            Some(s) => cur = s,
            None => {
                let reason = if out_of_domain > opts.max_halvings / 2 {
                    format!(
                        "every damped step toward the target left the domain of phi ({out_of_domain} rejected trial tilts)"
                    )
                } else {
                    format!("line search exhausted {} halvings", opts.max_halvings)
                };
                return Err(no_solution(&cur, reason));
            }
        }
    }
    let res = residual(&cur, target);
    if res <= tol && cur.params.beta * sign > 0.0 {
        return Ok(TiltSolution {
            params: cur.params,
            summary: cur,
            residual: res,
            iterations: opts.max_iterations,
        });
    }
    Err(no_solution(&cur, format!("{} Newton iterations exhausted", opts.max_iterations)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaCurvePoint {
    pub alpha: f64,
    pub beta: Option<f64>,
    pub mean_w: Option<f64>,
    /// Why no `beta` satisfies `E V = R` at this `alpha`.
    pub error: Option<String>,
}

/// For each `alpha`, the `beta` with `E_{alpha,beta} V = R`.
pub fn beta_curve(v: &OrliczFunction, w: &OrliczFunction, r: f64, alpha_grid: &[f64]) -> Vec<BetaCurvePoint> {
    beta_curve_with(v, w, r, alpha_grid, &SolverOptions::default())
}

pub fn beta_curve_with(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    alpha_grid: &[f64],
    opts: &SolverOptions,
) -> Vec<BetaCurvePoint> {
    alpha_grid
        .par_iter()
        .map(|&alpha| match beta_for_alpha(v, w, r, alpha, opts) {
            Ok(s) => BetaCurvePoint {
                alpha,
                beta: Some(s.params.beta),
                mean_w: Some(s.mean_w),
                error: None,
            },
            Err(e) => BetaCurvePoint {
                alpha,
                beta: None,
                mean_w: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// One point of the constraint curve: root of `E_{alpha,beta} V = R` in `beta`.
pub fn beta_for_alpha(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<GibbsSummary, SolveError> {
    if !(alpha < 0.0) {
        return Err(SolveError::InvalidTarget(format!("alpha must be negative, got {alpha}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(SolveError::InvalidTarget(format!("R must be positive and finite, got {r}")));
    }
    let spec = &opts.quad;
    let tol = opts.rel_residual * r;
    let at = |beta: f64| summarize(v, w, TiltParams::new(alpha, beta), spec);
    let no_solution = |_: &GibbsSummary, reason: String| SolveError::ConstraintUnreachable { r, alpha, reason };
    let s0 = at(0.0)?;
    if (s0.mean_v - r).abs() <= tol {
        return Ok(s0);
    }
    // Bracket [lo, hi] in beta with mean_v(lo) < R < mean_v(hi).
    let (mut lo, mut hi, mut s_lo, mut s_hi);
    let scale = alpha.abs().max(1.0e-12);
    if s0.mean_v < r {
        lo = 0.0;
        s_lo = s0;
        let mut step = scale;
        loop {
            let cand = lo + step;
            match at(cand) {
                Ok(s) if s.mean_v >= r => {
                    hi = cand;
                    s_hi = s;
                    break;
                }
                Ok(s) => {
                    lo = cand;
                    s_lo = s;
                    step *= 2.0;
                    if step > 1.0e15 * scale {
                        return Err(no_solution(&s_lo, "E V stays below R as beta grows".into()));
                    }
                }
                Err(_) => {
                    // Locate the domain edge; if E V < R there, the constraint is unreachable.
                    let mut bad = cand;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + bad);
                        if mid <= lo || mid >= bad {
                            break;
                        }
                        match at(mid) {
                            Ok(s) if s.mean_v >= r => {
                                hi = mid;
                                s_hi = s;
                                return refine_beta(r, lo, hi, s_lo, s_hi, tol, &at);
                            }
                            Ok(s) => {
                                lo = mid;
                                s_lo = s;
                            }
                            Err(_) => bad = mid,
                        }
                    }
                    return Err(no_solution(
                        &s_lo,
                        format!(
                            "E V reaches only {:.6} < R at the domain edge beta ~ {:.6}",
                            s_lo.mean_v, s_lo.params.beta
                        ),
                    ));
                }
            }
        }
    } else {
        hi = 0.0;
        s_hi = s0;
        let mut step = scale;
        loop {
            let cand = hi - step;
            let s = at(cand)?;
            if s.mean_v <= r {
                lo = cand;
                s_lo = s;
                break;
            }
            hi = cand;
            s_hi = s;
            step *= 2.0;
            if step > 1.0e15 * scale {
                return Err(no_solution(&s_hi, "E V stays above R as beta decreases".into()));
            }
        }
    }
    refine_beta(r, lo, hi, s_lo, s_hi, tol, &at)
}

fn refine_beta(
    r: f64,
    mut lo: f64,
    mut hi: f64,
    s_lo: GibbsSummary,
    s_hi: GibbsSummary,
    tol: f64,
    at: &dyn Fn(f64) -> Result<GibbsSummary, GibbsError>,
) -> Result<GibbsSummary, SolveError> {
    let mut s = if (s_lo.mean_v - r).abs() < (s_hi.mean_v - r).abs() { s_lo } else { s_hi };
    for _ in 0..300 {
        let f = s.mean_v - r;
        if f.abs() <= tol {
            return Ok(s);
        }
        let beta = s.params.beta;
        if f > 0.0 {
            hi = beta;
        } else {
            lo = beta;
        }
        let newton = beta - f / s.cov.vw;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if next <= lo || next >= hi {
            break;
        }
        s = at(next)?;
    }
    if (s.mean_v - r).abs() <= tol {
        Ok(s)
    } else {
        Err(SolveError::ConstraintUnreachable {
            r,
            alpha: s.params.alpha,
            reason: format!("bracket collapsed with residual {:e}", (s.mean_v - r).abs()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TMax {
    pub value: f64,
    pub warning: Option<String>,
}

/// `W(V^{-1}(R))`, the right end of the admissible `t` range.
pub fn t_max(v: &OrliczFunction, w: &OrliczFunction, r: f64) -> TMax {
    let value = w.eval(v.inverse_nonneg(r));
    let verdict = classify_assumptions(v, w, 1.0e4);
    let warning = (verdict.verdict != Verdict::B).then(|| {
        format!(
            "V/W is classified {:?}, not B; the endpoint is computed but the deviation range it bounds is not guaranteed",
            verdict.verdict
        )
    });
    TMax { value, warning }
}
