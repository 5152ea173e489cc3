//! Closed-form asymptotic predictions: rate function, sharp deviation and
//! thin-shell probabilities, ball volume and the CLT variance.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::gibbs::{GibbsSummary, TiltParams};
use crate::orlicz::OrliczFunction;
use crate::solve::{alpha_star_summary, solve_tilt_with, SolveError, SolverOptions, Target, TiltSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("t = {t} is not on the requested side of m = {m}")]
    Branch { t: f64, m: f64 },
    #[error("thin shell needs both sides solved; upper: {}, lower: {}", upper.as_deref().unwrap_or("ok"), lower.as_deref().unwrap_or("ok"))]
    ThinShell {
        upper: Option<String>,
        lower: Option<String>,
    },
    #[error("V and W are linearly dependent under the tilt (det Sigma = {det:e}, Var V * Var W = {scale:e})")]
    Degenerate { det: f64, scale: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEvaluation {
    #[serde(rename = "I_Rt")]
    pub i_rt: f64,
    #[serde(rename = "I_Rm")]
    pub i_rm: f64,
    #[serde(rename = "J")]
    pub j: f64,
    /// `phi(alpha*, 0) - phi(alpha, beta) + (alpha - alpha*) R + beta t`.
    pub j_proof: f64,
    /// `sigma* |alpha*| / (|alpha| |beta| sqrt(det Sigma))`; absent at `t = m`.
    pub prefactor: Option<f64>,
    pub tilt: TiltSolution,
    pub tilt_star: GibbsSummary,
    #[serde(rename = "R")]
    pub r: f64,
    pub t: f64,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormulaPrediction {
    pub n: u64,
    pub exponent: f64,
    pub log_value: f64,
    pub value: f64,
    pub components: BTreeMap<String, f64>,
}

impl FormulaPrediction {
    fn new(n: u64, exponent: f64, log_value: f64, components: BTreeMap<String, f64>) -> Self {
        let value = if log_value > -700.0 { log_value.exp() } else { 0.0 };
        Self {
            n,
            exponent,
            log_value,
            value,
            components,
        }
    }
}

pub fn rate(v: &OrliczFunction, w: &OrliczFunction, r: f64, t: f64) -> Result<RateEvaluation, AsymptoticsError> {
    rate_with(v, w, r, t, &SolverOptions::default())
}

pub fn rate_with(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    t: f64,
    opts: &SolverOptions,
) -> Result<RateEvaluation, AsymptoticsError> {
    let target = Target::new(r, t)?;
    let star = alpha_star_summary(v, w, r, opts)?;
    let tilt = solve_tilt_with(v, w, target, opts)?;
    let TiltParams { alpha, beta } = tilt.params;
    let alpha_star = star.params.alpha;
    let phi = tilt.summary.phi;
    let i_rt = alpha * r + beta * t - phi;
    let i_rm = alpha_star * r - star.phi;
    let j_proof = star.phi - phi + (alpha - alpha_star) * r + beta * t;
    let prefactor = (beta != 0.0).then(|| {
        star.cov.vv.sqrt() * alpha_star.abs() / (alpha.abs() * beta.abs() * tilt.summary.cov.det().sqrt())
    });
    Ok(RateEvaluation {
        i_rt,
        i_rm,
        j: i_rt - i_rm,
        j_proof,
        prefactor,
        tilt,
        tilt_star: star,
        r,
        t,
        m: star.mean_w,
    })
}

/// Which tail of `(1/n) sum W` a prediction refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Upper,
    Lower,
}

fn check_n(n: u64) -> Result<(), AsymptoticsError> {
    if n == 0 {
        return Err(AsymptoticsError::Invalid("n must be at least 1".into()));
    }
    Ok(())
}

/// One-sided sharp deviation prediction from a solved rate.
pub fn one_sided_prediction(rate: &RateEvaluation, n: u64) -> FormulaPrediction {
    let TiltParams { alpha, beta } = rate.tilt.params;
    let alpha_star = rate.tilt_star.params.alpha;
    let sigma_star = rate.tilt_star.cov.vv.sqrt();
    let det = rate.tilt.summary.cov.det();
    let nf = n as f64;
    let ln_root = (2.0 * PI * nf).sqrt().ln();
    let prefactor = sigma_star * alpha_star.abs() / (alpha.abs() * beta.abs() * det.sqrt());
    // Reading the proof's sigma-bar^2 = sigma*^2 / |Sigma| literally.
    let literal = alpha_star.abs() * det.sqrt() / (alpha.abs() * beta.abs() * sigma_star);
    let exponent = nf * rate.j;
    let log_value = -exponent + prefactor.ln() - ln_root;
    let components = BTreeMap::from([
        ("J".to_string(), rate.j),
        ("prefactor".to_string(), prefactor),
        ("sqrt_2pi_n".to_string(), (2.0 * PI * nf).sqrt()),
        ("prefactor_literal".to_string(), literal),
        ("log_value_literal".to_string(), -exponent + literal.ln() - ln_root),
        ("alpha".to_string(), alpha),
        ("beta".to_string(), beta),
        ("alpha_star".to_string(), alpha_star),
        ("sigma_star".to_string(), sigma_star),
        ("det_sigma".to_string(), det),
    ]);
    FormulaPrediction::new(n, exponent, log_value, components)
}

/// Predicted `P[(1/n) sum W(X_i) >= t]` for `X` uniform on the ball, `t > m`.
pub fn deviation_formula(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    t: f64,
    n: u64,
) -> Result<FormulaPrediction, AsymptoticsError> {
    side_formula(v, w, r, t, n, Side::Upper, &SolverOptions::default())
}

/// Predicted `P[(1/n) sum W(X_i) <= t]`, `t < m`, using `|beta|`.
pub fn lower_deviation_formula(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    t: f64,
    n: u64,
) -> Result<FormulaPrediction, AsymptoticsError> {
    side_formula(v, w, r, t, n, Side::Lower, &SolverOptions::default())
}

pub fn side_formula(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    t: f64,
    n: u64,
    side: Side,
    opts: &SolverOptions,
) -> Result<FormulaPrediction, AsymptoticsError> {
    check_n(n)?;
    let m = alpha_star_summary(v, w, r, opts)?.mean_w;
    let on_side = match side {
        Side::Upper => t > m,
        Side::Lower => t < m,
    };
    // Equality within solver tolerance counts as t = m.
    if !on_side || (t - m).abs() <= 1.0e-10 * r.max(t) {
        return Err(AsymptoticsError::Branch { t, m });
    }
    Ok(one_sided_prediction(&rate_with(v, w, r, t, opts)?, n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThinShellPrediction {
    /// `P[|(1/n) sum W - m| >= delta]` from the dominant side (both on a tie).
    pub combined: FormulaPrediction,
    pub upper: FormulaPrediction,
    pub lower: FormulaPrediction,
    /// `None` on a tie.
    pub dominant: Option<Side>,
    pub m: f64,
}

const TIE_TOLERANCE: f64 = 1.0e-6;

pub fn thin_shell_formula(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    delta: f64,
    n: u64,
) -> Result<ThinShellPrediction, AsymptoticsError> {
    thin_shell_formula_with(v, w, r, delta, n, &SolverOptions::default())
}

pub fn thin_shell_formula_with(
    v: &OrliczFunction,
    w: &OrliczFunction,
    r: f64,
    delta: f64,
    n: u64,
    opts: &SolverOptions,
) -> Result<ThinShellPrediction, AsymptoticsError> {
    check_n(n)?;
    let m = alpha_star_summary(v, w, r, opts)?.mean_w;
    if !(delta > 0.0 && delta < m) {
        return Err(AsymptoticsError::Invalid(format!("delta must lie in (0, m = {m}), got {delta}")));
    }
    let upper = side_formula(v, w, r, m + delta, n, Side::Upper, opts);
    let lower = side_formula(v, w, r, m - delta, n, Side::Lower, opts);
    let (upper, lower) = match (upper, lower) {
        (Ok(u), Ok(l)) => (u, l),
        (u, l) => {
            return Err(AsymptoticsError::ThinShell {
                upper: u.err().map(|e| e.to_string()),
                lower: l.err().map(|e| e.to_string()),
            })
        }
    };
    let (j_plus, j_minus) = (upper.components["J"], lower.components["J"]);
    let dominant = if (j_plus - j_minus).abs() <= TIE_TOLERANCE {
        None
    } else if j_plus < j_minus {
        Some(Side::Upper)
    } else {
        Some(Side::Lower)
    };
    let (log_value, exponent) = match dominant {
        Some(Side::Upper) => (upper.log_value, upper.exponent),
        Some(Side::Lower) => (lower.log_value, lower.exponent),
        None => (log_add(upper.log_value, lower.log_value), upper.exponent.min(lower.exponent)),
    };
    let components = BTreeMap::from([
        ("J_plus".to_string(), j_plus),
        ("J_minus".to_string(), j_minus),
        ("log_value_upper".to_string(), upper.log_value),
        ("log_value_lower".to_string(), lower.log_value),
        ("log_value_both_sides".to_string(), log_add(upper.log_value, lower.log_value)),
    ]);
    Ok(ThinShellPrediction {
        combined: FormulaPrediction::new(n, exponent, log_value, components),
        upper,
        lower,
        dominant,
        m,
    })
}

fn log_add(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Leading-order `ln vol_n` of `{x in R^n : sum V(x_i) <= nR}`.
pub fn volume_asymptotic(v: &OrliczFunction, r: f64, n: u64) -> Result<FormulaPrediction, AsymptoticsError> {
    volume_asymptotic_with(v, r, n, &SolverOptions::default())
}

pub fn volume_asymptotic_with(
    v: &OrliczFunction,
    r: f64,
    n: u64,
    opts: &SolverOptions,
) -> Result<FormulaPrediction, AsymptoticsError> {
    check_n(n)?;
    let star = alpha_star_summary(v, v, r, opts)?;
    let alpha_star = star.params.alpha;
    let sigma_star = star.cov.vv.sqrt();
    let nf = n as f64;
    let exponent = nf * (star.phi - alpha_star * r);
    let ln_denominator = ((2.0 * PI * nf).sqrt() * sigma_star * alpha_star.abs()).ln();
    let components = BTreeMap::from([
        ("alpha_star".to_string(), alpha_star),
        ("log_z_star".to_string(), star.phi),
        ("sigma_star".to_string(), sigma_star),
        ("sqrt_2pi_n".to_string(), (2.0 * PI * nf).sqrt()),
    ]);
    Ok(FormulaPrediction::new(n, exponent, exponent - ln_denominator, components))
}

/// Variance of the Gaussian limit of `(1/sqrt n) sum (W(X_i) - m)`:
/// `det Sigma / Var V` at `(alpha*, 0)`.
pub fn clt_sigma(v: &OrliczFunction, w: &OrliczFunction, r: f64) -> Result<f64, AsymptoticsError> {
    let star = alpha_star_summary(v, w, r, &SolverOptions::default())?;
    let cov = star.cov;
    let det = cov.det();
    let scale = cov.vv * cov.ww;
    if det <= 1.0e-14 * scale {
        return Err(AsymptoticsError::Degenerate { det, scale });
    }
    Ok(cov.conditional_ww())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(expr: &str) -> OrliczFunction {
        OrliczFunction::parse(expr, true).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn rate_vanishes_at_m() {
        let r = rate(&f("x^2"), &f("x^4"), 1.0, 3.0).unwrap();
        assert!(r.j.abs() < 1.0e-12);
        assert!(r.prefactor.is_none());
    }

    #[test]
    fn rate_exponent_identity_and_monotonicity() {
        let (v, w) = (f("x^4"), f("x^2"));
        let mut last = 0.0;
        for t in [0.75, 0.85, 0.95] {
            let r = rate(&v, &w, 1.0, t).unwrap();
            assert!(r.j > last);
            assert!(rel(r.j, r.j_proof) < 1.0e-10);
            last = r.j;
        }
        let (v, w) = (f("x^2"), f("x^4"));
        let mut last = 0.0;
        for t in [2.8, 2.5, 2.2] {
            let r = rate(&v, &w, 1.0, t).unwrap();
            assert!(r.j > last);
            assert!(rel(r.j, r.j_proof) < 1.0e-10);
            last = r.j;
        }
    }

    #[test]
    fn deviation_scaling_in_n() {
        let (v, w) = (f("x^4"), f("x^2"));
        let a = deviation_formula(&v, &w, 1.0, 0.85, 50).unwrap();
        let b = deviation_formula(&v, &w, 1.0, 0.85, 100).unwrap();
        assert!(rel(b.exponent, 2.0 * a.exponent) < 1.0e-14);
        let shrink = (a.log_value + a.exponent) - (b.log_value + b.exponent);
        assert!((shrink - 0.5 * 2f64.ln()).abs() < 1.0e-12);
    }

    #[test]
    fn deviation_branch_errors() {
        let (v, w) = (f("x^2"), f("x^4"));
        assert!(matches!(
            deviation_formula(&v, &w, 1.0, 3.0, 100),
            Err(AsymptoticsError::Branch { .. })
        ));
        assert!(matches!(
            deviation_formula(&v, &w, 1.0, 2.5, 100),
            Err(AsymptoticsError::Branch { .. })
        ));
        assert!(matches!(
            deviation_formula(&v, &w, 1.0, 3.5, 100),
            Err(AsymptoticsError::Solve(SolveError::NoSolution { .. }))
        ));
        assert!(lower_deviation_formula(&v, &w, 1.0, 2.5, 100).unwrap().value > 0.0);
    }

    #[test]
    fn thin_shell_reports_failing_side() {
        match thin_shell_formula(&f("x^2"), &f("x^4"), 1.0, 0.5, 100) {
            Err(AsymptoticsError::ThinShell { upper, lower }) => {
                assert!(upper.is_some());
                assert!(lower.is_none());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn thin_shell_dominance() {
        let (v, w) = (f("x^4"), f("x^2"));
        let p = thin_shell_formula(&v, &w, 1.0, 0.08, 100).unwrap();
        let (jp, jm) = (p.upper.components["J"], p.lower.components["J"]);
        let side = if jp < jm { Side::Upper } else { Side::Lower };
        assert_eq!(p.dominant, Some(side));
        let dom = if side == Side::Upper { &p.upper } else { &p.lower };
        assert_eq!(p.combined.log_value, dom.log_value);
        let small = thin_shell_formula(&v, &w, 1.0, 1.0e-3, 100).unwrap();
        assert!(small.upper.components["J"] < 1.0e-5 && small.lower.components["J"] < 1.0e-5);
    }

    fn ln_ball_volume(n: u64) -> f64 {
        let nf = n as f64;
        0.5 * nf * (PI * nf).ln() - statrs::function::gamma::ln_gamma(nf / 2.0 + 1.0)
    }

    #[test]
    fn euclidean_volume() {
        let v = f("x^2");
        let mut last = f64::INFINITY;
        for n in [20, 50, 100, 200] {
            let p = volume_asymptotic(&v, 1.0, n).unwrap();
            let err = (p.log_value - ln_ball_volume(n)).exp_m1().abs();
            assert!(err < last);
            last = err;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn clt_variance() {
        assert!(rel(clt_sigma(&f("x^2"), &f("x^4"), 1.0).unwrap(), 24.0) < 1.0e-9);
        assert!(rel(clt_sigma(&f("x^2"), &f("x^4"), 2.0).unwrap(), 24.0 * 16.0) < 1.0e-9);
        assert!(matches!(
            clt_sigma(&f("x^2"), &f("x^2"), 1.0),
            Err(AsymptoticsError::Degenerate { .. })
        ));
    }
}
