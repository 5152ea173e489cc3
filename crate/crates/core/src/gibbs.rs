//! Gibbs measures `mu_{a,b}(dx) ∝ e^{aV(x) + bW(x)} dx` on the real line.
//!
//! `phi(a, b) = ln Z_{a,b}` is the log-Laplace transform of Lebesgue measure
//! pushed through `(V, W)`. Its gradient is the mean vector `(E V, E W)` and
//! its Hessian the covariance matrix of `(V, W)` under `mu_{a,b}`; both are
//! computed here by direct quadrature, not by differencing `phi`.

use serde::Serialize;
use thiserror::Error;

use crate::orlicz::{classify_assumptions, OrliczFunction, Verdict};
use crate::quad::{integrate_half_line, integrate_half_line_to, merged_breakpoints, Norm, QuadError, QuadratureSpec, TiltExponent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GibbsError {
    #[error("tilt (alpha = {alpha}, beta = {beta}) is outside the domain of phi: {source}")]
    Domain {
        alpha: f64,
        beta: f64,
        #[source]
        source: QuadError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltParams {
    pub alpha: f64,
    pub beta: f64,
}

impl TiltParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

/// Symmetric 2x2 covariance of `(V, W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Covariance {
    pub vv: f64,
    pub vw: f64,
    pub ww: f64,
}

impl Covariance {
    pub fn det(&self) -> f64 {
        self.vv * self.ww - self.vw * self.vw
    }

    /// `Var(W | V)` in the Gaussian sense: `det / vv`.
    pub fn conditional_ww(&self) -> f64 {
        self.det() / self.vv
    }

    pub fn correlation(&self) -> f64 {
        self.vw / (self.vv * self.ww).sqrt()
    }

    /// Solves `cov * x = rhs`.
    pub fn solve(&self, rhs: [f64; 2]) -> [f64; 2] {
        let det = self.det();
        [
            (self.ww * rhs[0] - self.vw * rhs[1]) / det,
            (self.vv * rhs[1] - self.vw * rhs[0]) / det,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GibbsSummary {
    pub params: TiltParams,
    /// Partition function; may be `inf` when only `phi` is representable.
    pub z: f64,
    pub phi: f64,
    pub mean_v: f64,
    pub mean_w: f64,
    pub cov: Covariance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainCheck {
    pub in_domain: bool,
    /// Whether `a < 0` and either `b <= 0` or `b < |a| liminf V/W` held for
    /// the estimated liminf; this sufficient condition is informative only.
    pub sufficient_condition: bool,
    pub diagnostic: String,
}

/// Quadrature settings used when a caller does not supply any.
pub fn default_spec() -> QuadratureSpec {
    QuadratureSpec::default().with_rel_tol(1.0e-12)
}

/// Decides membership in the domain of `phi` by probing integrability of
/// `e^{aV + bW}` directly.
pub fn in_domain(
    v: &OrliczFunction,
    w: &OrliczFunction,
    params: TiltParams,
    spec: &QuadratureSpec,
) -> DomainCheck {
    let TiltParams { alpha, beta } = params;
    let verdict = classify_assumptions(v, w, 1.0e4);
    let sufficient_condition = alpha < 0.0
        && match verdict.verdict {
            Verdict::B => true,
            _ => beta <= 0.0 || beta < alpha.abs() * verdict.liminf_estimate,
        };
    let probe = crate::quad::tilted_moment(v, w, alpha, beta, crate::quad::Weight::One, spec);
    let (in_domain, outcome) = match &probe {
        Ok(r) => (true, format!("Z converged (ln Z = {:.6})", r.log_value)),
        Err(e) => (false, e.to_string()),
    };
    let liminf = if verdict.liminf_estimate.is_infinite() {
        "inf".to_string()
    } else {
        format!("{:.6e}", verdict.liminf_estimate)
    };
    DomainCheck {
        in_domain,
        sufficient_condition,
        diagnostic: format!(
            "{outcome}; sufficient condition beta < |alpha| * liminf V/W (liminf ~ {liminf}) {}",
            if sufficient_condition { "holds" } else { "does not hold" }
        ),
    }
}

/// Partition function, `phi`, mean vector and covariance at one tilt.
///
/// Second moments are computed around the first-pass means, which avoids the
/// cancellation in `E[V^2] - (E V)^2` when `V` and `W` are nearly collinear.
pub fn summarize(
    v: &OrliczFunction,
    w: &OrliczFunction,
    params: TiltParams,
    spec: &QuadratureSpec,
) -> Result<GibbsSummary, GibbsError> {
    let TiltParams { alpha, beta } = params;
    let domain = |source| GibbsError::Domain { alpha, beta, source };
    let exponent = TiltExponent::new(alpha, v, beta, w);
    let nodes = merged_breakpoints(v, w);
    let first = integrate_half_line(
        |x| exponent.eval(x),
        |x| [1.0, v.eval(x), w.eval(x)],
        &nodes,
        [Norm::Own; 3],
        spec,
        None,
    )
    .map_err(domain)?;
    let z_scaled = first.values[0];
    let mean_v = first.values[1] / z_scaled;
    let mean_w = first.values[2] / z_scaled;
    let second = integrate_half_line(
        |x| exponent.eval(x),
        |x| {
            let dv = v.eval(x) - mean_v;
            let dw = w.eval(x) - mean_w;
            [1.0, dv * dv, dw * dw, dv * dw]
        },
        &nodes,
        [Norm::Own, Norm::Own, Norm::Own, Norm::SumOf(1, 2)],
        spec,
        None,
    )
    .map_err(domain)?;
    // Both passes share the exponent scan, hence the same shift.
    let z2 = second.values[0];
    let cov = Covariance {
        vv: second.values[1] / z2,
        vw: second.values[3] / z2,
        ww: second.values[2] / z2,
    };
    let phi = first.ln_value(0);
    Ok(GibbsSummary {
        params,
        z: phi.exp(),
        phi,
        mean_v,
        mean_w,
        cov,
    })
}

/// `phi(a, b) = ln Z_{a,b}` alone.
pub fn log_partition(
    v: &OrliczFunction,
    w: &OrliczFunction,
    params: TiltParams,
    spec: &QuadratureSpec,
) -> Result<f64, GibbsError> {
    let TiltParams { alpha, beta } = params;
    crate::quad::tilted_moment(v, w, alpha, beta, crate::quad::Weight::One, spec)
        .map(|r| r.log_value)
        .map_err(|source| GibbsError::Domain { alpha, beta, source })
}

/// Modulus of the characteristic function of `(V(X), W(X))`, `X ~ mu_{a,b}`,
/// at frequency `(t, s)`.
pub fn char_modulus(
    v: &OrliczFunction,
    w: &OrliczFunction,
    params: TiltParams,
    t: f64,
    s: f64,
    spec: &QuadratureSpec,
) -> Result<f64, GibbsError> {
    let TiltParams { alpha, beta } = params;
    if t == 0.0 && s == 0.0 {
        // Still probe the domain so that invalid tilts are reported.
        log_partition(v, w, params, spec)?;
        return Ok(1.0);
    }
    let domain = |source| GibbsError::Domain { alpha, beta, source };
    let whole = crate::quad::tilted_moment(v, w, alpha, beta, crate::quad::Weight::One, spec).map_err(domain)?;
    let ln_z = whole.log_value;
    let exponent = TiltExponent::new(alpha, v, beta, w);
    let nodes = merged_breakpoints(v, w);
    let phase = |x: f64| t * v.eval(x) + s * w.eval(x);
    let osc_spec = QuadratureSpec {
        rel_tol: spec.rel_tol.max(1.0e-8),
        max_subdivisions: spec.max_subdivisions.max(200_000),
        ..*spec
    };

    // Past `cap` the tail is replaced by one integration by parts,
    // int_X^inf g e^{i psi} ~ i g(X) e^{i psi(X)} / psi'(X).
    let density = |x: f64| (exponent.eval(x) - ln_z).exp();
    let d_phase = |x: f64| t * v.deriv1(x) + s * w.deriv1(x);
    let remainder = |x: f64| {
        let (d1, d2) = (d_phase(x), t * v.deriv2(x) + s * w.deriv2(x));
        let d_log = alpha * v.deriv1(x) + beta * w.deriv1(x);
        density(x) * (d_log.abs() + (d2 / d1).abs()) / (d1 * d1)
    };
    const CAP_PROBES: usize = 4096;
    let truncation = whole.truncation_point;
    let mut cap = truncation;
    for k in (1..=CAP_PROBES).rev() {
        let x = truncation * k as f64 / CAP_PROBES as f64;
        let r = remainder(x);
        if !(r.is_finite() && r <= 1.0e-3 * osc_spec.rel_tol) {
            break;
        }
        cap = x;
    }

    let r = integrate_half_line_to(
        |x| exponent.eval(x),
        |x| {
            let p = phase(x);
            [1.0, p.cos(), p.sin()]
        },
        &nodes,
        [Norm::Own, Norm::Of(0), Norm::Of(0)],
        &osc_spec,
        Some(&phase),
        Some(cap),
    )
    .map_err(domain)?;
    let scale = (r.log_shift - ln_z).exp();
    let (mut re, mut im) = (r.values[1] * scale, r.values[2] * scale);
    if cap < truncation {
        let (g, d1, p) = (density(cap), d_phase(cap), phase(cap));
        re -= 2.0 * g * p.sin() / d1;
        im += 2.0 * g * p.cos() / d1;
    }
    Ok(re.hypot(im))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CramerPoint {
    pub t: f64,
    pub s: f64,
    pub modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CramerReport {
    pub params: TiltParams,
    pub points: Vec<CramerPoint>,
    pub max_modulus: f64,
}

impl CramerReport {
    pub fn argmax(&self) -> Option<&CramerPoint> {
        self.points
            .iter()
            .max_by(|a, b| a.modulus.total_cmp(&b.modulus))
    }
}

/// Frequencies with `10 <= max(|t|, |s|) <= 1000`: `radii` geometric sup-norm
/// levels times eight directions covering a half-plane (the modulus is even in
/// `(t, s)`).
pub fn cramer_grid(radii: usize) -> Vec<(f64, f64)> {
    const DIRECTIONS: [(f64, f64); 8] = [
        (1.0, 0.0),
        (1.0, 0.5),
        (1.0, 1.0),
        (0.5, 1.0),
        (0.0, 1.0),
        (-0.5, 1.0),
        (-1.0, 1.0),
        (-1.0, 0.5),
    ];
    crate::orlicz::geometric_grid(10.0, 1.0e3, radii.max(2))
        .into_iter()
        .flat_map(|r| DIRECTIONS.iter().map(move |&(a, b)| (r * a, r * b)))
        .collect()
}

/// Largest characteristic-function modulus over `grid`, a numerical stand-in
/// for the Cramér condition `limsup |phi(t, s)| < 1`.
pub fn cramer_probe(
    v: &OrliczFunction,
    w: &OrliczFunction,
    params: TiltParams,
    grid: &[(f64, f64)],
    spec: &QuadratureSpec,
) -> Result<CramerReport, GibbsError> {
    use rayon::prelude::*;
    let points = grid
        .par_iter()
        .map(|&(t, s)| {
            char_modulus(v, w, params, t, s, spec).map(|modulus| CramerPoint { t, s, modulus })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let max_modulus = points.iter().map(|p| p.modulus).fold(0.0, f64::max);
    Ok(CramerReport {
        params,
        points,
        max_modulus,
    })
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
    fn domain_examples() {
        let spec = default_spec();
        let (v, w) = (f("x^2"), f("x^4"));
        let ok = in_domain(&v, &w, TiltParams::new(-1.0, 0.0), &spec);
        assert!(ok.in_domain && ok.sufficient_condition, "{ok:?}");
        let bad = in_domain(&v, &w, TiltParams::new(-1.0, 0.1), &spec);
        assert!(!bad.in_domain && !bad.sufficient_condition, "{bad:?}");
        let quartic = in_domain(&f("x^4 + x^2"), &w, TiltParams::new(-1.0, 0.5), &spec);
        assert!(quartic.in_domain && quartic.sufficient_condition, "{quartic:?}");
    }

    #[test]
    fn gaussian_summary() {
        let s = summarize(&f("x^2"), &f("x^4"), TiltParams::new(-0.5, 0.0), &default_spec()).unwrap();
        let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
        assert!(rel(s.z, sqrt_2pi) < 1.0e-11);
        assert!(rel(s.phi, sqrt_2pi.ln()) < 1.0e-11);
        assert!(rel(s.mean_v, 1.0) < 1.0e-11);
        assert!(rel(s.mean_w, 3.0) < 1.0e-11);
        // E X^4 - 1 = 2, E X^6 - 3 = 12, E X^8 - 9 = 96
        assert!(rel(s.cov.vv, 2.0) < 1.0e-11);
        assert!(rel(s.cov.vw, 12.0) < 1.0e-11);
        assert!(rel(s.cov.ww, 96.0) < 1.0e-11);
        let half = summarize(&f("x^2"), &f("x^4"), TiltParams::new(-1.0, 0.0), &default_spec()).unwrap();
        assert!(rel(half.mean_v, 0.5) < 1.0e-11);
    }

    #[test]
    fn generalized_power_normalizer() {
        // Z for e^{-|x|^p / p} is 2 p^{1/p} Gamma(1 + 1/p).
        for (p, gamma) in [(0.5, 2.0), (1.5, 0.902_745_292_950_933_6), (3.0, 0.892_979_511_569_249_2)] {
            let vp = OrliczFunction::from_terms(
                vec![crate::orlicz::Term {
                    coef: 1.0 / p,
                    atom: crate::orlicz::Atom::AbsPower(p),
                }],
                true,
            )
            .unwrap();
            let s = summarize(&vp, &f("x^2"), TiltParams::new(-1.0, 0.0), &default_spec()).unwrap();
            let expected = 2.0 * p.powf(1.0 / p) * gamma;
            assert!(rel(s.z, expected) < 1.0e-10, "p = {p}: {} vs {expected}", s.z);
        }
    }

    #[test]
    fn summary_outside_domain_errors() {
        let r = summarize(&f("x^2"), &f("x^4"), TiltParams::new(-1.0, 0.1), &default_spec());
        assert!(matches!(r, Err(GibbsError::Domain { .. })));
    }

    fn phi(v: &OrliczFunction, w: &OrliczFunction, a: f64, b: f64) -> f64 {
        log_partition(v, w, TiltParams::new(a, b), &default_spec()).unwrap()
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let cases = [
            ("x^2", "x^4", -0.5, -0.05),
            ("x^2", "x^4", -0.7, -0.05),
            ("x^4 + x^2", "x^4", -1.0, 0.4),
            ("x^4", "x^2", -1.7, 3.5),
            ("x^2", "|x|^1.5", -1.0, 0.2),
        ];
        for (ve, we, a, b) in cases {
            let (v, w) = (f(ve), f(we));
            let s = summarize(&v, &w, TiltParams::new(a, b), &default_spec()).unwrap();
            let h = 1.0e-5;
            let ga = (phi(&v, &w, a + h, b) - phi(&v, &w, a - h, b)) / (2.0 * h);
            let gb = (phi(&v, &w, a, b + h) - phi(&v, &w, a, b - h)) / (2.0 * h);
            assert!(rel(ga, s.mean_v) < 1.0e-6, "{ve},{we}: {ga} vs {}", s.mean_v);
            assert!(rel(gb, s.mean_w) < 1.0e-6, "{ve},{we}: {gb} vs {}", s.mean_w);
            let h = 1.0e-3;
            let p0 = phi(&v, &w, a, b);
            let haa = (phi(&v, &w, a + h, b) - 2.0 * p0 + phi(&v, &w, a - h, b)) / (h * h);
            let hbb = (phi(&v, &w, a, b + h) - 2.0 * p0 + phi(&v, &w, a, b - h)) / (h * h);
            let hab = (phi(&v, &w, a + h, b + h) - phi(&v, &w, a + h, b - h) - phi(&v, &w, a - h, b + h)
                + phi(&v, &w, a - h, b - h))
                / (4.0 * h * h);
            assert!(rel(haa, s.cov.vv) < 1.0e-4, "{ve},{we}: {haa} vs {}", s.cov.vv);
            assert!(rel(hbb, s.cov.ww) < 1.0e-4, "{ve},{we}: {hbb} vs {}", s.cov.ww);
            assert!(rel(hab, s.cov.vw) < 1.0e-4, "{ve},{we}: {hab} vs {}", s.cov.vw);
        }
    }

    #[test]
    fn means_increase_along_each_axis() {
        let (v, w) = (f("x^4 + x^2"), f("x^4"));
        let spec = default_spec();
        let betas = [-0.5, -0.1, 0.0, 0.3, 0.6, 0.9];
        let means: Vec<_> = betas
            .iter()
            .map(|&b| summarize(&v, &w, TiltParams::new(-1.0, b), &spec).unwrap())
            .collect();
        for pair in means.windows(2) {
            assert!(pair[0].mean_v < pair[1].mean_v);
            assert!(pair[0].mean_w < pair[1].mean_w);
        }
        let alphas = [-3.0, -2.0, -1.5, -1.0, -0.8];
        let means: Vec<_> = alphas
            .iter()
            .map(|&a| summarize(&v, &w, TiltParams::new(a, 0.2), &spec).unwrap())
            .collect();
        for pair in means.windows(2) {
            assert!(pair[0].mean_v < pair[1].mean_v);
        }
    }

    #[test]
    fn covariance_positive_definite_on_grid() {
        let spec = default_spec();
        for (ve, we) in [("x^2", "x^4"), ("x^4 + x^2", "x^4"), ("x^4", "x^2")] {
            let (v, w) = (f(ve), f(we));
            for a in [-3.0, -1.0, -0.3] {
                for b in [-0.5, -0.1, 0.0, 0.1] {
                    let p = TiltParams::new(a, b);
                    if !in_domain(&v, &w, p, &spec).in_domain {
                        continue;
                    }
                    let s = summarize(&v, &w, p, &spec).unwrap();
                    assert!(s.cov.vv > 0.0 && s.cov.det() > 0.0, "{ve},{we} at {p:?}: {:?}", s.cov);
                }
            }
        }
    }

    #[test]
    fn characteristic_function_modulus() {
        let spec = default_spec();
        let (v, w) = (f("x^2"), f("x^4"));
        let p = TiltParams::new(-0.5, 0.0);
        assert_eq!(char_modulus(&v, &w, p, 0.0, 0.0, &spec).unwrap(), 1.0);
        // For X ~ N(0,1): |E e^{itX^2}| = (1 + 4t^2)^{-1/4}.
        for t in [0.3, 2.0, 50.0] {
            let m = char_modulus(&v, &w, p, t, 0.0, &spec).unwrap();
            let exact = (1.0 + 4.0 * t * t).powf(-0.25);
            assert!((m - exact).abs() < 1.0e-7, "t = {t}: {m} vs {exact}");
        }
        assert!(char_modulus(&v, &w, p, 50.0, 0.0, &spec).unwrap() < 0.99);
        for (t, s) in [(3.0, -1.0), (-20.0, 7.0), (0.0, 300.0)] {
            assert!(char_modulus(&v, &w, p, t, s, &spec).unwrap() <= 1.0 + 1.0e-8);
        }
        assert!(char_modulus(&v, &w, TiltParams::new(-0.5, 0.1), 1.0, 1.0, &spec).is_err());
    }
}
