//! Adaptive Gauss–Kronrod quadrature over the real line for even integrands.
//!
//! Everything here integrates on `[0, inf)` and doubles. The infinite range is
//! truncated at the first doubling point `T = 2^k` beyond which the integrand
//! magnitude stays below `tail_cutoff_ratio` times its sampled peak; the scan
//! that finds `T` continues out to `1e300` so that integrands which dip and
//! then grow again are reported as [`QuadError::NonIntegrable`].
//!
//! Tilted integrands `w(x) e^{aV(x) + bW(x)}` are evaluated with the exponent
//! shifted by its sampled maximum, so results are carried as a scaled value
//! plus a log shift and never overflow.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::orlicz::{Atom, OrliczFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integrand is not integrable (no decay below cutoff, probe reached x = {at:e})")]
    NonIntegrable { at: f64 },
    #[error("tolerance not met after {subdivisions} subdivisions (value {value:e}, error {est_error:e})")]
    ToleranceNotMet {
        value: f64,
        est_error: f64,
        subdivisions: usize,
    },
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    pub tail_cutoff_ratio: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1.0e-10,
            abs_tol: 1.0e-300,
            max_subdivisions: 2000,
            tail_cutoff_ratio: 1.0e-16,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(self, rel_tol: f64) -> Self {
        Self { rel_tol, ..self }
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1.0e-4) {
            return Err(QuadError::InvalidSpec(format!(
                "rel_tol {} outside (0, 1e-4]",
                self.rel_tol
            )));
        }
        if self.max_subdivisions < 50 {
            return Err(QuadError::InvalidSpec(format!(
                "max_subdivisions {} below 50",
                self.max_subdivisions
            )));
        }
        if !(self.abs_tol >= 0.0) {
            return Err(QuadError::InvalidSpec("abs_tol must be nonnegative".into()));
        }
        if !(self.tail_cutoff_ratio > 0.0 && self.tail_cutoff_ratio < 1.0) {
            return Err(QuadError::InvalidSpec(
                "tail_cutoff_ratio must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    pub est_error: f64,
    pub truncation_point: f64,
    pub subdivisions_used: usize,
    /// `ln value`, accurate even when `value` over- or underflows.
    pub log_value: f64,
}

/// Weight multiplying the tilt in [`tilted_moment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Weight {
    One,
    V,
    W,
    V2,
    W2,
    VW,
}

impl Weight {
    fn apply(self, v: f64, w: f64) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::V => v,
            Weight::W => w,
            Weight::V2 => v * v,
            Weight::W2 => w * w,
            Weight::VW => v * w,
        }
    }
}

/// `aV + bW` with identical atoms merged, so cancellations are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltExponent {
    terms: Vec<(f64, Atom)>,
}

impl TiltExponent {
    pub fn new(alpha: f64, v: &OrliczFunction, beta: f64, w: &OrliczFunction) -> Self {
        let mut terms: Vec<(f64, Atom)> = Vec::new();
        let scaled = v
            .terms()
            .iter()
            .map(|t| (alpha * t.coef, t.atom))
            .chain(w.terms().iter().map(|t| (beta * t.coef, t.atom)));
        for (c, atom) in scaled {
            match terms.iter_mut().find(|(_, a)| *a == atom) {
                Some(entry) => entry.0 += c,
                None => terms.push((c, atom)),
            }
        }
        terms.retain(|(c, _)| *c != 0.0);
        Self { terms }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = x.abs();
        let mut acc = 0.0;
        for &(c, atom) in &self.terms {
            let a = atom_value(atom, u);
            // 0 * inf would poison the sum; the term is absent then.
            if a != 0.0 {
                acc += c * a;
            }
        }
        acc
    }
}

fn atom_value(atom: Atom, u: f64) -> f64 {
    match atom {
        Atom::EvenPower(k) => u.powi(k as i32),
        Atom::AbsPower(p) => u.powf(p),
        Atom::CoshMinusOne => {
            let s = (0.5 * u).sinh();
            2.0 * s * s
        }
        Atom::ExpPowerMinusOne(p) => u.powf(p).exp_m1(),
    }
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: [f64; K],
    priority: f64,
}

impl<const K: usize> PartialEq for Segment<K> {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl<const K: usize> Eq for Segment<K> {}
impl<const K: usize> PartialOrd for Segment<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for Segment<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

/// One Gauss–Kronrod 7/15 step on `[a, b]` for a vector integrand.
pub(crate) fn gk15<const K: usize>(f: &impl Fn(f64) -> [f64; K], a: f64, b: f64) -> ([f64; K], [f64; K]) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut fv1 = [[0.0; K]; 7];
    let mut fv2 = [[0.0; K]; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        fv1[j] = f(center - dx);
        fv2[j] = f(center + dx);
    }
    let mut value = [0.0; K];
    let mut error = [0.0; K];
    for k in 0..K {
        let mut kron = WGK[7] * fc[k];
        let mut gauss = WG[3] * fc[k];
        let mut resabs = kron.abs();
        for j in 0..7 {
            let s = fv1[j][k] + fv2[j][k];
            kron += WGK[j] * s;
            resabs += WGK[j] * (fv1[j][k].abs() + fv2[j][k].abs());
            if j % 2 == 1 {
                gauss += WG[j / 2] * s;
            }
        }
        let mean = 0.5 * kron;
        let mut resasc = WGK[7] * (fc[k] - mean).abs();
        for j in 0..7 {
            resasc += WGK[j] * ((fv1[j][k] - mean).abs() + (fv2[j][k] - mean).abs());
        }
        let kron_v = kron * half;
        let resabs = resabs * half.abs();
        let resasc = resasc * half.abs();
        let mut err = ((kron - gauss) * half).abs();
        if resasc != 0.0 && err != 0.0 {
            err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
        }
        value[k] = kron_v;
        error[k] = err;
    }
    (value, error)
}

/// How a component's error is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Norm {
    /// Relative to the component's own value.
    Own,
    /// Relative to the value of another component (for sign-changing ones).
    Of(usize),
    /// Relative to the sum of two other components' magnitudes.
    SumOf(usize, usize),
}

/// Result of [`integrate_half_line`]: true values are `values * e^{log_shift}`,
/// already doubled to cover the whole real line.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LineIntegral<const K: usize> {
    pub values: [f64; K],
    pub errors: [f64; K],
    pub log_shift: f64,
    pub truncation_point: f64,
    pub subdivisions: usize,
}

impl<const K: usize> LineIntegral<K> {
    pub fn ln_value(&self, k: usize) -> f64 {
        self.values[k].ln() + self.log_shift
    }

    pub fn result(&self, k: usize) -> QuadResult {
        let scale = self.log_shift.exp();
        QuadResult {
            value: self.values[k] * scale,
            est_error: self.errors[k] * scale,
            truncation_point: self.truncation_point,
            subdivisions_used: self.subdivisions,
            log_value: self.ln_value(k),
        }
    }
}

const SCAN_MIN_EXP: i32 = -60;
const SCAN_MAX_EXP: i32 = 996;

/// Location of the truncation point and the exponent shift.
struct TailScan {
    truncation: f64,
    log_shift: f64,
    /// Doubling points below this carry negligible mass and are merged.
    first_node: f64,
}

fn scan_tail(
    log_env: &impl Fn(f64) -> f64,
    log_mag: &impl Fn(f64) -> f64,
    cutoff: f64,
) -> Result<TailScan, QuadError> {
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity((SCAN_MAX_EXP - SCAN_MIN_EXP + 1) as usize);
    let mut shift = log_env(0.0);
    if !shift.is_finite() {
        shift = f64::NEG_INFINITY;
    }
    for k in SCAN_MIN_EXP..=SCAN_MAX_EXP {
        let x = 2f64.powi(k);
        let env = log_env(x);
        if env == f64::INFINITY {
            return Err(QuadError::NonIntegrable { at: x });
        }
        let mag = log_mag(x);
        // Overflowing weights leave the far region undecided; stop probing.
        if env.is_nan() || mag.is_nan() || mag == f64::INFINITY {
            break;
        }
        let lg = env + mag;
        if env.is_finite() {
            shift = shift.max(env);
        }
        samples.push((x, lg));
    }
    let peak = samples
        .iter()
        .map(|&(_, lg)| lg)
        .fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        // Identically zero integrand (or unresolvable).
        return Ok(TailScan {
            truncation: 1.0,
            log_shift: 0.0,
            first_node: 1.0,
        });
    }
    let threshold = peak + cutoff.ln();
    let last_high = samples
        .iter()
        .rposition(|&(_, lg)| lg >= threshold)
        .expect("peak sample is above threshold");
    if last_high + 1 >= samples.len() {
        return Err(QuadError::NonIntegrable {
            at: samples[last_high].0,
        });
    }
    let truncation = samples[last_high + 1].0;
    let first_high = samples
        .iter()
        .position(|&(_, lg)| lg >= threshold - 40.0)
        .unwrap_or(0);
    let first_node = samples[first_high.saturating_sub(1)].0;
    Ok(TailScan {
        truncation,
        log_shift: if shift.is_finite() { shift } else { 0.0 },
        first_node,
    })
}

/// Adds points so that the phase varies by at most about pi per piece.
fn split_by_phase(nodes: &[f64], phase: &impl Fn(f64) -> f64) -> Vec<f64> {
    const PROBES: usize = 64;
    let mut out = vec![nodes[0]];
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let xs: Vec<f64> = (0..=PROBES)
            .map(|i| a + (b - a) * i as f64 / PROBES as f64)
            .collect();
        let ps: Vec<f64> = xs.iter().map(|&x| phase(x)).collect();
        let mut acc = 0.0;
        let mut next = std::f64::consts::PI;
        for i in 1..=PROBES {
            let d = (ps[i] - ps[i - 1]).abs();
            while acc + d >= next && d > 0.0 {
                let frac = (next - acc) / d;
                let x = xs[i - 1] + frac * (xs[i] - xs[i - 1]);
                if x > *out.last().unwrap() && x < b {
                    out.push(x);
                }
                next += std::f64::consts::PI;
            }
            acc += d;
        }
        out.push(b);
    }
    out
}

/// Integrates `weights(x) * e^{log_env(x) - shift}` over the real line
/// (even integrand, computed on the half-line and doubled).
pub(crate) fn integrate_half_line<const K: usize>(
    log_env: impl Fn(f64) -> f64,
    weights: impl Fn(f64) -> [f64; K],
    nodes: &[f64],
    norms: [Norm; K],
    spec: &QuadratureSpec,
    phase: Option<&dyn Fn(f64) -> f64>,
) -> Result<LineIntegral<K>, QuadError> {
    integrate_half_line_to(log_env, weights, nodes, norms, spec, phase, None)
}

/// As [`integrate_half_line`], but over `[0, min(cap, truncation)]`.
pub(crate) fn integrate_half_line_to<const K: usize>(
    log_env: impl Fn(f64) -> f64,
    weights: impl Fn(f64) -> [f64; K],
    nodes: &[f64],
    norms: [Norm; K],
    spec: &QuadratureSpec,
    phase: Option<&dyn Fn(f64) -> f64>,
    cap: Option<f64>,
) -> Result<LineIntegral<K>, QuadError> {
    spec.validate()?;
    let log_mag = |x: f64| {
        let w = weights(x);
        w.iter().map(|v| v.abs()).sum::<f64>().ln()
    };
    let scan = scan_tail(&log_env, &log_mag, spec.tail_cutoff_ratio)?;
    let shift = scan.log_shift;
    let t = match cap {
        Some(c) if c > 0.0 && c < scan.truncation => c,
        _ => scan.truncation,
    };
    let integrand = |x: f64| {
        let e = (log_env(x) - shift).exp();
        let mut w = weights(x);
        for v in w.iter_mut() {
            *v = if e == 0.0 { 0.0 } else { *v * e };
        }
        w
    };

    let mut pts: Vec<f64> = vec![0.0];
    let mut x = scan.first_node;
    while x < t {
        pts.push(x);
        x *= 2.0;
    }
    pts.push(t);
    pts.extend(nodes.iter().copied().filter(|&p| p > 0.0 && p < t));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if let Some(phase) = phase {
        pts = split_by_phase(&pts, &phase);
    }

    let abs_scaled = spec.abs_tol * (-shift).exp();
    let scale_of = |totals: &[f64; K], k: usize| match norms[k] {
        Norm::Own => totals[k].abs(),
        Norm::Of(j) => totals[j].abs(),
        Norm::SumOf(i, j) => totals[i].abs() + totals[j].abs(),
    };
    let priority = |seg_err: &[f64; K], totals: &[f64; K]| {
        (0..K)
            .map(|k| seg_err[k] / scale_of(totals, k).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    };

    let mut totals = [0.0; K];
    let mut errors = [0.0; K];
    let mut raw: Vec<(f64, f64, [f64; K], [f64; K])> = Vec::with_capacity(pts.len());
    for w in pts.windows(2) {
        let (v, e) = gk15(&integrand, w[0], w[1]);
        for k in 0..K {
            totals[k] += v[k];
            errors[k] += e[k];
        }
        raw.push((w[0], w[1], v, e));
    }
    let mut heap: BinaryHeap<Segment<K>> = raw
        .into_iter()
        .map(|(a, b, value, error)| Segment {
            a,
            b,
            value,
            error,
            priority: priority(&error, &totals),
        })
        .collect();

    let converged = |totals: &[f64; K], errors: &[f64; K]| {
        (0..K).all(|k| errors[k] <= abs_scaled.max(spec.rel_tol * scale_of(totals, k)))
    };
    let mut subdivisions = heap.len();
    let limit = spec.max_subdivisions + heap.len();
    while !converged(&totals, &errors) {
        if subdivisions >= limit {
            let scale = shift.exp();
            return Err(QuadError::ToleranceNotMet {
                value: 2.0 * totals[0] * scale,
                est_error: 2.0 * errors[0] * scale,
                subdivisions,
            });
        }
        let seg = heap.pop().expect("nonempty segment heap");
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            // Interval at machine resolution; keep its contribution as is.
            let mut frozen = seg;
            frozen.priority = 0.0;
            heap.push(frozen);
            if heap.peek().map(|s| s.priority) == Some(0.0) {
                let scale = shift.exp();
                return Err(QuadError::ToleranceNotMet {
                    value: 2.0 * totals[0] * scale,
                    est_error: 2.0 * errors[0] * scale,
                    subdivisions,
                });
            }
            continue;
        }
        let (lv, le) = gk15(&integrand, seg.a, mid);
        let (rv, re) = gk15(&integrand, mid, seg.b);
        for k in 0..K {
            totals[k] += lv[k] + rv[k] - seg.value[k];
            errors[k] += le[k] + re[k] - seg.error[k];
        }
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: lv,
            error: le,
            priority: priority(&le, &totals),
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: rv,
            error: re,
            priority: priority(&re, &totals),
        });
        subdivisions += 1;
        // Periodically re-sum to keep accumulated rounding out of the totals.
        if subdivisions.is_multiple_of(256) {
            totals = [0.0; K];
            errors = [0.0; K];
            for s in heap.iter() {
                for k in 0..K {
                    totals[k] += s.value[k];
                    errors[k] += s.error[k];
                }
            }
        }
    }
    let mut values = [0.0; K];
    let mut errs = [0.0; K];
    for s in heap.iter() {
        for k in 0..K {
            values[k] += s.value[k];
            errs[k] += s.error[k];
        }
    }
    for k in 0..K {
        values[k] *= 2.0;
        errs[k] *= 2.0;
    }
    Ok(LineIntegral {
        values,
        errors: errs,
        log_shift: shift,
        truncation_point: t,
        subdivisions,
    })
}

/// `\int_R g` for an even integrand `g`, as `2 \int_0^inf g`.
pub fn integrate_symmetric(g: impl Fn(f64) -> f64, spec: &QuadratureSpec) -> Result<QuadResult, QuadError> {
    let r = integrate_half_line(
        |_| 0.0,
        |x| [g(x)],
        &[],
        [Norm::Own],
        spec,
        None,
    )?;
    Ok(r.result(0))
}

/// Unnormalized moment `\int weight(x) e^{aV(x) + bW(x)} dx`.
///
/// Divergence of the integral is reported as [`QuadError::NonIntegrable`];
/// this is the integrability probe behind domain membership.
pub fn tilted_moment(
    v: &OrliczFunction,
    w: &OrliczFunction,
    alpha: f64,
    beta: f64,
    weight: Weight,
    spec: &QuadratureSpec,
) -> Result<QuadResult, QuadError> {
    let exponent = TiltExponent::new(alpha, v, beta, w);
    let nodes = merged_breakpoints(v, w);
    let r = integrate_half_line(
        |x| exponent.eval(x),
        |x| [weight.apply(v.eval(x), w.eval(x))],
        &nodes,
        [Norm::Own],
        spec,
        None,
    )?;
    Ok(r.result(0))
}

pub(crate) fn merged_breakpoints(v: &OrliczFunction, w: &OrliczFunction) -> Vec<f64> {
    let mut nodes: Vec<f64> = v
        .breakpoints()
        .iter()
        .chain(w.breakpoints())
        .copied()
        .collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
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
    fn gaussian_integral() {
        let spec = QuadratureSpec::default();
        let r = integrate_symmetric(|x| (-x * x).exp(), &spec).unwrap();
        assert!(rel(r.value, std::f64::consts::PI.sqrt()) < 1.0e-10, "{r:?}");
        assert!(r.est_error <= spec.rel_tol * r.value);
    }

    #[test]
    fn laplace_integral() {
        let r = integrate_symmetric(|x: f64| (-x.abs()).exp(), &QuadratureSpec::default()).unwrap();
        assert!(rel(r.value, 2.0) < 1.0e-10, "{r:?}");
    }

    #[test]
    fn divergent_integrands() {
        let spec = QuadratureSpec::default();
        assert!(matches!(
            integrate_symmetric(|x| (x * x).exp(), &spec),
            Err(QuadError::NonIntegrable { .. })
        ));
        assert!(matches!(
            integrate_symmetric(|_| 1.0, &spec),
            Err(QuadError::NonIntegrable { .. })
        ));
        // Decays at first, then blows up far out.
        let (v, w) = (f("x^2"), f("x^4"));
        assert!(matches!(
            tilted_moment(&v, &w, -0.5, 1.0e-12, Weight::One, &spec),
            Err(QuadError::NonIntegrable { .. })
        ));
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = QuadratureSpec::default().with_rel_tol(1.0e-3);
        assert!(matches!(
            integrate_symmetric(|x| (-x * x).exp(), &spec),
            Err(QuadError::InvalidSpec(_))
        ));
    }

    #[test]
    fn tilted_gaussian_moments() {
        let spec = QuadratureSpec::default();
        let (v, w) = (f("x^2"), f("x^4"));
        let pi = std::f64::consts::PI;
        let z = tilted_moment(&v, &w, -1.0, 0.0, Weight::One, &spec).unwrap();
        assert!(rel(z.value, pi.sqrt()) < 1.0e-10);
        let zv = tilted_moment(&v, &w, -0.5, 0.0, Weight::V, &spec).unwrap();
        assert!(rel(zv.value, (2.0 * pi).sqrt()) < 1.0e-10);
        let zw = tilted_moment(&v, &w, -0.5, 0.0, Weight::W, &spec).unwrap();
        assert!(rel(zw.value, 3.0 * (2.0 * pi).sqrt()) < 1.0e-10);
        let zw2 = tilted_moment(&v, &w, -0.5, 0.0, Weight::W2, &spec).unwrap();
        assert!(rel(zw2.value, 105.0 * (2.0 * pi).sqrt()) < 1.0e-10);
    }

    #[test]
    fn exact_cancellation_at_domain_edge() {
        // -(x^4 + x^2) + x^4 = -x^2 exactly.
        let (v, w) = (f("x^4 + x^2"), f("x^4"));
        let z = tilted_moment(&v, &w, -1.0, 1.0, Weight::One, &QuadratureSpec::default()).unwrap();
        assert!(rel(z.value, std::f64::consts::PI.sqrt()) < 1.0e-10);
        assert!(tilted_moment(&v, &w, -1.0, 1.0 + 1.0e-9, Weight::One, &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn log_value_survives_overflow() {
        // Z = sqrt(pi / eps) for e^{-eps x^2}: large but finite; shift keeps
        // ln Z exact even for a tilt whose peak value overflows.
        let (v, w) = (f("x^4"), f("x^2"));
        let alpha = -1.0;
        let beta = 60.0; // peak exponent 900 at x^2 = 30
        let z = tilted_moment(&v, &w, alpha, beta, Weight::One, &QuadratureSpec::default()).unwrap();
        assert!(z.value.is_infinite());
        assert!(z.log_value > 895.0 && z.log_value < 905.0, "{}", z.log_value);
    }

    #[test]
    fn sharp_peaks_and_slow_tails() {
        let spec = QuadratureSpec::default();
        let v = f("x^2");
        let narrow = tilted_moment(&v, &v, -1.0e10, 0.0, Weight::One, &spec).unwrap();
        assert!(rel(narrow.value, (std::f64::consts::PI / 1.0e10).sqrt()) < 1.0e-10);
        // e^{-2 sqrt|x|}: \int = 2 * \int_0^inf e^{-2 sqrt u} du = 2 * 2/4 = 1.
        let g = f("|x|^0.5");
        let slow = tilted_moment(&g, &g, -2.0, 0.0, Weight::One, &spec).unwrap();
        assert!(rel(slow.value, 1.0) < 1.0e-10, "{slow:?}");
        assert!(slow.truncation_point > 300.0);
    }

    #[test]
    fn scaling_and_one_sided_agree() {
        let spec = QuadratureSpec::default();
        let base = integrate_symmetric(|x| (-x * x * x * x).exp(), &spec).unwrap();
        let scaled = integrate_symmetric(|x| 7.5 * (-x * x * x * x).exp(), &spec).unwrap();
        assert!(rel(scaled.value, 7.5 * base.value) < 1.0e-10);
        // \int_0^inf e^{-x^4} = Gamma(5/4)
        assert!(rel(base.value, 2.0 * 0.906_402_477_055_477_f64) < 1.0e-10);
    }

    #[test]
    fn weight_v_matches_alpha_derivative() {
        let spec = QuadratureSpec::default().with_rel_tol(1.0e-12);
        let (v, w) = (f("x^4 + x^2"), f("x^4"));
        let (a, b) = (-0.8, 0.3);
        let h = 1.0e-5;
        let zp = tilted_moment(&v, &w, a + h, b, Weight::One, &spec).unwrap().value;
        let zm = tilted_moment(&v, &w, a - h, b, Weight::One, &spec).unwrap().value;
        let zv = tilted_moment(&v, &w, a, b, Weight::V, &spec).unwrap().value;
        assert!(rel((zp - zm) / (2.0 * h), zv) < 1.0e-6);
    }

    #[test]
    fn tolerance_not_met_reported() {
        let spec = QuadratureSpec {
            max_subdivisions: 50,
            rel_tol: 1.0e-14,
            ..QuadratureSpec::default()
        };
        let r = integrate_symmetric(|x: f64| (200.0 * x).cos().powi(2) * (-x * x).exp() * x.abs().sqrt(), &spec);
        assert!(matches!(r, Err(QuadError::ToleranceNotMet { .. })));
    }
}
