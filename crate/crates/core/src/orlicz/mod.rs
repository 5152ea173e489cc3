//! Orlicz functions built from a small closed-form grammar.
//!
//! An Orlicz function here is a finite positive combination of the atoms
//! `x^k` (even `k`), `|x|^p`, `cosh(x)-1` and `exp(|x|^p)-1`. Every atom is a
//! function of `|x|`, so symmetry holds exactly, and value, first and second
//! derivative are all available in closed form.
//!
//! Powers with `p < 1` are not convex. They are only admitted when the caller
//! asks for generalized functions; the resulting value is flagged
//! [`OrliczFunction::is_generalized`].

mod parse;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrliczError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("not convex: {0}")]
    NotConvex(String),
    #[error("not an Orlicz function: {0}")]
    NotOrlicz(String),
}

/// One building block of an Orlicz expression, as a function of `u = |x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Atom {
    /// `x^k` with `k` a positive even integer.
    EvenPower(u32),
    /// `|x|^p`, `p > 0`.
    AbsPower(f64),
    /// `cosh(x) - 1`.
    CoshMinusOne,
    /// `exp(|x|^p) - 1`, `p > 0`.
    ExpPowerMinusOne(f64),
}

impl Atom {
    /// Exponent governing behaviour at the origin, if the atom has one.
    fn power(&self) -> Option<f64> {
        match *self {
            Atom::EvenPower(k) => Some(k as f64),
            Atom::AbsPower(p) | Atom::ExpPowerMinusOne(p) => Some(p),
            Atom::CoshMinusOne => None,
        }
    }

    fn value(&self, u: f64) -> f64 {
        match *self {
            Atom::EvenPower(k) => u.powi(k as i32),
            Atom::AbsPower(p) => u.powf(p),
            Atom::CoshMinusOne => {
                let s = (0.5 * u).sinh();
                2.0 * s * s
            }
            Atom::ExpPowerMinusOne(p) => u.powf(p).exp_m1(),
        }
    }

    fn ln_value(&self, u: f64) -> f64 {
        if u == 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            Atom::EvenPower(k) => k as f64 * u.ln(),
            Atom::AbsPower(p) => p * u.ln(),
            Atom::CoshMinusOne => {
                // cosh(u) - 1 = 2 sinh^2(u/2)
                let z = 0.5 * u;
                let ln_sinh = if z > 20.0 {
                    z - std::f64::consts::LN_2 + (-(-2.0 * z).exp()).ln_1p()
                } else {
                    z.sinh().ln()
                };
                std::f64::consts::LN_2 + 2.0 * ln_sinh
            }
            Atom::ExpPowerMinusOne(p) => {
                let v = u.powf(p);
                if v > 1.0 {
                    v + (-(-v).exp()).ln_1p()
                } else {
                    v.exp_m1().ln()
                }
            }
        }
    }

    fn deriv1(&self, u: f64) -> f64 {
        match *self {
            Atom::EvenPower(k) => k as f64 * u.powi(k as i32 - 1),
            Atom::AbsPower(p) => p * u.powf(p - 1.0),
            Atom::CoshMinusOne => u.sinh(),
            Atom::ExpPowerMinusOne(p) => p * u.powf(p - 1.0) * u.powf(p).exp(),
        }
    }

    fn deriv2(&self, u: f64) -> f64 {
        match *self {
            Atom::EvenPower(k) => {
                let k = k as i32;
                (k * (k - 1)) as f64 * u.powi(k - 2)
            }
            Atom::AbsPower(p) => p * (p - 1.0) * u.powf(p - 2.0),
            Atom::CoshMinusOne => u.cosh(),
            Atom::ExpPowerMinusOne(p) => {
                let v = u.powf(p);
                v.exp() * (p * (p - 1.0) * u.powf(p - 2.0) + p * p * u.powf(2.0 * p - 2.0))
            }
        }
    }

    /// Exact inverse of the atom on `[0, inf)`.
    fn inverse(&self, y: f64) -> f64 {
        match *self {
            Atom::EvenPower(k) => y.powf(1.0 / k as f64),
            Atom::AbsPower(p) => y.powf(1.0 / p),
            Atom::CoshMinusOne => 2.0 * (0.5 * y).sqrt().asinh(),
            Atom::ExpPowerMinusOne(p) => y.ln_1p().powf(1.0 / p),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::EvenPower(k) => write!(f, "x^{k}"),
            Atom::AbsPower(p) => write!(f, "|x|^{p}"),
            Atom::CoshMinusOne => write!(f, "cosh(x)-1"),
            Atom::ExpPowerMinusOne(p) => write!(f, "exp(|x|^{p})-1"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term {
    pub coef: f64,
    pub atom: Atom,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coef == 1.0 {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "{}*{}", self.coef, self.atom)
        }
    }
}

/// A symmetric, nonnegative function vanishing only at the origin.
///
/// Immutable after construction. Cloning is cheap relative to any numerical
/// work done with it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrliczFunction {
    label: String,
    terms: Vec<Term>,
    breakpoints: Vec<f64>,
    generalized: bool,
}

impl OrliczFunction {
    /// Parses an expression such as `"x^4 + x^2"` or `"|x|^0.5"`.
    pub fn parse(expr: &str, allow_generalized: bool) -> Result<Self, OrliczError> {
        Self::from_terms(parse::parse_terms(expr)?, allow_generalized)
    }

    pub fn from_terms(terms: Vec<Term>, allow_generalized: bool) -> Result<Self, OrliczError> {
        if terms.is_empty() {
            return Err(OrliczError::NotOrlicz("no terms".into()));
        }
        let mut generalized = false;
        for term in &terms {
            if !(term.coef > 0.0) || !term.coef.is_finite() {
                return Err(OrliczError::NotOrlicz(format!(
                    "coefficient {} of `{}` must be a positive real",
                    term.coef, term.atom
                )));
            }
            if let Some(p) = term.atom.power() {
                if !(p > 0.0) || !p.is_finite() {
                    return Err(OrliczError::NotOrlicz(format!(
                        "exponent of `{}` must be positive",
                        term.atom
                    )));
                }
                if p < 1.0 {
                    if !allow_generalized {
                        return Err(OrliczError::NotConvex(format!(
                            "`{}` has exponent {p} < 1",
                            term.atom
                        )));
                    }
                    generalized = true;
                }
            }
        }
        // |x|^p and exp(|x|^p) lose their second derivative at 0 for p < 2.
        let kink_at_zero = terms.iter().any(|t| match t.atom {
            Atom::AbsPower(p) | Atom::ExpPowerMinusOne(p) => p < 2.0,
            _ => false,
        });
        let breakpoints = if kink_at_zero { vec![0.0] } else { Vec::new() };
        let label = terms
            .iter()
            .map(Term::to_string)
            .collect::<Vec<_>>()
            .join(" + ");
        Ok(Self {
            label,
            terms,
            breakpoints,
            generalized,
        })
    }

    /// `c * |x|^p`, convenience for tests and closed-form cases.
    pub fn power(coef: f64, p: f64) -> Result<Self, OrliczError> {
        let atom = if p.fract() == 0.0 && p >= 2.0 && (p as u64).is_multiple_of(2) {
            Atom::EvenPower(p as u32)
        } else {
            Atom::AbsPower(p)
        };
        Self::from_terms(vec![Term { coef, atom }], true)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Nonnegative points where the second derivative may not exist.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn is_generalized(&self) -> bool {
        self.generalized
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = x.abs();
        self.terms.iter().map(|t| t.coef * t.atom.value(u)).sum()
    }

    /// `ln f(x)`, finite far beyond the range where `f` itself overflows.
    pub fn ln_eval(&self, x: f64) -> f64 {
        let u = x.abs();
        if u == 0.0 {
            return f64::NEG_INFINITY;
        }
        if let [t] = self.terms.as_slice() {
            return t.coef.ln() + t.atom.ln_value(u);
        }
        let logs: Vec<f64> = self
            .terms
            .iter()
            .map(|t| t.coef.ln() + t.atom.ln_value(u))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return max;
        }
        max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    /// First derivative; odd in `x`. Not defined at breakpoints.
    pub fn deriv1(&self, x: f64) -> f64 {
        let u = x.abs();
        let d: f64 = self.terms.iter().map(|t| t.coef * t.atom.deriv1(u)).sum();
        d.copysign(x)
    }

    /// Second derivative; even in `x`. Not defined at breakpoints.
    pub fn deriv2(&self, x: f64) -> f64 {
        let u = x.abs();
        self.terms.iter().map(|t| t.coef * t.atom.deriv2(u)).sum()
    }

    /// The unique `x >= 0` with `f(x) = y`.
    ///
    /// Single-atom functions are inverted in closed form. Sums are solved by
    /// safeguarded Newton iteration inside a bracket derived from the atoms.
    pub fn inverse_nonneg(&self, y: f64) -> f64 {
        if y.is_nan() {
            return f64::NAN;
        }
        if y <= 0.0 {
            return 0.0;
        }
        if y == f64::INFINITY {
            return f64::INFINITY;
        }
        if let [t] = self.terms.as_slice() {
            return t.atom.inverse(y / t.coef);
        }
        // Each term alone bounds f from below, and f <= k * max term.
        let k = self.terms.len() as f64;
        let inv_at = |target: f64| {
            self.terms
                .iter()
                .map(|t| t.atom.inverse(target / t.coef))
                .fold(f64::INFINITY, f64::min)
        };
        let mut lo = inv_at(y / k);
        let mut hi = inv_at(y);
        if !(lo < hi) {
            return hi;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fx = self.eval(x) - y;
            if fx == 0.0 {
                return x;
            }
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
            let step = fx / self.deriv1(x);
            if step.abs() <= f64::EPSILON * x {
                break;
            }
            let newton = x - step;
            x = if newton > lo && newton < hi && step.is_finite() {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        x
    }

    /// Grid check of the defining properties; see [`ValidationReport`].
    pub fn validate(&self, grid_max: f64, grid_points: usize) -> ValidationReport {
        validate_orlicz(self, grid_max, grid_points)
    }
}

impl fmt::Display for OrliczFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Parses an Orlicz expression; see [`OrliczFunction::parse`].
pub fn parse_orlicz(expr: &str, allow_generalized: bool) -> Result<OrliczFunction, OrliczError> {
    OrliczFunction::parse(expr, allow_generalized)
}

/// See [`OrliczFunction::inverse_nonneg`].
pub fn inverse_nonneg(f: &OrliczFunction, y: f64) -> f64 {
    f.inverse_nonneg(y)
}

/// `n` points geometrically spaced on `[lo, hi]`, endpoints included.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 2);
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo * (ratio * i as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Predicate {
    Symmetry,
    VanishesAtZero,
    PositiveAwayFromZero,
    StrictlyIncreasing,
    Convexity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CheckStatus {
    Passed,
    Failed { witness: f64, detail: String },
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub predicate: Predicate,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    /// Largest grid point at which `f` was finite.
    pub effective_grid_max: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks
            .iter()
            .all(|c| !matches!(c.status, CheckStatus::Failed { .. }))
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks
            .iter()
            .filter(|c| matches!(c.status, CheckStatus::Failed { .. }))
    }

    pub fn status(&self, predicate: Predicate) -> Option<&CheckStatus> {
        self.checks
            .iter()
            .find(|c| c.predicate == predicate)
            .map(|c| &c.status)
    }
}

/// Checks symmetry, `f(0) = 0`, positivity, strict monotonicity and (unless
/// generalized) convexity on a geometric grid in `[1e-4, grid_max]`.
///
/// Never fails; violations are listed in the report with a witness point.
pub fn validate_orlicz(f: &OrliczFunction, grid_max: f64, grid_points: usize) -> ValidationReport {
    assert!(grid_max > 1.0e-4, "grid_max must exceed the grid start 1e-4");
    assert!(grid_points >= 16, "at least 16 grid points required");
    let mut grid = geometric_grid(1.0e-4, grid_max, grid_points);
    // Stop at overflow: comparisons between infinities carry no information.
    if let Some(cut) = grid.iter().position(|&x| !f.eval(x).is_finite()) {
        grid.truncate(cut);
    }
    let effective_grid_max = grid.last().copied().unwrap_or(0.0);
    let fail = |predicate, witness, detail: String| CheckResult {
        predicate,
        status: CheckStatus::Failed { witness, detail },
    };
    let pass = |predicate| CheckResult {
        predicate,
        status: CheckStatus::Passed,
    };
    let mut checks = Vec::new();

    checks.push(
        match grid.iter().find(|&&x| f.eval(x) != f.eval(-x)) {
            Some(&x) => fail(
                Predicate::Symmetry,
                x,
                format!("f({x}) = {} but f(-{x}) = {}", f.eval(x), f.eval(-x)),
            ),
            None => pass(Predicate::Symmetry),
        },
    );

    let f0 = f.eval(0.0);
    checks.push(if f0 == 0.0 {
        pass(Predicate::VanishesAtZero)
    } else {
        fail(Predicate::VanishesAtZero, 0.0, format!("f(0) = {f0}"))
    });

    checks.push(
        match grid.iter().find(|&&x| !(f.eval(x) > 0.0)) {
            Some(&x) => fail(
                Predicate::PositiveAwayFromZero,
                x,
                format!("f({x}) = {}", f.eval(x)),
            ),
            None => pass(Predicate::PositiveAwayFromZero),
        },
    );

    checks.push(
        match grid.windows(2).find(|w| !(f.eval(w[1]) > f.eval(w[0]))) {
            Some(w) => fail(
                Predicate::StrictlyIncreasing,
                w[1],
                format!("f({}) = {} is not above f({}) = {}", w[1], f.eval(w[1]), w[0], f.eval(w[0])),
            ),
            None => pass(Predicate::StrictlyIncreasing),
        },
    );

    checks.push(if f.is_generalized() {
        CheckResult {
            predicate: Predicate::Convexity,
            status: CheckStatus::Skipped("generalized function, convexity waived".into()),
        }
    } else {
        let concave_point = grid.iter().copied().find(|&x| {
            !f.breakpoints().contains(&x) && f.deriv2(x) < -1.0e-12 * f.deriv2(x).abs().max(1.0)
        });
        let midpoint_violation = grid.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            let mid = f.eval(0.5 * (a + b));
            let chord = 0.5 * (f.eval(a) + f.eval(b));
            (mid > chord * (1.0 + 1.0e-12)).then_some(0.5 * (a + b))
        });
        match concave_point.or(midpoint_violation) {
            Some(x) => fail(
                Predicate::Convexity,
                x,
                format!("f'' ({}) or midpoint inequality violated", f.deriv2(x)),
            ),
            None => pass(Predicate::Convexity),
        }
    });

    ValidationReport {
        checks,
        effective_grid_max,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// `liminf V/W > 0` but the ratio does not visibly diverge.
    AOnly,
    /// `V/W -> infinity`; implies Assumption A.
    B,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionVerdict {
    pub verdict: Verdict,
    /// `+inf` for [`Verdict::B`], `0` for [`Verdict::Neither`].
    pub liminf_estimate: f64,
    pub probe_grid: Vec<f64>,
}

/// Numerical, advisory classification of the growth conditions on `V / W`.
///
/// The ratio is evaluated in log space on a geometric grid over `[1, x_max]`
/// and only its top decade is inspected.
pub fn classify_assumptions(v: &OrliczFunction, w: &OrliczFunction, x_max: f64) -> AssumptionVerdict {
    assert!(x_max >= 1.0e3, "x_max must be at least 1e3");
    let decades = x_max.log10();
    let probe_grid = geometric_grid(1.0, x_max, (decades * 40.0).ceil() as usize + 1);
    let ln_ratio = |x: f64| v.ln_eval(x) - w.ln_eval(x);
    let top: Vec<f64> = probe_grid
        .iter()
        .copied()
        .filter(|&x| x >= x_max / 10.0 * (1.0 - 1.0e-12))
        .map(ln_ratio)
        .collect();
    let ln_min = top.iter().copied().fold(f64::INFINITY, f64::min);
    let ln_end = ln_ratio(x_max);
    let ln_growth = ln_end - ln_ratio(x_max / 10.0);
    let two = std::f64::consts::LN_2;
    let million = 1.0e6f64.ln();

    let (verdict, liminf_estimate) = if ln_growth > two && ln_end > million {
        (Verdict::B, f64::INFINITY)
    } else if (-ln_growth > two && ln_end < -million) || ln_min.exp() <= 1.0e-9 {
        (Verdict::Neither, 0.0)
    } else {
        (Verdict::AOnly, ln_min.exp())
    };
    AssumptionVerdict {
        verdict,
        liminf_estimate,
        probe_grid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(expr: &str) -> OrliczFunction {
        OrliczFunction::parse(expr, true).unwrap()
    }

    #[test]
    fn parses_stock_examples() {
        let sq = f("x^2");
        assert_eq!(sq.terms(), &[Term { coef: 1.0, atom: Atom::EvenPower(2) }]);
        assert!(sq.breakpoints().is_empty());
        assert!(!sq.is_generalized());

        let quartic = OrliczFunction::parse("x^4 + x^2", false).unwrap();
        assert_eq!(quartic.terms().len(), 2);
        assert_eq!(quartic.eval(1.0), 2.0);
        assert_eq!(quartic.label(), "x^4 + x^2");
        assert!(quartic.validate(1.0e3, 64).is_valid());
    }

    #[test]
    fn sub_linear_power_needs_generalized_flag() {
        assert!(matches!(
            OrliczFunction::parse("|x|^0.5", false),
            Err(OrliczError::NotConvex(_))
        ));
        let g = OrliczFunction::parse("|x|^0.5", true).unwrap();
        assert!(g.is_generalized());
        assert_eq!(g.breakpoints(), &[0.0]);
        let report = g.validate(1.0e3, 64);
        assert!(report.is_valid());
        assert!(matches!(report.status(Predicate::Convexity), Some(CheckStatus::Skipped(_))));
        assert_eq!(report.status(Predicate::StrictlyIncreasing), Some(&CheckStatus::Passed));
    }

    #[test]
    fn zero_coefficient_is_rejected() {
        assert!(matches!(
            OrliczFunction::parse("0*x^2", false),
            Err(OrliczError::NotOrlicz(_))
        ));
        assert!(matches!(
            OrliczFunction::parse("0.0*x^2 + x^4", false),
            Err(OrliczError::NotOrlicz(_))
        ));
    }

    #[test]
    fn breakpoints_follow_smoothness() {
        assert_eq!(f("|x|^1").breakpoints(), &[0.0]);
        assert_eq!(f("|x|^1.5").breakpoints(), &[0.0]);
        assert!(f("|x|^3").breakpoints().is_empty());
        assert!(f("cosh(x)-1").breakpoints().is_empty());
        assert_eq!(f("exp(|x|^1)-1").breakpoints(), &[0.0]);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(f("x^2").inverse_nonneg(4.0), 2.0);
        assert!((f("x^4 + x^2").inverse_nonneg(2.0) - 1.0).abs() < 1.0e-15);
        assert!((f("|x|^3").inverse_nonneg(8.0) - 2.0).abs() < 1.0e-15);
        assert_eq!(f("x^4 + x^2").inverse_nonneg(0.0), 0.0);
        let c = f("cosh(x)-1");
        assert!((c.eval(c.inverse_nonneg(1.0e-20)) / 1.0e-20 - 1.0).abs() < 1.0e-14);
    }

    #[test]
    fn validation_catches_violations() {
        // A generalized function checked as if it were convex.
        let mut g = f("|x|^0.5");
        g.generalized = false;
        let report = g.validate(10.0, 32);
        assert!(!report.is_valid());
        let failed: Vec<_> = report.failures().map(|c| c.predicate).collect();
        assert_eq!(failed, vec![Predicate::Convexity]);
    }

    #[test]
    fn validation_truncates_at_overflow() {
        let report = f("cosh(x)-1").validate(1.0e3, 64);
        assert!(report.is_valid());
        assert!(report.effective_grid_max < 720.0);
    }

    #[test]
    fn ln_eval_survives_overflow() {
        let c = f("cosh(x)-1 + x^2");
        assert!(c.eval(800.0).is_infinite());
        let l = c.ln_eval(800.0);
        assert!((l - (800.0 - std::f64::consts::LN_2)).abs() < 1.0e-12);
        let e = f("exp(|x|^2)-1");
        assert!((e.ln_eval(100.0) - 1.0e4).abs() < 1.0e-9);
        assert!((f("x^4 + x^2").ln_eval(3.0) - 90f64.ln()).abs() < 1.0e-14);
    }

    #[test]
    fn assumption_examples() {
        let v = f("x^4 + x^2");
        let w = f("x^4");
        let a = classify_assumptions(&v, &w, 1.0e4);
        assert_eq!(a.verdict, Verdict::AOnly);
        assert!((a.liminf_estimate - 1.0).abs() < 1.0e-6);

        let b = classify_assumptions(&f("x^4"), &f("x^2"), 1.0e4);
        assert_eq!(b.verdict, Verdict::B);
        assert_eq!(b.liminf_estimate, f64::INFINITY);

        let n = classify_assumptions(&f("x^2"), &f("x^4"), 1.0e4);
        assert_eq!(n.verdict, Verdict::Neither);
        assert_eq!(n.liminf_estimate, 0.0);

        let c = classify_assumptions(&f("cosh(x)-1"), &f("x^2"), 1.0e3);
        assert_eq!(c.verdict, Verdict::B);
    }

    fn expr_strategy() -> impl Strategy<Value = String> {
        let atom = prop_oneof![
            (1u32..4).prop_map(|k| format!("x^{}", 2 * k)),
            (1.0f64..5.0).prop_map(|p| format!("|x|^{p}")),
            Just("cosh(x)-1".to_string()),
            (1.0f64..2.5).prop_map(|p| format!("exp(|x|^{p})-1")),
        ];
        let term = (0.1f64..10.0, atom).prop_map(|(c, a)| format!("{c}*{a}"));
        prop::collection::vec(term, 1..4).prop_map(|ts| ts.join(" + "))
    }

    fn central_diff(g: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1.0e-5 * x.max(1.0e-3);
        (g(x + h) - g(x - h)) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn symmetric_exactly(expr in expr_strategy(), x in -50.0f64..50.0) {
            let g = f(&expr);
            prop_assert_eq!(g.eval(x).to_bits(), g.eval(-x).to_bits());
        }

        #[test]
        fn inverse_round_trip(expr in expr_strategy(), lx in -6.0f64..3.0) {
            let g = f(&expr);
            let x = 10f64.powf(lx);
            let y = g.eval(x);
            prop_assume!(y.is_finite() && y > 0.0);
            let back = g.inverse_nonneg(y);
            prop_assert!((back - x).abs() <= 1.0e-10 * x, "{} vs {}", back, x);
        }

        #[test]
        fn derivatives_match_finite_differences(expr in expr_strategy(), x in 0.05f64..3.0) {
            let g = f(&expr);
            let d1 = g.deriv1(x);
            let fd1 = central_diff(|u| g.eval(u), x);
            prop_assert!((d1 - fd1).abs() <= 1.0e-6 * d1.abs().max(1.0e-3), "{} vs {}", d1, fd1);
            let d2 = g.deriv2(x);
            let fd2 = central_diff(|u| g.deriv1(u), x);
            prop_assert!((d2 - fd2).abs() <= 1.0e-6 * d2.abs().max(1.0e-3), "{} vs {}", d2, fd2);
        }

        #[test]
        fn verdict_b_implies_reverse_neither(p in 1.0f64..6.0, q in 1.0f64..6.0) {
            let v = OrliczFunction::power(1.0, p).unwrap();
            let w = OrliczFunction::power(1.0, q).unwrap();
            if classify_assumptions(&v, &w, 1.0e4).verdict == Verdict::B {
                prop_assert_eq!(classify_assumptions(&w, &v, 1.0e4).verdict, Verdict::Neither);
            }
        }
    }
}
