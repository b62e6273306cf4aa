//! Adaptive Gauss-Legendre integration in log space, and the one-dimensional
//! integrals behind the GvMF normalizing constants and moments.
//!
//! Every integrand is supplied as its logarithm. The engine maps `[lo, hi]`
//! onto `θ ∈ [0, π]` through `y = lo + (hi - lo) sin²(θ/2)`, which turns
//! endpoint factors `(y - lo)^a (hi - y)^b` into `sin^{2a+1}(θ/2) cos^{2b+1}(θ/2)`,
//! so the `(1 - y²)^{-1/2}` weight of the circle case is integrated without a
//! singularity.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::model::Family;
use crate::numeric::{
    ln_one_minus_exp, ln_sphere_area, log_add_exp, GaussLegendre, GL31_FULL_NODES,
    GL31_FULL_WEIGHTS,
};

/// Largest `|κ| / α` for which the A-integrals are guaranteed finite.
pub const MAX_KAPPA_OVER_ALPHA: f64 = 500.0;

const MAX_RULE_ORDER: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    /// Absolute tolerance, measured in units of the integrand's peak value
    /// times the interval length so it keeps its meaning under log scaling.
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    pub base_rule_order: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 200,
            base_rule_order: 31,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(invalid("quadrature tolerances must be positive"));
        }
        if self.max_subdivisions < 1 {
            return Err(invalid("max_subdivisions must be at least 1"));
        }
        if self.base_rule_order < 2 || self.base_rule_order > MAX_RULE_ORDER {
            return Err(invalid("base_rule_order must lie in [2, 128]"));
        }
        Ok(())
    }
}

/// A real number stored as `sign · exp(log_magnitude)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogScaledValue {
    pub log_magnitude: f64,
    pub sign: i8,
}

impl LogScaledValue {
    pub const ZERO: Self = Self {
        log_magnitude: f64::NEG_INFINITY,
        sign: 0,
    };

    pub fn from_ln(log_magnitude: f64) -> Self {
        if log_magnitude == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self {
                log_magnitude,
                sign: 1,
            }
        }
    }

    pub fn from_value(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self {
                log_magnitude: libm::log(x.abs()),
                sign: if x > 0.0 { 1 } else { -1 },
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// Plain value. Overflows to infinity once `log_magnitude` exceeds ~709.
    pub fn value(&self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => s as f64 * libm::exp(self.log_magnitude),
        }
    }

    pub fn neg(self) -> Self {
        Self {
            log_magnitude: self.log_magnitude,
            sign: -self.sign,
        }
    }

    pub fn mul(self, other: Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::ZERO;
        }
        Self {
            log_magnitude: self.log_magnitude + other.log_magnitude,
            sign: self.sign * other.sign,
        }
    }

    /// `self / other` as a plain number; `other` must be nonzero.
    pub fn ratio(self, other: Self) -> f64 {
        debug_assert!(!other.is_zero());
        if self.is_zero() {
            return 0.0;
        }
        (self.sign * other.sign) as f64 * libm::exp(self.log_magnitude - other.log_magnitude)
    }
}

/// Location of a quadrature node, with both endpoint offsets computed without
/// cancellation.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub y: f64,
    pub from_lo: f64,
    pub to_hi: f64,
}

struct Rule {
    nodes: Cow<'static, [f64]>,
    ln_weights: [f64; MAX_RULE_ORDER],
}

impl Rule {
    fn new(order: usize) -> Self {
        let (nodes, weights): (Cow<'static, [f64]>, Cow<'static, [f64]>) = if order == 31 {
            (Cow::Borrowed(&GL31_FULL_NODES), Cow::Borrowed(&GL31_FULL_WEIGHTS))
        } else {
            let gl = GaussLegendre::new(order);
            (Cow::Owned(gl.nodes), Cow::Owned(gl.weights))
        };
        let mut ln_weights = [0.0; MAX_RULE_ORDER];
        for (l, w) in ln_weights.iter_mut().zip(weights.iter()) {
            *l = libm::log(*w);
        }
        Self { nodes, ln_weights }
    }
}

#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    whole: f64,
    left: f64,
    right: f64,
}

impl Panel {
    fn estimate(&self) -> f64 {
        log_add_exp(self.left, self.right)
    }

    fn log_error(&self) -> f64 {
        let halves = self.estimate();
        if self.whole == f64::NEG_INFINITY && halves == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let hi = self.whole.max(halves);
        let gap = -(self.whole - halves).abs();
        if gap == 0.0 {
            f64::NEG_INFINITY
        } else {
            hi + ln_one_minus_exp(gap)
        }
    }
}

struct Engine<'f, F> {
    rule: Rule,
    log_f: &'f F,
    lo: f64,
    len: f64,
    ln_len: f64,
    peak: f64,
}

impl<F: Fn(QuadPoint) -> f64> Engine<'_, F> {
    /// Log of the rule applied on `θ ∈ [a, b]`.
    fn apply(&mut self, a: f64, b: f64) -> Result<f64> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let ln_half = libm::log(half);
        let mut terms = [0.0f64; MAX_RULE_ORDER];
        let n = self.rule.nodes.len();
        let mut max = f64::NEG_INFINITY;
        for j in 0..n {
            let theta = mid + half * self.rule.nodes[j];
            let s = libm::sin(0.5 * theta);
            let c = libm::cos(0.5 * theta);
            let from_lo = self.len * s * s;
            let to_hi = self.len * c * c;
            let y = if from_lo <= to_hi {
                self.lo + from_lo
            } else {
                self.lo + self.len - to_hi
            };
            let lf = (self.log_f)(QuadPoint { y, from_lo, to_hi });
            if lf.is_nan() {
                return Err(invalid("log-integrand evaluated to NaN"));
            }
            let ln_jac = self.ln_len + libm::log(s) + libm::log(c);
            let density = lf + ln_jac;
            if density > self.peak {
                self.peak = density;
            }
            let t = self.rule.ln_weights[j] + ln_half + density;
            terms[j] = t;
            if t > max {
                max = t;
            }
        }
        if max == f64::NEG_INFINITY {
            return Ok(max);
        }
        if max == f64::INFINITY {
            return Err(invalid("log-integrand evaluated to +inf"));
        }
        let mut acc = 0.0;
        for t in &terms[..n] {
            acc += libm::exp(t - max);
        }
        Ok(max + libm::log(acc))
    }

    fn panel(&mut self, a: f64, b: f64, whole: f64) -> Result<Panel> {
        let m = 0.5 * (a + b);
        let left = self.apply(a, m)?;
        let right = self.apply(m, b)?;
        Ok(Panel {
            a,
            b,
            whole,
            left,
            right,
        })
    }
}

/// Integrates `exp(log_f)` over `[lo, hi]`; `log_f` may return `-inf`.
pub fn integrate_log<F>(log_f: &F, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<LogScaledValue>
where
    F: Fn(QuadPoint) -> f64,
{
    cfg.validate()?;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid("integration interval must satisfy lo < hi"));
    }
    let len = hi - lo;
    let mut engine = Engine {
        rule: Rule::new(cfg.base_rule_order),
        log_f,
        lo,
        len,
        ln_len: libm::log(len),
        peak: f64::NEG_INFINITY,
    };
    let pi = core::f64::consts::PI;
    let whole = engine.apply(0.0, pi)?;
    let mut panels: Vec<Panel> = Vec::with_capacity(cfg.max_subdivisions + 1);
    panels.push(engine.panel(0.0, pi, whole)?);
    let ln_rel = libm::log(cfg.rel_tol);
    let ln_abs = libm::log(cfg.abs_tol);
    loop {
        let mut total = f64::NEG_INFINITY;
        let mut err = f64::NEG_INFINITY;
        let mut worst = 0;
        let mut worst_err = f64::NEG_INFINITY;
        for (i, p) in panels.iter().enumerate() {
            total = log_add_exp(total, p.estimate());
            let e = p.log_error();
            err = log_add_exp(err, e);
            if e > worst_err {
                worst_err = e;
                worst = i;
            }
        }
        let scale = engine.peak + libm::log(pi);
        if err <= ln_rel + total || err <= ln_abs + scale || err == f64::NEG_INFINITY {
            return Ok(LogScaledValue::from_ln(total));
        }
        if panels.len() >= cfg.max_subdivisions {
            return Err(Error::NonConvergence {
                subdivisions: panels.len(),
                rel_error: libm::exp(err - total),
            });
        }
        let p = panels.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        if !(m > p.a && m < p.b) {
            return Err(Error::NonConvergence {
                subdivisions: panels.len(),
                rel_error: libm::exp(err - total),
            });
        }
        panels.push(engine.panel(p.a, m, p.left)?);
        panels.push(engine.panel(m, p.b, p.right)?);
    }
}

/// Integrates `exp(log_f(y))` over `[lo, hi]` where the integrand behaves like
/// `(y - lo)^{singular_exponent_lo}` and `(hi - y)^{singular_exponent_hi}` at
/// the endpoints.
pub fn integrate_on_interval<F>(
    log_f: F,
    lo: f64,
    hi: f64,
    singular_exponent_lo: f64,
    singular_exponent_hi: f64,
    cfg: &QuadratureConfig,
) -> Result<LogScaledValue>
where
    F: Fn(f64) -> f64,
{
    for e in [singular_exponent_lo, singular_exponent_hi] {
        if !(e > -1.0) {
            return Err(Error::SingularEndpoint(e));
        }
    }
    integrate_log(&|p: QuadPoint| log_f(p.y), lo, hi, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AKind {
    A1,
    A2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AIntegralArgs {
    pub kind: AKind,
    pub d: usize,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl AIntegralArgs {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(invalid("dimension d must be at least 2"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(invalid("alpha must be positive and finite"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(invalid("beta must be nonnegative and finite"));
        }
        if !self.kappa.is_finite() {
            return Err(invalid("kappa must be finite"));
        }
        if self.kind == AKind::A2 && self.kappa < 0.0 {
            return Err(invalid("A2 requires kappa >= 0"));
        }
        if self.kappa.abs() / self.alpha > MAX_KAPPA_OVER_ALPHA * (1.0 + 1e-12) {
            return Err(invalid("|kappa| / alpha exceeds 500"));
        }
        Ok(())
    }
}

/// Logarithm of `A₁(κ, α, β) = ∫₀¹ e^{(κ/α) y^α} y^β (1 - y²)^{(d-3)/2} dy` or
/// `A₂(κ, α, β) = ∫₀² e^{-(κ/α) y^α} (2 - y)^{(d-3)/2} y^{(d-3)/2 + β} dy`.
pub fn integrate_a(args: &AIntegralArgs, cfg: &QuadratureConfig) -> Result<LogScaledValue> {
    args.validate()?;
    let s = args.kappa / args.alpha;
    match args.kind {
        AKind::A1 => a1(args.d, s, args.alpha, args.beta, cfg),
        AKind::A2 => a2(args.d, s, args.alpha, args.beta, cfg),
    }
}

#[inline]
fn half_exponent(d: usize) -> f64 {
    (d as f64 - 3.0) / 2.0
}

/// Common weight `y^β (1 - y²)^e` on `[0, 1]` in log form.
#[inline]
fn ln_a1_weight(p: QuadPoint, beta: f64, e: f64, ln_y: f64) -> f64 {
    let mut w = 0.0;
    if beta != 0.0 {
        w += beta * ln_y;
    }
    if e != 0.0 {
        w += e * (libm::log(p.to_hi) + libm::log1p(p.y));
    }
    w
}

/// `A₁` with exponent scale `s = κ/α` (either sign).
pub(crate) fn a1(d: usize, s: f64, alpha: f64, beta: f64, cfg: &QuadratureConfig) -> Result<LogScaledValue> {
    let e = half_exponent(d);
    let f = |p: QuadPoint| {
        let ln_y = libm::log(p.from_lo);
        s * libm::exp(alpha * ln_y) + ln_a1_weight(p, beta, e, ln_y)
    };
    integrate_log(&f, 0.0, 1.0, cfg)
}

/// `A₁(κ) + A₁(-κ)`, integrated as `2 cosh` to avoid two separate passes.
pub(crate) fn a1_even(d: usize, s: f64, alpha: f64, beta: f64, cfg: &QuadratureConfig) -> Result<LogScaledValue> {
    let e = half_exponent(d);
    let f = |p: QuadPoint| {
        let ln_y = libm::log(p.from_lo);
        let z = s.abs() * libm::exp(alpha * ln_y);
        z + libm::log1p(libm::exp(-2.0 * z)) + ln_a1_weight(p, beta, e, ln_y)
    };
    integrate_log(&f, 0.0, 1.0, cfg)
}

/// `A₁(κ) - A₁(-κ)`, integrated as `2 sinh`; exact zero for `κ = 0`.
pub(crate) fn a1_odd(d: usize, s: f64, alpha: f64, beta: f64, cfg: &QuadratureConfig) -> Result<LogScaledValue> {
    if s == 0.0 {
        return Ok(LogScaledValue::ZERO);
    }
    let e = half_exponent(d);
    let abs_s = s.abs();
    let f = |p: QuadPoint| {
        let ln_y = libm::log(p.from_lo);
        let z = abs_s * libm::exp(alpha * ln_y);
        if z == 0.0 {
            return f64::NEG_INFINITY;
        }
        z + ln_one_minus_exp(-2.0 * z) + ln_a1_weight(p, beta, e, ln_y)
    };
    let v = integrate_log(&f, 0.0, 1.0, cfg)?;
    Ok(if s < 0.0 { v.neg() } else { v })
}

/// `A₂` with exponent scale `s = κ/α ≥ 0`.
pub(crate) fn a2(d: usize, s: f64, alpha: f64, beta: f64, cfg: &QuadratureConfig) -> Result<LogScaledValue> {
    let e = half_exponent(d);
    let f = |p: QuadPoint| {
        let ln_y = libm::log(p.from_lo);
        let mut v = -s * libm::exp(alpha * ln_y);
        if e + beta != 0.0 {
            v += (e + beta) * ln_y;
        }
        if e != 0.0 {
            v += e * libm::log(p.to_hi);
        }
        v
    };
    integrate_log(&f, 0.0, 2.0, cfg)
}

/// `log c_{j,d}(κ, α)` for the three families, densities taken with respect to
/// the (unnormalized) surface measure on `S^{d-1}`.
pub fn log_norm_const(
    family: Family,
    d: usize,
    kappa: f64,
    alpha: f64,
    cfg: &QuadratureConfig,
) -> Result<LogScaledValue> {
    if kappa < 0.0 {
        return Err(invalid("kappa must be nonnegative"));
    }
    let args = AIntegralArgs {
        kind: AKind::A1,
        d,
        kappa,
        alpha,
        beta: 0.0,
    };
    args.validate()?;
    let s = kappa / alpha;
    let ln_s = ln_sphere_area(d - 2);
    let ln_integral = match family {
        Family::I => a1_even(d, s, alpha, 0.0, cfg)?.log_magnitude,
        Family::II => a2(d, s, alpha, 0.0, cfg)?.log_magnitude,
        Family::Axial => core::f64::consts::LN_2 + a1(d, s, alpha, 0.0, cfg)?.log_magnitude,
    };
    Ok(LogScaledValue::from_ln(-(ln_s + ln_integral)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn a(kind: AKind, d: usize, kappa: f64, alpha: f64, beta: f64) -> f64 {
        integrate_a(
            &AIntegralArgs {
                kind,
                d,
                kappa,
                alpha,
                beta,
            },
            &cfg(),
        )
        .unwrap()
        .log_magnitude
    }

    /// Composite Simpson on `φ`, with `y = sin φ` for A₁ and `y = 1 - cos φ`
    /// for A₂, so the oracle shares no substitution with the engine.
    fn simpson_a(kind: AKind, d: usize, kappa: f64, alpha: f64, beta: f64, n: usize) -> f64 {
        let e = (d as f64 - 3.0) / 2.0;
        let s = kappa / alpha;
        let (upper, f): (f64, &dyn Fn(f64) -> f64) = match kind {
            AKind::A1 => (PI / 2.0, &move |phi: f64| {
                let y = libm::sin(phi);
                let c = libm::cos(phi);
                libm::exp(s * libm::pow(y, alpha)) * libm::pow(y, beta) * libm::pow(c, 2.0 * e + 1.0)
            }),
            AKind::A2 => (PI, &move |phi: f64| {
                let y = 1.0 - libm::cos(phi);
                let sn = libm::sin(phi);
                libm::exp(-s * libm::pow(y, alpha)) * libm::pow(y, beta) * libm::pow(sn, 2.0 * e + 1.0)
            }),
        };
        let h = upper / n as f64;
        let mut acc = f(0.0) + f(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn trivial_and_closed_form_values() {
        assert!(a(AKind::A1, 3, 0.0, 1.0, 0.0).abs() < 1e-14);
        let expected = libm::log((libm::exp(2.0) - 1.0) / 2.0);
        assert!((a(AKind::A1, 3, 2.0, 1.0, 0.0) - expected).abs() < 1e-12);
        assert!((a(AKind::A2, 3, 0.0, 1.0, 0.0) - libm::log(2.0)).abs() < 1e-14);
    }

    #[test]
    fn matches_simpson_oracle() {
        let got = libm::exp(a(AKind::A1, 4, 3.0, 1.5, 2.0));
        let oracle = simpson_a(AKind::A1, 4, 3.0, 1.5, 2.0, 1_000_000);
        assert!(((got - oracle) / oracle).abs() < 1e-9, "{got} vs {oracle}");
        let got = libm::exp(a(AKind::A2, 5, 4.0, 0.7, 1.3));
        let oracle = simpson_a(AKind::A2, 5, 4.0, 0.7, 1.3, 1_000_000);
        assert!(((got - oracle) / oracle).abs() < 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn vmf_constant() {
        for kappa in [0.1, 0.5, 1.0, 2.0, 7.0, 50.0] {
            let exact = libm::log(kappa / (4.0 * PI * libm::sinh(kappa)));
            let c1 = log_norm_const(Family::I, 3, kappa, 1.0, &cfg()).unwrap();
            assert!((c1.log_magnitude - exact).abs() < 1e-8 * exact.abs(), "{kappa}");
            // Type II at α = 1 carries the factor e^{-κ} of -κ/2 ‖x - μ‖² = κ t - κ.
            let c2 = log_norm_const(Family::II, 3, kappa, 1.0, &cfg()).unwrap();
            assert!((c2.log_magnitude - (exact + kappa)).abs() < 1e-8 * exact.abs(), "{kappa}");
        }
        let ln_uniform = -libm::log(4.0 * PI);
        for alpha in [0.3, 1.0, 2.5] {
            for fam in [Family::I, Family::II, Family::Axial] {
                let c = log_norm_const(fam, 3, 0.0, alpha, &cfg()).unwrap();
                assert!((c.log_magnitude - ln_uniform).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn circle_case_constants() {
        // d = 2, α = 1: c = 1 / (2π I₀(κ)).
        let kappa = 1.5f64;
        let mut i0 = 0.0;
        let mut term = 1.0;
        for k in 0..40 {
            if k > 0 {
                term *= (kappa / 2.0) * (kappa / 2.0) / (k * k) as f64;
            }
            i0 += term;
        }
        let c = log_norm_const(Family::I, 2, kappa, 1.0, &cfg()).unwrap();
        assert!((c.log_magnitude + libm::log(2.0 * PI * i0)).abs() < 1e-11);
    }

    #[test]
    fn generic_interval_examples() {
        let c = cfg();
        let v = integrate_on_interval(|_| 0.0, 0.0, 1.0, 0.0, 0.0, &c).unwrap();
        assert!(v.log_magnitude.abs() < 1e-14);
        let v = integrate_on_interval(|y| -0.5 * libm::log(y), 0.0, 1.0, -0.5, 0.0, &c).unwrap();
        assert!((v.log_magnitude - libm::log(2.0)).abs() < 1e-12);
        let v = integrate_on_interval(|y| -0.5 * libm::log(1.0 - y * y), -1.0, 1.0, -0.5, -0.5, &c);
        assert!((v.unwrap().log_magnitude - libm::log(PI)).abs() < 1e-9);
        assert_eq!(
            integrate_on_interval(|_| 0.0, 0.0, 1.0, -1.0, 0.0, &c),
            Err(Error::SingularEndpoint(-1.0))
        );
    }

    #[test]
    fn large_kappa_is_finite() {
        for kind in [AKind::A1, AKind::A2] {
            for alpha in [0.05, 1.0, 20.0] {
                let v = a(kind, 3, 500.0 * alpha, alpha, 1.0);
                assert!(v.is_finite(), "{kind:?} {alpha}");
            }
        }
        let v = a(AKind::A1, 3, -500.0, 1.0, 0.0);
        assert!(v.is_finite());
    }

    #[test]
    fn monotone_in_kappa() {
        for d in [2usize, 3, 5] {
            for alpha in [0.5, 1.0, 3.0] {
                for beta in [0.0, 1.0, 2.5] {
                    let mut prev1 = f64::NEG_INFINITY;
                    let mut prev2 = f64::INFINITY;
                    for i in 0..12 {
                        let kappa = -6.0 + i as f64;
                        let v1 = a(AKind::A1, d, kappa, alpha, beta);
                        assert!(v1 > prev1);
                        prev1 = v1;
                        if kappa >= 0.0 {
                            let v2 = a(AKind::A2, d, kappa, alpha, beta);
                            assert!(v2 < prev2);
                            prev2 = v2;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn kappa_derivative_of_a2() {
        for (d, kappa, alpha) in [(3usize, 2.0, 1.5), (4, 0.7, 0.6), (2, 5.0, 2.2)] {
            let h = 1e-5 * kappa;
            let up = libm::exp(a(AKind::A2, d, kappa + h, alpha, 0.0));
            let down = libm::exp(a(AKind::A2, d, kappa - h, alpha, 0.0));
            let fd = (up - down) / (2.0 * h);
            let exact = -libm::exp(a(AKind::A2, d, kappa, alpha, alpha)) / alpha;
            assert!(((fd - exact) / exact).abs() < 1e-6);
        }
    }

    #[test]
    fn even_and_odd_parts_agree_with_direct_integrals() {
        for (d, s, alpha, beta) in [(3usize, 2.0, 1.0, 1.0), (4, 3.0, 0.5, 0.0), (2, 0.4, 2.5, 1.5)] {
            let c = cfg();
            let plus = a1(d, s, alpha, beta, &c).unwrap().value();
            let minus = a1(d, -s, alpha, beta, &c).unwrap().value();
            let even = a1_even(d, s, alpha, beta, &c).unwrap().value();
            let odd = a1_odd(d, s, alpha, beta, &c).unwrap().value();
            assert!(((plus + minus) - even).abs() < 1e-10 * even);
            assert!(((plus - minus) - odd).abs() < 1e-9 * odd);
        }
    }

    #[test]
    fn sphere_integral_matches_lat_long_grid() {
        // ∫_{S²} e^{κ μᵀx} dσ by a fine midpoint grid in (θ, φ).
        let kappa = 1.7;
        let n_theta = 2000;
        let h = PI / n_theta as f64;
        let mut acc = 0.0;
        for i in 0..n_theta {
            let th = (i as f64 + 0.5) * h;
            acc += libm::exp(kappa * libm::cos(th)) * libm::sin(th) * h;
        }
        acc *= 2.0 * PI;
        let via_a = 2.0 * PI
            * (libm::exp(a(AKind::A1, 3, kappa, 1.0, 0.0)) + libm::exp(a(AKind::A1, 3, -kappa, 1.0, 0.0)));
        assert!(((acc - via_a) / via_a).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_arguments() {
        let c = cfg();
        let bad = [
            AIntegralArgs { kind: AKind::A1, d: 1, kappa: 1.0, alpha: 1.0, beta: 0.0 },
            AIntegralArgs { kind: AKind::A1, d: 3, kappa: 1.0, alpha: 0.0, beta: 0.0 },
            AIntegralArgs { kind: AKind::A1, d: 3, kappa: 1.0, alpha: 1.0, beta: -1.0 },
            AIntegralArgs { kind: AKind::A2, d: 3, kappa: -1.0, alpha: 1.0, beta: 0.0 },
            AIntegralArgs { kind: AKind::A1, d: 3, kappa: 600.0, alpha: 1.0, beta: 0.0 },
        ];
        for args in bad {
            assert!(matches!(integrate_a(&args, &c), Err(Error::InvalidArgs(_))));
        }
        let tight = QuadratureConfig { max_subdivisions: 1, rel_tol: 1e-15, ..c };
        let r = integrate_a(
            &AIntegralArgs { kind: AKind::A1, d: 3, kappa: 400.0, alpha: 0.8, beta: 0.3 },
            &tight,
        );
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }
}
