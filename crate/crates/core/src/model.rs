//! The three generalized von Mises-Fisher families.
//!
//! Writing `t = μᵀx` and `s = κ/α`, the log-densities with respect to surface
//! measure are
//!
//! * Type I: `log c₁ + s · t^<α>` where `t^<α> = |t|^α sgn t`
//! * Type II: `log c₂ - s · (‖x - μ‖² / 2)^α`
//! * Axial: `log c₃ + s · |t|^α`
//!
//! Type I and II reduce to von Mises-Fisher at `α = 1`; Axial reduces to
//! Watson at `α = 2`.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::numeric::{dot, ln_sphere_area, log_add_exp, norm, signed_pow};
use crate::quadrature::{self, QuadratureConfig};

pub const ALPHA_MIN: f64 = 0.01;
pub const ALPHA_MAX: f64 = 50.0;
/// Tolerance on `‖x‖ - 1` accepted by [`UnitVector::new`].
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    I,
    II,
    Axial,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::I, Family::II, Family::Axial];

    pub fn name(self) -> &'static str {
        match self {
            Family::I => "I",
            Family::II => "II",
            Family::Axial => "Axial",
        }
    }

    /// The moment kind whose expectation appears in the family's density.
    pub fn natural_moment(self) -> MomentKind {
        match self {
            Family::I => MomentKind::SignedPower,
            Family::II => MomentKind::ChordalPower,
            Family::Axial => MomentKind::AbsPower,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "1" | "type1" | "typei" => Ok(Family::I),
            "ii" | "2" | "type2" | "typeii" => Ok(Family::II),
            "axial" | "3" | "iii" => Ok(Family::Axial),
            _ => Err(invalid(alloc::format!("unknown family `{s}`"))),
        }
    }
}

/// A point on `S^{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector {
    coords: Vec<f64>,
}

impl UnitVector {
    /// Accepts `coords` as is when its norm is within [`UNIT_TOL`] of 1.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(invalid("unit vectors need at least 2 coordinates"));
        }
        let n = norm(&coords);
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(invalid(alloc::format!("vector norm {n} is not 1")));
        }
        Ok(Self { coords })
    }

    /// Rescales `coords` to unit length.
    pub fn normalized(mut coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(invalid("unit vectors need at least 2 coordinates"));
        }
        let n = norm(&coords);
        if !(n > 0.0) || !n.is_finite() {
            return Err(invalid("cannot normalize a zero or non-finite vector"));
        }
        coords.iter_mut().for_each(|c| *c /= n);
        Ok(Self { coords })
    }

    /// The `i`-th standard basis vector of `R^d`.
    pub fn basis(d: usize, i: usize) -> Result<Self> {
        if d < 2 || i >= d {
            return Err(invalid("basis index out of range"));
        }
        let mut coords = alloc::vec![0.0; d];
        coords[i] = 1.0;
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.coords, other)
    }

    pub fn negated(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GvmfParams {
    pub family: Family,
    pub d: usize,
    pub alpha: f64,
    pub kappa: f64,
    pub mu: UnitVector,
}

impl GvmfParams {
    pub fn new(family: Family, alpha: f64, kappa: f64, mu: UnitVector) -> Result<Self> {
        let p = Self {
            family,
            d: mu.dim(),
            alpha,
            kappa,
            mu,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `μ = e₁`.
    pub fn canonical(family: Family, d: usize, alpha: f64, kappa: f64) -> Result<Self> {
        Self::new(family, alpha, kappa, UnitVector::basis(d, 0)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(invalid("dimension d must be at least 2"));
        }
        if self.mu.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: self.mu.dim(),
            });
        }
        if !(ALPHA_MIN..=ALPHA_MAX).contains(&self.alpha) {
            return Err(invalid(alloc::format!(
                "alpha = {} outside [{ALPHA_MIN}, {ALPHA_MAX}]",
                self.alpha
            )));
        }
        let kmax = quadrature::MAX_KAPPA_OVER_ALPHA * self.alpha;
        if !(self.kappa >= 0.0 && self.kappa <= kmax * (1.0 + 1e-12)) {
            return Err(invalid(alloc::format!(
                "kappa = {} outside [0, {kmax}]",
                self.kappa
            )));
        }
        Ok(())
    }

    /// `κ/α`, the scale multiplying the sufficient statistic.
    pub fn scale(&self) -> f64 {
        self.kappa / self.alpha
    }

    pub fn with_mu(&self, mu: UnitVector) -> Result<Self> {
        Self::new(self.family, self.alpha, self.kappa, mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    /// `E[(μᵀX)^<β>]`
    SignedPower,
    /// `E[|μᵀX|^β]`
    AbsPower,
    /// `E[‖X - μ‖^{2β}]`
    ChordalPower,
}

impl MomentKind {
    pub fn name(self) -> &'static str {
        match self {
            MomentKind::SignedPower => "signed_power",
            MomentKind::AbsPower => "abs_power",
            MomentKind::ChordalPower => "chordal_power",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSpec {
    pub beta: f64,
    pub kind: MomentKind,
}

/// Per-observation sufficient statistic `g(x)`: `t^<α>` (I), `(1 - t)^α`
/// computed from the chordal distance (II), `|t|^α` (Axial). The
/// log-density is `log c + s · g` for I and Axial and `log c - s · g` for II.
#[inline]
pub fn sufficient_statistic(family: Family, alpha: f64, mu: &[f64], x: &[f64]) -> f64 {
    match family {
        Family::I => signed_pow(dot(mu, x), alpha),
        Family::Axial => libm::pow(dot(mu, x).abs(), alpha),
        Family::II => {
            let half_sq: f64 = 0.5 * mu.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum::<f64>();
            libm::pow(half_sq, alpha)
        }
    }
}

/// Sign with which the sufficient statistic enters the exponent.
#[inline]
pub fn exponent_sign(family: Family) -> f64 {
    match family {
        Family::II => -1.0,
        _ => 1.0,
    }
}

/// Model expectation of [`sufficient_statistic`] under `(κ, α)` in dimension `d`.
pub fn expected_statistic(family: Family, d: usize, kappa: f64, alpha: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let s = kappa / alpha;
    Ok(match family {
        Family::I => {
            quadrature::a1_odd(d, s, alpha, alpha, cfg)?.ratio(quadrature::a1_even(d, s, alpha, 0.0, cfg)?)
        }
        Family::II => quadrature::a2(d, s, alpha, alpha, cfg)?.ratio(quadrature::a2(d, s, alpha, 0.0, cfg)?),
        Family::Axial => quadrature::a1(d, s, alpha, alpha, cfg)?.ratio(quadrature::a1(d, s, alpha, 0.0, cfg)?),
    })
}

/// Model variance of the sufficient statistic; `d/dκ` of [`expected_statistic`]
/// equals this divided by `α` (times the exponent sign).
pub fn statistic_variance(family: Family, d: usize, kappa: f64, alpha: f64, cfg: &QuadratureConfig) -> Result<f64> {
    statistic_mean_variance(family, d, kappa, alpha, cfg).map(|(_, v)| v)
}

/// Mean and variance of the sufficient statistic from one set of integrals.
pub fn statistic_mean_variance(
    family: Family,
    d: usize,
    kappa: f64,
    alpha: f64,
    cfg: &QuadratureConfig,
) -> Result<(f64, f64)> {
    let s = kappa / alpha;
    let (m1, m2) = match family {
        Family::I => {
            let z = quadrature::a1_even(d, s, alpha, 0.0, cfg)?;
            (
                quadrature::a1_odd(d, s, alpha, alpha, cfg)?.ratio(z),
                quadrature::a1_even(d, s, alpha, 2.0 * alpha, cfg)?.ratio(z),
            )
        }
        Family::II => {
            let z = quadrature::a2(d, s, alpha, 0.0, cfg)?;
            (
                quadrature::a2(d, s, alpha, alpha, cfg)?.ratio(z),
                quadrature::a2(d, s, alpha, 2.0 * alpha, cfg)?.ratio(z),
            )
        }
        Family::Axial => {
            let z = quadrature::a1(d, s, alpha, 0.0, cfg)?;
            (
                quadrature::a1(d, s, alpha, alpha, cfg)?.ratio(z),
                quadrature::a1(d, s, alpha, 2.0 * alpha, cfg)?.ratio(z),
            )
        }
    };
    Ok((m1, (m2 - m1 * m1).max(0.0)))
}

/// A GvMF law with its normalizing constant precomputed.
#[derive(Debug, Clone)]
pub struct Gvmf {
    params: GvmfParams,
    log_c: f64,
    cfg: QuadratureConfig,
}

impl Gvmf {
    pub fn new(params: GvmfParams) -> Result<Self> {
        Self::with_config(params, QuadratureConfig::default())
    }

    pub fn with_config(params: GvmfParams, cfg: QuadratureConfig) -> Result<Self> {
        params.validate()?;
        let log_c = quadrature::log_norm_const(params.family, params.d, params.kappa, params.alpha, &cfg)?
            .log_magnitude;
        Ok(Self { params, log_c, cfg })
    }

    pub fn params(&self) -> &GvmfParams {
        &self.params
    }

    pub fn log_norm_const(&self) -> f64 {
        self.log_c
    }

    /// Log-density at raw coordinates; no dimension or norm checks.
    #[inline]
    pub fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let p = &self.params;
        if p.kappa == 0.0 {
            return self.log_c;
        }
        let g = sufficient_statistic(p.family, p.alpha, p.mu.as_slice(), x);
        self.log_c + exponent_sign(p.family) * p.scale() * g
    }

    pub fn log_density(&self, x: &UnitVector) -> Result<f64> {
        if x.dim() != self.params.d {
            return Err(Error::DimensionMismatch {
                expected: self.params.d,
                found: x.dim(),
            });
        }
        Ok(self.log_density_unchecked(x.as_slice()))
    }

    pub fn moment(&self, spec: MomentSpec) -> Result<f64> {
        let p = &self.params;
        if !(spec.beta >= 0.0) || !spec.beta.is_finite() {
            return Err(invalid("moment order beta must be nonnegative"));
        }
        if spec.kind != p.family.natural_moment() {
            return Err(Error::UnsupportedMomentKind {
                kind: spec.kind.name(),
                family: p.family.name(),
            });
        }
        let (d, s, a, b, cfg) = (p.d, p.scale(), p.alpha, spec.beta, &self.cfg);
        Ok(match p.family {
            Family::I => quadrature::a1_odd(d, s, a, b, cfg)?.ratio(quadrature::a1_even(d, s, a, 0.0, cfg)?),
            Family::II => {
                libm::exp2(b) * quadrature::a2(d, s, a, b, cfg)?.ratio(quadrature::a2(d, s, a, 0.0, cfg)?)
            }
            Family::Axial => quadrature::a1(d, s, a, b, cfg)?.ratio(quadrature::a1(d, s, a, 0.0, cfg)?),
        })
    }

    /// `‖E X‖`; zero for the Axial family, whose law is symmetric under `x ↦ -x`.
    pub fn mean_resultant_length(&self) -> Result<f64> {
        let p = &self.params;
        let (d, s, a, cfg) = (p.d, p.scale(), p.alpha, &self.cfg);
        Ok(match p.family {
            Family::I => quadrature::a1_odd(d, s, a, 1.0, cfg)?.ratio(quadrature::a1_even(d, s, a, 0.0, cfg)?),
            Family::II => 1.0 - quadrature::a2(d, s, a, 1.0, cfg)?.ratio(quadrature::a2(d, s, a, 0.0, cfg)?),
            Family::Axial => 0.0,
        })
    }

    /// Differential entropy with respect to surface measure.
    pub fn entropy(&self) -> Result<f64> {
        let p = &self.params;
        if p.kappa == 0.0 {
            return Ok(-self.log_c);
        }
        let e = expected_statistic(p.family, p.d, p.kappa, p.alpha, &self.cfg)?;
        Ok(-self.log_c - exponent_sign(p.family) * p.scale() * e)
    }
}

pub fn log_density(p: &GvmfParams, x: &UnitVector) -> Result<f64> {
    Gvmf::new(p.clone())?.log_density(x)
}

pub fn moment(p: &GvmfParams, spec: MomentSpec) -> Result<f64> {
    Gvmf::new(p.clone())?.moment(spec)
}

pub fn mean_resultant_length(p: &GvmfParams) -> Result<f64> {
    Gvmf::new(p.clone())?.mean_resultant_length()
}

pub fn entropy(p: &GvmfParams) -> Result<f64> {
    Gvmf::new(p.clone())?.entropy()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    /// `"von Mises-Fisher"` or `"Watson"`.
    pub reference: &'static str,
    pub points_checked: usize,
    pub max_abs_log_discrepancy: f64,
    pub reference_log_norm_const: f64,
}

/// `ln I_ν(x)` by its power series, summed in log space.
fn ln_bessel_i(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let lx2 = libm::log(0.5 * x);
    let mut acc = f64::NEG_INFINITY;
    let mut k = 0.0f64;
    loop {
        let t = (2.0 * k + nu) * lx2 - libm::lgamma(k + 1.0) - libm::lgamma(k + nu + 1.0);
        acc = log_add_exp(acc, t);
        if k > 0.5 * x && t < acc - 40.0 {
            break;
        }
        k += 1.0;
    }
    acc
}

/// Unit vector orthogonal to `mu`, obtained by Gram-Schmidt on the basis
/// vector least aligned with it.
pub(crate) fn orthogonal_unit(mu: &[f64]) -> Vec<f64> {
    let d = mu.len();
    let mut best = 0;
    for i in 1..d {
        if mu[i].abs() < mu[best].abs() {
            best = i;
        }
    }
    let mut v = alloc::vec![0.0; d];
    v[best] = 1.0;
    let proj = mu[best];
    for i in 0..d {
        v[i] -= proj * mu[i];
    }
    let n = norm(&v);
    v.iter_mut().for_each(|c| *c /= n);
    v
}

/// Compares the GvMF log-density with the classical law it reduces to:
/// von Mises-Fisher (families I and II at `α = 1`, closed form through a
/// Bessel series) or Watson (Axial at `α = 2`, normalizer by composite
/// Simpson on a fine grid). With the `κ/α` scaling of the exponent the
/// Watson concentration is `κ/2`.
pub fn validate_reduction(p: &GvmfParams) -> Result<ReductionReport> {
    let expected_alpha = match p.family {
        Family::I | Family::II => 1.0,
        Family::Axial => 2.0,
    };
    if p.alpha != expected_alpha {
        return Err(Error::WrongAlphaForReduction {
            expected: expected_alpha,
            found: p.alpha,
        });
    }
    let model = Gvmf::new(p.clone())?;
    let d = p.d as f64;
    let k = p.kappa;
    let (reference, ref_log_c) = match p.family {
        Family::I | Family::II => {
            let log_c = if k == 0.0 {
                -ln_sphere_area(p.d - 1)
            } else {
                let nu = d / 2.0 - 1.0;
                nu * libm::log(k) - (d / 2.0) * libm::log(2.0 * core::f64::consts::PI) - ln_bessel_i(nu, k)
            };
            ("von Mises-Fisher", log_c)
        }
        Family::Axial => {
            let k = 0.5 * k;
            // ∫_{S^{d-1}} e^{k t²} dσ = S_{d-2} ∫₀^π e^{κ cos²θ} sin^{d-2}θ dθ.
            let n = 200_000usize;
            let h = core::f64::consts::PI / n as f64;
            let f = |th: f64| {
                let c = libm::cos(th);
                let w = if p.d == 2 { 0.0 } else { (d - 2.0) * libm::log(libm::sin(th)) };
                k * c * c - k + w
            };
            let mut acc = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let v = libm::exp(f(i as f64 * h));
                if v.is_finite() {
                    acc += w * v;
                }
            }
            let ln_int = k + libm::log(acc * h / 3.0);
            ("Watson", -(ln_sphere_area(p.d - 2) + ln_int))
        }
    };
    let mu = p.mu.as_slice();
    let v = orthogonal_unit(mu);
    let points = 201;
    let mut max_gap = 0.0f64;
    for i in 0..points {
        let theta = core::f64::consts::PI * i as f64 / (points - 1) as f64;
        let (st, ct) = (libm::sin(theta), libm::cos(theta));
        let x: Vec<f64> = mu.iter().zip(&v).map(|(m, w)| ct * m + st * w).collect();
        let t = dot(mu, &x);
        let reference_value = match p.family {
            Family::I | Family::II => ref_log_c + k * t,
            Family::Axial => ref_log_c + 0.5 * k * t * t,
        };
        let gap = (model.log_density_unchecked(&x) - reference_value).abs();
        max_gap = max_gap.max(gap);
    }
    Ok(ReductionReport {
        reference,
        points_checked: points,
        max_abs_log_discrepancy: max_gap,
        reference_log_norm_const: ref_log_c,
    })
}

impl fmt::Display for ReductionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} reduction: {} points, max |Δ log f| = {:.3e}",
            self.reference, self.points_checked, self.max_abs_log_discrepancy
        )
    }
}

/// Parses a comma-separated direction such as `"1,0,0"` and normalizes it.
pub fn parse_direction(s: &str) -> Result<UnitVector> {
    let mut coords = Vec::new();
    for part in s.split(',') {
        let v: f64 = part
            .trim()
            .parse()
            .map_err(|_| invalid(alloc::format!("bad coordinate `{part}`")))?;
        coords.push(v);
    }
    UnitVector::normalized(coords)
}
