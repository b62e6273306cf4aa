//! Maximum likelihood and method-of-moments estimation.
//!
//! Both estimators are two-stage: the direction `μ̂` comes first (normalized
//! sample mean, or the principal axis of the orientation tensor for the axial
//! family) and `(α, κ)` are then fitted with `μ̂` held fixed.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::model::{
    exponent_sign, statistic_mean_variance, sufficient_statistic, Family, GvmfParams, UnitVector,
};
use crate::numeric::{dot, norm, CompensatedSum};
use crate::optimize::{brent_root, nelder_mead, Bounds, NelderMeadOptions};
use crate::quadrature::{self, log_norm_const, QuadratureConfig};
use crate::sample::DirectionSample;

/// Smallest sample size accepted by [`fit_mle`].
pub const MIN_FIT_SIZE: usize = 30;
/// Norm of the sample mean below which no mean direction is defined.
pub const MIN_MEAN_NORM: f64 = 1e-8;
/// Largest allowed violation of the fixed-α score equation at an MLE.
pub const SCORE_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Mle,
    Mom,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Mle => "MLE",
            Estimator::Mom => "MoM",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mle" => Ok(Estimator::Mle),
            "mom" => Ok(Estimator::Mom),
            _ => Err(invalid(alloc::format!("unknown estimator {s:?}"))),
        }
    }
}

/// The compact parameter region searched by both estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Bounds on `κ/α`.
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for SearchBox {
    fn default() -> Self {
        Self {
            alpha_min: 0.05,
            alpha_max: 20.0,
            scale_min: 0.01,
            scale_max: 200.0,
        }
    }
}

impl SearchBox {
    fn log_bounds(&self) -> Bounds {
        Bounds {
            lower: alloc::vec![libm::log(self.alpha_min), libm::log(self.scale_min)],
            upper: alloc::vec![libm::log(self.alpha_max), libm::log(self.scale_max)],
        }
    }

    pub fn contains(&self, alpha: f64, kappa: f64) -> bool {
        let s = kappa / alpha;
        let slack = 1e-9;
        alpha >= self.alpha_min * (1.0 - slack)
            && alpha <= self.alpha_max * (1.0 + slack)
            && s >= self.scale_min * (1.0 - slack)
            && s <= self.scale_max * (1.0 + slack)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub quadrature: QuadratureConfig,
    pub simplex: NelderMeadOptions,
    pub search_box: SearchBox,
    /// Starting `(α, κ)` for the simplex search.
    pub init: Option<(f64, f64)>,
    /// After the profile fit, re-optimize jointly over `(α, κ, μ)` with `μ`
    /// expressed in tangent coordinates at `μ̂`.
    pub refine_direction: bool,
    /// Number of log-spaced `α` values scanned by the moment solver.
    pub mom_grid: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            quadrature: QuadratureConfig::default(),
            simplex: NelderMeadOptions {
                f_tol: 1e-10,
                x_tol: 1e-5,
                max_iter: 500,
                initial_step: 0.3,
                record_history: false,
            },
            search_box: SearchBox::default(),
            init: None,
            refine_direction: false,
            mom_grid: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: GvmfParams,
    pub method: Estimator,
    /// Total log-likelihood at `params` (maximum likelihood fits only).
    pub loglik: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective_history: Option<Vec<f64>>,
    pub diagnostic: Option<String>,
}

/// Orientation tensor `T̄ = (1/N) Σ xᵢxᵢᵀ` (row-major) and
/// `V̄ = (1/N) Σ xᵢᵀ T̄ xᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationStats {
    pub d: usize,
    pub t_bar: Vec<f64>,
    pub v_bar: f64,
}

impl OrientationStats {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.t_bar[i * self.d + j]
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let d = self.d;
        let mut acc = 0.0;
        for i in 0..d {
            acc += x[i] * dot(&self.t_bar[i * d..(i + 1) * d], x);
        }
        acc
    }

    /// Eigenvalues in decreasing order with matching unit eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let m = DMatrix::from_row_slice(self.d, self.d, &self.t_bar);
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..self.d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = order
            .iter()
            .map(|&i| {
                let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
                fix_axis_sign(&mut v);
                v
            })
            .collect();
        (values, vectors)
    }

    /// Principal axis with its first nonzero component made positive.
    pub fn principal_axis(&self) -> Result<UnitVector> {
        let (_, vectors) = self.eigen();
        UnitVector::normalized(vectors.into_iter().next().expect("d >= 2"))
    }
}

fn fix_axis_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().copied().find(|c| c.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
}

pub fn orientation_stats(sample: &DirectionSample) -> Result<OrientationStats> {
    let d = sample.dim();
    let n = sample.len();
    if n < d {
        return Err(invalid(alloc::format!("orientation tensor needs at least {d} points, got {n}")));
    }
    let mut acc = alloc::vec![CompensatedSum::new(); d * d];
    for x in sample.rows() {
        for i in 0..d {
            for j in i..d {
                acc[i * d + j].add(x[i] * x[j]);
            }
        }
    }
    let mut t_bar = alloc::vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let v = acc[i * d + j].value() / n as f64;
            t_bar[i * d + j] = v;
            t_bar[j * d + i] = v;
        }
    }
    let mut stats = OrientationStats { d, t_bar, v_bar: 0.0 };
    let mut v = CompensatedSum::new();
    for x in sample.rows() {
        v.add(stats.quadratic_form(x));
    }
    stats.v_bar = v.value() / n as f64;
    debug_assert!(
        (stats.v_bar - stats.t_bar.iter().map(|t| t * t).sum::<f64>()).abs() <= 1e-12,
        "V̄ must equal trace(T̄²)"
    );
    Ok(stats)
}

/// `X̄ / ‖X̄‖`.
pub fn mean_direction(sample: &DirectionSample) -> Result<UnitVector> {
    let m = sample.mean();
    if norm(&m) < MIN_MEAN_NORM {
        return Err(Error::DegenerateMeanDirection);
    }
    UnitVector::normalized(m)
}

/// First-stage direction estimate for `family`.
pub fn estimate_direction(family: Family, sample: &DirectionSample) -> Result<UnitVector> {
    match family {
        Family::I | Family::II => mean_direction(sample),
        Family::Axial => orientation_stats(sample)?.principal_axis(),
    }
}

/// Total log-likelihood `N log c + (±κ/α) Σ g(xᵢ)`.
pub fn log_likelihood(p: &GvmfParams, sample: &DirectionSample) -> Result<f64> {
    log_likelihood_with(p, sample, &QuadratureConfig::default())
}

pub fn log_likelihood_with(p: &GvmfParams, sample: &DirectionSample, cfg: &QuadratureConfig) -> Result<f64> {
    p.validate()?;
    if sample.dim() != p.d {
        return Err(Error::DimensionMismatch {
            expected: p.d,
            found: sample.dim(),
        });
    }
    let log_c = log_norm_const(p.family, p.d, p.kappa, p.alpha, cfg)?.log_magnitude;
    let mut g = CompensatedSum::new();
    for x in sample.rows() {
        g.add(sufficient_statistic(p.family, p.alpha, p.mu.as_slice(), x));
    }
    Ok(sample.len() as f64 * log_c + exponent_sign(p.family) * p.scale() * g.value())
}

/// Per-observation logarithms of the base of the sufficient statistic, so
/// that `mean g(α)` costs one exponential per point.
struct StatisticSummary {
    family: Family,
    ln_base: Vec<f64>,
    negative: Vec<bool>,
}

impl StatisticSummary {
    fn new(family: Family, mu: &[f64], sample: &DirectionSample) -> Self {
        let mut ln_base = Vec::with_capacity(sample.len());
        let mut negative = Vec::with_capacity(sample.len());
        for x in sample.rows() {
            let (b, neg) = match family {
                Family::I => {
                    let t = dot(mu, x);
                    (t.abs(), t < 0.0)
                }
                Family::Axial => (dot(mu, x).abs(), false),
                Family::II => {
                    let sq: f64 = mu.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
                    (0.5 * sq, false)
                }
            };
            ln_base.push(libm::log(b));
            negative.push(neg);
        }
        Self {
            family,
            ln_base,
            negative,
        }
    }

    fn mean(&self, alpha: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        for (l, neg) in self.ln_base.iter().zip(&self.negative) {
            let v = libm::exp(alpha * l);
            acc.add(if *neg { -v } else { v });
        }
        acc.value() / self.ln_base.len() as f64
    }

    /// Mean log-likelihood per observation.
    fn mean_loglik(&self, d: usize, alpha: f64, kappa: f64, cfg: &QuadratureConfig) -> Result<f64> {
        let log_c = log_norm_const(self.family, d, kappa, alpha, cfg)?.log_magnitude;
        Ok(log_c + exponent_sign(self.family) * (kappa / alpha) * self.mean(alpha))
    }
}

/// Solves the fixed-α score equation `E_κ[g] = target` for `κ` in
/// `[κ_lo, κ_hi]` by safeguarded Newton steps, starting from `kappa0`.
/// Returns the root (or the violated bound) and the final residual.
fn solve_score_kappa(
    family: Family,
    d: usize,
    alpha: f64,
    target: f64,
    kappa0: f64,
    (mut lo, mut hi): (f64, f64),
    cfg: &QuadratureConfig,
) -> Result<(f64, f64)> {
    // E[g] is increasing in κ for I and Axial and decreasing for II.
    let sign = exponent_sign(family);
    let mut kappa = kappa0.clamp(lo, hi);
    let mut residual = f64::INFINITY;
    for _ in 0..60 {
        let (mean, var) = statistic_mean_variance(family, d, kappa, alpha, cfg)?;
        residual = mean - target;
        if residual.abs() <= 1e-13 {
            break;
        }
        // Residual increasing in κ after multiplying by `sign`.
        if sign * residual > 0.0 {
            hi = kappa;
        } else {
            lo = kappa;
        }
        let slope = sign * var / alpha;
        let mut next = if var > 0.0 { kappa - residual / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - kappa).abs();
        kappa = next;
        if step <= 1e-12 * kappa.max(1e-3) || hi - lo <= 1e-12 * hi {
            let (mean, _) = statistic_mean_variance(family, d, kappa, alpha, cfg)?;
            residual = mean - target;
            break;
        }
    }
    Ok((kappa, residual))
}

fn check_sample(sample: &DirectionSample, min: usize) -> Result<()> {
    if sample.len() < min {
        return Err(invalid(alloc::format!(
            "fitting needs at least {min} observations, got {}",
            sample.len()
        )));
    }
    Ok(())
}

/// Maximum likelihood fit: `μ̂` from the first stage, then a simplex search
/// over `(ln α, ln κ/α)` maximizing the mean log-likelihood, then a Newton
/// polish of `κ` on the fixed-α score equation, which is verified to hold to
/// [`SCORE_TOL`] whenever `κ` is interior. Maxima on the edge of the search
/// box are valid estimates and are noted in the diagnostic.
pub fn fit_mle(family: Family, sample: &DirectionSample, opts: &FitOptions) -> Result<FitResult> {
    check_sample(sample, MIN_FIT_SIZE)?;
    let mu = estimate_direction(family, sample)?;
    fit_mle_given_direction(family, sample, mu, opts)
}

pub fn fit_mle_given_direction(
    family: Family,
    sample: &DirectionSample,
    mu: UnitVector,
    opts: &FitOptions,
) -> Result<FitResult> {
    let d = sample.dim();
    if mu.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: mu.dim(),
        });
    }
    let cfg = &opts.quadrature;
    let sb = &opts.search_box;
    let summary = StatisticSummary::new(family, mu.as_slice(), sample);
    let bounds = sb.log_bounds();

    let start = match opts.init {
        Some((a, k)) => [libm::log(a), libm::log(k / a)],
        None => initial_guess(family, d, &summary, sb, cfg)?,
    };
    let mut failure: Option<Error> = None;
    let objective = |x: &[f64]| -> f64 {
        let alpha = libm::exp(x[0]);
        let kappa = alpha * libm::exp(x[1]);
        match summary.mean_loglik(d, alpha, kappa, cfg) {
            Ok(v) => -v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let nm = nelder_mead(objective, &start, Some(&bounds), &opts.simplex);
    if let Some(e) = failure.filter(|e| !e.is_numeric_failure()) {
        return Err(e);
    }
    let mut iterations = nm.iterations;
    let mut history = nm.history;
    let mut converged = nm.converged;
    let mut diagnostic = None;
    if !nm.converged {
        diagnostic = Some(alloc::format!(
            "simplex search stopped after {} iterations",
            nm.iterations
        ));
    }
    let mut alpha = libm::exp(nm.x[0]);
    let mut kappa = alpha * libm::exp(nm.x[1]);
    let mut mu = mu;

    if opts.refine_direction {
        let refined = refine_with_direction(family, sample, &mu, alpha, kappa, opts)?;
        iterations += refined.iterations;
        history.extend(refined.history);
        alpha = refined.alpha;
        kappa = refined.kappa;
        mu = refined.mu;
        converged &= refined.converged;
    }

    let summary = StatisticSummary::new(family, mu.as_slice(), sample);
    let target = summary.mean(alpha);
    let kappa_range = (sb.scale_min * alpha, sb.scale_max * alpha);
    let (k_polished, residual) = solve_score_kappa(family, d, alpha, target, kappa, kappa_range, cfg)?;
    kappa = k_polished;
    let kappa_on_bound =
        (kappa - kappa_range.0).abs() <= 1e-9 * kappa_range.0 || (kappa_range.1 - kappa).abs() <= 1e-9 * kappa_range.1;
    if residual.abs() > SCORE_TOL && !kappa_on_bound {
        converged = false;
        diagnostic = Some(alloc::format!(
            "score equation violated by {residual:.3e} at alpha = {alpha}, kappa = {kappa}"
        ));
    } else if kappa_on_bound || bounds.touches(&[libm::log(alpha), libm::log(kappa / alpha)], 1e-6) {
        // The maximum over the compact search box is attained on its edge.
        diagnostic.get_or_insert_with(|| {
            alloc::format!("maximum on the boundary of the search box (alpha = {alpha}, kappa = {kappa})")
        });
    }
    let params = GvmfParams::new(family, alpha, kappa, mu)?;
    let loglik = sample.len() as f64 * summary.mean_loglik(d, alpha, kappa, cfg)?;
    Ok(FitResult {
        params,
        method: Estimator::Mle,
        loglik: Some(loglik),
        converged,
        iterations,
        objective_history: opts.simplex.record_history.then_some(history),
        diagnostic,
    })
}

/// Starting point: `α = 1` (2 for the axial family) and the `κ` solving the
/// score equation there.
fn initial_guess(
    family: Family,
    d: usize,
    summary: &StatisticSummary,
    sb: &SearchBox,
    cfg: &QuadratureConfig,
) -> Result<[f64; 2]> {
    let alpha: f64 = match family {
        Family::Axial => 2.0,
        _ => 1.0,
    };
    let alpha = alpha.clamp(sb.alpha_min, sb.alpha_max);
    let target = summary.mean(alpha);
    let range = (sb.scale_min * alpha, sb.scale_max * alpha);
    let (kappa, _) = solve_score_kappa(family, d, alpha, target, alpha, range, cfg)?;
    let ln_s = libm::log(kappa / alpha).clamp(libm::log(sb.scale_min), libm::log(sb.scale_max));
    Ok([libm::log(alpha), ln_s])
}

struct Refined {
    alpha: f64,
    kappa: f64,
    mu: UnitVector,
    iterations: usize,
    history: Vec<f64>,
    converged: bool,
}

/// Orthonormal basis of the tangent space at `mu`.
fn tangent_basis(mu: &[f64]) -> Vec<Vec<f64>> {
    let d = mu.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    for i in 0..d {
        if basis.len() == d - 1 {
            break;
        }
        let mut v = alloc::vec![0.0; d];
        v[i] = 1.0;
        let p = mu[i];
        v.iter_mut().zip(mu).for_each(|(a, m)| *a -= p * m);
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= p * c);
        }
        let n = norm(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|a| *a /= n);
            basis.push(v);
        }
    }
    basis
}

fn refine_with_direction(
    family: Family,
    sample: &DirectionSample,
    mu0: &UnitVector,
    alpha: f64,
    kappa: f64,
    opts: &FitOptions,
) -> Result<Refined> {
    let d = sample.dim();
    let basis = tangent_basis(mu0.as_slice());
    let direction = |w: &[f64]| -> Vec<f64> {
        let mut m = mu0.as_slice().to_vec();
        for (wj, b) in w.iter().zip(&basis) {
            m.iter_mut().zip(b).for_each(|(a, c)| *a += wj * c);
        }
        let n = norm(&m);
        m.iter_mut().for_each(|a| *a /= n);
        m
    };
    let sb = &opts.search_box;
    let mut lower = alloc::vec![libm::log(sb.alpha_min), libm::log(sb.scale_min)];
    let mut upper = alloc::vec![libm::log(sb.alpha_max), libm::log(sb.scale_max)];
    lower.extend(core::iter::repeat_n(-1.0, d - 1));
    upper.extend(core::iter::repeat_n(1.0, d - 1));
    let bounds = Bounds { lower, upper };
    let cfg = &opts.quadrature;
    let n = sample.len() as f64;
    let objective = |x: &[f64]| -> f64 {
        let a = libm::exp(x[0]);
        let k = a * libm::exp(x[1]);
        let m = direction(&x[2..]);
        let Ok(log_c) = log_norm_const(family, d, k, a, cfg) else {
            return f64::INFINITY;
        };
        let mut g = CompensatedSum::new();
        for row in sample.rows() {
            g.add(sufficient_statistic(family, a, &m, row));
        }
        -(log_c.log_magnitude + exponent_sign(family) * (k / a) * g.value() / n)
    };
    let mut x0 = alloc::vec![libm::log(alpha), libm::log(kappa / alpha)];
    x0.extend(core::iter::repeat_n(0.0, d - 1));
    let simplex = NelderMeadOptions {
        initial_step: 0.05,
        max_iter: opts.simplex.max_iter * 2,
        ..opts.simplex.clone()
    };
    let nm = nelder_mead(objective, &x0, Some(&bounds), &simplex);
    let a = libm::exp(nm.x[0]);
    Ok(Refined {
        alpha: a,
        kappa: a * libm::exp(nm.x[1]),
        mu: UnitVector::normalized(direction(&nm.x[2..]))?,
        iterations: nm.iterations,
        history: nm.history,
        converged: nm.converged,
    })
}

/// The two moment conditions used for `family`: sample targets and the
/// matching model moments as functions of `(κ, α)`.
struct MomentSystem {
    family: Family,
    d: usize,
    target1: f64,
    target2: f64,
}

impl MomentSystem {
    fn model1(&self, kappa: f64, alpha: f64, cfg: &QuadratureConfig) -> Result<f64> {
        let (d, s) = (self.d, kappa / alpha);
        Ok(match self.family {
            Family::I => quadrature::a1_odd(d, s, alpha, 1.0, cfg)?.ratio(quadrature::a1_even(d, s, alpha, 0.0, cfg)?),
            Family::II => quadrature::a2(d, s, alpha, 1.0, cfg)?.ratio(quadrature::a2(d, s, alpha, 0.0, cfg)?),
            Family::Axial => quadrature::a1(d, s, alpha, 2.0, cfg)?.ratio(quadrature::a1(d, s, alpha, 0.0, cfg)?),
        })
    }

    fn model2(&self, kappa: f64, alpha: f64, cfg: &QuadratureConfig) -> Result<f64> {
        let (d, s) = (self.d, kappa / alpha);
        Ok(match self.family {
            Family::I => quadrature::a1_odd(d, s, alpha, 0.0, cfg)?.ratio(quadrature::a1_even(d, s, alpha, 0.0, cfg)?),
            Family::II => quadrature::a2(d, s, alpha, 2.0, cfg)?.ratio(quadrature::a2(d, s, alpha, 0.0, cfg)?),
            Family::Axial => quadrature::a1(d, s, alpha, 4.0, cfg)?.ratio(quadrature::a1(d, s, alpha, 0.0, cfg)?),
        })
    }

    /// `κ(α)` solving the first equation inside the box, if any.
    fn kappa_for(&self, alpha: f64, sb: &SearchBox, cfg: &QuadratureConfig) -> Result<Option<f64>> {
        let (lo, hi) = (sb.scale_min * alpha, sb.scale_max * alpha);
        let mut failure = None;
        let root = brent_root(
            |k| match self.model1(k, alpha, cfg) {
                Ok(v) => v - self.target1,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            lo,
            hi,
            1e-11 * hi,
            200,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(root)
    }
}

/// Sample targets of the two moment equations.
fn moment_system(family: Family, sample: &DirectionSample) -> Result<(MomentSystem, UnitVector)> {
    let d = sample.dim();
    let n = sample.len() as f64;
    match family {
        Family::I => {
            let m = sample.mean();
            let r = norm(&m);
            if r < MIN_MEAN_NORM {
                return Err(Error::DegenerateMeanDirection);
            }
            let mut signs = CompensatedSum::new();
            for x in sample.rows() {
                let t = dot(&m, x);
                signs.add(if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                });
            }
            let mu = UnitVector::normalized(m)?;
            let sys = MomentSystem {
                family,
                d,
                target1: r,
                target2: signs.value() / n,
            };
            Ok((sys, mu))
        }
        Family::II => {
            let m = sample.mean();
            let r = norm(&m);
            if r < MIN_MEAN_NORM {
                return Err(Error::DegenerateMeanDirection);
            }
            let mu = UnitVector::normalized(m)?;
            let mut q = CompensatedSum::new();
            for x in sample.rows() {
                let sq: f64 = mu.as_slice().iter().zip(x).map(|(a, b)| (b - a) * (b - a)).sum();
                q.add(sq * sq);
            }
            let sys = MomentSystem {
                family,
                d,
                target1: 1.0 - r,
                target2: q.value() / (4.0 * n),
            };
            Ok((sys, mu))
        }
        Family::Axial => {
            let stats = orientation_stats(sample)?;
            let mu = stats.principal_axis()?;
            let (m2, m4) = axial_moment_targets(&stats, sample);
            let sys = MomentSystem {
                family,
                d,
                target1: m2,
                target2: m4,
            };
            Ok((sys, mu))
        }
    }
}

/// Estimates of `E[(μᵀX)²]` and `E[(μᵀX)⁴]` from the orientation tensor alone,
/// using `xᵀT̄x = c + (m₂ - c)(μᵀx)²` with `c = (1 - m₂)/(d - 1)` for a
/// rotationally symmetric axial law.
pub fn axial_moment_targets(stats: &OrientationStats, sample: &DirectionSample) -> (f64, f64) {
    let d = stats.d as f64;
    let excess = (d * stats.v_bar - 1.0).max(0.0);
    let m2 = 1.0 / d + libm::sqrt((d - 1.0) * excess) / d;
    let centre = 1.0 / d - libm::sqrt(excess) / (d * libm::sqrt(d - 1.0));
    if excess == 0.0 {
        return (m2, f64::NAN);
    }
    let mut acc = CompensatedSum::new();
    for x in sample.rows() {
        let q = stats.quadratic_form(x) - centre;
        acc.add(q * q);
    }
    let m4 = acc.value() / sample.len() as f64 * (d - 1.0) / excess;
    (m2, m4)
}

/// Method-of-moments fit. For each `α` on a log grid over the search box the
/// first equation is solved for `κ(α)`; the first sign change of the second
/// equation's residual along the grid is then refined by Brent's method.
pub fn fit_mom(family: Family, sample: &DirectionSample, opts: &FitOptions) -> Result<FitResult> {
    check_sample(sample, 2)?;
    let cfg = &opts.quadrature;
    let sb = &opts.search_box;
    let (sys, mu) = moment_system(family, sample)?;
    let n_grid = opts.mom_grid.max(2);
    let (la, lb) = (libm::log(sb.alpha_min), libm::log(sb.alpha_max));
    let mut evaluations = 0usize;
    let mut residual_at = |alpha: f64| -> Result<Option<(f64, f64)>> {
        evaluations += 1;
        if !sys.target2.is_finite() {
            return Ok(None);
        }
        match sys.kappa_for(alpha, sb, cfg)? {
            Some(k) => Ok(Some((sys.model2(k, alpha, cfg)? - sys.target2, k))),
            None => Ok(None),
        }
    };
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for i in 0..n_grid {
        let alpha = libm::exp(la + (lb - la) * i as f64 / (n_grid - 1) as f64);
        let cur = residual_at(alpha)?;
        if let (Some((a0, r0)), Some((r1, k1))) = (prev, cur) {
            if r1 == 0.0 {
                bracket = Some((alpha, alpha, k1));
                break;
            }
            if r0.signum() != r1.signum() {
                bracket = Some((a0, alpha, k1));
                break;
            }
        }
        prev = cur.map(|(r, _)| (alpha, r));
    }
    let Some((a0, a1, _)) = bracket else {
        let params = fallback_params(family, &mu, sb)?;
        return Ok(FitResult {
            params,
            method: Estimator::Mom,
            loglik: None,
            converged: false,
            iterations: evaluations,
            objective_history: None,
            diagnostic: Some(
                alloc::format!(
                    "{}",
                    Error::NoRootInBox(alloc::format!(
                        "moment equations for family {} have no solution in the search box",
                        family.name()
                    ))
                ),
            ),
        });
    };
    let mut failure = None;
    let mut inner_evals = 0usize;
    let alpha = if a0 == a1 {
        a0
    } else {
        let root = brent_root(
            |lnalpha| {
                inner_evals += 1;
                let alpha = libm::exp(lnalpha);
                let k = match sys.kappa_for(alpha, sb, cfg) {
                    Ok(Some(k)) => k,
                    Ok(None) => return f64::NAN,
                    Err(e) => {
                        failure.get_or_insert(e);
                        return f64::NAN;
                    }
                };
                match sys.model2(k, alpha, cfg) {
                    Ok(v) => v - sys.target2,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            libm::log(a0),
            libm::log(a1),
            1e-10,
            200,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        libm::exp(root.unwrap_or_else(|| libm::log(a1)))
    };
    let kappa = sys
        .kappa_for(alpha, sb, cfg)?
        .ok_or_else(|| Error::NoRootInBox(alloc::format!("first moment equation at alpha = {alpha}")))?;
    Ok(FitResult {
        params: GvmfParams::new(family, alpha, kappa, mu)?,
        method: Estimator::Mom,
        loglik: None,
        converged: true,
        iterations: evaluations + inner_evals,
        objective_history: None,
        diagnostic: None,
    })
}

fn fallback_params(family: Family, mu: &UnitVector, sb: &SearchBox) -> Result<GvmfParams> {
    let alpha = libm::sqrt(sb.alpha_min * sb.alpha_max).clamp(sb.alpha_min, sb.alpha_max);
    GvmfParams::new(family, alpha, sb.scale_min * alpha, mu.clone())
}

/// Dispatches to [`fit_mle`] or [`fit_mom`].
pub fn fit(family: Family, estimator: Estimator, sample: &DirectionSample, opts: &FitOptions) -> Result<FitResult> {
    match estimator {
        Estimator::Mle => fit_mle(family, sample, opts),
        Estimator::Mom => fit_mom(family, sample, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_gvmf, SeedSpec};

    fn draw(family: Family, alpha: f64, kappa: f64, n: usize, seed: u64) -> DirectionSample {
        let p = GvmfParams::canonical(family, 3, alpha, kappa).unwrap();
        sample_gvmf(&p, SeedSpec::new(seed, 0), n).unwrap()
    }

    fn rotation(seed: u64) -> [[f64; 3]; 3] {
        // Rotation from a unit quaternion built from the seed.
        let mut q = [1.0 + seed as f64 * 0.37, 0.3 - seed as f64 * 0.11, -0.8, 0.45];
        let n = libm::sqrt(q.iter().map(|v| v * v).sum());
        q.iter_mut().for_each(|v| *v /= n);
        let [w, x, y, z] = q;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
            [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
            [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    fn apply(r: &[[f64; 3]; 3], v: &[f64], out: &mut [f64]) {
        for i in 0..3 {
            out[i] = (0..3).map(|j| r[i][j] * v[j]).sum();
        }
    }

    #[test]
    fn loglik_uniform_and_single_point() {
        let s = draw(Family::I, 1.0, 2.0, 50, 1);
        for fam in Family::ALL {
            let p = GvmfParams::canonical(fam, 3, 1.3, 0.0).unwrap();
            let ll = log_likelihood(&p, &s).unwrap();
            let expect = -50.0 * libm::log(4.0 * core::f64::consts::PI);
            assert!((ll - expect).abs() < 1e-10, "{fam}: {ll} vs {expect}");
        }
        let p = GvmfParams::canonical(Family::I, 3, 1.0, 2.0).unwrap();
        let one = DirectionSample::new(3, alloc::vec![1.0, 0.0, 0.0], crate::Provenance::Derived("mu".into())).unwrap();
        let ll = log_likelihood(&p, &one).unwrap();
        let oracle = crate::model::log_density(&p, &UnitVector::basis(3, 0).unwrap()).unwrap();
        assert!((ll - oracle).abs() < 1e-12);
        let vmf = libm::log(2.0 / (4.0 * core::f64::consts::PI * libm::sinh(2.0))) + 2.0;
        assert!((ll - vmf).abs() < 1e-10);
        assert!((ll - (libm::log(0.043882) + 2.0)).abs() < 1e-4);
    }

    #[test]
    fn loglik_rotation_invariant() {
        let r = rotation(3);
        for fam in Family::ALL {
            let p = GvmfParams::canonical(fam, 3, 1.7, 3.0).unwrap();
            let s = draw(fam, 1.7, 3.0, 200, 4);
            let rs = s.map_rows(|_, src, dst| apply(&r, src, dst));
            let mut rmu = [0.0; 3];
            apply(&r, p.mu.as_slice(), &mut rmu);
            let rp = p.with_mu(UnitVector::normalized(rmu.to_vec()).unwrap()).unwrap();
            let a = log_likelihood(&p, &s).unwrap();
            let b = log_likelihood(&rp, &rs).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs(), "{fam}: {a} vs {b}");
        }
    }

    #[test]
    fn orientation_tensor_basics() {
        let data: Vec<f64> = (0..5).flat_map(|_| [1.0, 0.0, 0.0]).collect();
        let s = DirectionSample::new(3, data, crate::Provenance::Derived("e1".into())).unwrap();
        let st = orientation_stats(&s).unwrap();
        assert_eq!(st.t_bar, alloc::vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(st.v_bar, 1.0);
        assert_eq!(st.principal_axis().unwrap().as_slice(), &[1.0, 0.0, 0.0]);

        let u = draw(Family::I, 1.0, 0.0, 100_000, 9);
        let st = orientation_stats(&u).unwrap();
        let trace: f64 = (0..3).map(|i| st.entry(i, i)).sum();
        assert!((trace - 1.0).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 / 3.0 } else { 0.0 };
                assert!((st.entry(i, j) - expect).abs() < 0.01);
            }
        }
        assert!((st.v_bar - 1.0 / 3.0).abs() < 1e-3);
        let tr_sq: f64 = st.t_bar.iter().map(|t| t * t).sum();
        assert!((st.v_bar - tr_sq).abs() < 1e-12);

        let tooshort = DirectionSample::new(3, alloc::vec![1.0, 0.0, 0.0], crate::Provenance::Derived("x".into())).unwrap();
        assert!(orientation_stats(&tooshort).is_err());
    }

    #[test]
    fn rescaled_tensor_shares_principal_axis() {
        let r = rotation(5);
        let s = draw(Family::Axial, 1.5, 6.0, 5000, 11).map_rows(|_, a, b| apply(&r, a, b));
        let st = orientation_stats(&s).unwrap();
        let d = 3.0;
        let f = libm::sqrt((d - 1.0) / (d * st.v_bar - 1.0));
        let mut m = st.clone();
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 / d } else { 0.0 };
                m.t_bar[i * 3 + j] = f * (st.entry(i, j) - id) + id;
            }
        }
        let a = st.principal_axis().unwrap();
        let b = m.principal_axis().unwrap();
        assert!((a.dot(b.as_slice()) - 1.0).abs() < 1e-10);
        let mut mu = [0.0; 3];
        apply(&r, &[1.0, 0.0, 0.0], &mut mu);
        assert!(a.dot(&mu).abs() > 0.99);
    }

    #[test]
    fn axial_moment_targets_match_direct_moments() {
        for (alpha, kappa) in [(2.0, 4.0), (1.5, 2.0), (0.7, 3.0)] {
            let s = draw(Family::Axial, alpha, kappa, 200_000, 21);
            let st = orientation_stats(&s).unwrap();
            let (m2, m4) = axial_moment_targets(&st, &s);
            let (mut d2, mut d4) = (0.0, 0.0);
            for x in s.rows() {
                d2 += x[0] * x[0];
                d4 += libm::pow(x[0], 4.0);
            }
            let n = s.len() as f64;
            let (d2, d4) = (d2 / n, d4 / n);
            let cfg = QuadratureConfig::default();
            let sys = MomentSystem {
                family: Family::Axial,
                d: 3,
                target1: 0.0,
                target2: 0.0,
            };
            let e2 = sys.model1(kappa, alpha, &cfg).unwrap();
            let e4 = sys.model2(kappa, alpha, &cfg).unwrap();
            assert!((m2 - d2).abs() < 3e-3, "m2 {m2} vs {d2}");
            assert!((m4 - d4).abs() < 3e-3, "m4 {m4} vs {d4}");
            assert!((m2 - e2).abs() < 5e-3 && (m4 - e4).abs() < 5e-3, "{m2} {e2} {m4} {e4}");
        }
    }

    #[test]
    fn mle_large_sample_type_i() {
        let s = draw(Family::I, 1.0, 2.0, 100_000, 31);
        let r = fit_mle(Family::I, &s, &FitOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.diagnostic);
        assert!((r.params.alpha - 1.0).abs() < 0.05, "{}", r.params.alpha);
        assert!((r.params.kappa - 2.0).abs() < 0.1, "{}", r.params.kappa);
        let m = fit_mom(Family::I, &s, &FitOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.params.alpha - 1.0).abs() < 0.1 && (m.params.kappa - 2.0).abs() < 0.2);
    }

    #[test]
    fn mle_score_equation_holds() {
        let cfg = QuadratureConfig::default();
        for (fam, a, k) in [(Family::I, 1.0, 2.0), (Family::II, 0.6, 3.0), (Family::Axial, 2.0, 4.0)] {
            let s = draw(fam, a, k, 1000, 41);
            let r = fit_mle(fam, &s, &FitOptions::default()).unwrap();
            assert!(r.converged, "{fam}: {:?}", r.diagnostic);
            let p = &r.params;
            let mut g = 0.0;
            for x in s.rows() {
                g += sufficient_statistic(fam, p.alpha, p.mu.as_slice(), x);
            }
            let model = crate::model::expected_statistic(fam, 3, p.kappa, p.alpha, &cfg).unwrap();
            assert!((model - g / 1000.0).abs() < SCORE_TOL);
            // Stationary in α along the profile.
            let ll = |alpha: f64| {
                let kp = solve_score_kappa(fam, 3, alpha, StatisticSummary::new(fam, p.mu.as_slice(), &s).mean(alpha), p.kappa, (1e-3, 1e3), &cfg).unwrap().0;
                log_likelihood(&GvmfParams::new(fam, alpha, kp, p.mu.clone()).unwrap(), &s).unwrap()
            };
            let best = r.loglik.unwrap();
            assert!(ll(p.alpha * 1.02) <= best + 1e-6 && ll(p.alpha / 1.02) <= best + 1e-6);
        }
    }

    #[test]
    fn fits_are_rotation_equivariant() {
        let r = rotation(8);
        for fam in Family::ALL {
            let s = draw(fam, 1.4, 3.0, 800, 51);
            let rs = s.map_rows(|_, a, b| apply(&r, a, b));
            for est in [Estimator::Mle, Estimator::Mom] {
                let f0 = fit(fam, est, &s, &FitOptions::default()).unwrap();
                let f1 = fit(fam, est, &rs, &FitOptions::default()).unwrap();
                assert!((f0.params.alpha - f1.params.alpha).abs() < 1e-6, "{fam} {est}");
                assert!((f0.params.kappa - f1.params.kappa).abs() < 1e-6, "{fam} {est}");
                let mut rmu = [0.0; 3];
                apply(&r, f0.params.mu.as_slice(), &mut rmu);
                assert!((f1.params.mu.dot(&rmu).abs() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn axial_fits_ignore_sign_flips() {
        let s = draw(Family::Axial, 2.0, 4.0, 600, 61);
        let flipped = s.map_rows(|i, a, b| {
            let sgn = if (i * 7919) % 3 == 0 { -1.0 } else { 1.0 };
            b.iter_mut().zip(a).for_each(|(o, v)| *o = sgn * v);
        });
        for est in [Estimator::Mle, Estimator::Mom] {
            let f0 = fit(Family::Axial, est, &s, &FitOptions::default()).unwrap();
            let f1 = fit(Family::Axial, est, &flipped, &FitOptions::default()).unwrap();
            assert!((f0.params.alpha - f1.params.alpha).abs() < 1e-10);
            assert!((f0.params.kappa - f1.params.kappa).abs() < 1e-10);
            assert!((f0.params.mu.dot(f1.params.mu.as_slice()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn axial_mom_on_uniform_data() {
        let s = draw(Family::Axial, 1.0, 0.0, 100_000, 71);
        let st = orientation_stats(&s).unwrap();
        assert!((st.v_bar - 1.0 / 3.0).abs() < 1e-3);
        let m = fit_mom(Family::Axial, &s, &FitOptions::default()).unwrap();
        assert!(m.params.kappa <= 0.2, "{:?}", m);
    }

    #[test]
    fn degenerate_inputs() {
        let data = alloc::vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0];
        let s = DirectionSample::new(3, data, crate::Provenance::Derived("pair".into())).unwrap();
        assert_eq!(fit_mom(Family::I, &s, &FitOptions::default()), Err(Error::DegenerateMeanDirection));
        assert_eq!(mean_direction(&s), Err(Error::DegenerateMeanDirection));
        assert!(fit_mle(Family::I, &s, &FitOptions::default()).is_err());

        // A ring at μᵀx = 0.1: mean length 0.1 but every sign positive.
        let ring: Vec<f64> = (0..100)
            .flat_map(|i| {
                let phi = i as f64 * 0.0628;
                let r = libm::sqrt(1.0 - 0.01);
                [0.1, r * libm::cos(phi), r * libm::sin(phi)]
            })
            .collect();
        let s = DirectionSample::new(3, ring, crate::Provenance::Derived("ring".into())).unwrap();
        let m = fit_mom(Family::I, &s, &FitOptions::default()).unwrap();
        assert!(!m.converged);
        assert!(m.diagnostic.unwrap().contains("no solution"));
    }

    #[test]
    fn direction_refinement_does_not_lower_likelihood() {
        let s = draw(Family::I, 2.5, 6.0, 500, 81);
        let base = fit_mle(Family::I, &s, &FitOptions::default()).unwrap();
        let opts = FitOptions {
            refine_direction: true,
            ..FitOptions::default()
        };
        let refined = fit_mle(Family::I, &s, &opts).unwrap();
        assert!(refined.loglik.unwrap() >= base.loglik.unwrap() - 1e-6);
        assert!(refined.params.mu.dot(base.params.mu.as_slice()) > 0.99);
    }

    #[test]
    fn boundary_maximum_is_a_valid_fit() {
        // A girdle-like Fisher-Bingham sample pushes the Type I fit to α → 0.
        let fb = crate::gof::PowerScenario::TypeIFb.alternative(20).unwrap();
        let s = crate::sampling::sample_fisher_bingham(&fb, SeedSpec::new(0, 0), 1000).unwrap().sample;
        let r = fit_mle(Family::I, &s, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.params.alpha, SearchBox::default().alpha_min);
        assert!(r.diagnostic.unwrap().contains("boundary"));
    }

    #[test]
    fn history_is_recorded_on_request() {
        let s = draw(Family::II, 1.0, 2.0, 300, 91);
        let mut opts = FitOptions::default();
        opts.simplex.record_history = true;
        let r = fit_mle(Family::II, &s, &opts).unwrap();
        let h = r.objective_history.unwrap();
        assert!(!h.is_empty() && h.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit_mle(Family::II, &s.select(&[0, 1, 2], s.provenance.clone()), &opts).is_err());
    }
}
