//! Entropy-based goodness-of-fit tests for the GvMF families.
//!
//! The statistic is `T̂ = H(θ̂) - Ĥ_{N,k}`: the entropy of the fitted law minus
//! the nearest-neighbour entropy estimate. Under the null both terms converge
//! to the same limit, so large `|T̂|` is evidence against the family. Critical
//! values come from Monte Carlo simulation under a fully specified GvMF law.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::exec::{ReplicateExecutor, Sequential};
use crate::inference::{fit, Estimator, FitOptions, FitResult};
use crate::knn::{estimate_entropy_with, EntropyEstimate, KnnConfig};
use crate::model::{Family, Gvmf, GvmfParams, UnitVector};
use crate::sample::DirectionSample;
use crate::sampling::{FisherBinghamParams, FisherBinghamSampler, GvmfSampler, SeedSpec};

/// Largest fraction of null replicates that may be discarded for failed fits.
pub const MAX_DROPPED_FRACTION: f64 = 0.02;
/// Smallest replicate count giving a usable 95% quantile.
pub const MIN_NULL_REPLICATES: usize = 100;

const NULL_STREAM_TAG: u64 = 0x6e75_6c6c;
const POWER_STREAM_TAG: u64 = 0x706f_7765;

#[derive(Debug, Clone, PartialEq)]
pub struct GofConfig {
    pub family: Family,
    pub k: usize,
    pub n_null_replicates: usize,
    pub beta_level: f64,
    pub estimator: Estimator,
    pub seed: SeedSpec,
    pub fit: FitOptions,
    pub knn: KnnConfig,
}

impl GofConfig {
    pub fn new(family: Family, seed: SeedSpec) -> Self {
        Self {
            family,
            k: 3,
            n_null_replicates: 500,
            beta_level: 0.05,
            estimator: Estimator::Mle,
            seed,
            fit: FitOptions::default(),
            knn: KnnConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if self.n_null_replicates < MIN_NULL_REPLICATES {
            return Err(invalid(alloc::format!(
                "at least {MIN_NULL_REPLICATES} null replicates are required, got {}",
                self.n_null_replicates
            )));
        }
        if !(self.beta_level > 0.0 && self.beta_level < 1.0) {
            return Err(invalid("significance level must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Simulated null values of `|T̂|`, in replicate order, plus accounting for
/// replicates whose fit did not converge.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    pub abs_statistics: Vec<f64>,
    pub dropped: usize,
    pub requested: usize,
}

impl NullDistribution {
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.abs_statistics.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Order statistic `⌈(1 - β)(R + 1)⌉` of the retained replicates, clamped
    /// to the sample.
    pub fn critical_value(&self, beta_level: f64) -> f64 {
        quantile_order_statistic(&self.sorted(), beta_level)
    }

    /// `(1 + #{|T̂_r| ≥ |t|}) / (R + 1)`.
    pub fn p_value(&self, abs_statistic: f64) -> f64 {
        let exceed = self.abs_statistics.iter().filter(|v| **v >= abs_statistic).count();
        (1 + exceed) as f64 / (self.abs_statistics.len() + 1) as f64
    }
}

pub fn quantile_order_statistic(sorted: &[f64], beta_level: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty set");
    let r = sorted.len();
    let rank = libm::ceil((1.0 - beta_level) * (r + 1) as f64) as usize;
    sorted[rank.clamp(1, r) - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GofResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub fitted: FitResult,
    pub entropy: EntropyEstimate,
    pub null: NullDistribution,
}

/// `H(θ̂) - Ĥ`, the entropy of the fitted law minus the kNN estimate.
pub fn test_statistic(fitted: &FitResult, entropy: &EntropyEstimate, fit_opts: &FitOptions) -> Result<f64> {
    if !fitted.converged {
        return Err(Error::UnconvergedFit(
            fitted.diagnostic.clone().unwrap_or_else(|| "fit did not converge".into()),
        ));
    }
    let model = Gvmf::with_config(fitted.params.clone(), fit_opts.quadrature)?;
    Ok(model.entropy()? - entropy.value)
}

/// Fit, entropy and statistic for one sample.
pub fn evaluate_sample<E: ReplicateExecutor>(
    sample: &DirectionSample,
    cfg: &GofConfig,
    exec: &E,
) -> Result<(FitResult, EntropyEstimate, f64)> {
    let fitted = fit(cfg.family, cfg.estimator, sample, &cfg.fit)?;
    let entropy = estimate_entropy_with(sample, cfg.k, &cfg.knn, exec)?;
    let t = test_statistic(&fitted, &entropy, &cfg.fit)?;
    Ok((fitted, entropy, t))
}

/// Replicate failures that count as dropped rather than aborting the run.
fn is_droppable(e: &Error) -> bool {
    matches!(e, Error::UnconvergedFit(_) | Error::NoRootInBox(_)) || e.is_numeric_failure()
}

/// Simulates `cfg.n_null_replicates` samples of size `n` from `params` and
/// returns the resulting `|T̂|` values. Replicate `r` draws from stream `r` of
/// a seed derived from `cfg.seed`, so results do not depend on the executor.
pub fn null_distribution<E: ReplicateExecutor>(
    params: &GvmfParams,
    n: usize,
    cfg: &GofConfig,
    exec: &E,
) -> Result<NullDistribution> {
    cfg.validate()?;
    if params.family != cfg.family {
        return Err(invalid("null parameters and test configuration disagree on the family"));
    }
    let sampler = GvmfSampler::new(params.clone())?;
    let base = cfg.seed.derive(NULL_STREAM_TAG);
    let outcomes = exec.map(cfg.n_null_replicates, |r| -> Result<Option<f64>> {
        let sample = sampler.sample(base.stream(r as u64), n)?;
        match evaluate_sample(&sample, cfg, &Sequential) {
            Ok((_, _, t)) => Ok(Some(t.abs())),
            Err(e) if is_droppable(&e) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut abs_statistics = Vec::with_capacity(cfg.n_null_replicates);
    let mut dropped = 0;
    for o in outcomes {
        match o? {
            Some(t) => abs_statistics.push(t),
            None => dropped += 1,
        }
    }
    let requested = cfg.n_null_replicates;
    if dropped as f64 > MAX_DROPPED_FRACTION * requested as f64 {
        return Err(Error::TooManyDropped {
            dropped,
            total: requested,
        });
    }
    Ok(NullDistribution {
        abs_statistics,
        dropped,
        requested,
    })
}

/// `(1 - β)` quantile of `|T̂|` under GvMF(`α`, `κ`) in dimension `d` at sample size `n`.
pub fn null_critical_value<E: ReplicateExecutor>(
    alpha: f64,
    kappa: f64,
    d: usize,
    n: usize,
    cfg: &GofConfig,
    exec: &E,
) -> Result<f64> {
    let params = GvmfParams::canonical(cfg.family, d, alpha, kappa)?;
    Ok(null_distribution(&params, n, cfg, exec)?.critical_value(cfg.beta_level))
}

/// Full test: fit, statistic, parametric bootstrap at the fitted parameters
/// with the sample's own size, p-value and decision.
pub fn run_gof_test<E: ReplicateExecutor>(sample: &DirectionSample, cfg: &GofConfig, exec: &E) -> Result<GofResult> {
    cfg.validate()?;
    let (fitted, entropy, statistic) = evaluate_sample(sample, cfg, exec)?;
    let null = null_distribution(&fitted.params, sample.len(), cfg, exec)?;
    let critical_value = null.critical_value(cfg.beta_level);
    let p_value = null.p_value(statistic.abs());
    Ok(GofResult {
        statistic,
        critical_value,
        p_value,
        reject: statistic.abs() >= critical_value,
        fitted,
        entropy,
        null,
    })
}

/// Fisher-Bingham alternatives indexed by an integer strength `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerScenario {
    /// `exp(3 μ₁ᵀx + 0.35 j (μ₂ᵀx)²)` tested against family I.
    TypeIFb,
    /// `exp(0.05 j μ₁ᵀx + 6 (μ₂ᵀx)²)` tested against the axial family.
    AxialFb,
}

impl PowerScenario {
    pub fn name(self) -> &'static str {
        match self {
            PowerScenario::TypeIFb => "TypeI_FB",
            PowerScenario::AxialFb => "Axial_FB",
        }
    }

    pub fn family(self) -> Family {
        match self {
            PowerScenario::TypeIFb => Family::I,
            PowerScenario::AxialFb => Family::Axial,
        }
    }

    /// Fixed critical value used with this scenario when no bootstrap is run.
    pub fn reference_critical_value(self) -> f64 {
        match self {
            PowerScenario::TypeIFb => 0.05373,
            PowerScenario::AxialFb => 0.05917,
        }
    }

    /// Alternative law for strength `j` in `S²`.
    pub fn alternative(self, j: u32) -> Result<FisherBinghamParams> {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let mu1 = UnitVector::new(alloc::vec![1.0, 0.0, 0.0])?;
        let mu2 = UnitVector::normalized(alloc::vec![0.0, h, h])?;
        let (kappa1, beta2) = match self {
            PowerScenario::TypeIFb => (3.0, 0.35 * j as f64),
            PowerScenario::AxialFb => (0.05 * j as f64, 6.0),
        };
        Ok(FisherBinghamParams {
            d: 3,
            mu1,
            mu2,
            kappa1,
            beta2,
        })
    }
}

impl core::str::FromStr for PowerScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "typeifb" | "ifb" => Ok(PowerScenario::TypeIFb),
            "axialfb" => Ok(PowerScenario::AxialFb),
            _ => Err(invalid(alloc::format!("unknown power scenario {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalValueSource {
    Fixed(f64),
    /// Parametric bootstrap at the fitted parameters of every replicate.
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub j: u32,
    pub replicates: usize,
    pub rejections: usize,
    /// Replicates whose test could not be completed (failed fit).
    pub failed: usize,
    pub power: f64,
    pub standard_error: f64,
}

/// Rejection rate of the test under each alternative `j` in `j_values`.
/// Replicates run through `exec`; with a bootstrap critical value the inner
/// null simulations run sequentially inside each replicate.
pub fn power_study<E: ReplicateExecutor>(
    scenario: PowerScenario,
    j_values: &[u32],
    n: usize,
    replicates: usize,
    critical: CriticalValueSource,
    cfg: &GofConfig,
    exec: &E,
) -> Result<Vec<PowerRow>> {
    if cfg.family != scenario.family() {
        return Err(invalid(alloc::format!(
            "scenario {} is tested against family {}",
            scenario.name(),
            scenario.family()
        )));
    }
    if replicates == 0 {
        return Err(invalid("at least one replicate is required"));
    }
    if let CriticalValueSource::Bootstrap = critical {
        cfg.validate()?;
    }
    let mut rows = Vec::with_capacity(j_values.len());
    for &j in j_values {
        let sampler = FisherBinghamSampler::new(scenario.alternative(j)?)?;
        let base = cfg.seed.derive(POWER_STREAM_TAG).derive(j as u64);
        let outcomes = exec.map(replicates, |r| -> Result<Option<bool>> {
            let draw = sampler.sample(base.stream(r as u64), n)?;
            let outcome = match critical {
                CriticalValueSource::Fixed(x) => {
                    evaluate_sample(&draw.sample, cfg, &Sequential).map(|(_, _, t)| t.abs() > x)
                }
                CriticalValueSource::Bootstrap => {
                    let inner = GofConfig {
                        seed: base.stream(r as u64).derive(NULL_STREAM_TAG),
                        ..cfg.clone()
                    };
                    run_gof_test(&draw.sample, &inner, &Sequential).map(|g| g.reject)
                }
            };
            match outcome {
                Ok(rej) => Ok(Some(rej)),
                Err(e) if is_droppable(&e) => Ok(None),
                Err(e) => Err(e),
            }
        });
        let mut rejections = 0;
        let mut failed = 0;
        for o in outcomes {
            match o? {
                Some(true) => rejections += 1,
                Some(false) => {}
                None => failed += 1,
            }
        }
        let done = replicates - failed;
        let power = if done == 0 { f64::NAN } else { rejections as f64 / done as f64 };
        rows.push(PowerRow {
            j,
            replicates: done,
            rejections,
            failed,
            power,
            standard_error: libm::sqrt(power * (1.0 - power) / done.max(1) as f64),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::estimate_entropy;
    use crate::sampling::sample_gvmf;

    #[test]
    fn order_statistic_quantiles() {
        let v: Vec<f64> = (1..=99).map(|i| i as f64).collect();
        assert_eq!(quantile_order_statistic(&v, 0.05), 95.0);
        assert_eq!(quantile_order_statistic(&v, 0.5), 50.0);
        assert_eq!(quantile_order_statistic(&v, 1e-9), 99.0);
        assert_eq!(quantile_order_statistic(&v, 0.999), 1.0);
        let null = NullDistribution {
            abs_statistics: v.clone(),
            dropped: 0,
            requested: 99,
        };
        assert_eq!(null.p_value(1000.0), 0.01);
        assert_eq!(null.p_value(0.0), 1.0);
        // p-value is one minus the empirical CDF just below the statistic.
        let t = 90.5;
        let below = v.iter().filter(|x| **x < t).count() as f64 / 99.0;
        assert!((null.p_value(t) - (1.0 - below)).abs() <= 1.0 / 100.0);
    }

    #[test]
    fn statistic_vanishes_at_exact_entropy() {
        let p = GvmfParams::canonical(Family::II, 3, 1.5, 2.0).unwrap();
        let fitted = FitResult {
            params: p.clone(),
            method: Estimator::Mle,
            loglik: None,
            converged: true,
            iterations: 0,
            objective_history: None,
            diagnostic: None,
        };
        let h = Gvmf::new(p).unwrap().entropy().unwrap();
        let fake = EntropyEstimate {
            value: h,
            k: 3,
            n: 1000,
            m: 2,
            mean_log_rho: 0.0,
        };
        assert_eq!(test_statistic(&fitted, &fake, &FitOptions::default()).unwrap(), 0.0);
        let unconverged = FitResult {
            converged: false,
            ..fitted
        };
        assert!(matches!(
            test_statistic(&unconverged, &fake, &FitOptions::default()),
            Err(Error::UnconvergedFit(_))
        ));
    }

    #[test]
    fn statistic_is_rotation_invariant() {
        let p = GvmfParams::canonical(Family::I, 3, 1.5, 2.0).unwrap();
        let s = sample_gvmf(&p, SeedSpec::new(3, 0), 1000).unwrap();
        let (c, sn) = (libm::cos(0.7), libm::sin(0.7));
        let rs = s.map_rows(|_, a, b| {
            b[0] = c * a[0] - sn * a[2];
            b[1] = a[1];
            b[2] = sn * a[0] + c * a[2];
        });
        let cfg = GofConfig::new(Family::I, SeedSpec::new(0, 0));
        let (_, _, t0) = evaluate_sample(&s, &cfg, &Sequential).unwrap();
        let (_, _, t1) = evaluate_sample(&rs, &cfg, &Sequential).unwrap();
        assert!((t0 - t1).abs() < 1e-8, "{t0} vs {t1}");
        assert!(t0.abs() < 0.1);
        let e = estimate_entropy(&s, 3).unwrap();
        assert!((e.value - estimate_entropy(&rs, 3).unwrap().value).abs() < 1e-10);
    }

    #[test]
    fn null_quantiles_are_ordered_and_reproducible() {
        let mut cfg = GofConfig::new(Family::Axial, SeedSpec::new(17, 0));
        cfg.n_null_replicates = 100;
        let p = GvmfParams::canonical(Family::Axial, 3, 1.5, 2.0).unwrap();
        let null = null_distribution(&p, 300, &cfg, &Sequential).unwrap();
        assert_eq!(null.abs_statistics.len() + null.dropped, 100);
        let hi = null.critical_value(0.05);
        let med = null.critical_value(0.5);
        assert!(med < hi);
        assert!(hi > 0.02 && hi < 0.2, "{hi}");
        let again = null_distribution(&p, 300, &cfg, &Sequential).unwrap();
        assert_eq!(null, again);
    }

    #[test]
    fn config_validation() {
        let mut cfg = GofConfig::new(Family::I, SeedSpec::new(0, 0));
        assert!(cfg.validate().is_ok());
        cfg.n_null_replicates = 50;
        assert!(cfg.validate().is_err());
        cfg.n_null_replicates = 500;
        cfg.beta_level = 1.0;
        assert!(cfg.validate().is_err());
        cfg.beta_level = 0.05;
        cfg.k = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn power_scenarios() {
        let a = PowerScenario::TypeIFb.alternative(20).unwrap();
        assert_eq!((a.kappa1, a.beta2), (3.0, 7.0));
        let b = PowerScenario::AxialFb.alternative(20).unwrap();
        assert!((b.kappa1 - 1.0).abs() < 1e-15 && b.beta2 == 6.0);
        assert_eq!("TypeI_FB".parse::<PowerScenario>().unwrap(), PowerScenario::TypeIFb);
        assert_eq!("axial-fb".parse::<PowerScenario>().unwrap(), PowerScenario::AxialFb);
        let cfg = GofConfig::new(Family::I, SeedSpec::new(5, 0));
        let rows = power_study(
            PowerScenario::TypeIFb,
            &[0, 20],
            400,
            12,
            CriticalValueSource::Fixed(0.05373),
            &cfg,
            &Sequential,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].power >= rows[0].power);
        let wrong = GofConfig::new(Family::II, SeedSpec::new(5, 0));
        assert!(power_study(PowerScenario::TypeIFb, &[1], 100, 1, CriticalValueSource::Bootstrap, &wrong, &Sequential).is_err());
    }
}
