#![no_std]

extern crate alloc;

pub mod error;
pub mod exec;
pub mod gof;
pub mod inference;
pub mod knn;
pub mod model;
pub mod numeric;
pub mod optimize;
pub mod quadrature;
pub mod sample;
pub mod sampling;

pub use error::{Error, Result};
pub use model::{Family, Gvmf, GvmfParams, MomentKind, MomentSpec, UnitVector};
pub use quadrature::{AIntegralArgs, AKind, LogScaledValue, QuadratureConfig};
pub use sample::{DirectionSample, Provenance};
pub use sampling::{FisherBinghamParams, GvmfSampler, MarginalTable, SeedSpec};
pub use exec::{ReplicateExecutor, Sequential};
pub use knn::{estimate_entropy, EntropyEstimate};
pub use inference::{fit, fit_mle, fit_mom, log_likelihood, orientation_stats, Estimator, FitOptions, FitResult, OrientationStats};
pub use gof::{run_gof_test, GofConfig, GofResult};
