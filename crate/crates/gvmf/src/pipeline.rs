//! Block-wise testing of lattice-indexed direction data, plus the
//! simulation tables and QQ pairs offered by the command-line tool.

use std::collections::{BTreeMap, HashMap};

use gvmf_core::gof::{evaluate_sample, null_distribution, CriticalValueSource, NullDistribution, PowerRow, PowerScenario};
use gvmf_core::inference::FitResult;
use gvmf_core::sampling::MarginalTable;
use gvmf_core::{DirectionSample, Family, GofConfig, GvmfParams, Provenance, ReplicateExecutor, SeedSpec};
use rand::Rng;

use crate::error::{Error, Result};
use crate::io::Lattice;

const SYMMETRIZE_TAG: u64 = 0x7379_6d6d;
const BLOCK_TAG: u64 = 0x626c_6f63;

/// Multiplies every row by an independent uniform random sign.
pub fn symmetrize(sample: &DirectionSample, seed: SeedSpec) -> DirectionSample {
    let mut rng = seed.rng();
    let mut out = sample.map_rows(|_, src, dst| {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        dst.iter_mut().zip(src).for_each(|(o, v)| *o = s * v);
    });
    out.provenance = Provenance::Derived(format!("symmetrized with seed {}/{}", seed.master_seed, seed.stream_id));
    out
}

/// Partition of an index lattice into boxes of `shape` points per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    pub shape: [i64; 3],
    pub min_block_size: usize,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self {
            shape: [16, 15, 16],
            min_block_size: 100,
        }
    }
}

impl BlockSpec {
    /// Every block of the bounding grid of `lattice`, keyed by its lower
    /// corner, with the row indices it contains (possibly none).
    pub fn partition(&self, lattice: &Lattice) -> Result<BTreeMap<[i64; 3], Vec<usize>>> {
        if self.shape.iter().any(|&s| s <= 0) {
            return Err(Error::Usage("block shape entries must be positive".into()));
        }
        let Some(first) = lattice.indices.first() else {
            return Ok(BTreeMap::new());
        };
        let mut lo = *first;
        let mut hi = *first;
        for idx in &lattice.indices {
            for a in 0..3 {
                lo[a] = lo[a].min(idx[a]);
                hi[a] = hi[a].max(idx[a]);
            }
        }
        let corner = |idx: &[i64; 3]| -> [i64; 3] {
            std::array::from_fn(|a| lo[a] + (idx[a] - lo[a]).div_euclid(self.shape[a]) * self.shape[a])
        };
        let mut blocks = BTreeMap::new();
        let top = corner(&hi);
        let mut c = lo;
        while c[0] <= top[0] {
            c[1] = lo[1];
            while c[1] <= top[1] {
                c[2] = lo[2];
                while c[2] <= top[2] {
                    blocks.insert(c, Vec::new());
                    c[2] += self.shape[2];
                }
                c[1] += self.shape[1];
            }
            c[0] += self.shape[0];
        }
        for (row, idx) in lattice.indices.iter().enumerate() {
            blocks.get_mut(&corner(idx)).expect("corner inside grid").push(row);
        }
        Ok(blocks)
    }
}

/// Null distributions shared between blocks whose fitted parameters fall
/// nearest to the same grid node, simulated once at that node.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupGrid {
    pub alphas: Vec<f64>,
    /// Values of `κ/α`.
    pub scales: Vec<f64>,
    /// Sample size of the shared null simulations.
    pub n: usize,
}

impl Default for GroupGrid {
    fn default() -> Self {
        Self {
            alphas: vec![4.0, 6.0, 8.0, 10.0],
            scales: vec![4.0, 6.0],
            n: 3500,
        }
    }
}

impl GroupGrid {
    fn nearest(values: &[f64], x: f64) -> usize {
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if (v.ln() - x.ln()).abs() < (values[best].ln() - x.ln()).abs() {
                best = i;
            }
        }
        best
    }

    fn node(&self, alpha: f64, kappa: f64) -> (usize, usize) {
        (Self::nearest(&self.alphas, alpha), Self::nearest(&self.scales, kappa / alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockStatus {
    Tested,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BlockRow {
    pub l1: i64,
    pub l2: i64,
    pub l3: i64,
    pub n: usize,
    pub status: BlockStatus,
    pub mu: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub entropy: Option<f64>,
    pub statistic: Option<f64>,
    pub critical_value: Option<f64>,
    pub p_value: Option<f64>,
    pub reject: Option<bool>,
    pub note: Option<String>,
}

impl BlockRow {
    fn empty(corner: [i64; 3], n: usize, status: BlockStatus, note: String) -> Self {
        Self {
            l1: corner[0],
            l2: corner[1],
            l3: corner[2],
            n,
            status,
            mu: None,
            alpha: None,
            kappa: None,
            entropy: None,
            statistic: None,
            critical_value: None,
            p_value: None,
            reject: None,
            note: Some(note),
        }
    }
}

/// For every block: symmetrize, fit the axial family, and test it with a
/// parametric bootstrap (at the block's own fit, or at the nearest node of
/// `grouping`). Failures are reported per block and do not stop the run.
pub fn run_block_tests<E: ReplicateExecutor>(
    sample: &DirectionSample,
    lattice: &Lattice,
    spec: &BlockSpec,
    cfg: &GofConfig,
    grouping: Option<&GroupGrid>,
    exec: &E,
) -> Result<Vec<BlockRow>> {
    if lattice.indices.len() != sample.len() {
        return Err(Error::Usage("lattice and sample lengths differ".into()));
    }
    if cfg.family != Family::Axial {
        return Err(Error::Usage("block tests use the axial family".into()));
    }
    cfg.validate()?;
    let blocks = spec.partition(lattice)?;
    let mut shared: HashMap<(usize, usize), NullDistribution> = HashMap::new();
    let mut rows = Vec::with_capacity(blocks.len());
    for (ordinal, (corner, members)) in blocks.into_iter().enumerate() {
        let n = members.len();
        if n == 0 {
            rows.push(BlockRow::empty(corner, 0, BlockStatus::Skipped, "empty block".into()));
            continue;
        }
        if n < spec.min_block_size {
            rows.push(BlockRow::empty(
                corner,
                n,
                BlockStatus::Skipped,
                format!("fewer than {} points", spec.min_block_size),
            ));
            continue;
        }
        let block = sample.select(&members, Provenance::Derived(format!("block {corner:?}")));
        let sym = symmetrize(&block, cfg.seed.derive(SYMMETRIZE_TAG).stream(ordinal as u64));
        let block_cfg = GofConfig {
            seed: cfg.seed.derive(BLOCK_TAG).derive(ordinal as u64),
            ..cfg.clone()
        };
        match test_block(&sym, &block_cfg, grouping, &mut shared, exec) {
            Ok((fitted, entropy, statistic, null)) => {
                let critical_value = null.critical_value(cfg.beta_level);
                rows.push(BlockRow {
                    l1: corner[0],
                    l2: corner[1],
                    l3: corner[2],
                    n,
                    status: BlockStatus::Tested,
                    mu: Some(fitted.params.mu.as_slice().to_vec()),
                    alpha: Some(fitted.params.alpha),
                    kappa: Some(fitted.params.kappa),
                    entropy: Some(entropy),
                    statistic: Some(statistic),
                    critical_value: Some(critical_value),
                    p_value: Some(null.p_value(statistic.abs())),
                    reject: Some(statistic.abs() >= critical_value),
                    note: (null.dropped > 0).then(|| format!("{} null replicates dropped", null.dropped)),
                });
            }
            Err(e) => {
                log::warn!("block {corner:?}: {e}");
                rows.push(BlockRow::empty(corner, n, BlockStatus::Failed, e.to_string()));
            }
        }
    }
    Ok(rows)
}

fn test_block<E: ReplicateExecutor>(
    sample: &DirectionSample,
    cfg: &GofConfig,
    grouping: Option<&GroupGrid>,
    shared: &mut HashMap<(usize, usize), NullDistribution>,
    exec: &E,
) -> Result<(FitResult, f64, f64, NullDistribution)> {
    let (fitted, entropy, statistic) = evaluate_sample(sample, cfg, exec)?;
    let null = match grouping {
        None => null_distribution(&fitted.params, sample.len(), cfg, exec)?,
        Some(grid) => {
            let key = grid.node(fitted.params.alpha, fitted.params.kappa);
            if let Some(null) = shared.get(&key) {
                null.clone()
            } else {
                let alpha = grid.alphas[key.0];
                let params = GvmfParams::canonical(Family::Axial, sample.dim(), alpha, alpha * grid.scales[key.1])?;
                let null_cfg = GofConfig {
                    seed: cfg.seed.derive(key.0 as u64 * 1000 + key.1 as u64),
                    ..cfg.clone()
                };
                let null = null_distribution(&params, grid.n, &null_cfg, exec)?;
                shared.insert(key, null.clone());
                null
            }
        }
    };
    Ok((fitted, entropy.value, statistic, null))
}

/// Grid of the simulated critical-value tables.
pub const TABLE_ALPHAS: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
pub const TABLE_KAPPAS: [f64; 11] = [0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.0];

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CriticalRow {
    pub alpha: f64,
    pub kappa: f64,
    pub critical_value: f64,
    pub retained: usize,
    pub dropped: usize,
}

/// `(1 - β)` quantiles of `|T̂|` at sample size `n` for every grid cell.
/// Each cell uses its own derived seed, so cells can be recomputed alone.
pub fn critical_table<E: ReplicateExecutor>(
    alphas: &[f64],
    kappas: &[f64],
    d: usize,
    n: usize,
    cfg: &GofConfig,
    exec: &E,
) -> Result<Vec<CriticalRow>> {
    let mut rows = Vec::with_capacity(alphas.len() * kappas.len());
    for (i, &alpha) in alphas.iter().enumerate() {
        for (j, &kappa) in kappas.iter().enumerate() {
            let params = GvmfParams::canonical(cfg.family, d, alpha, kappa)?;
            let cell_cfg = GofConfig {
                seed: cfg.seed.derive((i * kappas.len() + j) as u64),
                ..cfg.clone()
            };
            let null = null_distribution(&params, n, &cell_cfg, exec)?;
            rows.push(CriticalRow {
                alpha,
                kappa,
                critical_value: null.critical_value(cfg.beta_level),
                retained: null.abs_statistics.len(),
                dropped: null.dropped,
            });
        }
    }
    Ok(rows)
}

pub fn power_curve<E: ReplicateExecutor>(
    scenario: PowerScenario,
    j_values: &[u32],
    n: usize,
    replicates: usize,
    critical: CriticalValueSource,
    cfg: &GofConfig,
    exec: &E,
) -> Result<Vec<PowerRow>> {
    Ok(gvmf_core::gof::power_study(scenario, j_values, n, replicates, critical, cfg, exec)?)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct QqPair {
    pub probability: f64,
    pub empirical: f64,
    pub theoretical: f64,
}

/// Sorted projections `μᵀxᵢ` against the quantiles of their model marginal at
/// plotting positions `(i + 1/2)/N`.
pub fn qq_pairs(sample: &DirectionSample, params: &GvmfParams) -> Result<Vec<QqPair>> {
    if sample.dim() != params.d {
        return Err(gvmf_core::Error::DimensionMismatch {
            expected: params.d,
            found: sample.dim(),
        }
        .into());
    }
    let table = MarginalTable::with_default_grid(params.family, params.alpha, params.kappa, params.d)?;
    let mut t: Vec<f64> = sample.rows().map(|x| params.mu.dot(x)).collect();
    t.sort_by(f64::total_cmp);
    let n = t.len() as f64;
    Ok(t
        .into_iter()
        .enumerate()
        .map(|(i, empirical)| {
            let probability = (i as f64 + 0.5) / n;
            QqPair {
                probability,
                empirical,
                theoretical: table.quantile(probability).0,
            }
        })
        .collect())
}
