//! Exact simulation through the tangent-normal decomposition
//! `X = t μ + √(1 - t²) Y`, where `t = μᵀX` has a one-dimensional marginal
//! and `Y` is uniform on the unit sphere of `μ^⊥`.
//!
//! The marginal of `t` is tabulated as a CDF in angle space, split at
//! `t = 0`: the lower half is parameterized by `θ` with `t = -cos θ` and the
//! upper half by `ω` with `t = cos ω`, both angles in `[0, π/2]`. Measuring
//! from the nearer endpoint keeps full relative precision when the mass sits
//! within `1e-10` of `t = ±1`. In angle space the surface weight becomes
//! `sin^{d-2}`, bounded for every `d ≥ 2`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::model::{Family, GvmfParams, UnitVector};
use crate::numeric::{dot, log_add_exp, signed_pow, CompensatedSum, GaussLegendre};
use crate::sample::{DirectionSample, Provenance};

/// Reproducible stream selector: `(master_seed, stream_id)` fixes the
/// generator state. The generator is ChaCha8 with the 64-bit stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub const fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Same master seed, different stream.
    pub fn stream(&self, stream_id: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id,
        }
    }

    /// A fresh master seed for a nested experiment, derived from this seed and
    /// `tag`; its streams do not overlap with this seed's streams.
    pub fn derive(&self, tag: u64) -> Self {
        let m = splitmix64(self.master_seed ^ splitmix64(self.stream_id ^ splitmix64(tag)));
        Self {
            master_seed: m,
            stream_id: 0,
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::Seeded {
            master_seed: self.master_seed,
            stream_id: self.stream_id,
        }
    }
}

/// Absolute CDF tolerance used when validating each table cell.
const CDF_TOL: f64 = 1e-11;
const MASS_TOL: f64 = 1e-13;
const MAX_CELLS: usize = 1 << 18;

#[derive(Debug, Clone, Copy)]
struct MarginalLaw {
    family: Family,
    d: usize,
    alpha: f64,
    scale: f64,
}

impl MarginalLaw {
    /// Unnormalized log-density of the half-table angle. `upper` selects the
    /// `t = cos ω` half.
    #[inline]
    fn ln_density(&self, angle: f64, upper: bool) -> f64 {
        let (sn, cs) = (libm::sin(angle), libm::cos(angle));
        let half = libm::sin(0.5 * angle);
        let half_c = libm::cos(0.5 * angle);
        let (t, one_minus_t) = if upper {
            (cs, 2.0 * half * half)
        } else {
            (-cs, 2.0 * half_c * half_c)
        };
        let expo = if self.scale == 0.0 {
            0.0
        } else {
            match self.family {
                Family::I => self.scale * signed_pow(t, self.alpha),
                Family::II => -self.scale * libm::pow(one_minus_t, self.alpha),
                Family::Axial => self.scale * libm::pow(t.abs(), self.alpha),
            }
        };
        if self.d == 2 {
            expo
        } else {
            expo + (self.d as f64 - 2.0) * libm::log(sn)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    a: f64,
    b: f64,
    whole: f64,
    left: f64,
    right: f64,
    ok: bool,
}

/// One half of the tabulated marginal: angles from the endpoint, cumulative
/// probability and density (both normalized by the full mass).
#[derive(Debug, Clone)]
struct HalfTable {
    angle: Vec<f64>,
    cdf: Vec<f64>,
    density: Vec<f64>,
}

impl HalfTable {
    fn total(&self) -> f64 {
        *self.cdf.last().unwrap()
    }

    /// Monotone cubic Hermite in cell `i` at local coordinate `x ∈ [0, 1]`;
    /// returns `(F, dF/dx)`.
    #[inline]
    fn hermite(&self, i: usize, x: f64) -> (f64, f64) {
        hermite_eval(
            self.cdf[i],
            self.cdf[i + 1],
            self.density[i] * (self.angle[i + 1] - self.angle[i]),
            self.density[i + 1] * (self.angle[i + 1] - self.angle[i]),
            x,
        )
    }

    fn cdf_at(&self, angle: f64) -> f64 {
        if angle <= 0.0 {
            return 0.0;
        }
        let n = self.angle.len();
        if angle >= self.angle[n - 1] {
            return self.total();
        }
        let i = self.angle.partition_point(|&a| a <= angle) - 1;
        let h = self.angle[i + 1] - self.angle[i];
        self.hermite(i, (angle - self.angle[i]) / h).0
    }

    /// Angle with cumulative probability `q ∈ [0, total]`.
    fn invert(&self, q: f64) -> f64 {
        let n = self.cdf.len();
        let mut i = self.cdf.partition_point(|&c| c <= q);
        i = i.clamp(1, n - 1) - 1;
        // Skip empty cells (underflowed mass).
        while i + 2 < n && self.cdf[i + 1] <= q {
            i += 1;
        }
        let (fa, fb) = (self.cdf[i], self.cdf[i + 1]);
        let h = self.angle[i + 1] - self.angle[i];
        if !(fb > fa) {
            return self.angle[i];
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut x = ((q - fa) / (fb - fa)).clamp(0.0, 1.0);
        for _ in 0..64 {
            let (f, df) = self.hermite(i, x);
            let r = f - q;
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = if df > 0.0 { x - r / df } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-16 || hi - lo <= 1e-16 {
                x = next;
                break;
            }
            x = next;
        }
        self.angle[i] + x * h
    }
}

#[inline]
fn hermite_eval(fa: f64, fb: f64, mut sa: f64, mut sb: f64, x: f64) -> (f64, f64) {
    let delta = fb - fa;
    if delta > 0.0 {
        let (p, q) = (sa / delta, sb / delta);
        let r2 = p * p + q * q;
        if r2 > 9.0 {
            let tau = 3.0 / libm::sqrt(r2);
            sa *= tau;
            sb *= tau;
        }
    } else {
        sa = 0.0;
        sb = 0.0;
    }
    let x2 = x * x;
    let x3 = x2 * x;
    let h10 = x3 - 2.0 * x2 + x;
    let h01 = -2.0 * x3 + 3.0 * x2;
    let h11 = x3 - x2;
    let f = fa + delta * h01 + sa * h10 + sb * h11;
    let d10 = 3.0 * x2 - 4.0 * x + 1.0;
    let d01 = -6.0 * x2 + 6.0 * x;
    let d11 = 3.0 * x2 - 2.0 * x;
    let df = delta * d01 + sa * d10 + sb * d11;
    (f, df)
}

/// Tabulated CDF of `t = μᵀX` for one GvMF law.
#[derive(Debug, Clone)]
pub struct MarginalTable {
    pub family: Family,
    pub alpha: f64,
    pub kappa: f64,
    pub d: usize,
    lower: HalfTable,
    upper: HalfTable,
}

struct Builder {
    law: MarginalLaw,
    nodes: Vec<f64>,
    ln_weights: Vec<f64>,
}

impl Builder {
    fn ln_mass(&self, a: f64, b: f64, upper: bool) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let ln_half = libm::log(half);
        let mut acc = f64::NEG_INFINITY;
        for (x, lw) in self.nodes.iter().zip(&self.ln_weights) {
            acc = log_add_exp(acc, lw + ln_half + self.law.ln_density(mid + half * x, upper));
        }
        acc
    }

    fn cell(&self, a: f64, b: f64, whole: f64, upper: bool) -> Cell {
        let m = 0.5 * (a + b);
        Cell {
            a,
            b,
            whole,
            left: self.ln_mass(a, m, upper),
            right: self.ln_mass(m, b, upper),
            ok: false,
        }
    }

    fn ln_density_at(&self, angle: f64, upper: bool) -> f64 {
        if angle == 0.0 && self.law.d > 2 {
            return f64::NEG_INFINITY;
        }
        self.law.ln_density(angle, upper)
    }
}

impl MarginalTable {
    /// Tabulates the marginal CDF. `n_grid` is the initial number of nodes
    /// across `[-1, 1]`; cells are then split until the cubic interpolant
    /// matches quadrature at every cell midpoint to `1e-11`.
    pub fn build(family: Family, alpha: f64, kappa: f64, d: usize, n_grid: usize) -> Result<Self> {
        let p = GvmfParams::canonical(family, d.max(2), alpha, kappa)?;
        if d < 2 {
            return Err(invalid("dimension d must be at least 2"));
        }
        if n_grid < 5 {
            return Err(invalid("n_grid must be at least 5"));
        }
        let gl = GaussLegendre::new(8);
        let builder = Builder {
            law: MarginalLaw {
                family,
                d,
                alpha,
                scale: p.scale(),
            },
            ln_weights: gl.weights.iter().map(|w| libm::log(*w)).collect(),
            nodes: gl.nodes,
        };
        let per_half = (n_grid - 1) / 2;
        let quarter = core::f64::consts::FRAC_PI_2;
        let mut halves: [Vec<Cell>; 2] = [Vec::new(), Vec::new()];
        for (k, cells) in halves.iter_mut().enumerate() {
            let upper = k == 1;
            for i in 0..per_half {
                let a = quarter * i as f64 / per_half as f64;
                let b = quarter * (i + 1) as f64 / per_half as f64;
                let whole = builder.ln_mass(a, b, upper);
                cells.push(builder.cell(a, b, whole, upper));
            }
        }
        loop {
            let ln_z = halves
                .iter()
                .flatten()
                .fold(f64::NEG_INFINITY, |acc, c| log_add_exp(acc, log_add_exp(c.left, c.right)));
            if !ln_z.is_finite() {
                return Err(invalid("marginal density has no finite mass"));
            }
            let mut pending = false;
            for (k, cells) in halves.iter_mut().enumerate() {
                let upper = k == 1;
                let mut next: Vec<Cell> = Vec::with_capacity(cells.len());
                for c in cells.iter() {
                    if c.ok {
                        next.push(*c);
                        continue;
                    }
                    let left = libm::exp(c.left - ln_z);
                    let right = libm::exp(c.right - ln_z);
                    let whole = libm::exp(c.whole - ln_z);
                    let h = c.b - c.a;
                    let sa = libm::exp(builder.ln_density_at(c.a, upper) - ln_z) * h;
                    let sb = libm::exp(builder.ln_density_at(c.b, upper) - ln_z) * h;
                    let (mid, _) = hermite_eval(0.0, left + right, sa, sb, 0.5);
                    let good = (whole - (left + right)).abs() <= MASS_TOL && (mid - left).abs() <= CDF_TOL;
                    if good || h < 1e-300 {
                        next.push(Cell { ok: true, ..*c });
                    } else {
                        pending = true;
                        let m = 0.5 * (c.a + c.b);
                        next.push(builder.cell(c.a, m, c.left, upper));
                        next.push(builder.cell(m, c.b, c.right, upper));
                    }
                }
                *cells = next;
            }
            if !pending {
                break;
            }
            if halves[0].len() + halves[1].len() > MAX_CELLS {
                return Err(Error::NonConvergence {
                    subdivisions: halves[0].len() + halves[1].len(),
                    rel_error: CDF_TOL,
                });
            }
        }
        let ln_z = halves
            .iter()
            .flatten()
            .fold(f64::NEG_INFINITY, |acc, c| log_add_exp(acc, log_add_exp(c.left, c.right)));
        let finish = |cells: &[Cell], upper: bool| -> HalfTable {
            let mut angle = Vec::with_capacity(cells.len() + 1);
            let mut cdf = Vec::with_capacity(cells.len() + 1);
            let mut density = Vec::with_capacity(cells.len() + 1);
            let mut acc = CompensatedSum::new();
            angle.push(0.0);
            cdf.push(0.0);
            density.push(libm::exp(builder.ln_density_at(0.0, upper) - ln_z));
            for c in cells {
                acc.add(libm::exp(c.left - ln_z));
                acc.add(libm::exp(c.right - ln_z));
                angle.push(c.b);
                cdf.push(acc.value());
                density.push(libm::exp(builder.ln_density_at(c.b, upper) - ln_z));
            }
            HalfTable { angle, cdf, density }
        };
        let lower = finish(&halves[0], false);
        let upper = finish(&halves[1], true);
        Ok(Self {
            family,
            alpha,
            kappa,
            d,
            lower,
            upper,
        })
    }

    pub fn with_default_grid(family: Family, alpha: f64, kappa: f64, d: usize) -> Result<Self> {
        Self::build(family, alpha, kappa, d, 4097)
    }

    /// Probability that `t ≤ 0`.
    pub fn lower_mass(&self) -> f64 {
        self.lower.total()
    }

    /// `P(μᵀX ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        let t = t.clamp(-1.0, 1.0);
        if t <= 0.0 {
            self.lower.cdf_at(libm::acos(-t))
        } else {
            1.0 - self.upper.cdf_at(libm::acos(t))
        }
    }

    /// Node abscissae in `t`, increasing. Nodes closer to `±1` than double
    /// precision resolves collapse onto the endpoint and are dropped.
    pub fn grid(&self) -> Vec<f64> {
        self.nodes().into_iter().map(|(t, _)| t).collect()
    }

    /// CDF values at [`MarginalTable::grid`].
    pub fn cdf_values(&self) -> Vec<f64> {
        self.nodes().into_iter().map(|(_, f)| f).collect()
    }

    fn nodes(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let push = |out: &mut Vec<(f64, f64)>, t: f64, f: f64| {
            if out.last().is_none_or(|&(last, _)| t > last) {
                out.push((t, f));
            }
        };
        for (a, f) in self.lower.angle.iter().zip(&self.lower.cdf) {
            push(&mut out, -libm::cos(*a), *f);
        }
        for (a, f) in self.upper.angle.iter().zip(&self.upper.cdf).rev() {
            push(&mut out, libm::cos(*a), 1.0 - f);
        }
        if let Some(first) = out.first_mut() {
            first.1 = 0.0;
        }
        if let Some(last) = out.last_mut() {
            last.1 = 1.0;
        }
        out
    }

    /// Inverse CDF, returned as `(t, √(1 - t²))` with the second component
    /// computed from the angle rather than from `t`.
    pub fn quantile(&self, u: f64) -> (f64, f64) {
        let lower = self.lower.total();
        if u < lower {
            let th = self.lower.invert(u);
            (-libm::cos(th), libm::sin(th))
        } else {
            let q = (1.0 - u).min(self.upper.total());
            let om = self.upper.invert(q);
            (libm::cos(om), libm::sin(om))
        }
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u: f64 = rng.random();
        self.quantile(u)
    }
}

/// `n` draws of `t = μᵀX` by inverse-CDF sampling.
pub fn sample_marginal<R: Rng + ?Sized>(table: &MarginalTable, rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| table.draw(rng).0).collect()
}

/// Writes a uniform unit vector orthogonal to `mu` into `out`.
fn uniform_orthogonal_into<R: Rng + ?Sized>(rng: &mut R, mu: &[f64], out: &mut [f64]) -> Result<()> {
    for _ in 0..100 {
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
        }
        let p = dot(mu, out);
        for (o, m) in out.iter_mut().zip(mu) {
            *o -= p * m;
        }
        // A second projection removes the rounding left by the first.
        let p = dot(mu, out);
        for (o, m) in out.iter_mut().zip(mu) {
            *o -= p * m;
        }
        let n2 = dot(out, out);
        if n2 > 1e-200 {
            let inv = 1.0 / libm::sqrt(n2);
            out.iter_mut().for_each(|o| *o *= inv);
            return Ok(());
        }
    }
    Err(Error::DegenerateDraw(100))
}

/// Uniform draw from the unit sphere of the orthogonal complement of `orthogonal_to`.
pub fn uniform_subsphere<R: Rng + ?Sized>(rng: &mut R, d: usize, orthogonal_to: &UnitVector) -> Result<UnitVector> {
    if d < 2 || orthogonal_to.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: orthogonal_to.dim(),
        });
    }
    let mut out = alloc::vec![0.0; d];
    uniform_orthogonal_into(rng, orthogonal_to.as_slice(), &mut out)?;
    UnitVector::normalized(out)
}

/// A GvMF law with its marginal table, ready to draw from repeatedly.
#[derive(Debug, Clone)]
pub struct GvmfSampler {
    params: GvmfParams,
    table: MarginalTable,
}

impl GvmfSampler {
    pub fn new(params: GvmfParams) -> Result<Self> {
        params.validate()?;
        let table = MarginalTable::with_default_grid(params.family, params.alpha, params.kappa, params.d)?;
        Ok(Self { params, table })
    }

    pub fn params(&self) -> &GvmfParams {
        &self.params
    }

    pub fn table(&self) -> &MarginalTable {
        &self.table
    }

    /// Appends one draw to `out`.
    #[inline]
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) -> Result<()> {
        let d = self.params.d;
        let mu = self.params.mu.as_slice();
        let (t, st) = self.table.draw(rng);
        let start = out.len();
        out.resize(start + d, 0.0);
        let y = &mut out[start..];
        uniform_orthogonal_into(rng, mu, y)?;
        for (o, m) in y.iter_mut().zip(mu) {
            *o = t * m + st * *o;
        }
        Ok(())
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, provenance: Provenance) -> Result<DirectionSample> {
        let mut data = Vec::with_capacity(n * self.params.d);
        for _ in 0..n {
            self.draw_into(rng, &mut data)?;
        }
        Ok(DirectionSample::from_trusted(self.params.d, data, provenance))
    }

    pub fn sample(&self, seed: SeedSpec, n: usize) -> Result<DirectionSample> {
        self.sample_with(&mut seed.rng(), n, seed.provenance())
    }
}

/// `n` independent GvMF draws from the stream `seed`.
pub fn sample_gvmf(p: &GvmfParams, seed: SeedSpec, n: usize) -> Result<DirectionSample> {
    GvmfSampler::new(p.clone())?.sample(seed, n)
}

/// Density `∝ exp(κ₁ μ₁ᵀx + β₂ (μ₂ᵀx)²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherBinghamParams {
    pub d: usize,
    pub mu1: UnitVector,
    pub mu2: UnitVector,
    pub kappa1: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone)]
pub struct FisherBinghamDraw {
    pub sample: DirectionSample,
    pub proposals: u64,
    pub acceptance_rate: f64,
}

/// Rejection sampler with a von Mises-Fisher(`κ₁`, `μ₁`) proposal and
/// acceptance probability `exp(β₂ (μ₂ᵀx)² - max(β₂, 0))`.
#[derive(Debug, Clone)]
pub struct FisherBinghamSampler {
    params: FisherBinghamParams,
    proposal: GvmfSampler,
}

impl FisherBinghamSampler {
    pub fn new(params: FisherBinghamParams) -> Result<Self> {
        if params.mu1.dim() != params.d || params.mu2.dim() != params.d {
            return Err(Error::DimensionMismatch {
                expected: params.d,
                found: params.mu1.dim().max(params.mu2.dim()),
            });
        }
        if !(params.kappa1 >= 0.0) || !params.beta2.is_finite() {
            return Err(invalid("Fisher-Bingham needs kappa1 >= 0 and finite beta2"));
        }
        let proposal = GvmfSampler::new(GvmfParams::new(Family::I, 1.0, params.kappa1, params.mu1.clone())?)?;
        Ok(Self { params, proposal })
    }

    pub fn sample(&self, seed: SeedSpec, n: usize) -> Result<FisherBinghamDraw> {
        let mut rng = seed.rng();
        let d = self.params.d;
        let mu2 = self.params.mu2.as_slice();
        let shift = self.params.beta2.max(0.0);
        let mut data = Vec::with_capacity(n * d);
        let mut proposals = 0u64;
        let mut accepted = 0usize;
        while accepted < n {
            self.proposal.draw_into(&mut rng, &mut data)?;
            proposals += 1;
            let x = &data[data.len() - d..];
            let c = dot(mu2, x);
            let p = libm::exp(self.params.beta2 * c * c - shift);
            if p > 1.0 + 1e-12 {
                return Err(Error::EnvelopeError(p));
            }
            let u: f64 = rng.random();
            if u < p {
                accepted += 1;
            } else {
                data.truncate(data.len() - d);
            }
        }
        Ok(FisherBinghamDraw {
            sample: DirectionSample::from_trusted(d, data, seed.provenance()),
            proposals,
            acceptance_rate: if proposals == 0 { 1.0 } else { n as f64 / proposals as f64 },
        })
    }
}

pub fn sample_fisher_bingham(fb: &FisherBinghamParams, seed: SeedSpec, n: usize) -> Result<FisherBinghamDraw> {
    FisherBinghamSampler::new(fb.clone())?.sample(seed, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Gvmf;
    use crate::quadrature::{integrate_on_interval, QuadratureConfig};

    fn table(family: Family, alpha: f64, kappa: f64, d: usize) -> MarginalTable {
        MarginalTable::with_default_grid(family, alpha, kappa, d).unwrap()
    }

    #[test]
    fn cdf_closed_forms() {
        let flat = table(Family::I, 1.0, 0.0, 3);
        let vmf = table(Family::I, 1.0, 2.0, 3);
        let ax = table(Family::Axial, 1.3, 3.0, 3);
        let denom = libm::exp(2.0) - libm::exp(-2.0);
        for i in 0..=200 {
            let y = -1.0 + i as f64 / 100.0;
            assert!((flat.cdf(y) - (y + 1.0) / 2.0).abs() < 1e-9);
            let exact = (libm::exp(2.0 * y) - libm::exp(-2.0)) / denom;
            assert!((vmf.cdf(y) - exact).abs() < 1e-9, "{y}");
            assert!((ax.cdf(-y) - (1.0 - ax.cdf(y))).abs() < 1e-9);
        }
        let g = vmf.grid();
        let f = vmf.cdf_values();
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(f.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!((f[0], *f.last().unwrap()), (0.0, 1.0));
        assert_eq!((g[0], *g.last().unwrap()), (-1.0, 1.0));
    }

    #[test]
    fn table_matches_direct_quadrature() {
        let cfg = QuadratureConfig::default();
        for (family, alpha, kappa, d) in [
            (Family::I, 0.5, 3.0, 4),
            (Family::II, 2.5, 10.0, 2),
            (Family::Axial, 0.7, 5.0, 5),
            (Family::II, 0.2, 20.0, 3),
        ] {
            let tab = table(family, alpha, kappa, d);
            let law = Gvmf::new(GvmfParams::canonical(family, d, alpha, kappa).unwrap()).unwrap();
            let e = (d as f64 - 3.0) / 2.0;
            let s_area = libm::exp(crate::numeric::ln_sphere_area(d - 2));
            let logf = |y: f64| {
                let x = [y, libm::sqrt((1.0 - y) * (1.0 + y))];
                let mut xx = alloc::vec![0.0; d];
                xx[..2].copy_from_slice(&x);
                law.log_density_unchecked(&xx) + e * libm::log((1.0 - y) * (1.0 + y))
            };
            for y in [-0.9, -0.3, 0.0, 0.2, 0.75, 0.99] {
                let v = integrate_on_interval(logf, -1.0, y, e, 0.0, &cfg).unwrap().value() * s_area;
                assert!((tab.cdf(y) - v).abs() < 1e-9, "{family:?} y={y}: {} vs {v}", tab.cdf(y));
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let tab = table(Family::I, 1.7, 6.0, 3);
        for i in 1..1000 {
            let u = i as f64 / 1000.0;
            let (t, st) = tab.quantile(u);
            assert!((tab.cdf(t) - u).abs() < 1e-10);
            assert!((t * t + st * st - 1.0).abs() < 1e-14);
        }
    }

    fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let mut d = 0.0f64;
        for (i, x) in xs.iter().enumerate() {
            let f = cdf(*x);
            d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
        }
        d
    }

    #[test]
    fn marginal_draws_pass_ks() {
        let n = 100_000;
        for (family, alpha, kappa) in [(Family::I, 1.5, 2.0), (Family::II, 0.6, 4.0), (Family::Axial, 3.0, 7.0)] {
            let tab = table(family, alpha, kappa, 3);
            let xs = sample_marginal(&tab, &mut SeedSpec::new(11, 3).rng(), n);
            let d = ks_distance(xs, |x| tab.cdf(x));
            assert!(d <= 1.63 / libm::sqrt(n as f64), "{family:?}: {d}");
        }
    }

    #[test]
    fn marginal_means() {
        let n = 1_000_000;
        let flat = table(Family::I, 1.0, 0.0, 3);
        let xs = sample_marginal(&flat, &mut SeedSpec::new(1, 0).rng(), n);
        let m = xs.iter().sum::<f64>() / n as f64;
        assert!(m.abs() < 3.0 * (1.0 / libm::sqrt(3.0)) / 1e3);
        let vmf = table(Family::I, 1.0, 2.0, 3);
        let xs = sample_marginal(&vmf, &mut SeedSpec::new(2, 0).rng(), n);
        let m = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
        let target = 1.0 / libm::tanh(2.0) - 0.5;
        assert!((m - target).abs() < 3.0 * libm::sqrt(var / n as f64));
        assert!(sample_marginal(&vmf, &mut SeedSpec::new(2, 0).rng(), 0).is_empty());
    }

    #[test]
    fn subsphere_draws() {
        let mut rng = SeedSpec::new(5, 0).rng();
        let e1 = UnitVector::basis(2, 0).unwrap();
        let mut plus = 0;
        for _ in 0..10_000 {
            let y = uniform_subsphere(&mut rng, 2, &e1).unwrap();
            assert_eq!(y.as_slice()[0], 0.0);
            assert!((y.as_slice()[1].abs() - 1.0).abs() < 1e-15);
            if y.as_slice()[1] > 0.0 {
                plus += 1;
            }
        }
        assert!((plus as f64 - 5000.0).abs() < 4.0 * 50.0);
        let mu = UnitVector::normalized(alloc::vec![0.3, -0.4, 0.5]).unwrap();
        let n = 100_000;
        let mut m = [[0.0f64; 3]; 3];
        for _ in 0..n {
            let y = uniform_subsphere(&mut rng, 3, &mu).unwrap();
            assert!(mu.dot(y.as_slice()).abs() < 1e-12);
            assert!((crate::numeric::norm(y.as_slice()) - 1.0).abs() < 1e-12);
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += y.as_slice()[i] * y.as_slice()[j] / n as f64;
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                let target = (delta - mu.as_slice()[i] * mu.as_slice()[j]) / 2.0;
                assert!((m[i][j] - target).abs() < 0.01);
            }
        }
    }

    #[test]
    fn gvmf_samples() {
        let n = 100_000;
        let mu = UnitVector::normalized(alloc::vec![1.0, 2.0, -2.0]).unwrap();
        let p = GvmfParams::new(Family::I, 1.0, 2.0, mu.clone()).unwrap();
        let s = sample_gvmf(&p, SeedSpec::new(9, 1), n).unwrap();
        let m = s.mean();
        let r = crate::numeric::norm(&m);
        assert!((r - 0.5373).abs() < 0.005);
        assert!(s.rows().all(|x| (crate::numeric::norm(x) - 1.0).abs() < 1e-12));
        let pa = GvmfParams::new(Family::Axial, 1.5, 4.0, mu.clone()).unwrap();
        let s = sample_gvmf(&pa, SeedSpec::new(9, 2), n).unwrap();
        let m = s.mean();
        for k in 0..3 {
            let var = s.rows().map(|x| x[k] * x[k]).sum::<f64>() / n as f64;
            assert!(m[k].abs() < 3.0 * libm::sqrt(var / n as f64));
        }
        let pu = GvmfParams::new(Family::II, 2.0, 0.0, mu).unwrap();
        let s = sample_gvmf(&pu, SeedSpec::new(9, 3), n).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v = s.rows().map(|x| x[i] * x[j]).sum::<f64>() / n as f64;
                let target = if i == j { 1.0 / 3.0 } else { 0.0 };
                assert!((v - target).abs() < 0.006);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = GvmfParams::canonical(Family::II, 4, 1.3, 2.0).unwrap();
        let a = sample_gvmf(&p, SeedSpec::new(42, 7), 500).unwrap();
        let b = sample_gvmf(&p, SeedSpec::new(42, 7), 500).unwrap();
        let c = sample_gvmf(&p, SeedSpec::new(42, 8), 500).unwrap();
        assert_eq!(a.as_flat(), b.as_flat());
        assert_ne!(a.as_flat(), c.as_flat());
        let d1 = SeedSpec::new(42, 7).derive(3);
        assert_ne!(d1, SeedSpec::new(42, 7).derive(4));
        assert_ne!(d1, SeedSpec::new(42, 8).derive(3));
    }

    #[test]
    fn extreme_concentration_near_endpoint() {
        // Mass of t lies within ~1e-20 of 1; the angle parameterization keeps it.
        let p = GvmfParams::canonical(Family::II, 3, 0.05, 10.0).unwrap();
        let sampler = GvmfSampler::new(p.clone()).unwrap();
        let s = sampler.sample(SeedSpec::new(1, 1), 20_000).unwrap();
        let mu = p.mu.as_slice();
        let stat: f64 = s
            .rows()
            .map(|x| crate::model::sufficient_statistic(Family::II, 0.05, mu, x))
            .sum::<f64>()
            / s.len() as f64;
        let var: f64 = s
            .rows()
            .map(|x| (crate::model::sufficient_statistic(Family::II, 0.05, mu, x) - stat).powi(2))
            .sum::<f64>()
            / s.len() as f64;
        let model = crate::model::expected_statistic(Family::II, 3, 10.0, 0.05, &QuadratureConfig::default()).unwrap();
        assert!((stat - model).abs() < 4.0 * libm::sqrt(var / s.len() as f64), "{stat} vs {model}");
    }

    fn fb(kappa1: f64, beta2: f64) -> FisherBinghamParams {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        FisherBinghamParams {
            d: 3,
            mu1: UnitVector::basis(3, 0).unwrap(),
            mu2: UnitVector::new(alloc::vec![0.0, h, h]).unwrap(),
            kappa1,
            beta2,
        }
    }

    #[test]
    fn fisher_bingham_reductions() {
        let n = 100_000;
        let draw = sample_fisher_bingham(&fb(2.0, 0.0), SeedSpec::new(3, 0), n).unwrap();
        assert_eq!(draw.acceptance_rate, 1.0);
        let r = crate::numeric::norm(&draw.sample.mean());
        assert!((r - (1.0 / libm::tanh(2.0) - 0.5)).abs() < 0.005);
        let draw = sample_fisher_bingham(&fb(0.0, 0.0), SeedSpec::new(3, 1), n).unwrap();
        for i in 0..3 {
            let v = draw.sample.rows().map(|x| x[i] * x[i]).sum::<f64>() / n as f64;
            assert!((v - 1.0 / 3.0).abs() < 0.006);
        }
    }

    #[test]
    fn fisher_bingham_mean_direction() {
        let draw = sample_fisher_bingham(&fb(3.0, 3.5), SeedSpec::new(4, 0), 100_000).unwrap();
        assert!(draw.acceptance_rate > 0.0 && draw.acceptance_rate < 1.0);
        let m = draw.sample.mean();
        let cos = m[0] / crate::numeric::norm(&m);
        assert!(libm::acos(cos.min(1.0)).to_degrees() < 2.0);
        let neg = sample_fisher_bingham(&fb(1.0, -2.0), SeedSpec::new(4, 1), 1000).unwrap();
        assert_eq!(neg.sample.len(), 1000);
    }
}
