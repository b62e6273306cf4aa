//! k-nearest-neighbour entropy estimation on `S^{d-1}` with chordal distances.
//!
//! `Ĥ = (1/N) Σ log(ρ_k(i)^m V_m (N - 1) e^{-ψ(k)})`, `m = d - 1`, where
//! `ρ_k(i)` is the Euclidean distance from point `i` to its `k`-th nearest
//! neighbour among the other points.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::exec::{ReplicateExecutor, Sequential};
use crate::numeric::{ln_unit_ball_volume, CompensatedSum};
use crate::sample::{DirectionSample, Provenance};
use crate::sampling::SeedSpec;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Pairs closer than this make the estimator undefined.
pub const DUPLICATE_TOL: f64 = 1e-12;
pub const JITTER_MAGNITUDE: f64 = 1e-10;

/// `ψ(k) = Σ_{j=1}^{k-1} 1/j - γ`.
pub fn psi_const(k: usize) -> f64 {
    let mut h = 0.0;
    for j in 1..k {
        h += 1.0 / j as f64;
    }
    h - EULER_GAMMA
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate {
    pub value: f64,
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub mean_log_rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborSearch {
    BruteForce,
    #[default]
    KdTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KnnConfig {
    pub search: NeighborSearch,
    /// When set, every point is perturbed by Gaussian noise of scale
    /// [`JITTER_MAGNITUDE`] and renormalized before searching, so exact
    /// duplicates no longer abort the estimate.
    pub jitter: Option<SeedSpec>,
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    s
}

/// The `k` smallest squared distances seen so far, ascending.
struct Best {
    d2: Vec<f64>,
    idx: Vec<usize>,
    k: usize,
}

impl Best {
    fn new(k: usize) -> Self {
        Self {
            d2: Vec::with_capacity(k + 1),
            idx: Vec::with_capacity(k + 1),
            k,
        }
    }

    #[inline]
    fn bound(&self) -> f64 {
        if self.d2.len() < self.k {
            f64::INFINITY
        } else {
            self.d2[self.k - 1]
        }
    }

    #[inline]
    fn offer(&mut self, d2: f64, j: usize) {
        if d2 >= self.bound() {
            return;
        }
        let pos = self.d2.partition_point(|&v| v <= d2);
        self.d2.insert(pos, d2);
        self.idx.insert(pos, j);
        if self.d2.len() > self.k {
            self.d2.pop();
            self.idx.pop();
        }
    }
}

const LEAF_SIZE: usize = 12;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over the rows of a flat row-major array.
struct KdTree<'a> {
    data: &'a [f64],
    d: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn build(data: &'a [f64], d: usize) -> Self {
        let n = data.len() / d;
        let mut tree = Self {
            data,
            d,
            order: (0..n).collect(),
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 2),
        };
        tree.build_node(0, n);
        tree
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut axis = 0;
        let mut best_spread = -1.0;
        for a in 0..self.d {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = self.data[i * self.d + a];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                axis = a;
            }
        }
        let mid = start + (end - start) / 2;
        let (data, d) = (self.data, self.d);
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            data[i * d + axis].total_cmp(&data[j * d + axis])
        });
        let value = data[self.order[mid] * d + axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn search(&self, node: usize, q: &[f64], skip: usize, best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j != skip {
                        best.offer(dist2(q, self.point(j)), j);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, best);
                if diff * diff <= best.bound() {
                    self.search(far, q, skip, best);
                }
            }
        }
    }
}

fn check_args(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if n < k + 1 {
        return Err(invalid(alloc::format!("need at least k + 1 = {} points, got {n}", k + 1)));
    }
    Ok(())
}

fn jittered(sample: &DirectionSample, seed: SeedSpec) -> DirectionSample {
    let mut rng = seed.rng();
    let mut out = sample.map_rows(|_, src, dst| {
        for (o, s) in dst.iter_mut().zip(src) {
            let z: f64 = rng.sample(StandardNormal);
            *o = s + JITTER_MAGNITUDE * z;
        }
        let n = crate::numeric::norm(dst);
        dst.iter_mut().for_each(|o| *o /= n);
    });
    out.provenance = Provenance::Derived(alloc::string::String::from("jittered"));
    out
}

/// Per-point `k`-th neighbour distance, with the nearest-neighbour distance
/// and index kept for the duplicate check.
fn kth_distances<E: ReplicateExecutor>(
    sample: &DirectionSample,
    k: usize,
    search: NeighborSearch,
    exec: &E,
) -> Result<Vec<f64>> {
    let n = sample.len();
    check_args(n, k)?;
    let data = sample.as_flat();
    let d = sample.dim();
    let results: Vec<(f64, f64, usize)> = match search {
        NeighborSearch::BruteForce => exec.map(n, |i| {
            let q = &data[i * d..(i + 1) * d];
            let mut best = Best::new(k);
            for j in 0..n {
                if j != i {
                    best.offer(dist2(q, &data[j * d..(j + 1) * d]), j);
                }
            }
            (best.d2[k - 1], best.d2[0], best.idx[0])
        }),
        NeighborSearch::KdTree => {
            let tree = KdTree::build(data, d);
            exec.map(n, |i| {
                let mut best = Best::new(k);
                tree.search(0, tree.point(i), i, &mut best);
                (best.d2[k - 1], best.d2[0], best.idx[0])
            })
        }
    };
    let mut out = Vec::with_capacity(n);
    for (i, (kth, nearest, j)) in results.into_iter().enumerate() {
        let dist = libm::sqrt(nearest);
        if dist < DUPLICATE_TOL {
            return Err(Error::DuplicatePoints {
                first: i.min(j),
                second: i.max(j),
                distance: dist,
            });
        }
        out.push(libm::sqrt(kth));
    }
    Ok(out)
}

/// `ρ_k(i)` for every point, using the default kd-tree search.
pub fn knn_distances(sample: &DirectionSample, k: usize) -> Result<Vec<f64>> {
    knn_distances_with(sample, k, &KnnConfig::default(), &Sequential)
}

pub fn knn_distances_with<E: ReplicateExecutor>(
    sample: &DirectionSample,
    k: usize,
    cfg: &KnnConfig,
    exec: &E,
) -> Result<Vec<f64>> {
    match cfg.jitter {
        Some(seed) => kth_distances(&jittered(sample, seed), k, cfg.search, exec),
        None => kth_distances(sample, k, cfg.search, exec),
    }
}

/// Assembles `Ĥ_{N,k}` from precomputed distances in dimension `d`.
pub fn entropy_from_distances(rho: &[f64], k: usize, d: usize) -> EntropyEstimate {
    let n = rho.len();
    let m = d - 1;
    let mut acc = CompensatedSum::new();
    for r in rho {
        acc.add(libm::log(*r));
    }
    let mean_log_rho = acc.value() / n as f64;
    let value = m as f64 * mean_log_rho + ln_unit_ball_volume(m) + libm::log((n - 1) as f64) - psi_const(k);
    EntropyEstimate {
        value,
        k,
        n,
        m,
        mean_log_rho,
    }
}

pub fn estimate_entropy(sample: &DirectionSample, k: usize) -> Result<EntropyEstimate> {
    estimate_entropy_with(sample, k, &KnnConfig::default(), &Sequential)
}

pub fn estimate_entropy_with<E: ReplicateExecutor>(
    sample: &DirectionSample,
    k: usize,
    cfg: &KnnConfig,
    exec: &E,
) -> Result<EntropyEstimate> {
    let rho = knn_distances_with(sample, k, cfg, exec)?;
    Ok(entropy_from_distances(&rho, k, sample.dim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, GvmfParams};
    use crate::sampling::sample_gvmf;
    use proptest::prelude::*;

    fn sample_of(rows: &[&[f64]]) -> DirectionSample {
        let d = rows[0].len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        DirectionSample::new(d, data, Provenance::Derived("test".into())).unwrap()
    }

    #[test]
    fn psi_values() {
        assert!((psi_const(1) + 0.5772157).abs() < 1e-7);
        assert!((psi_const(2) - 0.4227843).abs() < 1e-7);
        assert!((psi_const(3) - 0.9227843).abs() < 1e-7);
    }

    #[test]
    fn equilateral_and_tetrahedron() {
        let h = libm::sqrt(3.0) / 2.0;
        let s = sample_of(&[&[1.0, 0.0, 0.0], &[-0.5, h, 0.0], &[-0.5, -h, 0.0]]);
        let rho = knn_distances(&s, 1).unwrap();
        assert!(rho.iter().all(|r| (r - libm::sqrt(3.0)).abs() < 1e-15));
        let c = 1.0 / libm::sqrt(3.0);
        let tet = sample_of(&[&[c, c, c], &[c, -c, -c], &[-c, c, -c], &[-c, -c, c]]);
        for search in [NeighborSearch::BruteForce, NeighborSearch::KdTree] {
            let cfg = KnnConfig { search, jitter: None };
            let rho = knn_distances_with(&tet, 1, &cfg, &Sequential).unwrap();
            assert!(rho.iter().all(|r| (r - libm::sqrt(8.0 / 3.0)).abs() < 1e-12));
        }
    }

    #[test]
    fn k_equal_n_minus_one_is_farthest_point() {
        let p = GvmfParams::canonical(Family::I, 3, 1.0, 1.0).unwrap();
        let s = sample_gvmf(&p, SeedSpec::new(1, 0), 40).unwrap();
        let rho = knn_distances(&s, 39).unwrap();
        for i in 0..40 {
            let far = (0..40)
                .filter(|&j| j != i)
                .map(|j| libm::sqrt(dist2(s.row(i), s.row(j))))
                .fold(0.0, f64::max);
            assert_eq!(rho[i], far);
        }
        assert!(knn_distances(&s, 40).is_err());
        assert!(knn_distances(&s, 0).is_err());
    }

    #[test]
    fn duplicates_are_rejected_unless_jittered() {
        let s = sample_of(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        match knn_distances(&s, 1) {
            Err(Error::DuplicatePoints { first, second, .. }) => assert_eq!((first, second), (0, 2)),
            other => panic!("{other:?}"),
        }
        let cfg = KnnConfig {
            search: NeighborSearch::KdTree,
            jitter: Some(SeedSpec::new(1, 0)),
        };
        let rho = knn_distances_with(&s, 1, &cfg, &Sequential).unwrap();
        assert!(rho[0] > 0.0 && rho[0] < 1e-8);
    }

    #[test]
    fn s2_form_of_the_estimator() {
        let p = GvmfParams::canonical(Family::II, 3, 1.5, 2.0).unwrap();
        let s = sample_gvmf(&p, SeedSpec::new(2, 0), 300).unwrap();
        for k in 1..4 {
            let rho = knn_distances(&s, k).unwrap();
            let est = estimate_entropy(&s, k).unwrap();
            let n = rho.len() as f64;
            let direct = 2.0 / n * rho.iter().map(|r| libm::log(*r)).sum::<f64>()
                + libm::log(core::f64::consts::PI)
                - psi_const(k)
                + libm::log(n - 1.0);
            assert!((est.value - direct).abs() < 1e-12);
            assert_eq!((est.k, est.n, est.m), (k, 300, 2));
        }
    }

    #[test]
    fn kd_tree_matches_brute_force_on_random_instances() {
        for inst in 0..100u64 {
            let d = 2 + (inst % 4) as usize;
            let n = 20 + (inst as usize * 7) % 300;
            let fam = Family::ALL[(inst % 3) as usize];
            let p = GvmfParams::canonical(fam, d, 0.5 + (inst % 5) as f64, (inst % 7) as f64).unwrap();
            let s = sample_gvmf(&p, SeedSpec::new(77, inst), n).unwrap();
            let k = 1 + (inst % 4) as usize;
            let brute = KnnConfig { search: NeighborSearch::BruteForce, jitter: None };
            let a = knn_distances_with(&s, k, &brute, &Sequential).unwrap();
            let b = knn_distances(&s, k).unwrap();
            assert_eq!(a, b, "instance {inst}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn rotation_invariance(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, seed in 0u64..1000) {
            let p = GvmfParams::canonical(Family::Axial, 3, 1.2, 3.0).unwrap();
            let s = sample_gvmf(&p, SeedSpec::new(seed, 0), 400).unwrap();
            // Rotation as a product of elementary rotations about each axis.
            let rot = |x: &[f64], out: &mut [f64]| {
                let (sa, ca) = (libm::sin(a), libm::cos(a));
                let (sb, cb) = (libm::sin(b), libm::cos(b));
                let (sc, cc) = (libm::sin(c), libm::cos(c));
                let y = [x[0], ca * x[1] - sa * x[2], sa * x[1] + ca * x[2]];
                let z = [cb * y[0] + sb * y[2], y[1], -sb * y[0] + cb * y[2]];
                out[0] = cc * z[0] - sc * z[1];
                out[1] = sc * z[0] + cc * z[1];
                out[2] = z[2];
            };
            let r = s.map_rows(|_, src, dst| rot(src, dst));
            let h0 = estimate_entropy(&s, 3).unwrap().value;
            let h1 = estimate_entropy(&r, 3).unwrap().value;
            prop_assert!((h0 - h1).abs() < 1e-10);
        }
    }
}
