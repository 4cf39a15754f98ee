//! Level sets, clusters, and finite-volume percolation estimates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gff::ZdBoxSampler;
use crate::green::ZdGreen;
use crate::lattice::{Ambient, LatticeBox, Region, TorusGeom};
use crate::seed::derive_seed;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Default crossing threshold for the critical-level proxy.
pub const DEFAULT_TAU: f64 = 0.02;

/// `{x : field(x) >= h}`, in the field's site order.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelMask {
    h: f64,
    mask: Vec<bool>,
}

impl LevelMask {
    pub fn from_bools(h: f64, mask: Vec<bool>) -> Self {
        LevelMask { h, mask }
    }

    pub fn level(&self) -> f64 {
        self.h
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &LevelMask) -> bool {
        self.mask.len() == other.mask.len() && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }
}

/// Closed threshold: a site is kept iff its value is `>= h`.
pub fn level_set(values: &[f64], h: f64) -> LevelMask {
    LevelMask {
        h,
        mask: values.iter().map(|&v| v >= h).collect(),
    }
}

/// Adjacency used for labeling. The torus wraps; a region only connects
/// sites that both belong to it.
#[derive(Clone, Copy, Debug)]
pub enum Topology<'a> {
    Torus(TorusGeom),
    Region(&'a Region),
}

impl Topology<'_> {
    fn len(&self) -> usize {
        match self {
            Topology::Torus(g) => g.volume(),
            Topology::Region(r) => r.len(),
        }
    }

    /// Calls `f` with each neighbor index of `i` that is larger than `i`.
    fn for_each_forward_neighbor(&self, i: usize, buf: &mut Vec<i64>, mut f: impl FnMut(usize)) {
        match self {
            Topology::Torus(g) => {
                for axis in 0..g.dim() {
                    for forward in [true, false] {
                        let j = g.shift_index(i, axis, forward);
                        if j > i {
                            f(j);
                        }
                    }
                }
            }
            Topology::Region(r) => {
                Ambient::Lattice(r.dim()).for_each_neighbor(r.site(i), buf, |y| {
                    if let Some(j) = r.index_of(y) {
                        if j > i {
                            f(j);
                        }
                    }
                });
            }
        }
    }
}

/// Connected components of a mask. Component ids are ordered by the
/// smallest site index they contain.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterLabels {
    labels: Vec<Option<u32>>,
    sizes: Vec<usize>,
}

impl ClusterLabels {
    pub fn label(&self, i: usize) -> Option<u32> {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Option<u32>] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }

    /// Site indices of component `c`, increasing.
    pub fn members(&self, c: u32) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == Some(c)).collect()
    }

    /// Largest component, ties to the one holding the smallest site index.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<u32> = None;
        for (c, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|b| s > self.sizes[b as usize]) {
                best = Some(c as u32);
            }
        }
        best
    }
}

pub fn label_clusters(mask: &LevelMask, topology: Topology<'_>) -> ClusterLabels {
    let n = topology.len();
    assert_eq!(mask.len(), n, "mask and topology sizes differ");
    let m = mask.as_slice();
    let mut uf = UnionFind::<u32>::new(n);
    let mut buf = Vec::new();
    for i in (0..n).filter(|&i| m[i]) {
        topology.for_each_forward_neighbor(i, &mut buf, |j| {
            if m[j] {
                uf.union(i as u32, j as u32);
            }
        });
    }
    let mut id_of_root: Vec<u32> = vec![u32::MAX; n];
    let mut sizes = Vec::new();
    let mut labels = vec![None; n];
    for i in (0..n).filter(|&i| m[i]) {
        let root = uf.find_mut(i as u32) as usize;
        if id_of_root[root] == u32::MAX {
            id_of_root[root] = sizes.len() as u32;
            sizes.push(0);
        }
        let c = id_of_root[root];
        sizes[c as usize] += 1;
        labels[i] = Some(c);
    }
    ClusterLabels { labels, sizes }
}

/// Largest torus distance between two sites of `members`, computed exactly
/// by separable max-plus transforms: for every site `y`,
/// `F(y) = max_{x in C} sum_i |x_i - y_i|_N` is built one axis at a time,
/// and the diameter is `max_{y in C} F(y)`.
pub fn extrinsic_diameter(geom: TorusGeom, members: &[usize]) -> u64 {
    if members.len() <= 1 {
        return 0;
    }
    const NONE: i64 = i64::MIN / 4;
    let n = geom.side();
    let d = geom.dim();
    let vol = geom.volume();
    let mut f = vec![NONE; vol];
    for &i in members {
        f[i] = 0;
    }
    let circ: Vec<i64> = (0..n).map(|k| k.min(n - k) as i64).collect();
    let mut line = vec![NONE; n];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        for base in 0..vol {
            if (base / stride) % n != 0 {
                continue;
            }
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = f[base + k * stride];
            }
            for y in 0..n {
                let mut best = NONE;
                for (x, &v) in line.iter().enumerate() {
                    if v > NONE {
                        best = best.max(v + circ[(x + n - y) % n]);
                    }
                }
                f[base + y * stride] = best;
            }
        }
    }
    members.iter().map(|&i| f[i]).max().unwrap_or(0).max(0) as u64
}

/// Summary of one labeled torus level set.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStats {
    pub max_cluster: usize,
    pub max_frac: f64,
    pub second_cluster: usize,
    /// Component size to number of components of that size.
    pub histogram: BTreeMap<usize, usize>,
    /// Extrinsic diameter of the component of the origin, zero if the
    /// origin is not in the level set.
    pub diam_o: u64,
    /// `diam_o >= N/4`.
    pub giant_flag: bool,
}

pub fn cluster_stats(labels: &ClusterLabels, geom: TorusGeom) -> ClusterStats {
    let mut histogram = BTreeMap::new();
    for &s in labels.sizes() {
        *histogram.entry(s).or_insert(0) += 1;
    }
    let (max_cluster, second_cluster) = match labels.largest() {
        None => (0, 0),
        Some(c) => {
            let second = labels
                .sizes()
                .iter()
                .enumerate()
                .filter(|&(k, _)| k as u32 != c)
                .map(|(_, &s)| s)
                .max()
                .unwrap_or(0);
            (labels.sizes()[c as usize], second)
        }
    };
    let diam_o = match labels.label(0) {
        None => 0,
        Some(c) => extrinsic_diameter(geom, &labels.members(c)),
    };
    ClusterStats {
        max_cluster,
        max_frac: max_cluster as f64 / geom.volume() as f64,
        second_cluster,
        histogram,
        diam_o,
        giant_flag: 4 * diam_o >= geom.side() as u64,
    }
}

/// Estimate of `P[0 <-> ∂B(n)]` at level `h` with a 95% Wilson interval.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaEstimate {
    pub h: f64,
    pub n: usize,
    pub reps: usize,
    pub successes: usize,
    pub eta_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl EtaEstimate {
    pub fn from_counts(h: f64, n: usize, successes: usize, reps: usize) -> Self {
        assert!(reps > 0 && successes <= reps);
        let (ci_lo, ci_hi) = wilson_interval(successes, reps);
        EtaEstimate {
            h,
            n,
            reps,
            successes,
            eta_hat: successes as f64 / reps as f64,
            ci_lo,
            ci_hi,
        }
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, reps: usize) -> (f64, f64) {
    let m = reps as f64;
    let p = successes as f64 / m;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / m;
    let center = (p + z2 / (2.0 * m)) / denom;
    let half = Z95 * (p * (1.0 - p) / m + z2 / (4.0 * m * m)).sqrt() / denom;
    // The interval contains p exactly; the clamp only removes rounding.
    ((center - half).min(p).max(0.0), (center + half).max(p).min(1.0))
}

/// Samples of the `Z^d` field on `B(n) ∪ ∂B(n)`, reduced to the connection
/// level `L = max over paths from 0 to ∂B(n) of the minimum of the field on
/// the path`. The origin connects to `∂B(n)` inside `{field >= h}` exactly
/// when `L >= h`, so one sample serves a whole grid of levels.
pub struct BallPercolation {
    n: usize,
    sampler: ZdBoxSampler,
    /// Closure adjacency, CSR.
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    on_boundary: Vec<bool>,
    origin: usize,
}

impl BallPercolation {
    pub fn new(dim: usize, n: usize, zd: &ZdGreen) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter("ball radius n must be >= 1".into()));
        }
        let sampler = ZdBoxSampler::new(&LatticeBox::ball(dim, n as i64), zd)?;
        let closure = sampler.solver().closure();
        let region = &closure.region;
        let mut offsets = vec![0];
        let mut neighbors = Vec::new();
        let mut buf = Vec::new();
        for x in region.sites() {
            Ambient::Lattice(dim).for_each_neighbor(x, &mut buf, |y| {
                if let Some(j) = region.index_of(y) {
                    neighbors.push(j as u32);
                }
            });
            offsets.push(neighbors.len());
        }
        let on_boundary = closure
            .origin
            .iter()
            .map(|o| matches!(o, crate::green::ClosureSite::Boundary(_)))
            .collect();
        let origin = region
            .index_of(&vec![0; dim])
            .ok_or_else(|| Error::NotInRegion(vec![0; dim]))?;
        Ok(BallPercolation {
            n,
            sampler,
            offsets,
            neighbors,
            on_boundary,
            origin,
        })
    }

    pub fn radius(&self) -> usize {
        self.n
    }

    pub fn sampler(&self) -> &ZdBoxSampler {
        &self.sampler
    }

    /// Connection level of one field sample.
    pub fn connection_level(&self, values: &[f64]) -> f64 {
        widest_path(&self.offsets, &self.neighbors, values, self.origin, &self.on_boundary)
    }

    /// Connection levels of `reps` samples with seeds derived from `seed`.
    pub fn levels(&self, reps: usize, seed: u64) -> Result<Vec<f64>> {
        (0..reps)
            .into_par_iter()
            .map(|m| {
                let f = self.sampler.sample(derive_seed(seed, "eta", m as u64))?;
                Ok(self.connection_level(f.values()))
            })
            .collect()
    }

    /// Whether `0 <-> ∂B(n)` in `{values >= h}`, by breadth-first search;
    /// the direct form of the event behind [`connection_level`](Self::connection_level).
    pub fn connected_at(&self, values: &[f64], h: f64) -> bool {
        if values[self.origin] < h {
            return false;
        }
        let mut seen = vec![false; values.len()];
        let mut stack = vec![self.origin];
        seen[self.origin] = true;
        while let Some(u) = stack.pop() {
            if self.on_boundary[u] {
                return true;
            }
            for &v in &self.neighbors[self.offsets[u]..self.offsets[u + 1]] {
                let v = v as usize;
                if !seen[v] && values[v] >= h {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        false
    }
}

#[derive(PartialEq)]
struct Width(f64, usize);

impl Eq for Width {}

impl PartialOrd for Width {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Width {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// Largest bottleneck `min values` over paths from `source` to a target.
fn widest_path(offsets: &[usize], neighbors: &[u32], values: &[f64], source: usize, target: &[bool]) -> f64 {
    let mut best = vec![f64::NEG_INFINITY; values.len()];
    let mut done = vec![false; values.len()];
    let mut heap = BinaryHeap::new();
    best[source] = values[source];
    heap.push(Width(values[source], source));
    while let Some(Width(w, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if target[u] {
            return w;
        }
        for &v in &neighbors[offsets[u]..offsets[u + 1]] {
            let v = v as usize;
            let cand = w.min(values[v]);
            if !done[v] && cand > best[v] {
                best[v] = cand;
                heap.push(Width(cand, v));
            }
        }
    }
    f64::NEG_INFINITY
}

/// `eta_hat` at `h` from precomputed connection levels.
pub fn eta_from_levels(levels: &[f64], n: usize, h: f64) -> EtaEstimate {
    let successes = levels.iter().filter(|&&l| l >= h).count();
    EtaEstimate::from_counts(h, n, successes, levels.len())
}

/// `M` independent samples on `B(n)`, one estimate at level `h`.
pub fn eta_hat(h: f64, n: usize, reps: usize, seed: u64, zd: &ZdGreen) -> Result<EtaEstimate> {
    if reps == 0 {
        return Err(Error::InvalidParameter("replicate count must be >= 1".into()));
    }
    let ball = BallPercolation::new(zd.dim(), n, zd)?;
    Ok(eta_from_levels(&ball.levels(reps, seed)?, n, h))
}

/// Result of bisecting `h -> eta_hat_n(h)` for the crossing of `tau`.
#[derive(Clone, Debug)]
pub struct HStarEstimate {
    pub h_hat: f64,
    pub tau: f64,
    /// Final bracket; `eta_hat(lo) > tau >= eta_hat(hi)`.
    pub lo: f64,
    pub hi: f64,
    /// Every evaluated level in order, brackets first.
    pub steps: Vec<EtaEstimate>,
}

/// Bisection on shared samples, stopped once the bracket is narrower than
/// `resolution`. The estimate is the bracket midpoint.
pub fn h_star_from_levels(
    levels: &[f64],
    n: usize,
    bracket: (f64, f64),
    tau: f64,
    resolution: f64,
) -> Result<HStarEstimate> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || !(resolution > 0.0) || !(0.0..1.0).contains(&tau) || levels.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "need lo < hi, resolution > 0, tau in [0, 1) and samples; got [{lo}, {hi}], {resolution}, {tau}"
        )));
    }
    let e_lo = eta_from_levels(levels, n, lo);
    let e_hi = eta_from_levels(levels, n, hi);
    if !(e_lo.eta_hat > tau && e_hi.eta_hat <= tau) {
        return Err(Error::BracketInvalid {
            lo,
            hi,
            tau,
            eta_lo: e_lo.eta_hat,
            eta_hi: e_hi.eta_hat,
        });
    }
    let mut steps = vec![e_lo, e_hi];
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let e = eta_from_levels(levels, n, mid);
        if e.eta_hat > tau {
            lo = mid;
        } else {
            hi = mid;
        }
        steps.push(e);
    }
    Ok(HStarEstimate {
        h_hat: 0.5 * (lo + hi),
        tau,
        lo,
        hi,
        steps,
    })
}

pub fn estimate_h_star(
    n: usize,
    reps: usize,
    bracket: (f64, f64),
    tau: f64,
    seed: u64,
    zd: &ZdGreen,
) -> Result<HStarEstimate> {
    let ball = BallPercolation::new(zd.dim(), n, zd)?;
    h_star_from_levels(&ball.levels(reps, seed)?, n, bracket, tau, 1e-3)
}
