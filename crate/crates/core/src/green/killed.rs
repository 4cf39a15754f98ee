//! Green function of the walk killed on exiting a finite region, its exit
//! law, and expected exit times.
//!
//! `(I - P_U)` is handled through the symmetric form `A = 2d I - Adj_U`, so
//! that `(I - P_U)^{-1} = 2d A^{-1}`. Three backends:
//!
//! * boxes (and torus regions that are boxes without wrapping edges) are
//!   diagonalized exactly by products of sine vectors;
//! * other regions use an envelope Cholesky factor in reverse Cuthill-McKee
//!   order;
//! * regions too large for the envelope fall back to conjugate gradients,
//!   which can solve but not sample.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Region};
use crate::seed::{fill_gaussian, SimRng};

const CG_THRESHOLD: usize = 200_000;
const ENVELOPE_LIMIT: usize = 60_000_000;
const CG_TOLERANCE: f64 = 1e-12;

/// Compressed adjacency lists, repeated entries encode multi-edges.
#[derive(Clone, Debug, Default)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    #[inline]
    fn row(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }
}

pub struct KilledGreenSolver {
    region: Arc<Region>,
    boundary: Arc<Region>,
    closure: OnceLock<Closure>,
    two_d: f64,
    inner: Csr,
    outer: Csr,
    backend: Backend,
}

/// `U ∪ ∂U` with, for each of its sites, the position in `U` or `∂U`.
#[derive(Debug)]
pub struct Closure {
    pub region: Arc<Region>,
    pub origin: Vec<ClosureSite>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosureSite {
    Interior(usize),
    Boundary(usize),
}

enum Backend {
    Spectral(BoxSpectral),
    Envelope(Envelope),
    Conjugate,
}

impl std::fmt::Debug for KilledGreenSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KilledGreenSolver")
            .field("region", &self.region)
            .field("boundary", &self.boundary.len())
            .field("backend", &self.backend_name())
            .finish()
    }
}

impl KilledGreenSolver {
    pub fn new(region: &Region) -> Result<Self> {
        let boundary = region.outer_boundary();
        let n = region.len();
        let mut inner = Csr {
            offsets: Vec::with_capacity(n + 1),
            targets: Vec::with_capacity(n * 2 * region.dim()),
        };
        let mut outer = Csr {
            offsets: Vec::with_capacity(n + 1),
            targets: Vec::new(),
        };
        inner.offsets.push(0);
        outer.offsets.push(0);
        let ambient = region.ambient();
        let mut buf = Vec::with_capacity(region.dim());
        for x in region.sites() {
            ambient.for_each_neighbor(x, &mut buf, |y| match region.index_of(y) {
                Some(j) => inner.targets.push(j),
                None => outer.targets.push(boundary.index_of(y).expect("boundary site")),
            });
            inner.offsets.push(inner.targets.len());
            outer.offsets.push(outer.targets.len());
        }
        if n > 0 && boundary.is_empty() {
            return Err(Error::EmptyBoundary);
        }
        let two_d = 2.0 * region.dim() as f64;
        let backend = if let Some(b) = region.as_box() {
            Backend::Spectral(BoxSpectral::new(&b, region))
        } else if n <= CG_THRESHOLD {
            match Envelope::factor(&inner, two_d, ENVELOPE_LIMIT)? {
                Some(e) => Backend::Envelope(e),
                None => Backend::Conjugate,
            }
        } else {
            Backend::Conjugate
        };
        Ok(KilledGreenSolver {
            region: Arc::new(region.clone()),
            boundary: Arc::new(boundary),
            closure: OnceLock::new(),
            two_d,
            inner,
            outer,
            backend,
        })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn region_arc(&self) -> Arc<Region> {
        Arc::clone(&self.region)
    }

    /// `∂U`, the outer boundary in the ambient graph.
    pub fn boundary(&self) -> &Region {
        &self.boundary
    }

    pub fn boundary_arc(&self) -> Arc<Region> {
        Arc::clone(&self.boundary)
    }

    /// `U ∪ ∂U`, built on first use.
    pub fn closure(&self) -> &Closure {
        self.closure.get_or_init(|| {
            let region = Arc::new(self.region.union(&self.boundary));
            let origin = region
                .sites()
                .map(|x| match self.region.index_of(x) {
                    Some(i) => ClosureSite::Interior(i),
                    None => ClosureSite::Boundary(self.boundary.index_of(x).expect("closure site")),
                })
                .collect();
            Closure { region, origin }
        })
    }

    pub fn backend_name(&self) -> &'static str {
        match self.backend {
            Backend::Spectral(_) => "spectral",
            Backend::Envelope(_) => "envelope-cholesky",
            Backend::Conjugate => "conjugate-gradient",
        }
    }

    /// Boundary neighbours of the `i`-th site of `U`, with multiplicity.
    pub fn boundary_neighbors(&self, i: usize) -> &[usize] {
        self.outer.row(i)
    }

    /// Neighbours of the `i`-th site of `U` inside `U`, with multiplicity.
    pub fn inner_neighbors(&self, i: usize) -> &[usize] {
        self.inner.row(i)
    }

    /// `(I - P_U)^{-1} rhs`, both indexed by the sites of `U`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.region.len());
        let mut x = match &self.backend {
            Backend::Spectral(s) => return s.solve(rhs),
            Backend::Envelope(e) => e.solve(rhs),
            Backend::Conjugate => self.cg(rhs),
        };
        x.iter_mut().for_each(|v| *v *= self.two_d);
        x
    }

    /// `A x = rhs` by conjugate gradients.
    fn cg(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let s: f64 = self.inner.row(i).iter().map(|&j| x[j]).sum();
                out[i] = self.two_d * x[i] - s;
            }
        };
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_b == 0.0 {
            return x;
        }
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        for _ in 0..(10 * n + 1000) {
            if rr.sqrt() <= CG_TOLERANCE * norm_b {
                break;
            }
            apply(&p, &mut ap);
            let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_new / rr;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_new;
        }
        x
    }

    /// `g^U(x, y)`; zero unless both sites lie in `U`.
    pub fn green(&self, x: &[i64], y: &[i64]) -> f64 {
        match (self.region.index_of(x), self.region.index_of(y)) {
            (Some(i), Some(j)) => self.green_column(j)[i],
            _ => 0.0,
        }
    }

    /// `g^U(., y)` for the `j`-th site `y` of `U`.
    pub fn green_column(&self, j: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.region.len()];
        e[j] = 1.0;
        self.solve(&e)
    }

    /// `g^U(x, x)` for every site of `U`.
    pub fn diagonal(&self) -> Vec<f64> {
        match &self.backend {
            Backend::Spectral(s) => s.diagonal(),
            _ => (0..self.region.len())
                .map(|j| self.green_column(j)[j])
                .collect(),
        }
    }

    /// `E_x[T_U]` for every site of `U`.
    pub fn expected_exit_times(&self) -> Vec<f64> {
        self.solve(&vec![1.0; self.region.len()])
    }

    /// `E_x[T_U]`, zero off `U`.
    pub fn expected_exit_time(&self, x: &[i64]) -> f64 {
        match self.region.index_of(x) {
            Some(i) => self.expected_exit_times()[i],
            None => 0.0,
        }
    }

    /// Law of the exit position started from `x`, indexed by the sites of
    /// [`boundary`](Self::boundary).
    pub fn exit_distribution(&self, x: &[i64]) -> Result<Vec<f64>> {
        let i = self
            .region
            .index_of(x)
            .ok_or_else(|| Error::NotInRegion(x.to_vec()))?;
        if self.boundary.is_empty() {
            return Err(Error::EmptyBoundary);
        }
        let col = self.green_column(i);
        Ok(self.push_to_boundary(&col))
    }

    /// `p(y) = (2d)^{-1} sum_{u in U, u ~ y} f(u)`.
    pub fn push_to_boundary(&self, f: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.boundary.len()];
        for (u, &fu) in f.iter().enumerate() {
            for &b in self.outer.row(u) {
                p[b] += fu / self.two_d;
            }
        }
        p
    }

    /// `b(u) = (2d)^{-1} sum_{y in ∂U, y ~ u} data(y)`.
    pub fn boundary_rhs(&self, data: &[f64]) -> Vec<f64> {
        assert_eq!(data.len(), self.boundary.len());
        (0..self.region.len())
            .map(|u| self.outer.row(u).iter().map(|&b| data[b]).sum::<f64>() / self.two_d)
            .collect()
    }

    /// Values on `U` of the harmonic function equal to `data` on `∂U`.
    pub fn harmonic_interior(&self, data: &[f64]) -> Result<Vec<f64>> {
        if self.boundary.is_empty() {
            return Err(Error::EmptyBoundary);
        }
        Ok(self.solve(&self.boundary_rhs(data)))
    }

    /// Centered Gaussian vector on `U` with covariance `g^U`.
    pub fn sample(&self, rng: &mut SimRng) -> Result<Vec<f64>> {
        let n = self.region.len();
        let mut xi = vec![0.0; n];
        fill_gaussian(rng, &mut xi);
        match &self.backend {
            Backend::Spectral(s) => Ok(s.sample(xi)),
            Backend::Envelope(e) => Ok(e.sample(xi, self.two_d)),
            Backend::Conjugate => Err(Error::Unsupported {
                backend: "conjugate-gradient",
                what: "sampling",
            }),
        }
    }

    /// Dense `g^U` (row-major), for small regions.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        (0..self.region.len()).map(|j| self.green_column(j)).collect()
    }
}

/// Exact diagonalization on a box: `(I - P_U)^{-1} = S diag(1/lambda) S`
/// with `S` the tensor product of the orthogonal symmetric sine matrices.
struct BoxSpectral {
    extents: Vec<usize>,
    bases: Vec<Vec<f64>>,
    squares: Vec<Vec<f64>>,
    inv_eigen: Vec<f64>,
    /// Box position of each region site, when the orders differ.
    perm: Option<Vec<usize>>,
}

impl BoxSpectral {
    fn new(b: &LatticeBox, region: &Region) -> Self {
        let extents = b.extents();
        let d = extents.len();
        let mut bases = Vec::with_capacity(d);
        let mut axis_eig = Vec::with_capacity(d);
        for &m in &extents {
            let scale = (2.0 / (m as f64 + 1.0)).sqrt();
            let mut s = vec![0.0; m * m];
            for j in 0..m {
                for x in 0..m {
                    s[j * m + x] =
                        scale * (PI * ((j + 1) * (x + 1)) as f64 / (m as f64 + 1.0)).sin();
                }
            }
            bases.push(s);
            axis_eig.push(
                (1..=m)
                    .map(|j| 1.0 - (PI * j as f64 / (m as f64 + 1.0)).cos())
                    .collect::<Vec<f64>>(),
            );
        }
        let squares = bases
            .iter()
            .map(|s| s.iter().map(|v| v * v).collect())
            .collect();
        let len: usize = extents.iter().product();
        let inv_eigen = (0..len)
            .map(|idx| {
                let mut rem = idx;
                let mut lam = 0.0;
                for a in (0..d).rev() {
                    lam += axis_eig[a][rem % extents[a]];
                    rem /= extents[a];
                }
                d as f64 / lam
            })
            .collect();
        let perm = match region.torus_geom() {
            None => None,
            Some(g) => Some(
                region
                    .sites()
                    .map(|x| {
                        let h: Vec<i64> = x.iter().map(|&c| g.centered(c)).collect();
                        b.index_of(&h).expect("site in box")
                    })
                    .collect(),
            ),
        };
        BoxSpectral {
            extents,
            bases,
            squares,
            inv_eigen,
            perm,
        }
    }

    fn to_box(&self, v: &[f64]) -> Vec<f64> {
        match &self.perm {
            None => v.to_vec(),
            Some(p) => {
                let mut out = vec![0.0; v.len()];
                for (i, &k) in p.iter().enumerate() {
                    out[k] = v[i];
                }
                out
            }
        }
    }

    fn from_box(&self, v: Vec<f64>) -> Vec<f64> {
        match &self.perm {
            None => v,
            Some(p) => p.iter().map(|&k| v[k]).collect(),
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut v = self.to_box(rhs);
        apply_tensor(&mut v, &self.extents, &self.bases);
        v.iter_mut().zip(&self.inv_eigen).for_each(|(x, l)| *x *= l);
        apply_tensor(&mut v, &self.extents, &self.bases);
        self.from_box(v)
    }

    fn sample(&self, mut xi: Vec<f64>) -> Vec<f64> {
        xi.iter_mut()
            .zip(&self.inv_eigen)
            .for_each(|(x, l)| *x *= l.sqrt());
        apply_tensor(&mut xi, &self.extents, &self.bases);
        self.from_box(xi)
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut v = self.inv_eigen.clone();
        apply_tensor(&mut v, &self.extents, &self.squares);
        self.from_box(v)
    }
}

/// Multiplies `data` (row-major over `extents`) by the tensor product of the
/// square matrices `mats[a]`, applied as `out[x] = sum_j M[j][x] in[j]`.
fn apply_tensor(data: &mut [f64], extents: &[usize], mats: &[Vec<f64>]) {
    let d = extents.len();
    let len = data.len();
    let mut line = Vec::new();
    let mut out = Vec::new();
    for a in 0..d {
        let m = extents[a];
        let stride: usize = extents[a + 1..].iter().product();
        let mat = &mats[a];
        line.resize(m, 0.0);
        out.resize(m, 0.0);
        for base in (0..len).step_by(m * stride) {
            for off in 0..stride {
                let start = base + off;
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[start + j * stride];
                }
                out.fill(0.0);
                for (j, &lj) in line.iter().enumerate() {
                    if lj == 0.0 {
                        continue;
                    }
                    let row = &mat[j * m..(j + 1) * m];
                    for (o, &r) in out.iter_mut().zip(row) {
                        *o += lj * r;
                    }
                }
                for (j, &v) in out.iter().enumerate() {
                    data[start + j * stride] = v;
                }
            }
        }
    }
}

/// Envelope (variable band) Cholesky factor of `A = 2d I - Adj`, in reverse
/// Cuthill-McKee order.
struct Envelope {
    /// `order[k]` is the region index placed at position `k`.
    order: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    values: Vec<f64>,
}

impl Envelope {
    fn factor(adj: &Csr, two_d: f64, limit: usize) -> Result<Option<Envelope>> {
        let n = adj.offsets.len() - 1;
        let order = rcm_order(adj, n);
        let mut pos = vec![0usize; n];
        for (k, &i) in order.iter().enumerate() {
            pos[i] = k;
        }
        let mut first = vec![0usize; n];
        for (k, &i) in order.iter().enumerate() {
            first[k] = adj.row(i).iter().map(|&j| pos[j]).filter(|&p| p < k).min().unwrap_or(k);
        }
        let mut row_start = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for k in 0..n {
            row_start.push(total);
            total += k - first[k] + 1;
        }
        row_start.push(total);
        if total > limit {
            return Ok(None);
        }
        let mut values = vec![0.0; total];
        for (k, &i) in order.iter().enumerate() {
            values[row_start[k] + (k - first[k])] = two_d;
            for &j in adj.row(i) {
                let p = pos[j];
                if p < k {
                    values[row_start[k] + (p - first[k])] -= 1.0;
                }
            }
        }
        for k in 0..n {
            let fk = first[k];
            for j in fk..k {
                let fj = first[j];
                let lo = fk.max(fj);
                let mut s = values[row_start[k] + (j - fk)];
                let rk = &values[row_start[k] + (lo - fk)..row_start[k] + (j - fk)];
                let rj = &values[row_start[j] + (lo - fj)..row_start[j] + (j - fj)];
                s -= rk.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                let diag = values[row_start[j] + (j - fj)];
                values[row_start[k] + (j - fk)] = s / diag;
            }
            let row = &values[row_start[k]..row_start[k] + (k - fk)];
            let s = values[row_start[k] + (k - fk)] - row.iter().map(|v| v * v).sum::<f64>();
            if !(s > 0.0) {
                return Err(Error::Factorization(format!(
                    "non-positive pivot {s:e} at position {k}"
                )));
            }
            values[row_start[k] + (k - fk)] = s.sqrt();
        }
        Ok(Some(Envelope {
            order,
            first,
            row_start,
            values,
        }))
    }

    #[inline]
    fn entry(&self, k: usize, j: usize) -> f64 {
        self.values[self.row_start[k] + (j - self.first[k])]
    }

    fn forward(&self, y: &mut [f64]) {
        for k in 0..y.len() {
            let fk = self.first[k];
            let row = &self.values[self.row_start[k]..self.row_start[k] + (k - fk)];
            let s: f64 = row.iter().zip(&y[fk..k]).map(|(a, b)| a * b).sum();
            y[k] = (y[k] - s) / self.entry(k, k);
        }
    }

    fn backward(&self, y: &mut [f64]) {
        for k in (0..y.len()).rev() {
            y[k] /= self.entry(k, k);
            let xk = y[k];
            let fk = self.first[k];
            let row = &self.values[self.row_start[k]..self.row_start[k] + (k - fk)];
            for (t, &l) in y[fk..k].iter_mut().zip(row) {
                *t -= l * xk;
            }
        }
    }

    /// `A^{-1} rhs`.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.order.iter().map(|&i| rhs[i]).collect();
        self.forward(&mut y);
        self.backward(&mut y);
        let mut x = vec![0.0; rhs.len()];
        for (k, &i) in self.order.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }

    /// `sqrt(2d) L^{-T} xi`, covariance `2d A^{-1}`.
    fn sample(&self, mut xi: Vec<f64>, two_d: f64) -> Vec<f64> {
        self.backward(&mut xi);
        let s = two_d.sqrt();
        let mut x = vec![0.0; xi.len()];
        for (k, &i) in self.order.iter().enumerate() {
            x[i] = s * xi[k];
        }
        x
    }
}

fn rcm_order(adj: &Csr, n: usize) -> Vec<usize> {
    let degree = |i: usize| adj.row(i).len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree(i), i));
    let mut nbrs = Vec::new();
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(i) = q.pop_front() {
            order.push(i);
            nbrs.clear();
            nbrs.extend(adj.row(i).iter().copied().filter(|&j| !visited[j]));
            nbrs.sort_by_key(|&j| (degree(j), j));
            nbrs.dedup();
            for &j in &nbrs {
                visited[j] = true;
                q.push_back(j);
            }
        }
    }
    order.reverse();
    order
}
