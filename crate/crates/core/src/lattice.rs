//! Geometry of the discrete torus `(Z/NZ)^d` and of `Z^d`.
//!
//! Torus sites are stored by their canonical representative in
//! `{0, ..., N-1}^d`; the hat map lifts them to the fundamental domain
//! `(-N/2, N/2]^d`. Every [`Region`] keeps its sites in lexicographic order and
//! all vectors indexed by a region follow that order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

/// Side length and dimension of a discrete torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TorusGeom {
    side: usize,
    dim: usize,
}

/// Canonical torus site, coordinates in `{0, ..., N-1}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteT(Vec<i64>);

/// Site of `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteZ(Vec<i64>);

impl SiteT {
    /// Reduces arbitrary integer coordinates modulo `N`.
    pub fn new(geom: &TorusGeom, coords: &[i64]) -> Self {
        assert_eq!(coords.len(), geom.dim, "dimension mismatch");
        SiteT(coords.iter().map(|&c| geom.reduce(c)).collect())
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }
}

impl SiteZ {
    pub fn new(coords: Vec<i64>) -> Self {
        SiteZ(coords)
    }

    pub fn origin(dim: usize) -> Self {
        SiteZ(vec![0; dim])
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut c = vec![0; dim];
        c[axis] = 1;
        SiteZ(c)
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn l1_norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).sum()
    }

    pub fn euclidean_norm(&self) -> f64 {
        self.0.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt()
    }
}

impl TorusGeom {
    pub fn new(side: usize, dim: usize) -> Self {
        assert!(side >= 1, "torus side must be positive");
        assert!(dim >= 1, "dimension must be positive");
        TorusGeom { side, dim }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of sites `N^d`.
    pub fn volume(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    #[inline]
    pub fn reduce(&self, c: i64) -> i64 {
        c.rem_euclid(self.side as i64)
    }

    /// Centered reduction into `(-N/2, N/2]`.
    #[inline]
    pub fn centered(&self, c: i64) -> i64 {
        let n = self.side as i64;
        let r = c.rem_euclid(n);
        if 2 * r > n {
            r - n
        } else {
            r
        }
    }

    pub fn origin(&self) -> SiteT {
        SiteT(vec![0; self.dim])
    }

    pub fn hat(&self, x: &SiteT) -> SiteZ {
        SiteZ(x.0.iter().map(|&c| self.centered(c)).collect())
    }

    pub fn project(&self, v: &SiteZ) -> SiteT {
        SiteT::new(self, &v.0)
    }

    /// Graph distance on the torus.
    pub fn dist(&self, x: &SiteT, y: &SiteT) -> u64 {
        self.dist_coords(&x.0, &y.0)
    }

    pub fn dist_coords(&self, x: &[i64], y: &[i64]) -> u64 {
        x.iter()
            .zip(y)
            .map(|(&a, &b)| self.circ_dist(a, b))
            .sum()
    }

    #[inline]
    pub fn circ_dist(&self, a: i64, b: i64) -> u64 {
        let n = self.side as i64;
        let r = (a - b).rem_euclid(n);
        r.min(n - r) as u64
    }

    /// Maximal graph distance, `d * floor(N/2)`.
    pub fn diameter(&self) -> u64 {
        (self.dim * (self.side / 2)) as u64
    }

    /// Row-major index (last coordinate fastest) of canonical coordinates.
    #[inline]
    pub fn index_of(&self, coords: &[i64]) -> usize {
        let n = self.side as i64;
        coords
            .iter()
            .fold(0usize, |acc, &c| acc * self.side + c.rem_euclid(n) as usize)
    }

    pub fn coords_of(&self, mut idx: usize) -> Vec<i64> {
        let mut c = vec![0i64; self.dim];
        for slot in c.iter_mut().rev() {
            *slot = (idx % self.side) as i64;
            idx /= self.side;
        }
        c
    }

    /// Row-major index of `idx + delta` with wraparound.
    #[inline]
    pub fn shift_index(&self, idx: usize, axis: usize, forward: bool) -> usize {
        let stride = self.side.pow((self.dim - 1 - axis) as u32);
        let c = (idx / stride) % self.side;
        let nc = if forward {
            (c + 1) % self.side
        } else {
            (c + self.side - 1) % self.side
        };
        idx - c * stride + nc * stride
    }

    /// Lowest and highest integers of the fundamental domain `(-N/2, N/2]`.
    pub fn fundamental_range(&self) -> (i64, i64) {
        let n = self.side as i64;
        (-((n + 1) / 2) + 1, n / 2)
    }

    pub fn in_fundamental_domain(&self, v: &[i64]) -> bool {
        let (lo, hi) = self.fundamental_range();
        v.iter().all(|&c| lo <= c && c <= hi)
    }
}

impl fmt::Display for TorusGeom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T_{}^{}", self.side, self.dim)
    }
}

/// The graph a region lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ambient {
    Torus(TorusGeom),
    Lattice(usize),
}

impl Ambient {
    pub fn dim(&self) -> usize {
        match self {
            Ambient::Torus(g) => g.dim(),
            Ambient::Lattice(d) => *d,
        }
    }

    pub fn canonical(&self, coords: &mut [i64]) {
        if let Ambient::Torus(g) = self {
            for c in coords.iter_mut() {
                *c = g.reduce(*c);
            }
        }
    }

    /// Calls `f` once per neighbor, with multiplicity (on tori with `N <= 2`
    /// the two directions along an axis may coincide).
    pub fn for_each_neighbor(&self, x: &[i64], buf: &mut Vec<i64>, mut f: impl FnMut(&[i64])) {
        buf.clear();
        buf.extend_from_slice(x);
        for axis in 0..x.len() {
            for step in [1i64, -1] {
                buf[axis] = x[axis] + step;
                if let Ambient::Torus(g) = self {
                    buf[axis] = g.reduce(buf[axis]);
                }
                f(buf);
            }
            buf[axis] = x[axis];
        }
    }
}

/// Inclusive coordinate box `lo <= x <= hi` in `Z^d`, possibly empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        LatticeBox { lo, hi }
    }

    pub fn cube(dim: usize, lo: i64, hi: i64) -> Self {
        LatticeBox::new(vec![lo; dim], vec![hi; dim])
    }

    /// `B(n) = [-n, n]^d`.
    pub fn ball(dim: usize, n: i64) -> Self {
        LatticeBox::cube(dim, -n, n)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn extents(&self) -> Vec<usize> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| if h >= l { (h - l + 1) as usize } else { 0 })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.extents().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&c, (&l, &h))| l <= c && c <= h)
    }

    /// Row-major position (last coordinate fastest), which is also the
    /// lexicographic rank of `x` among the box sites.
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut idx = 0usize;
        for (i, &c) in x.iter().enumerate() {
            let ext = (self.hi[i] - self.lo[i] + 1) as usize;
            idx = idx * ext + (c - self.lo[i]) as usize;
        }
        Some(idx)
    }

    pub fn coords_of(&self, mut idx: usize) -> Vec<i64> {
        let ext = self.extents();
        let mut c = vec![0i64; self.dim()];
        for i in (0..self.dim()).rev() {
            c[i] = self.lo[i] + (idx % ext[i]) as i64;
            idx /= ext[i];
        }
        c
    }

    pub fn sites(&self) -> Vec<Vec<i64>> {
        (0..self.len()).map(|i| self.coords_of(i)).collect()
    }

    pub fn to_region(&self) -> Region {
        Region::lattice(self.dim(), self.sites())
    }

    /// Image of the box under the projection onto the torus.
    pub fn project(&self, geom: &TorusGeom) -> Region {
        Region::torus(*geom, self.sites())
    }

    pub fn is_subset_of(&self, other: &LatticeBox) -> bool {
        self.is_empty() || (other.contains(&self.lo) && other.contains(&self.hi))
    }
}

/// Finite site set of a torus or of `Z^d`, in lexicographic order.
#[derive(Clone)]
pub struct Region {
    ambient: Ambient,
    coords: Vec<i64>,
    index: HashMap<Box<[i64]>, usize>,
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region")
            .field("ambient", &self.ambient)
            .field("len", &self.len())
            .finish()
    }
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.ambient == other.ambient && self.coords == other.coords
    }
}

impl Region {
    pub fn new(ambient: Ambient, sites: impl IntoIterator<Item = Vec<i64>>) -> Self {
        let dim = ambient.dim();
        let set: BTreeSet<Vec<i64>> = sites
            .into_iter()
            .map(|mut s| {
                assert_eq!(s.len(), dim, "site dimension mismatch");
                ambient.canonical(&mut s);
                s
            })
            .collect();
        let mut coords = Vec::with_capacity(set.len() * dim);
        let mut index = HashMap::with_capacity(set.len());
        for (i, s) in set.into_iter().enumerate() {
            coords.extend_from_slice(&s);
            index.insert(s.into_boxed_slice(), i);
        }
        Region {
            ambient,
            coords,
            index,
        }
    }

    pub fn torus(geom: TorusGeom, sites: impl IntoIterator<Item = Vec<i64>>) -> Self {
        Region::new(Ambient::Torus(geom), sites)
    }

    pub fn lattice(dim: usize, sites: impl IntoIterator<Item = Vec<i64>>) -> Self {
        Region::new(Ambient::Lattice(dim), sites)
    }

    pub fn whole_torus(geom: TorusGeom) -> Self {
        Region::torus(geom, (0..geom.volume()).map(|i| geom.coords_of(i)))
    }

    pub fn empty(ambient: Ambient) -> Self {
        Region::new(ambient, std::iter::empty())
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    pub fn torus_geom(&self) -> Option<TorusGeom> {
        match self.ambient {
            Ambient::Torus(g) => Some(g),
            Ambient::Lattice(_) => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.ambient.dim()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn site(&self, i: usize) -> &[i64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn sites(&self) -> impl ExactSizeIterator<Item = &[i64]> + '_ {
        self.coords.chunks_exact(self.dim().max(1)).take(self.len())
    }

    /// Index of a site; torus coordinates need not be canonical.
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        match self.ambient {
            Ambient::Lattice(_) => self.index.get(x).copied(),
            Ambient::Torus(g) => {
                if x.iter().all(|&c| 0 <= c && (c as usize) < g.side()) {
                    self.index.get(x).copied()
                } else {
                    let c: Vec<i64> = x.iter().map(|&c| g.reduce(c)).collect();
                    self.index.get(c.as_slice()).copied()
                }
            }
        }
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.index_of(x).is_some()
    }

    /// `{ y not in U : y ~ x for some x in U }`.
    pub fn outer_boundary(&self) -> Region {
        let mut out = BTreeSet::new();
        let mut buf = Vec::with_capacity(self.dim());
        for x in self.sites() {
            self.ambient.for_each_neighbor(x, &mut buf, |y| {
                if !self.contains(y) {
                    out.insert(y.to_vec());
                }
            });
        }
        Region::new(self.ambient, out)
    }

    pub fn union(&self, other: &Region) -> Region {
        assert_eq!(self.ambient, other.ambient, "ambient mismatch");
        Region::new(
            self.ambient,
            self.sites().chain(other.sites()).map(<[i64]>::to_vec),
        )
    }

    /// Lift of a torus region through the hat map; lattice regions are
    /// returned unchanged.
    pub fn hat(&self) -> Region {
        match self.ambient {
            Ambient::Lattice(_) => self.clone(),
            Ambient::Torus(g) => Region::lattice(
                g.dim(),
                self.sites()
                    .map(|x| x.iter().map(|&c| g.centered(c)).collect::<Vec<_>>()),
            ),
        }
    }

    /// Whether the lattice boundary of the lifted region stays inside the
    /// fundamental domain. Always false for lattice regions.
    pub fn is_properly_contained(&self) -> bool {
        let Ambient::Torus(g) = self.ambient else {
            return false;
        };
        if self.len() == g.volume() {
            return false;
        }
        let lifted = self.hat();
        lifted
            .outer_boundary()
            .sites()
            .all(|y| g.in_fundamental_domain(y))
    }

    /// Smallest box containing the (lifted, for torus regions) sites.
    pub fn bounding_box(&self) -> Option<LatticeBox> {
        if self.is_empty() {
            return None;
        }
        let d = self.dim();
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        let g = self.torus_geom();
        for x in self.sites() {
            for i in 0..d {
                let c = match g {
                    Some(g) => g.centered(x[i]),
                    None => x[i],
                };
                lo[i] = lo[i].min(c);
                hi[i] = hi[i].max(c);
            }
        }
        Some(LatticeBox::new(lo, hi))
    }

    /// The box whose (projected) sites are exactly this region, when the
    /// random walk restricted to the region coincides with the walk on that
    /// box in `Z^d`. For torus regions this needs `N >= 3` and extents below
    /// `N`, so that no edge wraps.
    pub fn as_box(&self) -> Option<LatticeBox> {
        let b = self.bounding_box()?;
        if b.len() != self.len() {
            return None;
        }
        if let Some(g) = self.torus_geom() {
            if g.side() < 3 || b.extents().iter().any(|&e| e >= g.side()) {
                return None;
            }
        }
        Some(b)
    }
}

/// `N^delta`, snapped to the nearest integer when it is one up to rounding.
pub fn side_power(side: usize, delta: f64) -> f64 {
    let p = (side as f64).powf(delta);
    let r = p.round();
    if (p - r).abs() <= 1e-9 * p.max(1.0) {
        r
    } else {
        p
    }
}

/// `Û_N`: `{-ceil(N/2)+2, ..., floor(N/2)-1}^d` for `N >= 3`, `{0}^d` otherwise.
pub fn u_box(side: usize, dim: usize) -> LatticeBox {
    if side <= 2 {
        return LatticeBox::cube(dim, 0, 0);
    }
    let n = side as i64;
    LatticeBox::cube(dim, -((n + 1) / 2) + 2, n / 2 - 1)
}

/// Inner box `(-(N - N^delta - 2)/2, (N - N^delta - 2)/2]^d`, possibly empty.
pub fn inner_box(side: usize, dim: usize, delta: f64) -> LatticeBox {
    let a = (side as f64 - side_power(side, delta) - 2.0) / 2.0;
    let hi = a.floor() as i64;
    let lo = (-a).floor() as i64 + 1;
    LatticeBox::cube(dim, lo, hi)
}

/// The standard boxes of side `N`: `U_N`, its lift, the inner box and its
/// projection.
#[derive(Clone, Debug)]
pub struct StandardBoxes {
    pub u_torus: Region,
    pub u_lattice: Region,
    pub inner_torus: Region,
    pub inner_lattice: Region,
    pub u_box: LatticeBox,
    pub inner_box: LatticeBox,
}

pub fn standard_boxes(side: usize, dim: usize, delta: f64) -> StandardBoxes {
    let geom = TorusGeom::new(side, dim);
    let ub = u_box(side, dim);
    let ib = inner_box(side, dim, delta);
    StandardBoxes {
        u_torus: ub.project(&geom),
        u_lattice: ub.to_region(),
        inner_torus: ib.project(&geom),
        inner_lattice: ib.to_region(),
        u_box: ub,
        inner_box: ib,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn bfs_dist(geom: &TorusGeom, from: usize) -> Vec<u64> {
        let mut dist = vec![u64::MAX; geom.volume()];
        let mut q = VecDeque::from([from]);
        dist[from] = 0;
        while let Some(i) = q.pop_front() {
            for axis in 0..geom.dim() {
                for fw in [true, false] {
                    let j = geom.shift_index(i, axis, fw);
                    if dist[j] == u64::MAX {
                        dist[j] = dist[i] + 1;
                        q.push_back(j);
                    }
                }
            }
        }
        dist
    }

    #[test]
    fn hat_examples() {
        let g = TorusGeom::new(4, 3);
        let x = SiteT::new(&g, &[3, 0, 0]);
        assert_eq!(g.hat(&x).coords(), &[-1, 0, 0]);
        let y = SiteT::new(&g, &[2, 2, 2]);
        assert_eq!(g.hat(&y).coords(), &[2, 2, 2]);
        for n in 1..=7 {
            let g = TorusGeom::new(n, 3);
            for i in 0..g.volume() {
                let x = SiteT::new(&g, &g.coords_of(i));
                let v = g.hat(&x);
                assert!(g.in_fundamental_domain(v.coords()));
                assert_eq!(g.project(&v), x);
            }
        }
    }

    #[test]
    fn dist_examples() {
        let g = TorusGeom::new(4, 3);
        let o = g.origin();
        assert_eq!(g.dist(&o, &SiteT::new(&g, &[3, 0, 0])), 1);
        assert_eq!(g.dist(&o, &SiteT::new(&g, &[2, 0, 0])), 2);
        let g5 = TorusGeom::new(5, 3);
        assert_eq!(g5.dist(&g5.origin(), &SiteT::new(&g5, &[2, 2, 2])), 6);
    }

    #[test]
    fn dist_matches_bfs_and_image_formula() {
        for n in 1..=6 {
            let g = TorusGeom::new(n, 3);
            for from in [0, g.volume() / 2, g.volume() - 1] {
                let bfs = bfs_dist(&g, from);
                let x = g.coords_of(from);
                let xs = SiteT::new(&g, &x);
                for (j, &bd) in bfs.iter().enumerate() {
                    let y = SiteT::new(&g, &g.coords_of(j));
                    assert_eq!(g.dist(&xs, &y), bd);
                    let (hx, hy) = (g.hat(&xs), g.hat(&y));
                    let mut best = u64::MAX;
                    for v in 0..27usize {
                        let shift = [(v % 3) as i64 - 1, ((v / 3) % 3) as i64 - 1, (v / 9) as i64 - 1];
                        let l1: u64 = (0..3)
                            .map(|i| (hx.coords()[i] - hy.coords()[i] - shift[i] * n as i64).unsigned_abs())
                            .sum();
                        best = best.min(l1);
                    }
                    assert_eq!(best, bd);
                }
            }
        }
    }

    #[test]
    fn boundary_examples() {
        let single = Region::lattice(3, [vec![0, 0, 0]]);
        let b = single.outer_boundary();
        assert_eq!(b.len(), 6);
        for axis in 0..3 {
            let mut e = vec![0; 3];
            e[axis] = 1;
            assert!(b.contains(&e));
            e[axis] = -1;
            assert!(b.contains(&e));
        }
        let g = TorusGeom::new(4, 3);
        assert!(Region::whole_torus(g).outer_boundary().is_empty());
        assert_eq!(LatticeBox::ball(3, 1).to_region().outer_boundary().len(), 54);
    }

    #[test]
    fn proper_containment() {
        for n in 3..=9 {
            let g = TorusGeom::new(n, 3);
            let ub = u_box(n, 3);
            assert!(ub.project(&g).is_properly_contained(), "N={n}");
            assert!(!Region::whole_torus(g).is_properly_contained());
            assert!(Region::torus(g, [vec![0, 0, 0]]).is_properly_contained());
        }
        // A box one site wider than U_N reaches the seam.
        let g = TorusGeom::new(6, 3);
        let wide = LatticeBox::cube(3, -2, 3).project(&g);
        assert!(!wide.is_properly_contained());
    }

    #[test]
    fn box_examples() {
        let sb = standard_boxes(3, 3, 0.75);
        assert_eq!(sb.u_torus.len(), 1);
        assert!(sb.u_torus.contains(&[0, 0, 0]));
        assert!(sb.inner_lattice.is_empty());
        let sb = standard_boxes(16, 3, 0.75);
        assert_eq!(sb.inner_lattice.len(), 216);
        assert_eq!(sb.inner_box.lo(), &[-2, -2, -2]);
        assert_eq!(sb.inner_box.hi(), &[3, 3, 3]);
    }

    #[test]
    fn boxes_nest_and_lift() {
        for n in 1..=40 {
            let sb = standard_boxes(n, 3, 0.75);
            assert_eq!(sb.u_torus.hat(), sb.u_lattice, "N={n}");
            for x in sb.inner_torus.sites() {
                assert!(sb.u_torus.contains(x), "N={n}");
            }
            let mut prev = inner_box(n, 3, 0.51);
            for k in 1..=9 {
                let next = inner_box(n, 3, 0.51 + 0.05 * k as f64);
                assert!(next.is_subset_of(&prev), "N={n}");
                prev = next;
            }
        }
    }

    #[test]
    fn as_box_detects_boxes() {
        let g = TorusGeom::new(8, 3);
        let u = u_box(8, 3).project(&g);
        assert_eq!(u.as_box(), Some(u_box(8, 3)));
        assert!(Region::whole_torus(g).as_box().is_none());
        let b = LatticeBox::ball(3, 2);
        assert_eq!(b.to_region().as_box(), Some(b.clone()));
        let mut sites = b.sites();
        sites.pop();
        assert!(Region::lattice(3, sites).as_box().is_none());
        assert!(Region::torus(TorusGeom::new(2, 3), [vec![0, 0, 0]]).as_box().is_none());
    }

    #[test]
    fn box_index_is_lexicographic() {
        let b = LatticeBox::new(vec![-1, 0, 2], vec![1, 2, 3]);
        let r = b.to_region();
        for (i, x) in r.sites().enumerate() {
            assert_eq!(b.index_of(x), Some(i));
            assert_eq!(b.coords_of(i), x);
        }
    }
}
