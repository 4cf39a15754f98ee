//! Free-field samplers, harmonic extension and the Markov decomposition.
//!
//! The torus field with covariance `G_T` is obtained by filtering white noise
//! in Fourier space: the FFT of real i.i.d. Gaussians has Hermitian symmetric
//! coefficients (real at self-conjugate modes), each mode is scaled by
//! `mu_k^{-1/2}`, the zero mode is dropped, and the inverse FFT is taken.
//! The resulting covariance is exactly `G_T`.

use std::io::{self, Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch, LltRegularization};
use faer::{Mat, Par};

use crate::error::{Error, Result};
use crate::fft::CubeFft;
use crate::green::{ClosureSite, KilledGreenSolver, TorusSpectrum, ZdGreen};
use crate::lattice::{LatticeBox, Region, SiteT, TorusGeom};
use crate::seed::{fill_gaussian, gaussian, rng_from_seed, SimRng};

/// Largest set on which the `Z^d` field is sampled by a dense factorization.
pub const TRACE_LIMIT: usize = 15_000;

/// Read access to a field by site coordinates.
pub trait FieldView {
    fn dim(&self) -> usize;
    /// `None` if the field is not defined at `x`.
    fn value_at(&self, x: &[i64]) -> Option<f64>;
}

/// A field on the full torus, row-major in the canonical coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusField {
    geom: TorusGeom,
    values: Vec<f64>,
}

impl TorusField {
    pub fn new(geom: TorusGeom, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), geom.volume());
        TorusField { geom, values }
    }

    pub fn geom(&self) -> TorusGeom {
        self.geom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, x: &SiteT) -> f64 {
        self.values[self.geom.index_of(x.coords())]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl FieldView for TorusField {
    fn dim(&self) -> usize {
        self.geom.dim()
    }

    fn value_at(&self, x: &[i64]) -> Option<f64> {
        Some(self.values[self.geom.index_of(x)])
    }
}

/// A field on a finite region, in the region's site order.
#[derive(Clone, Debug)]
pub struct RegionField {
    region: Arc<Region>,
    values: Vec<f64>,
}

impl PartialEq for RegionField {
    fn eq(&self, other: &Self) -> bool {
        *self.region == *other.region && self.values == other.values
    }
}

impl RegionField {
    pub fn new(region: Arc<Region>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), region.len());
        RegionField { region, values }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn region_arc(&self) -> Arc<Region> {
        Arc::clone(&self.region)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at `x`, zero off the region (the convention for killed fields).
    pub fn value_or_zero(&self, x: &[i64]) -> f64 {
        self.value_at(x).unwrap_or(0.0)
    }
}

impl FieldView for RegionField {
    fn dim(&self) -> usize {
        self.region.dim()
    }

    fn value_at(&self, x: &[i64]) -> Option<f64> {
        self.region.index_of(x).map(|i| self.values[i])
    }
}

/// Spectral sampler of the zero-average torus field, reusable across seeds.
pub struct TorusSampler {
    geom: TorusGeom,
    fft: CubeFft,
    amplitude: Vec<f64>,
}

impl TorusSampler {
    pub fn new(geom: TorusGeom) -> Result<Self> {
        if geom.side() < 2 {
            return Err(Error::InvalidParameter(
                "the torus field needs N >= 2".into(),
            ));
        }
        let spectrum = TorusSpectrum::new(geom);
        let amplitude = spectrum
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(k, &mu)| if k == 0 { 0.0 } else { mu.powf(-0.5) })
            .collect();
        Ok(TorusSampler {
            geom,
            fft: CubeFft::new(geom.side(), geom.dim()),
            amplitude,
        })
    }

    pub fn geom(&self) -> TorusGeom {
        self.geom
    }

    pub fn sample(&self, seed: u64) -> TorusField {
        self.sample_with(&mut rng_from_seed(seed))
    }

    pub fn sample_with(&self, rng: &mut SimRng) -> TorusField {
        let mut buf: Vec<Complex64> = (0..self.geom.volume())
            .map(|_| Complex64::new(gaussian(rng), 0.0))
            .collect();
        self.fft.forward(&mut buf);
        buf.iter_mut()
            .zip(&self.amplitude)
            .for_each(|(z, a)| *z *= a);
        self.fft.inverse(&mut buf);
        let scale = 1.0 / self.geom.volume() as f64;
        let mut values: Vec<f64> = buf.iter().map(|z| z.re * scale).collect();
        let mean = values.iter().sum::<f64>() * scale;
        values.iter_mut().for_each(|v| *v -= mean);
        TorusField {
            geom: self.geom,
            values,
        }
    }
}

/// One sample of the zero-average torus field.
pub fn sample_torus_gff(geom: TorusGeom, seed: u64) -> Result<TorusField> {
    Ok(TorusSampler::new(geom)?.sample(seed))
}

/// One sample of the field with covariance `g^U`, on `U`.
pub fn sample_killed_gff(solver: &KilledGreenSolver, seed: u64) -> Result<RegionField> {
    let values = solver.sample(&mut rng_from_seed(seed))?;
    Ok(RegionField::new(solver.region_arc(), values))
}

/// Harmonic function on `U ∪ ∂U` with the given values on `∂U`.
pub fn harmonic_extension(solver: &KilledGreenSolver, boundary_data: &[f64]) -> Result<RegionField> {
    if boundary_data.len() != solver.boundary().len() {
        return Err(Error::Precondition(format!(
            "expected {} boundary values, got {}",
            solver.boundary().len(),
            boundary_data.len()
        )));
    }
    if boundary_data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("non-finite boundary data".into()));
    }
    let interior = solver.harmonic_interior(boundary_data)?;
    let closure = solver.closure();
    let values = closure
        .origin
        .iter()
        .map(|o| match *o {
            ClosureSite::Interior(i) => interior[i],
            ClosureSite::Boundary(b) => boundary_data[b],
        })
        .collect();
    Ok(RegionField::new(Arc::clone(&closure.region), values))
}

/// `field = killed + harmonic` with `killed` vanishing off `U` and `harmonic`
/// harmonic in `U`. Both parts are stored on `U ∪ ∂U`; off that set the
/// killed part is zero and the harmonic part equals the source field.
#[derive(Clone, Debug)]
pub struct MarkovSplit {
    pub killed: RegionField,
    pub harmonic: RegionField,
}

impl MarkovSplit {
    pub fn killed_at(&self, x: &[i64]) -> f64 {
        self.killed.value_or_zero(x)
    }

    pub fn harmonic_at(&self, x: &[i64], source: &impl FieldView) -> Option<f64> {
        self.harmonic.value_at(x).or_else(|| source.value_at(x))
    }
}

pub fn markov_decompose(field: &impl FieldView, solver: &KilledGreenSolver) -> Result<MarkovSplit> {
    let data = solver
        .boundary()
        .sites()
        .map(|y| {
            field
                .value_at(y)
                .ok_or_else(|| Error::Precondition(format!("field undefined at boundary site {y:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let harmonic = harmonic_extension(solver, &data)?;
    let closure = solver.closure();
    let killed = closure
        .origin
        .iter()
        .zip(closure.region.sites())
        .zip(harmonic.values())
        .map(|((o, x), h)| match o {
            ClosureSite::Interior(_) => field
                .value_at(x)
                .map(|f| f - h)
                .ok_or_else(|| Error::Precondition(format!("field undefined at {x:?}"))),
            ClosureSite::Boundary(_) => Ok(0.0),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MarkovSplit {
        killed: RegionField::new(Arc::clone(&closure.region), killed),
        harmonic,
    })
}

/// The `Z^d` field restricted to a finite set of sites: covariance
/// `[g(y - z)]`, sampled through its dense Cholesky factor.
pub struct ZdTraceSampler {
    sites: Arc<Region>,
    factor: Mat<f64>,
    ridge: f64,
}

impl std::fmt::Debug for ZdTraceSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZdTraceSampler")
            .field("sites", &self.sites.len())
            .field("ridge", &self.ridge)
            .finish()
    }
}

impl ZdTraceSampler {
    pub fn new(sites: Arc<Region>, zd: &ZdGreen) -> Result<Self> {
        let n = sites.len();
        if n > TRACE_LIMIT {
            return Err(Error::SizeGuard {
                what: "sites of the dense Z^d trace",
                actual: n,
                limit: TRACE_LIMIT,
            });
        }
        if sites.torus_geom().is_some() {
            return Err(Error::Precondition("trace sites must lie in Z^d".into()));
        }
        let span = sites
            .bounding_box()
            .map_or(0, |b| b.extents().into_iter().max().unwrap_or(1) - 1);
        let table = zd.table(span as u32)?;
        let fill = |m: &mut Mat<f64>, ridge: f64| {
            for j in 0..n {
                let yj = sites.site(j);
                let col = m.col_as_slice_mut(j);
                for i in j..n {
                    col[i] = table.get_diff(sites.site(i), yj);
                }
                col[j] += ridge;
            }
        };
        let mut factor = Mat::<f64>::zeros(n, n);
        let mut ridge = 0.0;
        fill(&mut factor, 0.0);
        if let Err(first) = factor_in_place(&mut factor) {
            ridge = 1e-12 * table.get(&vec![0; sites.dim()]);
            log::warn!("boundary covariance not numerically positive definite ({first}); adding ridge {ridge:e}");
            fill(&mut factor, ridge);
            factor_in_place(&mut factor)?;
        }
        Ok(ZdTraceSampler {
            sites,
            factor,
            ridge,
        })
    }

    pub fn sites(&self) -> &Region {
        &self.sites
    }

    /// Diagonal ridge added after a failed factorization, zero otherwise.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `L xi` with `xi` standard Gaussian.
    pub fn sample_with(&self, rng: &mut SimRng) -> Vec<f64> {
        let n = self.sites.len();
        let mut xi = vec![0.0; n];
        fill_gaussian(rng, &mut xi);
        let mut out = vec![0.0; n];
        for (j, &x) in xi.iter().enumerate() {
            let col = self.factor.col_as_slice(j);
            for (o, &l) in out[j..].iter_mut().zip(&col[j..]) {
                *o += l * x;
            }
        }
        out
    }
}

fn factor_in_place(m: &mut Mat<f64>) -> Result<()> {
    let n = m.nrows();
    let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
    cholesky_in_place(
        m.as_mut(),
        LltRegularization::default(),
        Par::Seq,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map(|_| ())
    .map_err(|e| Error::Factorization(format!("{e:?}")))
}

/// The `Z^d` field restricted to a box and its outer boundary: boundary
/// values from the dense trace, interior from the killed field plus the
/// harmonic extension of the boundary values.
pub struct ZdBoxSampler {
    solver: KilledGreenSolver,
    trace: ZdTraceSampler,
}

impl ZdBoxSampler {
    pub fn new(b: &LatticeBox, zd: &ZdGreen) -> Result<Self> {
        let solver = KilledGreenSolver::new(&b.to_region())?;
        let trace = ZdTraceSampler::new(solver.boundary_arc(), zd)?;
        Ok(ZdBoxSampler { solver, trace })
    }

    pub fn solver(&self) -> &KilledGreenSolver {
        &self.solver
    }

    pub fn trace(&self) -> &ZdTraceSampler {
        &self.trace
    }

    /// Values on `U ∪ ∂U` in the order of the solver's closure.
    pub fn sample(&self, seed: u64) -> Result<RegionField> {
        let mut rng = rng_from_seed(seed);
        let beta = self.trace.sample_with(&mut rng);
        let killed = self.solver.sample(&mut rng)?;
        let harm = self.solver.harmonic_interior(&beta)?;
        let closure = self.solver.closure();
        let values = closure
            .origin
            .iter()
            .map(|o| match *o {
                ClosureSite::Interior(i) => killed[i] + harm[i],
                ClosureSite::Boundary(b) => beta[b],
            })
            .collect();
        Ok(RegionField::new(Arc::clone(&closure.region), values))
    }
}

const MAGIC: &[u8; 4] = b"GFF1";

/// Contents of a snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub enum Snapshot {
    Torus(TorusField),
    Region(RegionField),
}

/// Writes a full-torus field: header, no site list, values.
pub fn write_torus_snapshot<W: Write>(mut w: W, field: &TorusField) -> Result<()> {
    let g = field.geom();
    write_header(&mut w, g.dim(), g.side(), g.volume())?;
    write_values(&mut w, field.values())
}

/// Writes a region field: header, sites as `d` little-endian `i64` each,
/// values. Torus regions covering every site are written as full-torus
/// snapshots.
pub fn write_region_snapshot<W: Write>(mut w: W, field: &RegionField) -> Result<()> {
    let r = field.region();
    let side = r.torus_geom().map_or(0, |g| g.side());
    if let Some(g) = r.torus_geom() {
        if r.len() == g.volume() {
            let vals: Vec<f64> = (0..g.volume())
                .map(|i| field.values()[r.index_of(&g.coords_of(i)).expect("full torus")])
                .collect();
            return write_torus_snapshot(w, &TorusField::new(g, vals));
        }
    }
    write_header(&mut w, r.dim(), side, r.len())?;
    let mut buf = Vec::with_capacity(r.len() * r.dim() * 8);
    for x in r.sites() {
        for &c in x {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    write_values(&mut w, field.values())
}

fn write_header<W: Write>(w: &mut W, dim: usize, side: usize, count: usize) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(side as u32).to_le_bytes())?;
    w.write_all(&(count as u64).to_le_bytes())?;
    Ok(())
}

fn write_values<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_array<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format("truncated snapshot".into()),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let side = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    if dim == 0 {
        return Err(Error::Format("zero dimension".into()));
    }
    let full = side > 0 && side.checked_pow(dim as u32) == Some(count);
    let mut sites = Vec::new();
    if !full {
        sites.reserve(count.min(1 << 24));
        for _ in 0..count {
            let mut s = Vec::with_capacity(dim);
            for _ in 0..dim {
                s.push(i64::from_le_bytes(read_array(&mut r)?));
            }
            sites.push(s);
        }
    }
    let mut values = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        values.push(f64::from_le_bytes(read_array(&mut r)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes".into()));
    }
    if full {
        return Ok(Snapshot::Torus(TorusField::new(TorusGeom::new(side, dim), values)));
    }
    let region = if side > 0 {
        let g = TorusGeom::new(side, dim);
        if sites.iter().flatten().any(|&c| c < 0 || c >= side as i64) {
            return Err(Error::Format("torus site out of range".into()));
        }
        Region::torus(g, sites.clone())
    } else {
        Region::lattice(dim, sites.clone())
    };
    if region.len() != count {
        return Err(Error::Format("duplicate sites".into()));
    }
    let mut ordered = vec![0.0; count];
    for (s, v) in sites.iter().zip(values) {
        ordered[region.index_of(s).expect("site present")] = v;
    }
    Ok(Snapshot::Region(RegionField::new(Arc::new(region), ordered)))
}
