//! Coupling of the torus field with the `Z^d` field on the box `U_N`.
//!
//! Both fields split on `U_N` into a killed part and the harmonic average of
//! their boundary values. The coupling shares the killed part: `psi` is
//! sampled on the torus, its killed part `chi` is read off, and `phi` is
//! `chi` plus the harmonic extension of an independent `Z^d` boundary field.
//! `psi - harm_T = chi = phi - harm_Z` then holds on `U_N` by construction.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gff::{RegionField, TorusField, TorusSampler, ZdTraceSampler, TRACE_LIMIT};
use crate::green::{ClosureSite, KilledGreenSolver, TorusGreenKernel, ZdGreen};
use crate::lattice::{inner_box, u_box, Region, TorusGeom};
use crate::seed::rng_from_seed;

/// Everything about `U_N` that does not depend on the seed.
pub struct CouplingSampler {
    geom: TorusGeom,
    torus: TorusSampler,
    solver: KilledGreenSolver,
    trace: ZdTraceSampler,
    interior_idx: Vec<usize>,
    boundary_idx: Vec<usize>,
}

impl CouplingSampler {
    /// Builds the Dirichlet solver on `Û_N` and factors the boundary
    /// covariance `[g(y - z)]` once.
    pub fn new(side: usize, dim: usize, zd: &ZdGreen) -> Result<Self> {
        if side < 3 {
            return Err(Error::Precondition(format!(
                "the coupling needs N >= 3 so that U_N is properly contained, got N = {side}"
            )));
        }
        if zd.dim() != dim {
            return Err(Error::InvalidParameter(format!(
                "Z^d Green function has d = {}, coupling asked for d = {dim}",
                zd.dim()
            )));
        }
        let geom = TorusGeom::new(side, dim);
        let solver = KilledGreenSolver::new(&u_box(side, dim).to_region())?;
        if solver.boundary().len() > TRACE_LIMIT {
            return Err(Error::SizeGuard {
                what: "boundary sites of U_N",
                actual: solver.boundary().len(),
                limit: TRACE_LIMIT,
            });
        }
        let trace = ZdTraceSampler::new(solver.boundary_arc(), zd)?;
        let interior_idx = solver.region().sites().map(|v| geom.index_of(v)).collect();
        let boundary_idx = solver.boundary().sites().map(|v| geom.index_of(v)).collect();
        Ok(CouplingSampler {
            geom,
            torus: TorusSampler::new(geom)?,
            solver,
            trace,
            interior_idx,
            boundary_idx,
        })
    }

    pub fn geom(&self) -> TorusGeom {
        self.geom
    }

    /// Dirichlet solver on the lattice box `Û_N`.
    pub fn solver(&self) -> &KilledGreenSolver {
        &self.solver
    }

    pub fn trace(&self) -> &ZdTraceSampler {
        &self.trace
    }

    /// One joint sample. `psi` comes first from the stream, so it coincides
    /// with [`TorusSampler::sample`] for the same seed.
    pub fn sample(&self, seed: u64) -> Result<CoupledPair> {
        let mut rng = rng_from_seed(seed);
        let psi = self.torus.sample_with(&mut rng);
        let beta = self.trace.sample_with(&mut rng);
        let psi_boundary: Vec<f64> = self.boundary_idx.iter().map(|&i| psi.values()[i]).collect();
        let harm_torus = self.solver.harmonic_interior(&psi_boundary)?;
        let chi: Vec<f64> = self
            .interior_idx
            .iter()
            .zip(&harm_torus)
            .map(|(&i, h)| psi.values()[i] - h)
            .collect();
        let harm_lattice = self.solver.harmonic_interior(&beta)?;
        let closure = self.solver.closure();
        let phi_values = closure
            .origin
            .iter()
            .map(|o| match *o {
                ClosureSite::Interior(i) => chi[i] + harm_lattice[i],
                ClosureSite::Boundary(b) => beta[b],
            })
            .collect();
        Ok(CoupledPair {
            side: self.geom.side(),
            dim: self.geom.dim(),
            seed,
            phi: RegionField::new(Arc::clone(&closure.region), phi_values),
            psi,
            chi,
            beta,
            harm_torus,
            harm_lattice,
            interior: self.solver.region_arc(),
        })
    }

    /// Largest violation of `psi - E[psi(exit)] = phi - E[phi(exit)]` on `U_N`,
    /// with both harmonic averages recomputed from scratch: the torus side by
    /// a solver on the projected box, the lattice side from `phi` itself.
    pub fn identity_residual(&self, pair: &CoupledPair) -> Result<f64> {
        let torus_solver = KilledGreenSolver::new(&u_box(self.geom.side(), self.geom.dim()).project(&self.geom))?;
        self.identity_residual_with(pair, &torus_solver)
    }

    /// As [`identity_residual`](Self::identity_residual) with a prebuilt
    /// torus-side solver for `U_N` projected to the torus.
    pub fn identity_residual_with(&self, pair: &CoupledPair, torus_solver: &KilledGreenSolver) -> Result<f64> {
        let tb: Vec<f64> = torus_solver
            .boundary()
            .sites()
            .map(|y| pair.psi.values()[self.geom.index_of(y)])
            .collect();
        let harm_t = torus_solver.harmonic_interior(&tb)?;
        let lb: Vec<f64> = self
            .solver
            .boundary()
            .sites()
            .map(|y| pair.phi.value_or_zero(y))
            .collect();
        let harm_z = self.solver.harmonic_interior(&lb)?;
        let mut worst = 0.0f64;
        for (i, v) in self.solver.region().sites().enumerate() {
            let x = self.geom.index_of(v);
            let jt = torus_solver
                .region()
                .index_of(v)
                .ok_or_else(|| Error::NotInRegion(v.to_vec()))?;
            let phi = pair.phi_at(v).ok_or_else(|| Error::NotInRegion(v.to_vec()))?;
            let lhs = pair.psi.values()[x] - harm_t[jt];
            let rhs = phi - harm_z[i];
            worst = worst.max((lhs - rhs).abs());
        }
        Ok(worst)
    }
}

/// One joint sample of the torus field and the `Z^d` field on `Û_N ∪ ∂Û_N`.
/// Per-site vectors on `U_N` follow the order of the lattice box `Û_N`.
#[derive(Clone, Debug)]
pub struct CoupledPair {
    pub side: usize,
    pub dim: usize,
    pub seed: u64,
    pub psi: TorusField,
    pub phi: RegionField,
    pub chi: Vec<f64>,
    pub beta: Vec<f64>,
    pub harm_torus: Vec<f64>,
    pub harm_lattice: Vec<f64>,
    interior: Arc<Region>,
}

impl CoupledPair {
    /// `phi` at a lattice site, `None` off `Û_N ∪ ∂Û_N`.
    pub fn phi_at(&self, v: &[i64]) -> Option<f64> {
        use crate::gff::FieldView;
        self.phi.value_at(v)
    }

    /// `psi` at the projection of a lattice site.
    pub fn psi_at(&self, v: &[i64]) -> f64 {
        self.psi.values()[self.psi.geom().index_of(v)]
    }

    /// The lattice box `Û_N`, indexing `chi` and the harmonic parts.
    pub fn interior(&self) -> &Region {
        &self.interior
    }
}

/// `max |psi(x) - phi(x̂)|` over the inner box, zero when it is empty.
pub fn sup_difference(pair: &CoupledPair, delta: f64) -> f64 {
    let b = inner_box(pair.side, pair.dim, delta);
    if b.is_empty() {
        return 0.0;
    }
    b.sites()
        .iter()
        .map(|v| (pair.psi_at(v) - pair.phi_at(v).expect("inner box lies in U_N")).abs())
        .fold(0.0, f64::max)
}

/// `max |harm_T(x) - harm_Z(x̂)|` over the inner box; equal to
/// [`sup_difference`] up to rounding since the killed parts coincide.
pub fn sup_harmonic_difference(pair: &CoupledPair, delta: f64) -> f64 {
    let b = inner_box(pair.side, pair.dim, delta);
    b.sites()
        .iter()
        .map(|v| {
            let i = pair.interior.index_of(v).expect("inner box lies in U_N");
            (pair.harm_torus[i] - pair.harm_lattice[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Level-set sandwich on the inner box:
/// `{phi >= h + eps} ⊆ {psi >= h} ⊆ {phi >= h - eps}`.
/// The projection is injective on the box, so the inclusions are sitewise.
pub fn sandwich_holds(pair: &CoupledPair, h: f64, eps: f64, delta: f64) -> bool {
    inner_box(pair.side, pair.dim, delta).sites().iter().all(|v| {
        let psi = pair.psi_at(v);
        let phi = pair.phi_at(v).expect("inner box lies in U_N");
        (phi < h + eps || psi >= h) && (psi < h || phi >= h - eps)
    })
}

/// Which field the harmonic average is taken of.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Torus,
    Lattice,
}

/// `(2δ - 1)(d - 2)(d - 1)/(2d - 3)`, the decay exponent of the harmonic
/// variances in `N`.
pub fn rate_exponent(dim: usize, delta: f64) -> f64 {
    let d = dim as f64;
    (2.0 * delta - 1.0) * (d - 2.0) * (d - 1.0) / (2.0 * d - 3.0)
}

/// `(2δ - 1)(d - 1)/(2d - 3)`.
pub fn gamma(dim: usize, delta: f64) -> f64 {
    let d = dim as f64;
    (2.0 * delta - 1.0) * (d - 1.0) / (2.0 * d - 3.0)
}

/// Exact variances of `E_x[psi(X_T)]` and `E_x[phi(X_T)]` on `U_N`.
///
/// Two routes. The literal one expands the quadratic form
/// `sum p_x(y) p_x(z) C(y, z)` over boundary pairs. The closed form uses the
/// orthogonal splits of the two fields:
/// `Var_Z(x) = g(0) - g^U(x, x)` and
/// `Var_T(x) = G_T(o, o) - g^U(x, x) + 2 N^{-d} E_x[T_U]`,
/// the last term being the covariance between the killed and harmonic parts
/// induced by the zero-average constraint.
pub struct HarmonicVariance {
    geom: TorusGeom,
    solver: KilledGreenSolver,
    kernel: TorusGreenKernel,
    g0: f64,
    diag: Vec<f64>,
    exit_time: Vec<f64>,
}

impl HarmonicVariance {
    pub fn new(side: usize, dim: usize, zd: &ZdGreen) -> Result<Self> {
        if side < 3 {
            return Err(Error::Precondition(format!("harmonic variances need N >= 3, got N = {side}")));
        }
        let geom = TorusGeom::new(side, dim);
        let solver = KilledGreenSolver::new(&u_box(side, dim).to_region())?;
        let diag = solver.diagonal();
        let exit_time = solver.expected_exit_times();
        Ok(HarmonicVariance {
            geom,
            kernel: TorusGreenKernel::new(geom),
            g0: zd.get(&vec![0; dim])?,
            solver,
            diag,
            exit_time,
        })
    }

    pub fn geom(&self) -> TorusGeom {
        self.geom
    }

    pub fn solver(&self) -> &KilledGreenSolver {
        &self.solver
    }

    fn site_index(&self, x: &[i64]) -> Result<usize> {
        self.solver
            .region()
            .index_of(x)
            .ok_or_else(|| Error::NotInRegion(x.to_vec()))
    }

    /// Closed-form variance at the lattice site `x` of `Û_N`.
    pub fn closed_form(&self, x: &[i64], side: Side) -> Result<f64> {
        let i = self.site_index(x)?;
        Ok(self.closed_form_at(i, side))
    }

    fn closed_form_at(&self, i: usize, side: Side) -> f64 {
        match side {
            Side::Lattice => self.g0 - self.diag[i],
            Side::Torus => {
                self.kernel.diagonal() - self.diag[i] + 2.0 * self.exit_time[i] / self.geom.volume() as f64
            }
        }
    }

    /// `sum_{y, z} p_x(y) p_x(z) C(y, z)` over the boundary of `Û_N`.
    pub fn literal(&self, x: &[i64], side: Side, zd: &ZdGreen) -> Result<f64> {
        let boundary = self.solver.boundary();
        if boundary.len() > TRACE_LIMIT {
            return Err(Error::SizeGuard {
                what: "boundary pairs of U_N",
                actual: boundary.len(),
                limit: TRACE_LIMIT,
            });
        }
        let p = self.solver.exit_distribution(x)?;
        let support: Vec<usize> = (0..p.len()).filter(|&k| p[k] != 0.0).collect();
        let cov: Box<dyn Fn(&[i64], &[i64]) -> f64> = match side {
            Side::Torus => Box::new(|y, z| self.kernel.green_coords(y, z)),
            Side::Lattice => {
                let span = self.solver.boundary().bounding_box().map_or(0, |b| b.extents()[0] - 1);
                let table = zd.table(span as u32)?;
                Box::new(move |y, z| table.get_diff(y, z))
            }
        };
        let mut total = 0.0;
        for &a in &support {
            let ya = boundary.site(a);
            let mut row = 0.0;
            for &b in &support {
                row += p[b] * cov(ya, boundary.site(b));
            }
            total += p[a] * row;
        }
        Ok(total)
    }

    /// Closed-form variances over the inner box, with their maxima.
    pub fn report(&self, delta: f64) -> Result<VarianceReport> {
        let b = inner_box(self.geom.side(), self.geom.dim(), delta);
        let sites = b.sites();
        let idx = sites
            .iter()
            .map(|v| self.site_index(v))
            .collect::<Result<Vec<_>>>()?;
        let var_torus: Vec<f64> = idx.iter().map(|&i| self.closed_form_at(i, Side::Torus)).collect();
        let var_lattice: Vec<f64> = idx.iter().map(|&i| self.closed_form_at(i, Side::Lattice)).collect();
        let (argmax_torus, max_torus) = argmax(&var_torus);
        let (argmax_lattice, max_lattice) = argmax(&var_lattice);
        Ok(VarianceReport {
            side: self.geom.side(),
            dim: self.geom.dim(),
            delta,
            sites,
            var_torus,
            var_lattice,
            max_torus,
            max_lattice,
            argmax_torus,
            argmax_lattice,
            exponent: rate_exponent(self.geom.dim(), delta),
            gamma: gamma(self.geom.dim(), delta),
        })
    }
}

/// First index of the largest entry; `(None, 0)` for an empty slice.
fn argmax(v: &[f64]) -> (Option<usize>, f64) {
    v.iter()
        .enumerate()
        .fold((None, 0.0), |(bi, bv), (i, &x)| match bi {
            Some(_) if x <= bv => (bi, bv),
            _ => (Some(i), x),
        })
}

#[derive(Clone, Debug)]
pub struct VarianceReport {
    pub side: usize,
    pub dim: usize,
    pub delta: f64,
    /// Lattice sites of the inner box.
    pub sites: Vec<Vec<i64>>,
    pub var_torus: Vec<f64>,
    pub var_lattice: Vec<f64>,
    pub max_torus: f64,
    pub max_lattice: f64,
    pub argmax_torus: Option<usize>,
    pub argmax_lattice: Option<usize>,
    pub exponent: f64,
    pub gamma: f64,
}

/// Literal variance of the harmonic average at a site of the inner box.
pub fn exact_harmonic_variance(
    side: usize,
    dim: usize,
    delta: f64,
    x: &[i64],
    which: Side,
    zd: &ZdGreen,
) -> Result<f64> {
    if !inner_box(side, dim, delta).contains(x) {
        return Err(Error::NotInRegion(x.to_vec()));
    }
    HarmonicVariance::new(side, dim, zd)?.literal(x, which, zd)
}

/// A torus-adjacent pair straddling the seam of the fundamental domain.
#[derive(Clone, Debug, PartialEq)]
pub struct SeamProbe {
    pub x_hat: Vec<i64>,
    pub y_hat: Vec<i64>,
    pub torus_dist: u64,
    pub lattice_dist: u64,
    /// `G_T(x, y)`.
    pub torus_value: f64,
    /// `g(x̂ - ŷ)`.
    pub lattice_value: f64,
}

/// `G_T` stays of order one across the seam while `g` at the lifted pair
/// decays like `N^{2-d}`.
pub fn boundary_covariance_probe(side: usize, dim: usize, zd: &ZdGreen) -> Result<SeamProbe> {
    if side < 4 {
        return Err(Error::Precondition(format!("seam probe needs N >= 4, got N = {side}")));
    }
    let geom = TorusGeom::new(side, dim);
    let n = side as i64;
    let mut x_hat = vec![0; dim];
    let mut y_hat = vec![0; dim];
    x_hat[0] = n / 2;
    y_hat[0] = -((n + 1) / 2) + 1;
    let diff: Vec<i64> = x_hat.iter().zip(&y_hat).map(|(a, b)| a - b).collect();
    let kernel = TorusGreenKernel::new(geom);
    Ok(SeamProbe {
        torus_dist: geom.dist_coords(&x_hat, &y_hat),
        lattice_dist: diff.iter().map(|c| c.unsigned_abs()).sum(),
        torus_value: kernel.green_coords(&x_hat, &y_hat),
        lattice_value: zd.get(&diff)?,
        x_hat,
        y_hat,
    })
}

