//! Numerical check of the last-exit decompositions linking the killed,
//! lattice and torus Green functions.

use super::killed::KilledGreenSolver;
use super::torus::TorusGreenKernel;
use super::zd::ZdGreen;
use crate::error::{Error, Result};
use crate::lattice::{Region, TorusGeom};

/// Largest torus volume accepted by [`verify_green_identities`].
pub const IDENTITY_VOLUME_LIMIT: usize = 10_000;

/// Maximal absolute residuals of the three identities.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityReport {
    /// `g = g^U + E_x[g(X_T, y)]` on `Z^d`.
    pub lattice: f64,
    /// `G_T = g^U + E_x[G_T(X_T, y)] - N^{-d} E_x[T_U]` on the torus.
    pub torus: Option<f64>,
    /// `g^{T \ {z}}(x, y) = N^{-d} E_x[H_z] - G_T(z, y) + G_T(x, y)`.
    pub pinned: Option<f64>,
    pub lattice_pairs: usize,
    pub torus_pairs: usize,
    pub pinned_triples: usize,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.lattice
            .max(self.torus.unwrap_or(0.0))
            .max(self.pinned.unwrap_or(0.0))
    }
}

/// Checks the identities for `U`. Torus regions must be properly contained
/// and are checked on the torus and, through their lift, on `Z^d`; lattice
/// regions only on `Z^d`.
pub fn verify_green_identities(region: &Region, zd: &ZdGreen) -> Result<IdentityReport> {
    if region.is_empty() {
        return Err(Error::Precondition("empty region".into()));
    }
    let mut report = match region.torus_geom() {
        None => IdentityReport {
            lattice: 0.0,
            torus: None,
            pinned: None,
            lattice_pairs: 0,
            torus_pairs: 0,
            pinned_triples: 0,
        },
        Some(geom) => {
            if geom.volume() > IDENTITY_VOLUME_LIMIT {
                return Err(Error::SizeGuard {
                    what: "torus volume",
                    actual: geom.volume(),
                    limit: IDENTITY_VOLUME_LIMIT,
                });
            }
            if !region.is_properly_contained() {
                return Err(Error::Precondition(
                    "torus region is not properly contained".into(),
                ));
            }
            let kernel = TorusGreenKernel::new(geom);
            let (torus, torus_pairs) = torus_residual(region, &kernel)?;
            let (pinned, pinned_triples) = pinned_residual(geom, &kernel)?;
            IdentityReport {
                lattice: 0.0,
                torus: Some(torus),
                pinned: Some(pinned),
                lattice_pairs: 0,
                torus_pairs,
                pinned_triples,
            }
        }
    };
    let (lattice, pairs) = lattice_residual(&region.hat(), zd)?;
    report.lattice = lattice;
    report.lattice_pairs = pairs;
    Ok(report)
}

fn lattice_residual(u: &Region, zd: &ZdGreen) -> Result<(f64, usize)> {
    let solver = KilledGreenSolver::new(u)?;
    let bdry = solver.boundary();
    let bbox = u.bounding_box().expect("nonempty");
    let d = u.dim();
    let mut targets: Vec<Vec<i64>> = u.sites().chain(bdry.sites()).map(<[i64]>::to_vec).collect();
    let reach = bbox.hi().iter().map(|c| c.abs()).max().unwrap_or(0) + 3;
    for axis in 0..d {
        let mut far = vec![0i64; d];
        far[axis] = reach;
        targets.push(far.clone());
        far[axis] = -reach;
        far[(axis + 1) % d] = reach / 2;
        targets.push(far);
    }
    let mut diffs = Vec::new();
    for y in &targets {
        for x in u.sites().chain(bdry.sites()) {
            diffs.push(x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<i64>>());
        }
    }
    zd.prefetch(diffs)?;
    let g = |x: &[i64], y: &[i64]| -> Result<f64> {
        let v: Vec<i64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        zd.get(&v)
    };
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for (i, x) in u.sites().enumerate() {
        let col = solver.green_column(i);
        let exit = solver.push_to_boundary(&col);
        for y in &targets {
            let killed = u.index_of(y).map_or(0.0, |j| col[j]);
            let mut harm = 0.0;
            for (b, &p) in bdry.sites().zip(&exit) {
                if p != 0.0 {
                    harm += p * g(b, y)?;
                }
            }
            worst = worst.max((g(x, y)? - killed - harm).abs());
            pairs += 1;
        }
    }
    Ok((worst, pairs))
}

fn torus_residual(u: &Region, kernel: &TorusGreenKernel) -> Result<(f64, usize)> {
    let geom = kernel.geom();
    let solver = KilledGreenSolver::new(u)?;
    let bdry = solver.boundary();
    let vol = geom.volume();
    let inv_vol = 1.0 / vol as f64;
    let tau = solver.expected_exit_times();
    let bidx: Vec<usize> = bdry.sites().map(|b| geom.index_of(b)).collect();
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for (i, x) in u.sites().enumerate() {
        let xi = geom.index_of(x);
        let col = solver.green_column(i);
        let exit = solver.push_to_boundary(&col);
        for y in 0..vol {
            let killed = u.index_of(&geom.coords_of(y)).map_or(0.0, |j| col[j]);
            let harm: f64 = bidx
                .iter()
                .zip(&exit)
                .map(|(&b, &p)| p * kernel.green_index(b, y))
                .sum();
            let r = kernel.green_index(xi, y) - killed - harm + inv_vol * tau[i];
            worst = worst.max(r.abs());
            pairs += 1;
        }
    }
    Ok((worst, pairs))
}

fn pinned_residual(geom: TorusGeom, kernel: &TorusGreenKernel) -> Result<(f64, usize)> {
    let vol = geom.volume();
    if vol < 2 {
        return Ok((0.0, 0));
    }
    let inv_vol = 1.0 / vol as f64;
    let mut zs = vec![0usize];
    if vol > 2 {
        zs.push(vol / 2 + 1);
    }
    let stride = (vol / 256).max(1);
    let mut worst = 0.0f64;
    let mut count = 0;
    for &z in &zs {
        let rest = Region::torus(geom, (0..vol).filter(|&i| i != z).map(|i| geom.coords_of(i)));
        let solver = KilledGreenSolver::new(&rest)?;
        let hit = solver.expected_exit_times();
        for y in (0..vol).step_by(stride) {
            let col = match rest.index_of(&geom.coords_of(y)) {
                Some(j) => solver.green_column(j),
                None => vec![0.0; rest.len()],
            };
            for x in 0..vol {
                let (killed, h) = match rest.index_of(&geom.coords_of(x)) {
                    Some(i) => (col[i], hit[i]),
                    None => (0.0, 0.0),
                };
                let r = killed - (inv_vol * h - kernel.green_index(z, y) + kernel.green_index(x, y));
                worst = worst.max(r.abs());
                count += 1;
            }
        }
    }
    Ok((worst, count))
}
