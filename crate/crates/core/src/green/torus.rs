//! Zero-average Green function of the torus, built once by FFT.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::fft::CubeFft;
use crate::lattice::{SiteT, TorusGeom};

/// Eigenvalues `mu_k = (1/d) sum_i (1 - cos(2 pi k_i / N))` of the negative
/// generator, in row-major order of `k`.
#[derive(Clone, Debug)]
pub struct TorusSpectrum {
    geom: TorusGeom,
    eigenvalues: Vec<f64>,
}

impl TorusSpectrum {
    pub fn new(geom: TorusGeom) -> Self {
        let n = geom.side();
        let d = geom.dim();
        let axis: Vec<f64> = (0..n)
            .map(|k| 1.0 - (2.0 * PI * k as f64 / n as f64).cos())
            .collect();
        let eigenvalues = (0..geom.volume())
            .map(|idx| {
                let mut rem = idx;
                let mut s = 0.0;
                for _ in 0..d {
                    s += axis[rem % n];
                    rem /= n;
                }
                s / d as f64
            })
            .collect();
        TorusSpectrum { geom, eigenvalues }
    }

    pub fn geom(&self) -> TorusGeom {
        self.geom
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `lambda_T = (1/d)(1 - cos(2 pi / N))`; infinite for the one-point torus.
    pub fn spectral_gap(&self) -> f64 {
        let n = self.geom.side();
        if n == 1 {
            return f64::INFINITY;
        }
        (1.0 - (2.0 * PI / n as f64).cos()) / self.geom.dim() as f64
    }
}

/// Table of `G_T(x, o)` over all torus sites.
#[derive(Clone, Debug)]
pub struct TorusGreenKernel {
    geom: TorusGeom,
    table: Vec<f64>,
}

impl TorusGreenKernel {
    pub fn new(geom: TorusGeom) -> Self {
        let spectrum = TorusSpectrum::new(geom);
        let fft = CubeFft::new(geom.side(), geom.dim());
        let mut buf: Vec<Complex64> = spectrum
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(k, &mu)| {
                if k == 0 {
                    Complex64::default()
                } else {
                    Complex64::new(1.0 / mu, 0.0)
                }
            })
            .collect();
        fft.inverse(&mut buf);
        let scale = 1.0 / geom.volume() as f64;
        let raw: Vec<f64> = buf.iter().map(|z| z.re * scale).collect();
        // Average x and -x so that symmetry holds bit for bit.
        let n = geom.side() as i64;
        let table = (0..raw.len())
            .map(|idx| {
                let neg: Vec<i64> = geom.coords_of(idx).iter().map(|&c| (n - c) % n).collect();
                let j = geom.index_of(&neg);
                0.5 * (raw[idx] + raw[j])
            })
            .collect();
        TorusGreenKernel { geom, table }
    }

    pub fn geom(&self) -> TorusGeom {
        self.geom
    }

    /// `G_T(x, o)` indexed by the row-major index of `x`.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn green(&self, x: &SiteT, y: &SiteT) -> f64 {
        self.green_coords(x.coords(), y.coords())
    }

    /// `G_T(x, y)` for arbitrary integer coordinates.
    pub fn green_coords(&self, x: &[i64], y: &[i64]) -> f64 {
        let n = self.geom.side() as i64;
        let idx = x
            .iter()
            .zip(y)
            .fold(0usize, |acc, (&a, &b)| {
                acc * self.geom.side() + (a - b).rem_euclid(n) as usize
            });
        self.table[idx]
    }

    /// `G_T(x, y)` from row-major indices.
    #[inline]
    pub fn green_index(&self, x: usize, y: usize) -> f64 {
        let n = self.geom.side();
        let (mut a, mut b, mut idx, mut stride) = (x, y, 0usize, 1usize);
        for _ in 0..self.geom.dim() {
            let diff = (a % n + n - b % n) % n;
            idx += diff * stride;
            stride *= n;
            a /= n;
            b /= n;
        }
        self.table[idx]
    }

    pub fn diagonal(&self) -> f64 {
        self.table[0]
    }
}

/// One row of the decay table.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayRow {
    /// Torus distance.
    pub r: u64,
    /// Maximum of `|G_T(x, y)|` over pairs at distance `r`.
    pub max_abs: f64,
    /// `max_abs * r^(d-2)`.
    pub scaled: f64,
    /// `max_abs * r^(d-2) / (ln N)^(3d/2)`.
    pub normalized: f64,
}

/// Maximal `|G_T|` at each torus distance `r >= 1`.
pub fn decay_profile(kernel: &TorusGreenKernel) -> Vec<DecayRow> {
    let geom = kernel.geom();
    let o = geom.origin();
    let mut best: Vec<f64> = vec![f64::NEG_INFINITY; geom.diameter() as usize + 1];
    for (idx, &v) in kernel.table().iter().enumerate() {
        let x = SiteT::new(&geom, &geom.coords_of(idx));
        let r = geom.dist(&x, &o) as usize;
        best[r] = best[r].max(v.abs());
    }
    let d = geom.dim() as i32;
    let log_factor = (geom.side() as f64).ln().powf(1.5 * d as f64);
    best.iter()
        .enumerate()
        .skip(1)
        .filter(|(_, m)| m.is_finite())
        .map(|(r, &m)| {
            let scaled = m * (r as f64).powi(d - 2);
            DecayRow {
                r: r as u64,
                max_abs: m,
                scaled,
                normalized: scaled / log_factor,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct eigen-sum with real orthonormal cosine/sine pairs folded into
    /// `cos(2 pi k.(x-y)/N) / N^d`.
    fn eigen_sum(geom: TorusGeom, x: &[i64], y: &[i64]) -> f64 {
        let spec = TorusSpectrum::new(geom);
        let n = geom.side();
        let mut acc = 0.0;
        for (k, &mu) in spec.eigenvalues().iter().enumerate().skip(1) {
            let kc = geom.coords_of(k);
            let phase: f64 = (0..geom.dim())
                .map(|i| kc[i] as f64 * (x[i] - y[i]) as f64)
                .sum::<f64>()
                * 2.0
                * PI
                / n as f64;
            acc += phase.cos() / mu;
        }
        acc / geom.volume() as f64
    }

    #[test]
    fn two_torus_diagonal() {
        let k = TorusGreenKernel::new(TorusGeom::new(2, 3));
        assert!((k.diagonal() - 29.0 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn fft_table_matches_eigen_sum() {
        for n in 1..=6 {
            let geom = TorusGeom::new(n, 3);
            let k = TorusGreenKernel::new(geom);
            for idx in 0..geom.volume() {
                let x = geom.coords_of(idx);
                let want = eigen_sum(geom, &x, &[0, 0, 0]);
                assert!((k.table()[idx] - want).abs() < 1e-10, "N={n} x={x:?}");
            }
        }
    }

    #[test]
    fn structural_properties() {
        for n in 2..=7 {
            let geom = TorusGeom::new(n, 3);
            let k = TorusGreenKernel::new(geom);
            let vol = geom.volume();
            for x in 0..vol {
                let row: f64 = (0..vol).map(|y| k.green_index(x, y)).sum();
                assert!(row.abs() < 1e-10);
                for y in 0..vol {
                    assert_eq!(k.green_index(x, y), k.green_index(y, x));
                    assert!(k.green_index(x, y).abs() <= k.diagonal() + 1e-12);
                }
            }
            let x = geom.coords_of(vol / 3);
            let y = geom.coords_of(vol / 2);
            let shift = [1i64, -2, 5];
            let xs: Vec<i64> = x.iter().zip(shift).map(|(a, b)| a + b).collect();
            let ys: Vec<i64> = y.iter().zip(shift).map(|(a, b)| a + b).collect();
            assert!((k.green_coords(&x, &y) - k.green_coords(&xs, &ys)).abs() < 1e-15);
        }
    }

    #[test]
    fn spectral_gap_is_smallest_nonzero_eigenvalue() {
        for n in 2..=9 {
            let s = TorusSpectrum::new(TorusGeom::new(n, 3));
            let min = s.eigenvalues()[1..].iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((min - s.spectral_gap()).abs() < 1e-15);
            assert_eq!(s.eigenvalues()[0], 0.0);
        }
    }

    #[test]
    fn decay_profile_excludes_zero_distance() {
        let k = TorusGreenKernel::new(TorusGeom::new(16, 3));
        let prof = decay_profile(&k);
        assert_eq!(prof.first().map(|r| r.r), Some(1));
        assert_eq!(prof.len() as u64, TorusGeom::new(16, 3).diameter());
        assert!(prof.iter().all(|r| r.max_abs.is_finite() && r.max_abs <= k.diagonal()));
    }
}
