//! Green function of simple random walk on `Z^d`.
//!
//! `g(v) = d * int_0^inf prod_i e^{-s} I_{v_i}(s) ds`, the time integral of
//! the continuous-time walk with unit jump rate. The integral is split into
//! geometrically growing Gauss-Legendre panels on `[0, S]` and an analytic
//! tail on `[S, inf)` from the large-argument expansion
//!
//! ```text
//! e^{-s} I_n(s) ~ (2 pi s)^{-1/2} sum_j (-1)^j a_j(n) s^{-j},
//! a_j(n) = prod_{l=1}^{j} (4n^2 - (2l-1)^2) / (j! 8^j),
//! ```
//!
//! integrated term by term. The error is estimated by comparing two rule
//! orders on the same panels. Beyond the configured horizon the evaluator
//! returns `c |v|^{2-d}` with `c` fitted at the horizon.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use rayon::prelude::*;

use super::bessel::scaled_bessel_i;
use crate::error::{Error, Result};
use crate::quad::gauss_legendre_on;

#[derive(Clone, Debug, PartialEq)]
pub struct ZdGreenConfig {
    /// Euclidean norm above which the fitted asymptotic is used.
    pub horizon: f64,
    /// Required absolute accuracy of quadrature values.
    pub tolerance: f64,
    /// Ratio between consecutive panel endpoints.
    pub panel_ratio: f64,
    pub low_order: usize,
    pub high_order: usize,
}

impl Default for ZdGreenConfig {
    fn default() -> Self {
        ZdGreenConfig {
            horizon: 160.0,
            tolerance: 1e-9,
            panel_ratio: 1.3,
            low_order: 16,
            high_order: 24,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Quadrature,
    Asymptotic,
}

/// A Green function value with the method that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenValue {
    pub value: f64,
    pub regime: Regime,
    /// Estimated absolute error (quadrature) or zero (asymptotic).
    pub error_estimate: f64,
    /// Crossover norm between the two regimes.
    pub horizon: f64,
}

/// Cached evaluator of the `Z^d` Green function.
pub struct ZdGreen {
    dim: usize,
    config: ZdGreenConfig,
    cache: RwLock<HashMap<Vec<u32>, (f64, f64)>>,
    fitted_constant: OnceLock<f64>,
}

impl std::fmt::Debug for ZdGreen {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZdGreen")
            .field("dim", &self.dim)
            .field("config", &self.config)
            .finish()
    }
}

fn canonical_key(v: &[i64]) -> Vec<u32> {
    let mut k: Vec<u32> = v.iter().map(|c| c.unsigned_abs() as u32).collect();
    k.sort_unstable();
    k
}

fn norm(key: &[u32]) -> f64 {
    key.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt()
}

impl ZdGreen {
    pub fn new(dim: usize) -> Result<Self> {
        ZdGreen::with_config(dim, ZdGreenConfig::default())
    }

    pub fn with_config(dim: usize, config: ZdGreenConfig) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidParameter(format!(
                "the Z^d Green function is finite only for d >= 3, got d = {dim}"
            )));
        }
        if !(config.horizon >= 1.0) || !(config.panel_ratio > 1.0) || config.low_order >= config.high_order {
            return Err(Error::InvalidParameter(format!("bad quadrature configuration {config:?}")));
        }
        Ok(ZdGreen {
            dim,
            config,
            cache: RwLock::new(HashMap::new()),
            fitted_constant: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &ZdGreenConfig {
        &self.config
    }

    /// `g(v)`, with metadata.
    pub fn value(&self, v: &[i64]) -> Result<GreenValue> {
        assert_eq!(v.len(), self.dim, "dimension mismatch");
        let key = canonical_key(v);
        let r = norm(&key);
        if r > self.config.horizon {
            let c = self.asymptotic_constant()?;
            return Ok(GreenValue {
                value: c * r.powi(2 - self.dim as i32),
                regime: Regime::Asymptotic,
                error_estimate: 0.0,
                horizon: self.config.horizon,
            });
        }
        let hit = self.cache.read().unwrap().get(&key).copied();
        let (value, err) = match hit {
            Some(x) => x,
            None => {
                self.compute_keys(vec![key.clone()])?;
                self.cache.read().unwrap()[&key]
            }
        };
        Ok(GreenValue {
            value,
            regime: Regime::Quadrature,
            error_estimate: err,
            horizon: self.config.horizon,
        })
    }

    pub fn get(&self, v: &[i64]) -> Result<f64> {
        self.value(v).map(|g| g.value)
    }

    /// `c` in `g(v) ~ c |v|^{2-d}`, fitted on the axis at the horizon.
    pub fn asymptotic_constant(&self) -> Result<f64> {
        if let Some(&c) = self.fitted_constant.get() {
            return Ok(c);
        }
        let h = self.config.horizon.floor() as u32;
        let mut key = vec![0u32; self.dim];
        key[self.dim - 1] = h;
        self.compute_keys(vec![key.clone()])?;
        let g = self.cache.read().unwrap()[&key].0;
        let c = g * (h as f64).powi(self.dim as i32 - 2);
        Ok(*self.fitted_constant.get_or_init(|| c))
    }

    /// Computes and caches every `g(v)` with `|v_i| <= radius` inside the
    /// horizon.
    pub fn prefetch_cube(&self, radius: u32) -> Result<()> {
        let mut keys = Vec::new();
        let mut cur = vec![0u32; self.dim];
        enumerate_sorted(&mut cur, 0, 0, radius, &mut keys);
        self.prefetch_keys(keys)
    }

    pub fn prefetch(&self, vs: impl IntoIterator<Item = Vec<i64>>) -> Result<()> {
        self.prefetch_keys(vs.into_iter().map(|v| canonical_key(&v)).collect())
    }

    fn prefetch_keys(&self, keys: Vec<Vec<u32>>) -> Result<()> {
        let missing: Vec<Vec<u32>> = {
            let cache = self.cache.read().unwrap();
            let mut m: Vec<Vec<u32>> = keys
                .into_iter()
                .filter(|k| norm(k) <= self.config.horizon && !cache.contains_key(k))
                .collect();
            m.sort_unstable();
            m.dedup();
            m
        };
        if missing.is_empty() {
            return Ok(());
        }
        self.compute_keys(missing)
    }

    /// Dense table of `g` over `|v_i| <= radius`.
    pub fn table(&self, radius: u32) -> Result<ZdTable> {
        self.prefetch_cube(radius)?;
        let side = radius as usize + 1;
        let len = side.pow(self.dim as u32);
        let mut values = Vec::with_capacity(len);
        let mut v = vec![0i64; self.dim];
        for idx in 0..len {
            let mut rem = idx;
            for slot in v.iter_mut().rev() {
                *slot = (rem % side) as i64;
                rem /= side;
            }
            values.push(self.get(&v)?);
        }
        Ok(ZdTable {
            dim: self.dim,
            side,
            values,
        })
    }

    /// Keys are grouped by their largest coordinate, which fixes the
    /// quadrature grid, so a cached value does not depend on which other
    /// keys happened to be computed alongside it.
    fn compute_keys(&self, keys: Vec<Vec<u32>>) -> Result<()> {
        let mut groups: std::collections::BTreeMap<u32, Vec<Vec<u32>>> = Default::default();
        for k in keys {
            groups.entry(k.iter().copied().max().unwrap_or(0)).or_default().push(k);
        }
        for (_, group) in groups {
            self.compute_group(group)?;
        }
        Ok(())
    }

    fn compute_group(&self, keys: Vec<Vec<u32>>) -> Result<()> {
        let n_max = keys.iter().flat_map(|k| k.iter().copied()).max().unwrap_or(0) as usize;
        let cutoff = (25.0 * (n_max * n_max) as f64).max(400.0);
        let cfg = &self.config;

        let mut edges = vec![0.0, 0.5];
        while *edges.last().unwrap() < cutoff {
            let next = (edges.last().unwrap() * cfg.panel_ratio).min(cutoff);
            edges.push(next);
        }
        let mut nodes: Vec<(f64, f64, f64)> = Vec::new();
        for w in edges.windows(2) {
            let (xl, wl) = gauss_legendre_on(cfg.low_order, w[0], w[1]);
            let (xh, wh) = gauss_legendre_on(cfg.high_order, w[0], w[1]);
            nodes.extend(xl.into_iter().zip(wl).map(|(x, w)| (x, w, 0.0)));
            nodes.extend(xh.into_iter().zip(wh).map(|(x, w)| (x, 0.0, w)));
        }

        let d = self.dim;
        // Partial sums are combined in chunk order so the result does not
        // depend on how the work was split across threads.
        let partials: Vec<(Vec<f64>, Vec<f64>)> = nodes
            .par_chunks(64)
            .map(|chunk| {
                let mut bes = vec![0.0; n_max + 1];
                let mut lo = vec![0.0; keys.len()];
                let mut hi = vec![0.0; keys.len()];
                for &(s, wl, wh) in chunk {
                    scaled_bessel_i(s, &mut bes);
                    for (j, k) in keys.iter().enumerate() {
                        let f: f64 = k.iter().map(|&n| bes[n as usize]).product();
                        lo[j] += wl * f;
                        hi[j] += wh * f;
                    }
                }
                (lo, hi)
            })
            .collect();
        let mut lo = vec![0.0; keys.len()];
        let mut hi = vec![0.0; keys.len()];
        for (a, b) in partials {
            lo.iter_mut().zip(a).for_each(|(x, y)| *x += y);
            hi.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }

        let mut results = Vec::with_capacity(keys.len());
        for (j, key) in keys.iter().enumerate() {
            let (tail, tail_err) = asymptotic_tail(key, cutoff, d);
            let value = d as f64 * (hi[j] + tail);
            let err = d as f64 * ((hi[j] - lo[j]).abs() + tail_err);
            if !(err <= cfg.tolerance) || !value.is_finite() {
                return Err(Error::NonConvergent {
                    requested: cfg.tolerance,
                    estimated: err,
                });
            }
            results.push((value, err));
        }
        let mut cache = self.cache.write().unwrap();
        for (k, r) in keys.into_iter().zip(results) {
            cache.insert(k, r);
        }
        Ok(())
    }
}

fn enumerate_sorted(cur: &mut Vec<u32>, pos: usize, min: u32, radius: u32, out: &mut Vec<Vec<u32>>) {
    if pos == cur.len() {
        out.push(cur.clone());
        return;
    }
    for c in min..=radius {
        cur[pos] = c;
        enumerate_sorted(cur, pos + 1, c, radius, out);
    }
}

/// `int_S^inf prod_i e^{-s} I_{n_i}(s) ds` from the asymptotic expansion,
/// with the size of the last retained term as error estimate.
fn asymptotic_tail(key: &[u32], cutoff: f64, dim: usize) -> (f64, f64) {
    const TERMS: usize = 10;
    let mut poly = vec![0.0f64; 1];
    poly[0] = 1.0;
    for &n in key {
        let nn = 4.0 * (n as f64) * (n as f64);
        let mut coeffs = vec![0.0f64; TERMS];
        let mut a = 1.0;
        coeffs[0] = 1.0;
        for j in 1..TERMS {
            let l = (2 * j - 1) as f64;
            a *= (nn - l * l) / (j as f64 * 8.0);
            coeffs[j] = if j % 2 == 1 { -a } else { a };
        }
        let mut next = vec![0.0f64; TERMS];
        for (i, &p) in poly.iter().enumerate() {
            for (j, &c) in coeffs.iter().enumerate() {
                if i + j < TERMS {
                    next[i + j] += p * c;
                }
            }
        }
        poly = next;
    }
    let half_d = dim as f64 / 2.0;
    let pref = (2.0 * std::f64::consts::PI).powf(-half_d);
    let mut total = 0.0;
    let mut last = 0.0;
    for (m, &c) in poly.iter().enumerate() {
        let expo = half_d + m as f64 - 1.0;
        let term = pref * c * cutoff.powf(-expo) / expo;
        total += term;
        last = term.abs();
    }
    (total, last)
}

/// Dense lookup table of `g` over a cube of absolute coordinates.
#[derive(Clone, Debug)]
pub struct ZdTable {
    dim: usize,
    side: usize,
    values: Vec<f64>,
}

impl ZdTable {
    pub fn radius(&self) -> u32 {
        (self.side - 1) as u32
    }

    /// `g(v)`; panics if some `|v_i|` exceeds the table radius.
    #[inline]
    pub fn get(&self, v: &[i64]) -> f64 {
        let mut idx = 0usize;
        for &c in v {
            let a = c.unsigned_abs() as usize;
            assert!(a < self.side, "offset {v:?} outside the table");
            idx = idx * self.side + a;
        }
        self.values[idx]
    }

    /// `g(x - y)`.
    #[inline]
    pub fn get_diff(&self, x: &[i64], y: &[i64]) -> f64 {
        let mut idx = 0usize;
        for (&a, &b) in x.iter().zip(y) {
            let c = (a - b).unsigned_abs() as usize;
            assert!(c < self.side, "offset outside the table");
            idx = idx * self.side + c;
        }
        self.values[idx]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}
