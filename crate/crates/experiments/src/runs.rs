//! One runner per experiment kind. Each returns its table, the outcome of
//! its built-in assertions, and aggregate statistics for the summary.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use gfflab_core::coupling::{
    boundary_covariance_probe, sandwich_holds, sup_difference, CouplingSampler, HarmonicVariance,
};
use gfflab_core::gff::{write_region_snapshot, write_torus_snapshot, TorusSampler};
use gfflab_core::green::{decay_profile, verify_green_identities, KilledGreenSolver, TorusGreenKernel, ZdGreen};
use gfflab_core::lattice::{u_box, TorusGeom};
use gfflab_core::percolation::{
    cluster_stats, eta_from_levels, h_star_from_levels, label_clusters, level_set, BallPercolation, Topology,
};
use gfflab_core::seed::derive_seed;
use gfflab_core::Result;

use crate::config::{ExperimentConfig, Kind};
use crate::stats::{loglog_slope, mean, median};
use crate::table::{Cell, Table};

pub const GREEN_HEADER: &[&str] = &["N", "d", "check", "r", "value", "limit"];
pub const COUPLING_HEADER: &[&str] = &["N", "delta", "rep", "seed", "sup_diff", "var_torus_max", "var_zd_max"];
pub const SANDWICH_HEADER: &[&str] = &["N", "delta", "h", "eps", "rep", "seed", "sup_diff", "sandwich"];
pub const PERC_HEADER: &[&str] = &[
    "N", "h", "rep", "seed", "max_cluster", "max_frac", "second_cluster", "diam_o", "giant_flag",
];
pub const ETA_HEADER: &[&str] = &["n", "h", "reps", "successes", "eta_hat", "ci_lo", "ci_hi"];
pub const HSTAR_HEADER: &[&str] = &["n", "tau", "step", "h", "reps", "successes", "eta_hat", "ci_lo", "ci_hi"];
pub const PROBE_HEADER: &[&str] = &[
    "N", "d", "torus_dist", "lattice_dist", "torus_value", "lattice_value", "g_e1",
];

/// Largest coupling-identity residual accepted as rounding.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Limit on Green-function residuals in `green-verify`.
pub const GREEN_TOL: f64 = 1e-8;
/// Limit on row sums and on the FFT versus direct eigen-sum discrepancy.
pub const KERNEL_TOL: f64 = 1e-10;
/// Volume up to which the direct eigen-sum is evaluated.
const EIGEN_SUM_VOLUME: usize = 4096;
const COUPLING: &str = "coupling";

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub table: Table,
    pub assertions: Vec<Assertion>,
    pub aggregates: Map<String, Value>,
    pub snapshots: Vec<PathBuf>,
}

impl Outcome {
    fn new(header: &'static [&'static str]) -> Self {
        Outcome {
            table: Table::new(header),
            assertions: Vec::new(),
            aggregates: Map::new(),
            snapshots: Vec::new(),
        }
    }
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let zd = ZdGreen::new(cfg.dim)?;
    let mut out = match cfg.kind {
        Kind::GreenVerify => green_verify(cfg, &zd)?,
        Kind::CouplingScan => coupling_scan(cfg, &zd)?,
        Kind::SandwichScan => sandwich_scan(cfg, &zd)?,
        Kind::PercScan => perc_scan(cfg)?,
        Kind::EtaCurve => eta_curve(cfg, &zd)?,
        Kind::HStar => hstar(cfg, &zd)?,
        Kind::BoundaryProbe => boundary_probe(cfg, &zd)?,
    };
    out.table.sort();
    Ok(out)
}

/// Seed purposes name the sampled object, not the experiment, so kinds that
/// draw the same object (eta-curve and hstar, coupling-scan and
/// sandwich-scan) see the same replicates.
fn purpose(family: &str, key: &str, value: usize) -> String {
    format!("{family}/{key}={value}")
}

fn snapshot_path(cfg: &ExperimentConfig, stem: String) -> PathBuf {
    cfg.out.join(format!("{}_{stem}.gff1", cfg.kind))
}

fn green_verify(cfg: &ExperimentConfig, zd: &ZdGreen) -> Result<Outcome> {
    let mut out = Outcome::new(GREEN_HEADER);
    let d = cfg.dim;
    for &n in &cfg.sides {
        let geom = TorusGeom::new(n, d);
        let kernel = TorusGreenKernel::new(geom);
        let mut checks: Vec<(&str, f64, Option<f64>)> = Vec::new();
        let row_sum: f64 = kernel.table().iter().sum();
        checks.push(("row_sum", row_sum.abs(), Some(KERNEL_TOL)));
        if geom.volume() <= EIGEN_SUM_VOLUME {
            checks.push(("eigen_sum", eigen_sum_discrepancy(&kernel), Some(KERNEL_TOL)));
        }
        checks.push(("diagonal", kernel.diagonal(), None));
        // U_N is empty below N = 3.
        if n >= 3 {
            let report = verify_green_identities(&u_box(n, d).project(&geom), zd)?;
            checks.push(("identity_lattice", report.lattice, Some(GREEN_TOL)));
            if let Some(t) = report.torus {
                checks.push(("identity_torus", t, Some(GREEN_TOL)));
            }
            if let Some(p) = report.pinned {
                checks.push(("identity_pinned", p, Some(GREEN_TOL)));
            }
        }
        for (name, value, limit) in checks {
            if let Some(l) = limit {
                out.assertions.push(Assertion::new(
                    format!("{name} N={n}"),
                    value < l,
                    format!("{value:e} < {l:e}"),
                ));
            }
            out.table.push(vec![
                n.into(),
                d.into(),
                name.into(),
                0usize.into(),
                value.into(),
                limit.map_or(Cell::Empty, Cell::Float),
            ]);
        }
        for row in decay_profile(&kernel) {
            out.table.push(vec![
                n.into(),
                d.into(),
                "decay_max_abs".into(),
                (row.r as usize).into(),
                row.max_abs.into(),
                Cell::Empty,
            ]);
            out.table.push(vec![
                n.into(),
                d.into(),
                "decay_scaled".into(),
                (row.r as usize).into(),
                row.scaled.into(),
                Cell::Empty,
            ]);
        }
    }
    Ok(out)
}

/// `max_x |G_T(o, x) - N^{-d} sum_{k != 0} cos(2 pi k.x / N) / mu_k|`,
/// evaluated term by term without the FFT.
pub fn eigen_sum_discrepancy(kernel: &TorusGreenKernel) -> f64 {
    let geom = kernel.geom();
    let n = geom.side();
    let d = geom.dim();
    let vol = geom.volume();
    let modes: Vec<(Vec<i64>, f64)> = (1..vol)
        .map(|k| {
            let kc = geom.coords_of(k);
            let mu = kc
                .iter()
                .map(|&c| 1.0 - (2.0 * PI * c as f64 / n as f64).cos())
                .sum::<f64>()
                / d as f64;
            (kc, mu)
        })
        .collect();
    (0..vol)
        .map(|x| {
            let xc = geom.coords_of(x);
            let s: f64 = modes
                .iter()
                .map(|(kc, mu)| {
                    let phase: i64 = kc.iter().zip(&xc).map(|(a, b)| a * b).sum();
                    (2.0 * PI * phase.rem_euclid(n as i64) as f64 / n as f64).cos() / mu
                })
                .sum();
            (kernel.table()[x] - s / vol as f64).abs()
        })
        .fold(0.0, f64::max)
}

fn coupling_scan(cfg: &ExperimentConfig, zd: &ZdGreen) -> Result<Outcome> {
    let mut out = Outcome::new(COUPLING_HEADER);
    let mut per_n = Vec::new();
    for &n in &cfg.sides {
        let report = HarmonicVariance::new(n, cfg.dim, zd)?.report(cfg.delta)?;
        let sampler = CouplingSampler::new(n, cfg.dim, zd)?;
        let geom = sampler.geom();
        let torus_solver = KilledGreenSolver::new(&u_box(n, cfg.dim).project(&geom))?;
        let who = purpose(COUPLING, "N", n);
        let rows: Vec<(usize, u64, f64, f64)> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(cfg.seed, &who, rep as u64);
                let pair = sampler.sample(seed)?;
                let residual = sampler.identity_residual_with(&pair, &torus_solver)?;
                if cfg.snapshots && rep == 0 {
                    write_pair_snapshots(cfg, n, &pair)?;
                }
                Ok((rep, seed, sup_difference(&pair, cfg.delta), residual))
            })
            .collect::<Result<_>>()?;
        let worst = rows.iter().map(|r| r.3).fold(0.0, f64::max);
        out.assertions.push(Assertion::new(
            format!("coupling_identity N={n}"),
            worst < IDENTITY_TOL,
            format!("max residual {worst:e} < {IDENTITY_TOL:e}"),
        ));
        for &(rep, seed, sup, _) in &rows {
            out.table.push(vec![
                n.into(),
                cfg.delta.into(),
                rep.into(),
                seed.into(),
                sup.into(),
                report.max_torus.into(),
                report.max_lattice.into(),
            ]);
        }
        let sups: Vec<f64> = rows.iter().map(|r| r.2).collect();
        per_n.push((n, median(&sups), report.max_torus, report.max_lattice, worst));
        if cfg.snapshots {
            out.snapshots.push(snapshot_path(cfg, format!("N{n}_psi")));
            out.snapshots.push(snapshot_path(cfg, format!("N{n}_phi")));
        }
    }
    let ns: Vec<f64> = per_n.iter().map(|r| r.0 as f64).collect();
    out.aggregates.insert(
        "per_N".into(),
        Value::Array(
            per_n
                .iter()
                .map(|&(n, med, vt, vz, res)| {
                    json!({"N": n, "median_sup_diff": med, "var_torus_max": vt, "var_zd_max": vz, "max_identity_residual": res})
                })
                .collect(),
        ),
    );
    if per_n.len() >= 2 {
        let vt: Vec<f64> = per_n.iter().map(|r| r.2).collect();
        let vz: Vec<f64> = per_n.iter().map(|r| r.3).collect();
        out.aggregates.insert("slope_var_torus".into(), json!(loglog_slope(&ns, &vt)));
        out.aggregates.insert("slope_var_zd".into(), json!(loglog_slope(&ns, &vz)));
    }
    out.aggregates.insert(
        "rate_exponent".into(),
        json!(gfflab_core::coupling::rate_exponent(cfg.dim, cfg.delta)),
    );
    out.aggregates.insert("gamma".into(), json!(gfflab_core::coupling::gamma(cfg.dim, cfg.delta)));
    Ok(out)
}

fn write_pair_snapshots(cfg: &ExperimentConfig, n: usize, pair: &gfflab_core::coupling::CoupledPair) -> Result<()> {
    let mut w = BufWriter::new(File::create(snapshot_path(cfg, format!("N{n}_psi")))?);
    write_torus_snapshot(&mut w, &pair.psi)?;
    let mut w = BufWriter::new(File::create(snapshot_path(cfg, format!("N{n}_phi")))?);
    write_region_snapshot(&mut w, &pair.phi)?;
    Ok(())
}

fn sandwich_scan(cfg: &ExperimentConfig, zd: &ZdGreen) -> Result<Outcome> {
    let mut out = Outcome::new(SANDWICH_HEADER);
    let mut freq = Vec::new();
    for &n in &cfg.sides {
        let sampler = CouplingSampler::new(n, cfg.dim, zd)?;
        let torus_solver = KilledGreenSolver::new(&u_box(n, cfg.dim).project(&sampler.geom()))?;
        let who = purpose(COUPLING, "N", n);
        let rows: Vec<(usize, u64, f64, Vec<bool>, f64)> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(cfg.seed, &who, rep as u64);
                let pair = sampler.sample(seed)?;
                let residual = sampler.identity_residual_with(&pair, &torus_solver)?;
                let holds = cfg.h.iter().map(|&h| sandwich_holds(&pair, h, cfg.eps, cfg.delta)).collect();
                Ok((rep, seed, sup_difference(&pair, cfg.delta), holds, residual))
            })
            .collect::<Result<_>>()?;
        let worst = rows.iter().map(|r| r.4).fold(0.0, f64::max);
        out.assertions.push(Assertion::new(
            format!("coupling_identity N={n}"),
            worst < IDENTITY_TOL,
            format!("max residual {worst:e} < {IDENTITY_TOL:e}"),
        ));
        // The sandwich is implied by sup_difference <= eps.
        let implied = rows.iter().all(|r| r.2 > cfg.eps || r.3.iter().all(|&b| b));
        out.assertions.push(Assertion::new(
            format!("sup_implies_sandwich N={n}"),
            implied,
            "every replicate with sup_diff <= eps satisfies the sandwich".to_string(),
        ));
        for (k, &h) in cfg.h.iter().enumerate() {
            let hits = rows.iter().filter(|r| r.3[k]).count();
            freq.push(json!({"N": n, "h": h, "eps": cfg.eps, "frequency": hits as f64 / rows.len() as f64}));
            for (rep, seed, sup, holds, _) in &rows {
                out.table.push(vec![
                    n.into(),
                    cfg.delta.into(),
                    h.into(),
                    cfg.eps.into(),
                    (*rep).into(),
                    (*seed).into(),
                    (*sup).into(),
                    holds[k].into(),
                ]);
            }
        }
    }
    out.aggregates.insert("sandwich_frequency".into(), Value::Array(freq));
    Ok(out)
}

fn perc_scan(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new(PERC_HEADER);
    let mut levels = cfg.h.clone();
    levels.sort_by(f64::total_cmp);
    let mut summary = Vec::new();
    for &n in &cfg.sides {
        let geom = TorusGeom::new(n, cfg.dim);
        let sampler = TorusSampler::new(geom)?;
        let who = purpose("torus", "N", n);
        type Row = (usize, u64, Vec<gfflab_core::percolation::ClusterStats>, bool);
        let rows: Vec<Row> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(cfg.seed, &who, rep as u64);
                let field = sampler.sample(seed);
                if cfg.snapshots && rep == 0 {
                    let mut w = BufWriter::new(File::create(snapshot_path(cfg, format!("N{n}")))?);
                    write_torus_snapshot(&mut w, &field)?;
                }
                let masks: Vec<_> = levels.iter().map(|&h| level_set(field.values(), h)).collect();
                let stats: Vec<_> = masks
                    .iter()
                    .map(|m| cluster_stats(&label_clusters(m, Topology::Torus(geom)), geom))
                    .collect();
                let monotone = (1..levels.len()).all(|k| {
                    masks[k].is_subset_of(&masks[k - 1])
                        && stats[k].max_cluster <= stats[k - 1].max_cluster
                        && stats[k].diam_o <= stats[k - 1].diam_o
                });
                Ok((rep, seed, stats, monotone))
            })
            .collect::<Result<_>>()?;
        out.assertions.push(Assertion::new(
            format!("mask_monotonicity N={n}"),
            rows.iter().all(|r| r.3),
            "level sets, |C_max| and diam(C_o) non-increasing in h on every replicate".to_string(),
        ));
        for (k, &h) in levels.iter().enumerate() {
            let fr: Vec<f64> = rows.iter().map(|r| r.2[k].max_frac).collect();
            let mc: Vec<f64> = rows.iter().map(|r| r.2[k].max_cluster as f64).collect();
            let giant = rows.iter().filter(|r| r.2[k].giant_flag).count() as f64 / rows.len() as f64;
            summary.push(json!({
                "N": n, "h": h, "mean_max_frac": mean(&fr), "median_max_cluster": median(&mc), "giant_frequency": giant
            }));
            for (rep, seed, stats, _) in &rows {
                let s = &stats[k];
                out.table.push(vec![
                    n.into(),
                    h.into(),
                    (*rep).into(),
                    (*seed).into(),
                    s.max_cluster.into(),
                    s.max_frac.into(),
                    s.second_cluster.into(),
                    (s.diam_o as usize).into(),
                    s.giant_flag.into(),
                ]);
            }
        }
        if cfg.snapshots {
            out.snapshots.push(snapshot_path(cfg, format!("N{n}")));
        }
    }
    out.aggregates.insert("per_N_h".into(), Value::Array(summary));
    Ok(out)
}

fn ball_levels(cfg: &ExperimentConfig, n: usize, zd: &ZdGreen) -> Result<(Vec<f64>, u64)> {
    let ball = BallPercolation::new(cfg.dim, n, zd)?;
    let seed = derive_seed(cfg.seed, &purpose("ball", "n", n), 0);
    Ok((ball.levels(cfg.reps, seed)?, seed))
}

fn eta_curve(cfg: &ExperimentConfig, zd: &ZdGreen) -> Result<Outcome> {
    let mut out = Outcome::new(ETA_HEADER);
    let mut seeds = BTreeMap::new();
    for &n in &cfg.radii {
        let (levels, seed) = ball_levels(cfg, n, zd)?;
        seeds.insert(n.to_string(), seed.to_string());
        let mut grid = cfg.h.clone();
        grid.sort_by(f64::total_cmp);
        let ests: Vec<_> = grid.iter().map(|&h| eta_from_levels(&levels, n, h)).collect();
        out.assertions.push(Assertion::new(
            format!("eta_monotone n={n}"),
            ests.windows(2).all(|w| w[1].eta_hat <= w[0].eta_hat),
            "eta_hat non-increasing in h on shared samples".to_string(),
        ));
        for e in ests {
            out.table.push(vec![
                n.into(),
                e.h.into(),
                e.reps.into(),
                e.successes.into(),
                e.eta_hat.into(),
                e.ci_lo.into(),
                e.ci_hi.into(),
            ]);
        }
    }
    out.aggregates.insert("seeds".into(), json!(seeds));
    Ok(out)
}

fn hstar(cfg: &ExperimentConfig, zd: &ZdGreen) -> Result<Outcome> {
    let mut out = Outcome::new(HSTAR_HEADER);
    let mut results = Vec::new();
    for &n in &cfg.radii {
        let (levels, seed) = ball_levels(cfg, n, zd)?;
        let est = h_star_from_levels(&levels, n, cfg.bracket, cfg.tau, cfg.resolution)?;
        for (step, e) in est.steps.iter().enumerate() {
            out.table.push(vec![
                n.into(),
                cfg.tau.into(),
                step.into(),
                e.h.into(),
                e.reps.into(),
                e.successes.into(),
                e.eta_hat.into(),
                e.ci_lo.into(),
                e.ci_hi.into(),
            ]);
        }
        results.push(json!({"n": n, "seed": seed.to_string(), "h_hat": est.h_hat, "lo": est.lo, "hi": est.hi, "tau": est.tau}));
    }
    out.aggregates.insert("h_star".into(), Value::Array(results));
    Ok(out)
}

fn boundary_probe(cfg: &ExperimentConfig, zd: &ZdGreen) -> Result<Outcome> {
    let mut out = Outcome::new(PROBE_HEADER);
    let mut e1 = vec![0; cfg.dim];
    e1[0] = 1;
    let g_e1 = zd.get(&e1)?;
    for &n in &cfg.sides {
        let p = boundary_covariance_probe(n, cfg.dim, zd)?;
        out.assertions.push(Assertion::new(
            format!("seam_geometry N={n}"),
            p.torus_dist == 1 && p.lattice_dist == n as u64 - 1,
            format!("torus distance {}, lattice distance {}", p.torus_dist, p.lattice_dist),
        ));
        out.table.push(vec![
            n.into(),
            cfg.dim.into(),
            (p.torus_dist as usize).into(),
            (p.lattice_dist as usize).into(),
            p.torus_value.into(),
            p.lattice_value.into(),
            g_e1.into(),
        ]);
    }
    out.aggregates.insert("g_e1".into(), json!(g_e1));
    Ok(out)
}
