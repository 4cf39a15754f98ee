use gfflab_core::coupling::{
    boundary_covariance_probe, exact_harmonic_variance, rate_exponent, sandwich_holds, sup_difference,
    sup_harmonic_difference, CouplingSampler, HarmonicVariance, Side,
};
use gfflab_core::gff::{RegionField, TorusSampler};
use gfflab_core::green::{halfspace_exit_prob, KilledGreenSolver, ZdGreen};
use gfflab_core::lattice::{inner_box, u_box};
use gfflab_core::seed::derive_seed;
use gfflab_core::Error;
use proptest::prelude::*;
use std::sync::OnceLock;

fn zd() -> &'static ZdGreen {
    static ZD: OnceLock<ZdGreen> = OnceLock::new();
    ZD.get_or_init(|| ZdGreen::new(3).unwrap())
}

fn sampler(n: usize) -> CouplingSampler {
    CouplingSampler::new(n, 3, zd()).unwrap()
}

#[test]
fn identity_holds_on_every_sample() {
    for n in 3..=9 {
        let s = sampler(n);
        let torus_solver = KilledGreenSolver::new(&u_box(n, 3).project(&s.geom())).unwrap();
        for rep in 0..20 {
            let pair = s.sample(derive_seed(11, "identity", rep)).unwrap();
            let r = s.identity_residual_with(&pair, &torus_solver).unwrap();
            assert!(r < 1e-10, "N={n} rep={rep} residual {r:e}");
            for delta in [0.6, 0.75, 0.9] {
                let a = sup_difference(&pair, delta);
                let b = sup_harmonic_difference(&pair, delta);
                assert!((a - b).abs() < 1e-12, "N={n}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn coupling_rejects_small_torus() {
    assert!(matches!(CouplingSampler::new(2, 3, zd()), Err(Error::Precondition(_))));
}

#[test]
fn psi_is_the_uncoupled_sample() {
    let s = sampler(8);
    let plain = TorusSampler::new(s.geom()).unwrap();
    for rep in 0..5 {
        let seed = derive_seed(12, "marginal", rep);
        assert_eq!(s.sample(seed).unwrap().psi, plain.sample(seed));
    }
}

#[test]
fn phi_covariance_matches_zd_green() {
    let s = sampler(8);
    let sites: Vec<Vec<i64>> = vec![
        vec![0, 0, 0],
        vec![1, 0, 0],
        vec![2, 1, 0],
        vec![-2, -2, -2],
        vec![-3, 0, 1],
        vec![4, 1, 2],
        vec![4, -1, 2],
    ];
    let n = 20_000usize;
    let k = sites.len();
    let mut acc = vec![0.0; k * k];
    for rep in 0..n {
        let pair = s.sample(derive_seed(13, "phi-cov", rep as u64)).unwrap();
        let v: Vec<f64> = sites.iter().map(|x| pair.phi_at(x).unwrap()).collect();
        for a in 0..k {
            for b in 0..k {
                acc[a * k + b] += v[a] * v[b];
            }
        }
    }
    let g0 = zd().get(&[0, 0, 0]).unwrap();
    for a in 0..k {
        for b in 0..k {
            let diff: Vec<i64> = sites[a].iter().zip(&sites[b]).map(|(p, q)| p - q).collect();
            let c = zd().get(&diff).unwrap();
            let se = ((g0 * g0 + c * c) / n as f64).sqrt();
            let got = acc[a * k + b] / n as f64;
            assert!((got - c).abs() < 5.0 * se, "{:?} {:?}: {got} vs {c}", sites[a], sites[b]);
        }
    }
}

#[test]
fn boundary_field_independent_of_killed_part() {
    let s = sampler(6);
    let n = 20_000usize;
    let ib = [0usize, 7, 40];
    let ic = [0usize, 13, 31];
    let mut cross = [[0.0; 3]; 3];
    let mut vb = [0.0; 3];
    let mut vc = [0.0; 3];
    for rep in 0..n {
        let pair = s.sample(derive_seed(14, "indep", rep as u64)).unwrap();
        for (a, &i) in ib.iter().enumerate() {
            vb[a] += pair.beta[i] * pair.beta[i];
            for (b, &j) in ic.iter().enumerate() {
                cross[a][b] += pair.beta[i] * pair.chi[j];
            }
        }
        for (b, &j) in ic.iter().enumerate() {
            vc[b] += pair.chi[j] * pair.chi[j];
        }
    }
    let nf = n as f64;
    for a in 0..3 {
        for b in 0..3 {
            let se = ((vb[a] / nf) * (vc[b] / nf) / nf).sqrt();
            assert!((cross[a][b] / nf).abs() < 5.0 * se);
        }
    }
}

#[test]
fn empty_inner_box_gives_zero() {
    let s = sampler(4);
    assert!(inner_box(4, 3, 0.75).is_empty());
    let pair = s.sample(1).unwrap();
    assert_eq!(sup_difference(&pair, 0.75), 0.0);
    assert!(sandwich_holds(&pair, 0.0, 0.0, 0.75));
}

#[test]
fn sandwich_follows_from_sup() {
    let s = sampler(16);
    for rep in 0..20 {
        let pair = s.sample(derive_seed(15, "sandwich", rep)).unwrap();
        let sup = sup_difference(&pair, 0.75);
        for h in [-1.0, -0.3, 0.0, 0.4, 1.2] {
            assert!(sandwich_holds(&pair, h, sup, 0.75));
            assert!(sandwich_holds(&pair, h, sup + 0.5, 0.75));
        }
    }
}

#[test]
fn sandwich_with_equal_fields_and_zero_eps() {
    let s = sampler(12);
    let mut pair = s.sample(7).unwrap();
    let region = pair.phi.region_arc();
    let copied: Vec<f64> = region.sites().map(|v| pair.psi_at(v)).collect();
    pair.phi = RegionField::new(region, copied);
    assert_eq!(sup_difference(&pair, 0.75), 0.0);
    for h in [-0.5, 0.0, 0.5] {
        assert!(sandwich_holds(&pair, h, 0.0, 0.75));
    }
}

#[test]
fn sandwich_can_fail_for_small_eps() {
    let s = sampler(16);
    let pair = s.sample(3).unwrap();
    let b = inner_box(16, 3, 0.75);
    // Pick h between psi and phi at the worst site.
    let v = b
        .sites()
        .into_iter()
        .max_by(|x, y| {
            let dx = (pair.psi_at(x) - pair.phi_at(x).unwrap()).abs();
            let dy = (pair.psi_at(y) - pair.phi_at(y).unwrap()).abs();
            dx.total_cmp(&dy)
        })
        .unwrap();
    let (p, f) = (pair.psi_at(&v), pair.phi_at(&v).unwrap());
    assert!(!sandwich_holds(&pair, 0.5 * (p + f), 0.0, 0.75));
}

#[test]
fn variance_routes_agree() {
    for n in [5usize, 8] {
        let hv = HarmonicVariance::new(n, 3, zd()).unwrap();
        let sites: Vec<Vec<i64>> = hv.solver().region().sites().map(|v| v.to_vec()).step_by(5).collect();
        for x in &sites {
            for side in [Side::Lattice, Side::Torus] {
                let lit = hv.literal(x, side, zd()).unwrap();
                let closed = hv.closed_form(x, side).unwrap();
                assert!(lit >= 0.0);
                assert!((lit - closed).abs() < 1e-9, "N={n} {x:?} {side:?}: {lit} vs {closed}");
            }
        }
    }
}

#[test]
fn variance_matches_monte_carlo() {
    let n = 5;
    let hv = HarmonicVariance::new(n, 3, zd()).unwrap();
    let want_z = exact_harmonic_variance(n, 3, 0.55, &[0, 0, 0], Side::Lattice, zd()).unwrap();
    let want_t = hv.literal(&[0, 0, 0], Side::Torus, zd()).unwrap();
    let s = sampler(n);
    let o = s.solver().region().index_of(&[0, 0, 0]).unwrap();
    let reps = 100_000usize;
    let (mut sz, mut st) = (0.0, 0.0);
    for rep in 0..reps {
        let pair = s.sample(derive_seed(16, "var-mc", rep as u64)).unwrap();
        sz += pair.harm_lattice[o].powi(2);
        st += pair.harm_torus[o].powi(2);
    }
    let r = reps as f64;
    for (got, want) in [(sz / r, want_z), (st / r, want_t)] {
        let se = want * (2.0 / r).sqrt();
        assert!((got - want).abs() < 5.0 * se, "{got} vs {want}");
    }
}

#[test]
fn literal_variance_requires_inner_box() {
    let r = exact_harmonic_variance(8, 3, 0.75, &[3, 0, 0], Side::Lattice, zd());
    assert!(matches!(r, Err(Error::NotInRegion(_))));
}

#[test]
fn variance_maxima_decay() {
    let mut prev = f64::INFINITY;
    for n in [8usize, 12, 16] {
        let rep = HarmonicVariance::new(n, 3, zd()).unwrap().report(0.75).unwrap();
        assert!(rep.var_lattice.iter().all(|&v| v >= 0.0));
        assert!(rep.var_torus.iter().all(|&v| v >= 0.0));
        assert_eq!(rep.max_lattice, rep.var_lattice[rep.argmax_lattice.unwrap()]);
        assert_eq!(rep.max_torus, rep.var_torus[rep.argmax_torus.unwrap()]);
        assert!(rep.max_lattice < prev);
        prev = rep.max_lattice;
    }
    assert!((rate_exponent(3, 0.75) - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn exit_weights_obey_halfspace_chain() {
    // A walk leaving U at y on the face {x_1 = lo - 1} leaves the half-space
    // {x_1 >= lo} there too, so p^U_x(y) <= p^H_x(y), and p^H decays like
    // dist^{1-d} with the asymptotic constant of g.
    let c = zd().asymptotic_constant().unwrap();
    for n in [8usize, 16, 24, 32] {
        let ub = u_box(n, 3);
        let ib = inner_box(n, 3, 0.75);
        let solver = KilledGreenSolver::new(&ub.to_region()).unwrap();
        let face = ub.lo()[0] - 1;
        let mid = (ib.lo()[1] + ib.hi()[1]) / 2;
        for x in [ib.lo().to_vec(), vec![ib.lo()[0], mid, mid], vec![ib.lo()[0], ib.hi()[1], mid]] {
            let p = solver.exit_distribution(&x).unwrap();
            let dist = (x[0] - face) as f64;
            assert!(dist >= gfflab_core::lattice::side_power(n, 0.75) / 2.0);
            let bound = c * dist.powi(-2);
            for (k, y) in solver.boundary().sites().enumerate() {
                assert!(p[k] <= bound, "N={n} x={x:?} y={y:?}");
                if y[0] != face {
                    continue;
                }
                let shift = |v: &[i64]| -> Vec<i64> {
                    let mut w = v.to_vec();
                    w[0] -= face;
                    w
                };
                let h = halfspace_exit_prob(zd(), &shift(&x), &shift(y)).unwrap();
                assert!(p[k] <= h + 1e-14, "N={n} x={x:?} y={y:?}: {} > {h}", p[k]);
                assert!(h <= bound);
            }
        }
    }
}

#[test]
fn seam_probe_geometry_and_decay() {
    let mut prev_gap = f64::INFINITY;
    let ge1 = zd().get(&[1, 0, 0]).unwrap();
    for n in [4usize, 5, 8, 16, 32, 48] {
        let p = boundary_covariance_probe(n, 3, zd()).unwrap();
        assert_eq!(p.torus_dist, 1);
        assert_eq!(p.lattice_dist, n as u64 - 1);
        let gap = (p.torus_value - ge1).abs();
        assert!(gap < prev_gap, "N={n}");
        prev_gap = gap;
        let c = zd().asymptotic_constant().unwrap();
        if n >= 16 {
            assert!((p.lattice_value * (n - 1) as f64 / c - 1.0).abs() < 0.05);
        }
    }
    assert!(boundary_covariance_probe(48, 3, zd()).unwrap().lattice_value < 0.02);
    assert!(boundary_covariance_probe(3, 3, zd()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sup_difference_monotone_in_delta(seed in any::<u64>(), d1 in 0.51f64..0.99, d2 in 0.51f64..0.99) {
        static S: OnceLock<CouplingSampler> = OnceLock::new();
        let s = S.get_or_init(|| sampler(20));
        let pair = s.sample(seed).unwrap();
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(sup_difference(&pair, hi) <= sup_difference(&pair, lo));
    }
}
