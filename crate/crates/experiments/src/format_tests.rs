use crate::config::{ExperimentConfig, Kind};
use crate::table::{Cell, CsvData, Table};
use proptest::prelude::*;

#[test]
fn defaults_round_trip_for_every_kind() {
    for kind in Kind::ALL {
        let c = ExperimentConfig::defaults(kind);
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::parse(&c.render(), None).unwrap(), c, "{kind}");
        assert_eq!(kind.name().parse::<Kind>().unwrap(), kind);
    }
}

#[test]
fn parse_rejects_malformed_lines() {
    assert!(ExperimentConfig::parse("kind=hstar\nnot a pair\n", None).is_err());
    assert!(ExperimentConfig::parse("N=4\n", None).is_err(), "kind is required");
    assert!(ExperimentConfig::parse("kind=unknown\n", None).is_err());
    assert!(ExperimentConfig::parse("kind=hstar\nbracket=1\n", None).is_err());
    let c = ExperimentConfig::parse("  # comment\nN = 5,6  # trailing\n", Some(Kind::PercScan)).unwrap();
    assert_eq!(c.sides, [5, 6]);
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        proptest::sample::select(Kind::ALL.to_vec()),
        proptest::collection::vec(1usize..200, 0..4),
        3usize..6,
        any::<f64>(),
        proptest::collection::vec(-1e3f64..1e3, 0..6),
        (any::<u64>(), 1usize..10_000, any::<bool>()),
        (-10f64..10.0, -10f64..10.0, 0f64..1.0, 1e-9f64..1.0),
        proptest::collection::vec(1usize..40, 0..3),
    )
        .prop_map(|(kind, sides, dim, delta, h, (seed, reps, snapshots), (lo, hi, tau, res), radii)| {
            let mut c = ExperimentConfig::defaults(kind);
            c.sides = sides;
            c.dim = dim;
            c.delta = delta;
            c.h = h;
            c.seed = seed;
            c.reps = reps;
            c.snapshots = snapshots;
            c.bracket = (lo, hi);
            c.tau = tau;
            c.resolution = res;
            c.radii = radii;
            c
        })
}

proptest! {
    #[test]
    fn config_text_form_is_lossless(c in arb_config()) {
        prop_assume!(!c.delta.is_nan());
        let back = ExperimentConfig::parse(&c.render(), None).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn csv_floats_round_trip_exactly(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..50)) {
        const HEADER: &[&str] = &["i", "x"];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(HEADER);
        for (i, &v) in values.iter().enumerate() {
            t.push(vec![Cell::from(i), Cell::from(v)]);
        }
        t.write_csv(&path).unwrap();
        let back = CsvData::read(&path).unwrap();
        let xs = back.f64s("x");
        prop_assert_eq!(xs.len(), values.len());
        for (a, b) in xs.iter().zip(&values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn canonical_sort_ignores_insertion_order(mut rows in proptest::collection::vec((0usize..5, -3f64..3.0, 0u64..4), 0..30)) {
        const HEADER: &[&str] = &["a", "b", "c"];
        let build = |rows: &[(usize, f64, u64)]| {
            let mut t = Table::new(HEADER);
            for &(a, b, c) in rows {
                t.push(vec![a.into(), b.into(), c.into()]);
            }
            t.sort();
            t
        };
        let first = build(&rows);
        rows.reverse();
        prop_assert_eq!(build(&rows), first);
    }
}

#[test]
fn floats_use_seventeen_significant_digits() {
    assert_eq!(Cell::from(0.1).render(), "1.0000000000000001e-1");
    assert_eq!(Cell::from(-2.5).render(), "-2.5000000000000000e0");
    assert_eq!(Cell::Empty.render(), "");
    assert_eq!(Cell::from(u64::MAX).render(), "18446744073709551615");
}
