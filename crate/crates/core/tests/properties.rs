//! Property tests for the structural invariants.

use proptest::prelude::*;

use percolab::attrition::{is_good, is_good_with_tolerance, make_good, GoodSpec, OccupancyField};
use percolab::density::{approximate_density, SiteCounts};
use percolab::kernel::StepDistribution;
use percolab::percolation::{edge_is_open, EdgeId, Site};
use percolab::LatticeConfig;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_coin_is_orientation_independent(
        x in -1000i64..1000,
        layer in -50i64..50,
        d in 1i64..8,
        vertical in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let cfg = LatticeConfig::new(8, 1.0, seed).unwrap();
        let u = Site::new(x, layer);
        let v = if vertical {
            Site::new(x, layer + 1)
        } else {
            Site::new(x + d, layer)
        };
        let e1 = EdgeId::new(u, v, cfg.n).unwrap();
        let e2 = EdgeId::new(v, u, cfg.n).unwrap();
        prop_assert_eq!(e1, e2);
        prop_assert_eq!(edge_is_open(&cfg, &e1), edge_is_open(&cfg, &e2));
    }

    #[test]
    fn pmf_is_symmetric_unit_mass(n in 1u32..12, t in 1u64..20) {
        let step = StepDistribution::new(n, 0.2).unwrap();
        let pmf = step.exact_pmf(t, 1 << 20).unwrap();
        prop_assert!((pmf.total() - 1.0).abs() < 1e-12);
        for j in 0..=pmf.half_width {
            prop_assert_eq!(pmf.prob(j), pmf.prob(-j));
        }
    }

    #[test]
    fn good_configurations_round_trip(
        a10 in -30i64..30,
        len10 in 5i64..40,
        d10 in 1i64..10,
    ) {
        let a = a10 as f64 / 10.0;
        let b = a + len10 as f64 / 10.0;
        let delta = d10 as f64 / 10.0;
        let spec = match GoodSpec::new(a, b, delta, 1024) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        let field = make_good(&spec).unwrap();
        prop_assert!(is_good(&field, &spec));
        prop_assert_eq!(field.occupied_count(), spec.total_count());
        // dropping any single site breaks exactness but not tolerance 1
        if field.occupied_count() > 0 {
            let mut sites = field.occupied().to_vec();
            sites.remove(sites.len() / 2);
            let smaller = OccupancyField::from_sites(sites);
            prop_assert!(!is_good(&smaller, &spec));
            prop_assert!(is_good_with_tolerance(&smaller, &spec, 1));
        }
    }

    #[test]
    fn density_is_additive_and_bounded(
        sites_a in proptest::collection::vec((-300i64..300, 1u64..4), 0..25),
        sites_b in proptest::collection::vec((-300i64..300, 1u64..4), 0..25),
    ) {
        let n = 16u32;
        let alpha = 0.2;
        let window = (-320, 320);
        let mut joint = sites_a.clone();
        joint.extend(sites_b.iter().copied());
        let pa = approximate_density(&sites_a, window, n, alpha);
        let pb = approximate_density(&sites_b, window, n, alpha);
        let pj = approximate_density(&joint, window, n, alpha);
        let max_count: u64 = {
            let mut m = 0u64;
            joint.for_each_site(&mut |_, c| m = m.max(c));
            m
        };
        let bound = (n as f64).powf(1.0 - alpha) * max_count.max(1) as f64;
        for i in 0..pj.values.len() {
            prop_assert!((pj.values[i] - pa.values[i] - pb.values[i]).abs() < 1e-10);
            prop_assert!(pj.values[i] >= 0.0 && pj.values[i] <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn equally_spaced_endpoints_and_count(count in 2i64..40, lo in -500i64..0, len in 1i64..1000) {
        let hi = lo + len;
        let sites = percolab::percolation::equally_spaced(count, lo, hi);
        prop_assert_eq!(sites.len() as i64, count);
        prop_assert_eq!(sites[0], lo);
        prop_assert_eq!(*sites.last().unwrap(), hi);
        for w in sites.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }
}
