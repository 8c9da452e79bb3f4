use assim_core::adaptivity::{mark, ErrorIndicators, Strategy};
use assim_core::assimilation::project_box;
use assim_core::{SpaceTimeField, SpatialMesh, TimeGrid};
use proptest::prelude::*;

fn sum_of(v: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| v[i]).sum()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn doerfler_marks_are_sufficient_and_minimal(
        values in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..10.0], 1..40),
        theta in 0.01f64..0.99,
    ) {
        let ind = ErrorIndicators::from_values(values.clone()).unwrap();
        let marked = mark(&ind, Strategy::Doerfler(theta));
        if ind.total == 0.0 {
            prop_assert!(marked.is_empty());
        } else {
            prop_assert!(sum_of(&values, &marked) >= theta * ind.total);
            // no set of |M| - 1 intervals reaches the goal: the largest such set
            // is the top |M| - 1 values
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let best_smaller: f64 = sorted[..marked.len() - 1].iter().sum();
            prop_assert!(best_smaller < theta * ind.total);
            prop_assert!(marked.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_exact(
        g in prop::collection::vec(-5.0f64..5.0, 1..30),
        lo in -2.0f64..0.0,
        width in 0.0f64..3.0,
    ) {
        let n = g.len();
        let lower = vec![lo; n];
        let upper = vec![lo + width; n];
        let once = project_box(&g, &lower, &upper).unwrap();
        prop_assert_eq!(&project_box(&once, &lower, &upper).unwrap(), &once);
        for (k, (&v, &c)) in g.iter().zip(&once).enumerate() {
            let expect = if v < lower[k] { lower[k] } else if v > upper[k] { upper[k] } else { v };
            prop_assert_eq!(c, expect);
        }
    }

    #[test]
    fn bisection_keeps_nodes_and_length(
        cuts in prop::collection::vec(0.01f64..1.0, 1..12),
        pick in prop::collection::vec(any::<bool>(), 12),
    ) {
        let mut taus = vec![0.0];
        let total: f64 = cuts.iter().sum();
        let mut acc = 0.0;
        for c in &cuts {
            acc += c;
            taus.push(acc / total);
        }
        *taus.last_mut().unwrap() = 1.0;
        let g = TimeGrid::from_nodes(taus).unwrap();
        let marks: Vec<usize> = (0..g.intervals()).filter(|&i| pick[i]).collect();
        let r = g.bisect(&marks).unwrap();
        prop_assert_eq!(r.intervals(), g.intervals() + marks.len());
        prop_assert!(g.taus().iter().all(|t| r.taus().contains(t)));
        let len: f64 = r.deltas().iter().sum();
        prop_assert!((len - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn interpolation_reproduces_coarse_piecewise_linears(
        vals in prop::collection::vec(-1.0f64..1.0, 20),
        extra in 1usize..4,
    ) {
        let tg = TimeGrid::from_nodes(vec![0.0, 0.3, 0.5, 1.0]).unwrap();
        let sm = SpatialMesh::unit(4).unwrap();
        let coarse = SpaceTimeField::from_values(&tg, &sm, vals).unwrap();
        let mut fine_t = tg.clone();
        for _ in 0..extra {
            fine_t = fine_t.bisect(&[0, fine_t.intervals() - 1]).unwrap();
        }
        let fine_s = SpatialMesh::unit(4 * extra).unwrap();
        let fine = coarse.interpolate(&fine_t, &fine_s).unwrap();
        let back = fine.interpolate(&tg, &sm).unwrap();
        for (a, b) in back.values().iter().zip(coarse.values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
