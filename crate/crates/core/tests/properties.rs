//! Invariants over random seeds and parameters.

use proptest::prelude::*;

use exwalk::branching::{binomial_cdf, chernoff_bound};
use exwalk::exceptional::{run_exceptional, verify_structure, StopRule};
use exwalk::greedy::{run_greedy_path, unroll};
use exwalk::lattice::{BoundingBox, FiniteSubgraph, Site, SubgraphOracle};
use exwalk::oracles::{srw_dp, transition_dp};
use exwalk::report::{emit_report, parse_report, ExperimentReport, ReportRow};
use exwalk::stream::{LetterStream, StreamSeed};
use exwalk::walk::run_induced_from;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn letter_streams_are_reproducible(m in any::<u64>(), s in any::<u64>(), d in 1usize..=6) {
        let a: Vec<u8> = LetterStream::new(StreamSeed::new(m, s), d).take(200).map(|l| l.code()).collect();
        let b: Vec<u8> = LetterStream::new(StreamSeed::new(m, s), d).take(200).map(|l| l.code()).collect();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|&c| (c as usize) < 2 * d));
    }

    #[test]
    fn induced_walk_stays_in_its_component(mask in 0u64..4096, seed in any::<u64>()) {
        let bbox = BoundingBox::cube(2, 1).unwrap();
        let g = FiniteSubgraph::from_mask(bbox, mask);
        let origin = Site::xy(0, 0);
        let comp = g.distances_from(&origin);
        let mut oracle = SubgraphOracle::ExplicitFinite(g.clone());
        let mut stream = LetterStream::new(StreamSeed::new(seed, 0), 2);
        let tr = run_induced_from(&mut stream, &mut oracle, origin, 300).unwrap();
        let mut prev = origin;
        for e in tr.entries() {
            prop_assert!(comp[g.bbox().index_of(&e.pos_after).unwrap()].is_some());
            prop_assert_eq!(e.accepted, e.pos_after != prev);
            prev = e.pos_after;
        }
    }

    #[test]
    fn dp_conserves_mass(mask in 0u64..4096, t in 0u64..30) {
        let g = FiniteSubgraph::from_mask(BoundingBox::cube(2, 1).unwrap(), mask);
        for rows in [transition_dp(&g, &Site::xy(0, 0), t).unwrap(), srw_dp(&g, &Site::xy(0, 0), t).unwrap()] {
            for row in rows {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn chernoff_bound_dominates(n in 0u64..60, a in 1u32..100, b in 1u32..100) {
        let p = a as f64 / 100.0;
        let eps = b as f64 / 100.0;
        let k = (n as f64 * p * (1.0 - eps)).floor() as u64;
        prop_assert!(binomial_cdf(n, p, k) <= chernoff_bound(n, p, eps).unwrap() + 1e-15);
    }

    #[test]
    fn report_rows_round_trip(est in any::<f64>(), lo in any::<f64>(), trials in any::<u64>(), m in any::<u64>(), s in any::<u64>()) {
        let row = ReportRow {
            name: "p".into(), param: "n=1".into(), trials, estimate: est, ci_lo: lo, ci_hi: 0.5,
            censored: 1, seed: StreamSeed::new(m, s), z: f64::NAN,
        };
        let mut buf = Vec::new();
        emit_report(&ExperimentReport::single(row.clone()), &mut buf).unwrap();
        let back = parse_report(std::str::from_utf8(&buf).unwrap()).unwrap();
        let b = &back.rows[0];
        prop_assert!(b.estimate.to_bits() == est.to_bits() || (est.is_nan() && b.estimate.is_nan()));
        prop_assert!(b.ci_lo.to_bits() == lo.to_bits() || (lo.is_nan() && b.ci_lo.is_nan()));
        prop_assert_eq!(b.seed, row.seed);
        prop_assert_eq!(b.trials, trials);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exceptional_structure_holds(seed in any::<u64>()) {
        let (_, env) = run_exceptional(StreamSeed::new(seed, 0), StopRule::stage_capped(4, 500_000)).unwrap();
        let rep = verify_structure(&env.finalized_subgraph().unwrap(), env.stage()).unwrap();
        prop_assert!(rep.problems.is_empty(), "{:?}", rep.problems);
        for (k, rows) in rep.connecting.iter().enumerate() {
            prop_assert_eq!(rows.len(), 1);
            prop_assert_eq!(rep.left_edges_at_next_line[k], 1);
        }
    }

    #[test]
    fn greedy_path_is_north_east_and_unrolls(seed in any::<u64>()) {
        let (path, tr) = run_greedy_path(StreamSeed::new(seed, 0), 3000).unwrap();
        prop_assert!(path.is_north_east());
        let u = unroll(&path, &tr).unwrap();
        prop_assert_eq!(u.positions.len(), tr.len() + 1);
        prop_assert!(u.positions.windows(2).all(|w| (w[1] - w[0]).abs() <= 1));
        let (a, b) = path.range();
        prop_assert!(u.range.0 >= a && u.range.1 <= b);
    }
}
