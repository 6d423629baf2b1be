//! Cross-module invariants under random inputs.

use ccs_core::analysis::approx::{expected_surviving_approx, AllocationSpec};
use ccs_core::channel::{ebn0_db, es_for_ebn0};
use ccs_core::cs::{build_sensing_matrix, nnls, read_matrix, top_k, write_matrix, MatrixKind, NnlsOptions};
use ccs_core::parityopt::{evaluate_allocation, optimize_allocation, OptProblem};
use ccs_core::rng::seeded;
use ccs_core::sim::wilson_interval;
use ccs_core::treecode::{tree_decode, Message, ParityProfile, TreeCodebook};
use ccs_core::SensingMatrix64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With every fragment listed, every sent message comes back unless its
    /// root is ambiguous.
    #[test]
    fn listed_messages_decode(seed in any::<u64>(), users in 1usize..8, tail in proptest::collection::vec(0usize..=10, 1..5)) {
        let mut rng = seeded(seed);
        let profile = ParityProfile::from_parity(10, &tail).unwrap();
        let code = TreeCodebook::sample(profile.clone(), &mut rng);
        let msgs: Vec<Message> = (0..users).map(|_| Message::random(profile.b(), &mut rng)).collect();
        let frags: Vec<Vec<u64>> = msgs.iter().map(|w| code.encode_fragments(w).unwrap()).collect();
        let lists: Vec<Vec<u64>> = (0..profile.n()).map(|s| frags.iter().map(|f| f[s]).collect()).collect();
        let out = tree_decode(&lists, &code).unwrap();
        for (u, w) in msgs.iter().enumerate() {
            if out.root_survivors[u] == 1 {
                prop_assert!(out.messages.contains(w));
            }
            prop_assert!(out.root_survivors[u] >= 1);
        }
    }

    #[test]
    fn matrix_file_round_trips(seed in any::<u64>(), j in 1u32..7, rows in 1usize..40, es in 0.01f64..10.0) {
        let a: SensingMatrix64 = build_sensing_matrix(MatrixKind::Gaussian, j, rows, es, &mut seeded(seed)).unwrap();
        let mut buf = Vec::new();
        write_matrix(&a, &mut buf).unwrap();
        let b: SensingMatrix64 = read_matrix(buf.as_slice()).unwrap();
        prop_assert_eq!((b.rows(), b.cols()), (a.rows(), a.cols()));
        for c in 0..a.cols() {
            let narrowed: Vec<f64> = a.column(c).iter().map(|&v| v as f32 as f64).collect();
            prop_assert_eq!(narrowed.as_slice(), b.column(c));
        }
    }

    #[test]
    fn nnls_is_feasible_and_descends(seed in any::<u64>(), rows in 4usize..30) {
        let mut rng = seeded(seed);
        let a: SensingMatrix64 = build_sensing_matrix(MatrixKind::Antipodal, 5, rows, 1.0, &mut rng).unwrap();
        let y: Vec<f64> = (0..rows).map(|i| ((seed >> (i % 60)) & 7) as f64 - 3.0).collect();
        let r = nnls(&a, &y, NnlsOptions::default()).unwrap();
        prop_assert!(r.x.iter().all(|&v| v >= 0.0));
        prop_assert!(r.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn top_k_keeps_the_largest(x in proptest::collection::vec(-5.0f64..5.0, 0..40), k in 0usize..50) {
        let idx = top_k(&x, k);
        prop_assert_eq!(idx.len(), k.min(x.len()));
        let kept: std::collections::HashSet<usize> = idx.iter().copied().collect();
        if let Some(&floor) = idx.last().map(|i| &x[*i]) {
            for (i, &v) in x.iter().enumerate() {
                if !kept.contains(&i) {
                    prop_assert!(v <= floor);
                }
            }
        }
    }

    #[test]
    fn ebn0_conversion_inverts(db in -10.0f64..30.0, n in 1usize..100_000, b in 1usize..200) {
        let es = es_for_ebn0(db, n, b).unwrap();
        prop_assert!((ebn0_db(es, n, b).unwrap() - db).abs() < 1e-9);
    }

    #[test]
    fn wilson_contains_the_estimate(n in 1u64..5000, frac in 0.0f64..=1.0) {
        let hits = (frac * n as f64).round() as u64;
        let (lo, hi) = wilson_interval(hits, n);
        let p = hits as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    /// The optimizer's answer is integral, spends the budget exactly, and
    /// agrees with the evaluator.
    #[test]
    fn optimizer_output_is_consistent(n in 2usize..8, j in 4usize..12, k in 2u64..60, eps in 0.001f64..2.0, spare in 0usize..40) {
        let budget = spare % ((n - 1) * j + 1);
        let b = n * j - budget;
        let prob = OptProblem::new(b, n, j, k, eps).unwrap();
        let out = optimize_allocation(&prob).unwrap();
        prop_assert_eq!(out.l.len(), n - 1);
        prop_assert_eq!(out.l.iter().sum::<usize>(), budget);
        prop_assert!(out.l.iter().all(|&x| x <= j));
        let ev = evaluate_allocation(&out.l, k, eps, Some(budget));
        prop_assert!((ev.nodes - out.objective).abs() <= 1e-9 * out.objective.max(1.0));
        prop_assert_eq!(ev.feasible, out.feasible);
        let e = expected_surviving_approx::<f64>(&AllocationSpec::new(k, out.l.clone()));
        prop_assert!((e.last().copied().unwrap_or(0.0) - out.e_last).abs() <= 1e-12);
    }
}
