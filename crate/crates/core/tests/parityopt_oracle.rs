//! Exhaustive search over integer parity allocations for small problems.
//!
//! The oracle scores allocations with its own forward recursion so it does
//! not share code with the closed forms inside the library.

use ccs_core::parityopt::{optimize_allocation, OptProblem};

/// (E[L̃_{n-1}], expected nodes) by the per-stage recursion.
fn score(l: &[usize], k: f64) -> (f64, f64) {
    let mut e = 0.0;
    let mut nodes = k; // the root stage
    for (idx, &lj) in l.iter().enumerate() {
        if idx > 0 {
            nodes += k * (1.0 + e);
        }
        e = (k * e + k - 1.0) / 2f64.powi(lj as i32);
    }
    (e, nodes)
}

fn allocations(d: usize, j: usize, budget: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; d];
    fn rec(pos: usize, left: usize, j: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for v in 0..=j.min(left) {
            cur[pos] = v;
            rec(pos + 1, left - v, j, cur, out);
        }
    }
    rec(0, budget, j, &mut cur, &mut out);
    out
}

fn brute(b: usize, n: usize, j: usize, k: u64, eps: f64) -> Option<f64> {
    allocations(n - 1, j, n * j - b)
        .iter()
        .map(|l| score(l, k as f64))
        .filter(|(e, _)| *e <= eps)
        .map(|(_, nodes)| nodes)
        .min_by(f64::total_cmp)
}

#[test]
fn oracle_scores_known_allocation() {
    let (e, nodes) = score(&[9; 10], 200.0);
    assert!((e - 0.637768).abs() < 1e-6);
    assert!((nodes - 3066.32).abs() < 0.01);
}

#[test]
fn optimizer_matches_exhaustive_search() {
    let mut cases = 0;
    for n in 2..=4usize {
        for j in 1..=6usize {
            for b in j..=n * j {
                for k in [2u64, 3, 5, 9, 20] {
                    for eps in [1e-3, 0.01, 0.05, 0.2, 0.6, 1.0, 3.0, 50.0] {
                        let prob = OptProblem::new(b, n, j, k, eps).unwrap();
                        let got = optimize_allocation(&prob).unwrap();
                        let want = brute(b, n, j, k, eps);
                        cases += 1;
                        match want {
                            None => assert!(!got.feasible, "{prob:?} should be infeasible, got {got:?}"),
                            Some(best) => {
                                assert!(got.feasible, "{prob:?} should be feasible");
                                assert_eq!(got.l.iter().sum::<usize>(), n * j - b);
                                assert!(got.l.iter().all(|&x| x <= j));
                                let (e, nodes) = score(&got.l, k as f64);
                                assert!(e <= eps);
                                assert!(
                                    (nodes - best).abs() <= 1e-9 * best.max(1.0),
                                    "{prob:?}: {nodes} vs best {best} with {:?}",
                                    got.l
                                );
                                assert!((got.objective - nodes).abs() <= 1e-9 * nodes.max(1.0));
                            }
                        }
                    }
                }
            }
        }
    }
    assert!(cases > 1000);
}
