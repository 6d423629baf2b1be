//! Exhaustive oracle for the exact surviving-path expectation.
//!
//! The oracle walks every assignment of message bits and generator bits,
//! builds the K-entry lists (one per user, repeats allowed), and counts
//! parity-consistent paths rooted at user 0 with plain bit loops. Nothing
//! from the library is used here.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Tiny {
    pub k: usize,
    pub m: Vec<usize>,
    pub l: Vec<usize>,
}

impl Tiny {
    pub fn n(&self) -> usize {
        self.m.len()
    }
    pub fn b(&self) -> usize {
        self.m.iter().sum()
    }
    pub fn gen_bits(&self) -> usize {
        (1..self.n()).map(|j| self.l[j] * self.m[..j].iter().sum::<usize>()).sum()
    }
}

fn bit(state: u64, pos: &mut usize) -> u8 {
    let b = ((state >> *pos) & 1) as u8;
    *pos += 1;
    b
}

/// Sum over all states of the number of surviving paths at every depth.
///
/// With `fix_root` the root user's message is pinned to zero. Every parity
/// check compares `Σ_ℓ (w_{i_ℓ}(ℓ) ⊕ w_{i_j}(ℓ)) G_{ℓ,j}` with zero, so adding
/// one vector to every message changes nothing and pinning loses no mass.
pub fn brute(c: &Tiny, fix_root: bool) -> (Vec<u64>, u64) {
    let (n, k) = (c.n(), c.k);
    let free_users = if fix_root { k - 1 } else { k };
    let nbits = free_users * c.b() + c.gen_bits();
    assert!(nbits <= 24, "oracle too large: {nbits} bits");
    let mut totals = vec![0u64; n];
    for state in 0..(1u64 << nbits) {
        let mut pos = 0;
        // w[u][j][r]: information bit r of sub-block j of user u.
        let mut w = vec![vec![Vec::new(); n]; k];
        for (u, wu) in w.iter_mut().enumerate() {
            for (j, wj) in wu.iter_mut().enumerate() {
                for _ in 0..c.m[j] {
                    let v = if fix_root && u == 0 { 0 } else { bit(state, &mut pos) };
                    wj.push(v);
                }
            }
        }
        // g[j][ℓ][r][c]
        let mut g = vec![Vec::new(); n];
        for (j, gj) in g.iter_mut().enumerate().skip(1) {
            for ell in 0..j {
                let mut block = vec![vec![0u8; c.l[j]]; c.m[ell]];
                for row in block.iter_mut() {
                    for x in row.iter_mut() {
                        *x = bit(state, &mut pos);
                    }
                }
                gj.push(block);
            }
        }
        // Stage-j parity computed from the info blocks of users src(0), src(1), ...
        let parity = |j: usize, src: &dyn Fn(usize) -> usize| -> Vec<u8> {
            let mut p = vec![0u8; c.l[j]];
            for ell in 0..j {
                let info = &w[src(ell)][ell];
                for (r, &bitv) in info.iter().enumerate() {
                    if bitv == 1 {
                        for (col, pc) in p.iter_mut().enumerate() {
                            *pc ^= g[j][ell][r][col];
                        }
                    }
                }
            }
            p
        };
        // Enumerate index sequences (0, i1, ..., i_{n-1}).
        let mut path = vec![0usize; n];
        fn rec(
            depth: usize,
            path: &mut Vec<usize>,
            n: usize,
            k: usize,
            ok: &dyn Fn(&[usize], usize) -> bool,
            totals: &mut [u64],
        ) {
            totals[depth] += 1;
            if depth + 1 == n {
                return;
            }
            for i in 0..k {
                path[depth + 1] = i;
                if ok(path, depth + 1) {
                    rec(depth + 1, path, n, k, ok, totals);
                }
            }
        }
        let ok = |p: &[usize], j: usize| -> bool {
            let candidate = parity(j, &|ell| p[ell]);
            let own = parity(j, &|_| p[j]);
            candidate == own
        };
        rec(0, &mut path, n, k, &ok, &mut totals);
    }
    (totals, 1u64 << nbits)
}

pub fn brute_expectations(c: &Tiny, fix_root: bool) -> Vec<BigRational> {
    let (totals, states) = brute(c, fix_root);
    totals[1..]
        .iter()
        .map(|&t| BigRational::new(BigInt::from(t), BigInt::from(states)) - BigRational::from_integer(1.into()))
        .collect()
}

pub fn configs() -> Vec<Tiny> {
    let mut out = vec![Tiny { k: 3, m: vec![3, 2, 2], l: vec![0, 1, 1] }];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    while out.len() < 24 {
        let n = rng.random_range(2..=4);
        let j = rng.random_range(1..=4);
        let k = rng.random_range(1..=4);
        let mut l = vec![0];
        for _ in 1..n {
            l.push(rng.random_range(0..=j));
        }
        let m: Vec<usize> = l.iter().map(|&x| j - x).collect();
        let c = Tiny { k, m, l };
        if c.b() + c.gen_bits() <= 16 && (k - 1) * c.b() + c.gen_bits() <= 20 {
            out.push(c);
        }
    }
    out
}
