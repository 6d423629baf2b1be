//! Exact expected number of erroneous surviving paths.
//!
//! A candidate path picks one list entry per stage; what matters is which
//! entries come from the same user. A j-pattern is the canonical labelling of
//! that structure: `s(0) = 1` and each later entry either reuses an earlier
//! label or takes its own position plus one as a fresh label.
//!
//! Parity block `q` of a path is trivially satisfied (non-discriminating)
//! when the path's information fragments before `q` agree with those of user
//! `s(q)` wherever they come from another user. Otherwise its `l_q` bits
//! behave like fair coins under the random generator.

use crate::error::{CcsError, Result};
use crate::scalar::Scalar;
use num_traits::pow;
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatternSeq(Vec<u32>);

impl PatternSeq {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        if entries.first() != Some(&1) {
            return Err(CcsError::Domain("a pattern starts with 1".into()));
        }
        for (pos, &e) in entries.iter().enumerate().skip(1) {
            if e as usize != pos + 1 && !entries[..pos].contains(&e) {
                return Err(CcsError::Domain(format!("entry {e} at position {pos} is neither new nor a repeat")));
            }
        }
        Ok(PatternSeq(entries))
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of distinct users, d(s).
    pub fn distinct(&self) -> usize {
        self.0.iter().enumerate().filter(|&(i, &e)| e as usize == i + 1).count()
    }
}

/// Depth-first, each sequence extended by its existing labels in increasing
/// order and then by a fresh label.
pub struct PatternIter {
    target: usize,
    stack: Vec<Vec<u32>>,
}

impl Iterator for PatternIter {
    type Item = PatternSeq;

    fn next(&mut self) -> Option<PatternSeq> {
        while let Some(s) = self.stack.pop() {
            if s.len() == self.target {
                return Some(PatternSeq(s));
            }
            let mut labels: Vec<u32> = s.clone();
            labels.sort_unstable();
            labels.dedup();
            let fresh = s.len() as u32 + 1;
            // Pushed in reverse so the smallest extension pops first.
            let mut ext = s.clone();
            ext.push(fresh);
            self.stack.push(ext);
            for &a in labels.iter().rev() {
                let mut ext = s.clone();
                ext.push(a);
                self.stack.push(ext);
            }
        }
        None
    }
}

pub fn enumerate_patterns(j: usize) -> PatternIter {
    let stack = if j == 0 { Vec::new() } else { vec![vec![1]] };
    PatternIter { target: j, stack }
}

/// Bell number B_j by the Bell triangle.
pub fn bell(j: usize) -> u128 {
    let mut row = vec![1u128];
    for _ in 0..j {
        let mut next = vec![*row.last().unwrap()];
        for x in &row {
            let v = next.last().unwrap() + x;
            next.push(v);
        }
        row = next;
    }
    row[0]
}

/// Stirling numbers of the second kind, `S(j,k) = k S(j-1,k) + S(j-1,k-1)`.
pub fn stirling2(j: usize, k: usize) -> u128 {
    let mut row = vec![1u128]; // S(0, 0)
    for i in 1..=j {
        let mut next = vec![0u128; i + 1];
        for kk in 1..=i {
            let keep = if kk < row.len() { kk as u128 * row[kk] } else { 0 };
            next[kk] = keep + row[kk - 1];
        }
        row = next;
    }
    row.get(k).copied().unwrap_or(0)
}

/// Number of index sequences in the class of `s`: `(K-1)(K-2)…(K-d+1)`.
pub fn class_size(s: &PatternSeq, k: u64) -> Result<u128> {
    let d = s.distinct();
    if (k as u128) < d as u128 {
        return Err(CcsError::InfeasibleListSize { k, d });
    }
    Ok((1..d as u64).map(|i| (k - i) as u128).product())
}

/// `Σ m_t` over positions `t < q` whose label differs from `s(q)`.
fn foreign_bits(s: &[u32], m: &[usize], q: usize) -> i64 {
    (0..q).filter(|&t| s[t] != s[q]).map(|t| m[t] as i64).sum()
}

/// Probability that exactly the parity blocks in `subset` (stage indices in
/// `1..j`) are discriminating for pattern `s`, all others not.
///
/// Non-discriminating blocks are chained through the latest earlier
/// non-discriminating block of the same user. A discriminating block is
/// impossible when a later block of the same user is non-discriminating, and
/// certain when an earlier one already is discriminating.
pub fn event_probability<T: Scalar>(s: &PatternSeq, subset: &[usize], m: &[usize]) -> T {
    let s = s.entries();
    let j = s.len();
    assert!(m.len() >= j, "m has {} entries, pattern needs {j}", m.len());
    let in_s = |q: usize| subset.contains(&q);
    let comp: Vec<usize> = (1..j).filter(|&q| !in_s(q)).collect();
    let chained = |q: usize| -> T {
        let prev = comp.iter().copied().filter(|&k| k < q && s[k] == s[q]).max();
        let sub = prev.map_or(0, |p| foreign_bits(s, m, p));
        T::pow2(sub - foreign_bits(s, m, q))
    };
    let mut prob = T::one();
    for &q in &comp {
        prob = prob * chained(q);
    }
    for q in (1..j).filter(|&q| in_s(q)) {
        let later_nd = comp.iter().any(|&k| k > q && s[k] == s[q]);
        let earlier_d = subset.iter().any(|&k| k < q && s[k] == s[q]);
        let stay_nd = match (later_nd, earlier_d) {
            (true, true) => return T::zero(),
            (true, false) => T::one(),
            (false, true) => T::zero(),
            (false, false) => chained(q),
        };
        prob = prob * (T::one() - stay_nd);
    }
    prob
}

/// Distribution of the number of discriminating parity bits.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePgf<T> {
    masses: BTreeMap<u64, T>,
}

impl<T: Scalar> SparsePgf<T> {
    pub fn new() -> Self {
        SparsePgf { masses: BTreeMap::new() }
    }

    pub fn add(&mut self, exponent: u64, mass: T) {
        let slot = self.masses.entry(exponent).or_insert_with(T::zero);
        *slot = slot.clone() + mass;
    }

    pub fn mass(&self, exponent: u64) -> T {
        self.masses.get(&exponent).cloned().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &T)> {
        self.masses.iter().map(|(&e, m)| (e, m))
    }

    pub fn total_mass(&self) -> T {
        self.masses.values().fold(T::zero(), |a, m| a + m.clone())
    }

    pub fn eval(&self, x: T) -> T {
        self.masses.iter().fold(T::zero(), |a, (&e, m)| a + m.clone() * pow(x.clone(), e as usize))
    }

    /// `Φ(1/2)`, with exact powers of two.
    pub fn eval_half(&self) -> T {
        self.masses.iter().fold(T::zero(), |a, (&e, m)| a + m.clone() * T::pow2(-(e as i64)))
    }
}

impl<T: Scalar> Default for SparsePgf<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// `Φ_s(x) = Σ_S Pr(E_{s,S}) x^{Σ_{q∈S} l_q}` over all subsets of `1..j`.
pub fn pattern_pgf<T: Scalar>(s: &PatternSeq, m: &[usize], l: &[usize]) -> SparsePgf<T> {
    let j = s.len();
    assert!(m.len() >= j && l.len() >= j, "profile shorter than pattern");
    assert!(j <= 40, "pattern too long for subset enumeration");
    let mut pgf = SparsePgf::new();
    let stages = j.saturating_sub(1);
    for mask in 0u64..(1u64 << stages) {
        let subset: Vec<usize> = (1..j).filter(|&q| mask >> (q - 1) & 1 == 1).collect();
        let p: T = event_probability(s, &subset, m);
        if p != T::zero() {
            let e = subset.iter().map(|&q| l[q] as u64).sum();
            pgf.add(e, p);
        }
    }
    pgf
}

/// `Φ_s(1/2)` from the per-user factorization.
///
/// Blocks owned by different users involve disjoint fragment comparisons and
/// are independent; a user's blocks are non-discriminating on a prefix of its
/// stages. Appending stage `q` to user `a` updates its factor as
/// `F ← (F − P) 2^{-l_q} + P` with `P = 2^{-e}`, `e` the foreign bits of `q`.
pub fn pattern_phi_half<T: Scalar>(s: &PatternSeq, m: &[usize], l: &[usize]) -> T {
    let mut st = DfsState::<T>::new(m, l, s.len());
    for (q, &a) in s.entries().iter().enumerate().skip(1) {
        st.push(q, a);
    }
    st.phi()
}

struct DfsState<'a, T> {
    m: &'a [usize],
    l: &'a [usize],
    labels: Vec<u32>,
    // Indexed by label - 1.
    own: Vec<i64>,
    factor: Vec<T>,
    prefix: i64,
    distinct: usize,
}

impl<'a, T: Scalar> DfsState<'a, T> {
    fn new(m: &'a [usize], l: &'a [usize], cap: usize) -> Self {
        let mut own = vec![0; cap.max(1)];
        own[0] = m[0] as i64;
        let mut factor = vec![T::one(); cap.max(1)];
        factor[0] = T::one();
        DfsState { m, l, labels: vec![1], own, factor, prefix: m[0] as i64, distinct: 1 }
    }

    /// Appends label `a` at position `q`; returns what [`pop`] needs.
    fn push(&mut self, q: usize, a: u32) -> T {
        let i = a as usize - 1;
        if a as usize == q + 1 {
            self.distinct += 1;
            self.own[i] = 0;
            self.factor[i] = T::one();
        }
        let old = self.factor[i].clone();
        let p = T::pow2(self.own[i] - self.prefix);
        self.factor[i] = (old.clone() - p.clone()) * T::pow2(-(self.l[q] as i64)) + p;
        self.own[i] += self.m[q] as i64;
        self.prefix += self.m[q] as i64;
        self.labels.push(a);
        old
    }

    fn pop(&mut self, q: usize, a: u32, old: T) {
        let i = a as usize - 1;
        self.labels.pop();
        self.prefix -= self.m[q] as i64;
        self.own[i] -= self.m[q] as i64;
        self.factor[i] = old;
        if a as usize == q + 1 {
            self.distinct -= 1;
        }
    }

    fn phi(&self) -> T {
        self.labels
            .iter()
            .enumerate()
            .filter(|&(i, &a)| a as usize == i + 1)
            .fold(T::one(), |acc, (i, _)| acc * self.factor[i].clone())
    }
}

fn class_weights<T: Scalar>(k: u64, max_d: usize) -> Vec<T> {
    // weights[d] = (K-1)…(K-d+1); zero once d exceeds K.
    let mut w = vec![T::zero(); max_d + 1];
    let mut acc = T::one();
    for (d, slot) in w.iter_mut().enumerate().skip(1) {
        if d as u64 > k {
            break;
        }
        if d > 1 {
            acc = acc * T::from_u64_lossy(k - (d as u64 - 1));
        }
        *slot = acc.clone();
    }
    w
}

fn dfs<T: Scalar>(st: &mut DfsState<'_, T>, target: usize, k: u64, weights: &[T], sums: &mut [T]) {
    let len = st.labels.len();
    let w = &weights[st.distinct];
    sums[len - 1] = sums[len - 1].clone() + w.clone() * st.phi();
    if len == target {
        return;
    }
    let q = len;
    let mut seen = 0u64;
    for t in 0..len {
        let a = st.labels[t];
        if a as usize == t + 1 {
            seen += 1;
            let old = st.push(q, a);
            dfs(st, target, k, weights, sums);
            st.pop(q, a, old);
        }
    }
    debug_assert_eq!(seen as usize, st.distinct);
    if (st.distinct as u64) < k {
        let a = q as u32 + 1;
        let old = st.push(q, a);
        dfs(st, target, k, weights, sums);
        st.pop(q, a, old);
    }
}

/// `E[L_1], …, E[L_{n-1}]` for list size `K` and profile `(m, l)`.
///
/// Patterns using more than K distinct users have no realization and are
/// skipped. The pattern tree is split at a fixed depth and the branches are
/// summed in enumeration order, so the result does not depend on the thread
/// count.
pub fn expected_surviving_exact_all<T: Scalar>(k: u64, m: &[usize], l: &[usize]) -> Result<Vec<T>> {
    if k == 0 {
        return Err(CcsError::Domain("list size K must be at least 1".into()));
    }
    if m.len() != l.len() || m.is_empty() {
        return Err(CcsError::DimensionMismatch { expected: m.len(), got: l.len() });
    }
    let n = m.len();
    let weights = class_weights::<T>(k, n);

    // Frontier of prefixes at the split depth, with sums above it done inline.
    let split = n.min(4);
    let mut sums = vec![T::zero(); n];
    let mut frontier = Vec::new();
    {
        let mut st = DfsState::<T>::new(m, l, n);
        collect_frontier(&mut st, split, k, &weights, &mut sums, &mut frontier);
    }
    let branch_sums: Vec<Vec<T>> = frontier
        .par_iter()
        .map(|labels: &Vec<u32>| {
            let mut st = DfsState::<T>::new(m, l, n);
            for (q, &a) in labels.iter().enumerate().skip(1) {
                st.push(q, a);
            }
            let mut local = vec![T::zero(); n];
            dfs(&mut st, n, k, &weights, &mut local);
            local
        })
        .collect();
    for b in branch_sums {
        for (s, x) in sums.iter_mut().zip(b) {
            *s = s.clone() + x;
        }
    }
    Ok(sums.into_iter().skip(1).map(|s| s - T::one()).collect())
}

fn collect_frontier<T: Scalar>(
    st: &mut DfsState<'_, T>,
    split: usize,
    k: u64,
    weights: &[T],
    sums: &mut [T],
    out: &mut Vec<Vec<u32>>,
) {
    let len = st.labels.len();
    if len == split {
        out.push(st.labels.clone());
        return;
    }
    sums[len - 1] = sums[len - 1].clone() + weights[st.distinct].clone() * st.phi();
    let q = len;
    let mut labels: Vec<u32> = st.labels.clone();
    labels.sort_unstable();
    labels.dedup();
    for a in labels {
        let old = st.push(q, a);
        collect_frontier(st, split, k, weights, sums, out);
        st.pop(q, a, old);
    }
    if (st.distinct as u64) < k {
        let a = q as u32 + 1;
        let old = st.push(q, a);
        collect_frontier(st, split, k, weights, sums, out);
        st.pop(q, a, old);
    }
}

/// `E[L_{j-1}] = Σ_{s∈P_j} n(s) Φ_s(1/2) − 1` for `1 <= j <= n`.
pub fn expected_surviving_exact<T: Scalar>(k: u64, m: &[usize], l: &[usize], j: usize) -> Result<T> {
    if j == 0 || j > m.len() {
        return Err(CcsError::StageOutOfRange { stage: j, max: m.len() });
    }
    if j == 1 {
        return Ok(T::zero());
    }
    let all = expected_surviving_exact_all::<T>(k, &m[..j], &l[..j])?;
    Ok(all[j - 2].clone())
}
