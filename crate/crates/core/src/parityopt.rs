//! Parity-length allocation.
//!
//! With `x_j = l_j` both the expected node count and `E[L̃_{n-1}]` are sums
//! of terms `c·2^{-(x_q + ... + x_j)}`, so the relaxed problem is convex. It
//! is solved with a log-barrier Newton method on the budget hyperplane, then
//! rounded, repaired and polished by integer local search.

use crate::analysis::approx::{expected_complexity_nodes, expected_surviving_approx, AllocationSpec};
use crate::error::{CcsError, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptProblem {
    pub b: usize,
    pub n: usize,
    pub j: usize,
    pub k: u64,
    pub eps_tree: f64,
}

impl OptProblem {
    pub fn new(b: usize, n: usize, j: usize, k: u64, eps_tree: f64) -> Result<Self> {
        let p = OptProblem { b, n, j, k, eps_tree };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.j == 0 || self.k == 0 {
            return Err(CcsError::InvalidProfile(format!(
                "n={}, J={}, K={} must all be positive",
                self.n, self.j, self.k
            )));
        }
        if self.n * self.j < self.b {
            return Err(CcsError::InvalidProfile(format!("B={} exceeds nJ={}", self.b, self.n * self.j)));
        }
        // Sub-block 0 carries no parity, so the budget must fit in the rest.
        if self.budget() > (self.n - 1) * self.j {
            return Err(CcsError::InvalidProfile(format!(
                "parity budget {} does not fit in {} sub-blocks of {} bits",
                self.budget(),
                self.n - 1,
                self.j
            )));
        }
        if !(self.eps_tree > 0.0) {
            return Err(CcsError::ProbabilityOutOfRange { name: "eps_tree", value: self.eps_tree });
        }
        Ok(())
    }

    /// Total parity bits `M - B` with `M = nJ`.
    pub fn budget(&self) -> usize {
        self.n * self.j - self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptOutcome {
    /// `l_1..l_{n-1}`. When infeasible, the allocation with the smallest
    /// `E[L̃_{n-1}]` (all parity pushed to the tail).
    pub l: Vec<usize>,
    /// Expected node count of `l`.
    pub objective: f64,
    /// `E[L̃_{n-1}]` of the returned allocation.
    pub e_last: f64,
    pub feasible: bool,
    /// Solution of the relaxed problem, when one was computed.
    pub relaxed: Option<Vec<f64>>,
}

impl OptOutcome {
    fn infeasible(l: Vec<usize>, k: u64) -> Self {
        let (e_last, objective) = score(&l, k);
        OptOutcome { l, objective, e_last, feasible: false, relaxed: None }
    }

    /// `ε_tree - E[L̃_{n-1}]`; non-negative for a feasible outcome.
    pub fn slack(&self, eps_tree: f64) -> f64 {
        eps_tree - self.e_last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub e_last: f64,
    pub nodes: f64,
    pub feasible: bool,
    pub reason: Option<String>,
}

fn score(l: &[usize], k: u64) -> (f64, f64) {
    let spec = AllocationSpec::new(k, l.to_vec());
    let e = expected_surviving_approx::<f64>(&spec).last().copied().unwrap_or(0.0);
    (e, expected_complexity_nodes::<f64>(&spec))
}

/// Scores an allocation and checks it against `ε_tree` and, if given, the
/// parity budget.
pub fn evaluate_allocation(l: &[usize], k: u64, eps_tree: f64, budget: Option<usize>) -> Evaluation {
    let (e_last, nodes) = score(l, k);
    let mut reason = None;
    if let Some(m) = budget {
        let total: usize = l.iter().sum();
        if total != m {
            reason = Some(format!("allocation uses {total} parity bits, budget is {m}"));
        }
    }
    if reason.is_none() && e_last > eps_tree {
        reason = Some(format!("E[L~_{}] = {e_last} exceeds eps_tree = {eps_tree}", l.len()));
    }
    Evaluation { e_last, nodes, feasible: reason.is_none(), reason }
}

/// `c + Σ_t exp(w_t) 2^{-(x_lo + ... + x_hi)}` with log-weights `w_t`.
struct ExpSum {
    constant: f64,
    terms: Vec<(f64, usize, usize)>,
}

impl ExpSum {
    /// `E[L̃_j]` over variables `x_0..x_{j-1}` (that is, `l_1..l_j`).
    fn surviving(k: f64, j: usize, scale: f64) -> Vec<(f64, usize, usize)> {
        (1..=j).map(|q| (scale.ln() + (j - q) as f64 * k.ln() + (k - 1.0).ln(), q - 1, j - 1)).collect()
    }

    fn nodes(k: f64, d: usize) -> Self {
        let terms = (1..d).flat_map(|j| Self::surviving(k, j, k)).collect();
        ExpSum { constant: d as f64 * k, terms }
    }

    fn last_stage(k: f64, d: usize) -> Self {
        ExpSum { constant: 0.0, terms: Self::surviving(k, d, 1.0) }
    }

    fn term_values(&self, x: &[f64]) -> Vec<f64> {
        let mut prefix = vec![0.0; x.len() + 1];
        for (i, v) in x.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
        }
        self.terms.iter().map(|&(w, lo, hi)| (w - LN_2 * (prefix[hi + 1] - prefix[lo])).exp()).collect()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.term_values(x).iter().sum::<f64>()
    }

    fn derivatives(&self, x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = x.len();
        let vals = self.term_values(x);
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for (&(_, lo, hi), &v) in self.terms.iter().zip(&vals) {
            for a in lo..=hi {
                g[a] -= LN_2 * v;
                for b in lo..=hi {
                    h[(a, b)] += LN_2 * LN_2 * v;
                }
            }
        }
        (self.constant + vals.iter().sum::<f64>(), g, h)
    }
}

/// Barrier function for `min t·f` over `0 < x < J`, `log g(x) < log ε`.
struct Barrier<'a> {
    f: &'a ExpSum,
    g: &'a ExpSum,
    log_eps: f64,
    hi: f64,
}

impl Barrier<'_> {
    fn inside(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| v > 0.0 && v < self.hi) && self.g.value(x).ln() < self.log_eps
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        let boxes: f64 = x.iter().map(|&v| -(v.ln() + (self.hi - v).ln())).sum();
        t * self.f.value(x) + boxes - (self.log_eps - self.g.value(x).ln()).ln()
    }

    fn derivatives(&self, x: &[f64], t: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (fv, fg, fh) = self.f.derivatives(x);
        let (gv, gg, gh) = self.g.derivatives(x);
        // h = log g; barrier term -log(log ε - h).
        let hg = &gg / gv;
        let hh = &gh / gv - &hg * hg.transpose();
        let u = self.log_eps - gv.ln();
        let mut grad = fg * t + &hg / u;
        let mut hess = fh * t + hh / u + &hg * hg.transpose() / (u * u);
        let mut val = t * fv - u.ln();
        for (i, &v) in x.iter().enumerate() {
            let w = self.hi - v;
            val -= v.ln() + w.ln();
            grad[i] += -1.0 / v + 1.0 / w;
            hess[(i, i)] += 1.0 / (v * v) + 1.0 / (w * w);
        }
        (val, grad, hess)
    }

    /// Newton steps on the hyperplane `Σx = const` until the decrement is tiny.
    fn center(&self, x: &mut Vec<f64>, t: f64) {
        let d = x.len();
        for _ in 0..200 {
            let (val, grad, hess) = self.derivatives(x, t);
            let mut kkt = DMatrix::zeros(d + 1, d + 1);
            kkt.view_mut((0, 0), (d, d)).copy_from(&hess);
            for i in 0..d {
                kkt[(i, d)] = 1.0;
                kkt[(d, i)] = 1.0;
            }
            let mut rhs = DVector::zeros(d + 1);
            rhs.rows_mut(0, d).copy_from(&(-&grad));
            let Some(sol) = kkt.lu().solve(&rhs) else { return };
            let dx: Vec<f64> = sol.iter().take(d).copied().collect();
            let slope: f64 = grad.iter().zip(&dx).map(|(g, s)| g * s).sum();
            if -slope / 2.0 <= 1e-12 {
                return;
            }
            let mut s = 1.0;
            let mut moved = false;
            while s > 1e-16 {
                let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + s * b).collect();
                if self.inside(&cand) && self.value(&cand, t) <= val + 0.25 * s * slope {
                    *x = cand;
                    moved = true;
                    break;
                }
                s *= 0.5;
            }
            if !moved {
                return;
            }
        }
    }
}

/// Interior-point solution of the relaxed problem from a strictly feasible start.
fn solve_relaxed(f: &ExpSum, g: &ExpSum, eps: f64, hi: f64, start: Vec<f64>) -> Vec<f64> {
    let barrier = Barrier { f, g, log_eps: eps.ln(), hi };
    let m = 2.0 * start.len() as f64 + 1.0;
    let mut x = start;
    let mut t = m / f.value(&x).max(1e-300);
    loop {
        barrier.center(&mut x, t);
        if m / t < 1e-8 * f.value(&x).abs().max(1.0) {
            return x;
        }
        t *= 2.0;
    }
}

/// Parity packed toward the end of the codeword, which lowers every tail sum
/// at once and so minimises `E[L̃_{n-1}]`.
fn back_loaded(d: usize, j: usize, budget: usize) -> Vec<usize> {
    let mut l = vec![0; d];
    let mut left = budget;
    for slot in l.iter_mut().rev() {
        *slot = left.min(j);
        left -= *slot;
    }
    l
}

struct Integer<'a> {
    prob: &'a OptProblem,
}

impl Integer<'_> {
    fn e(&self, l: &[usize]) -> f64 {
        score(l, self.prob.k).0
    }

    fn nodes(&self, l: &[usize]) -> f64 {
        score(l, self.prob.k).1
    }

    fn ok(&self, l: &[usize]) -> bool {
        self.e(l) <= self.prob.eps_tree
    }

    /// Nearest-integer rounding, then single-bit fixes until `Σl` is on budget.
    fn round(&self, x: &[f64]) -> Vec<usize> {
        let j = self.prob.j;
        let mut l: Vec<usize> = x.iter().map(|v| (v.round().max(0.0) as usize).min(j)).collect();
        let target = self.prob.budget();
        while l.iter().sum::<usize>() > target {
            // Take a bit where losing it raises E[L̃] the least.
            let i = (0..l.len())
                .filter(|&i| l[i] > 0)
                .min_by(|&a, &b| self.e(&bump(&l, a, -1)).total_cmp(&self.e(&bump(&l, b, -1))))
                .expect("positive sum");
            l[i] -= 1;
        }
        while l.iter().sum::<usize>() < target {
            // Give a bit where it lowers the node count the most.
            let i = (0..l.len())
                .filter(|&i| l[i] < j)
                .min_by(|&a, &b| self.nodes(&bump(&l, a, 1)).total_cmp(&self.nodes(&bump(&l, b, 1))))
                .expect("budget fits");
            l[i] += 1;
        }
        l
    }

    fn transfers(&self, l: &[usize]) -> Vec<Vec<usize>> {
        let j = self.prob.j;
        let mut out = Vec::new();
        for from in 0..l.len() {
            for to in 0..l.len() {
                if from != to && l[from] > 0 && l[to] < j {
                    let mut c = l.to_vec();
                    c[from] -= 1;
                    c[to] += 1;
                    out.push(c);
                }
            }
        }
        out
    }

    /// Greedy descent on `E[L̃]` over ±1 transfers, bounded by `d·J` moves.
    fn repair(&self, mut l: Vec<usize>) -> Option<Vec<usize>> {
        for _ in 0..l.len() * self.prob.j + 1 {
            if self.ok(&l) {
                return Some(l);
            }
            let cur = self.e(&l);
            let best = self.transfers(&l).into_iter().min_by(|a, b| self.e(a).total_cmp(&self.e(b)))?;
            if self.e(&best) >= cur {
                return None;
            }
            l = best;
        }
        self.ok(&l).then_some(l)
    }

    /// Best-improvement search over one and then two simultaneous transfers.
    fn polish(&self, mut l: Vec<usize>) -> Vec<usize> {
        let mut cur = self.nodes(&l);
        loop {
            let better = |c: &Vec<usize>| {
                let v = self.nodes(c);
                (v < cur - 1e-12 * cur.abs() && self.ok(c)).then_some(v)
            };
            let singles = self.transfers(&l);
            let mut best: Option<(f64, Vec<usize>)> = None;
            for c in &singles {
                if let Some(v) = better(c) {
                    if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                        best = Some((v, c.clone()));
                    }
                }
            }
            if best.is_none() {
                for s in &singles {
                    for c in self.transfers(s) {
                        if let Some(v) = better(&c) {
                            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                                best = Some((v, c));
                            }
                        }
                    }
                }
            }
            match best {
                Some((v, c)) => {
                    cur = v;
                    l = c;
                }
                None => return l,
            }
        }
    }
}

fn bump(l: &[usize], i: usize, by: isize) -> Vec<usize> {
    let mut c = l.to_vec();
    c[i] = c[i].wrapping_add_signed(by);
    c
}

/// Minimises the expected node count subject to `E[L̃_{n-1}] ≤ ε_tree` and
/// `Σ l_j = nJ - B`, `0 ≤ l_j ≤ J`.
pub fn optimize_allocation(prob: &OptProblem) -> Result<OptOutcome> {
    prob.validate()?;
    let d = prob.n - 1;
    let budget = prob.budget();
    let int = Integer { prob };
    let floor = back_loaded(d, prob.j, budget);
    let e_floor = int.e(&floor);
    if e_floor > prob.eps_tree {
        return Ok(OptOutcome::infeasible(floor, prob.k));
    }
    let finish = |l: Vec<usize>, relaxed: Option<Vec<f64>>| {
        let l = int.polish(l);
        let (e_last, objective) = score(&l, prob.k);
        debug_assert!(e_last <= prob.eps_tree);
        Ok(OptOutcome { l, objective, e_last, feasible: true, relaxed })
    };
    // With K = 1 nothing survives in error, and with no free bits or no free
    // coordinates there is nothing for the relaxation to do.
    if prob.k == 1 || d <= 1 || budget == 0 || budget == d * prob.j || e_floor == prob.eps_tree {
        return finish(floor, None);
    }

    let kf = prob.k as f64;
    let f = ExpSum::nodes(kf, d);
    let g = ExpSum::last_stage(kf, d);
    let flat = vec![budget as f64 / d as f64; d];
    let packed: Vec<f64> = floor.iter().map(|&v| v as f64).collect();
    // A convex mix of the flat point and the constraint minimiser is interior
    // to the box and strictly feasible.
    let (g_flat, g_packed) = (g.value(&flat), g.value(&packed));
    let alpha =
        if g_flat < prob.eps_tree { 1.0 } else { (0.5 * (prob.eps_tree - g_packed) / (g_flat - g_packed)).min(0.5) };
    let start: Vec<f64> = flat.iter().zip(&packed).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
    let start = if start.iter().all(|&v| v > 0.0 && v < prob.j as f64) && g.value(&start) < prob.eps_tree {
        start
    } else {
        // Rare: the mix touches the box. Nudge it toward the flat point.
        let beta = 1e-6;
        start.iter().zip(&flat).map(|(s, f)| (1.0 - beta) * s + beta * f).collect()
    };
    let x = solve_relaxed(&f, &g, prob.eps_tree, prob.j as f64, start);
    let rounded = int.round(&x);
    let repaired = int.repair(rounded).unwrap_or(floor);
    finish(repaired, Some(x))
}

/// One optimisation per `ε_tree`, run in parallel.
pub fn optimize_sweep(prob: &OptProblem, eps: &[f64]) -> Result<Vec<OptOutcome>> {
    eps.par_iter().map(|&e| optimize_allocation(&OptProblem { eps_tree: e, ..prob.clone() })).collect()
}

/// The evenly spread allocation, handy as a baseline.
pub fn balanced_allocation(prob: &OptProblem) -> Vec<usize> {
    let (d, m) = (prob.n - 1, prob.budget());
    (0..d).map(|i| m / d + usize::from(i < m % d)).collect()
}
