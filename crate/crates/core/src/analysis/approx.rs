//! Closed forms under the no-collision assumption, plus finite-Ka bounds.
//!
//! Each erroneous child survives stage `ℓ` independently with probability
//! `p_ℓ = 2^{-l_ℓ}`, which gives
//! `E[L̃_j] = Σ_{q=1..j} K^{j-q} (K-1) Π_{ℓ=q..j} p_ℓ`.

use crate::error::{CcsError, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// List size and parity counts `l_1..l_{n-1}` (sub-block 0 carries none).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationSpec {
    pub k: u64,
    pub l: Vec<usize>,
    /// Information counts `m_0..m_{n-1}`, only needed by the exact analysis.
    pub m: Option<Vec<usize>>,
}

impl AllocationSpec {
    pub fn new(k: u64, l: Vec<usize>) -> Self {
        AllocationSpec { k, l, m: None }
    }

    /// Sub-block count n.
    pub fn n(&self) -> usize {
        self.l.len() + 1
    }

    pub fn validate(&self, j: Option<usize>) -> Result<()> {
        if self.k == 0 {
            return Err(CcsError::Domain("list size K must be at least 1".into()));
        }
        if let Some(j) = j {
            if let Some(&x) = self.l.iter().find(|&&x| x > j) {
                return Err(CcsError::InvalidProfile(format!("l={x} exceeds J={j}")));
            }
        }
        if let Some(m) = &self.m {
            if m.len() != self.n() {
                return Err(CcsError::DimensionMismatch { expected: self.n(), got: m.len() });
            }
        }
        Ok(())
    }
}

fn p<T: Scalar>(l: usize) -> T {
    T::pow2(-(l as i64))
}

/// `E[L̃_j]` for `j = 1..n-1`, summed from the closed form.
///
/// The inner product is built from `q = j` downwards, one factor `K p_ℓ` at a
/// time, so no power of K is ever formed on its own.
pub fn expected_surviving_approx<T: Scalar>(spec: &AllocationSpec) -> Vec<T> {
    let k = T::from_u64_lossy(spec.k);
    let km1 = T::from_u64_lossy(spec.k.saturating_sub(1));
    (1..=spec.l.len())
        .map(|j| {
            let mut total = T::zero();
            // run = K^{j-q} Π_{ℓ=q..j} p_ℓ
            let mut run = p::<T>(spec.l[j - 1]);
            for q in (1..=j).rev() {
                total = total + km1.clone() * run.clone();
                if q > 1 {
                    run = run * k.clone() * p::<T>(spec.l[q - 2]);
                }
            }
            total
        })
        .collect()
}

/// The same sequence from `E_j = p_j (K E_{j-1} + K - 1)`, `E_0 = 0`.
pub fn expected_surviving_recursive<T: Scalar>(spec: &AllocationSpec) -> Vec<T> {
    let k = T::from_u64_lossy(spec.k);
    let km1 = T::from_u64_lossy(spec.k.saturating_sub(1));
    let mut prev = T::zero();
    spec.l
        .iter()
        .map(|&l| {
            prev = p::<T>(l) * (k.clone() * prev.clone() + km1.clone());
            prev.clone()
        })
        .collect()
}

/// Expected number of nodes whose parity is evaluated, for one root.
pub fn expected_complexity_nodes<T: Scalar>(spec: &AllocationSpec) -> T {
    let k = T::from_u64_lossy(spec.k);
    let e = expected_surviving_approx::<T>(spec);
    let stages = T::from_u64_lossy(spec.l.len() as u64);
    let inner = e.iter().take(spec.l.len().saturating_sub(1)).fold(T::zero(), |a, x| a + x.clone());
    stages * k.clone() + k * inner
}

/// Expected number of parity bits compared, for one root.
pub fn expected_complexity_checks<T: Scalar>(spec: &AllocationSpec) -> T {
    let k = T::from_u64_lossy(spec.k);
    let e = expected_surviving_approx::<T>(spec);
    let total_l = T::from_u64_lossy(spec.l.iter().sum::<usize>() as u64);
    let weighted = (0..spec.l.len().saturating_sub(1))
        .fold(T::zero(), |a, j| a + T::from_u64_lossy(spec.l[j + 1] as u64) * e[j].clone());
    k * (total_l + weighted)
}

/// Markov bound on the tree failure probability: `E[L̃_{n-1}]`.
pub fn ptree_bound(spec: &AllocationSpec) -> f64 {
    expected_surviving_approx::<f64>(spec).last().copied().unwrap_or(0.0)
}

fn check_prob(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(CcsError::ProbabilityOutOfRange { name, value });
    }
    Ok(())
}

/// `P_e = 1 - (1 - p_tree)(1 - p_cs)^n`.
pub fn pe_compose(p_tree: f64, p_cs: f64, n: usize) -> Result<f64> {
    check_prob("p_tree", p_tree)?;
    check_prob("p_cs", p_cs)?;
    Ok(1.0 - (1.0 - p_tree) * (1.0 - p_cs).powi(n as i32))
}

/// Union bound `n p_cs + p_tree`, which dominates [`pe_compose`].
pub fn pe_upper_bound(p_tree: f64, p_cs: f64, n: usize) -> Result<f64> {
    check_prob("p_tree", p_tree)?;
    check_prob("p_cs", p_cs)?;
    Ok(n as f64 * p_cs + p_tree)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum BoundParams {
    /// `l` parity bits on every sub-block after the first.
    Uniform { ka: f64, l: f64 },
    /// All `parity_bits` parity bits pushed to the tail; `c1 = J / log2 Ka`.
    Trailing { ka: f64, n: usize, parity_bits: f64, c1: f64 },
}

/// Finite-Ka upper bounds on the expected number of erroneous survivors.
///
/// Uniform: `Ka / (2^l - Ka)`, defined only for `2^l > Ka`.
/// Trailing: `Ka^{n-1} / 2^P + 1 / (Ka^{c1-1} - 1)`, evaluated in log2 space
/// because `P` can run to thousands of bits.
pub fn asymptotic_bound(params: BoundParams) -> Result<f64> {
    match params {
        BoundParams::Uniform { ka, l } => {
            if !(ka > 0.0) {
                return Err(CcsError::Domain(format!("Ka={ka} must be positive")));
            }
            let cap = l.exp2();
            if cap <= ka {
                return Err(CcsError::Domain(format!("uniform bound needs 2^l > Ka, got 2^{l} <= {ka}")));
            }
            Ok(ka / (cap - ka))
        }
        BoundParams::Trailing { ka, n, parity_bits, c1 } => {
            if !(ka > 1.0) || n == 0 {
                return Err(CcsError::Domain(format!("trailing bound needs Ka > 1 and n >= 1, got {ka}, {n}")));
            }
            let lk = ka.log2();
            let tail = (c1 - 1.0) * lk;
            if !(tail > 0.0) {
                return Err(CcsError::Domain(format!("trailing bound needs c1 > 1, got {c1}")));
            }
            let head = ((n - 1) as f64 * lk - parity_bits).exp2();
            // 2^tail - 1 without cancellation for small tails.
            Ok(head + 1.0 / (tail * std::f64::consts::LN_2).exp_m1())
        }
    }
}
