//! Monte Carlo survivor counts for the tree decoder alone.
//!
//! Each trial draws a fresh codebook and K independent messages (repeats
//! allowed), hands the decoder the K true fragments per slot with their
//! multiplicity, and records how many paths each root keeps per stage. This
//! is the model under which the exact analysis is computed.

use crate::error::{CcsError, Result};
use crate::rng::{stream, Domain};
use crate::treecode::{tree_decode, Message, ParityProfile, TreeCodebook};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorCurve {
    /// Mean paths per root after stages `1..n-1`, i.e. `E[L_j] + 1`.
    pub mean: Vec<f64>,
    /// Standard error of each mean, from the spread over trials.
    pub std_err: Vec<f64>,
    pub trials: usize,
}

pub fn simulate_survivors(k: usize, j: usize, l: &[usize], trials: usize, seed: u64) -> Result<SurvivorCurve> {
    if k == 0 || trials < 2 {
        return Err(CcsError::Domain(format!("need K >= 1 and at least two trials, got {k}, {trials}")));
    }
    let profile = ParityProfile::from_parity(j, l)?;
    let n = profile.n();
    let per_trial: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Domain::Trial, t);
            let code = TreeCodebook::sample(profile.clone(), &mut rng);
            let frags = (0..k)
                .map(|_| code.encode_fragments(&Message::random(profile.b(), &mut rng)))
                .collect::<Result<Vec<_>>>()?;
            let lists: Vec<Vec<u64>> = (0..n).map(|s| frags.iter().map(|f| f[s]).collect()).collect();
            let out = tree_decode(&lists, &code)?;
            Ok(out.stats.survivors_per_stage[1..].iter().map(|&v| v as f64 / k as f64).collect())
        })
        .collect::<Result<_>>()?;
    let t = trials as f64;
    let mut mean = vec![0.0; n - 1];
    for row in &per_trial {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / t;
        }
    }
    let std_err = (0..n - 1)
        .map(|s| {
            let var = per_trial.iter().map(|r| (r[s] - mean[s]).powi(2)).sum::<f64>() / (t - 1.0);
            (var / t).sqrt()
        })
        .collect();
    Ok(SurvivorCurve { mean, std_err, trials })
}
