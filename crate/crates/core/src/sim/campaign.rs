//! Campaigns: many seeded trials, aggregated in trial order.

use super::config::SimConfig;
use super::trial::{run_trial, Setup, TrialReport};
use crate::cs::CsFloat;
use crate::error::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `hits` successes out of `n`.
pub fn wilson_interval(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (x, n) = (hits as f64, n as f64);
    let p = x / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The bounds are exact at the edges; avoid round-off there.
    let lo = if hits == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if x == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub ka: usize,
    pub trials: usize,
    pub ebn0_db: Option<f64>,
    pub es: Option<f64>,
    /// Per-user error rate; `None` when no user was active.
    pub pe: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    /// Standard error of `pe` from the spread of per-trial miss fractions.
    pub pe_std_err: Option<f64>,
    pub missed: u64,
    pub extraneous: u64,
    pub overflow_trials: u64,
    pub mean_tree_checks: f64,
    pub mean_tree_nodes: f64,
    /// Mean survivors per stage of the first decoding pass, per trial.
    pub mean_survivors_per_stage: Vec<f64>,
    /// NNLS iterations per slot decode.
    pub mean_cs_iters: f64,
    pub cs_nonconverged: u64,
    /// Recovered messages after the first pass and each SIC iteration, summed.
    pub recovered_per_iteration: Vec<u64>,
    pub runtime_secs: f64,
    pub config: SimConfig,
}

impl CampaignReport {
    pub fn from_trials(cfg: &SimConfig, es: Option<f64>, trials: &[TrialReport], runtime_secs: f64) -> Self {
        let t = trials.len().max(1) as f64;
        let sent: u64 = trials.iter().map(|r| r.transmitted as u64).sum();
        let missed: u64 = trials.iter().map(|r| r.missed as u64).sum();
        let (pe, ci_lo, ci_hi, pe_std_err) = if sent == 0 {
            (None, None, None, None)
        } else {
            let pe = missed as f64 / sent as f64;
            let (lo, hi) = wilson_interval(missed, sent);
            // Misses within a trial are correlated, so the spread is taken
            // over trials rather than users.
            let fracs: Vec<f64> =
                trials.iter().filter(|r| r.transmitted > 0).map(|r| r.missed as f64 / r.transmitted as f64).collect();
            let m = fracs.len() as f64;
            let mean = fracs.iter().sum::<f64>() / m;
            let var = if m > 1.0 { fracs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
            (Some(pe), Some(lo), Some(hi), Some((var / m).sqrt()))
        };
        let stages = trials.iter().map(|r| r.stats.survivors_per_stage.len()).max().unwrap_or(0);
        let mut survivors = vec![0.0; stages];
        let mut recovered = Vec::new();
        for r in trials {
            for (s, &v) in survivors.iter_mut().zip(&r.stats.survivors_per_stage) {
                *s += v as f64 / t;
            }
            if recovered.len() < r.recovered_per_iteration.len() {
                recovered.resize(r.recovered_per_iteration.len(), 0);
            }
            for (a, &b) in recovered.iter_mut().zip(&r.recovered_per_iteration) {
                *a += b as u64;
            }
        }
        let decodes: usize = trials.iter().map(|r| r.cs_decodes).sum();
        let iters: usize = trials.iter().map(|r| r.cs_iterations).sum();
        CampaignReport {
            ka: cfg.ka,
            trials: trials.len(),
            ebn0_db: match es {
                Some(es) if es > 0.0 => crate::channel::ebn0_db(es, cfg.channel_uses(), cfg.b).ok(),
                _ => None,
            },
            es,
            pe,
            ci_lo,
            ci_hi,
            pe_std_err,
            missed,
            extraneous: trials.iter().map(|r| r.extraneous as u64).sum(),
            overflow_trials: trials.iter().filter(|r| r.overflow).count() as u64,
            mean_tree_checks: trials.iter().map(|r| r.stats.parity_checks as f64).sum::<f64>() / t,
            mean_tree_nodes: trials.iter().map(|r| r.stats.nodes_visited as f64).sum::<f64>() / t,
            mean_survivors_per_stage: survivors,
            mean_cs_iters: if decodes == 0 { 0.0 } else { iters as f64 / decodes as f64 },
            cs_nonconverged: trials.iter().map(|r| r.cs_nonconverged as u64).sum(),
            recovered_per_iteration: recovered,
            runtime_secs,
            config: cfg.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

/// Runs every trial of a prepared setup and returns the per-trial reports in
/// trial order.
pub fn run_trials<T: CsFloat>(setup: &Setup<T>) -> Result<Vec<TrialReport>> {
    (0..setup.cfg.trials as u64).into_par_iter().map(|t| run_trial(setup, t)).collect()
}

pub fn run_campaign_with<T: CsFloat>(setup: &Setup<T>) -> Result<CampaignReport> {
    let start = Instant::now();
    let trials = run_trials(setup)?;
    Ok(CampaignReport::from_trials(&setup.cfg, setup.es, &trials, start.elapsed().as_secs_f64()))
}

pub fn run_campaign(cfg: &SimConfig) -> Result<CampaignReport> {
    run_campaign_with(&Setup::<f64>::new(cfg.clone())?)
}

/// One campaign per Eb/N0 point. Every point reuses the seed, so messages,
/// noise draws and matrix signs are shared across the sweep.
pub fn sweep_ebn0(cfg: &SimConfig, points: &[f64]) -> Result<Vec<CampaignReport>> {
    points.iter().map(|&db| run_campaign(&cfg.at_ebn0(db))).collect()
}

pub fn sweep_ka(cfg: &SimConfig, points: &[usize]) -> Result<Vec<CampaignReport>> {
    points.iter().map(|&ka| run_campaign(&cfg.at_ka(ka))).collect()
}

pub const CSV_HEADER: &str = "ka,ebn0_db,trials,pe,ci_lo,ci_hi,mean_tree_checks,mean_cs_iters";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_csv<W: Write>(reports: &[CampaignReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.ka,
            opt(r.ebn0_db),
            r.trials,
            opt(r.pe),
            opt(r.ci_lo),
            opt(r.ci_hi),
            r.mean_tree_checks,
            r.mean_cs_iters
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(extra: &str) -> SimConfig {
        SimConfig::parse(&format!(
            "ka = 8\nb = 24\nn = 4\nj = 10\nalloc = [2, 4, 10]\nk_delta = 4\nmode = \"oracle\"\ntrials = 300\nseed = 9\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn wilson() {
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        // Rule of three, approximately.
        assert!(hi > 0.0019 && hi < 0.0040, "{hi}");
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        let (lo, hi) = wilson_interval(7, 7);
        assert!(lo < 1.0 && hi == 1.0);
    }

    #[test]
    fn deterministic_and_order_free() {
        let cfg = oracle("p_cs = 0.05\n");
        let mut a = run_campaign(&cfg).unwrap();
        let mut b = run_campaign(&cfg).unwrap();
        a.runtime_secs = 0.0;
        b.runtime_secs = 0.0;
        assert_eq!(a.to_json(), b.to_json());
        // Aggregating the trials in reverse gives the same estimate.
        let setup = Setup::<f64>::new(cfg.clone()).unwrap();
        let mut trials = run_trials(&setup).unwrap();
        trials.reverse();
        let c = CampaignReport::from_trials(&cfg, None, &trials, 0.0);
        assert_eq!(c.pe, a.pe);
        assert_eq!(c.mean_tree_checks, a.mean_tree_checks);
    }

    #[test]
    fn estimate_inside_interval() {
        let r = run_campaign(&oracle("p_cs = 0.1\n")).unwrap();
        let pe = r.pe.unwrap();
        assert!(r.ci_lo.unwrap() <= pe && pe <= r.ci_hi.unwrap());
        assert!(pe > 0.0 && pe <= 1.0);
    }

    #[test]
    fn empty_population() {
        let r = run_campaign(&oracle("").at_ka(0)).unwrap();
        assert_eq!(r.pe, None);
        assert_eq!(r.missed, 0);
    }

    #[test]
    fn csv_layout() {
        let r = run_campaign(&oracle("")).unwrap();
        let mut buf = Vec::new();
        write_csv(&[r.clone(), r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 8));
        assert!(lines[1].starts_with("8,,300,"));
    }

    #[test]
    fn sic_never_loses_messages() {
        let r = run_campaign(&oracle("p_cs = 0.05\nsic_iterations = 3\n")).unwrap();
        assert!(r.recovered_per_iteration.windows(2).all(|w| w[0] <= w[1]), "{:?}", r.recovered_per_iteration);
    }
}
