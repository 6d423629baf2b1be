//! One Monte Carlo trial: draw, encode, observe, decode, cancel.

use super::config::{CodebookMode, MatrixSource, Mode, SimConfig};
use crate::channel::awgn_observe;
use crate::cs::{
    build_sensing_matrix, cs_decode_slot, read_matrix, slot_superimpose, CsFloat, SensingMatrix, SlotIndexVector,
};
use crate::error::{CcsError, Result};
use crate::rng::{stream, Domain, StreamRng};
use crate::treecode::{tree_decode_with, DecodeOptions, DecodeStats, Fragment, Message, ParityProfile, TreeCodebook};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::BufReader;

/// Everything shared by the trials of one campaign.
#[derive(Debug, Clone)]
pub struct Setup<T: CsFloat = f64> {
    pub cfg: SimConfig,
    pub profile: ParityProfile,
    pub list_size: usize,
    pub es: Option<f64>,
    pub sigma2: f64,
    codebook: Option<TreeCodebook>,
    matrix: Option<SensingMatrix<T>>,
}

impl<T: CsFloat> Setup<T> {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let profile = cfg.profile()?;
        let es = cfg.symbol_energy()?;
        let codebook = match cfg.codebook {
            CodebookMode::Fixed => {
                let seed = cfg.codebook_seed.unwrap_or(cfg.seed);
                Some(TreeCodebook::sample(profile.clone(), &mut stream(seed, Domain::Codebook, 0)))
            }
            CodebookMode::PerTrial => None,
        };
        let matrix = match (cfg.mode, es) {
            (Mode::Cs, Some(es)) => Some(load_matrix::<T>(&cfg, es)?),
            _ => None,
        };
        Ok(Setup { list_size: cfg.list_size(), cfg, profile, es, sigma2: 1.0, codebook, matrix })
    }

    /// Overrides the noise variance (the default is one). Zero gives a
    /// noiseless channel.
    pub fn with_noise_variance(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn matrix(&self) -> Option<&SensingMatrix<T>> {
        self.matrix.as_ref()
    }

    pub fn codebook(&self, trial: u64) -> Cow<'_, TreeCodebook> {
        match &self.codebook {
            Some(c) => Cow::Borrowed(c),
            None => Cow::Owned(TreeCodebook::sample(
                self.profile.clone(),
                &mut stream(self.cfg.codebook_seed.unwrap_or(self.cfg.seed), Domain::Codebook, trial + 1),
            )),
        }
    }
}

fn load_matrix<T: CsFloat>(cfg: &SimConfig, es: f64) -> Result<SensingMatrix<T>> {
    let rows = cfg.rows_per_slot();
    let a = match &cfg.matrix {
        MatrixSource::Generate(kind) => {
            build_sensing_matrix(*kind, cfg.j as u32, rows, es, &mut stream(cfg.seed, Domain::SensingMatrix, 0))?
        }
        MatrixSource::File(path) => {
            let f = File::open(path).map_err(|e| CcsError::MatrixFile(format!("{}: {e}", path.display())))?;
            read_matrix::<T, _>(BufReader::new(f))?.rescaled(es)?
        }
    };
    if a.rows() != rows || a.cols() != 1 << cfg.j {
        return Err(CcsError::MatrixFile(format!(
            "matrix is {}x{}, config needs {rows}x{}",
            a.rows(),
            a.cols(),
            1u64 << cfg.j
        )));
    }
    Ok(a)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub transmitted: usize,
    /// Transmitted messages present in the final output.
    pub recovered: usize,
    pub missed: usize,
    /// Missed messages as bit strings.
    pub missed_messages: Vec<String>,
    /// Output messages that were never sent.
    pub extraneous: usize,
    /// Output size before and after capping at Ka.
    pub output_uncapped: usize,
    pub output_capped: usize,
    /// The decoder returned more than Ka messages.
    pub overflow: bool,
    /// Recovered count after the first pass and after each SIC iteration.
    pub recovered_per_iteration: Vec<usize>,
    /// Tree decoder counters, summed over all passes.
    pub stats: DecodeStats,
    /// Per slot, users whose fragment is missing from the first-pass list.
    pub cs_misses: Vec<usize>,
    pub cs_decodes: usize,
    pub cs_iterations: usize,
    pub cs_nonconverged: usize,
}

/// State carried between the first decoding pass and SIC iterations.
pub struct TrialState<'a, T: CsFloat = f64> {
    setup: &'a Setup<T>,
    code: Cow<'a, TreeCodebook>,
    rng: StreamRng,
    pub messages: Vec<Message>,
    /// `fragments[u][s]`: user u's fragment in slot s.
    pub fragments: Vec<Vec<Fragment>>,
    /// `erased[u][s]`: drop user u's fragment from slot s on the first pass.
    pub erased: Vec<Vec<bool>>,
    observations: Vec<Vec<T>>,
    pub decoded: BTreeSet<Message>,
    report: TrialReport,
    passes: usize,
}

impl<'a, T: CsFloat> TrialState<'a, T> {
    /// Draws messages, erasures and channel noise for trial `index`.
    pub fn new(setup: &'a Setup<T>, index: u64) -> Result<Self> {
        let cfg = &setup.cfg;
        let mut rng = stream(cfg.seed, Domain::Trial, index);
        let code = setup.codebook(index);
        let n = setup.profile.n();
        let b = setup.profile.b();
        if cfg.ka as f64 > (b as f64).exp2() {
            return Err(CcsError::Config(format!("cannot draw {} distinct {b}-bit messages", cfg.ka)));
        }
        let mut seen = HashSet::new();
        let mut messages = Vec::with_capacity(cfg.ka);
        while messages.len() < cfg.ka {
            let w = Message::random(b, &mut rng);
            if seen.insert(w.clone()) {
                messages.push(w);
            }
        }
        let fragments = messages.iter().map(|w| code.encode_fragments(w)).collect::<Result<Vec<_>>>()?;
        let erased = (0..cfg.ka).map(|_| (0..n).map(|_| rng.random_bool(cfg.p_cs)).collect()).collect();
        let observations = match setup.matrix() {
            Some(a) => (0..n)
                .map(|s| {
                    let b = SlotIndexVector::from_fragments(a.cols(), fragments.iter().map(|f| f[s]))?;
                    Ok(awgn_observe(&slot_superimpose(a, &b)?, setup.sigma2, &mut rng))
                })
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let report = TrialReport { transmitted: cfg.ka, ..Default::default() };
        Ok(TrialState {
            setup,
            code,
            rng,
            messages,
            fragments,
            erased,
            observations,
            decoded: BTreeSet::new(),
            report,
            passes: 0,
        })
    }

    /// True fragments of the listed users in one slot, distinct, padded with
    /// distinct random distractors up to `k`.
    fn oracle_list(&mut self, slot: usize, users: &[usize], k: usize) -> Vec<Fragment> {
        let cols = 1u64 << self.setup.profile.j();
        let mut list: Vec<Fragment> = Vec::new();
        let mut have = HashSet::new();
        for &u in users {
            let f = self.fragments[u][slot];
            if have.insert(f) {
                list.push(f);
            }
        }
        if list.len() > k {
            list.shuffle(&mut self.rng);
            list.truncate(k);
            return list;
        }
        let room = (cols as usize).min(k);
        while list.len() < room {
            let f = self.rng.random_range(0..cols);
            if have.insert(f) {
                list.push(f);
            }
        }
        list
    }

    /// CS lists for all slots, decoded in parallel.
    fn cs_lists(&mut self, residuals: Vec<Vec<T>>, k: usize) -> Result<Vec<Vec<Fragment>>> {
        let a = self.setup.matrix().expect("cs mode has a matrix");
        let opts = self.setup.cfg.nnls_options();
        let out = residuals.par_iter().map(|y| cs_decode_slot(y, a, k, opts)).collect::<Result<Vec<_>>>()?;
        for d in &out {
            self.report.cs_decodes += 1;
            self.report.cs_iterations += d.iterations;
            self.report.cs_nonconverged += usize::from(!d.converged);
        }
        Ok(out.into_iter().map(|d| d.list.fragments).collect())
    }

    fn tree(&mut self, lists: &[Vec<Fragment>]) -> Result<()> {
        let opts = DecodeOptions { path_limit: self.setup.cfg.path_limit };
        let out = tree_decode_with(lists, &self.code, opts)?;
        self.report.stats.add(&out.stats);
        self.decoded.extend(out.messages);
        self.record();
        Ok(())
    }

    fn record(&mut self) {
        let hits = self.messages.iter().filter(|w| self.decoded.contains(*w)).count();
        self.report.recovered_per_iteration.push(hits);
    }

    /// CS (or oracle) lists for every slot, then the tree decoder.
    pub fn first_pass(&mut self) -> Result<()> {
        assert_eq!(self.passes, 0, "first pass already ran");
        self.passes = 1;
        let n = self.setup.profile.n();
        let ka = self.messages.len();
        if ka == 0 {
            self.report.cs_misses = vec![0; n];
            self.record();
            return Ok(());
        }
        let k = self.setup.list_size;
        let mut lists = match self.setup.cfg.mode {
            Mode::Oracle => (0..n)
                .map(|s| {
                    let users: Vec<usize> = (0..ka).filter(|&u| !self.erased[u][s]).collect();
                    self.oracle_list(s, &users, k)
                })
                .collect(),
            Mode::Cs => self.cs_lists(self.observations.clone(), k)?,
        };
        // An erased fragment is gone unless another, unerased user sent it too.
        for (s, list) in lists.iter_mut().enumerate() {
            let keep: HashSet<Fragment> =
                (0..ka).filter(|&u| !self.erased[u][s]).map(|u| self.fragments[u][s]).collect();
            let gone: HashSet<Fragment> =
                (0..ka).filter(|&u| self.erased[u][s]).map(|u| self.fragments[u][s]).collect();
            list.retain(|f| !gone.contains(f) || keep.contains(f));
        }
        self.report.cs_misses = (0..n)
            .map(|s| {
                let have: HashSet<Fragment> = lists[s].iter().copied().collect();
                (0..ka).filter(|&u| !have.contains(&self.fragments[u][s])).count()
            })
            .collect();
        self.tree(&lists)
    }

    /// One round of interference cancellation: subtract everything decoded
    /// so far, decode the residual with `K' = (Ka - |Ŵ|) + Kδ`, and merge.
    pub fn sic_iterate(&mut self) -> Result<()> {
        assert!(self.passes > 0, "run the first pass before SIC");
        self.passes += 1;
        let ka = self.messages.len();
        if self.decoded.len() >= ka {
            self.record();
            return Ok(());
        }
        let k = ka - self.decoded.len() + self.setup.cfg.k_delta;
        let n = self.setup.profile.n();
        let lists = match self.setup.cfg.mode {
            Mode::Oracle => {
                let users: Vec<usize> = (0..ka).filter(|&u| !self.decoded.contains(&self.messages[u])).collect();
                (0..n).map(|s| self.oracle_list(s, &users, k)).collect()
            }
            Mode::Cs => {
                let a = self.setup.matrix().expect("cs mode has a matrix");
                let decoded_frags =
                    self.decoded.iter().map(|w| self.code.encode_fragments(w)).collect::<Result<Vec<_>>>()?;
                let mut residuals = self.observations.clone();
                for (s, y) in residuals.iter_mut().enumerate() {
                    for f in &decoded_frags {
                        for (v, &col) in y.iter_mut().zip(a.column(f[s] as usize)) {
                            *v = *v - col;
                        }
                    }
                }
                self.cs_lists(residuals, k)?
            }
        };
        self.tree(&lists)
    }

    pub fn finish(mut self) -> TrialReport {
        let sent: HashSet<&Message> = self.messages.iter().collect();
        let r = &mut self.report;
        r.recovered = self.messages.iter().filter(|w| self.decoded.contains(*w)).count();
        r.missed = r.transmitted - r.recovered;
        r.missed_messages =
            self.messages.iter().filter(|w| !self.decoded.contains(*w)).map(|w| w.to_string()).collect();
        r.extraneous = self.decoded.iter().filter(|w| !sent.contains(w)).count();
        r.output_uncapped = self.decoded.len();
        r.output_capped = self.decoded.len().min(r.transmitted);
        r.overflow = self.decoded.len() > r.transmitted;
        self.report
    }
}

/// First pass plus the configured number of SIC iterations.
pub fn run_trial<T: CsFloat>(setup: &Setup<T>, index: u64) -> Result<TrialReport> {
    let mut st = TrialState::new(setup, index)?;
    st.first_pass()?;
    for _ in 0..setup.cfg.sic_iterations {
        st.sic_iterate()?;
    }
    Ok(st.finish())
}
