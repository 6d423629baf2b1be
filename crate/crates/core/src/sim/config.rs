//! Simulation configuration.
//!
//! Config files are flat TOML: one `key = value` per line, no tables. See the
//! README for the key list.

use crate::channel::es_for_ebn0;
use crate::cs::{MatrixKind, NnlsOptions};
use crate::error::{CcsError, Result};
use crate::parityopt::{optimize_allocation, OptProblem};
use crate::treecode::{ParityProfile, MAX_J};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Columns of the sensing matrix come from a generator or from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum MatrixSource {
    Generate(MatrixKind),
    File(PathBuf),
}

impl From<String> for MatrixSource {
    fn from(s: String) -> Self {
        match s.as_str() {
            "antipodal" => MatrixSource::Generate(MatrixKind::Antipodal),
            "gaussian" => MatrixSource::Generate(MatrixKind::Gaussian),
            _ => MatrixSource::File(PathBuf::from(s)),
        }
    }
}

impl From<MatrixSource> for String {
    fn from(m: MatrixSource) -> String {
        match m {
            MatrixSource::Generate(MatrixKind::Antipodal) => "antipodal".into(),
            MatrixSource::Generate(MatrixKind::Gaussian) => "gaussian".into(),
            MatrixSource::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Lists come from NNLS on noisy observations.
    Cs,
    /// Lists are the true fragments padded with random distractors.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodebookMode {
    /// One tree codebook for the whole campaign.
    Fixed,
    /// A fresh codebook for every trial.
    PerTrial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizeWord {
    Optimize,
}

/// Parity counts `l_1..l_{n-1}`, or `"optimize"` to solve for them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Allocation {
    Explicit(Vec<usize>),
    Optimize(OptimizeWord),
}

fn default_k_delta() -> usize {
    10
}
fn default_matrix() -> MatrixSource {
    MatrixSource::Generate(MatrixKind::Antipodal)
}
fn default_trials() -> usize {
    100
}
fn default_mode() -> Mode {
    Mode::Cs
}
fn default_codebook() -> CodebookMode {
    CodebookMode::Fixed
}
fn default_nnls_tol() -> f64 {
    NnlsOptions::default().tol
}
fn default_nnls_max_iters() -> usize {
    NnlsOptions::default().max_iters
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub ka: usize,
    /// Total user population; informational only.
    #[serde(default)]
    pub ktot: Option<usize>,
    pub b: usize,
    pub n: usize,
    pub j: usize,
    pub alloc: Allocation,
    /// List size K. Defaults to `ka + k_delta`.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_k_delta")]
    pub k_delta: usize,
    #[serde(default)]
    pub ebn0_db: Option<f64>,
    #[serde(default)]
    pub es: Option<f64>,
    /// Rows per slot `N/n`. Defaults to `ceil(3·Ka·J)`.
    #[serde(default)]
    pub rows: Option<usize>,
    #[serde(default = "default_matrix")]
    pub matrix: MatrixSource,
    #[serde(default)]
    pub sic_iterations: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Constraint on `E[L̃_{n-1}]` when `alloc = "optimize"`.
    #[serde(default)]
    pub eps_tree: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Probability that a user's fragment is erased from a slot's first-pass list.
    #[serde(default)]
    pub p_cs: f64,
    #[serde(default = "default_codebook")]
    pub codebook: CodebookMode,
    /// Seeds the tree codebook separately from the trials. Defaults to `seed`.
    #[serde(default)]
    pub codebook_seed: Option<u64>,
    #[serde(default = "default_nnls_tol")]
    pub nnls_tol: f64,
    #[serde(default = "default_nnls_max_iters")]
    pub nnls_max_iters: usize,
    /// Abandon a root after this many partial paths.
    #[serde(default)]
    pub path_limit: Option<usize>,
}

impl SimConfig {
    /// Parses and validates a config file. Syntax errors carry line numbers.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| CcsError::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(CcsError::Config(s));
        if self.n == 0 || self.j == 0 || self.j > MAX_J {
            return bad(format!("need n >= 1 and 1 <= j <= {MAX_J}, got n={}, j={}", self.n, self.j));
        }
        if self.b == 0 || self.b > self.n * self.j {
            return bad(format!("b={} must be in 1..={}", self.b, self.n * self.j));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.list_size() == 0 {
            return bad("list size k must be at least 1".into());
        }
        if self.ebn0_db.is_some() && self.es.is_some() {
            return bad("set only one of ebn0_db and es".into());
        }
        if self.mode == Mode::Cs && self.ka > 0 && self.ebn0_db.is_none() && self.es.is_none() {
            return bad("missing key `ebn0_db` (or `es`), required in cs mode".into());
        }
        if let Some(es) = self.es {
            if !(es >= 0.0) || !es.is_finite() {
                return bad(format!("es={es} must be finite and non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.p_cs) {
            return bad(format!("p_cs={} must be in [0, 1]", self.p_cs));
        }
        if !(self.nnls_tol > 0.0) || self.nnls_max_iters == 0 {
            return bad("nnls_tol must be positive and nnls_max_iters at least 1".into());
        }
        if self.rows == Some(0) {
            return bad("rows must be at least 1".into());
        }
        match &self.alloc {
            Allocation::Explicit(l) => {
                if l.len() + 1 != self.n {
                    return bad(format!("alloc lists {} parity counts, expected n-1 = {}", l.len(), self.n - 1));
                }
                let total: usize = l.iter().sum();
                if total + self.b != self.n * self.j {
                    return bad(format!("alloc spends {total} parity bits but n*j - b = {}", self.n * self.j - self.b));
                }
                ParityProfile::from_parity(self.j, l).map_err(|e| CcsError::Config(e.to_string()))?;
            }
            Allocation::Optimize(_) => {
                if self.eps_tree.is_none() {
                    return bad("missing key `eps_tree`, required when alloc = \"optimize\"".into());
                }
            }
        }
        Ok(())
    }

    pub fn list_size(&self) -> usize {
        self.k.unwrap_or(self.ka + self.k_delta)
    }

    pub fn rows_per_slot(&self) -> usize {
        self.rows.unwrap_or_else(|| (3 * self.ka * self.j).max(1))
    }

    /// Total channel uses `N = n · rows`.
    pub fn channel_uses(&self) -> usize {
        self.n * self.rows_per_slot()
    }

    /// Symbol energy, from `es` directly or from the Eb/N0 target.
    pub fn symbol_energy(&self) -> Result<Option<f64>> {
        match (self.es, self.ebn0_db) {
            (Some(es), _) => Ok(Some(es)),
            (None, Some(db)) => es_for_ebn0(db, self.channel_uses(), self.b).map(Some),
            (None, None) => Ok(None),
        }
    }

    /// Parity counts `l_1..l_{n-1}`, running the optimizer if asked to.
    pub fn resolve_allocation(&self) -> Result<Vec<usize>> {
        match &self.alloc {
            Allocation::Explicit(l) => Ok(l.clone()),
            Allocation::Optimize(_) => {
                let eps = self.eps_tree.ok_or_else(|| CcsError::Config("missing key `eps_tree`".into()))?;
                let prob = OptProblem::new(self.b, self.n, self.j, self.list_size() as u64, eps)?;
                let out = optimize_allocation(&prob)?;
                if !out.feasible {
                    return Err(CcsError::Infeasible(format!(
                        "no allocation reaches E[L~_{}] <= {eps} (best {:.6})",
                        self.n - 1,
                        out.e_last
                    )));
                }
                Ok(out.l)
            }
        }
    }

    pub fn profile(&self) -> Result<ParityProfile> {
        ParityProfile::from_parity(self.j, &self.resolve_allocation()?)
    }

    pub fn nnls_options(&self) -> NnlsOptions {
        NnlsOptions { tol: self.nnls_tol, max_iters: self.nnls_max_iters }
    }

    /// A copy at a different Eb/N0, for sweeps.
    pub fn at_ebn0(&self, db: f64) -> Self {
        SimConfig { ebn0_db: Some(db), es: None, ..self.clone() }
    }

    /// A copy with a different number of active users, for sweeps. An
    /// explicit list size is shifted along with Ka.
    pub fn at_ka(&self, ka: usize) -> Self {
        let k = self.k.map(|k| (k + ka).saturating_sub(self.ka).max(1));
        SimConfig { ka, k, ..self.clone() }
    }
}
