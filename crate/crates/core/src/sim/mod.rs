//! End-to-end Monte Carlo: configuration, trials with SIC, campaigns, sweeps.

pub mod campaign;
pub mod config;
pub mod survivors;
pub mod trial;

pub use campaign::{run_campaign, sweep_ebn0, sweep_ka, wilson_interval, write_csv, CampaignReport, CSV_HEADER};
pub use config::{Allocation, CodebookMode, MatrixSource, Mode, SimConfig};
pub use survivors::{simulate_survivors, SurvivorCurve};
pub use trial::{run_trial, Setup, TrialReport, TrialState};
