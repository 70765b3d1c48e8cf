//! Experiment configuration, Monte Carlo drivers and result files.

mod config;
mod output;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::channel::FrameConfig;
use crate::constellation::CoprimePair;
use crate::{Error, Result};

pub use config::{parse_key_values, ConfigOverrides};
pub use output::{emit_results, load_json, write_csv, OutputFormat, CSV_HEADER};
pub use sweep::{
    estimate_diversity_slope, run_ber_sweep, run_identify_roundtrip, splitmix64, trial_rng,
    trial_seed, RoundtripSummary, SlopeFit, SnrPoint, SweepResult,
};

/// Frame errors an SNR point needs before it enters a slope fit.
pub const DEFAULT_MIN_ERRORS: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    IdentifyRoundtrip,
    BerSweep,
    RankCheck,
    DecomposeDemo,
}

/// Everything that determines an experiment's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub k: usize,
    pub l: usize,
    pub t: usize,
    pub p: u32,
    pub q: u32,
    pub z_order: u32,
    pub punctured_y: bool,
    pub snr_grid_db: Vec<f64>,
    pub trials_per_point: u64,
    pub master_seed: u64,
    pub min_errors: u64,
    pub mode: Mode,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            k: 2,
            l: 2,
            t: 2,
            p: 2,
            q: 3,
            z_order: 2,
            punctured_y: false,
            snr_grid_db: snr_grid(10.0, 30.0, 2.0).expect("valid default grid"),
            trials_per_point: 10_000,
            master_seed: 1,
            min_errors: DEFAULT_MIN_ERRORS,
            mode: Mode::BerSweep,
        }
    }
}

impl ExperimentSpec {
    pub fn frame_config(&self) -> Result<FrameConfig> {
        let pair = CoprimePair::new(self.p, self.q)?;
        FrameConfig::new(self.k, self.l, self.t, pair, self.z_order, self.punctured_y)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame_config()?;
        if self.trials_per_point == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR grid must be finite".into()));
        }
        if self.snr_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("SNR grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// `from, from + step, ...` up to and including `to`.
pub fn snr_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(from.is_finite() && to.is_finite() && step.is_finite()) {
        return Err(Error::Config("SNR range must be finite".into()));
    }
    if step <= 0.0 {
        return Err(Error::Config("SNR step must be positive".into()));
    }
    if to < from {
        return Err(Error::Config("snr-to is below snr-from".into()));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}
