//! JSON run manifest written next to every sweep CSV.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::sweep::SweepResult;

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact: String,
    pub version: String,
    pub command: String,
    /// Resolved config in the flat text format.
    pub config: String,
    pub base_seed: u64,
    pub n_trials: usize,
    pub axis: Option<String>,
    pub axis_values: Vec<f64>,
    pub seeds: Vec<Vec<u64>>,
    pub workers: Option<usize>,
    pub outputs: Vec<String>,
    pub diverged_trials: usize,
    pub wall_time_s: f64,
    /// Seconds since the Unix epoch; the only field that differs between reruns.
    pub created_unix_s: u64,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, workers: Option<usize>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA,
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: cfg.print(),
            base_seed: cfg.experiment.base_seed,
            n_trials: cfg.experiment.n_trials,
            axis: None,
            axis_values: Vec::new(),
            seeds: Vec::new(),
            workers,
            outputs: Vec::new(),
            diverged_trials: 0,
            wall_time_s: 0.0,
            created_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    pub fn with_sweep(mut self, res: &SweepResult) -> Self {
        self.axis = Some(res.axis.to_string());
        // the iterations axis value is an iteration count, not a sweep input
        self.axis_values = res.axis_values.clone();
        self.seeds = res.seeds.clone();
        self.diverged_trials = res.diverged_trials;
        self.wall_time_s = res.wall_time_s;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Invalid(format!("bad manifest: {e}")))
    }

    /// Re-parses the embedded config.
    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(&self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_config() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.base_seed = 99;
        cfg.sweep.snr_db = vec![0.0, 2.5];
        let mut m = RunManifest::new("sweep", &cfg, Some(2));
        m.outputs.push("out.csv".into());
        let back = RunManifest::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.config().unwrap(), cfg);
    }
}
