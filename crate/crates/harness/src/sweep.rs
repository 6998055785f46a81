//! Parameter sweeps over a bounded worker pool with ordered aggregation.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{Estimator, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::seed::trial_seed;
use crate::trial::{run_trial_detailed, TrialResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Snr,
    Vr,
    Pilot,
    Distance,
    Iterations,
}

impl Axis {
    pub const ALL: [Axis; 5] = [
        Self::Snr,
        Self::Vr,
        Self::Pilot,
        Self::Distance,
        Self::Iterations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Snr => "snr",
            Self::Vr => "vr",
            Self::Pilot => "pilot",
            Self::Distance => "distance",
            Self::Iterations => "iterations",
        }
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "snr" => Ok(Self::Snr),
            "vr" | "vr_size" => Ok(Self::Vr),
            "pilot" | "pilot_len" => Ok(Self::Pilot),
            "distance" => Ok(Self::Distance),
            "iterations" => Ok(Self::Iterations),
            other => Err(format!("unknown sweep axis `{other}`")),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub estimator: Estimator,
    pub median_db: f64,
    pub p10_db: f64,
    pub p90_db: f64,
    pub mean_db: f64,
    /// Trials contributing a finite value.
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: Axis,
    pub axis_values: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Trial seeds per axis point.
    pub seeds: Vec<Vec<u64>>,
    /// Trials in which some estimator flagged divergence.
    pub diverged_trials: usize,
    pub wall_time_s: f64,
}

pub const CSV_HEADER: &str = "axis_value,estimator,median_db,p10_db,p90_db,mean_db,n";

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4},{:.4},{:.4},{}",
                r.axis_value, r.estimator, r.median_db, r.p10_db, r.p90_db, r.mean_db, r.n
            );
        }
        out
    }

    pub fn row(&self, axis_value: f64, est: Estimator) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == est && r.axis_value == axis_value)
    }

    /// Human-readable table of medians, one line per axis value.
    pub fn summary_table(&self, estimators: &[Estimator]) -> String {
        let mut out = format!("{:>10}", self.axis.as_str());
        for e in estimators {
            let _ = write!(out, " {:>12}", e.as_str());
        }
        out.push('\n');
        for &v in &self.axis_values {
            let _ = write!(out, "{v:>10}");
            for &e in estimators {
                match self.row(v, e) {
                    Some(r) => {
                        let _ = write!(out, " {:>12.2}", r.median_db);
                    }
                    None => {
                        let _ = write!(out, " {:>12}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Median, 10th and 90th percentile and mean of the finite values.
pub fn summarize(values: &[f64]) -> (f64, f64, f64, f64, usize) {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let mean = if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    };
    (
        percentile(&v, 0.5),
        percentile(&v, 0.1),
        percentile(&v, 0.9),
        mean,
        v.len(),
    )
}

/// Configs of every point along `axis`.
pub fn axis_points(cfg: &ExperimentConfig, axis: Axis) -> Vec<(f64, ExperimentConfig)> {
    let with = |f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = cfg.clone();
        f(&mut c);
        c
    };
    match axis {
        Axis::Snr => cfg
            .sweep
            .snr_db
            .iter()
            .map(|&s| (s, with(&|c| c.protocol.snr_db = s)))
            .collect(),
        Axis::Vr => cfg
            .sweep
            .vr
            .iter()
            .map(|&f| (f, with(&|c| c.scenario.vr_fraction = f)))
            .collect(),
        Axis::Pilot => cfg
            .sweep
            .pilot
            .iter()
            .map(|&m| (m as f64, with(&|c| set_pilot(c, m))))
            .collect(),
        Axis::Distance => cfg
            .sweep
            .distance_m
            .iter()
            .map(|&d| {
                (
                    d,
                    with(&|c| {
                        set_pilot(c, c.sweep.distance_m_pilot);
                        c.protocol.snr_db = c.sweep.distance_snr_db;
                        c.scenario.distance_min_m = d;
                        c.scenario.distance_max_m = d;
                    }),
                )
            })
            .collect(),
        Axis::Iterations => vec![(f64::NAN, cfg.clone())],
    }
}

fn set_pilot(c: &mut ExperimentConfig, m: usize) {
    c.protocol.m = m;
    c.protocol.k_slots = m / c.protocol.n_rf;
}

fn run_point(
    cfg: &ExperimentConfig,
    point: usize,
    history: bool,
) -> Result<(Vec<u64>, Vec<TrialResult>)> {
    let base = cfg.experiment.base_seed;
    let seeds: Vec<u64> = (0..cfg.experiment.n_trials)
        .map(|t| trial_seed(base, t, point))
        .collect();
    // collect keeps trial order, so the reduction below is order-independent of scheduling
    let results: Vec<Result<TrialResult>> = seeds
        .par_iter()
        .map(|&s| run_trial_detailed(cfg, s, history).map(|d| d.result))
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((seeds, results))
}

/// Runs `n_trials` seeded trials at every point of `axis` on `workers`
/// threads (`None` uses every logical core).
pub fn sweep(cfg: &ExperimentConfig, axis: Axis, workers: Option<usize>) -> Result<SweepResult> {
    cfg.validate()?;
    let points = axis_points(cfg, axis);
    for (_, c) in &points {
        c.validate()?;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Invalid(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let estimators = &cfg.experiment.estimators;
    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    let mut diverged_trials = 0;
    let mut axis_values = Vec::new();

    if axis == Axis::Iterations {
        let (s, results) = pool.install(|| run_point(cfg, 0, true))?;
        diverged_trials += results
            .iter()
            .filter(|r| r.outcomes.iter().any(|o| o.diverged))
            .count();
        seeds.push(s);
        for it in 0..cfg.gamp.max_iter {
            axis_values.push((it + 1) as f64);
            for &e in estimators {
                let vals: Vec<f64> = results
                    .iter()
                    .filter_map(|r| r.get(e))
                    .map(|o| o.trace_db.get(it).copied().unwrap_or(o.nmse_db))
                    .collect();
                rows.push(make_row((it + 1) as f64, e, &vals));
            }
        }
    } else {
        for (idx, (value, c)) in points.iter().enumerate() {
            let (s, results) = pool.install(|| run_point(c, idx, false))?;
            diverged_trials += results
                .iter()
                .filter(|r| r.outcomes.iter().any(|o| o.diverged))
                .count();
            seeds.push(s);
            axis_values.push(*value);
            for &e in estimators {
                let vals: Vec<f64> = results
                    .iter()
                    .filter_map(|r| r.get(e))
                    .map(|o| o.nmse_db)
                    .collect();
                rows.push(make_row(*value, e, &vals));
            }
        }
    }

    Ok(SweepResult {
        axis,
        axis_values,
        rows,
        seeds,
        diverged_trials,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn make_row(axis_value: f64, estimator: Estimator, vals: &[f64]) -> SweepRow {
    let (median_db, p10_db, p90_db, mean_db, n) = summarize(vals);
    SweepRow {
        axis_value,
        estimator,
        median_db,
        p10_db,
        p90_db,
        mean_db,
        n,
    }
}
