//! Experiment configuration and its flat `section.key = value` text form.
//!
//! Lines are `section.key = value`; `#` starts a comment; lists are written
//! `[a, b, c]`. Printing emits every key, so a printed config is also the
//! table of resolved defaults.

use std::fmt::Write as _;
use std::str::FromStr;

use tlgamp::{AodModel, GampConfig, ScenarioKind, VisibilityModel};

use crate::error::{HarnessError, Result};

/// Keys that must appear in every config file.
pub const REQUIRED_KEYS: [&str; 1] = ["scenario.kind"];

/// Where the Phase-II beams point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AodMode {
    /// True departure angles.
    Perfect,
    /// Grid-correlation estimate from the Phase-I pilots.
    Grid,
}

impl FromStr for AodMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "perfect" => Ok(Self::Perfect),
            "grid" => Ok(Self::Grid),
            other => Err(format!("unknown aod mode `{other}`")),
        }
    }
}

impl std::fmt::Display for AodMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Perfect => "perfect",
            Self::Grid => "grid",
        })
    }
}

/// Estimators a trial can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    TlGamp,
    Ls,
    /// TL-GAMP with the true visibility masks.
    OracleVr,
    /// TL-GAMP on Phase-II beams steered at the true AoDs.
    OracleAod,
    OracleBoth,
    /// TL-GAMP with the support prior frozen at the visibility fraction.
    Ablation,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Self::TlGamp,
        Self::Ls,
        Self::OracleVr,
        Self::OracleAod,
        Self::OracleBoth,
        Self::Ablation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TlGamp => "tl_gamp",
            Self::Ls => "ls",
            Self::OracleVr => "oracle_vr",
            Self::OracleAod => "oracle_aod",
            Self::OracleBoth => "oracle_both",
            Self::Ablation => "ablation",
        }
    }

    pub fn uses_true_aods(self) -> bool {
        matches!(self, Self::OracleAod | Self::OracleBoth)
    }

    pub fn is_gamp(self) -> bool {
        self != Self::Ls
    }
}

impl FromStr for Estimator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown estimator `{s}`"))
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    pub n_rx: usize,
    pub n_tx: usize,
    pub carrier_hz: f64,
    pub n_paths: usize,
    pub distance_min_m: f64,
    pub distance_max_m: f64,
    pub ff_distance_m: f64,
    /// Visibility fraction of every path.
    pub vr_fraction: f64,
    pub vr_model: VisibilityModel,
    pub vr_p10: f64,
    pub vr_max_overlap: f64,
    pub aod_model: AodModel,
    pub gain_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSection {
    pub k_slots: usize,
    pub n_rf: usize,
    pub m: usize,
    /// Phase-I subframes.
    pub p0: usize,
    pub snr_db: f64,
    pub q: usize,
    pub aod_mode: AodMode,
    pub aod_grid_size: usize,
    /// Undo transmit-side leakage between paths with `(A_T^H A_T)^{-1}`.
    pub decorrelate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub vr: Vec<f64>,
    /// Total pilot lengths `M`.
    pub pilot: Vec<usize>,
    pub distance_m: Vec<f64>,
    /// Pilot length and SNR pinned by the distance sweep.
    pub distance_m_pilot: usize,
    pub distance_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSection {
    pub n_trials: usize,
    pub base_seed: u64,
    pub estimators: Vec<Estimator>,
    pub vr_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub protocol: ProtocolSection,
    pub gamp: GampConfig,
    pub sweep: SweepSection,
    pub experiment: ExperimentSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSection {
                kind: ScenarioKind::NfSns,
                n_rx: 256,
                n_tx: 16,
                carrier_hz: 30e9,
                n_paths: 4,
                distance_min_m: 2.0,
                distance_max_m: 10.0,
                ff_distance_m: 200.0,
                vr_fraction: 0.25,
                vr_model: VisibilityModel::ContiguousBlock,
                vr_p10: 0.05,
                vr_max_overlap: 0.5,
                aod_model: AodModel::OrthogonalGrid,
                gain_variance: 1.0,
            },
            protocol: ProtocolSection {
                k_slots: 16,
                n_rf: 8,
                m: 128,
                p0: 16,
                snr_db: 10.0,
                q: 512,
                aod_mode: AodMode::Grid,
                aod_grid_size: 64,
                decorrelate: true,
            },
            gamp: GampConfig::default(),
            sweep: SweepSection {
                snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
                vr: vec![0.2, 0.4, 0.6, 0.8, 1.0],
                pilot: vec![48, 64, 96, 128, 160, 192],
                distance_m: vec![2.0, 5.0, 10.0, 20.0, 50.0],
                distance_m_pilot: 96,
                distance_snr_db: 10.0,
            },
            experiment: ExperimentSection {
                n_trials: 100,
                base_seed: 1,
                estimators: vec![
                    Estimator::TlGamp,
                    Estimator::Ls,
                    Estimator::OracleVr,
                    Estimator::Ablation,
                ],
                vr_threshold: 0.5,
            },
        }
    }
}

fn fmt_list<T: std::fmt::Display>(v: &[T]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let inner = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("expected a list `[a, b, ...]`, got `{s}`"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<T>()
                .map_err(|e| format!("bad list item `{}`: {e}", x.trim()))
        })
        .collect()
}

fn parse_scalar<T: FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| format!("cannot parse `{s}`: {e}"))
}

fn parse_opt_f64(s: &str) -> std::result::Result<Option<f64>, String> {
    if s == "auto" || s == "none" {
        Ok(None)
    } else {
        parse_scalar(s).map(Some)
    }
}

/// Every key the parser accepts, in printing order.
pub const KEYS: &[&str] = &[
    "scenario.kind",
    "scenario.n_rx",
    "scenario.n_tx",
    "scenario.carrier_hz",
    "scenario.n_paths",
    "scenario.distance_min_m",
    "scenario.distance_max_m",
    "scenario.ff_distance_m",
    "scenario.vr_fraction",
    "scenario.vr_model",
    "scenario.vr_p10",
    "scenario.vr_max_overlap",
    "scenario.aod_model",
    "scenario.gain_variance",
    "protocol.k_slots",
    "protocol.n_rf",
    "protocol.m",
    "protocol.p0",
    "protocol.snr_db",
    "protocol.q",
    "protocol.aod_mode",
    "protocol.aod_grid_size",
    "protocol.decorrelate",
    "gamp.xi",
    "gamp.eta",
    "gamp.p10",
    "gamp.phi_init",
    "gamp.max_iter",
    "gamp.tol",
    "gamp.prob_clamp",
    "gamp.var_floor",
    "gamp.mode",
    "gamp.x_message",
    "gamp.x_inflation_cap",
    "gamp.damping",
    "gamp.onsager",
    "gamp.init_var",
    "gamp.beta_init",
    "gamp.beta_max",
    "sweep.snr_db",
    "sweep.vr",
    "sweep.pilot",
    "sweep.distance_m",
    "sweep.distance_m_pilot",
    "sweep.distance_snr_db",
    "experiment.n_trials",
    "experiment.base_seed",
    "experiment.estimators",
    "experiment.vr_threshold",
];

impl ExperimentConfig {
    fn get(&self, key: &str) -> String {
        let s = &self.scenario;
        let p = &self.protocol;
        let g = &self.gamp;
        let w = &self.sweep;
        let e = &self.experiment;
        match key {
            "scenario.kind" => s.kind.to_string(),
            "scenario.n_rx" => s.n_rx.to_string(),
            "scenario.n_tx" => s.n_tx.to_string(),
            "scenario.carrier_hz" => s.carrier_hz.to_string(),
            "scenario.n_paths" => s.n_paths.to_string(),
            "scenario.distance_min_m" => s.distance_min_m.to_string(),
            "scenario.distance_max_m" => s.distance_max_m.to_string(),
            "scenario.ff_distance_m" => s.ff_distance_m.to_string(),
            "scenario.vr_fraction" => s.vr_fraction.to_string(),
            "scenario.vr_model" => s.vr_model.to_string(),
            "scenario.vr_p10" => s.vr_p10.to_string(),
            "scenario.vr_max_overlap" => s.vr_max_overlap.to_string(),
            "scenario.aod_model" => s.aod_model.to_string(),
            "scenario.gain_variance" => s.gain_variance.to_string(),
            "protocol.k_slots" => p.k_slots.to_string(),
            "protocol.n_rf" => p.n_rf.to_string(),
            "protocol.m" => p.m.to_string(),
            "protocol.p0" => p.p0.to_string(),
            "protocol.snr_db" => p.snr_db.to_string(),
            "protocol.q" => p.q.to_string(),
            "protocol.aod_mode" => p.aod_mode.to_string(),
            "protocol.aod_grid_size" => p.aod_grid_size.to_string(),
            "protocol.decorrelate" => p.decorrelate.to_string(),
            "gamp.xi" => g.xi.to_string(),
            "gamp.eta" => g.eta.to_string(),
            "gamp.p10" => g.p10.to_string(),
            "gamp.phi_init" => g.phi_init.to_string(),
            "gamp.max_iter" => g.max_iter.to_string(),
            "gamp.tol" => g.tol.to_string(),
            "gamp.prob_clamp" => g.prob_clamp.to_string(),
            "gamp.var_floor" => g.var_floor.to_string(),
            "gamp.mode" => g.mode.to_string(),
            "gamp.x_message" => g.x_message.to_string(),
            "gamp.x_inflation_cap" => g.x_inflation_cap.to_string(),
            "gamp.damping" => g.damping.to_string(),
            "gamp.onsager" => g.onsager.to_string(),
            "gamp.init_var" => g
                .init_var
                .map_or_else(|| "auto".to_string(), |v| v.to_string()),
            "gamp.beta_init" => g
                .beta_init
                .map_or_else(|| "auto".to_string(), |v| v.to_string()),
            "gamp.beta_max" => g
                .beta_max
                .map_or_else(|| "none".to_string(), |v| v.to_string()),
            "sweep.snr_db" => fmt_list(&w.snr_db),
            "sweep.vr" => fmt_list(&w.vr),
            "sweep.pilot" => fmt_list(&w.pilot),
            "sweep.distance_m" => fmt_list(&w.distance_m),
            "sweep.distance_m_pilot" => w.distance_m_pilot.to_string(),
            "sweep.distance_snr_db" => w.distance_snr_db.to_string(),
            "experiment.n_trials" => e.n_trials.to_string(),
            "experiment.base_seed" => e.base_seed.to_string(),
            "experiment.estimators" => fmt_list(&e.estimators),
            "experiment.vr_threshold" => e.vr_threshold.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let s = &mut self.scenario;
        let p = &mut self.protocol;
        let g = &mut self.gamp;
        let w = &mut self.sweep;
        let e = &mut self.experiment;
        match key {
            "scenario.kind" => s.kind = v.parse().map_err(|e: tlgamp::Error| e.to_string())?,
            "scenario.n_rx" => s.n_rx = parse_scalar(v)?,
            "scenario.n_tx" => s.n_tx = parse_scalar(v)?,
            "scenario.carrier_hz" => s.carrier_hz = parse_scalar(v)?,
            "scenario.n_paths" => s.n_paths = parse_scalar(v)?,
            "scenario.distance_min_m" => s.distance_min_m = parse_scalar(v)?,
            "scenario.distance_max_m" => s.distance_max_m = parse_scalar(v)?,
            "scenario.ff_distance_m" => s.ff_distance_m = parse_scalar(v)?,
            "scenario.vr_fraction" => s.vr_fraction = parse_scalar(v)?,
            "scenario.vr_model" => {
                s.vr_model = v.parse().map_err(|e: tlgamp::Error| e.to_string())?
            }
            "scenario.vr_p10" => s.vr_p10 = parse_scalar(v)?,
            "scenario.vr_max_overlap" => s.vr_max_overlap = parse_scalar(v)?,
            "scenario.aod_model" => {
                s.aod_model = v.parse().map_err(|e: tlgamp::Error| e.to_string())?
            }
            "scenario.gain_variance" => s.gain_variance = parse_scalar(v)?,
            "protocol.k_slots" => p.k_slots = parse_scalar(v)?,
            "protocol.n_rf" => p.n_rf = parse_scalar(v)?,
            "protocol.m" => p.m = parse_scalar(v)?,
            "protocol.p0" => p.p0 = parse_scalar(v)?,
            "protocol.snr_db" => p.snr_db = parse_scalar(v)?,
            "protocol.q" => p.q = parse_scalar(v)?,
            "protocol.aod_mode" => p.aod_mode = parse_scalar(v)?,
            "protocol.aod_grid_size" => p.aod_grid_size = parse_scalar(v)?,
            "protocol.decorrelate" => p.decorrelate = parse_scalar(v)?,
            "gamp.xi" => g.xi = parse_scalar(v)?,
            "gamp.eta" => g.eta = parse_scalar(v)?,
            "gamp.p10" => g.p10 = parse_scalar(v)?,
            "gamp.phi_init" => g.phi_init = parse_scalar(v)?,
            "gamp.max_iter" => g.max_iter = parse_scalar(v)?,
            "gamp.tol" => g.tol = parse_scalar(v)?,
            "gamp.prob_clamp" => g.prob_clamp = parse_scalar(v)?,
            "gamp.var_floor" => g.var_floor = parse_scalar(v)?,
            "gamp.mode" => g.mode = v.parse().map_err(|e: tlgamp::Error| e.to_string())?,
            "gamp.x_message" => {
                g.x_message = v.parse().map_err(|e: tlgamp::Error| e.to_string())?
            }
            "gamp.x_inflation_cap" => g.x_inflation_cap = parse_scalar(v)?,
            "gamp.damping" => g.damping = parse_scalar(v)?,
            "gamp.onsager" => g.onsager = parse_scalar(v)?,
            "gamp.init_var" => g.init_var = parse_opt_f64(v)?,
            "gamp.beta_init" => g.beta_init = parse_opt_f64(v)?,
            "gamp.beta_max" => g.beta_max = parse_opt_f64(v)?,
            "sweep.snr_db" => w.snr_db = parse_list(v)?,
            "sweep.vr" => w.vr = parse_list(v)?,
            "sweep.pilot" => w.pilot = parse_list(v)?,
            "sweep.distance_m" => w.distance_m = parse_list(v)?,
            "sweep.distance_m_pilot" => w.distance_m_pilot = parse_scalar(v)?,
            "sweep.distance_snr_db" => w.distance_snr_db = parse_scalar(v)?,
            "experiment.n_trials" => e.n_trials = parse_scalar(v)?,
            "experiment.base_seed" => e.base_seed = parse_scalar(v)?,
            "experiment.estimators" => e.estimators = parse_list(v)?,
            "experiment.vr_threshold" => e.vr_threshold = parse_scalar(v)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parses and validates config text; unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Parse {
                line: line_no,
                msg: format!("expected `section.key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(HarnessError::Parse {
                    line: line_no,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            cfg.set(key, value).map_err(|msg| HarnessError::Parse {
                line: line_no,
                msg: format!("{key}: {msg}"),
            })?;
            seen.push(key.to_string());
        }
        for req in REQUIRED_KEYS {
            if !seen.iter().any(|k| k == req) {
                return Err(HarnessError::MissingKey(req.to_string()));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key with its resolved value, one per line.
    pub fn print(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let sec = key.split('.').next().unwrap_or("");
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = sec;
            }
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Invalid(msg));
        let s = &self.scenario;
        let p = &self.protocol;
        if !(s.n_rx > s.n_tx && s.n_tx > 0) {
            return bad(format!(
                "need n_rx > n_tx > 0, got n_rx = {}, n_tx = {}",
                s.n_rx, s.n_tx
            ));
        }
        if s.n_paths == 0 {
            return bad("scenario.n_paths must be at least 1".into());
        }
        if !(s.carrier_hz > 0.0 && s.carrier_hz.is_finite()) {
            return bad(format!(
                "scenario.carrier_hz must be positive, got {}",
                s.carrier_hz
            ));
        }
        if !(s.distance_min_m > 0.0 && s.distance_max_m >= s.distance_min_m) {
            return bad(
                "scenario distances must satisfy 0 < distance_min_m <= distance_max_m".into(),
            );
        }
        check_fraction("scenario.vr_fraction", s.vr_fraction)?;
        if !(s.vr_p10 > 0.0 && s.vr_p10 < 1.0) {
            return bad(format!(
                "scenario.vr_p10 must lie in (0, 1), got {}",
                s.vr_p10
            ));
        }
        if !(s.gain_variance > 0.0) {
            return bad("scenario.gain_variance must be positive".into());
        }
        if p.m != p.k_slots * p.n_rf {
            return bad(format!(
                "protocol.m must equal k_slots * n_rf ({} * {} = {}), got {}",
                p.k_slots,
                p.n_rf,
                p.k_slots * p.n_rf,
                p.m
            ));
        }
        if p.n_rf == 0 || p.n_rf > s.n_rx {
            return bad(format!(
                "protocol.n_rf must lie in 1..={}, got {}",
                s.n_rx, p.n_rf
            ));
        }
        if p.m > s.n_rx {
            return bad(format!(
                "protocol.m must not exceed n_rx = {}, got {}",
                s.n_rx, p.m
            ));
        }
        if p.q < s.n_rx {
            return bad(format!(
                "protocol.q must be at least n_rx = {}, got {}",
                s.n_rx, p.q
            ));
        }
        if p.aod_mode == AodMode::Grid && p.p0 < s.n_paths {
            return bad(format!(
                "protocol.p0 must be at least n_paths = {}, got {}",
                s.n_paths, p.p0
            ));
        }
        if !p.snr_db.is_finite() {
            return bad("protocol.snr_db must be finite".into());
        }
        self.gamp
            .validate()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        let w = &self.sweep;
        if w.snr_db.is_empty() || w.vr.is_empty() || w.pilot.is_empty() || w.distance_m.is_empty() {
            return bad("sweep lists must be non-empty".into());
        }
        for &f in &w.vr {
            check_fraction("sweep.vr", f)?;
        }
        for &m in w.pilot.iter().chain(std::iter::once(&w.distance_m_pilot)) {
            if m == 0 || m % p.n_rf != 0 || m > s.n_rx {
                return bad(format!(
                    "pilot length {m} must be a positive multiple of n_rf = {} not above n_rx = {}",
                    p.n_rf, s.n_rx
                ));
            }
        }
        if w.distance_m.iter().any(|&d| !(d > 0.0)) {
            return bad("sweep.distance_m entries must be positive".into());
        }
        let e = &self.experiment;
        if e.n_trials == 0 {
            return bad("experiment.n_trials must be at least 1".into());
        }
        if e.estimators.is_empty() {
            return bad("experiment.estimators must be non-empty".into());
        }
        if !(e.vr_threshold > 0.0 && e.vr_threshold < 1.0) {
            return bad(format!(
                "experiment.vr_threshold must lie in (0, 1), got {}",
                e.vr_threshold
            ));
        }
        Ok(())
    }
}

fn check_fraction(key: &str, f: f64) -> Result<()> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(HarnessError::Invalid(format!(
            "{key} must lie in (0, 1], got {f}"
        )))
    }
}
