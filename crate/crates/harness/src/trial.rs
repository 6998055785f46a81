//! One seeded Monte Carlo realization: channel draw, both pilot phases, every
//! configured estimator and its metrics.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlgamp::{
    assemble_full_channel, beam_align_observe, build_dictionary, estimate_aods_grid,
    frozen_support_run, gen_combiners, make_scenario, nmse_db, noise_variance_for_snr,
    oracle_vr_run, phase_one_beams, run_subchannel_estimation, simulate_subframe, steer_tx,
    vr_metrics, ArrayGeometry, ChannelRealization, CombinerSet, DictionaryF64, EstimateF64,
    LsEstimator, NoiseModel, ObservationF64, Preprocessor, ScenarioConfig, ScenarioKind,
    VrFraction, VrMetrics, C64,
};

use crate::config::{AodMode, Estimator, ExperimentConfig};
use crate::error::Result;
use crate::seed::mix;

/// Result of one estimator on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutcome {
    pub estimator: Estimator,
    /// Full-channel NMSE.
    pub nmse_db: f64,
    pub per_path_nmse_db: Vec<f64>,
    /// Per-path mask detection scores; empty for LS.
    pub vr: Vec<VrMetrics>,
    pub diverged: bool,
    /// Iterations run, per path.
    pub iterations: Vec<usize>,
    /// Full-channel NMSE after each iteration, when history was requested.
    pub trace_db: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub seed: u64,
    pub outcomes: Vec<EstimatorOutcome>,
    /// Paths for which Phase I found no AoD peak.
    pub aod_misses: usize,
    pub wall_time_s: f64,
}

impl TrialResult {
    pub fn get(&self, est: Estimator) -> Option<&EstimatorOutcome> {
        self.outcomes.iter().find(|o| o.estimator == est)
    }
}

/// Per-path TL-GAMP output kept for dumping.
#[derive(Debug, Clone)]
pub struct PathDetail {
    pub aod_rad: f64,
    /// Index of the true path this beam was matched to.
    pub truth_index: usize,
    pub estimate: EstimateF64,
}

#[derive(Debug, Clone)]
pub struct TrialDetail {
    pub result: TrialResult,
    pub channel: ChannelRealization<f64>,
    /// TL-GAMP per-path detail; empty when `tl_gamp` is not configured.
    pub paths: Vec<PathDetail>,
}

/// Phase-II observations for one set of beam directions.
struct BeamSet {
    aods: Vec<f64>,
    truth_index: Vec<usize>,
    observations: Vec<ObservationF64>,
    raw: Vec<DVector<C64>>,
}

fn scenario_for(cfg: &ExperimentConfig) -> Result<(ScenarioKind, ScenarioConfig<f64>)> {
    let s = &cfg.scenario;
    let geo = ArrayGeometry::new(s.n_rx, s.n_tx, s.carrier_hz)?;
    let mut sc = ScenarioConfig::new(geo, s.n_paths);
    sc.distance_min_m = s.distance_min_m;
    sc.distance_max_m = s.distance_max_m;
    sc.ff_distance_m = s.ff_distance_m;
    sc.vr_fraction = VrFraction::Fixed(s.vr_fraction);
    sc.vr_model = s.vr_model;
    sc.vr_markov_p10 = s.vr_p10;
    sc.vr_max_overlap = s.vr_max_overlap;
    sc.aod_model = s.aod_model;
    sc.gain_variance = s.gain_variance;
    // a fully visible path is the stationary special case
    let kind = if s.kind == ScenarioKind::NfSns && s.vr_fraction >= 1.0 {
        ScenarioKind::NfSs
    } else {
        s.kind
    };
    Ok((kind, sc))
}

/// Matches each beam to the true path with the nearest spatial frequency,
/// greedily in order of closeness.
fn match_paths(est: &[f64], truth: &[f64]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in est.iter().enumerate() {
        for (j, b) in truth.iter().enumerate() {
            pairs.push(((a.sin() - b.sin()).abs(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut out = vec![usize::MAX; est.len()];
    let mut used = vec![false; truth.len()];
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && !used[j] {
            out[i] = j;
            used[j] = true;
        }
    }
    // more beams than paths cannot happen, but stay total
    for (i, o) in out.iter_mut().enumerate() {
        if *o == usize::MAX {
            *o = i.min(truth.len() - 1);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn observe_beams(
    ch: &ChannelRealization<f64>,
    aods: Vec<f64>,
    truth_index: Vec<usize>,
    geo: &ArrayGeometry<f64>,
    w: &CombinerSet<f64>,
    pre: &Preprocessor<f64>,
    dict: &DictionaryF64,
    noise_var: f64,
    snr_db: f64,
    decorrelate: bool,
    rng: &mut ChaCha8Rng,
) -> Result<BeamSet> {
    let frames = beam_align_observe(&ch.matrix, &aods, geo, w, noise_var, rng)?;
    let mut y = DMatrix::zeros(w.m(), aods.len());
    for (i, f) in frames.iter().enumerate() {
        y.set_column(i, &f.received());
    }
    if decorrelate && aods.len() > 1 {
        let at = DMatrix::from_columns(&aods.iter().map(|&a| steer_tx(a, geo)).collect::<Vec<_>>());
        // coinciding beams leave the Gram matrix singular; keep the raw frames then
        if let Some(inv) = at.ad_mul(&at).try_inverse() {
            y *= inv;
        }
    }
    let mut observations = Vec::with_capacity(aods.len());
    let mut raw = Vec::with_capacity(aods.len());
    for i in 0..aods.len() {
        let yi: DVector<C64> = y.column(i).into();
        observations.push(pre.observe(&yi, dict, snr_db)?);
        raw.push(yi);
    }
    Ok(BeamSet {
        aods,
        truth_index,
        observations,
        raw,
    })
}

fn history_trace(
    runs: &[EstimateF64],
    aods: &[f64],
    geo: &ArrayGeometry<f64>,
    truth: &DMatrix<C64>,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = geo.n_rx;
    let mut out = Vec::with_capacity(max_iter);
    for it in 0..max_iter {
        let ts: Vec<DVector<C64>> = runs
            .iter()
            .map(|r| match r.history.len() {
                0 => DVector::zeros(n),
                len => r.history[it.min(len - 1)].clone(),
            })
            .collect();
        let h = assemble_full_channel(&ts, aods, geo)?;
        out.push(nmse_db(h.as_slice(), truth.as_slice())?);
    }
    Ok(out)
}

/// Runs one trial and keeps per-path detail.
pub fn run_trial_detailed(
    cfg: &ExperimentConfig,
    seed: u64,
    keep_history: bool,
) -> Result<TrialDetail> {
    cfg.validate()?;
    let start = Instant::now();
    let (kind, sc) = scenario_for(cfg)?;
    let geo = sc.geometry;
    let p = &cfg.protocol;
    let l = sc.n_paths;

    let mut rng_channel = ChaCha8Rng::seed_from_u64(mix(seed, 1));
    let mut rng_comb = ChaCha8Rng::seed_from_u64(mix(seed, 2));
    let mut rng_phase1 = ChaCha8Rng::seed_from_u64(mix(seed, 3));
    let mut rng_est = ChaCha8Rng::seed_from_u64(mix(seed, 4));
    let mut rng_true = ChaCha8Rng::seed_from_u64(mix(seed, 5));

    let ch = make_scenario(kind, &sc, &mut rng_channel)?;
    let w = gen_combiners::<f64, _>(p.k_slots, geo.n_rx, p.n_rf, &mut rng_comb)?;
    let true_aods = ch.aods();

    // receive SNR of the beam-aligned Phase-II frames
    let signal: f64 = true_aods
        .iter()
        .map(|&a| (w.stacked.adjoint() * (&ch.matrix * steer_tx(a, &geo))).norm_squared())
        .sum::<f64>()
        / l as f64;
    let noise_var = noise_variance_for_snr(signal, &w, p.snr_db)?;
    let noise = NoiseModel::new(noise_var, &w)?;
    let pre = Preprocessor::new(&w, &noise)?;
    let dict = build_dictionary::<f64>(geo.n_rx, p.q)?;

    let mut gcfg = cfg.gamp.clone();
    gcfg.keep_history = keep_history;

    let wants_est = cfg
        .experiment
        .estimators
        .iter()
        .any(|e| !e.uses_true_aods());
    let wants_true = cfg.experiment.estimators.iter().any(|e| e.uses_true_aods());
    let identity: Vec<usize> = (0..l).collect();

    let mut aod_misses = 0;
    let est_set = if wants_est {
        let (aods, idx) = match p.aod_mode {
            AodMode::Perfect => (true_aods.clone(), identity.clone()),
            AodMode::Grid => {
                let beams = phase_one_beams(&geo, p.p0, &mut rng_phase1);
                let mut y0 = DMatrix::zeros(w.m(), p.p0);
                for j in 0..p.p0 {
                    let f: DVector<C64> = beams.column(j).into();
                    let sf = simulate_subframe(&ch.matrix, &f, &w, noise_var, &mut rng_phase1)?;
                    y0.set_column(j, &sf.received());
                }
                let est = estimate_aods_grid(&y0, &beams, &geo, l, p.aod_grid_size)?;
                aod_misses = est.missing;
                let idx = match_paths(&est.angles, &true_aods);
                (est.angles, idx)
            }
        };
        Some(observe_beams(
            &ch,
            aods,
            idx,
            &geo,
            &w,
            &pre,
            &dict,
            noise_var,
            p.snr_db,
            p.decorrelate,
            &mut rng_est,
        )?)
    } else {
        None
    };
    let true_set = if wants_true {
        Some(observe_beams(
            &ch,
            true_aods.clone(),
            identity,
            &geo,
            &w,
            &pre,
            &dict,
            noise_var,
            p.snr_db,
            p.decorrelate,
            &mut rng_true,
        )?)
    } else {
        None
    };

    let threshold = cfg.experiment.vr_threshold;
    let mut outcomes = Vec::with_capacity(cfg.experiment.estimators.len());
    let mut paths = Vec::new();
    for &est in &cfg.experiment.estimators {
        let set = if est.uses_true_aods() {
            true_set.as_ref()
        } else {
            est_set.as_ref()
        }
        .expect("beam set prepared for every configured estimator");
        let mut t_hats = Vec::with_capacity(set.aods.len());
        let mut runs = Vec::new();
        let mut vr = Vec::new();
        let mut diverged = false;
        let mut iterations = Vec::new();
        if est == Estimator::Ls {
            let ls = LsEstimator::new(&w)?;
            for y in &set.raw {
                t_hats.push(ls.estimate(y)?);
            }
        } else {
            for (i, obs) in set.observations.iter().enumerate() {
                let j = set.truth_index[i];
                let truth = &ch.subchannels[j];
                let mask = &ch.paths[j].visibility;
                let run = match est {
                    Estimator::TlGamp | Estimator::OracleAod => {
                        run_subchannel_estimation(obs, &gcfg, Some(truth))?
                    }
                    Estimator::OracleVr | Estimator::OracleBoth => {
                        oracle_vr_run(obs, &gcfg, mask, Some(truth))?
                    }
                    Estimator::Ablation => {
                        frozen_support_run(obs, &gcfg, cfg.scenario.vr_fraction, Some(truth))?
                    }
                    Estimator::Ls => unreachable!(),
                };
                vr.push(vr_metrics(run.s_belief.as_slice(), mask, threshold)?);
                diverged |= run.diverged;
                iterations.push(run.iters_run);
                t_hats.push(run.t_hat.clone());
                runs.push(run);
            }
        }
        let per_path_nmse_db = t_hats
            .iter()
            .zip(&set.truth_index)
            .map(|(t, &j)| nmse_db(t.as_slice(), ch.subchannels[j].as_slice()))
            .collect::<tlgamp::Result<Vec<_>>>()?;
        let h = assemble_full_channel(&t_hats, &set.aods, &geo)?;
        let nmse = nmse_db(h.as_slice(), ch.matrix.as_slice())?;
        let trace_db = if keep_history && est.is_gamp() {
            history_trace(&runs, &set.aods, &geo, &ch.matrix, cfg.gamp.max_iter)?
        } else {
            Vec::new()
        };
        if est == Estimator::TlGamp {
            paths = runs
                .into_iter()
                .enumerate()
                .map(|(i, estimate)| PathDetail {
                    aod_rad: set.aods[i],
                    truth_index: set.truth_index[i],
                    estimate,
                })
                .collect();
        }
        outcomes.push(EstimatorOutcome {
            estimator: est,
            nmse_db: nmse,
            per_path_nmse_db,
            vr,
            diverged,
            iterations,
            trace_db,
        });
    }

    Ok(TrialDetail {
        result: TrialResult {
            seed,
            outcomes,
            aod_misses,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        channel: ch,
        paths,
    })
}

/// Runs one trial; fully determined by `(cfg, seed)` apart from the wall time.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialResult> {
    run_trial_detailed(cfg, seed, false).map(|d| d.result)
}
