use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use tlgamp_harness::{run_trial_detailed, trial_seed, ExperimentConfig, RunManifest, CSV_HEADER};

const SMALL: &str = "scenario.kind = nf_sns
scenario.n_rx = 64
scenario.n_paths = 2
protocol.k_slots = 6
protocol.m = 48
protocol.q = 128
sweep.pilot = [48]
sweep.distance_m_pilot = 48
experiment.n_trials = 3
";

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlgamp"))
        .args(args)
        .current_dir(dir)
        .env_remove("TLGAMP_BASE_SEED")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(text: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.cfg"), text).unwrap();
    dir
}

#[test]
fn validate_prints_every_default() {
    let dir = setup("scenario.kind = nf_sns\n");
    let o = run(&["validate", "run.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(
        ExperimentConfig::parse(&text).unwrap(),
        ExperimentConfig::default()
    );
}

#[test]
fn missing_key_exits_with_config_error_naming_it() {
    let dir = setup("protocol.snr_db = 3\n");
    let o = run(&["validate", "run.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scenario.kind"), "{}", stderr(&o));
}

#[test]
fn bad_values_and_unreadable_configs_are_config_errors() {
    let dir = setup("scenario.kind = nf_sns\ngamp.damping = 0\n");
    let o = run(&["validate", "run.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = run(&["validate", "missing.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_with_two() {
    // a subnormal gain variance leaves the channel with no measurable power
    let dir = setup(&format!("{SMALL}scenario.gain_variance = 5e-324\n"));
    let o = run(&["estimate", "run.cfg", "--out", "dump"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = setup(SMALL);
    fs::write(dir.path().join("blocker"), "").unwrap();
    let o = run(
        &["estimate", "run.cfg", "--out", "blocker/dump"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn estimate_dump_matches_the_harness() {
    let dir = setup(SMALL);
    let o = run(
        &["estimate", "run.cfg", "--seed", "11", "--out", "dump"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dump = dir.path().join("dump");

    let mut cfg = ExperimentConfig::parse(SMALL).unwrap();
    cfg.experiment.base_seed = 11;
    let detail = run_trial_detailed(&cfg, trial_seed(11, 0, 0), false).unwrap();
    assert_eq!(detail.paths.len(), 2);

    let summary = fs::read_to_string(dump.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("estimator,nmse_db,diverged"));
    assert_eq!(summary.lines().count(), 1 + cfg.experiment.estimators.len());

    for (i, p) in detail.paths.iter().enumerate() {
        let text = fs::read_to_string(dump.join(format!("path{i}_beliefs.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("antenna,belief,pi_in,mask,t_hat_re,t_hat_im,truth_re,truth_im")
        );
        let mut rows = 0;
        for (n, line) in lines.enumerate() {
            let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert_eq!(f[0], n as f64);
            assert_eq!(f[1], p.estimate.s_belief[n]);
            assert_eq!(f[4], p.estimate.t_hat[n].re);
            assert_eq!(f[5], p.estimate.t_hat[n].im);
            rows += 1;
        }
        assert_eq!(rows, 64);
        let coeffs = fs::read_to_string(dump.join(format!("path{i}_coeffs.csv"))).unwrap();
        assert_eq!(coeffs.lines().next(), Some("q,c_re,c_im"));
        assert_eq!(coeffs.lines().count(), 1 + 128);
        let trace = fs::read_to_string(dump.join(format!("path{i}_trace.csv"))).unwrap();
        assert_eq!(trace.lines().count(), 1 + p.estimate.trace.len());
    }
    let manifest =
        RunManifest::from_json(&fs::read_to_string(dump.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config().unwrap(), cfg);
}

#[test]
fn sweep_writes_one_row_per_point_and_estimator() {
    let dir = setup(&format!(
        "{SMALL}sweep.snr_db = [0, 10, 20]\nexperiment.estimators = [tl_gamp, ls]\n"
    ));
    let o = run(
        &[
            "sweep",
            "run.cfg",
            "--axis",
            "snr",
            "--workers",
            "2",
            "--out",
            "s.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 3 * 2);
    let manifest =
        RunManifest::from_json(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(manifest.seeds.len(), 3);

    // same seed from the environment, another worker count, same bytes
    let o = Command::new(env!("CARGO_BIN_EXE_tlgamp"))
        .args([
            "sweep",
            "run.cfg",
            "--axis",
            "snr",
            "--workers",
            "1",
            "--out",
            "t.csv",
        ])
        .current_dir(dir.path())
        .env("TLGAMP_BASE_SEED", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(dir.path().join("t.csv")).unwrap(), csv);
}

#[test]
fn unknown_axis_is_rejected_by_the_parser() {
    let dir = setup(SMALL);
    let o = run(&["sweep", "run.cfg", "--axis", "time"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown sweep axis"));
}
