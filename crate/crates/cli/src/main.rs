//! `tlgamp`: validate configs, run single trials and parameter sweeps.
//!
//! Exit codes: 0 success, 1 config or usage error, 2 estimator divergence or
//! runtime failure, 3 I/O error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tlgamp_harness::{
    run_trial_detailed, sweep, trial_seed, Axis, ExperimentConfig, HarnessError, RunManifest,
};

const SEED_ENV: &str = "TLGAMP_BASE_SEED";

#[derive(Parser)]
#[command(
    name = "tlgamp",
    version,
    about = "TL-GAMP channel estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a config and print it with every default resolved.
    Validate { config: PathBuf },
    /// Run one trial and dump per-path beliefs, estimates and traces as CSV.
    Estimate {
        config: PathBuf,
        /// Base seed; overrides the config and the environment.
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
        /// Dump directory.
        #[arg(long, default_value = "tlgamp_estimate")]
        out: PathBuf,
    },
    /// Run a seeded sweep and write its CSV plus a JSON manifest.
    Sweep {
        config: PathBuf,
        #[arg(long, value_parser = parse_axis)]
        axis: Axis,
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
        /// Worker threads; defaults to every logical core.
        #[arg(long)]
        workers: Option<usize>,
        /// CSV path; the manifest goes next to it with a `.json` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse()
}

enum Failure {
    Config(String),
    Runtime(String),
    Io(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io { .. } => Failure::Io(e.to_string()),
            e if e.is_config() => Failure::Config(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.experiment.base_seed = s;
    }
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn cmd_validate(config: &Path) -> Result<bool, Failure> {
    let cfg = load(config, None)?;
    print!("{}", cfg.print());
    Ok(true)
}

fn cmd_estimate(config: &Path, seed: Option<u64>, out: &Path) -> Result<bool, Failure> {
    let cfg = load(config, seed)?;
    let s = trial_seed(cfg.experiment.base_seed, 0, 0);
    let detail = run_trial_detailed(&cfg, s, false)?;
    fs::create_dir_all(out)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", out.display())))?;

    let mut summary = String::from("estimator,nmse_db,diverged\n");
    for o in &detail.result.outcomes {
        let _ = writeln!(summary, "{},{:.4},{}", o.estimator, o.nmse_db, o.diverged);
    }
    write(&out.join("summary.csv"), &summary)?;

    for (i, p) in detail.paths.iter().enumerate() {
        let e = &p.estimate;
        let truth = &detail.channel.subchannels[p.truth_index];
        let mask = &detail.channel.paths[p.truth_index].visibility.mask;
        let mut b = String::from("antenna,belief,pi_in,mask,t_hat_re,t_hat_im,truth_re,truth_im\n");
        for n in 0..e.t_hat.len() {
            let _ = writeln!(
                b,
                "{n},{},{},{},{},{},{},{}",
                e.s_belief[n],
                e.pi_in[n],
                u8::from(mask[n]),
                e.t_hat[n].re,
                e.t_hat[n].im,
                truth[n].re,
                truth[n].im
            );
        }
        write(&out.join(format!("path{i}_beliefs.csv")), &b)?;
        let mut c = String::from("q,c_re,c_im\n");
        for (q, z) in e.c_hat.iter().enumerate() {
            let _ = writeln!(c, "{q},{},{}", z.re, z.im);
        }
        write(&out.join(format!("path{i}_coeffs.csv")), &c)?;
        write(&out.join(format!("path{i}_trace.csv")), &e.trace_csv())?;
    }
    let mut manifest = RunManifest::new("estimate", &cfg, None);
    manifest.seeds = vec![vec![s]];
    manifest.wall_time_s = detail.result.wall_time_s;
    manifest.outputs = fs::read_dir(out)
        .map_err(|e| Failure::Io(e.to_string()))?
        .filter_map(|d| d.ok().map(|d| d.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.ends_with(".csv"))
        .collect();
    manifest.outputs.sort();
    write(&out.join("manifest.json"), &manifest.to_json())?;

    print!("{summary}");
    let diverged = detail.result.outcomes.iter().any(|o| o.diverged);
    if diverged {
        eprintln!("warning: an estimator diverged; its best iterate was dumped");
    }
    Ok(!diverged)
}

fn cmd_sweep(
    config: &Path,
    axis: Axis,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
) -> Result<bool, Failure> {
    let cfg = load(config, seed)?;
    let csv_path = out.unwrap_or_else(|| PathBuf::from(format!("sweep_{axis}.csv")));
    let res = sweep(&cfg, axis, workers)?;
    write(&csv_path, &res.to_csv())?;
    let mut manifest = RunManifest::new("sweep", &cfg, workers).with_sweep(&res);
    manifest.outputs = vec![csv_path.display().to_string()];
    write(&csv_path.with_extension("json"), &manifest.to_json())?;
    print!("{}", res.summary_table(&cfg.experiment.estimators));
    println!(
        "{} trials per point, {} with a divergence flag, {:.1} s",
        cfg.experiment.n_trials, res.diverged_trials, res.wall_time_s
    );
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage mistakes count as config errors; --help and --version succeed
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    let outcome = match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Estimate { config, seed, out } => cmd_estimate(&config, seed, &out),
        Command::Sweep {
            config,
            axis,
            seed,
            workers,
            out,
        } => cmd_sweep(&config, axis, seed, workers, out),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(3)
        }
    }
}
