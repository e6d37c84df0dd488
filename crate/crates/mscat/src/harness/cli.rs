//! The `mscat` command line interface.
//!
//! Exit codes: 0 on success, 1 on configuration/usage errors, 2 on runtime
//! failures. The default worker count comes from `MSCAT_THREADS`, overridden
//! by `--threads`.

use super::{report, run_experiment_with_threads, ExperimentConfig, HarnessError};
use crate::datagen;
use crate::doa;
use crate::estimator;
use crate::weights::WeightFunction;
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

const THREADS_ENV: &str = "MSCAT_THREADS";

#[derive(Parser)]
#[command(
    name = "mscat",
    version,
    about = "Robust scatter estimation experiments and direction finding",
    after_help = "Config files are JSON documents; see the README for the schema.\n\
                  Reports are deterministic for a fixed config and seed, for any thread count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment from a JSON config and write a report.
    Run {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output path for the report.
        #[arg(long)]
        out: PathBuf,
        /// Report format.
        #[arg(long, value_enum, default_value = "csv")]
        format: report::ReportFormat,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: MSCAT_THREADS or the rayon default).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check the admissibility conditions of a weight function on a grid.
    ValidateWeights {
        /// Weight family: huber or student_t.
        #[arg(long)]
        family: String,
        /// Supremum phi_inf for the huber family.
        #[arg(long)]
        phi_inf: Option<f64>,
        /// Parameter t for the student_t family.
        #[arg(long)]
        t: Option<f64>,
        /// Upper end of the validation grid.
        #[arg(long, default_value_t = 10.0)]
        grid_max: f64,
        /// Grid step.
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
    },
    /// Estimate source angles from a snapshot CSV file.
    Doa {
        /// Snapshot file written in the sample CSV format.
        #[arg(long)]
        snapshots: PathBuf,
        /// Number of sources.
        #[arg(long)]
        k: usize,
        /// Estimation method.
        #[arg(long, value_enum)]
        method: DoaMethod,
        /// Weight function for the robust method, e.g. student_t:1.0.
        #[arg(long)]
        weight: Option<String>,
        /// Grid step in degrees (at most 0.25).
        #[arg(long, default_value_t = 0.1)]
        grid_deg: f64,
        /// Optional path for the pseudo-spectrum CSV (theta_deg,value,kind).
        #[arg(long)]
        spectrum_out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DoaMethod {
    Music,
    Gmusic,
    Robust,
}

/// Entry point shared by the binary and the CLI tests.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version as "errors" with success status.
            if e.use_stderr() {
                let _ = e.print();
                return 1;
            }
            let _ = e.print();
            return 0;
        }
    };
    match cli.command {
        Command::Run {
            config,
            out,
            format,
            seed,
            threads,
        } => run_command(config, out, format, seed, threads),
        Command::ValidateWeights {
            family,
            phi_inf,
            t,
            grid_max,
            grid_step,
        } => validate_weights_command(&family, phi_inf, t, grid_max, grid_step),
        Command::Doa {
            snapshots,
            k,
            method,
            weight,
            grid_deg,
            spectrum_out,
        } => doa_command(snapshots, k, method, weight.as_deref(), grid_deg, spectrum_out),
    }
}

fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok())
}

fn run_command(
    config: PathBuf,
    out: PathBuf,
    format: report::ReportFormat,
    seed: Option<u64>,
    threads: Option<usize>,
) -> i32 {
    let text = match std::fs::read_to_string(&config) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("cannot read config {}: {e}", config.display());
            return 1;
        }
    };
    let mut cfg: ExperimentConfig = match serde_json::from_str(&text) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("invalid config {}: {e}", config.display());
            return 1;
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let threads = threads.or_else(threads_from_env);
    let report = match run_experiment_with_threads(&cfg, threads) {
        Ok(report) => report,
        Err(HarnessError::Config(msg)) => {
            eprintln!("invalid config: {msg}");
            return 1;
        }
        Err(e) => {
            eprintln!("experiment failed: {e}");
            return 2;
        }
    };
    if let Err(e) = report::emit_report(&report, &out, format) {
        eprintln!("cannot write report {}: {e}", out.display());
        return 2;
    }
    eprintln!(
        "{}: {} rows in {:.2}s -> {}",
        cfg.experiment.as_str(),
        report.rows.len(),
        report.runtime_seconds,
        out.display()
    );
    0
}

fn validate_weights_command(
    family: &str,
    phi_inf: Option<f64>,
    t: Option<f64>,
    grid_max: f64,
    grid_step: f64,
) -> i32 {
    let weight = match family {
        "huber" => match phi_inf {
            Some(value) => WeightFunction::huber(value),
            None => {
                eprintln!("family huber needs --phi-inf");
                return 1;
            }
        },
        "student_t" => match t {
            Some(value) => WeightFunction::student_t(value),
            None => {
                eprintln!("family student_t needs --t");
                return 1;
            }
        },
        other => {
            eprintln!("unknown family '{other}', expected huber or student_t");
            return 1;
        }
    };
    let weight = match weight {
        Ok(weight) => weight,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    if !(grid_step > 0.0) || !(grid_max > grid_step) {
        eprintln!("grid must satisfy 0 < grid_step < grid_max");
        return 1;
    }
    let count = (grid_max / grid_step).floor() as usize;
    let grid: Vec<f64> = (0..=count).map(|i| i as f64 * grid_step).collect();
    let report = match weight.validate(&grid) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    println!("family: {weight}");
    println!("phi_inf: {}", report.phi_inf);
    println!("valid: {}", report.valid);
    for violation in &report.violations {
        println!("violation: {violation}");
    }
    if report.valid {
        0
    } else {
        2
    }
}

fn doa_command(
    snapshots: PathBuf,
    k: usize,
    method: DoaMethod,
    weight: Option<&str>,
    grid_deg: f64,
    spectrum_out: Option<PathBuf>,
) -> i32 {
    let samples = match datagen::read_sample_csv(&snapshots) {
        Ok(samples) => samples,
        Err(e) => {
            eprintln!("cannot load snapshots {}: {e}", snapshots.display());
            return 1;
        }
    };
    let weight = match weight.unwrap_or("student_t:1.0").parse::<WeightFunction>() {
        Ok(weight) => weight,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    if !(grid_deg > 0.0 && grid_deg <= doa::MAX_GRID_STEP_DEG) {
        eprintln!("grid_deg must be in (0, {}]", doa::MAX_GRID_STEP_DEG);
        return 1;
    }
    let grid = doa::angle_grid(grid_deg);
    let spectrum = match method {
        DoaMethod::Music => {
            doa::empirical_music_spectrum(&estimator::sample_covariance(&samples), k, &grid)
        }
        DoaMethod::Gmusic => doa::gmusic_spectrum(
            &estimator::sample_covariance(&samples),
            samples.n_samples(),
            k,
            &grid,
        ),
        DoaMethod::Robust => doa::robust_gmusic_spectrum(&samples, &weight, k, &grid),
    };
    let spectrum = match spectrum {
        Ok(spectrum) => spectrum,
        Err(e) => {
            eprintln!("spectrum computation failed: {e}");
            return 2;
        }
    };
    if let Some(path) = spectrum_out {
        if let Err(e) = report::write_spectrum_csv(&spectrum, &path) {
            eprintln!("cannot write spectrum {}: {e}", path.display());
            return 2;
        }
    }
    match doa::estimate_angles(&spectrum, k) {
        Ok(angles) => {
            for angle in angles {
                println!("{:.6}", angle.to_degrees());
            }
            0
        }
        Err(e) => {
            eprintln!("angle extraction failed: {e}");
            2
        }
    }
}
