//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on invalid input or I/O failure, 2 when a
//! simulation run aborts (workspace exit, step budget, numerical failure).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{filter_sweep, write_sweep_csv, DEFAULT_LEVELS, DEFAULT_SWEEP_STEPS};
use crate::params::{parse_toml, ControllerParams};
use crate::sensing::{generate_dataset, write_dataset_csv, SurrogateNoiseProfile};
use crate::sim::{run_task, HeightClass, PushModel, Shape, SimConfig, Task, DEFAULT_DT, DEFAULT_STEP_BUDGET};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_ABORTED: i32 = 2;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "tactile", version, about = "Tactile pose estimation, filtering and servo control in simulation")]
pub struct Cli {
    /// Seed for every random stream; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files; overrides the config file.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Parse and check inputs, then exit without writing anything.
    #[arg(long, global = true)]
    pub validate_only: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a closed-loop task from a TOML config.
    Run { config: PathBuf },
    /// Raw and filtered pose errors over a sweep of dynamics noise levels.
    FilterSweep {
        /// Dynamics noise levels (mm and deg), comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LEVELS)]
        levels: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_SWEEP_STEPS)]
        steps: usize,
        /// Number of sequences per level, seeded consecutively from --seed.
        #[arg(long, default_value_t = 5)]
        replicates: u64,
    },
    /// Write a synthetic contact-pose dataset.
    GenDataset {
        #[arg(long)]
        n: usize,
        /// Output CSV; relative paths resolve against --out-dir when given.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Run configuration file. Key names carry their units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub seed: Option<u64>,
    /// Controller parameter file, relative to this config; the bundled table for the task when absent.
    pub controller_file: Option<PathBuf>,
    #[serde(default = "default_sigma_phi")]
    pub sigma_phi_mm_deg: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default = "default_budget")]
    pub step_budget: usize,
    pub output_dir: Option<PathBuf>,
    pub surrogate: Option<SurrogateSection>,
    pub push: Option<PushSection>,
    pub tracking: Option<TrackingSection>,
}

fn default_sigma_phi() -> f64 {
    crate::filter::DEFAULT_SIGMA_PHI
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_budget() -> usize {
    DEFAULT_STEP_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSection {
    pub sigma_mm_deg: [f64; 6],
    pub aliasing_slip_threshold_mm: f64,
    pub aliasing_variance_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushSection {
    pub shape: Shape,
    #[serde(default)]
    pub height_class: HeightClass,
    pub kappa_rad_per_mm: Option<f64>,
    pub push_depth_mm: Option<f64>,
    pub friction_coefficient: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSection {
    pub period_s: Option<f64>,
    pub periods: Option<f64>,
}

/// Line of the first `key = ...` assignment in `text`, or 1.
fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(1, |i| i + 1)
}

/// A validated run: simulation config plus resolved seed and output directory.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub sim: SimConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

/// Parses and validates a run config. Errors carry the offending line.
pub fn load_run_config(path: &Path, seed: Option<u64>, out_dir: Option<&Path>) -> Result<LoadedRun> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let rc: RunConfig = parse_toml(&text, path)?;
    let at = |key: &str, message: String| Error::Config {
        path: path.to_path_buf(),
        line: key_line(&text, key),
        message,
    };
    if !(rc.sigma_phi_mm_deg > 0.0 && rc.sigma_phi_mm_deg.is_finite()) {
        return Err(at("sigma_phi_mm_deg", format!("sigma_phi_mm_deg must be positive, got {}", rc.sigma_phi_mm_deg)));
    }
    if !(rc.dt_s > 0.0 && rc.dt_s.is_finite()) {
        return Err(at("dt_s", format!("dt_s must be positive, got {}", rc.dt_s)));
    }
    if rc.step_budget == 0 {
        return Err(at("step_budget", "step_budget must be positive".into()));
    }
    let mut sim = SimConfig::new(rc.task);
    sim.sigma_phi = rc.sigma_phi_mm_deg;
    sim.dt = rc.dt_s;
    sim.step_budget = rc.step_budget;
    if let Some(file) = &rc.controller_file {
        let base = path.parent().unwrap_or(Path::new("."));
        let resolved = base.join(file);
        if !resolved.is_file() {
            return Err(at("controller_file", format!("controller file {} does not exist", resolved.display())));
        }
        sim.controller = ControllerParams::load(&resolved)?;
    }
    if let Some(s) = &rc.surrogate {
        sim.noise = SurrogateNoiseProfile {
            sigma: s.sigma_mm_deg,
            aliasing_slip_threshold: s.aliasing_slip_threshold_mm,
            aliasing_variance_factor: s.aliasing_variance_factor,
        };
        sim.noise.validate().map_err(|e| at("sigma_mm_deg", e.to_string()))?;
    }
    if let Some(p) = &rc.push {
        let d = PushModel::default();
        sim.push.shape = p.shape;
        sim.push.height_class = p.height_class;
        sim.push.model = PushModel {
            kappa: p.kappa_rad_per_mm.unwrap_or(d.kappa),
            push_depth_mm: p.push_depth_mm.unwrap_or(d.push_depth_mm),
            friction_coefficient: p.friction_coefficient.unwrap_or(d.friction_coefficient),
        };
    }
    if let Some(t) = &rc.tracking {
        sim.tracking.period_s = t.period_s.unwrap_or(sim.tracking.period_s);
        sim.tracking.periods = t.periods.unwrap_or(sim.tracking.periods);
    }
    sim.validate().map_err(|e| at("task", e.to_string()))?;
    Ok(LoadedRun {
        sim,
        seed: seed.or(rc.seed).unwrap_or(DEFAULT_SEED),
        output_dir: out_dir.map(Path::to_path_buf).or(rc.output_dir).unwrap_or_else(|| PathBuf::from(".")),
    })
}

/// Writes `bytes` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::file(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::file(path, e)
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

/// Runs a task config; returns the files written and whether the run aborted.
pub fn cmd_run(config: &Path, seed: Option<u64>, out_dir: Option<&Path>, validate_only: bool) -> Result<(Vec<PathBuf>, bool)> {
    let run = load_run_config(config, seed, out_dir)?;
    if validate_only {
        return Ok((Vec::new(), false));
    }
    let log = run_task(&run.sim, run.seed)?;
    ensure_dir(&run.output_dir)?;
    let stem = format!("{}_seed{}", run.sim.task.name(), run.seed);
    let csv_path = run.output_dir.join(format!("{stem}.csv"));
    let json_path = run.output_dir.join(format!("{stem}.json"));
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    write_atomic(&csv_path, &csv)?;
    let mut json = serde_json::to_vec_pretty(&log.metadata(&run.sim))?;
    json.push(b'\n');
    write_atomic(&json_path, &json)?;
    Ok((vec![csv_path, json_path], log.termination.is_abort()))
}

pub fn cmd_filter_sweep(
    levels: &[f64],
    steps: usize,
    replicates: u64,
    seed: u64,
    out_dir: &Path,
    validate_only: bool,
) -> Result<PathBuf> {
    if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument(format!("levels must be positive, got {levels:?}")));
    }
    if steps < 2 || replicates == 0 {
        return Err(Error::InvalidArgument("need at least 2 steps and 1 replicate".into()));
    }
    let path = out_dir.join("filter_sweep.csv");
    if validate_only {
        return Ok(path);
    }
    let seeds: Vec<u64> = (0..replicates).map(|i| seed.wrapping_add(i)).collect();
    let rows = filter_sweep(levels, steps, &seeds, &SurrogateNoiseProfile::default())?;
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, &rows)?;
    ensure_dir(out_dir)?;
    write_atomic(&path, &csv)?;
    Ok(path)
}

pub fn cmd_gen_dataset(n: usize, out: &Path, seed: u64, validate_only: bool) -> Result<PathBuf> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if validate_only {
        return Ok(out.to_path_buf());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = generate_dataset(&mut rng, n)?;
    let mut csv = Vec::new();
    write_dataset_csv(&mut csv, &samples)?;
    write_atomic(out, &csv)?;
    Ok(out.to_path_buf())
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let seed = cli.seed;
    let out_dir = cli.out_dir.as_deref();
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config, seed, out_dir, cli.validate_only).map(|(files, aborted)| {
            report(&files, cli.validate_only);
            if aborted {
                eprintln!("run aborted; see the metadata file for the termination reason");
                EXIT_ABORTED
            } else {
                EXIT_OK
            }
        }),
        Command::FilterSweep { levels, steps, replicates } => cmd_filter_sweep(
            levels,
            *steps,
            *replicates,
            seed.unwrap_or(DEFAULT_SEED),
            out_dir.unwrap_or(Path::new(".")),
            cli.validate_only,
        )
        .map(|p| {
            report(&[p], cli.validate_only);
            EXIT_OK
        }),
        Command::GenDataset { n, out } => {
            let out = match out_dir {
                Some(d) if out.is_relative() => d.join(out),
                _ => out.clone(),
            };
            let prepared = match (out_dir, cli.validate_only) {
                (Some(d), false) => ensure_dir(d),
                _ => Ok(()),
            };
            prepared
                .and_then(|_| cmd_gen_dataset(*n, &out, seed.unwrap_or(DEFAULT_SEED), cli.validate_only))
                .map(|p| {
                    report(&[p], cli.validate_only);
                    EXIT_OK
                })
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_INVALID
    })
}

fn report(files: &[PathBuf], validate_only: bool) {
    if validate_only {
        println!("ok");
    } else {
        for f in files {
            println!("wrote {}", f.display());
        }
    }
}
