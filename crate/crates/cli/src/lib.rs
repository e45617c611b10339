//! `critlab` command line: simulators, fits and the Table-1 pipeline.
//!
//! Exit codes: 0 success, 2 usage error, 3 runtime failure.

mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use critlab_core::hiv::Selection;
use critlab_core::percolation::Mode;
use critlab_core::pipeline::Scale;
use critlab_core::Dims;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Thread count for the rayon pool.
pub const THREADS_ENV: &str = "CRITLAB_THREADS";
/// Base directory for relative `--out` paths.
pub const OUT_DIR_ENV: &str = "CRITLAB_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<critlab_core::Error> for CliError {
    fn from(e: critlab_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "critlab", version, about = "Critical-exponent workbench: percolation, HIV automaton, spin-1 lattice, MD fragments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad extent `{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let d = match parts[..] {
        [l] => Dims::cube(l),
        [x, y, z] => Dims::new(x, y, z),
        _ => return Err("expected L or Lx,Ly,Lz".into()),
    };
    d.map_err(|e| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spanning probability, P_inf and S(p) over a grid of p.
    PercolationScan(PercolationScanArgs),
    /// One automaton trajectory (step,S,I,R).
    HivRun(HivRunArgs),
    /// Final infected ratio over a (q_vs, q_is) grid.
    HivPhase(HivPhaseArgs),
    /// Infected-cluster size histogram at one fidelity pair.
    HivClusters(HivClustersArgs),
    /// Magnetization and susceptibility over a temperature grid.
    #[command(allow_negative_numbers = true)]
    CmrScan(CmrScanArgs),
    /// Spin-domain size histogram at one temperature.
    #[command(allow_negative_numbers = true)]
    CmrClusters(CmrClustersArgs),
    /// Prepares two droplets and collides them; writes snapshot files.
    #[command(allow_negative_numbers = true)]
    MdCollide(MdCollideArgs),
    /// Most-bound partition of a snapshot.
    Ecra(EcraArgs),
    /// Power-law fit of an events file, overall and per multiplicity bin.
    Fit(FitArgs),
    /// Runs every system and writes the τ comparison table.
    Table1(Table1Args),
    /// Re-runs the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct PercolationScanArgs {
    #[arg(long, default_value = "16,16,16", value_parser = parse_dims)]
    dims: Dims,
    #[arg(long, default_value_t = 0.15)]
    p_min: f64,
    #[arg(long, default_value_t = 0.35)]
    p_max: f64,
    #[arg(long, default_value_t = 21)]
    p_steps: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "bond")]
    mode: Mode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HivRunArgs {
    #[arg(long, default_value_t = 10)]
    n: u32,
    #[arg(long, default_value_t = 0.8)]
    qvs: f64,
    #[arg(long, default_value_t = 0.3)]
    qis: f64,
    /// Initially infected sequences, comma separated.
    #[arg(long, default_value = "0", value_delimiter = ',')]
    strains: Vec<u32>,
    /// Defaults to 16 * 2^n.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Steps between trajectory rows.
    #[arg(long, default_value_t = 1)]
    stride: u64,
    #[arg(long, default_value = "branch")]
    selection: Selection,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HivPhaseArgs {
    #[arg(long, default_value_t = 10)]
    n: u32,
    /// Points per axis on [0, 1].
    #[arg(long, default_value_t = 11)]
    grid_steps: usize,
    #[arg(long, default_value_t = 20)]
    replicas: usize,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long, default_value = "branch")]
    selection: Selection,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HivClustersArgs {
    #[arg(long, default_value_t = 12)]
    n: u32,
    #[arg(long, default_value_t = 0.8)]
    qvs: f64,
    #[arg(long, default_value_t = 0.3)]
    qis: f64,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long, default_value = "branch")]
    selection: Selection,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CmrScanArgs {
    #[arg(long, default_value = "12,12,12", value_parser = parse_dims)]
    dims: Dims,
    #[arg(long = "J", default_value_t = 1.0)]
    j: f64,
    #[arg(long, default_value_t = 0.0)]
    h: f64,
    #[arg(long, default_value_t = 2.0)]
    t_min: f64,
    #[arg(long, default_value_t = 6.0)]
    t_max: f64,
    #[arg(long, default_value_t = 41)]
    t_steps: usize,
    #[arg(long, default_value_t = critlab_core::spin::DEFAULT_DISCARD)]
    discard: usize,
    #[arg(long, default_value_t = critlab_core::spin::DEFAULT_MEASURE)]
    measure: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CmrClustersArgs {
    #[arg(long, default_value = "12,12,12", value_parser = parse_dims)]
    dims: Dims,
    #[arg(long = "T", default_value_t = 3.2)]
    t: f64,
    #[arg(long = "J", default_value_t = 1.0)]
    j: f64,
    #[arg(long, default_value_t = 0.0)]
    h: f64,
    #[arg(long, default_value_t = critlab_core::spin::DEFAULT_DISCARD)]
    discard: usize,
    #[arg(long, default_value_t = 16)]
    replicas: usize,
    #[arg(long, default_value_t = 100)]
    snapshots: usize,
    /// Sweeps between snapshots.
    #[arg(long, default_value_t = 10)]
    every: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MdCollideArgs {
    /// Projectile particle count.
    #[arg(long, default_value_t = 64)]
    a: usize,
    /// Target particle count.
    #[arg(long, default_value_t = 64)]
    b: usize,
    /// Beam kinetic energy per projectile particle.
    #[arg(long, default_value_t = 25.0)]
    energy: f64,
    #[arg(long, default_value_t = 0.0)]
    impact: f64,
    #[arg(long, default_value_t = 0.001)]
    dt: f64,
    #[arg(long, default_value_t = 30.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1000)]
    stride: usize,
    /// Halvings of dt allowed after an energy-drift failure.
    #[arg(long, default_value_t = 0)]
    retries: u32,
    /// Energy per particle the droplets are cooled to.
    #[arg(long, default_value_t = -4.0)]
    binding: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EcraArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    t_start: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    cooling: Option<f64>,
    #[arg(long)]
    moves: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    events: PathBuf,
    /// Size normalizing every event; defaults to the event's total mass.
    #[arg(long)]
    system_size: Option<usize>,
    #[arg(long, default_value_t = 2)]
    fit_min: usize,
    /// Defaults to a quarter of the largest system size.
    #[arg(long)]
    fit_max: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    tau_min: f64,
    #[arg(long, default_value_t = 3.0)]
    tau_max: f64,
    #[arg(long, default_value_t = 0.01)]
    tau_step: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Table1Args {
    #[arg(long, default_value = "smoke")]
    scale: Scale,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Write to this target instead of the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Relative output paths are taken under `CRITLAB_OUT_DIR` when it is set.
fn resolve_out(out: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(base) if out.is_relative() && !base.is_empty() => PathBuf::from(base).join(out),
        _ => out.to_path_buf(),
    }
}

fn init_threads() -> Result<(), CliError> {
    if let Some(v) = std::env::var_os(THREADS_ENV) {
        let n: usize = v
            .to_string_lossy()
            .parse()
            .ok()
            .filter(|&n: &usize| n > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer")))?;
        // a second initialization (e.g. replay) keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cmd = Cli::command();
    let matches = match cmd.clone().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let result = init_threads().and_then(|_| {
        let (name, sub) = matches.subcommand().expect("subcommand is required");
        commands::dispatch(cli.command, &cmd, name, sub)
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}
