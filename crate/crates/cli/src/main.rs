use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sg_tomo::Scheme;
use sg_tomo_cli::cache::{self, cache_key};
use sg_tomo_cli::config::EstimatorKind;
use sg_tomo_cli::run::{run_montecarlo, run_single, run_sweep};
use sg_tomo_cli::{CliError, MapCache, Overrides, Result, RunConfig};

/// Spin-state estimation with a quadrupolar Stern-Gerlach setup.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: OverrideArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct OverrideArgs {
    #[arg(long, global = true)]
    g1: Option<f64>,
    #[arg(long, global = true)]
    g2: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Detection time in units of the transit time.
    #[arg(long = "T", global = true)]
    t_detect: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// quadrant or continuous.
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    /// li or mle.
    #[arg(long, global = true)]
    estimator: Option<EstimatorKind>,
    #[arg(long, global = true)]
    particles: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Half-width of the square simulation box.
    #[arg(long, global = true)]
    grid_extent: Option<f64>,
    /// Lattice points per axis.
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Splitting steps across the magnet.
    #[arg(long, global = true)]
    nt: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            g1: a.g1,
            g2: a.g2,
            lambda: a.lambda,
            t_detect: a.t_detect,
            theta: a.theta,
            phi: a.phi,
            scheme: a.scheme,
            estimator: a.estimator,
            particles: a.particles,
            trials: a.trials,
            seed: a.seed,
            grid_extent: a.grid_extent,
            grid_n: a.grid_n,
            nt: a.nt,
            out: a.out,
            cache_dir: a.cache_dir,
            workers: a.workers,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one setup, estimate one data set and report the expected error.
    Single,
    /// Tabulate the Fisher-information error over ranges of setups.
    Sweep,
    /// Repeat the estimation on independent data sets.
    Montecarlo,
    /// Inspect or fill the on-disk measurement-map cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Print the effective configuration as JSON.
    Config,
}

#[derive(Subcommand, Debug)]
enum CacheAction {
    /// Compute and store the map for the configured setup.
    Build,
    List,
    Clear,
}

fn load_config(path: Option<&PathBuf>, overrides: Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let Cli { config, overrides, command } = cli;
    let cfg = load_config(config.as_ref(), overrides.into())?;
    if let Command::Config = command {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    println!("# sg-tomo {} config {}", env!("CARGO_PKG_VERSION"), cfg.to_json());
    let cache = MapCache::new(cfg.cache_dir.clone());
    match command {
        Command::Single => {
            let outcome = run_single(&cfg, &cache)?;
            for f in &outcome.files {
                log::info!("wrote {}", f.display());
            }
            println!("{}", outcome.digest);
        }
        Command::Sweep => {
            let path = run_sweep(&cfg, &cache)?;
            println!("sweep written to {}", path.display());
        }
        Command::Montecarlo => {
            let outcome = run_montecarlo(&cfg, &cache)?;
            println!(
                "montecarlo: {} of {} trials used, summary in {}",
                outcome.summary["used_trials"],
                cfg.trials,
                outcome.summary_path.display()
            );
        }
        Command::Cache { action } => {
            let dir = cfg
                .cache_dir
                .clone()
                .ok_or_else(|| CliError::Config("cache commands need --cache-dir or cache_dir in the config".into()))?;
            match action {
                CacheAction::Build => {
                    let (setup, grid) = (cfg.setup()?, cfg.grid()?);
                    cache.get(&setup, &grid)?;
                    println!("{}", cache_key(&setup, &grid));
                }
                CacheAction::List => {
                    for (key, e) in cache::list(&dir)? {
                        println!(
                            "{key} g1={} g2={} lambda={} T={} nt={} grid={}x{} [{}, {}]",
                            e.setup.g1, e.setup.g2, e.setup.lambda, e.setup.t_detect, e.setup.n_t,
                            e.grid.n_x, e.grid.n_z, e.grid.x_min, e.grid.x_max
                        );
                    }
                }
                CacheAction::Clear => println!("removed {} maps", cache::clear(&dir)?),
            }
        }
        Command::Config => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
