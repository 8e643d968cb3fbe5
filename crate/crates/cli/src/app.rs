use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::pipeline::{cmd_analyze, cmd_ingest};
use crate::selftest::{run_selftest, SelftestHooks};

#[derive(Debug, Parser)]
#[command(name = "qrse", version, about = "Rolling QRSE fits and equilibrium diagnostics for return panels")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file; omitted keys take their defaults.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every randomized test and the selftest.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(short, long, global = true)]
    pub jobs: Option<usize>,

    #[arg(short, long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Override a config field, e.g. `--set rolling.window_days=80`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load prices, compute truncated log returns and the index.
    Ingest,
    /// Regimes, rolling fits, summary table and diagnostic surfaces.
    Analyze(AnalyzeArgs),
    /// Ingest then analyze.
    Run(AnalyzeArgs),
    /// Analytic-identity and parameter-recovery checks.
    Selftest {
        /// Scale the temperature seen by the choice kernel by (1 + x).
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb_kernel: f64,
    },
    /// Print the full default config as TOML.
    PrintDefaultConfig,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub window_days: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Skip the diagnostic test battery.
    #[arg(long)]
    pub no_diagnostics: bool,
}

impl AnalyzeArgs {
    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(w) = self.window_days {
            out.push(format!("rolling.window_days={w}"));
        }
        if let Some(s) = self.stride {
            out.push(format!("rolling.stride={s}"));
        }
        if self.no_diagnostics {
            out.push("diagnostics.enabled=false".into());
        }
        out
    }
}

fn effective_config(global: &GlobalArgs, extra: Vec<String>) -> Result<PipelineConfig> {
    let mut overrides = global.overrides.clone();
    overrides.extend(extra);
    let mut config = match &global.config {
        Some(path) => PipelineConfig::load(path, &overrides)?,
        None => PipelineConfig::from_toml_str("", &overrides)?,
    };
    if let Some(seed) = global.seed {
        config.set_seed(seed);
    }
    if let Some(jobs) = global.jobs {
        config.jobs = jobs;
    }
    if let Some(dir) = &global.out_dir {
        config.out_dir = dir.clone();
    }
    Ok(config)
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(f)
}

/// Execute a parsed command line; output goes to stdout, logs to stderr.
pub fn run(cli: Cli) -> Result<()> {
    let extra = match &cli.command {
        Command::Analyze(a) | Command::Run(a) => a.overrides(),
        _ => Vec::new(),
    };
    let config = effective_config(&cli.global, extra)?;
    match cli.command {
        Command::PrintDefaultConfig => {
            print!("{}", PipelineConfig::default().to_toml_string()?);
        }
        Command::Ingest => {
            let r = with_pool(config.jobs, || cmd_ingest(&config))?;
            println!(
                "ingest: {} returns removed, retained fraction {}",
                r.removed, r.retained_fraction
            );
            print_files(&config, &r.files);
        }
        Command::Analyze(_) => analyze(&config)?,
        Command::Run(_) => {
            let r = with_pool(config.jobs, || cmd_ingest(&config))?;
            print_files(&config, &r.files);
            analyze(&config)?;
        }
        Command::Selftest { perturb_kernel } => {
            let hooks = SelftestHooks {
                kernel_perturbation: perturb_kernel,
            };
            let checks = with_pool(config.jobs, || Ok(run_selftest(&config.selftest, &hooks)))?;
            for c in &checks {
                println!("{c}");
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            if !failed.is_empty() {
                return Err(CliError::Selftest(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn analyze(config: &PipelineConfig) -> Result<()> {
    let r = with_pool(config.jobs, || cmd_analyze(config))?;
    println!(
        "analyze: {} windows, {} converged fits, regimes in summary: {}",
        r.windows,
        r.converged,
        if r.summary_regimes.is_empty() { "none".to_string() } else { r.summary_regimes.join(", ") }
    );
    print_files(config, &r.files);
    Ok(())
}

fn print_files(config: &PipelineConfig, files: &[String]) {
    for f in files {
        println!("  {}", config.out_dir.join(f).display());
    }
}
