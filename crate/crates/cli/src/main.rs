use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use nerp_cli::{
    cmd_metrics, cmd_reconstruct, cmd_simulate, cmd_sweep, init_threads, ExperimentConfig, Mode, Overrides,
    PriorCache, RunOptions, SweepAxis,
};

#[derive(Parser)]
#[command(name = "nerp", version, about = "Prior-embedded neural representations for sparse CT and MRI reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the prior/target pair and simulated measurements.
    Simulate(Common),
    /// Reconstruct with each requested mode and score it.
    Reconstruct(Common),
    /// Repeat reconstruction across values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// views, spokes, depth or width
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 5,10,20,30
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// PSNR and SSIM of an image against a reference.
    Metrics {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated modes: nerp, nerp_no_prior, grff, fbp, adjoint_nufft
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<String>>,
    #[arg(long, conflicts_with = "spokes")]
    views: Option<usize>,
    #[arg(long)]
    spokes: Option<usize>,
    #[arg(long)]
    prior_iters: Option<usize>,
    #[arg(long)]
    recon_iters: Option<usize>,
    /// Replace a non-empty output directory.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, RunOptions)> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let modes = self
            .mode
            .as_ref()
            .map(|ms| ms.iter().map(|m| Mode::parse(m)).collect::<Result<Vec<_>>>())
            .transpose()?;
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            modes,
            views: self.views,
            spokes: self.spokes,
            prior_iters: self.prior_iters,
            recon_iters: self.recon_iters,
        }
        .apply(&mut cfg)?;
        Ok((cfg, RunOptions { force: self.force }))
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, opts) = c.resolve()?;
            let y = cmd_simulate(&cfg, opts)?;
            println!("wrote {} measurements ({} views) to {}", y.to_vector().len(), y.views(), cfg.out_dir.unwrap().display());
        }
        Command::Reconstruct(c) => {
            let (cfg, opts) = c.resolve()?;
            let rows = cmd_reconstruct(&cfg, opts)?;
            print!("{}", nerp_cli::run::metrics_csv(&rows));
        }
        Command::Sweep { common, axis, values } => {
            let (cfg, opts) = common.resolve()?;
            let axis = SweepAxis::parse(&axis)?;
            let rows = cmd_sweep(&cfg, axis, &values, opts, &mut PriorCache::default())?;
            print!("{}", nerp_cli::run::sweep_csv(&rows));
        }
        Command::Metrics { recon, reference } => {
            let q = cmd_metrics(&recon, &reference).context("scoring images")?;
            println!("psnr,ssim\n{},{}", q.psnr, q.ssim);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
