//! Config-driven experiments on top of `nerp-core`: simulate measurements,
//! reconstruct with the network and analytic baselines, sweep sampling or
//! architecture, and score images.

pub mod config;
pub mod run;

pub use config::{ExperimentConfig, Mode, Overrides, Precision, Source};
pub use run::{
    cmd_metrics, cmd_reconstruct, cmd_reconstruct_cached, cmd_simulate, cmd_sweep, MetricRow, PriorCache, RunOptions,
    SweepAxis, SweepRow,
};

/// Caps rayon's global pool at `NERP_THREADS` when set.
pub fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("NERP_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow::anyhow!("NERP_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
