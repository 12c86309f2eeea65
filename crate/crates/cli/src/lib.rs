//! Command-line front end of the SLiCE engine: run configuration, binary
//! checkpoints, training runs, layer sweeps, diagnostic probes and dataset
//! dumps.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod run;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use error::{CliError, CliResult};

/// Caps the global worker pool at `SLICE_THREADS` when set.
pub fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SLICE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("SLICE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}
