//! Batch front end for the sticky heat simulator: scenario runs with CSV and
//! JSON artifacts, parameter sweeps and the acceptance self-test.

pub mod acceptance;
pub mod runner;
pub mod sweep;

pub use runner::{run, RunOptions, RunSummary};
pub use sweep::{sweep, Axis, Statistic, SweepPlan, SweepRow};

/// Number of worker threads: explicit value, then `STICKYHEAT_THREADS`, then
/// rayon's default.
pub fn thread_pool(threads: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads.filter(|&t| t > 0) {
        b = b.num_threads(t);
    }
    Ok(b.build()?)
}
