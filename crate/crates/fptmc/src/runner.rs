//! Worker pool and CPU timing.

use fptmc_core::calibration::RunExecutor;
use fptmc_core::samplers::FptEngine;
use fptmc_core::RunOutcome;
use rayon::prelude::*;

/// Executes runs on a fixed number of worker threads. Outcomes come back in
/// run order, so results do not depend on the worker count.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `0..runs` and returns the outcomes with the process CPU seconds
    /// they took.
    pub fn timed(&self, engine: &dyn FptEngine, runs: usize, seed: u64) -> (Vec<RunOutcome>, f64) {
        let start = process_cpu_seconds();
        let outcomes = self.execute(engine, runs, seed);
        (outcomes, process_cpu_seconds() - start)
    }
}

impl RunExecutor for Pool {
    fn execute(&self, engine: &dyn FptEngine, runs: usize, seed: u64) -> Vec<RunOutcome> {
        self.pool.install(|| (0..runs as u64).into_par_iter().map(|run| engine.simulate_run(seed, run)).collect())
    }
}

/// CPU time consumed by all threads of the process.
pub fn process_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}
