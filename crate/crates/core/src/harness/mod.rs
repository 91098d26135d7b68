//! Experiment orchestration: configs, scenarios, the two-timescale loop and
//! the sweep suites that write CSV output.

pub mod config;
pub mod output;
pub mod scenario;
mod suites;
pub mod timescale;

use std::path::{Path, PathBuf};

pub use config::ScenarioConfig;
pub use scenario::{Scenario, SurfaceModel};
pub use suites::{beamform_suite, e2e_suite, hetero_suite, homo_suite};
pub use timescale::{
    alternate_static, audit_delays, run_two_timescale, scenario_for, RunOptions, RunRecord, TickRecord,
};

use crate::error::{Error, Result};

/// Environment variable holding the worker count for suite fan-out.
pub const WORKERS_ENV: &str = "HOLOVR_WORKERS";

/// Named self-check performed while a suite runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Audit {
    pub fn check(name: &str, passed: bool, detail: String) -> Self {
        if !passed {
            log::error!("audit {name} failed: {detail}");
        }
        Self { name: name.to_string(), passed, detail }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOutput {
    pub files: Vec<PathBuf>,
    pub audits: Vec<Audit>,
}

impl SuiteOutput {
    pub fn all_passed(&self) -> bool {
        self.audits.iter().all(|a| a.passed)
    }
}

pub const SUITES: [&str; 4] = ["homo_sweeps", "hetero_sweeps", "beamform_sweeps", "e2e"];

/// Runs a suite by name inside a pool sized by [`WORKERS_ENV`].
pub fn run_suite(name: &str, cfg: &ScenarioConfig, out: &Path) -> Result<SuiteOutput> {
    let f = match name {
        "homo_sweeps" => homo_suite,
        "hetero_sweeps" => hetero_suite,
        "beamform_sweeps" => beamform_suite,
        "e2e" => e2e_suite,
        other => return Err(Error::UnknownSuite(other.to_string())),
    };
    std::fs::create_dir_all(out)?;
    worker_pool()?.install(|| f(cfg, out))
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize =
            v.trim().parse().map_err(|_| Error::Config(format!("{WORKERS_ENV}={v} is not a worker count")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Independent seed for run `index` of a suite.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
