//! Scenario generators, baselines, traces and error metrics.

pub mod central;
pub mod common;
pub mod config;
pub mod dynamic;
pub mod metrics;
pub mod scalability;
pub mod stationary;

use rayon::prelude::*;

use crate::error::Result;
use crate::scalar::Real;

pub use central::{factors_of, CentralPm, Factor, StackedPf};
pub use config::{
    AlgorithmParams, DynamicParams, MethodName, ModelParams, ObjectStart, Overrides, ScalabilityParams, ScenarioConfig,
    ScenarioKind, StaticParams,
};
pub use dynamic::{run_dynamic, run_dynamic_pm, run_dynamic_rm, DynamicWorld};
pub use metrics::{
    log_log_slope, rmse_of, rmse_per_iteration, rmse_per_size, rmse_per_time, rmse_time_averaged, runtime_per_size,
    EntityClass, EntityRecord, RunTrace, StepRecord,
};
pub use scalability::{gen_scalability_topology, run_scalability, size_seed};
pub use stationary::{gen_static, run_static, Placement};

/// Every run of every requested method, in `(size, run, method)` order.
/// Runs execute on the rayon pool; the output does not depend on its size.
pub fn run_scenario<T: Real>(cfg: &ScenarioConfig) -> Result<Vec<RunTrace>> {
    cfg.validate()?;
    let chunks: Vec<Vec<RunTrace>> = match cfg.kind()? {
        ScenarioKind::Dynamic(_) => (0..cfg.runs).into_par_iter().map(|r| run_dynamic::<T>(cfg, r)).collect::<Result<_>>()?,
        ScenarioKind::Static(_) => (0..cfg.runs).into_par_iter().map(|r| run_static::<T>(cfg, r)).collect::<Result<_>>()?,
        ScenarioKind::Scalability(s) => {
            let jobs: Vec<([usize; 2], usize)> = s.sizes.iter().flat_map(|&z| (0..cfg.runs).map(move |r| (z, r))).collect();
            jobs.into_par_iter().map(|(z, r)| run_scalability::<T>(cfg, z, r)).collect::<Result<_>>()?
        }
    };
    Ok(chunks.into_iter().flatten().collect())
}
