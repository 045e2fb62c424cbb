//! Parallel execution of simulation scenarios.

use std::sync::atomic::{AtomicUsize, Ordering};

use medmi_core::datagen::{DgmParams, MdagSpec};
use medmi_core::simstudy::{check_failures, run_replication, sort_records, RawRecord, ScenarioConfig, SimError};
use rayon::prelude::*;

/// Run every replication of a scenario on `config.threads` workers (0: all
/// cores). Records come back in the deterministic [`sort_records`] order, so
/// the output does not depend on the worker count.
///
/// `progress` is called with the number of finished replications.
pub fn run_scenario(
    config: &ScenarioConfig,
    params: &DgmParams,
    mdag: &MdagSpec,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<Vec<RawRecord>, SimError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| SimError::InvalidConfig(format!("thread pool: {e}")))?;
    let done = AtomicUsize::new(0);
    let per_rep: Vec<Vec<RawRecord>> = pool.install(|| {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let r = run_replication(config, params, mdag, rep);
                progress(done.fetch_add(1, Ordering::Relaxed) + 1);
                r
            })
            .collect::<Result<_, _>>()
    })?;
    let mut records: Vec<RawRecord> = per_rep.into_iter().flatten().collect();
    sort_records(&mut records);
    check_failures(&records, config.reps)?;
    Ok(records)
}
