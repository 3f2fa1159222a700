//! Ensemble sweeps over `(L, W, realization)` with durable, idempotent
//! persistence and deterministic summaries.

pub mod aggregate;
pub mod config;
pub mod pipeline;
pub mod record;

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;

use crate::basis::enumerate_sector;
use crate::error::{Error, Result};

pub use aggregate::{aggregate, EnsembleSummary, PartialSummary, SummaryRow};
pub use config::RunConfig;
pub use pipeline::{realization_seed, run_realization};
pub use record::{load_records, RealizationRecord, RecordKey, RecordStore, Status};

/// Name of the resolved configuration copied into the output directory.
pub const CONFIG_COPY: &str = "run_config.toml";

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub computed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub summaries: Vec<EnsembleSummary>,
}

/// Run every missing realization of `cfg`, then rewrite the summaries.
pub fn run_ensemble(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let grid = cfg.w_grid()?;
    let dir = cfg.output.as_path();
    let mut store = RecordStore::open(dir, &cfg.digest())?;
    let copy = dir.join(CONFIG_COPY);
    std::fs::write(&copy, cfg.to_toml_string()).map_err(|e| Error::io(&copy, e))?;

    let mut tasks = Vec::new();
    let mut skipped = 0;
    for &sites in &cfg.sites {
        for (w_index, &w) in grid.iter().enumerate() {
            for k in 0..cfg.realizations {
                let key = RecordKey { sites, w_index, k };
                match store.get(&key) {
                    Some(r) if r.w != w => {
                        return Err(Error::Config(vec![format!(
                            "record ({sites}, {w_index}, {k}) was computed at W = {} but the grid has {w}",
                            r.w
                        )]))
                    }
                    Some(_) => skipped += 1,
                    None => tasks.push((key, w)),
                }
            }
        }
    }

    let workers = cfg.resolved_workers()?;
    log::info!(
        "{} realizations to compute, {skipped} already stored, {workers} workers",
        tasks.len()
    );
    let mut bases = std::collections::BTreeMap::new();
    for &sites in &cfg.sites {
        bases.insert(sites, enumerate_sector(sites, cfg.two_m_for(sites))?);
    }
    let total = tasks.len();
    let mut computed = 0;
    let mut failed = 0;
    if total > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        let (tx, rx) = mpsc::channel::<Result<RealizationRecord>>();
        let bases = &bases;
        let abort = AtomicBool::new(false);
        let abort = &abort;
        // Workers compute; this thread is the only writer.
        let write_result = std::thread::scope(|scope| -> Result<()> {
            scope.spawn(move || {
                pool.install(|| {
                    use rayon::prelude::*;
                    tasks.into_par_iter().for_each_with(tx, |tx, (key, w)| {
                        if abort.load(Ordering::Relaxed) {
                            return;
                        }
                        let _ = tx.send(run_realization(cfg, &bases[&key.sites], key, w));
                    });
                });
            });
            for result in rx {
                let record = match result {
                    Ok(r) => r,
                    Err(e) => {
                        abort.store(true, Ordering::Relaxed);
                        return Err(e);
                    }
                };
                if record.status == Status::Failed {
                    failed += 1;
                    log::warn!("realization {:?} failed: {:?}", record.key, record.error);
                }
                if let Err(e) = store.append(record) {
                    abort.store(true, Ordering::Relaxed);
                    return Err(e);
                }
                computed += 1;
                log::info!("stored {computed}/{total}");
            }
            Ok(())
        });
        write_result?;
    }
    let records = store.into_records();
    let summaries = aggregate::write_summaries(dir, &records, cfg.zeta_bin_width)?;
    Ok(RunReport {
        computed,
        skipped,
        failed,
        summaries,
    })
}

/// Recompute the summaries of an existing output directory.
pub fn aggregate_dir(dir: &Path, zeta_bin_width: Option<f64>) -> Result<Vec<EnsembleSummary>> {
    let width = match zeta_bin_width {
        Some(w) => w,
        None => {
            let copy = dir.join(CONFIG_COPY);
            if copy.exists() {
                RunConfig::load(&copy)?.zeta_bin_width
            } else {
                RunConfig::new(vec![], vec![], 1).zeta_bin_width
            }
        }
    };
    let path = dir.join(RecordStore::FILE_NAME);
    if !path.exists() {
        return Err(Error::NotFound(format!("no records in {}", dir.display())));
    }
    let records = load_records(&path, false)?;
    if records.is_empty() {
        log::warn!("{} holds no complete records", path.display());
    }
    aggregate::write_summaries(dir, &records, width)
}
