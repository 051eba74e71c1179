use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_scenario, Scenario};
use crate::error::{Error, Result};
use crate::estimator::ModelKind;

/// Post-convergence error summary of one estimator kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindMetric {
    pub kind: ModelKind,
    /// Mean of the max-error profile (V).
    pub mean_error: f64,
    /// Largest max-error value (V).
    pub max_error: f64,
    /// Mean absolute error over modules and samples of the whole run (V).
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub f_sample: f64,
    pub f_carrier: f64,
    pub ma_schedule: Vec<(f64, f64)>,
    pub seed: u64,
    pub metrics: Vec<KindMetric>,
    /// Fault message when the row's run failed; the sweep carries on.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn metric(&self, kind: ModelKind) -> Option<&KindMetric> {
        self.metrics.iter().find(|m| m.kind == kind)
    }
}

/// Worker cap from `MMC_EST_THREADS`, if set to a positive integer.
pub fn thread_limit() -> Option<usize> {
    std::env::var("MMC_EST_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

fn run_row(index: usize, s: Scenario) -> SweepRow {
    let mut row = SweepRow {
        index,
        f_sample: s.cfg.f_sample,
        f_carrier: s.cfg.f_carrier,
        ma_schedule: s.ma_schedule.clone(),
        seed: s.cfg.rng_seed,
        metrics: Vec::new(),
        error: None,
    };
    match run_scenario(&s) {
        Ok(r) => {
            row.metrics = r
                .kinds
                .iter()
                .map(|k| KindMetric {
                    kind: k.kind,
                    mean_error: r.steady_mean_error(k.kind).unwrap_or(f64::NAN),
                    max_error: r.steady_max_error(k.kind).unwrap_or(f64::NAN),
                    mae: k.mae,
                })
                .collect();
        }
        Err(e) => {
            log::warn!("sweep row {index} failed: {e}");
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Row `i` gets noise seed `base + i`; the module draw stays on the base
/// seed so every row simulates the same converter.
fn derive(base: &Scenario, index: usize) -> Scenario {
    let mut s = base.clone();
    let seed = base.cfg.rng_seed;
    s.module_seed = Some(base.module_seed.unwrap_or(seed));
    s.cfg.rng_seed = seed.wrapping_add(index as u64);
    s
}

fn run_rows(jobs: Vec<Scenario>) -> Result<Vec<SweepRow>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_limit() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Usage(format!("cannot start sweep workers: {e}")))?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        jobs.into_par_iter()
            .enumerate()
            .map(|(i, s)| run_row(i, s))
            .collect()
    });
    rows.sort_by_key(|r| r.index);
    Ok(rows)
}

/// One run per sampling frequency.
pub fn sweep_sampling(s: &Scenario, f_list: &[f64]) -> Result<Vec<SweepRow>> {
    let jobs = f_list
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let mut row = derive(s, i);
            row.cfg.f_sample = f;
            row
        })
        .collect();
    run_rows(jobs)
}

/// One run per (carrier frequency, modulation-index schedule) pair. An empty
/// schedule list runs each frequency with the scenario's own schedule.
pub fn sweep_switching(
    s: &Scenario,
    f_sw_list: &[f64],
    ma_schedules: &[Vec<(f64, f64)>],
) -> Result<Vec<SweepRow>> {
    let own = [s.ma_schedule.clone()];
    let schedules = if ma_schedules.is_empty() { &own[..] } else { ma_schedules };
    let mut jobs = Vec::new();
    for &f in f_sw_list {
        for schedule in schedules {
            let mut row = derive(s, jobs.len());
            row.cfg.f_carrier = f;
            row.ma_schedule = schedule.clone();
            jobs.push(row);
        }
    }
    run_rows(jobs)
}
