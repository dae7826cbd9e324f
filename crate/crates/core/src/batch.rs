//! Seed batches, parameter sweeps and CSV output.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::controller::{TraceRecord, TuningPolicy, TRACE_CSV_HEADER};
use crate::error::BatchError;
use crate::metrics::{summarize, BatchSummary, RunReport, RUN_CSV_HEADER, SUMMARY_CSV_HEADER};
use crate::world::{run, FlowBalance, RunOptions, TimeSeriesRow, TIMESERIES_CSV_HEADER};

/// Results of one configuration over a seed list.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub reports: Vec<RunReport>,
    pub summary: BatchSummary,
    /// Flows whose end-of-run accounting did not balance, by seed.
    pub unbalanced: Vec<(u64, FlowBalance)>,
}

pub fn check_seeds(seeds: &[u64]) -> Result<(), BatchError> {
    if seeds.len() < 2 {
        return Err(BatchError::TooFewSeeds(seeds.len()));
    }
    let mut seen = HashSet::new();
    for s in seeds {
        if !seen.insert(*s) {
            return Err(BatchError::DuplicateSeed(*s));
        }
    }
    Ok(())
}

/// Runs `cfg` once per seed on the rayon pool. Reports come back in seed-list order.
pub fn run_batch(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<BatchOutput, BatchError> {
    check_seeds(seeds)?;
    cfg.validate()?;
    let results: Vec<Result<(RunReport, Vec<FlowBalance>), BatchError>> = seeds
        .par_iter()
        .map(|&seed| {
            let out = catch_unwind(AssertUnwindSafe(|| run(cfg, seed, RunOptions::default())))
                .map_err(|p| BatchError::RunFailed {
                    seed,
                    message: panic_message(p),
                })?
                .map_err(|e| BatchError::RunFailed {
                    seed,
                    message: e.to_string(),
                })?;
            let bad = out.balances.into_iter().filter(|b| !b.holds()).collect();
            Ok((out.report, bad))
        })
        .collect();
    let mut reports = Vec::with_capacity(seeds.len());
    let mut unbalanced = Vec::new();
    for (seed, r) in seeds.iter().zip(results) {
        let (report, bad) = r?;
        unbalanced.extend(bad.into_iter().map(|b| (*seed, b)));
        reports.push(report);
    }
    let summary = summarize(&reports);
    Ok(BatchOutput {
        reports,
        summary,
        unbalanced,
    })
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// The one parameter a sweep varies.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    Policies(Vec<TuningPolicy>),
    N(Vec<u32>),
    /// Method 1 step sizes in bytes.
    Method1Steps(Vec<u32>),
    /// Method 2 `(down, up)` factor pairs.
    Method2Factors(Vec<(f64, f64)>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Policies(v) => v.len(),
            SweepAxis::N(v) => v.len(),
            SweepAxis::Method1Steps(v) => v.len(),
            SweepAxis::Method2Factors(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The configurations along this axis.
    pub fn points(&self, base: &ScenarioConfig) -> Vec<ScenarioConfig> {
        let with = |f: &dyn Fn(&mut ScenarioConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            SweepAxis::Policies(v) => v.iter().map(|p| with(&|c| c.policy = *p)).collect(),
            SweepAxis::N(v) => v.iter().map(|n| with(&|c| c.n = *n)).collect(),
            SweepAxis::Method1Steps(v) => v
                .iter()
                .map(|s| with(&|c| c.policy = TuningPolicy::Method1 { step_bytes: *s }))
                .collect(),
            SweepAxis::Method2Factors(v) => v
                .iter()
                .map(|(d, u)| {
                    with(&|c| {
                        c.policy = TuningPolicy::Method2 {
                            down_factor: *d,
                            up_factor: *u,
                        }
                    })
                })
                .collect(),
        }
    }
}

/// Runs a batch at every point of each axis in turn (a grid when several
/// axes are given, the last axis varying fastest).
pub fn sweep(base: &ScenarioConfig, axes: &[SweepAxis], seeds: &[u64]) -> Result<Vec<BatchOutput>, BatchError> {
    if axes.is_empty() || axes.iter().any(SweepAxis::is_empty) {
        return Err(BatchError::EmptySweep);
    }
    check_seeds(seeds)?;
    let mut configs = vec![base.clone()];
    for axis in axes {
        configs = configs.iter().flat_map(|c| axis.points(c)).collect();
    }
    for c in &configs {
        c.validate()?;
    }
    configs.iter().map(|c| run_batch(c, seeds)).collect()
}

pub fn runs_csv<'a>(reports: impl IntoIterator<Item = &'a RunReport>) -> String {
    let mut s = String::from(RUN_CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

pub fn summary_csv<'a>(summaries: impl IntoIterator<Item = &'a BatchSummary>) -> String {
    let mut s = String::from(SUMMARY_CSV_HEADER);
    s.push('\n');
    for b in summaries {
        for row in b.csv_rows() {
            let _ = writeln!(s, "{row}");
        }
    }
    s
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut s = String::from(TRACE_CSV_HEADER);
    s.push('\n');
    for r in trace {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

pub fn timeseries_csv(rows: &[TimeSeriesRow]) -> String {
    let mut s = String::from(TIMESERIES_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_validation() {
        assert!(matches!(check_seeds(&[1]), Err(BatchError::TooFewSeeds(1))));
        assert!(matches!(check_seeds(&[1, 1]), Err(BatchError::DuplicateSeed(1))));
        assert!(check_seeds(&[1, 2]).is_ok());
    }

    #[test]
    fn axis_points() {
        let base = ScenarioConfig::preset("grid-16ap").unwrap();
        let pts = SweepAxis::Method1Steps(vec![1_000, 15_000]).points(&base);
        assert_eq!(pts[1].policy, TuningPolicy::Method1 { step_bytes: 15_000 });
        let pts = SweepAxis::N(vec![2, 50]).points(&base);
        assert_eq!((pts[0].n, pts[1].n), (2, 50));
    }

    #[test]
    fn empty_axis_is_rejected() {
        let base = ScenarioConfig::preset("single-ap").unwrap();
        assert!(matches!(
            sweep(&base, &[SweepAxis::N(vec![])], &[1, 2]),
            Err(BatchError::EmptySweep)
        ));
    }
}
