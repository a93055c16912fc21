//! Seeded parameter sweeps with CSV output and per-cell summaries.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::GridMap;
use crate::high_level::{solve, Outcome, SolverConfig, Variant};
use crate::instance::{parse_scen, Instance, InstanceError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub map: String,
    pub scen: String,
    pub n_streams: usize,
    pub cycle: u32,
    pub seed: u64,
    pub variant: String,
    pub outcome: Outcome,
    pub soc: Option<u64>,
    pub runtime_ms: f64,
    pub ct_expanded: u64,
    pub ct_generated: u64,
    pub low_level_expansions: u64,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub map_name: String,
    pub scen_name: String,
    pub map: Arc<GridMap>,
    pub scen_text: String,
    pub streams: Vec<usize>,
    pub cycles: Vec<u32>,
    pub seeds: u64,
    pub variants: Vec<Variant>,
    pub timeout: Duration,
    pub jobs: usize,
    /// Write measured runtimes; when false every runtime is 0.
    pub record_runtime: bool,
}

struct Job {
    n: usize,
    cycle: u32,
    seed: u64,
    variant: Variant,
    inst: Arc<Instance>,
}

fn run_job(cfg: &BenchConfig, job: &Job) -> BenchRow {
    let solver = SolverConfig::new(job.variant)
        .with_timeout(cfg.timeout)
        .with_seed(job.seed);
    let report = solve(&job.inst, &solver).expect("bench instances use a uniform cycle");
    let runtime = match report.outcome {
        Outcome::Timeout => cfg.timeout,
        _ => report.elapsed.min(cfg.timeout),
    };
    log::info!(
        "n={} c={} seed={} {}: {}",
        job.n,
        job.cycle,
        job.seed,
        job.variant,
        report.outcome
    );
    BenchRow {
        map: cfg.map_name.clone(),
        scen: cfg.scen_name.clone(),
        n_streams: job.n,
        cycle: job.cycle,
        seed: job.seed,
        variant: job.variant.to_string(),
        outcome: report.outcome,
        soc: report.soc,
        runtime_ms: if cfg.record_runtime {
            runtime.as_secs_f64() * 1e3
        } else {
            0.0
        },
        ct_expanded: report.ct_expanded,
        ct_generated: report.ct_generated,
        low_level_expansions: report.low_level_expansions,
    }
}

/// Builds every instance up front (so bad parameters fail before any solve),
/// then solves them, returning rows in (streams, cycle, seed, variant) order.
pub fn run_sweep(cfg: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    let mut jobs = Vec::new();
    for &n in &cfg.streams {
        for &cycle in &cfg.cycles {
            for seed in 0..cfg.seeds {
                let inst = Arc::new(parse_scen(&cfg.scen_text, Arc::clone(&cfg.map), n, cycle, seed)?);
                for &variant in &cfg.variants {
                    jobs.push(Job {
                        n,
                        cycle,
                        seed,
                        variant,
                        inst: Arc::clone(&inst),
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()?;
    Ok(pool.install(|| jobs.par_iter().map(|j| run_job(cfg, j)).collect()))
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Success rate and mean runtime of one (streams, cycle, variant) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryCell {
    pub n_streams: usize,
    pub cycle: u32,
    pub variant: String,
    pub total: usize,
    pub solved: usize,
    pub success_rate: f64,
    pub mean_runtime_ms: f64,
}

/// Groups rows by cell; runtimes are clamped to the budget.
pub fn summarize(rows: &[BenchRow], timeout: Duration) -> Vec<SummaryCell> {
    let budget = timeout.as_secs_f64() * 1e3;
    let mut cells: BTreeMap<(usize, u32, String), (usize, usize, f64)> = BTreeMap::new();
    for r in rows {
        let e = cells
            .entry((r.n_streams, r.cycle, r.variant.clone()))
            .or_default();
        e.0 += 1;
        e.1 += usize::from(r.outcome == Outcome::Solved);
        e.2 += if r.outcome == Outcome::Timeout {
            budget
        } else {
            r.runtime_ms.min(budget)
        };
    }
    cells
        .into_iter()
        .map(|((n_streams, cycle, variant), (total, solved, runtime))| SummaryCell {
            n_streams,
            cycle,
            variant,
            total,
            solved,
            success_rate: solved as f64 / total as f64,
            mean_runtime_ms: runtime / total as f64,
        })
        .collect()
}

pub fn format_summary(cells: &[SummaryCell]) -> String {
    let mut out = format!(
        "{:>9} {:>6} {:>8} {:>7} {:>9} {:>14}\n",
        "streams", "cycle", "variant", "solved", "success", "mean_ms"
    );
    for c in cells {
        out.push_str(&format!(
            "{:>9} {:>6} {:>8} {:>3}/{:<3} {:>9.3} {:>14.3}\n",
            c.n_streams, c.cycle, c.variant, c.solved, c.total, c.success_rate, c.mean_runtime_ms
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, variant: &str, outcome: Outcome, ms: f64) -> BenchRow {
        BenchRow {
            map: "m".into(),
            scen: "s".into(),
            n_streams: n,
            cycle: 2,
            seed: 0,
            variant: variant.into(),
            outcome,
            soc: (outcome == Outcome::Solved).then_some(3),
            runtime_ms: ms,
            ct_expanded: 1,
            ct_generated: 1,
            low_level_expansions: 1,
        }
    }

    #[test]
    fn summary_rates_and_clamping() {
        let rows = [
            row(2, "a-nd", Outcome::Solved, 10.0),
            row(2, "a-nd", Outcome::Timeout, 5.0),
            row(2, "a-d", Outcome::Solved, 4.0),
        ];
        let cells = summarize(&rows, Duration::from_millis(100));
        assert_eq!(cells.len(), 2);
        let and = cells.iter().find(|c| c.variant == "a-nd").unwrap();
        assert_eq!(and.success_rate, 0.5);
        assert_eq!(and.mean_runtime_ms, 55.0);
    }

    #[test]
    fn csv_header_and_empty_soc() {
        let mut buf = Vec::new();
        write_csv(&[row(2, "a-nd", Outcome::Timeout, 1.5)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "map,scen,n_streams,cycle,seed,variant,outcome,soc,runtime_ms,ct_expanded,ct_generated,low_level_expansions"
        );
        assert_eq!(lines.next().unwrap(), "m,s,2,2,0,a-nd,timeout,,1.5,1,1,1");
    }
}
