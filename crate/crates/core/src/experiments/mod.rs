//! Experiment harness: phase-transition heatmaps, noise studies and the
//! loss-exponent sweep, with CSV and SVG output.
//!
//! Every run derives its randomness from `(base_seed, trial)` and a label for
//! the component being drawn, and runs are collected in grid order, so output
//! files do not depend on the number of worker threads.

mod config;
mod instance;
mod noise;
mod phase;
mod psweep;
mod record;
pub mod stats;
pub mod svg;

use std::collections::BTreeSet;
use std::path::PathBuf;

use rayon::prelude::*;

pub use config::{ExperimentConfig, ExperimentKind, Preset};
pub use instance::{Instance, InstanceBuilder, OperatorSpec};
pub use noise::{
    run_noise_sweep, run_noise_vs_k, CurvePoint, NoiseSummary, NoiseSweepResult, NoiseVsKResult,
    WidthSummary,
};
pub use phase::{
    column_crossing, fit_phase_boundary, run_phase_heatmap, BoundaryFit, HeatmapGrid, PhaseResult,
};
pub use psweep::{run_p_sweep, LossCurvePoint, PSummary, PSweepResult};
pub use record::{load_csv_rows, read_csv_rows, save_csv_rows, write_csv_rows, RunRecord};

use crate::error::{Error, Result};
use crate::trainer::{TrainConfig, TrainTrace};

/// Files written by [`run_experiment`] and a short human-readable summary.
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub files: Vec<PathBuf>,
    pub summary: String,
    pub runs: usize,
    pub non_converged: usize,
}

/// Run the configured experiment and write its outputs to `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let dir = cfg.output_dir.as_path();
    let (files, summary, records) = match cfg.experiment {
        ExperimentKind::PhaseKn | ExperimentKind::PhaseKm => {
            let res = run_phase_heatmap(cfg)?;
            let mut s = String::new();
            for (col, x) in res.grid.x.iter().enumerate() {
                let f: Vec<String> = res.grid.column(col).iter().map(|v| format!("{v:.2}")).collect();
                s.push_str(&format!("{}={x}: {}\n", res.grid.x_label, f.join(" ")));
            }
            match &res.boundary {
                Ok(fit) => s.push_str(&format!("boundary: k = {:.4} x^2 + {:.4} x + {:.4}\n", fit.a, fit.b, fit.c)),
                Err(why) => s.push_str(&format!("boundary: {why}\n")),
            }
            (res.write(dir)?, s, res.records)
        }
        ExperimentKind::NoiseSweep => {
            let res = run_noise_sweep(cfg)?;
            let mut s = format!("mu_f: {:e}\n", res.mu_f);
            for row in &res.summary {
                s.push_str(&format!(
                    "beta={}: mean error {:.4e}, floor {:.4e}, bound violations {}\n",
                    row.beta, row.mean_final_error, row.noise_floor, row.bound_violations
                ));
            }
            (res.write(dir)?, s, res.records)
        }
        ExperimentKind::NoiseVsK => {
            let res = run_noise_vs_k(cfg)?;
            let s = res
                .summary
                .iter()
                .map(|r| format!("k={} beta={}: mean final loss {:.4e}\n", r.k, r.beta, r.mean_final_loss))
                .collect();
            (res.write(dir)?, s, res.records)
        }
        ExperimentKind::PSweep => {
            let res = run_p_sweep(cfg)?;
            let s = res
                .summary
                .iter()
                .map(|r| {
                    format!(
                        "p={}: median iterations to milestone {}, reached {}/{}\n",
                        r.p, r.median_iters_to_milestone, r.reached_milestone, r.trials
                    )
                })
                .collect();
            (res.write(dir)?, s, res.records)
        }
    };
    let config_path = dir.join("config.toml");
    record::write_file(&config_path, cfg.to_toml_string()?.as_bytes())?;
    let mut files = files;
    files.push(config_path);
    Ok(ExperimentReport {
        files,
        summary,
        runs: records.len(),
        non_converged: records.iter().filter(|r| !r.converged).count(),
    })
}

/// Map `f` over `items` on a pool of `threads` workers (0 = all cores),
/// preserving order.
pub(crate) fn par_map<T, R, F>(threads: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Train, turning a divergence into an ordinary non-converged trace.
pub(crate) fn train_allowing_divergence(inst: &Instance, cfg: &TrainConfig) -> Result<TrainTrace> {
    match inst.train(cfg) {
        Err(Error::Divergence { trace, .. }) => Ok(*trace),
        other => other,
    }
}

/// Pointwise mean and standard deviation of step-function trajectories.
///
/// Each trajectory holds `(iteration, value)` pairs; after its last point a
/// trajectory keeps its final value.
pub(crate) fn mean_curve(traces: &[Vec<(usize, f64)>]) -> Vec<(usize, f64, f64)> {
    let iters: BTreeSet<usize> = traces.iter().flatten().map(|p| p.0).collect();
    let mut cursor = vec![0usize; traces.len()];
    iters
        .into_iter()
        .map(|it| {
            let vals: Vec<f64> = traces
                .iter()
                .zip(cursor.iter_mut())
                .filter_map(|(t, c)| {
                    while *c + 1 < t.len() && t[*c + 1].0 <= it {
                        *c += 1;
                    }
                    t.get(*c).filter(|p| p.0 <= it).map(|p| p.1)
                })
                .collect();
            (it, stats::mean(&vals), stats::std_dev(&vals))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_curve_carries_final_values_forward() {
        let a = vec![(0, 4.0), (10, 2.0), (20, 1.0)];
        let b = vec![(0, 2.0), (10, 0.0)];
        let c = mean_curve(&[a, b]);
        assert_eq!(c.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 10, 20]);
        assert_eq!(c[0].1, 3.0);
        assert_eq!(c[1].1, 1.0);
        assert_eq!(c[2].1, 0.5);
    }

    #[test]
    fn par_map_preserves_order_and_errors() {
        let items: Vec<usize> = (0..100).collect();
        let out = par_map(3, &items, |&i| Ok(i * 2)).unwrap();
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
        let err = par_map(2, &items, |&i| {
            if i == 50 {
                Err(Error::invalid("boom"))
            } else {
                Ok(i)
            }
        });
        assert!(err.is_err());
    }
}
