use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::instance::{stream, Instance};
use super::record::{save_csv_rows, write_file, RunRecord};
use super::stats::{mean, median};
use super::svg::{line_plot, Scale, Series};
use super::{mean_curve, par_map, train_allowing_divergence};
use crate::certificates::Variant;
use crate::error::{Error, Result};
use crate::linalg::{label, norm, sub_vec, SeededRng};
use crate::model::{Layers, TwoLayerNet};
use crate::operators::gaussian_operator;
use crate::trainer::{RecordFlags, StepMode, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossCurvePoint {
    pub p: f64,
    pub iter: usize,
    pub mean_loss: f64,
}

/// Per-`p` summary. Runs that never reach the milestone count as `+∞` in the
/// median.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PSummary {
    pub p: f64,
    pub trials: usize,
    pub reached_milestone: usize,
    pub median_iters_to_milestone: f64,
    pub mean_final_loss: f64,
    /// Runs whose initialization gate holds (evaluated for `p = 0` only).
    pub gated_runs: usize,
    /// Recorded points of gated runs above `rate_base^τ L(0)`.
    pub geometric_violations: usize,
}

#[derive(Clone, Debug)]
pub struct PSweepResult {
    pub records: Vec<RunRecord>,
    pub curves: Vec<LossCurvePoint>,
    pub summary: Vec<PSummary>,
    /// Recorded points where some trajectory increased.
    pub monotonicity_violations: usize,
}

impl PSweepResult {
    /// Write `runs.csv`, `curves.csv`, `summary.csv` and `loss.svg`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let runs = dir.join("runs.csv");
        save_csv_rows(&self.records, &runs)?;
        let curves = dir.join("curves.csv");
        save_csv_rows(&self.curves, &curves)?;
        let summary = dir.join("summary.csv");
        save_csv_rows(&self.summary, &summary)?;
        let series: Vec<Series> = self
            .summary
            .iter()
            .map(|s| Series {
                name: format!("p={}", s.p),
                points: self
                    .curves
                    .iter()
                    .filter(|c| c.p == s.p)
                    .map(|c| (c.iter as f64, c.mean_loss))
                    .collect(),
                dashed: false,
            })
            .collect();
        let plot = dir.join("loss.svg");
        let svg = line_plot(
            "Mean loss by exponent p",
            "iteration",
            "mean loss",
            Scale::Linear,
            Scale::Log,
            &series,
        );
        write_file(&plot, svg.as_bytes())?;
        Ok(vec![runs, curves, summary, plot])
    }

    /// Median iterations to the milestone, in the configured order of `p`.
    pub fn medians(&self) -> Vec<(f64, f64)> {
        self.summary
            .iter()
            .map(|s| (s.p, s.median_iters_to_milestone))
            .collect()
    }
}

/// Loss trajectories for each exponent `p` of `‖r‖^{2(p+1)} / (2(p+1))`.
///
/// Trial `t` draws one operator, ground truth and network shared by every
/// `p`. Training stops at `threshold`; the first iteration at or below
/// `milestone` is recorded.
pub fn run_p_sweep(cfg: &ExperimentConfig) -> Result<PSweepResult> {
    cfg.validate()?;
    if cfg.experiment != ExperimentKind::PSweep {
        return Err(Error::Config(format!("{} is not p_sweep", cfg.experiment)));
    }
    let (n, m, k, d) = (cfg.n[0], cfg.m[0], cfg.k[0], cfg.d[0]);
    let jobs: Vec<(f64, usize)> = cfg
        .p
        .iter()
        .flat_map(|&p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let train_cfg = TrainConfig {
        max_iters: cfg.max_iters,
        loss_threshold: cfg.threshold,
        step_mode: StepMode::AutoCertified {
            safety: cfg.step_safety,
        },
        trace_stride: cfg.trace_stride,
        record: RecordFlags::none(),
        milestone: Some(cfg.milestone),
    };
    let outcomes = par_map(cfg.threads, &jobs, |&(p, trial)| {
        let start = Instant::now();
        let base = SeededRng::new(cfg.base_seed, trial as u64);
        let op = gaussian_operator(m, n, &mut base.derive(label(&[stream::OPERATOR])))?;
        let signal = base.derive(label(&[stream::SIGNAL])).normal_vec(n);
        let net = TwoLayerNet::init(
            k,
            d,
            n,
            Layers::FixedV,
            cfg.activation,
            &mut base.derive(label(&[stream::NETWORK])),
        )?;
        let inst = Instance::assemble(net, op, signal, vec![0.0; m], p, 1.0)?;
        let trace = train_allowing_divergence(&inst, &train_cfg)?;
        let curve: Vec<(usize, f64)> = trace.records.iter().map(|r| (r.iter, r.loss)).collect();
        let increases = curve.windows(2).filter(|w| w[1].1 > w[0].1).count();
        // Geometric envelope rate_base^τ L(0), meaningful for p = 0 with the gate.
        let mut gated = false;
        let mut above = 0;
        if p == 0.0 {
            let cert = inst.certify(Variant::Discrete, cfg.step_safety)?;
            if cert.gate {
                gated = true;
                let l0 = curve.first().map_or(0.0, |c| c.1);
                above = curve
                    .iter()
                    .filter(|&&(it, l)| l > cert.rate_base.powf(it as f64) * l0 * (1.0 + 1e-12))
                    .count();
            }
        }
        let rec = RunRecord {
            experiment: cfg.experiment,
            n,
            m,
            k,
            d,
            p,
            beta: 0.0,
            trial,
            seed: cfg.base_seed,
            converged: trace.converged,
            final_loss: trace.final_loss,
            iterations: trace.iterations,
            final_signal_error: norm(&sub_vec(&trace.final_signal, &inst.signal)),
            milestone_iter: trace.milestone_iter,
            step: trace.step,
            eps_norm: None,
            recovery_bound: None,
            wall_time: start.elapsed().as_secs_f64(),
        };
        Ok((rec, curve, increases, gated, above))
    })?;

    let mut records = Vec::new();
    let mut curves = Vec::new();
    let mut summary = Vec::new();
    let mut monotonicity_violations = 0;
    for (pi, &p) in cfg.p.iter().enumerate() {
        let chunk = &outcomes[pi * cfg.trials..(pi + 1) * cfg.trials];
        let traces: Vec<Vec<(usize, f64)>> = chunk.iter().map(|o| o.1.clone()).collect();
        for (iter, mu, _) in mean_curve(&traces) {
            curves.push(LossCurvePoint {
                p,
                iter,
                mean_loss: mu,
            });
        }
        let hits: Vec<f64> = chunk
            .iter()
            .map(|o| o.0.milestone_iter.map_or(f64::INFINITY, |i| i as f64))
            .collect();
        let finals: Vec<f64> = chunk.iter().map(|o| o.0.final_loss).collect();
        monotonicity_violations += chunk.iter().map(|o| o.2).sum::<usize>();
        summary.push(PSummary {
            p,
            trials: chunk.len(),
            reached_milestone: hits.iter().filter(|h| h.is_finite()).count(),
            median_iters_to_milestone: median(&hits),
            mean_final_loss: mean(&finals),
            gated_runs: chunk.iter().filter(|o| o.3).count(),
            geometric_violations: chunk.iter().map(|o| o.4).sum(),
        });
        records.extend(chunk.iter().map(|o| o.0.clone()));
    }
    Ok(PSweepResult {
        records,
        curves,
        summary,
        monotonicity_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Preset;

    #[test]
    fn small_p_sweep() {
        let mut cfg = ExperimentConfig::preset(ExperimentKind::PSweep, Preset::Reduced);
        cfg.n = vec![4];
        cfg.m = vec![2];
        cfg.k = vec![200];
        cfg.d = vec![5];
        cfg.p = vec![0.0, 1.0];
        cfg.trials = 3;
        cfg.max_iters = 20_000;
        cfg.trace_stride = 50;
        let res = run_p_sweep(&cfg).unwrap();
        assert_eq!(res.records.len(), 6);
        assert_eq!(res.monotonicity_violations, 0);
        for r in &res.records {
            if r.converged {
                assert!(r.milestone_iter.is_some());
                assert!(r.final_loss <= cfg.threshold);
            }
        }
        assert_eq!(res.summary.len(), 2);
        assert_eq!(res.summary[0].geometric_violations, 0);
    }
}
