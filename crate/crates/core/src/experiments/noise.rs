use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::instance::{stream, Instance};
use super::record::{save_csv_rows, write_file, RunRecord};
use super::stats::{mean, std_dev};
use super::svg::{line_plot, Scale, Series};
use super::{mean_curve, par_map, train_allowing_divergence};
use crate::certificates::{recovery_bound, RecoveryBoundInputs, Variant};
use crate::error::{Error, Result};
use crate::linalg::{label, norm, sub_vec, SeededRng};
use crate::model::{Layers, TwoLayerNet};
use crate::operators::{
    expected_noise_floor, gaussian_operator, make_noise, prescribed_spectrum_operator, NoiseSpec,
};
use crate::trainer::{RecordFlags, StepMode, TrainConfig};

/// Mean and spread of the signal error at one recorded iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub iter: usize,
    pub mean_signal_error: f64,
    pub std_signal_error: f64,
    pub noise_floor: f64,
}

/// Per-`β` summary of the noise sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub beta: f64,
    pub mean_final_error: f64,
    pub std_final_error: f64,
    /// `√m β / (√6 μ_F)`.
    pub noise_floor: f64,
    /// `noise_floor − mean_final_error`.
    pub floor_gap: f64,
    pub mean_recovery_bound: f64,
    /// Runs whose final error exceeds their recovery bound.
    pub bound_violations: usize,
    /// Runs where the bound could not be evaluated.
    pub bound_unavailable: usize,
}

#[derive(Clone, Debug)]
pub struct NoiseSweepResult {
    pub records: Vec<RunRecord>,
    pub curves: Vec<CurvePoint>,
    pub summary: Vec<NoiseSummary>,
    pub mu_f: f64,
}

impl NoiseSweepResult {
    /// Write `runs.csv`, `curves.csv`, `summary.csv` and `signal_error.svg`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let runs = dir.join("runs.csv");
        save_csv_rows(&self.records, &runs)?;
        let curves = dir.join("curves.csv");
        save_csv_rows(&self.curves, &curves)?;
        let summary = dir.join("summary.csv");
        save_csv_rows(&self.summary, &summary)?;
        let mut series = Vec::new();
        for s in &self.summary {
            let pts: Vec<(f64, f64)> = self
                .curves
                .iter()
                .filter(|c| c.beta == s.beta)
                .map(|c| (c.iter as f64, c.mean_signal_error))
                .collect();
            let last = pts.last().map_or(1.0, |p| p.0);
            series.push(Series {
                name: format!("beta={}", s.beta),
                points: pts,
                dashed: false,
            });
            if s.noise_floor > 0.0 {
                series.push(Series {
                    name: format!("floor beta={}", s.beta),
                    points: vec![(0.0, s.noise_floor), (last, s.noise_floor)],
                    dashed: true,
                });
            }
        }
        let plot = dir.join("signal_error.svg");
        let svg = line_plot(
            "Signal error under noise",
            "iteration",
            "mean ||x - xbar||",
            Scale::Linear,
            Scale::Log,
            &series,
        );
        write_file(&plot, svg.as_bytes())?;
        Ok(vec![runs, curves, summary, plot])
    }
}

/// Signal error under uniform noise with one square operator of prescribed
/// spectrum and one ground truth shared by every run.
///
/// Trial `t` draws its network and a noise direction `ξ`; level `β` uses the
/// same draw rescaled, so errors are comparable across levels. Each run also
/// evaluates the descent recovery bound at its final iteration.
pub fn run_noise_sweep(cfg: &ExperimentConfig) -> Result<NoiseSweepResult> {
    cfg.validate()?;
    if cfg.experiment != ExperimentKind::NoiseSweep {
        return Err(Error::Config(format!("{} is not noise_sweep", cfg.experiment)));
    }
    let (n, m, k, d, p) = (cfg.n[0], cfg.m[0], cfg.k[0], cfg.d[0], cfg.p[0]);
    let shared = SeededRng::new(cfg.base_seed, 0);
    let op = prescribed_spectrum_operator(
        n,
        &cfg.noise_spectrum(),
        &mut shared.derive(label(&[stream::OPERATOR])),
    )?;
    let mu_f = op.sigma_min();
    let signal = shared.derive(label(&[stream::SIGNAL])).normal_vec(n);

    let jobs: Vec<(f64, usize)> = cfg
        .beta
        .iter()
        .flat_map(|&b| (0..cfg.trials).map(move |t| (b, t)))
        .collect();
    let train_cfg = TrainConfig {
        max_iters: cfg.max_iters,
        loss_threshold: cfg.threshold,
        step_mode: StepMode::AutoCertified {
            safety: cfg.step_safety,
        },
        trace_stride: cfg.trace_stride,
        record: RecordFlags {
            signal_error: true,
            ..RecordFlags::none()
        },
        milestone: None,
    };
    let outcomes = par_map(cfg.threads, &jobs, |&(beta, trial)| {
        let start = Instant::now();
        let base = SeededRng::new(cfg.base_seed, trial as u64 + 1);
        let net = TwoLayerNet::init(
            k,
            d,
            n,
            Layers::FixedV,
            cfg.activation,
            &mut base.derive(label(&[stream::NETWORK])),
        )?;
        let noise = make_noise(NoiseSpec { beta, m }, &mut base.derive(label(&[stream::NOISE])))?;
        let inst = Instance::assemble(net, op.clone(), signal.clone(), noise, p, 1.0)?;
        let cert = inst.certify(Variant::Discrete, cfg.step_safety)?;
        let trace = train_allowing_divergence(&inst, &train_cfg)?;
        let eps_norm = inst.noise_norm();
        let bound = recovery_bound(
            &cert,
            &RecoveryBoundInputs::linear(&inst.op, eps_norm),
            trace.iterations as f64,
            Some(mu_f),
        )
        .ok();
        let curve: Vec<(usize, f64)> = trace
            .records
            .iter()
            .filter_map(|r| r.signal_err.map(|e| (r.iter, e)))
            .collect();
        let rec = RunRecord {
            experiment: cfg.experiment,
            n,
            m,
            k,
            d,
            p,
            beta,
            trial,
            seed: cfg.base_seed,
            converged: trace.converged,
            final_loss: trace.final_loss,
            iterations: trace.iterations,
            final_signal_error: norm(&sub_vec(&trace.final_signal, &inst.signal)),
            milestone_iter: None,
            step: trace.step,
            eps_norm: Some(eps_norm),
            recovery_bound: bound,
            wall_time: start.elapsed().as_secs_f64(),
        };
        Ok((rec, curve))
    })?;

    let mut records = Vec::new();
    let mut curves = Vec::new();
    let mut summary = Vec::new();
    for (bi, &beta) in cfg.beta.iter().enumerate() {
        let chunk = &outcomes[bi * cfg.trials..(bi + 1) * cfg.trials];
        let floor = expected_noise_floor(m, beta, mu_f)?;
        let traces: Vec<Vec<(usize, f64)>> = chunk.iter().map(|(_, c)| c.clone()).collect();
        for (iter, mu, sd) in mean_curve(&traces) {
            curves.push(CurvePoint {
                beta,
                iter,
                mean_signal_error: mu,
                std_signal_error: sd,
                noise_floor: floor,
            });
        }
        let errs: Vec<f64> = chunk.iter().map(|(r, _)| r.final_signal_error).collect();
        let bounds: Vec<f64> = chunk.iter().filter_map(|(r, _)| r.recovery_bound).collect();
        let violations = chunk
            .iter()
            .filter(|(r, _)| r.recovery_bound.is_some_and(|b| r.final_signal_error > b))
            .count();
        let mean_err = mean(&errs);
        summary.push(NoiseSummary {
            beta,
            mean_final_error: mean_err,
            std_final_error: std_dev(&errs),
            noise_floor: floor,
            floor_gap: floor - mean_err,
            mean_recovery_bound: mean(&bounds),
            bound_violations: violations,
            bound_unavailable: chunk.len() - bounds.len(),
        });
        records.extend(chunk.iter().map(|(r, _)| r.clone()));
    }
    Ok(NoiseSweepResult {
        records,
        curves,
        summary,
        mu_f,
    })
}

/// Per-`(k, β)` summary of the width study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthSummary {
    pub k: usize,
    pub beta: f64,
    pub trials: usize,
    pub mean_final_loss: f64,
    pub std_final_loss: f64,
}

#[derive(Clone, Debug)]
pub struct NoiseVsKResult {
    pub records: Vec<RunRecord>,
    pub summary: Vec<WidthSummary>,
}

impl NoiseVsKResult {
    /// Mean final losses for one noise level, ordered by `k`.
    pub fn column(&self, beta: f64) -> Vec<(usize, f64)> {
        self.summary
            .iter()
            .filter(|s| s.beta == beta)
            .map(|s| (s.k, s.mean_final_loss))
            .collect()
    }

    /// Write `runs.csv`, `summary.csv` and `final_loss.svg`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let runs = dir.join("runs.csv");
        save_csv_rows(&self.records, &runs)?;
        let summary = dir.join("summary.csv");
        save_csv_rows(&self.summary, &summary)?;
        let mut betas: Vec<f64> = self.summary.iter().map(|s| s.beta).collect();
        betas.dedup();
        let series: Vec<Series> = betas
            .iter()
            .map(|&b| Series {
                name: format!("beta={b}"),
                points: self.column(b).into_iter().map(|(k, l)| (k as f64, l)).collect(),
                dashed: false,
            })
            .collect();
        let plot = dir.join("final_loss.svg");
        let svg = line_plot(
            "Final loss against width",
            "k",
            "mean final loss",
            Scale::Log,
            Scale::Log,
            &series,
        );
        write_file(&plot, svg.as_bytes())?;
        Ok(vec![runs, summary, plot])
    }
}

/// Final loss after a fixed budget for each width and noise level.
///
/// Trial `t` draws one Gaussian operator, ground truth, noise direction and
/// network; widths use nested prefixes of that network and noise levels
/// rescale the same direction.
pub fn run_noise_vs_k(cfg: &ExperimentConfig) -> Result<NoiseVsKResult> {
    cfg.validate()?;
    if cfg.experiment != ExperimentKind::NoiseVsK {
        return Err(Error::Config(format!("{} is not noise_vs_k", cfg.experiment)));
    }
    let (n, m, d, p) = (cfg.n[0], cfg.m[0], cfg.d[0], cfg.p[0]);
    let mut ks = cfg.k.clone();
    ks.sort_unstable();
    ks.dedup();
    let mut jobs = Vec::new();
    for &beta in &cfg.beta {
        for &k in &ks {
            for trial in 0..cfg.trials {
                jobs.push((beta, k, trial));
            }
        }
    }
    let train_cfg = TrainConfig {
        max_iters: cfg.max_iters,
        loss_threshold: cfg.threshold,
        step_mode: StepMode::AutoCertified {
            safety: cfg.step_safety,
        },
        trace_stride: cfg.max_iters.max(1),
        record: RecordFlags::none(),
        milestone: None,
    };
    let records = par_map(cfg.threads, &jobs, |&(beta, k, trial)| {
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
        let noise = make_noise(NoiseSpec { beta, m }, &mut base.derive(label(&[stream::NOISE])))?;
        let inst = Instance::assemble(net, op, signal, noise, p, 1.0)?;
        let trace = train_allowing_divergence(&inst, &train_cfg)?;
        Ok(RunRecord {
            experiment: cfg.experiment,
            n,
            m,
            k,
            d,
            p,
            beta,
            trial,
            seed: cfg.base_seed,
            converged: trace.converged,
            final_loss: trace.final_loss,
            iterations: trace.iterations,
            final_signal_error: norm(&sub_vec(&trace.final_signal, &inst.signal)),
            milestone_iter: None,
            step: trace.step,
            eps_norm: Some(inst.noise_norm()),
            recovery_bound: None,
            wall_time: start.elapsed().as_secs_f64(),
        })
    })?;
    let summary = records
        .chunks(cfg.trials)
        .map(|chunk| {
            let losses: Vec<f64> = chunk.iter().map(|r| r.final_loss).collect();
            WidthSummary {
                k: chunk[0].k,
                beta: chunk[0].beta,
                trials: chunk.len(),
                mean_final_loss: mean(&losses),
                std_final_loss: std_dev(&losses),
            }
        })
        .collect();
    Ok(NoiseVsKResult { records, summary })
}
