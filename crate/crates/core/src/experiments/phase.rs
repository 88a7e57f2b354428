use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::config::{ExperimentConfig, ExperimentKind};
use super::instance::{stream, Instance};
use super::record::{save_csv_rows, write_file, RunRecord};
use super::{par_map, svg, train_allowing_divergence};
use crate::error::{Error, Result};
use crate::linalg::{label, norm, sub_vec, SeededRng};
use crate::model::{Layers, TwoLayerNet};
use crate::operators::gaussian_operator;
use crate::trainer::{RecordFlags, StepMode, TrainConfig};

/// Convergence frequencies on a `(k, x)` grid, `x` being `n` or `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapGrid {
    /// Name of the column axis (`"n"` or `"m"`).
    pub x_label: String,
    /// Column coordinates, ascending.
    pub x: Vec<usize>,
    /// Row coordinates (widths `k`), ascending.
    pub k: Vec<usize>,
    /// `converged[row][col]`.
    pub converged: Vec<Vec<usize>>,
    pub trials: usize,
}

impl HeatmapGrid {
    pub fn frequency(&self, row: usize, col: usize) -> f64 {
        self.converged[row][col] as f64 / self.trials as f64
    }

    /// Frequencies of one column, ordered by `k`.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.k.len()).map(|r| self.frequency(r, col)).collect()
    }

    /// Aggregate run records; every cell must hold exactly `trials` runs.
    pub fn from_records(records: &[RunRecord], x_label: &str, trials: usize) -> Result<Self> {
        let xc = |r: &RunRecord| if x_label == "m" { r.m } else { r.n };
        let mut x: Vec<usize> = records.iter().map(xc).collect();
        let mut k: Vec<usize> = records.iter().map(|r| r.k).collect();
        x.sort_unstable();
        x.dedup();
        k.sort_unstable();
        k.dedup();
        let mut converged = vec![vec![0; x.len()]; k.len()];
        let mut counts = vec![vec![0; x.len()]; k.len()];
        for r in records {
            let (row, col) = (
                k.binary_search(&r.k).unwrap_or_default(),
                x.binary_search(&xc(r)).unwrap_or_default(),
            );
            counts[row][col] += 1;
            if r.converged {
                converged[row][col] += 1;
            }
        }
        if counts.iter().flatten().any(|&c| c != trials) {
            return Err(Error::Format(format!(
                "every heatmap cell must hold exactly {trials} runs"
            )));
        }
        Ok(Self {
            x_label: x_label.to_string(),
            x,
            k,
            converged,
            trials,
        })
    }

    /// Long-format CSV with header `<x_label>,k,trials,converged,frequency`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([self.x_label.as_str(), "k", "trials", "converged", "frequency"])?;
        for (col, x) in self.x.iter().enumerate() {
            for (row, k) in self.k.iter().enumerate() {
                w.write_record([
                    x.to_string(),
                    k.to_string(),
                    self.trials.to_string(),
                    self.converged[row][col].to_string(),
                    self.frequency(row, col).to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let x_label = r
            .headers()?
            .get(0)
            .ok_or_else(|| Error::Format("empty heatmap header".into()))?
            .to_string();
        let mut cells = Vec::new();
        let mut trials = None;
        for row in r.records() {
            let row = row?;
            let field = |i: usize| -> Result<usize> {
                row.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad heatmap field {i}")))
            };
            let t = field(2)?;
            if *trials.get_or_insert(t) != t {
                return Err(Error::Format("inconsistent trial counts".into()));
            }
            cells.push((field(0)?, field(1)?, field(3)?));
        }
        let trials = trials.ok_or_else(|| Error::Format("empty heatmap".into()))?;
        let mut x: Vec<usize> = cells.iter().map(|c| c.0).collect();
        let mut k: Vec<usize> = cells.iter().map(|c| c.1).collect();
        x.sort_unstable();
        x.dedup();
        k.sort_unstable();
        k.dedup();
        let mut converged = vec![vec![0; x.len()]; k.len()];
        for (xv, kv, c) in cells {
            let row = k.binary_search(&kv).unwrap_or_default();
            let col = x.binary_search(&xv).unwrap_or_default();
            converged[row][col] = c;
        }
        Ok(Self {
            x_label,
            x,
            k,
            converged,
            trials,
        })
    }
}

/// Least-squares quadratic `k*(x) = a x² + b x + c` through per-column
/// crossing points.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `(x, k*)` crossing points used in the fit.
    pub points: Vec<(f64, f64)>,
    /// `k* − fitted` per point.
    pub residuals: Vec<f64>,
    /// Columns without a crossing, with the reason.
    pub excluded: Vec<(usize, String)>,
}

impl BoundaryFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * x * x + self.b * x + self.c
    }

    pub fn rms_residual(&self) -> f64 {
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / self.residuals.len() as f64).sqrt()
    }

    /// `key: value` summary.
    pub fn report(&self) -> String {
        let mut s = format!(
            "a: {:e}\nb: {:e}\nc: {:e}\nrms_residual: {:e}\npoints: {}\n",
            self.a,
            self.b,
            self.c,
            self.rms_residual(),
            self.points.len()
        );
        for (x, why) in &self.excluded {
            s.push_str(&format!("excluded_{x}: {why}\n"));
        }
        s
    }
}

/// Width at which a column's frequency first reaches `level`, by linear
/// interpolation between neighbouring rows.
pub fn column_crossing(k: &[usize], freq: &[f64], level: f64) -> std::result::Result<f64, String> {
    let i = freq
        .iter()
        .position(|&f| f >= level)
        .ok_or_else(|| format!("frequency never reaches {level}"))?;
    if i == 0 {
        return Err(format!("frequency is already ≥ {level} at the smallest k"));
    }
    let (k0, k1) = (k[i - 1] as f64, k[i] as f64);
    let (f0, f1) = (freq[i - 1], freq[i]);
    Ok(k0 + (level - f0) / (f1 - f0) * (k1 - k0))
}

/// Fit the phase boundary at frequency `level` (typically 0.5).
///
/// Columns without a crossing are excluded and listed. Fewer than three
/// usable columns is an error.
pub fn fit_phase_boundary(grid: &HeatmapGrid, level: f64) -> Result<BoundaryFit> {
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (col, &x) in grid.x.iter().enumerate() {
        match column_crossing(&grid.k, &grid.column(col), level) {
            Ok(k) => points.push((x as f64, k)),
            Err(why) => excluded.push((x, why)),
        }
    }
    if points.len() < 3 {
        let detail = excluded
            .iter()
            .map(|(x, why)| format!("{}={x}: {why}", grid.x_label))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::BoundaryUndefined(format!(
            "{} column(s) cross level {level}, need 3 ({detail})",
            points.len()
        )));
    }
    let design = DMatrix::from_fn(points.len(), 3, |i, j| points[i].0.powi(2 - j as i32));
    let rhs = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::BoundaryUndefined(e.to_string()))?;
    let mut fit = BoundaryFit {
        a: coef[0],
        b: coef[1],
        c: coef[2],
        residuals: Vec::new(),
        points,
        excluded,
    };
    fit.residuals = fit.points.iter().map(|&(x, k)| k - fit.eval(x)).collect();
    Ok(fit)
}

/// Output of [`run_phase_heatmap`].
#[derive(Clone, Debug)]
pub struct PhaseResult {
    pub grid: HeatmapGrid,
    pub records: Vec<RunRecord>,
    pub boundary: std::result::Result<BoundaryFit, String>,
}

impl PhaseResult {
    /// Write `runs.csv`, `heatmap.csv`, `boundary.txt` and `heatmap.svg`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let runs = dir.join("runs.csv");
        save_csv_rows(&self.records, &runs)?;
        let heat = dir.join("heatmap.csv");
        let mut buf = Vec::new();
        self.grid.write_csv(&mut buf)?;
        write_file(&heat, &buf)?;
        let bound = dir.join("boundary.txt");
        let text = match &self.boundary {
            Ok(fit) => fit.report(),
            Err(why) => format!("undefined: {why}\n"),
        };
        write_file(&bound, text.as_bytes())?;
        let plot = dir.join("heatmap.svg");
        let fit = self.boundary.as_ref().ok();
        write_file(&plot, svg::heatmap(&self.grid, fit).as_bytes())?;
        Ok(vec![runs, heat, bound, plot])
    }
}

/// Convergence-frequency study over `(k, n)` or `(k, m)`.
///
/// For each trial and column a fresh Gaussian operator and `x̄ ~ N(0, I)` are
/// drawn; the network of width `k` is the first `k` neurons of one draw per
/// trial, so rows share randomness. Loss `½‖A g − A x̄‖²`, fixed `V`, step
/// `step_safety / L̂`.
pub fn run_phase_heatmap(cfg: &ExperimentConfig) -> Result<PhaseResult> {
    cfg.validate()?;
    if !cfg.experiment.is_phase() {
        return Err(Error::Config(format!("{} is not a phase experiment", cfg.experiment)));
    }
    let by_m = cfg.experiment == ExperimentKind::PhaseKm;
    let mut cols: Vec<usize> = if by_m { cfg.m.clone() } else { cfg.n.clone() };
    let mut ks = cfg.k.clone();
    cols.sort_unstable();
    cols.dedup();
    ks.sort_unstable();
    ks.dedup();
    let d = cfg.d[0];

    let mut jobs = Vec::new();
    for &x in &cols {
        for &k in &ks {
            for trial in 0..cfg.trials {
                let (n, m) = if by_m { (cfg.n[0], x) } else { (x, cfg.m[0]) };
                jobs.push((n, m, k, trial));
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
    let records = par_map(cfg.threads, &jobs, |&(n, m, k, trial)| {
        let start = Instant::now();
        let base = SeededRng::new(cfg.base_seed, trial as u64);
        let op = gaussian_operator(
            m,
            n,
            &mut base.derive(label(&[stream::OPERATOR, n as u64, m as u64])),
        )?;
        let signal = base
            .derive(label(&[stream::SIGNAL, n as u64, m as u64]))
            .normal_vec(n);
        let net = TwoLayerNet::init(
            k,
            d,
            n,
            Layers::FixedV,
            cfg.activation,
            &mut base.derive(label(&[stream::NETWORK, n as u64, d as u64])),
        )?;
        let inst = Instance::assemble(net, op, signal, vec![0.0; m], 0.0, 1.0)?;
        let trace = train_allowing_divergence(&inst, &train_cfg)?;
        Ok(RunRecord {
            experiment: cfg.experiment,
            n,
            m,
            k,
            d,
            p: 0.0,
            beta: 0.0,
            trial,
            seed: cfg.base_seed,
            converged: trace.converged,
            final_loss: trace.final_loss,
            iterations: trace.iterations,
            final_signal_error: norm(&sub_vec(&trace.final_signal, &inst.signal)),
            milestone_iter: None,
            step: trace.step,
            eps_norm: None,
            recovery_bound: None,
            wall_time: start.elapsed().as_secs_f64(),
        })
    })?;
    let grid = HeatmapGrid::from_records(&records, if by_m { "m" } else { "n" }, cfg.trials)?;
    let boundary = fit_phase_boundary(&grid, 0.5).map_err(|e| e.to_string());
    Ok(PhaseResult {
        grid,
        records,
        boundary,
    })
}
