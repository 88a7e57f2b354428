//! Full-batch gradient descent on the network parameters.
//!
//! Every gradient with respect to `W` has the form `c uᵀ` for a vector `c`, so
//! the trainer keeps `W(τ) = W(0) + a(τ) uᵀ` implicitly and updates only the
//! hidden pre-activations `h = W u`. The explicit matrix is formed once at the
//! end. This makes an iteration `O(nk + mn)` instead of `O(nkd)`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certificates::{lip_bound, radius_r, sigma0};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, smallest_singular_value_from_gram, sub_vec, DenseMatrix};
use crate::losses::KLLoss;
use crate::model::{jacobian_gram_from_hidden, ParamVector, TwoLayerNet};
use crate::operators::ForwardOperator;

/// How the step size is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StepMode {
    /// `γ = safety / L̂` with `L̂` from [`smoothness_estimate`].
    AutoCertified { safety: f64 },
    /// A user-supplied constant step.
    Fixed { step: f64 },
}

impl Default for StepMode {
    fn default() -> Self {
        StepMode::AutoCertified { safety: 0.9 }
    }
}

/// Which optional quantities are recorded in the trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordFlags {
    pub sigma_min_j: bool,
    pub theta_drift: bool,
    pub signal_error: bool,
    pub obs_error: bool,
}

impl Default for RecordFlags {
    fn default() -> Self {
        Self {
            sigma_min_j: true,
            theta_drift: true,
            signal_error: true,
            obs_error: true,
        }
    }
}

impl RecordFlags {
    pub fn none() -> Self {
        Self {
            sigma_min_j: false,
            theta_drift: false,
            signal_error: false,
            obs_error: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_iters: usize,
    pub loss_threshold: f64,
    pub step_mode: StepMode,
    /// Record every `trace_stride`-th iteration (the last one is always recorded).
    pub trace_stride: usize,
    pub record: RecordFlags,
    /// Also report the first iteration whose loss is at or below this value.
    pub milestone: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iters: 25_000,
            loss_threshold: 1e-7,
            step_mode: StepMode::default(),
            trace_stride: 100,
            record: RecordFlags::default(),
            milestone: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        match self.step_mode {
            StepMode::AutoCertified { safety } if !(safety > 0.0 && safety <= 1.0) => {
                return Err(Error::invalid(format!("step safety {safety} outside (0, 1]")))
            }
            StepMode::Fixed { step } if !(step > 0.0 && step.is_finite()) => {
                return Err(Error::invalid(format!("step {step} must be positive")))
            }
            _ => {}
        }
        if self.trace_stride == 0 {
            return Err(Error::invalid("trace stride must be ≥ 1"));
        }
        if self.milestone.is_some_and(f64::is_nan) {
            return Err(Error::invalid("milestone is NaN"));
        }
        if self.loss_threshold.is_nan() {
            return Err(Error::invalid("loss threshold is NaN"));
        }
        Ok(())
    }
}

/// Reference values used to measure errors during training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    /// `x̄`.
    pub signal: Option<Vec<f64>>,
    /// `ȳ = F(x̄)`.
    pub clean_observation: Option<Vec<f64>>,
}

/// One recorded iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub loss: f64,
    #[serde(rename = "sigma_min_J")]
    pub sigma_min_j: Option<f64>,
    pub theta_drift: Option<f64>,
    pub signal_err: Option<f64>,
    pub obs_err: Option<f64>,
}

/// The output of [`train`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    /// Number of gradient steps taken.
    pub iterations: usize,
    pub final_loss: f64,
    pub final_network: TwoLayerNet,
    /// `x = g(u, θ)` at the last iterate.
    pub final_signal: Vec<f64>,
    pub step: f64,
    /// `L̂` when the step was certified.
    pub smoothness: Option<f64>,
    /// First iteration at or below [`TrainConfig::milestone`].
    pub milestone_iter: Option<usize>,
}

impl TrainTrace {
    pub fn final_params(&self) -> ParamVector {
        self.final_network.params()
    }

    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.loss)
    }

    /// Write the trace as CSV with header
    /// `iter,loss,sigma_min_J,theta_drift,signal_err,obs_err`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(["iter", "loss", "sigma_min_J", "theta_drift", "signal_err", "obs_err"])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Read a trace CSV back into records.
pub fn read_trace_csv(input: impl std::io::Read) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Smoothness bound `L̂` for `θ ↦ L(F(g(u, θ)))` on the sublevel set of the
/// initial loss inside `Ball(θ₀, radius)`.
///
/// With `r₀ = ‖F(g(θ₀)) − y‖`, `Lip_J` from [`lip_bound`],
/// `Lip_g = ‖J(θ₀)‖ + Lip_J · radius` and loss weight `w`,
///
/// `L̂ = w [(2p+1) r₀^{2p} (L_F Lip_g)² + r₀^{2p+1} (L_F Lip_J + L_JF Lip_g²)]`.
///
/// The first term bounds the Gauss–Newton part of the Hessian and the second
/// the curvature of the network and operator.
pub fn smoothness_estimate<F: ForwardOperator + ?Sized>(
    net: &TwoLayerNet,
    op: &F,
    loss: &KLLoss,
    radius: f64,
) -> Result<f64> {
    let parts = smoothness_parts(net, op, loss, radius)?;
    let p = loss.p();
    let r0 = parts.residual0;
    let l_f = op.jacobian_norm_bound();
    let gn = (2.0 * p + 1.0) * r0.powf(2.0 * p) * (l_f * parts.lip_g).powi(2);
    let curv = r0.powf(2.0 * p + 1.0)
        * (l_f * parts.lip_j + op.jacobian_lipschitz() * parts.lip_g * parts.lip_g);
    Ok(loss.weight() * (gn + curv))
}

/// `2 Lip_J Lip_g ‖A‖²`, a smaller constant built from the same ingredients
/// as [`smoothness_estimate`].
///
/// It omits the Gauss–Newton term `(L_F Lip_g)²`, which does not vanish as the
/// width grows, so it does not bound the Hessian of the loss in general. A
/// step of `1/L̂` with this constant can diverge for wide networks. Provided
/// for comparison only.
pub fn product_form_smoothness<F: ForwardOperator + ?Sized>(
    net: &TwoLayerNet,
    op: &F,
    loss: &KLLoss,
    radius: f64,
) -> Result<f64> {
    let parts = smoothness_parts(net, op, loss, radius)?;
    let l_f = op.jacobian_norm_bound();
    Ok(2.0 * parts.lip_j * parts.lip_g * l_f * l_f)
}

struct SmoothnessParts {
    lip_j: f64,
    lip_g: f64,
    residual0: f64,
}

fn smoothness_parts<F: ForwardOperator + ?Sized>(
    net: &TwoLayerNet,
    op: &F,
    loss: &KLLoss,
    radius: f64,
) -> Result<SmoothnessParts> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius {radius} must be finite and ≥ 0")));
    }
    check_shapes(net, op, loss)?;
    let b = net.activation().lipschitz_constant();
    let lip_j = lip_bound(net.layers(), b, net.v_bound(), net.n(), net.k(), radius);
    let gram = net.jacobian_gram();
    let j_norm = crate::linalg::symmetric_eigenvalues(&gram)?
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt();
    let lip_g = j_norm + lip_j * radius;
    let y0 = op.apply(&net.forward())?;
    let residual0 = norm(&sub_vec(&y0, loss.target()));
    Ok(SmoothnessParts {
        lip_j,
        lip_g,
        residual0,
    })
}

fn check_shapes<F: ForwardOperator + ?Sized>(net: &TwoLayerNet, op: &F, loss: &KLLoss) -> Result<()> {
    if op.input_dim() != net.n() {
        return Err(Error::invalid(format!(
            "operator expects signals of length {}, network produces {}",
            op.input_dim(),
            net.n()
        )));
    }
    if op.output_dim() != loss.target().len() {
        return Err(Error::invalid(format!(
            "operator output length {} differs from observation length {}",
            op.output_dim(),
            loss.target().len()
        )));
    }
    Ok(())
}

/// `∇_θ L(F(g(u, θ)))` in the layout of [`TwoLayerNet::params`].
pub fn grad_theta<F: ForwardOperator + ?Sized>(
    net: &TwoLayerNet,
    op: &F,
    loss: &KLLoss,
) -> Result<ParamVector> {
    check_shapes(net, op, loss)?;
    let x = net.forward();
    let y = op.apply(&x)?;
    let g = loss.gradient(&y)?;
    let w = op.adjoint_apply(&x, &g)?;
    net.vjp(&w)
}

/// The certified step `safety / L̂` together with `L̂`.
pub fn certified_step<F: ForwardOperator + ?Sized>(
    net: &TwoLayerNet,
    op: &F,
    loss: &KLLoss,
    safety: f64,
) -> Result<(f64, f64)> {
    let s0 = sigma0(net)?;
    let r = radius_r(
        net.layers(),
        s0,
        net.activation().lipschitz_constant(),
        net.v_bound(),
        net.n(),
        net.k(),
    );
    let l_hat = smoothness_estimate(net, op, loss, r)?;
    if !(l_hat > 0.0 && l_hat.is_finite()) {
        return Err(Error::invalid(format!(
            "smoothness estimate {l_hat} is degenerate; use a fixed step"
        )));
    }
    Ok((safety / l_hat, l_hat))
}

/// Run gradient descent from `net` until the loss drops to the threshold or
/// `max_iters` steps have been taken.
///
/// The observation is `loss.target()`. A non-finite loss aborts with
/// [`Error::Divergence`] carrying the trace recorded so far.
pub fn train<F: ForwardOperator + ?Sized>(
    net: &TwoLayerNet,
    op: &F,
    loss: &KLLoss,
    cfg: &TrainConfig,
    truth: &GroundTruth,
) -> Result<TrainTrace> {
    cfg.validate()?;
    check_shapes(net, op, loss)?;
    if let Some(x) = &truth.signal {
        if x.len() != net.n() {
            return Err(Error::invalid("ground-truth signal has the wrong length"));
        }
    }
    if let Some(y) = &truth.clean_observation {
        if y.len() != op.output_dim() {
            return Err(Error::invalid("clean observation has the wrong length"));
        }
    }
    let (step, smoothness) = match cfg.step_mode {
        StepMode::Fixed { step } => (step, None),
        StepMode::AutoCertified { safety } => {
            let (g, l) = certified_step(net, op, loss, safety)?;
            (g, Some(l))
        }
    };

    let act = net.activation();
    let layers = net.layers();
    let (k, n) = (net.k(), net.n());
    let inv_sqrt_k = 1.0 / (k as f64).sqrt();
    let u = net.u().to_vec();
    let uu = dot(&u, &u);
    let h0 = net.hidden_preactivation();
    let v0 = net.v().clone();
    let mut v = v0.clone();
    let mut shift = vec![0.0; k];
    let mut h = h0.clone();
    let mut s = vec![0.0; k];
    let mut records = Vec::new();
    let mut converged = false;
    let mut milestone_iter = None;

    for it in 0..=cfg.max_iters {
        for i in 0..k {
            s[i] = act.value(h[i]);
        }
        let x: Vec<f64> = (0..n).map(|l| dot(v.row(l), &s) * inv_sqrt_k).collect();
        let y = op.apply(&x)?;
        let resid = sub_vec(&y, loss.target());
        let rnorm = norm(&resid);
        let loss_val = loss.value_from_residual_norm(rnorm);
        if milestone_iter.is_none() && cfg.milestone.is_some_and(|m| loss_val <= m) {
            milestone_iter = Some(it);
        }
        let done = loss_val <= cfg.loss_threshold || it == cfg.max_iters || !loss_val.is_finite();

        if it % cfg.trace_stride == 0 || done {
            let rec = TraceRecord {
                iter: it,
                loss: loss_val,
                sigma_min_j: if cfg.record.sigma_min_j && loss_val.is_finite() {
                    let g = jacobian_gram_from_hidden(&v, &h, uu, layers, act);
                    Some(smallest_singular_value_from_gram(&g)?)
                } else {
                    None
                },
                theta_drift: cfg.record.theta_drift.then(|| {
                    let dw = dot(&shift, &shift) * uu;
                    let dv = if layers.trains_v() {
                        v.sub(&v0).map(|m| m.frobenius_norm().powi(2)).unwrap_or(0.0)
                    } else {
                        0.0
                    };
                    (dw + dv).sqrt()
                }),
                signal_err: match (&truth.signal, cfg.record.signal_error) {
                    (Some(xb), true) => Some(norm(&sub_vec(&x, xb))),
                    _ => None,
                },
                obs_err: match (&truth.clean_observation, cfg.record.obs_error) {
                    (Some(yb), true) => Some(norm(&sub_vec(&y, yb))),
                    _ => None,
                },
            };
            records.push(rec);
        }
        if !loss_val.is_finite() {
            let mut trace = finish(net, &shift, &v, records, false, it, loss_val, x, step, smoothness);
            trace.milestone_iter = milestone_iter;
            return Err(Error::Divergence {
                iteration: it,
                trace: Box::new(trace),
            });
        }
        if loss_val <= cfg.loss_threshold {
            converged = true;
        }
        if done {
            let mut trace = finish(net, &shift, &v, records, converged, it, loss_val, x, step, smoothness);
            trace.milestone_iter = milestone_iter;
            return Ok(trace);
        }

        // Backward pass.
        let scale = loss.gradient_scale(rnorm);
        let gl: Vec<f64> = resid.iter().map(|r| r * scale).collect();
        let w = op.adjoint_apply(&x, &gl)?;
        let z = v.matvec_transpose(&w)?;
        if layers.trains_v() {
            for l in 0..n {
                let coef = -step * inv_sqrt_k * w[l];
                crate::linalg::axpy(coef, &s, v.row_mut(l));
            }
        }
        for i in 0..k {
            let c = act.derivative(h[i]) * z[i] * inv_sqrt_k;
            shift[i] -= step * c;
            h[i] = h0[i] + shift[i] * uu;
        }
    }
    unreachable!("the final iteration always returns")
}

#[allow(clippy::too_many_arguments)]
fn finish(
    net: &TwoLayerNet,
    shift: &[f64],
    v: &DenseMatrix,
    records: Vec<TraceRecord>,
    converged: bool,
    iterations: usize,
    final_loss: f64,
    final_signal: Vec<f64>,
    step: f64,
    smoothness: Option<f64>,
) -> TrainTrace {
    let u = net.u();
    let mut w = net.w().clone();
    for (i, &a) in shift.iter().enumerate() {
        crate::linalg::axpy(a, u, w.row_mut(i));
    }
    // After divergence the weights may be non-finite; fall back to the initial network.
    let final_network = TwoLayerNet::new(w, v.clone(), u.to_vec(), net.layers(), net.activation())
        .unwrap_or_else(|_| net.clone());
    TrainTrace {
        records,
        converged,
        iterations,
        final_loss,
        final_network,
        final_signal,
        step,
        smoothness,
        milestone_iter: None,
    }
}

/// First iteration after which `‖y(τ) − ȳ‖ ≤ 2‖ε‖` is guaranteed:
/// `⌈(2 ln‖ε‖ − ln L0) / ln(rate_base)⌉`, clamped at 0, with `L0 = ‖y(0) − y‖²`.
pub fn early_stop_iteration(rate_base: f64, eps_norm: f64, l0: f64) -> Result<usize> {
    if !(rate_base > 0.0 && rate_base < 1.0) {
        return Err(Error::GuaranteeUnavailable(format!(
            "rate base {rate_base} outside (0, 1)"
        )));
    }
    if !(eps_norm > 0.0) {
        return Err(Error::invalid(format!("‖ε‖ = {eps_norm} must be positive")));
    }
    if !(l0 > 0.0) || eps_norm * eps_norm >= l0 {
        return Ok(0);
    }
    let tau = (2.0 * eps_norm.ln() - l0.ln()) / rate_base.ln();
    Ok(tau.ceil().max(0.0) as usize)
}
