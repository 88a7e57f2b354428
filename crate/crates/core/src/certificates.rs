//! Closed-form convergence and recovery certificates.
//!
//! Everything here is a pure function of measured quantities (`σ₀`, `σ_F`,
//! the initial loss, operator norms) plus, for the overparametrization
//! thresholds, two unspecified absolute constants `C`, `C′` that default to 1.
//! Outputs involving `C` or `C′` are scaling estimates. The initialization gate
//! `σ₀ > 0 ∧ R′ < R` contains no unknown constants and is the only boolean
//! certificate.
//!
//! Loss conventions: discrete-time quantities (`R′`, the geometric rate, the
//! early-stopping iteration) are stated for the squared error `‖v − y‖²`. A
//! [`Certificate`] stores the initial residual norm so these can be evaluated
//! whatever weight the trained loss carries.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, sub_vec};
use crate::losses::{Desingularizer, KLLoss};
use crate::model::{Layers, TwoLayerNet};
use crate::operators::{mu_f_global, sigma_f, ForwardOperator, LinearOperator};
use crate::trainer::smoothness_estimate;

/// Continuous gradient flow or discrete gradient descent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Continuous,
    Discrete,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Continuous => "continuous",
            Variant::Discrete => "discrete",
        })
    }
}

/// `σ₀ = σ_min(J(θ₀))`.
pub fn sigma0(net: &TwoLayerNet) -> Result<f64> {
    net.jacobian_smallest_singular_value()
}

/// Lipschitz constant of `θ ↦ J(θ)`: `B D √(n/k)` with `V` fixed, otherwise
/// `B (1 + 2(D + ρ)) √(n/k)` on a ball of radius `ρ`.
pub fn lip_bound(layers: Layers, b: f64, d: f64, n: usize, k: usize, rho: f64) -> f64 {
    let s = (n as f64 / k as f64).sqrt();
    match layers {
        Layers::FixedV => b * d * s,
        Layers::Both => b * (1.0 + 2.0 * (d + rho)) * s,
    }
}

/// Radius `R` of the ball on which `σ_min(J) ≥ σ₀/2`.
///
/// With `V` fixed the Lipschitz constant is global and `R = σ₀ √k/(2 B D √n)`.
/// With both layers the constant depends on `R` itself and `R` is the positive
/// root of `4B√(n/k) R² + 2B(1+2D)√(n/k) R − σ₀ = 0`. Returns 0 when `σ₀ ≤ 0`.
pub fn radius_r(layers: Layers, sigma0: f64, b: f64, d: f64, n: usize, k: usize) -> f64 {
    if !(sigma0 > 0.0) {
        return 0.0;
    }
    let ratio = (k as f64 / n as f64).sqrt();
    match layers {
        Layers::FixedV => sigma0 * ratio / (2.0 * b * d),
        Layers::Both => {
            let a = 0.5 + d;
            let q = sigma0 * ratio / b;
            // (√(a² + q) − a)/2 without cancellation.
            q / (2.0 * ((a * a + q).sqrt() + a))
        }
    }
}

/// Trajectory radius `R′`: `2ψ(L0)/(σ_F σ₀)` for the flow, `4√L0/(σ_F σ₀)` for
/// gradient descent, where `L0` is the squared residual norm in the discrete case.
pub fn radius_r_prime(
    variant: Variant,
    desing: &Desingularizer,
    sigma_f: f64,
    sigma0: f64,
    l0: f64,
) -> Result<f64> {
    let denom = sigma_f * sigma0;
    if !(denom > 0.0) {
        return Err(Error::invalid(format!(
            "σ_F σ₀ = {denom} must be positive"
        )));
    }
    if !(l0 >= 0.0) {
        return Err(Error::invalid(format!("initial loss {l0} must be ≥ 0")));
    }
    Ok(match variant {
        Variant::Continuous => 2.0 * desing.psi(l0)? / denom,
        Variant::Discrete => 4.0 * l0.sqrt() / denom,
    })
}

/// High-probability floor on `σ₀`: `C_φ′/2` with `V` fixed, `√(C_φ² + C_φ′²)/2` otherwise.
pub fn sigma0_theory_floor(layers: Layers, c_phi: f64, c_phi_prime: f64) -> f64 {
    match layers {
        Layers::FixedV => c_phi_prime / 2.0,
        Layers::Both => (c_phi * c_phi + c_phi_prime * c_phi_prime).sqrt() / 2.0,
    }
}

/// Time parametrization of a loss decay curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateSchedule {
    /// `Ψ^{-1}((σ_F² σ₀²/4) t + Ψ(L0))`.
    Continuous(Desingularizer),
    /// `rate_base^τ L0`.
    Discrete { rate_base: f64 },
}

/// Upper bound on the loss at time `t` (or iteration `τ`).
pub fn loss_rate_curve(
    schedule: &RateSchedule,
    sigma_f: f64,
    sigma0: f64,
    l0: f64,
    t: f64,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain("loss rate curve", format!("time {t} must be ≥ 0")));
    }
    match schedule {
        RateSchedule::Discrete { rate_base } => Ok(rate_base.powf(t) * l0),
        RateSchedule::Continuous(d) => {
            if l0 == 0.0 {
                return Ok(0.0);
            }
            let gamma = (sigma_f * sigma_f * sigma0 * sigma0 / 4.0) * t + d.big_psi(l0)?;
            d.big_psi_inv(gamma)
        }
    }
}

/// Bound on the remaining parameter travel `‖θ(t) − θ_∞‖`.
///
/// Continuous: `2ψ(L)/(σ₀σ_F)`. Discrete: `4√L/(σ₀σ_F)` with `L` the squared
/// residual norm.
pub fn theta_rate_bound(
    variant: Variant,
    desing: &Desingularizer,
    sigma_f: f64,
    sigma0: f64,
    loss: f64,
) -> Result<f64> {
    radius_r_prime(variant, desing, sigma_f, sigma0, loss)
}

/// Time after which the flow keeps `‖y(t) − ȳ‖ ≤ 2‖ε‖`: the time at which the
/// continuous loss curve reaches `ψ^{-1}(‖ε‖)`,
/// `t = 4 (Ψ(ψ^{-1}(‖ε‖)) − Ψ(L0)) / (σ_F² σ₀²)`, clamped at 0.
pub fn early_stop_time_continuous(
    desing: &Desingularizer,
    sigma_f: f64,
    sigma0: f64,
    l0: f64,
    eps_norm: f64,
) -> Result<f64> {
    let (target, s2) = early_stop_inputs(desing, sigma_f, sigma0, l0, eps_norm)?;
    if target >= l0 {
        return Ok(0.0);
    }
    let t = 4.0 * (desing.big_psi(target)? - desing.big_psi(l0)?) / s2;
    Ok(t.max(0.0))
}

/// The same threshold written as `4Ψ(ψ^{-1}(‖ε‖))/(σ_F² σ₀²) − Ψ(L0)`.
///
/// This agrees with [`early_stop_time_continuous`] only when `σ_F σ₀ = 2`;
/// elsewhere it is not the crossing time of the loss curve. Kept for
/// comparison.
pub fn early_stop_time_continuous_unscaled(
    desing: &Desingularizer,
    sigma_f: f64,
    sigma0: f64,
    l0: f64,
    eps_norm: f64,
) -> Result<f64> {
    let (target, s2) = early_stop_inputs(desing, sigma_f, sigma0, l0, eps_norm)?;
    Ok(4.0 * desing.big_psi(target)? / s2 - desing.big_psi(l0)?)
}

fn early_stop_inputs(
    desing: &Desingularizer,
    sigma_f: f64,
    sigma0: f64,
    l0: f64,
    eps_norm: f64,
) -> Result<(f64, f64)> {
    if !(eps_norm > 0.0) {
        return Err(Error::invalid(format!("‖ε‖ = {eps_norm} must be positive")));
    }
    if !(l0 > 0.0) {
        return Err(Error::invalid(format!("initial loss {l0} must be positive")));
    }
    let s2 = (sigma_f * sigma0).powi(2);
    if !(s2 > 0.0) {
        return Err(Error::invalid("σ_F σ₀ must be positive"));
    }
    Ok((desing.psi_inv(eps_norm)?, s2))
}

/// Measured inputs to the signal-space recovery bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryBoundInputs {
    /// Distance from the true signal to the reachable set; 0 when the network spans `R^n`.
    pub dist_signal_manifold: f64,
    pub eps_norm: f64,
    /// Bound on `‖J_F‖`.
    pub l_f: f64,
    /// Lipschitz constant of `J_F` (0 for linear operators).
    pub l_jf: f64,
}

impl RecoveryBoundInputs {
    pub fn linear(op: &LinearOperator, eps_norm: f64) -> Self {
        Self {
            dist_signal_manifold: 0.0,
            eps_norm,
            l_f: op.norm(),
            l_jf: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let vals = [self.dist_signal_manifold, self.eps_norm, self.l_f, self.l_jf];
        if vals.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("recovery inputs must be finite and non-negative"))
        }
    }
}

/// All certificate quantities for one initialized instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub variant: Variant,
    pub layers: Layers,
    pub n: usize,
    pub k: usize,
    /// Activation Lipschitz constant `B`.
    pub b: f64,
    /// Bound `D` on the entries of `V(0)`.
    pub d_bound: f64,
    pub sigma0: f64,
    /// Jacobian Lipschitz bound evaluated on `Ball(θ₀, R)`.
    pub lip_j_bound: f64,
    pub r: f64,
    pub r_prime: f64,
    pub gate: bool,
    pub sigma_f: f64,
    pub mu_f: Option<f64>,
    pub op_norm: f64,
    /// Loss exponent and weight of the trained loss.
    pub p: f64,
    pub loss_weight: f64,
    pub alpha: f64,
    pub c: f64,
    /// Initial value of the trained loss.
    pub l0: f64,
    /// `‖y(0) − y‖`.
    pub residual0: f64,
    /// Smoothness bound for the trained loss.
    pub l_hat: f64,
    pub step_safety: f64,
    pub step: f64,
    /// `γL̂ − γ²L̂²/2`.
    pub eta: f64,
    /// Per-iteration contraction of the squared residual.
    pub rate_base: f64,
}

impl Certificate {
    pub fn desingularizer(&self) -> Desingularizer {
        Desingularizer {
            alpha: self.alpha,
            c: self.c,
        }
    }

    /// `‖y(0) − y‖²`.
    pub fn l0_squared_error(&self) -> f64 {
        self.residual0 * self.residual0
    }

    /// Key-value report, one quantity per line.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "unavailable".to_string(), |x| format!("{x:e}"));
        let _ = writeln!(s, "variant: {}", self.variant);
        let _ = writeln!(s, "layers: {}", self.layers);
        let _ = writeln!(s, "n: {}", self.n);
        let _ = writeln!(s, "k: {}", self.k);
        let _ = writeln!(s, "activation_lipschitz_b: {:e}", self.b);
        let _ = writeln!(s, "output_weight_bound_d: {:e}", self.d_bound);
        let _ = writeln!(s, "sigma0: {:e}", self.sigma0);
        let _ = writeln!(s, "lip_j_bound: {:e}", self.lip_j_bound);
        let _ = writeln!(s, "r: {:e}", self.r);
        let _ = writeln!(s, "r_prime: {:e}", self.r_prime);
        let _ = writeln!(s, "gate: {}", self.gate);
        let _ = writeln!(s, "sigma_f: {:e}", self.sigma_f);
        let _ = writeln!(s, "mu_f: {}", opt(self.mu_f));
        let _ = writeln!(s, "operator_norm: {:e}", self.op_norm);
        let _ = writeln!(s, "loss_p: {}", self.p);
        let _ = writeln!(s, "loss_weight: {}", self.loss_weight);
        let _ = writeln!(s, "psi_alpha: {:e}", self.alpha);
        let _ = writeln!(s, "psi_c: {:e}", self.c);
        let _ = writeln!(s, "l0: {:e}", self.l0);
        let _ = writeln!(s, "residual0: {:e}", self.residual0);
        let _ = writeln!(s, "l_hat: {:e}", self.l_hat);
        let _ = writeln!(s, "step_safety: {}", self.step_safety);
        let _ = writeln!(s, "step: {:e}", self.step);
        let _ = writeln!(s, "eta: {:e}", self.eta);
        let _ = writeln!(s, "rate_base: {:.17e}", self.rate_base);
        s
    }
}

/// `σ₀ > 0 ∧ R′ < R`.
pub fn initialization_gate(cert: &Certificate) -> bool {
    cert.sigma0 > 0.0 && cert.r_prime < cert.r
}

/// Evaluate every certificate quantity for `net` trained on `loss ∘ A` with
/// step `safety / L̂`.
pub fn certify(
    net: &TwoLayerNet,
    op: &LinearOperator,
    loss: &KLLoss,
    variant: Variant,
    safety: f64,
) -> Result<Certificate> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::invalid(format!("step safety {safety} outside (0, 1]")));
    }
    let layers = net.layers();
    let (n, k) = (net.n(), net.k());
    let b = net.activation().lipschitz_constant();
    let d_bound = net.v_bound();
    let s0 = sigma0(net)?;
    let sf = sigma_f(op)?;
    let mu_f = mu_f_global(op).ok();
    let r = radius_r(layers, s0, b, d_bound, n, k);
    let lip_j_bound = lip_bound(layers, b, d_bound, n, k, r);

    let y0 = op.apply(&net.forward())?;
    let residual0 = norm(&sub_vec(&y0, loss.target()));
    let l0 = loss.value(&y0)?;
    let desing = loss.desingularizer();
    let r_prime = if s0 > 0.0 {
        match variant {
            Variant::Continuous => radius_r_prime(variant, &desing, sf, s0, l0)?,
            Variant::Discrete => radius_r_prime(variant, &desing, sf, s0, residual0 * residual0)?,
        }
    } else {
        f64::INFINITY
    };

    let l_hat = smoothness_estimate(net, op, loss, r)?;
    let step = if l_hat > 0.0 { safety / l_hat } else { f64::INFINITY };
    let eta = safety - safety * safety / 2.0;
    let w = loss.weight();
    let rate_base = if l_hat > 0.0 {
        1.0 - eta * s0 * s0 * sf * sf * w / (2.0 * l_hat)
    } else {
        f64::NAN
    };

    let mut cert = Certificate {
        variant,
        layers,
        n,
        k,
        b,
        d_bound,
        sigma0: s0,
        lip_j_bound,
        r,
        r_prime,
        gate: false,
        sigma_f: sf,
        mu_f,
        op_norm: op.norm(),
        p: loss.p(),
        loss_weight: w,
        alpha: desing.alpha,
        c: desing.c,
        l0,
        residual0,
        l_hat,
        step_safety: safety,
        step,
        eta,
        rate_base,
    };
    cert.gate = initialization_gate(&cert);
    Ok(cert)
}

fn require_mu(cert: &Certificate, mu_override: Option<f64>) -> Result<f64> {
    match mu_override.or(cert.mu_f) {
        Some(mu) if mu > 0.0 => Ok(mu),
        Some(mu) => Err(Error::invalid(format!("μ_F = {mu} must be positive"))),
        None => Err(Error::InjectivityUnavailable(
            "no injectivity constant for this operator".into(),
        )),
    }
}

/// Parameter-space optimization term `δ(t) = 2ψ(Ψ^{-1}(γ(t)))/(σ₀σ_F)` (flow)
/// or `rate_base^{τ/2} √L0` scaled the same way (descent), before division by `μ`.
fn optimization_term(cert: &Certificate, t: f64) -> Result<f64> {
    match cert.variant {
        Variant::Continuous => {
            let d = cert.desingularizer();
            let lt = loss_rate_curve(
                &RateSchedule::Continuous(d),
                cert.sigma_f,
                cert.sigma0,
                cert.l0,
                t,
            )?;
            Ok(2.0 * d.psi(lt)? / (cert.sigma0 * cert.sigma_f))
        }
        Variant::Discrete => {
            if !(cert.rate_base > 0.0 && cert.rate_base < 1.0) {
                return Err(Error::GuaranteeUnavailable(format!(
                    "rate base {} outside (0, 1)",
                    cert.rate_base
                )));
            }
            Ok(cert.rate_base.powf(t / 2.0) * cert.residual0)
        }
    }
}

/// Signal-space error bound at time `t` (flow) or iteration `τ` (descent).
///
/// Flow: `2ψ(Ψ^{-1}(γ(t)))/(μσ₀σ_F) + (1 + L_F/μ) dist + ‖ε‖/μ`.
/// Descent: `μ^{-1} rate_base^{τ/2} √L0 + (1 + L_F/μ) dist + ‖ε‖/μ`.
///
/// `mu_override` replaces the certificate's `μ_F` (e.g. a sampled estimate).
pub fn recovery_bound(
    cert: &Certificate,
    inputs: &RecoveryBoundInputs,
    t: f64,
    mu_override: Option<f64>,
) -> Result<f64> {
    inputs.validate()?;
    let mu = require_mu(cert, mu_override)?;
    let opt = optimization_term(cert, t)?;
    Ok(opt / mu
        + (1.0 + inputs.l_f / mu) * inputs.dist_signal_manifold
        + inputs.eps_norm / mu)
}

/// Recovery bound for nonlinear operators with a Lipschitz Jacobian:
/// `2 Q`, `Q = μ^{-1}(δ(t) + ‖ε‖) + (L_JF/μ) dist² + (1 + L_F/μ) dist`, valid
/// when `1 − 4 (L_JF/μ) Q ≥ 0`.
pub fn alt_recovery_bound(
    cert: &Certificate,
    inputs: &RecoveryBoundInputs,
    t: f64,
    mu_override: Option<f64>,
) -> Result<f64> {
    inputs.validate()?;
    let mu = require_mu(cert, mu_override)?;
    let delta = optimization_term(cert, t)?;
    let dist = inputs.dist_signal_manifold;
    let q = (delta + inputs.eps_norm) / mu
        + inputs.l_jf / mu * dist * dist
        + (1.0 + inputs.l_f / mu) * dist;
    let disc = alt_recovery_discriminant(inputs.l_jf, mu, q);
    if disc < 0.0 {
        return Err(Error::Regime(format!(
            "discriminant {disc:e} < 0: noise or modelling error too large for the quadratic bound"
        )));
    }
    Ok(2.0 * q)
}

/// `1 − 4 (L_JF/μ) Q`.
pub fn alt_recovery_discriminant(l_jf: f64, mu: f64, q: f64) -> f64 {
    1.0 - 4.0 * (l_jf / mu) * q
}

/// Inputs of the width threshold beyond which the gate holds with high probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverparamInputs {
    pub layers: Layers,
    pub desing: Desingularizer,
    pub sigma_f: f64,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Bound on `‖J_F‖` near the initialization.
    pub l_f0: f64,
    /// Lipschitz constant of `∇L` near the initial output.
    pub l_l0: f64,
    /// `‖F(x̄)‖_∞`.
    pub sup_fx: f64,
    /// `‖ε‖_∞`.
    pub sup_eps: f64,
    pub c: f64,
    pub c_prime: f64,
}

/// Scaling estimate of the width needed for the gate:
/// both layers `C′ σ_F^{-4} n ψ(a)⁴`, fixed `V` `C′ σ_F^{-2} n ψ(a)²`, with
/// `a = (L_L0/2)(C L_F0 √(n ln d) + √m(‖F(x̄)‖_∞ + ‖ε‖_∞))²`.
pub fn overparam_requirement(inp: &OverparamInputs) -> Result<f64> {
    if !(inp.sigma_f > 0.0) {
        return Err(Error::invalid("σ_F must be positive"));
    }
    let e = init_error_bound(inp.c, inp.l_f0, inp.n, inp.d, inp.m, inp.sup_fx, inp.sup_eps);
    let arg = inp.l_l0 / 2.0 * e * e;
    let psi = inp.desing.psi(arg)?;
    let n = inp.n as f64;
    Ok(match inp.layers {
        Layers::Both => inp.c_prime * inp.sigma_f.powi(-4) * n * psi.powi(4),
        Layers::FixedV => inp.c_prime * inp.sigma_f.powi(-2) * n * psi.powi(2),
    })
}

/// Initial-error scale `C L_F0 √(n ln d) + √m (‖F(x̄)‖_∞ + ‖ε‖_∞)`.
pub fn init_error_bound(
    c: f64,
    l_f0: f64,
    n: usize,
    d: usize,
    m: usize,
    sup_fx: f64,
    sup_eps: f64,
) -> f64 {
    let log_d = (d as f64).ln().max(0.0);
    c * l_f0 * (n as f64 * log_d).sqrt() + (m as f64).sqrt() * (sup_fx + sup_eps)
}
