//! Construction of single training problems: operator, ground truth, noise,
//! network and loss, optionally pulled towards the initial network output
//! until the initialization gate holds.

use crate::certificates::{certify, Certificate, Variant};
use crate::error::{Error, Result};
use crate::linalg::{label, SeededRng};
use crate::losses::KLLoss;
use crate::model::{ActivationKind, Layers, TwoLayerNet};
use crate::operators::{
    gaussian_operator, make_noise, prescribed_spectrum_operator, ForwardOperator, LinearOperator,
    NoiseSpec,
};
use crate::trainer::{train, GroundTruth, TrainConfig, TrainTrace};

/// Labels of the independent random components of an instance.
pub(crate) mod stream {
    pub const OPERATOR: u64 = 1;
    pub const SIGNAL: u64 = 2;
    pub const NETWORK: u64 = 3;
    pub const NOISE: u64 = 4;
}

/// One fully specified problem `y = A x̄ + ε` with a network to fit it.
#[derive(Clone, Debug)]
pub struct Instance {
    pub net: TwoLayerNet,
    pub op: LinearOperator,
    /// `x̄`.
    pub signal: Vec<f64>,
    /// `ȳ = A x̄`.
    pub clean_observation: Vec<f64>,
    pub noise: Vec<f64>,
    /// Loss whose target is `y = ȳ + ε`.
    pub loss: KLLoss,
    /// Interpolation factor `s` of `x̄ = x₀ + s (x_drawn − x₀)`; 1 when unscaled.
    pub target_scale: f64,
}

impl Instance {
    /// Assemble an instance from its parts with loss `w ‖r‖^{2(p+1)} / (2(p+1))`.
    pub fn assemble(
        net: TwoLayerNet,
        op: LinearOperator,
        signal: Vec<f64>,
        noise: Vec<f64>,
        p: f64,
        loss_weight: f64,
    ) -> Result<Self> {
        if signal.len() != op.input_dim() || net.n() != op.input_dim() {
            return Err(Error::invalid("signal, network and operator sizes disagree"));
        }
        if noise.len() != op.output_dim() {
            return Err(Error::invalid("noise length differs from operator output length"));
        }
        let clean_observation = op.apply(&signal)?;
        let y: Vec<f64> = clean_observation.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let loss = KLLoss::new(p, y)?.with_weight(loss_weight)?;
        Ok(Self {
            net,
            op,
            signal,
            clean_observation,
            noise,
            loss,
            target_scale: 1.0,
        })
    }

    pub fn observation(&self) -> &[f64] {
        self.loss.target()
    }

    pub fn noise_norm(&self) -> f64 {
        crate::linalg::norm(&self.noise)
    }

    pub fn truth(&self) -> GroundTruth {
        GroundTruth {
            signal: Some(self.signal.clone()),
            clean_observation: Some(self.clean_observation.clone()),
        }
    }

    pub fn certify(&self, variant: Variant, safety: f64) -> Result<Certificate> {
        certify(&self.net, &self.op, &self.loss, variant, safety)
    }

    pub fn train(&self, cfg: &TrainConfig) -> Result<TrainTrace> {
        train(&self.net, &self.op, &self.loss, cfg, &self.truth())
    }

    /// Replace the ground truth by `x₀ + s (x̄ − x₀)`, `x₀ = g(u, θ₀)`, halving
    /// `s` from 1 until the certificate's gate holds.
    ///
    /// Fails with [`Error::Regime`] if the gate still fails after
    /// `max_halvings` halvings, which happens when the noise alone exceeds
    /// the admissible initial residual.
    pub fn scaled_to_gate(
        &self,
        variant: Variant,
        safety: f64,
        max_halvings: u32,
    ) -> Result<(Instance, Certificate)> {
        let x0 = self.net.forward();
        let mut s = 1.0;
        for _ in 0..=max_halvings {
            let signal: Vec<f64> = x0
                .iter()
                .zip(&self.signal)
                .map(|(a, b)| a + s * (b - a))
                .collect();
            let mut inst = Instance::assemble(
                self.net.clone(),
                self.op.clone(),
                signal,
                self.noise.clone(),
                self.loss.p(),
                self.loss.weight(),
            )?;
            inst.target_scale = s * self.target_scale;
            let cert = inst.certify(variant, safety)?;
            if cert.gate {
                return Ok((inst, cert));
            }
            s *= 0.5;
        }
        Err(Error::Regime(format!(
            "initialization gate fails after {max_halvings} halvings of the target"
        )))
    }
}

/// Which operator family to draw.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorSpec {
    /// i.i.d. `N(0, 1/n)` entries.
    Gaussian,
    /// Haar rotations around the given singular values (`m` = their count).
    Spectrum(Vec<f64>),
}

/// Seeded recipe for an [`Instance`].
///
/// Each component draws from its own stream derived from `(seed, stream)`,
/// so changing e.g. the width leaves operator, signal and noise unchanged.
/// Networks are drawn neuron by neuron, so the first `k` neurons of a wider
/// network coincide with the narrower one.
#[derive(Clone, Debug)]
pub struct InstanceBuilder {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub d: usize,
    pub layers: Layers,
    pub activation: ActivationKind,
    pub p: f64,
    pub loss_weight: f64,
    pub beta: f64,
    pub operator: OperatorSpec,
    pub seed: u64,
    pub stream: u64,
}

impl InstanceBuilder {
    /// Fixed-`V` sigmoid network, Gaussian operator, noise-free MSE `‖r‖²`.
    pub fn new(n: usize, m: usize, k: usize, d: usize) -> Self {
        Self {
            n,
            m,
            k,
            d,
            layers: Layers::FixedV,
            activation: ActivationKind::Sigmoid,
            p: 0.0,
            loss_weight: 2.0,
            beta: 0.0,
            operator: OperatorSpec::Gaussian,
            seed: 0,
            stream: 0,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn layers(mut self, layers: Layers) -> Self {
        self.layers = layers;
        self
    }

    pub fn activation(mut self, act: ActivationKind) -> Self {
        self.activation = act;
        self
    }

    /// Loss `w ‖r‖^{2(p+1)} / (2(p+1))`.
    pub fn loss(mut self, p: f64, weight: f64) -> Self {
        self.p = p;
        self.loss_weight = weight;
        self
    }

    pub fn noise(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn operator(mut self, op: OperatorSpec) -> Self {
        if let OperatorSpec::Spectrum(s) = &op {
            self.m = s.len();
        }
        self.operator = op;
        self
    }

    fn rng(&self, component: u64) -> SeededRng {
        SeededRng::new(self.seed, self.stream).derive(label(&[component]))
    }

    pub fn build(&self) -> Result<Instance> {
        let op = match &self.operator {
            OperatorSpec::Gaussian => gaussian_operator(self.m, self.n, &mut self.rng(stream::OPERATOR))?,
            OperatorSpec::Spectrum(s) => {
                prescribed_spectrum_operator(self.n, s, &mut self.rng(stream::OPERATOR))?
            }
        };
        let signal = self.rng(stream::SIGNAL).normal_vec(self.n);
        let net = TwoLayerNet::init(
            self.k,
            self.d,
            self.n,
            self.layers,
            self.activation,
            &mut self.rng(stream::NETWORK),
        )?;
        let noise = make_noise(
            NoiseSpec {
                beta: self.beta,
                m: op.output_dim(),
            },
            &mut self.rng(stream::NOISE),
        )?;
        Instance::assemble(net, op, signal, noise, self.p, self.loss_weight)
    }

    /// [`build`](Self::build) followed by [`Instance::scaled_to_gate`] with
    /// the discrete certificate.
    pub fn build_gated(&self, safety: f64) -> Result<(Instance, Certificate)> {
        self.build()?.scaled_to_gate(Variant::Discrete, safety, 60)
    }
}
