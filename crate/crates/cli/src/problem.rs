use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use dipcert::experiments::{Instance, InstanceBuilder, OperatorSpec};
use dipcert::{ActivationKind, Layers};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayersArg {
    FixedV,
    Both,
}

impl From<LayersArg> for Layers {
    fn from(l: LayersArg) -> Self {
        match l {
            LayersArg::FixedV => Layers::FixedV,
            LayersArg::Both => Layers::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationArg {
    Sigmoid,
    Tanh,
    Softplus,
}

impl From<ActivationArg> for ActivationKind {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Sigmoid => ActivationKind::Sigmoid,
            ActivationArg::Tanh => ActivationKind::Tanh,
            ActivationArg::Softplus => ActivationKind::Softplus,
        }
    }
}

/// A single problem instance as read from a TOML file. Every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemFile {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub d: Option<usize>,
    pub p: Option<f64>,
    pub loss_weight: Option<f64>,
    pub beta: Option<f64>,
    pub layers: Option<LayersArg>,
    pub activation: Option<ActivationArg>,
    pub spectrum: Option<Vec<f64>>,
    pub gate: Option<bool>,
    pub safety: Option<f64>,
    pub step: Option<f64>,
    pub max_iters: Option<usize>,
    pub threshold: Option<f64>,
    pub trace_stride: Option<usize>,
    pub seed: Option<u64>,
}

/// Flags describing one instance; each overrides the config file.
#[derive(Args, Debug, Default)]
pub struct ProblemArgs {
    /// Signal dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Observation dimension.
    #[arg(long)]
    pub m: Option<usize>,
    /// Hidden width.
    #[arg(long)]
    pub k: Option<usize>,
    /// Input dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Loss exponent.
    #[arg(long)]
    pub p: Option<f64>,
    /// Loss weight `w` in `w‖r‖^{2(p+1)}/(2(p+1))`.
    #[arg(long)]
    pub loss_weight: Option<f64>,
    /// Uniform noise level.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum)]
    pub layers: Option<LayersArg>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    /// Comma-separated singular values of the operator instead of a Gaussian one.
    #[arg(long, value_delimiter = ',')]
    pub spectrum: Option<Vec<f64>>,
    /// Pull the target towards the initial output until the initialization gate holds.
    #[arg(long)]
    pub gate: bool,
    /// Step safety factor in `(0, 1]`.
    #[arg(long)]
    pub safety: Option<f64>,
}

/// Resolved instance description.
#[derive(Clone, Debug)]
pub struct Problem {
    pub builder: InstanceBuilder,
    pub gate: bool,
    pub safety: f64,
    pub step: Option<f64>,
    pub max_iters: usize,
    pub threshold: f64,
    pub trace_stride: usize,
}

impl Problem {
    pub fn resolve(
        args: &ProblemArgs,
        config: Option<&Path>,
        seed: Option<u64>,
        step: Option<f64>,
        max_iters: Option<usize>,
        threshold: Option<f64>,
        trace_stride: Option<usize>,
    ) -> Result<Self> {
        let file = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str::<ProblemFile>(&text)
                    .with_context(|| format!("parsing {}", path.display()))?
            }
            None => ProblemFile::default(),
        };
        let n = args.n.or(file.n).unwrap_or(4);
        let m = args.m.or(file.m).unwrap_or(n);
        let k = args.k.or(file.k).unwrap_or(2000);
        let d = args.d.or(file.d).unwrap_or(20);
        let p = args.p.or(file.p).unwrap_or(0.0);
        let mut builder = InstanceBuilder::new(n, m, k, d)
            .seed(seed.or(file.seed).unwrap_or(0))
            .layers(args.layers.or(file.layers).unwrap_or(LayersArg::FixedV).into())
            .activation(args.activation.or(file.activation).unwrap_or(ActivationArg::Sigmoid).into())
            .loss(p, args.loss_weight.or(file.loss_weight).unwrap_or(2.0))
            .noise(args.beta.or(file.beta).unwrap_or(0.0));
        if let Some(s) = args.spectrum.clone().or(file.spectrum) {
            builder = builder.operator(OperatorSpec::Spectrum(s));
        }
        let safety = args.safety.or(file.safety).unwrap_or(0.9);
        if !(safety > 0.0 && safety <= 1.0) {
            bail!("safety {safety} outside (0, 1]");
        }
        Ok(Self {
            builder,
            gate: args.gate || file.gate.unwrap_or(false),
            safety,
            step: step.or(file.step),
            max_iters: max_iters.or(file.max_iters).unwrap_or(25_000),
            threshold: threshold.or(file.threshold).unwrap_or(1e-7),
            trace_stride: trace_stride.or(file.trace_stride).unwrap_or(100),
        })
    }

    pub fn build(&self) -> Result<Instance> {
        if self.gate {
            Ok(self.builder.build_gated(self.safety)?.0)
        } else {
            Ok(self.builder.build()?)
        }
    }
}
