use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ActivationKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Convergence frequency over a `(k, n)` grid with `m` fixed.
    PhaseKn,
    /// Convergence frequency over a `(k, m)` grid with `n` fixed.
    PhaseKm,
    /// Signal error under increasing noise with a fixed ill-conditioned square operator.
    NoiseSweep,
    /// Final loss against width for several noise levels.
    NoiseVsK,
    /// Loss trajectories for several loss exponents `p`.
    PSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::PhaseKn,
        ExperimentKind::PhaseKm,
        ExperimentKind::NoiseSweep,
        ExperimentKind::NoiseVsK,
        ExperimentKind::PSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::PhaseKn => "phase_kn",
            ExperimentKind::PhaseKm => "phase_km",
            ExperimentKind::NoiseSweep => "noise_sweep",
            ExperimentKind::NoiseVsK => "noise_vs_k",
            ExperimentKind::PSweep => "p_sweep",
        }
    }

    pub fn is_phase(self) -> bool {
        matches!(self, ExperimentKind::PhaseKn | ExperimentKind::PhaseKm)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Grid sizes, trial counts and iteration budgets of the published study.
    Paper,
    /// Desk-scale version that runs in minutes.
    Reduced,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "reduced" => Ok(Preset::Reduced),
            _ => Err(Error::Config(format!("unknown preset `{s}`"))),
        }
    }
}

/// Full description of one experiment run.
///
/// Grid fields are lists; experiments that hold a dimension fixed use the
/// single entry of the corresponding list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub k: Vec<usize>,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub d: Vec<usize>,
    /// Loss exponents.
    pub p: Vec<f64>,
    /// Noise levels; noise entries are `U(−β, β)`.
    pub beta: Vec<f64>,
    pub trials: usize,
    pub max_iters: usize,
    /// Training stops once the loss is at or below this value.
    pub threshold: f64,
    /// Loss level whose first hitting iteration is reported (p-sweep).
    pub milestone: f64,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub activation: ActivationKind,
    /// Step is `step_safety / L̂`.
    pub step_safety: f64,
    /// Spacing of recorded trajectory points.
    pub trace_stride: usize,
    /// Singular values of the noise-sweep operator; empty selects `1/(z²+1)`, `z = 0..m`.
    pub spectrum: Vec<f64>,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind, preset: Preset) -> Self {
        let paper = preset == Preset::Paper;
        let base = ExperimentConfig {
            experiment: kind,
            k: vec![],
            n: vec![],
            m: vec![],
            d: vec![],
            p: vec![0.0],
            beta: vec![0.0],
            trials: if paper { 50 } else { 10 },
            max_iters: 25_000,
            threshold: 1e-7,
            milestone: 1e-7,
            base_seed: 0,
            output_dir: PathBuf::from("results").join(kind.as_str()),
            activation: ActivationKind::Sigmoid,
            step_safety: 0.9,
            trace_stride: 100,
            spectrum: vec![],
            threads: 0,
        };
        match (kind, paper) {
            (ExperimentKind::PhaseKn, true) => ExperimentConfig {
                k: vec![20, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000],
                n: vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
                m: vec![10],
                d: vec![500],
                ..base
            },
            (ExperimentKind::PhaseKn, false) => ExperimentConfig {
                k: vec![20, 50, 100, 200, 400],
                n: vec![5, 10, 20, 40],
                m: vec![10],
                d: vec![100],
                ..base
            },
            (ExperimentKind::PhaseKm, true) => ExperimentConfig {
                k: vec![20, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000],
                n: vec![60],
                m: vec![2, 4, 6, 8, 10, 15, 20, 25, 30],
                d: vec![500],
                ..base
            },
            (ExperimentKind::PhaseKm, false) => ExperimentConfig {
                k: vec![20, 50, 100, 200, 400],
                n: vec![20],
                m: vec![2, 4, 6, 8],
                d: vec![100],
                ..base
            },
            (ExperimentKind::NoiseSweep, paper) => ExperimentConfig {
                k: vec![1000],
                n: vec![10],
                m: vec![10],
                d: vec![10],
                p: vec![0.2],
                beta: if paper {
                    vec![0.0, 0.01, 0.025, 0.05, 0.075, 0.1]
                } else {
                    vec![0.0, 0.05, 0.1]
                },
                max_iters: if paper { 200_000 } else { 50_000 },
                threshold: 0.0,
                trace_stride: if paper { 1000 } else { 250 },
                ..base
            },
            (ExperimentKind::NoiseVsK, paper) => ExperimentConfig {
                k: if paper {
                    vec![50, 100, 200, 400, 800, 1600]
                } else {
                    vec![50, 100, 200, 400, 800]
                },
                n: vec![if paper { 1000 } else { 100 }],
                m: vec![10],
                d: vec![10],
                p: vec![0.1],
                beta: vec![0.0, 0.05, 0.1],
                max_iters: 10_000,
                threshold: 0.0,
                trace_stride: 1000,
                ..base
            },
            (ExperimentKind::PSweep, paper) => ExperimentConfig {
                k: vec![800],
                n: vec![if paper { 1000 } else { 100 }],
                m: vec![10],
                d: vec![10],
                p: if paper {
                    vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
                } else {
                    vec![0.0, 0.3, 0.6, 1.0]
                },
                max_iters: if paper { 1_000_000 } else { 200_000 },
                threshold: if paper { 1e-14 } else { 1e-7 },
                trace_stride: if paper { 1000 } else { 200 },
                ..base
            },
        }
    }

    /// Parse a TOML document. Keys absent from the document take the values
    /// of the preset named by the optional `preset` key (default `reduced`)
    /// for the given `experiment`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let kind: ExperimentKind = match table.get("experiment") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::Config("`experiment` must be a string".into())),
            None => return Err(Error::Config("missing `experiment` key".into())),
        };
        let preset = match table.remove("preset") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::Config("`preset` must be a string".into())),
            None => Preset::Reduced,
        };
        let base = Self::preset(kind, preset);
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in table {
            if !merged.contains_key(&key) {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
            merged.insert(key, value);
        }
        let cfg: ExperimentConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, len) in [
            ("k", self.k.len()),
            ("n", self.n.len()),
            ("m", self.m.len()),
            ("d", self.d.len()),
            ("p", self.p.len()),
            ("beta", self.beta.len()),
        ] {
            if len == 0 {
                return bad(format!("`{name}` must not be empty"));
            }
        }
        if [&self.k, &self.n, &self.m, &self.d]
            .iter()
            .any(|v| v.contains(&0))
        {
            return bad("dimensions must be positive".into());
        }
        if self.p.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return bad("loss exponents must be finite and ≥ 0".into());
        }
        if self.beta.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
            return bad("noise levels must be finite and ≥ 0".into());
        }
        if self.trials == 0 {
            return bad("`trials` must be ≥ 1".into());
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return bad(format!("`step_safety` = {} outside (0, 1]", self.step_safety));
        }
        if self.trace_stride == 0 {
            return bad("`trace_stride` must be ≥ 1".into());
        }
        if !(self.threshold >= 0.0) || !(self.milestone >= 0.0) {
            return bad("`threshold` and `milestone` must be ≥ 0".into());
        }
        let single = |name: &str, len: usize| {
            if len == 1 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{} uses a single `{name}` value, got {len}",
                    self.experiment
                )))
            }
        };
        match self.experiment {
            ExperimentKind::PhaseKn => {
                single("m", self.m.len())?;
                single("d", self.d.len())?;
            }
            ExperimentKind::PhaseKm => {
                single("n", self.n.len())?;
                single("d", self.d.len())?;
                if self.m.iter().any(|&m| m > self.n[0]) {
                    return bad("phase_km needs m ≤ n".into());
                }
            }
            ExperimentKind::NoiseSweep => {
                for (name, len) in [
                    ("k", self.k.len()),
                    ("n", self.n.len()),
                    ("m", self.m.len()),
                    ("d", self.d.len()),
                    ("p", self.p.len()),
                ] {
                    single(name, len)?;
                }
                if self.n[0] != self.m[0] {
                    return bad("noise_sweep needs a square operator (n = m)".into());
                }
                if !self.spectrum.is_empty() && self.spectrum.len() != self.m[0] {
                    return bad("`spectrum` must have m entries".into());
                }
            }
            ExperimentKind::NoiseVsK => {
                for (name, len) in [
                    ("n", self.n.len()),
                    ("m", self.m.len()),
                    ("d", self.d.len()),
                    ("p", self.p.len()),
                ] {
                    single(name, len)?;
                }
            }
            ExperimentKind::PSweep => {
                for (name, len) in [
                    ("k", self.k.len()),
                    ("n", self.n.len()),
                    ("m", self.m.len()),
                    ("d", self.d.len()),
                ] {
                    single(name, len)?;
                }
            }
        }
        Ok(())
    }

    /// `1/(z²+1)` for `z = 0..m` unless an explicit spectrum is configured.
    pub fn noise_spectrum(&self) -> Vec<f64> {
        if self.spectrum.is_empty() {
            (0..self.m[0]).map(|z| 1.0 / ((z * z) as f64 + 1.0)).collect()
        } else {
            self.spectrum.clone()
        }
    }
}
