use serde::{Deserialize, Serialize};

use super::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::linalg::{
    axpy, dot, norm, smallest_singular_value_from_gram, DenseMatrix, SeededRng,
};

/// Tolerance on `‖u‖ = 1`.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Which parameter blocks are trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layers {
    /// Only the hidden weights `W`; the output layer `V` stays at its initial value.
    FixedV,
    /// Both `W` and `V`.
    Both,
}

impl Layers {
    pub fn trains_v(self) -> bool {
        matches!(self, Layers::Both)
    }

    pub fn from_train_v(train_v: bool) -> Self {
        if train_v {
            Layers::Both
        } else {
            Layers::FixedV
        }
    }
}

impl std::fmt::Display for Layers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Layers::FixedV => "fixed_v",
            Layers::Both => "both",
        })
    }
}

/// Flattening order of the trainable parameters.
///
/// `W` comes first in row-major order (neuron by neuron). When `V` is trained
/// its columns follow, one `n`-vector per neuron.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub layers: Layers,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.k * self.d + if self.layers.trains_v() { self.n * self.k } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn w_len(&self) -> usize {
        self.k * self.d
    }

    fn pack(&self, w: &DenseMatrix, v: &DenseMatrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(w.as_slice());
        if self.layers.trains_v() {
            for i in 0..self.k {
                out.extend((0..self.n).map(|l| v.get(l, i)));
            }
        }
        out
    }
}

/// Flat parameter vector `θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Two-layer generator `g(u, θ) = k^{-1/2} V φ(W u)` with a fixed input `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLayerNet {
    w: DenseMatrix,
    v: DenseMatrix,
    u: Vec<f64>,
    layers: Layers,
    activation: ActivationKind,
}

impl TwoLayerNet {
    /// Assemble a network from explicit weights. `w` is `k×d`, `v` is `n×k`.
    pub fn new(
        w: DenseMatrix,
        v: DenseMatrix,
        u: Vec<f64>,
        layers: Layers,
        activation: ActivationKind,
    ) -> Result<Self> {
        let (k, d) = w.shape();
        if k == 0 || d == 0 || v.rows() == 0 {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        if v.cols() != k {
            return Err(Error::invalid(format!(
                "V has {} columns but W has {k} rows",
                v.cols()
            )));
        }
        if u.len() != d {
            return Err(Error::invalid(format!(
                "input has length {}, expected {d}",
                u.len()
            )));
        }
        let un = norm(&u);
        if (un - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::invalid(format!("input norm {un} is not 1")));
        }
        if !w.is_finite() || !v.is_finite() || u.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite network weights"));
        }
        Ok(Self {
            w,
            v,
            u,
            layers,
            activation,
        })
    }

    /// Random initialization: `u` uniform on the sphere, `W` standard Gaussian,
    /// `V` Rademacher.
    ///
    /// Draws are made neuron by neuron (row `i` of `W`, then column `i` of `V`)
    /// so that with a fixed generator state the first `k'` neurons of a width-`k`
    /// network coincide with a width-`k'` network.
    pub fn init(
        k: usize,
        d: usize,
        n: usize,
        layers: Layers,
        activation: ActivationKind,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if k == 0 || d == 0 || n == 0 {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        let u = rng.unit_sphere(d);
        let mut w = DenseMatrix::zeros(k, d);
        let mut v = DenseMatrix::zeros(n, k);
        for i in 0..k {
            for j in 0..d {
                w.set(i, j, rng.standard_normal());
            }
            for l in 0..n {
                v.set(l, i, rng.rademacher());
            }
        }
        Self::new(w, v, u, layers, activation)
    }

    pub fn k(&self) -> usize {
        self.w.rows()
    }

    pub fn d(&self) -> usize {
        self.w.cols()
    }

    pub fn n(&self) -> usize {
        self.v.rows()
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn layers(&self) -> Layers {
        self.layers
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            k: self.k(),
            d: self.d(),
            n: self.n(),
            layers: self.layers,
        }
    }

    /// Largest absolute entry of `V`.
    pub fn v_bound(&self) -> f64 {
        self.v.max_abs()
    }

    /// `h = W u`.
    pub fn hidden_preactivation(&self) -> Vec<f64> {
        (0..self.k()).map(|i| dot(self.w.row(i), &self.u)).collect()
    }

    /// `g(u, θ)`.
    pub fn forward(&self) -> Vec<f64> {
        let h = self.hidden_preactivation();
        output_from_hidden(&self.v, &h, self.activation)
    }

    /// Explicit `n×p` Jacobian in the order given by [`ParamLayout`].
    pub fn jacobian(&self) -> DenseMatrix {
        let (k, d, n) = (self.k(), self.d(), self.n());
        let layout = self.layout();
        let p = layout.len();
        let inv_sqrt_k = 1.0 / (k as f64).sqrt();
        let h = self.hidden_preactivation();
        let mut j = DenseMatrix::zeros(n, p);
        for (i, &hi) in h.iter().enumerate() {
            let dphi = self.activation.derivative(hi) * inv_sqrt_k;
            for l in 0..n {
                let vli = self.v.get(l, i) * dphi;
                for (jj, &uj) in self.u.iter().enumerate() {
                    j.set(l, i * d + jj, vli * uj);
                }
            }
            if layout.layers.trains_v() {
                let phi = self.activation.value(hi) * inv_sqrt_k;
                for l in 0..n {
                    j.set(l, k * d + i * n + l, phi);
                }
            }
        }
        j
    }

    /// `J Jᵀ` in closed form, without materializing `J`.
    pub fn jacobian_gram(&self) -> DenseMatrix {
        let h = self.hidden_preactivation();
        jacobian_gram_from_hidden(&self.v, &h, dot(&self.u, &self.u), self.layers, self.activation)
    }

    /// `σ_min(J)`; for `n ≤ p` this is `√λ_min(J Jᵀ)`.
    pub fn jacobian_smallest_singular_value(&self) -> Result<f64> {
        smallest_singular_value_from_gram(&self.jacobian_gram())
    }

    pub fn params(&self) -> ParamVector {
        ParamVector(self.layout().pack(&self.w, &self.v))
    }

    /// Replace the trainable parameters.
    pub fn set_params(&mut self, theta: &ParamVector) -> Result<()> {
        let layout = self.layout();
        if theta.0.len() != layout.len() {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, expected {}",
                theta.0.len(),
                layout.len()
            )));
        }
        let wl = layout.w_len();
        self.w.as_mut_slice().copy_from_slice(&theta.0[..wl]);
        if layout.layers.trains_v() {
            for i in 0..layout.k {
                for l in 0..layout.n {
                    self.v.set(l, i, theta.0[wl + i * layout.n + l]);
                }
            }
        }
        Ok(())
    }

    pub fn with_params(&self, theta: &ParamVector) -> Result<Self> {
        let mut out = self.clone();
        out.set_params(theta)?;
        Ok(out)
    }

    /// `Jᵀ w` without materializing `J`.
    pub fn vjp(&self, w: &[f64]) -> Result<ParamVector> {
        let n = self.n();
        if w.len() != n {
            return Err(Error::invalid("vjp: cotangent length differs from n"));
        }
        let h = self.hidden_preactivation();
        let layout = self.layout();
        let inv_sqrt_k = 1.0 / (self.k() as f64).sqrt();
        let z = self.v.matvec_transpose(w)?;
        let mut out = vec![0.0; layout.len()];
        let d = self.d();
        for (i, (&hi, &zi)) in h.iter().zip(&z).enumerate() {
            let c = self.activation.derivative(hi) * zi * inv_sqrt_k;
            axpy(c, &self.u, &mut out[i * d..(i + 1) * d]);
        }
        if layout.layers.trains_v() {
            let base = layout.w_len();
            for (i, &hi) in h.iter().enumerate() {
                let phi = self.activation.value(hi) * inv_sqrt_k;
                axpy(phi, w, &mut out[base + i * n..base + (i + 1) * n]);
            }
        }
        Ok(ParamVector(out))
    }
}

/// `k^{-1/2} V φ(h)`.
pub(crate) fn output_from_hidden(v: &DenseMatrix, h: &[f64], act: ActivationKind) -> Vec<f64> {
    let s: Vec<f64> = h.iter().map(|&x| act.value(x)).collect();
    let inv_sqrt_k = 1.0 / (h.len() as f64).sqrt();
    (0..v.rows())
        .map(|l| dot(v.row(l), &s) * inv_sqrt_k)
        .collect()
}

/// `J Jᵀ = k^{-1} ‖u‖² Σᵢ φ'(hᵢ)² Vᵢ Vᵢᵀ (+ k^{-1} Σᵢ φ(hᵢ)² I when V is trained)`.
pub(crate) fn jacobian_gram_from_hidden(
    v: &DenseMatrix,
    h: &[f64],
    u_norm_sq: f64,
    layers: Layers,
    act: ActivationKind,
) -> DenseMatrix {
    let n = v.rows();
    let k = h.len() as f64;
    let weights: Vec<f64> = h
        .iter()
        .map(|&x| act.derivative(x).powi(2) * u_norm_sq / k)
        .collect();
    let scaled: Vec<Vec<f64>> = (0..n)
        .map(|l| v.row(l).iter().zip(&weights).map(|(a, b)| a * b).collect())
        .collect();
    let mut g = DenseMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let val = dot(&scaled[a], v.row(b));
            g.set(a, b, val);
            g.set(b, a, val);
        }
    }
    if layers.trains_v() {
        let diag: f64 = h.iter().map(|&x| act.value(x).powi(2)).sum::<f64>() / k;
        for l in 0..n {
            g.set(l, l, g.get(l, l) + diag);
        }
    }
    g
}
