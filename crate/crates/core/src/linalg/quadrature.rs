//! Gauss–Hermite quadrature for expectations under a standard normal.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Orders below this are rejected; the activation constants need more nodes.
pub const MIN_ORDER: usize = 16;
pub const DEFAULT_ORDER: usize = 64;

/// Nodes and weights for `∫ f(x) e^{-x²} dx ≈ Σ wᵢ f(xᵢ)`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots of the physicists' Hermite polynomial of degree `order`, refined by Newton
    /// iteration on the orthonormal recurrence.
    pub fn new(order: usize) -> Result<Self> {
        if order < MIN_ORDER {
            return Err(Error::invalid(format!(
                "quadrature order {order} is below the minimum {MIN_ORDER}"
            )));
        }
        let n = order;
        let nf = n as f64;
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let half = n.div_ceil(2);
        let mut z = 0.0_f64;
        for i in 0..half {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            for _ in 0..100 {
                let (p1, p2) = orthonormal_hermite(n, z, pim4);
                let z1 = z;
                z = z1 - p1 / ((2.0 * nf).sqrt() * p2);
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let pp = (2.0 * nf).sqrt() * orthonormal_hermite(n, z, pim4).1;
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        Ok(Self {
            nodes: x,
            weights: w,
        })
    }

    /// Cached rule of the default order.
    pub fn default_rule() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(DEFAULT_ORDER).expect("default order is valid"))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(X)]` for `X ~ N(0, 1)`.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let scale = std::f64::consts::SQRT_2;
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(scale * x);
            if !v.is_finite() {
                return Err(Error::domain(
                    "gaussian expectation",
                    format!("integrand is {v} at node {}", scale * x),
                ));
            }
            acc += w * v;
        }
        Ok(acc / std::f64::consts::PI.sqrt())
    }
}

/// Returns `(h_n(z), h_{n-1}(z))` for the orthonormal Hermite functions.
fn orthonormal_hermite(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

/// `E[f(X)]`, `X ~ N(0, 1)`, with a rule of the given order.
pub fn gaussian_expectation(f: impl Fn(f64) -> f64, order: usize) -> Result<f64> {
    if order == DEFAULT_ORDER {
        GaussHermite::default_rule().expectation(f)
    } else {
        GaussHermite::new(order)?.expectation(f)
    }
}
