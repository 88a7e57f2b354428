use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::quadrature::{gaussian_expectation, DEFAULT_ORDER};

/// Supported hidden-layer activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Softplus,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 3] = [Self::Sigmoid, Self::Tanh, Self::Softplus];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
            Self::Softplus => "softplus",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Self::Sigmoid => 0,
            Self::Tanh => 1,
            Self::Softplus => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Self::Sigmoid),
            1 => Ok(Self::Tanh),
            2 => Ok(Self::Softplus),
            _ => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }

    #[inline]
    pub fn value(self, x: f64) -> f64 {
        match self {
            Self::Sigmoid => sigmoid(x),
            Self::Tanh => x.tanh(),
            Self::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Self::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Self::Softplus => sigmoid(x),
        }
    }

    /// `max(sup |φ'|, sup |φ''|)`.
    pub fn lipschitz_constant(self) -> f64 {
        match self {
            Self::Sigmoid => 0.25,
            Self::Tanh | Self::Softplus => 1.0,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Self::Sigmoid),
            "tanh" => Ok(Self::Tanh),
            "softplus" => Ok(Self::Softplus),
            other => Err(Error::Unsupported(format!("activation '{other}'"))),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Constants of an activation: the Lipschitz bound `b` and the Gaussian
/// moments `c_phi = √E[φ(X)²]`, `c_phi_prime = √E[φ'(X)²]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationConstants {
    pub b: f64,
    pub c_phi: f64,
    pub c_phi_prime: f64,
}

/// Activation constants at a given quadrature order.
pub fn activation_constants_with_order(
    kind: ActivationKind,
    order: usize,
) -> Result<ActivationConstants> {
    let c_phi = gaussian_expectation(|x| kind.value(x).powi(2), order)?.sqrt();
    let c_phi_prime = gaussian_expectation(|x| kind.derivative(x).powi(2), order)?.sqrt();
    Ok(ActivationConstants {
        b: kind.lipschitz_constant(),
        c_phi,
        c_phi_prime,
    })
}

/// Activation constants by name at the default quadrature order.
pub fn activation_constants(name: &str) -> Result<ActivationConstants> {
    activation_constants_with_order(name.parse()?, DEFAULT_ORDER)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        for kind in ActivationKind::ALL {
            for &x in &[-30.0, -3.0, -0.5, 0.0, 0.7, 4.0, 30.0] {
                let h = 1e-6;
                let fd = (kind.value(x + h) - kind.value(x - h)) / (2.0 * h);
                assert!((fd - kind.derivative(x)).abs() < 1e-8, "{kind} at {x}");
            }
        }
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        for kind in ActivationKind::ALL {
            for &x in &[-1e300, -800.0, 800.0, 1e300] {
                assert!(kind.value(x).is_finite());
                assert!(kind.derivative(x).is_finite());
            }
        }
    }

    #[test]
    fn unknown_name_is_unsupported() {
        assert!(matches!(activation_constants("relu"), Err(Error::Unsupported(_))));
    }

    #[test]
    fn tanh_constants_are_plausible() {
        let c = activation_constants("tanh").unwrap();
        assert_eq!(c.b, 1.0);
        assert!(c.c_phi > 0.6 && c.c_phi < 0.65);
    }
}
