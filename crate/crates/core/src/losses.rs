//! The power-of-residual loss family and its desingularizing functions.
//!
//! For `p ≥ 0` and a weight `w > 0`,
//! `L(v) = w ‖v − y‖^{2(p+1)} / (2(p+1))`. With exponent `α = 1/(2(p+1))` and
//! constant `c = (2(p+1))^{α−1}/α` (scaled by `w^{−α}`), the function
//! `ψ(s) = c s^α` satisfies `ψ'(L(v)) ‖∇L(v)‖ ≥ 1` away from `y`, with
//! equality. In particular `ψ(L(v)) = ‖v − y‖` for every member.

use crate::error::{Error, Result};
use crate::linalg::{norm, sub_vec};

/// `(α, c)` for the unit-weight member with exponent `p`.
pub fn desingularizing_constants(p: f64) -> Result<(f64, f64)> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(Error::invalid(format!("loss exponent p = {p} must be finite and ≥ 0")));
    }
    let q = 2.0 * (p + 1.0);
    let alpha = 1.0 / q;
    let c = q.powf(alpha - 1.0) / alpha;
    Ok((alpha, c))
}

/// `ψ(s) = c s^α` together with its derivative, primitive and inverses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Desingularizer {
    pub alpha: f64,
    pub c: f64,
}

impl Desingularizer {
    pub fn new(alpha: f64, c: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Unsupported(format!("exponent α = {alpha} outside (0, 1]")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("constant c = {c} must be positive")));
        }
        Ok(Self { alpha, c })
    }

    /// `ψ(s)` for `s ≥ 0`.
    pub fn psi(&self, s: f64) -> Result<f64> {
        check_nonneg("ψ", s)?;
        Ok(self.c * s.powf(self.alpha))
    }

    /// `ψ'(s)` for `s > 0`.
    pub fn psi_prime(&self, s: f64) -> Result<f64> {
        check_pos("ψ'", s)?;
        Ok(self.c * self.alpha * s.powf(self.alpha - 1.0))
    }

    /// `ψ^{-1}(v) = (v/c)^{1/α}` for `v ≥ 0`.
    pub fn psi_inv(&self, v: f64) -> Result<f64> {
        check_nonneg("ψ⁻¹", v)?;
        Ok((v / self.c).powf(1.0 / self.alpha))
    }

    /// The primitive `Ψ` of `−ψ'²`, normalized without an additive constant.
    ///
    /// `Ψ(s) = −(c²/4) ln s` at `α = 1/2`, else `−c²α² s^{2α−1}/(2α−1)`.
    pub fn big_psi(&self, s: f64) -> Result<f64> {
        check_pos("Ψ", s)?;
        let (a, c2) = (self.alpha, self.c * self.c);
        if self.is_log_case() {
            Ok(-(c2 / 4.0) * s.ln())
        } else {
            Ok(-c2 * a * a * s.powf(2.0 * a - 1.0) / (2.0 * a - 1.0))
        }
    }

    /// Inverse of [`Self::big_psi`].
    ///
    /// For `α < 1/2` the range of `Ψ` is `(0, ∞)` and non-positive arguments are
    /// a domain error. For `α > 1/2` the range is `(−∞, 0)` and positive
    /// arguments map to `0`, the finite-time extinction value.
    pub fn big_psi_inv(&self, u: f64) -> Result<f64> {
        if u.is_nan() {
            return Err(Error::domain("Ψ⁻¹", "NaN argument"));
        }
        let (a, c2) = (self.alpha, self.c * self.c);
        if self.is_log_case() {
            return Ok((-4.0 * u / c2).exp());
        }
        if a < 0.5 {
            if u <= 0.0 {
                return Err(Error::domain("Ψ⁻¹", format!("argument {u} must be positive")));
            }
        } else if u >= 0.0 {
            return Ok(0.0);
        }
        Ok((u * (1.0 - 2.0 * a) / (c2 * a * a)).powf(1.0 / (2.0 * a - 1.0)))
    }

    fn is_log_case(&self) -> bool {
        (self.alpha - 0.5).abs() < 1e-15
    }
}

fn check_nonneg(what: &'static str, s: f64) -> Result<()> {
    if s >= 0.0 && !s.is_nan() {
        Ok(())
    } else {
        Err(Error::domain(what, format!("argument {s} must be ≥ 0")))
    }
}

fn check_pos(what: &'static str, s: f64) -> Result<()> {
    if s > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(what, format!("argument {s} must be > 0")))
    }
}

/// Loss rate `Ψ^{-1}(γ_t)` for the continuous flow.
///
/// `α = 1/2` gives `exp(−4γ/c²)`; `α < 1/2` gives a polynomial decay;
/// `α ∈ (1/2, 1]` returns `0`.
pub fn loja_loss_rate(alpha: f64, c: f64, gamma_t: f64) -> Result<f64> {
    let d = Desingularizer::new(alpha, c)?;
    if !(gamma_t > 0.0) {
        return Err(Error::domain("loss rate", format!("γ(t) = {gamma_t} must be > 0")));
    }
    d.big_psi_inv(gamma_t)
}

/// `L(v) = w ‖v − y‖^{2(p+1)} / (2(p+1))`.
#[derive(Clone, Debug, PartialEq)]
pub struct KLLoss {
    p: f64,
    weight: f64,
    y: Vec<f64>,
}

impl KLLoss {
    /// Unit-weight member with exponent `p`.
    pub fn new(p: f64, y: Vec<f64>) -> Result<Self> {
        desingularizing_constants(p)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation contains non-finite entries"));
        }
        Ok(Self { p, weight: 1.0, y })
    }

    /// Squared error `‖v − y‖²` (the `p = 0` member with weight 2).
    pub fn mse(y: Vec<f64>) -> Result<Self> {
        Self::new(0.0, y)?.with_weight(2.0)
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("loss weight {weight} must be positive")));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn target(&self) -> &[f64] {
        &self.y
    }

    pub fn alpha(&self) -> f64 {
        1.0 / (2.0 * (self.p + 1.0))
    }

    /// `ψ` for this loss, including the weight.
    pub fn desingularizer(&self) -> Desingularizer {
        let (alpha, c) = desingularizing_constants(self.p).expect("p validated on construction");
        Desingularizer {
            alpha,
            c: c * self.weight.powf(-alpha),
        }
    }

    /// Loss as a function of the residual norm `‖v − y‖`.
    pub fn value_from_residual_norm(&self, r: f64) -> f64 {
        let q = 2.0 * (self.p + 1.0);
        self.weight * r.powf(q) / q
    }

    /// Residual norm at which the loss equals `loss`.
    pub fn residual_norm_from_value(&self, loss: f64) -> f64 {
        let q = 2.0 * (self.p + 1.0);
        (loss * q / self.weight).powf(1.0 / q)
    }

    /// Scalar `s` with `∇L(v) = s (v − y)`, given `‖v − y‖`.
    pub fn gradient_scale(&self, r: f64) -> f64 {
        if self.p == 0.0 {
            self.weight
        } else {
            self.weight * r.powf(2.0 * self.p)
        }
    }

    /// Bound on `‖∇L(v) − ∇L(v')‖ / ‖v − v'‖` over residual norms up to `r`.
    pub fn gradient_lipschitz(&self, r: f64) -> f64 {
        self.weight * (2.0 * self.p + 1.0) * r.powf(2.0 * self.p)
    }

    fn residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.y.len() {
            return Err(Error::invalid(format!(
                "loss input has length {}, expected {}",
                v.len(),
                self.y.len()
            )));
        }
        Ok(sub_vec(v, &self.y))
    }

    pub fn value(&self, v: &[f64]) -> Result<f64> {
        let r = self.residual(v)?;
        Ok(self.value_from_residual_norm(norm(&r)))
    }

    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.residual(v)?;
        let s = self.gradient_scale(norm(&r));
        r.iter_mut().for_each(|x| *x *= s);
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_zero_constants() {
        let (a, c) = desingularizing_constants(0.0).unwrap();
        assert_eq!(a, 0.5);
        assert!((c - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn negative_exponent_rejected() {
        assert!(desingularizing_constants(-0.1).is_err());
        assert!(KLLoss::new(f64::NAN, vec![0.0]).is_err());
    }

    #[test]
    fn psi_of_loss_is_residual_norm() {
        for p in [0.0, 0.2, 0.7, 1.0, 3.0] {
            for w in [1.0, 2.0, 0.3] {
                let loss = KLLoss::new(p, vec![1.0, -2.0, 0.5]).unwrap().with_weight(w).unwrap();
                let v = [0.3, 0.1, -0.4];
                let r = norm(&sub_vec(&v, loss.target()));
                let psi = loss.desingularizer().psi(loss.value(&v).unwrap()).unwrap();
                assert!((psi - r).abs() < 1e-12 * r.max(1.0));
            }
        }
    }

    #[test]
    fn mse_is_plain_squared_error() {
        let loss = KLLoss::mse(vec![1.0, 1.0]).unwrap();
        assert!((loss.value(&[2.0, 3.0]).unwrap() - 5.0).abs() < 1e-15);
        assert_eq!(loss.gradient(&[2.0, 3.0]).unwrap(), vec![2.0, 4.0]);
        assert!((loss.desingularizer().c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let loss = KLLoss::new(0.6, vec![0.2, -0.1, 0.4]).unwrap();
        let v = [1.0, 0.5, -0.3];
        let g = loss.gradient(&v).unwrap();
        for i in 0..3 {
            let mut vp = v;
            let mut vm = v;
            vp[i] += 1e-6;
            vm[i] -= 1e-6;
            let fd = (loss.value(&vp).unwrap() - loss.value(&vm).unwrap()) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn big_psi_inverse_round_trips() {
        for alpha in [0.1, 0.25, 0.4, 0.5, 0.75, 1.0] {
            let d = Desingularizer::new(alpha, 1.3).unwrap();
            for s in [1e-6, 0.01, 0.5, 2.0, 40.0] {
                let back = d.big_psi_inv(d.big_psi(s).unwrap()).unwrap();
                assert!((back - s).abs() < 1e-9 * s, "α={alpha}, s={s}, got {back}");
            }
        }
    }

    #[test]
    fn domain_errors() {
        let d = Desingularizer::new(0.25, 1.0).unwrap();
        assert!(d.psi(-1.0).is_err());
        assert!(d.psi_prime(0.0).is_err());
        assert!(d.big_psi(0.0).is_err());
        assert!(d.big_psi_inv(-1.0).is_err());
        assert!(loja_loss_rate(0.25, 1.0, 0.0).is_err());
        assert!(matches!(loja_loss_rate(1.5, 1.0, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rate_above_one_half_is_zero() {
        assert_eq!(loja_loss_rate(0.75, 1.0, 2.0).unwrap(), 0.0);
        assert_eq!(loja_loss_rate(1.0, 1.0, 0.1).unwrap(), 0.0);
    }
}
