//! Forward operators, their conditioning constants and noise models.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    haar_orthogonal, max_abs, singular_values, DenseMatrix, SeededRng, DEFAULT_RANK_TOL,
};
use crate::model::checkpoint::{read_exact, read_f64, read_u64};

/// A differentiable map `F: R^n → R^m`.
///
/// The trainer only needs forward evaluation, the adjoint of the Jacobian, and
/// a bound on the Jacobian norm used for step-size selection.
pub trait ForwardOperator: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `J_F(x) dx`.
    fn jacobian_apply(&self, x: &[f64], dx: &[f64]) -> Result<Vec<f64>>;
    /// `J_F(x)ᵀ w`.
    fn adjoint_apply(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>>;
    /// Upper bound on `‖J_F(x)‖` over the region of interest.
    fn jacobian_norm_bound(&self) -> f64;
    /// Lipschitz constant of `x ↦ J_F(x)` (zero for linear maps).
    fn jacobian_lipschitz(&self) -> f64;
}

/// A dense linear operator with cached spectral constants.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator {
    a: DenseMatrix,
    norm: f64,
    sigma_min: f64,
    sigma_min_nonzero: Option<f64>,
}

impl LinearOperator {
    pub fn new(a: DenseMatrix) -> Result<Self> {
        if a.rows() == 0 || a.cols() == 0 {
            return Err(Error::invalid("operator dimensions must be positive"));
        }
        let s = singular_values(&a)?;
        let norm = s[0];
        let sigma_min = *s.last().expect("non-empty spectrum");
        let cutoff = DEFAULT_RANK_TOL * norm;
        let sigma_min_nonzero = s.iter().rev().copied().find(|&v| v > cutoff && v > 0.0);
        Ok(Self {
            a,
            norm,
            sigma_min,
            sigma_min_nonzero,
        })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    /// `‖A‖`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Smallest value of the full singular spectrum.
    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_min_nonzero(&self) -> Option<f64> {
        self.sigma_min_nonzero
    }

    /// `σ_max / σ_min^{>0}`, or `None` for the zero operator.
    pub fn condition_number(&self) -> Option<f64> {
        self.sigma_min_nonzero.map(|s| self.norm / s)
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }
}

impl ForwardOperator for LinearOperator {
    fn input_dim(&self) -> usize {
        self.a.cols()
    }

    fn output_dim(&self) -> usize {
        self.a.rows()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.a.matvec(x)
    }

    fn jacobian_apply(&self, _x: &[f64], dx: &[f64]) -> Result<Vec<f64>> {
        self.a.matvec(dx)
    }

    fn adjoint_apply(&self, _x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.a.matvec_transpose(w)
    }

    fn jacobian_norm_bound(&self) -> f64 {
        self.norm
    }

    fn jacobian_lipschitz(&self) -> f64 {
        0.0
    }
}

/// `m×n` matrix with i.i.d. `N(0, 1/n)` entries.
pub fn gaussian_operator(m: usize, n: usize, rng: &mut SeededRng) -> Result<LinearOperator> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("operator dimensions must be positive"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    LinearOperator::new(DenseMatrix::from_fn(m, n, |_, _| scale * rng.standard_normal()))
}

/// `U diag(s) V_sᵀ` with Haar `U` (`s×s`) and the first `s` columns of a Haar
/// `n×n` matrix `V`, where `s = spectrum.len() ≤ n`. The result is `s×n` with
/// singular values exactly `spectrum`.
pub fn prescribed_spectrum_operator(
    n: usize,
    spectrum: &[f64],
    rng: &mut SeededRng,
) -> Result<LinearOperator> {
    let m = spectrum.len();
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "spectrum length {m} must be in 1..={n}"
        )));
    }
    if spectrum.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("spectrum entries must be positive and finite"));
    }
    let u = haar_orthogonal(m, rng)?;
    let v = haar_orthogonal(n, rng)?;
    let a = DenseMatrix::from_fn(m, n, |i, j| {
        (0..m).map(|l| u.get(i, l) * spectrum[l] * v.get(j, l)).sum()
    });
    LinearOperator::new(a)
}

/// Smallest nonzero singular value of `A`.
pub fn sigma_f(op: &LinearOperator) -> Result<f64> {
    op.sigma_min_nonzero.ok_or(Error::RankZero {
        tolerance: DEFAULT_RANK_TOL,
    })
}

/// Global injectivity constant, available when `A` has trivial kernel.
pub fn mu_f_global(op: &LinearOperator) -> Result<f64> {
    if op.cols() > op.rows() {
        return Err(Error::InjectivityUnavailable(format!(
            "{}x{} operator has a nontrivial kernel",
            op.rows(),
            op.cols()
        )));
    }
    match op.sigma_min_nonzero {
        Some(s) if op.sigma_min > DEFAULT_RANK_TOL * op.norm => Ok(s),
        _ => Err(Error::InjectivityUnavailable(
            "operator is rank deficient".into(),
        )),
    }
}

/// Monte-Carlo estimate of `min ‖A z‖/‖z‖` over directions drawn by `sampler`.
///
/// This is an upper estimate of the restricted minimum singular value, not a
/// certified lower bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledEstimate {
    pub value: f64,
    pub samples: usize,
}

pub fn min_conic_singular_value_sampled(
    op: &LinearOperator,
    mut sampler: impl FnMut() -> Vec<f64>,
    samples: usize,
) -> Result<SampledEstimate> {
    if samples == 0 {
        return Err(Error::invalid("at least one sample is required"));
    }
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let z = sampler();
        let zn = crate::linalg::norm(&z);
        if zn == 0.0 || !zn.is_finite() {
            return Err(Error::invalid("sampler produced a zero or non-finite direction"));
        }
        let az = crate::linalg::norm(&op.apply(&z)?);
        best = best.min(az / zn);
    }
    Ok(SampledEstimate {
        value: best,
        samples,
    })
}

/// Lower bound on the number of sub-Gaussian measurements for restricted
/// injectivity on a cone of Gaussian width `w`:
/// `C′ (σ/α)⁶ w² + 2 C⁻² (σ²/α⁴) τ²`.
///
/// `C` and `C′` are unspecified absolute constants; the result is a scaling
/// estimate.
pub fn sample_complexity_bound(
    sigma: f64,
    alpha_sg: f64,
    width: f64,
    tau: f64,
    c: f64,
    c_prime: f64,
) -> Result<f64> {
    if !(alpha_sg > 0.0 && alpha_sg.is_finite()) {
        return Err(Error::invalid(format!("α = {alpha_sg} must be positive")));
    }
    if !(c > 0.0 && c_prime > 0.0) {
        return Err(Error::invalid("constants C and C′ must be positive"));
    }
    if !(width >= 0.0 && tau >= 0.0 && sigma >= 0.0) {
        return Err(Error::invalid("σ, width and τ must be non-negative"));
    }
    let ratio = sigma / alpha_sg;
    Ok(c_prime * ratio.powi(6) * width * width
        + 2.0 / (c * c) * sigma * sigma / alpha_sg.powi(4) * tau * tau)
}

/// Uniform noise `ε_i ~ U(−β, β)` of length `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub beta: f64,
    pub m: usize,
}

pub fn make_noise(spec: NoiseSpec, rng: &mut SeededRng) -> Result<Vec<f64>> {
    if !(spec.beta >= 0.0 && spec.beta.is_finite()) {
        return Err(Error::invalid(format!("noise level β = {} must be ≥ 0", spec.beta)));
    }
    Ok((0..spec.m).map(|_| rng.uniform(-spec.beta, spec.beta)).collect())
}

/// `√m β / (√6 μ_F)`.
pub fn expected_noise_floor(m: usize, beta: f64, mu_f: f64) -> Result<f64> {
    if !(mu_f > 0.0) {
        return Err(Error::invalid(format!("μ_F = {mu_f} must be positive")));
    }
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("β = {beta} must be ≥ 0")));
    }
    Ok((m as f64).sqrt() * beta / (6f64.sqrt() * mu_f))
}

/// `‖ε‖_∞`.
pub fn noise_sup(eps: &[f64]) -> f64 {
    max_abs(eps)
}

const OP_MAGIC: &[u8; 8] = b"DIPOPR01";

/// Binary operator format: magic, `m`, `n`, a length-prefixed UTF-8 metadata
/// string, then the row-major entries.
pub fn write_operator(op: &LinearOperator, metadata: &str, mut out: impl Write) -> std::io::Result<()> {
    out.write_all(OP_MAGIC)?;
    out.write_all(&(op.rows() as u64).to_le_bytes())?;
    out.write_all(&(op.cols() as u64).to_le_bytes())?;
    out.write_all(&(metadata.len() as u64).to_le_bytes())?;
    out.write_all(metadata.as_bytes())?;
    for v in op.matrix().as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_operator(mut input: impl Read) -> Result<(LinearOperator, String)> {
    let mut magic = [0u8; 8];
    read_exact(&mut input, &mut magic)?;
    if &magic != OP_MAGIC {
        return Err(Error::Format("not an operator file".into()));
    }
    let m = read_u64(&mut input)? as usize;
    let n = read_u64(&mut input)? as usize;
    let meta_len = read_u64(&mut input)? as usize;
    if meta_len > 1 << 24 {
        return Err(Error::Format("metadata too long".into()));
    }
    let mut meta = vec![0u8; meta_len];
    read_exact(&mut input, &mut meta)?;
    let meta = String::from_utf8(meta).map_err(|e| Error::Format(e.to_string()))?;
    let count = m
        .checked_mul(n)
        .ok_or_else(|| Error::Format("operator size overflow".into()))?;
    let mut data = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        data.push(read_f64(&mut input)?);
    }
    Ok((LinearOperator::new(DenseMatrix::new(m, n, data)?)?, meta))
}

pub fn save_operator(op: &LinearOperator, metadata: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    write_operator(op, metadata, &mut buf)
        .and_then(|_| buf.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_operator(path: impl AsRef<Path>) -> Result<(LinearOperator, String)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_operator(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prescribed_spectrum_is_reproduced() {
        let spectrum: Vec<f64> = (0..10).map(|i| 1.0 - i as f64 * 0.0987).collect();
        let op = prescribed_spectrum_operator(10, &spectrum, &mut SeededRng::new(2, 0)).unwrap();
        let mut s = singular_values(op.matrix()).unwrap();
        s.reverse();
        let mut want = spectrum.clone();
        want.sort_by(f64::total_cmp);
        for (a, b) in s.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_prescribed_operator() {
        let op = prescribed_spectrum_operator(6, &[2.0, 0.5], &mut SeededRng::new(2, 0)).unwrap();
        assert_eq!((op.rows(), op.cols()), (2, 6));
        assert!((op.norm() - 2.0).abs() < 1e-12);
        assert!((sigma_f(&op).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(mu_f_global(&op), Err(Error::InjectivityUnavailable(_))));
    }

    #[test]
    fn zero_operator_has_no_sigma_f() {
        let op = LinearOperator::new(DenseMatrix::zeros(3, 3)).unwrap();
        assert!(matches!(sigma_f(&op), Err(Error::RankZero { .. })));
        assert!(op.condition_number().is_none());
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let spec = NoiseSpec { beta: 0.1, m: 500 };
        let a = make_noise(spec, &mut SeededRng::new(4, 2)).unwrap();
        let b = make_noise(spec, &mut SeededRng::new(4, 2)).unwrap();
        assert_eq!(a, b);
        assert!(noise_sup(&a) <= 0.1);
        assert!(make_noise(NoiseSpec { beta: -1.0, m: 2 }, &mut SeededRng::new(0, 0)).is_err());
    }

    #[test]
    fn noise_floor_literal() {
        let f = expected_noise_floor(10, 0.1, 0.5).unwrap();
        assert!((f - 10f64.sqrt() * 0.1 / (6f64.sqrt() * 0.5)).abs() < 1e-15);
        assert!(expected_noise_floor(10, 0.1, 0.0).is_err());
    }

    #[test]
    fn operator_file_round_trip() {
        let op = gaussian_operator(4, 7, &mut SeededRng::new(8, 0)).unwrap();
        let mut bytes = Vec::new();
        write_operator(&op, "gaussian seed=8", &mut bytes).unwrap();
        let (back, meta) = read_operator(bytes.as_slice()).unwrap();
        assert_eq!(meta, "gaussian seed=8");
        assert_eq!(back.matrix(), op.matrix());
        assert!(read_operator(&bytes[..20]).is_err());
    }

    #[test]
    fn sampled_conic_estimate_bounds_from_above() {
        let op = gaussian_operator(20, 8, &mut SeededRng::new(3, 0)).unwrap();
        let mut rng = SeededRng::new(3, 1);
        let est = min_conic_singular_value_sampled(&op, || rng.normal_vec(8), 200).unwrap();
        assert!(est.value >= op.sigma_min() - 1e-12);
    }

    #[test]
    fn sample_complexity_literal() {
        let v = sample_complexity_bound(1.0, 1.0, 3.0, 2.0, 1.0, 1.0).unwrap();
        assert!((v - 17.0).abs() < 1e-12);
        let w0 = sample_complexity_bound(0.7, 1.3, 0.0, 2.0, 1.0, 1.0).unwrap();
        assert!((w0 - 2.0 * 0.49 * 4.0 / 1.3f64.powi(4)).abs() < 1e-12);
        assert!(sample_complexity_bound(1.0, 0.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }
}
