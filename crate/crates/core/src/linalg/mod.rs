//! Dense linear algebra, seeded randomness and Gaussian quadrature.

mod matrix;
pub mod quadrature;
mod rng;

pub use matrix::{
    axpy, dot, max_abs, norm, singular_values, smallest_nonzero_singular_value,
    smallest_singular_value, smallest_singular_value_from_gram, spectral_norm, sub_vec,
    symmetric_eigenvalues, DenseMatrix, DEFAULT_RANK_TOL,
};
pub use quadrature::{gaussian_expectation, GaussHermite};
pub use rng::{label, SeededRng};

use crate::error::{Error, Result};

/// Haar-distributed orthogonal `n×n` matrix (QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`).
pub fn haar_orthogonal(n: usize, rng: &mut SeededRng) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::invalid("orthogonal matrix of size 0"));
    }
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    let qr = g.to_nalgebra().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(DenseMatrix::from_nalgebra(&q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_matrix_is_orthogonal() {
        let mut rng = SeededRng::new(5, 0);
        let q = haar_orthogonal(12, &mut rng).unwrap();
        let qtq = q.transpose().matmul(&q).unwrap();
        let err = qtq.sub(&DenseMatrix::identity(12)).unwrap().max_abs();
        assert!(err < 1e-13);
    }
}
