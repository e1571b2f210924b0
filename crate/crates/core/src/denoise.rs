//! PCA projection denoising for high-dimensional observations.
//!
//! Data are projected onto an estimated dominant left singular subspace,
//! either of known rank or with the rank read off a random Gaussian sketch.

use nalgebra::{DMatrix, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::types::DataMatrix;

#[derive(Clone, Debug)]
pub struct DenoiseResult {
    pub r_hat: usize,
    /// `basis * basis^T * z`, still `d x N`.
    pub z_tilde: DataMatrix,
    /// `d x r_hat`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Singular values used for the rank decision, descending.
    pub singular_values: Vec<f64>,
}

impl DenoiseResult {
    /// `basis^T * z_tilde`: the denoised points in basis coordinates
    /// (`r_hat x N`). Pairwise distances equal those of `z_tilde`.
    pub fn coordinates(&self) -> Result<DataMatrix> {
        DataMatrix::new(self.basis.tr_mul(self.z_tilde.matrix()))
    }

    /// Projects another `d x N` matrix onto the same subspace.
    pub fn project(&self, z: &DataMatrix) -> Result<DataMatrix> {
        if z.dim() != self.basis.nrows() {
            return Err(Error::DimensionMismatch { expected: self.basis.nrows(), got: z.dim() });
        }
        DataMatrix::new(project(&self.basis, z.matrix()))
    }
}

fn project(basis: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.tr_mul(z)
}

/// Projection onto the top `r` left singular vectors of `z`.
pub fn denoise_fixed_rank(z: &DataMatrix, r: usize) -> Result<DenoiseResult> {
    let max = z.dim().min(z.len());
    if r == 0 {
        return Err(Error::InvalidParameter("rank must be at least 1".into()));
    }
    if r > max {
        return Err(Error::RankTooLarge { rank: r, max });
    }
    let svd = SVD::new(z.matrix().clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let basis = u.columns(0, r).into_owned();
    let z_tilde = DataMatrix::new(project(&basis, z.matrix()))?;
    Ok(DenoiseResult { r_hat: r, z_tilde, basis, singular_values: svd.singular_values.as_slice().to_vec() })
}

/// Randomized rank finding: sketch `Y = z G` with an `N x r0` standard
/// Gaussian `G` drawn from `seed`, take the rank as the first index whose
/// singular value ratio `s_i(Y) / s_1(Y)` drops below `eta` (or `r0` if none
/// does), and project onto that many leading left singular vectors of `Y`.
pub fn denoise_auto(z: &DataMatrix, r0: usize, eta: f64, seed: u64) -> Result<DenoiseResult> {
    let max = z.dim().min(z.len());
    if r0 == 0 {
        return Err(Error::InvalidParameter("oversampling rank must be at least 1".into()));
    }
    if r0 > max {
        return Err(Error::RankTooLarge { rank: r0, max });
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold must lie in (0, 1), got {eta}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // column-major fill: deterministic for a given (N, r0, seed)
    let g = DMatrix::<f64>::from_fn(z.len(), r0, |_, _| StandardNormal.sample(&mut rng));
    let y = z.matrix() * g;

    let svd = SVD::new(y, true, false);
    let sv = svd.singular_values.as_slice().to_vec();
    let top = sv[0];
    if top.is_nan() || top <= 0.0 {
        return Err(Error::DegenerateSketch);
    }
    let r_hat = sv.iter().position(|s| s / top < eta).map_or(r0, |i| i + 1);
    let u = svd.u.expect("left singular vectors requested");
    let basis = u.columns(0, r_hat).into_owned();
    let z_tilde = DataMatrix::new(project(&basis, z.matrix()))?;
    Ok(DenoiseResult { r_hat, z_tilde, basis, singular_values: sv })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn low_rank(d: usize, n: usize, singular: &[f64], seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = singular.len();
        let a = DMatrix::<f64>::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng)).qr().q();
        let b = DMatrix::<f64>::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng)).qr().q();
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(singular));
        a * s * b.transpose()
    }

    #[test]
    fn exact_rank_is_reproduced() {
        let x = low_rank(30, 20, &[5.0, 3.0, 1.0], 1);
        let z = DataMatrix::new(x.clone()).unwrap();
        let out = denoise_fixed_rank(&z, 3).unwrap();
        assert!(frob(&(out.z_tilde.matrix() - &x)) / frob(&x) <= 1e-10);
        let gram = out.basis.tr_mul(&out.basis);
        assert!((gram - DMatrix::identity(3, 3)).abs().max() <= 1e-10);
    }

    #[test]
    fn diagonal_truncation() {
        let z = DataMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 3.0, 2.0, 1.0]))).unwrap();
        let out = denoise_fixed_rank(&z, 2).unwrap();
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 3.0, 0.0, 0.0]));
        assert!((out.z_tilde.matrix() - expect).abs().max() <= 1e-12);
    }

    #[test]
    fn full_rank_is_identity() {
        let x = low_rank(6, 4, &[3.0, 2.0, 1.5, 0.5], 2);
        let z = DataMatrix::new(x.clone()).unwrap();
        let out = denoise_fixed_rank(&z, 4).unwrap();
        assert!((out.z_tilde.matrix() - x).abs().max() <= 1e-12);
    }

    #[test]
    fn rank_too_large() {
        let z = DataMatrix::new(DMatrix::from_element(3, 5, 1.0)).unwrap();
        assert!(matches!(denoise_fixed_rank(&z, 4), Err(Error::RankTooLarge { rank: 4, max: 3 })));
        assert!(matches!(denoise_auto(&z, 4, 1e-3, 0), Err(Error::RankTooLarge { .. })));
    }

    #[test]
    fn auto_rank_on_clean_low_rank() {
        let x = low_rank(200, 100, &[10.0, 8.0, 6.0, 4.0, 2.0], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = DMatrix::<f64>::from_fn(200, 100, |_, _| 1e-12 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let z = DataMatrix::new(&x + noise).unwrap();
        let out = denoise_auto(&z, 10, 1e-3, 7).unwrap();
        assert!(out.r_hat == 5 || out.r_hat == 6, "r_hat = {}", out.r_hat);
        assert!(frob(&(out.z_tilde.matrix() - &x)) / frob(&x) <= 1e-8);
    }

    #[test]
    fn zero_data_is_degenerate() {
        let z = DataMatrix::new(DMatrix::zeros(8, 6)).unwrap();
        assert!(matches!(denoise_auto(&z, 3, 1e-3, 0), Err(Error::DegenerateSketch)));
    }

    #[test]
    fn seed_determinism_and_idempotence() {
        let x = low_rank(50, 40, &[4.0, 1.0], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noise = DMatrix::<f64>::from_fn(50, 40, |_, _| 0.01 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let z = DataMatrix::new(x + noise).unwrap();
        let a = denoise_auto(&z, 8, 1e-2, 11).unwrap();
        let b = denoise_auto(&z, 8, 1e-2, 11).unwrap();
        assert_eq!(a.r_hat, b.r_hat);
        assert_eq!(a.basis, b.basis);
        let again = a.project(&a.z_tilde).unwrap();
        assert!((again.matrix() - a.z_tilde.matrix()).abs().max() <= 1e-12);
    }

    #[test]
    fn bad_threshold() {
        let z = DataMatrix::new(DMatrix::from_element(3, 5, 1.0)).unwrap();
        assert!(denoise_auto(&z, 2, 0.0, 0).is_err());
        assert!(denoise_auto(&z, 2, 1.0, 0).is_err());
    }
}
