//! Gaussian similarities, degrees and the two normalized graph Laplacians.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::eigen::SymmetricOperator;
use crate::error::{Error, Result};
use crate::types::{CurveKind, DataMatrix, KernelParams};

/// `(sqrt(2 pi) sigma)^-1 exp(-|x - y|^2 / (2 sigma^2))`
pub fn gaussian_kernel(x: &[f64], y: &[f64], p: KernelParams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    Ok(kernel_value(squared_distance(x, y), p.sigma()))
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn kernel_value(sq_dist: f64, sigma: f64) -> f64 {
    (-sq_dist / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Dense symmetric kernel matrix with its degree vector.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    k: DMatrix<f64>,
    degrees: Vec<f64>,
    sigma: f64,
}

impl KernelMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// Row sums, self-similarity included.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }
}

/// Builds the full kernel matrix. Only the upper triangle is evaluated; the
/// lower triangle is a copy, so the result is bit-exactly symmetric.
pub fn build_kernel(z: &DataMatrix, p: KernelParams) -> KernelMatrix {
    let n = z.len();
    let sigma = p.sigma();
    let mut k = DMatrix::<f64>::zeros(n, n);

    // column j holds k(i, j) for i <= j
    k.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        let xj = z.point(j);
        for (i, entry) in col.iter_mut().enumerate().take(j + 1) {
            *entry = kernel_value(squared_distance(z.point(i), xj), sigma);
        }
    });
    for j in 0..n {
        for i in 0..j {
            k[(j, i)] = k[(i, j)];
        }
    }

    // fixed summation order (ascending j) per degree
    let degrees = k.as_slice().par_chunks(n).map(|col| col.iter().sum::<f64>()).collect();
    KernelMatrix { k, degrees, sigma }
}

/// Normalized graph Laplacian of either curve kind.
#[derive(Clone, Debug)]
pub struct LaplacianMatrix {
    l: DMatrix<f64>,
    kind: CurveKind,
    sigma: f64,
    degrees: Vec<f64>,
}

impl LaplacianMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }
}

/// Open curve: `1{i=j} - k(i,j) (1/(2 d_i) + 1/(2 d_j))`.
/// Closed loop: `1{i=j} - k(i,j) / sqrt(d_i d_j)`.
///
/// Consumes the kernel and overwrites it in place.
pub fn build_laplacian(km: KernelMatrix, kind: CurveKind) -> Result<LaplacianMatrix> {
    let KernelMatrix { k: mut l, degrees, sigma } = km;
    if let Some(i) = degrees.iter().position(|&d| !(d.is_finite() && d > 0.0)) {
        return Err(Error::ZeroDegree(i));
    }
    let n = degrees.len();
    match kind {
        CurveKind::OpenCurve => {
            let half_inv: Vec<f64> = degrees.iter().map(|d| 1.0 / (2.0 * d)).collect();
            l.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(j, col)| {
                for (i, entry) in col.iter_mut().enumerate() {
                    *entry = -*entry * (half_inv[i] + half_inv[j]);
                }
                col[j] += 1.0;
            });
        }
        CurveKind::ClosedLoop => {
            let degrees = &degrees;
            l.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(j, col)| {
                for (i, entry) in col.iter_mut().enumerate() {
                    *entry = -*entry / (degrees[i] * degrees[j]).sqrt();
                }
                col[j] += 1.0;
            });
        }
    }
    Ok(LaplacianMatrix { l, kind, sigma, degrees })
}

impl SymmetricOperator for LaplacianMatrix {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.l.apply(x, y)
    }
}
