//! Smallest eigenpairs of symmetric operators with residual certificates.
//!
//! The solver is a thick-restart block Krylov method: each cycle grows an
//! orthonormal basis (full reorthogonalization) from a block of start vectors,
//! solves the projected problem with cyclic Jacobi, and restarts from the
//! lowest Ritz vectors. Starting the block with more vectors than the largest
//! expected multiplicity lets it resolve (near-)degenerate eigenspaces such as
//! the cos/sin pair of a closed loop.
//!
//! Only matrix-vector products are required, so anything implementing
//! [`SymmetricOperator`] can be solved.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Restarts allowed per requested eigenpair.
const RESTARTS_PER_PAIR: usize = 50;

/// Directions whose norm falls below this fraction after orthogonalization are dropped.
const DEFLATION_RATIO: f64 = 1e-10;

pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// The caller is responsible for the matrix being symmetric.
impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        // symmetric: row i equals column i, which is contiguous
        y.par_iter_mut()
            .zip(self.as_slice().par_chunks(n))
            .for_each(|(yi, col)| *yi = dot(col, x));
    }
}

#[derive(Clone, Debug)]
pub struct SpectralResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `N x k`, unit-norm columns.
    pub eigenvectors: DMatrix<f64>,
    /// `|A v_j - lambda_j v_j|`, recomputed from scratch after convergence.
    pub residuals: Vec<f64>,
}

impl SpectralResult {
    pub fn vector(&self, j: usize) -> &[f64] {
        let n = self.eigenvectors.nrows();
        &self.eigenvectors.as_slice()[j * n..(j + 1) * n]
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// The `k` algebraically smallest eigenpairs of `op`.
///
/// Every returned pair satisfies `|A v - lambda v| <= tol * max(1, |lambda|)`.
/// Each eigenvector is signed so that its entry of largest magnitude (lowest
/// index on ties) is positive, which makes the output a pure function of the
/// operator.
pub fn smallest_eigenpairs<A: SymmetricOperator + ?Sized>(
    op: &A,
    k: usize,
    tol: f64,
) -> Result<SpectralResult> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("requested {k} eigenpairs of a {n}-dimensional operator")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }

    let block = (k + 2).min(n);
    let max_basis = n.min((8 * block).max(60));
    let keep = (max_basis / 2).max(block).min(max_basis);
    let budget = RESTARTS_PER_PAIR * k;
    // aim well below the contract so eigenspaces are accurate as well
    let inner_tol = tol * 1e-2;

    let mut rng = ChaCha8Rng::seed_from_u64(0x0F1E_D1E2);
    let mut basis = Basis::new(n);
    for _ in 0..block {
        basis.push_random(&mut rng);
    }

    let mut restarts = 0;
    loop {
        basis.expand(op, max_basis, &mut rng);
        let m = basis.len();
        let (theta, s) = rayleigh_ritz(&basis);
        let wanted = keep.min(m);
        let (y, ay) = basis.ritz_vectors(&s, wanted);
        let residuals: Vec<f64> = (0..k).map(|j| residual(&ay[j], &y[j], theta[j])).collect();

        let exhausted = m == n;
        let converged = |scale: f64| {
            residuals.iter().zip(&theta).all(|(r, t)| *r <= scale * t.abs().max(1.0))
        };
        if converged(inner_tol) || exhausted || (restarts >= budget && converged(tol)) {
            return Ok(finish(op, &theta[..k], y.into_iter().take(k).collect()));
        }
        if restarts >= budget {
            return Err(Error::NoConvergence { iterations: restarts });
        }
        restarts += 1;
        log::trace!("restart {restarts}: residuals {residuals:?}");
        basis = Basis::from_ritz(n, y, ay);
    }
}

fn finish<A: SymmetricOperator + ?Sized>(op: &A, theta: &[f64], mut vectors: Vec<Vec<f64>>) -> SpectralResult {
    let n = op.dim();
    let k = theta.len();
    let mut eigenvectors = DMatrix::zeros(n, k);
    let mut residuals = Vec::with_capacity(k);
    let mut av = vec![0.0; n];
    for (j, v) in vectors.iter_mut().enumerate() {
        let norm = dot(v, v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        fix_sign(v);
        op.apply(v, &mut av);
        residuals.push(residual(&av, v, theta[j]));
        eigenvectors.column_mut(j).copy_from_slice(v);
    }
    SpectralResult { eigenvalues: theta.to_vec(), eigenvectors, residuals }
}

/// Makes the entry of largest magnitude positive (first such index on ties).
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn residual(av: &[f64], v: &[f64], lambda: f64) -> f64 {
    av.iter().zip(v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Orthonormal basis vectors together with their images under the operator.
struct Basis {
    n: usize,
    q: Vec<Vec<f64>>,
    aq: Vec<Option<Vec<f64>>>,
    /// Columns `< expanded` have already contributed their image as a new direction.
    expanded: usize,
}

impl Basis {
    fn new(n: usize) -> Self {
        Self { n, q: Vec::new(), aq: Vec::new(), expanded: 0 }
    }

    /// Restart basis from Ritz vectors and their images, re-orthonormalized with
    /// the same transformation applied to the images.
    fn from_ritz(n: usize, y: Vec<Vec<f64>>, ay: Vec<Vec<f64>>) -> Self {
        let mut basis = Self::new(n);
        for (mut v, mut av) in y.into_iter().zip(ay) {
            for _ in 0..2 {
                for (qi, aqi) in basis.q.iter().zip(&basis.aq) {
                    let c = dot(qi, &v);
                    axpy(-c, qi, &mut v);
                    axpy(-c, aqi.as_ref().expect("restart images are known"), &mut av);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm <= DEFLATION_RATIO {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            av.iter_mut().for_each(|x| *x /= norm);
            basis.q.push(v);
            basis.aq.push(Some(av));
        }
        basis
    }

    fn len(&self) -> usize {
        self.q.len()
    }

    /// Orthogonalizes `w` against the basis (two classical Gram-Schmidt passes)
    /// and appends it unless it is numerically dependent.
    fn try_push(&mut self, mut w: Vec<f64>) -> bool {
        let norm0 = dot(&w, &w).sqrt();
        if norm0 == 0.0 {
            return false;
        }
        for _ in 0..2 {
            let coeffs: Vec<f64> = self.q.par_iter().map(|qi| dot(qi, &w)).collect();
            for (qi, c) in self.q.iter().zip(coeffs) {
                axpy(-c, qi, &mut w);
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm <= DEFLATION_RATIO * norm0 {
            return false;
        }
        w.iter_mut().for_each(|x| *x /= norm);
        self.q.push(w);
        self.aq.push(None);
        true
    }

    fn push_random(&mut self, rng: &mut ChaCha8Rng) {
        while self.len() < self.n {
            let w: Vec<f64> = (0..self.n).map(|_| StandardNormal.sample(rng)).collect();
            if self.try_push(w) {
                return;
            }
        }
    }

    fn image<A: SymmetricOperator + ?Sized>(&mut self, j: usize, op: &A) -> &[f64] {
        if self.aq[j].is_none() {
            let mut y = vec![0.0; self.n];
            op.apply(&self.q[j], &mut y);
            self.aq[j] = Some(y);
        }
        self.aq[j].as_deref().expect("image computed above")
    }

    /// Grows the basis to `max_basis` vectors by block Krylov expansion, filling
    /// with random directions if an invariant subspace is reached, then makes
    /// sure every basis vector has its image.
    fn expand<A: SymmetricOperator + ?Sized>(&mut self, op: &A, max_basis: usize, rng: &mut ChaCha8Rng) {
        let target = max_basis.min(self.n);
        while self.len() < target {
            if self.expanded < self.len() {
                let j = self.expanded;
                self.expanded += 1;
                let w = self.image(j, op).to_vec();
                self.try_push(w);
            } else {
                self.push_random(rng);
            }
        }
        for j in 0..self.len() {
            self.image(j, op);
        }
    }

    /// First `count` Ritz vectors `Q s_j` and their images `AQ s_j`.
    fn ritz_vectors(&self, s: &DMatrix<f64>, count: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let combine = |cols: &[&[f64]], j: usize| {
            let mut out = vec![0.0; self.n];
            for (i, c) in cols.iter().enumerate() {
                axpy(s[(i, j)], c, &mut out);
            }
            out
        };
        let q: Vec<&[f64]> = self.q.iter().map(Vec::as_slice).collect();
        let aq: Vec<&[f64]> = self.aq.iter().map(|v| v.as_deref().expect("images computed")).collect();
        (0..count)
            .into_par_iter()
            .map(|j| (combine(&q, j), combine(&aq, j)))
            .unzip()
    }
}

/// Eigen-decomposition of the projected matrix `Q^T A Q`, ascending.
fn rayleigh_ritz(basis: &Basis) -> (Vec<f64>, DMatrix<f64>) {
    let m = basis.len();
    let mut h = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let a = dot(&basis.q[i], basis.aq[j].as_deref().expect("images computed"));
            let b = dot(&basis.q[j], basis.aq[i].as_deref().expect("images computed"));
            let v = 0.5 * (a + b);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    jacobi_eigen(h)
}

/// Cyclic Jacobi eigenvalue algorithm for a small dense symmetric matrix.
/// Returns ascending eigenvalues and the matching orthonormal eigenvectors as columns.
pub fn jacobi_eigen(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let m = a.nrows();
    let mut v = DMatrix::<f64>::identity(m, m);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..m {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..m {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
                for r in 0..m {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = idx.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(m, m, |r, c| v[(r, idx[c])]);
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_by_two_closed_form() {
        let l = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        let r = smallest_eigenpairs(&l, 2, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(r.eigenvalues[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.eigenvalues[1], 1.0, epsilon = 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(r.vector(0)[0], h, epsilon = 1e-12);
        assert_abs_diff_eq!(r.vector(0)[1], h, epsilon = 1e-12);
        // sign convention: largest magnitude entry positive, lowest index on ties
        assert_abs_diff_eq!(r.vector(1)[0], h, epsilon = 1e-12);
        assert_abs_diff_eq!(r.vector(1)[1], -h, epsilon = 1e-12);
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let (vals, vecs) = jacobi_eigen(a.clone());
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let recon = &vecs * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals)) * vecs.transpose();
        assert!((recon - a).abs().max() < 1e-13);
    }

    #[test]
    fn exact_multiplicity_is_resolved() {
        // diag(0, 1, 1, 1, 5, 6, ...) in a random orthogonal basis
        let n = 40;
        let mut diag: Vec<f64> = (0..n).map(|i| 2.0 + i as f64).collect();
        diag[0] = 0.0;
        diag[1] = 1.0;
        diag[2] = 1.0;
        diag[3] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let a = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let r = smallest_eigenpairs(&a, 4, DEFAULT_TOL).unwrap();
        for (got, want) in r.eigenvalues.iter().zip([0.0, 1.0, 1.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-10);
        }
        for res in &r.residuals {
            assert!(*res <= 1e-8);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let a = DMatrix::<f64>::identity(3, 3);
        assert!(smallest_eigenpairs(&a, 0, 1e-8).is_err());
        assert!(smallest_eigenpairs(&a, 4, 1e-8).is_err());
        assert!(smallest_eigenpairs(&a, 1, 0.0).is_err());
    }

    #[test]
    fn sign_convention_ties_lowest_index() {
        let mut v = vec![-0.5, 0.5, 0.1];
        fix_sign(&mut v);
        assert_eq!(v, vec![0.5, -0.5, -0.1]);
    }
}
