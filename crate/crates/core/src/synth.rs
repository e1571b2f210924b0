//! Synthetic trajectories, Gaussian noise and the pairwise-comparison
//! baseline.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::eigen::fix_sign;
use crate::error::{Error, Result};
use crate::types::{argsort, CurveKind, DataMatrix, Ranking, TimeLabels};

/// Relative eigenvalue gap below which the baseline's Fiedler vector is
/// considered undetermined.
const BASELINE_GAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveSpec {
    /// `(cos t, sin t)`, `t` in `[0, pi]`.
    HalfCircle,
    /// `(2 cos t - 1 - cos 2t, 2 sin t - sin 2t)`, `t` in `[0, 8pi/5]`.
    Cardioid,
    /// `(cos t, sin t)`, `t` in `[0, 2pi)`.
    UnitCircle,
    /// Unit circle spanned by a random orthonormal 2-frame in `R^dim`.
    EmbeddedCircle { dim: usize },
}

impl CurveSpec {
    /// Right end of the label domain.
    pub fn domain_end(&self) -> f64 {
        match self {
            CurveSpec::HalfCircle => PI,
            CurveSpec::Cardioid => 8.0 * PI / 5.0,
            CurveSpec::UnitCircle | CurveSpec::EmbeddedCircle { .. } => TAU,
        }
    }

    pub fn kind(&self) -> CurveKind {
        match self {
            CurveSpec::HalfCircle | CurveSpec::Cardioid => CurveKind::OpenCurve,
            CurveSpec::UnitCircle | CurveSpec::EmbeddedCircle { .. } => CurveKind::ClosedLoop,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CurveSpec::EmbeddedCircle { dim } => *dim,
            _ => 2,
        }
    }

    /// Planar curve point; `None` for the embedded variant, whose frame
    /// depends on the seed.
    pub fn planar_point(&self, t: f64) -> Option<[f64; 2]> {
        match self {
            CurveSpec::HalfCircle | CurveSpec::UnitCircle => Some([t.cos(), t.sin()]),
            CurveSpec::Cardioid => {
                Some([2.0 * t.cos() - 1.0 - (2.0 * t).cos(), 2.0 * t.sin() - (2.0 * t).sin()])
            }
            CurveSpec::EmbeddedCircle { .. } => None,
        }
    }
}

impl FromStr for CurveSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half-circle" => Ok(CurveSpec::HalfCircle),
            "cardioid" => Ok(CurveSpec::Cardioid),
            "circle" => Ok(CurveSpec::UnitCircle),
            _ => {
                let dim = s
                    .strip_prefix("embedded:")
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown curve '{s}'")))?;
                if dim < 2 {
                    return Err(Error::InvalidParameter("embedding dimension must be at least 2".into()));
                }
                Ok(CurveSpec::EmbeddedCircle { dim })
            }
        }
    }
}

impl fmt::Display for CurveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveSpec::HalfCircle => f.write_str("half-circle"),
            CurveSpec::Cardioid => f.write_str("cardioid"),
            CurveSpec::UnitCircle => f.write_str("circle"),
            CurveSpec::EmbeddedCircle { dim } => write!(f, "embedded:{dim}"),
        }
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds `parts` into `base` one at a time.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

fn orthonormal_frame(dim: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    loop {
        let mut a: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let mut b: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 {
            continue;
        }
        a.iter_mut().for_each(|v| *v /= na);
        for _ in 0..2 {
            let proj: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            b.iter_mut().zip(&a).for_each(|(y, x)| *y -= proj * x);
        }
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nb > 1e-8 {
            b.iter_mut().for_each(|v| *v /= nb);
            return (a, b);
        }
    }
}

/// Draws `n` labels uniformly on the curve's domain and returns the points
/// (`dim x n`) with their labels.
pub fn generate(spec: CurveSpec, n: usize, seed: u64) -> Result<(DataMatrix, TimeLabels)> {
    if n < 2 {
        return Err(Error::TooFewPoints);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let end = spec.domain_end();
    let t: Vec<f64> = match spec.kind() {
        CurveKind::ClosedLoop => (0..n).map(|_| rng.gen_range(0.0..end)).collect(),
        CurveKind::OpenCurve => (0..n).map(|_| rng.gen_range(0.0..=end)).collect(),
    };
    let x = match spec {
        CurveSpec::EmbeddedCircle { dim } => {
            if dim < 2 {
                return Err(Error::InvalidParameter("embedding dimension must be at least 2".into()));
            }
            let (a, b) = orthonormal_frame(dim, &mut rng);
            DMatrix::from_fn(dim, n, |i, j| t[j].cos() * a[i] + t[j].sin() * b[i])
        }
        _ => {
            let pts: Vec<[f64; 2]> = t.iter().map(|&s| spec.planar_point(s).expect("planar curve")).collect();
            DMatrix::from_fn(2, n, |i, j| pts[j][i])
        }
    };
    Ok((DataMatrix::new(x)?, TimeLabels::new(t)?))
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        scale * v
    })
}

/// `x` plus i.i.d. `N(0, eps^2)` entries.
pub fn add_noise(x: &DataMatrix, eps: f64, seed: u64) -> Result<DataMatrix> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise level must be non-negative, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(x.clone());
    }
    DataMatrix::new(x.matrix() + gaussian_matrix(x.dim(), x.len(), eps, seed))
}

/// Gaussian noise rescaled so that `|x|_F^2 / |E|_F^2` equals `target_snr`.
pub fn snr_noise(x: &DataMatrix, target_snr: f64, seed: u64) -> Result<DataMatrix> {
    if !(target_snr.is_finite() && target_snr > 0.0) {
        return Err(Error::InvalidParameter(format!("target SNR must be positive, got {target_snr}")));
    }
    let signal = x.frobenius_norm();
    if signal.is_nan() || signal <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    let eps = signal / (target_snr * (x.dim() * x.len()) as f64).sqrt();
    let mut e = gaussian_matrix(x.dim(), x.len(), eps, seed);
    let realized = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    e *= signal / target_snr.sqrt() / realized;
    DataMatrix::new(e)
}

/// `x + E` with `E` from [`snr_noise`].
pub fn noise_for_snr(x: &DataMatrix, target_snr: f64, seed: u64) -> Result<DataMatrix> {
    let e = snr_noise(x, target_snr, seed)?;
    DataMatrix::new(x.matrix() + e.matrix())
}

/// Per-entry standard deviation that gives `target_snr` on average.
pub fn eps_for_snr(x: &DataMatrix, target_snr: f64) -> f64 {
    x.frobenius_norm() / (target_snr * (x.dim() * x.len()) as f64).sqrt()
}

/// Antisymmetric matrix of pairwise comparisons in `{-1, 0, 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonMatrix {
    c: DMatrix<f64>,
}

impl ComparisonMatrix {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        let n = c.nrows();
        if c.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c.ncols() });
        }
        for j in 0..n {
            for i in 0..n {
                let v = c[(i, j)];
                if !(v == -1.0 || v == 0.0 || v == 1.0) || v != -c[(j, i)] {
                    return Err(Error::InvalidParameter(format!("entry ({i}, {j}) breaks antisymmetry")));
                }
            }
        }
        Ok(Self { c })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.c.nrows() == 0
    }
}

/// `C(i, j) = 1{|z_i| < |z_j|} - 1{|z_i| > |z_j|}`, distances from the origin.
pub fn comparison_matrix(z: &DataMatrix) -> ComparisonMatrix {
    let norms: Vec<f64> = (0..z.len()).map(|i| z.point(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let c = DMatrix::from_fn(z.len(), z.len(), |i, j| {
        if norms[i] < norms[j] {
            1.0
        } else if norms[i] > norms[j] {
            -1.0
        } else {
            0.0
        }
    });
    ComparisonMatrix { c }
}

/// SerialRank: similarity `S = (N + C C^T) / 2`, unnormalized Laplacian
/// `D - S`, ranking by the sorted Fiedler vector.
pub fn serialrank_baseline(c: &ComparisonMatrix) -> Result<Ranking> {
    let n = c.len();
    if n < 2 {
        return Err(Error::TooFewPoints);
    }
    if c.matrix().iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateBaseline);
    }
    let nf = n as f64;
    let cm = c.matrix();
    // (N + C C^T) / 2, divided by N to keep the spectrum O(N)
    let mut s = cm * cm.transpose();
    s.iter_mut().for_each(|v| *v = (nf + *v) / (2.0 * nf));
    let degrees: Vec<f64> = s.column_iter().map(|col| col.sum()).collect();
    let mut l = -s;
    for (i, d) in degrees.iter().enumerate() {
        l[(i, i)] += d;
    }
    // Dense solve: the third eigenvalue of this Laplacian sits inside a tightly
    // packed band, which stalls restarted Krylov iterations.
    let eig = SymmetricEigen::new(l);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if n >= 3 {
        let (l2, l3) = (eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]);
        if l3 - l2 <= BASELINE_GAP * l3.abs().max(1.0) {
            return Err(Error::DegenerateBaseline);
        }
    }
    let mut fiedler: Vec<f64> = eig.eigenvectors.column(idx[1]).iter().copied().collect();
    fix_sign(&mut fiedler);
    Ranking::new(argsort(&fiedler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn half_circle_on_unit_circle() {
        let (x, t) = generate(CurveSpec::HalfCircle, 200, 3).unwrap();
        for i in 0..x.len() {
            let p = x.point(i);
            assert_abs_diff_eq!(p[0].hypot(p[1]), 1.0, epsilon = 1e-14);
            assert!((0.0..=PI).contains(&t.as_slice()[i]));
        }
    }

    #[test]
    fn cardioid_at_zero_is_origin() {
        let p = CurveSpec::Cardioid.planar_point(0.0).unwrap();
        assert_eq!(p, [0.0, 0.0]);
    }

    #[test]
    fn circle_antipodes() {
        let s = CurveSpec::UnitCircle;
        for t in [0.1, 1.2, 3.0] {
            let a = s.planar_point(t).unwrap();
            let b = s.planar_point(t + PI).unwrap();
            assert_abs_diff_eq!(a[0], -b[0], epsilon = 1e-15);
            assert_abs_diff_eq!(a[1], -b[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn embedded_circle_is_isometric() {
        let (x, t) = generate(CurveSpec::EmbeddedCircle { dim: 40 }, 30, 8).unwrap();
        assert_eq!(x.dim(), 40);
        for i in 0..5 {
            for j in 0..5 {
                let d2: f64 = x.point(i).iter().zip(x.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                let (ti, tj) = (t.as_slice()[i], t.as_slice()[j]);
                let planar = (ti.cos() - tj.cos()).powi(2) + (ti.sin() - tj.sin()).powi(2);
                assert_abs_diff_eq!(d2, planar, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        for spec in [CurveSpec::HalfCircle, CurveSpec::Cardioid, CurveSpec::UnitCircle, CurveSpec::EmbeddedCircle { dim: 7 }] {
            let a = generate(spec, 50, 11).unwrap();
            let b = generate(spec, 50, 11).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
            assert_ne!(a.1, generate(spec, 50, 12).unwrap().1);
        }
    }

    #[test]
    fn curve_names_round_trip() {
        for spec in [CurveSpec::HalfCircle, CurveSpec::Cardioid, CurveSpec::UnitCircle, CurveSpec::EmbeddedCircle { dim: 5000 }] {
            assert_eq!(spec.to_string().parse::<CurveSpec>().unwrap(), spec);
        }
        assert!("spiral".parse::<CurveSpec>().is_err());
        assert!("embedded:1".parse::<CurveSpec>().is_err());
    }

    #[test]
    fn zero_noise_is_exact() {
        let (x, _) = generate(CurveSpec::UnitCircle, 10, 1).unwrap();
        assert_eq!(add_noise(&x, 0.0, 5).unwrap(), x);
        assert_eq!(add_noise(&x, 0.3, 5).unwrap(), add_noise(&x, 0.3, 5).unwrap());
    }

    #[test]
    fn noise_variance() {
        let x = DataMatrix::new(DMatrix::zeros(2, 50_000)).unwrap();
        let eps = 0.37;
        let z = add_noise(&x, eps, 21).unwrap();
        let m = z.matrix();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m.len() - 1) as f64;
        assert!((var / (eps * eps) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn snr_rescaling_is_exact() {
        let (x, _) = generate(CurveSpec::Cardioid, 300, 2).unwrap();
        for target in [0.1, 1.0, 10.0, 100.0] {
            let e = snr_noise(&x, target, 4).unwrap();
            let ratio = x.frobenius_norm().powi(2) / e.frobenius_norm().powi(2);
            assert!((ratio / target - 1.0).abs() < 1e-12);
        }
        let e = snr_noise(&x, 1.0, 4).unwrap();
        assert_abs_diff_eq!(e.frobenius_norm(), x.frobenius_norm(), epsilon = 1e-12 * x.frobenius_norm());
        let zero = DataMatrix::new(DMatrix::zeros(2, 3)).unwrap();
        assert!(matches!(noise_for_snr(&zero, 1.0, 0), Err(Error::ZeroSignal)));
    }

    #[test]
    fn comparison_from_norms() {
        let norms = [1.0, 2.0, 3.0, 2.0];
        let z = DataMatrix::new(DMatrix::from_fn(2, 4, |i, j| if i == 0 { norms[j] } else { 0.0 })).unwrap();
        let c = comparison_matrix(&z);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if norms[i] < norms[j] {
                    1.0
                } else if norms[i] > norms[j] {
                    -1.0
                } else {
                    0.0
                };
                assert_eq!(c.matrix()[(i, j)], expect);
            }
        }
        assert_eq!(c.matrix()[(1, 3)], 0.0);
        assert!(ComparisonMatrix::new(c.matrix().clone()).is_ok());
    }

    #[test]
    fn comparison_rejects_non_antisymmetric() {
        assert!(ComparisonMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).is_err());
        assert!(ComparisonMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0])).is_err());
    }

    #[test]
    fn baseline_recovers_norm_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let norms: Vec<f64> = (0..20).map(|_| rng.gen_range(0.1..5.0)).collect();
        let z = DataMatrix::new(DMatrix::from_fn(2, 20, |i, j| if i == 0 { 0.0 } else { norms[j] })).unwrap();
        let ranking = serialrank_baseline(&comparison_matrix(&z)).unwrap();
        let truth = Ranking::new(argsort(&norms)).unwrap();
        let err = crate::metrics::err_open_rank(&truth, &ranking, 0.0).unwrap();
        assert_eq!(err.error, 0.0);
    }

    #[test]
    fn baseline_zero_comparisons() {
        let c = ComparisonMatrix::new(DMatrix::zeros(5, 5)).unwrap();
        assert!(matches!(serialrank_baseline(&c), Err(Error::DegenerateBaseline)));
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(7, &[3, 4]), derive_seed(7, &[3, 4]));
    }
}
