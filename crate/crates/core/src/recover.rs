//! Temporal labels and rankings from Fiedler eigenvectors.
//!
//! Open curves use the second eigenvector of the open-curve Laplacian, which
//! approximates `cos(t / 2)`; closed loops use the second and third
//! eigenvectors, which approximate `cos(t)` and `sin(t)` up to a common
//! rotation and reflection.

use std::f64::consts::TAU;

use crate::eigen::{smallest_eigenpairs, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::kernel::{build_kernel, build_laplacian, squared_distance};
use crate::types::{ranking_from_labels, wrap_angle, CurveKind, DataMatrix, KernelParams, Ranking, TimeLabels};

/// Below this squared norm a closed-loop point has no defined angle.
const DEGENERATE_NORM2: f64 = 1e-24;

#[derive(Clone, Debug)]
pub struct RecoveryOutput {
    pub labels: TimeLabels,
    pub ranking: Ranking,
    pub kind: CurveKind,
    /// Open curve: entries whose scaled eigenvector value fell outside `[-1, 1]`.
    pub clamped_count: usize,
    /// Closed loop: points where both eigenvector entries vanish; assigned label 0.
    pub degenerate: Vec<usize>,
}

/// Open-curve labels: `t_i = 2 arccos(v_i)` where `v = sqrt(N/2) f2` is the
/// unit-norm eigenvector rescaled to the amplitude of `cos(t_i / 2)` sampled
/// at uniform labels (whose squared norm is `N/2`). Values outside `[-1, 1]`
/// are clamped and counted.
pub fn recover_open(f2: &[f64]) -> Result<RecoveryOutput> {
    let n = f2.len();
    if n == 0 {
        return Err(Error::TooFewPoints);
    }
    let scale = (n as f64 / 2.0).sqrt();
    let mut clamped_count = 0;
    let angles = f2
        .iter()
        .map(|&f| {
            let v = scale * f;
            if v.abs() > 1.0 {
                clamped_count += 1;
            }
            2.0 * v.clamp(-1.0, 1.0).acos()
        })
        .collect();
    let labels = TimeLabels::new(angles)?;
    let ranking = ranking_from_labels(&labels);
    Ok(RecoveryOutput { labels, ranking, kind: CurveKind::OpenCurve, clamped_count, degenerate: Vec::new() })
}

/// Closed-loop labels: the angle whose cosine and sine are the normalized
/// pair `(f2(i), f3(i))`, in `[0, 2pi)`.
pub fn recover_closed(f2: &[f64], f3: &[f64]) -> Result<RecoveryOutput> {
    if f2.len() != f3.len() {
        return Err(Error::LengthMismatch { left: f2.len(), right: f3.len() });
    }
    if f2.is_empty() {
        return Err(Error::TooFewPoints);
    }
    let mut degenerate = Vec::new();
    let angles = f2
        .iter()
        .zip(f3)
        .enumerate()
        .map(|(i, (&c, &s))| {
            if c * c + s * s < DEGENERATE_NORM2 {
                degenerate.push(i);
                0.0
            } else {
                wrap_angle(s.atan2(c))
            }
        })
        .collect();
    if !degenerate.is_empty() {
        log::warn!("{} point(s) with vanishing eigenvector entries were assigned label 0", degenerate.len());
    }
    let labels = TimeLabels::new(angles)?;
    let ranking = ranking_from_labels(&labels);
    Ok(RecoveryOutput { labels, ranking, kind: CurveKind::ClosedLoop, clamped_count: 0, degenerate })
}

/// Suggested bandwidth for `n` points at noise magnitude `eps`:
/// `max(n^(-1/7), eps^(1/4))` for closed loops, `max(n^(-1/14), eps^(2/7))`
/// for open curves.
pub fn select_bandwidth(n: usize, eps: f64, kind: CurveKind) -> Result<KernelParams> {
    if n < 2 {
        return Err(Error::TooFewPoints);
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise level must be non-negative, got {eps}")));
    }
    let n = n as f64;
    let sigma = match kind {
        CurveKind::ClosedLoop => n.powf(-1.0 / 7.0).max(eps.powf(0.25)),
        CurveKind::OpenCurve => n.powf(-1.0 / 14.0).max(eps.powf(2.0 / 7.0)),
    };
    KernelParams::new(sigma)
}

/// Data-driven bandwidth heuristic (not part of the recovery theory): scans a
/// logarithmic grid of bandwidths and picks the one where
/// `d log(sum_ij exp(-|z_i - z_j|^2 / (2 sigma^2))) / d log(sigma)` peaks.
///
/// At most `MAX_POINTS` evenly spaced points enter the sum.
pub fn slope_bandwidth(z: &DataMatrix) -> Result<KernelParams> {
    const MAX_POINTS: usize = 1500;
    const GRID: usize = 81;

    let n = z.len();
    let step = n.div_ceil(MAX_POINTS);
    let idx: Vec<usize> = (0..n).step_by(step).collect();
    let mut sq = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            sq.push(squared_distance(z.point(i), z.point(j)));
        }
    }
    let mut sorted: Vec<f64> = sq.iter().copied().filter(|d| *d > 0.0).collect();
    if sorted.is_empty() {
        return Err(Error::InvalidParameter("all points coincide".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2].sqrt();

    // log10(sigma) from log10(median) - 3 to log10(median) + 1
    let log_sigma: Vec<f64> = (0..GRID).map(|g| median.log10() - 3.0 + 4.0 * g as f64 / (GRID - 1) as f64).collect();
    let log_sum: Vec<f64> = log_sigma
        .iter()
        .map(|ls| {
            let s2 = 2.0 * 10f64.powf(2.0 * ls);
            let off: f64 = sq.iter().map(|d| (-d / s2).exp()).sum();
            (idx.len() as f64 + 2.0 * off).ln()
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, log_sigma[GRID / 2]);
    for g in 1..GRID - 1 {
        let slope = (log_sum[g + 1] - log_sum[g - 1]) / ((log_sigma[g + 1] - log_sigma[g - 1]) * std::f64::consts::LN_10);
        if slope > best.0 {
            best = (slope, log_sigma[g]);
        }
    }
    KernelParams::new(10f64.powf(best.1))
}

/// Result of the full spectral recovery on a data matrix.
#[derive(Clone, Debug)]
pub struct SpectralRecovery {
    pub output: RecoveryOutput,
    pub sigma: f64,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Kernel, Laplacian, eigenvectors and label recovery end to end.
pub fn recover(z: &DataMatrix, kind: CurveKind, params: KernelParams, tol: f64) -> Result<SpectralRecovery> {
    let laplacian = build_laplacian(build_kernel(z, params), kind)?;
    let k = match kind {
        CurveKind::OpenCurve => 2,
        CurveKind::ClosedLoop => 3,
    };
    let spectrum = smallest_eigenpairs(&laplacian, k.min(z.len()), tol)?;
    let output = match kind {
        CurveKind::OpenCurve => recover_open(spectrum.vector(1))?,
        CurveKind::ClosedLoop => {
            if spectrum.len() < 3 {
                return Err(Error::TooFewPoints);
            }
            recover_closed(spectrum.vector(1), spectrum.vector(2))?
        }
    };
    Ok(SpectralRecovery {
        output,
        sigma: params.sigma(),
        eigenvalues: spectrum.eigenvalues,
        residuals: spectrum.residuals,
    })
}

/// [`recover`] with the default eigensolver tolerance.
pub fn recover_default(z: &DataMatrix, kind: CurveKind, params: KernelParams) -> Result<SpectralRecovery> {
    recover(z, kind, params, DEFAULT_TOL)
}

/// Rescales labels drawn from `[0, domain_end]` onto `[0, 2pi]`.
pub fn normalize_labels(t: &[f64], domain_end: f64) -> Result<TimeLabels> {
    if !(domain_end.is_finite() && domain_end > 0.0) {
        return Err(Error::InvalidParameter(format!("domain end must be positive, got {domain_end}")));
    }
    TimeLabels::new(t.iter().map(|v| (v / domain_end * TAU).min(TAU)).collect())
}
