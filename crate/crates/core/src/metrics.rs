//! Alignment-invariant label and ranking errors, relative error and SNR.
//!
//! Closed-loop errors are minimized over rotations (or cyclic shifts) and
//! reflection. Open-curve errors are minimized over reflection only and are
//! restricted to an interior window selected by the first (true) argument.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{argsort, wrap_angle, DataMatrix, Ranking, TimeLabels};

/// Fraction of the label range excluded at each end by default.
pub const DEFAULT_DELTA_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentReport {
    pub error: f64,
    /// `+1` for the direct branch, `-1` for the reflected one.
    pub r: i8,
    /// Rotation in `[0, 2pi)`; zero for open-curve metrics.
    pub theta: f64,
    /// Cyclic shift of the ranking; zero except for closed-loop rankings.
    pub shift: usize,
}

/// Default interior margin for labels spanning `[0, range]`.
pub fn default_delta(range: f64) -> f64 {
    DEFAULT_DELTA_FRACTION * range
}

/// Signed representative of `a` in `(-pi, pi]`.
pub fn centered_angle(a: f64) -> f64 {
    let w = wrap_angle(a);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

/// `min_{r, theta} max_i |[r t_i + theta - t2_i]|` with `[.]` the signed
/// circular residual.
///
/// For a fixed `r` this is the one-center problem for the residual angles
/// `d_i = t2_i - r t_i` on the circle: the optimal `theta` is the midpoint of
/// the shortest arc covering all `d_i`, i.e. the complement of the largest gap.
pub fn err_closed_time(t: &TimeLabels, t2: &TimeLabels) -> Result<AlignmentReport> {
    check_lengths(t.len(), t2.len())?;
    if t.is_empty() {
        return Err(Error::TooFewPoints);
    }
    let mut best: Option<AlignmentReport> = None;
    for r in [1i8, -1] {
        let mut d: Vec<f64> =
            t.as_slice().iter().zip(t2.as_slice()).map(|(&a, &b)| wrap_angle(b - f64::from(r) * a)).collect();
        d.sort_by(f64::total_cmp);
        let n = d.len();
        // gap after d[n-1] wraps around to d[0]
        let mut gap = d[0] + TAU - d[n - 1];
        let mut start = 0;
        for i in 1..n {
            let g = d[i] - d[i - 1];
            if g > gap {
                gap = g;
                start = i;
            }
        }
        let arc = TAU - gap;
        let report =
            AlignmentReport { error: (arc / 2.0).clamp(0.0, PI), r, theta: wrap_angle(d[start] + arc / 2.0), shift: 0 };
        if best.is_none_or(|b| report.error < b.error) {
            best = Some(report);
        }
    }
    Ok(best.expect("two branches evaluated"))
}

/// Worst-case residual of a given alignment, for checking reports.
pub fn closed_time_residual(t: &TimeLabels, t2: &TimeLabels, r: i8, theta: f64) -> Result<f64> {
    check_lengths(t.len(), t2.len())?;
    Ok(t.as_slice()
        .iter()
        .zip(t2.as_slice())
        .map(|(&a, &b)| centered_angle(f64::from(r) * a + theta - b).abs())
        .fold(0.0, f64::max))
}

/// Cyclic ranking error normalized by `N`: with 1-based ranks, the minimum
/// over `pi~ in {pi, N - pi}` and shifts `n in 1..=N` of
/// `max_i min_{j in {0, +-1}} |pi~(i) + n + jN - pi2(i)| / N`.
///
/// Brute force over all `2N` alignments. The reported `shift` is `n`.
pub fn err_closed_rank(p: &Ranking, p2: &Ranking) -> Result<AlignmentReport> {
    check_lengths(p.len(), p2.len())?;
    let n = p.len();
    if n == 0 {
        return Err(Error::TooFewPoints);
    }
    let ni = n as i64;
    let a: Vec<i64> = p.ranks().iter().map(|&x| x as i64 + 1).collect();
    let b: Vec<i64> = p2.ranks().iter().map(|&x| x as i64 + 1).collect();
    let mut best_count = i64::MAX;
    let mut best = AlignmentReport { error: f64::INFINITY, r: 1, theta: 0.0, shift: 0 };
    for r in [1i8, -1] {
        let base: Vec<i64> = a.iter().map(|&x| if r == 1 { x } else { ni - x }).collect();
        for shift in 1..=ni {
            let mut worst = 0i64;
            for (&x, &y) in base.iter().zip(&b) {
                let diff = x + shift - y;
                worst = worst.max(diff.abs().min((diff + ni).abs()).min((diff - ni).abs()));
                if worst >= best_count {
                    break;
                }
            }
            if worst < best_count {
                best_count = worst;
                best = AlignmentReport { error: worst as f64 / n as f64, r, theta: 0.0, shift: shift as usize };
            }
        }
    }
    Ok(best)
}

/// Open-curve label error over the interior `delta < t_i < 2pi - delta` of
/// the true labels `t`, minimized over the reflection `t -> 2pi - t`.
pub fn err_open_time(t: &TimeLabels, t2: &TimeLabels, delta: f64) -> Result<AlignmentReport> {
    check_lengths(t.len(), t2.len())?;
    if !(delta.is_finite() && (0.0..PI).contains(&delta)) {
        return Err(Error::InvalidParameter(format!("delta must lie in [0, pi), got {delta}")));
    }
    let mut direct = 0.0f64;
    let mut reflected = 0.0f64;
    let mut any = false;
    for (&a, &b) in t.as_slice().iter().zip(t2.as_slice()) {
        if a > delta && a < TAU - delta {
            any = true;
            direct = direct.max((a - b).abs());
            reflected = reflected.max((TAU - a - b).abs());
        }
    }
    if !any {
        return Err(Error::EmptyInterior);
    }
    Ok(if reflected < direct {
        AlignmentReport { error: reflected, r: -1, theta: 0.0, shift: 0 }
    } else {
        AlignmentReport { error: direct, r: 1, theta: 0.0, shift: 0 }
    })
}

/// Open-curve ranking error, in positions, over the interior
/// `N delta <= pi(i) <= N (1 - delta)` of the true ranking (1-based ranks),
/// minimized over reflection.
///
/// With 0-based ranks the reflected position is `N - 1 - pi(i)`, so an
/// exactly reversed ranking scores 0.
pub fn err_open_rank(p: &Ranking, p2: &Ranking, delta: f64) -> Result<AlignmentReport> {
    check_lengths(p.len(), p2.len())?;
    if !(delta.is_finite() && (0.0..=0.5).contains(&delta)) {
        return Err(Error::InvalidParameter(format!("delta must lie in [0, 1/2], got {delta}")));
    }
    let n = p.len();
    let nf = n as f64;
    let a = p.ranks();
    let b = p2.ranks();
    let mut direct = 0usize;
    let mut reflected = 0usize;
    let mut any = false;
    for (&x, &y) in a.iter().zip(&b) {
        let one_based = (x + 1) as f64;
        if one_based >= nf * delta && one_based <= nf * (1.0 - delta) {
            any = true;
            direct = direct.max(x.abs_diff(y));
            reflected = reflected.max((n - 1 - x).abs_diff(y));
        }
    }
    if !any {
        return Err(Error::EmptyInterior);
    }
    Ok(if reflected < direct {
        AlignmentReport { error: reflected as f64, r: -1, theta: 0.0, shift: 0 }
    } else {
        AlignmentReport { error: direct as f64, r: 1, theta: 0.0, shift: 0 }
    })
}

fn permuted_columns(x: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), order.len(), |i, k| x[(i, order[k])])
}

fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `|p2 o X - p o X|_F / |X|_F`, where `p o X` lists the columns of `X` in
/// the ranking's order.
pub fn relative_error(x: &DataMatrix, p: &Ranking, p2: &Ranking) -> Result<f64> {
    check_lengths(x.len(), p.len())?;
    check_lengths(x.len(), p2.len())?;
    let norm = x.frobenius_norm();
    if norm.is_nan() || norm <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    let m = x.matrix();
    let diff = permuted_columns(m, p2.order()) - permuted_columns(m, p.order());
    Ok(frobenius(&diff) / norm)
}

/// Relative error for open curves: restricted to points whose true label lies
/// strictly inside `(delta, 2pi - delta)`, and minimized over the two
/// orientations of the estimate.
pub fn relative_error_interior(x: &DataMatrix, truth: &TimeLabels, estimate: &Ranking, delta: f64) -> Result<f64> {
    check_lengths(x.len(), truth.len())?;
    check_lengths(x.len(), estimate.len())?;
    let keep: Vec<bool> = truth.as_slice().iter().map(|&t| t > delta && t < TAU - delta).collect();
    let idx: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    if idx.is_empty() {
        return Err(Error::EmptyInterior);
    }
    let sub = DataMatrix::new(permuted_columns(x.matrix(), &idx))?;
    let sub_truth: Vec<f64> = idx.iter().map(|&i| truth.as_slice()[i]).collect();
    let truth_rank = Ranking::new(argsort(&sub_truth))?;
    let est = estimate.restrict(&keep)?;
    let forward = relative_error(&sub, &truth_rank, &est)?;
    let backward = relative_error(&sub, &truth_rank, &est.reversed())?;
    Ok(forward.min(backward))
}

/// Relative error for closed loops: [`relative_error`] minimized over cyclic
/// shifts and reversal of the estimate, since a loop has no start or
/// orientation. Costs `O(N^2 d)`.
pub fn relative_error_cyclic(x: &DataMatrix, p: &Ranking, p2: &Ranking) -> Result<f64> {
    check_lengths(x.len(), p.len())?;
    check_lengths(x.len(), p2.len())?;
    let norm = x.frobenius_norm();
    if norm.is_nan() || norm <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    let n = x.len();
    let truth = p.order();
    let best = [p2.order().to_vec(), p2.reversed().into_vec()]
        .par_iter()
        .flat_map(|est| {
            (0..n).into_par_iter().map(move |s| {
                let mut acc = 0.0;
                for k in 0..n {
                    let (a, b) = (x.point(est[(k + s) % n]), x.point(truth[k]));
                    acc += a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
                }
                acc
            })
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best.sqrt() / norm)
}

/// `|X|_F^2 / |E|_F^2`; infinite when `E` vanishes.
pub fn snr(x: &DataMatrix, e: &DataMatrix) -> Result<f64> {
    if x.dim() != e.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: e.dim() });
    }
    check_lengths(x.len(), e.len())?;
    let signal = x.frobenius_norm().powi(2);
    let noise = e.frobenius_norm().powi(2);
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(signal / noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn labels(v: &[f64]) -> TimeLabels {
        TimeLabels::new(v.to_vec()).unwrap()
    }

    fn grid_oracle(t: &TimeLabels, t2: &TimeLabels, steps: usize) -> f64 {
        let mut best = f64::INFINITY;
        for r in [1i8, -1] {
            for k in 0..steps {
                let theta = TAU * k as f64 / steps as f64;
                best = best.min(closed_time_residual(t, t2, r, theta).unwrap());
            }
        }
        best
    }

    // direct transcription: explicit reflection flag, j enumerated
    fn rank_oracle(p: &Ranking, p2: &Ranking) -> f64 {
        let n = p.len() as i64;
        let a: Vec<i64> = p.ranks().iter().map(|&x| x as i64 + 1).collect();
        let b: Vec<i64> = p2.ranks().iter().map(|&x| x as i64 + 1).collect();
        let mut best = i64::MAX;
        for refl in [false, true] {
            for shift in 1..=n {
                let mut worst = 0;
                for i in 0..a.len() {
                    let pi = if refl { n - a[i] } else { a[i] };
                    let e = [-1, 0, 1].iter().map(|j| (pi + shift + j * n - b[i]).abs()).min().unwrap();
                    worst = worst.max(e);
                }
                best = best.min(worst);
            }
        }
        best as f64 / n as f64
    }

    #[test]
    fn closed_time_identity_and_rotation() {
        let t = labels(&[0.1, 1.0, 2.5, 4.0, 6.0]);
        assert_abs_diff_eq!(err_closed_time(&t, &t).unwrap().error, 0.0, epsilon = 1e-12);
        let rotated = TimeLabels::wrapped(t.as_slice().iter().map(|v| v + 0.3).collect()).unwrap();
        assert_abs_diff_eq!(err_closed_time(&t, &rotated).unwrap().error, 0.0, epsilon = 1e-12);
        let reflected = TimeLabels::wrapped(t.as_slice().iter().map(|v| 1.7 - v).collect()).unwrap();
        let rep = err_closed_time(&t, &reflected).unwrap();
        assert_abs_diff_eq!(rep.error, 0.0, epsilon = 1e-12);
        assert_eq!(rep.r, -1);
    }

    #[test]
    fn closed_time_two_points() {
        let t = labels(&[0.0, FRAC_PI_2]);
        let t2 = labels(&[0.0, FRAC_PI_2 + 0.1]);
        let rep = err_closed_time(&t, &t2).unwrap();
        assert_abs_diff_eq!(rep.error, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(centered_angle(rep.theta).abs(), 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(grid_oracle(&t, &t2, 628_319), 0.05, epsilon = 1e-5);
    }

    #[test]
    fn closed_time_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.gen_range(1..12);
            let t = labels(&(0..n).map(|_| rng.gen_range(0.0..TAU)).collect::<Vec<_>>());
            let t2 = labels(&(0..n).map(|_| rng.gen_range(0.0..TAU)).collect::<Vec<_>>());
            let rep = err_closed_time(&t, &t2).unwrap();
            let steps = 100_000;
            assert!((rep.error - grid_oracle(&t, &t2, steps)).abs() <= TAU / steps as f64);
            let realized = closed_time_residual(&t, &t2, rep.r, rep.theta).unwrap();
            assert_abs_diff_eq!(realized, rep.error, epsilon = 1e-12);
            assert!(rep.error <= PI);
        }
    }

    #[test]
    fn closed_time_length_mismatch() {
        assert!(matches!(
            err_closed_time(&labels(&[0.0]), &labels(&[0.0, 1.0])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn closed_rank_examples() {
        let p = Ranking::new(vec![3, 0, 6, 1, 7, 2, 5, 4]).unwrap();
        assert_eq!(err_closed_rank(&p, &p).unwrap().error, 0.0);

        let mut shifted = p.order().to_vec();
        shifted.rotate_left(1);
        let shifted = Ranking::new(shifted).unwrap();
        assert_eq!(err_closed_rank(&p, &shifted).unwrap().error, 0.0);

        let mut swapped = p.order().to_vec();
        swapped.swap(3, 4);
        let swapped = Ranking::new(swapped).unwrap();
        assert_abs_diff_eq!(err_closed_rank(&p, &swapped).unwrap().error, 1.0 / 8.0, epsilon = 0.0);
        assert_abs_diff_eq!(rank_oracle(&p, &swapped), 1.0 / 8.0, epsilon = 0.0);

        assert_eq!(err_closed_rank(&p, &p.reversed()).unwrap().error, 0.0);
    }

    #[test]
    fn closed_rank_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.gen_range(1..15);
            let mut a: Vec<usize> = (0..n).collect();
            let mut b = a.clone();
            rand::seq::SliceRandom::shuffle(a.as_mut_slice(), &mut rng);
            rand::seq::SliceRandom::shuffle(b.as_mut_slice(), &mut rng);
            let (p, p2) = (Ranking::new(a).unwrap(), Ranking::new(b).unwrap());
            assert_eq!(err_closed_rank(&p, &p2).unwrap().error, rank_oracle(&p, &p2));
        }
    }

    #[test]
    fn open_time_examples() {
        let t = labels(&[0.3, 1.0, 2.0, 5.0]);
        assert_eq!(err_open_time(&t, &t, 0.1).unwrap().error, 0.0);
        let refl = labels(&t.as_slice().iter().map(|v| TAU - v).collect::<Vec<_>>());
        let rep = err_open_time(&t, &refl, 0.1).unwrap();
        assert_abs_diff_eq!(rep.error, 0.0, epsilon = 1e-15);
        assert_eq!(rep.r, -1);

        let t = labels(&[0.01, 1.0, 2.0, 6.27]);
        let t2 = labels(&[3.0, 1.1, 2.0, 3.0]);
        assert_abs_diff_eq!(err_open_time(&t, &t2, 0.1).unwrap().error, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn open_time_asymmetry_and_empty() {
        let t = labels(&[0.01, 1.0]);
        let t2 = labels(&[1.0, 0.01]);
        // interior chosen by the first argument only
        assert_abs_diff_eq!(err_open_time(&t, &t2, 0.1).unwrap().error, 0.99, epsilon = 1e-15);
        assert!(matches!(err_open_time(&labels(&[0.01, 6.25]), &t2, 0.1), Err(Error::EmptyInterior)));
        assert!(err_open_time(&t, &t2, PI).is_err());
    }

    #[test]
    fn open_rank_examples() {
        let p = Ranking::new(vec![4, 9, 1, 0, 7, 3, 8, 2, 6, 5]).unwrap();
        assert_eq!(err_open_rank(&p, &p, 0.2).unwrap().error, 0.0);
        let rep = err_open_rank(&p, &p.reversed(), 0.2).unwrap();
        assert_eq!((rep.error, rep.r), (0.0, -1));

        // positions 5 and 6 (1-based) exchanged
        let mut swapped = p.order().to_vec();
        swapped.swap(4, 5);
        let swapped = Ranking::new(swapped).unwrap();
        assert_eq!(err_open_rank(&p, &swapped, 0.2).unwrap().error, 1.0);
    }

    #[test]
    fn open_rank_boundary_excluded() {
        let p = Ranking::identity(10);
        let mut swapped = p.order().to_vec();
        swapped.swap(0, 9);
        let swapped = Ranking::new(swapped).unwrap();
        assert_eq!(err_open_rank(&p, &swapped, 0.2).unwrap().error, 0.0);
        // direct branch 9, reflected branch 7
        assert_eq!(err_open_rank(&p, &swapped, 0.0).unwrap().error, 7.0);
    }

    #[test]
    fn relative_error_examples() {
        let x = DataMatrix::new(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 4.0, 0.0, 1.0, 1.0])).unwrap();
        let p = Ranking::identity(3);
        assert_eq!(relative_error(&x, &p, &p).unwrap(), 0.0);
        // swapping columns 0 and 1: difference columns (1,1), (-1,-1), 0
        let p2 = Ranking::new(vec![1, 0, 2]).unwrap();
        let expect = 4.0f64.sqrt() / 23.0f64.sqrt();
        assert_abs_diff_eq!(relative_error(&x, &p, &p2).unwrap(), expect, epsilon = 1e-15);

        let same = DataMatrix::new(DMatrix::from_element(3, 4, 2.0)).unwrap();
        let q = Ranking::new(vec![2, 0, 3, 1]).unwrap();
        assert_eq!(relative_error(&same, &Ranking::identity(4), &q).unwrap(), 0.0);

        let zero = DataMatrix::new(DMatrix::zeros(2, 3)).unwrap();
        assert!(matches!(relative_error(&zero, &p, &p2), Err(Error::ZeroNorm)));
    }

    #[test]
    fn interior_relative_error_ignores_orientation() {
        let t = labels(&[0.05, 1.0, 2.0, 3.0, 4.0, 6.25]);
        let x = DataMatrix::new(DMatrix::from_fn(2, 6, |i, j| (t.as_slice()[j] + i as f64).sin())).unwrap();
        let truth = crate::types::ranking_from_labels(&t);
        assert_eq!(relative_error_interior(&x, &t, &truth, 0.1).unwrap(), 0.0);
        assert_eq!(relative_error_interior(&x, &t, &truth.reversed(), 0.1).unwrap(), 0.0);
    }

    #[test]
    fn cyclic_relative_error_quotients() {
        let t: Vec<f64> = (0..12).map(|k| k as f64 * TAU / 12.0).collect();
        let x = DataMatrix::new(DMatrix::from_fn(2, 12, |i, j| if i == 0 { t[j].cos() } else { t[j].sin() })).unwrap();
        let p = Ranking::identity(12);
        let mut shifted = p.order().to_vec();
        shifted.rotate_left(5);
        let shifted = Ranking::new(shifted).unwrap();
        assert_abs_diff_eq!(relative_error_cyclic(&x, &p, &shifted).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(relative_error_cyclic(&x, &p, &shifted.reversed()).unwrap(), 0.0, epsilon = 1e-15);
        assert!(relative_error(&x, &p, &shifted).unwrap() > 0.5);
        let mut swapped = p.order().to_vec();
        swapped.swap(3, 4);
        let swapped = Ranking::new(swapped).unwrap();
        let direct = relative_error(&x, &p, &swapped).unwrap();
        assert_abs_diff_eq!(relative_error_cyclic(&x, &p, &swapped).unwrap(), direct, epsilon = 1e-15);
    }

    #[test]
    fn snr_examples() {
        let x = DataMatrix::new(DMatrix::from_fn(5, 5, |i, j| (i * 5 + j) as f64 - 7.0)).unwrap();
        assert_abs_diff_eq!(snr(&x, &x).unwrap(), 1.0, epsilon = 1e-15);
        let tenth = DataMatrix::new(x.matrix() / 10.0).unwrap();
        assert_abs_diff_eq!(snr(&x, &tenth).unwrap(), 100.0, epsilon = 1e-10);
        let zero = DataMatrix::new(DMatrix::zeros(5, 5)).unwrap();
        assert_eq!(snr(&x, &zero).unwrap(), f64::INFINITY);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut sa = 0.0;
        let mut sb = 0.0;
        for k in 0..25 {
            sa += a[k] * a[k];
            sb += b[k] * b[k];
        }
        let xa = DataMatrix::new(DMatrix::from_vec(5, 5, a)).unwrap();
        let xb = DataMatrix::new(DMatrix::from_vec(5, 5, b)).unwrap();
        assert_abs_diff_eq!(snr(&xa, &xb).unwrap(), sa / sb, epsilon = 1e-12);
    }
}
