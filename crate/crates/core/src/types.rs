//! Shared domain types: data matrices, temporal labels, rankings.
//!
//! Matrices are stored column-per-point: a `d x N` matrix holds `N` points of
//! dimension `d`, and column `i` is point `i`. Angles are always radians.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Checks that every entry is finite and that there are at least two points.
pub fn validate_matrix(m: &DMatrix<f64>) -> Result<()> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Err(Error::NonFiniteEntry { row, col });
            }
        }
    }
    if m.ncols() < 2 {
        return Err(Error::TooFewPoints);
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidParameter("feature dimension must be at least 1".into()));
    }
    Ok(())
}

/// `d x N` matrix of observations, one point per column.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        validate_matrix(&values)?;
        Ok(Self { values })
    }

    /// Builds a matrix from a list of points of equal dimension.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len();
        let d = points.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * d);
        for p in points {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            data.extend_from_slice(p);
        }
        Self::new(DMatrix::from_vec(d, n, data))
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Number of points `N`.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values.as_slice()[i * d..(i + 1) * d]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Temporal labels in radians, every entry in `[0, 2pi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeLabels {
    angles: Vec<f64>,
}

impl TimeLabels {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        for (index, &value) in angles.iter().enumerate() {
            if !value.is_finite() || !(0.0..=TAU).contains(&value) {
                return Err(Error::LabelOutOfRange { index, value });
            }
        }
        Ok(Self { angles })
    }

    /// Reduces arbitrary finite angles into `[0, 2pi)`.
    pub fn wrapped(angles: Vec<f64>) -> Result<Self> {
        let angles = angles
            .into_iter()
            .enumerate()
            .map(|(index, a)| {
                if a.is_finite() {
                    Ok(wrap_angle(a))
                } else {
                    Err(Error::LabelOutOfRange { index, value: a })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { angles })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.angles
    }
}

/// Maps an angle into `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// A permutation giving ascending temporal order.
///
/// `order()[k]` is the index of the point at position `k`; `ranks()` is the
/// inverse permutation, the position of each point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ranking {
    order: Vec<usize>,
}

impl Ranking {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        check_permutation(&order)?;
        Ok(Self { order })
    }

    /// Builds a ranking from per-point positions.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        check_permutation(ranks)?;
        let mut order = vec![0; ranks.len()];
        for (i, &r) in ranks.iter().enumerate() {
            order[r] = i;
        }
        Ok(Self { order })
    }

    pub fn identity(n: usize) -> Self {
        Self { order: (0..n).collect() }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (pos, &i) in self.order.iter().enumerate() {
            ranks[i] = pos;
        }
        ranks
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Opposite orientation.
    pub fn reversed(&self) -> Self {
        Self { order: self.order.iter().rev().copied().collect() }
    }

    /// Keeps only points with `keep[i] == true`, re-indexed `0..m` in
    /// ascending original-index order, preserving relative order.
    pub fn restrict(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.len() {
            return Err(Error::LengthMismatch { left: self.len(), right: keep.len() });
        }
        let mut new_index = vec![usize::MAX; keep.len()];
        let mut next = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                new_index[i] = next;
                next += 1;
            }
        }
        let order = self.order.iter().filter(|&&i| keep[i]).map(|&i| new_index[i]).collect();
        Ok(Self { order })
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.order
    }
}

fn check_permutation(p: &[usize]) -> Result<()> {
    let n = p.len();
    let mut seen = vec![false; n];
    for &v in p {
        if v >= n || seen[v] {
            return Err(Error::NotAPermutation(n));
        }
        seen[v] = true;
    }
    Ok(())
}

/// Stable ascending sort of the labels; ties keep ascending index order.
pub fn ranking_from_labels(t: &TimeLabels) -> Ranking {
    Ranking { order: argsort(t.as_slice()) }
}

/// Indices that sort `values` ascending, stable on ties. Values must not be NaN.
pub(crate) fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CurveKind {
    /// Two distinct endpoints, labels identifiable up to reflection.
    OpenCurve,
    /// Periodic trajectory, labels identifiable up to rotation and reflection.
    ClosedLoop,
}

impl FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(CurveKind::OpenCurve),
            "closed" => Ok(CurveKind::ClosedLoop),
            other => Err(Error::InvalidParameter(format!("unknown curve kind '{other}'"))),
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveKind::OpenCurve => f.write_str("open"),
            CurveKind::ClosedLoop => f.write_str("closed"),
        }
    }
}

/// Gaussian kernel bandwidth, in the same length units as the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    sigma: f64,
}

impl KernelParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Self { sigma })
        } else {
            Err(Error::InvalidParameter(format!("bandwidth must be positive, got {sigma}")))
        }
    }

    /// From the squared bandwidth.
    pub fn from_sigma2(sigma2: f64) -> Result<Self> {
        if sigma2.is_finite() && sigma2 > 0.0 {
            Self::new(sigma2.sqrt())
        } else {
            Err(Error::InvalidParameter(format!("squared bandwidth must be positive, got {sigma2}")))
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}
