//! Vectors of the nonnegative orthant, the three coordinatewise orders, and
//! validated reflection matrices `R = I - P^t`.

use std::fmt;
use std::ops::Index;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::Matrix;

/// Largest supported dimension.
pub const MAX_DIM: usize = 64;

/// Entries of `R^{-1}` above this count as strictly positive in the H2 scan.
pub const H2_THRESHOLD: f64 = 1e-12;

const SPECTRAL_TOL: f64 = 1e-15;
const MAX_SQUARINGS: usize = 10_000;
const RHO_MARGIN: f64 = 1e-8;
const NEUMANN_AGREEMENT: f64 = 1e-8;
const INVERSE_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrthantError {
    #[error("dimension must be in 1..={MAX_DIM}, got {0}")]
    InvalidDimension(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("matrix is not square")]
    NotSquare,
    #[error("P[{i}][{j}] = {value} is negative")]
    OffDiagonalNegative { i: usize, j: usize, value: f64 },
    #[error("P[{i}][{i}] = {value} must be zero")]
    DiagonalNonzero { i: usize, value: f64 },
    #[error("spectral radius estimate {rho} is not below 1")]
    SpectralRadiusNotLessThanOne { rho: f64 },
    #[error("spectral radius iteration did not settle; last estimate {estimate}")]
    SpectralRadiusNonConvergence { estimate: f64 },
    #[error("inverse of R failed validation: {reason} (residual {residual:e})")]
    InverseInconsistent { reason: &'static str, residual: f64 },
}

impl OrthantError {
    /// Stable variant name for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidDimension(_) => "InvalidDimension",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::NonFinite(_) => "NonFinite",
            Self::NotSquare => "NotSquare",
            Self::OffDiagonalNegative { .. } => "OffDiagonalNegative",
            Self::DiagonalNonzero { .. } => "DiagonalNonzero",
            Self::SpectralRadiusNotLessThanOne { .. } => "SpectralRadiusNotLessThanOne",
            Self::SpectralRadiusNonConvergence { .. } => "SpectralRadiusNonConvergence",
            Self::InverseInconsistent { .. } => "InverseInconsistent",
        }
    }
}

/// A finite vector in `R^d`, `1 <= d <= 64`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct OrthantVector(Vec<f64>);

impl OrthantVector {
    pub fn new(entries: Vec<f64>) -> Result<Self, OrthantError> {
        if entries.is_empty() || entries.len() > MAX_DIM {
            return Err(OrthantError::InvalidDimension(entries.len()));
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(OrthantError::NonFinite(i));
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn splat(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    /// Wraps entries produced by internal arithmetic on already validated data.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| v.is_finite()));
        Self(entries)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        is_zero(&self.0, tol)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|a| -a).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }
}

impl Index<usize> for OrthantVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for OrthantVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Strongest coordinatewise relation of `x` to `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OrderRelation {
    /// `x >> y`: strictly larger in every coordinate.
    Gg,
    /// `x > y`: `x >= y` and strictly larger somewhere.
    Gt,
    /// `x >= y`.
    Geq,
    None,
}

pub fn order(x: &OrthantVector, y: &OrthantVector, tol: f64) -> Result<OrderRelation, OrthantError> {
    if x.dim() != y.dim() {
        return Err(OrthantError::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    let (x, y) = (x.as_slice(), y.as_slice());
    Ok(if strictly_dominates(x, y, tol) {
        OrderRelation::Gg
    } else if partially_dominates(x, y, tol) {
        OrderRelation::Gt
    } else if dominates(x, y, tol) {
        OrderRelation::Geq
    } else {
        OrderRelation::None
    })
}

/// `x >> y` with tolerance.
#[inline]
pub fn strictly_dominates(x: &[f64], y: &[f64], tol: f64) -> bool {
    x.iter().zip(y).all(|(a, b)| *a > b + tol)
}

/// `x >= y` with tolerance.
#[inline]
pub fn dominates(x: &[f64], y: &[f64], tol: f64) -> bool {
    x.iter().zip(y).all(|(a, b)| *a >= b - tol)
}

/// `x > y` with tolerance.
#[inline]
pub fn partially_dominates(x: &[f64], y: &[f64], tol: f64) -> bool {
    dominates(x, y, tol) && x.iter().zip(y).any(|(a, b)| *a > b + tol)
}

#[inline]
pub fn strictly_positive(x: &[f64], tol: f64) -> bool {
    x.iter().all(|a| *a > tol)
}

#[inline]
pub fn is_zero(x: &[f64], tol: f64) -> bool {
    x.iter().all(|a| a.abs() <= tol)
}

/// Some coordinate within `tol` of zero, i.e. the point lies on the orthant boundary.
#[inline]
pub fn on_boundary(x: &[f64], tol: f64) -> bool {
    x.iter().any(|a| *a <= tol)
}

#[inline]
pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[inline]
pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Spectral radius of a nonnegative square matrix.
///
/// Uses normalized repeated squaring, `rho = lim ||P^(2^k)||^(1/2^k)`, which
/// settles to machine precision within a few dozen squarings and is unaffected
/// by periodic or defective (nilpotent) structure.
pub fn spectral_radius(p: &Matrix) -> Result<f64, OrthantError> {
    if p.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(OrthantError::NonFinite(0));
    }
    let mut b = p.clone();
    let mut norm = b.norm_inf();
    if norm == 0.0 {
        return Ok(0.0);
    }
    // log ||P^(2^k)|| = log_scale + ln(norm of the normalized iterate)
    let mut log_scale = 0.0_f64;
    let mut exponent = 1.0_f64;
    let mut estimate = norm;
    let mut settled_steps = 0;
    for _ in 0..MAX_SQUARINGS {
        b = b.scale(1.0 / norm);
        log_scale += norm.ln();
        b = b.mul(&b);
        log_scale *= 2.0;
        exponent *= 2.0;
        norm = b.norm_inf();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = ((log_scale + norm.ln()) / exponent).exp();
        if !next.is_finite() || !exponent.is_finite() {
            return Err(OrthantError::SpectralRadiusNonConvergence { estimate });
        }
        // A nilpotent P vanishes once 2^k >= d; earlier plateaus can be
        // coincidences (e.g. a chain with equal weights).
        let settled = exponent >= p.dim() as f64
            && (next - estimate).abs() <= SPECTRAL_TOL * next.max(f64::MIN_POSITIVE);
        estimate = next;
        if settled {
            settled_steps += 1;
            if settled_steps == 2 {
                return Ok(estimate);
            }
        } else {
            settled_steps = 0;
        }
    }
    Err(OrthantError::SpectralRadiusNonConvergence { estimate })
}

/// `R = I - P^t` together with its validated inverse.
#[derive(Debug, Clone, Serialize)]
pub struct ReflectionMatrix {
    dim: usize,
    p: Matrix,
    #[serde(skip)]
    pt: Matrix,
    r: Matrix,
    rinv: Matrix,
    rho: f64,
    /// Zero-based index of a column of `R^{-1}` with strictly positive entries.
    h2_column: Option<usize>,
    warnings: Vec<String>,
}

impl ReflectionMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, OrthantError> {
        let p = Matrix::from_rows(rows).ok_or(OrthantError::NotSquare)?;
        build_reflection(p)
    }

    /// Normal reflection, `P = 0`.
    pub fn identity(dim: usize) -> Result<Self, OrthantError> {
        build_reflection(Matrix::zeros(dim))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    /// `P^t`, the matrix used by the fixed-point map.
    #[inline]
    pub fn p_transpose(&self) -> &Matrix {
        &self.pt
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn rinv(&self) -> &Matrix {
        &self.rinv
    }

    pub fn spectral_radius(&self) -> f64 {
        self.rho
    }

    pub fn h2_column(&self) -> Option<usize> {
        self.h2_column
    }

    pub fn satisfies_h2(&self) -> bool {
        self.h2_column.is_some()
    }

    /// Non-fatal findings such as a row sum of `P` above one.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn apply_r(&self, x: &OrthantVector) -> OrthantVector {
        OrthantVector::from_raw(self.r.mul_vec(x.as_slice()))
    }

    pub fn apply_rinv(&self, x: &OrthantVector) -> OrthantVector {
        OrthantVector::from_raw(self.rinv.mul_vec(x.as_slice()))
    }
}

/// Validates H1 for `p`, forms `R = I - P^t`, inverts it by elimination and
/// cross-checks the inverse against the Neumann series `sum (P^t)^k`.
pub fn build_reflection(p: Matrix) -> Result<ReflectionMatrix, OrthantError> {
    let d = p.dim();
    if d == 0 || d > MAX_DIM {
        return Err(OrthantError::InvalidDimension(d));
    }
    for i in 0..d {
        for j in 0..d {
            let v = p.get(i, j);
            if !v.is_finite() {
                return Err(OrthantError::NonFinite(i * d + j));
            }
            if i == j && v != 0.0 {
                return Err(OrthantError::DiagonalNonzero { i, value: v });
            }
            if i != j && v < 0.0 {
                return Err(OrthantError::OffDiagonalNegative { i, j, value: v });
            }
        }
    }
    let rho = spectral_radius(&p)?;
    if rho >= 1.0 - RHO_MARGIN {
        return Err(OrthantError::SpectralRadiusNotLessThanOne { rho });
    }

    let pt = p.transpose();
    let r = Matrix::identity(d).add(&pt.scale(-1.0));
    let direct = r.inverse().ok_or(OrthantError::InverseInconsistent {
        reason: "R is singular",
        residual: f64::INFINITY,
    })?;
    let series = neumann_inverse(&pt)?;
    let agreement = direct.max_abs_diff(&series);
    if agreement > NEUMANN_AGREEMENT {
        return Err(OrthantError::InverseInconsistent {
            reason: "elimination and Neumann series disagree",
            residual: agreement,
        });
    }

    // Structural zeros of the series are exact; keep them exact.
    let mut rinv = direct;
    for i in 0..d {
        for j in 0..d {
            let s = series.get(i, j);
            let v = rinv.get(i, j);
            if s == 0.0 || (v < 0.0 && v > -NEUMANN_AGREEMENT) {
                rinv.set(i, j, if s == 0.0 { 0.0 } else { s });
            }
        }
    }
    for i in 0..d {
        if rinv.get(i, i) < 1.0 - 1e-12 {
            return Err(OrthantError::InverseInconsistent {
                reason: "diagonal of R^-1 below one",
                residual: 1.0 - rinv.get(i, i),
            });
        }
    }
    let residual = r.mul(&rinv).max_abs_diff(&Matrix::identity(d));
    if residual > INVERSE_RESIDUAL {
        return Err(OrthantError::InverseInconsistent {
            reason: "R * R^-1 differs from I",
            residual,
        });
    }

    let h2_column = (0..d).find(|&j| (0..d).all(|i| rinv.get(i, j) > H2_THRESHOLD));

    let mut warnings = Vec::new();
    for i in 0..d {
        let s: f64 = p.row(i).iter().sum();
        if s > 1.0 + 1e-12 {
            warnings.push(format!("row {i} of P sums to {s} > 1 (not substochastic)"));
        }
    }

    Ok(ReflectionMatrix {
        dim: d,
        p,
        pt,
        r,
        rinv,
        rho,
        h2_column,
        warnings,
    })
}

/// `sum_{k < 2^j} (P^t)^k` by doubling, stopped once the remaining tail
/// `(P^t)^(2^j) R^{-1}` is negligible.
fn neumann_inverse(pt: &Matrix) -> Result<Matrix, OrthantError> {
    let d = pt.dim();
    let mut sum = Matrix::identity(d);
    let mut power = pt.clone();
    for _ in 0..64 {
        if power.is_zero() {
            return Ok(sum);
        }
        sum = sum.add(&power.mul(&sum));
        power = power.mul(&power);
        if power.norm_inf() * sum.norm_inf() < 1e-13 {
            return Ok(sum);
        }
    }
    Err(OrthantError::InverseInconsistent {
        reason: "Neumann series did not converge",
        residual: power.norm_inf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> OrthantVector {
        OrthantVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn order_examples() {
        assert_eq!(order(&v(&[1.0, 2.0]), &v(&[0.0, 1.0]), 0.0).unwrap(), OrderRelation::Gg);
        assert_eq!(order(&v(&[1.0, 1.0]), &v(&[1.0, 0.0]), 0.0).unwrap(), OrderRelation::Gt);
        assert_eq!(order(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), 0.0).unwrap(), OrderRelation::None);
        assert_eq!(order(&v(&[1.0, 0.0]), &v(&[1.0, 0.0]), 0.0).unwrap(), OrderRelation::Geq);
    }

    #[test]
    fn order_dimension_mismatch() {
        assert!(matches!(
            order(&v(&[1.0]), &v(&[1.0, 2.0]), 0.0),
            Err(OrthantError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn order_tolerance_absorbs_noise() {
        assert_eq!(
            order(&v(&[1.0, 1e-12]), &v(&[1.0, 0.0]), 1e-9).unwrap(),
            OrderRelation::Geq
        );
    }

    #[test]
    fn vector_rejects_nonfinite_and_bad_dims() {
        assert!(matches!(OrthantVector::new(vec![]), Err(OrthantError::InvalidDimension(0))));
        assert!(matches!(
            OrthantVector::new(vec![0.0; 65]),
            Err(OrthantError::InvalidDimension(65))
        ));
        assert!(matches!(
            OrthantVector::new(vec![0.0, f64::NAN]),
            Err(OrthantError::NonFinite(1))
        ));
    }

    #[test]
    fn spectral_radius_examples() {
        let p = Matrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        assert!((spectral_radius(&p).unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(spectral_radius(&Matrix::zeros(3)).unwrap(), 0.0);
        let p = Matrix::from_rows(&[vec![0.0, 0.2], vec![0.3, 0.0]]).unwrap();
        assert!((spectral_radius(&p).unwrap() - 0.06_f64.sqrt()).abs() < 1e-9);
        assert!((spectral_radius(&p).unwrap() - 0.2449490).abs() < 1e-6);
    }

    #[test]
    fn spectral_radius_of_feedforward_is_zero() {
        let p = Matrix::from_rows(&[
            vec![0.0, 0.7, 0.3],
            vec![0.0, 0.0, 0.9],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(spectral_radius(&p).unwrap(), 0.0);
        // Equal weights make ||P|| and ||P^2||^(1/2) coincide.
        let chain = Matrix::from_rows(&[
            vec![0.0, 0.5, 0.0],
            vec![0.0, 0.0, 0.5],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(spectral_radius(&chain).unwrap(), 0.0);
    }

    #[test]
    fn reflection_two_by_two() {
        let rm = ReflectionMatrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let expect_r = [[1.0, -0.5], [-0.5, 1.0]];
        let expect_inv = [[4.0 / 3.0, 2.0 / 3.0], [2.0 / 3.0, 4.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(rm.r().get(i, j), expect_r[i][j]);
                assert!((rm.rinv().get(i, j) - expect_inv[i][j]).abs() < 1e-14);
            }
        }
        assert_eq!(rm.h2_column(), Some(0));
        assert!(rm.warnings().is_empty());
    }

    #[test]
    fn reflection_identity() {
        let rm = ReflectionMatrix::identity(3).unwrap();
        assert_eq!(rm.rinv(), &Matrix::identity(3));
        assert_eq!(rm.r(), &Matrix::identity(3));
        // no column of I_3 is strictly positive
        assert_eq!(rm.h2_column(), None);
        assert_eq!(ReflectionMatrix::identity(1).unwrap().h2_column(), Some(0));
        assert_eq!(rm.spectral_radius(), 0.0);
    }

    #[test]
    fn reflection_rejects_permutation() {
        let err = ReflectionMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, OrthantError::SpectralRadiusNotLessThanOne { .. }));
        assert_eq!(err.kind(), "SpectralRadiusNotLessThanOne");
    }

    #[test]
    fn reflection_rejects_bad_entries() {
        assert!(matches!(
            ReflectionMatrix::from_rows(&[vec![0.1, 0.0], vec![0.0, 0.0]]),
            Err(OrthantError::DiagonalNonzero { i: 0, .. })
        ));
        assert!(matches!(
            ReflectionMatrix::from_rows(&[vec![0.0, -0.1], vec![0.0, 0.0]]),
            Err(OrthantError::OffDiagonalNegative { i: 0, j: 1, .. })
        ));
        assert!(matches!(
            ReflectionMatrix::from_rows(&[vec![0.0, 0.1]]),
            Err(OrthantError::NotSquare)
        ));
    }

    #[test]
    fn h2_fails_for_block_diagonal() {
        let rm = ReflectionMatrix::from_rows(&[
            vec![0.0, 0.5, 0.0, 0.0],
            vec![0.5, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.5],
            vec![0.0, 0.0, 0.5, 0.0],
        ])
        .unwrap();
        assert_eq!(rm.h2_column(), None);
        assert_eq!(rm.rinv().get(0, 2), 0.0);
    }

    #[test]
    fn feedforward_h2_column() {
        // company 0 passes shortfall to 1, 1 to 2: column 0 of R^-1 reaches everyone
        let rm = ReflectionMatrix::from_rows(&[
            vec![0.0, 0.5, 0.0],
            vec![0.0, 0.0, 0.5],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(rm.h2_column(), Some(0));
        assert!((rm.rinv().get(2, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn superstochastic_row_warns() {
        let rm = ReflectionMatrix::from_rows(&[
            vec![0.0, 1.2, 0.0],
            vec![0.0, 0.0, 0.3],
            vec![0.1, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(rm.warnings().len(), 1);
    }
}
