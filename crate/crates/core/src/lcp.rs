//! Linear complementarity problems `LCP(eta, M)`: find `xi, zeta >= 0` with
//! `zeta = eta + M xi` and `<xi, zeta> = 0`, for `M = R` or `M = R^{-1}`.
//!
//! Two independent solvers are provided. [`solve_lcp`] iterates the monotone
//! contraction `xi <- max(0, P^t xi - eta)` (valid because `rho(P) < 1`) and
//! polishes the result with one linear solve on the detected active set.
//! [`solve_lcp_enum`] scans every candidate active set and is used as an
//! oracle. Problems with `M = R^{-1}` are never iterated directly: they are
//! mapped to an `R` problem through
//! `Phi(eta, R) = Psi(-R^{-1} eta, R^{-1})`, `Psi(eta, R) = Phi(-R^{-1} eta, R^{-1})`.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{solve_in_place, Matrix};
use crate::orthant::{max_abs, max_abs_diff, OrthantVector, ReflectionMatrix};

/// Stop when successive iterates differ by less than this (relative to `1 + |xi|`).
pub const ITERATION_TOL: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 1_000_000;
/// `xi_i` above this puts `i` in the active set.
pub const ACTIVE_TOL: f64 = 1e-12;
/// Output entries with magnitude at most this are snapped to exact zero.
pub const SNAP_TOL: f64 = 1e-11;
/// Feasibility slack of the enumeration oracle.
pub const ENUM_FEASIBILITY_TOL: f64 = 1e-11;
pub const MAX_ENUM_DIM: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LcpError {
    #[error("fixed-point iteration hit the cap; last change {residual:e}")]
    IterationCapExceeded { last: Vec<f64>, residual: f64 },
    #[error("LCP input contains a non-finite value")]
    NonFiniteInput,
    #[error("input has dimension {found}, matrix has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("enumeration oracle limited to d <= {MAX_ENUM_DIM}, got {0}")]
    TooLargeForEnumeration(usize),
    #[error("no active set yields a feasible complementary pair")]
    NoFeasibleActiveSet,
    #[error("distinct complementary solutions found: {first:?} and {second:?}")]
    MultipleSolutions { first: Vec<f64>, second: Vec<f64> },
}

impl LcpError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::IterationCapExceeded { .. } => "IterationCapExceeded",
            Self::NonFiniteInput => "NonFiniteInput",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::TooLargeForEnumeration(_) => "TooLargeForEnumeration",
            Self::NoFeasibleActiveSet => "NoFeasibleActiveSet",
            Self::MultipleSolutions { .. } => "MultipleSolutions",
        }
    }
}

/// Which matrix of a [`ReflectionMatrix`] the problem is posed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MatrixView {
    /// `M = R`
    Reflection,
    /// `M = R^{-1}`
    Inverse,
}

impl MatrixView {
    pub fn matrix<'a>(&self, m: &'a ReflectionMatrix) -> &'a Matrix {
        match self {
            Self::Reflection => m.r(),
            Self::Inverse => m.rinv(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LcpSolution {
    /// Pushing part `Phi(eta, M)`.
    pub xi: OrthantVector,
    /// Regulated part `Psi(eta, M)`.
    pub zeta: OrthantVector,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    /// `max |zeta - eta - M xi|`.
    pub residual: f64,
}

impl LcpSolution {
    fn from_parts(xi: Vec<f64>, zeta: Vec<f64>, iterations: usize, residual: f64) -> Self {
        let active_set = xi
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > ACTIVE_TOL)
            .map(|(i, _)| i)
            .collect();
        Self {
            xi: OrthantVector::from_raw(xi),
            zeta: OrthantVector::from_raw(zeta),
            active_set,
            iterations,
            residual,
        }
    }

    /// `<xi, zeta>`.
    pub fn complementarity(&self) -> f64 {
        self.xi.iter().zip(self.zeta.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Scratch buffers so hot loops can solve without allocating.
#[derive(Debug, Clone, Default)]
pub struct LcpWorkspace {
    next: Vec<f64>,
    eta: Vec<f64>,
    sys: Vec<f64>,
    rhs: Vec<f64>,
    idx: Vec<usize>,
    cand: Vec<f64>,
}

impl LcpWorkspace {
    pub fn new(dim: usize) -> Self {
        Self {
            next: vec![0.0; dim],
            eta: vec![0.0; dim],
            sys: Vec::with_capacity(dim * dim),
            rhs: Vec::with_capacity(dim),
            idx: Vec::with_capacity(dim),
            cand: vec![0.0; dim],
        }
    }

    fn ensure(&mut self, dim: usize) {
        if self.next.len() != dim {
            *self = Self::new(dim);
        }
    }
}

/// Iteration count and residual of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `LCP(eta, M)` for the requested view of `m`.
pub fn solve_lcp(
    eta: &OrthantVector,
    m: &ReflectionMatrix,
    view: MatrixView,
) -> Result<LcpSolution, LcpError> {
    let d = m.dim();
    let mut ws = LcpWorkspace::new(d);
    let mut xi = vec![0.0; d];
    let mut zeta = vec![0.0; d];
    let stats = solve_lcp_into(eta.as_slice(), m, view, &mut ws, &mut xi, &mut zeta)?;
    Ok(LcpSolution::from_parts(xi, zeta, stats.iterations, stats.residual))
}

/// Allocation-free form of [`solve_lcp`]: writes the pushing part into `xi`
/// and the regulated part into `zeta`.
pub fn solve_lcp_into(
    eta: &[f64],
    m: &ReflectionMatrix,
    view: MatrixView,
    ws: &mut LcpWorkspace,
    xi: &mut [f64],
    zeta: &mut [f64],
) -> Result<SolveStats, LcpError> {
    let d = m.dim();
    if eta.len() != d {
        return Err(LcpError::DimensionMismatch {
            expected: d,
            found: eta.len(),
        });
    }
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(LcpError::NonFiniteInput);
    }
    ws.ensure(d);
    match view {
        MatrixView::Reflection => solve_forward(eta, m, ws, xi, zeta),
        MatrixView::Inverse => {
            // LCP(theta, R^-1) <-> LCP(-R theta, R) with the roles of the parts swapped.
            let mut transformed = std::mem::take(&mut ws.eta);
            m.r().mul_vec_into(eta, &mut transformed);
            for v in transformed.iter_mut() {
                *v = -*v;
            }
            let result = solve_forward(&transformed, m, ws, zeta, xi);
            ws.eta = transformed;
            let stats = result?;
            // residual of the posed problem: zeta - theta - R^-1 xi
            let rinv = m.rinv();
            let mut residual = 0.0_f64;
            for i in 0..d {
                let r: f64 = rinv.row(i).iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
                residual = residual.max((zeta[i] - eta[i] - r).abs());
            }
            Ok(SolveStats {
                iterations: stats.iterations,
                residual,
            })
        }
    }
}

fn solve_forward(
    eta: &[f64],
    m: &ReflectionMatrix,
    ws: &mut LcpWorkspace,
    xi: &mut [f64],
    zeta: &mut [f64],
) -> Result<SolveStats, LcpError> {
    let d = m.dim();
    let pt = m.p_transpose();
    xi.fill(0.0);

    let mut iterations = 0;
    let mut converged = false;
    let mut change = 0.0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        change = 0.0_f64;
        let mut scale = 0.0_f64;
        for i in 0..d {
            let push: f64 = pt.row(i).iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
            let v = (push - eta[i]).max(0.0);
            ws.next[i] = v;
            change = change.max((v - xi[i]).abs());
            scale = scale.max(v);
        }
        xi.copy_from_slice(&ws.next[..d]);
        if change <= ITERATION_TOL * (1.0 + scale) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LcpError::IterationCapExceeded {
            last: xi.to_vec(),
            residual: change,
        });
    }

    let polished = polish(eta, m, ws, xi);
    let r = m.r();
    for i in 0..d {
        if polished && xi[i] > 0.0 {
            zeta[i] = 0.0;
        } else {
            let rx: f64 = r.row(i).iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
            zeta[i] = eta[i] + rx;
        }
    }
    snap(xi);
    snap(zeta);
    let mut residual = 0.0_f64;
    for i in 0..d {
        let rx: f64 = r.row(i).iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
        residual = residual.max((zeta[i] - eta[i] - rx).abs());
    }
    Ok(SolveStats {
        iterations,
        residual,
    })
}

/// Replaces the iterate by the exact solution of `(R xi)_S = -eta_S` on the
/// active set `S` when that solution is feasible. Returns whether it did.
fn polish(eta: &[f64], m: &ReflectionMatrix, ws: &mut LcpWorkspace, xi: &mut [f64]) -> bool {
    let d = m.dim();
    ws.idx.clear();
    ws.idx.extend((0..d).filter(|&i| xi[i] > ACTIVE_TOL));
    let k = ws.idx.len();
    if k == 0 {
        xi.fill(0.0);
        return true;
    }
    let r = m.r();
    ws.sys.clear();
    ws.rhs.clear();
    for &i in &ws.idx {
        for &j in &ws.idx {
            ws.sys.push(r.get(i, j));
        }
        ws.rhs.push(-eta[i]);
    }
    if !solve_in_place(&mut ws.sys, k, &mut ws.rhs) {
        return false;
    }
    let scale = 1.0 + max_abs(eta).max(max_abs(xi));
    let tol = 1e-9 * scale;
    ws.cand.fill(0.0);
    for (pos, &i) in ws.idx.iter().enumerate() {
        let v = ws.rhs[pos];
        if v < -tol || (v - xi[i]).abs() > 1e-6 * scale {
            return false;
        }
        ws.cand[i] = v.max(0.0);
    }
    for (i, e) in eta.iter().enumerate() {
        if ws.cand[i] > 0.0 || ws.idx.contains(&i) {
            continue;
        }
        let rx: f64 = r.row(i).iter().zip(ws.cand.iter()).map(|(a, b)| a * b).sum();
        if e + rx < -tol {
            return false;
        }
    }
    xi.copy_from_slice(&ws.cand[..d]);
    true
}

#[inline]
fn snap(x: &mut [f64]) {
    for v in x.iter_mut() {
        if v.abs() <= SNAP_TOL {
            *v = 0.0;
        }
    }
}

/// Exact active-set enumeration over all `2^d` subsets (oracle, `d <= 14`).
pub fn solve_lcp_enum(
    eta: &OrthantVector,
    m: &ReflectionMatrix,
    view: MatrixView,
) -> Result<LcpSolution, LcpError> {
    let d = m.dim();
    if eta.dim() != d {
        return Err(LcpError::DimensionMismatch {
            expected: d,
            found: eta.dim(),
        });
    }
    if d > MAX_ENUM_DIM {
        return Err(LcpError::TooLargeForEnumeration(d));
    }
    let mat = view.matrix(m);
    let eta = eta.as_slice();
    let scale = 1.0 + max_abs(eta);
    let tol = ENUM_FEASIBILITY_TOL * scale;

    let mut found: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut subset = Vec::with_capacity(d);
    for mask in 0u32..(1u32 << d) {
        subset.clear();
        subset.extend((0..d).filter(|i| mask & (1 << i) != 0));
        let k = subset.len();
        let mut xi = vec![0.0; d];
        if k > 0 {
            let mut sys = Vec::with_capacity(k * k);
            let mut rhs = Vec::with_capacity(k);
            for &i in &subset {
                for &j in &subset {
                    sys.push(mat.get(i, j));
                }
                rhs.push(-eta[i]);
            }
            if !solve_in_place(&mut sys, k, &mut rhs) {
                continue;
            }
            for (pos, &i) in subset.iter().enumerate() {
                xi[i] = rhs[pos];
            }
        }
        if xi.iter().any(|v| *v < -tol) {
            continue;
        }
        let mut zeta = mat.mul_vec(&xi);
        for (z, e) in zeta.iter_mut().zip(eta) {
            *z += e;
        }
        if zeta.iter().any(|v| *v < -tol) {
            continue;
        }
        for v in xi.iter_mut() {
            *v = v.max(0.0);
        }
        for &i in &subset {
            zeta[i] = 0.0;
        }
        for v in zeta.iter_mut() {
            *v = v.max(0.0);
        }
        snap(&mut xi);
        snap(&mut zeta);
        match &found {
            None => found = Some((xi, zeta)),
            Some((fx, fz)) => {
                let same = max_abs_diff(fx, &xi) <= 1e-8 * scale
                    && max_abs_diff(fz, &zeta) <= 1e-8 * scale;
                if !same {
                    return Err(LcpError::MultipleSolutions {
                        first: fx.clone(),
                        second: xi,
                    });
                }
            }
        }
    }
    let (xi, zeta) = found.ok_or(LcpError::NoFeasibleActiveSet)?;
    let mx = mat.mul_vec(&xi);
    let residual = (0..d).fold(0.0_f64, |r, i| r.max((zeta[i] - eta[i] - mx[i]).abs()));
    Ok(LcpSolution::from_parts(xi, zeta, 1 << d, residual))
}

/// Residuals of the two solution-transform identities between `LCP(eta, R)`
/// and `LCP(-R^{-1} eta, R^{-1})`.
#[derive(Debug, Clone, Serialize)]
pub struct DualTransformCheck {
    /// `|Phi(eta, R) - Psi(-R^{-1} eta, R^{-1})|_max`
    pub push_residual: f64,
    /// `|Psi(eta, R) - Phi(-R^{-1} eta, R^{-1})|_max`
    pub regulated_residual: f64,
    pub holds: bool,
    pub forward: LcpSolution,
    pub dual: LcpSolution,
}

/// Solves `LCP(eta, R)` with the fixed-point solver and `LCP(-R^{-1} eta, R^{-1})`
/// by enumeration directly on `R^{-1}`, then compares the swapped parts.
pub fn dual_transform_check(
    eta: &OrthantVector,
    m: &ReflectionMatrix,
) -> Result<DualTransformCheck, LcpError> {
    let forward = solve_lcp(eta, m, MatrixView::Reflection)?;
    let theta = m.apply_rinv(eta).neg();
    let dual = solve_lcp_enum(&theta, m, MatrixView::Inverse)?;
    let push_residual = forward.xi.max_abs_diff(&dual.zeta);
    let regulated_residual = forward.zeta.max_abs_diff(&dual.xi);
    Ok(DualTransformCheck {
        holds: push_residual <= 1e-8 && regulated_residual <= 1e-8,
        push_residual,
        regulated_residual,
        forward,
        dual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rm() -> ReflectionMatrix {
        ReflectionMatrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap()
    }

    fn v(x: &[f64]) -> OrthantVector {
        OrthantVector::new(x.to_vec()).unwrap()
    }

    fn close(a: &OrthantVector, b: &[f64], tol: f64) -> bool {
        a.as_slice().iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn nonnegative_input_needs_no_push() {
        let s = solve_lcp(&v(&[3.0, 1.0]), &rm(), MatrixView::Reflection).unwrap();
        assert_eq!(s.xi.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.zeta.as_slice(), &[3.0, 1.0]);
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn single_coordinate_push() {
        let s = solve_lcp(&v(&[-1.0, 2.0]), &rm(), MatrixView::Reflection).unwrap();
        assert!(close(&s.xi, &[1.0, 0.0], 1e-12));
        assert!(close(&s.zeta, &[0.0, 1.5], 1e-12));
        assert_eq!(s.active_set, vec![0]);
    }

    #[test]
    fn both_coordinates_push() {
        let s = solve_lcp(&v(&[-1.0, -1.0]), &rm(), MatrixView::Reflection).unwrap();
        assert!(close(&s.xi, &[2.0, 2.0], 1e-12));
        assert_eq!(s.zeta.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.active_set, vec![0, 1]);
    }

    #[test]
    fn enumeration_examples() {
        let s = solve_lcp_enum(&v(&[-1.0, 2.0]), &rm(), MatrixView::Reflection).unwrap();
        assert!(close(&s.xi, &[1.0, 0.0], 1e-12));
        assert_eq!(s.active_set, vec![0]);
        let s = solve_lcp_enum(&v(&[-2.0, 1.0]), &rm(), MatrixView::Reflection).unwrap();
        assert!(close(&s.xi, &[2.0, 0.0], 1e-12));
        assert_eq!(s.zeta.as_slice(), &[0.0, 0.0]);
        let s = solve_lcp_enum(&v(&[0.0, 0.0]), &rm(), MatrixView::Reflection).unwrap();
        assert_eq!(s.xi.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.zeta.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn degenerate_input_agrees_between_solvers() {
        let eta = v(&[-2.0, 1.0]);
        let a = solve_lcp(&eta, &rm(), MatrixView::Reflection).unwrap();
        let b = solve_lcp_enum(&eta, &rm(), MatrixView::Reflection).unwrap();
        assert!(a.xi.max_abs_diff(&b.xi) < 1e-12);
        assert!(a.zeta.max_abs_diff(&b.zeta) < 1e-12);
        assert_eq!(a.zeta.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn inverse_view_storage_example() {
        // LCP((-1,-1), R^-1): zeta = 0 branch, xi = R (1,1) = (0.5, 0.5)
        let s = solve_lcp(&v(&[-1.0, -1.0]), &rm(), MatrixView::Inverse).unwrap();
        assert!(close(&s.xi, &[0.5, 0.5], 1e-12));
        assert_eq!(s.zeta.as_slice(), &[0.0, 0.0]);
        assert!(s.residual < 1e-12);
        let e = solve_lcp_enum(&v(&[-1.0, -1.0]), &rm(), MatrixView::Inverse).unwrap();
        assert!(e.xi.max_abs_diff(&s.xi) < 1e-12);
    }

    #[test]
    fn dual_transform_examples() {
        let c = dual_transform_check(&v(&[-1.0, 2.0]), &rm()).unwrap();
        assert!(c.holds);
        assert!(close(&c.dual.zeta, &[1.0, 0.0], 1e-12));

        let c = dual_transform_check(&v(&[3.0, 1.0]), &rm()).unwrap();
        assert!(c.holds);
        assert!(close(&c.dual.xi, &[3.0, 1.0], 1e-12));
        assert_eq!(c.forward.zeta.as_slice(), &[3.0, 1.0]);

        let c = dual_transform_check(&v(&[-1.0, -1.0]), &rm()).unwrap();
        assert!(c.holds);
        assert!(close(&c.dual.zeta, &[2.0, 2.0], 1e-12));
    }

    #[test]
    fn rejects_nonfinite_and_mismatched_input() {
        let mut ws = LcpWorkspace::new(2);
        let (mut x, mut z) = ([0.0; 2], [0.0; 2]);
        let err = solve_lcp_into(&[f64::NAN, 0.0], &rm(), MatrixView::Reflection, &mut ws, &mut x, &mut z);
        assert_eq!(err.unwrap_err(), LcpError::NonFiniteInput);
        let err = solve_lcp_enum(&v(&[1.0]), &rm(), MatrixView::Reflection).unwrap_err();
        assert!(matches!(err, LcpError::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn enumeration_dimension_cap() {
        let rm = ReflectionMatrix::identity(15).unwrap();
        let err = solve_lcp_enum(&OrthantVector::zeros(15), &rm, MatrixView::Reflection).unwrap_err();
        assert_eq!(err, LcpError::TooLargeForEnumeration(15));
    }

    #[test]
    fn large_magnitudes_converge() {
        let s = solve_lcp(&v(&[-3.0e6, 2.0e6]), &rm(), MatrixView::Reflection).unwrap();
        assert!(s.residual < 1e-6);
        assert!((s.xi[0] - 3.0e6).abs() < 1e-6);
        assert_eq!(s.xi[1], 0.0);
        assert!((s.zeta[1] - 5.0e5).abs() < 1e-6);
    }
}
