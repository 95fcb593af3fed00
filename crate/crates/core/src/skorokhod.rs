//! Discrete Skorokhod problem `SP({a + sum u}, R)` solved step by step as
//! `(dy_k, z_k) = LCP(z_{k-1} + u_k, R)`, plus ruin detection and the
//! comparison / a-priori bound checks.

use serde::Serialize;
use thiserror::Error;

use crate::lcp::{solve_lcp_into, LcpError, LcpWorkspace, MatrixView, SolveStats};
use crate::orthant::{
    dominates, is_zero, max_abs, partially_dominates, strictly_dominates, OrthantVector,
    ReflectionMatrix,
};
use crate::output::{fmt_f64, vector_columns, CsvTable};

/// Default threshold for "equal to zero" and strict orders.
pub const DEFAULT_STRICT_TOL: f64 = 1e-9;
/// Value identities hold to this, relative to `1 + |y|_max`.
pub const VALUE_TOL: f64 = 1e-8;
/// Path invariants (Skorokhod equation, complementarity, bounds).
pub const INVARIANT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkorokhodError {
    #[error("LCP failed at step {step}: {source}")]
    Lcp { step: usize, source: LcpError },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("initial capital has a negative coordinate")]
    NegativeCapital,
    #[error("comparison requires a <= b entrywise")]
    NotOrdered,
    #[error("ruin at step {step} but y_k differs from -R^-1(a + S_k) by {residual:e}")]
    ConsistencyViolation { step: usize, residual: f64 },
}

impl SkorokhodError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Lcp { .. } => "LcpFailure",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::NegativeCapital => "NegativeCapital",
            Self::NotOrdered => "NotOrdered",
            Self::ConsistencyViolation { .. } => "ConsistencyViolation",
        }
    }
}

/// Allocation-free one-step reflector shared by the primal SP (view `R`) and
/// the storage network (view `R^{-1}`).
#[derive(Debug, Clone)]
pub struct ReflectedWalk<'a> {
    m: &'a ReflectionMatrix,
    view: MatrixView,
    ws: LcpWorkspace,
    input: Vec<f64>,
    /// Regulated part after the last step.
    pub state: Vec<f64>,
    /// Pushing increment of the last step.
    pub push: Vec<f64>,
    /// Cumulative pushing.
    pub cumulative: Vec<f64>,
}

impl<'a> ReflectedWalk<'a> {
    pub fn new(m: &'a ReflectionMatrix, view: MatrixView, start: &[f64]) -> Self {
        let d = m.dim();
        Self {
            m,
            view,
            ws: LcpWorkspace::new(d),
            input: vec![0.0; d],
            state: start.to_vec(),
            push: vec![0.0; d],
            cumulative: vec![0.0; d],
        }
    }

    pub fn reset(&mut self, start: &[f64]) {
        self.state.copy_from_slice(start);
        self.push.fill(0.0);
        self.cumulative.fill(0.0);
    }

    pub fn step(&mut self, increment: &[f64]) -> Result<SolveStats, LcpError> {
        for ((x, s), u) in self.input.iter_mut().zip(&self.state).zip(increment) {
            *x = s + u;
        }
        let stats = solve_lcp_into(
            &self.input,
            self.m,
            self.view,
            &mut self.ws,
            &mut self.push,
            &mut self.state,
        )?;
        for (c, p) in self.cumulative.iter_mut().zip(&self.push) {
            *c += p;
        }
        Ok(stats)
    }
}

/// Solution of the discrete SP over a finite horizon.
#[derive(Debug, Clone, Serialize)]
pub struct SpPath {
    pub a: OrthantVector,
    pub u: Vec<OrthantVector>,
    /// `y_0 .. y_n`
    pub y: Vec<OrthantVector>,
    /// `z_0 .. z_n`
    pub z: Vec<OrthantVector>,
    /// `dy_1 .. dy_n` (index `k - 1`)
    pub dy: Vec<OrthantVector>,
    /// Running a-priori bound input `h_1 .. h_n` (index `k - 1`)
    pub h: Vec<OrthantVector>,
}

impl SpPath {
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    /// `dy_k` for `1 <= k <= n`.
    pub fn dy_at(&self, k: usize) -> &OrthantVector {
        &self.dy[k - 1]
    }

    /// CSV with one row per step `k = 0..n`; `u` and `dy` are zero at `k = 0`.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut header = vec!["k".to_string()];
        for p in ["u", "z", "dy", "y"] {
            header.extend(vector_columns(p, d));
        }
        let mut t = CsvTable::new(header);
        let zero = OrthantVector::zeros(d);
        for k in 0..=self.horizon() {
            let (u, dy) = if k == 0 {
                (&zero, &zero)
            } else {
                (&self.u[k - 1], &self.dy[k - 1])
            };
            let mut row = vec![k.to_string()];
            for v in [u, &self.z[k], dy, &self.y[k]] {
                row.extend(v.iter().map(|x| fmt_f64(*x)));
            }
            t.push(row);
        }
        t.render()
    }

    /// First violated path invariant, if any.
    pub fn check_invariants(&self, m: &ReflectionMatrix) -> Option<PathViolation> {
        let d = self.dim();
        let mut partial = self.a.as_slice().to_vec();
        for k in 1..=self.horizon() {
            for (p, u) in partial.iter_mut().zip(self.u[k - 1].iter()) {
                *p += u;
            }
            let ry = m.r().mul_vec(self.y[k].as_slice());
            let scale = 1.0 + max_abs(&partial).max(self.y[k].max_abs());
            let eq = (0..d).fold(0.0_f64, |r, i| r.max((self.z[k][i] - partial[i] - ry[i]).abs()));
            if eq > INVARIANT_TOL * scale {
                return Some(PathViolation::new(k, "skorokhod_equation", eq));
            }
            let neg = self.z[k].iter().chain(self.dy[k - 1].iter()).fold(0.0_f64, |r, v| r.max(-v));
            if neg > INVARIANT_TOL {
                return Some(PathViolation::new(k, "nonnegativity", neg));
            }
            let comp: f64 = self.z[k].iter().zip(self.dy[k - 1].iter()).map(|(a, b)| a * b).sum();
            if comp > INVARIANT_TOL * scale {
                return Some(PathViolation::new(k, "complementarity", comp));
            }
            let bound = m.rinv().mul_vec(self.h[k - 1].as_slice());
            let excess = (0..d).fold(f64::NEG_INFINITY, |r, i| r.max(self.y[k][i] - bound[i]));
            if excess > INVARIANT_TOL * scale {
                return Some(PathViolation::new(k, "apriori_bound", excess));
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathViolation {
    pub step: usize,
    pub invariant: &'static str,
    pub amount: f64,
}

impl PathViolation {
    fn new(step: usize, invariant: &'static str, amount: f64) -> Self {
        Self {
            step,
            invariant,
            amount,
        }
    }
}

fn check_dims(m: &ReflectionMatrix, a: &OrthantVector, u: &[OrthantVector]) -> Result<(), SkorokhodError> {
    let d = m.dim();
    for found in std::iter::once(a.dim()).chain(u.iter().map(|v| v.dim())) {
        if found != d {
            return Err(SkorokhodError::DimensionMismatch { expected: d, found });
        }
    }
    Ok(())
}

pub fn solve_sp(a: &OrthantVector, u: &[OrthantVector], m: &ReflectionMatrix) -> Result<SpPath, SkorokhodError> {
    check_dims(m, a, u)?;
    if a.iter().any(|v| *v < 0.0) {
        return Err(SkorokhodError::NegativeCapital);
    }
    let d = m.dim();
    let n = u.len();
    let mut walk = ReflectedWalk::new(m, MatrixView::Reflection, a.as_slice());
    let mut y = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let mut dy = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    y.push(OrthantVector::zeros(d));
    z.push(a.clone());
    let mut partial = a.as_slice().to_vec();
    let mut hk = vec![0.0_f64; d];
    for (k, uk) in u.iter().enumerate() {
        walk.step(uk.as_slice())
            .map_err(|source| SkorokhodError::Lcp { step: k + 1, source })?;
        for i in 0..d {
            partial[i] += uk[i];
            hk[i] = hk[i].max(-partial[i]);
        }
        y.push(OrthantVector::from_raw(walk.cumulative.clone()));
        z.push(OrthantVector::from_raw(walk.state.clone()));
        dy.push(OrthantVector::from_raw(walk.push.clone()));
        h.push(OrthantVector::from_raw(hk.clone()));
    }
    Ok(SpPath {
        a: a.clone(),
        u: u.to_vec(),
        y,
        z,
        dy,
        h,
    })
}

/// First step of ruin (`z_k = 0`), s-ruin (`z_k = 0`, `dy_k > 0`) and
/// ss-ruin (`dy_k >> 0`); `None` when not reached within the horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RuinRecord {
    pub t_ruin: Option<usize>,
    pub t_sruin: Option<usize>,
    pub t_ssruin: Option<usize>,
}

/// Step predicates for ruin notions on `(z_k, dy_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRuin {
    pub ruin: bool,
    pub sruin: bool,
    pub ssruin: bool,
}

#[inline]
pub fn step_ruin(z: &[f64], dy: &[f64], strict_tol: f64) -> StepRuin {
    let ruin = is_zero(z, strict_tol);
    StepRuin {
        ruin,
        sruin: ruin && dy.iter().any(|v| *v > strict_tol),
        ssruin: dy.iter().all(|v| *v > strict_tol),
    }
}

pub fn detect_ruin(path: &SpPath, m: &ReflectionMatrix, strict_tol: f64) -> Result<RuinRecord, SkorokhodError> {
    let mut rec = RuinRecord::default();
    let mut identity = IdentityTracker::new(m, &path.a);
    for k in 1..=path.horizon() {
        identity.push(&path.u[k - 1]);
        let s = step_ruin(path.z[k].as_slice(), path.dy[k - 1].as_slice(), strict_tol);
        if s.ruin || s.ssruin {
            let residual = identity.residual(path.y[k].as_slice());
            if residual > VALUE_TOL * (1.0 + path.y[k].max_abs()) {
                return Err(SkorokhodError::ConsistencyViolation { step: k, residual });
            }
        }
        if s.ruin && rec.t_ruin.is_none() {
            rec.t_ruin = Some(k);
        }
        if s.sruin && rec.t_sruin.is_none() {
            rec.t_sruin = Some(k);
        }
        if s.ssruin && rec.t_ssruin.is_none() {
            rec.t_ssruin = Some(k);
        }
    }
    Ok(rec)
}

/// Tracks `-R^{-1}a + sum_{l<=k} (-R^{-1}u_l)`, the value `y_k` must take on ruin.
struct IdentityTracker<'a> {
    m: &'a ReflectionMatrix,
    value: Vec<f64>,
    buf: Vec<f64>,
}

impl<'a> IdentityTracker<'a> {
    fn new(m: &'a ReflectionMatrix, a: &OrthantVector) -> Self {
        let value = m.apply_rinv(a).neg().into_vec();
        Self {
            m,
            buf: vec![0.0; value.len()],
            value,
        }
    }

    fn push(&mut self, u: &OrthantVector) {
        self.m.rinv().mul_vec_into(u.as_slice(), &mut self.buf);
        for (v, b) in self.value.iter_mut().zip(&self.buf) {
            *v -= b;
        }
    }

    fn residual(&self, y: &[f64]) -> f64 {
        crate::orthant::max_abs_diff(&self.value, y)
    }
}

/// Step-`k` form of the three ruin equivalences: the left sides are read off
/// the solved path, the right sides compare `-R^{-1}u_k` with `R^{-1}z_{k-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepEquivalence {
    pub step: usize,
    pub notion: &'static str,
    pub lhs: bool,
    pub rhs: bool,
}

/// First step where a ruin predicate disagrees with its increment criterion.
pub fn check_ruin_equivalences(path: &SpPath, m: &ReflectionMatrix, strict_tol: f64) -> Option<StepEquivalence> {
    for k in 1..=path.horizon() {
        let s = step_ruin(path.z[k].as_slice(), path.dy[k - 1].as_slice(), strict_tol);
        let lhs_v = m.rinv().mul_vec(path.u[k - 1].as_slice());
        let lhs_v: Vec<f64> = lhs_v.iter().map(|v| -v).collect();
        let rhs_v = m.rinv().mul_vec(path.z[k - 1].as_slice());
        let checks = [
            ("ss", s.ssruin, strictly_dominates(&lhs_v, &rhs_v, strict_tol)),
            ("s", s.sruin, partially_dominates(&lhs_v, &rhs_v, strict_tol)),
            ("r", s.ruin, dominates(&lhs_v, &rhs_v, strict_tol)),
        ];
        for (notion, lhs, rhs) in checks {
            if lhs != rhs {
                return Some(StepEquivalence {
                    step: k,
                    notion,
                    lhs,
                    rhs,
                });
            }
        }
    }
    None
}

/// Outcome of the pathwise comparison between capitals `a <= b`.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonOutcome {
    pub holds: bool,
    pub violation: Option<PathViolation>,
    /// Largest `y^(a)_k - y^(b)_k` over all steps and coordinates.
    pub max_gap: f64,
}

pub fn comparison_check(
    a: &OrthantVector,
    b: &OrthantVector,
    u: &[OrthantVector],
    m: &ReflectionMatrix,
) -> Result<ComparisonOutcome, SkorokhodError> {
    check_dims(m, b, u)?;
    if !dominates(b.as_slice(), a.as_slice(), 0.0) {
        return Err(SkorokhodError::NotOrdered);
    }
    let pa = solve_sp(a, u, m)?;
    let pb = solve_sp(b, u, m)?;
    let bound = m.apply_rinv(&b.sub(a));
    let tol = 1e-8;
    let mut max_gap = 0.0_f64;
    for k in 1..=u.len() {
        let checks = [
            ("dy_a_geq_dy_b", worst(pb.dy[k - 1].as_slice(), pa.dy[k - 1].as_slice())),
            ("z_a_leq_z_b", worst(pa.z[k].as_slice(), pb.z[k].as_slice())),
            ("y_gap_nonnegative", worst(pb.y[k].as_slice(), pa.y[k].as_slice())),
        ];
        let gap = pa.y[k].sub(&pb.y[k]);
        max_gap = max_gap.max(gap.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let over = worst(gap.as_slice(), bound.as_slice());
        for (name, amount) in checks.into_iter().chain([("y_gap_bounded", over)]) {
            if amount > tol {
                return Ok(ComparisonOutcome {
                    holds: false,
                    violation: Some(PathViolation::new(k, name, amount)),
                    max_gap,
                });
            }
        }
    }
    Ok(ComparisonOutcome {
        holds: true,
        violation: None,
        max_gap,
    })
}

/// `max_i (x_i - y_i)`: positive when `x <= y` fails.
fn worst(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
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

    fn seq(x: &[&[f64]]) -> Vec<OrthantVector> {
        x.iter().map(|s| v(s)).collect()
    }

    #[test]
    fn single_step_full_push() {
        let p = solve_sp(&v(&[0.0, 0.0]), &seq(&[&[-1.0, -1.0]]), &rm()).unwrap();
        assert!(p.dy[0].max_abs_diff(&v(&[2.0, 2.0])) < 1e-12);
        assert_eq!(p.z[1].as_slice(), &[0.0, 0.0]);
        assert!(p.check_invariants(&rm()).is_none());
        let r = detect_ruin(&p, &rm(), DEFAULT_STRICT_TOL).unwrap();
        assert_eq!(r, RuinRecord { t_ruin: Some(1), t_sruin: Some(1), t_ssruin: Some(1) });
    }

    #[test]
    fn interior_step_needs_no_push() {
        let p = solve_sp(&v(&[1.0, 1.0]), &seq(&[&[1.0, 0.0]]), &rm()).unwrap();
        assert_eq!(p.y[1].as_slice(), &[0.0, 0.0]);
        assert_eq!(p.z[1].as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn scalar_reflection() {
        let m = ReflectionMatrix::identity(1).unwrap();
        let p = solve_sp(&v(&[0.0]), &seq(&[&[-3.0], &[1.0], &[-2.0]]), &m).unwrap();
        let z: Vec<f64> = p.z[1..].iter().map(|x| x[0]).collect();
        let y: Vec<f64> = p.y[1..].iter().map(|x| x[0]).collect();
        assert_eq!(z, vec![0.0, 1.0, 0.0]);
        assert_eq!(y, vec![3.0, 3.0, 4.0]);
        assert_eq!(p.h[2].as_slice(), &[4.0]);
        let r = detect_ruin(&p, &m, DEFAULT_STRICT_TOL).unwrap();
        assert_eq!(r.t_ruin, Some(1));
    }

    #[test]
    fn partial_push_is_s_ruin_only() {
        let p = solve_sp(&v(&[0.0, 0.0]), &seq(&[&[-2.0, 1.0]]), &rm()).unwrap();
        assert!(p.dy[0].max_abs_diff(&v(&[2.0, 0.0])) < 1e-12);
        assert_eq!(p.z[1].as_slice(), &[0.0, 0.0]);
        let r = detect_ruin(&p, &rm(), DEFAULT_STRICT_TOL).unwrap();
        assert_eq!(r, RuinRecord { t_ruin: Some(1), t_sruin: Some(1), t_ssruin: None });
        assert!(check_ruin_equivalences(&p, &rm(), DEFAULT_STRICT_TOL).is_none());
    }

    #[test]
    fn rich_capital_never_ruins() {
        let p = solve_sp(&v(&[5.0, 5.0]), &seq(&[&[1.0, 1.0]]), &rm()).unwrap();
        assert_eq!(detect_ruin(&p, &rm(), DEFAULT_STRICT_TOL).unwrap(), RuinRecord::default());
    }

    #[test]
    fn comparison_examples() {
        let c = comparison_check(&v(&[0.0, 0.0]), &v(&[1.0, 1.0]), &seq(&[&[-1.0, -1.0]]), &rm()).unwrap();
        assert!(c.holds);
        assert!(c.max_gap <= 2.0 + 1e-12);

        let c = comparison_check(&v(&[1.0, 1.0]), &v(&[1.0, 1.0]), &seq(&[&[-3.0, 1.0]]), &rm()).unwrap();
        assert!(c.holds);
        assert_eq!(c.max_gap, 0.0);

        let m = ReflectionMatrix::identity(1).unwrap();
        let c = comparison_check(&v(&[0.0]), &v(&[2.0]), &seq(&[&[-1.0]]), &m).unwrap();
        assert!(c.holds);
        assert_eq!(c.max_gap, 1.0);

        let err = comparison_check(&v(&[2.0]), &v(&[0.0]), &seq(&[&[-1.0]]), &m).unwrap_err();
        assert_eq!(err, SkorokhodError::NotOrdered);
    }

    #[test]
    fn csv_has_row_per_step() {
        let p = solve_sp(&v(&[0.0, 0.0]), &seq(&[&[-1.0, -1.0], &[1.0, 0.5]]), &rm()).unwrap();
        let csv = p.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "k,u_1,u_2,z_1,z_2,dy_1,dy_2,y_1,y_2");
        assert!(lines[2].starts_with("1,-1.0000000000000000e0"));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            solve_sp(&v(&[-1.0, 0.0]), &[], &rm()).unwrap_err(),
            SkorokhodError::NegativeCapital
        );
        assert!(matches!(
            solve_sp(&v(&[0.0]), &[], &rm()).unwrap_err(),
            SkorokhodError::DimensionMismatch { expected: 2, found: 1 }
        ));
    }
}
