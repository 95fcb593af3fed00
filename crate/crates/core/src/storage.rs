//! The dual storage network: the SP with matrix `R^{-1}` driven by
//! `uhat_k = -R^{-1} u_{n+1-k}`, its hitting times, the auxiliary LCP chain,
//! and exact pathwise duality verdicts at a fixed horizon.

use serde::Serialize;
use thiserror::Error;

use crate::lcp::{solve_lcp, solve_lcp_enum, LcpError, MatrixView, MAX_ENUM_DIM};
use crate::orthant::{
    dominates, is_zero, max_abs, max_abs_diff, on_boundary, partially_dominates,
    strictly_dominates, strictly_positive, OrthantVector, ReflectionMatrix,
};
use crate::output::{fmt_f64, vector_columns, CsvTable};
use crate::skorokhod::{
    check_ruin_equivalences, solve_sp, step_ruin, PathViolation, ReflectedWalk, SkorokhodError,
    SpPath, StepEquivalence, INVARIANT_TOL, VALUE_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StorageError {
    #[error("LCP failed at step {step}: {source}")]
    Lcp { step: usize, source: LcpError },
    #[error(transparent)]
    Primal(#[from] SkorokhodError),
    #[error("auxiliary chain disagrees with the primal path at step {step} (residual {residual:e})")]
    AuxChainViolation { step: usize, residual: f64 },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
}

impl StorageError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Lcp { .. } => "LcpFailure",
            Self::Primal(e) => e.kind(),
            Self::AuxChainViolation { .. } => "AuxChainViolation",
            Self::EmptyHorizon => "EmptyHorizon",
        }
    }
}

/// `uhat_k = -R^{-1} u_{n+1-k}`.
pub fn reverse_inputs(u: &[OrthantVector], m: &ReflectionMatrix) -> Vec<OrthantVector> {
    u.iter().rev().map(|x| m.apply_rinv(x).neg()).collect()
}

/// `Uhat_k = -R^{-1} U_k` without reversal (the forward-built storage walk).
pub fn forward_inputs(u: &[OrthantVector], m: &ReflectionMatrix) -> Vec<OrthantVector> {
    u.iter().map(|x| m.apply_rinv(x).neg()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StoragePath {
    pub uhat: Vec<OrthantVector>,
    /// `v_0 .. v_n`
    pub v: Vec<OrthantVector>,
    /// `w_0 .. w_n`
    pub w: Vec<OrthantVector>,
    /// `dv_1 .. dv_n` (index `k - 1`)
    pub dv: Vec<OrthantVector>,
    pub forward: bool,
}

impl StoragePath {
    pub fn horizon(&self) -> usize {
        self.uhat.len()
    }

    pub fn dim(&self) -> usize {
        self.w[0].dim()
    }

    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut header = vec!["k".to_string()];
        for p in ["uhat", "w", "dv", "v"] {
            header.extend(vector_columns(p, d));
        }
        let mut t = CsvTable::new(header);
        let zero = OrthantVector::zeros(d);
        for k in 0..=self.horizon() {
            let (uh, dv) = if k == 0 {
                (&zero, &zero)
            } else {
                (&self.uhat[k - 1], &self.dv[k - 1])
            };
            let mut row = vec![k.to_string()];
            for x in [uh, &self.w[k], dv, &self.v[k]] {
                row.extend(x.iter().map(|c| fmt_f64(*c)));
            }
            t.push(row);
        }
        t.render()
    }

    pub fn check_invariants(&self, m: &ReflectionMatrix) -> Option<PathViolation> {
        let d = self.dim();
        let mut partial = vec![0.0; d];
        for k in 1..=self.horizon() {
            for (p, x) in partial.iter_mut().zip(self.uhat[k - 1].iter()) {
                *p += x;
            }
            let rv = m.rinv().mul_vec(self.v[k].as_slice());
            let scale = 1.0 + max_abs(&partial).max(self.v[k].max_abs());
            let eq = (0..d).fold(0.0_f64, |r, i| r.max((self.w[k][i] - partial[i] - rv[i]).abs()));
            let neg = self.w[k].iter().chain(self.dv[k - 1].iter()).fold(0.0_f64, |r, x| r.max(-x));
            let comp: f64 = self.w[k].iter().zip(self.dv[k - 1].iter()).map(|(a, b)| a * b).sum();
            for (name, amount, tol) in [
                ("storage_equation", eq, INVARIANT_TOL * scale),
                ("nonnegativity", neg, INVARIANT_TOL),
                ("complementarity", comp, INVARIANT_TOL * scale),
            ] {
                if amount > tol {
                    return Some(PathViolation { step: k, invariant: name, amount });
                }
            }
        }
        None
    }
}

/// Recursively solves `LCP(w_{k-1} + uhat_k, R^{-1})` from `w_0 = v_0 = 0`.
pub fn solve_storage(
    uhat: &[OrthantVector],
    m: &ReflectionMatrix,
    forward: bool,
) -> Result<StoragePath, StorageError> {
    let d = m.dim();
    let n = uhat.len();
    let mut walk = ReflectedWalk::new(m, MatrixView::Inverse, &vec![0.0; d]);
    let mut v = Vec::with_capacity(n + 1);
    let mut w = Vec::with_capacity(n + 1);
    let mut dv = Vec::with_capacity(n);
    v.push(OrthantVector::zeros(d));
    w.push(OrthantVector::zeros(d));
    for (k, x) in uhat.iter().enumerate() {
        walk.step(x.as_slice())
            .map_err(|source| StorageError::Lcp { step: k + 1, source })?;
        v.push(OrthantVector::from_raw(walk.cumulative.clone()));
        w.push(OrthantVector::from_raw(walk.state.clone()));
        dv.push(OrthantVector::from_raw(walk.push.clone()));
    }
    Ok(StoragePath {
        uhat: uhat.to_vec(),
        v,
        w,
        dv,
        forward,
    })
}

/// First hitting / entrance times of `w_1 .. w_n`; `None` when not reached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingTimes {
    /// First `k` with `w_k` on the boundary of the orthant.
    pub sigma_bd: Option<usize>,
    /// First `k` with `w_k = 0`.
    pub sigma_0: Option<usize>,
    /// First `k` with `w_k >> b`.
    pub theta_open: Option<usize>,
    /// First `k` with `w_k > b`.
    pub theta_gt: Option<usize>,
    /// First `k` with `w_k >= b`.
    pub theta_geq: Option<usize>,
    pub b: OrthantVector,
}

/// Running first-time tracker; shared by [`hitting_times`] and the Monte Carlo walkers.
#[derive(Debug, Clone, Copy, Default)]
pub struct HitTracker {
    pub sigma_bd: Option<usize>,
    pub sigma_0: Option<usize>,
    pub theta_open: Option<usize>,
    pub theta_gt: Option<usize>,
    pub theta_geq: Option<usize>,
}

impl HitTracker {
    #[inline]
    pub fn observe(&mut self, k: usize, w: &[f64], b: &[f64], tol: f64) {
        fn first(slot: &mut Option<usize>, k: usize, hit: bool) {
            if slot.is_none() && hit {
                *slot = Some(k);
            }
        }
        first(&mut self.sigma_bd, k, on_boundary(w, tol));
        first(&mut self.sigma_0, k, is_zero(w, tol));
        first(&mut self.theta_open, k, strictly_dominates(w, b, tol));
        first(&mut self.theta_gt, k, partially_dominates(w, b, tol));
        first(&mut self.theta_geq, k, dominates(w, b, tol));
    }
}

pub fn hitting_times(path: &StoragePath, b: &OrthantVector, strict_tol: f64) -> HittingTimes {
    let mut t = HitTracker::default();
    for k in 1..=path.horizon() {
        t.observe(k, path.w[k].as_slice(), b.as_slice(), strict_tol);
    }
    HittingTimes {
        sigma_bd: t.sigma_bd,
        sigma_0: t.sigma_0,
        theta_open: t.theta_open,
        theta_gt: t.theta_gt,
        theta_geq: t.theta_geq,
        b: b.clone(),
    }
}

/// The auxiliary chain `dxi_k = Phi(-R^{-1} dxi_{k-1} - R^{-1} u_k, R^{-1})`,
/// `zeta_k = Psi(...)`, started from `dxi_0 = a`.
#[derive(Debug, Clone, Serialize)]
pub struct AuxSequence {
    pub xi: Vec<OrthantVector>,
    pub zeta: Vec<OrthantVector>,
}

/// Builds the auxiliary chain, solving each `R^{-1}` problem by enumeration
/// directly on `R^{-1}` (independent of the primal solver) when `d <= 14`, and
/// checks it against the primal path: `dxi_k = z_k`, `zeta_k = dy_k`.
pub fn aux_sequence(
    a: &OrthantVector,
    u: &[OrthantVector],
    m: &ReflectionMatrix,
) -> Result<AuxSequence, StorageError> {
    let primal = solve_sp(a, u, m)?;
    let (aux, failure) = aux_chain(a, u, m, &primal)?;
    match failure {
        Some((step, residual)) => Err(StorageError::AuxChainViolation { step, residual }),
        None => Ok(aux),
    }
}

type AuxFailure = Option<(usize, f64)>;

fn aux_chain(
    a: &OrthantVector,
    u: &[OrthantVector],
    m: &ReflectionMatrix,
    primal: &SpPath,
) -> Result<(AuxSequence, AuxFailure), StorageError> {
    let mut xi = Vec::with_capacity(u.len());
    let mut zeta = Vec::with_capacity(u.len());
    let mut prev = a.clone();
    let mut failure = None;
    for (k, uk) in u.iter().enumerate() {
        let theta = m.apply_rinv(&prev.add(uk)).neg();
        let sol = if m.dim() <= MAX_ENUM_DIM {
            solve_lcp_enum(&theta, m, MatrixView::Inverse)
        } else {
            solve_lcp(&theta, m, MatrixView::Inverse)
        }
        .map_err(|source| StorageError::Lcp { step: k + 1, source })?;
        let residual = sol
            .xi
            .max_abs_diff(&primal.z[k + 1])
            .max(sol.zeta.max_abs_diff(&primal.dy[k]));
        let scale = 1.0 + primal.z[k + 1].max_abs().max(primal.dy[k].max_abs());
        if failure.is_none() && residual > VALUE_TOL * scale {
            failure = Some((k + 1, residual));
        }
        prev = sol.xi.clone();
        xi.push(sol.xi);
        zeta.push(sol.zeta);
    }
    Ok((AuxSequence { xi, zeta }, failure))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equivalence {
    pub id: &'static str,
    pub statement: &'static str,
    pub lhs: bool,
    pub rhs: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueIdentity {
    pub id: &'static str,
    pub statement: &'static str,
    /// Whether the condition under which the identity is claimed holds.
    pub applicable: bool,
    pub residual: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: &'static str,
    pub applicable: bool,
    pub holds: bool,
    pub first_failure: Option<usize>,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Witnesses {
    pub y_n: OrthantVector,
    pub z_n: OrthantVector,
    pub dy_n: OrthantVector,
    pub y0_n: OrthantVector,
    pub z0_n: OrthantVector,
    pub dy0_n: OrthantVector,
    pub v_n: OrthantVector,
    pub w_n: OrthantVector,
    /// `sum_l -R^{-1} u_l`
    pub s_n: OrthantVector,
    pub ruin: crate::skorokhod::RuinRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityVerdict {
    pub n: usize,
    pub strict_tol: f64,
    pub a: OrthantVector,
    pub equivalences: Vec<Equivalence>,
    pub value_identities: Vec<ValueIdentity>,
    pub checks: Vec<Check>,
    pub step_equivalence_failure: Option<StepEquivalence>,
    pub hitting_times: HittingTimes,
    pub witnesses: Witnesses,
    pub failures: usize,
    pub passed: bool,
}

impl DualityVerdict {
    pub fn equivalence(&self, id: &str) -> Option<&Equivalence> {
        self.equivalences.iter().find(|e| e.id == id)
    }

    /// Names of every failed equivalence, identity or check.
    pub fn failed_ids(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = self.equivalences.iter().filter(|e| !e.holds).map(|e| e.id).collect();
        out.extend(self.value_identities.iter().filter(|e| !e.holds).map(|e| e.id));
        out.extend(self.checks.iter().filter(|e| !e.holds).map(|e| e.id));
        if self.step_equivalence_failure.is_some() {
            out.push("step_ruin_criteria");
        }
        out
    }
}

fn before(t: Option<usize>, n: usize) -> bool {
    t.is_some_and(|t| t <= n)
}

fn after(t: Option<usize>, n: usize) -> bool {
    t.is_none_or(|t| t > n)
}

fn equivalence(id: &'static str, statement: &'static str, lhs: bool, rhs: bool) -> Equivalence {
    Equivalence {
        id,
        statement,
        lhs,
        rhs,
        holds: lhs == rhs,
    }
}

fn identity(id: &'static str, statement: &'static str, applicable: bool, residual: f64, scale: f64) -> ValueIdentity {
    let residual = if applicable { residual } else { 0.0 };
    ValueIdentity {
        id,
        statement,
        applicable,
        residual,
        holds: residual <= VALUE_TOL * scale,
    }
}

/// Solves the primal SP from `a` and from `0`, reverses the increments at
/// horizon `n = u.len()`, solves the storage network, and evaluates every
/// pathwise duality statement at `n`. Failures are reported as data.
pub fn duality_verdict(
    a: &OrthantVector,
    u: &[OrthantVector],
    m: &ReflectionMatrix,
    strict_tol: f64,
) -> Result<DualityVerdict, StorageError> {
    let n = u.len();
    if n == 0 {
        return Err(StorageError::EmptyHorizon);
    }
    let d = m.dim();
    let tol = strict_tol;
    let primal = solve_sp(a, u, m)?;
    let zero = OrthantVector::zeros(d);
    let primal0 = solve_sp(&zero, u, m)?;
    let dual = solve_storage(&reverse_inputs(u, m), m, false)?;
    let b = m.apply_rinv(a);
    let hits = hitting_times(&dual, &b, tol);

    let s_n = dual.uhat.iter().fold(zero.clone(), |acc, x| acc.add(x));
    let (y_n, z_n, dy_n) = (&primal.y[n], &primal.z[n], &primal.dy[n - 1]);
    let (y0_n, z0_n, dy0_n) = (&primal0.y[n], &primal0.z[n], &primal0.dy[n - 1]);
    let (v_n, w_n) = (&dual.v[n], &dual.w[n]);
    let v_zero = v_n.is_zero(tol);

    let ruin = step_ruin(z_n.as_slice(), dy_n.as_slice(), tol);
    let ruin0 = step_ruin(z0_n.as_slice(), dy0_n.as_slice(), tol);
    let (w, bs) = (w_n.as_slice(), b.as_slice());

    let equivalences = vec![
        equivalence(
            "ss",
            "dy_n >> 0 iff theta_open <= n < sigma_bd and w_n >> R^-1 a",
            ruin.ssruin,
            before(hits.theta_open, n) && after(hits.sigma_bd, n) && strictly_dominates(w, bs, tol),
        ),
        equivalence(
            "s",
            "z_n = 0 and dy_n > 0 iff theta_gt <= n < sigma_0, v_n = 0 and w_n > R^-1 a",
            ruin.sruin,
            before(hits.theta_gt, n) && after(hits.sigma_0, n) && v_zero && partially_dominates(w, bs, tol),
        ),
        equivalence(
            "r",
            "z_n = 0 iff theta_geq <= n, v_n = 0 and w_n >= R^-1 a",
            ruin.ruin,
            before(hits.theta_geq, n) && v_zero && dominates(w, bs, tol),
        ),
        equivalence(
            "ss_zero_capital",
            "dy0_n >> 0 iff n < sigma_bd",
            ruin0.ssruin,
            after(hits.sigma_bd, n),
        ),
        equivalence(
            "s_zero_capital",
            "z0_n = 0 and dy0_n > 0 iff v_n = 0 and n < sigma_0",
            ruin0.sruin,
            v_zero && after(hits.sigma_0, n),
        ),
        equivalence("r_zero_capital", "z0_n = 0 iff v_n = 0", ruin0.ruin, v_zero),
        equivalence(
            "ss_shift",
            "dy_n >> 0 iff dy0_n >> 0 and y0_n >> R^-1 a",
            ruin.ssruin,
            ruin0.ssruin && strictly_dominates(y0_n.as_slice(), bs, tol),
        ),
        equivalence(
            "r_shift",
            "z_n = 0 iff z0_n = 0 and y0_n >= R^-1 a",
            ruin.ruin,
            ruin0.ruin && dominates(y0_n.as_slice(), bs, tol),
        ),
    ];

    let scale = 1.0 + y_n.max_abs().max(y0_n.max_abs()).max(w_n.max_abs()).max(s_n.max_abs());
    let expected_y = s_n.sub(&b);
    let value_identities = vec![
        identity(
            "ruin_value",
            "on z_n = 0: v_n = 0 and y_n = -R^-1 a + sum(-R^-1 u)",
            ruin.ruin,
            y_n.max_abs_diff(&expected_y).max(v_n.max_abs()).max(z_n.max_abs()),
            scale,
        ),
        identity(
            "zero_capital_value",
            "on z0_n = 0: y0_n = w_n = sum(-R^-1 u)",
            ruin0.ruin,
            y0_n.max_abs_diff(w_n).max(w_n.max_abs_diff(&s_n)),
            scale,
        ),
        identity(
            "capital_shift_value",
            "on z_n = 0: y_n = y0_n - R^-1 a and z_n = z0_n",
            ruin.ruin,
            y_n.max_abs_diff(&y0_n.sub(&b)).max(z_n.max_abs_diff(z0_n)),
            scale,
        ),
    ];

    let mut checks = Vec::new();
    let (_, aux_failure) = aux_chain(a, u, m, &primal)?;
    checks.push(Check {
        id: "aux_chain",
        applicable: true,
        holds: aux_failure.is_none(),
        first_failure: aux_failure.map(|f| f.0),
        residual: aux_failure.map_or(0.0, |f| f.1),
    });
    let connc1_fail = if ruin.ssruin {
        if !v_zero {
            Some(n)
        } else {
            (1..=n).find(|&k| !strictly_positive(dual.w[k].as_slice(), tol))
        }
    } else {
        None
    };
    checks.push(Check {
        id: "ss_implies_interior_dual",
        applicable: ruin.ssruin,
        holds: connc1_fail.is_none(),
        first_failure: connc1_fail,
        residual: 0.0,
    });
    let (hat_fail, hat_res) = reinforcement_identity(&dual, m, tol);
    checks.push(Check {
        id: "reinforcement_identity",
        applicable: true,
        holds: hat_fail.is_none(),
        first_failure: hat_fail,
        residual: hat_res,
    });
    let primal_bad = primal.check_invariants(m).or_else(|| primal0.check_invariants(m));
    checks.push(Check {
        id: "primal_invariants",
        applicable: true,
        holds: primal_bad.is_none(),
        first_failure: primal_bad.as_ref().map(|v| v.step),
        residual: primal_bad.as_ref().map_or(0.0, |v| v.amount),
    });
    let dual_bad = dual.check_invariants(m);
    checks.push(Check {
        id: "dual_invariants",
        applicable: true,
        holds: dual_bad.is_none(),
        first_failure: dual_bad.as_ref().map(|v| v.step),
        residual: dual_bad.as_ref().map_or(0.0, |v| v.amount),
    });

    let step_equivalence_failure = check_ruin_equivalences(&primal, m, tol);
    let ruin_record = crate::skorokhod::detect_ruin(&primal, m, tol).ok().unwrap_or_default();

    let mut verdict = DualityVerdict {
        n,
        strict_tol,
        a: a.clone(),
        equivalences,
        value_identities,
        checks,
        step_equivalence_failure,
        hitting_times: hits,
        witnesses: Witnesses {
            y_n: y_n.clone(),
            z_n: z_n.clone(),
            dy_n: dy_n.clone(),
            y0_n: y0_n.clone(),
            z0_n: z0_n.clone(),
            dy0_n: dy0_n.clone(),
            v_n: v_n.clone(),
            w_n: w_n.clone(),
            s_n,
            ruin: ruin_record,
        },
        failures: 0,
        passed: false,
    };
    verdict.failures = verdict.failed_ids().len();
    verdict.passed = verdict.failures == 0;
    Ok(verdict)
}

/// Checks `R^-1_ii dv_i = -[w_{k-1,i} + uhat_{k,i} + sum_{j != i} R^-1_ij dv_j]`
/// wherever `dv_{k,i} > tol`. Returns the first failing step and the largest residual.
pub fn reinforcement_identity(path: &StoragePath, m: &ReflectionMatrix, tol: f64) -> (Option<usize>, f64) {
    let d = path.dim();
    let rinv = m.rinv();
    let mut first = None;
    let mut worst = 0.0_f64;
    for k in 1..=path.horizon() {
        let dv = path.dv[k - 1].as_slice();
        for i in (0..d).filter(|&i| dv[i] > tol) {
            let inflow: f64 = (0..d).filter(|&j| j != i).map(|j| rinv.get(i, j) * dv[j]).sum();
            let rhs = -(path.w[k - 1][i] + path.uhat[k - 1][i] + inflow);
            let res = (rinv.get(i, i) * dv[i] - rhs).abs();
            let scale = 1.0 + max_abs(dv).max(path.w[k - 1].max_abs()).max(path.uhat[k - 1].max_abs());
            worst = worst.max(res);
            if first.is_none() && res > VALUE_TOL * scale {
                first = Some(k);
            }
        }
    }
    (first, worst)
}

/// `max |a - b|` over two equally long vector sequences.
pub fn sequence_distance(a: &[OrthantVector], b: &[OrthantVector]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max(max_abs_diff(x.as_slice(), y.as_slice())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skorokhod::DEFAULT_STRICT_TOL as TOL;

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
    fn reversal() {
        let uh = reverse_inputs(&seq(&[&[-1.0, -1.0]]), &rm());
        assert!(uh[0].max_abs_diff(&v(&[2.0, 2.0])) < 1e-12);
        let id = ReflectionMatrix::identity(2).unwrap();
        let uh = reverse_inputs(&seq(&[&[1.0, 2.0], &[3.0, -4.0]]), &id);
        assert_eq!(uh[0].as_slice(), &[-3.0, 4.0]);
        assert_eq!(uh[1].as_slice(), &[-1.0, -2.0]);
    }

    #[test]
    fn storage_steps() {
        let p = solve_storage(&seq(&[&[2.0, 2.0]]), &rm(), false).unwrap();
        assert_eq!(p.w[1].as_slice(), &[2.0, 2.0]);
        assert_eq!(p.v[1].as_slice(), &[0.0, 0.0]);

        let p = solve_storage(&seq(&[&[-1.0, -1.0]]), &rm(), false).unwrap();
        assert!(p.dv[0].max_abs_diff(&v(&[0.5, 0.5])) < 1e-12);
        assert_eq!(p.w[1].as_slice(), &[0.0, 0.0]);
        assert!(p.check_invariants(&rm()).is_none());

        let id = ReflectionMatrix::identity(1).unwrap();
        let p = solve_storage(&seq(&[&[-2.0]]), &id, false).unwrap();
        assert_eq!(p.w[1].as_slice(), &[0.0]);
        assert_eq!(p.v[1].as_slice(), &[2.0]);
    }

    fn path_with_w(w: &[f64]) -> StoragePath {
        let d = w.len();
        StoragePath {
            uhat: vec![v(w)],
            v: vec![OrthantVector::zeros(d); 2],
            w: vec![OrthantVector::zeros(d), v(w)],
            dv: vec![OrthantVector::zeros(d)],
            forward: false,
        }
    }

    #[test]
    fn hitting_time_examples() {
        let h = hitting_times(&path_with_w(&[2.0, 2.0]), &v(&[0.0, 0.0]), TOL);
        assert_eq!(h.theta_open, Some(1));
        assert_eq!(h.sigma_bd, None);

        let h = hitting_times(&path_with_w(&[2.0, 0.0]), &v(&[0.0, 0.0]), TOL);
        assert_eq!(h.sigma_bd, Some(1));
        assert_eq!(h.theta_gt, Some(1));
        assert_eq!(h.theta_open, None);
        assert_eq!(h.sigma_0, None);

        let h = hitting_times(&path_with_w(&[2.0, 2.0]), &v(&[2.0, 2.0]), TOL);
        assert_eq!(h.theta_geq, Some(1));
        assert_eq!(h.theta_gt, None);
        assert_eq!(h.theta_open, None);
    }

    #[test]
    fn aux_examples() {
        let s = aux_sequence(&v(&[0.0, 0.0]), &seq(&[&[-1.0, -1.0]]), &rm()).unwrap();
        assert_eq!(s.xi[0].as_slice(), &[0.0, 0.0]);
        assert!(s.zeta[0].max_abs_diff(&v(&[2.0, 2.0])) < 1e-12);

        let s = aux_sequence(&v(&[1.0, 1.0]), &seq(&[&[1.0, 0.0]]), &rm()).unwrap();
        assert!(s.xi[0].max_abs_diff(&v(&[2.0, 1.0])) < 1e-12);
        assert_eq!(s.zeta[0].as_slice(), &[0.0, 0.0]);

        let id = ReflectionMatrix::identity(1).unwrap();
        let s = aux_sequence(&v(&[0.0]), &seq(&[&[-3.0]]), &id).unwrap();
        assert_eq!(s.xi[0].as_slice(), &[0.0]);
        assert_eq!(s.zeta[0].as_slice(), &[3.0]);
    }

    #[test]
    fn verdict_full_push() {
        let r = duality_verdict(&v(&[0.0, 0.0]), &seq(&[&[-1.0, -1.0]]), &rm(), TOL).unwrap();
        assert!(r.passed, "{:?}", r.failed_ids());
        let ss = r.equivalence("ss").unwrap();
        assert!(ss.lhs && ss.rhs);
        assert!(r.witnesses.y_n.max_abs_diff(&v(&[2.0, 2.0])) < 1e-12);
        assert!(r.witnesses.w_n.max_abs_diff(&v(&[2.0, 2.0])) < 1e-12);
    }

    #[test]
    fn verdict_partial_push() {
        let r = duality_verdict(&v(&[0.0, 0.0]), &seq(&[&[-2.0, 1.0]]), &rm(), TOL).unwrap();
        assert!(r.passed, "{:?}", r.failed_ids());
        let s = r.equivalence("s").unwrap();
        assert!(s.lhs && s.rhs);
        let ss = r.equivalence("ss").unwrap();
        assert!(!ss.lhs && !ss.rhs);
        assert!(r.witnesses.w_n.max_abs_diff(&v(&[2.0, 0.0])) < 1e-12);
        assert_eq!(r.hitting_times.sigma_0, None);
    }

    #[test]
    fn verdict_no_ruin() {
        let r = duality_verdict(&v(&[5.0, 5.0]), &seq(&[&[1.0, 1.0]]), &rm(), TOL).unwrap();
        assert!(r.passed);
        for id in ["ss", "s", "r"] {
            let e = r.equivalence(id).unwrap();
            assert!(!e.lhs && !e.rhs);
        }
    }

    #[test]
    fn converse_fails_for_coupled_matrix() {
        // exact in binary: z_2 = (1/16, 0), dy_2 = (0, 3/8); w_1 = (1/16, 5/8), w_2 = (15/16, 3/8)
        let m = ReflectionMatrix::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.0]]).unwrap();
        let u = seq(&[&[-1.0, 0.25], &[0.25, -0.625]]);
        let r = duality_verdict(&v(&[0.0, 0.0]), &u, &m, TOL).unwrap();
        assert_eq!(r.witnesses.z_n.as_slice(), &[0.0625, 0.0]);
        assert_eq!(r.witnesses.w_n.as_slice(), &[0.9375, 0.375]);
        assert_eq!(r.witnesses.v_n.as_slice(), &[0.0, 0.0]);
        for id in ["ss", "s", "r", "ss_zero_capital", "s_zero_capital", "r_zero_capital"] {
            let e = r.equivalence(id).unwrap();
            assert!(!e.lhs && e.rhs, "{id}");
        }
        for c in &r.checks {
            assert!(c.holds, "{}", c.id);
        }
    }

    #[test]
    fn s_converse_fails_on_exact_tie() {
        // R = I: z_2 = 0 with dy_2 = 0, while w_1 = (0, 1), w_2 = (1, 0) never reach 0
        let m = ReflectionMatrix::identity(2).unwrap();
        let u = seq(&[&[-1.0, 1.0], &[0.0, -1.0]]);
        let r = duality_verdict(&v(&[0.0, 0.0]), &u, &m, TOL).unwrap();
        let e = r.equivalence("s").unwrap();
        assert!(!e.lhs && e.rhs);
        assert!(r.equivalence("r").unwrap().holds);
        assert!(r.equivalence("ss").unwrap().holds);
    }

    #[test]
    fn verdict_multi_step_scalar() {
        let id = ReflectionMatrix::identity(1).unwrap();
        let r = duality_verdict(&v(&[1.0]), &seq(&[&[-3.0], &[1.0], &[-2.0]]), &id, TOL).unwrap();
        assert!(r.passed, "{:?}", r.failed_ids());
        let e = r.equivalence("r").unwrap();
        assert!(e.lhs);
        assert!(duality_verdict(&v(&[1.0]), &[], &id, TOL).is_err());
    }
}
