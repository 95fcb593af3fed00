//! Estimators built on the forward storage walk `W` driven by
//! `Uhat_k = -R^{-1} U_k`, plus the per-horizon identity that pairs it with
//! the primal walk.

use serde::Serialize;

use super::direct::check_capital;
use super::stats::{quantiles, z_score};
use super::{run_chunks, Estimate, EstimatorError, Settings, CHUNK};
use crate::lcp::MatrixView;
use crate::models::{derive_stream_in, domain, Model};
use crate::orthant::{on_boundary, strictly_dominates, strictly_positive, OrthantVector, ReflectionMatrix};
use crate::skorokhod::ReflectedWalk;

/// Writes `-R^{-1} u` into `out`.
#[inline]
fn dual_increment(rm: &ReflectionMatrix, u: &[f64], out: &mut [f64]) {
    rm.rinv().mul_vec_into(u, out);
    out.iter_mut().for_each(|x| *x = -*x);
}

#[derive(Debug, Clone, Serialize)]
pub struct PEstimate {
    /// Fraction of draws with `-R^{-1}U >> 0`.
    pub p: Estimate,
    /// Hits among the second half of the draws (recurrence of the event).
    pub second_half_hits: u64,
}

pub fn estimate_p(
    model: &Model,
    rm: &ReflectionMatrix,
    n_samples: u64,
    seed: u64,
    settings: Settings,
) -> Result<PEstimate, EstimatorError> {
    if n_samples == 0 {
        return Err(EstimatorError::InvalidArgument("n_samples must be >= 1".into()));
    }
    let d = rm.dim();
    let half = n_samples / 2;
    let chunks = run_chunks(n_samples, settings.workers, |range| {
        let mut rng = derive_stream_in(seed, domain::P_ESTIMATE, range.start / CHUNK);
        let (mut u, mut uh) = (vec![0.0; d], vec![0.0; d]);
        let (mut hits, mut late) = (0u64, 0u64);
        for i in range {
            model.sample_increment_into(&mut rng, &mut u);
            dual_increment(rm, &u, &mut uh);
            if strictly_positive(&uh, settings.strict_tol) {
                hits += 1;
                late += (i >= half) as u64;
            }
        }
        Ok((hits, late))
    })?;
    let (hits, late) = chunks.into_iter().fold((0, 0), |(a, b), (h, l)| (a + h, b + l));
    Ok(PEstimate {
        p: Estimate::proportion(hits, n_samples, "p_hat"),
        second_half_hits: late,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StorageSide {
    /// `b = R^{-1} a`
    pub b: OrthantVector,
    /// Fraction of paths entering `{w >> b}` before touching the boundary.
    pub estimate: Estimate,
    pub step_cap: usize,
    /// Paths that reached `step_cap` without either event.
    pub censored: u64,
    pub censored_fraction: f64,
    pub mean_steps: f64,
}

pub fn estimate_storage_side(
    model: &Model,
    rm: &ReflectionMatrix,
    a: &OrthantVector,
    n_paths: u64,
    seed: u64,
    step_cap: usize,
    settings: Settings,
) -> Result<StorageSide, EstimatorError> {
    check_capital(a, rm, model)?;
    if step_cap == 0 {
        return Err(EstimatorError::InvalidArgument("step_cap must be >= 1".into()));
    }
    let d = rm.dim();
    let b = rm.apply_rinv(a);
    let zero = vec![0.0; d];
    let tol = settings.strict_tol;
    let chunks = run_chunks(n_paths, settings.workers, |range| {
        let mut walk = ReflectedWalk::new(rm, MatrixView::Inverse, &zero);
        let (mut u, mut uh) = (vec![0.0; d], vec![0.0; d]);
        let (mut hits, mut censored, mut steps) = (0u64, 0u64, 0u64);
        for path in range {
            let mut rng = derive_stream_in(seed, domain::STORAGE, path);
            walk.reset(&zero);
            let mut done = false;
            for k in 1..=step_cap {
                model.sample_increment_into(&mut rng, &mut u);
                dual_increment(rm, &u, &mut uh);
                walk.step(&uh)?;
                // b >= 0, so w >> b already excludes the boundary.
                if strictly_dominates(&walk.state, b.as_slice(), tol) {
                    hits += 1;
                } else if !on_boundary(&walk.state, tol) {
                    continue;
                }
                steps += k as u64;
                done = true;
                break;
            }
            if !done {
                censored += 1;
                steps += step_cap as u64;
            }
        }
        Ok((hits, censored, steps))
    })?;
    let (hits, censored, steps) = chunks
        .into_iter()
        .fold((0, 0, 0), |(a, b, c), (h, x, s)| (a + h, b + x, c + s));
    let n = n_paths.max(1) as f64;
    Ok(StorageSide {
        b,
        estimate: Estimate::proportion(hits, n_paths, "storage_theta_before_sigma_bd"),
        step_cap,
        censored,
        censored_fraction: censored as f64 / n,
        mean_steps: steps as f64 / n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaBdRow {
    pub k: usize,
    /// `P(sigma_bd > k)`
    pub survival: Estimate,
    /// `p_hat^k`
    pub geometric: f64,
    pub z: f64,
    /// `P(W_k >> b, sigma_bd > k)`
    pub joint_above_b: Estimate,
    /// `P(W_k >> b | sigma_bd > k)`
    pub conditional_above_b: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaBdTable {
    pub b: OrthantVector,
    pub p_hat: Estimate,
    pub rows: Vec<SigmaBdRow>,
    pub max_abs_z: f64,
}

/// Survival function of `sigma_bd` from forward storage paths against the
/// geometric reference `p_hat^k`; `p_hat` should come from an independent
/// stream. The z-score uses the delta-method error `k p^(k-1) se(p_hat)`.
#[allow(clippy::too_many_arguments)]
pub fn sigma_bd_distribution(
    model: &Model,
    rm: &ReflectionMatrix,
    a: &OrthantVector,
    n_paths: u64,
    seed: u64,
    kmax: usize,
    p_hat: &Estimate,
    settings: Settings,
) -> Result<SigmaBdTable, EstimatorError> {
    check_capital(a, rm, model)?;
    if kmax == 0 {
        return Err(EstimatorError::InvalidArgument("kmax must be >= 1".into()));
    }
    let d = rm.dim();
    let b = rm.apply_rinv(a);
    let zero = vec![0.0; d];
    let tol = settings.strict_tol;
    let chunks = run_chunks(n_paths, settings.workers, |range| {
        let mut walk = ReflectedWalk::new(rm, MatrixView::Inverse, &zero);
        let (mut u, mut uh) = (vec![0.0; d], vec![0.0; d]);
        let mut alive = vec![0u64; kmax];
        let mut above = vec![0u64; kmax];
        for path in range {
            let mut rng = derive_stream_in(seed, domain::STORAGE, path);
            walk.reset(&zero);
            for k in 0..kmax {
                model.sample_increment_into(&mut rng, &mut u);
                dual_increment(rm, &u, &mut uh);
                walk.step(&uh)?;
                if on_boundary(&walk.state, tol) {
                    break;
                }
                alive[k] += 1;
                above[k] += strictly_dominates(&walk.state, b.as_slice(), tol) as u64;
            }
        }
        Ok((alive, above))
    })?;
    let mut alive = vec![0u64; kmax];
    let mut above = vec![0u64; kmax];
    for (al, ab) in chunks {
        for k in 0..kmax {
            alive[k] += al[k];
            above[k] += ab[k];
        }
    }
    let p = p_hat.value;
    let rows: Vec<SigmaBdRow> = (0..kmax)
        .map(|i| {
            let k = i + 1;
            let survival = Estimate::proportion(alive[i], n_paths, "storage_sigma_bd_survival");
            let geometric = p.powi(k as i32);
            let ref_se = k as f64 * p.powi(k as i32 - 1) * p_hat.std_error;
            let z = z_score(survival.value - geometric, survival.std_error.hypot(ref_se));
            SigmaBdRow {
                k,
                geometric,
                z,
                joint_above_b: Estimate::proportion(above[i], n_paths, "storage_joint_above_b"),
                conditional_above_b: if alive[i] > 0 { above[i] as f64 / alive[i] as f64 } else { f64::NAN },
                survival,
            }
        })
        .collect();
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(SigmaBdTable {
        b,
        p_hat: p_hat.clone(),
        rows,
        max_abs_z,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonRow {
    pub n: usize,
    /// `P(dY_n >> 0)` from primal paths started at `a`.
    pub lhs: Estimate,
    /// `P(W_n >> R^{-1}a, sigma_bd > n)` from independent storage paths.
    pub rhs: Estimate,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonTable {
    pub a: OrthantVector,
    pub rows: Vec<HorizonRow>,
    pub max_abs_z: f64,
}

impl HorizonTable {
    pub fn to_csv(&self) -> String {
        use crate::output::{fmt_f64, CsvTable};
        let mut t = CsvTable::new(
            ["n", "lhs", "lhs_se", "rhs", "rhs_se", "z"].iter().map(|s| s.to_string()).collect::<Vec<String>>(),
        );
        for r in &self.rows {
            t.push(vec![
                r.n.to_string(),
                fmt_f64(r.lhs.value),
                fmt_f64(r.lhs.std_error),
                fmt_f64(r.rhs.value),
                fmt_f64(r.rhs.std_error),
                fmt_f64(r.z),
            ]);
        }
        t.render()
    }
}

pub fn per_horizon_identity(
    model: &Model,
    rm: &ReflectionMatrix,
    a: &OrthantVector,
    n_max: usize,
    n_paths: u64,
    seed: u64,
    settings: Settings,
) -> Result<HorizonTable, EstimatorError> {
    check_capital(a, rm, model)?;
    if n_max == 0 {
        return Err(EstimatorError::InvalidArgument("horizon must be >= 1".into()));
    }
    let d = rm.dim();
    let b = rm.apply_rinv(a);
    let zero = vec![0.0; d];
    let tol = settings.strict_tol;
    let chunks = run_chunks(n_paths, settings.workers, |range| {
        let mut primal = ReflectedWalk::new(rm, MatrixView::Reflection, a.as_slice());
        let mut storage = ReflectedWalk::new(rm, MatrixView::Inverse, &zero);
        let (mut u, mut uh) = (vec![0.0; d], vec![0.0; d]);
        let mut lhs = vec![0u64; n_max];
        let mut rhs = vec![0u64; n_max];
        for path in range {
            let mut rng = derive_stream_in(seed, domain::PATHS, path);
            primal.reset(a.as_slice());
            for l in lhs.iter_mut() {
                model.sample_increment_into(&mut rng, &mut u);
                primal.step(&u)?;
                *l += strictly_positive(&primal.push, tol) as u64;
            }
            let mut rng = derive_stream_in(seed, domain::STORAGE, path);
            storage.reset(&zero);
            for r in rhs.iter_mut() {
                model.sample_increment_into(&mut rng, &mut u);
                dual_increment(rm, &u, &mut uh);
                storage.step(&uh)?;
                if on_boundary(&storage.state, tol) {
                    break;
                }
                *r += strictly_dominates(&storage.state, b.as_slice(), tol) as u64;
            }
        }
        Ok((lhs, rhs))
    })?;
    let mut lhs = vec![0u64; n_max];
    let mut rhs = vec![0u64; n_max];
    for (l, r) in chunks {
        for k in 0..n_max {
            lhs[k] += l[k];
            rhs[k] += r[k];
        }
    }
    let rows: Vec<HorizonRow> = (0..n_max)
        .map(|i| {
            let l = Estimate::proportion(lhs[i], n_paths, "primal_ss_push_at_n");
            let r = Estimate::proportion(rhs[i], n_paths, "storage_above_b_before_sigma_bd");
            HorizonRow {
                n: i + 1,
                z: l.z_against(&r),
                lhs: l,
                rhs: r,
            }
        })
        .collect();
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(HorizonTable {
        a: a.clone(),
        rows,
        max_abs_z,
    })
}

/// Descriptive quantile table for the scalar storage walk: `W_n` at several
/// horizons next to `W(sigma_0 - 1)`, the level just before the first return
/// to 0.
#[derive(Debug, Clone, Serialize)]
pub struct LimdistTable {
    pub probs: Vec<f64>,
    pub horizons: Vec<usize>,
    /// `w_quantiles[j][i]`: quantile `probs[i]` of `W_{horizons[j]}`.
    pub w_quantiles: Vec<Vec<f64>>,
    pub pre_return_quantiles: Vec<f64>,
    /// Paths that had not returned to 0 by the largest horizon.
    pub censored_returns: u64,
}

pub const QQ_PROBS: [f64; 8] = [0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];

pub fn limdist_qq(
    model: &Model,
    rm: &ReflectionMatrix,
    n_paths: u64,
    seed: u64,
    horizons: &[usize],
    settings: Settings,
) -> Result<LimdistTable, EstimatorError> {
    if rm.dim() != 1 || model.dim() != 1 {
        return Err(EstimatorError::InvalidArgument("limdist_qq needs d = 1".into()));
    }
    let nmax = horizons.iter().copied().max().unwrap_or(0);
    let tol = settings.strict_tol;
    struct Chunk {
        at: Vec<Vec<f64>>,
        pre: Vec<f64>,
        censored: u64,
    }
    let chunks = run_chunks(n_paths, settings.workers, |range| {
        let mut walk = ReflectedWalk::new(rm, MatrixView::Inverse, &[0.0]);
        let (mut u, mut uh) = ([0.0], [0.0]);
        let mut out = Chunk {
            at: vec![Vec::new(); horizons.len()],
            pre: Vec::new(),
            censored: 0,
        };
        for path in range {
            let mut rng = derive_stream_in(seed, domain::STORAGE, path);
            walk.reset(&[0.0]);
            let mut prev = 0.0;
            let mut returned = false;
            for k in 1..=nmax {
                model.sample_increment_into(&mut rng, &mut u);
                dual_increment(rm, &u, &mut uh);
                walk.step(&uh)?;
                let w = walk.state[0];
                if !returned && w <= tol {
                    out.pre.push(prev);
                    returned = true;
                }
                prev = w;
                for (j, h) in horizons.iter().enumerate() {
                    if *h == k {
                        out.at[j].push(w);
                    }
                }
            }
            out.censored += (!returned) as u64;
        }
        Ok(out)
    })?;
    let mut at = vec![Vec::new(); horizons.len()];
    let mut pre = Vec::new();
    let mut censored = 0;
    for c in chunks {
        for (a, x) in at.iter_mut().zip(c.at) {
            a.extend(x);
        }
        pre.extend(c.pre);
        censored += c.censored;
    }
    Ok(LimdistTable {
        probs: QQ_PROBS.to_vec(),
        horizons: horizons.to_vec(),
        w_quantiles: at.iter().map(|x| quantiles(x, &QQ_PROBS)).collect(),
        pre_return_quantiles: quantiles(&pre, &QQ_PROBS),
        censored_returns: censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ClaimConfig, ModelConfig};

    fn pm(q: f64) -> (Model, ReflectionMatrix) {
        let rm = ReflectionMatrix::identity(1).unwrap();
        let (m, _) = build_model(&ModelConfig::plus_minus(q), &rm).unwrap();
        (m, rm)
    }

    #[test]
    fn unit_walk_storage_side_is_q() {
        let (m, rm) = pm(0.25);
        let s = estimate_storage_side(&m, &rm, &OrthantVector::zeros(1), 20_000, 3, 1000, Settings::default())
            .unwrap();
        assert!(s.estimate.z_against_value(0.25).abs() < 4.0);
        assert_eq!(s.censored, 0);
        let p = estimate_p(&m, &rm, 20_000, 3, Settings::default()).unwrap();
        assert!(p.p.z_against_value(0.25).abs() < 4.0);
        assert!(p.second_half_hits > 0);
    }

    #[test]
    fn unit_walk_horizon_two_is_q_squared() {
        let (m, rm) = pm(0.25);
        let t = per_horizon_identity(&m, &rm, &OrthantVector::zeros(1), 2, 40_000, 4, Settings::default()).unwrap();
        for side in [&t.rows[1].lhs, &t.rows[1].rhs] {
            assert!(side.z_against_value(0.0625).abs() < 4.0, "{side:?}");
        }
    }

    #[test]
    fn no_claims_storage_is_zero() {
        let rm = ReflectionMatrix::identity(2).unwrap();
        let cfg = ModelConfig {
            claims: Some(vec![ClaimConfig::Deterministic { size: 0.0 }; 2]),
            ..ModelConfig::cl_exponential(vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0])
        };
        let (m, _) = build_model(&cfg, &rm).unwrap();
        let a = OrthantVector::zeros(2);
        let s = estimate_storage_side(&m, &rm, &a, 1000, 1, 10, Settings::default()).unwrap();
        assert_eq!(s.estimate.value, 0.0);
        assert_eq!(s.mean_steps, 1.0);
        let p = estimate_p(&m, &rm, 1000, 1, Settings::default()).unwrap();
        let t = sigma_bd_distribution(&m, &rm, &a, 1000, 1, 3, &p.p, Settings::default()).unwrap();
        assert_eq!(t.rows[0].survival.value, 0.0);
    }

    #[test]
    fn sigma_bd_first_row_matches_p() {
        let (m, rm) = pm(0.3);
        let p = estimate_p(&m, &rm, 50_000, 9, Settings::default()).unwrap();
        let t = sigma_bd_distribution(&m, &rm, &OrthantVector::zeros(1), 50_000, 9, 4, &p.p, Settings::default())
            .unwrap();
        assert!(t.rows[0].z.abs() < 4.0);
    }

    #[test]
    fn limdist_requires_scalar_model() {
        let rm = ReflectionMatrix::identity(2).unwrap();
        let (m, _) = build_model(&ModelConfig::cl_exponential(vec![1.0; 2], vec![1.0; 2], vec![2.0; 2]), &rm).unwrap();
        assert!(limdist_qq(&m, &rm, 10, 1, &[10], Settings::default()).is_err());
        let (m, rm) = pm(0.25);
        let t = limdist_qq(&m, &rm, 500, 1, &[10, 100], Settings::default()).unwrap();
        assert_eq!(t.w_quantiles.len(), 2);
    }
}
