//! Estimators that run the primal reflected walk forward in time.

use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::{run_chunks, Estimate, EstimatorError, Settings};
use crate::lcp::MatrixView;
use crate::models::{derive_stream_in, domain, Model};
use crate::orthant::{strictly_positive, OrthantVector, ReflectionMatrix};
use crate::skorokhod::{step_ruin, ReflectedWalk};

/// Fractions of paths ruined by step `horizon`; lower bounds on the
/// probabilities of ruin in finite time (no extrapolation past the horizon).
#[derive(Debug, Clone, Serialize)]
pub struct DirectRuin {
    pub a: OrthantVector,
    pub horizon: usize,
    pub ss: Estimate,
    pub s: Estimate,
    pub r: Estimate,
    pub note: &'static str,
}

const TRUNCATION_NOTE: &str = "paths not ruined by the horizon count as survivors";

pub(crate) fn check_capital(a: &OrthantVector, rm: &ReflectionMatrix, model: &Model) -> Result<(), EstimatorError> {
    if a.dim() != rm.dim() || model.dim() != rm.dim() {
        return Err(EstimatorError::InvalidArgument(format!(
            "dimensions differ: a {}, matrix {}, model {}",
            a.dim(),
            rm.dim(),
            model.dim()
        )));
    }
    if a.iter().any(|x| *x < 0.0) {
        return Err(EstimatorError::InvalidArgument("initial capital must be >= 0".into()));
    }
    Ok(())
}

fn check_positive(name: &str, x: usize) -> Result<(), EstimatorError> {
    if x == 0 {
        Err(EstimatorError::InvalidArgument(format!("{name} must be >= 1")))
    } else {
        Ok(())
    }
}

/// Counts per ruin notion for one initial capital, stopping each path at its
/// first ss-ruin (which is also a ruin and an s-ruin at the same step).
pub fn estimate_ruin_direct(
    model: &Model,
    rm: &ReflectionMatrix,
    a: &OrthantVector,
    horizon: usize,
    n_paths: u64,
    seed: u64,
    settings: Settings,
) -> Result<DirectRuin, EstimatorError> {
    let rows = ruin_sweep(model, rm, std::slice::from_ref(a), horizon, n_paths, seed, settings)?;
    let row = rows.into_iter().next().expect("one capital");
    Ok(DirectRuin {
        a: a.clone(),
        horizon,
        ss: row.ss,
        s: row.s,
        r: row.r,
        note: TRUNCATION_NOTE,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub a: OrthantVector,
    pub ss: Estimate,
    pub s: Estimate,
    pub r: Estimate,
}

/// Direct ruin fractions for several capitals driven by the same increments
/// (common random numbers), so the comparison theorem makes the ss column
/// monotone pathwise.
pub fn ruin_sweep(
    model: &Model,
    rm: &ReflectionMatrix,
    caps: &[OrthantVector],
    horizon: usize,
    n_paths: u64,
    seed: u64,
    settings: Settings,
) -> Result<Vec<SweepRow>, EstimatorError> {
    check_positive("horizon", horizon)?;
    for a in caps {
        check_capital(a, rm, model)?;
    }
    let d = rm.dim();
    let m = caps.len();
    let tol = settings.strict_tol;
    let chunks = run_chunks(n_paths, settings.workers, |range| {
        let mut walks: Vec<ReflectedWalk> =
            caps.iter().map(|a| ReflectedWalk::new(rm, MatrixView::Reflection, a.as_slice())).collect();
        let mut counts = vec![[0u64; 3]; m];
        let mut u = vec![0.0; d];
        let mut flags = vec![[false; 3]; m];
        for path in range {
            let mut rng = derive_stream_in(seed, domain::PATHS, path);
            for (w, a) in walks.iter_mut().zip(caps) {
                w.reset(a.as_slice());
            }
            flags.iter_mut().for_each(|f| *f = [false; 3]);
            let mut open = m;
            for _ in 0..horizon {
                model.sample_increment_into(&mut rng, &mut u);
                for (w, f) in walks.iter_mut().zip(flags.iter_mut()) {
                    if f[0] {
                        continue;
                    }
                    w.step(&u)?;
                    let s = step_ruin(&w.state, &w.push, tol);
                    f[1] |= s.sruin;
                    f[2] |= s.ruin;
                    if s.ssruin {
                        *f = [true; 3];
                        open -= 1;
                    }
                }
                if open == 0 {
                    break;
                }
            }
            for (c, f) in counts.iter_mut().zip(&flags) {
                for j in 0..3 {
                    c[j] += f[j] as u64;
                }
            }
        }
        Ok(counts)
    })?;
    let mut total = vec![[0u64; 3]; m];
    for chunk in chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            for j in 0..3 {
                t[j] += c[j];
            }
        }
    }
    Ok(caps
        .iter()
        .zip(total)
        .map(|(a, t)| SweepRow {
            a: a.clone(),
            ss: Estimate::proportion(t[0], n_paths, "direct_ss_ruin"),
            s: Estimate::proportion(t[1], n_paths, "direct_s_ruin"),
            r: Estimate::proportion(t[2], n_paths, "direct_ruin"),
        })
        .collect())
}

/// Classical scalar Cramér–Lundberg first passage below 0 of the free walk
/// `a + sum (c A_k - X_k)` with `A ~ Exp(lambda)`, `X ~ Exp(1/mu)`, simulated
/// with its own samplers and substreams (no LCP, no model module).
#[allow(clippy::too_many_arguments)]
pub fn free_walk_ruin(
    lambda: f64,
    mu: f64,
    c: f64,
    a: f64,
    horizon: usize,
    n_paths: u64,
    seed: u64,
    workers: usize,
) -> Result<Estimate, EstimatorError> {
    let bad = |s: &str| EstimatorError::InvalidArgument(s.into());
    if ![lambda, mu, c].iter().all(|x| x.is_finite() && *x > 0.0) || !(a.is_finite() && a >= 0.0) {
        return Err(bad("need lambda, mu, c > 0 and a >= 0"));
    }
    let arrivals = Exp::new(lambda).map_err(|e| bad(&e.to_string()))?;
    let claims = Exp::new(1.0 / mu).map_err(|e| bad(&e.to_string()))?;
    let hits: u64 = run_chunks(n_paths, workers, |range| {
        let mut hits = 0u64;
        for path in range {
            let mut rng = derive_stream_in(seed, domain::ORACLE, path);
            let mut s = a;
            for _ in 0..horizon {
                s += c * arrivals.sample(&mut rng) - claims.sample(&mut rng);
                if s < 0.0 {
                    hits += 1;
                    break;
                }
            }
        }
        Ok(hits)
    })?
    .into_iter()
    .sum();
    Ok(Estimate::proportion(hits, n_paths, "free_walk_first_passage"))
}

/// Strict ascending ladder structure of the zero-capital pushing process,
/// observed up to a finite horizon.
#[derive(Debug, Clone, Serialize)]
pub struct LadderHarvest {
    pub horizon: usize,
    /// Fraction of paths with a first ladder epoch `tau_1 <= horizon`.
    pub tau1_finite: Estimate,
    /// Mean of `tau_1` over paths where it was observed.
    pub mean_tau1: f64,
    /// Fraction of paths with a ladder epoch in the second half of the
    /// horizon; large values mean the horizon is too short.
    pub late_epoch_fraction: f64,
    /// `counts[j]` = paths with exactly `j` ladder epochs by the horizon.
    pub epoch_counts: Vec<u64>,
    /// `L_1 = y(tau_1)` for paths where `tau_1` was observed, in path order.
    #[serde(skip)]
    pub first_heights: Vec<Vec<f64>>,
    /// `y` at the last observed ladder epoch (0 if none), one row per path.
    #[serde(skip)]
    pub m_samples: Vec<Vec<f64>>,
}

pub fn harvest_ladder_law(
    model: &Model,
    rm: &ReflectionMatrix,
    n_paths: u64,
    horizon: usize,
    seed: u64,
    settings: Settings,
) -> Result<LadderHarvest, EstimatorError> {
    check_positive("horizon", horizon)?;
    let d = rm.dim();
    let zero = vec![0.0; d];
    let tol = settings.strict_tol;
    struct Chunk {
        tau_sum: u64,
        late: u64,
        counts: Vec<u64>,
        heights: Vec<Vec<f64>>,
        m: Vec<Vec<f64>>,
    }
    let chunks = run_chunks(n_paths, settings.workers, |range| {
        let mut walk = ReflectedWalk::new(rm, MatrixView::Reflection, &zero);
        let mut u = vec![0.0; d];
        let mut out = Chunk {
            tau_sum: 0,
            late: 0,
            counts: Vec::new(),
            heights: Vec::new(),
            m: Vec::new(),
        };
        for path in range {
            let mut rng = derive_stream_in(seed, domain::PATHS, path);
            walk.reset(&zero);
            let mut epochs = 0usize;
            let mut last = zero.clone();
            let mut late = false;
            for k in 1..=horizon {
                model.sample_increment_into(&mut rng, &mut u);
                walk.step(&u)?;
                if strictly_positive(&walk.push, tol) {
                    epochs += 1;
                    last.copy_from_slice(&walk.cumulative);
                    if epochs == 1 {
                        out.tau_sum += k as u64;
                        out.heights.push(walk.cumulative.clone());
                    }
                    late |= 2 * k > horizon;
                }
            }
            if out.counts.len() <= epochs {
                out.counts.resize(epochs + 1, 0);
            }
            out.counts[epochs] += 1;
            out.late += late as u64;
            out.m.push(last);
        }
        Ok(out)
    })?;
    let mut counts: Vec<u64> = Vec::new();
    let (mut tau_sum, mut late) = (0u64, 0u64);
    let mut heights = Vec::new();
    let mut m_samples = Vec::with_capacity(n_paths as usize);
    for c in chunks {
        if counts.len() < c.counts.len() {
            counts.resize(c.counts.len(), 0);
        }
        for (t, x) in counts.iter_mut().zip(&c.counts) {
            *t += x;
        }
        tau_sum += c.tau_sum;
        late += c.late;
        heights.extend(c.heights);
        m_samples.extend(c.m);
    }
    let finite = heights.len() as u64;
    Ok(LadderHarvest {
        horizon,
        tau1_finite: Estimate::proportion(finite, n_paths, "harvested_first_ladder_epoch"),
        mean_tau1: if finite > 0 { tau_sum as f64 / finite as f64 } else { f64::NAN },
        late_epoch_fraction: if n_paths > 0 { late as f64 / n_paths as f64 } else { 0.0 },
        epoch_counts: counts,
        first_heights: heights,
        m_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelConfig};

    fn pm(q: f64) -> (Model, ReflectionMatrix) {
        let rm = ReflectionMatrix::identity(1).unwrap();
        let (m, _) = build_model(&ModelConfig::plus_minus(q), &rm).unwrap();
        (m, rm)
    }

    #[test]
    fn plus_minus_direct_ruin_near_one_third() {
        let (m, rm) = pm(0.25);
        let a = OrthantVector::zeros(1);
        let est = estimate_ruin_direct(&m, &rm, &a, 400, 20_000, 5, Settings::default()).unwrap();
        assert!(est.ss.z_against_value(1.0 / 3.0).abs() < 4.0, "{:?}", est.ss);
        // In one dimension every push is an ss-push.
        assert_eq!(est.ss.value, est.s.value);
    }

    #[test]
    fn first_ladder_height_is_one_for_unit_walk() {
        let (m, rm) = pm(0.25);
        let h = harvest_ladder_law(&m, &rm, 5000, 300, 2, Settings::default()).unwrap();
        assert!(h.first_heights.iter().all(|l| l == &[1.0]));
        assert!(h.tau1_finite.z_against_value(1.0 / 3.0).abs() < 4.0);
        assert_eq!(h.epoch_counts.iter().sum::<u64>(), 5000);
    }

    #[test]
    fn sweep_is_monotone_and_worker_independent() {
        let rm = ReflectionMatrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let cfg = ModelConfig::cl_exponential(vec![1.0, 1.0], vec![1.0, 1.0], vec![1.5, 1.5]);
        let (m, _) = build_model(&cfg, &rm).unwrap();
        let caps: Vec<OrthantVector> = [0.0, 1.0, 2.0, 4.0].iter().map(|t| OrthantVector::splat(2, *t)).collect();
        let one = Settings { workers: 1, ..Settings::default() };
        let three = Settings { workers: 3, ..Settings::default() };
        let rows = ruin_sweep(&m, &rm, &caps, 200, 3000, 8, one).unwrap();
        for w in rows.windows(2) {
            assert!(w[0].ss.value >= w[1].ss.value);
        }
        let again = ruin_sweep(&m, &rm, &caps, 200, 3000, 8, three).unwrap();
        assert_eq!(format!("{rows:?}"), format!("{again:?}"));
    }

    #[test]
    fn rejects_bad_arguments() {
        let (m, rm) = pm(0.25);
        let a = OrthantVector::splat(1, -1.0);
        assert!(estimate_ruin_direct(&m, &rm, &a, 10, 10, 1, Settings::default()).is_err());
        assert!(free_walk_ruin(0.0, 1.0, 1.0, 0.0, 10, 10, 1, 1).is_err());
    }
}
