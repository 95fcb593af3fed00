//! Compound-geometric sampler for `M`: `K ~ Geometric` with
//! `P(K = k) = (1 - p) p^k`, then `K` i.i.d. heights drawn from the law of
//! `-R^{-1}U` conditioned on `>> 0` by rejection.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::Serialize;

use super::direct::check_capital;
use super::stats::quantiles;
use super::storage_side::QQ_PROBS;
use super::{run_chunks, Estimate, EstimatorError, Settings, CHUNK};
use crate::models::{derive_stream_in, domain, Model};
use crate::orthant::{strictly_dominates, strictly_positive, OrthantVector, ReflectionMatrix};

/// Draws per stall check; a window with acceptance rate below
/// [`MIN_ACCEPTANCE`] aborts the sampler.
pub const REJECTION_WINDOW: u64 = 10_000_000;
pub const MIN_ACCEPTANCE: f64 = 1e-6;

struct Rejector<'a> {
    model: &'a Model,
    rm: &'a ReflectionMatrix,
    tol: f64,
    u: Vec<f64>,
    out: Vec<f64>,
    tried: u64,
    accepted: u64,
    window_tried: u64,
    window_accepted: u64,
}

impl<'a> Rejector<'a> {
    fn new(model: &'a Model, rm: &'a ReflectionMatrix, tol: f64) -> Self {
        let d = rm.dim();
        Self {
            model,
            rm,
            tol,
            u: vec![0.0; d],
            out: vec![0.0; d],
            tried: 0,
            accepted: 0,
            window_tried: 0,
            window_accepted: 0,
        }
    }

    /// Leaves one accepted height in `self.out`.
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), EstimatorError> {
        loop {
            self.model.sample_increment_into(rng, &mut self.u);
            self.rm.rinv().mul_vec_into(&self.u, &mut self.out);
            self.out.iter_mut().for_each(|x| *x = -*x);
            self.tried += 1;
            self.window_tried += 1;
            let ok = strictly_positive(&self.out, self.tol);
            if ok {
                self.accepted += 1;
                self.window_accepted += 1;
            }
            if self.window_tried == REJECTION_WINDOW {
                if (self.window_accepted as f64) < MIN_ACCEPTANCE * REJECTION_WINDOW as f64 {
                    return Err(EstimatorError::RejectionStall {
                        accepted: self.accepted,
                        tried: self.tried,
                    });
                }
                self.window_tried = 0;
                self.window_accepted = 0;
            }
            if ok {
                return Ok(());
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PkSample {
    pub b: OrthantVector,
    pub p_hat: Estimate,
    /// Fraction of paths with `M >> b`.
    pub ruin: Estimate,
    /// Fraction of paths with `K = 0`, i.e. `M = 0`.
    pub mass_at_zero: Estimate,
    pub acceptance_rate: f64,
    pub m_mean: Vec<f64>,
    /// `m_quantiles[i][j]`: quantile `quantile_probs[j]` of `M_i`.
    pub quantile_probs: Vec<f64>,
    pub m_quantiles: Vec<Vec<f64>>,
    #[serde(skip)]
    pub m_samples: Vec<Vec<f64>>,
}

pub fn sample_ladder_pk(
    model: &Model,
    rm: &ReflectionMatrix,
    a: &OrthantVector,
    n_paths: u64,
    seed: u64,
    p_hat: &Estimate,
    settings: Settings,
) -> Result<PkSample, EstimatorError> {
    check_capital(a, rm, model)?;
    let p = p_hat.value;
    if !(0.0..1.0).contains(&p) {
        return Err(EstimatorError::InvalidArgument(format!("p_hat must lie in [0, 1), got {p}")));
    }
    let geometric = Geometric::new(1.0 - p).map_err(|e| EstimatorError::InvalidArgument(e.to_string()))?;
    let d = rm.dim();
    let b = rm.apply_rinv(a);
    let tol = settings.strict_tol;
    struct Chunk {
        hits: u64,
        zeros: u64,
        tried: u64,
        accepted: u64,
        m: Vec<Vec<f64>>,
    }
    let chunks = run_chunks(n_paths, settings.workers, |range| {
        let mut rej = Rejector::new(model, rm, tol);
        let mut out = Chunk {
            hits: 0,
            zeros: 0,
            tried: 0,
            accepted: 0,
            m: Vec::with_capacity(CHUNK as usize),
        };
        for path in range {
            let mut rng = derive_stream_in(seed, domain::LADDER, path);
            let k = geometric.sample(&mut rng);
            let mut m = vec![0.0; d];
            for _ in 0..k {
                rej.draw(&mut rng)?;
                m.iter_mut().zip(&rej.out).for_each(|(x, l)| *x += l);
            }
            out.zeros += (k == 0) as u64;
            out.hits += strictly_dominates(&m, b.as_slice(), tol) as u64;
            out.m.push(m);
        }
        out.tried = rej.tried;
        out.accepted = rej.accepted;
        Ok(out)
    })?;
    let (mut hits, mut zeros, mut tried, mut accepted) = (0, 0, 0, 0);
    let mut samples = Vec::with_capacity(n_paths as usize);
    for c in chunks {
        hits += c.hits;
        zeros += c.zeros;
        tried += c.tried;
        accepted += c.accepted;
        samples.extend(c.m);
    }
    let n = samples.len().max(1) as f64;
    let coords: Vec<Vec<f64>> = (0..d).map(|i| samples.iter().map(|m| m[i]).collect()).collect();
    Ok(PkSample {
        b,
        p_hat: p_hat.clone(),
        ruin: Estimate::proportion(hits, n_paths, "compound_geometric_M_above_b"),
        mass_at_zero: Estimate::proportion(zeros, n_paths, "compound_geometric_mass_at_zero"),
        acceptance_rate: if tried > 0 { accepted as f64 / tried as f64 } else { f64::NAN },
        m_mean: coords.iter().map(|c| c.iter().sum::<f64>() / n).collect(),
        quantile_probs: QQ_PROBS.to_vec(),
        m_quantiles: coords.iter().map(|c| quantiles(c, &QQ_PROBS)).collect(),
        m_samples: samples,
    })
}

/// `n` independent draws of `-R^{-1}U` conditioned on `>> 0`.
pub fn rejection_ladder_heights(
    model: &Model,
    rm: &ReflectionMatrix,
    n: u64,
    seed: u64,
    settings: Settings,
) -> Result<Vec<Vec<f64>>, EstimatorError> {
    let chunks = run_chunks(n, settings.workers, |range| {
        let mut rej = Rejector::new(model, rm, settings.strict_tol);
        let mut rng = derive_stream_in(seed, domain::DIRECT_SAMPLES, range.start / CHUNK);
        let mut out = Vec::with_capacity(CHUNK as usize);
        for _ in range {
            rej.draw(&mut rng)?;
            out.push(rej.out.clone());
        }
        Ok(out)
    })?;
    Ok(chunks.into_iter().flatten().collect())
}
