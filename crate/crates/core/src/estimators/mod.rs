//! Monte Carlo engines and closed-form oracles for the stochastic network.
//!
//! Every engine walks paths `0..n_paths`; path `i` draws only from
//! `derive_stream_in(seed, domain, i)`. Paths are grouped in fixed chunks of
//! [`CHUNK`] and chunk results are merged in index order, so outputs are
//! bit-identical for any worker count.

mod direct;
mod ladder;
mod oracles;
mod report;
pub mod stats;
mod storage_side;

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lcp::LcpError;
use crate::models::ModelError;

pub use direct::{
    estimate_ruin_direct, free_walk_ruin, harvest_ladder_law, ruin_sweep, DirectRuin, LadderHarvest, SweepRow,
};
pub use ladder::{rejection_ladder_heights, sample_ladder_pk, PkSample, REJECTION_WINDOW};
pub use oracles::{closed_form_oracle, OracleKind};
pub use report::{
    build_claims_report, harvested_m_above, run_claims, ClaimEntry, ClaimsPlan, ClaimsReport, Method, Oracles,
    ReportInputs, Verdict, VerdictThresholds, BOUNDS_MARGIN_SE, KS_INCONSISTENT,
};
pub use storage_side::{
    estimate_p, estimate_storage_side, limdist_qq, per_horizon_identity, sigma_bd_distribution, HorizonRow,
    HorizonTable, LimdistTable, PEstimate, SigmaBdRow, SigmaBdTable, StorageSide, QQ_PROBS,
};

/// Paths per scheduling unit.
pub const CHUNK: u64 = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("LCP failure: {0}")]
    Lcp(#[from] LcpError),
    #[error("rejection sampler stalled: {accepted} accepted out of {tried} draws")]
    RejectionStall { accepted: u64, tried: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl EstimatorError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Model(e) => e.kind(),
            Self::Lcp(_) => "LcpFailure",
            Self::RejectionStall { .. } => "RejectionStall",
            Self::InvalidArgument(_) => "InvalidArgument",
            Self::Pool(_) => "Pool",
        }
    }
}

/// Shared engine knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Settings {
    /// Threshold for zero and strict orders.
    pub strict_tol: f64,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            strict_tol: crate::skorokhod::DEFAULT_STRICT_TOL,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub method: String,
}

impl Estimate {
    pub fn proportion(hits: u64, n: u64, method: impl Into<String>) -> Self {
        let value = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        let std_error = if n == 0 { 0.0 } else { (value * (1.0 - value) / n as f64).sqrt() };
        Self {
            value,
            std_error,
            n_samples: n,
            method: method.into(),
        }
    }

    /// Standardized difference to another independent estimate.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        stats::z_score(self.value - other.value, self.std_error.hypot(other.std_error))
    }

    /// Standardized difference to an exact value.
    pub fn z_against_value(&self, exact: f64) -> f64 {
        stats::z_score(self.value - exact, self.std_error)
    }
}

/// Runs `f` over fixed chunks of `0..n` and returns chunk results in order.
pub(crate) fn run_chunks<A, F>(n: u64, workers: usize, f: F) -> Result<Vec<A>, EstimatorError>
where
    A: Send,
    F: Fn(Range<u64>) -> Result<A, EstimatorError> + Sync,
{
    let chunks: Vec<Range<u64>> = (0..n.div_ceil(CHUNK)).map(|c| c * CHUNK..((c + 1) * CHUNK).min(n)).collect();
    let job = || chunks.into_par_iter().map(&f).collect::<Result<Vec<A>, _>>();
    if workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EstimatorError::Pool(e.to_string()))?
            .install(job)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let out = run_chunks(1500, 3, |r| Ok(r.collect::<Vec<u64>>())).unwrap();
        let flat: Vec<u64> = out.into_iter().flatten().collect();
        assert_eq!(flat, (0..1500).collect::<Vec<_>>());
        assert!(run_chunks(0, 1, |r| Ok(r.count())).unwrap().is_empty());
    }

    #[test]
    fn proportion_std_error() {
        let e = Estimate::proportion(25, 100, "t");
        assert!((e.std_error - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        assert_eq!(Estimate::proportion(0, 0, "t").value, 0.0);
    }
}
