//! Increment samplers for the embedded renewal risk network (claims routed to
//! a single company per arrival), its Cramér–Lundberg specialization and the
//! scalar ±1 walk, together with the hypothesis report.
//!
//! An increment is `U = A c - X` where `A` is the interarrival time and `X`
//! is zero except in the coordinate of the company that takes the claim.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Pareto};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orthant::{OrthantVector, ReflectionMatrix};

pub use crate::rng::{derive_stream, derive_stream_in, domain, RngStream};

/// Tolerance on `sum p_i = 1`.
const ROUTING_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("net profit condition violated, margins {margins:?}")]
    NetProfitViolated { margins: Vec<f64> },
}

impl ModelError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidConfig(_) => "InvalidConfig",
            Self::NetProfitViolated { .. } => "NetProfitViolated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InterarrivalConfig {
    Exponential { rate: f64 },
    Deterministic { delta: f64 },
    Gamma { shape: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimConfig {
    Exponential { mean: f64 },
    /// Density `alpha x_m^alpha / x^(alpha+1)` on `x >= x_m`.
    Pareto { shape: f64, scale: f64 },
    /// `exp(N(mu, sigma^2))`.
    Lognormal { mu: f64, sigma: f64 },
    Deterministic { size: f64 },
    TwoPoint { sizes: [f64; 2], probs: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeConfig {
    RenewalNetwork,
    /// Independent Poisson claim streams with these rates.
    ClNetwork { rates: Vec<f64> },
    /// Scalar walk: `+1` with probability `1 - q`, `-1` with probability `q`.
    PlusMinusWalk { q: f64 },
}

/// The `model` object of the run config. In `cl_network` mode `routing` and
/// `interarrival` are derived from the rates and must be omitted; in
/// `plus_minus_walk` mode everything except `d` is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub mode: ModeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premium_rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interarrival: Option<InterarrivalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claims: Option<Vec<ClaimConfig>>,
    /// Turn net-profit violations and infinite means into errors.
    #[serde(default)]
    pub strict: bool,
}

impl ModelConfig {
    /// Cramér–Lundberg network with exponential claims.
    pub fn cl_exponential(rates: Vec<f64>, means: Vec<f64>, premium_rates: Vec<f64>) -> Self {
        Self {
            d: rates.len(),
            mode: ModeConfig::ClNetwork { rates },
            premium_rates: Some(premium_rates),
            interarrival: None,
            routing: None,
            claims: Some(means.into_iter().map(|mean| ClaimConfig::Exponential { mean }).collect()),
            strict: false,
        }
    }

    pub fn plus_minus(q: f64) -> Self {
        Self {
            d: 1,
            mode: ModeConfig::PlusMinusWalk { q },
            premium_rates: None,
            interarrival: None,
            routing: None,
            claims: None,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisStatus {
    Holds,
    Violated,
    /// Kept for the report schema; every shipped family is decidable.
    Unverifiable,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisEntry {
    pub id: &'static str,
    pub status: HypothesisStatus,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub mode: &'static str,
    pub hypotheses: Vec<HypothesisEntry>,
    /// `E[c_i A - X_i]`; `-inf` (printed as null) for infinite claim means.
    pub net_profit_margins: Vec<f64>,
    pub mean_interarrival: f64,
    pub routing: Vec<f64>,
    pub warnings: Vec<String>,
}

impl HypothesisReport {
    pub fn status(&self, id: &str) -> Option<HypothesisStatus> {
        self.hypotheses.iter().find(|h| h.id == id).map(|h| h.status)
    }
}

#[derive(Debug, Clone)]
enum Interarrival {
    Exponential(Exp<f64>),
    Deterministic(f64),
    Gamma(Gamma<f64>),
}

#[derive(Debug, Clone)]
enum Claim {
    Exponential(Exp<f64>),
    Pareto(Pareto<f64>),
    Lognormal(LogNormal<f64>),
    Deterministic(f64),
    TwoPoint { sizes: [f64; 2], p_first: f64 },
}

/// Immutable sampler; draws come only from the caller's stream.
#[derive(Debug, Clone)]
pub struct Model {
    d: usize,
    c: Vec<f64>,
    routing: Vec<f64>,
    routing_cdf: Vec<f64>,
    interarrival: Interarrival,
    claims: Vec<Claim>,
    mean_interarrival: f64,
    claim_means: Vec<f64>,
    claims_vanish: bool,
}

impl Model {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn premium_rates(&self) -> &[f64] {
        &self.c
    }

    pub fn routing(&self) -> &[f64] {
        &self.routing
    }

    /// Closed-form `E[U]`; `-inf` coordinates for infinite claim means.
    pub fn mean_increment(&self) -> Vec<f64> {
        (0..self.d)
            .map(|i| self.c[i] * self.mean_interarrival - self.routing[i] * self.claim_means[i])
            .collect()
    }

    /// True when every claim is almost surely zero.
    pub fn has_no_claims(&self) -> bool {
        self.claims_vanish
    }

    /// Writes one increment into `out` and returns the company that took the claim.
    pub fn sample_increment_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> usize {
        let a = match &self.interarrival {
            Interarrival::Exponential(e) => e.sample(rng),
            Interarrival::Deterministic(t) => *t,
            Interarrival::Gamma(g) => g.sample(rng),
        };
        for (o, c) in out.iter_mut().zip(&self.c) {
            *o = a * c;
        }
        let company = if self.d == 1 {
            0
        } else {
            let r: f64 = rng.random();
            self.routing_cdf.iter().position(|&p| r < p).unwrap_or(self.d - 1)
        };
        let x = match &self.claims[company] {
            Claim::Exponential(e) => e.sample(rng),
            Claim::Pareto(p) => p.sample(rng),
            Claim::Lognormal(l) => l.sample(rng),
            Claim::Deterministic(s) => *s,
            Claim::TwoPoint { sizes, p_first } => {
                if rng.random_bool(*p_first) {
                    sizes[0]
                } else {
                    sizes[1]
                }
            }
        };
        out[company] -= x;
        company
    }

    pub fn sample_increment<R: Rng + ?Sized>(&self, rng: &mut R) -> OrthantVector {
        let mut out = vec![0.0; self.d];
        self.sample_increment_into(rng, &mut out);
        OrthantVector::from_raw(out)
    }
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::InvalidConfig(msg.into())
}

fn positive(name: &str, x: f64) -> Result<f64, ModelError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {x}")))
    }
}

fn build_interarrival(cfg: &InterarrivalConfig) -> Result<(Interarrival, f64), ModelError> {
    Ok(match *cfg {
        InterarrivalConfig::Exponential { rate } => {
            let rate = positive("interarrival rate", rate)?;
            (Interarrival::Exponential(Exp::new(rate).map_err(|e| invalid(e.to_string()))?), 1.0 / rate)
        }
        InterarrivalConfig::Deterministic { delta } => {
            let delta = positive("interarrival delta", delta)?;
            (Interarrival::Deterministic(delta), delta)
        }
        InterarrivalConfig::Gamma { shape, rate } => {
            let shape = positive("interarrival shape", shape)?;
            let rate = positive("interarrival rate", rate)?;
            let g = Gamma::new(shape, 1.0 / rate).map_err(|e| invalid(e.to_string()))?;
            (Interarrival::Gamma(g), shape / rate)
        }
    })
}

struct ClaimFacts {
    mean: f64,
    unbounded: bool,
    atomless_positive: bool,
    almost_surely_zero: bool,
}

fn build_claim(i: usize, cfg: &ClaimConfig) -> Result<(Claim, ClaimFacts), ModelError> {
    let name = |p: &str| format!("claims[{i}].{p}");
    let continuous = |mean| ClaimFacts {
        mean,
        unbounded: true,
        atomless_positive: true,
        almost_surely_zero: false,
    };
    Ok(match *cfg {
        ClaimConfig::Exponential { mean } => {
            let mean = positive(&name("mean"), mean)?;
            let e = Exp::new(1.0 / mean).map_err(|e| invalid(e.to_string()))?;
            (Claim::Exponential(e), continuous(mean))
        }
        ClaimConfig::Pareto { shape, scale } => {
            let shape = positive(&name("shape"), shape)?;
            let scale = positive(&name("scale"), scale)?;
            let p = Pareto::new(scale, shape).map_err(|e| invalid(e.to_string()))?;
            let mean = if shape > 1.0 { shape * scale / (shape - 1.0) } else { f64::INFINITY };
            (Claim::Pareto(p), continuous(mean))
        }
        ClaimConfig::Lognormal { mu, sigma } => {
            if !mu.is_finite() {
                return Err(invalid(format!("{} must be finite", name("mu"))));
            }
            let sigma = positive(&name("sigma"), sigma)?;
            let l = LogNormal::new(mu, sigma).map_err(|e| invalid(e.to_string()))?;
            (Claim::Lognormal(l), continuous((mu + 0.5 * sigma * sigma).exp()))
        }
        ClaimConfig::Deterministic { size } => {
            if !(size.is_finite() && size >= 0.0) {
                return Err(invalid(format!("{} must be finite and >= 0", name("size"))));
            }
            let facts = ClaimFacts {
                mean: size,
                unbounded: false,
                atomless_positive: size == 0.0,
                almost_surely_zero: size == 0.0,
            };
            (Claim::Deterministic(size), facts)
        }
        ClaimConfig::TwoPoint { sizes, probs } => {
            if sizes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(invalid(format!("{} must be finite and >= 0", name("sizes"))));
            }
            if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0))
                || ((probs[0] + probs[1]) - 1.0).abs() > ROUTING_SUM_TOL
            {
                return Err(invalid(format!("{} must be a probability vector", name("probs"))));
            }
            let charged = |k: usize| probs[k] > 0.0 && sizes[k] > 0.0;
            let facts = ClaimFacts {
                mean: probs[0] * sizes[0] + probs[1] * sizes[1],
                unbounded: false,
                atomless_positive: !charged(0) && !charged(1),
                almost_surely_zero: !charged(0) && !charged(1),
            };
            (Claim::TwoPoint { sizes, p_first: probs[0].clamp(0.0, 1.0) }, facts)
        }
    })
}

fn status(ok: bool) -> HypothesisStatus {
    if ok {
        HypothesisStatus::Holds
    } else {
        HypothesisStatus::Violated
    }
}

/// Validates `cfg` against `rm`, derives the mode-specific parameters and
/// evaluates the hypotheses.
pub fn build_model(cfg: &ModelConfig, rm: &ReflectionMatrix) -> Result<(Model, HypothesisReport), ModelError> {
    let d = cfg.d;
    if d == 0 {
        return Err(invalid("d must be >= 1"));
    }
    if rm.dim() != d {
        return Err(invalid(format!("model d = {d} but reflection matrix has d = {}", rm.dim())));
    }
    let (mode, c, interarrival_cfg, routing, claim_cfgs) = match &cfg.mode {
        ModeConfig::PlusMinusWalk { q } => {
            if d != 1 {
                return Err(invalid("plus_minus_walk requires d = 1"));
            }
            if cfg.premium_rates.is_some() || cfg.interarrival.is_some() || cfg.routing.is_some() || cfg.claims.is_some() {
                return Err(invalid("plus_minus_walk derives premium_rates, interarrival, routing and claims"));
            }
            if !(q.is_finite() && (0.0..=1.0).contains(q)) {
                return Err(invalid(format!("q must be in [0, 1], got {q}")));
            }
            (
                "plus_minus_walk",
                vec![1.0],
                InterarrivalConfig::Deterministic { delta: 1.0 },
                vec![1.0],
                vec![ClaimConfig::TwoPoint { sizes: [0.0, 2.0], probs: [1.0 - q, *q] }],
            )
        }
        ModeConfig::ClNetwork { rates } => {
            if cfg.interarrival.is_some() || cfg.routing.is_some() {
                return Err(invalid("cl_network derives interarrival and routing from rates"));
            }
            if rates.len() != d {
                return Err(invalid(format!("cl_network rates has length {}, expected {d}", rates.len())));
            }
            for (i, r) in rates.iter().enumerate() {
                positive(&format!("rates[{i}]"), *r)?;
            }
            let total: f64 = rates.iter().sum();
            (
                "cl_network",
                required(&cfg.premium_rates, "premium_rates")?,
                InterarrivalConfig::Exponential { rate: total },
                rates.iter().map(|r| r / total).collect(),
                required(&cfg.claims, "claims")?,
            )
        }
        ModeConfig::RenewalNetwork => {
            let routing = required(&cfg.routing, "routing")?;
            if routing.len() != d {
                return Err(invalid(format!("routing has length {}, expected {d}", routing.len())));
            }
            for (i, p) in routing.iter().enumerate() {
                positive(&format!("routing[{i}]"), *p)?;
            }
            if (routing.iter().sum::<f64>() - 1.0).abs() > ROUTING_SUM_TOL {
                return Err(invalid("routing must sum to 1"));
            }
            (
                "renewal_network",
                required(&cfg.premium_rates, "premium_rates")?,
                required(&cfg.interarrival, "interarrival")?,
                routing,
                required(&cfg.claims, "claims")?,
            )
        }
    };
    if c.len() != d {
        return Err(invalid(format!("premium_rates has length {}, expected {d}", c.len())));
    }
    for (i, ci) in c.iter().enumerate() {
        positive(&format!("premium_rates[{i}]"), *ci)?;
    }
    if claim_cfgs.len() != d {
        return Err(invalid(format!("claims has length {}, expected {d}", claim_cfgs.len())));
    }

    let (interarrival, mean_a) = build_interarrival(&interarrival_cfg)?;
    let mut claims = Vec::with_capacity(d);
    let mut facts = Vec::with_capacity(d);
    for (i, cc) in claim_cfgs.iter().enumerate() {
        let (claim, f) = build_claim(i, cc)?;
        claims.push(claim);
        facts.push(f);
    }

    let margins: Vec<f64> = (0..d).map(|i| c[i] * mean_a - routing[i] * facts[i].mean).collect();
    let infinite_mean: Vec<usize> = (0..d).filter(|&i| !facts[i].mean.is_finite()).collect();
    if cfg.strict && !infinite_mean.is_empty() {
        return Err(invalid(format!("claim families {infinite_mean:?} have infinite mean")));
    }
    let h8 = margins.iter().all(|m| *m > 0.0);
    if cfg.strict && !h8 {
        return Err(ModelError::NetProfitViolated { margins });
    }

    let mut warnings: Vec<String> = rm.warnings().to_vec();
    let unbounded: Vec<usize> = (0..d).filter(|&i| facts[i].unbounded).collect();
    let with_atoms: Vec<usize> = (0..d).filter(|&i| !facts[i].atomless_positive).collect();
    // A claim routed to company i moves R^{-1}X along column i of R^{-1}; it
    // can exceed every level iff that column is strictly positive and the
    // claim law is unbounded.
    let rinv = rm.rinv();
    let h9_columns: Vec<usize> = unbounded
        .iter()
        .copied()
        .filter(|&i| (0..d).all(|r| rinv.get(r, i) > 0.0))
        .collect();

    let hyp = vec![
        HypothesisEntry {
            id: "H1",
            status: HypothesisStatus::Holds,
            note: format!("spectral radius of P = {:.6e}", rm.spectral_radius()),
        },
        HypothesisEntry {
            id: "H2",
            status: status(rm.satisfies_h2()),
            note: match rm.h2_column() {
                Some(k) => format!("column {k} of R^-1 is strictly positive"),
                None => "no column of R^-1 is strictly positive".into(),
            },
        },
        HypothesisEntry {
            id: "H3",
            status: HypothesisStatus::Holds,
            note: format!("interarrival times are positive by construction, mean {mean_a}"),
        },
        HypothesisEntry {
            id: "H4",
            status: HypothesisStatus::Holds,
            note: "claim vectors are i.i.d. and nonnegative by construction".into(),
        },
        HypothesisEntry {
            id: "H5",
            status: HypothesisStatus::Holds,
            note: "interarrivals, routing and claim sizes are drawn independently".into(),
        },
        HypothesisEntry {
            id: "H6",
            status: status(unbounded.len() == d),
            note: if unbounded.len() == d {
                "every claim family has unbounded support".into()
            } else {
                format!("bounded claim support for companies {:?}", complement(&unbounded, d))
            },
        },
        HypothesisEntry {
            id: "H7",
            status: status(with_atoms.is_empty()),
            note: if with_atoms.is_empty() {
                "claim families have no atoms in (0, inf)".into()
            } else {
                format!("claim atoms in (0, inf) for companies {with_atoms:?}")
            },
        },
        HypothesisEntry {
            id: "H8",
            status: status(h8),
            note: format!("margins E[c_i A - X_i] = {margins:?}"),
        },
        HypothesisEntry {
            id: "H9",
            status: status(!h9_columns.is_empty()),
            note: if h9_columns.is_empty() {
                "no company combines unbounded claims with a strictly positive column of R^-1".into()
            } else {
                format!("unbounded claims along strictly positive columns {h9_columns:?} of R^-1")
            },
        },
    ];
    for h in &hyp {
        if h.status == HypothesisStatus::Violated {
            warnings.push(format!("{} violated: {}", h.id, h.note));
        }
    }

    let mut routing_cdf = Vec::with_capacity(d);
    let mut acc = 0.0;
    for p in &routing {
        acc += p;
        routing_cdf.push(acc);
    }
    let claims_vanish = facts.iter().all(|f| f.almost_surely_zero);
    let model = Model {
        d,
        c,
        routing: routing.clone(),
        routing_cdf,
        interarrival,
        claims,
        mean_interarrival: mean_a,
        claim_means: facts.iter().map(|f| f.mean).collect(),
        claims_vanish,
    };
    let report = HypothesisReport {
        mode,
        hypotheses: hyp,
        net_profit_margins: margins,
        mean_interarrival: mean_a,
        routing,
        warnings,
    };
    Ok((model, report))
}

fn required<T: Clone>(v: &Option<T>, name: &str) -> Result<T, ModelError> {
    v.clone().ok_or_else(|| invalid(format!("missing field {name}")))
}

fn complement(set: &[usize], d: usize) -> Vec<usize> {
    (0..d).filter(|i| !set.contains(i)).collect()
}
