//! Claims report: every infinite-horizon statement gets independent left and
//! right estimates, a z-score and a verdict. Nothing here forces agreement.

use serde::{Deserialize, Serialize};

use super::direct::{
    estimate_ruin_direct, free_walk_ruin, harvest_ladder_law, ruin_sweep, DirectRuin, LadderHarvest, SweepRow,
};
use super::ladder::{rejection_ladder_heights, sample_ladder_pk, PkSample};
use super::oracles::{closed_form_oracle, OracleKind};
use super::stats::{ks_two_sample_scaled, tail_slope, KS_CRITICAL_1PCT};
use super::storage_side::{
    estimate_p, estimate_storage_side, limdist_qq, per_horizon_identity, sigma_bd_distribution, HorizonTable,
    LimdistTable, PEstimate, SigmaBdTable, StorageSide,
};
use super::{Estimate, EstimatorError, Settings};
use crate::models::{ClaimConfig, HypothesisReport, HypothesisStatus, Model, ModeConfig, ModelConfig};
use crate::orthant::{strictly_dominates, OrthantVector, ReflectionMatrix};

/// Scaled two-sample KS statistic above which a law comparison is
/// inconsistent (asymptotic p-value about 1e-5).
pub const KS_INCONSISTENT: f64 = 2.5;
/// Margin, in standard errors, for the strict bounds `0 < P < 1`.
pub const BOUNDS_MARGIN_SE: f64 = 3.0;
/// Fraction of largest samples used by the tail-index diagnostic.
pub const TAIL_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictThresholds {
    /// `|z|` below this is consistent.
    pub consistent: f64,
    /// `|z|` above this is inconsistent.
    pub inconsistent: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self {
            consistent: 4.0,
            inconsistent: 6.0,
        }
    }
}

impl VerdictThresholds {
    pub fn classify(&self, z: f64) -> Verdict {
        let z = z.abs();
        if z < self.consistent {
            Verdict::Consistent
        } else if z > self.inconsistent {
            Verdict::Inconsistent
        } else {
            Verdict::Inconclusive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
    /// Reported for inspection only.
    Descriptive,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClaimEntry {
    pub id: &'static str,
    pub statement: &'static str,
    pub lhs: Option<Estimate>,
    pub rhs: Vec<Estimate>,
    pub closed_form: Option<f64>,
    pub z: Option<f64>,
    pub verdict: Verdict,
    pub note: String,
}

/// Closed-form values available for the configured model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Oracles {
    pub ruin: Option<f64>,
    pub p: Option<f64>,
    /// `(lambda, mu, c)` of a scalar exponential Cramér–Lundberg model.
    pub cl: Option<(f64, f64, f64)>,
    /// Pareto shape when every claim family is Pareto with the same shape.
    pub pareto_shape: Option<f64>,
}

impl Oracles {
    pub fn for_model(cfg: &ModelConfig, a: &OrthantVector) -> Self {
        let mut o = Oracles::default();
        let a0 = a.iter().all(|x| *x == 0.0);
        match (&cfg.mode, cfg.claims.as_deref(), cfg.premium_rates.as_deref()) {
            (ModeConfig::PlusMinusWalk { q }, _, _) => {
                o.p = Some(*q);
                if a0 {
                    o.ruin = closed_form_oracle(OracleKind::GamblersRuin { q: *q }).ok();
                }
            }
            (ModeConfig::ClNetwork { rates }, Some([ClaimConfig::Exponential { mean }]), Some([c])) => {
                let (lambda, mu, c) = (rates[0], *mean, *c);
                o.cl = Some((lambda, mu, c));
                o.p = closed_form_oracle(OracleKind::StoragePCl { lambda, mu, c }).ok();
                o.ruin = closed_form_oracle(OracleKind::ClRuinProb { lambda, mu, c, a: a[0] }).ok();
            }
            _ => {}
        }
        if let Some(claims) = &cfg.claims {
            let shapes: Vec<f64> = claims
                .iter()
                .filter_map(|c| match c {
                    ClaimConfig::Pareto { shape, .. } => Some(*shape),
                    _ => None,
                })
                .collect();
            if shapes.len() == claims.len() && shapes.windows(2).all(|w| w[0] == w[1]) {
                o.pareto_shape = shapes.first().copied();
            }
        }
        o
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    Storage,
    Ladder,
    All,
}

/// Everything the estimators need for one report.
#[derive(Debug, Clone)]
pub struct ClaimsPlan {
    pub a: OrthantVector,
    pub method: Method,
    pub horizon: usize,
    pub n_paths: u64,
    pub p_samples: u64,
    pub seed: u64,
    pub step_cap: usize,
    pub kmax: usize,
    /// Horizons for the per-horizon identity table (run with `Method::All`).
    pub identity_horizon: usize,
    /// Capitals for the common-random-numbers sweep.
    pub sweep: Vec<OrthantVector>,
    pub limdist_horizons: Vec<usize>,
    pub settings: Settings,
    pub thresholds: VerdictThresholds,
}

/// Estimator outputs; absent parts skip the claims that need them.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub a: Option<OrthantVector>,
    /// `R^{-1} a`
    pub b: Option<OrthantVector>,
    pub p: Option<PEstimate>,
    pub direct: Option<DirectRuin>,
    pub free_walk: Option<Estimate>,
    pub storage: Option<StorageSide>,
    pub pk: Option<PkSample>,
    pub sigma_bd: Option<SigmaBdTable>,
    pub identity: Option<HorizonTable>,
    pub harvest: Option<LadderHarvest>,
    pub rejection_heights: Option<Vec<Vec<f64>>>,
    pub sweep: Option<Vec<SweepRow>>,
    pub limdist: Option<LimdistTable>,
    pub oracles: Oracles,
    /// Both (H2) and (H6) hold.
    pub h2_h6: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClaimsReport {
    pub a: Option<OrthantVector>,
    pub thresholds: VerdictThresholds,
    pub p_hat: Option<Estimate>,
    /// Frequency of `-R^{-1}U >> 0` (same event as `p_hat`) and its
    /// recurrence count over the second half of the draws.
    pub delta0_second_half_hits: Option<u64>,
    pub oracles: Oracles,
    pub claims: Vec<ClaimEntry>,
    pub direct: Option<DirectRuin>,
    pub free_walk: Option<Estimate>,
    pub storage: Option<StorageSide>,
    pub compound_geometric: Option<PkSample>,
    pub sigma_bd: Option<SigmaBdTable>,
    pub per_horizon_identity: Option<HorizonTable>,
    pub ladder_harvest: Option<LadderHarvest>,
    pub sweep: Option<Vec<SweepRow>>,
    pub limdist: Option<LimdistTable>,
}

impl ClaimsReport {
    pub fn claim(&self, id: &str) -> Option<&ClaimEntry> {
        self.claims.iter().find(|c| c.id == id)
    }

    /// `false` when the per-horizon identity table was computed and failed.
    pub fn identity_passed(&self) -> bool {
        self.claim("per_horizon_identity")
            .is_none_or(|c| c.verdict == Verdict::Consistent)
    }
}

fn compare(
    id: &'static str,
    statement: &'static str,
    lhs: &Estimate,
    rhs: &Estimate,
    closed_form: Option<f64>,
    th: &VerdictThresholds,
    note: String,
) -> ClaimEntry {
    let z = lhs.z_against(rhs);
    ClaimEntry {
        id,
        statement,
        lhs: Some(lhs.clone()),
        rhs: vec![rhs.clone()],
        closed_form,
        z: Some(z),
        verdict: th.classify(z),
        note,
    }
}

fn oracle_note(est: &[(&str, &Estimate)], exact: Option<f64>) -> String {
    match exact {
        None => String::new(),
        Some(v) => est
            .iter()
            .map(|(name, e)| format!("{name} z vs closed form {:.3}", e.z_against_value(v)))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn ks_verdict(scaled: f64) -> Verdict {
    if !scaled.is_finite() {
        Verdict::NotApplicable
    } else if scaled < KS_CRITICAL_1PCT {
        Verdict::Consistent
    } else if scaled > KS_INCONSISTENT {
        Verdict::Inconsistent
    } else {
        Verdict::Inconclusive
    }
}

pub fn build_claims_report(inp: ReportInputs, th: VerdictThresholds) -> ClaimsReport {
    let mut claims = Vec::new();
    let o = inp.oracles;
    let p_hat = inp.p.as_ref().map(|p| p.p.clone());

    if let (Some(d), Some(s)) = (&inp.direct, &inp.storage) {
        claims.push(compare(
            "ruin_vs_storage",
            "P(ss-ruin in finite time) = P(W enters {w >> R^-1 a} before the boundary)",
            &d.ss,
            &s.estimate,
            o.ruin,
            &th,
            oracle_note(&[("direct", &d.ss)], o.ruin),
        ));
    }
    if let (Some(d), Some(pk)) = (&inp.direct, &inp.pk) {
        claims.push(compare(
            "ruin_vs_compound_geometric",
            "P(ss-ruin in finite time) = P(M >> R^-1 a), M compound geometric",
            &d.ss,
            &pk.ruin,
            o.ruin,
            &th,
            oracle_note(&[("compound", &pk.ruin)], o.ruin),
        ));
    }
    if let (Some(s), Some(pk)) = (&inp.storage, &inp.pk) {
        claims.push(compare(
            "storage_vs_compound_geometric",
            "P(W enters {w >> R^-1 a} before the boundary) = P(M >> R^-1 a)",
            &s.estimate,
            &pk.ruin,
            None,
            &th,
            String::new(),
        ));
    }
    if let (Some(fw), Some((_, _, _))) = (&inp.free_walk, o.cl) {
        let exact = o.ruin.unwrap_or(f64::NAN);
        let z = fw.z_against_value(exact);
        claims.push(ClaimEntry {
            id: "cl_formula_vs_free_walk",
            statement: "exponential Cramér–Lundberg ruin formula agrees with free-walk first passage",
            lhs: Some(fw.clone()),
            rhs: vec![],
            closed_form: o.ruin,
            z: Some(z),
            verdict: th.classify(z),
            note: String::new(),
        });
    }
    if let Some(s) = &inp.storage {
        let e = &s.estimate;
        let inside = e.value - BOUNDS_MARGIN_SE * e.std_error > 0.0 && e.value + BOUNDS_MARGIN_SE * e.std_error < 1.0;
        claims.push(ClaimEntry {
            id: "strict_bounds",
            statement: "0 < P(W enters {w >> R^-1 a} before the boundary) < 1",
            lhs: Some(e.clone()),
            rhs: vec![],
            closed_form: None,
            z: None,
            verdict: match (inp.h2_h6, inside) {
                (false, _) => Verdict::NotApplicable,
                (true, true) => Verdict::Consistent,
                (true, false) => Verdict::Inconsistent,
            },
            note: format!("margin {BOUNDS_MARGIN_SE} standard errors; applies when (H2) and (H6) hold"),
        });
    }
    if let (Some(pk), Some(p)) = (&inp.pk, &p_hat) {
        let reference = Estimate {
            value: 1.0 - p.value,
            ..p.clone()
        };
        claims.push(compare(
            "mass_at_zero",
            "P(M = 0) = 1 - p (construction check)",
            &pk.mass_at_zero,
            &reference,
            None,
            &th,
            String::new(),
        ));
    }
    if let Some(t) = &inp.sigma_bd {
        let first = &t.rows[0];
        claims.push(compare(
            "sigma_bd_first_row",
            "P(sigma_bd > 1) = p (definition)",
            &first.survival,
            &t.p_hat,
            o.p,
            &th,
            String::new(),
        ));
        if let Some(worst) = t.rows.iter().skip(1).max_by(|x, y| x.z.abs().total_cmp(&y.z.abs())) {
            claims.push(ClaimEntry {
                id: "sigma_bd_geometric",
                statement: "P(sigma_bd > k) = p^k for all k",
                lhs: Some(worst.survival.clone()),
                rhs: vec![],
                closed_form: Some(worst.geometric),
                z: Some(worst.z),
                verdict: th.classify(worst.z),
                note: format!("largest |z| over k = 2..{} attained at k = {}", t.rows.len(), worst.k),
            });
        }
        let last = t.rows.last().expect("kmax >= 1");
        claims.push(ClaimEntry {
            id: "partial_limit",
            statement: "W_n >> R^-1 a on {n < sigma_bd}: joint and conditional readings at the largest k",
            lhs: Some(last.joint_above_b.clone()),
            rhs: vec![],
            closed_form: None,
            z: None,
            verdict: Verdict::Descriptive,
            note: format!(
                "k = {}: joint P(W_k >> b, sigma_bd > k) = {:.6}, conditional P(W_k >> b | sigma_bd > k) = {:.6}",
                last.k, last.joint_above_b.value, last.conditional_above_b
            ),
        });
    }
    if let (Some(h), Some(p)) = (&inp.harvest, &p_hat) {
        claims.push(compare(
            "first_ladder_mass",
            "P(tau_1 < infinity) = p",
            &h.tau1_finite,
            p,
            None,
            &th,
            format!("tau_1 truncated at {}; late epoch fraction {:.3e}", h.horizon, h.late_epoch_fraction),
        ));
    }
    if let (Some(h), Some(d), Some(a)) = (&inp.harvest, &inp.direct, &inp.a) {
        if !h.m_samples.is_empty() {
            let b = inp.b.clone().unwrap_or_else(|| a.clone());
            let m = harvested_m_above(h, &b, crate::skorokhod::DEFAULT_STRICT_TOL);
            claims.push(compare(
                "ruin_vs_harvested_m",
                "P(ss-ruin in finite time) = P(M >> R^-1 a), M read off zero-capital paths",
                &d.ss,
                &m,
                o.ruin,
                &th,
                format!("M truncated at horizon {}", h.horizon),
            ));
        }
    }
    if let (Some(h), Some(rej)) = (&inp.harvest, &inp.rejection_heights) {
        let d = rej.first().map_or(0, |r| r.len());
        let scaled: Vec<f64> = (0..d)
            .map(|i| {
                let x: Vec<f64> = h.first_heights.iter().map(|l| l[i]).collect();
                let y: Vec<f64> = rej.iter().map(|l| l[i]).collect();
                ks_two_sample_scaled(&x, &y)
            })
            .collect();
        let worst = scaled.iter().copied().fold(f64::NAN, f64::max);
        claims.push(ClaimEntry {
            id: "ladder_height_law",
            statement: "first ladder height L_1 given tau_1 < infinity ~ -R^-1 U given -R^-1 U >> 0",
            lhs: None,
            rhs: vec![],
            closed_form: None,
            z: None,
            verdict: ks_verdict(worst),
            note: format!(
                "per-coordinate scaled two-sample KS {scaled:?} ({} harvested vs {} rejection draws)",
                h.first_heights.len(),
                rej.len()
            ),
        });
    }
    if let Some(t) = &inp.identity {
        let worst = t.rows.iter().max_by(|x, y| x.z.abs().total_cmp(&y.z.abs())).expect("rows");
        claims.push(ClaimEntry {
            id: "per_horizon_identity",
            statement: "P(dY_n >> 0) = P(W_n >> R^-1 a, sigma_bd > n) for each n",
            lhs: Some(worst.lhs.clone()),
            rhs: vec![worst.rhs.clone()],
            closed_form: None,
            z: Some(worst.z),
            verdict: th.classify(worst.z),
            note: format!("largest |z| over n = 1..{} attained at n = {}", t.rows.len(), worst.n),
        });
    }
    if let Some(rows) = &inp.sweep {
        let monotone = rows.windows(2).all(|w| {
            !crate::orthant::dominates(w[1].a.as_slice(), w[0].a.as_slice(), 0.0) || w[0].ss.value >= w[1].ss.value
        });
        claims.push(ClaimEntry {
            id: "ruin_monotone_in_capital",
            statement: "a <= b implies ruin fraction(a) >= ruin fraction(b) under common random numbers",
            lhs: rows.last().map(|r| r.ss.clone()),
            rhs: vec![],
            closed_form: None,
            z: None,
            verdict: if monotone { Verdict::Consistent } else { Verdict::Inconsistent },
            note: "lhs is the estimate at the last capital of the sweep".into(),
        });
    }
    if let (Some(pk), Some(alpha)) = (&inp.pk, o.pareto_shape) {
        let m: Vec<f64> = pk.m_samples.iter().map(|x| x[0]).collect();
        let slope = tail_slope(&m, TAIL_FRACTION);
        claims.push(ClaimEntry {
            id: "pareto_tail_index",
            statement: "Pareto(alpha) claims give a Pareto(alpha - 1) tail for M",
            lhs: None,
            rhs: vec![],
            closed_form: Some(-(alpha - 1.0)),
            z: None,
            verdict: Verdict::Descriptive,
            note: match slope {
                Some(s) => format!("log-log survival slope of M_0 over the top {TAIL_FRACTION}: {s:.4}"),
                None => "too few positive samples".into(),
            },
        });
    }
    if inp.limdist.is_some() {
        claims.push(ClaimEntry {
            id: "limdist",
            statement: "W_n converges in distribution to W(sigma_0 - 1) (d = 1)",
            lhs: None,
            rhs: vec![],
            closed_form: None,
            z: None,
            verdict: Verdict::Descriptive,
            note: "see the limdist quantile table".into(),
        });
    }
    if let Some(p) = &p_hat {
        if let Some(exact) = o.p {
            let z = p.z_against_value(exact);
            claims.push(ClaimEntry {
                id: "p_closed_form",
                statement: "p_hat agrees with the closed-form p",
                lhs: Some(p.clone()),
                rhs: vec![],
                closed_form: Some(exact),
                z: Some(z),
                verdict: th.classify(z),
                note: String::new(),
            });
        }
    }

    ClaimsReport {
        a: inp.a,
        thresholds: th,
        p_hat,
        delta0_second_half_hits: inp.p.map(|p| p.second_half_hits),
        oracles: o,
        claims,
        direct: inp.direct,
        free_walk: inp.free_walk,
        storage: inp.storage,
        compound_geometric: inp.pk,
        sigma_bd: inp.sigma_bd,
        per_horizon_identity: inp.identity,
        ladder_harvest: inp.harvest,
        sweep: inp.sweep,
        limdist: inp.limdist,
    }
}

/// Seed offsets keeping estimators that share a stream domain independent.
const SEED_HARVEST: u64 = 1;
const SEED_SIGMA: u64 = 2;
const SEED_IDENTITY: u64 = 3;

/// Runs the estimators selected by `plan.method` and assembles the report.
pub fn run_claims(
    model: &Model,
    rm: &ReflectionMatrix,
    hyp: &HypothesisReport,
    cfg: &ModelConfig,
    plan: &ClaimsPlan,
) -> Result<ClaimsReport, EstimatorError> {
    let s = plan.settings;
    let (direct, storage, ladder) = match plan.method {
        Method::Direct => (true, false, false),
        Method::Storage => (false, true, false),
        Method::Ladder => (false, false, true),
        Method::All => (true, true, true),
    };
    let oracles = Oracles::for_model(cfg, &plan.a);
    let mut inp = ReportInputs {
        a: Some(plan.a.clone()),
        b: Some(rm.apply_rinv(&plan.a)),
        oracles,
        h2_h6: hyp.status("H2") == Some(HypothesisStatus::Holds) && hyp.status("H6") == Some(HypothesisStatus::Holds),
        ..Default::default()
    };
    let p = estimate_p(model, rm, plan.p_samples, plan.seed, s)?;
    if direct {
        inp.direct = Some(estimate_ruin_direct(model, rm, &plan.a, plan.horizon, plan.n_paths, plan.seed, s)?);
        if let Some((lambda, mu, c)) = oracles.cl {
            inp.free_walk =
                Some(free_walk_ruin(lambda, mu, c, plan.a[0], plan.horizon, plan.n_paths, plan.seed, s.workers)?);
        }
        if !plan.sweep.is_empty() {
            inp.sweep = Some(ruin_sweep(model, rm, &plan.sweep, plan.horizon, plan.n_paths, plan.seed, s)?);
        }
    }
    if storage {
        inp.storage = Some(estimate_storage_side(model, rm, &plan.a, plan.n_paths, plan.seed, plan.step_cap, s)?);
        inp.sigma_bd = Some(sigma_bd_distribution(
            model,
            rm,
            &plan.a,
            plan.n_paths,
            plan.seed.wrapping_add(SEED_SIGMA),
            plan.kmax,
            &p.p,
            s,
        )?);
        if rm.dim() == 1 && !plan.limdist_horizons.is_empty() {
            inp.limdist = Some(limdist_qq(model, rm, plan.n_paths, plan.seed, &plan.limdist_horizons, s)?);
        }
    }
    if ladder {
        if p.p.value < 1.0 {
            inp.pk = Some(sample_ladder_pk(model, rm, &plan.a, plan.n_paths, plan.seed, &p.p, s)?);
        }
        let harvest =
            harvest_ladder_law(model, rm, plan.n_paths, plan.horizon, plan.seed.wrapping_add(SEED_HARVEST), s)?;
        let want = harvest.first_heights.len() as u64;
        if p.p.value > 0.0 && want > 0 {
            inp.rejection_heights = Some(rejection_ladder_heights(model, rm, want, plan.seed, s)?);
        }
        inp.harvest = Some(harvest);
    }
    if plan.method == Method::All {
        inp.identity = Some(per_horizon_identity(
            model,
            rm,
            &plan.a,
            plan.identity_horizon,
            plan.n_paths,
            plan.seed.wrapping_add(SEED_IDENTITY),
            s,
        )?);
    }
    inp.p = Some(p);
    Ok(build_claims_report(inp, plan.thresholds))
}

/// Fraction of harvested `M` samples with `M >> b`; a truncated direct
/// reading of `P(M >> R^-1 a)`.
pub fn harvested_m_above(h: &LadderHarvest, b: &OrthantVector, tol: f64) -> Estimate {
    let hits = h.m_samples.iter().filter(|m| strictly_dominates(m, b.as_slice(), tol)).count() as u64;
    Estimate::proportion(hits, h.m_samples.len() as u64, "harvested_M_above_b")
}
