//! Randomized instance corpora for the exact finite-horizon statements:
//! pathwise duality verdicts, LCP oracle agreement and the comparison theorem.
//!
//! Two instance families alternate. Continuous instances draw `P`, `a` and
//! Gaussian increments; they almost never produce ties. Lattice instances use
//! `P_ij in {0, 1/16, 2/16, 3/16}` and small integers for `a` and `u`, so
//! boundary ties (`w_n = R^{-1}a`, coordinates of `z` hitting 0 exactly, etc.)
//! occur constantly and exercise the tolerance semantics.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::lcp::{solve_lcp, solve_lcp_enum, MatrixView};
use crate::linalg::Matrix;
use crate::orthant::{build_reflection, OrthantVector, ReflectionMatrix};
use crate::rng::{derive_stream_in, domain, RngStream};
use crate::skorokhod::comparison_check;
use crate::storage::{duality_verdict, DualityVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Continuous,
    Lattice,
}

/// Which instance kinds a corpus draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFamily {
    Continuous,
    Lattice,
    /// Even indices continuous, odd indices lattice.
    Mixed,
}

impl CorpusFamily {
    fn kind(&self, index: u64) -> InstanceKind {
        match self {
            Self::Continuous => InstanceKind::Continuous,
            Self::Lattice => InstanceKind::Lattice,
            Self::Mixed if index.is_multiple_of(2) => InstanceKind::Continuous,
            Self::Mixed => InstanceKind::Lattice,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Instance {
    pub index: u64,
    pub kind: InstanceKind,
    #[serde(skip)]
    pub matrix: ReflectionMatrix,
    pub p: Vec<Vec<f64>>,
    pub a: OrthantVector,
    pub u: Vec<OrthantVector>,
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusParams {
    pub instances: u64,
    pub dmax: usize,
    pub nmax: usize,
    pub seed: u64,
    pub strict_tol: f64,
    pub family: CorpusFamily,
    /// Add perturbations of size ~1e-13 to lattice data (tolerance stress mode).
    pub stress: bool,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            instances: 100_000,
            dmax: 5,
            nmax: 40,
            seed: 20_240_601,
            strict_tol: crate::skorokhod::DEFAULT_STRICT_TOL,
            family: CorpusFamily::Mixed,
            stress: false,
        }
    }
}

fn random_p(rng: &mut RngStream, d: usize, kind: InstanceKind) -> Matrix {
    let mut p = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let v = match kind {
                InstanceKind::Continuous => {
                    if rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random_range(0.0..=0.9 / (d - 1) as f64)
                    }
                }
                InstanceKind::Lattice => rng.random_range(0..=3) as f64 / 16.0,
            };
            p.set(i, j, v);
        }
    }
    p
}

/// Deterministic instance `index` of the corpus.
pub fn generate_instance(params: &CorpusParams, index: u64) -> Instance {
    let mut rng = derive_stream_in(params.seed, domain::CORPUS, index);
    let kind = params.family.kind(index);
    let d = rng.random_range(1..=params.dmax.max(1));
    let n = rng.random_range(1..=params.nmax.max(1));
    let p = random_p(&mut rng, d, kind);
    let matrix = build_reflection(p.clone()).expect("corpus P has row sums below 1");
    let a: Vec<f64> = (0..d)
        .map(|_| match kind {
            InstanceKind::Continuous => {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0.0..3.0)
                }
            }
            InstanceKind::Lattice => rng.random_range(0..=3) as f64,
        })
        .collect();
    let drift: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..0.6)).collect();
    let u = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d)
                .map(|i| match kind {
                    InstanceKind::Continuous => {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        drift[i] + z
                    }
                    InstanceKind::Lattice => {
                        let base = rng.random_range(-3..=2) as f64;
                        if params.stress {
                            base + rng.random_range(-1e-13..1e-13)
                        } else {
                            base
                        }
                    }
                })
                .collect();
            OrthantVector::new(x).expect("finite draws")
        })
        .collect();
    Instance {
        index,
        kind,
        p: p.rows(),
        matrix,
        a: OrthantVector::new(a).expect("finite"),
        u,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub instance: Instance,
    pub failed: Vec<&'static str>,
    pub verdict: Option<DualityVerdict>,
    pub error: Option<String>,
}

/// Ids of the biconditionals in a [`DualityVerdict`].
pub const EQUIVALENCE_IDS: [&str; 8] = [
    "ss",
    "s",
    "r",
    "ss_zero_capital",
    "s_zero_capital",
    "r_zero_capital",
    "ss_shift",
    "r_shift",
];

#[derive(Debug, Clone, Serialize)]
pub struct Tally {
    pub id: &'static str,
    /// Instances where the left side (or the identity's condition) was true.
    pub lhs_true: u64,
    pub failures: u64,
    /// Failures with the left side true and the right side false.
    pub lhs_only: u64,
    /// Failures with the right side true and the left side false.
    pub rhs_only: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusSummary {
    pub instances: u64,
    pub dmax: usize,
    pub nmax: usize,
    pub seed: u64,
    pub strict_tol: f64,
    pub family: CorpusFamily,
    pub stress: bool,
    pub failing_instances: u64,
    pub tallies: Vec<Tally>,
    pub first_counterexample: Option<Counterexample>,
}

enum Outcome {
    Verdict(Box<DualityVerdict>),
    Error(String),
}

/// Runs `duality_verdict` on every corpus instance. Results are merged in
/// instance order, so the summary does not depend on the worker count.
pub fn run_duality_corpus(params: &CorpusParams) -> CorpusSummary {
    let outcomes: Vec<(u64, Outcome)> = (0..params.instances)
        .into_par_iter()
        .map(|i| {
            let inst = generate_instance(params, i);
            let out = match duality_verdict(&inst.a, &inst.u, &inst.matrix, params.strict_tol) {
                Ok(v) => Outcome::Verdict(Box::new(v)),
                Err(e) => Outcome::Error(e.to_string()),
            };
            (i, out)
        })
        .collect();

    let mut tallies: Vec<Tally> = Vec::new();
    let mut failing = 0;
    let mut first = None;
    for (i, out) in outcomes {
        let (failed, verdict, error) = match out {
            Outcome::Verdict(v) => {
                let rows = v
                    .equivalences
                    .iter()
                    .map(|e| (e.id, e.lhs, e.rhs, e.holds))
                    .chain(v.value_identities.iter().map(|e| (e.id, e.applicable, e.applicable, e.holds)))
                    .chain(v.checks.iter().map(|e| (e.id, e.applicable, e.applicable, e.holds)))
                    .chain(std::iter::once((
                        "step_ruin_criteria",
                        true,
                        true,
                        v.step_equivalence_failure.is_none(),
                    )));
                for (id, lhs, rhs, holds) in rows {
                    let t = match tallies.iter_mut().find(|t| t.id == id) {
                        Some(t) => t,
                        None => {
                            tallies.push(Tally {
                                id,
                                lhs_true: 0,
                                failures: 0,
                                lhs_only: 0,
                                rhs_only: 0,
                            });
                            tallies.last_mut().unwrap()
                        }
                    };
                    t.lhs_true += lhs as u64;
                    t.failures += !holds as u64;
                    t.lhs_only += (!holds && lhs && !rhs) as u64;
                    t.rhs_only += (!holds && rhs && !lhs) as u64;
                }
                (v.failed_ids(), Some(*v), None)
            }
            Outcome::Error(e) => (vec!["solver_error"], None, Some(e)),
        };
        if !failed.is_empty() {
            failing += 1;
            if first.is_none() {
                first = Some(Counterexample {
                    instance: generate_instance(params, i),
                    failed,
                    verdict,
                    error,
                });
            }
        }
    }
    CorpusSummary {
        instances: params.instances,
        dmax: params.dmax,
        nmax: params.nmax,
        seed: params.seed,
        strict_tol: params.strict_tol,
        family: params.family,
        stress: params.stress,
        failing_instances: failing,
        tallies,
        first_counterexample: first,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LcpOracleSummary {
    pub instances: u64,
    pub max_xi_diff: f64,
    pub max_zeta_diff: f64,
    pub max_complementarity: f64,
    pub failures: u64,
    pub enumeration_errors: u64,
}

/// Fixed-point solver vs active-set enumeration on random `(eta, P)`, `d <= dmax`.
pub fn run_lcp_oracle_corpus(instances: u64, dmax: usize, seed: u64) -> LcpOracleSummary {
    let rows: Vec<(f64, f64, f64, bool)> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream_in(seed, domain::CORPUS, i);
            let kind = if i % 2 == 0 {
                InstanceKind::Continuous
            } else {
                InstanceKind::Lattice
            };
            let d = rng.random_range(1..=dmax);
            let m = build_reflection(random_p(&mut rng, d, kind)).expect("row sums below 1");
            let eta: Vec<f64> = (0..d)
                .map(|_| match kind {
                    InstanceKind::Continuous => 3.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng),
                    InstanceKind::Lattice => rng.random_range(-3..=3) as f64,
                })
                .collect();
            let eta = OrthantVector::new(eta).expect("finite");
            let fp = solve_lcp(&eta, &m, MatrixView::Reflection);
            let en = solve_lcp_enum(&eta, &m, MatrixView::Reflection);
            match (fp, en) {
                (Ok(a), Ok(b)) => (
                    a.xi.max_abs_diff(&b.xi),
                    a.zeta.max_abs_diff(&b.zeta),
                    a.complementarity().abs(),
                    false,
                ),
                _ => (f64::INFINITY, f64::INFINITY, f64::INFINITY, true),
            }
        })
        .collect();
    let mut s = LcpOracleSummary {
        instances,
        max_xi_diff: 0.0,
        max_zeta_diff: 0.0,
        max_complementarity: 0.0,
        failures: 0,
        enumeration_errors: 0,
    };
    for (dx, dz, c, err) in rows {
        s.max_xi_diff = s.max_xi_diff.max(dx);
        s.max_zeta_diff = s.max_zeta_diff.max(dz);
        s.max_complementarity = s.max_complementarity.max(c);
        s.failures += (err || dx > 1e-8 || dz > 1e-8) as u64;
        s.enumeration_errors += err as u64;
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSummary {
    pub instances: u64,
    pub failures: u64,
    pub first_failure: Option<u64>,
}

/// Comparison theorem on corpus instances paired with `b = a + extra`, `extra >= 0`.
pub fn run_comparison_corpus(params: &CorpusParams) -> ComparisonSummary {
    let ok: Vec<bool> = (0..params.instances)
        .into_par_iter()
        .map(|i| {
            let inst = generate_instance(params, i);
            let mut rng = derive_stream_in(params.seed, domain::ORACLE, i);
            let b: Vec<f64> = inst
                .a
                .iter()
                .map(|x| {
                    let extra = match inst.kind {
                        InstanceKind::Continuous => rng.random_range(0.0..2.0),
                        InstanceKind::Lattice => rng.random_range(0..=2) as f64,
                    };
                    x + extra
                })
                .collect();
            let b = OrthantVector::new(b).expect("finite");
            comparison_check(&inst.a, &b, &inst.u, &inst.matrix).is_ok_and(|c| c.holds)
        })
        .collect();
    let failures = ok.iter().filter(|x| !**x).count() as u64;
    ComparisonSummary {
        instances: params.instances,
        failures,
        first_failure: ok.iter().position(|x| !x).map(|i| i as u64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_deterministic() {
        let p = CorpusParams::default();
        let a = generate_instance(&p, 17);
        let b = generate_instance(&p, 17);
        assert_eq!(a.u, b.u);
        assert_eq!(a.p, b.p);
        assert_eq!(a.kind, InstanceKind::Lattice);
        let cont = CorpusParams { family: CorpusFamily::Continuous, ..p };
        assert_eq!(generate_instance(&cont, 17).kind, InstanceKind::Continuous);
    }

    #[test]
    fn small_corpus_failures_are_converse_only() {
        let p = CorpusParams {
            instances: 600,
            family: CorpusFamily::Mixed,
            ..CorpusParams::default()
        };
        let s = run_duality_corpus(&p);
        for t in &s.tallies {
            // every left side implies its right side; only the converse can fail
            assert_eq!(t.lhs_only, 0, "{}", t.id);
            if !EQUIVALENCE_IDS.contains(&t.id) {
                assert_eq!(t.failures, 0, "{}", t.id);
            }
        }
        let ss = s.tallies.iter().find(|t| t.id == "ss").unwrap();
        assert!(ss.lhs_true > 0);
    }

    #[test]
    fn scalar_corpus_has_no_failures() {
        let p = CorpusParams {
            instances: 600,
            dmax: 1,
            family: CorpusFamily::Mixed,
            ..CorpusParams::default()
        };
        let s = run_duality_corpus(&p);
        assert_eq!(s.failing_instances, 0, "{:?}", s.first_counterexample.map(|c| c.failed));
    }

    #[test]
    fn empty_corpus() {
        let s = run_duality_corpus(&CorpusParams {
            instances: 0,
            ..CorpusParams::default()
        });
        assert_eq!(s.failing_instances, 0);
        assert!(s.tallies.is_empty());
    }

    #[test]
    fn small_oracle_and_comparison_corpora() {
        let s = run_lcp_oracle_corpus(500, 6, 3);
        assert_eq!(s.failures, 0, "{s:?}");
        let c = run_comparison_corpus(&CorpusParams {
            instances: 200,
            ..CorpusParams::default()
        });
        assert_eq!(c.failures, 0);
    }
}
