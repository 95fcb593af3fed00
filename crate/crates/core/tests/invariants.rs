//! Property tests for the structural invariants of each layer.

use proptest::prelude::*;

use orthant_ruin::estimators::{estimate_storage_side, ruin_sweep, Settings};
use orthant_ruin::lcp::{solve_lcp, solve_lcp_enum, MatrixView};
use orthant_ruin::linalg::Matrix;
use orthant_ruin::models::{build_model, derive_stream, ModelConfig};
use orthant_ruin::orthant::{
    build_reflection, dominates, order, partially_dominates, spectral_radius, strictly_dominates, OrderRelation,
    OrthantVector, ReflectionMatrix,
};
use orthant_ruin::skorokhod::{check_ruin_equivalences, detect_ruin, solve_sp};
use orthant_ruin::storage::duality_verdict;

const TOL: f64 = 1e-9;

/// Admissible `P` with off-diagonal entries in `[0, 0.9 / (d - 1)]`.
fn admissible_p(max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_d).prop_flat_map(|d| {
        let hi = if d == 1 { 0.0 } else { 0.9 / (d - 1) as f64 };
        prop::collection::vec(prop::collection::vec(0.0..=hi, d), d).prop_map(|mut rows| {
            for (i, r) in rows.iter_mut().enumerate() {
                r[i] = 0.0;
            }
            rows
        })
    })
}

fn reflection(rows: &[Vec<f64>]) -> ReflectionMatrix {
    ReflectionMatrix::from_rows(rows).expect("admissible")
}

/// `(P, a, u_1..u_n)` with mixed-sign increments.
fn sp_instance(max_d: usize, max_n: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    admissible_p(max_d).prop_flat_map(move |p| {
        let d = p.len();
        (
            Just(p),
            prop::collection::vec(prop_oneof![Just(0.0), 0.0..3.0], d),
            prop::collection::vec(prop::collection::vec(-2.0..1.5f64, d), 1..=max_n),
        )
    })
}

fn vectors(v: Vec<Vec<f64>>) -> Vec<OrthantVector> {
    v.into_iter().map(|x| OrthantVector::new(x).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn inverse_is_nonnegative_with_unit_diagonal(p in admissible_p(6)) {
        let m = reflection(&p);
        let d = m.dim();
        for i in 0..d {
            prop_assert!(m.rinv().get(i, i) >= 1.0 - 1e-12);
            for j in 0..d {
                prop_assert!(m.rinv().get(i, j) >= 0.0);
            }
        }
        let err = m.r().mul(m.rinv()).max_abs_diff(&Matrix::identity(d));
        prop_assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn two_by_two_spectral_radius(p in 0.0..1.0f64, q in 0.0..1.0f64) {
        let m = Matrix::from_rows(&[vec![0.0, p], vec![q, 0.0]]).unwrap();
        let rho = spectral_radius(&m).unwrap();
        prop_assert!((rho - (p * q).sqrt()).abs() <= 1e-8, "{rho}");
    }

    #[test]
    fn orders_nest(x in prop::collection::vec(-2i32..3, 1..5), shift in prop::collection::vec(-1i32..2, 1..5)) {
        let d = x.len().min(shift.len());
        let x: Vec<f64> = x[..d].iter().map(|v| *v as f64).collect();
        let y: Vec<f64> = x.iter().zip(&shift[..d]).map(|(a, s)| a - *s as f64).collect();
        let xv = OrthantVector::new(x.clone()).unwrap();
        prop_assert_eq!(order(&xv, &xv, 0.0).unwrap(), OrderRelation::Geq);
        if strictly_dominates(&x, &y, 0.0) {
            prop_assert!(partially_dominates(&x, &y, 0.0));
        }
        if partially_dominates(&x, &y, 0.0) {
            prop_assert!(dominates(&x, &y, 0.0));
        }
        if dominates(&x, &y, 0.0) && dominates(&y, &x, 0.0) {
            prop_assert_eq!(&x, &y);
        }
    }

    #[test]
    fn lcp_solvers_agree_and_are_complementary(
        p in admissible_p(6),
        seed in any::<u64>(),
    ) {
        let m = reflection(&p);
        let mut rng = derive_stream(seed, 0);
        let eta: Vec<f64> = (0..m.dim()).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        let eta = OrthantVector::new(eta).unwrap();
        let fp = solve_lcp(&eta, &m, MatrixView::Reflection).unwrap();
        // Enumeration errors, including MultipleSolutions, fail the test.
        let en = solve_lcp_enum(&eta, &m, MatrixView::Reflection).unwrap();
        prop_assert!(fp.xi.max_abs_diff(&en.xi) <= 1e-8);
        prop_assert!(fp.zeta.max_abs_diff(&en.zeta) <= 1e-8);
        for s in [&fp, &en] {
            prop_assert!(s.xi.iter().chain(s.zeta.iter()).all(|v| *v >= -1e-12));
            prop_assert!(s.complementarity().abs() <= 1e-9 * (1.0 + eta.max_abs()));
            let rx = m.r().mul_vec(s.xi.as_slice());
            for i in 0..m.dim() {
                prop_assert!((s.zeta[i] - eta[i] - rx[i]).abs() <= 1e-9 * (1.0 + eta.max_abs()));
            }
        }
    }

    #[test]
    fn lcp_damage_is_monotone(
        p in admissible_p(5),
        eta in prop::collection::vec(-3.0..3.0f64, 5),
        cut in prop::collection::vec(0.0..2.0f64, 5),
    ) {
        let m = reflection(&p);
        let d = m.dim();
        let hi = OrthantVector::new(eta[..d].to_vec()).unwrap();
        let lo = OrthantVector::new(eta[..d].iter().zip(&cut).map(|(e, c)| e - c).collect()).unwrap();
        let a = solve_lcp(&hi, &m, MatrixView::Reflection).unwrap();
        let b = solve_lcp(&lo, &m, MatrixView::Reflection).unwrap();
        prop_assert!(dominates(b.xi.as_slice(), a.xi.as_slice(), 1e-9));
    }

    #[test]
    fn sp_paths_satisfy_invariants((p, a, u) in sp_instance(6, 100)) {
        let m = reflection(&p);
        let a = OrthantVector::new(a).unwrap();
        let path = solve_sp(&a, &vectors(u), &m).unwrap();
        prop_assert_eq!(path.check_invariants(&m), None);
        prop_assert_eq!(check_ruin_equivalences(&path, &m, TOL), None);
        let r = detect_ruin(&path, &m, TOL).unwrap();
        let le = |x: Option<usize>, y: Option<usize>| match (x, y) {
            (_, None) => true,
            (Some(x), Some(y)) => x <= y,
            (None, Some(_)) => false,
        };
        prop_assert!(le(r.t_ruin, r.t_sruin) && le(r.t_sruin, r.t_ssruin), "{r:?}");
    }

    /// Left sides imply right sides; the auxiliary identities hold exactly.
    #[test]
    fn duality_forward_directions((p, a, u) in sp_instance(5, 40)) {
        let m = reflection(&p);
        let a = OrthantVector::new(a).unwrap();
        let v = duality_verdict(&a, &vectors(u), &m, TOL).unwrap();
        for e in &v.equivalences {
            prop_assert!(!e.lhs || e.rhs, "{}", e.id);
        }
        for c in &v.checks {
            prop_assert!(c.holds, "{}", c.id);
        }
        for c in &v.value_identities {
            prop_assert!(c.holds, "{}", c.id);
        }
        prop_assert!(v.step_equivalence_failure.is_none());
    }

    /// In one dimension the biconditionals hold in full.
    #[test]
    fn scalar_duality_is_exact(a in 0.0..3.0f64, u in prop::collection::vec(-2.0..1.5f64, 1..40)) {
        let m = ReflectionMatrix::identity(1).unwrap();
        let u: Vec<Vec<f64>> = u.into_iter().map(|x| vec![x]).collect();
        let v = duality_verdict(&OrthantVector::new(vec![a]).unwrap(), &vectors(u), &m, TOL).unwrap();
        prop_assert!(v.passed, "{:?}", v.failed_ids());
    }
}

fn cl2() -> (ModelConfig, ReflectionMatrix) {
    let rm = reflection(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
    (ModelConfig::cl_exponential(vec![1.0, 1.0], vec![1.0, 1.0], vec![1.5, 1.5]), rm)
}

#[test]
fn atomless_claims_give_equal_ruin_times() {
    let (cfg, rm) = cl2();
    let (model, _) = build_model(&cfg, &rm).unwrap();
    let a = OrthantVector::new(vec![0.5, 1.0]).unwrap();
    let mut defined = 0;
    for path in 0..10_000 {
        let mut rng = derive_stream(11, path);
        let u: Vec<OrthantVector> = (0..50).map(|_| model.sample_increment(&mut rng)).collect();
        let r = detect_ruin(&solve_sp(&a, &u, &rm).unwrap(), &rm, TOL).unwrap();
        assert!(r.t_ruin == r.t_sruin && r.t_sruin == r.t_ssruin, "path {path}: {r:?}");
        defined += r.t_ruin.is_some() as u32;
    }
    assert!(defined > 100);
}

#[test]
fn ruin_is_monotone_in_capital_with_common_numbers() {
    let (cfg, rm) = cl2();
    let (model, _) = build_model(&cfg, &rm).unwrap();
    let caps: Vec<OrthantVector> = [[0.0, 0.0], [0.5, 0.0], [0.5, 1.0], [2.0, 1.0], [4.0, 4.0]]
        .iter()
        .map(|c| OrthantVector::new(c.to_vec()).unwrap())
        .collect();
    let rows = ruin_sweep(&model, &rm, &caps, 200, 4000, 3, Settings::default()).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].ss.value <= w[0].ss.value);
        assert!(w[1].s.value <= w[0].s.value);
        assert!(w[1].r.value <= w[0].r.value);
    }
}

#[test]
fn storage_censoring_shrinks_with_cap() {
    let (cfg, rm) = cl2();
    let (model, _) = build_model(&cfg, &rm).unwrap();
    let a = OrthantVector::new(vec![2.0, 2.0]).unwrap();
    let fractions: Vec<f64> = [10, 100, 1000]
        .into_iter()
        .map(|cap| {
            estimate_storage_side(&model, &rm, &a, 4000, 5, cap, Settings::default())
                .unwrap()
                .censored_fraction
        })
        .collect();
    assert!(fractions.windows(2).all(|w| w[1] <= w[0]), "{fractions:?}");
    assert!(fractions[2] < fractions[0]);
}

/// Nilpotent chains of every length have spectral radius exactly 0.
#[test]
fn feedforward_chains_have_zero_spectral_radius() {
    for d in 2..=12 {
        for w in [0.5, 0.9, 1.0] {
            let mut p = Matrix::zeros(d);
            for i in 0..d - 1 {
                p.set(i, i + 1, w);
            }
            assert_eq!(spectral_radius(&p).unwrap(), 0.0, "d = {d}, w = {w}");
        }
    }
}

#[test]
fn feedforward_matrix_builds_directly() {
    let mut p = Matrix::zeros(3);
    p.set(0, 1, 0.5);
    p.set(1, 2, 0.5);
    let m = build_reflection(p).unwrap();
    assert_eq!(m.spectral_radius(), 0.0);
}
