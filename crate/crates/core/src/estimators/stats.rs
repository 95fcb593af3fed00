//! Small statistics helpers: z-scores, Kolmogorov–Smirnov distances,
//! quantiles and a log-log tail slope.

/// Asymptotic 1% critical value of the Kolmogorov distribution.
pub const KS_CRITICAL_1PCT: f64 = 1.63;

/// `diff / se`, with `0` for an exact match and `±inf` for a mismatch at zero noise.
pub fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `sup |F_n - F|` for a continuous reference CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// `sup |F_n - G_m|` between two empirical CDFs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// KS distance scaled to the Kolmogorov limit: `D sqrt(n m / (n + m))`.
pub fn ks_two_sample_scaled(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    ks_two_sample(a, b) * (n * m / (n + m)).sqrt()
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn quantiles(x: &[f64], probs: &[f64]) -> Vec<f64> {
    let s = sorted(x);
    probs.iter().map(|&p| quantile_sorted(&s, p)).collect()
}

/// Least-squares slope of `log P(X > x)` against `log x` over the largest
/// `top_fraction` of the positive samples. A Pareto(α) tail gives about `-α`.
pub fn tail_slope(samples: &[f64], top_fraction: f64) -> Option<f64> {
    let s: Vec<f64> = sorted(samples).into_iter().filter(|x| *x > 0.0).collect();
    let n = samples.len();
    let k = ((n as f64 * top_fraction).floor() as usize).min(s.len());
    if k < 10 {
        return None;
    }
    // The j-th largest sample has empirical survival j / n.
    let pts: Vec<(f64, f64)> = (1..k)
        .map(|j| (s[s.len() - j].ln(), (j as f64 / n as f64).ln()))
        .collect();
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / m, b + y / m));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ks_values_by_hand() {
        assert!((ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]) - 1.0).abs() < 1e-15);
        assert!((ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]) - 0.5).abs() < 1e-15);
        // Uniform grid midpoints against U(0,1): D = 1 / (2n).
        let x: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert!((ks_one_sample(&x, |t| t) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&s, 0.5), 1.5);
        assert_eq!(quantile_sorted(&s, 1.0), 3.0);
    }

    #[test]
    fn z_score_edges() {
        assert_eq!(z_score(0.0, 0.0), 0.0);
        assert_eq!(z_score(-1.0, 0.0), f64::NEG_INFINITY);
        assert_eq!(z_score(1.0, 0.5), 2.0);
    }

    #[test]
    fn pareto_quantile_grid_slope() {
        // Exact Pareto(2) quantiles: x_j = (n / j)^{1/2}.
        let n = 100_000;
        let x: Vec<f64> = (1..=n).map(|j| (n as f64 / j as f64).sqrt()).collect();
        let slope = tail_slope(&x, 0.01).unwrap();
        assert!((slope + 2.0).abs() < 0.05, "{slope}");
    }

    proptest! {
        #[test]
        fn ks_is_symmetric_and_bounded(a in prop::collection::vec(-5.0f64..5.0, 1..40),
                                       b in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let d = ks_two_sample(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_two_sample(&b, &a));
            prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
        }
    }
}
