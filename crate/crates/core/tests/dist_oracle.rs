//! Distribution-layer checks against quadrature oracles: interval
//! probabilities against an erfc-free normal integral, truncated-lognormal
//! draws against exact truncated moments and CDFs, and the factored
//! multivariate normal against a requested covariance.

mod common;

use common::{ks_critical_01, normal_interval_quad, simpson};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use strips::dist::{LognormalParams, ln_interval_prob, sample_mvn, sample_trunc_lognormal};
use strips::rng::stream;

#[test]
fn interval_prob_matches_quadrature() {
    let p = LognormalParams::new(0.0, 1.0).unwrap();
    // Φ(log 2) − Φ(0) = 0.2558914… via the quadrature oracle
    let got = ln_interval_prob(1.0, 2.0, &p).unwrap();
    let expect = normal_interval_quad(0.0, 2.0f64.ln());
    assert!((expect - 0.2558914).abs() < 5e-7, "oracle sanity: {expect}");
    assert!((got - expect).abs() <= 1e-12, "{got} vs {expect}");

    // tails and asymmetric parameters, relative agreement
    let q = LognormalParams::new(-0.7, 0.45).unwrap();
    for &(a, b) in &[
        (0.001, 0.002),
        (0.01, 0.3),
        (0.3, 1.0),
        (5.0, 9.0),
        (20.0, f64::INFINITY),
        (0.0, 1e-4),
    ] {
        let got = ln_interval_prob(a, b, &q).unwrap();
        let za = q.standardize(a);
        let zb = q.standardize(b);
        let expect = normal_interval_quad(za, zb);
        assert!(
            (got - expect).abs() <= 1e-10 * expect.max(1e-300),
            "({a},{b}): {got} vs {expect}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn interval_prob_additive_and_bounded(
        mu in -2.0..2.0f64,
        tau in 0.2..2.0f64,
        a in 0.01..1.0f64,
        gap1 in 0.01..2.0f64,
        gap2 in 0.01..2.0f64,
    ) {
        let p = LognormalParams::new(mu, tau).unwrap();
        let b = a + gap1;
        let c = b + gap2;
        let ab = p.interval_prob(a, b);
        let bc = p.interval_prob(b, c);
        let ac = p.interval_prob(a, c);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((0.0..=1.0).contains(&ac));
        prop_assert!((ab + bc - ac).abs() < 1e-12);
    }

    #[test]
    fn truncated_draws_stay_in_interval(
        mu in -2.0..2.0f64,
        tau in 0.2..2.0f64,
        a in 0.0..3.0f64,
        gap in 0.05..4.0f64,
        seed in 0u64..1000,
    ) {
        let p = LognormalParams::new(mu, tau).unwrap();
        let b = a + gap;
        let mut rng = stream(seed, 0);
        for _ in 0..50 {
            if let Ok(x) = sample_trunc_lognormal(a, b, &p, &mut rng) {
                prop_assert!(x > a && x <= b, "x = {x} outside ({a}, {b}]");
            }
        }
    }
}

#[test]
fn truncated_mean_matches_quadrature() {
    // E[T | 5 < T ≤ 6] for T ~ LN(0, 1) via direct x-scale quadrature
    let p = LognormalParams::new(0.0, 1.0).unwrap();
    let density = |x: f64| {
        let z = x.ln();
        (-0.5 * z * z).exp() / (x * (2.0 * std::f64::consts::PI).sqrt())
    };
    let mass = simpson(density, 5.0, 6.0, 4000);
    let first_moment = simpson(|x| x * density(x), 5.0, 6.0, 4000);
    let expect = first_moment / mass;

    let mut rng = stream(41, 0);
    let n = 1_000_000usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let x = sample_trunc_lognormal(5.0, 6.0, &p, &mut rng).unwrap();
        sum += x;
        sum_sq += x * x;
    }
    let mean = sum / n as f64;
    let var = sum_sq / n as f64 - mean * mean;
    let se = (var / n as f64).sqrt();
    assert!(
        (mean - expect).abs() < 3.0 * se,
        "{mean} vs {expect} (se {se})"
    );
}

#[test]
fn truncated_draws_pass_ks_against_renormalized_cdf() {
    // KS at level 0.01 against the analytic truncated CDF
    for &(a, b, mu, tau) in &[
        (0.5, 2.0, 0.0, 1.0),
        (0.0, f64::INFINITY, 0.3, 0.7),
        (4.0, 9.0, 0.0, 0.5),
    ] {
        let p = LognormalParams::new(mu, tau).unwrap();
        let n = 100_000usize;
        let mut rng = stream(42, 0);
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_trunc_lognormal(a, b, &p, &mut rng).unwrap())
            .collect();
        draws.sort_unstable_by(f64::total_cmp);
        let pa = p.interval_prob(0.0, a.max(0.0)).min(1.0);
        let pa = if a <= 0.0 { 0.0 } else { pa };
        let mass = p.interval_prob(a, b);
        let mut d_stat: f64 = 0.0;
        for (i, &x) in draws.iter().enumerate() {
            let f = (p.interval_prob(0.0, x) - pa) / mass;
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d_stat = d_stat.max((f - lo).abs()).max((f - hi).abs());
        }
        let crit = ks_critical_01(n);
        assert!(d_stat < crit, "({a},{b},{mu},{tau}): KS {d_stat} ≥ {crit}");
    }
}

#[test]
fn mvn_matches_scaled_regression_covariance() {
    // covariance φ²(XᵀX)⁻¹ recovered by the sample covariance of draws
    let m = 40;
    let x = DMatrix::from_fn(m, 2, |i, j| {
        if j == 0 {
            1.0
        } else {
            (i as f64 * 0.37).sin() + 2.0
        }
    });
    let phi2 = 0.6;
    let cov = phi2 * (x.transpose() * &x).try_inverse().unwrap();
    let mean = DVector::from_vec(vec![1.0, -0.5]);
    let mut rng = stream(43, 0);
    let n = 100_000;
    let draws: Vec<DVector<f64>> = (0..n)
        .map(|_| sample_mvn(&mean, &cov, &mut rng).unwrap())
        .collect();
    let emp_mean = draws.iter().sum::<DVector<f64>>() / n as f64;
    let mut emp = DMatrix::zeros(2, 2);
    for d in &draws {
        let c = d - &emp_mean;
        emp += &c * c.transpose();
    }
    emp /= (n - 1) as f64;
    let rel = (&emp - &cov).norm() / cov.norm();
    assert!(rel < 0.05, "covariance off by {rel}");
}
