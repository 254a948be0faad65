//! Shared oracles for the integration suites: normal tail probabilities by
//! quadrature (independent of the erfc path used in the library), a dense
//! grid representation of the weighted target for normalization/quantiles,
//! a strip-bound oracle, goodness-of-fit helpers, and a published-scale CSV
//! fixture generator.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use std::io::Write;
use std::path::Path;
use strips::rng::stream;

const SQRT_2PI: f64 = 2.506628274631000502415765284811;

/// Composite Simpson over [a, b] with `panels` panels (made even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = if panels.is_multiple_of(2) {
        panels
    } else {
        panels + 1
    };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * k as f64);
    }
    acc * h / 3.0
}

/// Upper-tail P(Z > z) for z ≥ 0 by quadrature: φ(z)·∫₀ e^(−zs−s²/2) ds.
/// Keeps relative accuracy deep into the tail without touching erfc.
pub fn normal_tail_quad(z: f64) -> f64 {
    assert!(z >= 0.0);
    if z.is_infinite() {
        return 0.0;
    }
    let phi = (-0.5 * z * z).exp() / SQRT_2PI;
    if phi == 0.0 {
        return 0.0;
    }
    // z·s + s²/2 = 80 at the far end
    let s_max = (z * z + 160.0).sqrt() - z;
    let integral = simpson(|s| (-z * s - 0.5 * s * s).exp(), 0.0, s_max, 8000);
    phi * integral
}

/// P(za < Z ≤ zb) by quadrature; endpoints may be ±∞.
pub fn normal_interval_quad(za: f64, zb: f64) -> f64 {
    assert!(za <= zb);
    if za >= 0.0 {
        normal_tail_quad(za) - normal_tail_quad(zb)
    } else if zb <= 0.0 {
        normal_tail_quad(-zb) - normal_tail_quad(-za)
    } else {
        1.0 - normal_tail_quad(zb) - normal_tail_quad(-za)
    }
}

/// 99th percentile of χ²_df (Wilson-Hilferty).
pub fn chi2_quantile_99(df: usize) -> f64 {
    let k = df as f64;
    let z = 2.3263478740408408;
    let c = 2.0 / (9.0 * k);
    k * (1.0 - c + z * c.sqrt()).powi(3)
}

/// Kolmogorov-Smirnov critical value at level 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    (-(0.005f64).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Dense-grid representation of the variance conditional on t = log x:
/// log f_T(t) = −(κ+1)t − λe^(−t) − (t−μ)²/(2τ²), normalized by trapezoid
/// integration. Everything downstream (CDF, quantiles, interval masses) is
/// interpolation on this grid, fully independent of the sampler under test.
pub struct GridTarget {
    pub ts: Vec<f64>,
    /// Normalized density of t on the grid.
    pub pdf: Vec<f64>,
    /// CDF at the grid points; first ≈ 0, last = 1.
    pub cdf: Vec<f64>,
    /// log ∫ w·g dx (the target's normalizer against the lognormal base).
    pub log_psi: f64,
}

pub fn grid_target(kappa: f64, lambda: f64, mu: f64, tau: f64, points: usize) -> GridTarget {
    let log_kernel_t =
        |t: f64| -(kappa + 1.0) * t - lambda * (-t).exp() - (t - mu) * (t - mu) / (2.0 * tau * tau);
    // coarse scan for the effective support
    let eta_log = (lambda / (kappa + 1.0)).ln();
    let pad = 50.0 * tau.max(0.5) + 5.0;
    let coarse_lo = eta_log.min(mu) - pad;
    let coarse_hi = eta_log.max(mu) + pad;
    let coarse_n = 40_000;
    let step = (coarse_hi - coarse_lo) / coarse_n as f64;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=coarse_n {
        best = best.max(log_kernel_t(coarse_lo + step * k as f64));
    }
    let keep = |t: f64| log_kernel_t(t) >= best - 740.0;
    let mut lo = coarse_lo;
    while !keep(lo) {
        lo += step;
    }
    let mut hi = coarse_hi;
    while !keep(hi) {
        hi -= step;
    }
    lo -= step;
    hi += step;

    let n = points;
    let h = (hi - lo) / (n - 1) as f64;
    let ts: Vec<f64> = (0..n).map(|k| lo + h * k as f64).collect();
    let raw: Vec<f64> = ts.iter().map(|&t| (log_kernel_t(t) - best).exp()).collect();
    let mut cdf = vec![0.0; n];
    for k in 1..n {
        cdf[k] = cdf[k - 1] + 0.5 * (raw[k - 1] + raw[k]) * h;
    }
    let total = cdf[n - 1];
    let pdf: Vec<f64> = raw.iter().map(|&v| v / total).collect();
    for c in cdf.iter_mut() {
        *c /= total;
    }
    // ∫ w g dx = ∫ e^{log_kernel_t(t)} dt / (τ√2π); fold the max back in
    let log_psi = best + total.ln() - (tau * SQRT_2PI).ln();
    GridTarget {
        ts,
        pdf,
        cdf,
        log_psi,
    }
}

impl GridTarget {
    /// CDF of x = e^t.
    pub fn cdf_x(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let t = x.ln();
        if t <= self.ts[0] {
            return 0.0;
        }
        if t >= *self.ts.last().unwrap() {
            return 1.0;
        }
        let h = self.ts[1] - self.ts[0];
        let idx = ((t - self.ts[0]) / h).floor() as usize;
        let idx = idx.min(self.ts.len() - 2);
        let frac = (t - self.ts[idx]) / h;
        self.cdf[idx] + frac * (self.cdf[idx + 1] - self.cdf[idx])
    }

    /// Quantile of x at probability p.
    pub fn quantile_x(&self, p: f64) -> f64 {
        assert!((0.0..=1.0).contains(&p));
        let idx = self.cdf.partition_point(|&c| c < p);
        if idx == 0 {
            return self.ts[0].exp();
        }
        if idx >= self.cdf.len() {
            return self.ts[self.cdf.len() - 1].exp();
        }
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let frac = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
        (self.ts[idx - 1] + frac * (self.ts[idx] - self.ts[idx - 1])).exp()
    }
}

/// Strip-bound oracle: recompute ρ₊ for the inverse-gamma-weighted lognormal
/// target from the envelope rule plus quadrature interval probabilities.
pub fn rho_plus_oracle(kappa: f64, lambda: f64, mu: f64, tau: f64, knots: &[f64]) -> f64 {
    let log_w = |x: f64| -> f64 {
        if x <= 0.0 || x.is_infinite() {
            f64::NEG_INFINITY
        } else {
            -(kappa + 1.0) * x.ln() - lambda / x
        }
    };
    let eta = lambda / (kappa + 1.0);
    let n = knots.len() + 1;
    let mut log_xibar = Vec::with_capacity(n);
    let mut log_ximin = Vec::with_capacity(n);
    for j in 0..n {
        let lo = if j == 0 { 0.0 } else { knots[j - 1] };
        let hi = if j == knots.len() {
            f64::INFINITY
        } else {
            knots[j]
        };
        let (wbar, wmin) = if eta <= lo {
            (log_w(lo), log_w(hi))
        } else if eta > hi {
            (log_w(hi), log_w(lo))
        } else {
            (log_w(eta), log_w(lo).min(log_w(hi)))
        };
        let za = if lo == 0.0 {
            f64::NEG_INFINITY
        } else {
            (lo.ln() - mu) / tau
        };
        let zb = if hi.is_infinite() {
            f64::INFINITY
        } else {
            (hi.ln() - mu) / tau
        };
        let prob = normal_interval_quad(za, zb);
        let logp = if prob > 0.0 {
            prob.ln()
        } else {
            f64::NEG_INFINITY
        };
        log_xibar.push(wbar + logp);
        log_ximin.push(wmin + logp);
    }
    let max = log_xibar.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_bar: f64 = log_xibar.iter().map(|&v| (v - max).exp()).sum();
    let sum_min: f64 = log_ximin.iter().map(|&v| (v - max).exp()).sum();
    (1.0 - sum_min / sum_bar).clamp(0.0, 1.0)
}

/// Equal-probability-bin chi-square GOF of draws against a grid target, at
/// level 0.01. Returns (statistic, critical value).
pub fn gof_chi_square(draws: &[f64], target: &GridTarget, bins: usize) -> (f64, f64) {
    let n = draws.len();
    let edges: Vec<f64> = (1..bins)
        .map(|k| target.quantile_x(k as f64 / bins as f64))
        .collect();
    let mut counts = vec![0usize; bins];
    for &x in draws {
        let bin = edges.partition_point(|&e| e < x);
        counts[bin] += 1;
    }
    let expected = n as f64 / bins as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    (stat, chi2_quantile_99(bins - 1))
}

/// Write a published-scale CSV with the survey schema (id, estimate, margin
/// of error, sample size, two covariates), generated from the model so the
/// analysis pipeline has realistic conditionals.
pub fn write_acs_like_csv(path: &Path, areas: usize, seed: u64) {
    let mut rng = stream(seed, 0);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    writeln!(f, "GEOID,EST,MOE,N,SNAP,PEP").unwrap();
    let mut written = 0usize;
    while written < areas {
        // county-scale housing-unit samples: n spans ~10² to ~10⁵, so the
        // d = 0.36·√n rule yields heavy-tailed weight kernels for the small
        // areas and sharp peaks for the big ones, against a tight
        // log-variance regression
        let n: f64 = (8.2 + 1.6 * rng.sample::<f64, _>(StandardNormal))
            .exp()
            .round();
        let d = 0.36 * n.sqrt();
        if n < 60.0 || d < 1.5 || n > 2e5 {
            continue;
        }
        let snap = (8.0 + 1.0 * rng.sample::<f64, _>(StandardNormal))
            .exp()
            .floor();
        let pep = (9.2 + 0.9 * rng.sample::<f64, _>(StandardNormal))
            .exp()
            .floor();
        let theta = 1.0
            + 0.45 * snap.ln_1p()
            + 0.4 * pep.ln_1p()
            + 0.25 * rng.sample::<f64, _>(StandardNormal);
        let log_var = 2.2 - n.ln() + 0.25 * rng.sample::<f64, _>(StandardNormal);
        let var = log_var.exp();
        let y = theta + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        // s² = σ²·χ²_d/d on the log scale, published as a margin of error
        let chi: f64 = rng.sample(rand_distr::Gamma::new(d / 2.0, 2.0).unwrap());
        let s2 = var * chi / d;
        let est = y.exp();
        let moe = 1.645 * (s2 * est * est).sqrt();
        writeln!(
            f,
            "F{:05},{:.6},{:.6},{},{},{}",
            written, est, moe, n as u64, snap as u64, pep as u64
        )
        .unwrap();
        written += 1;
    }
}

/// Schema matching [`write_acs_like_csv`].
pub fn acs_like_schema() -> strips::ingest::SchemaConfig {
    strips::ingest::SchemaConfig {
        area_id: "GEOID".into(),
        estimate: "EST".into(),
        variance: None,
        moe: Some("MOE".into()),
        moe_divisor: Some(1.645),
        sample_size: "N".into(),
        x_covariates: vec!["SNAP".into(), "PEP".into()],
        x_log1p: true,
        missing_covariate_zero: true,
        df: strips::ingest::DfRule::default(),
    }
}
