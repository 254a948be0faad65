//! Chain-quality metrics: univariate and multivariate effective sample size,
//! lag autocorrelation, and quantile summaries.
//!
//! ESS is batch means: ESS = R·λ²/σ̂² with λ² the sample variance and σ̂² the
//! batch-means long-run variance. The default batch size is chain-adaptive:
//! an integrated-autocorrelation pilot τ̂ from an initial-positive-sequence
//! scan is folded into an effective lag-one correlation ρ = (τ̂−1)/(τ̂+1),
//! and b = ⌈R^(1/3)·(2ρ/(1−ρ²))^(2/3)⌉ — the mean-squared-error-optimal
//! growth rate for batch-means variance estimation — clamped to [4, R/10].
//! Near-iid chains get small batches (low estimator noise), sticky chains
//! get batches long enough to see the correlation. `BatchPolicy::Sqrt` pins
//! b = ⌊√R⌋ instead.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("chain too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("degenerate (constant) chain")]
    DegenerateChain,
    #[error("singular long-run or sample covariance")]
    SingularCovariance,
    #[error("need more draws than the square of the dimension (R = {rows}, p = {cols})")]
    InsufficientDraws { rows: usize, cols: usize },
    #[error("lag {lag} out of range for chain of length {len}")]
    LagOutOfRange { lag: usize, len: usize },
}

/// ESS value plus a degeneracy flag; a never-moving chain reports 0 with the
/// flag set rather than an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssEstimate {
    pub value: f64,
    pub degenerate: bool,
}

/// Batch-size policy for the batch-means variance estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BatchPolicy {
    #[default]
    Adaptive,
    Sqrt,
}

const MIN_ESS_LEN: usize = 100;
/// Upper clamp: estimator noise may push iid chains slightly above R.
const ESS_CEILING_FACTOR: f64 = 1.05;
/// Lag cap for the pilot autocorrelation scan.
const MAX_IPS_LAG: usize = 5000;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64], center: f64) -> f64 {
    xs.iter().map(|&x| (x - center) * (x - center)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Integrated autocorrelation time from Geyer's initial positive sequence:
/// sum adjacent autocovariance pairs while they stay positive.
fn ips_tau(xs: &[f64], center: f64) -> f64 {
    let n = xs.len();
    let gamma = |lag: usize| -> f64 {
        let mut s = 0.0;
        for t in 0..n - lag {
            s += (xs[t] - center) * (xs[t + lag] - center);
        }
        s / n as f64
    };
    let g0 = gamma(0);
    if !(g0 > 0.0) {
        return 1.0;
    }
    let mut sigma2 = -g0;
    let max_lag = (n - 2).min(MAX_IPS_LAG);
    let mut lag = 0;
    while lag < max_lag {
        let pair = gamma(lag) + gamma(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sigma2 += 2.0 * pair;
        lag += 2;
    }
    (sigma2 / g0).max(1.0)
}

fn batch_size(n: usize, policy: BatchPolicy, tau: f64, max_dim: usize) -> usize {
    let b = match policy {
        BatchPolicy::Sqrt => (n as f64).sqrt().floor() as usize,
        BatchPolicy::Adaptive => {
            let rho = ((tau - 1.0) / (tau + 1.0)).clamp(0.0, 1.0 - 1e-12);
            let growth = (2.0 * rho / (1.0 - rho * rho)).powf(2.0 / 3.0);
            ((n as f64).cbrt() * growth).ceil().max(4.0) as usize
        }
    };
    // keep enough batches for a stable (and, multivariate, nonsingular) Σ̂
    let max_b = n / (10usize.max(max_dim + 2));
    b.clamp(1, max_b.max(1))
}

/// Long-run covariance of the columns via nonoverlapping batch means of size
/// `b`, deviations measured from the full-sample means.
fn batch_covariance(cols: &[&[f64]], centers: &[f64], b: usize) -> DMatrix<f64> {
    let p = cols.len();
    let n = cols[0].len();
    let a = n / b;
    let mut sigma = DMatrix::zeros(p, p);
    let mut bm = vec![0.0; p];
    for k in 0..a {
        for (j, col) in cols.iter().enumerate() {
            bm[j] = mean(&col[k * b..(k + 1) * b]) - centers[j];
        }
        for r in 0..p {
            for c in 0..p {
                sigma[(r, c)] += bm[r] * bm[c];
            }
        }
    }
    sigma * (b as f64 / (a - 1) as f64)
}

fn mess_core(cols: &[&[f64]], policy: BatchPolicy) -> Result<f64, DiagError> {
    let p = cols.len();
    let n = cols[0].len();
    let centers: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let tau = cols
        .iter()
        .zip(&centers)
        .map(|(c, &m)| ips_tau(c, m))
        .fold(1.0f64, f64::max);
    let b = batch_size(n, policy, tau, p);
    if n / b < 2 {
        return Err(DiagError::TooShort {
            needed: 2 * b,
            got: n,
        });
    }
    let sigma = batch_covariance(cols, &centers, b);

    let mut lambda = DMatrix::zeros(p, p);
    for r in 0..p {
        for c in r..p {
            let cov: f64 = cols[r]
                .iter()
                .zip(cols[c].iter())
                .map(|(&x, &y)| (x - centers[r]) * (y - centers[c]))
                .sum::<f64>()
                / (n - 1) as f64;
            lambda[(r, c)] = cov;
            lambda[(c, r)] = cov;
        }
    }

    let det_lambda = lambda.determinant();
    let det_sigma = sigma.determinant();
    if !(det_lambda > 0.0) || !(det_sigma > 0.0) {
        return Err(DiagError::SingularCovariance);
    }
    let value = n as f64 * (det_lambda / det_sigma).powf(1.0 / p as f64);
    Ok(value.min(ESS_CEILING_FACTOR * n as f64))
}

/// Batch-means effective sample size of one chain.
pub fn ess(chain: &[f64]) -> Result<EssEstimate, DiagError> {
    ess_with(chain, BatchPolicy::default())
}

pub fn ess_with(chain: &[f64], policy: BatchPolicy) -> Result<EssEstimate, DiagError> {
    if chain.len() < MIN_ESS_LEN {
        return Err(DiagError::TooShort {
            needed: MIN_ESS_LEN,
            got: chain.len(),
        });
    }
    let center = mean(chain);
    if !(sample_variance(chain, center) > 0.0) {
        // never-moving chains report 0, not an error
        return Ok(EssEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    let value = mess_core(&[chain], policy)?;
    Ok(EssEstimate {
        value,
        degenerate: false,
    })
}

/// Multivariate ESS: R·(det Λ / det Σ̂)^(1/p) with Λ the sample covariance
/// and Σ̂ the batch-means long-run covariance.
pub fn multivariate_ess(cols: &[&[f64]]) -> Result<f64, DiagError> {
    multivariate_ess_with(cols, BatchPolicy::default())
}

pub fn multivariate_ess_with(cols: &[&[f64]], policy: BatchPolicy) -> Result<f64, DiagError> {
    let p = cols.len();
    if p == 0 {
        return Err(DiagError::InsufficientDraws { rows: 0, cols: 0 });
    }
    let n = cols[0].len();
    if cols.iter().any(|c| c.len() != n) {
        return Err(DiagError::InsufficientDraws { rows: n, cols: p });
    }
    if n <= p * p || n < MIN_ESS_LEN {
        return Err(DiagError::InsufficientDraws { rows: n, cols: p });
    }
    for c in cols {
        let m = mean(c);
        if !(sample_variance(c, m) > 0.0) {
            return Err(DiagError::DegenerateChain);
        }
    }
    mess_core(cols, policy)
}

/// Biased sample autocorrelation at the given lag, clamped to [−1, 1].
pub fn autocorr(chain: &[f64], lag: usize) -> Result<f64, DiagError> {
    let n = chain.len();
    if lag >= n {
        return Err(DiagError::LagOutOfRange { lag, len: n });
    }
    let center = mean(chain);
    let denom: f64 = chain.iter().map(|&x| (x - center) * (x - center)).sum();
    if !(denom > 0.0) {
        return Err(DiagError::DegenerateChain);
    }
    let num: f64 = (0..n - lag)
        .map(|t| (chain[t] - center) * (chain[t + lag] - center))
        .sum();
    Ok((num / denom).clamp(-1.0, 1.0))
}

/// Quantile with inclusive linear interpolation (h = (n−1)p).
pub fn quantile(values: &[f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty() && (0.0..=1.0).contains(&p));
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// Same, for an already-sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// One row of a chain summary: mean, SD, requested quantiles, ESS.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<f64>,
    pub ess: f64,
    pub ess_degenerate: bool,
}

/// Deterministic, CSV-ready per-variable summary table. Row order follows the
/// input variable order.
#[derive(Debug, Clone)]
pub struct SummaryTable {
    pub probs: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable,mean,sd");
        for p in &self.probs {
            out.push_str(&format!(",q{}", p * 100.0));
        }
        out.push_str(",ess\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.name, r.mean, r.sd));
            for q in &r.quantiles {
                out.push_str(&format!(",{q}"));
            }
            out.push_str(&format!(",{}\n", r.ess));
        }
        out
    }
}

/// Summarize named chains with the given quantile probabilities.
pub fn summarize(vars: &[(String, &[f64])], probs: &[f64]) -> SummaryTable {
    let rows = vars
        .iter()
        .map(|(name, chain)| {
            let m = mean(chain);
            let var = if chain.len() > 1 {
                sample_variance(chain, m)
            } else {
                0.0
            };
            let mut sorted = chain.to_vec();
            sorted.sort_unstable_by(f64::total_cmp);
            let quantiles = probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect();
            let (ess_val, degenerate) = match ess(chain) {
                Ok(e) => (e.value, e.degenerate),
                Err(_) => (f64::NAN, false),
            };
            SummaryRow {
                name: name.clone(),
                mean: m,
                sd: var.sqrt(),
                quantiles,
                ess: ess_val,
                ess_degenerate: degenerate,
            }
        })
        .collect();
    SummaryTable {
        probs: probs.to_vec(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn iid_normal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 0);
        (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 0);
        let mut x = 0.0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n + 200 {
            x = rho * x + rng.sample::<f64, _>(StandardNormal);
            out.push(x);
        }
        out.split_off(200)
    }

    #[test]
    fn ess_iid_near_nominal() {
        let chain = iid_normal(10_000, 21);
        let e = ess(&chain).unwrap();
        assert!(!e.degenerate);
        assert!(
            e.value >= 0.85 * 10_000.0 && e.value <= 1.05 * 10_000.0,
            "iid ESS {}",
            e.value
        );
    }

    #[test]
    fn ess_ar1_matches_theory() {
        let n = 100_000;
        let chain = ar1(n, 0.9, 22);
        let expect = n as f64 * (1.0 - 0.9) / (1.0 + 0.9);
        let e = ess(&chain).unwrap().value;
        assert!(
            (e - expect).abs() < 0.2 * expect,
            "AR(1) ESS {e} vs {expect}"
        );
    }

    #[test]
    fn ess_constant_chain_degenerate() {
        let e = ess(&vec![3.0; 500]).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.degenerate);
    }

    #[test]
    fn ess_rejects_short_chains() {
        assert!(matches!(ess(&[1.0; 50]), Err(DiagError::TooShort { .. })));
    }

    #[test]
    fn ess_affine_invariant() {
        let chain = ar1(5_000, 0.5, 23);
        let mapped: Vec<f64> = chain.iter().map(|&x| -4.0 + 250.0 * x).collect();
        let a = ess(&chain).unwrap().value;
        let b = ess(&mapped).unwrap().value;
        assert!((a - b).abs() <= 1e-8 * a, "{a} vs {b}");
    }

    #[test]
    fn mess_iid_near_nominal() {
        let n = 10_000;
        let cols: Vec<Vec<f64>> = (0..3).map(|k| iid_normal(n, 30 + k)).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let v = multivariate_ess(&refs).unwrap();
        assert!(v >= 0.8 * n as f64 && v <= 1.1 * n as f64, "mESS {v}");
    }

    #[test]
    fn mess_reduces_to_ess_for_one_column() {
        let chain = ar1(4_000, 0.6, 31);
        let uni = ess(&chain).unwrap().value;
        let multi = multivariate_ess(&[&chain]).unwrap();
        assert!((uni - multi).abs() <= 1e-10 * uni, "{uni} vs {multi}");
    }

    #[test]
    fn mess_duplicated_column_is_singular() {
        let chain = iid_normal(2_000, 32);
        assert!(matches!(
            multivariate_ess(&[&chain, &chain]),
            Err(DiagError::SingularCovariance)
        ));
    }

    #[test]
    fn mess_affine_invariant() {
        let n = 5_000;
        let cols: Vec<Vec<f64>> = (0..2).map(|k| ar1(n, 0.4, 40 + k)).collect();
        let mapped: Vec<Vec<f64>> = cols
            .iter()
            .enumerate()
            .map(|(j, c)| c.iter().map(|&x| 3.0 * (j + 1) as f64 * x - 7.0).collect())
            .collect();
        let a = multivariate_ess(&cols.iter().map(|c| c.as_slice()).collect::<Vec<_>>()).unwrap();
        let b = multivariate_ess(&mapped.iter().map(|c| c.as_slice()).collect::<Vec<_>>()).unwrap();
        assert!((a - b).abs() <= 1e-8 * a, "{a} vs {b}");
    }

    #[test]
    fn autocorr_basics() {
        let chain = iid_normal(2_000, 33);
        assert_eq!(autocorr(&chain, 0).unwrap(), 1.0);
        // alternating chain approaches −1 at lag 1
        let alt: Vec<f64> = (0..4_000)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert!(autocorr(&alt, 1).unwrap() < -0.999);
        assert!(matches!(
            autocorr(&vec![2.0; 100], 1),
            Err(DiagError::DegenerateChain)
        ));
        assert!(autocorr(&chain, 2_000).is_err());
    }

    #[test]
    fn autocorr_two_pass_agreement() {
        // direct sum vs a two-pass formulation of the same estimator
        let chain = ar1(3_000, 0.7, 34);
        let direct = autocorr(&chain, 1).unwrap();
        let m = chain.iter().sum::<f64>() / chain.len() as f64;
        let centered: Vec<f64> = chain.iter().map(|&x| x - m).collect();
        let num: f64 = centered.windows(2).map(|w| w[0] * w[1]).sum();
        let den: f64 = centered.iter().map(|&x| x * x).sum();
        assert!((direct - num / den).abs() < 1e-10);
    }

    #[test]
    fn quantile_linear_interpolation() {
        let seq: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        // h = 999·0.05 = 49.95
        assert!((quantile(&seq, 0.05) - 49.95).abs() < 1e-12);
        assert_eq!(quantile(&seq, 0.0), 0.0);
        assert_eq!(quantile(&seq, 1.0), 999.0);
        // monotone in p
        let mut rng = stream(35, 0);
        let xs: Vec<f64> = (0..257).map(|_| rng.random::<f64>()).collect();
        let qs: Vec<f64> = [0.0, 0.01, 0.025, 0.5, 0.99]
            .iter()
            .map(|&p| quantile(&xs, p))
            .collect();
        assert!(qs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn summarize_constant_and_order() {
        let c = vec![5.0; 300];
        let v = iid_normal(300, 36);
        let table = summarize(
            &[
                ("c".to_string(), c.as_slice()),
                ("v".to_string(), v.as_slice()),
            ],
            &[0.05, 0.95],
        );
        assert_eq!(table.rows[0].name, "c");
        assert_eq!(table.rows[1].name, "v");
        assert_eq!(table.rows[0].mean, 5.0);
        assert_eq!(table.rows[0].sd, 0.0);
        assert_eq!(table.rows[0].quantiles, vec![5.0, 5.0]);
        assert_eq!(table.rows[0].ess, 0.0);
        assert!(table.rows[0].ess_degenerate);
        let csv = table.to_csv();
        assert!(csv.starts_with("variable,mean,sd,q5,q95,ess\n"));
    }
}
