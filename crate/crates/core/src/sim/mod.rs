//! Experiment drivers: the single-conditional study (independence-Metropolis
//! baseline and self-tuned strip sampling on a grid of targets), the
//! posterior study over simulated datasets, and the full data-analysis
//! pipeline comparing the three samplers.
//!
//! Repetitions are embarrassingly parallel; each repetition owns a generator
//! stream derived from the master seed by a counter, so tables are
//! reproducible for a fixed seed regardless of thread count. Elapsed-time
//! fields are measured wall clock and are the one exception to bitwise
//! reproducibility.

use crate::diagnostics::{self, BatchPolicy, ess, multivariate_ess_with, quantile};
use crate::ingest::{GeneratorConfig, IngestError, simulate_dataset};
use crate::rng::{derive_seed, stream};
use crate::sae::chain::ChainOutput;
use crate::sae::{
    ConditionalParams, ModelData, SaeError, SamplerConfig, imh_step_sigma2, run_sampler,
    sigma2_target, target_mode,
};
use crate::vws::StripProposal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid study config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sae(#[from] SaeError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// conditional study
// ---------------------------------------------------------------------------

/// Grid and budget for the single-conditional study. μ and λ stay fixed; κ
/// and τ vary over the grid, the strip sampler additionally over (ε₁, ε₂).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditionalStudyConfig {
    pub kappas: Vec<f64>,
    pub taus: Vec<f64>,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    pub repetitions: usize,
    pub draws_per_repetition: usize,
    pub imh_steps: usize,
    pub mu: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for ConditionalStudyConfig {
    fn default() -> Self {
        Self {
            kappas: vec![10.0, 50.0],
            taus: vec![0.5, 1.0],
            eps1: vec![0.50, 0.75],
            eps2: vec![0.001, 0.01],
            repetitions: 10_000,
            draws_per_repetition: 20,
            imh_steps: 200_000,
            mu: 0.0,
            lambda: 1.0,
            seed: 1,
        }
    }
}

/// One row of the independence-Metropolis arm.
#[derive(Debug, Clone, Serialize)]
pub struct ImhCell {
    pub kappa: f64,
    pub tau: f64,
    pub ess: f64,
    pub rejections: u64,
    pub steps: usize,
    pub acf1: f64,
    pub elapsed_secs: f64,
}

/// Medians over repetitions at one draw index.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrajectoryPoint {
    pub median_rho_plus: f64,
    pub median_knots: f64,
}

/// One cell of the self-tuned strip arm.
#[derive(Debug, Clone, Serialize)]
pub struct VwsCell {
    pub kappa: f64,
    pub tau: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub elapsed_secs: f64,
    pub rejections: u64,
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone)]
pub struct ConditionalStudyResult {
    pub imh: Vec<ImhCell>,
    pub vws: Vec<VwsCell>,
}

pub fn run_conditional_study(
    cfg: &ConditionalStudyConfig,
) -> Result<ConditionalStudyResult, SimError> {
    if cfg.repetitions == 0 && cfg.draws_per_repetition > 0 {
        return Err(SimError::Invalid("repetitions must be positive".into()));
    }
    let mut imh = Vec::new();
    for (ci, &(kappa, tau)) in iter_grid2(&cfg.kappas, &cfg.taus).iter().enumerate() {
        let params = ConditionalParams {
            mu: cfg.mu,
            kappa,
            lambda: cfg.lambda,
            tau2: tau * tau,
        };
        imh.push(run_imh_cell(
            &params,
            kappa,
            tau,
            cfg.imh_steps,
            derive_seed(cfg.seed, ci as u64),
        )?);
    }

    let mut vws = Vec::new();
    let mut cell_counter = 1_000u64;
    for &eps1 in &cfg.eps1 {
        for &eps2 in &cfg.eps2 {
            for &kappa in &cfg.kappas {
                for &tau in &cfg.taus {
                    let params = ConditionalParams {
                        mu: cfg.mu,
                        kappa,
                        lambda: cfg.lambda,
                        tau2: tau * tau,
                    };
                    vws.push(run_vws_cell(
                        &params,
                        kappa,
                        tau,
                        eps1,
                        eps2,
                        cfg.repetitions,
                        cfg.draws_per_repetition,
                        derive_seed(cfg.seed, cell_counter),
                    )?);
                    cell_counter += 1;
                }
            }
        }
    }
    Ok(ConditionalStudyResult { imh, vws })
}

fn iter_grid2(a: &[f64], b: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push((x, y));
        }
    }
    out
}

fn run_imh_cell(
    params: &ConditionalParams,
    kappa: f64,
    tau: f64,
    steps: usize,
    seed: u64,
) -> Result<ImhCell, SimError> {
    let mut rng = stream(seed, 0);
    let mut current = target_mode(params)?;
    let mut chain = Vec::with_capacity(steps);
    let mut rejections = 0u64;
    let start = Instant::now();
    for _ in 0..steps {
        let (next, accepted) = imh_step_sigma2(current, params, &mut rng)?;
        if !accepted {
            rejections += 1;
        }
        current = next;
        chain.push(next);
    }
    let elapsed_secs = start.elapsed().as_secs_f64();
    let ess_value = ess(&chain).map(|e| e.value).unwrap_or(0.0);
    let acf1 = diagnostics::autocorr(&chain, 1).unwrap_or(1.0);
    Ok(ImhCell {
        kappa,
        tau,
        ess: ess_value,
        rejections,
        steps,
        acf1,
        elapsed_secs,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_vws_cell(
    params: &ConditionalParams,
    kappa: f64,
    tau: f64,
    eps1: f64,
    eps2: f64,
    repetitions: usize,
    draws: usize,
    seed: u64,
) -> Result<VwsCell, SimError> {
    struct RepOutcome {
        rho_path: Vec<f64>,
        knot_path: Vec<f64>,
        rejections: u64,
        elapsed: f64,
    }

    let outcomes: Vec<Result<RepOutcome, SimError>> = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(derive_seed(seed, rep as u64), 0);
            let target = sigma2_target(params)?;
            // fresh proposal with no internal knots each repetition
            let mut proposal = StripProposal::new(&target, &[]).map_err(SaeError::Vws)?;
            let mut rho_path = Vec::with_capacity(draws);
            let mut knot_path = Vec::with_capacity(draws);
            let start = Instant::now();
            let mut rejections = 0u64;
            for _ in 0..draws {
                let (_, stats) = proposal
                    .self_tuned_draw(&target, eps1, eps2, 1_000_000, &mut rng)
                    .map_err(SaeError::Vws)?;
                rejections += stats.rejections;
                rho_path.push(proposal.rho_plus());
                knot_path.push(proposal.num_internal_knots() as f64);
            }
            Ok(RepOutcome {
                rho_path,
                knot_path,
                rejections,
                elapsed: start.elapsed().as_secs_f64(),
            })
        })
        .collect();

    let mut rho_by_draw: Vec<Vec<f64>> = vec![Vec::with_capacity(repetitions); draws];
    let mut knots_by_draw: Vec<Vec<f64>> = vec![Vec::with_capacity(repetitions); draws];
    let mut rejections = 0u64;
    let mut elapsed_secs = 0.0;
    for outcome in outcomes {
        let o = outcome?;
        rejections += o.rejections;
        elapsed_secs += o.elapsed;
        for (k, (&r, &c)) in o.rho_path.iter().zip(o.knot_path.iter()).enumerate() {
            rho_by_draw[k].push(r);
            knots_by_draw[k].push(c);
        }
    }
    let trajectory = (0..draws)
        .map(|k| TrajectoryPoint {
            median_rho_plus: quantile(&rho_by_draw[k], 0.5),
            median_knots: quantile(&knots_by_draw[k], 0.5),
        })
        .collect();
    Ok(VwsCell {
        kappa,
        tau,
        eps1,
        eps2,
        elapsed_secs,
        rejections,
        trajectory,
    })
}

impl ConditionalStudyResult {
    /// Emit the table- and figure-shaped CSVs into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>, SimError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();

        let mut imh = String::from("kappa,tau,ess,rejections,steps,acf1,elapsed_secs\n");
        for c in &self.imh {
            imh.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.kappa, c.tau, c.ess, c.rejections, c.steps, c.acf1, c.elapsed_secs
            ));
        }
        written.push(write_text(dir, "imh_summary.csv", &imh)?);

        let mut summary = String::from("kappa,tau,eps1,eps2,elapsed_secs,rejections\n");
        for c in &self.vws {
            summary.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.kappa, c.tau, c.eps1, c.eps2, c.elapsed_secs, c.rejections
            ));
        }
        written.push(write_text(dir, "vws_summary.csv", &summary)?);

        let mut traj = String::from("kappa,tau,eps1,eps2,draw,median_rho_plus,median_knots\n");
        for c in &self.vws {
            for (k, t) in c.trajectory.iter().enumerate() {
                traj.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    c.kappa,
                    c.tau,
                    c.eps1,
                    c.eps2,
                    k + 1,
                    t.median_rho_plus,
                    t.median_knots
                ));
            }
        }
        written.push(write_text(dir, "vws_trajectories.csv", &traj)?);
        Ok(written)
    }
}

// ---------------------------------------------------------------------------
// posterior study
// ---------------------------------------------------------------------------

/// Levels and schedules for the posterior study. Defaults are desk scale
/// (10 repetitions, m = 500); `full_scale` restores the published design.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PosteriorStudyConfig {
    pub areas: Vec<usize>,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    pub repetitions: usize,
    pub vwg_iterations: usize,
    pub vwg_burn_in: usize,
    pub mwg_iterations: usize,
    pub mwg_burn_in: usize,
    pub seed: u64,
}

impl Default for PosteriorStudyConfig {
    fn default() -> Self {
        Self {
            areas: vec![500],
            eps1: vec![0.50, 0.75, 0.85],
            eps2: vec![1e-4, 1e-3, 1e-2],
            repetitions: 10,
            vwg_iterations: 3_000,
            vwg_burn_in: 1_000,
            mwg_iterations: 30_000,
            mwg_burn_in: 28_000,
            seed: 1,
        }
    }
}

impl PosteriorStudyConfig {
    /// The full published design: 18 levels, 500 datasets each.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            areas: vec![500, 2_000],
            repetitions: 500,
            seed,
            ..Default::default()
        }
    }
}

/// Averaged metrics for one (sampler, m, ε₁, ε₂) level.
#[derive(Debug, Clone, Serialize)]
pub struct PosteriorRow {
    pub sampler: String,
    pub areas: usize,
    /// NaN for the Metropolis rows, where the tolerances are irrelevant.
    pub eps1: f64,
    pub eps2: f64,
    pub sigma2_ess_min: f64,
    pub sigma2_ess_q01: f64,
    pub sigma2_ess_q025: f64,
    pub mean_ess_min: f64,
    pub mean_ess_q01: f64,
    pub mean_ess_q025: f64,
    pub theta_mess: f64,
    pub elapsed_secs: f64,
    pub rejections: f64,
    pub knot_updates_burn: f64,
    pub knot_updates_keep: f64,
}

#[derive(Debug, Clone)]
pub struct PosteriorStudyResult {
    pub rows: Vec<PosteriorRow>,
}

/// ESS quantile triple (min, 1%, 2.5%) over a family of per-variable chains,
/// plus the multivariate ESS of the model parameters.
#[derive(Debug, Clone, Copy, Default)]
struct RunMetrics {
    sigma2: [f64; 3],
    mean: [f64; 3],
    theta_mess: f64,
    elapsed: f64,
    rejections: f64,
    updates_burn: f64,
    updates_keep: f64,
}

fn ess_quantiles(chains: &[Vec<f64>]) -> [f64; 3] {
    let values: Vec<f64> = chains
        .iter()
        .map(|c| ess(c).map(|e| e.value).unwrap_or(0.0))
        .collect();
    [
        quantile(&values, 0.0),
        quantile(&values, 0.01),
        quantile(&values, 0.025),
    ]
}

fn run_metrics(out: &ChainOutput) -> RunMetrics {
    let theta = out.theta_columns();
    let theta_mess = multivariate_ess_with(&theta, BatchPolicy::Adaptive).unwrap_or(f64::NAN);
    RunMetrics {
        sigma2: ess_quantiles(&out.area_var),
        mean: ess_quantiles(&out.area_mean),
        theta_mess,
        elapsed: out.elapsed_secs,
        rejections: out.counters.rejections as f64,
        updates_burn: out.counters.knot_updates_burn() as f64,
        updates_keep: out.counters.knot_updates_keep() as f64,
    }
}

pub fn run_posterior_study(cfg: &PosteriorStudyConfig) -> Result<PosteriorStudyResult, SimError> {
    if cfg.repetitions == 0 {
        return Err(SimError::Invalid("repetitions must be positive".into()));
    }
    if cfg.eps1.is_empty() || cfg.eps2.is_empty() || cfg.areas.is_empty() {
        return Err(SimError::Invalid("empty study grid".into()));
    }
    let tolerance_pairs: Vec<(f64, f64)> = iter_grid2(&cfg.eps1, &cfg.eps2);
    let slots = tolerance_pairs.len() as u64 + 2;
    let mut rows = Vec::new();

    for (level_idx, &m) in cfg.areas.iter().enumerate() {
        struct RepMetrics {
            mwg: RunMetrics,
            vwg: Vec<RunMetrics>,
        }
        let per_rep: Vec<Result<RepMetrics, SimError>> = (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| {
                let base = (level_idx * cfg.repetitions + rep) as u64 * slots;
                let (data, _) = simulate_dataset(
                    &GeneratorConfig {
                        areas: m,
                        ..Default::default()
                    },
                    &mut stream(derive_seed(cfg.seed, base), 0),
                )?;
                let mwg_cfg = SamplerConfig {
                    iterations: cfg.mwg_iterations,
                    burn_in: cfg.mwg_burn_in,
                    ..SamplerConfig::mwg(derive_seed(cfg.seed, base + 1))
                };
                let mwg = run_metrics(&run_sampler(&data, &mwg_cfg, None)?);
                let mut vwg = Vec::with_capacity(tolerance_pairs.len());
                for (k, &(eps1, eps2)) in tolerance_pairs.iter().enumerate() {
                    let vwg_cfg = SamplerConfig {
                        iterations: cfg.vwg_iterations,
                        burn_in: cfg.vwg_burn_in,
                        eps1,
                        eps2,
                        ..SamplerConfig::vwg(derive_seed(cfg.seed, base + 2 + k as u64))
                    };
                    vwg.push(run_metrics(&run_sampler(&data, &vwg_cfg, None)?));
                }
                Ok(RepMetrics { mwg, vwg })
            })
            .collect();

        let mut mwg_acc: Vec<RunMetrics> = Vec::with_capacity(cfg.repetitions);
        let mut vwg_acc: Vec<Vec<RunMetrics>> =
            vec![Vec::with_capacity(cfg.repetitions); tolerance_pairs.len()];
        for r in per_rep {
            let r = r?;
            mwg_acc.push(r.mwg);
            for (k, v) in r.vwg.into_iter().enumerate() {
                vwg_acc[k].push(v);
            }
        }
        rows.push(average_row("mwg", m, f64::NAN, f64::NAN, &mwg_acc));
        for (k, &(eps1, eps2)) in tolerance_pairs.iter().enumerate() {
            rows.push(average_row("vwg", m, eps1, eps2, &vwg_acc[k]));
        }
    }
    Ok(PosteriorStudyResult { rows })
}

fn average_row(
    sampler: &str,
    areas: usize,
    eps1: f64,
    eps2: f64,
    metrics: &[RunMetrics],
) -> PosteriorRow {
    let n = metrics.len() as f64;
    let avg = |f: &dyn Fn(&RunMetrics) -> f64| metrics.iter().map(f).sum::<f64>() / n;
    PosteriorRow {
        sampler: sampler.to_string(),
        areas,
        eps1,
        eps2,
        sigma2_ess_min: avg(&|m| m.sigma2[0]),
        sigma2_ess_q01: avg(&|m| m.sigma2[1]),
        sigma2_ess_q025: avg(&|m| m.sigma2[2]),
        mean_ess_min: avg(&|m| m.mean[0]),
        mean_ess_q01: avg(&|m| m.mean[1]),
        mean_ess_q025: avg(&|m| m.mean[2]),
        theta_mess: avg(&|m| m.theta_mess),
        elapsed_secs: avg(&|m| m.elapsed),
        rejections: avg(&|m| m.rejections),
        knot_updates_burn: avg(&|m| m.updates_burn),
        knot_updates_keep: avg(&|m| m.updates_keep),
    }
}

impl PosteriorStudyResult {
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>, SimError> {
        std::fs::create_dir_all(dir)?;
        let mut sigma = String::from(
            "sampler,areas,eps1,eps2,sigma2_ess_min,sigma2_ess_q01,sigma2_ess_q025,elapsed_secs,rejections,knot_updates_burn,knot_updates_keep\n",
        );
        let mut theta = String::from(
            "sampler,areas,eps1,eps2,mean_ess_min,mean_ess_q01,mean_ess_q025,theta_mess\n",
        );
        for r in &self.rows {
            sigma.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.sampler,
                r.areas,
                r.eps1,
                r.eps2,
                r.sigma2_ess_min,
                r.sigma2_ess_q01,
                r.sigma2_ess_q025,
                r.elapsed_secs,
                r.rejections,
                r.knot_updates_burn,
                r.knot_updates_keep
            ));
            theta.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.sampler,
                r.areas,
                r.eps1,
                r.eps2,
                r.mean_ess_min,
                r.mean_ess_q01,
                r.mean_ess_q025,
                r.theta_mess
            ));
        }
        Ok(vec![
            write_text(dir, "posterior_sigma2.csv", &sigma)?,
            write_text(dir, "posterior_theta.csv", &theta)?,
        ])
    }
}

// ---------------------------------------------------------------------------
// data analysis
// ---------------------------------------------------------------------------

/// Schedules and tolerances for the three-sampler comparison on one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub mwg_iterations: usize,
    pub mwg_burn_in: usize,
    pub vwg_iterations: usize,
    pub vwg_burn_in: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub basic_max_regions: usize,
    pub include_basic: bool,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            mwg_iterations: 30_000,
            mwg_burn_in: 28_000,
            vwg_iterations: 3_000,
            vwg_burn_in: 1_000,
            eps1: 0.85,
            eps2: 1e-4,
            basic_max_regions: 50,
            include_basic: true,
            seed: 1,
        }
    }
}

/// One sampler's mixing and cost on the analysis dataset.
#[derive(Debug, Clone, Serialize)]
pub struct SamplerComparisonRow {
    pub sampler: String,
    pub sigma2_ess_min: f64,
    pub sigma2_ess_q01: f64,
    pub sigma2_ess_q025: f64,
    pub elapsed_secs: f64,
    pub rejections: u64,
}

/// Model-parameter summary with per-sampler ESS columns.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaSummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
    pub ess_vwg: f64,
    pub ess_mwg: f64,
}

/// Per-area comparison of the variance posteriors under the two samplers.
#[derive(Debug, Clone, Serialize)]
pub struct AreaRatioRow {
    pub area_id: String,
    pub ess_mwg: f64,
    pub ess_vwg: f64,
    /// Posterior-mean ratio, self-tuned numerator over Metropolis denominator.
    pub mean_ratio: f64,
    /// 90% interval-width ratio, same orientation.
    pub width_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub comparison: Vec<SamplerComparisonRow>,
    pub theta_summary: Vec<ThetaSummaryRow>,
    /// Knot adds + removes per iteration of the self-tuned run (raw counts;
    /// plot layers apply log10(1+x)).
    pub knot_updates_per_scan: Vec<u64>,
    pub ratios: Vec<AreaRatioRow>,
}

pub fn run_data_analysis(
    data: &ModelData,
    cfg: &AnalysisConfig,
) -> Result<AnalysisResult, SimError> {
    // sequential runs: elapsed columns are the comparison of interest
    let mwg_cfg = SamplerConfig {
        iterations: cfg.mwg_iterations,
        burn_in: cfg.mwg_burn_in,
        ..SamplerConfig::mwg(derive_seed(cfg.seed, 1))
    };
    let mwg = run_sampler(data, &mwg_cfg, None)?;

    let basic = if cfg.include_basic {
        let basic_cfg = SamplerConfig {
            iterations: cfg.vwg_iterations,
            burn_in: cfg.vwg_burn_in,
            eps1: cfg.eps1,
            eps2: cfg.eps2,
            ..SamplerConfig::vwg_basic(derive_seed(cfg.seed, 2), cfg.basic_max_regions)
        };
        Some(run_sampler(data, &basic_cfg, None)?)
    } else {
        None
    };

    let vwg_cfg = SamplerConfig {
        iterations: cfg.vwg_iterations,
        burn_in: cfg.vwg_burn_in,
        eps1: cfg.eps1,
        eps2: cfg.eps2,
        ..SamplerConfig::vwg(derive_seed(cfg.seed, 3))
    };
    let vwg = run_sampler(data, &vwg_cfg, None)?;

    let mut comparison = Vec::new();
    let mut push_row = |out: &ChainOutput, label: &str| {
        let q = ess_quantiles(&out.area_var);
        comparison.push(SamplerComparisonRow {
            sampler: label.to_string(),
            sigma2_ess_min: q[0],
            sigma2_ess_q01: q[1],
            sigma2_ess_q025: q[2],
            elapsed_secs: out.elapsed_secs,
            rejections: out.counters.rejections,
        });
    };
    push_row(&mwg, "mwg");
    if let Some(b) = &basic {
        push_row(b, "vwg-basic");
    }
    push_row(&vwg, "vwg");

    // model-parameter summary from the self-tuned run, with both ESS columns
    let names = vwg.theta_names();
    let vwg_cols = vwg.theta_columns();
    let mwg_cols = mwg.theta_columns();
    let theta_summary = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let named = [(name.clone(), vwg_cols[j])];
            let table = diagnostics::summarize(&named, &[0.05, 0.95]);
            let row = &table.rows[0];
            ThetaSummaryRow {
                name: name.clone(),
                mean: row.mean,
                sd: row.sd,
                q05: row.quantiles[0],
                q95: row.quantiles[1],
                ess_vwg: row.ess,
                ess_mwg: ess(mwg_cols[j]).map(|e| e.value).unwrap_or(0.0),
            }
        })
        .collect();

    let ratios = (0..data.num_areas())
        .map(|i| {
            let vwg_chain = &vwg.area_var[i];
            let mwg_chain = &mwg.area_var[i];
            let mean = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
            let width = |c: &[f64]| quantile(c, 0.95) - quantile(c, 0.05);
            let mwg_width = width(mwg_chain);
            AreaRatioRow {
                area_id: data.area_ids[i].clone(),
                ess_mwg: ess(mwg_chain).map(|e| e.value).unwrap_or(0.0),
                ess_vwg: ess(vwg_chain).map(|e| e.value).unwrap_or(0.0),
                mean_ratio: mean(vwg_chain) / mean(mwg_chain),
                width_ratio: if mwg_width > 0.0 {
                    width(vwg_chain) / mwg_width
                } else {
                    f64::INFINITY
                },
            }
        })
        .collect();

    Ok(AnalysisResult {
        comparison,
        theta_summary,
        knot_updates_per_scan: vwg.counters.knot_updates_per_scan.clone(),
        ratios,
    })
}

impl AnalysisResult {
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>, SimError> {
        std::fs::create_dir_all(dir)?;
        let mut cmp = String::from(
            "sampler,sigma2_ess_min,sigma2_ess_q01,sigma2_ess_q025,elapsed_secs,rejections\n",
        );
        for r in &self.comparison {
            cmp.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.sampler,
                r.sigma2_ess_min,
                r.sigma2_ess_q01,
                r.sigma2_ess_q025,
                r.elapsed_secs,
                r.rejections
            ));
        }
        let mut theta = String::from("variable,mean,sd,q5,q95,ess_vwg,ess_mwg\n");
        for r in &self.theta_summary {
            theta.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.name, r.mean, r.sd, r.q05, r.q95, r.ess_vwg, r.ess_mwg
            ));
        }
        let mut knots = String::from("iteration,knot_updates\n");
        for (i, k) in self.knot_updates_per_scan.iter().enumerate() {
            knots.push_str(&format!("{},{}\n", i + 1, k));
        }
        let mut ratios = String::from("area_id,ess_mwg,ess_vwg,mean_ratio,width_ratio\n");
        for r in &self.ratios {
            ratios.push_str(&format!(
                "{},{},{},{},{}\n",
                r.area_id, r.ess_mwg, r.ess_vwg, r.mean_ratio, r.width_ratio
            ));
        }
        Ok(vec![
            write_text(dir, "sampler_comparison.csv", &cmp)?,
            write_text(dir, "theta_summary.csv", &theta)?,
            write_text(dir, "knot_updates.csv", &knots)?,
            write_text(dir, "sigma2_ratios.csv", &ratios)?,
        ])
    }
}

fn write_text(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, SimError> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}
