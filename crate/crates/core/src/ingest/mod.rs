//! Data preparation: published-scale to model-scale transforms, the
//! degrees-of-freedom rule, exclusion rules, CSV loading, and the synthetic
//! data generator for the posterior studies.

use crate::dist::{sample_chi_square, sample_normal};
use crate::sae::{ModelData, SaeError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("point estimate {0} is not positive; log transform undefined")]
    ZeroEstimate(f64),
    #[error("published variance {0} must be positive")]
    InvalidVariance(f64),
    #[error("schema: {0}")]
    Schema(String),
    #[error("missing required column {0}")]
    MissingColumn(String),
    #[error("no rows remain after exclusions")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] SaeError),
}

/// Why a row was dropped during ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    /// Point estimate of zero (or negative): the log transform is undefined.
    #[serde(rename = "ZERO_ESTIMATE")]
    ZeroEstimate,
    /// Degrees of freedom below one would give a negative weight shape.
    #[serde(rename = "DF_BELOW_ONE")]
    DfBelowOne,
    /// A required field was missing or unparseable.
    #[serde(rename = "MISSING_REQUIRED")]
    MissingRequired,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcludedRow {
    /// 0-based data row index in the input file.
    pub row: usize,
    pub area_id: String,
    pub reason: ExclusionReason,
}

/// Machine-readable account of what was dropped and why.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub input_rows: usize,
    pub retained_rows: usize,
    pub excluded: Vec<ExcludedRow>,
}

/// Delta-method transform of a published-scale estimate and variance to the
/// log scale: y = log ỹ, s² = s̃²/ỹ².
pub fn delta_transform(estimate: f64, variance: f64) -> Result<(f64, f64), IngestError> {
    if !(estimate > 0.0) {
        return Err(IngestError::ZeroEstimate(estimate));
    }
    if !(variance > 0.0) {
        return Err(IngestError::InvalidVariance(variance));
    }
    Ok((estimate.ln(), variance / (estimate * estimate)))
}

/// Survey degrees of freedom for a complex design: d = 0.36·√n.
pub fn acs_degrees_of_freedom(n: f64) -> f64 {
    debug_assert!(n > 0.0);
    0.36 * n.sqrt()
}

/// How degrees of freedom are derived from the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum DfRule {
    /// d = factor·√n (factor defaults to 0.36).
    SqrtScaled { factor: f64 },
    /// d = n − 1 (simple random sampling).
    NMinusOne,
}

impl Default for DfRule {
    fn default() -> Self {
        DfRule::SqrtScaled { factor: 0.36 }
    }
}

impl DfRule {
    pub fn apply(&self, n: f64) -> f64 {
        match self {
            DfRule::SqrtScaled { factor } => factor * n.sqrt(),
            DfRule::NMinusOne => n - 1.0,
        }
    }
}

fn default_true() -> bool {
    true
}

/// Column mapping and transform policy for a published CSV.
///
/// Exactly one of `variance` and `moe` must be set; a margin of error is
/// converted with the declared divisor (s̃ = MOE/divisor), which is a config
/// value because published confidence levels vary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub area_id: String,
    pub estimate: String,
    #[serde(default)]
    pub variance: Option<String>,
    #[serde(default)]
    pub moe: Option<String>,
    #[serde(default)]
    pub moe_divisor: Option<f64>,
    pub sample_size: String,
    /// Covariate columns for the mean regression; an intercept is prepended
    /// and log1p applied when `x_log1p` is set.
    #[serde(default)]
    pub x_covariates: Vec<String>,
    #[serde(default = "default_true")]
    pub x_log1p: bool,
    /// Missing covariate values become 0 when set (the declared policy for
    /// sparsely reported covariates); otherwise the row is excluded.
    #[serde(default = "default_true")]
    pub missing_covariate_zero: bool,
    #[serde(default)]
    pub df: DfRule,
}

impl SchemaConfig {
    /// Load from a TOML or JSON file, by extension.
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SchemaConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| IngestError::Schema(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| IngestError::Schema(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        match (&self.variance, &self.moe) {
            (None, None) => {
                return Err(IngestError::Schema("need a variance or moe column".into()));
            }
            (Some(_), Some(_)) => {
                return Err(IngestError::Schema(
                    "declare either variance or moe, not both".into(),
                ));
            }
            (None, Some(_)) => {
                let div = self.moe_divisor.unwrap_or(0.0);
                if !(div > 0.0) {
                    return Err(IngestError::Schema(
                        "a positive moe_divisor is required with a moe column".into(),
                    ));
                }
            }
            (Some(_), None) => {}
        }
        Ok(())
    }
}

/// Load and transform a published CSV into model-scale data plus a report of
/// dropped rows. Row order is preserved.
pub fn load_dataset(
    path: &Path,
    schema: &SchemaConfig,
) -> Result<(ModelData, ExclusionReport), IngestError> {
    schema.validate()?;
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let id_col = col(&schema.area_id)?;
    let est_col = col(&schema.estimate)?;
    let var_col = schema.variance.as_deref().map(col).transpose()?;
    let moe_col = schema.moe.as_deref().map(col).transpose()?;
    let n_col = col(&schema.sample_size)?;
    let x_cols: Vec<usize> = schema
        .x_covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<_, _>>()?;

    let mut y = Vec::new();
    let mut s2 = Vec::new();
    let mut n = Vec::new();
    let mut d = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut ids = Vec::new();
    let mut excluded = Vec::new();
    let mut input_rows = 0;

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        input_rows += 1;
        let area_id = record.get(id_col).unwrap_or("").to_string();
        let mut exclude = |reason| {
            excluded.push(ExcludedRow {
                row: row_idx,
                area_id: area_id.clone(),
                reason,
            });
        };

        let Some(est) = parse_field(&record, est_col) else {
            exclude(ExclusionReason::MissingRequired);
            continue;
        };
        let variance = match (var_col, moe_col) {
            (Some(c), _) => parse_field(&record, c),
            (None, Some(c)) => parse_field(&record, c).map(|moe| {
                let s = moe / schema.moe_divisor.unwrap();
                s * s
            }),
            (None, None) => unreachable!("schema validated"),
        };
        let Some(variance) = variance else {
            exclude(ExclusionReason::MissingRequired);
            continue;
        };
        let Some(n_i) = parse_field(&record, n_col).filter(|v| *v > 0.0) else {
            exclude(ExclusionReason::MissingRequired);
            continue;
        };
        let (y_i, s2_i) = match delta_transform(est, variance) {
            Ok(pair) => pair,
            Err(IngestError::ZeroEstimate(_)) => {
                exclude(ExclusionReason::ZeroEstimate);
                continue;
            }
            Err(_) => {
                exclude(ExclusionReason::MissingRequired);
                continue;
            }
        };
        let d_i = schema.df.apply(n_i);
        if d_i < 1.0 {
            exclude(ExclusionReason::DfBelowOne);
            continue;
        }
        let mut x_row = Vec::with_capacity(1 + x_cols.len());
        x_row.push(1.0);
        let mut missing_cov = false;
        for &c in &x_cols {
            match parse_field(&record, c) {
                Some(v) => x_row.push(if schema.x_log1p { v.ln_1p() } else { v }),
                None if schema.missing_covariate_zero => x_row.push(0.0),
                None => {
                    missing_cov = true;
                    break;
                }
            }
        }
        if missing_cov {
            exclude(ExclusionReason::MissingRequired);
            continue;
        }
        y.push(y_i);
        s2.push(s2_i);
        n.push(n_i);
        d.push(d_i);
        x_rows.push(x_row);
        ids.push(area_id);
    }

    if y.is_empty() {
        return Err(IngestError::Empty);
    }
    let m = y.len();
    let p = 1 + x_cols.len();
    let x = DMatrix::from_fn(m, p, |i, j| x_rows[i][j]);
    // variance regression design: intercept and log n
    let z = DMatrix::from_fn(m, 2, |i, j| if j == 0 { 1.0 } else { n[i].ln() });
    let report = ExclusionReport {
        input_rows,
        retained_rows: m,
        excluded,
    };
    let data = ModelData::new(y, s2, n, d, x, z, Some(ids))?;
    Ok((data, report))
}

fn parse_field(record: &csv::StringRecord, idx: usize) -> Option<f64> {
    let raw = record.get(idx)?.trim();
    if raw.is_empty() {
        return None;
    }
    raw.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Settings for the synthetic data generator; defaults follow the posterior
/// study design (sample sizes from χ²₁₆, Z = [1, log n], γ = (2.6, −1),
/// τ² = 0.25, φ² = 0.2, β = (1.5, 0.85), X = [1, N(8, 2²)], d = n − 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub areas: usize,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tau2: f64,
    pub phi2: f64,
    pub x_mean: f64,
    pub x_sd: f64,
    pub n_df: f64,
    pub df: DfRule,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            areas: 500,
            beta: vec![1.5, 0.85],
            gamma: vec![2.6, -1.0],
            tau2: 0.25,
            phi2: 0.2,
            x_mean: 8.0,
            x_sd: 2.0,
            n_df: 16.0,
            df: DfRule::NMinusOne,
        }
    }
}

/// Generating parameter values behind a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrueParams {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tau2: f64,
    pub phi2: f64,
    pub area_mean: Vec<f64>,
    pub area_var: Vec<f64>,
}

/// Generate a dataset from the model: n and the designs per the config, then
/// σ² from the log-variance regression, ϑ from the mean regression,
/// y ~ N(ϑ, σ²), and s² = σ²·χ²_d/d.
pub fn simulate_dataset<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<(ModelData, TrueParams), IngestError> {
    let m = config.areas;
    if m < 3 {
        return Err(IngestError::Schema(format!(
            "need at least 3 areas, got {m}"
        )));
    }
    if config.beta.len() != 2 || config.gamma.len() != 2 {
        return Err(IngestError::Schema(
            "generator expects 2 mean and 2 variance coefficients".into(),
        ));
    }
    let mut n = Vec::with_capacity(m);
    for _ in 0..m {
        // resample tiny draws so d = n − 1 stays at or above 1
        let v = loop {
            let v = sample_chi_square(config.n_df, rng).map_err(SaeError::Dist)?;
            if v >= 2.0 {
                break v;
            }
        };
        n.push(v);
    }
    let mut x = DMatrix::zeros(m, 2);
    for i in 0..m {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = sample_normal(config.x_mean, config.x_sd, rng).map_err(SaeError::Dist)?;
    }
    let z = DMatrix::from_fn(m, 2, |i, j| if j == 0 { 1.0 } else { n[i].ln() });

    let beta = DVector::from_vec(config.beta.clone());
    let gamma = DVector::from_vec(config.gamma.clone());
    let zg = &z * &gamma;
    let xb = &x * &beta;
    let tau = config.tau2.sqrt();
    let phi = config.phi2.sqrt();

    let mut area_var = Vec::with_capacity(m);
    let mut area_mean = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    let mut s2 = Vec::with_capacity(m);
    let mut d = Vec::with_capacity(m);
    for i in 0..m {
        let log_var = sample_normal(zg[i], tau, rng).map_err(SaeError::Dist)?;
        let var = log_var.exp();
        let mean = sample_normal(xb[i], phi, rng).map_err(SaeError::Dist)?;
        let y_i = sample_normal(mean, var.sqrt(), rng).map_err(SaeError::Dist)?;
        let d_i = config.df.apply(n[i]);
        let chi = sample_chi_square(d_i, rng).map_err(SaeError::Dist)?;
        area_var.push(var);
        area_mean.push(mean);
        y.push(y_i);
        s2.push(var * chi / d_i);
        d.push(d_i);
    }

    let data = ModelData::new(y, s2, n, d, x, z, None)?;
    let truth = TrueParams {
        beta: config.beta.clone(),
        gamma: config.gamma.clone(),
        tau2: config.tau2,
        phi2: config.phi2,
        area_mean,
        area_var,
    };
    Ok((data, truth))
}

/// On-disk JSON bundle for a prepared dataset.
#[derive(Debug, Serialize, Deserialize)]
struct Bundle {
    m: usize,
    p: usize,
    q: usize,
    area_ids: Vec<String>,
    y: Vec<f64>,
    s2: Vec<f64>,
    n: Vec<f64>,
    d: Vec<f64>,
    /// Row-major m × p.
    x: Vec<f64>,
    /// Row-major m × q.
    z: Vec<f64>,
}

pub fn write_bundle(path: &Path, data: &ModelData) -> Result<(), IngestError> {
    let m = data.num_areas();
    let bundle = Bundle {
        m,
        p: data.x.ncols(),
        q: data.z.ncols(),
        area_ids: data.area_ids.clone(),
        y: data.y.iter().copied().collect(),
        s2: data.s2.iter().copied().collect(),
        n: data.n.iter().copied().collect(),
        d: data.d.iter().copied().collect(),
        x: data
            .x
            .row_iter()
            .flat_map(|r| r.iter().copied().collect::<Vec<_>>())
            .collect(),
        z: data
            .z
            .row_iter()
            .flat_map(|r| r.iter().copied().collect::<Vec<_>>())
            .collect(),
    };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), &bundle)
        .map_err(|e| IngestError::Schema(e.to_string()))?;
    Ok(())
}

pub fn read_bundle(path: &Path) -> Result<ModelData, IngestError> {
    let file = std::fs::File::open(path)?;
    let bundle: Bundle = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| IngestError::Schema(e.to_string()))?;
    let x = DMatrix::from_row_slice(bundle.m, bundle.p, &bundle.x);
    let z = DMatrix::from_row_slice(bundle.m, bundle.q, &bundle.z);
    Ok(ModelData::new(
        bundle.y,
        bundle.s2,
        bundle.n,
        bundle.d,
        x,
        z,
        Some(bundle.area_ids),
    )?)
}
