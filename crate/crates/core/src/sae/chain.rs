//! Saved draws plus run counters, and the chain file format: a JSON header
//! followed by columnar little-endian f64 blocks, one contiguous column per
//! variable so per-area chains stream straight into the diagnostics.
//!
//! Chain files are bit-reproducible for a fixed seed, so measured wall-clock
//! time is not persisted here; it travels in the run manifest written next
//! to the file. Reading a chain reports zero elapsed seconds.

use super::SaeError;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"VWGCHN01";

/// Rejection and tuning totals for one run. Knot adds/removes are split by
/// burn-in versus kept phase; the per-scan series feeds the knot-update
/// trace.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunCounters {
    pub proposals: u64,
    pub accepted: u64,
    pub rejections: u64,
    pub knot_adds_burn: u64,
    pub knot_adds_keep: u64,
    pub knot_removes_burn: u64,
    pub knot_removes_keep: u64,
    pub knot_updates_per_scan: Vec<u64>,
}

impl RunCounters {
    pub fn knot_updates_burn(&self) -> u64 {
        self.knot_adds_burn + self.knot_removes_burn
    }

    pub fn knot_updates_keep(&self) -> u64 {
        self.knot_adds_keep + self.knot_removes_keep
    }
}

/// Draws kept after burn-in, stored per variable, plus counters and timings.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub sampler: String,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub kept: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Latent-mean chains, one per area.
    pub area_mean: Vec<Vec<f64>>,
    /// Latent-variance chains, one per area.
    pub area_var: Vec<Vec<f64>>,
    /// Mean-regression coefficient chains, one per column of X.
    pub beta: Vec<Vec<f64>>,
    /// Log-variance-regression coefficient chains, one per column of Z.
    pub gamma: Vec<Vec<f64>>,
    pub phi2: Vec<f64>,
    pub tau2: Vec<f64>,
    pub counters: RunCounters,
    pub elapsed_secs: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockDesc {
    name: String,
    cols: usize,
    rows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainHeader {
    version: u32,
    sampler: String,
    m: usize,
    p: usize,
    q: usize,
    kept: usize,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    counters: RunCounters,
    blocks: Vec<BlockDesc>,
}

impl ChainOutput {
    /// Names of the model parameters θ in summary order.
    pub fn theta_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.p + self.q + 2);
        for j in 0..self.p {
            names.push(format!("beta{}", j + 1));
        }
        for j in 0..self.q {
            names.push(format!("gamma{}", j + 1));
        }
        names.push("phi2".into());
        names.push("tau2".into());
        names
    }

    /// θ chains in the same order as [`theta_names`](Self::theta_names).
    pub fn theta_columns(&self) -> Vec<&[f64]> {
        let mut cols: Vec<&[f64]> = Vec::with_capacity(self.p + self.q + 2);
        cols.extend(self.beta.iter().map(|c| c.as_slice()));
        cols.extend(self.gamma.iter().map(|c| c.as_slice()));
        cols.push(&self.phi2);
        cols.push(&self.tau2);
        cols
    }

    pub fn write(&self, path: &Path) -> Result<(), SaeError> {
        let blocks = vec![
            BlockDesc {
                name: "area_mean".into(),
                cols: self.m,
                rows: self.kept,
            },
            BlockDesc {
                name: "area_var".into(),
                cols: self.m,
                rows: self.kept,
            },
            BlockDesc {
                name: "beta".into(),
                cols: self.p,
                rows: self.kept,
            },
            BlockDesc {
                name: "gamma".into(),
                cols: self.q,
                rows: self.kept,
            },
            BlockDesc {
                name: "phi2".into(),
                cols: 1,
                rows: self.kept,
            },
            BlockDesc {
                name: "tau2".into(),
                cols: 1,
                rows: self.kept,
            },
        ];
        let header = ChainHeader {
            version: 1,
            sampler: self.sampler.clone(),
            m: self.m,
            p: self.p,
            q: self.q,
            kept: self.kept,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            counters: self.counters.clone(),
            blocks,
        };
        let header_bytes =
            serde_json::to_vec(&header).map_err(|e| SaeError::ChainFile(e.to_string()))?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for group in [&self.area_mean, &self.area_var, &self.beta, &self.gamma] {
            for col in group.iter() {
                write_column(&mut w, col)?;
            }
        }
        write_column(&mut w, &self.phi2)?;
        write_column(&mut w, &self.tau2)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, SaeError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SaeError::ChainFile(format!(
                "{}: bad magic",
                path.display()
            )));
        }
        let mut len_bytes = [0u8; 8];
        r.read_exact(&mut len_bytes)?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let header: ChainHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| SaeError::ChainFile(e.to_string()))?;
        if header.version != 1 {
            return Err(SaeError::ChainFile(format!(
                "unsupported version {}",
                header.version
            )));
        }
        let mut read_group = |cols: usize| -> Result<Vec<Vec<f64>>, SaeError> {
            (0..cols)
                .map(|_| read_column(&mut r, header.kept))
                .collect()
        };
        let area_mean = read_group(header.m)?;
        let area_var = read_group(header.m)?;
        let beta = read_group(header.p)?;
        let gamma = read_group(header.q)?;
        let phi2 = read_column(&mut r, header.kept)?;
        let tau2 = read_column(&mut r, header.kept)?;
        Ok(ChainOutput {
            sampler: header.sampler,
            m: header.m,
            p: header.p,
            q: header.q,
            kept: header.kept,
            iterations: header.iterations,
            burn_in: header.burn_in,
            thin: header.thin,
            seed: header.seed,
            area_mean,
            area_var,
            beta,
            gamma,
            phi2,
            tau2,
            counters: header.counters,
            elapsed_secs: 0.0,
        })
    }
}

fn write_column<W: Write>(w: &mut W, col: &[f64]) -> Result<(), SaeError> {
    for &v in col {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_column<R: Read>(r: &mut R, rows: usize) -> Result<Vec<f64>, SaeError> {
    let mut buf = vec![0u8; rows * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
