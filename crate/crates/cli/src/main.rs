//! Command-line entry point binding ingestion, the samplers, the studies,
//! and reporting.
//!
//! Exit codes: 0 success, 2 validation, 3 data, 4 numerical failure. Errors
//! go to stderr as one JSON object. Every artifact gets a sibling
//! `<name>.manifest.json` echoing the flags, seed, code version, and timing
//! so a run can be reproduced exactly.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use strips::ingest::{self, SchemaConfig};
use strips::sae::{self, SamplerConfig, SamplerKind, VwgSelfTunedStep6, chain::ChainOutput};
use strips::sim;

#[derive(Parser)]
#[command(
    name = "strips",
    version,
    about = "Strip-envelope samplers for a joint small-area model"
)]
struct Cli {
    /// Worker threads for study parallelism (also STRIPS_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Base directory prepended to relative outputs (also STRIPS_OUT_DIR).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a published CSV into a model-scale data bundle.
    Ingest {
        csv: PathBuf,
        /// Schema mapping (TOML or JSON).
        #[arg(long)]
        schema: PathBuf,
        /// Output bundle path (JSON); an exclusion report lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset from the model.
    SimulateData {
        #[arg(long, default_value_t = 500)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one chain to a data bundle.
    Fit(FitArgs),
    /// Single-conditional study: IMH baseline and self-tuned strips.
    StudyConditional {
        /// Study config (TOML or JSON); defaults to the published grid.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior study over simulated datasets.
    StudyPosterior {
        /// Levels config (TOML or JSON); defaults to desk scale.
        #[arg(long)]
        levels: Option<PathBuf>,
        /// Datasets per level (overrides the config).
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize chain files into per-parameter tables.
    Report {
        /// A chain file or a directory of *.chain files.
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    bundle: PathBuf,
    #[arg(long, value_parser = ["mwg", "vwg", "vwg-basic"])]
    sampler: String,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burn: Option<usize>,
    #[arg(long, default_value_t = 0.85)]
    eps1: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps2: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 50)]
    max_regions: usize,
    #[arg(long, default_value_t = 1_000_000)]
    rejection_cap: u64,
    /// Where to write the chain file.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON dump of the tuned proposal states (self-tuned only).
    #[arg(long)]
    proposals: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<ingest::IngestError> for CliError {
    fn from(e: ingest::IngestError) -> Self {
        use ingest::IngestError::*;
        match &e {
            Schema(_) | MissingColumn(_) => CliError::Validation(e.to_string()),
            Model(inner) => sae_error(inner, e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn sae_error(e: &sae::SaeError, msg: String) -> CliError {
    use sae::SaeError::*;
    match e {
        Invalid(_) => CliError::Validation(msg),
        Io(_) | ChainFile(_) => CliError::Data(msg),
        _ => CliError::Numerical(msg),
    }
}

impl From<sae::SaeError> for CliError {
    fn from(e: sae::SaeError) -> Self {
        let msg = e.to_string();
        sae_error(&e, msg)
    }
}

impl From<sim::SimError> for CliError {
    fn from(e: sim::SimError) -> Self {
        match &e {
            sim::SimError::Invalid(_) => CliError::Validation(e.to_string()),
            sim::SimError::Sae(inner) => sae_error(inner, e.to_string()),
            sim::SimError::Ingest(_) => CliError::Data(e.to_string()),
            sim::SimError::Io(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    argv: Vec<String>,
    seed: Option<u64>,
    version: String,
    started_unix_secs: u64,
    elapsed_secs: f64,
    outputs: Vec<String>,
}

fn write_manifest(
    primary: &Path,
    command: &str,
    seed: Option<u64>,
    started: SystemTime,
    begun: Instant,
    outputs: &[PathBuf],
) -> Result<(), CliError> {
    let manifest = Manifest {
        command: command.to_string(),
        argv: std::env::args().collect(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_secs: started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        elapsed_secs: begun.elapsed().as_secs_f64(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = manifest_path(primary);
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn manifest_path(primary: &Path) -> PathBuf {
    if primary.extension().is_some() {
        primary.with_extension("manifest.json")
    } else {
        primary.join("manifest.json")
    }
}

fn resolve(base: &Option<PathBuf>, path: PathBuf) -> PathBuf {
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path,
    }
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("STRIPS_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var("STRIPS_OUT_DIR").ok().map(PathBuf::from));
    match dispatch(cli.command, &out_dir) {
        Ok(()) => {}
        Err(e) => {
            let payload = serde_json::json!({
                "code": e.code(),
                "kind": e.kind(),
                "message": e.message(),
            });
            eprintln!("{payload}");
            std::process::exit(e.code());
        }
    }
}

fn dispatch(command: Command, out_dir: &Option<PathBuf>) -> Result<(), CliError> {
    let started = SystemTime::now();
    let begun = Instant::now();
    match command {
        Command::Ingest { csv, schema, out } => {
            let out = resolve(out_dir, out);
            let schema = SchemaConfig::from_path(&schema)?;
            let (data, report) = ingest::load_dataset(&csv, &schema)?;
            ensure_parent(&out)?;
            ingest::write_bundle(&out, &data)?;
            let report_path = out.with_extension("exclusions.json");
            std::fs::write(
                &report_path,
                serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?,
            )?;
            println!(
                "ingested {} rows, kept {}, excluded {}",
                report.input_rows,
                report.retained_rows,
                report.excluded.len()
            );
            write_manifest(
                &out,
                "ingest",
                None,
                started,
                begun,
                &[out.clone(), report_path],
            )?;
            Ok(())
        }
        Command::SimulateData { m, seed, out } => {
            let out = resolve(out_dir, out);
            let cfg = ingest::GeneratorConfig {
                areas: m,
                ..Default::default()
            };
            let (data, truth) = ingest::simulate_dataset(&cfg, &mut strips::rng::stream(seed, 0))?;
            ensure_parent(&out)?;
            ingest::write_bundle(&out, &data)?;
            let truth_path = out.with_extension("truth.json");
            std::fs::write(
                &truth_path,
                serde_json::to_string_pretty(&truth).map_err(|e| CliError::Data(e.to_string()))?,
            )?;
            println!("simulated {m} areas");
            write_manifest(
                &out,
                "simulate-data",
                Some(seed),
                started,
                begun,
                &[out.clone(), truth_path],
            )?;
            Ok(())
        }
        Command::Fit(args) => {
            let out = resolve(out_dir, args.out.clone());
            run_fit(&args, &out, started, begun)
        }
        Command::StudyConditional { grid, out } => {
            let out = resolve(out_dir, out);
            let cfg: sim::ConditionalStudyConfig = match grid {
                Some(path) => read_config(&path)?,
                None => Default::default(),
            };
            let result = sim::run_conditional_study(&cfg)?;
            let written = result.write_csvs(&out)?;
            println!("conditional study written to {}", out.display());
            write_manifest(
                &out,
                "study-conditional",
                Some(cfg.seed),
                started,
                begun,
                &written,
            )?;
            Ok(())
        }
        Command::StudyPosterior { levels, reps, out } => {
            let out = resolve(out_dir, out);
            let mut cfg: sim::PosteriorStudyConfig = match levels {
                Some(path) => read_config(&path)?,
                None => Default::default(),
            };
            if let Some(r) = reps {
                cfg.repetitions = r;
            }
            let result = sim::run_posterior_study(&cfg)?;
            let written = result.write_csvs(&out)?;
            println!("posterior study written to {}", out.display());
            write_manifest(
                &out,
                "study-posterior",
                Some(cfg.seed),
                started,
                begun,
                &written,
            )?;
            Ok(())
        }
        Command::Report { input, out } => {
            let out = resolve(out_dir, out);
            let chains = collect_chains(&input)?;
            if chains.is_empty() {
                return Err(CliError::Data(format!(
                    "no chain files under {}",
                    input.display()
                )));
            }
            ensure_parent(&out)?;
            let mut written = Vec::new();
            for path in &chains {
                let chain = ChainOutput::read(path).map_err(CliError::from)?;
                let names = chain.theta_names();
                let cols = chain.theta_columns();
                let vars: Vec<(String, &[f64])> = names.into_iter().zip(cols).collect();
                let table = strips::diagnostics::summarize(&vars, &[0.05, 0.95]);
                let target = if chains.len() == 1 {
                    out.clone()
                } else {
                    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                    out.join(format!("{stem}.summary.csv"))
                };
                ensure_parent(&target)?;
                std::fs::write(&target, table.to_csv())?;
                let metrics = serde_json::json!({
                    "sampler": chain.sampler,
                    "m": chain.m,
                    "kept": chain.kept,
                    "elapsed_secs": chain.elapsed_secs,
                    "counters": chain.counters,
                });
                let metrics_path = target.with_extension("metrics.json");
                std::fs::write(
                    &metrics_path,
                    serde_json::to_string_pretty(&metrics)
                        .map_err(|e| CliError::Data(e.to_string()))?,
                )?;
                written.push(target);
                written.push(metrics_path);
            }
            write_manifest(&out, "report", None, started, begun, &written)?;
            println!("report written to {}", out.display());
            Ok(())
        }
    }
}

fn run_fit(
    args: &FitArgs,
    out: &Path,
    started: SystemTime,
    begun: Instant,
) -> Result<(), CliError> {
    let kind = match args.sampler.as_str() {
        "mwg" => SamplerKind::Mwg,
        "vwg" => SamplerKind::VwgSelfTuned,
        "vwg-basic" => SamplerKind::VwgBasic {
            max_regions: args.max_regions,
        },
        other => return Err(CliError::Validation(format!("unknown sampler {other}"))),
    };
    let mut cfg = match kind {
        SamplerKind::Mwg => SamplerConfig::mwg(args.seed),
        SamplerKind::VwgSelfTuned => SamplerConfig::vwg(args.seed),
        SamplerKind::VwgBasic { max_regions } => SamplerConfig::vwg_basic(args.seed, max_regions),
    };
    if let Some(iters) = args.iters {
        cfg.iterations = iters;
    }
    if let Some(burn) = args.burn {
        cfg.burn_in = burn;
    }
    cfg.eps1 = args.eps1;
    cfg.eps2 = args.eps2;
    cfg.thin = args.thin;
    cfg.max_rejections = args.rejection_cap;
    if cfg.burn_in >= cfg.iterations {
        return Err(CliError::Validation(format!(
            "burn-in {} must be below total iterations {}",
            cfg.burn_in, cfg.iterations
        )));
    }
    let data = ingest::read_bundle(&args.bundle)?;
    ensure_parent(out)?;
    let mut outputs = vec![out.to_path_buf()];
    let chain = if matches!(kind, SamplerKind::VwgSelfTuned) && args.proposals.is_some() {
        let mut step6 =
            VwgSelfTunedStep6::new(data.num_areas(), cfg.eps1, cfg.eps2, cfg.max_rejections);
        let chain = sae::run_sampler_with(&data, &cfg, None, &mut step6)?;
        let proposals_path = args.proposals.clone().unwrap();
        ensure_parent(&proposals_path)?;
        let dump = serde_json::json!({
            "eps1": cfg.eps1,
            "eps2": cfg.eps2,
            "proposals": step6.checkpoints(),
        });
        std::fs::write(
            &proposals_path,
            serde_json::to_string(&dump).map_err(|e| CliError::Data(e.to_string()))?,
        )?;
        outputs.push(proposals_path);
        chain
    } else {
        sae::run_sampler(&data, &cfg, None)?
    };
    chain.write(out).map_err(CliError::from)?;
    println!(
        "{} chain: kept {} of {} iterations, {} rejections, {:.2}s",
        chain.sampler, chain.kept, chain.iterations, chain.counters.rejections, chain.elapsed_secs
    );
    write_manifest(out, "fit", Some(args.seed), started, begun, &outputs)?;
    Ok(())
}

fn collect_chains(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(CliError::Data(format!(
            "{} does not exist",
            input.display()
        )));
    }
    let mut chains: Vec<PathBuf> = std::fs::read_dir(input)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "chain"))
        .collect();
    chains.sort();
    Ok(chains)
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent()
        && !parent.as_os_str().is_empty()
    {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::Validation(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Validation(e.to_string()))
    }
}
