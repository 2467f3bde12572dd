//! Subcommand bodies, callable without the argument parser.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clava_core::metrics::{evaluate, MetricReport};
use clava_core::synthesis::{singlet_baseline, synthesize, train_all, SampleOptions, TrainedModels};
use clava_core::Database;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{load_database, read_json, write_database, write_json};
use crate::report::{agree_rates, aggregate, write_csv, AggregateReport};
use crate::store::{load_config, load_models, save_models, Provenance};
use crate::toy::{generate_toy, ToySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub name: String,
    pub rows: usize,
    pub columns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub tables: Vec<TableSummary>,
    pub edges: Vec<String>,
    pub depth: usize,
}

pub fn cmd_validate(data: &Path) -> Result<ValidationSummary> {
    let (db, graph) = load_database(data)?;
    Ok(ValidationSummary {
        tables: db
            .tables
            .values()
            .map(|t| TableSummary { name: t.name.clone(), rows: t.row_count(), columns: t.columns.len() })
            .collect(),
        edges: graph.edges().iter().map(ToString::to_string).collect(),
        depth: graph.depth(),
    })
}

/// Latent learning and training; the model directory is written only on success.
pub fn cmd_fit(cfg: &RunConfig, force: bool) -> Result<TrainedModels> {
    cfg.validate()?;
    if cfg.model_dir.exists() && !force {
        return Err(CliError::Exists(cfg.model_dir.clone()));
    }
    let (db, graph) = load_database(&cfg.data_dir)?;
    log::info!("training on {} tables, {} edges", graph.nodes().len(), graph.edges().len());
    let models = train_all(&db, &graph, &cfg.train_config())?;
    save_models(&models, cfg.classifier_scale, &cfg.model_dir, force)?;
    Ok(models)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleArgs {
    pub model_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub scale: f64,
    /// Guidance weight; the value stored with the model when `None`.
    pub classifier_scale: Option<f64>,
    pub singlet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleProvenance {
    pub created_unix_secs: u64,
    pub method: String,
    pub options: SampleOptions,
    pub model_files: std::collections::BTreeMap<String, String>,
}

fn sample_with(models: &TrainedModels, options: &SampleOptions, singlet: bool) -> Result<Database> {
    let out = if singlet { singlet_baseline(models, options)? } else { synthesize(models, options)? };
    Ok(out.database)
}

fn write_sample(db: &Database, out_dir: &Path, options: &SampleOptions, singlet: bool, model_dir: &Path) -> Result<()> {
    write_database(db, out_dir)?;
    let model_prov: Provenance = read_json(&model_dir.join("provenance.json"))?;
    let prov = SampleProvenance {
        created_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        method: if singlet { "single-table baseline" } else { "guided multi-table" }.into(),
        options: *options,
        model_files: model_prov.files,
    };
    write_json(&out_dir.join("provenance.json"), &prov)
}

pub fn cmd_sample(args: &SampleArgs) -> Result<Database> {
    if !(args.scale > 0.0 && args.scale.is_finite()) {
        return Err(CliError::Config(format!("scale must be > 0, got {}", args.scale)));
    }
    let stored = load_config(&args.model_dir)?;
    let eta = args.classifier_scale.unwrap_or(stored.classifier_scale);
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(CliError::Config(format!("classifier scale must be >= 0, got {eta}")));
    }
    let models = load_models(&args.model_dir)?;
    let options = SampleOptions { scale: args.scale, classifier_scale: eta, seed: args.seed };
    let db = sample_with(&models, &options, args.singlet)?;
    write_sample(&db, &args.out_dir, &options, args.singlet, &args.model_dir)?;
    Ok(db)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalArgs {
    pub real: PathBuf,
    pub synth: PathBuf,
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub dcr: bool,
    /// Adds per-edge agree rates from a trained model.
    pub model_dir: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricReport> {
    let (real, graph) = load_database(&args.real)?;
    let (synth, synth_graph) = load_database(&args.synth)?;
    if synth_graph != graph {
        return Err(CliError::Config("real and synthetic databases have different schemas".into()));
    }
    let mut report = evaluate(&real, &synth, &graph, args.dcr)?;
    if let Some(dir) = &args.model_dir {
        report.agree_rates = agree_rates(&load_models(dir)?);
    }
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    if let Some(p) = &args.csv {
        write_csv(&report, p)?;
    }
    Ok(report)
}

/// Fit, sample once per configured seed, evaluate each run, and write
/// `<out_dir>/report.json` with the per-run reports and their mean and spread.
pub fn cmd_pipeline(cfg: &RunConfig, force: bool) -> Result<AggregateReport> {
    let models = cmd_fit(cfg, force)?;
    let (real, graph) = load_database(&cfg.data_dir)?;
    let agree = agree_rates(&models);
    let seeds = cfg.synth_seeds();
    let mut runs = Vec::new();
    for &seed in &seeds {
        let options = cfg.sample_options(seed);
        let db = sample_with(&models, &options, false)?;
        let dir = cfg.out_dir.join(format!("synth_seed_{seed}"));
        write_sample(&db, &dir, &options, false, &cfg.model_dir)?;
        let mut report = evaluate(&real, &db, &graph, cfg.dcr)?;
        report.agree_rates = agree.clone();
        log::info!("seed {seed}: avg 2-way {:?}", report.avg_two_way);
        runs.push(report);
    }
    let aggregated = aggregate(seeds, runs);
    write_json(&cfg.out_dir.join("report.json"), &aggregated)?;
    Ok(aggregated)
}

pub fn cmd_gen_toy(out: &Path, spec: Option<&Path>, seed: u64) -> Result<Database> {
    let spec: ToySpec = match spec {
        Some(p) => read_json(p)?,
        None => ToySpec::default(),
    };
    let db = generate_toy(&spec, seed)?;
    write_database(&db, out)?;
    Ok(db)
}
