use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clava::commands::{cmd_eval, cmd_fit, cmd_gen_toy, cmd_pipeline, cmd_sample, cmd_validate, EvalArgs, SampleArgs};
use clava::config::RunConfig;
use clava::{CliError, Result};

/// Multi-table relational data synthesis with cluster-latent guided diffusion.
#[derive(Parser)]
#[command(name = "clava", version)]
struct Cli {
    /// Worker cap. Computation is single-threaded, so results never depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check schema and referential integrity of a dataset directory.
    Validate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Learn latents and train all models.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Replace an existing model directory.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Synthesize a database from a model directory.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Guidance weight (defaults to the value stored with the model).
        #[arg(long)]
        eta: Option<f64>,
        /// Sample tables independently with real group sizes instead.
        #[arg(long)]
        singlet: bool,
    },
    /// Compare a synthetic database with the real one.
    Eval {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Also compute the median distance to closest record.
        #[arg(long)]
        dcr: bool,
        /// Flat per-score CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Model directory for agree rates.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit, sample with several seeds and evaluate.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a planted-correlation toy dataset.
    GenToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &std::path::Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    match cli.command {
        Command::Validate { data } => {
            let s = cmd_validate(&data)?;
            for t in &s.tables {
                println!("table {}: {} rows, {} columns", t.name, t.rows, t.columns);
            }
            for e in &s.edges {
                println!("edge {e}");
            }
            println!("depth {}", s.depth);
        }
        Command::Fit { config, force, seed } => {
            let cfg = load_config(&config, seed)?;
            let models = cmd_fit(&cfg, force)?;
            println!("trained {} denoisers and {} classifiers into {}", models.tables.len(), models.edges.len(), cfg.model_dir.display());
        }
        Command::Sample { model, out, seed, scale, eta, singlet } => {
            let db = cmd_sample(&SampleArgs { model_dir: model, out_dir: out.clone(), seed, scale, classifier_scale: eta, singlet })?;
            for t in db.tables.values() {
                println!("{}: {} rows", t.name, t.row_count());
            }
            println!("wrote {}", out.display());
        }
        Command::Eval { real, synth, report, dcr, csv, model } => {
            let r = cmd_eval(&EvalArgs { real, synth, report: Some(report.clone()), csv, dcr, model_dir: model })?;
            let show = |name: &str, v: Option<f64>| println!("{name:>12}: {}", v.map_or("n/a".into(), |v| format!("{v:.2}")));
            show("cardinality", r.cardinality_mean);
            show("1-way", r.one_way_mean);
            for (k, s) in &r.khop {
                show(&format!("{k}-hop"), s.mean);
            }
            show("avg 2-way", r.avg_two_way);
            println!("wrote {}", report.display());
        }
        Command::Pipeline { config, force, seed } => {
            let cfg = load_config(&config, seed)?;
            let r = cmd_pipeline(&cfg, force)?;
            for (k, v) in &r.summary {
                println!("{k:>12}: {:.2} ± {:.2}", v.mean, v.std);
            }
            println!("wrote {}", cfg.out_dir.join("report.json").display());
        }
        Command::GenToy { out, spec, seed } => {
            let db = cmd_gen_toy(&out, spec.as_deref(), seed)?;
            for t in db.tables.values() {
                println!("{}: {} rows", t.name, t.row_count());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLAVA_LOG", "error")).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
