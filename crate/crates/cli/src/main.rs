//! Batch CLI for the continual-learning laboratory.
//!
//! Verbs: `generate` (benchmark bundle only), `run` (full pipeline over all
//! (method, seed) cells, resumable), `report` (re-aggregate an output
//! directory), `selftest` (oracle and invariant battery).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use spma_core::experiment::{emit_report, run_experiment, write_atomic, ConfigFile};
use spma_core::synthetic::make_benchmark;
use spma_core::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "spma",
    about = "Geometry-preserving continual-learning experiments on a synthetic atlas manifold",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config file; every key is optional and defaults are filled in.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the seed list, e.g. --seed 7,8,9
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Override the method list, e.g. --methods PlainFT,SPMA-OG
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate benchmark bundles and write them as JSON, one per seed.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for bundle files.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the full pipeline: bundle, teacher, atlas, every method, metrics.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output root; results land under <out>/<config-hash>/.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Aggregate result files into report.md / report.csv.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output root used by `run`, or a <config-hash> directory directly.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the oracle and invariant suite.
    Selftest,
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let file: ConfigFile = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ConfigFile::default(),
    };
    Ok(file.resolve(args.seed.clone(), args.methods.clone())?)
}

fn resolve_results_dir(cfg: &ExperimentConfig, out: &Path) -> PathBuf {
    let hashed = out.join(cfg.short_hash());
    if hashed.is_dir() {
        hashed
    } else {
        out.to_path_buf()
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { config, out } => {
            let cfg = load_config(&config)?;
            std::fs::create_dir_all(&out)?;
            for &seed in &cfg.seeds {
                let bundle = make_benchmark(&cfg.benchmark, seed)?;
                let path = out.join(format!("bundle_seed{seed}.json"));
                write_atomic(&path, bundle.to_json()?.as_bytes())?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            println!("config hash: {}", cfg.content_hash());
            let summary = run_experiment(&cfg, &out)?;
            println!(
                "completed {} cell(s), reused {}, output in {}",
                summary.completed,
                summary.skipped,
                summary.out_dir.display()
            );
            println!("\n{}", summary.table.render_markdown());
            if !summary.failures.is_empty() {
                for f in &summary.failures {
                    eprintln!("FAILED cell {} seed {}: {}", f.method, f.seed, f.error);
                }
                bail!("{} cell(s) failed", summary.failures.len());
            }
            Ok(())
        }
        Command::Report { config, out } => {
            let cfg = load_config(&config)?;
            let dir = resolve_results_dir(&cfg, &out);
            let (md, csv) = emit_report(&dir)?;
            write_atomic(&dir.join("report.md"), md.as_bytes())?;
            write_atomic(&dir.join("report.csv"), csv.as_bytes())?;
            println!("{md}");
            Ok(())
        }
        Command::Selftest => {
            let outcomes = spma_core::selftest::run_all();
            let mut failed = 0usize;
            for o in &outcomes {
                let tag = if o.passed { "PASS" } else { "FAIL" };
                println!("[{tag}] {}: {}", o.name, o.detail);
                if !o.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                bail!("{failed} selftest check(s) failed");
            }
            println!("all {} checks passed", outcomes.len());
            Ok(())
        }
    }
}
