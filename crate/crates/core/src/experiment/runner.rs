//! Full pipeline orchestration: per (method, seed) cells with resumability.
//!
//! Layout under the output root:
//!   out/<config-hash>/config.json
//!   out/<config-hash>/<seed>/{teacher.json, atlas.json}
//!   out/<config-hash>/<seed>/<method>/{checkpoint.json, train_log.csv,
//!                                      result.json, timing.json}
//!   out/<config-hash>/report.{md,csv}
//!
//! A cell is complete iff its result.json exists; deleting one file and
//! re-running recomputes exactly that cell (everything is deterministic, so
//! the bytes come back identical). Timing lives in its own sidecar so every
//! other artifact is byte-stable across reruns.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chart::{build_atlas, ChartAtlas};
use crate::error::{CoreError, Result};
use crate::experiment::config::ExperimentConfig;
use crate::experiment::report::{ReportTable, ResultDoc, RESULT_SCHEMA_VERSION};
use crate::metrics::evaluate_run;
use crate::model::{
    finetune, group_anchors_by_cluster, train_teacher, MlpModel, StepRecord, TeacherArtifacts,
};
use crate::objective::Method;
use crate::synthetic::{make_benchmark, BenchmarkBundle};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    schema_version: u32,
    layer_dims: Vec<usize>,
    latent_layer: usize,
    seed: u64,
    config_hash: String,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TimingDoc {
    unix_time_secs: u64,
    wall_secs: f64,
}

/// One failed cell, recorded without aborting the others.
#[derive(Clone, Debug)]
pub struct CellFailure {
    pub method: Method,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub table: ReportTable,
    pub completed: usize,
    pub skipped: usize,
    pub failures: Vec<CellFailure>,
}

/// Write-temp-then-rename so partially written files never count as results.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn train_log_csv(log: &[StepRecord]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "step",
        "alpha",
        "beta",
        "loss_new",
        "loss_anchor",
        "loss_kd",
        "loss_geo",
        "loss_smooth",
        "loss_chart",
        "loss_reg",
        "total",
    ])?;
    for rec in log {
        let b = &rec.breakdown;
        // Default f64 formatting is shortest round-trip, so the log is both
        // readable and exact.
        wtr.write_record([
            rec.step.to_string(),
            b.alpha.to_string(),
            b.beta.to_string(),
            b.new.to_string(),
            b.anchor.to_string(),
            b.kd.to_string(),
            b.geo.to_string(),
            b.smooth.to_string(),
            b.chart.to_string(),
            b.reg.to_string(),
            b.total.to_string(),
        ])?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| CoreError::validation(format!("csv writer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CoreError::validation(format!("csv utf8: {e}")))
}

fn checkpoint_json(model: &MlpModel, seed: u64, config_hash: &str) -> Result<String> {
    let doc = CheckpointDoc {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        layer_dims: model.layer_dims().to_vec(),
        latent_layer: model.latent_layer(),
        seed,
        config_hash: config_hash.to_string(),
        params: model.params().to_vec(),
    };
    Ok(serde_json::to_string(&doc)?)
}

/// Per-seed state shared by every method cell.
struct SeedState {
    bundle: BenchmarkBundle,
    teacher: TeacherArtifacts,
    atlas: ChartAtlas,
    anchor_clusters: Vec<Vec<usize>>,
}

fn prepare_seed(cfg: &ExperimentConfig, seed: u64, seed_dir: &Path, hash: &str) -> Result<SeedState> {
    let bundle = make_benchmark(&cfg.benchmark, seed)?;
    let teacher = train_teacher(&bundle, &cfg.teacher, &cfg.model.hidden_dims, seed)?;
    let (atlas, assignments) = build_atlas(&teacher.anchor_latents, &cfg.chart, seed)?;
    let anchor_clusters = group_anchors_by_cluster(&assignments, atlas.len());
    std::fs::create_dir_all(seed_dir)?;
    write_atomic(
        &seed_dir.join("teacher.json"),
        checkpoint_json(&teacher.model, seed, hash)?.as_bytes(),
    )?;
    write_atomic(&seed_dir.join("atlas.json"), atlas.to_json()?.as_bytes())?;
    Ok(SeedState {
        bundle,
        teacher,
        atlas,
        anchor_clusters,
    })
}

fn run_cell(
    cfg: &ExperimentConfig,
    state: &SeedState,
    method: Method,
    seed: u64,
    cell_dir: &Path,
    hash: &str,
) -> Result<ResultDoc> {
    std::fs::create_dir_all(cell_dir)?;
    let started = Instant::now();
    let out = finetune(
        &state.teacher,
        &state.bundle,
        &state.atlas,
        &state.anchor_clusters,
        &cfg.objective,
        &cfg.finetune,
        method,
        seed,
    )?;
    let metrics = evaluate_run(
        &state.teacher.model,
        &out.model,
        &state.bundle,
        &state.atlas,
        cfg.support_quantile,
    )?;
    let doc = ResultDoc {
        schema_version: RESULT_SCHEMA_VERSION,
        config_hash: hash.to_string(),
        method,
        seed,
        support_quantile: cfg.support_quantile,
        metrics,
    };

    write_atomic(
        &cell_dir.join("checkpoint.json"),
        checkpoint_json(&out.model, seed, hash)?.as_bytes(),
    )?;
    write_atomic(
        &cell_dir.join("train_log.csv"),
        train_log_csv(&out.log)?.as_bytes(),
    )?;
    write_atomic(
        &cell_dir.join("result.json"),
        serde_json::to_string_pretty(&doc)?.as_bytes(),
    )?;
    let timing = TimingDoc {
        unix_time_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        wall_secs: started.elapsed().as_secs_f64(),
    };
    write_atomic(
        &cell_dir.join("timing.json"),
        serde_json::to_string_pretty(&timing)?.as_bytes(),
    )?;
    Ok(doc)
}

/// Run every (seed, method) cell, resuming over existing results, then write
/// the aggregate report.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let hash = cfg.content_hash();
    let out_dir = out_root.join(cfg.short_hash());
    std::fs::create_dir_all(&out_dir)?;
    write_atomic(
        &out_dir.join("config.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "config_hash": hash,
            "config": cfg,
        }))?
        .as_bytes(),
    )?;

    let mut docs = Vec::new();
    let mut failures = Vec::new();
    let mut completed = 0usize;
    let mut skipped = 0usize;

    for &seed in &cfg.seeds {
        let seed_dir = out_dir.join(seed.to_string());
        let missing: Vec<Method> = cfg
            .methods
            .iter()
            .copied()
            .filter(|m| !seed_dir.join(m.name()).join("result.json").is_file())
            .collect();

        // Finished cells are only re-read, never recomputed.
        for &method in &cfg.methods {
            let result_path = seed_dir.join(method.name()).join("result.json");
            if result_path.is_file() {
                let doc: ResultDoc = serde_json::from_str(&std::fs::read_to_string(&result_path)?)?;
                docs.push(doc);
                skipped += 1;
            }
        }
        if missing.is_empty() {
            continue;
        }

        let state = match prepare_seed(cfg, seed, &seed_dir, &hash) {
            Ok(s) => s,
            Err(e) => {
                for method in missing {
                    failures.push(CellFailure {
                        method,
                        seed,
                        error: format!("seed preparation failed: {e}"),
                    });
                }
                continue;
            }
        };

        for method in missing {
            let cell_dir = seed_dir.join(method.name());
            match run_cell(cfg, &state, method, seed, &cell_dir, &hash) {
                Ok(doc) => {
                    docs.push(doc);
                    completed += 1;
                }
                Err(e) => {
                    let msg = e.to_string();
                    let _ = write_atomic(
                        &cell_dir.join("error.txt"),
                        msg.as_bytes(),
                    );
                    failures.push(CellFailure {
                        method,
                        seed,
                        error: msg,
                    });
                }
            }
        }
    }

    let table = ReportTable::from_results(docs);
    write_atomic(
        &out_dir.join("report.md"),
        table.render_markdown().as_bytes(),
    )?;
    write_atomic(&out_dir.join("report.csv"), table.render_csv().as_bytes())?;

    Ok(RunSummary {
        out_dir,
        table,
        completed,
        skipped,
        failures,
    })
}
