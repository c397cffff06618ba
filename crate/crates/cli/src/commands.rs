//! Subcommand implementations. The CLI is a thin sequential orchestrator:
//! all parallelism lives in the library it calls.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use mcce_core::bench::{
    emit_report, evaluate_at, format_report_table, parse_report_csv, sweep_aoa, sweep_snr,
    AoaPoint, NmseReport, ReportFormat,
};
use mcce_core::estimators::{Estimator, EstimatorKind, SampleStats};
use mcce_core::rng::derive_seed;
use mcce_core::scenario::{
    apply_scale, ingest_external, load_dataset, normalize_dataset, save_dataset,
    synthesize_dataset, Dataset, IngestNormalization, SnrMode, SystemConfig,
};
use mcce_core::vae::{load_checkpoint, save_checkpoint, Trainer, VaeModel};

use crate::config::{domains, ModelKind, RunConfig};
use crate::manifest::{
    write_manifest, GenManifest, ReportManifest, SplitEntry, TrainManifest, TOOL_VERSION,
};

/// Resolves the system config and base seed, honoring an optional AoA-pair
/// override, plus the directory suffix the pair's artifacts live under.
fn resolve_scenario(
    cfg: &RunConfig,
    pair: Option<&str>,
) -> Result<(SystemConfig, u64, Option<String>)> {
    match pair {
        None => Ok((cfg.system.clone(), cfg.seed, None)),
        Some(label) => {
            let (system, seed) = cfg.system_for_pair(label)?;
            Ok((system, seed, Some(label.to_string())))
        }
    }
}

fn with_pair(dir: &Path, pair: &Option<String>) -> PathBuf {
    match pair {
        Some(label) => dir.join(label),
        None => dir.to_path_buf(),
    }
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

pub fn cmd_gen(config_path: &Path, out_dir: Option<PathBuf>, pair: Option<String>) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let (system, seed, pair) = resolve_scenario(&cfg, pair.as_deref())?;
    let dir = out_dir.unwrap_or_else(|| with_pair(&cfg.paths.data_dir, &pair));
    std::fs::create_dir_all(&dir)?;

    let train_seed = derive_seed(seed, domains::TRAIN_SPLIT);
    let val_seed = derive_seed(seed, domains::VAL_SPLIT);
    let test_seed = derive_seed(seed, domains::TEST_SPLIT);
    let range = SnrMode::UniformDb {
        low: system.snr_range_db[0],
        high: system.snr_range_db[1],
    };

    println!(
        "generating {} train / {} val / {} test records (M = {})...",
        system.train_count, system.val_count, system.test_count, system.antennas
    );
    let mut train = synthesize_dataset(&system, system.train_count, range, train_seed)?;
    let scale = normalize_dataset(&mut train)?.scale;
    let mut val = synthesize_dataset(&system, system.val_count, range, val_seed)?;
    apply_scale(&mut val, scale);
    let mut test = synthesize_dataset(
        &system,
        system.test_count,
        SnrMode::FixedDb(cfg.eval.snr_db),
        test_seed,
    )?;
    apply_scale(&mut test, scale);

    let mut splits = std::collections::BTreeMap::new();
    for (name, ds, split_seed) in [
        ("train", &train, train_seed),
        ("val", &val, val_seed),
        ("test", &test, test_seed),
    ] {
        let file = dir.join(format!("{name}.mcce"));
        save_dataset(ds, &file)?;
        splits.insert(
            name.to_string(),
            SplitEntry {
                file: file.display().to_string(),
                records: ds.len(),
                seed: split_seed,
            },
        );
    }
    write_manifest(
        &dir.join("manifest.toml"),
        &GenManifest {
            tool_version: TOOL_VERSION.into(),
            command: "gen".into(),
            config_sha256: cfg.sha256()?,
            seed,
            scale,
            splits,
        },
    )?;
    println!("wrote {} (normalization scale {scale:.6})", dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    config_path: &Path,
    data_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    genie: bool,
    single_cell: bool,
    resume: Option<PathBuf>,
    pair: Option<String>,
) -> Result<()> {
    if genie && single_cell {
        bail!("--genie applies to the multi-cell model only");
    }
    let cfg = RunConfig::load(config_path)?;
    let (system, seed, pair) = resolve_scenario(&cfg, pair.as_deref())?;
    let data_dir = data_dir.unwrap_or_else(|| with_pair(&cfg.paths.data_dir, &pair));
    let kind = match (single_cell, genie) {
        (true, _) => ModelKind::SingleCell,
        (false, true) => ModelKind::MultiCellGenie,
        (false, false) => ModelKind::MultiCell,
    };
    let out =
        out.unwrap_or_else(|| with_pair(&cfg.paths.model_dir, &pair).join(kind.checkpoint_name()));
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }

    let train_path = data_dir.join("train.mcce");
    let val_path = data_dir.join("val.mcce");
    let train_ds =
        load_dataset(&train_path).with_context(|| format!("loading {}", train_path.display()))?;
    let val_ds =
        load_dataset(&val_path).with_context(|| format!("loading {}", val_path.display()))?;

    let init_seed = derive_seed(seed, domains::MODEL_INIT + kind.offset());
    let schedule_seed = derive_seed(seed, domains::TRAINING + kind.offset());
    let arch = if single_cell {
        &cfg.model.single_cell
    } else {
        &cfg.model.multi_cell
    };
    let blocks = if single_cell { 1 } else { 2 };
    let model_cfg = arch.to_model_config(system.antennas, blocks, genie, init_seed);
    model_cfg.validate()?;
    let schedule = cfg.training.to_schedule(schedule_seed);

    let mut trainer = match &resume {
        Some(path) => {
            let mut trainer = load_checkpoint(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            if trainer.model.config != model_cfg {
                bail!(
                    "checkpoint architecture ({} blocks) does not match the requested model ({} blocks)",
                    trainer.model.config.num_blocks,
                    model_cfg.num_blocks
                );
            }
            // optimizer state, weights and epoch numbering come from the
            // checkpoint; caps and learning rate follow the current config
            trainer.schedule = schedule;
            println!("resuming from epoch {}", trainer.epoch);
            trainer
        }
        None => Trainer::new(VaeModel::new(model_cfg)?, schedule)?,
    };

    let history_path = out.with_extension("history.csv");
    let mut history = std::io::BufWriter::new(if resume.is_some() && history_path.exists() {
        std::fs::OpenOptions::new()
            .append(true)
            .open(&history_path)?
    } else {
        let mut f = std::fs::File::create(&history_path)?;
        writeln!(f, "epoch,train_elbo,val_elbo,improved")?;
        f
    });

    println!(
        "training {} ({} parameters) on {} records...",
        kind.checkpoint_name(),
        trainer.model.param_count(),
        train_ds.len()
    );
    let train_samples = Trainer::prepare_samples(&trainer.model.config, &train_ds)?;
    let val_samples = Trainer::prepare_samples(&trainer.model.config, &val_ds)?;
    let started = std::time::Instant::now();
    while !trainer.finished() {
        let stats = trainer.run_epoch(&train_samples, &val_samples)?;
        writeln!(
            history,
            "{},{},{},{}",
            stats.epoch, stats.train_elbo, stats.val_elbo, stats.improved
        )?;
        println!(
            "epoch {:4}: train ELBO {:10.3}, val ELBO {:10.3}{} ({:.0?})",
            stats.epoch,
            stats.train_elbo,
            stats.val_elbo,
            if stats.improved { "  *" } else { "" },
            started.elapsed()
        );
    }
    history.flush()?;
    save_checkpoint(&trainer, &out)?;
    write_manifest(
        &out.with_extension("manifest.toml"),
        &TrainManifest {
            tool_version: TOOL_VERSION.into(),
            command: "train".into(),
            config_sha256: cfg.sha256()?,
            seed,
            model_init_seed: init_seed,
            schedule_seed,
            train_data: train_path.display().to_string(),
            val_data: val_path.display().to_string(),
            checkpoint: out.display().to_string(),
            epochs_run: trainer.epoch,
            best_val_elbo: trainer.early.best(),
        },
    )?;
    println!(
        "saved {} (best validation ELBO {:.3} after {} epochs)",
        out.display(),
        trainer.early.best(),
        trainer.epoch
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// estimator assembly
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone)]
pub struct CheckpointPaths {
    pub vae: Option<PathBuf>,
    pub vae_genie: Option<PathBuf>,
    pub single: Option<PathBuf>,
}

impl CheckpointPaths {
    fn resolve(&self, model_dir: &Path, kind: ModelKind) -> PathBuf {
        let explicit = match kind {
            ModelKind::MultiCell => &self.vae,
            ModelKind::MultiCellGenie => &self.vae_genie,
            ModelKind::SingleCell => &self.single,
        };
        explicit
            .clone()
            .unwrap_or_else(|| model_dir.join(kind.checkpoint_name()))
    }
}

fn load_model(path: &Path) -> Result<VaeModel> {
    let trainer =
        load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(trainer.best_model()?)
}

/// Builds the requested estimators, loading checkpoints and fitting sample
/// statistics only when a requested kind needs them.
pub fn build_estimators(
    kinds: &[EstimatorKind],
    train_data: Option<&Path>,
    model_dir: &Path,
    ckpts: &CheckpointPaths,
) -> Result<(Vec<Estimator>, Vec<PathBuf>)> {
    let needs_stats = kinds.iter().any(|k| {
        matches!(
            k,
            EstimatorKind::Scov | EstimatorKind::VaeAwgn | EstimatorKind::VaeScov
        )
    });
    let stats: Option<SampleStats> = if needs_stats {
        let path = train_data.ok_or_else(|| {
            anyhow::anyhow!(
                "estimators {{scov, vae-awgn, vae-scov}} need --train-data (ground-truth channels)"
            )
        })?;
        let ds = load_dataset(path)?;
        Some(SampleStats::fit(&ds.records)?)
    } else {
        None
    };
    let mut used = Vec::new();
    let mut load = |kind: ModelKind| -> Result<VaeModel> {
        let path = ckpts.resolve(model_dir, kind);
        used.push(path.clone());
        load_model(&path)
    };
    let mut estimators = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let est = match kind {
            EstimatorKind::Ls => Estimator::ls(),
            EstimatorKind::Scov => Estimator::scov(stats.clone().unwrap()),
            EstimatorKind::GenieCov => Estimator::genie_cov(),
            EstimatorKind::Vae => Estimator::vae(load(ModelKind::MultiCell)?)?,
            EstimatorKind::VaeGenie => Estimator::vae_genie(load(ModelKind::MultiCellGenie)?)?,
            EstimatorKind::VaeIgnore => Estimator::vae_ignore(load(ModelKind::SingleCell)?)?,
            EstimatorKind::VaeAwgn => {
                Estimator::vae_awgn(load(ModelKind::SingleCell)?, stats.as_ref().unwrap())?
            }
            EstimatorKind::VaeScov => {
                Estimator::vae_scov(load(ModelKind::SingleCell)?, stats.clone().unwrap())?
            }
        };
        estimators.push(est);
    }
    Ok((estimators, used))
}

// ---------------------------------------------------------------------------
// eval / sweeps
// ---------------------------------------------------------------------------

struct EvalArtifacts {
    report: NmseReport,
    data: Vec<String>,
    checkpoints: Vec<PathBuf>,
}

fn finish_report(
    cfg: &RunConfig,
    seed: u64,
    artifacts: EvalArtifacts,
    out: &Path,
    command: &str,
) -> Result<()> {
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    emit_report(&artifacts.report, out, ReportFormat::Csv)?;
    write_manifest(
        &out.with_extension("manifest.toml"),
        &ReportManifest {
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            config_sha256: cfg.sha256()?,
            seed,
            data: artifacts.data,
            checkpoints: artifacts
                .checkpoints
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            report: out.display().to_string(),
        },
    )?;
    println!("{}", format_report_table(&artifacts.report));
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    config_path: &Path,
    data: Option<PathBuf>,
    train_data: Option<PathBuf>,
    out: Option<PathBuf>,
    ckpts: CheckpointPaths,
    pair: Option<String>,
    sweep: bool,
) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let (_, seed, pair) = resolve_scenario(&cfg, pair.as_deref())?;
    let data_dir = with_pair(&cfg.paths.data_dir, &pair);
    let model_dir = with_pair(&cfg.paths.model_dir, &pair);
    let data_path = data.unwrap_or_else(|| data_dir.join("test.mcce"));
    let train_path = train_data.or_else(|| {
        let p = data_dir.join("train.mcce");
        p.exists().then_some(p)
    });
    let ds = load_dataset(&data_path)?;
    let (estimators, used) = build_estimators(
        &cfg.eval.estimators,
        train_path.as_deref(),
        &model_dir,
        &ckpts,
    )?;
    let noise_seed = derive_seed(seed, domains::EVAL_NOISE);
    let (report, default_name, command) = if sweep {
        (
            sweep_snr(&ds, &estimators, &cfg.eval.snr_grid_db, noise_seed)?,
            "sweep_snr.csv",
            "sweep-snr",
        )
    } else {
        let rows = evaluate_at(
            &ds,
            &estimators,
            cfg.eval.snr_db,
            noise_seed,
            &format!("{}", cfg.eval.snr_db),
        )?;
        (NmseReport { rows }, "eval.csv", "eval")
    };
    let out = out.unwrap_or_else(|| with_pair(&cfg.paths.report_dir, &pair).join(default_name));
    finish_report(
        &cfg,
        seed,
        EvalArtifacts {
            report,
            data: vec![data_path.display().to_string()],
            checkpoints: used,
        },
        &out,
        command,
    )
}

pub fn cmd_sweep_aoa(
    config_path: &Path,
    data_root: Option<PathBuf>,
    model_root: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let data_root = data_root.unwrap_or_else(|| cfg.paths.data_dir.clone());
    let model_root = model_root.unwrap_or_else(|| cfg.paths.model_dir.clone());
    if cfg.eval.aoa_pairs.is_empty() {
        bail!("config has no eval.aoa_pairs");
    }
    let mut datasets = Vec::new();
    for pair in &cfg.eval.aoa_pairs {
        let path = data_root.join(&pair.label).join("test.mcce");
        datasets.push(load_dataset(&path).with_context(|| format!("loading {}", path.display()))?);
    }
    let mut estimator_sets = Vec::new();
    let mut all_used = Vec::new();
    let mut data_used = Vec::new();
    for (pair, _ds) in cfg.eval.aoa_pairs.iter().zip(&datasets) {
        let pair_data = data_root.join(&pair.label);
        let train_path = pair_data.join("train.mcce");
        let train_opt = train_path.exists().then_some(train_path);
        let (ests, used) = build_estimators(
            &cfg.eval.estimators,
            train_opt.as_deref(),
            &model_root.join(&pair.label),
            &CheckpointPaths::default(),
        )?;
        estimator_sets.push(ests);
        all_used.extend(used);
        data_used.push(pair_data.join("test.mcce").display().to_string());
    }
    let points: Vec<AoaPoint<'_>> = cfg
        .eval
        .aoa_pairs
        .iter()
        .zip(&datasets)
        .zip(&estimator_sets)
        .map(|((pair, ds), ests)| AoaPoint {
            label: pair.label.clone(),
            dataset: ds,
            estimators: ests,
        })
        .collect();
    let noise_seed = derive_seed(cfg.seed, domains::EVAL_NOISE);
    let report = sweep_aoa(&points, cfg.eval.snr_db, noise_seed)?;
    let out = out.unwrap_or_else(|| cfg.paths.report_dir.join("sweep_aoa.csv"));
    finish_report(
        &cfg,
        cfg.seed,
        EvalArtifacts {
            report,
            data: data_used,
            checkpoints: all_used,
        },
        &out,
        "sweep-aoa",
    )
}

// ---------------------------------------------------------------------------
// ingest / report
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn cmd_ingest(
    input: &Path,
    out: &Path,
    normalization: IngestNormalization,
    snr_db: Option<f64>,
    snr_range_db: Option<(f64, f64)>,
    noiseless: bool,
    seed: u64,
    normalize: bool,
) -> Result<()> {
    let snr = match (noiseless, snr_db, snr_range_db) {
        (true, None, None) => SnrMode::Noiseless,
        (false, Some(db), None) => SnrMode::FixedDb(db),
        (false, None, Some((low, high))) => SnrMode::UniformDb { low, high },
        _ => bail!("pick exactly one of --snr-db, --snr-range, --noiseless"),
    };
    let mut ds: Dataset = ingest_external(input, normalization, snr, seed)?;
    let mut scale = 1.0;
    if normalize {
        scale = normalize_dataset(&mut ds)?.scale;
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_dataset(&ds, out)?;
    println!(
        "ingested {} records from {} into {} (scale {scale:.6})",
        ds.len(),
        input.display(),
        out.display()
    );
    Ok(())
}

pub fn cmd_report(input: &Path, format: &str, out: Option<PathBuf>) -> Result<()> {
    let report = parse_report_csv(input)?;
    match format {
        "table" => {
            print!("{}", format_report_table(&report));
        }
        "csv" | "plot-data" => {
            let out =
                out.ok_or_else(|| anyhow::anyhow!("--out is required for --format {format}"))?;
            let fmt = if format == "csv" {
                ReportFormat::Csv
            } else {
                ReportFormat::PlotData
            };
            emit_report(&report, &out, fmt)?;
            println!("wrote {}", out.display());
        }
        other => bail!("unknown format `{other}` (use table, csv or plot-data)"),
    }
    Ok(())
}
