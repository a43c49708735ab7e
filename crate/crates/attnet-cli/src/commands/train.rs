use std::path::PathBuf;

use attnet::error::Result;
use attnet::model::Variant;
use attnet::snapshot::{save_snapshot, SnapshotMeta};
use attnet::train::{
    parse_grid_file, select_hyperparameters, train, TrainConfig, TrainOutcome, TrainReport,
};

use super::{parse_variant, write_json, CorpusArgs};

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Run config file (flat key = value TOML). Defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config file's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config file's variant: full, no-projection, per-target.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Output directory for snapshot.atn, report.json (and grid.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Grid file: config keys with candidate arrays; runs exhaustive search.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Worker threads for grid points.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(serde::Serialize)]
struct GridReport<'a> {
    best_index: usize,
    runs: &'a [TrainReport],
}

pub fn run(args: TrainArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    log::info!(
        "corpus loaded: {} train / {} val / {} test docs, {} targets, vocab {}",
        corpus.train.len(),
        corpus.val.len(),
        corpus.test.len(),
        corpus.targets.len(),
        corpus.vocab.len()
    );

    let base = match &args.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    let apply_overrides = |mut cfg: TrainConfig| -> TrainConfig {
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if let Some(variant) = args.variant {
            cfg.variant = variant;
        }
        cfg
    };

    let outcome: TrainOutcome;
    let mut grid_runs: Option<(usize, Vec<TrainReport>)> = None;
    if let Some(grid_path) = &args.grid {
        let grid: Vec<TrainConfig> = parse_grid_file(grid_path)?
            .into_iter()
            .map(apply_overrides)
            .collect();
        log::info!("grid search over {} configurations, jobs={}", grid.len(), args.jobs);
        let selection = select_hyperparameters(&grid, &corpus, args.jobs, &|i, report| {
            log::info!(
                "grid point {i}: best_val_f={:.2} at epoch {}",
                report.best_val_f,
                report.best_epoch
            );
        })?;
        log::info!("grid winner: point {}", selection.best_index);
        grid_runs = Some((selection.best_index, selection.runs));
        outcome = selection.best;
    } else {
        let cfg = apply_overrides(base);
        outcome = train(&corpus, &cfg, &mut |stat| {
            println!("epoch={} loss={} val_f={}", stat.epoch, stat.loss, stat.val_f);
        })?;
    }

    std::fs::create_dir_all(&args.out)?;
    let snapshot_path = args.out.join("snapshot.atn");
    let model_cfg = outcome
        .report
        .config
        .to_model_config(corpus.vocab.len(), corpus.targets.len());
    save_snapshot(
        &snapshot_path,
        &outcome.model,
        &SnapshotMeta {
            model: model_cfg,
            train: Some(outcome.report.config.clone()),
            vocab_hash: corpus.vocab.content_hash(),
            target_hash: corpus.targets.content_hash(),
            best_epoch: Some(outcome.report.best_epoch),
            best_val_f: Some(outcome.report.best_val_f),
        },
    )?;

    let mut report = outcome.report;
    // File name only: report bytes stay identical across output directories.
    report.snapshot_path = Some("snapshot.atn".to_string());
    write_json(&args.out.join("report.json"), &report)?;
    if let Some((best_index, runs)) = &grid_runs {
        write_json(
            &args.out.join("grid.json"),
            &GridReport {
                best_index: *best_index,
                runs,
            },
        )?;
    }
    log::info!(
        "best epoch {} with val_f={:.2}; snapshot at {}",
        report.best_epoch,
        report.best_val_f,
        snapshot_path.display()
    );
    Ok(())
}
