use std::path::PathBuf;

use attnet::error::Result;
use attnet::eval::{build_report, evaluate_instances, text_summary};
use attnet::fsutil::write_atomic;
use attnet::snapshot::load_snapshot;

use super::{verify_hashes, write_json, CorpusArgs, SplitArg};

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    /// Model snapshot produced by `attnet train`.
    #[arg(long)]
    pub snapshot: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Which split to evaluate.
    #[arg(long, value_enum)]
    pub split: SplitArg,
    /// Output directory for metrics.json and summary.txt.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let (manifest, model) = load_snapshot(&args.snapshot)?;
    let corpus = args.corpus.load()?;
    verify_hashes(&manifest, &corpus)?;

    let docs = args.split.docs(&corpus);
    let evals = evaluate_instances(&model, docs, &corpus.targets, manifest.model.capacity)?;
    let report = build_report(&evals, &corpus.targets, args.split.name())?;

    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("metrics.json"), &report)?;
    let summary = text_summary(&report);
    write_atomic(&args.out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}
