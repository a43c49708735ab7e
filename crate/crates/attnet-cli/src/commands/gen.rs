use std::path::PathBuf;

use attnet::corpus::synth::{gen_synthetic, SynthSpec};
use attnet::error::Result;

#[derive(clap::Args, Debug)]
pub struct GenArgs {
    /// Output directory for the corpus files and manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub targets: usize,
    /// Total word inventory (triggers + sentiment + filler).
    #[arg(long, default_value_t = 64)]
    pub vocab: usize,
    #[arg(long, default_value_t = 500)]
    pub train_docs: usize,
    #[arg(long, default_value_t = 100)]
    pub val_docs: usize,
    #[arg(long, default_value_t = 200)]
    pub test_docs: usize,
    /// Trigger tokens emitted per mention.
    #[arg(long, default_value_t = 3)]
    pub signal_strength: usize,
    /// Probability a mention uses the target's implicit trigger words.
    #[arg(long, default_value_t = 0.2)]
    pub implicit_prob: f64,
    /// Probability a document mentions a second target.
    #[arg(long, default_value_t = 0.2)]
    pub multi_target_prob: f64,
    /// Shared sentiment words whose meaning flips per target (0..=4).
    #[arg(long, default_value_t = 2)]
    pub flip_subset: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: GenArgs) -> Result<()> {
    let spec = SynthSpec {
        targets: args.targets,
        vocab_words: args.vocab,
        train_docs: args.train_docs,
        val_docs: args.val_docs,
        test_docs: args.test_docs,
        signal_strength: args.signal_strength,
        implicit_prob: args.implicit_prob,
        multi_target_prob: args.multi_target_prob,
        flip_subset: args.flip_subset,
        seed: args.seed,
    };
    let manifest = gen_synthetic(&spec, &args.out)?;
    for (split, count) in &manifest.docs_written {
        println!("{split}: {count} docs");
    }
    println!(
        "targets: {}, sentiment words: {} ({} flipped), filler words: {}",
        manifest.targets.len(),
        manifest.sentiment_words.len(),
        manifest.sentiment_words.iter().filter(|w| w.flips).count(),
        manifest.filler_words
    );
    println!("manifest: {}", args.out.join("manifest.json").display());
    Ok(())
}
