pub mod attn;
pub mod eval;
pub mod gen;
pub mod gradcheck;
pub mod train;

use std::path::{Path, PathBuf};

use attnet::corpus::{Corpus, CorpusConfig};
use attnet::error::{Error, Result};
use attnet::fsutil::write_atomic;
use attnet::model::Variant;

/// Corpus-loading flags shared by train/eval/attn.
#[derive(clap::Args, Clone, Debug)]
pub struct CorpusArgs {
    /// Corpus directory holding train/val/test.jsonl and targets.txt.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Target list file overriding <corpus>/targets.txt.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Stopword file (one token per line) replacing the bundled list.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Vocabulary frequency floor (1 keeps all training words).
    #[arg(long, default_value_t = 1)]
    pub freq_floor: usize,
    /// Drop targets with fewer training label entries than this (0 = off).
    #[arg(long, default_value_t = 0)]
    pub min_target_labels: usize,
}

impl CorpusArgs {
    pub fn load(&self) -> Result<Corpus> {
        let cfg = CorpusConfig {
            freq_floor: self.freq_floor,
            stopword_file: self.stopwords.clone(),
            min_target_label_count: self.min_target_labels,
            targets_file: self.targets.clone(),
        };
        attnet::corpus::load_corpus(&self.corpus, &cfg)
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl SplitArg {
    pub fn docs<'a>(&self, corpus: &'a Corpus) -> &'a [attnet::corpus::Document] {
        match self {
            SplitArg::Train => &corpus.train,
            SplitArg::Val => &corpus.val,
            SplitArg::Test => &corpus.test,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Val => "val",
            SplitArg::Test => "test",
        }
    }
}

pub fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::parse(s).map_err(|e| e.to_string())
}

/// Stable-key JSON written atomically.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

/// Checks snapshot corpus hashes, naming the mismatching side.
pub fn verify_hashes(
    manifest: &attnet::snapshot::SnapshotManifest,
    corpus: &Corpus,
) -> Result<()> {
    let vocab_hash = corpus.vocab.content_hash();
    if manifest.vocab_hash != vocab_hash {
        return Err(Error::data(format!(
            "vocabulary hash mismatch: snapshot has {} but corpus gives {vocab_hash}",
            manifest.vocab_hash
        )));
    }
    let target_hash = corpus.targets.content_hash();
    if manifest.target_hash != target_hash {
        return Err(Error::data(format!(
            "target-set hash mismatch: snapshot has {} but corpus gives {target_hash}",
            manifest.target_hash
        )));
    }
    Ok(())
}
