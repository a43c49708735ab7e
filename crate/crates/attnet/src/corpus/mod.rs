//! Corpus file format, vocabulary building, tokenization, and expansion of
//! documents into per-target training instances.
//!
//! A corpus directory holds `train.jsonl`, `val.jsonl`, `test.jsonl` (one
//! document per line: `{"id": ..., "text": ..., "labels": {target: polarity}}`)
//! plus `targets.txt` (one target name per line; line order defines indices).

pub mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Reserved padding symbol, index 0. Never produced by tokenization.
pub const NULL_INDEX: usize = 0;
/// Reserved unknown-word symbol, index 1. Out-of-vocabulary tokens map here.
pub const UNK_INDEX: usize = 1;

pub const NULL_WORD: &str = "<null>";
pub const UNK_WORD: &str = "<unk>";

/// Small bundled stopword list. Deliberately excludes negations, which carry
/// sentiment.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "if", "then", "else", "this", "that", "these", "those",
    "i", "me", "my", "you", "your", "he", "him", "his", "she", "her", "it", "its", "we", "us",
    "our", "they", "them", "their", "is", "are", "was", "were", "be", "been", "being", "am", "do",
    "does", "did", "have", "has", "had", "of", "to", "in", "on", "at", "by", "for", "with",
    "from", "as", "so", "such", "there", "here", "which", "who", "whom", "when", "where", "how",
    "will", "would", "can", "could", "shall", "should", "may", "might", "about", "into", "over",
    "than", "too", "very", "just", "also",
];

/// Sentiment polarity toward a present target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    /// Index into the PC head output (positive, negative, neutral).
    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
            Polarity::Neutral => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            other => Err(Error::data(format!("unknown polarity string {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bidirectional word-index map with the two reserved symbols at the front.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary containing only the reserved null and unknown symbols.
    pub fn reserved() -> Self {
        let mut v = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        v.push(NULL_WORD.to_string());
        v.push(UNK_WORD.to_string());
        v
    }

    fn push(&mut self, word: String) -> usize {
        let idx = self.words.len();
        self.index.insert(word.clone(), idx);
        self.words.push(word);
        idx
    }

    /// Builds from tokenized training documents: words with frequency below
    /// `freq_floor` are left out (they map to the unknown index).
    pub fn build<'a>(token_streams: impl Iterator<Item = &'a [String]>, freq_floor: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut first_seen: Vec<&str> = Vec::new();
        for tokens in token_streams {
            for tok in tokens {
                let c = counts.entry(tok.as_str()).or_insert(0);
                if *c == 0 {
                    first_seen.push(tok.as_str());
                }
                *c += 1;
            }
        }
        let mut vocab = Vocabulary::reserved();
        for word in first_seen {
            if counts[word] >= freq_floor.max(1) {
                vocab.push(word.to_string());
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn lookup(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Index for a token, falling back to the unknown index.
    pub fn lookup_or_unk(&self, word: &str) -> usize {
        self.lookup(word).unwrap_or(UNK_INDEX)
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    /// SHA-256 over the ordered word list; used to pair snapshots with corpora.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update([b'\n']);
        }
        hex_string(&h.finalize())
    }
}

/// Ordered target list; line order in `targets.txt` defines the indices.
#[derive(Clone, Debug)]
pub struct TargetSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl TargetSet {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate target name {name:?}")));
            }
        }
        if names.is_empty() {
            return Err(Error::data("target set is empty"));
        }
        Ok(TargetSet { names, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
        let names: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Self::from_names(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.names {
            h.update(n.as_bytes());
            h.update([b'\n']);
        }
        hex_string(&h.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One corpus document: tokenized text plus its (target -> polarity) labels.
/// Targets absent from the map are absent from the document.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    /// Word indices after tokenization and filtering (unpadded).
    pub tokens: Vec<usize>,
    pub labels: BTreeMap<usize, Polarity>,
}

impl Document {
    /// Documents whose text tokenized to nothing are retained but flagged;
    /// the model attends over a single null slot for them.
    pub fn is_degenerate(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One (document, target) training/evaluation pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Instance {
    pub doc: usize,
    pub target: usize,
    pub present: bool,
    pub polarity: Option<Polarity>,
}

/// Loader configuration.
#[derive(Clone, Debug)]
pub struct CorpusConfig {
    /// Frequency floor for vocabulary inclusion (1 keeps all training words).
    pub freq_floor: usize,
    /// Optional stopword file (one token per line) replacing the bundled list.
    pub stopword_file: Option<PathBuf>,
    /// Drop targets with fewer than this many label entries in the training
    /// split (0 disables). Counts label presence, not surface occurrence.
    pub min_target_label_count: usize,
    /// Target list file; defaults to `targets.txt` inside the corpus dir.
    pub targets_file: Option<PathBuf>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            freq_floor: 1,
            stopword_file: None,
            min_target_label_count: 0,
            targets_file: None,
        }
    }
}

/// A fully loaded corpus: shared vocabulary and target set plus the three
/// splits. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub targets: TargetSet,
    pub train: Vec<Document>,
    pub val: Vec<Document>,
    pub test: Vec<Document>,
}

/// Lowercase, split on Unicode whitespace, strip non-alphanumeric characters
/// from token edges, drop empties and stopwords.
pub fn tokenize(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .filter(|t| !stopwords.contains(*t))
        .map(str::to_string)
        .collect()
}

#[derive(Deserialize)]
struct RawDoc {
    id: String,
    text: String,
    #[serde(default)]
    labels: BTreeMap<String, String>,
}

fn read_split(
    path: &Path,
    targets: &TargetSet,
    stopwords: &HashSet<String>,
) -> Result<Vec<(String, String, Vec<String>, BTreeMap<usize, Polarity>)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDoc = serde_json::from_str(line).map_err(|e| {
            Error::data(format!("{} line {lineno}: malformed document: {e}", path.display()))
        })?;
        if !seen_ids.insert(raw.id.clone()) {
            return Err(Error::data(format!(
                "{} line {lineno}: duplicate document id {:?}",
                path.display(),
                raw.id
            )));
        }
        let mut labels = BTreeMap::new();
        for (target_name, polarity_str) in &raw.labels {
            let target = targets.index_of(target_name).ok_or_else(|| {
                Error::data(format!(
                    "{} line {lineno}: label for unknown target {target_name:?}",
                    path.display()
                ))
            })?;
            let polarity = Polarity::parse(polarity_str).map_err(|e| {
                Error::data(format!("{} line {lineno}: {e}", path.display()))
            })?;
            labels.insert(target, polarity);
        }
        let tokens = tokenize(&raw.text, stopwords);
        out.push((raw.id, raw.text, tokens, labels));
    }
    Ok(out)
}

fn load_stopwords(cfg: &CorpusConfig) -> Result<HashSet<String>> {
    match &cfg.stopword_file {
        None => Ok(DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
            Ok(text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect())
        }
    }
}

/// Loads a corpus directory. The vocabulary is built from the training split
/// only; val/test tokens outside it map to the unknown index.
pub fn load_corpus(dir: &Path, cfg: &CorpusConfig) -> Result<Corpus> {
    let stopwords = load_stopwords(cfg)?;
    let targets_path = cfg
        .targets_file
        .clone()
        .unwrap_or_else(|| dir.join("targets.txt"));
    let original_targets = TargetSet::load(&targets_path)?;

    let train_raw = read_split(&dir.join("train.jsonl"), &original_targets, &stopwords)?;
    let val_raw = read_split(&dir.join("val.jsonl"), &original_targets, &stopwords)?;
    let test_raw = read_split(&dir.join("test.jsonl"), &original_targets, &stopwords)?;

    // Optional target filter: drop targets with too few training labels.
    // `remap[old_index]` gives the surviving target's new index.
    let (targets, remap): (TargetSet, Vec<Option<usize>>) = if cfg.min_target_label_count > 0 {
        let mut counts = vec![0usize; original_targets.len()];
        for (_, _, _, labels) in &train_raw {
            for &t in labels.keys() {
                counts[t] += 1;
            }
        }
        let mut kept = Vec::new();
        let mut remap = vec![None; original_targets.len()];
        for (old, name) in original_targets.names().iter().enumerate() {
            if counts[old] >= cfg.min_target_label_count {
                remap[old] = Some(kept.len());
                kept.push(name.clone());
            }
        }
        (TargetSet::from_names(kept)?, remap)
    } else {
        let remap = (0..original_targets.len()).map(Some).collect();
        (original_targets, remap)
    };

    let vocab = Vocabulary::build(train_raw.iter().map(|(_, _, t, _)| t.as_slice()), cfg.freq_floor);

    let finish = |raw: Vec<(String, String, Vec<String>, BTreeMap<usize, Polarity>)>|
     -> Vec<Document> {
        raw.into_iter()
            .map(|(id, raw_text, tokens, labels)| Document {
                id,
                raw_text,
                tokens: tokens.iter().map(|t| vocab.lookup_or_unk(t)).collect(),
                labels: labels
                    .into_iter()
                    .filter_map(|(t, p)| remap[t].map(|new| (new, p)))
                    .collect(),
            })
            .collect()
    };

    Ok(Corpus {
        train: finish(train_raw),
        val: finish(val_raw),
        test: finish(test_raw),
        vocab,
        targets,
    })
}

/// Expands documents into exactly |docs| x |targets| instances, in doc-major
/// order. A target is present iff it appears in the document's label map.
pub fn expand_instances(docs: &[Document], targets: &TargetSet) -> Vec<Instance> {
    let mut out = Vec::with_capacity(docs.len() * targets.len());
    for (doc_idx, doc) in docs.iter().enumerate() {
        for target in 0..targets.len() {
            let polarity = doc.labels.get(&target).copied();
            out.push(Instance {
                doc: doc_idx,
                target,
                present: polarity.is_some(),
                polarity,
            });
        }
    }
    out
}

/// Fixed-length view of a token sequence: null-padded at the tail, truncated
/// from the head side kept (first `capacity` tokens survive).
pub fn pad_or_truncate(tokens: &[usize], capacity: usize) -> (Vec<usize>, usize) {
    assert!(capacity > 0, "pad_or_truncate requires capacity > 0");
    let valid = tokens.len().min(capacity);
    let mut out = vec![NULL_INDEX; capacity];
    out[..valid].copy_from_slice(&tokens[..valid]);
    (out, valid)
}
