//! Synthetic corpus generator.
//!
//! Each target owns disjoint trigger words (an explicit set and an implicit
//! set), so target detection is solvable by construction. Sentiment is
//! carried by a shared pool of sentiment words; a configurable subset of them
//! flips meaning per target, so the same word can signal positive for one
//! target and negative for another. Labels are derivable from the emitted
//! tokens by construction.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::corpus::Polarity;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::numeric::Rng;

const EXPLICIT_TRIGGERS: usize = 3;
const IMPLICIT_TRIGGERS: usize = 2;
const SENTIMENT_WORDS: usize = 6; // first half base-positive, second half base-negative
const SENT_TOKENS_PER_MENTION: usize = 2;
/// Probability that a sentiment draw is forced to a flipped word when one is
/// eligible; keeps target-conditioned words frequent enough to matter.
const FLIP_DRAW_BIAS: f64 = 0.85;

#[derive(Clone, Debug, Serialize)]
pub struct SynthSpec {
    pub targets: usize,
    /// Total word inventory (triggers + sentiment + filler).
    pub vocab_words: usize,
    pub train_docs: usize,
    pub val_docs: usize,
    pub test_docs: usize,
    /// Trigger tokens emitted per mention.
    pub signal_strength: usize,
    /// Probability a mention uses the target's implicit trigger set.
    pub implicit_prob: f64,
    /// Probability a document mentions a second target (same polarity).
    pub multi_target_prob: f64,
    /// How many shared sentiment words flip meaning per target (0..=4).
    pub flip_subset: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            targets: 4,
            vocab_words: 64,
            train_docs: 500,
            val_docs: 100,
            test_docs: 200,
            signal_strength: 3,
            implicit_prob: 0.2,
            multi_target_prob: 0.2,
            flip_subset: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SentimentWordInfo {
    pub word: String,
    pub base: Polarity,
    pub flips: bool,
    /// Resolved meaning of this word for each target, in target order.
    pub meaning_per_target: Vec<Polarity>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthManifest {
    pub spec: SynthSpec,
    pub targets: Vec<String>,
    pub explicit_triggers: Vec<Vec<String>>,
    pub implicit_triggers: Vec<Vec<String>>,
    pub sentiment_words: Vec<SentimentWordInfo>,
    pub filler_words: usize,
    pub docs_written: BTreeMap<String, usize>,
}

/// Word inventory shared by the generator and by test oracles.
pub struct Inventory {
    pub targets: Vec<String>,
    pub explicit: Vec<Vec<String>>,
    pub implicit: Vec<Vec<String>>,
    pub sentiment: Vec<String>,
    /// flips[w] says whether sentiment word w is target-dependent.
    pub flips: Vec<bool>,
    pub filler: Vec<String>,
}

impl Inventory {
    /// Base polarity of sentiment word `w`.
    pub fn base_polarity(&self, w: usize) -> Polarity {
        if w < SENTIMENT_WORDS / 2 {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    /// Meaning of sentiment word `w` for a given target: flipped words
    /// alternate by (target + w) parity.
    pub fn meaning(&self, w: usize, target: usize) -> Polarity {
        let base = self.base_polarity(w);
        if self.flips[w] && (target + w) % 2 == 1 {
            match base {
                Polarity::Positive => Polarity::Negative,
                Polarity::Negative => Polarity::Positive,
                Polarity::Neutral => Polarity::Neutral,
            }
        } else {
            base
        }
    }
}

fn validate(spec: &SynthSpec) -> Result<()> {
    if spec.targets == 0 {
        return Err(Error::usage("synthetic spec needs at least one target"));
    }
    if spec.signal_strength == 0 {
        return Err(Error::usage("signal_strength must be >= 1"));
    }
    if spec.flip_subset > 4 {
        return Err(Error::usage(
            "flip_subset must be <= 4 so each polarity keeps a target-independent word",
        ));
    }
    for (name, p) in [
        ("implicit_prob", spec.implicit_prob),
        ("multi_target_prob", spec.multi_target_prob),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::usage(format!("{name} must be in [0, 1]")));
        }
    }
    let needed = spec.targets * (EXPLICIT_TRIGGERS + IMPLICIT_TRIGGERS) + SENTIMENT_WORDS + 2;
    if spec.vocab_words < needed {
        return Err(Error::usage(format!(
            "vocab_words {} too small for triggers: need at least {needed}",
            spec.vocab_words
        )));
    }
    Ok(())
}

pub fn build_inventory(spec: &SynthSpec) -> Result<Inventory> {
    validate(spec)?;
    let targets: Vec<String> = (0..spec.targets).map(|j| format!("target{j}")).collect();
    let explicit: Vec<Vec<String>> = (0..spec.targets)
        .map(|j| (0..EXPLICIT_TRIGGERS).map(|k| format!("trg{j}x{k}")).collect())
        .collect();
    let implicit: Vec<Vec<String>> = (0..spec.targets)
        .map(|j| (0..IMPLICIT_TRIGGERS).map(|k| format!("trg{j}i{k}")).collect())
        .collect();
    let sentiment: Vec<String> = (0..SENTIMENT_WORDS).map(|w| format!("sent{w}")).collect();
    // Flips alternate between the positive and negative base pools.
    let flip_order = [0usize, 3, 1, 4];
    let mut flips = vec![false; SENTIMENT_WORDS];
    for &w in flip_order.iter().take(spec.flip_subset) {
        flips[w] = true;
    }
    let filler_count =
        spec.vocab_words - spec.targets * (EXPLICIT_TRIGGERS + IMPLICIT_TRIGGERS) - SENTIMENT_WORDS;
    let filler: Vec<String> = (0..filler_count).map(|k| format!("fill{k}")).collect();
    Ok(Inventory {
        targets,
        explicit,
        implicit,
        sentiment,
        flips,
        filler,
    })
}

#[derive(Serialize)]
struct DocOut<'a> {
    id: String,
    text: String,
    labels: BTreeMap<&'a str, &'static str>,
}

fn gen_split(
    spec: &SynthSpec,
    inv: &Inventory,
    split: &str,
    n_docs: usize,
) -> Result<String> {
    let mut rng = Rng::stream(spec.seed, &format!("synth/{split}"));
    let mut lines = String::new();
    for n in 0..n_docs {
        // Round-robin (target, polarity) base assignment guarantees every
        // (target, outcome) category has members in every split.
        let t0 = n % spec.targets;
        let polarity = Polarity::ALL[(n / spec.targets) % 3];
        let mut mentioned = vec![t0];
        if spec.targets > 1 && rng.chance(spec.multi_target_prob) {
            mentioned.push((t0 + 1 + rng.below(spec.targets - 1)) % spec.targets);
        }

        let mut tokens: Vec<&str> = Vec::new();
        for &t in &mentioned {
            let set = if rng.chance(spec.implicit_prob) {
                &inv.implicit[t]
            } else {
                &inv.explicit[t]
            };
            for _ in 0..spec.signal_strength {
                tokens.push(rng.pick(set));
            }
        }

        if polarity != Polarity::Neutral {
            // Words whose meaning matches the polarity for every mentioned
            // target; always non-empty because each polarity keeps at least
            // one target-independent word.
            let eligible: Vec<usize> = (0..SENTIMENT_WORDS)
                .filter(|&w| mentioned.iter().all(|&t| inv.meaning(w, t) == polarity))
                .collect();
            let flipped_eligible: Vec<usize> =
                eligible.iter().copied().filter(|&w| inv.flips[w]).collect();
            debug_assert!(!eligible.is_empty());
            for _ in 0..SENT_TOKENS_PER_MENTION {
                let w = if !flipped_eligible.is_empty() && rng.chance(FLIP_DRAW_BIAS) {
                    *rng.pick(&flipped_eligible)
                } else {
                    *rng.pick(&eligible)
                };
                tokens.push(&inv.sentiment[w]);
            }
        }

        for _ in 0..2 + rng.below(3) {
            tokens.push(rng.pick(&inv.filler));
        }
        rng.shuffle(&mut tokens);

        let mut labels = BTreeMap::new();
        for &t in &mentioned {
            labels.insert(inv.targets[t].as_str(), polarity.as_str());
        }
        let doc = DocOut {
            id: format!("{split}-{n:05}"),
            text: tokens.join(" "),
            labels,
        };
        lines.push_str(&serde_json::to_string(&doc)?);
        lines.push('\n');
    }
    Ok(lines)
}

/// Generates train/val/test JSONL files, the targets file, and a manifest
/// documenting the word inventory. Byte-identical output for a fixed seed.
pub fn gen_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<SynthManifest> {
    let inv = build_inventory(spec)?;

    let mut docs_written = BTreeMap::new();
    for (split, n) in [
        ("train", spec.train_docs),
        ("val", spec.val_docs),
        ("test", spec.test_docs),
    ] {
        let lines = gen_split(spec, &inv, split, n)?;
        write_atomic(&out_dir.join(format!("{split}.jsonl")), lines.as_bytes())?;
        docs_written.insert(split.to_string(), n);
    }

    let mut targets_txt = inv.targets.join("\n");
    targets_txt.push('\n');
    write_atomic(&out_dir.join("targets.txt"), targets_txt.as_bytes())?;

    let sentiment_words = (0..SENTIMENT_WORDS)
        .map(|w| SentimentWordInfo {
            word: inv.sentiment[w].clone(),
            base: inv.base_polarity(w),
            flips: inv.flips[w],
            meaning_per_target: (0..spec.targets).map(|t| inv.meaning(w, t)).collect(),
        })
        .collect();
    let manifest = SynthManifest {
        spec: spec.clone(),
        targets: inv.targets.clone(),
        explicit_triggers: inv.explicit.clone(),
        implicit_triggers: inv.implicit.clone(),
        sentiment_words,
        filler_words: inv.filler.len(),
        docs_written,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&out_dir.join("manifest.json"), manifest_json.as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{expand_instances, load_corpus, Corpus, CorpusConfig, Document};
    use std::collections::HashSet;
    use std::fs;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            targets: 2,
            vocab_words: 24,
            train_docs: 120,
            val_docs: 30,
            test_docs: 60,
            flip_subset: 1,
            seed: 42,
            ..SynthSpec::default()
        }
    }

    fn generate(spec: &SynthSpec) -> (tempfile::TempDir, Corpus, SynthManifest) {
        let dir = tempfile::tempdir().unwrap();
        let manifest = gen_synthetic(spec, dir.path()).unwrap();
        let corpus = load_corpus(dir.path(), &CorpusConfig::default()).unwrap();
        (dir, corpus, manifest)
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let spec = small_spec();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        gen_synthetic(&spec, d1.path()).unwrap();
        gen_synthetic(&spec, d2.path()).unwrap();
        for name in ["train.jsonl", "val.jsonl", "test.jsonl", "targets.txt", "manifest.json"] {
            let a = fs::read(d1.path().join(name)).unwrap();
            let b = fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs across runs");
        }
    }

    #[test]
    fn manifest_counts_match_emitted_lines() {
        let spec = small_spec();
        let dir = tempfile::tempdir().unwrap();
        let manifest = gen_synthetic(&spec, dir.path()).unwrap();
        for (split, count) in &manifest.docs_written {
            let text = fs::read_to_string(dir.path().join(format!("{split}.jsonl"))).unwrap();
            assert_eq!(text.lines().count(), *count);
        }
    }

    #[test]
    fn too_small_vocabulary_is_rejected() {
        let spec = SynthSpec {
            vocab_words: 10,
            ..small_spec()
        };
        assert!(matches!(
            gen_synthetic(&spec, Path::new("/nonexistent-unused")),
            Err(Error::Usage(_))
        ));
    }

    /// Bag-of-words TD oracle: target present iff any of its trigger words
    /// occurs. With disjoint triggers this is exact on every split.
    fn td_oracle_accuracy(corpus: &Corpus, inv: &Inventory, docs: &[Document]) -> f64 {
        let mut trigger_sets: Vec<HashSet<usize>> = Vec::new();
        for t in 0..inv.targets.len() {
            let set = inv.explicit[t]
                .iter()
                .chain(&inv.implicit[t])
                .filter_map(|w| corpus.vocab.lookup(w))
                .collect();
            trigger_sets.push(set);
        }
        let instances = expand_instances(docs, &corpus.targets);
        let correct = instances
            .iter()
            .filter(|inst| {
                let doc = &docs[inst.doc];
                let predicted = doc.tokens.iter().any(|tok| trigger_sets[inst.target].contains(tok));
                predicted == inst.present
            })
            .count();
        correct as f64 / instances.len() as f64
    }

    #[test]
    fn flip_zero_makes_td_oracle_exact() {
        let spec = SynthSpec {
            flip_subset: 0,
            ..small_spec()
        };
        let inv = build_inventory(&spec).unwrap();
        let (_dir, corpus, _) = generate(&spec);
        for docs in [&corpus.train, &corpus.val, &corpus.test] {
            assert_eq!(td_oracle_accuracy(&corpus, &inv, docs), 1.0);
        }
    }

    /// PC oracles learned from train-split co-occurrence counts by brute
    /// force. The per-target oracle keys votes by (target, word); the pooled
    /// oracle collapses targets. Evaluated on present test instances.
    fn pc_oracle_accuracies(spec: &SynthSpec) -> (f64, f64) {
        let inv = build_inventory(spec).unwrap();
        let (_dir, corpus, _) = generate(spec);
        let sent_idx: Vec<Option<usize>> = (0..SENTIMENT_WORDS)
            .map(|w| corpus.vocab.lookup(&inv.sentiment[w]))
            .collect();
        let word_of = |tok: usize| sent_idx.iter().position(|&s| s == Some(tok));

        // votes[target][word] and pooled[word]: (positive count, negative count)
        let n_t = corpus.targets.len();
        let mut votes = vec![vec![(0i64, 0i64); SENTIMENT_WORDS]; n_t];
        let mut pooled = vec![(0i64, 0i64); SENTIMENT_WORDS];
        for inst in expand_instances(&corpus.train, &corpus.targets) {
            let Some(pol) = inst.polarity else { continue };
            if pol == Polarity::Neutral {
                continue;
            }
            for &tok in &corpus.train[inst.doc].tokens {
                if let Some(w) = word_of(tok) {
                    let slot = &mut votes[inst.target][w];
                    let pslot = &mut pooled[w];
                    if pol == Polarity::Positive {
                        slot.0 += 1;
                        pslot.0 += 1;
                    } else {
                        slot.1 += 1;
                        pslot.1 += 1;
                    }
                }
            }
        }

        let predict = |counts: &[(i64, i64)], doc: &Document| -> Polarity {
            let mut score = 0i64;
            for &tok in &doc.tokens {
                if let Some(w) = word_of(tok) {
                    let (p, n) = counts[w];
                    score += (p > n) as i64 - (n > p) as i64;
                }
            }
            match score.cmp(&0) {
                std::cmp::Ordering::Greater => Polarity::Positive,
                std::cmp::Ordering::Less => Polarity::Negative,
                std::cmp::Ordering::Equal => Polarity::Neutral,
            }
        };

        let mut per_target = (0usize, 0usize);
        let mut pooled_acc = (0usize, 0usize);
        for inst in expand_instances(&corpus.test, &corpus.targets) {
            let Some(pol) = inst.polarity else { continue };
            let doc = &corpus.test[inst.doc];
            per_target.1 += 1;
            pooled_acc.1 += 1;
            if predict(&votes[inst.target], doc) == pol {
                per_target.0 += 1;
            }
            if predict(&pooled, doc) == pol {
                pooled_acc.0 += 1;
            }
        }
        (
            per_target.0 as f64 / per_target.1 as f64,
            pooled_acc.0 as f64 / pooled_acc.1 as f64,
        )
    }

    #[test]
    fn flipped_word_separates_per_target_from_pooled_oracle() {
        let (per_target, pooled) = pc_oracle_accuracies(&small_spec());
        assert_eq!(per_target, 1.0, "per-target oracle must be exact");
        assert!(pooled < 1.0, "pooled oracle should miss flipped words, got {pooled}");
    }

    #[test]
    fn every_category_is_populated_in_every_split() {
        let spec = SynthSpec::default();
        let (_dir, corpus, _) = generate(&spec);
        for docs in [&corpus.train, &corpus.val, &corpus.test] {
            for t in 0..corpus.targets.len() {
                for pol in Polarity::ALL {
                    assert!(
                        docs.iter().any(|d| d.labels.get(&t) == Some(&pol)),
                        "missing ({t}, {pol}) in a split"
                    );
                }
                assert!(docs.iter().any(|d| !d.labels.contains_key(&t)));
            }
        }
    }
}
