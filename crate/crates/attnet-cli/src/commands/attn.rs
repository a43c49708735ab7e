use std::path::PathBuf;

use attnet::corpus::{pad_or_truncate, tokenize, Document, Polarity, UNK_INDEX};
use attnet::error::{Error, Result};
use attnet::eval::{compose_decision, Outcome};
use attnet::model::forward;
use attnet::snapshot::load_snapshot;

use super::{verify_hashes, write_json, CorpusArgs, SplitArg};

#[derive(clap::Args, Debug)]
pub struct AttnArgs {
    /// Model snapshot produced by `attnet train`.
    #[arg(long)]
    pub snapshot: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Corpus split to dump (alternative to --input).
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// JSONL file of documents to dump (alternative to --split).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Restrict the dump to one target name.
    #[arg(long)]
    pub target: Option<String>,
    /// Dump at most this many documents.
    #[arg(long, default_value_t = 16)]
    pub limit: usize,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also print a text rendering with 5 attention shade buckets.
    #[arg(long)]
    pub render: bool,
}

#[derive(serde::Serialize)]
struct InstanceDump {
    doc_id: String,
    target: String,
    tokens: Vec<String>,
    /// How many tokens fell outside the vocabulary (mapped to the unknown index).
    oov_tokens: usize,
    td_attn: Vec<Vec<f64>>,
    td_avg_attn: Vec<f64>,
    pc_attn: Vec<Vec<f64>>,
    pc_mixed_attn: Vec<Vec<f64>>,
    y_td: Vec<f64>,
    y_pc: Vec<f64>,
    predicted: String,
    truth: Option<String>,
}

#[derive(serde::Serialize)]
struct AttentionDump {
    snapshot: String,
    instances: Vec<InstanceDump>,
}

#[derive(serde::Deserialize)]
struct RawInputDoc {
    id: String,
    text: String,
    #[serde(default)]
    labels: std::collections::BTreeMap<String, String>,
}

const SHADES: [char; 5] = ['.', ':', '=', '*', '#'];

fn shade(value: f64, max: f64) -> char {
    if max <= 0.0 {
        return SHADES[0];
    }
    let bucket = ((value / max) * 4.0).round() as usize;
    SHADES[bucket.min(4)]
}

fn render_instance(dump: &InstanceDump) -> String {
    let mut s = format!(
        "doc {} / target {} -> {} (truth: {})\n",
        dump.doc_id,
        dump.target,
        dump.predicted,
        dump.truth.as_deref().unwrap_or("?")
    );
    let mut row = |label: String, attn: &[f64]| {
        let max = attn.iter().cloned().fold(0.0, f64::max);
        let cells: Vec<String> = dump
            .tokens
            .iter()
            .zip(attn)
            .map(|(t, &a)| format!("{t}[{}]", shade(a, max)))
            .collect();
        s.push_str(&format!("  {label}: {}\n", cells.join(" ")));
    };
    for (k, attn) in dump.td_attn.iter().enumerate() {
        row(format!("td a[{k}]"), attn);
    }
    row("td avg ".to_string(), &dump.td_avg_attn);
    for (k, attn) in dump.pc_mixed_attn.iter().enumerate() {
        row(format!("pc b[{k}]"), attn);
    }
    s
}

pub fn run(args: AttnArgs) -> Result<()> {
    let (manifest, model) = load_snapshot(&args.snapshot)?;
    let corpus = args.corpus.load()?;
    verify_hashes(&manifest, &corpus)?;

    let docs: Vec<Document> = match (&args.split, &args.input) {
        (Some(split), None) => split.docs(&corpus).to_vec(),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
            let stopwords = attnet::corpus::DEFAULT_STOPWORDS
                .iter()
                .map(|s| s.to_string())
                .collect();
            let mut docs = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawInputDoc = serde_json::from_str(line).map_err(|e| {
                    Error::data(format!("{} line {}: {e}", path.display(), lineno + 1))
                })?;
                let mut labels = std::collections::BTreeMap::new();
                for (name, pol) in &raw.labels {
                    if let Some(t) = corpus.targets.index_of(name) {
                        labels.insert(t, Polarity::parse(pol)?);
                    }
                }
                let tokens = tokenize(&raw.text, &stopwords)
                    .iter()
                    .map(|t| corpus.vocab.lookup_or_unk(t))
                    .collect();
                docs.push(Document {
                    id: raw.id,
                    raw_text: raw.text,
                    tokens,
                    labels,
                });
            }
            docs
        }
        _ => {
            return Err(Error::usage(
                "provide exactly one of --split or --input",
            ))
        }
    };

    let target_filter = match &args.target {
        None => None,
        Some(name) => Some(corpus.targets.index_of(name).ok_or_else(|| {
            Error::usage(format!("unknown target {name:?}"))
        })?),
    };

    let mut instances = Vec::new();
    for doc in docs.iter().take(args.limit) {
        for target in 0..corpus.targets.len() {
            if target_filter.is_some_and(|t| t != target) {
                continue;
            }
            let (store, local_target) = model.store_for(target);
            let (tokens, valid_len) = pad_or_truncate(&doc.tokens, manifest.model.capacity);
            let trace = forward(store, &tokens, valid_len, local_target)?;
            let n = trace.valid.len();
            let compact = |v: &[f64]| trace.valid.iter().map(|&p| v[p]).collect::<Vec<f64>>();
            let (predicted, _) = compose_decision(&trace.td_probs, &trace.pc_probs)?;
            let truth = doc
                .labels
                .get(&target)
                .map(|&p| Outcome::from_polarity(p))
                .or_else(|| (!doc.labels.is_empty() || !doc.raw_text.is_empty()).then_some(Outcome::Absent));
            let words: Vec<String> = trace
                .valid
                .iter()
                .map(|&p| corpus.vocab.word(tokens[p]).to_string())
                .collect();
            debug_assert_eq!(words.len(), n);
            instances.push(InstanceDump {
                doc_id: doc.id.clone(),
                target: corpus.targets.name(target).to_string(),
                tokens: words,
                oov_tokens: trace
                    .valid
                    .iter()
                    .filter(|&&p| tokens[p] == UNK_INDEX)
                    .count(),
                td_attn: trace.td_attn.iter().map(|a| compact(a)).collect(),
                td_avg_attn: compact(&trace.td_avg_attn),
                pc_attn: trace.pc_attn.iter().map(|a| compact(a)).collect(),
                pc_mixed_attn: trace.pc_mixed_attn.iter().map(|a| compact(a)).collect(),
                y_td: trace.td_probs,
                y_pc: trace.pc_probs,
                predicted: predicted.as_str().to_string(),
                truth: truth.map(|o| o.as_str().to_string()),
            });
        }
    }

    let dump = AttentionDump {
        snapshot: args
            .snapshot
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        instances,
    };
    write_json(&args.out, &dump)?;
    if args.render {
        for inst in &dump.instances {
            print!("{}", render_instance(inst));
        }
    }
    log::info!("wrote {} instance dumps to {}", dump.instances.len(), args.out.display());
    Ok(())
}
