//! Composition of the two heads into 4-outcome decisions and the metric
//! stack: per-category precision/recall/F, macro averages, and one-vs-rest
//! ROC AUC via the rank statistic. Macro values are reported x100.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::{expand_instances, pad_or_truncate, Document, Polarity, TargetSet};
use crate::error::{Error, Result};
use crate::model::forward::{forward, TD_ABSENT, TD_PRESENT};
use crate::model::params::Model;

/// Joint outcome for one (document, target) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Absent,
    Neutral,
    Positive,
    Negative,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::Absent,
        Outcome::Neutral,
        Outcome::Positive,
        Outcome::Negative,
    ];

    pub fn index(self) -> usize {
        match self {
            Outcome::Absent => 0,
            Outcome::Neutral => 1,
            Outcome::Positive => 2,
            Outcome::Negative => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Absent => "absent",
            Outcome::Neutral => "neutral",
            Outcome::Positive => "positive",
            Outcome::Negative => "negative",
        }
    }

    pub fn from_truth(polarity: Option<Polarity>) -> Self {
        match polarity {
            None => Outcome::Absent,
            Some(Polarity::Neutral) => Outcome::Neutral,
            Some(Polarity::Positive) => Outcome::Positive,
            Some(Polarity::Negative) => Outcome::Negative,
        }
    }

    pub fn from_polarity(p: Polarity) -> Self {
        Self::from_truth(Some(p))
    }
}

/// Joint decision rule: absent when the TD head says so, otherwise the argmax
/// polarity. Scores multiply through: score(absent) = y_t[absent],
/// score(polarity c) = y_t[present] * y_p[c], forming a distribution over the
/// four outcomes.
pub fn compose_decision(y_td: &[f64], y_pc: &[f64]) -> Result<(Outcome, [f64; 4])> {
    if y_td.len() != 2 || y_pc.len() != 3 {
        return Err(Error::usage("compose_decision expects |y_t| = 2 and |y_p| = 3"));
    }
    let mut scores = [0.0; 4];
    scores[Outcome::Absent.index()] = y_td[TD_ABSENT];
    for p in Polarity::ALL {
        scores[Outcome::from_polarity(p).index()] = y_td[TD_PRESENT] * y_pc[p.index()];
    }
    let decision = if y_td[TD_ABSENT] > y_td[TD_PRESENT] {
        Outcome::Absent
    } else {
        let mut best = Polarity::Positive;
        for p in Polarity::ALL {
            if y_pc[p.index()] > y_pc[best.index()] {
                best = p;
            }
        }
        Outcome::from_polarity(best)
    };
    Ok((decision, scores))
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Precision, recall, F for one category, as fractions in [0, 1].
/// Conventions: 0 whenever the denominator is 0 (including a category that is
/// never true and never predicted).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CategoryMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl CategoryMetrics {
    fn from_counts(c: Counts) -> Self {
        let precision = if c.tp + c.fp > 0 {
            c.tp as f64 / (c.tp + c.fp) as f64
        } else {
            0.0
        };
        let recall = if c.tp + c.fn_ > 0 {
            c.tp as f64 / (c.tp + c.fn_) as f64
        } else {
            0.0
        };
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        CategoryMetrics {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision,
            recall,
            f,
        }
    }
}

/// Macro-averaged metrics, x100.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MacroMetrics {
    pub f: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Confusion counts per category from (prediction, truth) pairs. Predictions
/// outside the category list still contribute false negatives to the truth's
/// category.
pub fn confusion_counts<C: Ord + Copy>(pairs: &[(C, C)], categories: &[C]) -> BTreeMap<C, Counts> {
    let mut counts: BTreeMap<C, Counts> = categories.iter().map(|&c| (c, Counts::default())).collect();
    for &(pred, truth) in pairs {
        if pred == truth {
            if let Some(c) = counts.get_mut(&truth) {
                c.tp += 1;
            }
        } else {
            if let Some(c) = counts.get_mut(&pred) {
                c.fp += 1;
            }
            if let Some(c) = counts.get_mut(&truth) {
                c.fn_ += 1;
            }
        }
    }
    counts
}

pub fn per_category_metrics<C: Ord + Copy>(
    pairs: &[(C, C)],
    categories: &[C],
) -> BTreeMap<C, CategoryMetrics> {
    confusion_counts(pairs, categories)
        .into_iter()
        .map(|(c, counts)| (c, CategoryMetrics::from_counts(counts)))
        .collect()
}

/// Unweighted mean of per-category precision/recall/F over all given
/// categories, x100.
pub fn macro_metrics<C: Ord + Copy>(pairs: &[(C, C)], categories: &[C]) -> Result<MacroMetrics> {
    if pairs.is_empty() {
        return Err(Error::usage("macro_metrics on empty prediction list"));
    }
    if categories.is_empty() {
        return Err(Error::usage("macro_metrics needs at least one category"));
    }
    let per = per_category_metrics(pairs, categories);
    let n = categories.len() as f64;
    let mut f = 0.0;
    let mut p = 0.0;
    let mut r = 0.0;
    for m in per.values() {
        f += m.f;
        p += m.precision;
        r += m.recall;
    }
    Ok(MacroMetrics {
        f: 100.0 * f / n,
        precision: 100.0 * p / n,
        recall: 100.0 * r / n,
    })
}

/// One-vs-rest ROC AUC from (score, is_positive) pairs via the rank statistic
/// with midranks for ties. `None` when only one class is present. Fraction in
/// [0, 1].
pub fn roc_auc(scored: &[(f64, bool)]) -> Option<f64> {
    let n_pos = scored.iter().filter(|(_, y)| *y).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // 1-based midrank for the tie group [i, j).
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &sorted[i..j] {
            if item.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Per-instance model outputs paired with ground truth.
#[derive(Clone, Debug)]
pub struct InstanceEval {
    pub doc: usize,
    pub target: usize,
    pub td_truth: bool,
    pub polarity_truth: Option<Polarity>,
    pub y_td: Vec<f64>,
    pub y_pc: Vec<f64>,
}

/// Runs the model over every (document, target) instance of a split.
pub fn evaluate_instances(
    model: &Model,
    docs: &[Document],
    targets: &TargetSet,
    capacity: usize,
) -> Result<Vec<InstanceEval>> {
    let mut out = Vec::with_capacity(docs.len() * targets.len());
    for inst in expand_instances(docs, targets) {
        let (store, local_target) = model.store_for(inst.target);
        let (tokens, valid_len) = pad_or_truncate(&docs[inst.doc].tokens, capacity);
        let trace = forward(store, &tokens, valid_len, local_target)?;
        out.push(InstanceEval {
            doc: inst.doc,
            target: inst.target,
            td_truth: inst.present,
            polarity_truth: inst.polarity,
            y_td: trace.td_probs,
            y_pc: trace.pc_probs,
        });
    }
    Ok(out)
}

/// Joint macro-F (x100) over all (target, outcome) categories; the model
/// selection criterion during training.
pub fn joint_macro_f(evals: &[InstanceEval], n_targets: usize) -> Result<f64> {
    let mut pairs = Vec::with_capacity(evals.len());
    for e in evals {
        let (decision, _) = compose_decision(&e.y_td, &e.y_pc)?;
        pairs.push(((e.target, decision), (e.target, Outcome::from_truth(e.polarity_truth))));
    }
    let categories: Vec<(usize, Outcome)> = (0..n_targets)
        .flat_map(|t| Outcome::ALL.into_iter().map(move |o| (t, o)))
        .collect();
    Ok(macro_metrics(&pairs, &categories)?.f)
}

/// Everything reported for one table (joint or a subtask), x100 macro values.
#[derive(Clone, Debug, Serialize)]
pub struct TableReport {
    pub macro_f: f64,
    pub macro_auc: Option<f64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub per_category: Vec<CategoryReport>,
    /// Categories excluded from the AUC average (single-class).
    pub auc_excluded: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CategoryReport {
    pub category: String,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub auc: Option<f64>,
}

fn build_table<C: Ord + Copy>(
    pairs: &[(C, C)],
    scored: &BTreeMap<C, Vec<(f64, bool)>>,
    categories: &[C],
    name_of: impl Fn(&C) -> String,
) -> Result<TableReport> {
    let macros = macro_metrics(pairs, categories)?;
    let per = per_category_metrics(pairs, categories);
    let mut per_category = Vec::new();
    let mut auc_sum = 0.0;
    let mut auc_n = 0usize;
    let mut auc_excluded = Vec::new();
    for c in categories {
        let m = per[c];
        let auc = scored.get(c).and_then(|s| roc_auc(s));
        match auc {
            Some(a) => {
                auc_sum += a;
                auc_n += 1;
            }
            None => auc_excluded.push(name_of(c)),
        }
        per_category.push(CategoryReport {
            category: name_of(c),
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            precision: 100.0 * m.precision,
            recall: 100.0 * m.recall,
            f: 100.0 * m.f,
            auc: auc.map(|a| 100.0 * a),
        });
    }
    Ok(TableReport {
        macro_f: macros.f,
        macro_auc: (auc_n > 0).then(|| 100.0 * auc_sum / auc_n as f64),
        macro_precision: macros.precision,
        macro_recall: macros.recall,
        per_category,
        auc_excluded,
    })
}

/// Full metrics report: the joint 4-outcome task plus both subtasks.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub split: String,
    pub instances: usize,
    pub joint: TableReport,
    pub td_subtask: TableReport,
    pub pc_subtask: TableReport,
}

/// Builds the joint table and the TD/PC subtask tables from per-instance
/// outputs. The PC subtask covers only instances whose true TD label is
/// present; a composed prediction of absent there counts as a miss for the
/// true polarity category.
pub fn build_report(
    evals: &[InstanceEval],
    targets: &TargetSet,
    split: &str,
) -> Result<MetricsReport> {
    let n_targets = targets.len();

    // Joint table.
    let mut joint_pairs = Vec::with_capacity(evals.len());
    let mut joint_scores: BTreeMap<(usize, Outcome), Vec<(f64, bool)>> = BTreeMap::new();
    // TD subtask: categories (target, present|absent) encoded as bool.
    let mut td_pairs = Vec::with_capacity(evals.len());
    let mut td_scores: BTreeMap<(usize, bool), Vec<(f64, bool)>> = BTreeMap::new();
    // PC subtask on truly-present instances; predictions may be Absent.
    let mut pc_pairs: Vec<((usize, Outcome), (usize, Outcome))> = Vec::new();
    let mut pc_scores: BTreeMap<(usize, Outcome), Vec<(f64, bool)>> = BTreeMap::new();

    for e in evals {
        let (decision, scores) = compose_decision(&e.y_td, &e.y_pc)?;
        let truth = Outcome::from_truth(e.polarity_truth);
        joint_pairs.push(((e.target, decision), (e.target, truth)));
        for o in Outcome::ALL {
            joint_scores
                .entry((e.target, o))
                .or_default()
                .push((scores[o.index()], truth == o));
        }

        let td_pred = e.y_td[TD_PRESENT] >= e.y_td[TD_ABSENT];
        td_pairs.push(((e.target, td_pred), (e.target, e.td_truth)));
        for cls in [true, false] {
            let score = if cls { e.y_td[TD_PRESENT] } else { e.y_td[TD_ABSENT] };
            td_scores
                .entry((e.target, cls))
                .or_default()
                .push((score, e.td_truth == cls));
        }

        if e.td_truth {
            pc_pairs.push(((e.target, decision), (e.target, truth)));
            for p in Polarity::ALL {
                let o = Outcome::from_polarity(p);
                pc_scores
                    .entry((e.target, o))
                    .or_default()
                    .push((scores[o.index()], truth == o));
            }
        }
    }

    let joint_categories: Vec<(usize, Outcome)> = (0..n_targets)
        .flat_map(|t| Outcome::ALL.into_iter().map(move |o| (t, o)))
        .collect();
    let td_categories: Vec<(usize, bool)> = (0..n_targets)
        .flat_map(|t| [(t, true), (t, false)])
        .collect();
    let pc_categories: Vec<(usize, Outcome)> = (0..n_targets)
        .flat_map(|t| {
            Polarity::ALL
                .into_iter()
                .map(move |p| (t, Outcome::from_polarity(p)))
        })
        .collect();

    let joint = build_table(&joint_pairs, &joint_scores, &joint_categories, |(t, o)| {
        format!("{}/{}", targets.name(*t), o.as_str())
    })?;
    let td = build_table(&td_pairs, &td_scores, &td_categories, |(t, cls)| {
        format!("{}/{}", targets.name(*t), if *cls { "present" } else { "absent" })
    })?;
    let pc = if pc_pairs.is_empty() {
        // A split with no present instances has no PC subtask rows.
        TableReport {
            macro_f: 0.0,
            macro_auc: None,
            macro_precision: 0.0,
            macro_recall: 0.0,
            per_category: Vec::new(),
            auc_excluded: Vec::new(),
        }
    } else {
        build_table(&pc_pairs, &pc_scores, &pc_categories, |(t, o)| {
            format!("{}/{}", targets.name(*t), o.as_str())
        })?
    };

    Ok(MetricsReport {
        split: split.to_string(),
        instances: evals.len(),
        joint,
        td_subtask: td,
        pc_subtask: pc,
    })
}

/// Flat text summary in table column order: F-score, AUC, Precision, Recall.
pub fn text_summary(report: &MetricsReport) -> String {
    let fmt_auc = |a: Option<f64>| match a {
        Some(v) => format!("{v:.2}"),
        None => "n/a".to_string(),
    };
    let mut s = String::new();
    for (name, table) in [
        ("joint", &report.joint),
        ("td", &report.td_subtask),
        ("pc", &report.pc_subtask),
    ] {
        s.push_str(&format!(
            "{name:<5} F={:.2} AUC={} P={:.2} R={:.2}\n",
            table.macro_f,
            fmt_auc(table.macro_auc),
            table.macro_precision,
            table.macro_recall
        ));
    }
    s
}
