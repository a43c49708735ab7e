//! Multi-task objective, the epoch loop with validation-based model
//! selection, and hyperparameter grid search by exhaustive training runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{expand_instances, pad_or_truncate, Corpus, Instance, Polarity};
use crate::error::{Error, Result};
use crate::eval::{evaluate_instances, joint_macro_f};
use crate::model::backward::backward;
use crate::model::config::{ModelConfig, Variant};
use crate::model::forward::{forward, TD_ABSENT, TD_PRESENT};
use crate::model::params::{build_model, Model, ParamStore};
use crate::numeric::Rng;

/// Probabilities are clamped here before logs; keeps the loss finite on
/// saturated softmax outputs while staying below gradient-check tolerance.
pub const PROB_CLAMP: f64 = 1e-12;

/// Every key of the run config file, in the order grid expansion cycles them.
pub const CONFIG_KEYS: &[&str] = &[
    "d",
    "k_td",
    "k_pc",
    "lambda",
    "window",
    "capacity",
    "variant",
    "learning_rate",
    "l1",
    "l2",
    "max_epochs",
    "patience",
    "seed",
    "shuffle",
];

/// Run configuration: model hyperparameters plus the optimization protocol.
/// Field names double as the run-config file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub d: usize,
    pub k_td: usize,
    pub k_pc: usize,
    pub lambda: f64,
    pub window: usize,
    pub capacity: usize,
    pub variant: Variant,
    pub learning_rate: f64,
    pub l1: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 100,
            k_td: 3,
            k_pc: 3,
            lambda: 0.5,
            window: 3,
            capacity: 100,
            variant: Variant::Full,
            learning_rate: 0.01,
            l1: 0.0,
            l2: 0.0,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn to_model_config(&self, n_voc: usize, n_target: usize) -> ModelConfig {
        ModelConfig {
            d: self.d,
            k_td: self.k_td,
            k_pc: self.k_pc,
            lambda: self.lambda,
            window: self.window,
            capacity: self.capacity,
            variant: self.variant,
            n_voc,
            n_target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::usage("learning_rate must be >= 0"));
        }
        if self.l1 < 0.0 || self.l2 < 0.0 {
            return Err(Error::usage("l1 and l2 must be >= 0"));
        }
        if self.max_epochs == 0 {
            return Err(Error::usage("max_epochs must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::usage("patience must be >= 1"));
        }
        // Model-shape fields are validated with placeholder sizes.
        self.to_model_config(2, 1).validate()
    }

    /// Parses a run config file: flat `key = value` TOML with exactly the
    /// documented keys; absent keys take defaults.
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| Error::data(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-instance cross-entropy loss: -log y_t[label], plus -log y_p[polarity]
/// when the target is present. The polarity term plays no role for absent
/// targets.
pub fn instance_loss(
    y_td: &[f64],
    y_pc: &[f64],
    present: bool,
    polarity: Option<Polarity>,
) -> Result<f64> {
    if present != polarity.is_some() {
        return Err(Error::usage(
            "inconsistent labels: polarity must be given iff the target is present",
        ));
    }
    if y_td.len() != 2 || y_pc.len() != 3 {
        return Err(Error::usage("instance_loss expects |y_t| = 2 and |y_p| = 3"));
    }
    let td_class = if present { TD_PRESENT } else { TD_ABSENT };
    let mut loss = -y_td[td_class].max(PROB_CLAMP).ln();
    if let Some(p) = polarity {
        loss -= y_pc[p.index()].max(PROB_CLAMP).ln();
    }
    Ok(loss)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpochStat {
    pub epoch: usize,
    /// Mean per-instance training loss.
    pub loss: f64,
    /// Joint validation macro-F, x100.
    pub val_f: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochStat>,
    pub best_epoch: usize,
    pub best_val_f: f64,
    /// Filled in by callers that persist the best model.
    pub snapshot_path: Option<String>,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// The model as of the best validation epoch.
    pub model: Model,
}

struct PaddedSplit {
    inputs: Vec<(Vec<usize>, usize)>,
}

impl PaddedSplit {
    fn new(docs: &[crate::corpus::Document], capacity: usize) -> Self {
        PaddedSplit {
            inputs: docs
                .iter()
                .map(|d| pad_or_truncate(&d.tokens, capacity))
                .collect(),
        }
    }
}

fn step_instance(
    store: &mut ParamStore,
    inputs: &PaddedSplit,
    inst: &Instance,
    local_target: usize,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let (tokens, valid_len) = &inputs.inputs[inst.doc];
    let trace = forward(store, tokens, *valid_len, local_target)?;
    let loss = instance_loss(&trace.td_probs, &trace.pc_probs, inst.present, inst.polarity)?;
    if !loss.is_finite() {
        let tensor = trace
            .first_non_finite()
            .or_else(|| store.first_non_finite())
            .unwrap_or_else(|| "loss".to_string());
        return Err(Error::numeric(format!(
            "non-finite loss at epoch {epoch} (doc {}, target {}): first non-finite tensor: {tensor}",
            inst.doc, inst.target
        )));
    }
    let grads = backward(store, &trace, inst.present, inst.polarity)?;
    store.apply_gradients(&grads, cfg.learning_rate, cfg.l1, cfg.l2)?;
    Ok(loss)
}

/// Trains on the corpus's train split with per-instance (stochastic) updates,
/// evaluating joint macro-F on the validation split after every epoch and
/// keeping the best model. Stops at `max_epochs` or after `patience` epochs
/// without improvement. Deterministic for a fixed seed.
pub fn train(
    corpus: &Corpus,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStat),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.train.is_empty() || corpus.val.is_empty() {
        return Err(Error::usage("train and validation splits must be nonempty"));
    }
    let model_cfg = cfg.to_model_config(corpus.vocab.len(), corpus.targets.len());
    model_cfg.validate()?;
    let mut model = build_model(&model_cfg, cfg.seed)?;

    let train_inputs = PaddedSplit::new(&corpus.train, cfg.capacity);
    let instances = expand_instances(&corpus.train, &corpus.targets);
    // Per-target stores only see their own target's instances.
    let per_store_instances: Vec<Vec<usize>> = match &model {
        Model::Single(_) => vec![(0..instances.len()).collect()],
        Model::PerTarget(stores) => (0..stores.len())
            .map(|t| {
                instances
                    .iter()
                    .enumerate()
                    .filter(|(_, inst)| inst.target == t)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect(),
    };

    let mut epochs = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_val_f = f64::NEG_INFINITY;
    let mut best_model: Option<Model> = None;
    let mut epochs_since_best = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        let stores = model.stores_mut();
        for (store_idx, store) in stores.iter_mut().enumerate() {
            let mut order = per_store_instances[store_idx].clone();
            if cfg.shuffle {
                let name = if per_store_instances.len() > 1 {
                    format!("train/shuffle/t{store_idx}/e{epoch}")
                } else {
                    format!("train/shuffle/e{epoch}")
                };
                Rng::stream(cfg.seed, &name).shuffle(&mut order);
            }
            let single_store = per_store_instances.len() == 1;
            for i in order {
                let inst = &instances[i];
                let local_target = if single_store { inst.target } else { 0 };
                loss_sum += step_instance(store, &train_inputs, inst, local_target, cfg, epoch)?;
                count += 1;
            }
        }
        let loss = loss_sum / count.max(1) as f64;

        let evals = evaluate_instances(&model, &corpus.val, &corpus.targets, cfg.capacity)?;
        let val_f = joint_macro_f(&evals, corpus.targets.len())?;

        let stat = EpochStat { epoch, loss, val_f };
        on_epoch(&stat);
        epochs.push(stat);

        if val_f > best_val_f {
            best_val_f = val_f;
            best_epoch = epoch;
            best_model = Some(model.clone());
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        report: TrainReport {
            config: cfg.clone(),
            epochs,
            best_epoch,
            best_val_f,
            snapshot_path: None,
        },
        model: best_model.expect("at least one epoch ran"),
    })
}

/// Parses a grid file: same keys as the run config, but any key may hold an
/// array of candidates. The grid is the cross product, cycling keys in
/// `CONFIG_KEYS` order with the last key fastest; candidate order follows the
/// file.
pub fn parse_grid_file(path: &std::path::Path) -> Result<Vec<TrainConfig>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    parse_grid_str(&text)
}

pub fn parse_grid_str(text: &str) -> Result<Vec<TrainConfig>> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| Error::data(format!("grid file: {e}")))?;
    for key in table.keys() {
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::data(format!("grid file: unknown key {key:?}")));
        }
    }
    let mut combos: Vec<toml::Table> = vec![toml::Table::new()];
    for &key in CONFIG_KEYS {
        let Some(value) = table.get(key) else { continue };
        let candidates: Vec<toml::Value> = match value {
            toml::Value::Array(items) => {
                if items.is_empty() {
                    return Err(Error::data(format!("grid file: key {key:?} has no candidates")));
                }
                items.clone()
            }
            v => vec![v.clone()],
        };
        let mut next = Vec::with_capacity(combos.len() * candidates.len());
        for combo in combos {
            for cand in &candidates {
                let mut c = combo.clone();
                c.insert(key.to_string(), cand.clone());
                next.push(c);
            }
        }
        combos = next;
    }
    combos
        .into_iter()
        .map(|t| {
            let cfg: TrainConfig = toml::Value::Table(t)
                .try_into()
                .map_err(|e| Error::data(format!("grid file: {e}")))?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}

pub struct SelectionOutcome {
    pub best_index: usize,
    pub runs: Vec<TrainReport>,
    pub best: TrainOutcome,
}

/// Exhaustive grid search: full training run per grid point, argmax of the
/// best validation macro-F, ties broken by grid order. Grid points run on up
/// to `jobs` worker threads (disjoint state per point).
pub fn select_hyperparameters(
    grid: &[TrainConfig],
    corpus: &Corpus,
    jobs: usize,
    on_point: &(dyn Fn(usize, &TrainReport) + Sync),
) -> Result<SelectionOutcome> {
    if grid.is_empty() {
        return Err(Error::usage("hyperparameter grid is empty"));
    }
    let jobs = jobs.max(1).min(grid.len());
    let results: Mutex<Vec<Option<Result<TrainOutcome>>>> =
        Mutex::new((0..grid.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= grid.len() {
                    break;
                }
                let outcome = train(corpus, &grid[i], &mut |_| {});
                if let Ok(o) = &outcome {
                    on_point(i, &o.report);
                }
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let collected = results.into_inner().unwrap();
    let mut runs = Vec::with_capacity(grid.len());
    let mut outcomes = Vec::with_capacity(grid.len());
    for slot in collected {
        let outcome = slot.expect("every grid point ran")?;
        runs.push(outcome.report.clone());
        outcomes.push(outcome);
    }
    let mut best_index = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.best_val_f > runs[best_index].best_val_f {
            best_index = i;
        }
    }
    let best = outcomes.swap_remove(best_index);
    Ok(SelectionOutcome {
        best_index,
        runs,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{gen_synthetic, SynthSpec};
    use crate::corpus::{load_corpus, CorpusConfig};
    use crate::model::params::init_params;
    use crate::numeric::Rng;

    #[test]
    fn loss_examples() {
        // Absent target: independent of y_p.
        let a = instance_loss(&[0.3, 0.7], &[0.1, 0.8, 0.1], false, None).unwrap();
        let b = instance_loss(&[0.3, 0.7], &[0.98, 0.01, 0.01], false, None).unwrap();
        assert_eq!(a, b);
        assert!((a + 0.7f64.ln()).abs() < 1e-12);

        // Perfect predictions.
        let z = instance_loss(&[1.0, 0.0], &[1.0, 0.0, 0.0], true, Some(Polarity::Positive))
            .unwrap();
        assert_eq!(z, 0.0);

        // Hand-computed: -ln 0.5 - ln 0.5.
        let l = instance_loss(
            &[0.5, 0.5],
            &[0.5, 0.25, 0.25],
            true,
            Some(Polarity::Positive),
        )
        .unwrap();
        assert!((l - 1.3862943611198906).abs() < 1e-6);

        assert!(instance_loss(&[0.5, 0.5], &[0.4, 0.3, 0.3], true, None).is_err());
        assert!(
            instance_loss(&[0.5, 0.5], &[0.4, 0.3, 0.3], false, Some(Polarity::Neutral)).is_err()
        );
    }

    #[test]
    fn loss_decomposes_into_task_terms() {
        let y_td = [0.6, 0.4];
        let y_pc = [0.2, 0.5, 0.3];
        let joint = instance_loss(&y_td, &y_pc, true, Some(Polarity::Negative)).unwrap();
        let td_only = instance_loss(&y_td, &[1.0, 0.0, 0.0], true, Some(Polarity::Positive))
            .unwrap();
        let pc_term = -(y_pc[1].ln());
        assert!((joint - (td_only + pc_term)).abs() < 1e-12);
    }

    #[test]
    fn one_small_step_decreases_instance_loss() {
        // A single Adam step with the analytic gradient at lr = 1e-4 must
        // reduce the loss on that same instance.
        let cfg = TrainConfig {
            d: 4,
            k_td: 2,
            k_pc: 2,
            capacity: 6,
            ..TrainConfig::default()
        };
        let mut rng = Rng::stream(31, "descent");
        for trial in 0..20 {
            let model_cfg = cfg.to_model_config(9, 3);
            let mut store = init_params(&model_cfg, 1000 + trial).unwrap();
            let valid = 1 + rng.below(6);
            let mut tokens = vec![0usize; 6];
            for t in tokens.iter_mut().take(valid) {
                *t = 1 + rng.below(8);
            }
            let target = rng.below(3);
            let present = rng.chance(0.7);
            let polarity = present.then(|| *rng.pick(&Polarity::ALL));

            let trace = forward(&store, &tokens, valid, target).unwrap();
            let before =
                instance_loss(&trace.td_probs, &trace.pc_probs, present, polarity).unwrap();
            let grads = backward(&store, &trace, present, polarity).unwrap();
            store.apply_gradients(&grads, 1e-4, 0.0, 0.0).unwrap();
            let trace2 = forward(&store, &tokens, valid, target).unwrap();
            let after =
                instance_loss(&trace2.td_probs, &trace2.pc_probs, present, polarity).unwrap();
            assert!(
                after < before,
                "trial {trial}: loss went {before} -> {after}"
            );
        }
    }

    fn tiny_corpus(seed: u64) -> (tempfile::TempDir, Corpus) {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            targets: 2,
            vocab_words: 24,
            train_docs: 40,
            val_docs: 12,
            test_docs: 12,
            flip_subset: 1,
            seed,
            ..SynthSpec::default()
        };
        gen_synthetic(&spec, dir.path()).unwrap();
        let corpus = load_corpus(dir.path(), &CorpusConfig::default()).unwrap();
        (dir, corpus)
    }

    fn tiny_train_config() -> TrainConfig {
        TrainConfig {
            d: 6,
            k_td: 2,
            k_pc: 2,
            capacity: 12,
            learning_rate: 0.05,
            max_epochs: 3,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    fn flat_params(model: &Model) -> Vec<f64> {
        let mut out = Vec::new();
        for store in model.stores() {
            store.for_each(|_, m| out.extend_from_slice(m.as_slice()));
        }
        out
    }

    #[test]
    fn training_is_deterministic_under_fixed_seed() {
        let (_dir, corpus) = tiny_corpus(5);
        let cfg = tiny_train_config();
        let a = train(&corpus, &cfg, &mut |_| {}).unwrap();
        let b = train(&corpus, &cfg, &mut |_| {}).unwrap();
        assert_eq!(a.report.epochs.len(), b.report.epochs.len());
        for (x, y) in a.report.epochs.iter().zip(&b.report.epochs) {
            assert_eq!(x.loss.to_bits(), y.loss.to_bits());
            assert_eq!(x.val_f.to_bits(), y.val_f.to_bits());
        }
        assert_eq!(flat_params(&a.model), flat_params(&b.model));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_fixed() {
        let (_dir, corpus) = tiny_corpus(6);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 3,
            patience: 10,
            ..tiny_train_config()
        };
        let outcome = train(&corpus, &cfg, &mut |_| {}).unwrap();
        let model_cfg = cfg.to_model_config(corpus.vocab.len(), corpus.targets.len());
        let fresh = build_model(&model_cfg, cfg.seed).unwrap();
        assert_eq!(flat_params(&outcome.model), flat_params(&fresh));
        let losses: Vec<f64> = outcome.report.epochs.iter().map(|e| e.loss).collect();
        assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");
    }

    #[test]
    fn best_epoch_has_max_validation_f() {
        let (_dir, corpus) = tiny_corpus(8);
        let cfg = TrainConfig {
            max_epochs: 6,
            ..tiny_train_config()
        };
        let outcome = train(&corpus, &cfg, &mut |_| {}).unwrap();
        let max = outcome
            .report
            .epochs
            .iter()
            .map(|e| e.val_f)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(outcome.report.best_val_f, max);
        let best = &outcome.report.epochs[outcome.report.best_epoch - 1];
        assert_eq!(best.val_f, max);
    }

    #[test]
    fn per_target_variant_trains() {
        let (_dir, corpus) = tiny_corpus(9);
        let cfg = TrainConfig {
            variant: Variant::PerTarget,
            max_epochs: 2,
            ..tiny_train_config()
        };
        let outcome = train(&corpus, &cfg, &mut |_| {}).unwrap();
        assert_eq!(outcome.model.stores().len(), corpus.targets.len());
    }

    #[test]
    fn config_file_parsing() {
        let cfg = TrainConfig::from_toml_str(
            "d = 8\nlearning_rate = 0.05\nlambda = 0.1\nvariant = \"no-projection\"\n",
        )
        .unwrap();
        assert_eq!(cfg.d, 8);
        assert_eq!(cfg.learning_rate, 0.05);
        assert_eq!(cfg.variant, Variant::NoProjection);
        assert_eq!(cfg.max_epochs, 50); // default

        assert!(TrainConfig::from_toml_str("bogus_key = 1\n").is_err());
        assert!(TrainConfig::from_toml_str("lambda = 1.0\n").is_err());
    }

    #[test]
    fn grid_expansion_order_and_validation() {
        let grid = parse_grid_str(
            "lambda = [0.0, 0.5]\nlearning_rate = [0.01, 0.05]\nd = 8\n",
        )
        .unwrap();
        assert_eq!(grid.len(), 4);
        // lambda cycles slower than learning_rate (CONFIG_KEYS order).
        assert_eq!(grid[0].lambda, 0.0);
        assert_eq!(grid[0].learning_rate, 0.01);
        assert_eq!(grid[1].lambda, 0.0);
        assert_eq!(grid[1].learning_rate, 0.05);
        assert_eq!(grid[2].lambda, 0.5);
        assert!(grid.iter().all(|c| c.d == 8));

        assert!(parse_grid_str("nope = [1]\n").is_err());
        assert!(parse_grid_str("lambda = []\n").is_err());
    }

    #[test]
    fn grid_selection_prefers_learning_run() {
        let (_dir, corpus) = tiny_corpus(10);
        let base = TrainConfig {
            max_epochs: 3,
            ..tiny_train_config()
        };
        let dead = TrainConfig {
            learning_rate: 0.0,
            ..base.clone()
        };
        let grid = vec![dead, base];
        let selection = select_hyperparameters(&grid, &corpus, 2, &|_, _| {}).unwrap();
        assert_eq!(selection.best_index, 1);
        assert_eq!(selection.runs.len(), 2);

        // Singleton grid returns its only config.
        let single = select_hyperparameters(&grid[1..], &corpus, 1, &|_, _| {}).unwrap();
        assert_eq!(single.best_index, 0);

        let empty: Vec<TrainConfig> = vec![];
        assert!(select_hyperparameters(&empty, &corpus, 1, &|_, _| {}).is_err());
    }
}
