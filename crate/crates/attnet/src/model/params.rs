//! Parameter storage with weight tying.
//!
//! Every logical matrix has exactly one storage slot; stacked layers read the
//! same matrix rather than copies, so an optimizer step on an embedding is
//! observed by every layer of the next forward pass. Projection matrices are
//! per-target and identity-frozen in the no-projection and per-target
//! families.

use crate::error::{Error, Result};
use crate::model::config::{ModelConfig, Variant};
use crate::numeric::adam::{adam_step, AdamState};
use crate::numeric::{Matrix, Rng};

/// Number of target-detection output classes (present, absent).
pub const TD_CLASSES: usize = 2;
/// Number of polarity classes (positive, negative, neutral).
pub const PC_CLASSES: usize = 3;

/// All trainable tensors of one model, plus per-tensor Adam state.
#[derive(Clone, Debug)]
pub struct ParamStore {
    pub config: ModelConfig,
    /// Target embedding, d x n_target.
    pub b: Matrix,
    /// TD input/output word embeddings, d x n_voc.
    pub a_td: Matrix,
    pub c_td: Matrix,
    /// PC input/output word embeddings, d x n_voc.
    pub a_pc: Matrix,
    pub c_pc: Matrix,
    /// Per-target projections, d x d each; identity when frozen.
    pub v_td: Vec<Matrix>,
    pub v_pc: Vec<Matrix>,
    /// Inter-layer maps, d x d.
    pub h_td: Matrix,
    pub h_pc: Matrix,
    /// Prediction heads: 2 x d and 3 x d.
    pub w_td: Matrix,
    pub w_pc: Matrix,
    adam: AdamStates,
}

#[derive(Clone, Debug)]
struct AdamStates {
    b: AdamState,
    a_td: AdamState,
    c_td: AdamState,
    a_pc: AdamState,
    c_pc: AdamState,
    v_td: Vec<AdamState>,
    v_pc: Vec<AdamState>,
    h_td: AdamState,
    h_pc: AdamState,
    w_td: AdamState,
    w_pc: AdamState,
}

/// One gradient matrix per parameter slot; frozen slots stay zero.
#[derive(Clone, Debug)]
pub struct GradientSet {
    pub b: Matrix,
    pub a_td: Matrix,
    pub c_td: Matrix,
    pub a_pc: Matrix,
    pub c_pc: Matrix,
    pub v_td: Vec<Matrix>,
    pub v_pc: Vec<Matrix>,
    pub h_td: Matrix,
    pub h_pc: Matrix,
    pub w_td: Matrix,
    pub w_pc: Matrix,
}

impl GradientSet {
    pub fn zeros_like(store: &ParamStore) -> Self {
        let zeros = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        GradientSet {
            b: zeros(&store.b),
            a_td: zeros(&store.a_td),
            c_td: zeros(&store.c_td),
            a_pc: zeros(&store.a_pc),
            c_pc: zeros(&store.c_pc),
            v_td: store.v_td.iter().map(zeros).collect(),
            v_pc: store.v_pc.iter().map(zeros).collect(),
            h_td: zeros(&store.h_td),
            h_pc: zeros(&store.h_pc),
            w_td: zeros(&store.w_td),
            w_pc: zeros(&store.w_pc),
        }
    }

    /// Visits every gradient matrix with its family name.
    pub fn for_each(&self, mut f: impl FnMut(&str, &Matrix)) {
        f("B", &self.b);
        f("A_td", &self.a_td);
        f("C_td", &self.c_td);
        f("A_pc", &self.a_pc);
        f("C_pc", &self.c_pc);
        for (t, m) in self.v_td.iter().enumerate() {
            f(&format!("V_td[{t}]"), m);
        }
        for (t, m) in self.v_pc.iter().enumerate() {
            f(&format!("V_pc[{t}]"), m);
        }
        f("H_td", &self.h_td);
        f("H_pc", &self.h_pc);
        f("W_td", &self.w_td);
        f("W_pc", &self.w_pc);
    }
}

/// Initializes a parameter store: Gaussian(0, 1) weights from per-tensor
/// streams named by `(seed, tensor)`, one-hot-column projections (identity
/// for square), frozen identity projections for the no-projection family.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParamStore> {
    config.validate()?;
    let d = config.d;
    let gauss = |name: &str, rows: usize, cols: usize| -> Result<Matrix> {
        Matrix::gaussian(rows, cols, 1.0, &mut Rng::stream(seed, name))
    };

    let v_init = || -> Vec<Matrix> {
        (0..config.n_target)
            .map(|_| Matrix::one_hot_columns(d, d))
            .collect()
    };

    let b = gauss("init/B", d, config.n_target)?;
    let a_td = gauss("init/A_td", d, config.n_voc)?;
    let c_td = gauss("init/C_td", d, config.n_voc)?;
    let a_pc = gauss("init/A_pc", d, config.n_voc)?;
    let c_pc = gauss("init/C_pc", d, config.n_voc)?;
    let h_td = gauss("init/H_td", d, d)?;
    let h_pc = gauss("init/H_pc", d, d)?;
    let w_td = gauss("init/W_td", TD_CLASSES, d)?;
    let w_pc = gauss("init/W_pc", PC_CLASSES, d)?;
    let v_td = v_init();
    let v_pc = v_init();

    let state = |m: &Matrix| AdamState::new(m.len());
    let adam = AdamStates {
        b: state(&b),
        a_td: state(&a_td),
        c_td: state(&c_td),
        a_pc: state(&a_pc),
        c_pc: state(&c_pc),
        v_td: v_td.iter().map(state).collect(),
        v_pc: v_pc.iter().map(state).collect(),
        h_td: state(&h_td),
        h_pc: state(&h_pc),
        w_td: state(&w_td),
        w_pc: state(&w_pc),
    };

    Ok(ParamStore {
        config: config.clone(),
        b,
        a_td,
        c_td,
        a_pc,
        c_pc,
        v_td,
        v_pc,
        h_td,
        h_pc,
        w_td,
        w_pc,
        adam,
    })
}

impl ParamStore {
    /// All-zero store (fresh Adam state); used when loading snapshots.
    pub fn zeroed(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let b = Matrix::zeros(d, config.n_target);
        let a_td = Matrix::zeros(d, config.n_voc);
        let c_td = Matrix::zeros(d, config.n_voc);
        let a_pc = Matrix::zeros(d, config.n_voc);
        let c_pc = Matrix::zeros(d, config.n_voc);
        let v_td: Vec<Matrix> = (0..config.n_target).map(|_| Matrix::zeros(d, d)).collect();
        let v_pc = v_td.clone();
        let h_td = Matrix::zeros(d, d);
        let h_pc = Matrix::zeros(d, d);
        let w_td = Matrix::zeros(TD_CLASSES, d);
        let w_pc = Matrix::zeros(PC_CLASSES, d);
        let state = |m: &Matrix| AdamState::new(m.len());
        let adam = AdamStates {
            b: state(&b),
            a_td: state(&a_td),
            c_td: state(&c_td),
            a_pc: state(&a_pc),
            c_pc: state(&c_pc),
            v_td: v_td.iter().map(state).collect(),
            v_pc: v_pc.iter().map(state).collect(),
            h_td: state(&h_td),
            h_pc: state(&h_pc),
            w_td: state(&w_td),
            w_pc: state(&w_pc),
        };
        Ok(ParamStore {
            config: config.clone(),
            b,
            a_td,
            c_td,
            a_pc,
            c_pc,
            v_td,
            v_pc,
            h_td,
            h_pc,
            w_td,
            w_pc,
            adam,
        })
    }

    pub fn projections_frozen(&self) -> bool {
        self.config.variant.projections_frozen()
    }

    /// Count of trainable scalar parameters. Frozen projections do not count.
    pub fn trainable_param_count(&self) -> usize {
        let mut n = self.b.len()
            + self.a_td.len()
            + self.c_td.len()
            + self.a_pc.len()
            + self.c_pc.len()
            + self.h_td.len()
            + self.h_pc.len()
            + self.w_td.len()
            + self.w_pc.len();
        if !self.projections_frozen() {
            n += self.v_td.iter().map(Matrix::len).sum::<usize>();
            n += self.v_pc.iter().map(Matrix::len).sum::<usize>();
        }
        n
    }

    /// One Adam step on every trainable parameter.
    pub fn apply_gradients(
        &mut self,
        grads: &GradientSet,
        lr: f64,
        l1: f64,
        l2: f64,
    ) -> Result<()> {
        adam_step(&mut self.b, &grads.b, &mut self.adam.b, lr, l1, l2)?;
        adam_step(&mut self.a_td, &grads.a_td, &mut self.adam.a_td, lr, l1, l2)?;
        adam_step(&mut self.c_td, &grads.c_td, &mut self.adam.c_td, lr, l1, l2)?;
        adam_step(&mut self.a_pc, &grads.a_pc, &mut self.adam.a_pc, lr, l1, l2)?;
        adam_step(&mut self.c_pc, &grads.c_pc, &mut self.adam.c_pc, lr, l1, l2)?;
        if !self.projections_frozen() {
            for t in 0..self.v_td.len() {
                adam_step(&mut self.v_td[t], &grads.v_td[t], &mut self.adam.v_td[t], lr, l1, l2)?;
                adam_step(&mut self.v_pc[t], &grads.v_pc[t], &mut self.adam.v_pc[t], lr, l1, l2)?;
            }
        }
        adam_step(&mut self.h_td, &grads.h_td, &mut self.adam.h_td, lr, l1, l2)?;
        adam_step(&mut self.h_pc, &grads.h_pc, &mut self.adam.h_pc, lr, l1, l2)?;
        adam_step(&mut self.w_td, &grads.w_td, &mut self.adam.w_td, lr, l1, l2)?;
        adam_step(&mut self.w_pc, &grads.w_pc, &mut self.adam.w_pc, lr, l1, l2)?;
        Ok(())
    }

    /// Visits every parameter matrix with its family name, in snapshot order.
    pub fn for_each(&self, mut f: impl FnMut(&str, &Matrix)) {
        f("B", &self.b);
        f("A_td", &self.a_td);
        f("C_td", &self.c_td);
        f("A_pc", &self.a_pc);
        f("C_pc", &self.c_pc);
        for (t, m) in self.v_td.iter().enumerate() {
            f(&format!("V_td[{t}]"), m);
        }
        for (t, m) in self.v_pc.iter().enumerate() {
            f(&format!("V_pc[{t}]"), m);
        }
        f("H_td", &self.h_td);
        f("H_pc", &self.h_pc);
        f("W_td", &self.w_td);
        f("W_pc", &self.w_pc);
    }

    /// Mutable access to a parameter matrix by family name (snapshot loading,
    /// gradient checking).
    pub fn matrix_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        match name {
            "B" => Some(&mut self.b),
            "A_td" => Some(&mut self.a_td),
            "C_td" => Some(&mut self.c_td),
            "A_pc" => Some(&mut self.a_pc),
            "C_pc" => Some(&mut self.c_pc),
            "H_td" => Some(&mut self.h_td),
            "H_pc" => Some(&mut self.h_pc),
            "W_td" => Some(&mut self.w_td),
            "W_pc" => Some(&mut self.w_pc),
            _ => {
                if let Some(rest) = name.strip_prefix("V_td[") {
                    let idx: usize = rest.strip_suffix(']')?.parse().ok()?;
                    return self.v_td.get_mut(idx);
                }
                if let Some(rest) = name.strip_prefix("V_pc[") {
                    let idx: usize = rest.strip_suffix(']')?.parse().ok()?;
                    return self.v_pc.get_mut(idx);
                }
                None
            }
        }
    }

    /// Name of the first parameter matrix containing a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        let mut found = None;
        self.for_each(|name, m| {
            if found.is_none() && m.first_non_finite().is_some() {
                found = Some(name.to_string());
            }
        });
        found
    }
}

/// A trained or trainable model: one store, or one per target.
#[derive(Clone, Debug)]
pub enum Model {
    Single(ParamStore),
    PerTarget(Vec<ParamStore>),
}

impl Model {
    /// The store responsible for a global target index, plus the target index
    /// local to that store.
    pub fn store_for(&self, target: usize) -> (&ParamStore, usize) {
        match self {
            Model::Single(s) => (s, target),
            Model::PerTarget(stores) => (&stores[target], 0),
        }
    }

    pub fn stores(&self) -> &[ParamStore] {
        match self {
            Model::Single(s) => std::slice::from_ref(s),
            Model::PerTarget(stores) => stores,
        }
    }

    pub fn stores_mut(&mut self) -> &mut [ParamStore] {
        match self {
            Model::Single(s) => std::slice::from_mut(s),
            Model::PerTarget(stores) => stores,
        }
    }

    pub fn variant(&self) -> Variant {
        self.stores()[0].config.variant
    }
}

/// Builds the model family described by `config.variant`. For the per-target
/// family, `config.n_target` stores are created, each serving a single target
/// with its own independent parameters (seeded sub-streams per target).
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    match config.variant {
        Variant::Full | Variant::NoProjection => Ok(Model::Single(init_params(config, seed)?)),
        Variant::PerTarget => {
            let mut stores = Vec::with_capacity(config.n_target);
            for t in 0..config.n_target {
                let store_cfg = ModelConfig {
                    n_target: 1,
                    ..config.clone()
                };
                // Distinct derived seed per target: independent parameters.
                let store_seed = Rng::stream(seed, &format!("per-target/{t}")).next_u64();
                stores.push(init_params(&store_cfg, store_seed)?);
            }
            Ok(Model::PerTarget(stores))
        }
    }
}

pub fn validate_target(config: &ModelConfig, target: usize) -> Result<()> {
    if target >= config.n_target {
        return Err(Error::usage(format!(
            "target index {target} out of range (n_target = {})",
            config.n_target
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(variant: Variant) -> ModelConfig {
        ModelConfig {
            d: 4,
            k_td: 2,
            k_pc: 3,
            lambda: 0.3,
            window: 3,
            capacity: 6,
            variant,
            n_voc: 9,
            n_target: 3,
        }
    }

    #[test]
    fn no_projection_initializes_identity() {
        let store = init_params(&config(Variant::NoProjection), 5).unwrap();
        for v in store.v_td.iter().chain(&store.v_pc) {
            assert_eq!(*v, Matrix::identity(4));
        }
        assert!(store.projections_frozen());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let a = init_params(&config(Variant::Full), 77).unwrap();
        let b = init_params(&config(Variant::Full), 77).unwrap();
        let mut names_a = Vec::new();
        a.for_each(|n, m| names_a.push((n.to_string(), m.as_slice().to_vec())));
        let mut idx = 0;
        b.for_each(|n, m| {
            assert_eq!(names_a[idx].0, n);
            assert_eq!(names_a[idx].1, m.as_slice(), "family {n} differs");
            idx += 1;
        });
    }

    #[test]
    fn trainable_param_count_matches_formula() {
        // d*n_target + 4*d*n_voc + 2*n_target*d^2 + 2*d^2 + 5*d
        let cfg = config(Variant::Full);
        let store = init_params(&cfg, 1).unwrap();
        let (d, nt, nv) = (cfg.d, cfg.n_target, cfg.n_voc);
        let expected = d * nt + 4 * d * nv + 2 * nt * d * d + 2 * d * d + 5 * d;
        assert_eq!(store.trainable_param_count(), expected);

        // Layer counts do not change the count (tying).
        let mut deeper = cfg.clone();
        deeper.k_td = 7;
        deeper.k_pc = 9;
        let store2 = init_params(&deeper, 1).unwrap();
        assert_eq!(store2.trainable_param_count(), expected);

        // The frozen families contribute no trainable entries.
        let frozen = init_params(&config(Variant::NoProjection), 1).unwrap();
        assert_eq!(
            frozen.trainable_param_count(),
            expected - 2 * nt * d * d
        );
    }

    #[test]
    fn per_target_stores_are_independent() {
        let model = build_model(&config(Variant::PerTarget), 9).unwrap();
        let stores = model.stores();
        assert_eq!(stores.len(), 3);
        for s in stores {
            assert_eq!(s.config.n_target, 1);
        }
        // No aliasing: stores drew from distinct streams.
        assert_ne!(stores[0].b.as_slice(), stores[1].b.as_slice());
        assert_ne!(stores[1].a_td.as_slice(), stores[2].a_td.as_slice());
    }

    #[test]
    fn frozen_projections_ignore_gradient_updates() {
        let mut store = init_params(&config(Variant::NoProjection), 3).unwrap();
        let mut grads = GradientSet::zeros_like(&store);
        for g in grads.v_td.iter_mut().chain(grads.v_pc.iter_mut()) {
            g.fill(1.0);
        }
        grads.b.fill(0.5);
        store.apply_gradients(&grads, 0.1, 0.0, 0.0).unwrap();
        for v in store.v_td.iter().chain(&store.v_pc) {
            assert_eq!(*v, Matrix::identity(4));
        }
    }
}
