//! Structural contracts of the model: masked-attention normalization, weight
//! tying, variant equivalences, and permutation behavior.

use attnet::corpus::Polarity;
use attnet::model::params::GradientSet;
use attnet::model::{backward, build_model, forward, init_params, Model, ModelConfig, Variant};
use attnet::numeric::Rng;
use attnet::train::instance_loss;

fn config(variant: Variant) -> ModelConfig {
    ModelConfig {
        d: 4,
        k_td: 3,
        k_pc: 2,
        lambda: 0.4,
        window: 3,
        capacity: 8,
        variant,
        n_voc: 12,
        n_target: 3,
    }
}

#[test]
fn attention_contracts_over_random_forward_passes() {
    let mut rng = Rng::stream(77, "contract-probes");
    for trial in 0..200 {
        let lambda = if trial % 3 == 0 { 0.0 } else { rng.uniform() * 0.95 };
        let cfg = ModelConfig {
            lambda,
            ..config(if trial % 2 == 0 { Variant::Full } else { Variant::NoProjection })
        };
        let store = init_params(&cfg, 1000 + trial as u64).unwrap();
        let valid = 1 + rng.below(cfg.capacity);
        let mut tokens = vec![0usize; cfg.capacity];
        for t in tokens.iter_mut().take(valid) {
            *t = 1 + rng.below(cfg.n_voc - 1);
        }
        let target = rng.below(cfg.n_target);
        let trace = forward(&store, &tokens, valid, target).unwrap();

        for attn in trace
            .td_attn
            .iter()
            .chain(&trace.pc_attn)
            .chain(&trace.pc_mixed_attn)
        {
            let valid_sum: f64 = trace.valid.iter().map(|&p| attn[p]).sum();
            assert!(
                (valid_sum - 1.0).abs() < 1e-10,
                "trial {trial}: attention sums to {valid_sum}"
            );
            for pos in valid..cfg.capacity {
                assert_eq!(attn[pos], 0.0, "trial {trial}: padded position attended");
            }
        }
        if lambda == 0.0 {
            for (a, b) in trace.pc_attn.iter().zip(&trace.pc_mixed_attn) {
                assert_eq!(a, b, "trial {trial}: lambda = 0 must leave b_p == a_p");
            }
        }
    }
}

#[test]
fn tying_means_every_layer_sees_an_embedding_update() {
    // One storage per logical matrix: scaling a word's A_td column must move
    // the attention scores at every TD layer of the next pass.
    let cfg = config(Variant::Full);
    let mut store = init_params(&cfg, 5).unwrap();
    let tokens = vec![2, 3, 4, 0, 0, 0, 0, 0];
    let before = forward(&store, &tokens, 3, 1).unwrap();
    for r in 0..cfg.d {
        let v = store.a_td.get(r, 3);
        store.a_td.set(r, 3, v * 10.0);
    }
    let after = forward(&store, &tokens, 3, 1).unwrap();
    for k in 0..cfg.k_td {
        assert_ne!(
            before.td_attn[k][1], after.td_attn[k][1],
            "layer {k} did not observe the update"
        );
    }
}

#[test]
fn full_with_identity_projections_matches_no_projection_bitwise() {
    // One-hot-column init makes square projections exactly the identity, so a
    // fresh full-variant store must be forward-equal to the no-projection
    // store from the same seed, bit for bit.
    let full_cfg = config(Variant::Full);
    let nop_cfg = config(Variant::NoProjection);
    for seed in [1u64, 2, 3, 99] {
        let full = init_params(&full_cfg, seed).unwrap();
        let nop = init_params(&nop_cfg, seed).unwrap();
        let tokens = vec![5, 2, 9, 2, 0, 0, 0, 0];
        for target in 0..3 {
            let a = forward(&full, &tokens, 4, target).unwrap();
            let b = forward(&nop, &tokens, 4, target).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.td_probs), bits(&b.td_probs), "seed {seed}");
            assert_eq!(bits(&a.pc_probs), bits(&b.pc_probs), "seed {seed}");
            assert_eq!(bits(&a.td_final), bits(&b.td_final), "seed {seed}");
            assert_eq!(bits(&a.pc_final), bits(&b.pc_final), "seed {seed}");
        }
    }
}

#[test]
fn single_target_full_matches_no_projection_first_pass() {
    let mut cfg = config(Variant::Full);
    cfg.n_target = 1;
    let mut nop = cfg.clone();
    nop.variant = Variant::NoProjection;
    let a = init_params(&cfg, 42).unwrap();
    let b = init_params(&nop, 42).unwrap();
    let tokens = vec![1, 7, 3, 0, 0, 0, 0, 0];
    let ta = forward(&a, &tokens, 3, 0).unwrap();
    let tb = forward(&b, &tokens, 3, 0).unwrap();
    assert_eq!(
        ta.td_probs.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        tb.td_probs.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(
        ta.pc_probs.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        tb.pc_probs.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn permuting_tokens_permutes_attention_and_preserves_heads() {
    // Bag-of-words: with window = 1 both heads are permutation-invariant and
    // attention vectors permute along with the tokens. With window > 1 the
    // TD head stays invariant (no moving average on the TD side).
    let mut cfg = config(Variant::Full);
    cfg.window = 1;
    let store = init_params(&cfg, 13).unwrap();
    let tokens = vec![2, 5, 7, 9, 0, 0, 0, 0];
    let permuted = vec![9, 2, 7, 5, 0, 0, 0, 0];
    // permutation p: old position -> new position for the 4 valid slots
    let perm = [1usize, 3, 2, 0];

    let a = forward(&store, &tokens, 4, 0).unwrap();
    let b = forward(&store, &permuted, 4, 0).unwrap();
    for (va, vb) in a.td_attn.iter().zip(&b.td_attn).chain(a.pc_mixed_attn.iter().zip(&b.pc_mixed_attn)) {
        for (old, &new) in perm.iter().enumerate() {
            assert!(
                (va[old] - vb[new]).abs() < 1e-12,
                "attention did not permute with tokens"
            );
        }
    }
    for (x, y) in a.td_probs.iter().zip(&b.td_probs) {
        assert!((x - y).abs() < 1e-10);
    }
    for (x, y) in a.pc_probs.iter().zip(&b.pc_probs) {
        assert!((x - y).abs() < 1e-10);
    }

    // Window 3: TD head still permutation-invariant.
    let mut cfg3 = config(Variant::Full);
    cfg3.window = 3;
    let store3 = init_params(&cfg3, 13).unwrap();
    let a3 = forward(&store3, &tokens, 4, 0).unwrap();
    let b3 = forward(&store3, &permuted, 4, 0).unwrap();
    for (x, y) in a3.td_probs.iter().zip(&b3.td_probs) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn per_target_stores_do_not_alias() {
    let mut cfg = config(Variant::PerTarget);
    cfg.n_target = 5;
    let mut model = build_model(&cfg, 3).unwrap();
    assert_eq!(model.stores().len(), 5);
    let before: Vec<Vec<f64>> = model.stores().iter().map(|s| s.b.as_slice().to_vec()).collect();
    // Step store 0 only; the others must not move.
    let store0 = &mut model.stores_mut()[0];
    let mut grads = GradientSet::zeros_like(store0);
    grads.b.fill(1.0);
    store0.apply_gradients(&grads, 0.1, 0.0, 0.0).unwrap();
    let after: Vec<Vec<f64>> = model.stores().iter().map(|s| s.b.as_slice().to_vec()).collect();
    assert_ne!(before[0], after[0]);
    for t in 1..5 {
        assert_eq!(before[t], after[t], "store {t} moved");
    }
}

#[test]
fn parameter_count_formula_at_d100() {
    let cfg = ModelConfig {
        d: 100,
        k_td: 4,
        k_pc: 8,
        lambda: 0.1,
        window: 3,
        capacity: 10,
        variant: Variant::Full,
        n_voc: 10,
        n_target: 3,
    };
    let store = init_params(&cfg, 0).unwrap();
    let (d, nt, nv) = (100usize, 3usize, 10usize);
    assert_eq!(
        store.trainable_param_count(),
        d * nt + 4 * d * nv + 2 * nt * d * d + 2 * d * d + 5 * d
    );
}

#[test]
fn absent_instance_ignores_pc_parameter_perturbations_exactly() {
    // For an absent target, the loss and every gradient entry outside the
    // PC families' zero blocks must be exactly unchanged when PC-side
    // parameters are perturbed.
    let cfg = config(Variant::Full);
    let mut store = init_params(&cfg, 21).unwrap();
    let tokens = vec![4, 6, 2, 0, 0, 0, 0, 0];

    let loss_and_grads = |s: &attnet::model::ParamStore| {
        let trace = forward(s, &tokens, 3, 2).unwrap();
        let loss = instance_loss(&trace.td_probs, &trace.pc_probs, false, None).unwrap();
        let grads = backward(s, &trace, false, None).unwrap();
        (loss, grads)
    };
    let (loss_before, grads_before) = loss_and_grads(&store);

    // Perturb every PC-side family.
    for name in ["W_pc", "H_pc", "A_pc", "C_pc", "V_pc[2]"] {
        let m = store.matrix_mut(name).unwrap();
        let v = m.as_mut_slice();
        v[0] += 10.0;
        v[v.len() - 1] -= 3.0;
    }
    let (loss_after, grads_after) = loss_and_grads(&store);

    assert_eq!(loss_before.to_bits(), loss_after.to_bits());
    let mut before_flat: Vec<(String, Vec<u64>)> = Vec::new();
    grads_before.for_each(|n, m| {
        before_flat.push((n.to_string(), m.as_slice().iter().map(|x| x.to_bits()).collect()))
    });
    let mut i = 0;
    grads_after.for_each(|n, m| {
        assert_eq!(before_flat[i].0, n);
        let bits: Vec<u64> = m.as_slice().iter().map(|x| x.to_bits()).collect();
        assert_eq!(before_flat[i].1, bits, "gradient family {n} changed");
        i += 1;
    });
    // And the PC families' gradients are zero blocks.
    grads_after.for_each(|n, m| {
        if n.contains("_pc") || n.contains("V_pc") {
            assert!(m.as_slice().iter().all(|&x| x == 0.0), "{n} not a zero block");
        }
    });
}

#[test]
fn degenerate_inputs_flow_through_model_paths() {
    // All-null documents attend over one null slot and still produce valid
    // gradients for both model families.
    for variant in [Variant::Full, Variant::NoProjection] {
        let cfg = config(variant);
        let store = init_params(&cfg, 8).unwrap();
        let tokens = vec![0usize; cfg.capacity];
        let trace = forward(&store, &tokens, 0, 0).unwrap();
        assert!(trace.degenerate);
        assert_eq!(trace.td_attn[0][0], 1.0);
        let g = backward(&store, &trace, false, None).unwrap();
        let mut finite = true;
        g.for_each(|_, m| finite &= m.first_non_finite().is_none());
        assert!(finite);
    }
}

#[test]
fn single_model_is_send() {
    fn assert_send<T: Send>() {}
    assert_send::<Model>();
}
