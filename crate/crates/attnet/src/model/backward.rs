//! Exact analytic gradients of the per-instance loss.
//!
//! The loss is -log y_t[label] for target detection plus, when the target is
//! present, -log y_p[polarity]. Polarity errors backpropagate through the PC
//! layers into the TD handoff and through the prior-attention path (the
//! moving average is linear; its adjoint is the transposed window sum
//! followed by the renormalization quotient rule), and from there into every
//! TD parameter. For absent targets the PC term is masked, so PC-side
//! gradients are exactly zero.

use crate::corpus::Polarity;
use crate::error::{Error, Result};
use crate::model::config::Variant;
use crate::model::forward::{ForwardTrace, TD_ABSENT, TD_PRESENT};
use crate::model::params::{GradientSet, ParamStore};

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// dL/d(pre-activation) for s = sigmoid(pre): upstream * s * (1 - s).
fn sigmoid_backward(upstream: &[f64], activated: &[f64]) -> Vec<f64> {
    upstream
        .iter()
        .zip(activated)
        .map(|(&g, &s)| g * s * (1.0 - s))
        .collect()
}

/// Softmax backward over the compact (valid-position) attention vector.
fn softmax_backward(attn: &[f64], upstream: &[f64]) -> Vec<f64> {
    let inner: f64 = upstream.iter().zip(attn).map(|(g, a)| g * a).sum();
    attn.iter()
        .zip(upstream)
        .map(|(&a, &g)| a * (g - inner))
        .collect()
}

/// Gradient of the per-instance loss with respect to every unfrozen
/// parameter. `trace` must come from `forward` on the same store and inputs.
pub fn backward(
    store: &ParamStore,
    trace: &ForwardTrace,
    present: bool,
    polarity: Option<Polarity>,
) -> Result<GradientSet> {
    if present != polarity.is_some() {
        return Err(Error::usage(
            "inconsistent labels: polarity must be given iff the target is present",
        ));
    }
    let cfg = &store.config;
    if trace.td_query.len() != cfg.k_td || trace.pc_query.len() != cfg.k_pc {
        return Err(Error::usage("trace does not match the store's layer counts"));
    }
    let target = trace.target;
    let valid = &trace.valid;
    let n_valid = valid.len();
    let d = cfg.d;
    let learn_proj = cfg.variant == Variant::Full;

    let mut g = GradientSet::zeros_like(store);

    // TD head: d(loss)/d(logits) = y - onehot.
    let td_class = if present { TD_PRESENT } else { TD_ABSENT };
    let mut d_td_logits = trace.td_probs.clone();
    d_td_logits[td_class] -= 1.0;
    g.w_td.add_outer(&d_td_logits, &trace.td_final, 1.0);
    let mut d_td_final = store.w_td.matvec_t(&d_td_logits)?;

    // Per-layer additive attention gradient arriving through the prior path.
    let mut d_attn_prior = vec![0.0; n_valid];

    let mut dmem_pc_in = vec![vec![0.0; d]; n_valid];
    let mut dmem_pc_out = vec![vec![0.0; d]; n_valid];
    let pc_active = polarity.is_some();

    if let Some(pol) = polarity {
        let mut d_pc_logits = trace.pc_probs.clone();
        d_pc_logits[pol.index()] -= 1.0;
        g.w_pc.add_outer(&d_pc_logits, &trace.pc_final, 1.0);
        let d_pc_final = store.w_pc.matvec_t(&d_pc_logits)?;

        // Accumulated gradient on the smoothed prior, summed over PC layers.
        let mut d_prior = vec![0.0; n_valid];
        // Gradient wrt the pre-activation of the current layer.
        let mut d_pre = sigmoid_backward(&d_pc_final, &trace.pc_final);

        for k in (0..cfg.k_pc).rev() {
            let z_k = &trace.pc_query[k];
            g.h_pc.add_outer(&d_pre, z_k, 1.0);
            let mut dz = store.h_pc.matvec_t(&d_pre)?;

            // o_k = sum_i b_i cp_i
            let mixed = &trace.pc_mixed_attn[k];
            let mut d_mixed = vec![0.0; n_valid];
            for (vi, &pos) in valid.iter().enumerate() {
                d_mixed[vi] = dot(&d_pre, &trace.mem_pc_out[vi]);
                axpy(&mut dmem_pc_out[vi], mixed[pos], &d_pre);
            }

            // b = (1 - lambda) a_p + lambda prior
            let d_attn: Vec<f64> = d_mixed.iter().map(|&x| (1.0 - cfg.lambda) * x).collect();
            for (dp, &dm) in d_prior.iter_mut().zip(&d_mixed) {
                *dp += cfg.lambda * dm;
            }

            let attn_compact: Vec<f64> = valid.iter().map(|&p| trace.pc_attn[k][p]).collect();
            let d_scores = softmax_backward(&attn_compact, &d_attn);
            for (vi, ds) in d_scores.iter().enumerate() {
                axpy(&mut dz, *ds, &trace.mem_pc_in[vi]);
                axpy(&mut dmem_pc_in[vi], *ds, z_k);
            }

            if k > 0 {
                // z_k = sigmoid(pre_{k-1})
                d_pre = sigmoid_backward(&dz, z_k);
            } else {
                // z_1 is the TD handoff.
                for (t, &x) in d_td_final.iter_mut().zip(&dz) {
                    *t += x;
                }
            }
        }

        // prior = renormalize(movavg(abar)): quotient rule, then the adjoint
        // of the shrink-window mean, then 1/K_td into every TD layer.
        let abar_compact: Vec<f64> = valid.iter().map(|&p| trace.td_avg_attn[p]).collect();
        let prior_compact: Vec<f64> = valid.iter().map(|&p| trace.prior[p]).collect();
        let h = cfg.window / 2;
        let mut pre_norm = vec![0.0; n_valid];
        for i in 0..n_valid {
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(n_valid - 1);
            pre_norm[i] = abar_compact[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        }
        let total: f64 = pre_norm.iter().sum();
        let inner: f64 = d_prior.iter().zip(&prior_compact).map(|(a, b)| a * b).sum();
        let mut d_avg = vec![0.0; n_valid];
        for i in 0..n_valid {
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(n_valid - 1);
            let d_window = (d_prior[i] - inner) / total / (hi - lo + 1) as f64;
            for slot in d_avg.iter_mut().take(hi + 1).skip(lo) {
                *slot += d_window;
            }
        }
        for (slot, &x) in d_attn_prior.iter_mut().zip(&d_avg) {
            *slot = x / cfg.k_td as f64;
        }
    }

    // TD layers, deepest first.
    let mut dmem_td_in = vec![vec![0.0; d]; n_valid];
    let mut dmem_td_out = vec![vec![0.0; d]; n_valid];
    let mut d_query_next = d_td_final;
    for k in (0..cfg.k_td).rev() {
        let u_next = if k + 1 < cfg.k_td {
            &trace.td_query[k + 1]
        } else {
            &trace.td_final
        };
        let d_pre = sigmoid_backward(&d_query_next, u_next);
        let u_k = &trace.td_query[k];
        g.h_td.add_outer(&d_pre, u_k, 1.0);
        let mut du = store.h_td.matvec_t(&d_pre)?;

        let attn_full = &trace.td_attn[k];
        let mut d_attn = vec![0.0; n_valid];
        for (vi, &pos) in valid.iter().enumerate() {
            d_attn[vi] = dot(&d_pre, &trace.mem_td_out[vi]) + d_attn_prior[vi];
            axpy(&mut dmem_td_out[vi], attn_full[pos], &d_pre);
        }
        let attn_compact: Vec<f64> = valid.iter().map(|&p| attn_full[p]).collect();
        let d_scores = softmax_backward(&attn_compact, &d_attn);
        for (vi, ds) in d_scores.iter().enumerate() {
            axpy(&mut du, *ds, &trace.mem_td_in[vi]);
            axpy(&mut dmem_td_in[vi], *ds, u_k);
        }
        d_query_next = du;
    }
    g.b.add_to_col(target, &d_query_next);

    // Scatter per-position memory gradients into the embedding columns and,
    // for the full variant, the projection matrices. Embedding gradients
    // accumulate only at columns of words present in the instance.
    for (vi, &pos) in valid.iter().enumerate() {
        let word = trace.tokens[pos];
        if learn_proj {
            let v_td = &store.v_td[target];
            g.v_td[target].add_outer(&dmem_td_in[vi], &store.a_td.col(word), 1.0);
            g.a_td.add_to_col(word, &v_td.matvec_t(&dmem_td_in[vi])?);
            g.v_td[target].add_outer(&dmem_td_out[vi], &store.c_td.col(word), 1.0);
            g.c_td.add_to_col(word, &v_td.matvec_t(&dmem_td_out[vi])?);
            if pc_active {
                let v_pc = &store.v_pc[target];
                g.v_pc[target].add_outer(&dmem_pc_in[vi], &store.a_pc.col(word), 1.0);
                g.a_pc.add_to_col(word, &v_pc.matvec_t(&dmem_pc_in[vi])?);
                g.v_pc[target].add_outer(&dmem_pc_out[vi], &store.c_pc.col(word), 1.0);
                g.c_pc.add_to_col(word, &v_pc.matvec_t(&dmem_pc_out[vi])?);
            }
        } else {
            g.a_td.add_to_col(word, &dmem_td_in[vi]);
            g.c_td.add_to_col(word, &dmem_td_out[vi]);
            if pc_active {
                g.a_pc.add_to_col(word, &dmem_pc_in[vi]);
                g.c_pc.add_to_col(word, &dmem_pc_out[vi]);
            }
        }
    }

    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::forward::forward;
    use crate::model::params::init_params;

    fn config(variant: Variant) -> ModelConfig {
        ModelConfig {
            d: 3,
            k_td: 2,
            k_pc: 2,
            lambda: 0.4,
            window: 3,
            capacity: 5,
            variant,
            n_voc: 7,
            n_target: 2,
        }
    }

    #[test]
    fn inconsistent_labels_are_rejected() {
        let store = init_params(&config(Variant::Full), 1).unwrap();
        let trace = forward(&store, &[2, 3, 0, 0, 0], 2, 0).unwrap();
        assert!(backward(&store, &trace, true, None).is_err());
        assert!(backward(&store, &trace, false, Some(Polarity::Positive)).is_err());
    }

    #[test]
    fn absent_target_leaves_pc_families_at_zero() {
        let store = init_params(&config(Variant::Full), 5).unwrap();
        let trace = forward(&store, &[2, 3, 4, 0, 0], 3, 1).unwrap();
        let g = backward(&store, &trace, false, None).unwrap();
        let all_zero = |m: &crate::numeric::Matrix| m.as_slice().iter().all(|&x| x == 0.0);
        assert!(all_zero(&g.w_pc));
        assert!(all_zero(&g.h_pc));
        assert!(all_zero(&g.a_pc));
        assert!(all_zero(&g.c_pc));
        assert!(g.v_pc.iter().all(|m| all_zero(m)));
        // TD side is live.
        assert!(!all_zero(&g.w_td));
        assert!(!all_zero(&g.b));
    }

    #[test]
    fn frozen_variant_has_zero_projection_gradients() {
        let store = init_params(&config(Variant::NoProjection), 5).unwrap();
        let trace = forward(&store, &[2, 3, 4, 0, 0], 3, 0).unwrap();
        let g = backward(&store, &trace, true, Some(Polarity::Negative)).unwrap();
        for m in g.v_td.iter().chain(&g.v_pc) {
            assert!(m.as_slice().iter().all(|&x| x == 0.0));
        }
    }
}
