//! Forward pass: target-detection layers feed the polarity-classification
//! layers through a sigmoid handoff, and the averaged TD attention is mixed
//! into every PC attention vector as a smoothed prior.

use crate::error::{Error, Result};
use crate::model::config::Variant;
use crate::model::params::{validate_target, ParamStore};
use crate::numeric::{sigmoid_scalar, softmax, Matrix};

/// Index of the `present` class in the TD head output.
pub const TD_PRESENT: usize = 0;
/// Index of the `absent` class in the TD head output.
pub const TD_ABSENT: usize = 1;

/// Activations and attention vectors retained for backprop and inspection.
///
/// Attention vectors span the full token sequence: exactly 0 at masked
/// positions, summing to 1 over valid ones. Layer vectors are indexed by
/// layer (0-based); `pc_query[0]` is the TD handoff `td_final`.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub target: usize,
    pub tokens: Vec<usize>,
    /// Positions attended over. Never empty: a document with no valid tokens
    /// degenerates to a single null slot at position 0.
    pub valid: Vec<usize>,
    pub degenerate: bool,
    pub mask: Vec<bool>,

    /// TD query entering each layer: u_1 .. u_{K_t}.
    pub td_query: Vec<Vec<f64>>,
    pub td_attn: Vec<Vec<f64>>,
    pub td_out: Vec<Vec<f64>>,
    /// Mean of the TD attention vectors across layers.
    pub td_avg_attn: Vec<f64>,
    /// Smoothed, renormalized TD average attention (the PC prior).
    pub prior: Vec<f64>,
    /// sigma(H_td u_K + o_K): both the TD head input and the first PC query.
    pub td_final: Vec<f64>,

    pub pc_query: Vec<Vec<f64>>,
    pub pc_attn: Vec<Vec<f64>>,
    pub pc_mixed_attn: Vec<Vec<f64>>,
    pub pc_out: Vec<Vec<f64>>,
    pub pc_final: Vec<f64>,

    pub td_logits: Vec<f64>,
    /// y_t over (present, absent).
    pub td_probs: Vec<f64>,
    pub pc_logits: Vec<f64>,
    /// y_p over (positive, negative, neutral).
    pub pc_probs: Vec<f64>,

    // Per-valid-position embedded memory vectors, cached for backward.
    pub(crate) mem_td_in: Vec<Vec<f64>>,
    pub(crate) mem_td_out: Vec<Vec<f64>>,
    pub(crate) mem_pc_in: Vec<Vec<f64>>,
    pub(crate) mem_pc_out: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Name of the first trace tensor containing a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        let check = |name: &str, v: &[f64]| -> Option<String> {
            v.iter()
                .any(|x| !x.is_finite())
                .then(|| name.to_string())
        };
        for (k, u) in self.td_query.iter().enumerate() {
            if let Some(n) = check(&format!("u[{k}]"), u) {
                return Some(n);
            }
        }
        for (k, a) in self.td_attn.iter().enumerate() {
            if let Some(n) = check(&format!("a_td[{k}]"), a) {
                return Some(n);
            }
        }
        check("td_final", &self.td_final)
            .or_else(|| check("prior", &self.prior))
            .or_else(|| {
                self.pc_query
                    .iter()
                    .enumerate()
                    .find_map(|(k, z)| check(&format!("z[{k}]"), z))
            })
            .or_else(|| check("pc_final", &self.pc_final))
            .or_else(|| check("y_td", &self.td_probs))
            .or_else(|| check("y_pc", &self.pc_probs))
    }
}

/// Softmax over the valid positions only, scattered back to full length with
/// exact zeros elsewhere.
fn masked_softmax(scores: &[f64], valid: &[usize], full_len: usize) -> Result<Vec<f64>> {
    let probs = softmax(scores)?;
    let mut full = vec![0.0; full_len];
    for (p, &pos) in probs.into_iter().zip(valid) {
        full[pos] = p;
    }
    Ok(full)
}

/// Centered moving average over the valid subsequence (window shrinks at the
/// edges), renormalized to sum to 1. Input and output are compact vectors
/// aligned with the valid-position list.
pub fn moving_average_renorm(a: &[f64], window: usize) -> Vec<f64> {
    let n = a.len();
    let h = window / 2;
    let mut g = vec![0.0; n];
    for i in 0..n {
        let lo = i.saturating_sub(h);
        let hi = (i + h).min(n - 1);
        let width = (hi - lo + 1) as f64;
        g[i] = a[lo..=hi].iter().sum::<f64>() / width;
    }
    let sum: f64 = g.iter().sum();
    if sum > 0.0 {
        for x in &mut g {
            *x /= sum;
        }
    }
    g
}

/// Convex mixture of a PC attention vector with the smoothed TD prior:
/// b = (1 - lambda) a_p + lambda f(a_bar). Full-length in/out; masked
/// positions stay exactly zero.
pub fn prior_attention(
    a_pc: &[f64],
    a_bar: &[f64],
    lambda: f64,
    window: usize,
    valid: &[usize],
) -> Vec<f64> {
    let compact: Vec<f64> = valid.iter().map(|&p| a_bar[p]).collect();
    let smoothed = moving_average_renorm(&compact, window);
    let mut out = vec![0.0; a_pc.len()];
    for (vi, &pos) in valid.iter().enumerate() {
        out[pos] = (1.0 - lambda) * a_pc[pos] + lambda * smoothed[vi];
    }
    out
}

fn embed_column(proj: Option<&Matrix>, emb: &Matrix, word: usize) -> Result<Vec<f64>> {
    let col = emb.col(word);
    match proj {
        None => Ok(col),
        Some(v) => v.matvec(&col),
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the full forward pass for one (document, target) pair.
///
/// `tokens` is the padded index sequence; the first `valid_len` positions are
/// real tokens, the tail is null padding. With `valid_len == 0` the pass
/// degenerates to attending over the single null slot at position 0.
pub fn forward(
    store: &ParamStore,
    tokens: &[usize],
    valid_len: usize,
    target: usize,
) -> Result<ForwardTrace> {
    let cfg = &store.config;
    validate_target(cfg, target)?;
    if tokens.is_empty() || tokens.len() > cfg.capacity {
        return Err(Error::usage(format!(
            "token sequence length {} out of range (capacity {})",
            tokens.len(),
            cfg.capacity
        )));
    }
    if valid_len > tokens.len() {
        return Err(Error::usage("valid_len exceeds token sequence length"));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= cfg.n_voc) {
        return Err(Error::usage(format!(
            "token index {bad} out of vocabulary range {}",
            cfg.n_voc
        )));
    }

    let degenerate = valid_len == 0;
    let valid: Vec<usize> = if degenerate {
        vec![0]
    } else {
        (0..valid_len).collect()
    };
    let full_len = tokens.len();
    let mut mask = vec![false; full_len];
    for &p in &valid {
        mask[p] = true;
    }

    let proj_td = match cfg.variant {
        Variant::Full => Some(&store.v_td[target]),
        _ => None,
    };
    let proj_pc = match cfg.variant {
        Variant::Full => Some(&store.v_pc[target]),
        _ => None,
    };

    let words: Vec<usize> = valid.iter().map(|&p| tokens[p]).collect();
    let mut mem_td_in = Vec::with_capacity(words.len());
    let mut mem_td_out = Vec::with_capacity(words.len());
    let mut mem_pc_in = Vec::with_capacity(words.len());
    let mut mem_pc_out = Vec::with_capacity(words.len());
    for &w in &words {
        mem_td_in.push(embed_column(proj_td, &store.a_td, w)?);
        mem_td_out.push(embed_column(proj_td, &store.c_td, w)?);
        mem_pc_in.push(embed_column(proj_pc, &store.a_pc, w)?);
        mem_pc_out.push(embed_column(proj_pc, &store.c_pc, w)?);
    }

    let d = cfg.d;
    let mut td_query = Vec::with_capacity(cfg.k_td);
    let mut td_attn = Vec::with_capacity(cfg.k_td);
    let mut td_out = Vec::with_capacity(cfg.k_td);

    let mut u = store.b.col(target);
    for _ in 0..cfg.k_td {
        let scores: Vec<f64> = mem_td_in.iter().map(|m| dot(&u, m)).collect();
        let attn = masked_softmax(&scores, &valid, full_len)?;
        let mut out = vec![0.0; d];
        for (vi, &pos) in valid.iter().enumerate() {
            let a = attn[pos];
            for (o, &c) in out.iter_mut().zip(&mem_td_out[vi]) {
                *o += a * c;
            }
        }
        let mut pre = store.h_td.matvec(&u)?;
        for (p, &o) in pre.iter_mut().zip(&out) {
            *p += o;
        }
        td_query.push(u);
        td_attn.push(attn);
        td_out.push(out);
        u = pre.iter().map(|&x| sigmoid_scalar(x)).collect();
    }
    let td_final = u;

    let mut td_avg_attn = vec![0.0; full_len];
    for attn in &td_attn {
        for (s, &a) in td_avg_attn.iter_mut().zip(attn) {
            *s += a;
        }
    }
    for s in &mut td_avg_attn {
        *s /= cfg.k_td as f64;
    }
    let prior = {
        let compact: Vec<f64> = valid.iter().map(|&p| td_avg_attn[p]).collect();
        let smoothed = moving_average_renorm(&compact, cfg.window);
        let mut full = vec![0.0; full_len];
        for (vi, &pos) in valid.iter().enumerate() {
            full[pos] = smoothed[vi];
        }
        full
    };

    let mut pc_query = Vec::with_capacity(cfg.k_pc);
    let mut pc_attn = Vec::with_capacity(cfg.k_pc);
    let mut pc_mixed_attn = Vec::with_capacity(cfg.k_pc);
    let mut pc_out = Vec::with_capacity(cfg.k_pc);

    let mut z = td_final.clone();
    for _ in 0..cfg.k_pc {
        let scores: Vec<f64> = mem_pc_in.iter().map(|m| dot(&z, m)).collect();
        let attn = masked_softmax(&scores, &valid, full_len)?;
        let mut mixed = vec![0.0; full_len];
        for &pos in &valid {
            mixed[pos] = (1.0 - cfg.lambda) * attn[pos] + cfg.lambda * prior[pos];
        }
        let mut out = vec![0.0; d];
        for (vi, &pos) in valid.iter().enumerate() {
            let b = mixed[pos];
            for (o, &c) in out.iter_mut().zip(&mem_pc_out[vi]) {
                *o += b * c;
            }
        }
        let mut pre = store.h_pc.matvec(&z)?;
        for (p, &o) in pre.iter_mut().zip(&out) {
            *p += o;
        }
        pc_query.push(z);
        pc_attn.push(attn);
        pc_mixed_attn.push(mixed);
        pc_out.push(out);
        z = pre.iter().map(|&x| sigmoid_scalar(x)).collect();
    }
    let pc_final = z;

    let td_logits = store.w_td.matvec(&td_final)?;
    let td_probs = softmax(&td_logits)?;
    let pc_logits = store.w_pc.matvec(&pc_final)?;
    let pc_probs = softmax(&pc_logits)?;

    Ok(ForwardTrace {
        target,
        tokens: tokens.to_vec(),
        valid,
        degenerate,
        mask,
        td_query,
        td_attn,
        td_out,
        td_avg_attn,
        prior,
        td_final,
        pc_query,
        pc_attn,
        pc_mixed_attn,
        pc_out,
        pc_final,
        td_logits,
        td_probs,
        pc_logits,
        pc_probs,
        mem_td_in,
        mem_td_out,
        mem_pc_in,
        mem_pc_out,
    })
}

/// Recomputes the head distributions from a completed trace.
pub fn predict_heads(store: &ParamStore, trace: &ForwardTrace) -> Result<(Vec<f64>, Vec<f64>)> {
    let y_td = softmax(&store.w_td.matvec(&trace.td_final)?)?;
    let y_pc = softmax(&store.w_pc.matvec(&trace.pc_final)?)?;
    Ok((y_td, y_pc))
}
