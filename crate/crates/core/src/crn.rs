//! Hierarchical reasoning head: conditional relation units at clip level
//! over frame embeddings, a video-level unit over clip outputs, question
//! fusion, and answer logits.
//!
//! A unit takes n input vectors and a condition vector. For each relation
//! order k it samples t subsets of size k, pools each subset symmetrically
//! (mean ‖ elementwise max), runs the relational sub-network g, fuses with
//! the condition through sub-network p, and averages the t results into one
//! vector per order. Subset choice is deterministic given (seed, unit id);
//! when C(n, k) <= t the subsets are enumerated exhaustively, which makes
//! the unit permutation invariant.

use crate::params::{Binder, ParamStore};
use crate::tensor::{Result, Scalar, Tape, TensorError, Var};
use crate::videograph::ClipPlan;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Unit id of the video-level CRN; clip units use `1 + clip_index`.
pub const VIDEO_UNIT_ID: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrnConfig {
    /// Working width of the hierarchy.
    pub d: usize,
    /// Relation orders to use. `None` derives `{1..min(n-1, k_max)}` from
    /// each unit's arity n (never empty: arity 1 uses `{1}`).
    pub orders: Option<Vec<usize>>,
    pub k_max: usize,
    /// Subsets sampled per order.
    pub t: usize,
    /// Frames per clip.
    pub clip_length: usize,
    /// Hidden width of the relational sub-network g.
    pub g_hidden: usize,
    /// Hidden width of the condition-fusion sub-network p.
    pub p_hidden: usize,
    /// Hidden width of the answer decoder.
    pub decode_hidden: usize,
}

impl Default for CrnConfig {
    fn default() -> Self {
        CrnConfig {
            d: 64,
            orders: None,
            k_max: 4,
            t: 3,
            clip_length: 4,
            g_hidden: 64,
            p_hidden: 64,
            decode_hidden: 64,
        }
    }
}

impl CrnConfig {
    /// Orders effective for a unit of arity n, ascending. Configured orders
    /// larger than n are silently dropped; an explicit set that drops to
    /// empty is an error.
    pub fn effective_orders(&self, n: usize) -> Result<Vec<usize>> {
        let ks: Vec<usize> = match &self.orders {
            Some(list) => {
                let mut ks: Vec<usize> = list.iter().copied().filter(|&k| k >= 1 && k <= n).collect();
                ks.sort_unstable();
                ks.dedup();
                ks
            }
            None => (1..=n.saturating_sub(1).min(self.k_max).max(1)).collect(),
        };
        if ks.is_empty() {
            return Err(TensorError::EmptyInput(format!(
                "no valid relation order for arity {n}"
            )));
        }
        Ok(ks)
    }

    /// Width of one clip unit's concatenated order outputs (fixed because
    /// every clip has exactly `clip_length` slots after padding).
    pub fn clip_orders(&self) -> Result<Vec<usize>> {
        self.effective_orders(self.clip_length)
    }
}

fn binomial_at_least(n: usize, k: usize, limit: u64) -> bool {
    // true if C(n, k) >= limit, without overflow
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c >= limit as u128 {
            return true;
        }
    }
    c >= limit as u128
}

fn enumerate_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // next k-combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Deterministic subset sampling: all `C(n, k)` subsets when there are at
/// most `t` of them, otherwise `t` distinct subsets drawn from a generator
/// seeded by `(seed, unit_id, k, n)`. Subsets are internally sorted and the
/// list is lexicographically sorted.
pub fn sample_subsets(
    n: usize,
    k: usize,
    t: usize,
    seed: u64,
    unit_id: u64,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(TensorError::ShapeMismatch(format!(
            "invalid relation order k={k} for arity n={n}"
        )));
    }
    let t = t.max(1);
    if !binomial_at_least(n, k, t as u64 + 1) {
        return Ok(enumerate_subsets(n, k));
    }
    let mix = seed
        ^ unit_id.wrapping_mul(0x9e3779b97f4a7c15)
        ^ (k as u64).wrapping_mul(0xc2b2ae3d27d4eb4f)
        ^ (n as u64).wrapping_mul(0x165667b19e3779f9);
    let mut rng = ChaCha8Rng::seed_from_u64(mix);
    let mut chosen: BTreeSet<Vec<usize>> = BTreeSet::new();
    while chosen.len() < t {
        let mut subset = rand::seq::index::sample(&mut rng, n, k).into_vec();
        subset.sort_unstable();
        chosen.insert(subset);
    }
    Ok(chosen.into_iter().collect())
}

// ---- parameter registration ----

fn mlp_names(prefix: &str) -> [String; 4] {
    [
        format!("{prefix}.w1"),
        format!("{prefix}.b1"),
        format!("{prefix}.w2"),
        format!("{prefix}.b2"),
    ]
}

fn register_mlp(store: &mut ParamStore, prefix: &str, d_in: usize, hidden: usize, d_out: usize) {
    let [w1, b1, w2, b2] = mlp_names(prefix);
    store.register_matrix(&w1, d_in, hidden);
    store.register_bias(&b1, hidden);
    store.register_matrix(&w2, hidden, d_out);
    store.register_bias(&b2, d_out);
}

/// Registers the CRN-head parameters.
pub fn register_crn_params(store: &mut ParamStore, cfg: &CrnConfig, d_frame: usize, d_q: usize, k_answers: usize) {
    store.register_matrix("crn.proj.frame", d_frame, cfg.d);
    store.register_matrix("crn.proj.question", d_q, cfg.d);
    register_mlp(store, "crn.clip.g", 2 * cfg.d, cfg.g_hidden, cfg.d);
    register_mlp(store, "crn.clip.p", 2 * cfg.d, cfg.p_hidden, cfg.d);
    register_mlp(store, "crn.video.g", 2 * cfg.d, cfg.g_hidden, cfg.d);
    register_mlp(store, "crn.video.p", 2 * cfg.d, cfg.p_hidden, cfg.d);
    let m = cfg
        .clip_orders()
        .expect("clip length >= 1 always yields an order")
        .len();
    store.register_matrix("crn.clip_out_proj", m * cfg.d, cfg.d);
    register_mlp(store, "head", 3 * cfg.d, cfg.decode_hidden, k_answers);
}

/// Registers the MLP-baseline head parameters (no crn.* names).
pub fn register_mlp_head_params(
    store: &mut ParamStore,
    cfg: &CrnConfig,
    d_frame: usize,
    d_q: usize,
    k_answers: usize,
) {
    store.register_matrix("mlp.proj.frame", d_frame, cfg.d);
    store.register_matrix("mlp.proj.question", d_q, cfg.d);
    register_mlp(store, "head", 2 * cfg.d, cfg.decode_hidden, k_answers);
}

// ---- forward ----

fn mlp_forward<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    prefix: &str,
    input: Var,
) -> Result<Var> {
    let [w1, b1, w2, b2] = mlp_names(prefix);
    let (w1, b1) = (binder.leaf(tape, &w1), binder.leaf(tape, &b1));
    let (w2, b2) = (binder.leaf(tape, &w2), binder.leaf(tape, &b2));
    let d_in = tape.value(input).len();
    let row = tape.reshape(input, &[1, d_in])?;
    let hid = tape.matmul(row, w1)?;
    let hid = tape.add(hid, b1)?;
    let hid = tape.elu(hid);
    let out = tape.matmul(hid, w2)?;
    let out = tape.add(out, b2)?;
    let d_out = tape.value(out).len();
    tape.reshape(out, &[d_out])
}

fn linear_project<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    name: &str,
    input: Var,
) -> Result<Var> {
    let w = binder.leaf(tape, name);
    let d_in = tape.value(input).len();
    let row = tape.reshape(input, &[1, d_in])?;
    let out = tape.matmul(row, w)?;
    let d_out = tape.value(out).len();
    tape.reshape(out, &[d_out])
}

/// One conditional relation unit: `inputs` are n vectors of width d, `cond`
/// the condition vector. Returns one vector per effective order, ascending.
#[allow(clippy::too_many_arguments)]
pub fn crn_unit<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    cfg: &CrnConfig,
    level: &str,
    inputs: &[Var],
    cond: Var,
    unit_id: u64,
    subset_seed: u64,
) -> Result<Vec<Var>> {
    if inputs.is_empty() {
        return Err(TensorError::EmptyInput("crn unit with no inputs".into()));
    }
    let n = inputs.len();
    let orders = cfg.effective_orders(n)?;
    let g_prefix = format!("crn.{level}.g");
    let p_prefix = format!("crn.{level}.p");
    let mut outputs = Vec::with_capacity(orders.len());
    for &k in &orders {
        let subsets = sample_subsets(n, k, cfg.t, subset_seed, unit_id)?;
        let mut fused = Vec::with_capacity(subsets.len());
        for subset in &subsets {
            let members: Vec<Var> = subset.iter().map(|&i| inputs[i]).collect();
            let stacked = tape.stack_rows(&members)?;
            let mean = tape.mean_axis(stacked, 0)?;
            let mut mx = members[0];
            for &m in &members[1..] {
                mx = tape.maximum(mx, m)?;
            }
            let pooled = tape.concat(&[mean, mx], 0)?;
            let g = mlp_forward(tape, binder, &g_prefix, pooled)?;
            let g_cond = tape.concat(&[g, cond], 0)?;
            fused.push(mlp_forward(tape, binder, &p_prefix, g_cond)?);
        }
        let stacked = tape.stack_rows(&fused)?;
        outputs.push(tape.mean_axis(stacked, 0)?);
    }
    Ok(outputs)
}

/// Full hierarchy: project frame embeddings and the question to width d, run
/// one clip-level unit per clip window, project each clip's concatenated
/// order outputs back to d, then run the video-level unit over clip vectors
/// and average its order outputs into one video vector.
pub fn hierarchy_forward<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    cfg: &CrnConfig,
    frame_embeddings: Var,
    clip_plan: &ClipPlan,
    q_projected: Var,
    subset_seed: u64,
) -> Result<Var> {
    let proj = binder.leaf(tape, "crn.proj.frame");
    let frames = tape.matmul(frame_embeddings, proj)?;
    let n_frames = tape.value(frames).shape()[0];
    let frame_vecs: Vec<Var> = (0..n_frames)
        .map(|i| tape.row_vec(frames, i))
        .collect::<Result<_>>()?;

    let mut clip_vecs = Vec::with_capacity(clip_plan.clips.len());
    for (ci, clip) in clip_plan.clips.iter().enumerate() {
        let inputs: Vec<Var> = clip.iter().map(|&fi| frame_vecs[fi]).collect();
        let outs = crn_unit(
            tape,
            binder,
            cfg,
            "clip",
            &inputs,
            q_projected,
            1 + ci as u64,
            subset_seed,
        )?;
        let cat = tape.concat(&outs, 0)?;
        clip_vecs.push(linear_project(tape, binder, "crn.clip_out_proj", cat)?);
    }

    let outs = crn_unit(
        tape,
        binder,
        cfg,
        "video",
        &clip_vecs,
        q_projected,
        VIDEO_UNIT_ID,
        subset_seed,
    )?;
    let stacked = tape.stack_rows(&outs)?;
    tape.mean_axis(stacked, 0)
}

/// Projects a raw question embedding to the working width.
pub fn project_question<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    question: &[f32],
    name: &str,
) -> Result<Var> {
    let q: Vec<S> = question.iter().map(|&v| S::from_f32(v)).collect();
    let q = tape.constant(crate::tensor::Tensor::new(vec![1, question.len()], q)?);
    let w = binder.leaf(tape, name);
    let out = tape.matmul(q, w)?;
    let d = tape.value(out).len();
    tape.reshape(out, &[d])
}

/// Answer logits from the video vector and the projected question:
/// `concat(v, q, v ⊙ q)` through a two-layer ELU MLP.
pub fn decode_answer<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    video_vector: Var,
    q_projected: Var,
) -> Result<Var> {
    let prod = tape.mul(video_vector, q_projected)?;
    let fused = tape.concat(&[video_vector, q_projected, prod], 0)?;
    mlp_forward(tape, binder, "head", fused)
}

/// The ablation baseline: summed frame embeddings and the projected question
/// through a two-layer MLP.
pub fn mlp_baseline_head<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    aggregate: Var,
    question: &[f32],
) -> Result<Var> {
    let a_proj = linear_project(tape, binder, "mlp.proj.frame", aggregate)?;
    let q_proj = project_question(tape, binder, question, "mlp.proj.question")?;
    let fused = tape.concat(&[a_proj, q_proj], 0)?;
    mlp_forward(tape, binder, "head", fused)
}
