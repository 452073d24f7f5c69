//! Scene Graph Encoding Module: per-relation multi-head edge attention over
//! the human-rooted video graph.
//!
//! Each layer updates node j per relation r as
//! `Θ_s·n_j + ‖_h Σ_k α_{j,r,k}^h (Θ_v^h·n_k + Θ_e^h·e_{j,r,k})`, with
//! attention `α = softmax_k LeakyReLU(aᵀ[Θ_v·n_j ‖ Θ_v·n_k ‖ Θ_e·e])`
//! normalized over each node's r-neighborhood. Per-relation results are
//! summed over the relation types incident to the node; nodes with no edges
//! at all pass through the self transform of the root-link relation. Two
//! cascaded layers move information frame → root → frame, so every human
//! root sees every other frame.
//!
//! Two ablation encoders share the interface: a homogeneous variant (one
//! relation bucket for every edge) and a GINE-style variant (no attention,
//! summed `ELU(n_k + W·e)` messages through an MLP).

use crate::params::{Binder, ParamStore};
use crate::scenegraph::Vocabulary;
use crate::tensor::{Result, Scalar, Tape, Tensor, Var};
use crate::videograph::{HumanRoot, VideoGraph};
use serde::{Deserialize, Serialize};

/// How predicates map to relation types (each type gets its own encoder
/// parameters). Root links always form one extra relation type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationGrouping {
    /// One relation type per vocabulary predicate.
    PerPredicate,
    /// Predicates share parameter families: `predicate_to_family[p]` gives
    /// the family of predicate p. Caps parameter count at large vocabularies.
    Families {
        predicate_to_family: Vec<usize>,
        n_families: usize,
    },
}

impl RelationGrouping {
    fn family_of(&self, predicate: usize) -> usize {
        match self {
            RelationGrouping::PerPredicate => predicate,
            RelationGrouping::Families {
                predicate_to_family,
                ..
            } => predicate_to_family[predicate],
        }
    }

    fn n_groups(&self, n_predicates: usize) -> usize {
        match self {
            RelationGrouping::PerPredicate => n_predicates,
            RelationGrouping::Families { n_families, .. } => *n_families,
        }
    }
}

/// Encoder architecture (the GNN-variant ablation axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Per-relation-type multi-head edge attention.
    HetEdgeGat,
    /// Same update with a single relation bucket for every edge.
    EdgeGat,
    /// GINE-style summed messages through an MLP, no attention.
    Gine,
}

/// What a frame contributes to the reasoning head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameEmbeddingMode {
    /// The human root's final embedding (default).
    HumanRoot,
    /// Sum over all of the frame's node embeddings (ablation switch).
    FrameSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgemConfig {
    pub d_node: usize,
    pub d_edge: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub n_layers: usize,
    pub leaky_slope: f64,
    pub use_bbox_features: bool,
    pub relation_grouping: RelationGrouping,
    pub encoder: EncoderKind,
    pub frame_embedding: FrameEmbeddingMode,
}

impl Default for SgemConfig {
    fn default() -> Self {
        SgemConfig {
            d_node: 64,
            d_edge: 32,
            n_heads: 4,
            d_head: 16,
            n_layers: 2,
            leaky_slope: 0.2,
            use_bbox_features: true,
            relation_grouping: RelationGrouping::PerPredicate,
            encoder: EncoderKind::HetEdgeGat,
            frame_embedding: FrameEmbeddingMode::HumanRoot,
        }
    }
}

impl SgemConfig {
    /// Output width of every layer (the self transform maps into the
    /// concatenated head width so the two terms add).
    pub fn d_out(&self) -> usize {
        self.n_heads * self.d_head
    }

    fn layer_input_width(&self, layer: usize) -> usize {
        if layer == 0 {
            self.d_node
        } else {
            self.d_out()
        }
    }

    /// Relation-type count for a predicate vocabulary of the given size,
    /// including the root-link type.
    pub fn n_relation_types(&self, n_predicates: usize) -> usize {
        match self.encoder {
            EncoderKind::HetEdgeGat => self.relation_grouping.n_groups(n_predicates) + 1,
            EncoderKind::EdgeGat | EncoderKind::Gine => 1,
        }
    }

    /// Relation type of a predicate edge / a root link.
    fn relation_of_predicate(&self, predicate: usize) -> usize {
        match self.encoder {
            EncoderKind::HetEdgeGat => self.relation_grouping.family_of(predicate),
            EncoderKind::EdgeGat | EncoderKind::Gine => 0,
        }
    }

    fn relation_of_root_link(&self, n_predicates: usize) -> usize {
        match self.encoder {
            EncoderKind::HetEdgeGat => self.relation_grouping.n_groups(n_predicates),
            EncoderKind::EdgeGat | EncoderKind::Gine => 0,
        }
    }

    /// Relation whose self transform carries nodes with no edges at all.
    /// The root-link type is the one relation guaranteed to exist in every
    /// video graph, so it doubles as the default.
    fn default_relation(&self, n_predicates: usize) -> usize {
        self.relation_of_root_link(n_predicates)
    }
}

/// Directed messages of one relation type: `dst[i]` receives from `src[i]`
/// with edge-feature row `efeat[i]` (an index into the combined edge table,
/// predicates first, root-link last).
#[derive(Debug, Clone, Default)]
pub struct RelMessages {
    pub dst: Vec<usize>,
    pub src: Vec<usize>,
    pub efeat: Vec<usize>,
}

/// A video graph flattened for message passing: class/bbox rows per flat
/// node, per-relation directed message lists, and incidence masks.
#[derive(Debug, Clone)]
pub struct FlatGraph {
    pub n_nodes: usize,
    pub n_frames: usize,
    /// Per node: object class; `n_objects` is the global root's reserved
    /// index, `n_objects + 1` the zero-featured synthetic human.
    pub feature_class: Vec<usize>,
    /// Per node: `[x, y, w, h, area]`, zero for root and synthetic humans.
    pub bbox_rows: Vec<[f32; 5]>,
    /// Frame of each non-root node.
    pub frame_of: Vec<usize>,
    /// Flat index of each frame's human root.
    pub human_flat: Vec<usize>,
    pub root_flat: usize,
    pub rel_messages: Vec<RelMessages>,
    /// Per relation: 1.0 where the node has at least one edge of that type.
    pub incident_mask: Vec<Vec<f32>>,
    /// 1.0 where the node has no edges of any type.
    pub isolated_mask: Vec<f32>,
    pub n_predicates: usize,
}

impl FlatGraph {
    pub fn build(vg: &VideoGraph, vocab: &Vocabulary, cfg: &SgemConfig) -> Self {
        let n_nodes = vg.total_nodes();
        let n_pred = vocab.n_predicates();
        let n_rel = cfg.n_relation_types(n_pred);
        let root_flat = vg.global_root_index();

        let mut feature_class = vec![0usize; n_nodes];
        let mut bbox_rows = vec![[0.0f32; 5]; n_nodes];
        let mut frame_of = vec![0usize; n_nodes.saturating_sub(1)];
        feature_class[root_flat] = vocab.n_objects();

        let mut rel_messages = vec![RelMessages::default(); n_rel];
        let mut incident = vec![vec![0.0f32; n_nodes]; n_rel];

        let mut human_flat = Vec::with_capacity(vg.n_frames());
        for fi in 0..vg.n_frames() {
            let offset = vg.frame_offset(fi);
            let frame = &vg.frames[fi];
            for (pos, node) in frame.nodes.iter().enumerate() {
                let flat = offset + pos;
                feature_class[flat] = node.class_index;
                let b = node.bbox;
                bbox_rows[flat] = [b.x, b.y, b.w, b.h, b.area()];
                frame_of[flat] = fi;
            }
            if matches!(vg.human_roots[fi], HumanRoot::Synthetic) {
                let flat = offset + frame.nodes.len();
                feature_class[flat] = vocab.n_objects() + 1;
                frame_of[flat] = fi;
            }
            human_flat.push(vg.human_root_index(fi));

            let flat_of = |id: u32| {
                offset
                    + frame
                        .nodes
                        .iter()
                        .position(|n| n.node_id == id)
                        .expect("validated edge endpoint")
            };
            for e in &frame.edges {
                let r = cfg.relation_of_predicate(e.predicate_index);
                let (a, b) = (flat_of(e.subject_id), flat_of(e.object_id));
                for (dst, src) in [(a, b), (b, a)] {
                    rel_messages[r].dst.push(dst);
                    rel_messages[r].src.push(src);
                    rel_messages[r].efeat.push(e.predicate_index);
                }
                incident[r][a] = 1.0;
                incident[r][b] = 1.0;
            }
        }
        let root_rel = cfg.relation_of_root_link(n_pred);
        for &h in &human_flat {
            for (dst, src) in [(h, root_flat), (root_flat, h)] {
                rel_messages[root_rel].dst.push(dst);
                rel_messages[root_rel].src.push(src);
                rel_messages[root_rel].efeat.push(n_pred);
            }
            incident[root_rel][h] = 1.0;
        }
        incident[root_rel][root_flat] = 1.0;

        let isolated_mask: Vec<f32> = (0..n_nodes)
            .map(|i| {
                if incident.iter().all(|m| m[i] == 0.0) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();

        FlatGraph {
            n_nodes,
            n_frames: vg.n_frames(),
            feature_class,
            bbox_rows,
            frame_of,
            human_flat,
            root_flat,
            rel_messages,
            incident_mask: incident,
            isolated_mask,
            n_predicates: n_pred,
        }
    }
}

// ---- parameter registration ----

fn rel_param(layer: usize, rel: usize, suffix: &str) -> String {
    format!("sgem.layer{layer}.rel{rel}.{suffix}")
}

fn head_param(layer: usize, rel: usize, head: usize, suffix: &str) -> String {
    format!("sgem.layer{layer}.rel{rel}.head{head}.{suffix}")
}

/// Registers every encoder parameter for the given vocabulary sizes.
pub fn register_params(
    store: &mut ParamStore,
    cfg: &SgemConfig,
    n_objects: usize,
    n_predicates: usize,
) {
    store.register_embedding("sgem.embed.object", &[n_objects, cfg.d_node]);
    if n_predicates > 0 {
        store.register_embedding("sgem.embed.predicate", &[n_predicates, cfg.d_edge]);
    }
    store.register_embedding("sgem.embed.root", &[1, cfg.d_node]);
    store.register_embedding("sgem.embed.root_link", &[1, cfg.d_edge]);
    if cfg.use_bbox_features {
        store.register_matrix("sgem.embed.bbox_proj", 5, cfg.d_node);
    }
    let d_out = cfg.d_out();
    for layer in 0..cfg.n_layers {
        let d_in = cfg.layer_input_width(layer);
        match cfg.encoder {
            EncoderKind::HetEdgeGat | EncoderKind::EdgeGat => {
                for rel in 0..cfg.n_relation_types(n_predicates) {
                    store.register_matrix(&rel_param(layer, rel, "theta_s"), d_in, d_out);
                    for head in 0..cfg.n_heads {
                        store.register_matrix(
                            &head_param(layer, rel, head, "theta_v"),
                            d_in,
                            cfg.d_head,
                        );
                        store.register_matrix(
                            &head_param(layer, rel, head, "theta_e"),
                            cfg.d_edge,
                            cfg.d_head,
                        );
                        store.register_matrix(
                            &head_param(layer, rel, head, "attn"),
                            3 * cfg.d_head,
                            1,
                        );
                    }
                }
            }
            EncoderKind::Gine => {
                store.register_matrix(&format!("sgem.layer{layer}.gine.w1"), d_in, d_out);
                store.register_bias(&format!("sgem.layer{layer}.gine.b1"), d_out);
                store.register_matrix(&format!("sgem.layer{layer}.gine.w2"), d_out, d_out);
                store.register_bias(&format!("sgem.layer{layer}.gine.b2"), d_out);
                store.register_matrix(&format!("sgem.layer{layer}.gine.edge_proj"), cfg.d_edge, d_in);
            }
        }
    }
}

// ---- forward ----

/// Initial node features: class embedding rows (+ projected `[x,y,w,h,area]`
/// geometry when enabled); the global root uses its dedicated embedding and
/// synthetic humans are zero.
pub fn init_node_features<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    fg: &FlatGraph,
    cfg: &SgemConfig,
) -> Result<Var> {
    let object = binder.leaf(tape, "sgem.embed.object");
    let root = binder.leaf(tape, "sgem.embed.root");
    let zero = tape.constant(Tensor::zeros(&[1, cfg.d_node]));
    let table = tape.concat(&[object, root, zero], 0)?;
    let mut feats = tape.embedding_lookup(table, &fg.feature_class)?;
    if cfg.use_bbox_features {
        let proj = binder.leaf(tape, "sgem.embed.bbox_proj");
        let rows: Vec<S> = fg
            .bbox_rows
            .iter()
            .flat_map(|r| r.iter().map(|&v| S::from_f32(v)))
            .collect();
        let geo = tape.constant(Tensor::new(vec![fg.n_nodes, 5], rows)?);
        let projected = tape.matmul(geo, proj)?;
        feats = tape.add(feats, projected)?;
    }
    Ok(feats)
}

/// Combined edge-feature table: predicate embedding rows then the root-link
/// row, indexed by `RelMessages::efeat`.
fn edge_table<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    fg: &FlatGraph,
) -> Result<Var> {
    let root_link = binder.leaf(tape, "sgem.embed.root_link");
    if fg.n_predicates == 0 {
        return Ok(root_link);
    }
    let predicate = binder.leaf(tape, "sgem.embed.predicate");
    tape.concat(&[predicate, root_link], 0)
}

/// Attention weights and aggregated messages of one (layer, relation, head):
/// returns `(alpha, segment_sum(alpha * (Θ_v·n_src + Θ_e·e)))`.
#[allow(clippy::too_many_arguments)]
fn head_messages<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    fg: &FlatGraph,
    cfg: &SgemConfig,
    layer: usize,
    rel: usize,
    head: usize,
    node_feats: Var,
    edges: Var,
) -> Result<(Var, Var)> {
    let msgs = &fg.rel_messages[rel];
    let theta_v = binder.leaf(tape, &head_param(layer, rel, head, "theta_v"));
    let theta_e = binder.leaf(tape, &head_param(layer, rel, head, "theta_e"));
    let attn = binder.leaf(tape, &head_param(layer, rel, head, "attn"));

    let v_all = tape.matmul(node_feats, theta_v)?;
    let v_dst = tape.embedding_lookup(v_all, &msgs.dst)?;
    let v_src = tape.embedding_lookup(v_all, &msgs.src)?;
    let e_rows = tape.embedding_lookup(edges, &msgs.efeat)?;
    let e_proj = tape.matmul(e_rows, theta_e)?;

    let score_in = tape.concat(&[v_dst, v_src, e_proj], 1)?;
    let scores2 = tape.matmul(score_in, attn)?;
    let scores = tape.reshape(scores2, &[msgs.dst.len()])?;
    let scores = tape.leaky_relu(scores, cfg.leaky_slope);
    let alpha = tape.segment_softmax(scores, &msgs.dst)?;

    let message = tape.add(v_src, e_proj)?;
    let weighted = tape.scale_rows(message, alpha)?;
    let agg = tape.segment_sum(weighted, &msgs.dst, fg.n_nodes)?;
    Ok((alpha, agg))
}

/// Attention coefficients of one (layer, relation, head) over the given node
/// features, one weight per directed message of that relation. Weights of
/// each destination's neighborhood sum to 1.
#[allow(clippy::too_many_arguments)]
pub fn attention_coefficients<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    fg: &FlatGraph,
    cfg: &SgemConfig,
    layer: usize,
    rel: usize,
    head: usize,
    node_feats: Var,
) -> Result<Var> {
    let edges = edge_table(tape, binder, fg)?;
    let (alpha, _) = head_messages(tape, binder, fg, cfg, layer, rel, head, node_feats, edges)?;
    Ok(alpha)
}

fn attention_layer<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    fg: &FlatGraph,
    cfg: &SgemConfig,
    layer: usize,
    node_feats: Var,
    edges: Var,
) -> Result<Var> {
    let mut acc: Option<Var> = None;
    let mut add_term = |tape: &mut Tape<S>, term: Var| -> Result<()> {
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
        Ok(())
    };
    for rel in 0..fg.rel_messages.len() {
        if fg.rel_messages[rel].dst.is_empty() {
            continue;
        }
        let theta_s = binder.leaf(tape, &rel_param(layer, rel, "theta_s"));
        let self_all = tape.matmul(node_feats, theta_s)?;
        let mask: Vec<S> = fg.incident_mask[rel].iter().map(|&v| S::from_f32(v)).collect();
        let mask = tape.constant(Tensor::new(vec![fg.n_nodes], mask)?);
        let self_term = tape.scale_rows(self_all, mask)?;

        let mut heads = Vec::with_capacity(cfg.n_heads);
        for head in 0..cfg.n_heads {
            let (_, agg) =
                head_messages(tape, binder, fg, cfg, layer, rel, head, node_feats, edges)?;
            heads.push(agg);
        }
        let heads_cat = tape.concat(&heads, 1)?;
        let rel_out = tape.add(self_term, heads_cat)?;
        add_term(tape, rel_out)?;
    }
    if fg.isolated_mask.iter().any(|&v| v != 0.0) {
        let rel = cfg.default_relation(fg.n_predicates);
        let theta_s = binder.leaf(tape, &rel_param(layer, rel, "theta_s"));
        let self_all = tape.matmul(node_feats, theta_s)?;
        let mask: Vec<S> = fg.isolated_mask.iter().map(|&v| S::from_f32(v)).collect();
        let mask = tape.constant(Tensor::new(vec![fg.n_nodes], mask)?);
        let iso_term = tape.scale_rows(self_all, mask)?;
        add_term(tape, iso_term)?;
    }
    // root links guarantee at least one non-empty relation
    Ok(acc.expect("video graph always carries root links"))
}

fn gine_layer<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    fg: &FlatGraph,
    layer: usize,
    node_feats: Var,
    edges: Var,
) -> Result<Var> {
    let msgs = &fg.rel_messages[0];
    let edge_proj = binder.leaf(tape, &format!("sgem.layer{layer}.gine.edge_proj"));
    let w1 = binder.leaf(tape, &format!("sgem.layer{layer}.gine.w1"));
    let b1 = binder.leaf(tape, &format!("sgem.layer{layer}.gine.b1"));
    let w2 = binder.leaf(tape, &format!("sgem.layer{layer}.gine.w2"));
    let b2 = binder.leaf(tape, &format!("sgem.layer{layer}.gine.b2"));

    let e_rows = tape.embedding_lookup(edges, &msgs.efeat)?;
    let e_proj = tape.matmul(e_rows, edge_proj)?;
    let h_src = tape.embedding_lookup(node_feats, &msgs.src)?;
    let sum = tape.add(h_src, e_proj)?;
    let act = tape.elu(sum);
    let agg = tape.segment_sum(act, &msgs.dst, fg.n_nodes)?;
    let pre = tape.add(node_feats, agg)?;
    let hid = tape.matmul(pre, w1)?;
    let hid = tape.add(hid, b1)?;
    let hid = tape.elu(hid);
    let out = tape.matmul(hid, w2)?;
    tape.add(out, b2)
}

/// Node features before any layer and after each layer, in order
/// (`n_layers + 1` entries). Feeds verification sweeps that need
/// intermediate states.
pub fn layer_features<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    fg: &FlatGraph,
    cfg: &SgemConfig,
) -> Result<Vec<Var>> {
    let edges = edge_table(tape, binder, fg)?;
    let mut features = Vec::with_capacity(cfg.n_layers + 1);
    let mut h = init_node_features(tape, binder, fg, cfg)?;
    features.push(h);
    for layer in 0..cfg.n_layers {
        h = match cfg.encoder {
            EncoderKind::HetEdgeGat | EncoderKind::EdgeGat => {
                attention_layer(tape, binder, fg, cfg, layer, h, edges)?
            }
            EncoderKind::Gine => gine_layer(tape, binder, fg, layer, h, edges)?,
        };
        features.push(h);
    }
    Ok(features)
}

/// Runs initial featurization and all cascaded layers over the full video
/// graph (root links included). Returns `(frame_embeddings, node_embeddings)`
/// where row i of the former is frame i's contribution per
/// [`FrameEmbeddingMode`].
pub fn encode_video_graph<S: Scalar>(
    tape: &mut Tape<S>,
    binder: &mut Binder<S>,
    fg: &FlatGraph,
    cfg: &SgemConfig,
) -> Result<(Var, Var)> {
    let features = layer_features(tape, binder, fg, cfg)?;
    let h = *features.last().expect("at least the initial features");
    let frame_embeddings = match cfg.frame_embedding {
        FrameEmbeddingMode::HumanRoot => tape.embedding_lookup(h, &fg.human_flat)?,
        FrameEmbeddingMode::FrameSum => {
            let non_root: Vec<usize> = (0..fg.n_nodes - 1).collect();
            let rows = tape.embedding_lookup(h, &non_root)?;
            tape.segment_sum(rows, &fg.frame_of, fg.n_frames)?
        }
    };
    Ok((frame_embeddings, h))
}

/// Elementwise sum of per-frame embeddings; feeds the MLP-baseline head.
pub fn aggregate_human_roots<S: Scalar>(tape: &mut Tape<S>, frame_embeddings: Var) -> Result<Var> {
    tape.sum_axis(frame_embeddings, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegraph::parse_frame_graph;
    use crate::scenegraph::parse_vocabulary;
    use crate::videograph::{build_video_graph, NoHumanPolicy};

    fn vocab() -> Vocabulary {
        parse_vocabulary(
            r#"{"objects":["person","cup","table"],"predicates":["holding","on"]}"#,
        )
        .unwrap()
    }

    fn frame(id: &str, objects: &str, rels: &str) -> crate::scenegraph::FrameSceneGraph {
        let doc =
            format!(r#"{{"frame_id":"{id}","objects":{objects},"relationships":{rels}}}"#);
        parse_frame_graph(&doc, &vocab(), None).unwrap()
    }

    fn two_node_video() -> VideoGraph {
        let f = frame(
            "f0",
            r#"[{"id":0,"label":"person","bbox":[0.1,0.1,0.4,0.8]},
                {"id":1,"label":"cup","bbox":[0.5,0.4,0.1,0.1]}]"#,
            r#"[{"subject":0,"predicate":"holding","object":1}]"#,
        );
        build_video_graph("v", vec![f], &vocab(), NoHumanPolicy::Skip).unwrap()
    }

    fn tiny_cfg() -> SgemConfig {
        SgemConfig {
            d_node: 3,
            d_edge: 2,
            n_heads: 1,
            d_head: 3,
            n_layers: 1,
            leaky_slope: 0.2,
            use_bbox_features: false,
            relation_grouping: RelationGrouping::PerPredicate,
            encoder: EncoderKind::HetEdgeGat,
            frame_embedding: FrameEmbeddingMode::HumanRoot,
        }
    }

    fn zero_param(store: &mut ParamStore, name: &str) {
        for v in store.get_mut(name).unwrap().data_mut() {
            *v = 0.0;
        }
    }

    fn set_identity(store: &mut ParamStore, name: &str, d: usize) {
        let t = store.get_mut(name).unwrap();
        assert_eq!(t.shape(), &[d, d]);
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = if i / d == i % d { 1.0 } else { 0.0 };
        }
    }

    /// Hand evaluation with identity parameters: each node's update is its
    /// own feature plus its single neighbor's feature.
    #[test]
    fn identity_parameters_sum_self_and_neighbor() {
        let vg = two_node_video();
        let cfg = tiny_cfg();
        let mut store = ParamStore::new(0);
        register_params(&mut store, &cfg, 3, 2);

        // known object embeddings; zero edge features and attention vectors
        let table = store.get_mut("sgem.embed.object").unwrap();
        table.data_mut().copy_from_slice(&[
            1.0, 2.0, 3.0, // person
            10.0, 20.0, 30.0, // cup
            0.0, 0.0, 0.0, // table
        ]);
        for rel in 0..3 {
            set_identity(&mut store, &rel_param(0, rel, "theta_s"), 3);
            set_identity(&mut store, &head_param(0, rel, 0, "theta_v"), 3);
            zero_param(&mut store, &head_param(0, rel, 0, "theta_e"));
            zero_param(&mut store, &head_param(0, rel, 0, "attn"));
        }
        // silence the root-link relation so the frame behaves as an isolated
        // 2-node 1-edge graph
        zero_param(&mut store, &rel_param(0, 2, "theta_s"));
        zero_param(&mut store, &head_param(0, 2, 0, "theta_v"));

        let fg = FlatGraph::build(&vg, &vocab(), &cfg);
        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&store);
        let (_, nodes) = encode_video_graph(&mut tape, &mut binder, &fg, &cfg).unwrap();
        let out = tape.value(nodes);
        // person = person + cup; cup = cup + person
        assert_eq!(out.row(0), &[11.0, 22.0, 33.0]);
        assert_eq!(out.row(1), &[11.0, 22.0, 33.0]);
    }

    #[test]
    fn single_neighbor_attention_is_exactly_one() {
        let vg = two_node_video();
        let cfg = tiny_cfg();
        let mut store = ParamStore::new(7);
        register_params(&mut store, &cfg, 3, 2);
        let fg = FlatGraph::build(&vg, &vocab(), &cfg);
        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&store);
        let feats = init_node_features(&mut tape, &mut binder, &fg, &cfg).unwrap();
        // relation 0 = "holding": each endpoint has exactly one neighbor
        let alpha =
            attention_coefficients(&mut tape, &mut binder, &fg, &cfg, 0, 0, 0, feats).unwrap();
        for &a in tape.value(alpha).data() {
            assert!((a - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_attention_vector_gives_uniform_weights() {
        // person linked to three objects via the same predicate
        let f = frame(
            "f0",
            r#"[{"id":0,"label":"person","bbox":[0.1,0.1,0.4,0.8]},
                {"id":1,"label":"cup","bbox":[0.5,0.4,0.1,0.1]},
                {"id":2,"label":"cup","bbox":[0.6,0.4,0.1,0.1]},
                {"id":3,"label":"table","bbox":[0.1,0.6,0.5,0.3]}]"#,
            r#"[{"subject":0,"predicate":"holding","object":1},
                {"subject":0,"predicate":"holding","object":2},
                {"subject":0,"predicate":"holding","object":3}]"#,
        );
        let vg = build_video_graph("v", vec![f], &vocab(), NoHumanPolicy::Skip).unwrap();
        let cfg = tiny_cfg();
        let mut store = ParamStore::new(7);
        register_params(&mut store, &cfg, 3, 2);
        zero_param(&mut store, &head_param(0, 0, 0, "attn"));
        let fg = FlatGraph::build(&vg, &vocab(), &cfg);
        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&store);
        let feats = init_node_features(&mut tape, &mut binder, &fg, &cfg).unwrap();
        let alpha =
            attention_coefficients(&mut tape, &mut binder, &fg, &cfg, 0, 0, 0, feats).unwrap();
        let msgs = &fg.rel_messages[0];
        // person (flat 0) receives three uniform weights
        for (i, &dst) in msgs.dst.iter().enumerate() {
            if dst == 0 {
                assert!((tape.value(alpha).data()[i] - 1.0 / 3.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn same_class_nodes_share_features_without_bbox() {
        let f = frame(
            "f0",
            r#"[{"id":0,"label":"person","bbox":[0.1,0.1,0.4,0.8]},
                {"id":1,"label":"cup","bbox":[0.5,0.4,0.1,0.1]},
                {"id":2,"label":"cup","bbox":[0.2,0.2,0.3,0.3]}]"#,
            "[]",
        );
        let vg = build_video_graph("v", vec![f], &vocab(), NoHumanPolicy::Skip).unwrap();
        let mut cfg = tiny_cfg();
        let mut store = ParamStore::new(3);
        register_params(&mut store, &cfg, 3, 2);
        let fg = FlatGraph::build(&vg, &vocab(), &cfg);
        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&store);
        let feats = init_node_features(&mut tape, &mut binder, &fg, &cfg).unwrap();
        assert_eq!(tape.value(feats).row(1), tape.value(feats).row(2));
        // global root gets its dedicated embedding row exactly
        assert_eq!(
            tape.value(feats).row(fg.root_flat),
            store.get("sgem.embed.root").unwrap().data()
        );

        // with bbox features on, same class but different boxes now differ
        cfg.use_bbox_features = true;
        let mut store2 = ParamStore::new(3);
        register_params(&mut store2, &cfg, 3, 2);
        let fg2 = FlatGraph::build(&vg, &vocab(), &cfg);
        let mut tape2 = Tape::<f32>::new();
        let mut binder2 = Binder::new(&store2);
        let feats2 = init_node_features(&mut tape2, &mut binder2, &fg2, &cfg).unwrap();
        assert_ne!(tape2.value(feats2).row(1), tape2.value(feats2).row(2));
    }

    #[test]
    fn isolated_node_passes_through_default_self_transform() {
        // table node with no edges in a frame that also has a person
        let f = frame(
            "f0",
            r#"[{"id":0,"label":"person","bbox":[0.1,0.1,0.4,0.8]},
                {"id":1,"label":"table","bbox":[0.2,0.6,0.6,0.3]}]"#,
            "[]",
        );
        let vg = build_video_graph("v", vec![f], &vocab(), NoHumanPolicy::Skip).unwrap();
        let cfg = tiny_cfg();
        let mut store = ParamStore::new(5);
        register_params(&mut store, &cfg, 3, 2);
        let fg = FlatGraph::build(&vg, &vocab(), &cfg);
        assert_eq!(fg.isolated_mask, vec![0.0, 1.0, 0.0]);

        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&store);
        let (_, nodes) = encode_video_graph(&mut tape, &mut binder, &fg, &cfg).unwrap();

        // expected: theta_s of the default (root-link) relation times feature
        let feats = {
            let mut t = Tape::<f32>::new();
            let mut b = Binder::new(&store);
            let f = init_node_features(&mut t, &mut b, &fg, &cfg).unwrap();
            t.value(f).clone()
        };
        let theta = store.get(&rel_param(0, 2, "theta_s")).unwrap();
        let d = cfg.d_node;
        let expect: Vec<f32> = (0..cfg.d_out())
            .map(|j| {
                (0..d)
                    .map(|i| feats.row(1)[i] * theta.data()[i * cfg.d_out() + j])
                    .sum()
            })
            .collect();
        for (a, b) in tape.value(nodes).row(1).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zeroed_root_links_isolate_frames() {
        let f0 = frame(
            "f0",
            r#"[{"id":0,"label":"person","bbox":[0.1,0.1,0.4,0.8]},
                {"id":1,"label":"cup","bbox":[0.5,0.4,0.1,0.1]}]"#,
            r#"[{"subject":0,"predicate":"holding","object":1}]"#,
        );
        let f1 = frame(
            "f1",
            r#"[{"id":0,"label":"person","bbox":[0.2,0.1,0.5,0.7]},
                {"id":1,"label":"table","bbox":[0.1,0.6,0.7,0.3]}]"#,
            r#"[{"subject":0,"predicate":"on","object":1}]"#,
        );
        let cfg = SgemConfig {
            n_layers: 2,
            ..tiny_cfg()
        };
        let mut store = ParamStore::new(11);
        register_params(&mut store, &cfg, 3, 2);
        let root_rel = 2;
        for layer in 0..2 {
            zero_param(&mut store, &rel_param(layer, root_rel, "theta_s"));
            zero_param(&mut store, &head_param(layer, root_rel, 0, "theta_v"));
            zero_param(&mut store, &head_param(layer, root_rel, 0, "theta_e"));
        }

        let both = build_video_graph("v", vec![f0.clone(), f1.clone()], &vocab(), NoHumanPolicy::Skip)
            .unwrap();
        let fg_both = FlatGraph::build(&both, &vocab(), &cfg);
        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&store);
        let (fe_both, _) = encode_video_graph(&mut tape, &mut binder, &fg_both, &cfg).unwrap();

        for (i, f) in [f0, f1].into_iter().enumerate() {
            let solo = build_video_graph("v", vec![f], &vocab(), NoHumanPolicy::Skip).unwrap();
            let fg_solo = FlatGraph::build(&solo, &vocab(), &cfg);
            let mut t = Tape::<f32>::new();
            let mut b = Binder::new(&store);
            let (fe_solo, _) = encode_video_graph(&mut t, &mut b, &fg_solo, &cfg).unwrap();
            for (a, b) in tape.value(fe_both).row(i).iter().zip(t.value(fe_solo).row(0)) {
                assert!((a - b).abs() < 1e-6, "frame {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn frame_embedding_shape_and_sum_aggregation() {
        let vg = two_node_video();
        let cfg = tiny_cfg();
        let mut store = ParamStore::new(1);
        register_params(&mut store, &cfg, 3, 2);
        let fg = FlatGraph::build(&vg, &vocab(), &cfg);
        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&store);
        let (fe, _) = encode_video_graph(&mut tape, &mut binder, &fg, &cfg).unwrap();
        assert_eq!(tape.value(fe).shape(), &[1, cfg.d_out()]);

        // single frame: aggregate equals the frame embedding
        let agg = aggregate_human_roots(&mut tape, fe).unwrap();
        assert_eq!(tape.value(agg).data(), tape.value(fe).data());
    }

    #[test]
    fn aggregate_of_opposite_vectors_is_zero() {
        let mut tape = Tape::<f32>::new();
        let fe = tape.constant(
            Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, -1.0, 2.0, -0.5]).unwrap(),
        );
        let agg = aggregate_human_roots(&mut tape, fe).unwrap();
        assert_eq!(tape.value(agg).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn node_id_permutation_leaves_frame_embeddings_unchanged() {
        let make = |ids: [u32; 3]| {
            let objects = format!(
                r#"[{{"id":{},"label":"person","bbox":[0.1,0.1,0.4,0.8]}},
                    {{"id":{},"label":"cup","bbox":[0.5,0.4,0.1,0.1]}},
                    {{"id":{},"label":"table","bbox":[0.1,0.6,0.5,0.3]}}]"#,
                ids[0], ids[1], ids[2]
            );
            let rels = format!(
                r#"[{{"subject":{},"predicate":"holding","object":{}}},
                    {{"subject":{},"predicate":"on","object":{}}}]"#,
                ids[0], ids[1], ids[1], ids[2]
            );
            let f = frame("f0", &objects, &rels);
            build_video_graph("v", vec![f], &vocab(), NoHumanPolicy::Skip).unwrap()
        };
        let cfg = SgemConfig {
            n_layers: 2,
            ..tiny_cfg()
        };
        let mut store = ParamStore::new(23);
        register_params(&mut store, &cfg, 3, 2);

        let mut outputs = Vec::new();
        for ids in [[0u32, 1, 2], [5, 0, 9]] {
            let vg = make(ids);
            let fg = FlatGraph::build(&vg, &vocab(), &cfg);
            let mut tape = Tape::<f32>::new();
            let mut binder = Binder::new(&store);
            let (fe, _) = encode_video_graph(&mut tape, &mut binder, &fg, &cfg).unwrap();
            outputs.push(tape.value(fe).data().to_vec());
        }
        for (a, b) in outputs[0].iter().zip(&outputs[1]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn frame_sum_mode_sums_all_frame_nodes() {
        let vg = two_node_video();
        let cfg = SgemConfig {
            frame_embedding: FrameEmbeddingMode::FrameSum,
            ..tiny_cfg()
        };
        let mut store = ParamStore::new(6);
        register_params(&mut store, &cfg, 3, 2);
        let fg = FlatGraph::build(&vg, &vocab(), &cfg);
        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&store);
        let (fe, nodes) = encode_video_graph(&mut tape, &mut binder, &fg, &cfg).unwrap();
        let expect: Vec<f32> = (0..cfg.d_out())
            .map(|c| tape.value(nodes).row(0)[c] + tape.value(nodes).row(1)[c])
            .collect();
        for (a, b) in tape.value(fe).row(0).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn cross_frame_influence_needs_two_layers() {
        // frame 1's human sits two hops from frame 0's human via the root,
        // so its perturbation reaches frame 0 with two layers but not one
        let make_frames = |person_w: f32| {
            let f0 = frame(
                "f0",
                r#"[{"id":0,"label":"person","bbox":[0.1,0.1,0.4,0.8]},
                    {"id":1,"label":"cup","bbox":[0.5,0.4,0.1,0.1]}]"#,
                r#"[{"subject":0,"predicate":"holding","object":1}]"#,
            );
            let mut f1 = frame(
                "f1",
                r#"[{"id":0,"label":"person","bbox":[0.2,0.1,0.5,0.7]},
                    {"id":1,"label":"cup","bbox":[0.5,0.4,0.1,0.1]}]"#,
                r#"[{"subject":0,"predicate":"holding","object":1}]"#,
            );
            f1.nodes[0].bbox.w = person_w;
            vec![f0, f1]
        };
        for (n_layers, expect_influence) in [(1usize, false), (2usize, true)] {
            let cfg = SgemConfig {
                n_layers,
                use_bbox_features: true,
                ..tiny_cfg()
            };
            let mut store = ParamStore::new(17);
            register_params(&mut store, &cfg, 3, 2);
            let run = |person_w: f32| {
                let vg = build_video_graph(
                    "v",
                    make_frames(person_w),
                    &vocab(),
                    NoHumanPolicy::Skip,
                )
                .unwrap();
                let fg = FlatGraph::build(&vg, &vocab(), &cfg);
                let mut tape = Tape::<f32>::new();
                let mut binder = Binder::new(&store);
                let (fe, _) = encode_video_graph(&mut tape, &mut binder, &fg, &cfg).unwrap();
                tape.value(fe).row(0).to_vec()
            };
            let base = run(0.5);
            let perturbed = run(0.3);
            let moved = base
                .iter()
                .zip(&perturbed)
                .any(|(a, b)| (a - b).abs() > 1e-7);
            assert_eq!(
                moved, expect_influence,
                "{n_layers} layer(s): cross-frame influence = {moved}"
            );
        }
    }

    #[test]
    fn gine_encoder_runs_and_differs() {
        let vg = two_node_video();
        let cfg = SgemConfig {
            encoder: EncoderKind::Gine,
            ..tiny_cfg()
        };
        let mut store = ParamStore::new(2);
        register_params(&mut store, &cfg, 3, 2);
        let fg = FlatGraph::build(&vg, &vocab(), &cfg);
        assert_eq!(fg.rel_messages.len(), 1);
        // gine bucket carries predicate edges and root links together
        assert_eq!(fg.rel_messages[0].dst.len(), 4);
        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&store);
        let (fe, _) = encode_video_graph(&mut tape, &mut binder, &fg, &cfg).unwrap();
        assert_eq!(tape.value(fe).shape(), &[1, cfg.d_out()]);
        tape.value(fe).check_finite().unwrap();
    }

    #[test]
    fn end_to_end_gradients_pass_finite_difference_check() {
        let f0 = frame(
            "f0",
            r#"[{"id":0,"label":"person","bbox":[0.1,0.1,0.4,0.8]},
                {"id":1,"label":"cup","bbox":[0.5,0.4,0.1,0.1]}]"#,
            r#"[{"subject":0,"predicate":"holding","object":1}]"#,
        );
        let f1 = frame(
            "f1",
            r#"[{"id":0,"label":"person","bbox":[0.2,0.1,0.5,0.7]},
                {"id":1,"label":"table","bbox":[0.1,0.6,0.7,0.3]}]"#,
            r#"[{"subject":0,"predicate":"on","object":1}]"#,
        );
        let vg = build_video_graph("v", vec![f0, f1], &vocab(), NoHumanPolicy::Skip).unwrap();
        let cfg = SgemConfig {
            n_layers: 2,
            use_bbox_features: true,
            ..tiny_cfg()
        };
        let mut store = ParamStore::new(31);
        register_params(&mut store, &cfg, 3, 2);
        let fg = FlatGraph::build(&vg, &vocab(), &cfg);

        let named: Vec<(String, crate::tensor::Tensor<f64>)> = store
            .iter()
            .map(|(n, t)| (n.to_string(), t.cast::<f64>()))
            .collect();
        let report = crate::tensor::grad_check(
            &named,
            |tape, vars| {
                let mut binder = Binder::prebound(
                    named
                        .iter()
                        .zip(vars)
                        .map(|((name, _), &var)| (name.clone(), var)),
                );
                let (fe, _) = encode_video_graph(tape, &mut binder, &fg, &cfg)?;
                let sq = tape.mul(fe, fe)?;
                Ok(tape.sum_all(sq))
            },
            1e-3,
        )
        .unwrap();
        assert!(
            report.passes(1e-3),
            "max rel err {} at {}",
            report.max_rel_error,
            report.worst_param
        );
    }
}
