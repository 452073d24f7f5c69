//! Shared verification fixtures: an independent dense reference
//! implementation of the per-relation edge-attention update, plus seeded
//! random video generators.
//!
//! The reference encoder works in f64 with explicit nested loops and no
//! segment kernels, tape, or masking tricks, so it shares no computation
//! path with the engine it checks.

// shared across several integration-test targets; not all use every helper
#![allow(dead_code)]

#![allow(clippy::needless_range_loop)]

use graphqa_core::params::ParamStore;
use graphqa_core::scenegraph::{BBox, EntityNode, FrameSceneGraph, RelationEdge, Vocabulary};
use graphqa_core::sgem::SgemConfig;
use graphqa_core::tensor::Tensor;
use graphqa_core::videograph::{build_video_graph, NoHumanPolicy, VideoGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Attention weights of one (node, relation, head) neighborhood.
pub struct AlphaGroup {
    pub layer: usize,
    pub relation: usize,
    pub head: usize,
    pub node: usize,
    pub weights: Vec<f64>,
}

pub struct ReferenceEncoding {
    /// Final per-frame human-root embeddings.
    pub frame_embeddings: Vec<Vec<f64>>,
    /// Final embeddings of every node (global root last).
    pub node_embeddings: Vec<Vec<f64>>,
    /// Every attention neighborhood of every layer.
    pub alpha_groups: Vec<AlphaGroup>,
}

fn get(store: &ParamStore, name: &str) -> Tensor<f64> {
    store
        .get(name)
        .unwrap_or_else(|| panic!("missing parameter {name}"))
        .cast::<f64>()
}

/// x (len in) times a row-major [in, out] matrix.
fn matvec(w: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    assert_eq!(n_in, x.len(), "matvec width mismatch");
    let mut out = vec![0.0; n_out];
    for i in 0..n_in {
        for j in 0..n_out {
            out[j] += x[i] * w.data()[i * n_out + j];
        }
    }
    out
}

fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

struct Neighborhoods {
    /// per relation, per node: list of (neighbor, edge-feature row)
    by_relation: Vec<Vec<Vec<(usize, usize)>>>,
}

fn neighborhoods(vg: &VideoGraph, vocab: &Vocabulary, cfg: &SgemConfig) -> Neighborhoods {
    let n_nodes = vg.total_nodes();
    let n_rel = cfg.n_relation_types(vocab.n_predicates());
    let mut by_relation = vec![vec![Vec::new(); n_nodes]; n_rel];
    // in the acceptance configuration (per-predicate heterogeneous mode) the
    // relation of predicate p is p, root links last
    let rel_of_pred = |p: usize| if n_rel == 1 { 0 } else { p };
    let root_rel = n_rel - 1;
    for fi in 0..vg.n_frames() {
        let offset = vg.frame_offset(fi);
        let frame = &vg.frames[fi];
        let flat = |id: u32| {
            offset
                + frame
                    .nodes
                    .iter()
                    .position(|n| n.node_id == id)
                    .expect("edge endpoint resolves")
        };
        for e in &frame.edges {
            let (a, b) = (flat(e.subject_id), flat(e.object_id));
            let r = rel_of_pred(e.predicate_index);
            by_relation[r][a].push((b, e.predicate_index));
            by_relation[r][b].push((a, e.predicate_index));
        }
    }
    let root = vg.global_root_index();
    for fi in 0..vg.n_frames() {
        let h = vg.human_root_index(fi);
        by_relation[root_rel][h].push((root, vocab.n_predicates()));
        by_relation[root_rel][root].push((h, vocab.n_predicates()));
    }
    Neighborhoods { by_relation }
}

/// Dense loop-based reference of the two-equation update, in f64.
pub fn reference_encode(
    vg: &VideoGraph,
    vocab: &Vocabulary,
    cfg: &SgemConfig,
    store: &ParamStore,
) -> ReferenceEncoding {
    let n_nodes = vg.total_nodes();
    let nbrs = neighborhoods(vg, vocab, cfg);
    let n_rel = nbrs.by_relation.len();
    let root_rel = n_rel - 1;

    // edge-feature rows: predicates then root-link
    let mut edge_rows: Vec<Vec<f64>> = Vec::with_capacity(vocab.n_predicates() + 1);
    if vocab.n_predicates() > 0 {
        let table = get(store, "sgem.embed.predicate");
        for p in 0..vocab.n_predicates() {
            edge_rows.push(table.row(p).to_vec());
        }
    }
    edge_rows.push(get(store, "sgem.embed.root_link").row(0).to_vec());

    // initial features
    let object = get(store, "sgem.embed.object");
    let root_embed = get(store, "sgem.embed.root");
    let mut feats: Vec<Vec<f64>> = Vec::with_capacity(n_nodes);
    for node in 0..n_nodes {
        feats.push(vec![0.0; cfg.d_node]);
        let _ = node;
    }
    for fi in 0..vg.n_frames() {
        let offset = vg.frame_offset(fi);
        for (pos, n) in vg.frames[fi].nodes.iter().enumerate() {
            feats[offset + pos] = object.row(n.class_index).to_vec();
        }
        // synthetic humans stay zero
    }
    feats[vg.global_root_index()] = root_embed.row(0).to_vec();
    if cfg.use_bbox_features {
        let proj = get(store, "sgem.embed.bbox_proj");
        for fi in 0..vg.n_frames() {
            let offset = vg.frame_offset(fi);
            for (pos, n) in vg.frames[fi].nodes.iter().enumerate() {
                let b = n.bbox;
                let geo = [
                    b.x as f64,
                    b.y as f64,
                    b.w as f64,
                    b.h as f64,
                    b.area() as f64,
                ];
                let add = matvec(&proj, &geo);
                for (f, a) in feats[offset + pos].iter_mut().zip(&add) {
                    *f += a;
                }
            }
        }
    }

    let mut alpha_groups = Vec::new();
    let d_out = cfg.n_heads * cfg.d_head;

    for layer in 0..cfg.n_layers {
        let mut next: Vec<Vec<f64>> = vec![vec![0.0; d_out]; n_nodes];
        for node in 0..n_nodes {
            let mut incident_any = false;
            for rel in 0..n_rel {
                let neighborhood = &nbrs.by_relation[rel][node];
                if neighborhood.is_empty() {
                    continue;
                }
                incident_any = true;
                let theta_s = get(store, &format!("sgem.layer{layer}.rel{rel}.theta_s"));
                let self_term = matvec(&theta_s, &feats[node]);
                for (o, s) in next[node].iter_mut().zip(&self_term) {
                    *o += s;
                }
                for head in 0..cfg.n_heads {
                    let pre = format!("sgem.layer{layer}.rel{rel}.head{head}");
                    let theta_v = get(store, &format!("{pre}.theta_v"));
                    let theta_e = get(store, &format!("{pre}.theta_e"));
                    let attn = get(store, &format!("{pre}.attn"));
                    let query = matvec(&theta_v, &feats[node]);

                    // scores over the neighborhood
                    let mut scores = Vec::with_capacity(neighborhood.len());
                    for &(k, erow) in neighborhood {
                        let key = matvec(&theta_v, &feats[k]);
                        let ev = matvec(&theta_e, &edge_rows[erow]);
                        let mut s = 0.0;
                        for (i, &q) in query.iter().enumerate() {
                            s += attn.data()[i] * q;
                        }
                        for (i, &kv) in key.iter().enumerate() {
                            s += attn.data()[cfg.d_head + i] * kv;
                        }
                        for (i, &e) in ev.iter().enumerate() {
                            s += attn.data()[2 * cfg.d_head + i] * e;
                        }
                        scores.push(leaky_relu(s, cfg.leaky_slope));
                    }
                    // softmax with explicit max subtraction
                    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = scores.iter().map(|&s| (s - m).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    let alphas: Vec<f64> = exps.iter().map(|&e| e / z).collect();

                    for (ni, &(k, erow)) in neighborhood.iter().enumerate() {
                        let key = matvec(&theta_v, &feats[k]);
                        let ev = matvec(&theta_e, &edge_rows[erow]);
                        for c in 0..cfg.d_head {
                            next[node][head * cfg.d_head + c] +=
                                alphas[ni] * (key[c] + ev[c]);
                        }
                    }
                    alpha_groups.push(AlphaGroup {
                        layer,
                        relation: rel,
                        head,
                        node,
                        weights: alphas,
                    });
                }
            }
            if !incident_any {
                let theta_s = get(store, &format!("sgem.layer{layer}.rel{root_rel}.theta_s"));
                next[node] = matvec(&theta_s, &feats[node]);
            }
        }
        feats = next;
    }

    let frame_embeddings = (0..vg.n_frames())
        .map(|fi| feats[vg.human_root_index(fi)].clone())
        .collect();
    ReferenceEncoding {
        frame_embeddings,
        node_embeddings: feats,
        alpha_groups,
    }
}

/// Random frame with `1..=max_nodes` nodes; human presence controlled by the
/// caller. Node ids are a shuffled non-contiguous set to exercise id
/// resolution.
pub fn random_frame(
    rng: &mut ChaCha8Rng,
    frame_id: &str,
    vocab: &Vocabulary,
    max_nodes: usize,
    with_human: bool,
) -> FrameSceneGraph {
    let n_nodes = rng.gen_range(1..=max_nodes);
    let mut ids: Vec<u32> = (0..(n_nodes as u32) * 2).collect();
    for i in (1..ids.len()).rev() {
        let j = rng.gen_range(0..=i);
        ids.swap(i, j);
    }
    let human_classes: Vec<usize> = (0..vocab.n_objects())
        .filter(|&c| vocab.is_human_class(c))
        .collect();
    let object_classes: Vec<usize> = (0..vocab.n_objects())
        .filter(|&c| !vocab.is_human_class(c))
        .collect();
    let mut nodes = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let class_index = if i == 0 && with_human {
            human_classes[rng.gen_range(0..human_classes.len())]
        } else {
            object_classes[rng.gen_range(0..object_classes.len())]
        };
        nodes.push(EntityNode {
            node_id: ids[i],
            class_index,
            bbox: BBox {
                x: rng.gen_range(0.0..0.4),
                y: rng.gen_range(0.0..0.4),
                w: rng.gen_range(0.05..0.5),
                h: rng.gen_range(0.05..0.5),
            },
        });
    }
    let mut edges = Vec::new();
    if n_nodes >= 2 {
        let n_edges = rng.gen_range(0..=(2 * n_nodes));
        for _ in 0..n_edges {
            let a = rng.gen_range(0..n_nodes);
            let mut b = rng.gen_range(0..n_nodes);
            if a == b {
                b = (b + 1) % n_nodes;
            }
            edges.push(RelationEdge {
                subject_id: nodes[a].node_id,
                predicate_index: rng.gen_range(0..vocab.n_predicates()),
                object_id: nodes[b].node_id,
            });
        }
    }
    FrameSceneGraph {
        frame_id: frame_id.to_string(),
        nodes,
        edges,
    }
}

/// Random video where every frame has a human (so all frames are retained).
pub fn random_video(
    seed: u64,
    vocab: &Vocabulary,
    max_frames: usize,
    max_nodes: usize,
) -> VideoGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_frames = rng.gen_range(1..=max_frames);
    let frames: Vec<FrameSceneGraph> = (0..n_frames)
        .map(|fi| random_frame(&mut rng, &format!("f{fi}"), vocab, max_nodes, true))
        .collect();
    build_video_graph(&format!("rand{seed}"), frames, vocab, NoHumanPolicy::Skip)
        .expect("every frame has a human")
}

/// Random video with occasional human-less frames, for invariant sweeps.
pub fn random_video_mixed(
    seed: u64,
    vocab: &Vocabulary,
    max_frames: usize,
    max_nodes: usize,
) -> Result<VideoGraph, graphqa_core::videograph::VideoGraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_frames = rng.gen_range(1..=max_frames);
    let frames: Vec<FrameSceneGraph> = (0..n_frames)
        .map(|fi| {
            let with_human = rng.gen_bool(0.8);
            random_frame(&mut rng, &format!("f{fi}"), vocab, max_nodes, with_human)
        })
        .collect();
    build_video_graph(&format!("mixed{seed}"), frames, vocab, NoHumanPolicy::Skip)
}

/// Permutes node ids within each frame, preserving structure.
pub fn permute_node_ids(vg: &VideoGraph, seed: u64) -> Vec<FrameSceneGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vg.frames
        .iter()
        .map(|f| {
            let fresh: Vec<u32> = {
                let mut ids: Vec<u32> = (0..(f.nodes.len() as u32) * 3).collect();
                for i in (1..ids.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    ids.swap(i, j);
                }
                ids.truncate(f.nodes.len());
                ids
            };
            let remap = |old: u32| {
                let pos = f.nodes.iter().position(|n| n.node_id == old).unwrap();
                fresh[pos]
            };
            FrameSceneGraph {
                frame_id: f.frame_id.clone(),
                nodes: f
                    .nodes
                    .iter()
                    .map(|n| EntityNode {
                        node_id: remap(n.node_id),
                        class_index: n.class_index,
                        bbox: n.bbox,
                    })
                    .collect(),
                edges: f
                    .edges
                    .iter()
                    .map(|e| RelationEdge {
                        subject_id: remap(e.subject_id),
                        predicate_index: e.predicate_index,
                        object_id: remap(e.object_id),
                    })
                    .collect(),
            }
        })
        .collect()
}

pub fn oracle_vocab() -> Vocabulary {
    graphqa_core::scenegraph::parse_vocabulary(
        r#"{"objects":["person","cup","table","food","phone"],"predicates":["holding","near"]}"#,
    )
    .unwrap()
}

/// The acceptance encoder configuration: 2 relation types + root-link, H=2.
pub fn oracle_config() -> SgemConfig {
    SgemConfig {
        d_node: 8,
        d_edge: 6,
        n_heads: 2,
        d_head: 6,
        n_layers: 2,
        leaky_slope: 0.2,
        use_bbox_features: true,
        relation_grouping: graphqa_core::sgem::RelationGrouping::PerPredicate,
        encoder: graphqa_core::sgem::EncoderKind::HetEdgeGat,
        frame_embedding: graphqa_core::sgem::FrameEmbeddingMode::HumanRoot,
    }
}
