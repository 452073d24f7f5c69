//! Frame-level scene graph data model: vocabularies, entity nodes, labeled
//! relationship edges, and their JSON ingestion.
//!
//! All types are immutable value types after validation; parsing many frames
//! in parallel is safe. Class names are resolved to stable indices (position
//! in the vocabulary's ordered lists).

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};
use thiserror::Error;

const BBOX_EPS: f32 = 1e-6;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("duplicate class name {0:?}")]
    DuplicateClass(String),
    #[error("human class {0:?} is not in the object vocabulary")]
    UnknownHumanClass(String),
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("unknown class {0:?} in frame {1:?}")]
    UnknownClass(String, String),
    #[error("edge references missing node id {node} in frame {frame:?}")]
    DanglingEdge { frame: String, node: u32 },
    #[error("duplicate node id {node} in frame {frame:?}")]
    DuplicateNodeId { frame: String, node: u32 },
    #[error("malformed bbox in frame {frame:?}, node {node}: {reason}")]
    MalformedBBox {
        frame: String,
        node: u32,
        reason: String,
    },
    #[error("self-loop edge on node {node} in frame {frame:?}")]
    SelfLoop { frame: String, node: u32 },
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Ordered object-class and predicate-class vocabularies.
///
/// Indices are stable: class index = position in the ordered list. The
/// reference configuration is 150 object categories and 50 predicates, but
/// sizes are fully configurable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    object_classes: Vec<String>,
    predicate_classes: Vec<String>,
    human_class_indices: BTreeSet<usize>,
}

impl Vocabulary {
    pub fn new(
        object_classes: Vec<String>,
        predicate_classes: Vec<String>,
        human_classes: Vec<String>,
    ) -> Result<Self> {
        for list in [&object_classes, &predicate_classes] {
            let mut seen = HashSet::new();
            for name in list {
                if !seen.insert(name.as_str()) {
                    return Err(GraphError::DuplicateClass(name.clone()));
                }
            }
        }
        let mut human_class_indices = BTreeSet::new();
        for h in &human_classes {
            match object_classes.iter().position(|c| c == h) {
                Some(i) => {
                    human_class_indices.insert(i);
                }
                None => return Err(GraphError::UnknownHumanClass(h.clone())),
            }
        }
        Ok(Vocabulary {
            object_classes,
            predicate_classes,
            human_class_indices,
        })
    }

    pub fn n_objects(&self) -> usize {
        self.object_classes.len()
    }

    pub fn n_predicates(&self) -> usize {
        self.predicate_classes.len()
    }

    pub fn object_name(&self, index: usize) -> &str {
        &self.object_classes[index]
    }

    pub fn predicate_name(&self, index: usize) -> &str {
        &self.predicate_classes[index]
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.object_classes.iter().position(|c| c == name)
    }

    pub fn predicate_index(&self, name: &str) -> Option<usize> {
        self.predicate_classes.iter().position(|c| c == name)
    }

    pub fn is_human_class(&self, class_index: usize) -> bool {
        self.human_class_indices.contains(&class_index)
    }

    pub fn object_classes(&self) -> &[String] {
        &self.object_classes
    }

    pub fn predicate_classes(&self) -> &[String] {
        &self.predicate_classes
    }

    pub fn human_class_names(&self) -> Vec<&str> {
        self.human_class_indices
            .iter()
            .map(|&i| self.object_classes[i].as_str())
            .collect()
    }
}

/// Axis-aligned bounding box in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
}

impl BBox {
    pub fn area(&self) -> f32 {
        self.w * self.h
    }

    fn validate(&self, frame: &str, node: u32) -> Result<()> {
        let reason = if !(self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()) {
            Some("non-finite coordinate".to_string())
        } else if self.w <= 0.0 || self.h <= 0.0 {
            Some(format!("non-positive extent w={} h={}", self.w, self.h))
        } else if self.x < 0.0 || self.y < 0.0 {
            Some(format!("negative origin x={} y={}", self.x, self.y))
        } else if self.x + self.w > 1.0 + BBOX_EPS || self.y + self.h > 1.0 + BBOX_EPS {
            Some(format!(
                "extends past the unit square: x+w={} y+h={}",
                self.x + self.w,
                self.y + self.h
            ))
        } else {
            None
        };
        match reason {
            Some(reason) => Err(GraphError::MalformedBBox {
                frame: frame.to_string(),
                node,
                reason,
            }),
            None => Ok(()),
        }
    }
}

/// One detected entity in a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityNode {
    pub node_id: u32,
    pub class_index: usize,
    pub bbox: BBox,
}

/// One labeled relationship. The (subject, predicate, object) ordering is
/// annotation metadata; message passing treats the edge as undirected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub subject_id: u32,
    pub predicate_index: usize,
    pub object_id: u32,
}

/// A validated scene graph for one frame. May contain zero human nodes;
/// downstream policy decides what to do with those.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSceneGraph {
    pub frame_id: String,
    pub nodes: Vec<EntityNode>,
    pub edges: Vec<RelationEdge>,
}

impl FrameSceneGraph {
    pub fn node(&self, node_id: u32) -> Option<&EntityNode> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }
}

// ---- JSON wire schemas ----

#[derive(Deserialize)]
struct VocabularyDoc {
    objects: Vec<String>,
    predicates: Vec<String>,
    #[serde(default)]
    human_classes: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct ObjectDoc {
    id: u32,
    label: String,
    bbox: [f32; 4],
}

#[derive(Serialize, Deserialize)]
struct RelationshipDoc {
    subject: u32,
    predicate: String,
    object: u32,
}

#[derive(Serialize, Deserialize)]
struct FrameDoc {
    frame_id: String,
    objects: Vec<ObjectDoc>,
    relationships: Vec<RelationshipDoc>,
}

/// Parses a vocabulary document:
/// `{"objects": [str], "predicates": [str], "human_classes": [str]?}`.
/// When `human_classes` is absent it defaults to `["person"]`.
pub fn parse_vocabulary(doc: &str) -> Result<Vocabulary> {
    let parsed: VocabularyDoc =
        serde_json::from_str(doc).map_err(|e| GraphError::MalformedDocument(e.to_string()))?;
    let human = parsed
        .human_classes
        .unwrap_or_else(|| vec!["person".to_string()]);
    Vocabulary::new(parsed.objects, parsed.predicates, human)
}

/// Parses and validates one frame document against a vocabulary. Bounding
/// boxes may be given in pixels; pass `image_size = Some((w, h))` to
/// normalize. Unknown predicates are rejected, never dropped, and self-loop
/// edges are rejected because the encoder already carries a self term.
pub fn parse_frame_graph(
    doc: &str,
    vocab: &Vocabulary,
    image_size: Option<(f32, f32)>,
) -> Result<FrameSceneGraph> {
    let parsed: FrameDoc =
        serde_json::from_str(doc).map_err(|e| GraphError::MalformedDocument(e.to_string()))?;
    frame_from_doc(parsed, vocab, image_size)
}

fn frame_from_doc(
    parsed: FrameDoc,
    vocab: &Vocabulary,
    image_size: Option<(f32, f32)>,
) -> Result<FrameSceneGraph> {
    let frame_id = parsed.frame_id;
    let mut nodes = Vec::with_capacity(parsed.objects.len());
    let mut ids = HashMap::new();
    for obj in parsed.objects {
        if ids.insert(obj.id, ()).is_some() {
            return Err(GraphError::DuplicateNodeId {
                frame: frame_id.clone(),
                node: obj.id,
            });
        }
        let class_index = vocab
            .object_index(&obj.label)
            .ok_or_else(|| GraphError::UnknownClass(obj.label.clone(), frame_id.clone()))?;
        let [mut x, mut y, mut w, mut h] = obj.bbox;
        if let Some((iw, ih)) = image_size {
            x /= iw;
            w /= iw;
            y /= ih;
            h /= ih;
        }
        let bbox = BBox { x, y, w, h };
        bbox.validate(&frame_id, obj.id)?;
        nodes.push(EntityNode {
            node_id: obj.id,
            class_index,
            bbox,
        });
    }
    let mut edges = Vec::with_capacity(parsed.relationships.len());
    for rel in parsed.relationships {
        if rel.subject == rel.object {
            return Err(GraphError::SelfLoop {
                frame: frame_id.clone(),
                node: rel.subject,
            });
        }
        for end in [rel.subject, rel.object] {
            if !ids.contains_key(&end) {
                return Err(GraphError::DanglingEdge {
                    frame: frame_id.clone(),
                    node: end,
                });
            }
        }
        let predicate_index = vocab
            .predicate_index(&rel.predicate)
            .ok_or_else(|| GraphError::UnknownClass(rel.predicate.clone(), frame_id.clone()))?;
        edges.push(RelationEdge {
            subject_id: rel.subject,
            predicate_index,
            object_id: rel.object,
        });
    }
    Ok(FrameSceneGraph {
        frame_id,
        nodes,
        edges,
    })
}

/// Serializes a frame back into the wire schema. Round-trips through
/// [`parse_frame_graph`] field-for-field.
pub fn frame_to_json(g: &FrameSceneGraph, vocab: &Vocabulary) -> String {
    let doc = FrameDoc {
        frame_id: g.frame_id.clone(),
        objects: g
            .nodes
            .iter()
            .map(|n| ObjectDoc {
                id: n.node_id,
                label: vocab.object_name(n.class_index).to_string(),
                bbox: [n.bbox.x, n.bbox.y, n.bbox.w, n.bbox.h],
            })
            .collect(),
        relationships: g
            .edges
            .iter()
            .map(|e| RelationshipDoc {
                subject: e.subject_id,
                predicate: vocab.predicate_name(e.predicate_index).to_string(),
                object: e.object_id,
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("frame serialization cannot fail")
}

/// `(node_count, edge_count, human_count)` for one frame.
pub fn frame_stats(g: &FrameSceneGraph, vocab: &Vocabulary) -> (usize, usize, usize) {
    let humans = g
        .nodes
        .iter()
        .filter(|n| vocab.is_human_class(n.class_index))
        .count();
    (g.nodes.len(), g.edges.len(), humans)
}
