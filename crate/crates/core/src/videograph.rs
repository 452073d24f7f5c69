//! Human-rooted video-level graph assembly.
//!
//! One human node per frame is designated the local root; every local root
//! links to a single global root node, so any two frames' humans sit exactly
//! two hops apart. Construction is pure and deterministic; the result is
//! immutable. Building graphs for different videos is embarrassingly
//! parallel.

use crate::scenegraph::{FrameSceneGraph, GraphError, Vocabulary};
use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Reserved relation label for human-to-global-root links, distinct from all
/// vocabulary predicates.
pub const ROOT_LINK_LABEL: &str = "root-link";

#[derive(Debug, Error)]
pub enum VideoGraphError {
    #[error("no input frames")]
    NoFrames,
    #[error("all frames skipped: no frame contains a human node")]
    AllFramesSkipped,
    #[error("invalid clip length {0}; must be >= 1")]
    InvalidClipLength(usize),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("bad magic: expected GHRG")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated or oversized cache file: {0}")]
    Truncated(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VideoGraphError>;

/// How to treat frames with no human node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoHumanPolicy {
    /// Drop the frame from the video graph (default).
    Skip,
    /// Insert a zero-featured placeholder human linked only via the root edge.
    SyntheticRoot,
}

/// The designated local root of one retained frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HumanRoot {
    Node(u32),
    Synthetic,
}

/// Reference to a node of the assembled video graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef {
    Entity { frame: usize, node_id: u32 },
    SyntheticHuman { frame: usize },
    GlobalRoot,
}

/// Picks the local human root of a frame: the human node with the largest
/// bbox area, ties broken by smallest node id. Returns `None` when the frame
/// has no human node.
pub fn select_human_root(g: &FrameSceneGraph, vocab: &Vocabulary) -> Option<u32> {
    let mut best: Option<(f32, u32)> = None;
    for n in &g.nodes {
        if !vocab.is_human_class(n.class_index) {
            continue;
        }
        let area = n.bbox.area();
        best = match best {
            None => Some((area, n.node_id)),
            Some((ba, bi)) => {
                if area > ba || (area == ba && n.node_id < bi) {
                    Some((area, n.node_id))
                } else {
                    Some((ba, bi))
                }
            }
        };
    }
    best.map(|(_, id)| id)
}

/// The assembled human-rooted video-level graph. Frames listed here are the
/// retained ones; `skipped_frames` counts inputs dropped under
/// [`NoHumanPolicy::Skip`]. Node layout is flat: frame blocks in order (a
/// synthetic human, when present, sits at the end of its frame block), then
/// the global root last.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoGraph {
    pub video_id: String,
    pub frames: Vec<FrameSceneGraph>,
    pub human_roots: Vec<HumanRoot>,
    pub skipped_frames: usize,
    frame_offsets: Vec<usize>,
    frame_sizes: Vec<usize>,
    total_nodes: usize,
}

/// Links all frame graphs to a single global root via their human roots.
pub fn build_video_graph(
    video_id: &str,
    frames: Vec<FrameSceneGraph>,
    vocab: &Vocabulary,
    policy: NoHumanPolicy,
) -> Result<VideoGraph> {
    if frames.is_empty() {
        return Err(VideoGraphError::NoFrames);
    }
    let mut retained = Vec::with_capacity(frames.len());
    let mut human_roots = Vec::with_capacity(frames.len());
    let mut skipped = 0usize;
    for f in frames {
        match select_human_root(&f, vocab) {
            Some(id) => {
                retained.push(f);
                human_roots.push(HumanRoot::Node(id));
            }
            None => match policy {
                NoHumanPolicy::Skip => skipped += 1,
                NoHumanPolicy::SyntheticRoot => {
                    retained.push(f);
                    human_roots.push(HumanRoot::Synthetic);
                }
            },
        }
    }
    if retained.is_empty() {
        return Err(VideoGraphError::AllFramesSkipped);
    }
    let mut frame_offsets = Vec::with_capacity(retained.len());
    let mut frame_sizes = Vec::with_capacity(retained.len());
    let mut offset = 0usize;
    for (f, root) in retained.iter().zip(&human_roots) {
        let size = f.nodes.len() + usize::from(matches!(root, HumanRoot::Synthetic));
        frame_offsets.push(offset);
        frame_sizes.push(size);
        offset += size;
    }
    Ok(VideoGraph {
        video_id: video_id.to_string(),
        frames: retained,
        human_roots,
        skipped_frames: skipped,
        frame_offsets,
        frame_sizes,
        total_nodes: offset + 1,
    })
}

impl VideoGraph {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// All nodes including synthetic humans and the global root.
    pub fn total_nodes(&self) -> usize {
        self.total_nodes
    }

    /// All edges: intra-frame relationships plus one root link per frame.
    pub fn total_edges(&self) -> usize {
        self.frames.iter().map(|f| f.edges.len()).sum::<usize>() + self.frames.len()
    }

    /// Flat index of the global root (always the last node).
    pub fn global_root_index(&self) -> usize {
        self.total_nodes - 1
    }

    /// Flat index of frame `i`'s first node.
    pub fn frame_offset(&self, frame: usize) -> usize {
        self.frame_offsets[frame]
    }

    /// Node count of frame `i`'s block (including a synthetic human slot).
    pub fn frame_size(&self, frame: usize) -> usize {
        self.frame_sizes[frame]
    }

    /// Flat index of frame `i`'s human root.
    pub fn human_root_index(&self, frame: usize) -> usize {
        match self.human_roots[frame] {
            HumanRoot::Node(id) => self.flat_index_of(frame, id).expect("root id must resolve"),
            HumanRoot::Synthetic => self.frame_offsets[frame] + self.frames[frame].nodes.len(),
        }
    }

    fn flat_index_of(&self, frame: usize, node_id: u32) -> Option<usize> {
        self.frames[frame]
            .nodes
            .iter()
            .position(|n| n.node_id == node_id)
            .map(|p| self.frame_offsets[frame] + p)
    }

    pub fn resolve(&self, r: NodeRef) -> Result<usize> {
        match r {
            NodeRef::GlobalRoot => Ok(self.global_root_index()),
            NodeRef::SyntheticHuman { frame } => {
                if frame < self.frames.len()
                    && matches!(self.human_roots[frame], HumanRoot::Synthetic)
                {
                    Ok(self.human_root_index(frame))
                } else {
                    Err(VideoGraphError::UnknownNode(format!("{r:?}")))
                }
            }
            NodeRef::Entity { frame, node_id } => self
                .frames
                .get(frame)
                .and_then(|_| self.flat_index_of(frame, node_id))
                .ok_or_else(|| VideoGraphError::UnknownNode(format!("{r:?}"))),
        }
    }

    /// Undirected adjacency over flat node indices; `with_root_links` toggles
    /// the human-to-global-root edges.
    pub fn adjacency(&self, with_root_links: bool) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.total_nodes];
        for (fi, f) in self.frames.iter().enumerate() {
            for e in &f.edges {
                let a = self.flat_index_of(fi, e.subject_id).expect("validated edge");
                let b = self.flat_index_of(fi, e.object_id).expect("validated edge");
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        if with_root_links {
            let root = self.global_root_index();
            for fi in 0..self.frames.len() {
                let h = self.human_root_index(fi);
                adj[h].push(root);
                adj[root].push(h);
            }
        }
        adj
    }

    /// Shortest undirected path length between two nodes, or `None` when
    /// unreachable.
    pub fn bfs_distance(&self, a: NodeRef, b: NodeRef) -> Result<Option<usize>> {
        self.bfs(a, b, true)
    }

    /// BFS distance with the global root excluded from the graph. Used to
    /// check that the root is the only cross-frame path.
    pub fn bfs_distance_without_root(&self, a: NodeRef, b: NodeRef) -> Result<Option<usize>> {
        self.bfs(a, b, false)
    }

    fn bfs(&self, a: NodeRef, b: NodeRef, with_root: bool) -> Result<Option<usize>> {
        let (sa, sb) = (self.resolve(a)?, self.resolve(b)?);
        if !with_root && (sa == self.global_root_index() || sb == self.global_root_index()) {
            return Err(VideoGraphError::UnknownNode(
                "global root excluded from this query".into(),
            ));
        }
        if sa == sb {
            return Ok(Some(0));
        }
        let adj = self.adjacency(with_root);
        let mut dist = vec![usize::MAX; self.total_nodes];
        let mut queue = VecDeque::new();
        dist[sa] = 0;
        queue.push_back(sa);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !with_root && v == self.global_root_index() {
                    continue;
                }
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    if v == sb {
                        return Ok(Some(dist[v]));
                    }
                    queue.push_back(v);
                }
            }
        }
        Ok(None)
    }
}

/// Contiguous, non-overlapping frame windows of fixed length; the last
/// window repeats its final frame index as padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipPlan {
    pub clip_length: usize,
    pub clips: Vec<Vec<usize>>,
}

pub fn plan_clips(vg: &VideoGraph, clip_length: usize) -> Result<ClipPlan> {
    if clip_length == 0 {
        return Err(VideoGraphError::InvalidClipLength(clip_length));
    }
    let n = vg.n_frames();
    let n_clips = n.div_ceil(clip_length);
    let mut clips = Vec::with_capacity(n_clips);
    for c in 0..n_clips {
        let start = c * clip_length;
        let clip: Vec<usize> = (0..clip_length)
            .map(|j| (start + j).min(n - 1))
            .collect();
        clips.push(clip);
    }
    Ok(ClipPlan {
        clip_length,
        clips,
    })
}

// ---- binary cache ("GHRG") ----

const GHRG_MAGIC: &[u8; 4] = b"GHRG";
const GHRG_VERSION: u8 = 1;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(VideoGraphError::Truncated(format!(
                "need {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|e| VideoGraphError::Truncated(format!("invalid utf-8 string: {e}")))
    }
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes a video graph plus its vocabulary into the self-contained
/// "GHRG" cache format.
pub fn encode_video_graph_cache(vg: &VideoGraph, vocab: &Vocabulary) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(GHRG_MAGIC);
    out.push(GHRG_VERSION);
    out.extend_from_slice(&(vg.skipped_frames as u32).to_le_bytes());
    out.extend_from_slice(&(vocab.n_objects() as u32).to_le_bytes());
    for name in vocab.object_classes() {
        put_string(&mut out, name);
    }
    out.extend_from_slice(&(vocab.n_predicates() as u32).to_le_bytes());
    for name in vocab.predicate_classes() {
        put_string(&mut out, name);
    }
    let humans = vocab.human_class_names();
    out.extend_from_slice(&(humans.len() as u32).to_le_bytes());
    for name in humans {
        put_string(&mut out, name);
    }
    put_string(&mut out, &vg.video_id);
    out.extend_from_slice(&(vg.frames.len() as u32).to_le_bytes());
    for (f, root) in vg.frames.iter().zip(&vg.human_roots) {
        put_string(&mut out, &f.frame_id);
        out.extend_from_slice(&(f.nodes.len() as u32).to_le_bytes());
        for n in &f.nodes {
            out.extend_from_slice(&n.node_id.to_le_bytes());
            out.extend_from_slice(&(n.class_index as u32).to_le_bytes());
            for v in [n.bbox.x, n.bbox.y, n.bbox.w, n.bbox.h] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(f.edges.len() as u32).to_le_bytes());
        for e in &f.edges {
            out.extend_from_slice(&e.subject_id.to_le_bytes());
            out.extend_from_slice(&(e.predicate_index as u32).to_le_bytes());
            out.extend_from_slice(&e.object_id.to_le_bytes());
        }
        match root {
            HumanRoot::Node(id) => {
                out.push(0);
                out.extend_from_slice(&id.to_le_bytes());
            }
            HumanRoot::Synthetic => out.push(1),
        }
    }
    out
}

/// Decodes a "GHRG" cache buffer. Validates magic, version, and that the
/// buffer is consumed exactly.
pub fn decode_video_graph_cache(buf: &[u8]) -> Result<(VideoGraph, Vocabulary)> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != GHRG_MAGIC {
        return Err(VideoGraphError::BadMagic);
    }
    let version = c.u8()?;
    if version != GHRG_VERSION {
        return Err(VideoGraphError::UnsupportedVersion(version));
    }
    let skipped = c.u32()? as usize;
    let n_obj = c.u32()? as usize;
    let mut objects = Vec::with_capacity(n_obj);
    for _ in 0..n_obj {
        objects.push(c.string()?);
    }
    let n_pred = c.u32()? as usize;
    let mut predicates = Vec::with_capacity(n_pred);
    for _ in 0..n_pred {
        predicates.push(c.string()?);
    }
    let n_human = c.u32()? as usize;
    let mut humans = Vec::with_capacity(n_human);
    for _ in 0..n_human {
        humans.push(c.string()?);
    }
    let vocab = Vocabulary::new(objects, predicates, humans)?;
    let video_id = c.string()?;
    let n_frames = c.u32()? as usize;
    let mut frames = Vec::with_capacity(n_frames);
    let mut roots = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let frame_id = c.string()?;
        let n_nodes = c.u32()? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let node_id = c.u32()?;
            let class_index = c.u32()? as usize;
            let bbox = crate::scenegraph::BBox {
                x: c.f32()?,
                y: c.f32()?,
                w: c.f32()?,
                h: c.f32()?,
            };
            nodes.push(crate::scenegraph::EntityNode {
                node_id,
                class_index,
                bbox,
            });
        }
        let n_edges = c.u32()? as usize;
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            edges.push(crate::scenegraph::RelationEdge {
                subject_id: c.u32()?,
                predicate_index: c.u32()? as usize,
                object_id: c.u32()?,
            });
        }
        frames.push(FrameSceneGraph {
            frame_id,
            nodes,
            edges,
        });
        roots.push(match c.u8()? {
            0 => HumanRoot::Node(c.u32()?),
            1 => HumanRoot::Synthetic,
            t => {
                return Err(VideoGraphError::Truncated(format!(
                    "unknown human-root tag {t}"
                )))
            }
        });
    }
    if c.pos != buf.len() {
        return Err(VideoGraphError::Truncated(format!(
            "{} trailing bytes",
            buf.len() - c.pos
        )));
    }
    let mut frame_offsets = Vec::with_capacity(frames.len());
    let mut frame_sizes = Vec::with_capacity(frames.len());
    let mut offset = 0usize;
    for (f, root) in frames.iter().zip(&roots) {
        let size = f.nodes.len() + usize::from(matches!(root, HumanRoot::Synthetic));
        frame_offsets.push(offset);
        frame_sizes.push(size);
        offset += size;
    }
    Ok((
        VideoGraph {
            video_id,
            frames,
            human_roots: roots,
            skipped_frames: skipped,
            frame_offsets,
            frame_sizes,
            total_nodes: offset + 1,
        },
        vocab,
    ))
}

pub fn write_video_graph_cache(path: &Path, vg: &VideoGraph, vocab: &Vocabulary) -> Result<()> {
    let bytes = encode_video_graph_cache(vg, vocab);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_video_graph_cache(path: &Path) -> Result<(VideoGraph, Vocabulary)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_video_graph_cache(&buf)
}
