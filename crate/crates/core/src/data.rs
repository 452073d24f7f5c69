//! Dataset assembly: QA samples, answer sets, split manifests, video
//! documents, and question-vector sources.
//!
//! Directory layout (what the synthetic generator emits and the trainer
//! consumes):
//!
//! ```text
//! data/
//!   vocab.json      {"objects": [...], "predicates": [...], "human_classes"?}
//!   answers.json    ordered array of K answer strings
//!   qa.jsonl        one {"qa_id","video_id","question","answer","category"} per line
//!   split.json      {"train": [video_id], "eval": [video_id]}   (optional)
//!   videos/*.json   {"video_id", "frames": [frame schema]}
//! ```

use crate::question::{self, EmbeddingError};
use crate::scenegraph::{self, FrameSceneGraph, GraphError, Vocabulary};
use crate::videograph::{build_video_graph, NoHumanPolicy, VideoGraph, VideoGraphError};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("qa {qa_id:?} references unknown video {video_id:?}")]
    MissingVideo { qa_id: String, video_id: String },
    #[error("qa {qa_id:?} has answer {answer:?} not in the answer set")]
    UnknownAnswer { qa_id: String, answer: String },
    #[error("qa {qa_id:?} has unknown category {category:?}")]
    UnknownCategory { qa_id: String, category: String },
    #[error("split leakage: videos appear in both train and eval: {0:?}")]
    SplitLeakage(Vec<String>),
    #[error("video {0:?} is missing from the split manifest")]
    UnlistedVideo(String),
    #[error("duplicate qa_id {0:?}")]
    DuplicateQa(String),
    #[error("duplicate answer {0:?} in the answer set")]
    DuplicateAnswer(String),
    #[error("no embedding found for qa {0:?}")]
    MissingEmbedding(String),
    #[error("malformed {path}: {message}")]
    Malformed { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    VideoGraph(#[from] VideoGraphError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// AGQA-style reasoning categories plus an `other` bucket for unlabeled
/// samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionCategory {
    ObjRel,
    RelAction,
    ObjAction,
    Superlative,
    Sequencing,
    Exists,
    Duration,
    Activity,
    Other,
}

impl QuestionCategory {
    pub const ALL: [QuestionCategory; 9] = [
        QuestionCategory::ObjRel,
        QuestionCategory::RelAction,
        QuestionCategory::ObjAction,
        QuestionCategory::Superlative,
        QuestionCategory::Sequencing,
        QuestionCategory::Exists,
        QuestionCategory::Duration,
        QuestionCategory::Activity,
        QuestionCategory::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionCategory::ObjRel => "obj-rel",
            QuestionCategory::RelAction => "rel-action",
            QuestionCategory::ObjAction => "obj-action",
            QuestionCategory::Superlative => "superlative",
            QuestionCategory::Sequencing => "sequencing",
            QuestionCategory::Exists => "exists",
            QuestionCategory::Duration => "duration",
            QuestionCategory::Activity => "activity",
            QuestionCategory::Other => "other",
        }
    }

    /// Empty or absent labels fall into `Other`; anything else unknown is an
    /// error.
    pub fn parse(label: &str) -> Option<QuestionCategory> {
        if label.is_empty() {
            return Some(QuestionCategory::Other);
        }
        QuestionCategory::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == label)
    }
}

/// One question-answer sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaSample {
    pub qa_id: String,
    pub video_id: String,
    pub question_text: String,
    pub answer_index: usize,
    pub category: QuestionCategory,
}

/// Where question vectors come from.
#[derive(Debug, Clone)]
pub enum QuestionSource {
    /// Deterministic hash embedder at the given width.
    ToyHash { d_q: usize },
    /// Precomputed vectors in a "GHRQ" file.
    File { path: PathBuf, d_q: usize },
}

impl QuestionSource {
    pub fn d_q(&self) -> usize {
        match self {
            QuestionSource::ToyHash { d_q } => *d_q,
            QuestionSource::File { d_q, .. } => *d_q,
        }
    }
}

/// A fully validated dataset: graphs built, answers resolved, question
/// vectors materialized, splits checked for leakage.
pub struct Dataset {
    pub vocab: Vocabulary,
    pub answers: Vec<String>,
    pub video_ids: Vec<String>,
    pub videos: Vec<VideoGraph>,
    pub video_index: HashMap<String, usize>,
    pub train: Vec<QaSample>,
    pub eval: Vec<QaSample>,
    pub embeddings: HashMap<String, Vec<f32>>,
    pub d_q: usize,
}

impl Dataset {
    pub fn n_answers(&self) -> usize {
        self.answers.len()
    }

    pub fn video_of(&self, sample: &QaSample) -> &VideoGraph {
        &self.videos[self.video_index[&sample.video_id]]
    }

    pub fn split(&self, name: &str) -> &[QaSample] {
        if name == "train" {
            &self.train
        } else {
            &self.eval
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct VideoDoc {
    pub video_id: String,
    pub frames: Vec<serde_json::Value>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct QaRecord {
    pub qa_id: String,
    pub video_id: String,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub category: String,
}

#[derive(Serialize, Deserialize, Default)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub eval: Vec<String>,
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| DataError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Parses one video document (id plus frames in temporal order).
pub fn parse_video_doc(
    doc: &str,
    vocab: &Vocabulary,
) -> Result<(String, Vec<FrameSceneGraph>)> {
    let parsed: VideoDoc = serde_json::from_str(doc).map_err(|e| DataError::Malformed {
        path: "<video doc>".into(),
        message: e.to_string(),
    })?;
    let mut frames = Vec::with_capacity(parsed.frames.len());
    for frame_value in &parsed.frames {
        let frame_json = serde_json::to_string(frame_value).expect("value serializes");
        frames.push(scenegraph::parse_frame_graph(&frame_json, vocab, None)?);
    }
    Ok((parsed.video_id, frames))
}

/// Loads the answer set: an ordered JSON array of unique strings.
pub fn load_answers(path: &Path) -> Result<Vec<String>> {
    let text = read_to_string(path)?;
    let answers: Vec<String> = serde_json::from_str(&text).map_err(|e| DataError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    for a in &answers {
        if !seen.insert(a.as_str()) {
            return Err(DataError::DuplicateAnswer(a.clone()));
        }
    }
    Ok(answers)
}

/// Loads and validates a dataset directory. With a split manifest present,
/// train and eval video sets must be disjoint and cover every referenced
/// video; without one, every sample lands in train.
pub fn load_dataset(
    dir: &Path,
    source: &QuestionSource,
    policy: NoHumanPolicy,
) -> Result<Dataset> {
    let vocab = scenegraph::parse_vocabulary(&read_to_string(&dir.join("vocab.json"))?)?;
    let answers = load_answers(&dir.join("answers.json"))?;

    // videos, in sorted file order for determinism
    let videos_dir = dir.join("videos");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&videos_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut video_ids = Vec::with_capacity(paths.len());
    let mut videos = Vec::with_capacity(paths.len());
    let mut video_index = HashMap::new();
    for p in &paths {
        let (id, frames) = parse_video_doc(&read_to_string(p)?, &vocab)?;
        let vg = build_video_graph(&id, frames, &vocab, policy)?;
        video_index.insert(id.clone(), videos.len());
        video_ids.push(id);
        videos.push(vg);
    }

    // qa records
    let qa_text = read_to_string(&dir.join("qa.jsonl"))?;
    let mut samples = Vec::new();
    let mut seen_qa = HashSet::new();
    for (lineno, line) in qa_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QaRecord = serde_json::from_str(line).map_err(|e| DataError::Malformed {
            path: format!("qa.jsonl:{}", lineno + 1),
            message: e.to_string(),
        })?;
        if !seen_qa.insert(rec.qa_id.clone()) {
            return Err(DataError::DuplicateQa(rec.qa_id));
        }
        if !video_index.contains_key(&rec.video_id) {
            return Err(DataError::MissingVideo {
                qa_id: rec.qa_id,
                video_id: rec.video_id,
            });
        }
        let answer_index =
            answers
                .iter()
                .position(|a| a == &rec.answer)
                .ok_or_else(|| DataError::UnknownAnswer {
                    qa_id: rec.qa_id.clone(),
                    answer: rec.answer.clone(),
                })?;
        let category =
            QuestionCategory::parse(&rec.category).ok_or_else(|| DataError::UnknownCategory {
                qa_id: rec.qa_id.clone(),
                category: rec.category.clone(),
            })?;
        samples.push(QaSample {
            qa_id: rec.qa_id,
            video_id: rec.video_id,
            question_text: rec.question,
            answer_index,
            category,
        });
    }

    // question vectors
    let d_q = source.d_q();
    let mut embeddings = HashMap::with_capacity(samples.len());
    match source {
        QuestionSource::ToyHash { d_q } => {
            for s in &samples {
                embeddings.insert(s.qa_id.clone(), question::toy_embed(&s.question_text, *d_q)?);
            }
        }
        QuestionSource::File { path, d_q } => {
            let loaded = question::load_embeddings(path, *d_q)?;
            for s in &samples {
                let e = loaded
                    .get(&s.qa_id)
                    .ok_or_else(|| DataError::MissingEmbedding(s.qa_id.clone()))?;
                embeddings.insert(s.qa_id.clone(), e.vector.clone());
            }
        }
    }

    // split assignment
    let split_path = dir.join("split.json");
    let (train, eval) = if split_path.exists() {
        let manifest: SplitManifest = serde_json::from_str(&read_to_string(&split_path)?)
            .map_err(|e| DataError::Malformed {
                path: split_path.display().to_string(),
                message: e.to_string(),
            })?;
        let train_set: HashSet<&str> = manifest.train.iter().map(|s| s.as_str()).collect();
        let eval_set: HashSet<&str> = manifest.eval.iter().map(|s| s.as_str()).collect();
        let mut leaked: Vec<String> = train_set
            .intersection(&eval_set)
            .map(|s| s.to_string())
            .collect();
        if !leaked.is_empty() {
            leaked.sort();
            return Err(DataError::SplitLeakage(leaked));
        }
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for s in samples {
            if train_set.contains(s.video_id.as_str()) {
                train.push(s);
            } else if eval_set.contains(s.video_id.as_str()) {
                eval.push(s);
            } else {
                return Err(DataError::UnlistedVideo(s.video_id));
            }
        }
        (train, eval)
    } else {
        (samples, Vec::new())
    };

    Ok(Dataset {
        vocab,
        answers,
        video_ids,
        videos,
        video_index,
        train,
        eval,
        embeddings,
        d_q,
    })
}
