//! Seeded synthetic dataset generator and the rule-based answer oracle.
//!
//! Videos contain one person per frame plus a few objects; questions follow
//! two templates whose answers are deterministic functions of the graphs:
//!
//! - standard: `what is the person <pred> ?` — exactly one object class is
//!   ever linked to the person via `<pred>` in the video.
//! - cross-frame: `what did the person <p1> and <p2> ?` — exactly one class
//!   is linked via `<p1>` in some frame and `<p2>` in a different frame,
//!   never both in the same frame, so the answer needs evidence from two
//!   frames.
//!
//! [`oracle_answer`] recovers the answer for either template by scanning the
//! graphs, which pins generator correctness at 100% oracle accuracy. Same
//! seed, same bytes: every random draw flows from one `ChaCha8` stream per
//! video.

#![allow(clippy::needless_range_loop)]

use crate::data::{QaRecord, QuestionCategory, SplitManifest, VideoDoc};
use crate::scenegraph::{BBox, EntityNode, FrameSceneGraph, RelationEdge, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

const OBJECT_WORDS: [&str; 30] = [
    "cup", "table", "food", "phone", "book", "chair", "bottle", "bag", "laptop", "door", "box",
    "towel", "shoe", "pillow", "blanket", "broom", "mirror", "window", "dish", "clothes",
    "sandwich", "picture", "vacuum", "sofa", "floor", "light", "closet", "groceries", "camera",
    "cabinet",
];

const PREDICATE_WORDS: [&str; 16] = [
    "holding", "touching", "wearing", "carrying", "opening", "closing", "eating", "drinking",
    "sitting_on", "standing_on", "lying_on", "watching", "throwing", "washing", "grabbing",
    "leaning_on",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_videos: usize,
    pub frames_per_video: usize,
    /// Object classes including "person".
    pub n_objects: usize,
    pub n_predicates: usize,
    /// Answer-set size K; the first K non-person classes are the candidates.
    pub n_answers: usize,
    pub questions_per_video: usize,
    /// Answers require evidence from two different frames.
    pub cross_frame: bool,
    /// Fraction of videos held out for evaluation.
    pub eval_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            n_videos: 50,
            frames_per_video: 8,
            n_objects: 10,
            n_predicates: 5,
            n_answers: 8,
            questions_per_video: 2,
            cross_frame: false,
            eval_fraction: 0.2,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SynthStats {
    pub n_videos: usize,
    pub n_samples: usize,
    pub n_train_videos: usize,
    pub n_eval_videos: usize,
    pub answer_counts: BTreeMap<String, usize>,
    pub cross_frame: bool,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n_videos == 0 || self.frames_per_video == 0 || self.questions_per_video == 0 {
            return Err(SynthError::InvalidSize("all counts must be >= 1".into()));
        }
        if self.n_answers < 2 {
            return Err(SynthError::InvalidSize(format!(
                "need at least 2 answers, got {}",
                self.n_answers
            )));
        }
        if self.n_objects < self.n_answers + 1 {
            return Err(SynthError::InvalidSize(format!(
                "need {} object classes (person + {} answers), got {}",
                self.n_answers + 1,
                self.n_answers,
                self.n_objects
            )));
        }
        let preds_needed = if self.cross_frame {
            2 * self.questions_per_video
        } else {
            self.questions_per_video
        };
        if self.n_predicates < preds_needed {
            return Err(SynthError::InvalidSize(format!(
                "need {} predicates for {} questions{}, got {}",
                preds_needed,
                self.questions_per_video,
                if self.cross_frame { " (cross-frame)" } else { "" },
                self.n_predicates
            )));
        }
        if self.cross_frame && self.frames_per_video < 2 {
            return Err(SynthError::InvalidSize(
                "cross-frame questions need at least 2 frames".into(),
            ));
        }
        Ok(())
    }

    pub fn object_names(&self) -> Vec<String> {
        let mut names = vec!["person".to_string()];
        for i in 0..self.n_objects - 1 {
            names.push(
                OBJECT_WORDS
                    .get(i)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| format!("object{i}")),
            );
        }
        names
    }

    pub fn predicate_names(&self) -> Vec<String> {
        (0..self.n_predicates)
            .map(|i| {
                PREDICATE_WORDS
                    .get(i)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| format!("pred{i}"))
            })
            .collect()
    }
}

fn random_bbox(rng: &mut ChaCha8Rng, large: bool) -> BBox {
    let (lo, hi) = if large { (0.3, 0.5) } else { (0.08, 0.3) };
    BBox {
        x: rng.gen_range(0.0..0.45),
        y: rng.gen_range(0.0..0.45),
        w: rng.gen_range(lo..hi),
        h: rng.gen_range(lo..hi),
    }
}

struct VideoPlan {
    frames: Vec<FrameSceneGraph>,
    questions: Vec<(String, String)>, // (question text, answer name)
}

fn generate_video(spec: &SynthSpec, video_index: usize, vocab: &Vocabulary) -> VideoPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(
        spec.seed ^ (video_index as u64).wrapping_mul(0x2545f4914f6cdd1d),
    );
    let q = spec.questions_per_video;
    let n_pred = spec.n_predicates;
    let k = spec.n_answers;

    // answers cycle round-robin across the dataset for class balance
    let answer_class = |qi: usize| 1 + (video_index * q + qi) % k;
    let preds_per_q = if spec.cross_frame { 2 } else { 1 };
    let base = rng.gen_range(0..n_pred);
    let question_preds: Vec<Vec<usize>> = (0..q)
        .map(|qi| {
            (0..preds_per_q)
                .map(|j| (base + qi * preds_per_q + j) % n_pred)
                .collect()
        })
        .collect();
    let used_preds: BTreeSet<usize> = question_preds.iter().flatten().copied().collect();
    let free_preds: Vec<usize> = (0..n_pred).filter(|p| !used_preds.contains(p)).collect();

    // per frame: list of (predicate, object class) edges hanging off the person
    let mut frame_links: Vec<Vec<(usize, usize)>> = vec![Vec::new(); spec.frames_per_video];

    // answer-class pool excluded from confuser/distractor duty in this video
    let video_answers: BTreeSet<usize> = (0..q).map(answer_class).collect();
    let spare_classes: Vec<usize> = (1..spec.n_objects)
        .filter(|c| !video_answers.contains(c))
        .collect();

    for qi in 0..q {
        let answer = answer_class(qi);
        if spec.cross_frame {
            let (p1, p2) = (question_preds[qi][0], question_preds[qi][1]);
            // evidence lands in two distinct frames
            let f1 = rng.gen_range(0..spec.frames_per_video);
            let mut f2 = rng.gen_range(0..spec.frames_per_video);
            while f2 == f1 {
                f2 = rng.gen_range(0..spec.frames_per_video);
            }
            frame_links[f1].push((p1, answer));
            frame_links[f2].push((p2, answer));
            // confusers: one class seen only with p1, another only with p2
            if spare_classes.len() >= 2 {
                let c1 = spare_classes[rng.gen_range(0..spare_classes.len())];
                let mut c2 = spare_classes[rng.gen_range(0..spare_classes.len())];
                while c2 == c1 {
                    c2 = spare_classes[rng.gen_range(0..spare_classes.len())];
                }
                let f3 = rng.gen_range(0..spec.frames_per_video);
                let f4 = rng.gen_range(0..spec.frames_per_video);
                frame_links[f3].push((p1, c1));
                frame_links[f4].push((p2, c2));
            }
        } else {
            let p = question_preds[qi][0];
            // guaranteed occurrence plus random repeats
            frame_links[qi % spec.frames_per_video].push((p, answer));
            for f in 0..spec.frames_per_video {
                if rng.gen_bool(0.35) {
                    frame_links[f].push((p, answer));
                }
            }
        }
    }

    // distractors: objects linked via free predicates, or left isolated
    for links in frame_links.iter_mut() {
        for _ in 0..rng.gen_range(1..=2) {
            let class = 1 + rng.gen_range(0..spec.n_objects - 1);
            if !free_preds.is_empty() && rng.gen_bool(0.7) {
                let p = free_preds[rng.gen_range(0..free_preds.len())];
                links.push((p, class));
            } else {
                // marker for an isolated object (no edge)
                links.push((usize::MAX, class));
            }
        }
    }

    let mut frames = Vec::with_capacity(spec.frames_per_video);
    for (fi, links) in frame_links.iter().enumerate() {
        let mut nodes = vec![EntityNode {
            node_id: 0,
            class_index: 0,
            bbox: random_bbox(&mut rng, true),
        }];
        let mut edges = Vec::new();
        for &(p, class) in links {
            let id = nodes.len() as u32;
            nodes.push(EntityNode {
                node_id: id,
                class_index: class,
                bbox: random_bbox(&mut rng, false),
            });
            if p != usize::MAX {
                edges.push(RelationEdge {
                    subject_id: 0,
                    predicate_index: p,
                    object_id: id,
                });
            }
        }
        // occasional object-object edge via a free predicate; the oracle only
        // counts human-incident links, so these are pure structure
        if nodes.len() >= 3 && !free_preds.is_empty() && rng.gen_bool(0.4) {
            edges.push(RelationEdge {
                subject_id: 1,
                predicate_index: free_preds[rng.gen_range(0..free_preds.len())],
                object_id: 2,
            });
        }
        frames.push(FrameSceneGraph {
            frame_id: format!("f{fi}"),
            nodes,
            edges,
        });
    }

    let questions = (0..q)
        .map(|qi| {
            let answer = vocab.object_name(answer_class(qi)).to_string();
            let text = if spec.cross_frame {
                format!(
                    "what did the person {} and {} ?",
                    vocab.predicate_name(question_preds[qi][0]),
                    vocab.predicate_name(question_preds[qi][1]),
                )
            } else {
                format!(
                    "what is the person {} ?",
                    vocab.predicate_name(question_preds[qi][0])
                )
            };
            (text, answer)
        })
        .collect();

    VideoPlan { frames, questions }
}

/// Scans the frames for the classes linked to a human node via each asked
/// predicate and returns the uniquely determined answer, or `None` when the
/// question does not resolve to exactly one class.
pub fn oracle_answer(
    frames: &[FrameSceneGraph],
    vocab: &Vocabulary,
    question: &str,
) -> Option<String> {
    let tokens: Vec<&str> = question.split_whitespace().collect();
    let linked = |pred_name: &str| -> BTreeSet<usize> {
        let Some(p) = vocab.predicate_index(pred_name) else {
            return BTreeSet::new();
        };
        let mut classes = BTreeSet::new();
        for f in frames {
            for e in &f.edges {
                if e.predicate_index != p {
                    continue;
                }
                let (Some(s), Some(o)) = (f.node(e.subject_id), f.node(e.object_id)) else {
                    continue;
                };
                match (
                    vocab.is_human_class(s.class_index),
                    vocab.is_human_class(o.class_index),
                ) {
                    (true, false) => {
                        classes.insert(o.class_index);
                    }
                    (false, true) => {
                        classes.insert(s.class_index);
                    }
                    _ => {}
                }
            }
        }
        classes
    };

    let single = |set: BTreeSet<usize>| -> Option<String> {
        if set.len() == 1 {
            Some(vocab.object_name(*set.iter().next().unwrap()).to_string())
        } else {
            None
        }
    };

    match tokens.as_slice() {
        ["what", "is", "the", "person", pred, "?"] => single(linked(pred)),
        ["what", "did", "the", "person", p1, "and", p2, "?"] => {
            let a = linked(p1);
            let b = linked(p2);
            single(a.intersection(&b).copied().collect())
        }
        _ => None,
    }
}

/// Generates the dataset on disk and returns its statistics. Identical specs
/// produce byte-identical files.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<SynthStats> {
    spec.validate()?;
    let objects = spec.object_names();
    let predicates = spec.predicate_names();
    let vocab = Vocabulary::new(objects.clone(), predicates.clone(), vec!["person".into()])
        .expect("generated vocabulary is valid");
    let answers: Vec<String> = objects[1..=spec.n_answers].to_vec();

    std::fs::create_dir_all(out_dir.join("videos"))?;

    #[derive(Serialize)]
    struct VocabDoc<'a> {
        objects: &'a [String],
        predicates: &'a [String],
        human_classes: [&'a str; 1],
    }
    write_pretty(
        &out_dir.join("vocab.json"),
        &VocabDoc {
            objects: &objects,
            predicates: &predicates,
            human_classes: ["person"],
        },
    )?;
    write_pretty(&out_dir.join("answers.json"), &answers)?;

    let mut qa_lines = String::new();
    let mut answer_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut qa_index = 0usize;
    for v in 0..spec.n_videos {
        let video_id = format!("video{v:04}");
        let plan = generate_video(spec, v, &vocab);
        let frames_json: Vec<serde_json::Value> = plan
            .frames
            .iter()
            .map(|f| {
                serde_json::from_str(&crate::scenegraph::frame_to_json(f, &vocab))
                    .expect("frame json parses")
            })
            .collect();
        write_pretty(
            &out_dir.join("videos").join(format!("{video_id}.json")),
            &VideoDoc {
                video_id: video_id.clone(),
                frames: frames_json,
            },
        )?;
        for (qi, (text, answer)) in plan.questions.iter().enumerate() {
            let rec = QaRecord {
                qa_id: format!("{video_id}-q{qi}"),
                video_id: video_id.clone(),
                question: text.clone(),
                answer: answer.clone(),
                category: QuestionCategory::ALL[qa_index % QuestionCategory::ALL.len()]
                    .as_str()
                    .to_string(),
            };
            qa_lines.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            qa_lines.push('\n');
            *answer_counts.entry(answer.clone()).or_insert(0) += 1;
            qa_index += 1;
        }
    }
    std::fs::write(out_dir.join("qa.jsonl"), qa_lines)?;

    let n_eval = ((spec.n_videos as f64) * spec.eval_fraction).round() as usize;
    let n_train = spec.n_videos - n_eval;
    let manifest = SplitManifest {
        train: (0..n_train).map(|v| format!("video{v:04}")).collect(),
        eval: (n_train..spec.n_videos)
            .map(|v| format!("video{v:04}"))
            .collect(),
    };
    write_pretty(&out_dir.join("split.json"), &manifest)?;

    let stats = SynthStats {
        n_videos: spec.n_videos,
        n_samples: qa_index,
        n_train_videos: n_train,
        n_eval_videos: n_eval,
        answer_counts,
        cross_frame: spec.cross_frame,
    };
    write_pretty(&out_dir.join("stats.json"), &stats)?;
    Ok(stats)
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
