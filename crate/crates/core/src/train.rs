//! End-to-end training and evaluation: Adam with global-norm gradient
//! clipping, per-sample gradient accumulation (graphs are ragged, so a batch
//! averages sample gradients rather than padding a mega-graph), per-category
//! metrics, and checkpointing.
//!
//! Determinism contract: epoch shuffles, CRN subset draws, and parameter
//! initialization all derive from the run seed; batch gradients are reduced
//! in sample order, so sequential and parallel execution produce identical
//! checkpoints within one build.

use crate::data::{Dataset, QaSample, QuestionCategory};
use crate::model::{GradMap, Model};
use crate::parallel::{map_items, ExecMode};
use crate::params::fnv1a;
use crate::sgem::FlatGraph;
use crate::tensor::TensorError;
use crate::videograph::{plan_clips, ClipPlan, VideoGraphError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, step {step}; offending tensor: {tensor}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        tensor: String,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    VideoGraph(#[from] VideoGraphError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Optimization settings. Every run records these verbatim into its metrics
/// and checkpoint sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub grad_clip: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            epochs: 100,
            seed: 0,
            grad_clip: 5.0,
        }
    }
}

/// Adam with bias correction, applied over the parameter store in
/// registration order.
pub struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: u64,
    cfg: TrainConfig,
}

impl Adam {
    pub fn new(model: &Model, cfg: TrainConfig) -> Adam {
        let m = model.store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let v = model.store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Adam {
            m,
            v,
            step: 0,
            cfg,
        }
    }

    /// One update from averaged gradients. Applies global-norm clipping
    /// first; missing entries (parameters untouched this batch) are zero.
    pub fn step(&mut self, model: &mut Model, grads: &GradMap) {
        self.step += 1;
        let clip = self.cfg.grad_clip;
        let mut norm_sq = 0.0f64;
        for (name, _) in model.store.iter() {
            if let Some(g) = grads.get(name) {
                for &x in g.data() {
                    norm_sq += (x as f64) * (x as f64);
                }
            }
        }
        let norm = norm_sq.sqrt() as f32;
        let scale = if norm > clip && norm > 0.0 {
            clip / norm
        } else {
            1.0
        };
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.cfg.learning_rate;
        for (i, (name, t)) in model.store.iter_mut().enumerate() {
            let Some(g) = grads.get(name) else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, p) in t.data_mut().iter_mut().enumerate() {
                let gj = g.data()[j] * scale;
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
            }
        }
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub eval_acc: f64,
}

/// Training output: per-epoch log plus the best-eval parameter snapshot.
pub struct TrainOutcome {
    pub log: Vec<EpochRow>,
    pub best_eval: Option<(usize, crate::params::ParamStore)>,
}

/// Per-category accuracy breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub n_samples: usize,
    pub n_correct: usize,
    pub per_category: BTreeMap<String, CategoryStats>,
    pub config_fingerprint: String,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryStats {
    pub accuracy: f64,
    pub correct: usize,
    pub count: usize,
}

/// Graphs flattened once per run; samples index into this.
pub struct PreparedGraphs {
    pub flats: Vec<FlatGraph>,
    pub plans: Vec<ClipPlan>,
}

pub fn prepare_graphs(model: &Model, dataset: &Dataset, exec: ExecMode) -> Result<PreparedGraphs> {
    let flats = map_items(exec, &dataset.videos, |vg| {
        FlatGraph::build(vg, &dataset.vocab, &model.config.sgem)
    });
    let mut plans = Vec::with_capacity(dataset.videos.len());
    for vg in &dataset.videos {
        plans.push(plan_clips(vg, model.config.crn.clip_length)?);
    }
    Ok(PreparedGraphs { flats, plans })
}

fn subset_seed(run_seed: u64, epoch: usize, sample_index: usize) -> u64 {
    run_seed
        ^ (epoch as u64).wrapping_mul(0x9e3779b97f4a7c15)
        ^ (sample_index as u64).wrapping_mul(0xc2b2ae3d27d4eb4f)
}

struct SampleStep {
    loss: f32,
    correct: bool,
    grads: GradMap,
}

fn run_sample(
    model: &Model,
    dataset: &Dataset,
    prepared: &PreparedGraphs,
    sample: &QaSample,
    seed: u64,
) -> crate::tensor::Result<SampleStep> {
    let vi = dataset.video_index[&sample.video_id];
    let q = &dataset.embeddings[&sample.qa_id];
    let out = model.sample_grads(
        &prepared.flats[vi],
        &prepared.plans[vi],
        q,
        sample.answer_index,
        seed,
    )?;
    Ok(SampleStep {
        loss: out.loss,
        correct: out.predicted == sample.answer_index,
        grads: out.grads,
    })
}

/// Averages sample gradient maps in input order.
fn average_grads(mut steps: Vec<SampleStep>) -> (GradMap, f64, usize) {
    let n = steps.len();
    let inv = 1.0 / n as f32;
    let mut total_loss = 0.0f64;
    let mut n_correct = 0usize;
    let mut acc: GradMap = GradMap::new();
    for step in steps.iter_mut() {
        total_loss += step.loss as f64;
        n_correct += usize::from(step.correct);
        for (name, g) in step.grads.drain() {
            match acc.get_mut(&name) {
                Some(sum) => {
                    for (a, b) in sum.data_mut().iter_mut().zip(g.data()) {
                        *a += *b;
                    }
                }
                None => {
                    acc.insert(name, g);
                }
            }
        }
    }
    for g in acc.values_mut() {
        for x in g.data_mut() {
            *x *= inv;
        }
    }
    (acc, total_loss, n_correct)
}

/// Trains in place. Returns the per-epoch log and, when an eval split
/// exists, the parameter snapshot of the best eval epoch.
pub fn train(
    model: &mut Model,
    dataset: &Dataset,
    cfg: &TrainConfig,
    exec: ExecMode,
) -> Result<TrainOutcome> {
    let prepared = prepare_graphs(model, dataset, exec)?;
    let mut optimizer = Adam::new(model, cfg.clone());
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, crate::params::ParamStore)> = None;

    let n = dataset.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ (epoch as u64).wrapping_mul(0x165667b19e3779f9),
        );
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0f64;
        let mut epoch_correct = 0usize;
        for (step_idx, chunk) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let items: Vec<usize> = chunk.to_vec();
            let steps: Vec<crate::tensor::Result<SampleStep>> =
                map_items(exec, &items, |&si| {
                    run_sample(
                        model,
                        dataset,
                        &prepared,
                        &dataset.train[si],
                        subset_seed(cfg.seed, epoch, si),
                    )
                });
            let mut ok = Vec::with_capacity(steps.len());
            for s in steps {
                ok.push(s?);
            }
            let (grads, batch_loss, batch_correct) = average_grads(ok);
            if !batch_loss.is_finite() {
                let tensor = model
                    .store
                    .first_non_finite()
                    .map(|(n, i)| format!("{n}[{i}]"))
                    .unwrap_or_else(|| "loss".to_string());
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    step: step_idx,
                    tensor,
                });
            }
            epoch_loss += batch_loss;
            epoch_correct += batch_correct;
            optimizer.step(model, &grads);
        }

        let eval_acc = if dataset.eval.is_empty() {
            f64::NAN
        } else {
            evaluate(model, dataset, "eval", exec)?.overall_accuracy
        };
        let row = EpochRow {
            epoch,
            loss: epoch_loss / n.max(1) as f64,
            train_acc: epoch_correct as f64 / n.max(1) as f64,
            eval_acc,
        };
        if eval_acc.is_finite() {
            let better = match &best {
                None => true,
                Some((_, acc, _)) => eval_acc > *acc,
            };
            if better {
                best = Some((epoch, eval_acc, model.store.clone()));
            }
        }
        log.push(row);
    }
    Ok(TrainOutcome {
        log,
        best_eval: best.map(|(e, _, s)| (e, s)),
    })
}

/// Argmax evaluation over one split with per-category breakdown.
pub fn evaluate(
    model: &Model,
    dataset: &Dataset,
    split: &str,
    exec: ExecMode,
) -> Result<EvalReport> {
    let started = std::time::Instant::now();
    let prepared = prepare_graphs(model, dataset, exec)?;
    let samples = dataset.split(split);
    let results: Vec<crate::tensor::Result<(bool, QuestionCategory)>> =
        map_items(exec, samples, |s| {
            let vi = dataset.video_index[&s.video_id];
            let q = &dataset.embeddings[&s.qa_id];
            let predicted = model.predict(&prepared.flats[vi], &prepared.plans[vi], q)?;
            Ok((predicted == s.answer_index, s.category))
        });
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut n_correct = 0usize;
    for r in results {
        let (correct, category) = r?;
        let entry = per.entry(category.as_str().to_string()).or_insert((0, 0));
        entry.1 += 1;
        if correct {
            entry.0 += 1;
            n_correct += 1;
        }
    }
    let n_samples = samples.len();
    Ok(EvalReport {
        overall_accuracy: if n_samples == 0 {
            0.0
        } else {
            n_correct as f64 / n_samples as f64
        },
        n_samples,
        n_correct,
        per_category: per
            .into_iter()
            .map(|(k, (correct, count))| {
                (
                    k,
                    CategoryStats {
                        accuracy: correct as f64 / count as f64,
                        correct,
                        count,
                    },
                )
            })
            .collect(),
        config_fingerprint: model.config.fingerprint(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// CSV loss log: `epoch,loss,train_acc,eval_acc`.
pub fn format_loss_log(log: &[EpochRow]) -> String {
    let mut out = String::from("epoch,loss,train_acc,eval_acc\n");
    for row in log {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.epoch, row.loss, row.train_acc, row.eval_acc
        ));
    }
    out
}

/// Seed transform for paired ablation runs so heads see identical data but
/// fresh parameter draws per trial.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base ^ fnv1a(format!("trial-{trial}").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_dataset, QuestionSource};
    use crate::model::{HeadKind, ModelConfig};
    use crate::sgem::{EncoderKind, FrameEmbeddingMode, RelationGrouping, SgemConfig};
    use crate::synth::{generate_synthetic, SynthSpec};
    use crate::videograph::NoHumanPolicy;

    fn small_model_config(n_answers: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            sgem: SgemConfig {
                d_node: 12,
                d_edge: 8,
                n_heads: 2,
                d_head: 6,
                n_layers: 2,
                leaky_slope: 0.2,
                use_bbox_features: false,
                relation_grouping: RelationGrouping::PerPredicate,
                encoder: EncoderKind::HetEdgeGat,
                frame_embedding: FrameEmbeddingMode::HumanRoot,
            },
            crn: crate::crn::CrnConfig {
                d: 12,
                orders: None,
                k_max: 2,
                t: 2,
                clip_length: 2,
                g_hidden: 12,
                p_hidden: 12,
                decode_hidden: 16,
            },
            head: HeadKind::Crn,
            d_q: 16,
            n_answers,
            n_objects: 10,
            n_predicates: 5,
            seed,
        }
    }

    fn tiny_dataset(dir: &std::path::Path) -> Dataset {
        generate_synthetic(
            &SynthSpec {
                seed: 3,
                n_videos: 4,
                frames_per_video: 3,
                n_objects: 10,
                n_predicates: 5,
                n_answers: 8,
                questions_per_video: 1,
                cross_frame: false,
                eval_fraction: 0.25,
            },
            dir,
        )
        .unwrap();
        load_dataset(dir, &QuestionSource::ToyHash { d_q: 16 }, NoHumanPolicy::Skip).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        let mut model = Model::new(small_model_config(ds.n_answers(), 5));
        let before = model.store.to_ghrc_bytes();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            batch_size: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        train(&mut model, &ds, &cfg, ExecMode::Sequential).unwrap();
        assert_eq!(model.store.to_ghrc_bytes(), before);
    }

    #[test]
    fn single_sample_memorization() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic(
            &SynthSpec {
                seed: 11,
                n_videos: 1,
                frames_per_video: 2,
                n_objects: 10,
                n_predicates: 5,
                n_answers: 8,
                questions_per_video: 1,
                cross_frame: false,
                eval_fraction: 0.0,
            },
            dir.path(),
        )
        .unwrap();
        let ds = load_dataset(
            dir.path(),
            &QuestionSource::ToyHash { d_q: 16 },
            NoHumanPolicy::Skip,
        )
        .unwrap();
        assert_eq!(ds.train.len(), 1);
        let mut model = Model::new(small_model_config(ds.n_answers(), 1));
        let cfg = TrainConfig {
            learning_rate: 5e-3,
            epochs: 200,
            batch_size: 1,
            seed: 1,
            ..TrainConfig::default()
        };
        let outcome = train(&mut model, &ds, &cfg, ExecMode::Sequential).unwrap();
        let last = outcome.log.last().unwrap();
        assert!(
            last.loss < 0.01,
            "expected memorization, final loss {}",
            last.loss
        );
    }

    #[test]
    fn training_is_seed_deterministic_and_mode_invariant() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = |exec: ExecMode| {
            let mut model = Model::new(small_model_config(ds.n_answers(), 13));
            let outcome = train(&mut model, &ds, &cfg, exec).unwrap();
            (model.store.to_ghrc_bytes(), format_loss_log(&outcome.log))
        };
        let (bytes_a, log_a) = run(ExecMode::Sequential);
        let (bytes_b, log_b) = run(ExecMode::Sequential);
        assert_eq!(bytes_a, bytes_b);
        assert_eq!(log_a, log_b);
        // parallel execution reduces in sample order: identical checkpoints
        let (bytes_c, log_c) = run(ExecMode::Parallel);
        assert_eq!(bytes_a, bytes_c);
        assert_eq!(log_a, log_c);
    }

    #[test]
    fn accuracy_recomposition_identity() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        let model = Model::new(small_model_config(ds.n_answers(), 2));
        let report = evaluate(&model, &ds, "train", ExecMode::Sequential).unwrap();
        let recomposed: usize = report.per_category.values().map(|c| c.correct).sum();
        let total: usize = report.per_category.values().map(|c| c.count).sum();
        assert_eq!(recomposed, report.n_correct);
        assert_eq!(total, report.n_samples);
        assert!(
            (report.overall_accuracy - recomposed as f64 / total as f64).abs() < 1e-12
        );
    }

    #[test]
    fn post_training_parameters_stay_finite() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        let mut model = Model::new(small_model_config(ds.n_answers(), 21));
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            seed: 21,
            ..TrainConfig::default()
        };
        train(&mut model, &ds, &cfg, ExecMode::Sequential).unwrap();
        assert!(model.store.first_non_finite().is_none());
    }
}
