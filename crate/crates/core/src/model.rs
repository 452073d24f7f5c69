//! Full model: encoder, reasoning head, and answer classification over one
//! (video graph, question) pair.

use crate::crn::{self, CrnConfig};
use crate::params::{Binder, ParamStore};
use crate::sgem::{self, FlatGraph, SgemConfig};
use crate::tensor::{GradCheckReport, Gradients, Result, Scalar, Tape, Tensor, Var};
use crate::videograph::ClipPlan;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Reasoning head selection (the second ablation axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Hierarchical conditional relation network over frame embeddings.
    Crn,
    /// Two-layer MLP over the summed frame embeddings.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub sgem: SgemConfig,
    pub crn: CrnConfig,
    pub head: HeadKind,
    /// Question embedding width.
    pub d_q: usize,
    /// Answer-set size K.
    pub n_answers: usize,
    /// Vocabulary sizes the parameters were built for.
    pub n_objects: usize,
    pub n_predicates: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl ModelConfig {
    /// Stable fingerprint of the resolved configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", crate::params::fnv1a(json.as_bytes()))
    }
}

/// Parameters plus the configuration they were shaped by.
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
}

/// Named gradients of one backward pass.
pub type GradMap = HashMap<String, Tensor<f32>>;

/// Output of one forward/backward step on a single sample.
pub struct SampleGrads {
    pub loss: f32,
    pub predicted: usize,
    pub grads: GradMap,
}

impl Model {
    /// Builds a model with freshly initialized parameters.
    pub fn new(config: ModelConfig) -> Model {
        let mut store = ParamStore::new(config.seed);
        sgem::register_params(
            &mut store,
            &config.sgem,
            config.n_objects,
            config.n_predicates,
        );
        match config.head {
            HeadKind::Crn => crn::register_crn_params(
                &mut store,
                &config.crn,
                config.sgem.d_out(),
                config.d_q,
                config.n_answers,
            ),
            HeadKind::Mlp => crn::register_mlp_head_params(
                &mut store,
                &config.crn,
                config.sgem.d_out(),
                config.d_q,
                config.n_answers,
            ),
        }
        Model { config, store }
    }

    /// Forward pass to answer logits (`[K]`). `subset_seed` fixes the CRN's
    /// subset draws; evaluation uses 0, training mixes epoch and sample.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        binder: &mut Binder<S>,
        graph: &FlatGraph,
        plan: &ClipPlan,
        question: &[f32],
        subset_seed: u64,
    ) -> Result<Var> {
        let (frame_embeddings, _) = sgem::encode_video_graph(tape, binder, graph, &self.config.sgem)?;
        match self.config.head {
            HeadKind::Crn => {
                let qp = crn::project_question(tape, binder, question, "crn.proj.question")?;
                let video =
                    crn::hierarchy_forward(tape, binder, &self.config.crn, frame_embeddings, plan, qp, subset_seed)?;
                crn::decode_answer(tape, binder, video, qp)
            }
            HeadKind::Mlp => {
                let agg = sgem::aggregate_human_roots(tape, frame_embeddings)?;
                crn::mlp_baseline_head(tape, binder, agg, question)
            }
        }
    }

    /// Forward to the cross-entropy loss of one sample.
    #[allow(clippy::too_many_arguments)]
    pub fn sample_loss<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        binder: &mut Binder<S>,
        graph: &FlatGraph,
        plan: &ClipPlan,
        question: &[f32],
        target: usize,
        subset_seed: u64,
    ) -> Result<(Var, Var)> {
        let logits = self.forward(tape, binder, graph, plan, question, subset_seed)?;
        let row = tape.reshape(logits, &[1, self.config.n_answers])?;
        let loss = tape.softmax_cross_entropy(row, &[target])?;
        Ok((loss, logits))
    }

    /// Loss, prediction, and named parameter gradients for one sample.
    pub fn sample_grads(
        &self,
        graph: &FlatGraph,
        plan: &ClipPlan,
        question: &[f32],
        target: usize,
        subset_seed: u64,
    ) -> Result<SampleGrads> {
        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&self.store);
        let (loss, logits) =
            self.sample_loss(&mut tape, &mut binder, graph, plan, question, target, subset_seed)?;
        let loss_value = tape.value(loss).scalar_value()?;
        let predicted = argmax(tape.value(logits).data());
        let mut grads = tape.backward(loss)?;
        let named = collect_named(&binder, &mut grads);
        Ok(SampleGrads {
            loss: loss_value,
            predicted,
            grads: named,
        })
    }

    /// Prediction only (evaluation path; subset seed fixed to 0).
    pub fn predict(
        &self,
        graph: &FlatGraph,
        plan: &ClipPlan,
        question: &[f32],
    ) -> Result<usize> {
        let mut tape = Tape::<f32>::new();
        let mut binder = Binder::new(&self.store);
        let logits = self.forward(&mut tape, &mut binder, graph, plan, question, 0)?;
        Ok(argmax(tape.value(logits).data()))
    }

    /// Full end-to-end finite-difference verification in 64-bit: encoder,
    /// hierarchy, decoder, and cross-entropy on the given sample.
    pub fn finite_difference_check(
        &self,
        graph: &FlatGraph,
        plan: &ClipPlan,
        question: &[f32],
        target: usize,
        h: f64,
    ) -> Result<GradCheckReport> {
        let named: Vec<(String, Tensor<f64>)> = self
            .store
            .iter()
            .map(|(n, t)| (n.to_string(), t.cast::<f64>()))
            .collect();
        crate::tensor::grad_check(
            &named,
            |tape, vars| {
                let mut binder = Binder::prebound(
                    named
                        .iter()
                        .zip(vars)
                        .map(|((name, _), &var)| (name.clone(), var)),
                );
                let (loss, _) =
                    self.sample_loss(tape, &mut binder, graph, plan, question, target, 0)?;
                Ok(loss)
            },
            h,
        )
    }
}

pub(crate) fn argmax(data: &[f32]) -> usize {
    let mut best = 0usize;
    for (i, &v) in data.iter().enumerate() {
        if v > data[best] {
            best = i;
        }
    }
    best
}

fn collect_named<S: Scalar>(binder: &Binder<S>, grads: &mut Gradients<S>) -> GradMap {
    let mut out = HashMap::with_capacity(binder.bound().len());
    for (name, &var) in binder.bound() {
        if let Some(g) = grads.take(var) {
            out.insert(name.clone(), g.cast::<f32>());
        }
    }
    out
}
