//! Command-line entry point: graph building, synthetic data generation,
//! training, evaluation, gradient checking, and graph inspection.
//!
//! Exit codes: 0 success, 2 usage/validation failure, 3 numerical failure
//! (non-finite loss or a failed gradient check).

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use graphqa_core::crn::CrnConfig;
use graphqa_core::data::{load_dataset, QuestionSource};
use graphqa_core::model::{HeadKind, Model, ModelConfig};
use graphqa_core::parallel::{configure_threads, ExecMode};
use graphqa_core::scenegraph::parse_vocabulary;
use graphqa_core::sgem::{EncoderKind, FlatGraph, FrameEmbeddingMode, RelationGrouping, SgemConfig};
use graphqa_core::synth::{generate_synthetic, SynthSpec};
use graphqa_core::train::{evaluate, format_loss_log, train, EvalReport, TrainConfig, TrainError};
use graphqa_core::videograph::{
    build_video_graph, plan_clips, read_video_graph_cache, write_video_graph_cache, NoHumanPolicy,
    NodeRef,
};

#[derive(Parser)]
#[command(name = "graphqa", version, about = "Human-rooted video graph question answering")]
struct Cli {
    /// Cap the worker pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build human-rooted video graphs from video JSON documents.
    BuildGraphs(BuildGraphsArgs),
    /// Generate a seeded synthetic dataset.
    GenSynthetic(GenSyntheticArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Finite-difference verification of the full model gradient.
    GradCheck(GradCheckArgs),
    /// Print the structure of a built video graph.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct BuildGraphsArgs {
    /// Directory of {video_id}.json documents.
    #[arg(long)]
    videos: PathBuf,
    /// Vocabulary JSON file.
    #[arg(long)]
    vocab: PathBuf,
    /// Output directory for .ghrg graph caches.
    #[arg(long)]
    out: PathBuf,
    /// Policy for frames with no human node.
    #[arg(long, value_enum, default_value_t = NoHumanArg::Skip)]
    no_human: NoHumanArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoHumanArg {
    Skip,
    Synthetic,
}

impl From<NoHumanArg> for NoHumanPolicy {
    fn from(a: NoHumanArg) -> Self {
        match a {
            NoHumanArg::Skip => NoHumanPolicy::Skip,
            NoHumanArg::Synthetic => NoHumanPolicy::SyntheticRoot,
        }
    }
}

#[derive(Args)]
struct GenSyntheticArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    videos: usize,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    /// Object classes including "person".
    #[arg(long, default_value_t = 10)]
    objects: usize,
    #[arg(long, default_value_t = 5)]
    predicates: usize,
    /// Answer-set size K (>= 2).
    #[arg(long, default_value_t = 8)]
    answers: usize,
    #[arg(long, default_value_t = 2)]
    questions_per_video: usize,
    /// Make answers require evidence from two different frames.
    #[arg(long, default_value_t = false)]
    cross_frame: bool,
    #[arg(long, default_value_t = 0.2)]
    eval_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Mlp,
    Crn,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Hetedgegat,
    Edgegat,
    Gine,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (vocab.json, answers.json, qa.jsonl, videos/).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints, logs, and metrics.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file; its keys mirror these flags, flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    head: Option<HeadArg>,
    #[arg(long, value_enum)]
    encoder: Option<EncoderArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Precomputed question embeddings (GHRQ file); default is the toy
    /// hash embedder.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint written by `train` (its .config.json sidecar must sit
    /// beside it).
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "eval")]
    split: String,
    /// Optional directory for the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Tiny,
    Small,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, value_enum, default_value_t = ScaleArg::Tiny)]
    scale: ScaleArg,
    #[arg(long, default_value_t = 99)]
    seed: u64,
}

#[derive(Args)]
struct InspectArgs {
    /// A .ghrg graph cache written by build-graphs.
    #[arg(long)]
    graph: PathBuf,
}

/// Keys of the train config file; every field mirrors a flag or a model
/// hyperparameter. Flags take precedence over the file.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainSettings {
    head: Option<String>,
    encoder: Option<String>,
    epochs: Option<usize>,
    seed: Option<u64>,
    learning_rate: Option<f32>,
    batch_size: Option<usize>,
    grad_clip: Option<f32>,
    d_node: Option<usize>,
    d_edge: Option<usize>,
    n_heads: Option<usize>,
    d_head: Option<usize>,
    n_layers: Option<usize>,
    use_bbox_features: Option<bool>,
    frame_embedding: Option<String>,
    d: Option<usize>,
    t: Option<usize>,
    k_max: Option<usize>,
    clip_length: Option<usize>,
    g_hidden: Option<usize>,
    p_hidden: Option<usize>,
    decode_hidden: Option<usize>,
    d_q: Option<usize>,
}

#[derive(Serialize)]
struct ResolvedRun<'a> {
    data: String,
    out: String,
    embeddings: Option<String>,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct CheckpointSidecar {
    model: ModelConfig,
    train: TrainConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        configure_threads(n);
    }
    let exec = match cli.threads {
        Some(1) => ExecMode::Sequential,
        _ => ExecMode::Parallel,
    };
    let result = match cli.command {
        Command::BuildGraphs(args) => cmd_build_graphs(args),
        Command::GenSynthetic(args) => cmd_gen_synthetic(args),
        Command::Train(args) => cmd_train(args, exec),
        Command::Eval(args) => cmd_eval(args, exec),
        Command::GradCheck(args) => cmd_grad_check(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_build_graphs(args: BuildGraphsArgs) -> Result<ExitCode> {
    let vocab_text = std::fs::read_to_string(&args.vocab)
        .with_context(|| format!("reading vocabulary {}", args.vocab.display()))?;
    let vocab = parse_vocabulary(&vocab_text)
        .with_context(|| format!("parsing vocabulary {}", args.vocab.display()))?;
    std::fs::create_dir_all(&args.out)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.videos)
        .with_context(|| format!("reading {}", args.videos.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(anyhow!("no .json video documents under {}", args.videos.display()));
    }
    let policy: NoHumanPolicy = args.no_human.into();
    let mut total_nodes = 0usize;
    let mut total_edges = 0usize;
    let mut total_skipped = 0usize;
    for path in &paths {
        let text = std::fs::read_to_string(path)?;
        let (video_id, frames) = graphqa_core::data::parse_video_doc(&text, &vocab)
            .with_context(|| format!("parsing {}", path.display()))?;
        let vg = build_video_graph(&video_id, frames, &vocab, policy)
            .with_context(|| format!("building graph for {}", path.display()))?;
        let out_path = args.out.join(format!("{video_id}.ghrg"));
        write_video_graph_cache(&out_path, &vg, &vocab)?;
        println!(
            "{video_id}: frames={} skipped={} nodes={} edges={} -> {}",
            vg.n_frames(),
            vg.skipped_frames,
            vg.total_nodes(),
            vg.total_edges(),
            out_path.display()
        );
        total_nodes += vg.total_nodes();
        total_edges += vg.total_edges();
        total_skipped += vg.skipped_frames;
    }
    println!(
        "built {} graphs: nodes={total_nodes} edges={total_edges} skipped_frames={total_skipped}",
        paths.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_synthetic(args: GenSyntheticArgs) -> Result<ExitCode> {
    let spec = SynthSpec {
        seed: args.seed,
        n_videos: args.videos,
        frames_per_video: args.frames,
        n_objects: args.objects,
        n_predicates: args.predicates,
        n_answers: args.answers,
        questions_per_video: args.questions_per_video,
        cross_frame: args.cross_frame,
        eval_fraction: args.eval_fraction,
    };
    let stats = generate_synthetic(&spec, &args.out)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    println!("dataset written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn resolve_settings(args: &TrainArgs) -> Result<TrainSettings> {
    let mut s: TrainSettings = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => TrainSettings::default(),
    };
    if let Some(h) = args.head {
        s.head = Some(match h {
            HeadArg::Mlp => "mlp",
            HeadArg::Crn => "crn",
        }
        .to_string());
    }
    if let Some(e) = args.encoder {
        s.encoder = Some(match e {
            EncoderArg::Hetedgegat => "hetedgegat",
            EncoderArg::Edgegat => "edgegat",
            EncoderArg::Gine => "gine",
        }
        .to_string());
    }
    if let Some(v) = args.epochs {
        s.epochs = Some(v);
    }
    if let Some(v) = args.seed {
        s.seed = Some(v);
    }
    if let Some(v) = args.lr {
        s.learning_rate = Some(v);
    }
    if let Some(v) = args.batch_size {
        s.batch_size = Some(v);
    }
    Ok(s)
}

fn build_configs(
    s: &TrainSettings,
    n_objects: usize,
    n_predicates: usize,
    n_answers: usize,
    d_q: usize,
) -> Result<(ModelConfig, TrainConfig)> {
    let head = match s.head.as_deref().unwrap_or("crn") {
        "crn" => HeadKind::Crn,
        "mlp" => HeadKind::Mlp,
        other => return Err(anyhow!("unknown head {other:?} (crn|mlp)")),
    };
    let encoder = match s.encoder.as_deref().unwrap_or("hetedgegat") {
        "hetedgegat" => EncoderKind::HetEdgeGat,
        "edgegat" => EncoderKind::EdgeGat,
        "gine" => EncoderKind::Gine,
        other => return Err(anyhow!("unknown encoder {other:?} (hetedgegat|edgegat|gine)")),
    };
    let frame_embedding = match s.frame_embedding.as_deref().unwrap_or("human-root") {
        "human-root" => FrameEmbeddingMode::HumanRoot,
        "frame-sum" => FrameEmbeddingMode::FrameSum,
        other => return Err(anyhow!("unknown frame embedding {other:?}")),
    };
    let seed = s.seed.unwrap_or(0);
    let model = ModelConfig {
        sgem: SgemConfig {
            d_node: s.d_node.unwrap_or(32),
            d_edge: s.d_edge.unwrap_or(16),
            n_heads: s.n_heads.unwrap_or(2),
            d_head: s.d_head.unwrap_or(16),
            n_layers: s.n_layers.unwrap_or(2),
            leaky_slope: 0.2,
            use_bbox_features: s.use_bbox_features.unwrap_or(false),
            relation_grouping: RelationGrouping::PerPredicate,
            encoder,
            frame_embedding,
        },
        crn: CrnConfig {
            d: s.d.unwrap_or(32),
            orders: None,
            k_max: s.k_max.unwrap_or(4),
            t: s.t.unwrap_or(3),
            clip_length: s.clip_length.unwrap_or(4),
            g_hidden: s.g_hidden.unwrap_or(32),
            p_hidden: s.p_hidden.unwrap_or(32),
            decode_hidden: s.decode_hidden.unwrap_or(48),
        },
        head,
        d_q,
        n_answers,
        n_objects,
        n_predicates,
        seed,
    };
    let train = TrainConfig {
        learning_rate: s.learning_rate.unwrap_or(1e-3),
        batch_size: s.batch_size.unwrap_or(16),
        epochs: s.epochs.unwrap_or(100),
        seed,
        grad_clip: s.grad_clip.unwrap_or(5.0),
        ..TrainConfig::default()
    };
    Ok((model, train))
}

fn question_source(embeddings: &Option<PathBuf>, d_q: usize) -> QuestionSource {
    match embeddings {
        Some(path) => QuestionSource::File {
            path: path.clone(),
            d_q,
        },
        None => QuestionSource::ToyHash { d_q },
    }
}

fn save_with_sidecar(model: &Model, train_cfg: &TrainConfig, path: &Path) -> Result<()> {
    model.store.save(path)?;
    let sidecar = CheckpointSidecar {
        model: model.config.clone(),
        train: train_cfg.clone(),
    };
    let sidecar_path = path.with_extension("config.json");
    std::fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

fn print_report(report: &EvalReport, split: &str) {
    println!("\n== {split} report ==");
    println!(
        "overall: {:.4} ({}/{})",
        report.overall_accuracy, report.n_correct, report.n_samples
    );
    println!("{:<14} {:>8} {:>8} {:>10}", "category", "correct", "count", "accuracy");
    for (cat, stats) in &report.per_category {
        println!(
            "{:<14} {:>8} {:>8} {:>10.4}",
            cat, stats.correct, stats.count, stats.accuracy
        );
    }
    println!(
        "fingerprint: {}  wall-clock: {:.2}s",
        report.config_fingerprint, report.wall_clock_secs
    );
}

fn cmd_train(args: TrainArgs, exec: ExecMode) -> Result<ExitCode> {
    let settings = resolve_settings(&args)?;
    let d_q = settings.d_q.unwrap_or(64);
    let source = question_source(&args.embeddings, d_q);
    let dataset = load_dataset(&args.data, &source, NoHumanPolicy::Skip)?;
    let (model_cfg, train_cfg) = build_configs(
        &settings,
        dataset.vocab.n_objects(),
        dataset.vocab.n_predicates(),
        dataset.n_answers(),
        d_q,
    )?;
    let resolved = ResolvedRun {
        data: args.data.display().to_string(),
        out: args.out.display().to_string(),
        embeddings: args.embeddings.as_ref().map(|p| p.display().to_string()),
        model: &model_cfg,
        train: &train_cfg,
    };
    println!("{}", serde_json::to_string_pretty(&resolved)?);

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(
        args.out.join("resolved_config.json"),
        serde_json::to_string_pretty(&resolved)?,
    )?;

    let mut model = Model::new(model_cfg);
    let outcome = match train(&mut model, &dataset, &train_cfg, exec) {
        Ok(o) => o,
        Err(TrainError::NonFiniteLoss { epoch, step, tensor }) => {
            eprintln!("non-finite loss at epoch {epoch}, step {step} (tensor {tensor})");
            return Ok(ExitCode::from(3));
        }
        Err(e) => return Err(e.into()),
    };

    std::fs::write(args.out.join("loss_log.csv"), format_loss_log(&outcome.log))?;
    save_with_sidecar(&model, &train_cfg, &args.out.join("checkpoint.ghrc"))?;
    if let Some((epoch, best_store)) = outcome.best_eval {
        let best = Model {
            config: model.config.clone(),
            store: best_store,
        };
        save_with_sidecar(&best, &train_cfg, &args.out.join("best.ghrc"))?;
        println!("best eval epoch: {epoch}");
    }

    if let Some(last) = outcome.log.last() {
        println!(
            "final: loss={:.6} train_acc={:.4} eval_acc={:.4}",
            last.loss, last.train_acc, last.eval_acc
        );
    }
    let split = if dataset.eval.is_empty() { "train" } else { "eval" };
    let report = evaluate(&model, &dataset, split, exec)?;
    print_report(&report, split);
    #[derive(Serialize)]
    struct Metrics<'a> {
        report: &'a EvalReport,
        model: &'a ModelConfig,
        train: &'a TrainConfig,
    }
    std::fs::write(
        args.out.join("metrics.json"),
        serde_json::to_string_pretty(&Metrics {
            report: &report,
            model: &model.config,
            train: &train_cfg,
        })?,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs, exec: ExecMode) -> Result<ExitCode> {
    if args.split != "eval" && args.split != "train" {
        return Err(anyhow!("unknown split {:?} (eval|train)", args.split));
    }
    let sidecar_path = args.checkpoint.with_extension("config.json");
    let sidecar: CheckpointSidecar = serde_json::from_str(
        &std::fs::read_to_string(&sidecar_path)
            .with_context(|| format!("reading sidecar {}", sidecar_path.display()))?,
    )?;
    let source = question_source(&args.embeddings, sidecar.model.d_q);
    let dataset = load_dataset(&args.data, &source, NoHumanPolicy::Skip)?;
    let mut model = Model::new(sidecar.model);
    model
        .store
        .load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let report = evaluate(&model, &dataset, &args.split, exec)?;
    print_report(&report, &args.split);
    if let Some(out) = args.out {
        std::fs::create_dir_all(&out)?;
        std::fs::write(
            out.join("eval_report.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_grad_check(args: GradCheckArgs) -> Result<ExitCode> {
    let vocab = parse_vocabulary(
        r#"{"objects":["person","cup","table","food"],"predicates":["holding","eating"]}"#,
    )?;
    let frames = [
        r#"{"frame_id":"f0","objects":[
            {"id":0,"label":"person","bbox":[0.1,0.1,0.4,0.8]},
            {"id":1,"label":"cup","bbox":[0.5,0.4,0.1,0.1]},
            {"id":2,"label":"table","bbox":[0.2,0.6,0.6,0.3]}],
            "relationships":[{"subject":0,"predicate":"holding","object":1},
                             {"subject":1,"predicate":"holding","object":2}]}"#,
        r#"{"frame_id":"f1","objects":[
            {"id":0,"label":"person","bbox":[0.2,0.1,0.5,0.7]},
            {"id":1,"label":"food","bbox":[0.4,0.5,0.15,0.1]}],
            "relationships":[{"subject":0,"predicate":"eating","object":1}]}"#,
    ];
    let parsed: Vec<_> = frames
        .iter()
        .map(|f| graphqa_core::scenegraph::parse_frame_graph(f, &vocab, None))
        .collect::<std::result::Result<_, _>>()?;
    let vg = build_video_graph("toy", parsed, &vocab, NoHumanPolicy::Skip)?;

    let (dims, crn_d) = match args.scale {
        ScaleArg::Tiny => ((4usize, 3usize, 2usize, 2usize), 5usize),
        ScaleArg::Small => ((8, 6, 2, 4), 10),
    };
    let (d_node, d_edge, n_heads, d_head) = dims;
    let config = ModelConfig {
        sgem: SgemConfig {
            d_node,
            d_edge,
            n_heads,
            d_head,
            n_layers: 2,
            leaky_slope: 0.2,
            use_bbox_features: true,
            relation_grouping: RelationGrouping::PerPredicate,
            encoder: EncoderKind::HetEdgeGat,
            frame_embedding: FrameEmbeddingMode::HumanRoot,
        },
        crn: CrnConfig {
            d: crn_d,
            orders: None,
            k_max: 2,
            t: 2,
            clip_length: 2,
            g_hidden: crn_d,
            p_hidden: crn_d,
            decode_hidden: crn_d,
        },
        head: HeadKind::Crn,
        d_q: 16,
        n_answers: 4,
        n_objects: vocab.n_objects(),
        n_predicates: vocab.n_predicates(),
        seed: args.seed,
    };
    let model = Model::new(config);
    let fg = FlatGraph::build(&vg, &vocab, &model.config.sgem);
    let plan = plan_clips(&vg, model.config.crn.clip_length)?;
    let question = graphqa_core::question::toy_embed("what is the person holding ?", 16)?;

    let started = std::time::Instant::now();
    let report = model.finite_difference_check(&fg, &plan, &question, 1, 1e-3)?;
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "checked {} parameter elements in {:.2}s",
        report.n_checked, elapsed
    );
    println!(
        "max relative error: {:.3e} (worst: {}[{}])",
        report.max_rel_error, report.worst_param, report.worst_index
    );
    if report.passes(1e-3) {
        println!("PASS (tolerance 1e-3)");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAIL (tolerance 1e-3)");
        Ok(ExitCode::from(3))
    }
}

fn cmd_inspect(args: InspectArgs) -> Result<ExitCode> {
    let (vg, vocab) = read_video_graph_cache(&args.graph)
        .with_context(|| format!("reading {}", args.graph.display()))?;
    println!(
        "video {}: frames={} skipped={} nodes={} edges={}",
        vg.video_id,
        vg.n_frames(),
        vg.skipped_frames,
        vg.total_nodes(),
        vg.total_edges()
    );
    for (fi, frame) in vg.frames.iter().enumerate() {
        println!("\nframe {fi} ({}):", frame.frame_id);
        for n in &frame.nodes {
            println!(
                "  node {:>3}  {:<12} bbox=({:.2},{:.2},{:.2},{:.2})",
                n.node_id,
                vocab.object_name(n.class_index),
                n.bbox.x,
                n.bbox.y,
                n.bbox.w,
                n.bbox.h
            );
        }
        for e in &frame.edges {
            println!(
                "  edge {:>3} --{}-> {}",
                e.subject_id,
                vocab.predicate_name(e.predicate_index),
                e.object_id
            );
        }
        match vg.human_roots[fi] {
            graphqa_core::videograph::HumanRoot::Node(id) => {
                println!("  human root: node {id}");
            }
            graphqa_core::videograph::HumanRoot::Synthetic => {
                println!("  human root: synthetic");
            }
        }
    }
    println!("\nhuman-to-human distances (expect 2):");
    let mut all_two = true;
    for i in 0..vg.n_frames() {
        for j in (i + 1)..vg.n_frames() {
            let refs = |f: usize| match vg.human_roots[f] {
                graphqa_core::videograph::HumanRoot::Node(id) => NodeRef::Entity {
                    frame: f,
                    node_id: id,
                },
                graphqa_core::videograph::HumanRoot::Synthetic => {
                    NodeRef::SyntheticHuman { frame: f }
                }
            };
            let d = vg.bfs_distance(refs(i), refs(j))?;
            println!("  frame {i} <-> frame {j}: {d:?}");
            if d != Some(2) {
                all_two = false;
            }
        }
    }
    if !all_two {
        return Err(anyhow!("human-to-human distance violated"));
    }
    Ok(ExitCode::SUCCESS)
}
