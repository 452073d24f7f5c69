//! Black-box tests of the `graphqa` binary: exit codes, file outputs, and
//! command wiring.

use std::path::Path;
use std::process::{Command, Output};

fn graphqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphqa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn gen_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "gen-synthetic",
        "--seed",
        "3",
        "--videos",
        "6",
        "--frames",
        "4",
        "--objects",
        "10",
        "--predicates",
        "5",
        "--answers",
        "8",
        "--out",
        out,
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn gen_synthetic_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (sa, sb) = (a.display().to_string(), b.display().to_string());
    assert!(graphqa(&gen_args(&sa, &[])).status.success());
    assert!(graphqa(&gen_args(&sb, &[])).status.success());
    let read = |p: &Path| std::fs::read(p).unwrap();
    for file in ["vocab.json", "answers.json", "qa.jsonl", "split.json"] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file} differs");
    }
    assert_eq!(
        read(&a.join("videos/video0003.json")),
        read(&b.join("videos/video0003.json"))
    );
}

#[test]
fn gen_synthetic_rejects_single_answer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x").display().to_string();
    let result = graphqa(&[
        "gen-synthetic",
        "--answers",
        "1",
        "--out",
        &out,
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn train_requires_data_flag() {
    let result = graphqa(&["train", "--out", "/tmp/nowhere"]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn pipeline_gen_train_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data").display().to_string();
    assert!(graphqa(&gen_args(&data, &[])).status.success());

    let run = dir.path().join("run").display().to_string();
    let train_out = graphqa(&[
        "train",
        "--data",
        &data,
        "--out",
        &run,
        "--head",
        "crn",
        "--epochs",
        "2",
        "--seed",
        "5",
        "--batch-size",
        "4",
    ]);
    assert!(
        train_out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&train_out.stderr)
    );
    // resolved config is echoed before running
    assert!(stdout(&train_out).contains("\"model\""));
    let run_path = dir.path().join("run");
    for artifact in [
        "checkpoint.ghrc",
        "checkpoint.config.json",
        "best.ghrc",
        "loss_log.csv",
        "metrics.json",
        "resolved_config.json",
    ] {
        assert!(run_path.join(artifact).exists(), "missing {artifact}");
    }
    let log = std::fs::read_to_string(run_path.join("loss_log.csv")).unwrap();
    assert!(log.starts_with("epoch,loss,train_acc,eval_acc\n"));
    assert_eq!(log.lines().count(), 3);

    let ckpt = run_path.join("checkpoint.ghrc").display().to_string();
    let eval_out = graphqa(&["eval", "--data", &data, "--checkpoint", &ckpt, "--split", "eval"]);
    assert!(
        eval_out.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&eval_out.stderr)
    );
    assert!(stdout(&eval_out).contains("overall:"));
}

#[test]
fn eval_rejects_mismatched_checkpoint_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data").display().to_string();
    assert!(graphqa(&gen_args(&data, &[])).status.success());
    let run = dir.path().join("run").display().to_string();
    assert!(graphqa(&[
        "train", "--data", &data, "--out", &run, "--epochs", "1", "--batch-size", "4",
    ])
    .status
    .success());

    // tamper with the sidecar so the rebuilt model disagrees with the weights
    let sidecar = dir.path().join("run/checkpoint.config.json");
    let text = std::fs::read_to_string(&sidecar).unwrap();
    let tampered = text.replace("\"d_node\": 32", "\"d_node\": 24");
    assert_ne!(text, tampered);
    std::fs::write(&sidecar, tampered).unwrap();

    let ckpt = dir.path().join("run/checkpoint.ghrc").display().to_string();
    let out = graphqa(&["eval", "--data", &data, "--checkpoint", &ckpt]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("shapes"), "stderr: {err}");
}

#[test]
fn build_graphs_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data").display().to_string();
    assert!(graphqa(&gen_args(&data, &[])).status.success());

    let graphs = dir.path().join("graphs").display().to_string();
    let vocab = dir.path().join("data/vocab.json").display().to_string();
    let videos = dir.path().join("data/videos").display().to_string();
    let built = graphqa(&[
        "build-graphs",
        "--videos",
        &videos,
        "--vocab",
        &vocab,
        "--out",
        &graphs,
    ]);
    assert!(
        built.status.success(),
        "build-graphs failed: {}",
        String::from_utf8_lossy(&built.stderr)
    );
    let text = stdout(&built);
    assert!(text.contains("built 6 graphs"));
    // node/edge counts in the summary obey the assembly formulas
    let data_dir = dir.path().join("data/videos");
    for line in text.lines().filter(|l| l.starts_with("video")) {
        let id = line.split(':').next().unwrap();
        let doc: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(data_dir.join(format!("{id}.json"))).unwrap(),
        )
        .unwrap();
        let frames = doc["frames"].as_array().unwrap();
        let n_sum: usize = frames
            .iter()
            .map(|f| f["objects"].as_array().unwrap().len())
            .sum();
        let e_sum: usize = frames
            .iter()
            .map(|f| f["relationships"].as_array().unwrap().len())
            .sum();
        assert!(line.contains(&format!("nodes={}", n_sum + 1)), "{line}");
        assert!(
            line.contains(&format!("edges={}", e_sum + frames.len())),
            "{line}"
        );
    }

    let graph_file = dir.path().join("graphs/video0000.ghrg").display().to_string();
    let inspected = graphqa(&["inspect", "--graph", &graph_file]);
    assert!(inspected.status.success());
    let text = stdout(&inspected);
    assert!(text.contains("human root"));
    assert!(text.contains("human-to-human distances"));
}

#[test]
fn build_graphs_rejects_corrupt_video() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data").display().to_string();
    assert!(graphqa(&gen_args(&data, &[])).status.success());
    let bad = dir.path().join("data/videos/broken.json");
    std::fs::write(&bad, "{not valid json").unwrap();

    let graphs = dir.path().join("graphs").display().to_string();
    let vocab = dir.path().join("data/vocab.json").display().to_string();
    let videos = dir.path().join("data/videos").display().to_string();
    let out = graphqa(&[
        "build-graphs",
        "--videos",
        &videos,
        "--vocab",
        &vocab,
        "--out",
        &graphs,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.json"));
}

#[test]
fn grad_check_passes_on_tiny_scale() {
    let out = graphqa(&["grad-check", "--scale", "tiny"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("PASS"), "output: {text}");
    assert!(text.contains("max relative error"));
}

#[test]
fn cross_frame_flag_generates_loadable_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cross").display().to_string();
    let out = graphqa(&[
        "gen-synthetic",
        "--seed",
        "3",
        "--videos",
        "6",
        "--frames",
        "4",
        "--objects",
        "10",
        "--predicates",
        "6",
        "--answers",
        "8",
        "--cross-frame",
        "--out",
        &data,
    ]);
    assert!(
        out.status.success(),
        "gen failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("\"cross_frame\": true"));
    let run = dir.path().join("crossrun").display().to_string();
    let trained = graphqa(&[
        "train", "--data", &data, "--out", &run, "--epochs", "1", "--batch-size", "4",
    ]);
    assert!(trained.status.success());
}
