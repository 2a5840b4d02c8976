//! Binary-level tests: exit codes, stdout contracts, and determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TWO_TRAINS: &str = r#"{
    "image_id": "trains", "width": 100, "height": 50,
    "objects": [
        {"id": "t1", "bbox": [10, 10, 20, 20], "types": {"train": 0.9}, "attributes": {}},
        {"id": "t2", "bbox": [60, 10, 20, 20], "types": {"train": 0.9}, "attributes": {}}
    ],
    "relations": [],
    "target": {"bbox": [60, 10, 20, 20], "types": {"train": 0.9}, "attributes": {}}
}"#;

fn refexp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refexp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_scene(dir: &Path) -> String {
    let path = dir.join("trains.json");
    fs::write(&path, TWO_TRAINS).unwrap();
    path.display().to_string()
}

fn train_lm(dir: &Path) -> String {
    let corpus = dir.join("corpus.txt");
    fs::write(&corpus, "train\n".repeat(9) + "right train\n").unwrap();
    let out = dir.join("lm.json");
    let res = refexp(&[
        "train-lm",
        "--corpus",
        corpus.to_str().unwrap(),
        "--order",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{res:?}");
    out.display().to_string()
}

#[test]
fn generate_two_trains_with_lm_prints_the_right_train() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let lm = train_lm(dir.path());
    let out = refexp(&["generate", &scene, "--lm", &lm]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "the right train\n");
}

#[test]
fn generate_malformed_scene_exits_1_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{ not json").unwrap();
    let out = refexp(&["generate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let err: serde_json::Value = serde_json::from_str(stderr.trim()).expect("stderr is JSON");
    assert_eq!(err["kind"], "parse");
}

#[test]
fn generate_invalid_score_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        TWO_TRAINS.replace(r#""train": 0.9}, "attributes": {}}"#, r#""train": 1.9}, "attributes": {}}"#),
    )
    .unwrap();
    let out = refexp(&["generate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("score out of range"));
}

#[test]
fn sample_mode_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let lm = train_lm(dir.path());
    let run = |trace: &str| {
        let out = refexp(&[
            "generate", &scene, "--lm", &lm, "--mode", "sample", "--seed", "7", "--trace", trace,
        ]);
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        out.stdout
    };
    let t1 = dir.path().join("t1.json");
    let t2 = dir.path().join("t2.json");
    let s1 = run(t1.to_str().unwrap());
    let s2 = run(t2.to_str().unwrap());
    assert_eq!(s1, s2);
    assert_eq!(fs::read(&t1).unwrap(), fs::read(&t2).unwrap());
}

#[test]
fn comprehend_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());

    let out = refexp(&["comprehend", &scene, "right train"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("p(t2) = 1.0000"), "{stdout}");
    assert!(stdout.contains("outcome: true"));

    let out = refexp(&["comprehend", &scene, "train"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("outcome: under_informative"));

    let out = refexp(&["comprehend", &scene, "zebra"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("outcome: no_match"));
}

#[test]
fn evaluate_writes_report_and_survives_missing_scene() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let dataset = dir.path().join("data.jsonl");
    fs::write(
        &dataset,
        format!(
            "{}\n{}\n{}\n",
            serde_json::json!({"scene": scene, "references": ["right train"]}),
            serde_json::json!({"scene": scene, "references": ["the right train"]}),
            serde_json::json!({"scene": dir.path().join("missing.json"), "references": ["x"]}),
        ),
    )
    .unwrap();
    let report = dir.path().join("report.json");
    let out = refexp(&[
        "evaluate",
        dataset.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(&report).unwrap()).expect("report is JSON");
    assert_eq!(doc["report"]["n_instances"], 3);
    let counts = &doc["report"]["counts"];
    let total: u64 = ["true", "false", "under_informative", "no_match", "not_highlighted"]
        .iter()
        .map(|k| counts[k].as_u64().unwrap())
        .sum();
    assert_eq!(total, 3);
    assert_eq!(counts["no_match"], 1);
    assert!(doc["report"]["adjusted_accuracy"].is_number());
    assert_eq!(doc["instances"].as_array().unwrap().len(), 3);
}

#[test]
fn config_file_is_merged_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());

    // theta.type 0.95 suppresses the "train" type descriptor entirely; the
    // ordinals still pin the target.
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"theta.type": 0.95, "mode": "greedy"}"#).unwrap();
    let out = refexp(&["generate", &scene, "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert_eq!(String::from_utf8_lossy(&out.stdout), "the right\n");

    // The flag overrides the config value, restoring the type descriptor.
    let out = refexp(&[
        "generate",
        &scene,
        "--config",
        config.to_str().unwrap(),
        "--theta-type",
        "0.3",
        "--entropy-stop",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    // With a generous entropy budget the expression stops after one step
    // ("right" pins it) only if entropy <= 1.5 already holds at step 2.
    assert!(String::from_utf8_lossy(&out.stdout).contains("right"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"thetatype": 0.5}"#).unwrap();
    let out = refexp(&["generate", &scene, "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
}

#[test]
fn invalid_config_values_are_rejected_before_data_access() {
    let out = refexp(&["generate", "/nonexistent/scene.json", "--alpha=-1"]);
    assert_eq!(out.status.code(), Some(1));
    // Config validation fires before the scene file is touched.
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn synth_writes_deterministic_scene_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = refexp(&[
            "synth",
            "--count",
            "3",
            "--seed",
            "5",
            "--guarantee",
            "ambiguous",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(res.status.code(), Some(0), "{res:?}");
    }
    for i in 0..3 {
        let name = format!("scene_{i:04}.json");
        let a = fs::read(out_a.join(&name)).unwrap();
        let b = fs::read(out_b.join(&name)).unwrap();
        assert_eq!(a, b);
        // Generated scenes parse back through the normal pipeline.
        let parsed = refexp_core::scene::parse_scene::<f64>(&a);
        assert!(parsed.is_ok());
    }
}

#[test]
fn train_lm_model_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let lm_path = train_lm(dir.path());
    let bytes = fs::read(&lm_path).unwrap();
    let model = refexp_core::ngram::NgramModel::<f64>::from_json(&bytes).unwrap();
    assert_eq!(model.order(), 3);
    assert!(model.vocab().contains("train"));
}
