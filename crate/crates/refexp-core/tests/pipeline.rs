//! End-to-end pipeline tests over hand-built symbolic scenes.

use std::fs;

use refexp_core::eval::{self, DatasetEntry, Outcome};
use refexp_core::ngram::{LanguageModel, NgramModel};
use refexp_core::prep;
use refexp_core::rsa::{self, LmWeight};
use refexp_core::scene::parse_scene;
use refexp_core::semantics::{categorize, salience_prior};
use refexp_core::synth::{generate_scene, Guarantee, SynthParams};
use refexp_core::{Config, Lm, Scalar, Thresholds};

fn cfg_lm_off() -> Config {
    Config {
        lm_weight: LmWeight::Off,
        ..Config::default()
    }
}

fn run_generation(scene_json: &str, lm: &Lm, cfg: &Config) -> (rsa::Expression, Outcome) {
    let scene = parse_scene::<Scalar>(scene_json.as_bytes()).unwrap();
    let prepared = prep::prepare(scene).unwrap();
    let space = categorize(&prepared, &Thresholds::default()).unwrap();
    let prior = salience_prior(&prepared.scene).unwrap();
    let target = prepared.alignment.target_id.clone();
    let (expression, _) = rsa::generate(&space, &target, &prior, lm, cfg).unwrap();
    let outcome = eval::classify(expression.descriptors(), &target, &prepared.alignment);
    (expression, outcome)
}

const TWO_TRAINS: &str = r#"{
    "image_id": "trains", "width": 100, "height": 50,
    "objects": [
        {"id": "t1", "bbox": [10, 10, 20, 20], "types": {"train": 0.9}, "attributes": {}},
        {"id": "t2", "bbox": [60, 10, 20, 20], "types": {"train": 0.9}, "attributes": {}}
    ],
    "relations": [],
    "target": {"bbox": [60, 10, 20, 20], "types": {"train": 0.9}, "attributes": {}}
}"#;

// One dog holds the frisbee; the dogs' crossed type scores keep both "dog"
// extensions identical, so the relation is the only separator.
const TWO_DOGS_FRISBEE: &str = r#"{
    "image_id": "dogs", "width": 120, "height": 60,
    "objects": [
        {"id": "d1", "bbox": [10, 10, 20, 20], "types": {"dog": 0.9, "cat": 0.5}, "attributes": {}},
        {"id": "d2", "bbox": [60, 10, 20, 20], "types": {"dog": 0.5, "cat": 0.9}, "attributes": {}},
        {"id": "f1", "bbox": [32, 14, 8, 8], "types": {"frisbee": 0.8}, "attributes": {}}
    ],
    "relations": [
        {"subject": "d1", "predicate": "with", "object": "f1", "score": 0.8}
    ],
    "target": {"bbox": [10, 10, 20, 20], "types": {"dog": 0.9, "cat": 0.5}, "attributes": {}}
}"#;

// Both pizzas are cooking and their crossed type scores make every
// descriptor true of both.
const TWO_PIZZAS: &str = r#"{
    "image_id": "pizzas", "width": 100, "height": 50,
    "objects": [
        {"id": "p1", "bbox": [10, 10, 20, 20], "types": {"pizza": 0.9, "food": 0.5},
         "attributes": {"cooking": 0.8}},
        {"id": "p2", "bbox": [60, 10, 20, 20], "types": {"pizza": 0.5, "food": 0.9},
         "attributes": {"cooking": 0.8}}
    ],
    "relations": [],
    "target": {"bbox": [10, 10, 20, 20], "types": {"pizza": 0.9, "food": 0.5},
               "attributes": {"cooking": 0.8}}
}"#;

#[test]
fn two_trains_with_lm_yields_the_right_train() {
    // A corpus dominated by bare "train" makes the type worth uttering
    // before the ordinal pins the referent.
    let corpus: Vec<Vec<String>> = std::iter::repeat_with(|| vec!["train".to_owned()])
        .take(9)
        .chain(std::iter::once(vec!["right".to_owned(), "train".to_owned()]))
        .collect();
    let lm = LanguageModel::Ngram(NgramModel::<Scalar>::train(&corpus, 3).unwrap());
    let (expression, outcome) = run_generation(TWO_TRAINS, &lm, &Config::default());

    let mut surfaces: Vec<&str> = expression.surfaces().collect();
    surfaces.sort_unstable();
    assert_eq!(surfaces, vec!["right", "train"]);
    assert_eq!(expression.text(), "the right train");
    assert_eq!(outcome, Outcome::True);
}

#[test]
fn two_trains_without_lm_still_resolves_target() {
    let (expression, outcome) = run_generation(TWO_TRAINS, &LanguageModel::Off, &cfg_lm_off());
    assert_eq!(outcome, Outcome::True);
    assert!(expression.contains_surface("right"));
}

#[test]
fn frisbee_dog_is_described_by_its_relation() {
    let (expression, outcome) =
        run_generation(TWO_DOGS_FRISBEE, &LanguageModel::Off, &cfg_lm_off());
    assert!(
        expression.contains_surface("with frisbee"),
        "expression was {:?}",
        expression.text()
    );
    assert_eq!(outcome, Outcome::True);
}

#[test]
fn cooking_pizzas_stay_under_informative() {
    let (expression, outcome) = run_generation(TWO_PIZZAS, &LanguageModel::Off, &cfg_lm_off());
    assert_eq!(outcome, Outcome::UnderInformative);
    assert!(expression.len() <= 4);
}

#[test]
fn dataset_outcomes_aggregate_to_spec_arithmetic() {
    // Four instances: True, True, UnderInformative, and one missing scene
    // file recorded as NoMatch -> raw 0.5, adjusted 2/3.
    let dir = tempfile::tempdir().unwrap();
    let mut entries = Vec::new();

    for (i, seed) in [11u64, 12].iter().enumerate() {
        let scene = generate_scene::<Scalar>(&SynthParams {
            guarantee: Guarantee::UniqueType,
            seed: *seed,
            ..SynthParams::default()
        })
        .unwrap();
        let path = dir.path().join(format!("true_{i}.json"));
        fs::write(&path, refexp_core::scene::serialize_scene(&scene.scene)).unwrap();
        entries.push(DatasetEntry {
            scene: path,
            references: vec!["a reference".to_owned()],
        });
    }

    let ambiguous = generate_scene::<Scalar>(&SynthParams {
        guarantee: Guarantee::Ambiguous,
        seed: 13,
        ..SynthParams::default()
    })
    .unwrap();
    let path = dir.path().join("ambiguous.json");
    fs::write(&path, refexp_core::scene::serialize_scene(&ambiguous.scene)).unwrap();
    entries.push(DatasetEntry {
        scene: path,
        references: vec!["a reference".to_owned()],
    });

    entries.push(DatasetEntry {
        scene: dir.path().join("does_not_exist.json"),
        references: vec!["a reference".to_owned()],
    });

    let run = eval::evaluate_dataset(
        &entries,
        &cfg_lm_off(),
        &Thresholds::default(),
        &LanguageModel::Off,
    )
    .unwrap();

    let r = &run.report;
    assert_eq!(r.n_instances, 4);
    assert_eq!(r.counts.true_, 2);
    assert_eq!(r.counts.under_informative, 1);
    assert_eq!(r.counts.no_match, 1);
    assert_eq!(r.counts.total(), 4);
    assert!((r.raw_accuracy - 0.5).abs() < 1e-12);
    assert!((r.adjusted_accuracy.unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.n_errored, 1);
    assert_eq!(r.n_scored, 3);

    let errored = &run.instances[3];
    assert_eq!(errored.outcome, Outcome::NoMatch);
    assert!(errored.error.is_some());
    assert!(errored.expression.is_none());
}

#[test]
fn empty_dataset_is_an_error() {
    assert!(eval::evaluate_dataset::<Scalar>(
        &[],
        &cfg_lm_off(),
        &Thresholds::default(),
        &LanguageModel::Off,
    )
    .is_err());
}

#[test]
fn perfect_instance_scores_full_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trains.json");
    fs::write(&path, TWO_TRAINS).unwrap();
    let entries = vec![DatasetEntry {
        scene: path,
        references: vec!["the right".to_owned()],
    }];
    let run = eval::evaluate_dataset(
        &entries,
        &cfg_lm_off(),
        &Thresholds::default(),
        &LanguageModel::Off,
    )
    .unwrap();
    assert_eq!(run.report.counts.true_, 1);
    assert!((run.report.raw_accuracy - 1.0).abs() < 1e-12);
    // Candidate equals the reference, so every overlap metric is at its
    // identity value.
    assert!((run.report.bleu - 1.0).abs() < 1e-9);
    assert!((run.report.rouge_l - 1.0).abs() < 1e-9);
    assert!(run.report.meteor > 0.9);
    assert!((run.report.listener_accuracy - 1.0).abs() < 1e-12);
}

#[test]
fn pipeline_runs_at_f32_and_f64_alike() {
    fn text_for<R: refexp_core::Real>(json: &str) -> String {
        let scene = parse_scene::<R>(json.as_bytes()).unwrap();
        let prepared = prep::prepare(scene).unwrap();
        let space =
            categorize(&prepared, &refexp_core::semantics::ThresholdTable::default()).unwrap();
        let prior = salience_prior(&prepared.scene).unwrap();
        let cfg = refexp_core::rsa::RsaConfig::<R> {
            lm_weight: LmWeight::Off,
            ..Default::default()
        };
        let (expression, _) = rsa::generate(
            &space,
            &prepared.alignment.target_id,
            &prior,
            &LanguageModel::Off,
            &cfg,
        )
        .unwrap();
        expression.text()
    }
    for scene in [TWO_TRAINS, TWO_DOGS_FRISBEE, TWO_PIZZAS] {
        assert_eq!(text_for::<f32>(scene), text_for::<f64>(scene));
    }
}

#[test]
fn dataset_jsonl_loader_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), TWO_TRAINS).unwrap();
    let dataset = dir.path().join("data.jsonl");
    fs::write(
        &dataset,
        "{\"scene\": \"s.json\", \"references\": [\"right train\"]}\n",
    )
    .unwrap();
    let entries = eval::load_dataset(&dataset).unwrap();
    assert_eq!(entries.len(), 1);
    assert!(entries[0].scene.is_absolute() || entries[0].scene.starts_with(dir.path()));
    assert!(entries[0].scene.exists());
}
