use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_churn-recourse"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"{"data": {"n_users": 500}, "surrogate": {"epochs": 20},
  "gan": {"max_iterations": 120, "checkpoint_warmup": 20}, "tree_counts": [1, 3], "rgd_trees": 3, "rgd_max_users": 20}"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    dir
}

#[test]
fn stage_by_stage_pipeline() {
    let dir = setup();
    let d = dir.path();
    let c = ["--config", "small.json", "--seed", "4"];
    let steps: Vec<Vec<&str>> = vec![
        vec!["generate-data", "--out-dir", "data"],
        vec!["train-forest", "--train", "data/train.csv", "--meta", "data/meta.json", "--n-trees", "3", "--out", "forest.json"],
        vec!["distill", "--forest", "forest.json", "--train", "data/train.csv", "--meta", "data/meta.json", "--out", "surrogate.json"],
        vec![
            "train-gan", "--forest", "forest.json", "--surrogate", "surrogate.json", "--train", "data/train.csv",
            "--meta", "data/meta.json", "--out-dir", "gan",
        ],
        vec![
            "recourse", "--method", "gan", "--forest", "forest.json", "--gan", "gan", "--data", "data/test.csv",
            "--meta", "data/meta.json", "--out", "actions.jsonl", "--show", "1",
        ],
        vec![
            "evaluate", "--forest", "forest.json", "--data", "data/test.csv", "--meta", "data/meta.json",
            "--actions", "actions.jsonl", "--gan", "gan", "--out", "report.json",
        ],
        vec![
            "audit", "--train", "data/train.csv", "--data", "data/test.csv", "--meta", "data/meta.json",
            "--actions", "actions.jsonl", "--out-dir", "audit",
        ],
    ];
    for s in steps {
        let mut args = s.clone();
        args.extend(c);
        let o = run(d, &args);
        assert!(o.status.success(), "{s:?}: {}", stderr(&o));
    }
    for f in [
        "data/train.csv", "data/test.csv", "data/meta.json", "gan/generator.json", "gan/training_log.csv",
        "gan/model.json", "report.json", "audit/pca.json", "audit/scatter.csv", "audit/hist_efficacy.csv",
        "audit/hist_true_outcome.csv",
    ] {
        assert!(d.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
    for key in [
        "model_accuracy_all", "model_accuracy_y0", "discriminator_accuracy_real", "discriminator_accuracy_fake",
        "post_recourse_classifier_accuracy", "percent_denied", "percent_successful_recourse",
        "mean_cost_successful", "cumulative_cost_denied", "mean_clock_time_seconds",
    ] {
        assert!(report.get(key).is_some(), "{key}");
    }
}

#[test]
fn rgd_on_a_non_reference_forest_is_flagged() {
    let dir = setup();
    let d = dir.path();
    let c = ["--config", "small.json", "--seed", "4"];
    for s in [
        vec!["generate-data", "--out-dir", "data", "--n-users", "300"],
        vec!["train-forest", "--train", "data/train.csv", "--meta", "data/meta.json", "--n-trees", "2", "--out", "f.json"],
    ] {
        let mut a = s.clone();
        a.extend(c);
        assert!(run(d, &a).status.success());
    }
    let o = run(d, &["recourse", "--method", "rgd", "--forest", "f.json", "--data", "data/test.csv", "--meta", "data/meta.json", "--out", "r.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("2-tree forest"), "{}", stderr(&o));
    assert!(d.join("r.jsonl").exists());
}

#[test]
fn missing_artifacts_exit_3_and_name_the_stage() {
    let dir = setup();
    let o = run(dir.path(), &["train-forest", "--train", "nope.csv", "--meta", "nope.json", "--out", "f.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nope.csv") && stderr(&o).contains("generate-data"), "{}", stderr(&o));

    let o = run(dir.path(), &["serve", "--forest", "f.json", "--gan", "g", "--meta", "m.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("train-forest"));

    let o = run(dir.path(), &["recourse", "--method", "gan", "--forest", "f.json", "--data", "x.csv", "--meta", "m.json", "--out", "a"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn invalid_configuration_exits_2() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), "{not json").unwrap();
    let o = run(d, &["generate-data", "--out-dir", "x", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(d.join("bad2.json"), r#"{"tree_counts": [1, 5], "rgd_trees": 20}"#).unwrap();
    let o = run(d, &["repro", "--out-dir", "x", "--config", "bad2.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rgd_trees"));

    let o = run(d, &["generate-data", "--out-dir", "x", "--train-fraction", "1.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = run(d, &["recourse", "--method", "gan", "--forest", "f", "--data", "d", "--meta", "m", "--out", "o"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn repro_writes_a_manifest_that_repeats() {
    let dir = setup();
    let d = dir.path();
    for out in ["a", "b"] {
        let o = run(d, &["repro", "--seed", "5", "--out-dir", out, "--config", "small.json"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("via GANs"));
    }
    let read = |p: &str| -> serde_json::Value { serde_json::from_slice(&std::fs::read(d.join(p)).unwrap()).unwrap() };
    let (a, b) = (read("a/manifest.json"), read("b/manifest.json"));
    assert_eq!(a["outputs"], b["outputs"]);
    assert!(a["outputs"].as_array().unwrap().len() > 5);
    assert!(d.join("a/trees_3/gan/training_log.csv").exists());
}
