use std::fs;
use std::path::Path;

use pacf::cli::{parse_metric, run_cli, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use pacf::learners::TrainedModel;
use pacf::{LabeledDataset, Predictor};

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["pacf", "--no-timestamp"];
    argv.extend_from_slice(args);
    run_cli(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_train_audit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("m.json");
    let report = dir.path().join("a.json");
    assert_eq!(
        run(&["gen-data", "--generator", "separable", "--n", "2", "--m", "60", "--seed", "3", "--out", s(&data), "--report", s(&dir.path().join("g.json"))]),
        EXIT_OK
    );
    assert_eq!(LabeledDataset::load(&data).unwrap().len(), 60);
    assert_eq!(
        run(&["train", "--data", s(&data), "--metric", "euclidean:0.2", "--tau", "0.01", "--seed", "1", "--out", s(&model), "--report", s(&dir.path().join("t.json"))]),
        EXIT_OK
    );
    let trained: TrainedModel = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert!(trained.report.final_constraint_slack <= 1e-6);
    assert!(matches!(trained.predictor, Predictor::Linear { .. }));

    assert_eq!(
        run(&["audit", "--predictor", s(&model), "--data", s(&data), "--metric", "euclidean:0.2", "--gamma", "0.05", "--seed", "1", "--out", s(&report)]),
        EXIT_OK
    );
    let audit: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(audit["schema_version"], 1);
    assert_eq!(audit["command"], "audit");
    assert!(audit.get("generated_at_unix").is_none());
    // same matching seed as training, so the trained l1 budget carries over
    assert!(audit["empirical_l1_loss"].as_f64().unwrap() <= 0.01 + 1e-6);

    // a bare predictor file is accepted too
    let bare = dir.path().join("bare.json");
    fs::write(&bare, serde_json::to_string(&trained.predictor).unwrap()).unwrap();
    assert_eq!(
        run(&["audit", "--predictor", s(&bare), "--data", s(&data), "--metric", "constant:0", "--gamma", "0.05", "--matching", "consecutive", "--out", s(&report)]),
        EXIT_OK
    );
}

#[test]
fn timestamp_present_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.json");
    assert_eq!(run_cli(["pacf", "hardness-demo", "--n", "6", "--pairs", "4", "--learner", "none", "--seed", "1", "--out", s(&out)]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["generated_at_unix"].as_u64().unwrap() > 0);
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["train", "--unknown-flag"]), EXIT_USAGE);
    assert_eq!(run(&["no-such-command"]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_OK);
    assert_eq!(run(&["bounds", "--formula", "delta-m", "--g", "10"]), EXIT_USAGE);
    assert_eq!(
        run(&["audit", "--predictor", "/nonexistent/p.json", "--data", "/nonexistent/d.csv", "--metric", "constant:0", "--gamma", "0.1", "--seed", "1"]),
        EXIT_RUNTIME
    );
}

#[test]
fn bounds_json_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    assert_eq!(
        run(&["bounds", "--formula", "delta-m", "--formula", "b-star", "--g", "10", "--delta", "0.05", "--m", "1000001", "--rhat", "0.001", "--l", "3", "--eps-star", "0.5", "--out", s(&out)]),
        EXIT_OK
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!((v["delta_m"].as_f64().unwrap() - 0.87173).abs() < 1e-5);
    assert!((v["kernel_norm_bound"].as_f64().unwrap() / 2.736e39 - 1.0).abs() < 1e-3);
}

#[test]
fn matrix_and_hardness_metric_specs() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("d.csv");
    fs::write(&matrix, "0,0.5\n0.5,0\n").unwrap();
    fs::write(dir.path().join("d.csv.index"), "0\n1\n").unwrap();
    let spec = format!("matrix:{}", s(&matrix));
    assert!(parse_metric(&spec).is_ok(), "{:?}", parse_metric(&spec).err());

    let data = dir.path().join("h.csv");
    let handle = dir.path().join("h.json");
    assert_eq!(
        run(&["gen-data", "--generator", "hardness-u", "--n", "8", "--m", "20", "--seed", "2", "--out", s(&data), "--handle-out", s(&handle), "--report", s(&dir.path().join("r.json"))]),
        EXIT_OK
    );
    let out = dir.path().join("v.json");
    assert_eq!(
        run(&["validate-metric", "--metric", &format!("hardness:{}", s(&handle)), "--data", s(&data), "--triples", "500", "--seed", "3", "--out", s(&out)]),
        EXIT_OK
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["clean"], true);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(run(&["hardness-demo", "--n", "6", "--pairs", "5", "--learner", "none", "--seed", "42", "--out", s(&a)]), EXIT_OK);
    std::env::set_var("PACF_SEED", "42");
    assert_eq!(run(&["hardness-demo", "--n", "6", "--pairs", "5", "--learner", "none", "--out", s(&b)]), EXIT_OK);
    std::env::remove_var("PACF_SEED");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
