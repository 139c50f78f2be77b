use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lcpose::io::{
    parse_metrics, read_dataset, read_predictions, write_dataset, write_model, write_predictions, Dataset, Model,
    Prediction,
};
use lcpose::model::{AttributeAssignment, JointLabel, ModelParams, TrainConfig};
use lcpose::synth::{generate, SynthConfig};

fn lcpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcpose")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, candidates: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    let o = lcpose(&[
        "synth",
        "--out",
        s(&out),
        "--positives",
        "12",
        "--negatives",
        "6",
        "--candidates",
        &candidates.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn zero_model(dir: &Path, ds: &Dataset) -> PathBuf {
    let path = dir.join("zero.json");
    write_model(
        &path,
        &Model {
            params: ModelParams::zeros(ds.structure.layout()),
            structure: ds.structure.clone(),
            seed: 0,
            train_config: TrainConfig::default(),
        },
    )
    .unwrap();
    path
}

fn metrics(o: &Output) -> Vec<(String, String)> {
    parse_metrics(&String::from_utf8_lossy(&o.stdout)).unwrap()
}

fn metric(m: &[(String, String)], name: &str) -> String {
    m.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone()).unwrap_or_default()
}

#[test]
fn train_infer_eval_overlay_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d, "d.jsonl", 5, 1);
    std::fs::write(d.join("c.toml"), "[train]\nrelabel_iters = 2\nmining_iters = 2\n").unwrap();
    let model = d.join("m.json");
    let o = lcpose(&["train", "--dataset", s(&data), "--out", s(&model), "--config", s(&d.join("c.toml")), "--seed", "4", "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(d.join("m.json.report.jsonl")).unwrap();
    assert_eq!(report.lines().count(), 4);

    let preds = d.join("p.jsonl");
    assert!(lcpose(&["infer", "--model", s(&model), "--dataset", s(&data), "--out", s(&preds)]).status.success());
    let p = read_predictions(&preds).unwrap();
    assert_eq!(p.len(), 18);
    assert!(p.iter().enumerate().all(|(i, x)| x.index == i));

    let metrics_path = d.join("metrics.tsv");
    let o = lcpose(&["eval", "--predictions", s(&preds), "--dataset", s(&data), "--out", s(&metrics_path)]);
    assert!(o.status.success());
    let m = metrics(&o);
    assert_eq!(m.len(), 6 + 1 + 3 + 1);
    assert_eq!(std::fs::read_to_string(&metrics_path).unwrap(), String::from_utf8_lossy(&o.stdout));

    let png = d.join("o.png");
    assert!(lcpose(&["overlay", "--dataset", s(&data), "--predictions", s(&preds), "--index", "1", "--out", s(&png)]).status.success());
    let img = lcpose::io::read_png(&png).unwrap();
    assert_eq!((img.width(), img.height()), (160, 160));
}

#[test]
fn singleton_candidates_predict_the_only_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.jsonl", 1, 2);
    let ds = read_dataset(&data).unwrap();
    let model = zero_model(dir.path(), &ds);
    let preds = dir.path().join("p.jsonl");
    assert!(lcpose(&["infer", "--model", s(&model), "--dataset", s(&data), "--out", s(&preds)]).status.success());
    for p in read_predictions(&preds).unwrap() {
        assert_eq!(p.label.pose.0, vec![0; 6]);
    }
}

#[test]
fn zero_model_scores_zero_and_picks_first_values() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.jsonl", 4, 3);
    let ds = read_dataset(&data).unwrap();
    let model = zero_model(dir.path(), &ds);
    let preds = dir.path().join("p.jsonl");
    assert!(lcpose(&["infer", "--model", s(&model), "--dataset", s(&data), "--out", s(&preds)]).status.success());
    let text = std::fs::read_to_string(&preds).unwrap();
    assert!(text.lines().all(|l| l.contains("\"attributes\":[1,1,1]") && l.contains("\"score\":0.0")));
}

fn truth_predictions(ds: &Dataset) -> Vec<Prediction> {
    ds.records
        .iter()
        .enumerate()
        .map(|(i, r)| Prediction {
            index: i,
            label: JointLabel {
                pose: r.sample.pose.clone().unwrap_or(lcpose::model::PoseAssignment(vec![0; 6])),
                attributes: r.attributes.clone().unwrap_or(AttributeAssignment(vec![0; 3])),
            },
            score: 0.0,
            iterations: 1,
            converged: true,
        })
        .collect()
}

#[test]
fn eval_identity_shuffled_and_unannotated() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d, "d.jsonl", 6, 5);
    let ds = read_dataset(&data).unwrap();
    let truth = truth_predictions(&ds);
    let pt = d.join("truth.jsonl");
    write_predictions(&pt, &truth).unwrap();
    let m = metrics(&lcpose(&["eval", "--predictions", s(&pt), "--dataset", s(&data)]));
    assert_eq!(metric(&m, "pcp.total").parse::<f64>().unwrap(), 100.0);
    assert_eq!(metric(&m, "f1.total").parse::<f64>().unwrap(), 1.0);

    let mut shuffled = truth.clone();
    let n = ds.records.iter().filter(|r| r.sample.pose.is_some()).count();
    for i in 0..n {
        shuffled[i].label = truth[(i + 1) % n].label.clone();
    }
    let ps = d.join("shuffled.jsonl");
    write_predictions(&ps, &shuffled).unwrap();
    let m = metrics(&lcpose(&["eval", "--predictions", s(&ps), "--dataset", s(&data)]));
    assert!(metric(&m, "pcp.total").parse::<f64>().unwrap() < 100.0);
    assert!(metric(&m, "f1.total").parse::<f64>().unwrap() < 1.0);

    let mut bare = ds.clone();
    bare.records.iter_mut().for_each(|r| r.attributes = None);
    let bare_path = d.join("bare.jsonl");
    write_dataset(&bare_path, &bare).unwrap();
    let o = lcpose(&["eval", "--predictions", s(&pt), "--dataset", s(&bare_path)]);
    assert!(o.status.success());
    let m = metrics(&o);
    assert_eq!(metric(&m, "pcp.total").parse::<f64>().unwrap(), 100.0);
    assert_eq!(metric(&m, "f1"), "unavailable");

    let pp = d.join("short.jsonl");
    write_predictions(&pp, &truth[..3]).unwrap();
    assert_eq!(lcpose(&["eval", "--predictions", s(&pp), "--dataset", s(&data)]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d, "d.jsonl", 3, 6);
    let ds = read_dataset(&data).unwrap();

    assert_eq!(lcpose(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lcpose(&["train", "--dataset", s(&data)]).status.code(), Some(1));

    let mut positives_only = ds.clone();
    positives_only.records.retain(|r| r.sample.pose.is_some());
    let po = d.join("pos.jsonl");
    write_dataset(&po, &positives_only).unwrap();
    let o = lcpose(&["train", "--dataset", s(&po), "--out", s(&d.join("m.json")), "--quiet"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("negative"));

    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[5] = "{\"polarity\": 1";
    let bad = d.join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let o = lcpose(&["train", "--dataset", s(&bad), "--out", s(&d.join("m.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 6"));

    let model = zero_model(d, &ds);
    let other = generate(&SynthConfig {
        width: 128,
        height: 128,
        candidates: 2,
        positives: 2,
        negatives: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let od = d.join("other.jsonl");
    write_dataset(&od, &Dataset::from_samples(other.structure, other.samples, other.hidden).unwrap()).unwrap();
    let o = lcpose(&["infer", "--model", s(&model), "--dataset", s(&od), "--out", s(&d.join("p.jsonl"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("deformation_unit"));
}

#[test]
fn same_seed_same_model_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d, "d.jsonl", 4, 7);
    let mut bytes = Vec::new();
    for k in 0..2 {
        let m = d.join(format!("m{k}.json"));
        let o = lcpose(&["train", "--dataset", s(&data), "--out", s(&m), "--seed", "13", "--quiet"]);
        assert!(o.status.success());
        bytes.push(std::fs::read(&m).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}
