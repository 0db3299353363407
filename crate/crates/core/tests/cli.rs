use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepcnf::dcnn::{Activation, NetworkArch};
use deepcnf::model::Model;
use deepcnf::params::ModelParams;
use deepcnf::seqdata::{label_frequencies, load_dataset};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepcnf")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = path(dir, name);
    let mut args = vec!["synth", "--seed", "3", "--out", &out];
    for (flag, default) in [("--sequences", "20"), ("--length", "15..25")] {
        if !extra.contains(&flag) {
            args.extend([flag, default]);
        }
    }
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
}

#[test]
fn synth_train_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.tsv", &["--priors", "0.6,0.3,0.1"]);
    let model = path(dir.path(), "m.json");
    let o = run(&[
        "train", "--data", &data, "--objective", "auc", "--degree", "7", "--arch", "layers=1,neurons=4,window=3", "--max-iter",
        "5", "--model-out", &model,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = stdout(&o);
    assert!(trace.starts_with("iteration\tobjective\tgrad_max_norm\tstep\telapsed_seconds\n"));
    assert!(trace.lines().count() >= 2);

    let preds = path(dir.path(), "p.tsv");
    let o = run(&["predict", "--model", &model, "--data", &data, "--out", &preds]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&preds).unwrap();
    let ds = load_dataset(&data).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with('>')).collect();
    assert_eq!(rows.len(), ds.total_positions());
    for row in rows {
        let cols: Vec<&str> = row.split('\t').collect();
        assert!(ds.alphabet.index_of(cols[0]).is_some());
        let p: Vec<f64> = cols.last().unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }

    let json = path(dir.path(), "r.json");
    let o = run(&["evaluate", "--model", &model, "--data", &data, "--json-out", &json]);
    assert!(o.status.success());
    let out = stdout(&o);
    let qx: f64 = value(&out, "qx").parse().unwrap();
    assert!((0.0..=1.0).contains(&qx));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["labels"].as_array().unwrap().len(), 3);
}

#[test]
fn predict_accepts_unlabeled_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.tsv", &[]);
    let model = path(dir.path(), "m.json");
    assert!(run(&["train", "--data", &data, "--arch", "layers=1,neurons=3,window=3", "--max-iter", "2", "--model-out", &model])
        .status
        .success());
    // replace every label with '?'
    let text = std::fs::read_to_string(&data).unwrap();
    let unlabeled: String = text
        .lines()
        .map(|l| match l.split_once('\t') {
            Some((_, rest)) => format!("?\t{rest}\n"),
            None => format!("{l}\n"),
        })
        .collect();
    let blind = path(dir.path(), "u.tsv");
    std::fs::write(&blind, unlabeled).unwrap();
    let o = run(&["predict", "--model", &model, "--data", &blind]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().filter(|l| l.contains('\t') && !l.starts_with('#')).count() > 0);
    // evaluation needs labels
    let o = run(&["evaluate", "--model", &model, "--data", &blind]);
    assert!(!o.status.success());
}

#[test]
fn zero_model_scores_chance() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.tsv", &["--priors", "0.5,0.3,0.2"]);
    let ds = load_dataset(&data).unwrap();
    let arch = NetworkArch::uniform(ds.feature_dim(), 2, 4, 3, Activation::Sigmoid).unwrap();
    let model = Model::new(ds.alphabet.clone(), ModelParams::zeros(arch, 3), None).unwrap();
    let mpath = path(dir.path(), "zero.json");
    model.save(&mpath).unwrap();
    let o = run(&["evaluate", "--model", &mpath, "--data", &data]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(value(&out, "mean_auc").parse::<f64>().unwrap(), 0.5);
    for k in 0..3 {
        let name = ds.alphabet.name(k);
        assert_eq!(value(&out, &format!("label.{name}.auc")).parse::<f64>().unwrap(), 0.5);
        assert!(out.lines().any(|l| l.split_whitespace().next() == Some(name)));
    }
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    for objective in ["mle", "label", "auc"] {
        let o = run(&["gradcheck", "--objective", objective, "--seed", "4"]);
        assert!(o.status.success(), "{objective}: {}", stdout(&o));
        assert_eq!(value(&stdout(&o), "result"), "pass");
    }
    let o = run(&["gradcheck", "--corrupt-gradient"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(value(&stdout(&o), "result"), "fail");
}

#[test]
fn synth_priors_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let extra = ["--priors", "0.94,0.06", "--sequences", "200", "--length", "100"];
    let a = synth(dir.path(), "a.tsv", &extra);
    let b = synth(dir.path(), "b.tsv", &extra);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let f = label_frequencies(&load_dataset(&a).unwrap()).unwrap();
    assert!((f[0] - 0.94).abs() < 0.02 && (f[1] - 0.06).abs() < 0.02, "{f:?}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = PathBuf::from(path(dir.path(), "missing.tsv"));
    let m = path(dir.path(), "m.json");
    // bad flag value
    assert_eq!(run(&["train", "--objective", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["synth", "--priors", "0.5,-1", "--out", &m]).status.code(), Some(1));
    // unreadable input
    let o = run(&["train", "--data", missing.to_str().unwrap(), "--model-out", &m]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    // malformed data
    let bad = path(dir.path(), "bad.tsv");
    std::fs::write(&bad, "#labels A,B\n> s\nA\t1.0\nC\t2.0\n").unwrap();
    assert_eq!(run(&["train", "--data", &bad, "--model-out", &m]).status.code(), Some(2));
    // help is not an error
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    // label absent from the training data
    let one = path(dir.path(), "one.tsv");
    std::fs::write(&one, "#labels A,B\n> s\nA\t1.0\nA\t2.0\n").unwrap();
    let o = run(&["train", "--data", &one, "--objective", "auc", "--arch", "layers=1,neurons=2,window=1", "--model-out", &m]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
