use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use latrank::bm25::InvertedIndex;
use latrank::budget::{run_queries, BudgetPlan};
use latrank::corpus::{load_collection, load_qrels, load_queries};
use latrank::eval::ndcg_at;
use latrank::model::{load_checkpoint, CrossEncoder};
use latrank::tokenizer::Vocab;
use tempfile::TempDir;

fn latrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latrank"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run latrank")
}

fn ok(args: &[&str]) -> String {
    let out = latrank(args);
    assert!(
        out.status.success(),
        "latrank {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) {
    ok(&[
        "--seed", seed, "--out-dir", s(dir), "synth", "--n-docs", "400", "--n-queries", "20", "--n-validation", "4",
        "--n-test", "4",
    ]);
}

const SMALL_MODEL: &str = r#"{
  "model": {"n_layers": 1, "d_model": 16, "n_heads": 2, "d_ff": 32, "vocab_size": 205,
            "max_len": 64, "type_vocab_size": 2, "dropout": 0.1},
  "train": {"max_len": 64, "lr": 0.002, "validation_every": 5, "max_batches": 10, "negatives_per_positive": 8}
}"#;

fn train_args(dir: &Path) -> Vec<String> {
    let f = |n: &str| dir.join(n).to_str().unwrap().to_owned();
    vec![
        "train".into(),
        "--corpus".into(),
        f("collection.tsv"),
        "--vocab".into(),
        f("vocab.txt"),
        "--train-queries".into(),
        f("queries.train.tsv"),
        "--validation-queries".into(),
        f("queries.validation.tsv"),
        "--qrels".into(),
        f("qrels.txt"),
    ]
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (PathBuf::from(p.file_name().unwrap()), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn synth_is_deterministic() {
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    synth(a.path(), "1");
    synth(b.path(), "1");
    synth(c.path(), "2");
    let fa = files(a.path());
    assert_eq!(fa.len(), 7);
    assert_eq!(fa, files(b.path()));
    assert_ne!(fa, files(c.path()));
}

#[test]
fn evaluate_matches_in_process() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    synth(d, "3");
    let cfg = d.join("cfg.json");
    fs::write(&cfg, SMALL_MODEL).unwrap();
    let mut args = vec!["--seed".to_owned(), "3".into(), "--out-dir".into(), s(d).into(), "--config".into(), s(&cfg).into()];
    args.extend(train_args(d));
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let f = |n: &str| d.join(n);
    ok(&[
        "--out-dir", s(d), "rerank", "--corpus", s(&f("collection.tsv")), "--vocab", s(&f("vocab.txt")),
        "--checkpoint", s(&f("model.ckpt")), "--queries", s(&f("queries.test.tsv")), "--k", "20",
    ]);
    let stdout = ok(&["--out-dir", s(d), "evaluate", "--run", s(&f("run.trec")), "--qrels", s(&f("qrels.txt"))]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(f("eval.json")).unwrap()).unwrap();
    let cli_ndcg = report["ndcg"]["mean"].as_f64().unwrap();
    assert!(stdout.starts_with("ndcg@10\t"));

    let corpus = load_collection(&f("collection.tsv")).unwrap();
    let index = InvertedIndex::build(&corpus).unwrap();
    let params = load_checkpoint(&f("model.ckpt")).unwrap();
    let enc = CrossEncoder::new(params, Vocab::load(&f("vocab.txt")).unwrap(), 64, 8).unwrap();
    let queries = load_queries(&f("queries.test.tsv")).unwrap();
    let (run, _) = run_queries(&enc, &corpus, &index, &queries, &BudgetPlan::fixed(20), 1000, "x").unwrap();
    let qrels = load_qrels(&f("qrels.txt")).unwrap();
    let in_process = ndcg_at(&run, &qrels, 10).unwrap().mean;
    assert!((cli_ndcg - in_process).abs() < 1e-9, "{cli_ndcg} vs {in_process}");
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    synth(d, "4");
    let cfg = d.join("cfg.json");
    fs::write(&cfg, SMALL_MODEL.replace("\"max_batches\": 10", "\"max_batches\": 2")).unwrap();
    let mut args = vec!["--out-dir".to_owned(), s(d).into(), "--config".into(), s(&cfg).into()];
    args.extend(train_args(d));
    args.extend(["--negatives".into(), "4".into()]);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let resolved: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("train_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["train"]["negatives_per_positive"], 4);
    assert_eq!(resolved["train"]["max_batches"], 2);
    assert_eq!(resolved["train"]["calibration_t"], 0.75);
    assert_eq!(resolved["model"]["d_model"], 16);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let missing = latrank(&["--out-dir", s(d), "evaluate", "--run", "no-such-run", "--qrels", "no-such-qrels"]);
    assert_eq!(missing.status.code(), Some(2));
    let err = String::from_utf8(missing.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("latrank: error[missing-file]:"), "{err}");

    let bad = d.join("bad.json");
    fs::write(&bad, r#"{"omega": 3}"#).unwrap();
    let out = latrank(&["--config", s(&bad), "--out-dir", s(d), "synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[invalid-config]"));

    assert_eq!(latrank(&["synth"]).status.code(), Some(2));

    let run = d.join("broken.trec");
    fs::write(&run, "q1 Q0 d1 one 1.0 t\n").unwrap();
    fs::write(d.join("qrels.txt"), "q1 0 d1 1\n").unwrap();
    let out = latrank(&["--out-dir", s(d), "evaluate", "--run", s(&run), "--qrels", s(&d.join("qrels.txt"))]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn version_and_help() {
    let v = ok(&["--version"]);
    assert!(v.contains("checkpoint format 1") && v.contains("index format 1"), "{v}");
    let help = ok(&["train", "--help"]);
    for want in ["[default: 128]", "[default: 0.75]", "[default: gbce]", "[default: 8]", "[default: 1000]"] {
        assert!(help.contains(want), "missing {want} in train --help");
    }
}
