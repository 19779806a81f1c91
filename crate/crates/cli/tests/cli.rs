use std::path::Path;
use std::process::{Command, Output};

use mrnet::store::{self, EpochStore, EPOCH_LEN};
use mrnet::synth::{self, SynthConfig};
use mrnet::Stage;

fn mrnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrnet"))
        .args(args)
        .current_dir(dir)
        .env_remove("MRNET_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = mrnet(dir, args);
    assert!(
        out.status.success(),
        "mrnet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fails_with(dir: &Path, args: &[&str], code: i32) -> String {
    let out = mrnet(dir, args);
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_synth(dir: &Path, name: &str, labels: &[Stage]) {
    let s = EpochStore {
        name: name.into(),
        samples: vec![0.0; labels.len() * EPOCH_LEN],
        labels: labels.to_vec(),
    };
    store::write_store(&dir.join(name), &s).unwrap();
}

#[test]
fn full_pipeline_on_synthetic_data() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["synth", "--out", "stores", "--records", "3", "--seed", "7", "--set", "synth.epochs_per_record=40"]);
    ok(
        d,
        &[
            "train", "--stores", "stores", "--out", "run", "--preset", "reduced", "--epochs", "1",
            "--set", "train.batch_size=16", "--set", "train.schedule.initial=0.01",
        ],
    );
    ok(d, &["predict", "--model", "run/model.mrn", "--stores", "stores", "--out", "preds"]);
    ok(
        d,
        &["correct", "--predictions", "preds", "--train-stores", "stores", "--out", "corr", "--set", "msc.laplace=true"],
    );
    ok(
        d,
        &["eval", "--stores", "stores", "--predictions", "preds", "--corrected", "corr", "--out", "eval/metrics.json"],
    );
    ok(d, &["plot", "--stores", "stores", "--predictions", "preds", "--corrected", "corr", "--out", "plots"]);

    let m = json(&d.join("eval/metrics.json"));
    for key in ["acc", "mf1", "per_class_f1", "confusion", "transitions_raw", "transitions_corrected", "records"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    assert_eq!(m["epochs"], 120);
    assert_eq!(m["records"].as_array().unwrap().len(), 3);
    let log = std::fs::read_to_string(d.join("run/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    for dir in ["stores", "run", "preds", "corr", "eval", "plots"] {
        assert!(d.join(dir).join("config.echo").is_file(), "{dir}/config.echo");
    }
    let svg = std::fs::read_to_string(d.join("plots/SYN000.svg")).unwrap();
    assert_eq!(svg.matches("<path").count(), 3);
    assert!(d.join("plots/SYN000.txt").is_file());
    assert!(d.join("corr/matrices/SYN000.csv").is_file());
    assert_eq!(store::read_predictions(&d.join("preds/SYN001.csv")).unwrap().len(), 40);
}

#[test]
fn ingest_writes_one_store_per_pair() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let cfg = SynthConfig {
        epochs_per_record: 25,
        ..SynthConfig::default()
    };
    let (_, a) = synth::write_edf_pair(&d.join("edf"), "SC4001E", &cfg, 1).unwrap();
    let (_, b) = synth::write_edf_pair(&d.join("edf"), "SC4002E", &cfg, 2).unwrap();
    ok(d, &["ingest", "--edf", "edf", "--channel", "EEG Fpz-Cz", "--out", "stores"]);
    assert_eq!(store::list_stores(&d.join("stores")).unwrap().len(), 2);
    assert_eq!(store::read_store(&d.join("stores/SC4001E")).unwrap().labels, a);
    assert_eq!(store::read_store(&d.join("stores/SC4002E")).unwrap().labels, b);

    let s = json(&d.join("stores/summary.json"));
    let hist_total: u64 = s["stages"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(hist_total, s["epochs"].as_u64().unwrap());
    assert_eq!(hist_total, 50);

    let err = fails_with(d, &["ingest", "--edf", "edf", "--channel", "EEG C4-A1", "--out", "x"], 2);
    assert!(err.contains("\"EEG Fpz-Cz\"") && err.contains("\"EEG Pz-Oz\""), "{err}");

    std::fs::remove_file(d.join("edf/SC4002EC-Hypnogram.edf")).unwrap();
    let err = fails_with(d, &["ingest", "--edf", "edf", "--out", "y"], 2);
    assert!(err.contains("missing hypnogram"), "{err}");
}

#[test]
fn correcting_a_constant_record_changes_nothing() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    std::fs::create_dir_all(d.join("preds")).unwrap();
    let probs = vec![[0.05f32, 0.1, 0.7, 0.1, 0.05]; 60];
    store::write_predictions(&d.join("preds/rec.csv"), &probs).unwrap();
    small_synth(&d.join("train"), "other", &[Stage::W, Stage::N1, Stage::N2, Stage::N3, Stage::Rem, Stage::W]);
    ok(
        d,
        &["correct", "--predictions", "preds", "--train-stores", "train", "--out", "corr", "--set", "msc.laplace=true"],
    );
    assert_eq!(store::read_labels(&d.join("corr/rec.csv")).unwrap(), vec![Stage::N2; 60]);

    // identical inputs give byte-identical outputs
    let first = std::fs::read(d.join("corr/rec.csv")).unwrap();
    let matrix = std::fs::read(d.join("corr/matrices/rec.csv")).unwrap();
    ok(
        d,
        &["correct", "--predictions", "preds", "--train-stores", "train", "--out", "corr", "--set", "msc.laplace=true"],
    );
    assert_eq!(std::fs::read(d.join("corr/rec.csv")).unwrap(), first);
    assert_eq!(std::fs::read(d.join("corr/matrices/rec.csv")).unwrap(), matrix);
}

#[test]
fn eval_matches_a_hand_count() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let truth = [Stage::W, Stage::W, Stage::N1, Stage::N1, Stage::N2, Stage::N2, Stage::Rem];
    let pred = [0usize, 1, 1, 1, 2, 4, 4];
    small_synth(&d.join("stores"), "r1", &truth);
    std::fs::create_dir_all(d.join("preds")).unwrap();
    let probs: Vec<[f32; 5]> = pred
        .iter()
        .map(|&p| {
            let mut v = [0.1f32; 5];
            v[p] = 0.6;
            v
        })
        .collect();
    store::write_predictions(&d.join("preds/r1.csv"), &probs).unwrap();
    ok(d, &["eval", "--stores", "stores", "--predictions", "preds", "--out", "m.json"]);
    let m = json(&d.join("m.json"));

    // brute force over the 7 epochs
    let t: Vec<usize> = truth.iter().map(|s| s.index()).collect();
    let correct = t.iter().zip(&pred).filter(|(a, b)| a == b).count();
    assert!((m["acc"].as_f64().unwrap() - correct as f64 / 7.0).abs() < 1e-12);
    let mut f1s = Vec::new();
    for c in 0..5 {
        let tp = t.iter().zip(&pred).filter(|&(&a, &b)| a == c && b == c).count() as f64;
        let fp = t.iter().zip(&pred).filter(|&(&a, &b)| a != c && b == c).count() as f64;
        let fn_ = t.iter().zip(&pred).filter(|&(&a, &b)| a == c && b != c).count() as f64;
        f1s.push(if tp + fp + fn_ == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) });
    }
    let names = ["W", "N1", "N2", "N3", "REM"];
    for (n, f) in names.iter().zip(&f1s) {
        assert!((m["per_class_f1"][n].as_f64().unwrap() - f).abs() < 1e-12, "{n}");
    }
    let mf1 = f1s.iter().sum::<f64>() / 5.0;
    assert!((m["mf1"].as_f64().unwrap() - mf1).abs() < 1e-12);
    assert_eq!(m["transitions_raw"], 3);
    assert!(m["transitions_corrected"].is_null());
}

#[test]
fn config_files_flags_and_errors() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    std::fs::write(d.join("run.cfg"), "# bench settings\nbench.records = 2\nbench.epochs_per_record = 200\nmsc.laplace = true\nmsc.r = 2.0\n").unwrap();
    ok(d, &["--config", "run.cfg", "bench", "--out", "b/bench.json", "--set", "msc.r=3.0"]);
    let echo = std::fs::read_to_string(d.join("b/config.echo")).unwrap();
    assert!(echo.contains("msc.r = 3.0\n") && echo.contains("bench.records = 2\n"), "{echo}");
    assert_eq!(json(&d.join("b/bench.json"))["rows"].as_array().unwrap().len(), 2);

    // the environment variable supplies the default file
    let out = Command::new(env!("CARGO_BIN_EXE_mrnet"))
        .args(["bench", "--out", "c/bench.json"])
        .current_dir(d)
        .env("MRNET_CONFIG", d.join("run.cfg"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(std::fs::read_to_string(d.join("c/config.echo")).unwrap().contains("msc.r = 2.0\n"));

    let err = fails_with(d, &["bench", "--set", "msc.rr=1"], 2);
    assert!(err.contains("unknown key `msc.rr`"), "{err}");
    std::fs::write(d.join("bad.cfg"), "msc.a = 2\nnot a pair\n").unwrap();
    let err = fails_with(d, &["--config", "bad.cfg", "bench"], 2);
    assert!(err.contains("bad.cfg: line 2"), "{err}");
}

#[test]
fn contract_and_numeric_failures_have_distinct_codes() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    std::fs::create_dir_all(d.join("preds")).unwrap();
    std::fs::write(d.join("preds/r.csv"), "epoch_index,p_W,p_N1,p_N2,p_N3,p_REM\n0,0.2,0.2,0.2,0.2,0.2\n5,0.2,0.2,0.2,0.2,0.2\n").unwrap();
    small_synth(&d.join("stores"), "r", &[Stage::W, Stage::W]);
    let err = fails_with(d, &["eval", "--stores", "stores", "--predictions", "preds", "--out", "m.json"], 2);
    assert!(err.contains("r.csv: line 3"), "{err}");

    ok(d, &["synth", "--out", "syn", "--records", "1", "--set", "synth.epochs_per_record=8"]);
    let err = fails_with(
        d,
        &["train", "--stores", "syn", "--out", "run", "--preset", "reduced", "--epochs", "3",
          "--set", "train.batch_size=4", "--set", "train.schedule.initial=1e30"],
        3,
    );
    assert!(err.contains("non-finite"), "{err}");
}

#[test]
fn eval_restricted_to_a_fold_scores_only_its_spans() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let truth_a = [Stage::W, Stage::W, Stage::N1, Stage::N2, Stage::N2, Stage::N3];
    let truth_b = [Stage::Rem, Stage::Rem, Stage::N2, Stage::N2];
    small_synth(&d.join("stores"), "a", &truth_a);
    small_synth(&d.join("stores"), "b", &truth_b);
    std::fs::create_dir_all(d.join("preds")).unwrap();
    // always predicts N2
    for (name, n) in [("a", truth_a.len()), ("b", truth_b.len())] {
        store::write_predictions(&d.join(format!("preds/{name}.csv")), &vec![[0.1f32, 0.1, 0.6, 0.1, 0.1]; n]).unwrap();
    }
    ok(d, &["folds", "--stores", "stores", "--k", "2", "--out", "folds.json"]);
    let folds = json(&d.join("folds.json"));
    let mut total = 0;
    for f in 0..2 {
        let out = format!("m{f}.json");
        ok(d, &["eval", "--stores", "stores", "--predictions", "preds", "--fold", &f.to_string(),
                "--set", "folds.k=2", "--out", &out]);
        let m = json(&d.join(&out));
        let (mut n, mut hits) = (0, 0);
        for (rec, truth) in [("a", &truth_a[..]), ("b", &truth_b[..])] {
            let span = &folds["folds"][f]["test_spans"][rec];
            for s in &truth[span[0].as_u64().unwrap() as usize..span[1].as_u64().unwrap() as usize] {
                n += 1;
                hits += (*s == Stage::N2) as usize;
            }
        }
        assert_eq!(m["epochs"], n);
        assert!((m["acc"].as_f64().unwrap() - hits as f64 / n as f64).abs() < 1e-12);
        total += n;
    }
    assert_eq!(total, truth_a.len() + truth_b.len());
    fails_with(d, &["eval", "--stores", "stores", "--predictions", "preds", "--fold", "5", "--out", "x.json"], 2);
}
