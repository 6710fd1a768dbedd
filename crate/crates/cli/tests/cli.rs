use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use malscope_core::encoder::{network_feature_pipeline, BiLstmModel, CnnConfig, CnnModel, FlowOptions, FEATURE_DIM};
use malscope_core::fusion::read_feature_csv;
use malscope_core::nn::CellMode;
use malscope_core::pcap::CaptureSet;
use malscope_core::synth::three_flow_pcap;

struct Out {
    code: i32,
    dir: PathBuf,
    stderr: String,
}

fn malscope(cwd: &Path, args: &[&str]) -> Out {
    let out = Command::new(env!("CARGO_BIN_EXE_malscope"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("FALCON_SEED")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    Out {
        code: out.status.code().unwrap_or(-1),
        dir: cwd.join(stdout.lines().last().unwrap_or("").trim()),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(cwd: &Path, args: &[&str]) -> PathBuf {
    let out = malscope(cwd, args);
    assert_eq!(out.code, 0, "{args:?}: {}", out.stderr);
    out.dir
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().is_file() && e.file_name() != "timings.json")
        .map(|e| (e.path().strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn split_fixture_writes_three_flows_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("x.pcap"), three_flow_pcap()).unwrap();
    let dir = ok(tmp.path(), &["split", "--in", "x.pcap", "--out", "flows"]);
    assert!(dir.starts_with(tmp.path().join("flows")));
    let flows: Vec<_> = std::fs::read_dir(dir.join("x")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(flows.len(), 3);
    for f in &flows {
        let (set, _) = CaptureSet::from_pcap("f", &std::fs::read(f).unwrap(), true).unwrap();
        assert_eq!(set.flows.len(), 1, "{}", f.display());
    }
    let m = manifest(&dir);
    assert_eq!(m["command"], "split");
    assert_eq!(m["inputs"][0]["path"], "x.pcap");
    let artifacts: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap()).collect();
    assert_eq!(artifacts, ["flows.csv", "x/flow_0000.pcap", "x/flow_0001.pcap", "x/flow_0002.pcap"]);
    assert!(dir.join("timings.json").exists());
    assert!(!dir.join("manifest.json.tmp").exists());
}

#[test]
fn unidirectional_flag_splits_by_direction() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("x.pcap"), three_flow_pcap()).unwrap();
    let dir = ok(tmp.path(), &["split", "--in", "x.pcap", "--unidirectional"]);
    assert_eq!(std::fs::read_dir(dir.join("x")).unwrap().count(), 5);
}

#[test]
fn evaluate_labels_against_themselves() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = ok(tmp.path(), &["synth", "--task", "captures", "--n", "10", "--classes", "Benign,Adware,SMSmalware"]);
    let labels = synth.join("labels.csv");
    let labels = labels.to_str().unwrap();
    let dir = ok(tmp.path(), &["evaluate", "--predictions", labels, "--labels", labels]);
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    for name in ["accuracy", "precision", "recall", "f1"] {
        assert!(metrics.lines().any(|l| l == format!("{name},1")), "{metrics}");
    }
    assert!(dir.join("confusion.csv").exists() && dir.join("report.txt").exists());
}

#[test]
fn evaluate_scores_signed_detection_files() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("p.csv"), "id,label,prediction\na,-1,-1\nb,1,1\nc,1,-1\nd,-1,-1\n").unwrap();
    let dir = ok(tmp.path(), &["evaluate", "--predictions", "p.csv"]);
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.contains("accuracy,0.75"), "{metrics}");
    assert_eq!(std::fs::read_to_string(dir.join("confusion.csv")).unwrap(), "true\\pred,0,1\n0,2,0\n1,1,1\n");
}

#[test]
fn synth_blobs_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["synth", "--task", "blobs", "--n", "200", "--seed", "7"];
    let first = ok(tmp.path(), &args);
    let a = snapshot(&first);
    let second = ok(tmp.path(), &args);
    assert_eq!(first, second);
    assert_eq!(a, snapshot(&second));
    let other = ok(tmp.path(), &["synth", "--task", "blobs", "--n", "200", "--seed", "8"]);
    assert_ne!(other, first);
    assert_ne!(snapshot(&other)[Path::new("blobs.csv")], a[Path::new("blobs.csv")]);
}

#[test]
fn composed_subcommands_equal_the_library_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    std::fs::create_dir(root.join("caps")).unwrap();
    let raw = three_flow_pcap();
    std::fs::write(root.join("caps/fixture.pcap"), &raw).unwrap();
    std::fs::write(root.join("labels.csv"), "name,label\nfixture.pcap,Scareware\n").unwrap();
    let cnn = CnnModel::init(CnnConfig::default(), 4);
    let lstm = BiLstmModel::init(FEATURE_DIM, 6, CellMode::Standard, 5);
    cnn.to_checkpoint().save(&root.join("cnn.ckpt")).unwrap();
    lstm.to_checkpoint().save(&root.join("lstm.ckpt")).unwrap();

    let corpus = ok(root, &["build-corpus", "--in", "caps", "--labels", "labels.csv"]);
    let corpus = corpus.to_str().unwrap();
    let feats = ok(root, &["embed-net", "--corpus", corpus, "--cnn", "cnn.ckpt", "--bilstm", "lstm.ckpt"]);
    let table = read_feature_csv(&feats.join("network_features.csv")).unwrap();
    assert_eq!(table.ids, ["fixture"]);
    assert_eq!(table.labels, [3]);
    let direct = network_feature_pipeline("fixture", &raw, &cnn, &lstm, FlowOptions::default()).unwrap();
    assert_eq!(table.rows[0], direct.0);
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    assert_eq!(malscope(root, &["--help"]).code, 0);
    assert_eq!(malscope(root, &["no-such-command"]).code, 1);
    assert_eq!(malscope(root, &["synth", "--task", "blobs", "--set", "bogus_key=1"]).code, 1);
    std::fs::write(root.join("bad.toml"), "cnn_c1 = 16\nmystery = true\n").unwrap();
    let out = malscope(root, &["synth", "--task", "blobs", "--config", "bad.toml"]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("mystery"), "{}", out.stderr);
    assert_eq!(malscope(root, &["synth", "--task", "blobs", "--set", "cnn_padding=diagonal"]).code, 1);
    assert_eq!(malscope(root, &["split", "--in", "missing.pcap"]).code, 2);
    std::fs::write(root.join("junk.pcap"), b"not a capture").unwrap();
    assert_eq!(malscope(root, &["split", "--in", "junk.pcap"]).code, 2);
}

#[test]
fn flags_override_set_which_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    std::fs::write(root.join("c.toml"), "seed = 5\ncnn_epochs = 3\nhead_width = 9\n").unwrap();
    let dir = ok(root, &["synth", "--task", "fixture", "--config", "c.toml", "--set", "cnn_epochs=4", "--seed", "11"]);
    let m = manifest(&dir);
    assert_eq!(m["seed"], 11);
    assert_eq!(m["config"]["cnn_epochs"], 4);
    assert_eq!(m["config"]["head_width"], 9);

    let env_run = Command::new(env!("CARGO_BIN_EXE_malscope"))
        .args(["synth", "--task", "fixture"])
        .current_dir(root)
        .env("RUST_LOG", "warn")
        .env("FALCON_SEED", "42")
        .output()
        .unwrap();
    let dir = root.join(String::from_utf8_lossy(&env_run.stdout).trim());
    assert_eq!(manifest(&dir)["seed"], 42);
    let file_wins = Command::new(env!("CARGO_BIN_EXE_malscope"))
        .args(["synth", "--task", "fixture", "--config", "c.toml"])
        .current_dir(root)
        .env("RUST_LOG", "warn")
        .env("FALCON_SEED", "42")
        .output()
        .unwrap();
    let dir = root.join(String::from_utf8_lossy(&file_wins.stdout).trim());
    assert_eq!(manifest(&dir)["seed"], 5);
}

#[test]
fn holdout_splits_samples_from_the_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = ok(tmp.path(), &["synth", "--task", "graphs", "--n", "10", "--holdout", "0.3"]);
    let count = |d: &str| std::fs::read_dir(dir.join(d)).unwrap().count();
    assert_eq!((count("train/graphs"), count("test/graphs")), (7, 3));
    let test_labels = std::fs::read_to_string(dir.join("test/labels.csv")).unwrap();
    assert_eq!(test_labels, "name,label\nsample_0007.fcg,Adware\nsample_0008.fcg,Benign\nsample_0009.fcg,Adware\n");
}
