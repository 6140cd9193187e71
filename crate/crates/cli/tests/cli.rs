use std::path::Path;
use std::process::{Command, Output};

const TINY: [&str; 11] = [
    "corpus.n_facts=60",
    "corpus.n_members=20",
    "corpus.n_nonmembers=20",
    "model.model_dim=16",
    "model.n_layers=1",
    "model.n_heads=2",
    "model.ffn_dim=32",
    "model.max_seq_len=24",
    "attack.n_neighbours=2",
    "classifier.lambda_grid=[0.01, 0.1]",
    "consistency.n_facts=3",
];

fn gdrift(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gdrift"));
    cmd.args(args).arg("--out").arg(dir).args(["--seed", "3", "--epochs", "2", "--lr", "0.05"]);
    for s in TINY {
        cmd.args(["--set", s]);
    }
    cmd.output().expect("spawn gdrift")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_data_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(gdrift(a.path(), &["gen-data"]).status.success());
    assert!(gdrift(b.path(), &["gen-data"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("dataset.jsonl")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn bad_fractions_exit_nonzero() {
    let d = tempfile::tempdir().unwrap();
    let o = gdrift(d.path(), &["gen-data", "--set", "corpus.fractions=[0.5, 0.5, 0.5]"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("fractions"), "{}", stderr(&o));
    assert!(!d.path().join("dataset.jsonl").exists());
}

#[test]
fn run_all_needs_seed() {
    let o = Command::new(env!("CARGO_BIN_EXE_gdrift")).arg("run-all").output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn tampered_dataset_is_refused() {
    let d = tempfile::tempdir().unwrap();
    assert!(gdrift(d.path(), &["gen-data"]).status.success());
    assert!(gdrift(d.path(), &["verify"]).status.success());
    let path = d.path().join("dataset.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"member\"", "\"nonmember\"", 1)).unwrap();
    for cmd in ["verify", "train"] {
        let o = gdrift(d.path(), &[cmd]);
        assert!(!o.status.success(), "{cmd} accepted a tampered dataset");
        assert!(stderr(&o).contains("integrity"), "{}", stderr(&o));
    }
}

#[test]
fn stages_before_their_inputs_fail() {
    let d = tempfile::tempdir().unwrap();
    assert!(!gdrift(d.path(), &["extract"]).status.success());
    assert!(gdrift(d.path(), &["gen-data"]).status.success());
    assert!(!gdrift(d.path(), &["evaluate"]).status.success());
}

#[test]
fn config_file_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let file = d.path().join("exp.toml");
    assert!(gdrift(d.path(), &["config", file.to_str().unwrap()]).status.success());
    let printed = Command::new(env!("CARGO_BIN_EXE_gdrift"))
        .args(["config", "--config", file.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(printed.status.success());
    let text = String::from_utf8(printed.stdout).unwrap();
    assert_eq!(text, std::fs::read_to_string(&file).unwrap());
    assert!(text.contains("n_facts = 60"));
    assert!(text.contains("epochs = 2"));
}

#[test]
fn unknown_key_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = gdrift(d.path(), &["config", "--set", "training.momentum=0.9"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("momentum"));
}

#[test]
fn tiny_pipeline_runs_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let o = gdrift(d.path(), &["run-all"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("G-Drift"));
    assert!(out.contains("feature_set,auc"));
    assert!(gdrift(d.path(), &["verify"]).status.success());
    for f in ["metrics.txt", "ablation.csv", "drift_cdf.csv", "consistency.csv", "control.txt"] {
        assert!(d.path().join(f).exists(), "{f} missing");
    }
}
