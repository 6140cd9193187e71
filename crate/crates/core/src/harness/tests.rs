use std::path::Path;
use std::sync::OnceLock;

use super::*;
use crate::attacks::{table, MinMax, FEATURE_NAMES};
use crate::classifier::AblationRow;
use crate::corpus::{io, Split, Vocabulary};
use crate::fsutil::sha256_file;
use crate::Error;

fn tiny(dir: &Path, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::with_seed(seed);
    c.output_dir = dir.to_path_buf();
    c.corpus.n_facts = 60;
    c.corpus.n_members = 20;
    c.corpus.n_nonmembers = 20;
    c.model = ModelSection {
        model_dim: 16,
        n_layers: 1,
        n_heads: 2,
        ffn_dim: 32,
        max_seq_len: 24,
        init_seed: seed,
    };
    c.training.epochs = 3;
    c.training.lr = 0.05;
    c.attack.n_neighbours = 2;
    c.classifier.lambda_grid = vec![0.01, 0.1];
    c.consistency.n_facts = 3;
    c
}

struct Fixture {
    _dir: tempfile::TempDir,
    cfg: ExperimentConfig,
    summary: RunSummary,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path(), 3);
        let summary = run_all(&cfg).unwrap();
        Fixture {
            _dir: dir,
            cfg,
            summary,
        }
    })
}

fn read(cfg: &ExperimentConfig, rel: &str) -> String {
    std::fs::read_to_string(cfg.output_dir.join(rel)).unwrap()
}

#[test]
fn config_round_trips_and_accepts_overrides() {
    let c = ExperimentConfig::with_seed(7);
    assert_eq!(c.attack.eta, 1e-2);
    assert_eq!(c.corpus.fractions, [0.7, 0.1, 0.2]);
    let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
    assert_eq!(back, c);

    let mut d = c.clone();
    d.set("training.epochs=40").unwrap();
    d.set("attack.k_percents = [5.0, 10.0]").unwrap();
    d.set("training.train_on=train-split-members").unwrap();
    d.set("output_dir=elsewhere").unwrap();
    assert_eq!(d.training.epochs, 40);
    assert_eq!(d.attack.k_percents, vec![5.0, 10.0]);
    assert_eq!(d.training.train_on, TrainOn::TrainSplitMembers);
    assert_eq!(d.output_dir, Path::new("elsewhere"));
    assert!(matches!(d.set("training.nope=1"), Err(Error::Input(_))));
    assert!(matches!(d.set("nope.epochs=1"), Err(Error::Input(_))));
    assert!(matches!(d.set("training.epochs=many"), Err(Error::Input(_))));
    assert!(d.set("epochs").is_err());

    // The output directory does not enter the hash; everything else does.
    let mut e = c.clone();
    e.output_dir = "x".into();
    assert_eq!(e.hash().unwrap(), c.hash().unwrap());
    e.attack.eta = 0.02;
    assert_ne!(e.hash().unwrap(), c.hash().unwrap());

    let mut f = c.clone();
    f.attack.eta = 0.0;
    assert!(f.validate().is_err());
    let mut g = c;
    g.corpus.fractions = [0.7, 0.2, 0.2];
    assert!(g.validate().is_err());
}

#[test]
fn reseed_sets_every_seed() {
    let mut c = ExperimentConfig::with_seed(1);
    c.reseed(99);
    assert_eq!(c, {
        let mut d = ExperimentConfig::with_seed(99);
        d.output_dir = c.output_dir.clone();
        d
    });
}

#[test]
fn gen_data_is_reproducible_and_balanced() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = gen_data(&tiny(a.path(), 5)).unwrap();
    gen_data(&tiny(b.path(), 5)).unwrap();
    let fa = std::fs::read(a.path().join(files::DATASET.1)).unwrap();
    let fb = std::fs::read(b.path().join(files::DATASET.1)).unwrap();
    assert_eq!(fa, fb);
    assert_eq!(sa.n_samples, 40);
    assert_eq!(sa.split_counts, [[14, 14], [2, 2], [4, 4]]);
}

#[test]
fn invalid_fractions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path(), 1);
    c.corpus.fractions = [0.5, 0.1, 0.1];
    assert!(matches!(gen_data(&c), Err(Error::Input(_))));
    assert!(!dir.path().join(files::DATASET.1).exists());
}

#[test]
fn tampered_inputs_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny(dir.path(), 2);
    gen_data(&c).unwrap();
    let path = dir.path().join(files::DATASET.1);
    let mut text = std::fs::read_to_string(&path).unwrap();
    text = text.replacen("Q:", "Q :", 1);
    std::fs::write(&path, text).unwrap();
    assert!(matches!(train(&c, false), Err(Error::Integrity(_))));
    std::fs::remove_file(&path).unwrap();
    assert!(matches!(train(&c, false), Err(Error::Integrity(_))));

    let fresh = tempfile::tempdir().unwrap();
    assert!(matches!(train(&tiny(fresh.path(), 2), false), Err(Error::Input(_))));
}

#[test]
fn training_uses_members_only_and_resumes_exactly() {
    let straight = tempfile::tempdir().unwrap();
    let mut c = tiny(straight.path(), 4);
    c.training.epochs = 4;
    gen_data(&c).unwrap();
    let full = train(&c, false).unwrap();
    assert_eq!(full.n_nonmember_examples, 0);
    assert_eq!(full.n_member_samples, 20);
    assert_eq!(full.n_member_examples, 60);
    assert_eq!(full.n_examples, 60);
    assert_eq!(full.epoch_losses.len(), 4);
    let logged: TrainReport = serde_json::from_str(&read(&c, files::TRAIN_LOG.1)).unwrap();
    assert_eq!(logged, full);

    let split = tempfile::tempdir().unwrap();
    let mut d = tiny(split.path(), 4);
    d.training.epochs = 2;
    gen_data(&d).unwrap();
    train(&d, false).unwrap();
    d.training.epochs = 4;
    let resumed = train(&d, true).unwrap();
    assert_eq!(resumed.resumed_from_epoch, Some(2));
    assert_eq!(resumed.epoch_losses, full.epoch_losses);
    assert_eq!(
        sha256_file(&straight.path().join(files::CHECKPOINT.1)).unwrap(),
        sha256_file(&split.path().join(files::CHECKPOINT.1)).unwrap()
    );

    let only_train = tempfile::tempdir().unwrap();
    let mut e = tiny(only_train.path(), 4);
    e.training.epochs = 1;
    e.training.train_on = TrainOn::TrainSplitMembers;
    gen_data(&e).unwrap();
    let r = train(&e, false).unwrap();
    assert_eq!((r.n_member_samples, r.n_nonmember_examples), (14, 0));

    let one = tempfile::tempdir().unwrap();
    let mut g = tiny(one.path(), 4);
    g.training.epochs = 1;
    g.training.all_templates = false;
    gen_data(&g).unwrap();
    let r = train(&g, false).unwrap();
    assert_eq!((r.n_examples, r.n_nonmember_examples), (20, 0));
}

#[test]
fn pipeline_produces_every_artifact() {
    let f = fixture();
    let m = RunManifest::open(&f.cfg.output_dir, "").unwrap();
    m.verify_all(&f.cfg.output_dir).unwrap();
    for (name, _) in [
        files::DATASET,
        files::CHECKPOINT,
        files::TRAIN_LOG,
        files::FEATURES,
        files::SCORES,
        files::METRICS,
        files::CLASSIFIER,
        files::CONTROL,
        files::ABLATION,
        files::DRIFT_REPORT,
        files::DRIFT_ROWS,
        files::DRIFT_CDF,
        files::CONSISTENCY,
        files::CONSISTENCY_ROWS,
    ] {
        assert!(m.artifacts.contains_key(name), "{name}");
    }
    assert!(m.artifacts.contains_key("roc_gdrift"));
}

#[test]
fn extraction_covers_the_dataset_and_is_repeatable() {
    let f = fixture();
    assert_eq!(f.summary.extraction.n_rows, f.summary.dataset.n_samples);
    let before = read(&f.cfg, files::FEATURES.1);
    let dir = tempfile::tempdir().unwrap();
    let mut c = f.cfg.clone();
    c.output_dir = dir.path().to_path_buf();
    gen_data(&c).unwrap();
    train(&c, false).unwrap();
    let again = extract(&c).unwrap();
    assert_eq!(again.param_checksum, f.summary.extraction.param_checksum);
    assert_eq!(read(&c, files::FEATURES.1), before);
    assert_eq!(read(&c, files::SCORES.1), read(&f.cfg, files::SCORES.1));
}

#[test]
fn report_lists_every_attack() {
    let r = &fixture().summary.evaluation;
    let names: Vec<&str> = r.attacks.iter().map(|a| a.attack.as_str()).collect();
    assert_eq!(names, ["G-Drift", "Min-10%", "Min-20%", "PPL", "Zlib", "Neighbour"]);
    assert_eq!(r.n_train + r.n_validation + r.n_test, 40);
    let text = r.render();
    for n in names {
        assert!(text.contains(n));
    }
    assert!(r.attacks.iter().all(|a| (0.0..=1.0).contains(&a.auc)));
    let top = r.attacks[1..].iter().map(|a| a.auc).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r.best_baseline().unwrap().auc, top);
    assert!(fixture().summary.control.labels_shuffled);
}

#[test]
fn fitted_statistics_come_from_train_rows_only() {
    let f = fixture();
    let dir = &f.cfg.output_dir;
    let file = io::read_dataset(&dir.join(files::DATASET.1), &Vocabulary::for_world()).unwrap();
    let splits = file.splits.unwrap();
    let rows = table::read_features(&dir.join(files::FEATURES.1)).unwrap();
    let train: Vec<Vec<f64>> = rows
        .iter()
        .zip(&splits)
        .filter(|(_, s)| **s == Split::Train)
        .map(|(r, _)| r.features.to_array().to_vec())
        .collect();
    let record: ClassifierRecord = serde_json::from_str(&read(&f.cfg, files::CLASSIFIER.1)).unwrap();
    assert_eq!(record.model.normalization, MinMax::fit(&train).unwrap());

    // The threshold is the validation-accuracy maximiser.
    let val: Vec<Vec<f64>> = rows
        .iter()
        .zip(&splits)
        .filter(|(_, s)| **s == Split::Validation)
        .map(|(r, _)| r.features.to_array().to_vec())
        .collect();
    let val_y: Vec<bool> = rows
        .iter()
        .zip(&splits)
        .filter(|(_, s)| **s == Split::Validation)
        .map(|(r, _)| r.label.is_member())
        .collect();
    let probs = record.model.predict_all(&val).unwrap();
    let t = crate::classifier::select_threshold(&probs, &val_y).unwrap();
    assert_eq!(t.threshold, record.threshold);

    let drift = &f.summary.drift;
    let train_deltas: Vec<Vec<f64>> = rows
        .iter()
        .zip(&splits)
        .filter(|(_, s)| **s == Split::Train)
        .map(|(r, _)| drift_quantities(r).to_vec())
        .collect();
    assert_eq!(drift.normalization, MinMax::fit(&train_deltas).unwrap());
}

#[test]
fn ablation_has_the_canonical_rows() {
    let f = fixture();
    let rows: &[AblationRow] = &f.summary.ablation;
    assert_eq!(rows.len(), 13);
    assert_eq!(rows[0].name, "all");
    assert_eq!(rows[12].name, "all but feat proj");
    assert_eq!(rows[0].auc, f.summary.evaluation.get("G-Drift").unwrap().auc);
    let csv = read(&f.cfg, files::ABLATION.1);
    assert_eq!(csv.lines().count(), 14);
    assert_eq!(csv.lines().next(), Some("feature_set,auc"));
}

#[test]
fn drift_rows_recompute_from_feature_columns() {
    let f = fixture();
    let features = table::read_features(&f.cfg.output_dir.join(files::FEATURES.1)).unwrap();
    let report = &f.summary.drift;
    for (r, d) in features.iter().zip(&report.rows) {
        let a = r.features.to_array();
        assert_eq!(d.sample_id, r.sample_id);
        assert_eq!(d.raw, [a[3] - a[0], a[4] - a[1], a[5] - a[2], a[6]]);
    }
    assert_eq!(report.cdfs.len(), 8);
    for c in &report.cdfs {
        assert_eq!(c.points.first().unwrap().1, 0.0);
        assert_eq!(c.points.last().unwrap().1, 1.0);
        for w in c.points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }
    let csv = read(&f.cfg, files::DRIFT_ROWS.1);
    assert_eq!(csv.lines().count(), features.len() + 1);
    assert!(csv.starts_with("sample_id,label,split,loss_delta,logit_delta,proj_delta,hidden_drift,"));
    assert_eq!(FEATURE_NAMES.len(), 7);
}

#[test]
fn drift_summary_layout() {
    let s = DriftSummary {
        n_members: 500,
        n_nonmembers: 500,
        member_means: [0.1, 0.2, 0.332, 0.4],
        nonmember_means: [0.15, 0.25, 0.505, 0.45],
    };
    let text = s.render();
    assert!(text.contains("proj_delta          0.332      0.505\n"), "{text}");
}

#[test]
fn empirical_cdf_examples() {
    assert_eq!(empirical_cdf(&[2.0, 1.0, 2.0, 3.0]), vec![(1.0, 0.0), (1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
    assert!(empirical_cdf(&[]).is_empty());
    assert_eq!(std_dev(&[1.0, 3.0]), 1.0);
}

#[test]
fn consistency_table_layout() {
    let f = fixture();
    let r = &f.summary.consistency;
    assert_eq!(r.spreads.len(), 3);
    assert_eq!(r.rows.len(), 3 * 2 * 3);
    for row in &r.rows {
        assert!((row.abs_delta - (row.alpha_after - row.alpha_before).abs()).abs() < 1e-15);
    }
    assert!(read(&f.cfg, files::CONSISTENCY_ROWS.1)
        .starts_with("fact_id,template_id,prompt,answer,class,alpha_before,alpha_after,abs_delta\n"));

    let sample = ConsistencyReport {
        k: 1,
        rows: vec![ConsistencyRow {
            fact_id: 0,
            template_id: 0,
            prompt: "Q: What is the capital of Veloria? A:".into(),
            answer: "Mirest".into(),
            class: "member".into(),
            alpha_before: 2.914,
            alpha_after: 3.900,
            abs_delta: 0.986,
        }],
        spreads: vec![],
        mean_member_std: 0.0,
        mean_nonmember_std: 0.0,
    };
    let text = sample.render();
    assert!(text.contains("member          2.914     3.900     0.986"), "{text}");
    assert!(text.contains("prompt"));
    assert!(text.contains("a_before"));
}

#[test]
fn same_config_gives_identical_reports() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut c = f.cfg.clone();
    c.output_dir = dir.path().to_path_buf();
    run_all(&c).unwrap();
    for rel in [files::METRICS.1, files::METRICS_JSON.1, files::ABLATION.1, files::DRIFT_CDF.1, files::CONSISTENCY.1] {
        assert_eq!(read(&c, rel), read(&f.cfg, rel), "{rel}");
    }
}
