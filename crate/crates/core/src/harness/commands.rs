use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TrainOn};
use super::manifest::RunManifest;
use super::report::{
    empirical_cdf, std_dev, AttackResult, Cdf, ConsistencyReport, ConsistencyRow, DriftReport, DriftRow,
    DriftSummary, EvalReport, FactSpread, DRIFT_QUANTITIES,
};
use super::{files, GDRIFT_KEY};
use crate::attacks::{
    self, extract_features, gdrift_trace, score_baselines, BaselineOptions, FeatureRow, MinMax,
    ProbeDirection, ScoreTable, NEIGHBOUR, PERPLEXITY, ZLIB,
};
use crate::classifier::{
    canonical_specs, fit, roc_auc, run_ablation, select_threshold, threshold_metrics, AblationRow, FitOptions,
    LogRegModel, RocCurve,
};
use crate::corpus::{
    self, build_membership_dataset, check_counterfactuals, generate_world, paraphrase_set, render_qa, Fact,
    Origin, Sample, Split, Vocabulary,
};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::lm::{self, checkpoint, init_model, mean_loss, Checkpoint, Example, ModelParams, TrainOptions};
use crate::seed::derive_seed;

/// An open run directory: configuration, manifest and the shared vocabulary.
struct Run<'a> {
    dir: &'a Path,
    manifest: RunManifest,
    vocab: Vocabulary,
}

impl<'a> Run<'a> {
    fn open(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = cfg.output_dir.as_path();
        let manifest = RunManifest::open(dir, &cfg.hash()?)?;
        Ok(Self {
            dir,
            manifest,
            vocab: Vocabulary::for_world(),
        })
    }

    /// Writes `bytes` to `rel` and records it under `name`.
    fn put(&mut self, name: &str, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(rel), bytes)?;
        self.manifest.record(self.dir, name, rel)?;
        self.manifest.save(self.dir)
    }

    fn put_json<T: Serialize>(&mut self, name: &str, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("report serialises");
        text.push('\n');
        self.put(name, rel, text.as_bytes())
    }

    fn dataset(&self) -> Result<(Vec<Sample>, Vec<Split>)> {
        let path = self.manifest.verified(self.dir, files::DATASET.0)?;
        let file = corpus::io::read_dataset(&path, &self.vocab)?;
        let splits = file
            .splits
            .ok_or_else(|| Error::Input(format!("{} carries no split assignments", path.display())))?;
        Ok((file.samples, splits))
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        let path = self.manifest.verified(self.dir, files::CHECKPOINT.0)?;
        let ckpt = checkpoint::load(&path)?;
        let v = ckpt.params.config().vocab_size;
        if v != self.vocab.len() {
            return Err(Error::Contract(format!(
                "checkpoint vocabulary has {v} tokens, the dataset tokenizer has {}",
                self.vocab.len()
            )));
        }
        Ok(ckpt)
    }

    fn features(&self, samples: &[Sample]) -> Result<Vec<FeatureRow>> {
        let path = self.manifest.verified(self.dir, files::FEATURES.0)?;
        let rows = attacks::table::read_features(&path)?;
        aligned(samples, rows.iter().map(|r| (r.sample_id, r.label.is_member())), "feature table")?;
        Ok(rows)
    }

    fn scores(&self, samples: &[Sample]) -> Result<ScoreTable> {
        let path = self.manifest.verified(self.dir, files::SCORES.0)?;
        let table = attacks::table::read_scores(&path)?;
        aligned(
            samples,
            table.rows.iter().map(|r| (r.sample_id, r.label.is_member())),
            "score table",
        )?;
        Ok(table)
    }
}

/// Checks that a table lists exactly the dataset's samples, in order, with
/// the same labels.
fn aligned(samples: &[Sample], rows: impl ExactSizeIterator<Item = (usize, bool)>, what: &str) -> Result<()> {
    if rows.len() != samples.len() {
        return Err(Error::Integrity(format!(
            "{what} has {} rows, dataset has {} samples",
            rows.len(),
            samples.len()
        )));
    }
    for ((id, member), s) in rows.zip(samples) {
        if id != s.id || member != s.is_member() {
            return Err(Error::Integrity(format!("{what} row for sample {id} does not match dataset sample {}", s.id)));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_samples: usize,
    /// `[members, non-members]` per split in train, validation, test order.
    pub split_counts: [[usize; 2]; 3],
}

/// Generates the world and the membership dataset, splits it, and writes the
/// dataset file.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<DatasetSummary> {
    let mut run = Run::open(cfg)?;
    let c = &cfg.corpus;
    let world = generate_world(c.seed, c.n_facts)?;
    let samples = build_membership_dataset(&world, &run.vocab, c.seed, c.n_members, c.n_nonmembers, c.future_fraction)?;
    check_counterfactuals(&samples)?;
    let set = corpus::split(&samples, c.fractions, c.seed, false)?;
    let assignment = set.assignments();
    let splits: Vec<Split> = samples.iter().map(|s| assignment[&s.id]).collect();
    let text = corpus::io::encode_dataset(&samples, Some(&splits))?;
    run.put(files::DATASET.0, files::DATASET.1, text.as_bytes())?;
    let mut split_counts = [[0; 2]; 3];
    for (s, sp) in samples.iter().zip(&splits) {
        split_counts[*sp as usize][usize::from(!s.is_member())] += 1;
    }
    Ok(DatasetSummary {
        n_samples: samples.len(),
        split_counts,
    })
}

/// What the training command did, persisted as the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_on: TrainOn,
    pub all_templates: bool,
    /// Dataset samples chosen for training.
    pub n_member_samples: usize,
    /// Training examples, including extra phrasings of the chosen facts.
    pub n_examples: usize,
    pub n_member_examples: usize,
    pub n_nonmember_examples: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Mean loss of every completed epoch, including epochs before a resume.
    pub epoch_losses: Vec<f64>,
    pub resumed_from_epoch: Option<usize>,
    pub final_member_loss: Option<f64>,
    pub loss_threshold: f64,
    /// Whether the final member loss is below the threshold.
    pub success: bool,
    pub error: Option<String>,
}

/// Fine-tunes the target model on member samples with batch-size-one SGD,
/// saving a checkpoint after every epoch.
///
/// With `resume`, training continues from the recorded checkpoint. Epoch
/// shuffles depend only on the seed and epoch index, so a resumed run ends
/// with the same parameters as an uninterrupted one. On divergence the log
/// written so far is kept and the error returned.
pub fn train(cfg: &ExperimentConfig, resume: bool) -> Result<TrainReport> {
    let mut run = Run::open(cfg)?;
    let (samples, splits) = run.dataset()?;
    let chosen: Vec<&Sample> = samples
        .iter()
        .zip(&splits)
        .filter(|(s, sp)| s.is_member() && (cfg.training.train_on == TrainOn::AllMembers || **sp == Split::Train))
        .map(|(s, _)| s)
        .collect();
    let mut examples: Vec<Example> = chosen
        .iter()
        .map(|s| Example {
            tokens: s.prompt_tokens.clone(),
            target: s.target(),
        })
        .collect();
    if cfg.training.all_templates {
        let world = world_by_id(cfg)?;
        for s in &chosen {
            let fact = fact_for(&world, s)?;
            for p in paraphrase_set(fact, &fact.object, Origin::Member, fact.relation.templates().len(), &run.vocab)? {
                if p.template_id != s.template_id {
                    examples.push(Example {
                        target: p.target(),
                        tokens: p.prompt_tokens,
                    });
                }
            }
        }
    }

    let nonmember = chosen.iter().filter(|s| !s.is_member()).count();
    let mut report = TrainReport {
        train_on: cfg.training.train_on,
        all_templates: cfg.training.all_templates,
        n_examples: examples.len(),
        n_member_samples: chosen.len(),
        n_member_examples: examples.len() - nonmember,
        n_nonmember_examples: nonmember,
        epochs: cfg.training.epochs,
        lr: cfg.training.lr,
        seed: cfg.training.seed,
        epoch_losses: Vec::new(),
        resumed_from_epoch: None,
        final_member_loss: None,
        loss_threshold: cfg.training.loss_threshold,
        success: false,
        error: None,
    };

    let (mut params, start) = if resume && run.manifest.artifacts.contains_key(files::CHECKPOINT.0) {
        let ckpt = run.checkpoint()?;
        let path = run.manifest.verified(run.dir, files::TRAIN_LOG.0)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let previous: TrainReport = serde_json::from_str(&text).map_err(|e| Error::Format {
            what: "training log",
            detail: e.to_string(),
        })?;
        let done = ckpt.trained_epochs as usize;
        if previous.epoch_losses.len() != done {
            return Err(Error::Integrity(format!(
                "checkpoint has {done} epochs but the training log lists {}",
                previous.epoch_losses.len()
            )));
        }
        report.epoch_losses = previous.epoch_losses;
        report.resumed_from_epoch = Some(done);
        (ckpt.params, done)
    } else {
        (init_model(&cfg.model_config(run.vocab.len())?, cfg.model.init_seed)?, 0)
    };

    for epoch in start..cfg.training.epochs {
        let opts = TrainOptions {
            epochs: 1,
            lr: cfg.training.lr,
            seed: cfg.training.seed,
            start_epoch: epoch,
        };
        match lm::train(&mut params, &examples, &opts) {
            Ok(log) => report.epoch_losses.extend(log.epoch_losses),
            Err(e) => {
                report.error = Some(e.to_string());
                run.put_json(files::TRAIN_LOG.0, files::TRAIN_LOG.1, &report)?;
                return Err(e);
            }
        }
        let ckpt = Checkpoint {
            params: params.clone(),
            trained_epochs: (epoch + 1) as u64,
        };
        run.put(files::CHECKPOINT.0, files::CHECKPOINT.1, &checkpoint::encode(&ckpt))?;
        run.put_json(files::TRAIN_LOG.0, files::TRAIN_LOG.1, &report)?;
    }
    if !run.manifest.artifacts.contains_key(files::CHECKPOINT.0) {
        let ckpt = Checkpoint {
            params: params.clone(),
            trained_epochs: 0,
        };
        run.put(files::CHECKPOINT.0, files::CHECKPOINT.1, &checkpoint::encode(&ckpt))?;
    }
    let loss = mean_loss(&params, &examples)?;
    report.final_member_loss = Some(loss);
    report.success = loss < cfg.training.loss_threshold;
    run.put_json(files::TRAIN_LOG.0, files::TRAIN_LOG.1, &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub n_rows: usize,
    pub columns: Vec<String>,
    pub param_checksum: String,
}

/// Drift features and baseline scores for every sample, in dataset order.
pub fn extract(cfg: &ExperimentConfig) -> Result<ExtractSummary> {
    let mut run = Run::open(cfg)?;
    let (samples, _) = run.dataset()?;
    let mut params = run.checkpoint()?.params;
    let start = params.checksum();
    let probe = ProbeDirection::random(params.config().model_dim, cfg.attack.probe_seed)?;
    let rows = extract_features(&mut params, &samples, &probe, cfg.attack.eta)?;
    let opts = BaselineOptions {
        k_percents: cfg.attack.k_percents.clone(),
        n_neighbours: cfg.attack.n_neighbours,
        seed: cfg.attack.neighbour_seed,
    };
    let scores = score_baselines(&params, &samples, &opts)?;
    if params.checksum() != start {
        return Err(Error::Integrity("parameters changed during extraction".into()));
    }
    run.put(
        files::FEATURES.0,
        files::FEATURES.1,
        attacks::table::encode_features(&rows).as_bytes(),
    )?;
    run.put(files::SCORES.0, files::SCORES.1, attacks::table::encode_scores(&scores).as_bytes())?;
    let mut columns: Vec<String> = attacks::FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    columns.extend(scores.columns);
    Ok(ExtractSummary {
        n_rows: rows.len(),
        columns,
        param_checksum: start,
    })
}

/// Display name of a baseline score column.
pub fn attack_name(column: &str) -> String {
    match column {
        PERPLEXITY => "PPL".into(),
        ZLIB => "Zlib".into(),
        NEIGHBOUR => "Neighbour".into(),
        c => match c.strip_prefix("min_k_") {
            Some(k) => format!("Min-{k}%"),
            None => c.to_string(),
        },
    }
}

fn fit_options(cfg: &ExperimentConfig) -> FitOptions {
    FitOptions {
        lambda_grid: cfg.classifier.lambda_grid.clone(),
        folds: cfg.classifier.folds,
        seed: cfg.classifier.seed,
    }
}

/// Per-split feature rows and labels.
struct Partition {
    x: [Vec<Vec<f64>>; 3],
    y: [Vec<bool>; 3],
    /// Dataset indices of each split's rows.
    idx: [Vec<usize>; 3],
}

fn partition(features: &[FeatureRow], splits: &[Split], labels: &[bool]) -> Partition {
    let mut p = Partition {
        x: Default::default(),
        y: Default::default(),
        idx: Default::default(),
    };
    for (i, (r, sp)) in features.iter().zip(splits).enumerate() {
        let k = *sp as usize;
        p.x[k].push(r.features.to_array().to_vec());
        p.y[k].push(labels[i]);
        p.idx[k].push(i);
    }
    p
}

/// Labels to evaluate against: the true ones, or a seeded permutation of
/// them for the null control.
fn eval_labels(samples: &[Sample], shuffle_seed: Option<u64>) -> Vec<bool> {
    let mut labels: Vec<bool> = samples.iter().map(Sample::is_member).collect();
    if let Some(seed) = shuffle_seed {
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "label-shuffle", 0)));
    }
    labels
}

fn attack_result(
    attack: String,
    key: String,
    val: (&[f64], &[bool]),
    test: (&[f64], &[bool]),
    fpr_levels: &[f64],
) -> Result<(AttackResult, RocCurve)> {
    let chosen = select_threshold(val.0, val.1)?;
    let at = threshold_metrics(test.0, test.1, chosen.threshold)?;
    let (curve, auc) = roc_auc(test.0, test.1)?;
    Ok((
        AttackResult {
            attack,
            key,
            auc,
            threshold: chosen.threshold,
            tpr: at.tpr,
            fpr: at.fpr,
            accuracy: at.accuracy,
            tpr_at_fpr: fpr_levels.iter().map(|&f| (f, curve.tpr_at_fpr(f))).collect(),
        },
        curve,
    ))
}

/// Everything [`evaluate`] computes, before it is written out.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub model: LogRegModel,
    pub rocs: Vec<(String, RocCurve)>,
}

/// Fits the drift classifier on the train split, picks each attack's
/// threshold on validation and scores everything on test.
pub fn evaluate_tables(
    cfg: &ExperimentConfig,
    samples: &[Sample],
    splits: &[Split],
    features: &[FeatureRow],
    scores: &ScoreTable,
    shuffle_seed: Option<u64>,
) -> Result<Evaluation> {
    let labels = eval_labels(samples, shuffle_seed);
    let p = partition(features, splits, &labels);
    let [train, val, test] = [0, 1, 2];
    let model = fit(&p.x[train], &p.y[train], &[true; 7], &fit_options(cfg))?;
    let val_p = model.predict_all(&p.x[val])?;
    let test_p = model.predict_all(&p.x[test])?;
    let levels = &cfg.classifier.fpr_levels;
    let mut results = Vec::new();
    let mut rocs = Vec::new();
    let (r, c) = attack_result(
        "G-Drift".into(),
        GDRIFT_KEY.into(),
        (&val_p, &p.y[val]),
        (&test_p, &p.y[test]),
        levels,
    )?;
    results.push(r);
    rocs.push((GDRIFT_KEY.to_string(), c));
    for col in &scores.columns {
        let values = scores.column(col).expect("listed column");
        let pick = |k: usize| -> Vec<f64> { p.idx[k].iter().map(|&i| values[i]).collect() };
        let (r, c) = attack_result(
            attack_name(col),
            col.clone(),
            (&pick(val), &p.y[val]),
            (&pick(test), &p.y[test]),
            levels,
        )?;
        results.push(r);
        rocs.push((col.clone(), c));
    }
    let report = EvalReport {
        n_train: p.y[train].len(),
        n_validation: p.y[val].len(),
        n_test: p.y[test].len(),
        test_members: p.y[test].iter().filter(|&&l| l).count(),
        lambda: model.l2_lambda,
        cv_auc: model.cv_auc.clone(),
        labels_shuffled: shuffle_seed.is_some(),
        attacks: results,
    };
    Ok(Evaluation { report, model, rocs })
}

/// The drift classifier as persisted next to the metrics report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRecord {
    pub model: LogRegModel,
    pub threshold: f64,
}

/// Writes the comparison report, its JSON twin, the fitted classifier and
/// one ROC file per attack.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let mut run = Run::open(cfg)?;
    let (samples, splits) = run.dataset()?;
    let features = run.features(&samples)?;
    let scores = run.scores(&samples)?;
    let ev = evaluate_tables(cfg, &samples, &splits, &features, &scores, None)?;
    for (key, curve) in &ev.rocs {
        let rel = format!("roc/{key}.csv");
        run.put(&format!("roc_{key}"), &rel, curve.to_csv().as_bytes())?;
    }
    let record = ClassifierRecord {
        model: ev.model.clone(),
        threshold: ev.report.attacks[0].threshold,
    };
    run.put_json(files::CLASSIFIER.0, files::CLASSIFIER.1, &record)?;
    run.put_json(files::METRICS_JSON.0, files::METRICS_JSON.1, &ev.report)?;
    run.put(files::METRICS.0, files::METRICS.1, ev.report.render().as_bytes())?;
    Ok(ev.report)
}

/// [`evaluate`] with membership labels permuted before anything is fitted.
/// Every AUC should then sit near one half.
pub fn control(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let mut run = Run::open(cfg)?;
    let (samples, splits) = run.dataset()?;
    let features = run.features(&samples)?;
    let scores = run.scores(&samples)?;
    let seed = derive_seed(cfg.classifier.seed, "control", 0);
    let ev = evaluate_tables(cfg, &samples, &splits, &features, &scores, Some(seed))?;
    run.put(files::CONTROL.0, files::CONTROL.1, ev.report.render().as_bytes())?;
    Ok(ev.report)
}

/// Refits the drift classifier on every canonical feature subset.
pub fn ablate(cfg: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    let mut run = Run::open(cfg)?;
    let (samples, splits) = run.dataset()?;
    let features = run.features(&samples)?;
    let labels = eval_labels(&samples, None);
    let p = partition(&features, &splits, &labels);
    let rows = run_ablation(
        (&p.x[0], &p.y[0]),
        (&p.x[2], &p.y[2]),
        &canonical_specs(),
        &fit_options(cfg),
    )?;
    run.put(
        files::ABLATION.0,
        files::ABLATION.1,
        super::report::render_ablation(&rows).as_bytes(),
    )?;
    Ok(rows)
}

/// The four drift quantities of one feature row, in [`DRIFT_QUANTITIES`]
/// order.
pub fn drift_quantities(row: &FeatureRow) -> [f64; 4] {
    let f = &row.features;
    [f.loss_delta(), f.logit_delta(), f.proj_delta(), f.hidden_drift]
}

/// Drift statistics of a labelled feature table. Normalisation statistics
/// come from the train split only.
pub fn drift_statistics(features: &[FeatureRow], splits: &[Split]) -> Result<DriftReport> {
    if features.len() != splits.len() {
        return Err(Error::Input(format!(
            "{} feature rows but {} split assignments",
            features.len(),
            splits.len()
        )));
    }
    let raw: Vec<Vec<f64>> = features.iter().map(|r| drift_quantities(r).to_vec()).collect();
    let train: Vec<Vec<f64>> = raw
        .iter()
        .zip(splits)
        .filter(|(_, sp)| **sp == Split::Train)
        .map(|(r, _)| r.clone())
        .collect();
    let normalization = MinMax::fit(&train)?;
    let mut rows = Vec::with_capacity(features.len());
    for ((f, r), sp) in features.iter().zip(&raw).zip(splits) {
        let n = normalization.apply_row(r)?;
        rows.push(DriftRow {
            sample_id: f.sample_id,
            member: f.label.is_member(),
            split: sp.name().to_string(),
            raw: [r[0], r[1], r[2], r[3]],
            normalized: [n[0], n[1], n[2], n[3]],
        });
    }
    let mut sums = [[0.0; 4]; 2];
    let mut counts = [0usize; 2];
    for r in &rows {
        let c = usize::from(!r.member);
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(&r.normalized) {
            *s += v;
        }
    }
    let mean = |c: usize| sums[c].map(|s| if counts[c] == 0 { 0.0 } else { s / counts[c] as f64 });
    let mut cdfs = Vec::new();
    for (q, name) in DRIFT_QUANTITIES.iter().enumerate() {
        for (class, member) in [("member", true), ("non-member", false)] {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.member == member)
                .map(|r| r.normalized[q])
                .collect();
            cdfs.push(Cdf {
                quantity: name.to_string(),
                class: class.to_string(),
                points: empirical_cdf(&values),
            });
        }
    }
    Ok(DriftReport {
        summary: DriftSummary {
            n_members: counts[0],
            n_nonmembers: counts[1],
            member_means: mean(0),
            nonmember_means: mean(1),
        },
        normalization,
        rows,
        cdfs,
    })
}

/// Writes per-sample drift quantities, per-class CDF points and the summary.
pub fn drift_report(cfg: &ExperimentConfig) -> Result<DriftReport> {
    let mut run = Run::open(cfg)?;
    let (samples, splits) = run.dataset()?;
    let features = run.features(&samples)?;
    let report = drift_statistics(&features, &splits)?;
    run.put(files::DRIFT_ROWS.0, files::DRIFT_ROWS.1, report.rows_csv().as_bytes())?;
    run.put(files::DRIFT_CDF.0, files::DRIFT_CDF.1, report.cdf_csv().as_bytes())?;
    run.put(
        files::DRIFT_REPORT.0,
        files::DRIFT_REPORT.1,
        report.summary.render().as_bytes(),
    )?;
    Ok(report)
}

fn world_by_id(cfg: &ExperimentConfig) -> Result<BTreeMap<usize, Fact>> {
    Ok(generate_world(cfg.corpus.seed, cfg.corpus.n_facts)?
        .into_iter()
        .map(|f| (f.fact_id, f))
        .collect())
}

/// The world fact behind a member sample, checked against the sample text.
fn fact_for<'w>(world: &'w BTreeMap<usize, Fact>, member: &Sample) -> Result<&'w Fact> {
    let fact = world
        .get(&member.fact_id)
        .ok_or_else(|| Error::Integrity(format!("fact {} is not in the configured world", member.fact_id)))?;
    if render_qa(fact, member.template_id)? != (member.prompt.clone(), member.answer.clone()) {
        return Err(Error::Integrity(format!(
            "sample {} does not match fact {} of the configured world",
            member.id, member.fact_id
        )));
    }
    Ok(fact)
}

/// Probe-projection drift of a fact's paraphrases under the trained model,
/// once with the true answer and once with its counterfactual answer.
///
/// Uses the first `consistency.n_facts` member facts, by sample id, that have
/// a counterfactual in the dataset.
pub fn consistency(cfg: &ExperimentConfig) -> Result<ConsistencyReport> {
    let mut run = Run::open(cfg)?;
    let (samples, _) = run.dataset()?;
    let mut params: ModelParams = run.checkpoint()?.params;
    let start = params.checksum();
    let probe = ProbeDirection::random(params.config().model_dim, cfg.attack.probe_seed)?;
    let world = world_by_id(cfg)?;
    let counterfactual: BTreeMap<usize, &Sample> = samples
        .iter()
        .filter(|s| s.origin == Origin::Counterfactual)
        .map(|s| (s.fact_id, s))
        .collect();
    let k = cfg.consistency.k;
    let mut rows = Vec::new();
    let mut spreads = Vec::new();
    let picked = samples
        .iter()
        .filter(|s| s.origin == Origin::Member && counterfactual.contains_key(&s.fact_id))
        .take(cfg.consistency.n_facts);
    for member in picked {
        let fact = fact_for(&world, member)?;
        let wrong = &counterfactual[&member.fact_id].answer;
        let mut std = [0.0; 2];
        for (c, (class, answer, origin)) in [
            ("member", &fact.object, Origin::Member),
            ("non-member", wrong, Origin::Counterfactual),
        ]
        .into_iter()
        .enumerate()
        {
            let mut deltas = Vec::with_capacity(k);
            for p in paraphrase_set(fact, answer, origin, k, &run.vocab)? {
                let t = gdrift_trace(&mut params, &p.prompt_tokens, p.target(), &probe, cfg.attack.eta)?;
                let d = (t.features.proj_after - t.features.proj_before).abs();
                deltas.push(d);
                rows.push(ConsistencyRow {
                    fact_id: fact.fact_id,
                    template_id: p.template_id,
                    prompt: p.prompt,
                    answer: p.answer,
                    class: class.to_string(),
                    alpha_before: t.features.proj_before,
                    alpha_after: t.features.proj_after,
                    abs_delta: d,
                });
            }
            std[c] = std_dev(&deltas);
        }
        spreads.push(FactSpread {
            fact_id: fact.fact_id,
            member_std: std[0],
            nonmember_std: std[1],
        });
    }
    if params.checksum() != start {
        return Err(Error::Integrity("parameters changed during the consistency probe".into()));
    }
    if spreads.is_empty() {
        return Err(Error::Input("no member fact has a counterfactual to compare against".into()));
    }
    let n = spreads.len() as f64;
    let report = ConsistencyReport {
        k,
        mean_member_std: spreads.iter().map(|s| s.member_std).sum::<f64>() / n,
        mean_nonmember_std: spreads.iter().map(|s| s.nonmember_std).sum::<f64>() / n,
        rows,
        spreads,
    };
    run.put(
        files::CONSISTENCY_ROWS.0,
        files::CONSISTENCY_ROWS.1,
        report.rows_csv().as_bytes(),
    )?;
    run.put(files::CONSISTENCY.0, files::CONSISTENCY.1, report.render().as_bytes())?;
    Ok(report)
}

/// Results of [`run_all`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub dataset: DatasetSummary,
    pub training: TrainReport,
    pub extraction: ExtractSummary,
    pub evaluation: EvalReport,
    pub control: EvalReport,
    pub ablation: Vec<AblationRow>,
    pub drift: DriftReport,
    pub consistency: ConsistencyReport,
}

/// Every stage in order, from a fresh dataset to the consistency probe.
pub fn run_all(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let dataset = gen_data(cfg)?;
    let training = train(cfg, false)?;
    let extraction = extract(cfg)?;
    let evaluation = evaluate(cfg)?;
    let control = control(cfg)?;
    let ablation = ablate(cfg)?;
    let drift = drift_report(cfg)?;
    let consistency = consistency(cfg)?;
    Ok(RunSummary {
        dataset,
        training,
        extraction,
        evaluation,
        control,
        ablation,
        drift,
        consistency,
    })
}
