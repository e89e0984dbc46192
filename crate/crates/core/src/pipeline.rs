//! Experiment orchestration: data, forests of several sizes, surrogate
//! distillation, CounteRGAN training, GAN and RGD recourse, reports and a
//! hashed run manifest.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{self, SplitBy};
use crate::countergan::{self, CounterGanModel, DistillReport, SurrogateConfig, TrainConfig};
use crate::dataset::{self, Dataset, MaxNormalizer, SynthConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, EvaluationReport, Fraction, ReportInputs};
use crate::nn::Mlp;
use crate::recourse::{Method, RecourseAction, Timing};
use crate::rgd::{self, RgdConfig};
use crate::seed::stage_seed;
use crate::survival::{ChurnClassifier, ForestConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: SynthConfig,
    pub train_fraction: f64,
    pub forest: ForestConfig,
    pub tree_counts: Vec<usize>,
    pub surrogate: SurrogateConfig,
    pub gan: TrainConfig,
    pub rgd: RgdConfig,
    /// Forest size the RGD baseline runs against; `None` skips it.
    pub rgd_trees: Option<usize>,
    /// Cap on denied test users given RGD recourse (first users in order).
    pub rgd_max_users: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: SynthConfig::default(),
            train_fraction: 0.5,
            forest: ForestConfig::default(),
            tree_counts: vec![1, 5, 20],
            surrogate: SurrogateConfig::default(),
            gan: TrainConfig::default(),
            rgd: RgdConfig::default(),
            rgd_trees: Some(20),
            rgd_max_users: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.gan.validate()?;
        self.rgd.validate()?;
        if self.tree_counts.is_empty() || self.tree_counts.contains(&0) {
            return Err(Error::config("tree_counts must be non-empty and positive"));
        }
        if let Some(n) = self.rgd_trees {
            if !self.tree_counts.contains(&n) {
                return Err(Error::config(format!("rgd_trees = {n} is not among tree_counts")));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

/// Synthesizes, splits and max-normalizes (fitted on train).
pub fn prepare_data(cfg: &ExperimentConfig, master: u64) -> Result<(Dataset, Dataset)> {
    let synth = SynthConfig { seed: stage_seed(master, "data"), ..cfg.data.clone() };
    let all = dataset::synthesize(&synth)?;
    split_normalized(&all, cfg.train_fraction, stage_seed(master, "split"))
}

pub fn split_normalized(all: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (mut train, mut test) = dataset::split(all, train_fraction, seed)?;
    let norm = MaxNormalizer::fit(&train)?;
    norm.apply(&mut train)?;
    norm.apply(&mut test)?;
    Ok((train, test))
}

pub fn fit_forest(train: &Dataset, cfg: &ExperimentConfig, n_trees: usize, master: u64) -> Result<ChurnClassifier> {
    let fc = ForestConfig { n_trees, seed: stage_seed(master, &format!("forest-{n_trees}")), ..cfg.forest.clone() };
    ChurnClassifier::fit(train, &fc)
}

/// `(user_id, features, label)` of one applicant.
pub type Applicant<'a> = (&'a str, &'a [f64], Option<u8>);

/// Applicants the forest denies.
pub fn denied<'a>(c: &ChurnClassifier, data: &'a Dataset) -> Result<Vec<Applicant<'a>>> {
    let mut out = Vec::new();
    for r in &data.records {
        if c.classify(&r.features)? == 0 {
            out.push((r.user_id.as_str(), r.features.as_slice(), r.label.binary()));
        }
    }
    Ok(out)
}

/// Fills a report row for `actions` taken on `data` under forest `c`.
pub fn evaluate(
    c: &ChurnClassifier,
    data: &Dataset,
    actions: &[RecourseAction],
    method: Method,
    discriminator: Option<&Mlp>,
) -> Result<EvaluationReport> {
    let mut labelled = Vec::new();
    let mut predictions = Vec::with_capacity(data.len());
    for r in &data.records {
        let p = c.classify(&r.features)?;
        predictions.push(p);
        if let Some(y) = r.label.binary() {
            labelled.push((p, y));
        }
    }
    let by_id: std::collections::HashMap<&str, &dataset::UserRecord> =
        data.records.iter().map(|r| (r.user_id.as_str(), r)).collect();
    let originals: Vec<&dataset::UserRecord> = actions
        .iter()
        .map(|a| {
            by_id
                .get(a.user_id.as_str())
                .copied()
                .ok_or_else(|| Error::config(format!("action for unknown user {}", a.user_id)))
        })
        .collect::<Result<_>>()?;
    let action_labels: Vec<Option<u8>> = originals.iter().map(|r| r.label.binary()).collect();
    let disc = match discriminator {
        Some(d) => {
            let real: Vec<Vec<f64>> = originals.iter().map(|r| r.features.clone()).collect();
            let fake: Vec<Vec<f64>> = actions.iter().map(|a| a.counterfactual.clone()).collect();
            Some(countergan::discriminator_accuracy(d, &real, &fake)?)
        }
        None => None,
    };
    EvaluationReport::build(&ReportInputs {
        method,
        n_trees: c.trees.len(),
        labelled: &labelled,
        predictions: &predictions,
        actions,
        action_labels: &action_labels,
        discriminator: disc,
    })
}

pub struct ModelRun {
    pub n_trees: usize,
    pub forest: Arc<ChurnClassifier>,
    pub distill: DistillReport,
    pub gan: CounterGanModel,
    pub actions: Vec<RecourseAction>,
    pub report: EvaluationReport,
}

/// Forest, surrogate, CounteRGAN and GAN recourse on the test split.
pub fn run_model(train: &Dataset, test: &Dataset, cfg: &ExperimentConfig, n_trees: usize, master: u64) -> Result<ModelRun> {
    let forest = Arc::new(fit_forest(train, cfg, n_trees, master)?);
    let (surrogate, distill) =
        countergan::distill_surrogate(&forest, train, &cfg.surrogate, stage_seed(master, &format!("distill-{n_trees}")))?;
    let gan_cfg = TrainConfig { seed: stage_seed(master, &format!("gan-{n_trees}")), ..cfg.gan.clone() };
    let gan = countergan::train(train, Arc::clone(&forest), surrogate, &gan_cfg)?;
    let users: Vec<(&str, &[f64])> = test.records.iter().map(|r| (r.user_id.as_str(), r.features.as_slice())).collect();
    let actions = gan.generate_batch(users)?;
    let report = evaluate(&forest, test, &actions, Method::Gan, Some(&gan.discriminator))?;
    Ok(ModelRun { n_trees, forest, distill, gan, actions, report })
}

/// RGD recourse on the denied test users of `forest`.
pub fn run_rgd(forest: &ChurnClassifier, test: &Dataset, cfg: &ExperimentConfig, master: u64) -> Result<(Vec<RecourseAction>, EvaluationReport)> {
    let mut users: Vec<(&str, &[f64])> = denied(forest, test)?.into_iter().map(|(id, x, _)| (id, x)).collect();
    if let Some(cap) = cfg.rgd_max_users {
        users.truncate(cap);
    }
    let rcfg = RgdConfig { seed: stage_seed(master, "rgd"), ..cfg.rgd.clone() };
    let actions = rgd::rgd_batch(forest, &users, &test.meta, &rcfg)?;
    let report = evaluate(forest, test, &actions, Method::Rgd, None)?;
    Ok((actions, report))
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub train: Dataset,
    pub test: Dataset,
    pub runs: Vec<ModelRun>,
    pub rgd: Option<(Vec<RecourseAction>, EvaluationReport)>,
}

impl Experiment {
    pub fn reports(&self) -> Vec<EvaluationReport> {
        let mut rows: Vec<EvaluationReport> = self.runs.iter().map(|r| r.report.clone()).collect();
        rows.extend(self.rgd.iter().map(|(_, r)| r.clone()));
        rows
    }

    pub fn run(&self, n_trees: usize) -> Option<&ModelRun> {
        self.runs.iter().find(|r| r.n_trees == n_trees)
    }
}

/// The full grid: every forest size with CounteRGAN, plus the RGD baseline.
pub fn run_experiment(cfg: &ExperimentConfig, master: u64) -> Result<Experiment> {
    cfg.validate()?;
    let (train, test) = prepare_data(cfg, master)?;
    let mut runs = Vec::with_capacity(cfg.tree_counts.len());
    for &n in &cfg.tree_counts {
        runs.push(run_model(&train, &test, cfg, n, master)?);
    }
    let rgd = match cfg.rgd_trees {
        Some(n) => {
            let run = runs.iter().find(|r| r.n_trees == n).expect("validated");
            Some(run_rgd(&run.forest, &test, cfg, master)?)
        }
        None => None,
    };
    Ok(Experiment { config: cfg.clone(), master_seed: master, train, test, runs, rgd })
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Deterministic outputs with their content hashes.
    pub outputs: Vec<ManifestEntry>,
    /// Outputs carrying wall-clock measurements; listed but never hashed.
    pub volatile: Vec<String>,
}

impl RunManifest {
    /// Hashes only, keyed by relative path.
    pub fn hashes(&self) -> Vec<(String, String)> {
        self.outputs.iter().map(|e| (e.path.clone(), e.sha256.clone())).collect()
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Actions without their timings, so the file is reproducible.
pub fn write_actions_stable(path: &Path, actions: &[RecourseAction]) -> Result<()> {
    let stripped: Vec<RecourseAction> =
        actions.iter().map(|a| RecourseAction { timing: Timing::default(), ..a.clone() }).collect();
    countergan::write_actions(path, &stripped)
}

pub fn write_timings(path: &Path, actions: &[RecourseAction]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(["user_id", "method", "steps", "start", "end", "seconds"])?;
    for a in actions {
        w.write_record([
            a.user_id.clone(),
            a.method.to_string(),
            a.steps.to_string(),
            format!("{:?}", a.timing.start),
            format!("{:?}", a.timing.end),
            format!("{:?}", a.timing.seconds()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Audit exports for one set of actions: PCA scatter fitted on the training
/// features and cost histograms by efficacy and by true outcome.
pub fn write_audit(
    dir: &Path,
    train: &Dataset,
    test: &Dataset,
    actions: &[RecourseAction],
    feature_index: Option<usize>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let rows: Vec<Vec<f64>> = train.records.iter().map(|r| r.features.clone()).collect();
    let pca = audit::fit_pca(&rows, 2)?;
    let by_id: std::collections::HashMap<&str, &dataset::UserRecord> =
        test.records.iter().map(|r| (r.user_id.as_str(), r)).collect();
    let mut originals = Vec::with_capacity(actions.len());
    let mut truths = Vec::with_capacity(actions.len());
    for a in actions {
        let r = by_id
            .get(a.user_id.as_str())
            .ok_or_else(|| Error::config(format!("action for unknown user {}", a.user_id)))?;
        originals.push(r.features.as_slice());
        truths.push(r.label.binary());
    }
    let mut written = Vec::new();
    let p = dir.join("pca.json");
    std::fs::write(&p, serde_json::to_vec_pretty(&pca)?)?;
    written.push(p);
    let p = dir.join("scatter.csv");
    audit::write_scatter(&p, &audit::build_scatter(actions, &originals, &truths, &pca)?)?;
    written.push(p);
    if actions.is_empty() {
        return Ok(written);
    }
    let mut hists = vec![
        ("efficacy".to_string(), None, SplitBy::Efficacy),
        ("true_outcome".to_string(), None, SplitBy::TrueOutcome),
    ];
    if let Some(i) = feature_index {
        let name = &train.meta[i].name;
        hists.push((format!("{name}_efficacy"), Some(i), SplitBy::Efficacy));
        hists.push((format!("{name}_true_outcome"), Some(i), SplitBy::TrueOutcome));
    }
    for (key, fi, split) in hists {
        let h = audit::cost_histograms(actions, &truths, fi, split, audit::DEFAULT_BINS)?;
        let p = dir.join(format!("hist_{key}.csv"));
        h.write_csv(&p)?;
        written.push(p);
    }
    Ok(written)
}

/// Default feature for per-feature cost histograms: the recent action count.
pub fn default_audit_feature(meta: &[dataset::FeatureMeta]) -> Option<usize> {
    meta.iter().position(|m| m.name.starts_with("action_count_last15"))
}

/// Writes every artifact of an experiment under `dir` and returns the manifest
/// (also saved as `manifest.json`).
pub fn write_experiment(exp: &Experiment, dir: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let mut stable: Vec<PathBuf> = Vec::new();
    let mut volatile: Vec<PathBuf> = Vec::new();

    let data_dir = dir.join("data");
    std::fs::create_dir_all(&data_dir)?;
    for (name, d) in [("train.csv", &exp.train), ("test.csv", &exp.test)] {
        let p = data_dir.join(name);
        d.write_csv(&p)?;
        stable.push(p);
    }
    let p = data_dir.join("meta.json");
    dataset::write_meta(&p, &exp.train.meta)?;
    stable.push(p);

    let audit_feature = default_audit_feature(&exp.train.meta);
    for run in &exp.runs {
        let rd = dir.join(format!("trees_{}", run.n_trees));
        std::fs::create_dir_all(&rd)?;
        let p = rd.join("forest.json");
        run.forest.save(&p)?;
        stable.push(p);
        let p = rd.join("distill.json");
        std::fs::write(&p, serde_json::to_vec_pretty(&run.distill)?)?;
        stable.push(p);
        let gd = rd.join("gan");
        run.gan.save(&gd)?;
        for f in ["generator.json", "discriminator.json", "surrogate.json", "constraints.json", "training_log.csv", "model.json"] {
            stable.push(gd.join(f));
        }
        let p = rd.join("actions_gan.jsonl");
        write_actions_stable(&p, &run.actions)?;
        stable.push(p);
        let p = rd.join("timings_gan.csv");
        write_timings(&p, &run.actions)?;
        volatile.push(p);
        stable.extend(write_audit(&rd.join("audit"), &exp.train, &exp.test, &run.actions, audit_feature)?);
    }
    if let (Some((actions, _)), Some(n)) = (&exp.rgd, exp.config.rgd_trees) {
        let rd = dir.join(format!("trees_{n}"));
        let p = rd.join("actions_rgd.jsonl");
        write_actions_stable(&p, actions)?;
        stable.push(p);
        let p = rd.join("timings_rgd.csv");
        write_timings(&p, actions)?;
        volatile.push(p);
    }

    let reports = exp.reports();
    let p = dir.join("report.json");
    std::fs::write(&p, serde_json::to_vec_pretty(&reports)?)?;
    volatile.push(p);
    let p = dir.join("tables.txt");
    std::fs::write(&p, format!("{}\n{}", metrics::accuracy_table(&reports), metrics::recourse_table(&reports)))?;
    volatile.push(p);

    let rel = |p: &Path| p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/");
    let outputs = stable
        .iter()
        .map(|p| Ok(ManifestEntry { path: rel(p), sha256: sha256_file(p)? }))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        seed: exp.master_seed,
        config: exp.config.clone(),
        outputs,
        volatile: volatile.iter().map(|p| rel(p)).collect(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Share of successful actions, or `None` when no one was denied.
pub fn success_rate(actions: &[RecourseAction]) -> Option<f64> {
    metrics::percent_successful_recourse(actions).ok().flatten().map(|f: Fraction| f.value())
}
