//! User panels with right-censored lifetimes: synthetic generation, CSV
//! ingestion, labelling and train/test splitting.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Default binarization threshold in days.
pub const DEFAULT_THRESHOLD_DAYS: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Free,
    IncreaseOnly,
    DecreaseOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AggregationWindow {
    First15,
    Last15,
    First30,
    Last60,
    #[default]
    Other,
}

/// Per-feature recourse constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub actionable: bool,
    pub direction: Direction,
    pub lower_bound: f64,
    pub upper_bound: f64,
    #[serde(default)]
    pub aggregation_window: AggregationWindow,
}

impl FeatureMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower_bound.is_finite() && self.upper_bound.is_finite()) {
            return Err(Error::config(format!("feature {}: bounds must be finite", self.name)));
        }
        if self.lower_bound > self.upper_bound {
            return Err(Error::config(format!(
                "feature {}: lower_bound {} exceeds upper_bound {}",
                self.name, self.lower_bound, self.upper_bound
            )));
        }
        if !self.actionable && self.direction != Direction::Free {
            return Err(Error::config(format!(
                "feature {}: non-actionable features must have direction `free`",
                self.name
            )));
        }
        Ok(())
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower_bound && value <= self.upper_bound
    }
}

/// Binary churn label; records censored before the threshold are indeterminate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Churned,
    Retained,
    Indeterminate,
}

impl Label {
    pub fn from_lifetime(lifetime_days: f64, censored: bool, threshold_days: f64) -> Label {
        if lifetime_days >= threshold_days {
            Label::Retained
        } else if censored {
            Label::Indeterminate
        } else {
            Label::Churned
        }
    }

    /// `Some(0 | 1)` for determinate labels.
    pub fn binary(self) -> Option<u8> {
        match self {
            Label::Churned => Some(0),
            Label::Retained => Some(1),
            Label::Indeterminate => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub features: Vec<f64>,
    pub lifetime_days: f64,
    pub censored: bool,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<UserRecord>,
    pub meta: Vec<FeatureMeta>,
    pub threshold_days: f64,
    pub split_tag: SplitTag,
}

impl Dataset {
    pub fn n_features(&self) -> usize {
        self.meta.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with a determinate binary label.
    pub fn labelled(&self) -> impl Iterator<Item = (&UserRecord, u8)> {
        self.records
            .iter()
            .filter_map(|r| r.label.binary().map(|y| (r, y)))
    }

    pub fn with_label(&self, y: u8) -> impl Iterator<Item = &UserRecord> {
        self.labelled().filter(move |(_, l)| *l == y).map(|(r, _)| r)
    }

    /// Re-derive every label from lifetimes at a new threshold.
    pub fn relabel(&mut self, threshold_days: f64) {
        self.threshold_days = threshold_days;
        for r in &mut self.records {
            r.label = Label::from_lifetime(r.lifetime_days, r.censored, threshold_days);
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.meta {
            m.validate()?;
        }
        let f = self.meta.len();
        for (row, r) in self.records.iter().enumerate() {
            if r.features.len() != f {
                return Err(Error::Dimension { expected: f, got: r.features.len() });
            }
            if !(r.lifetime_days >= 0.0 && r.lifetime_days.is_finite()) {
                return Err(Error::Parse {
                    row: row + 1,
                    column: "lifetime_days".into(),
                    detail: format!("invalid lifetime {}", r.lifetime_days),
                });
            }
            for (v, m) in r.features.iter().zip(&self.meta) {
                if !v.is_finite() || !m.contains(*v) {
                    return Err(Error::Parse {
                        row: row + 1,
                        column: m.name.clone(),
                        detail: format!("value {v} outside [{}, {}]", m.lower_bound, m.upper_bound),
                    });
                }
            }
        }
        Ok(())
    }

    /// Write the dataset CSV (`user_id,lifetime_days,censored,<features…>`).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        let mut header = vec!["user_id".to_string(), "lifetime_days".into(), "censored".into()];
        header.extend(self.meta.iter().map(|m| m.name.clone()));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = Vec::with_capacity(3 + r.features.len());
            row.push(r.user_id.clone());
            row.push(format_num(r.lifetime_days));
            row.push(r.censored.to_string());
            row.extend(r.features.iter().map(|v| format_num(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_num(v: f64) -> String {
    format!("{v:?}")
}

// ---------------------------------------------------------------------------
// Feature metadata files
// ---------------------------------------------------------------------------

/// Reads either a JSON array of feature objects or one JSON object per line.
pub fn read_meta(path: &Path) -> Result<Vec<FeatureMeta>> {
    let text = std::fs::read_to_string(path)?;
    let trimmed = text.trim_start();
    let meta: Vec<FeatureMeta> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed)?
    } else {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                row: i + 1,
                column: "meta".into(),
                detail: e.to_string(),
            })?);
        }
        out
    };
    for m in &meta {
        m.validate()?;
    }
    Ok(meta)
}

pub fn write_meta(path: &Path, meta: &[FeatureMeta]) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, meta)?;
    f.write_all(b"\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

pub fn load_csv(path: &Path, meta_path: &Path, threshold_days: f64) -> Result<Dataset> {
    let meta = read_meta(meta_path)?;
    let reader = BufReader::new(File::open(path)?);
    parse_csv(reader, meta, threshold_days)
}

pub(crate) fn parse_csv<R: BufRead>(
    reader: R,
    meta: Vec<FeatureMeta>,
    threshold_days: f64,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    const FIXED: [&str; 3] = ["user_id", "lifetime_days", "censored"];
    for (i, want) in FIXED.iter().enumerate() {
        match header.get(i) {
            Some(h) if h.trim() == *want => {}
            _ => {
                return Err(Error::Parse {
                    row: 0,
                    column: (*want).to_string(),
                    detail: "missing column".into(),
                })
            }
        }
    }
    let n_feat_cols = header.len() - FIXED.len();
    if n_feat_cols != meta.len() {
        return Err(Error::Parse {
            row: 0,
            column: "<features>".into(),
            detail: format!("{} feature columns but meta lists {}", n_feat_cols, meta.len()),
        });
    }
    for (j, m) in meta.iter().enumerate() {
        let h = header.get(FIXED.len() + j).unwrap_or_default().trim();
        if h != m.name {
            return Err(Error::Parse {
                row: 0,
                column: h.to_string(),
                detail: format!("expected feature column `{}`", m.name),
            });
        }
    }

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: "<row>".into(),
                detail: format!("{} cells, expected {}", rec.len(), header.len()),
            });
        }
        let cell = |j: usize| rec.get(j).unwrap_or_default().trim();
        let num = |j: usize, name: &str| -> Result<f64> {
            let v: f64 = cell(j).parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                detail: format!("non-numeric value `{}`", cell(j)),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    detail: "non-finite value".into(),
                });
            }
            Ok(v)
        };
        let lifetime_days = num(1, "lifetime_days")?;
        if lifetime_days < 0.0 {
            return Err(Error::Parse {
                row,
                column: "lifetime_days".into(),
                detail: "negative lifetime".into(),
            });
        }
        let censored = match cell(2) {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Parse {
                    row,
                    column: "censored".into(),
                    detail: format!("expected true/false, got `{other}`"),
                })
            }
        };
        let mut features = Vec::with_capacity(meta.len());
        for (j, m) in meta.iter().enumerate() {
            let v = num(FIXED.len() + j, &m.name)?;
            if !m.contains(v) {
                return Err(Error::Parse {
                    row,
                    column: m.name.clone(),
                    detail: format!("value {v} outside [{}, {}]", m.lower_bound, m.upper_bound),
                });
            }
            features.push(v);
        }
        records.push(UserRecord {
            user_id: cell(0).to_string(),
            features,
            lifetime_days,
            censored,
            label: Label::from_lifetime(lifetime_days, censored, threshold_days),
        });
    }
    Ok(Dataset { records, meta, threshold_days, split_tag: SplitTag::All })
}

// ---------------------------------------------------------------------------
// Splitting and normalization
// ---------------------------------------------------------------------------

/// Seeded partition by user into `(train, test)` of sizes `⌈n·f⌉` and the rest.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!("train_fraction {train_fraction} not in (0, 1)")));
    }
    if d.is_empty() {
        return Err(Error::Empty("dataset has no records"));
    }
    let n = d.len();
    let n_train = ((n as f64) * train_fraction).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let (tr, te) = order.split_at(n_train.min(n));
    let mut tr = tr.to_vec();
    let mut te = te.to_vec();
    // keep source order within each side
    tr.sort_unstable();
    te.sort_unstable();
    let take = |idx: &[usize], tag| Dataset {
        records: idx.iter().map(|&i| d.records[i].clone()).collect(),
        meta: d.meta.clone(),
        threshold_days: d.threshold_days,
        split_tag: tag,
    };
    Ok((take(&tr, SplitTag::Train), take(&te, SplitTag::Test)))
}

/// Per-feature maximum scaling fitted on one split and reused on others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxNormalizer {
    pub max_abs: Vec<f64>,
}

impl MaxNormalizer {
    pub fn fit(d: &Dataset) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Empty("cannot fit normalizer on an empty dataset"));
        }
        let mut max_abs = vec![0.0f64; d.n_features()];
        for r in &d.records {
            for (m, v) in max_abs.iter_mut().zip(&r.features) {
                *m = m.max(v.abs());
            }
        }
        Ok(Self { max_abs })
    }

    /// Scales every feature by the fitted maximum, then clamps into meta bounds.
    pub fn apply(&self, d: &mut Dataset) -> Result<()> {
        Error::check_dim(self.max_abs.len(), d.n_features())?;
        for r in &mut d.records {
            for ((v, m), meta) in r.features.iter_mut().zip(&self.max_abs).zip(&d.meta) {
                if *m > 0.0 {
                    *v /= m;
                }
                *v = v.clamp(meta.lower_bound, meta.upper_bound);
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

/// A planted effect of one feature on the log of the lifetime scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalEffect {
    pub feature: usize,
    /// Non-negative: the survival scale never decreases in a signal feature.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_features: usize,
    pub seed: u64,
    pub censor_rate: f64,
    pub signal: Vec<SignalEffect>,
    #[serde(default = "default_shape")]
    pub lifetime_shape: f64,
    #[serde(default = "default_threshold")]
    pub threshold_days: f64,
}

fn default_shape() -> f64 {
    4.0
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD_DAYS
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 2000,
            n_features: 24,
            seed: 0,
            censor_rate: 0.1,
            signal: default_signal(),
            lifetime_shape: default_shape(),
            threshold_days: DEFAULT_THRESHOLD_DAYS,
        }
    }
}

/// Default planted effects; mixes actionable and non-actionable features so
/// that some churners cannot be helped by any feasible action.
pub fn default_signal() -> Vec<SignalEffect> {
    [(0, 3.0), (1, 2.0), (4, 2.0), (5, 1.5), (12, 2.0), (13, 1.5)]
        .into_iter()
        .map(|(feature, weight)| SignalEffect { feature, weight })
        .collect()
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users < 2 {
            return Err(Error::config("n_users must be >= 2"));
        }
        if self.n_features < 2 {
            return Err(Error::config("n_features must be >= 2"));
        }
        if !(0.0..1.0).contains(&self.censor_rate) {
            return Err(Error::config("censor_rate must be in [0, 1)"));
        }
        if !(self.lifetime_shape > 0.0 && self.lifetime_shape.is_finite()) {
            return Err(Error::config("lifetime_shape must be positive"));
        }
        if !(self.threshold_days > 0.0) {
            return Err(Error::config("threshold_days must be positive"));
        }
        for s in &self.signal {
            if s.feature >= self.n_features {
                return Err(Error::config(format!(
                    "signal feature {} out of range (n_features = {})",
                    s.feature, self.n_features
                )));
            }
            if !(s.weight >= 0.0 && s.weight.is_finite()) {
                return Err(Error::config(format!(
                    "signal weight for feature {} must be finite and >= 0",
                    s.feature
                )));
            }
        }
        Ok(())
    }

    /// Log-logistic scale (median lifetime) for a normalized feature vector.
    pub fn scale(&self, features: &[f64], intercept: f64) -> f64 {
        let eta: f64 = self.signal.iter().map(|s| s.weight * features[s.feature]).sum();
        (intercept + eta).exp()
    }
}

struct FeatureTemplate {
    stem: &'static str,
    window: AggregationWindow,
    actionable: bool,
    direction: Direction,
}

const fn tpl(
    stem: &'static str,
    window: AggregationWindow,
    actionable: bool,
    direction: Direction,
) -> FeatureTemplate {
    FeatureTemplate { stem, window, actionable, direction }
}

use AggregationWindow::{First15, First30, Last15, Last60, Other};
use Direction::{DecreaseOnly, Free, IncreaseOnly};

const TEMPLATES: [FeatureTemplate; 24] = [
    tpl("action_count_last15", Last15, true, IncreaseOnly),
    tpl("connection_time_last60", Last60, true, IncreaseOnly),
    tpl("days_between_engaged_actions_first15", First15, true, Free),
    tpl("elearning_action_count_first30", First30, true, IncreaseOnly),
    tpl("connected_days_first15", First15, true, IncreaseOnly),
    tpl("session_count_last15", Last15, true, IncreaseOnly),
    tpl("quiz_completed_count_last60", Last60, true, IncreaseOnly),
    tpl("video_watch_time_first30", First30, true, IncreaseOnly),
    tpl("days_since_last_login_last15", Last15, true, DecreaseOnly),
    tpl("notification_open_rate_last60", Last60, true, Free),
    tpl("module_completed_count_first30", First30, true, IncreaseOnly),
    tpl("search_count_last15", Last15, true, Free),
    tpl("first_use_day_of_year", Other, false, Free),
    tpl("device_storage_tier", Other, false, Free),
    tpl("app_version_at_install", Other, false, Free),
    tpl("signup_weekday", Other, false, Free),
    tpl("bookmark_count_last60", Last60, true, IncreaseOnly),
    tpl("drug_lookup_count_first15", First15, true, IncreaseOnly),
    tpl("checklist_usage_first30", First30, true, IncreaseOnly),
    tpl("avg_session_length_last60", Last60, true, Free),
    tpl("offline_mode_days_last15", Last15, true, Free),
    tpl("content_downloads_first30", First30, true, IncreaseOnly),
    tpl("language_switch_count_first15", First15, true, Free),
    tpl("certificate_progress_last60", Last60, true, IncreaseOnly),
];

/// Upper bound for synthetic features: the training maximum after
/// normalization. Counterfactuals past it would be trivially unrealistic.
pub const SYNTH_UPPER_BOUND: f64 = 1.0;

/// Window-tagged feature metadata for `n` synthetic features. Names repeat
/// the template list with a numeric suffix when `n > 24`.
pub fn default_feature_meta(n: usize) -> Vec<FeatureMeta> {
    (0..n)
        .map(|i| {
            let t = &TEMPLATES[i % TEMPLATES.len()];
            let round = i / TEMPLATES.len();
            let name = if round == 0 {
                format!("{}_norm_max", t.stem)
            } else {
                format!("{}_{}_norm_max", t.stem, round + 1)
            };
            FeatureMeta {
                name,
                actionable: t.actionable,
                direction: t.direction,
                lower_bound: 0.0,
                upper_bound: SYNTH_UPPER_BOUND,
                aggregation_window: t.window,
            }
        })
        .collect()
}

/// Output of [`synthesize_with_truth`]: the dataset plus the planted law.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub intercept: f64,
    /// Uncensored lifetimes before censoring was applied.
    pub true_lifetimes: Vec<f64>,
}

pub fn synthesize(config: &SynthConfig) -> Result<Dataset> {
    synthesize_with_truth(config).map(|o| o.dataset)
}

/// Correlated engagement features driven by a latent factor, log-logistic
/// lifetimes whose scale is `exp(intercept + Σ w·x)`, then independent
/// random censoring at `censor_rate`.
pub fn synthesize_with_truth(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = seed::rng(config.seed);
    let n = config.n_users;
    let f = config.n_features;

    let meta = default_feature_meta(f);
    // install-context attributes do not follow engagement
    let loadings: Vec<f64> =
        meta.iter().map(|m| if m.actionable { rng.gen_range(0.3..0.9) } else { 0.0 }).collect();
    let sharpness: Vec<f64> = (0..f).map(|_| rng.gen_range(1.0..2.5)).collect();
    let mut raw = vec![vec![0.0; f]; n];
    for row in raw.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        for (j, v) in row.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(&mut rng);
            let l = loadings[j];
            let u = l * z + (1.0 - l * l).sqrt() * e;
            *v = 1.0 / (1.0 + (-sharpness[j] * u).exp());
        }
    }
    let mut max = vec![0.0f64; f];
    for row in &raw {
        for (m, v) in max.iter_mut().zip(row) {
            *m = m.max(*v);
        }
    }
    for row in raw.iter_mut() {
        for (v, m) in row.iter_mut().zip(&max) {
            *v /= m;
        }
    }

    // Centre the planted effect so that the median lifetime sits at the threshold.
    let mean_eta = raw
        .iter()
        .map(|x| config.signal.iter().map(|s| s.weight * x[s.feature]).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let intercept = config.threshold_days.ln() - mean_eta;

    let width = (n.max(1) as f64).log10().floor() as usize + 1;
    let mut records = Vec::with_capacity(n);
    let mut true_lifetimes = Vec::with_capacity(n);
    for (i, features) in raw.into_iter().enumerate() {
        let scale = config.scale(&features, intercept);
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let t = scale * (u / (1.0 - u)).powf(1.0 / config.lifetime_shape);
        let t = t.floor();
        true_lifetimes.push(t);
        let censor_draw: f64 = rng.gen();
        let censor_frac: f64 = rng.gen();
        let (lifetime_days, censored) = if censor_draw < config.censor_rate {
            ((t * censor_frac).floor(), true)
        } else {
            (t, false)
        };
        records.push(UserRecord {
            user_id: format!("u{:0width$}", i, width = width),
            features,
            lifetime_days,
            censored,
            label: Label::from_lifetime(lifetime_days, censored, config.threshold_days),
        });
    }
    Ok(SynthOutput {
        dataset: Dataset {
            records,
            meta,
            threshold_days: config.threshold_days,
            split_tag: SplitTag::All,
        },
        intercept,
        true_lifetimes,
    })
}
