use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{GrowParams, TrainView};
use super::{Median, SurvivalCurve, SurvivalTree};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

const FORMAT: &str = "churn-recourse/forest";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_leaf_size: usize,
    /// `None` means `ceil(sqrt(F))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
    pub bootstrap: bool,
    /// Upper limit on thresholds evaluated per feature and node; 0 = all midpoints.
    pub max_split_candidates: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 20,
            min_leaf_size: 10,
            features_per_split: None,
            seed: 0,
            bootstrap: true,
            max_split_candidates: 32,
        }
    }
}

impl ForestConfig {
    pub fn with_trees(n_trees: usize, seed: u64) -> Self {
        Self { n_trees, seed, ..Self::default() }
    }
}

/// Conditional survival forest binarized at `threshold_days`:
/// class 1 iff the predicted median lifetime is at least the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnClassifier {
    pub trees: Vec<SurvivalTree>,
    pub threshold_days: f64,
    pub n_features: usize,
    pub config: ForestConfig,
}

/// The pieces of the ensemble curve that decide the class, without building
/// the full union grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParts {
    /// `S(threshold-)` of the ensemble curve.
    pub before_threshold: f64,
    /// Largest grid time over all routed leaves.
    pub last_time: f64,
}

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    classifier: ChurnClassifier,
}

impl ChurnClassifier {
    pub fn fit(data: &Dataset, config: &ForestConfig) -> Result<Self> {
        if config.n_trees < 1 {
            return Err(Error::config("n_trees must be >= 1"));
        }
        if config.min_leaf_size < 1 {
            return Err(Error::config("min_leaf_size must be >= 1"));
        }
        if data.is_empty() {
            return Err(Error::Empty("cannot fit a forest on an empty dataset"));
        }
        let n_features = data.n_features();
        let features: Vec<Vec<f64>> = data.records.iter().map(|r| r.features.clone()).collect();
        let times: Vec<f64> = data.records.iter().map(|r| r.lifetime_days).collect();
        let events: Vec<bool> = data.records.iter().map(|r| !r.censored).collect();
        let view = TrainView { features: &features, times: &times, events: &events };
        let params = GrowParams {
            min_leaf_size: config.min_leaf_size,
            features_per_split: config
                .features_per_split
                .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize),
            max_split_candidates: config.max_split_candidates,
        };
        let n = data.len();
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|k| {
                let mut rng = seed::rng(seed::mix(config.seed, k as u64));
                let sample: Vec<usize> = if config.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                SurvivalTree::grow(&view, sample, &params, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            threshold_days: data.threshold_days,
            n_features,
            config: config.clone(),
        })
    }

    /// Builds a classifier from hand-made trees.
    pub fn from_trees(trees: Vec<SurvivalTree>, n_features: usize, threshold_days: f64) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::config("forest must contain at least one tree"));
        }
        Ok(Self {
            trees,
            threshold_days,
            n_features,
            config: ForestConfig { n_trees: 0, ..ForestConfig::default() },
        })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        Error::check_dim(self.n_features, x.len())
    }

    /// Pointwise mean of the routed leaf curves over their union grid.
    pub fn predict_curve(&self, x: &[f64]) -> Result<SurvivalCurve> {
        self.check(x)?;
        let leaves: Vec<&SurvivalCurve> = self.trees.iter().map(|t| t.leaf(x)).collect();
        let mut grid: Vec<f64> = leaves.iter().flat_map(|c| c.times.iter().copied()).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let k = leaves.len() as f64;
        let mut cursors = vec![0usize; leaves.len()];
        let mut probs = Vec::with_capacity(grid.len());
        for &t in &grid {
            let mut sum = 0.0;
            for (leaf, cur) in leaves.iter().zip(cursors.iter_mut()) {
                while *cur < leaf.times.len() && leaf.times[*cur] <= t {
                    *cur += 1;
                }
                sum += if *cur == 0 { 1.0 } else { leaf.probs[*cur - 1] };
            }
            probs.push(sum / k);
        }
        Ok(SurvivalCurve { times: grid, probs })
    }

    pub fn predict_median(&self, x: &[f64]) -> Result<Median> {
        Ok(self.predict_curve(x)?.median())
    }

    pub fn predict_lifetime(&self, x: &[f64]) -> Result<f64> {
        self.predict_median(x).map(|m| m.days)
    }

    pub fn score_parts(&self, x: &[f64]) -> Result<ScoreParts> {
        self.check(x)?;
        let mut sum = 0.0;
        let mut last_time = f64::NEG_INFINITY;
        for tree in &self.trees {
            let leaf = tree.leaf(x);
            sum += leaf.before(self.threshold_days);
            if let Some(t) = leaf.last_time() {
                last_time = last_time.max(t);
            }
        }
        Ok(ScoreParts { before_threshold: sum / self.trees.len() as f64, last_time })
    }

    /// Ensemble `S(threshold-)`, capped at 0.5 when no leaf reaches the threshold.
    /// `classify(x) == 1` exactly when this exceeds 0.5.
    pub fn class_score(&self, x: &[f64]) -> Result<f64> {
        let p = self.score_parts(x)?;
        Ok(if p.last_time >= self.threshold_days {
            p.before_threshold
        } else {
            p.before_threshold.min(0.5)
        })
    }

    /// 1 iff the predicted median lifetime is at least `threshold_days`.
    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.class_score(x)? > 0.5))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ForestFile { format: FORMAT.into(), version: VERSION, classifier: self.clone() };
        std::fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ForestFile = serde_json::from_slice(&std::fs::read(path)?)?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::Format(format!(
                "{}: expected {FORMAT} v{VERSION}, found {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        if file.classifier.trees.is_empty() {
            return Err(Error::Format("forest has no trees".into()));
        }
        Ok(file.classifier)
    }
}
