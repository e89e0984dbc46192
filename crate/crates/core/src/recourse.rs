//! Recourse actions shared by the GAN and gradient-descent paths.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMeta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gan,
    Rgd,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Gan => "gan",
            Method::Rgd => "rgd",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseAction {
    pub user_id: String,
    pub delta: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub pre_class: u8,
    pub post_class: u8,
    /// `‖delta‖²`
    pub cost_sq: f64,
    pub method: Method,
    /// Optimizer steps taken (1 for a generator pass).
    pub steps: usize,
    /// Wall-clock interval of the recourse computation, in seconds from the
    /// batch start.
    pub timing: Timing,
}

impl RecourseAction {
    pub fn succeeded(&self) -> bool {
        self.post_class == 1
    }

    pub fn l2(&self) -> f64 {
        self.cost_sq.sqrt()
    }

    /// Features sorted by descending `|delta|`, skipping unchanged ones.
    pub fn changes(&self, original: &[f64], meta: &[FeatureMeta]) -> Vec<FeatureChange> {
        let mut out: Vec<FeatureChange> = self
            .delta
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(i, &d)| FeatureChange {
                name: meta.get(i).map_or_else(|| format!("f{i}"), |m| m.name.clone()),
                index: i,
                original: original[i],
                required: self.counterfactual[i],
                delta: d,
            })
            .collect();
        out.sort_by(|a, b| b.delta.abs().total_cmp(&a.delta.abs()).then(a.index.cmp(&b.index)));
        out
    }
}

pub fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|d| d * d).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureChange {
    pub name: String,
    pub index: usize,
    pub original: f64,
    pub required: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub start: f64,
    pub end: f64,
}

impl Timing {
    pub fn seconds(&self) -> f64 {
        self.end - self.start
    }

    /// Interval of `started..now` measured from `epoch`.
    pub fn since(epoch: Instant, started: Instant) -> Self {
        let end = Instant::now();
        Timing {
            start: started.duration_since(epoch).as_secs_f64(),
            end: end.duration_since(epoch).as_secs_f64(),
        }
    }
}

/// Text rendering of the largest changes, in the Original / Required layout.
pub fn format_changes(changes: &[FeatureChange], top: usize) -> String {
    let width = changes.iter().take(top).map(|c| c.name.len()).max().unwrap_or(8).max(18);
    let mut s = format!("{:<width$}  {:>10}  {:>10}\n", "Features to change", "Original", "Required");
    for c in changes.iter().take(top) {
        s.push_str(&format!("{:<width$}  {:>10.4}  {:>10.4}\n", c.name, c.original, c.required));
    }
    s
}
