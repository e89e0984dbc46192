//! Auditing exports: PCA scatter of users before and after recourse, and
//! histograms of recourse cost split by efficacy or true outcome.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recourse::RecourseAction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Unit-norm, mutually orthogonal, by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Share of the total variance carried by each kept component.
    pub explained_share: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), x.len())?;
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }
}

/// Mean-centred PCA keeping the top `k` components. The largest-magnitude
/// entry of each component is positive.
pub fn fit_pca(rows: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    if rows.len() < 2 {
        return Err(Error::Empty("PCA needs at least two rows"));
    }
    let d = rows[0].len();
    if d < 2 {
        return Err(Error::config("PCA needs at least two columns"));
    }
    if k == 0 || k > d {
        return Err(Error::config(format!("PCA component count {k} must lie in 1..={d}")));
    }
    for r in rows {
        Error::check_dim(d, r.len())?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("PCA input contains a non-finite value"));
        }
    }
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let centred = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j] - mean[j]);
    let cov = (centred.transpose() * &centred) / (n - 1.0);
    let total = cov.trace();
    if total <= 0.0 {
        return Err(Error::config("PCA input has zero variance (all rows identical)"));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let pivot = c.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for v in c.iter_mut() {
            *v *= sign / norm;
        }
        components.push(c);
        explained_variance.push(eig.eigenvalues[i].max(0.0));
    }
    let explained_share = explained_variance.iter().map(|v| v / total).collect();
    Ok(PcaModel { mean, components, explained_variance, explained_share })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pre,
    Post,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub user_id: String,
    pub pc1: f64,
    pub pc2: f64,
    pub phase: Phase,
    /// True outcome; `None` when censored before the threshold.
    pub y: Option<u8>,
    pub post_class: u8,
}

/// Two rows per action: the original features and the counterfactual.
/// `originals[i]` and `truths[i]` belong to `actions[i]`.
pub fn build_scatter(
    actions: &[RecourseAction],
    originals: &[&[f64]],
    truths: &[Option<u8>],
    pca: &PcaModel,
) -> Result<Vec<ScatterRow>> {
    Error::check_dim(actions.len(), originals.len())?;
    Error::check_dim(actions.len(), truths.len())?;
    if pca.components.len() < 2 {
        return Err(Error::config("scatter needs a PCA with at least two components"));
    }
    let mut out = Vec::with_capacity(2 * actions.len());
    for ((a, x), y) in actions.iter().zip(originals).zip(truths) {
        for (phase, v) in [(Phase::Pre, *x), (Phase::Post, a.counterfactual.as_slice())] {
            let p = pca.project(v)?;
            out.push(ScatterRow { user_id: a.user_id.clone(), pc1: p[0], pc2: p[1], phase, y: *y, post_class: a.post_class });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitBy {
    Efficacy,
    TrueOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin edges, `n_bins + 1` of them.
    pub edges: Vec<f64>,
    /// Group name and per-bin counts.
    pub groups: Vec<(String, Vec<usize>)>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.groups.iter().flat_map(|(_, c)| c).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(["bin_lo", "bin_hi", "group", "count"])?;
        for (name, counts) in &self.groups {
            for (i, c) in counts.iter().enumerate() {
                w.write_record([
                    format!("{:?}", self.edges[i]),
                    format!("{:?}", self.edges[i + 1]),
                    name.clone(),
                    c.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub const DEFAULT_BINS: usize = 20;

fn group_name(a: &RecourseAction, truth: Option<u8>, split: SplitBy) -> &'static str {
    match split {
        SplitBy::Efficacy if a.succeeded() => "success",
        SplitBy::Efficacy => "failure",
        SplitBy::TrueOutcome => match truth {
            Some(1) => "retained",
            Some(_) => "churned",
            None => "indeterminate",
        },
    }
}

/// Fixed-width histograms of squared recourse cost (or of one feature's
/// squared delta) over the observed range.
pub fn cost_histograms(
    actions: &[RecourseAction],
    truths: &[Option<u8>],
    feature_index: Option<usize>,
    split_by: SplitBy,
    n_bins: usize,
) -> Result<Histogram> {
    if actions.is_empty() {
        return Err(Error::Empty("no actions to histogram"));
    }
    if n_bins == 0 {
        return Err(Error::config("histograms need at least one bin"));
    }
    Error::check_dim(actions.len(), truths.len())?;
    let costs: Vec<f64> = actions
        .iter()
        .map(|a| match feature_index {
            Some(i) => a.delta.get(i).map(|d| d * d).ok_or(Error::Dimension { expected: i + 1, got: a.delta.len() }),
            None => Ok(a.cost_sq),
        })
        .collect::<Result<_>>()?;
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..n_bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);

    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for ((a, &t), &c) in actions.iter().zip(truths).zip(&costs) {
        let name = group_name(a, t, split_by);
        let bin = (((c - lo) / width) as usize).min(n_bins - 1);
        match groups.iter_mut().find(|(g, _)| g == name) {
            Some((_, counts)) => counts[bin] += 1,
            None => {
                let mut counts = vec![0; n_bins];
                counts[bin] = 1;
                groups.push((name.to_string(), counts));
            }
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(Histogram { edges, groups })
}

pub fn write_scatter(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(["user_id", "pc1", "pc2", "phase", "y", "post_class"])?;
    for r in rows {
        w.write_record([
            r.user_id.clone(),
            format!("{:?}", r.pc1),
            format!("{:?}", r.pc2),
            match r.phase {
                Phase::Pre => "pre".into(),
                Phase::Post => "post".into(),
            },
            r.y.map_or_else(String::new, |y| y.to_string()),
            r.post_class.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
