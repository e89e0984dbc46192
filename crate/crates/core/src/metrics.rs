//! Evaluation metrics for churn classifiers and recourse methods, and the
//! two report tables (classifier/discriminator accuracy; recourse efficacy,
//! cost and compute time).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recourse::{Method, RecourseAction, Timing};

/// An exact ratio `hits / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub hits: usize,
    pub n: usize,
}

impl Fraction {
    pub fn value(&self) -> f64 {
        self.hits as f64 / self.n as f64
    }
}

/// `(1/n) Σ 1(y_i = ŷ_i)`.
pub fn accuracy(pred: &[u8], truth: &[u8]) -> Result<Fraction> {
    if pred.is_empty() {
        return Err(Error::Empty("accuracy needs at least one prediction"));
    }
    Error::check_dim(truth.len(), pred.len())?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(Fraction { hits, n: pred.len() })
}

/// Share of applicants predicted to churn (`ŷ = 0`).
pub fn percent_denied(pred: &[u8]) -> Result<Fraction> {
    if pred.is_empty() {
        return Err(Error::Empty("percent_denied needs at least one prediction"));
    }
    Ok(Fraction { hits: pred.iter().filter(|&&p| p == 0).count(), n: pred.len() })
}

/// Share of denied applicants whose counterfactual is classified 1.
/// `None` when there are no denied applicants.
pub fn percent_successful_recourse(actions: &[RecourseAction]) -> Result<Option<Fraction>> {
    if actions.iter().any(|a| a.pre_class != 0) {
        return Err(Error::NotApplicable("action for a user not predicted to churn".into()));
    }
    if actions.is_empty() {
        return Ok(None);
    }
    Ok(Some(Fraction {
        hits: actions.iter().filter(|a| a.succeeded()).count(),
        n: actions.len(),
    }))
}

/// Mean `‖a‖²` over successful actions; `None` when none succeeded.
pub fn mean_cost_successful(actions: &[RecourseAction]) -> Option<f64> {
    mean(actions.iter().filter(|a| a.succeeded()).map(|a| a.cost_sq))
}

/// `Σ ‖a‖²` over unsuccessful actions.
pub fn cumulative_cost_denied(actions: &[RecourseAction]) -> f64 {
    actions.iter().filter(|a| !a.succeeded()).map(|a| a.cost_sq).sum()
}

/// Unsquared companion of [`mean_cost_successful`].
pub fn mean_l2_successful(actions: &[RecourseAction]) -> Option<f64> {
    mean(actions.iter().filter(|a| a.succeeded()).map(|a| a.l2()))
}

/// Unsquared companion of [`cumulative_cost_denied`].
pub fn cumulative_l2_denied(actions: &[RecourseAction]) -> f64 {
    actions.iter().filter(|a| !a.succeeded()).map(|a| a.l2()).sum()
}

pub fn mean_clock_time(timings: &[Timing]) -> Result<f64> {
    if timings.is_empty() {
        return Err(Error::Empty("mean_clock_time needs at least one timing"));
    }
    if let Some(t) = timings.iter().find(|t| !(t.end >= t.start)) {
        return Err(Error::config(format!("timing ends before it starts: {t:?}")));
    }
    Ok(timings.iter().map(Timing::seconds).sum::<f64>() / timings.len() as f64)
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// A metric value with its denominator; `value = None` means not applicable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: Option<f64>,
    pub n: usize,
}

impl Measured {
    fn of(f: Option<Fraction>, n: usize) -> Self {
        Measured { value: f.map(|f| f.value()), n }
    }

    fn cell(&self, decimals: usize, percent: bool) -> String {
        match self.value {
            Some(v) if percent => format!("{:.*}%", decimals, v * 100.0),
            Some(v) => format!("{v:.decimals$}"),
            None => "n/a".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: Method,
    pub n_trees: usize,
    pub model_accuracy_all: Measured,
    pub model_accuracy_y0: Measured,
    pub discriminator_accuracy_real: Measured,
    pub discriminator_accuracy_fake: Measured,
    pub post_recourse_classifier_accuracy: Measured,
    pub percent_denied: Measured,
    pub percent_successful_recourse: Measured,
    pub mean_cost_successful: Measured,
    pub cumulative_cost_denied: Measured,
    pub mean_l2_successful: Measured,
    pub cumulative_l2_denied: Measured,
    pub mean_clock_time_seconds: Measured,
}

/// Everything needed to fill one report row.
pub struct ReportInputs<'a> {
    pub method: Method,
    pub n_trees: usize,
    /// `(prediction, label)` over users with determinate labels.
    pub labelled: &'a [(u8, u8)],
    /// Predictions over every applicant in the split.
    pub predictions: &'a [u8],
    /// One action per denied applicant.
    pub actions: &'a [RecourseAction],
    /// True label per action (`None` when indeterminate).
    pub action_labels: &'a [Option<u8>],
    /// Discriminator accuracy on the denied users before and after recourse.
    pub discriminator: Option<(Fraction, Fraction)>,
}

impl EvaluationReport {
    pub fn build(inp: &ReportInputs<'_>) -> Result<Self> {
        Error::check_dim(inp.actions.len(), inp.action_labels.len())?;
        let (pred, truth): (Vec<u8>, Vec<u8>) = inp.labelled.iter().copied().unzip();
        let acc_all = accuracy(&pred, &truth).ok();
        let (p0, t0): (Vec<u8>, Vec<u8>) =
            inp.labelled.iter().copied().filter(|&(_, y)| y == 0).unzip();
        let acc_y0 = accuracy(&p0, &t0).ok();

        let denied = percent_denied(inp.predictions)?;
        let success = percent_successful_recourse(inp.actions)?;
        let n_success = inp.actions.iter().filter(|a| a.succeeded()).count();
        let n_failed = inp.actions.len() - n_success;

        // Churned users (y = 0) among the denied: share whose counterfactual reaches class 1.
        let y0_posts: Vec<u8> = inp
            .actions
            .iter()
            .zip(inp.action_labels)
            .filter(|(_, y)| **y == Some(0))
            .map(|(a, _)| a.post_class)
            .collect();
        let post_acc = accuracy(&y0_posts, &vec![1; y0_posts.len()]).ok();

        let timings: Vec<Timing> = inp.actions.iter().map(|a| a.timing).collect();
        let (d_real, d_fake) = match inp.discriminator {
            Some((r, f)) => (Measured::of(Some(r), r.n), Measured::of(Some(f), f.n)),
            None => (Measured { value: None, n: 0 }, Measured { value: None, n: 0 }),
        };
        Ok(Self {
            method: inp.method,
            n_trees: inp.n_trees,
            model_accuracy_all: Measured::of(acc_all, pred.len()),
            model_accuracy_y0: Measured::of(acc_y0, p0.len()),
            discriminator_accuracy_real: d_real,
            discriminator_accuracy_fake: d_fake,
            post_recourse_classifier_accuracy: Measured::of(post_acc, y0_posts.len()),
            percent_denied: Measured::of(Some(denied), denied.n),
            percent_successful_recourse: Measured::of(success, inp.actions.len()),
            mean_cost_successful: Measured { value: mean_cost_successful(inp.actions), n: n_success },
            cumulative_cost_denied: Measured { value: Some(cumulative_cost_denied(inp.actions)), n: n_failed },
            mean_l2_successful: Measured { value: mean_l2_successful(inp.actions), n: n_success },
            cumulative_l2_denied: Measured { value: Some(cumulative_l2_denied(inp.actions)), n: n_failed },
            mean_clock_time_seconds: Measured { value: mean_clock_time(&timings).ok(), n: timings.len() },
        })
    }

    fn label(&self) -> &'static str {
        match self.method {
            Method::Gan => "via GANs",
            Method::Rgd => "via RGD",
        }
    }
}

/// Accuracy table: initial model accuracy, discriminator accuracy and
/// post-recourse classifier accuracy per (method, forest size).
pub fn accuracy_table(rows: &[EvaluationReport]) -> String {
    let mut s = format!(
        "{:<10} {:>6} {:>22} {:>22} {:>14}\n",
        "Model", "Trees", "Accuracy (all / y=0)", "D acc (real / fake)", "Post-recourse"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<10} {:>6} {:>22} {:>22} {:>14}\n",
            r.label(),
            r.n_trees,
            format!("{} / {}", r.model_accuracy_all.cell(3, false), r.model_accuracy_y0.cell(3, false)),
            if r.discriminator_accuracy_real.value.is_some() {
                format!(
                    "{} / {}",
                    r.discriminator_accuracy_real.cell(3, false),
                    r.discriminator_accuracy_fake.cell(3, false)
                )
            } else {
                "-".into()
            },
            r.post_recourse_classifier_accuracy.cell(3, false),
        ));
    }
    s
}

/// Recourse table: % denied, % successful, mean cost of successful actions,
/// cumulative cost of denied recourse and mean compute time.
pub fn recourse_table(rows: &[EvaluationReport]) -> String {
    let mut s = format!(
        "{:<10} {:>6} {:>9} {:>13} {:>11} {:>12} {:>14}\n",
        "Model", "Trees", "% Denied", "% Successful", "Mean Cost", "Cumul. Cost", "Mean Time (s)"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<10} {:>6} {:>9} {:>13} {:>11} {:>12} {:>14}\n",
            r.label(),
            r.n_trees,
            r.percent_denied.cell(1, true),
            r.percent_successful_recourse.cell(1, true),
            r.mean_cost_successful.cell(4, false),
            r.cumulative_cost_denied.cell(2, false),
            r.mean_clock_time_seconds.cell(6, false),
        ));
    }
    s
}
