//! Survival analysis: product-limit curves, the two-sample log-rank
//! statistic, log-rank split survival trees and the forest classifier.

mod forest;
mod tree;

pub use forest::{ChurnClassifier, ForestConfig, ScoreParts};
pub use tree::{Node, SurvivalTree};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: `(time, event)`; `event = false` means right-censored.
pub type Observation = (f64, bool);

/// Right-continuous step function; `S(t) = 1` before the first grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub probs: Vec<f64>,
}

impl SurvivalCurve {
    /// `S(t)`: value at the largest grid time `<= t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&g| g <= t);
        if k == 0 {
            1.0
        } else {
            self.probs[k - 1]
        }
    }

    /// Left limit `S(t-)`: value at the largest grid time `< t`.
    pub fn before(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&g| g < t);
        if k == 0 {
            1.0
        } else {
            self.probs[k - 1]
        }
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Smallest grid time with `S(t) <= 0.5`; the last grid time when the curve
    /// never gets there (`truncated = true`). An empty grid yields `0`.
    pub fn median(&self) -> Median {
        match self.probs.iter().position(|&p| p <= 0.5) {
            Some(i) => Median { days: self.times[i], truncated: false },
            None => Median { days: self.last_time().unwrap_or(0.0), truncated: true },
        }
    }

    /// Continuous class score at `threshold`: the left limit `S(threshold-)`,
    /// capped at 0.5 when the grid ends before the threshold without crossing.
    /// `median >= threshold` holds exactly when this exceeds 0.5.
    pub fn score(&self, threshold: f64) -> f64 {
        let s = self.before(threshold);
        match self.last_time() {
            Some(t) if t >= threshold => s,
            _ => s.min(0.5),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.times.len() == self.probs.len()
            && self.times.windows(2).all(|w| w[0] < w[1])
            && self.probs.windows(2).all(|w| w[0] >= w[1])
            && self.probs.iter().all(|p| (0.0..=1.0).contains(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Median {
    pub days: f64,
    pub truncated: bool,
}

/// Kaplan–Meier product-limit estimate. The grid holds every distinct observed
/// time, so censored-only times carry the running value forward.
pub fn km_estimate(obs: &[Observation]) -> Result<SurvivalCurve> {
    if obs.is_empty() {
        return Err(Error::Empty("km_estimate needs at least one observation"));
    }
    if obs.iter().any(|(t, _)| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::config("survival times must be finite and non-negative"));
    }
    let mut sorted = obs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(km_sorted(&sorted))
}

/// KM over observations already sorted by time.
pub(crate) fn km_sorted(sorted: &[Observation]) -> SurvivalCurve {
    let mut times = Vec::new();
    let mut probs = Vec::new();
    let mut at_risk = sorted.len();
    let mut s = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut deaths = 0usize;
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == t {
            deaths += sorted[j].1 as usize;
            j += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
        }
        times.push(t);
        probs.push(s);
        at_risk -= j - i;
        i = j;
    }
    SurvivalCurve { times, probs }
}

/// Squared standardized two-sample log-rank statistic (chi-square form).
/// Degenerate inputs (no events, zero variance) give 0.
pub fn logrank_statistic(group_a: &[Observation], group_b: &[Observation]) -> f64 {
    let mut pooled: Vec<(f64, bool, bool)> = group_a
        .iter()
        .map(|&(t, e)| (t, e, true))
        .chain(group_b.iter().map(|&(t, e)| (t, e, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    logrank_sorted(pooled.iter().copied(), group_a.len(), pooled.len())
}

/// Log-rank over `(time, event, in_a)` triples sorted by time.
pub(crate) fn logrank_sorted<I>(sorted: I, n_a_total: usize, n_total: usize) -> f64
where
    I: IntoIterator<Item = (f64, bool, bool)>,
{
    let mut n = n_total as f64;
    let mut n_a = n_a_total as f64;
    let mut diff = 0.0;
    let mut var = 0.0;

    let mut cur_t = f64::NAN;
    let (mut d, mut d_a, mut m, mut m_a) = (0.0, 0.0, 0.0, 0.0);
    let mut flush = |d: f64, d_a: f64, m: f64, m_a: f64, n: &mut f64, n_a: &mut f64| {
        if d > 0.0 {
            let frac = *n_a / *n;
            diff += d_a - d * frac;
            if *n > 1.0 {
                var += d * frac * (1.0 - frac) * (*n - d) / (*n - 1.0);
            }
        }
        *n -= m;
        *n_a -= m_a;
    };
    for (t, event, in_a) in sorted {
        if t != cur_t {
            if m > 0.0 {
                flush(d, d_a, m, m_a, &mut n, &mut n_a);
            }
            cur_t = t;
            d = 0.0;
            d_a = 0.0;
            m = 0.0;
            m_a = 0.0;
        }
        m += 1.0;
        if in_a {
            m_a += 1.0;
        }
        if event {
            d += 1.0;
            if in_a {
                d_a += 1.0;
            }
        }
    }
    if m > 0.0 {
        flush(d, d_a, m, m_a, &mut n, &mut n_a);
    }
    if var > 0.0 {
        diff * diff / var
    } else {
        0.0
    }
}
