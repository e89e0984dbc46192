use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{km_sorted, logrank_sorted, SurvivalCurve};

/// Statistics at or below this are treated as "no improvement" (rounding noise).
const MIN_STATISTIC: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        statistic: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        n: usize,
        curve: SurvivalCurve,
    },
}

/// Flat arena of nodes; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    pub nodes: Vec<Node>,
}

pub(crate) struct TrainView<'a> {
    pub features: &'a [Vec<f64>],
    pub times: &'a [f64],
    pub events: &'a [bool],
}

pub(crate) struct GrowParams {
    pub min_leaf_size: usize,
    pub features_per_split: usize,
    /// 0 offers every midpoint.
    pub max_split_candidates: usize,
}

impl SurvivalTree {
    /// Grows a tree over `sample` (row indices into `view`, duplicates allowed).
    pub(crate) fn grow<R: Rng>(
        view: &TrainView<'_>,
        mut sample: Vec<usize>,
        params: &GrowParams,
        rng: &mut R,
    ) -> Self {
        sample.sort_by(|&a, &b| view.times[a].total_cmp(&view.times[b]).then(a.cmp(&b)));
        let mut tree = SurvivalTree { nodes: Vec::new() };
        tree.grow_node(view, sample, params, rng);
        tree
    }

    fn grow_node<R: Rng>(
        &mut self,
        view: &TrainView<'_>,
        idx: Vec<usize>,
        params: &GrowParams,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        // placeholder, replaced below
        self.nodes.push(Node::Leaf { n: 0, curve: SurvivalCurve { times: vec![], probs: vec![] } });

        match best_split(view, &idx, params, rng) {
            Some(best) => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| view.features[i][best.feature] <= best.threshold);
                let left = self.grow_node(view, left_idx, params, rng);
                let right = self.grow_node(view, right_idx, params, rng);
                self.nodes[id] = Node::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    statistic: best.statistic,
                    left,
                    right,
                };
            }
            None => {
                let obs: Vec<_> = idx.iter().map(|&i| (view.times[i], view.events[i])).collect();
                self.nodes[id] = Node::Leaf { n: idx.len(), curve: km_sorted(&obs) };
            }
        }
        id
    }

    pub fn leaf(&self, x: &[f64]) -> &SurvivalCurve {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split { feature, threshold, left, right, .. } => {
                    id = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { curve, .. } => return curve,
            }
        }
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub statistic: f64,
}

/// Midpoint thresholds for one feature that keep both children at least
/// `min_leaf` records, thinned to `max_candidates` evenly spaced entries.
pub(crate) fn candidate_thresholds(
    values: &mut [f64],
    min_leaf: usize,
    max_candidates: usize,
) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut out = Vec::new();
    for k in 0..n.saturating_sub(1) {
        let (a, b) = (values[k], values[k + 1]);
        let n_left = k + 1;
        if a < b && n_left >= min_leaf && n - n_left >= min_leaf {
            let thr = a + (b - a) / 2.0;
            if a < thr && thr < b {
                out.push(thr);
            }
        }
    }
    if max_candidates > 0 && out.len() > max_candidates {
        let last = out.len() - 1;
        let mut thinned: Vec<f64> = (0..max_candidates)
            .map(|i| out[(i * last + (max_candidates - 1) / 2) / (max_candidates - 1).max(1)])
            .collect();
        thinned.dedup();
        out = thinned;
    }
    out
}

/// Best (feature, threshold) over a random feature subset; `idx` must be
/// sorted by time. Ties keep the lowest feature index, then the smallest threshold.
pub(crate) fn best_split<R: Rng>(
    view: &TrainView<'_>,
    idx: &[usize],
    params: &GrowParams,
    rng: &mut R,
) -> Option<SplitChoice> {
    let n = idx.len();
    if n < 2 * params.min_leaf_size || n < 2 {
        return None;
    }
    let n_features = view.features[idx[0]].len();
    let m = params.features_per_split.clamp(1, n_features);
    let mut feats = index::sample(rng, n_features, m).into_vec();
    feats.sort_unstable();

    let mut best: Option<SplitChoice> = None;
    let mut values = Vec::with_capacity(n);
    for f in feats {
        values.clear();
        values.extend(idx.iter().map(|&i| view.features[i][f]));
        for thr in candidate_thresholds(&mut values, params.min_leaf_size, params.max_split_candidates)
        {
            let n_left = idx.iter().filter(|&&i| view.features[i][f] <= thr).count();
            let stat = logrank_sorted(
                idx.iter()
                    .map(|&i| (view.times[i], view.events[i], view.features[i][f] <= thr)),
                n_left,
                n,
            );
            if stat > MIN_STATISTIC && best.is_none_or(|b| stat > b.statistic) {
                best = Some(SplitChoice { feature: f, threshold: thr, statistic: stat });
            }
        }
    }
    best
}
