//! Per-user counterfactual search by regularized gradient descent against the
//! forest's class score.
//!
//! The score is piecewise constant, so its gradient is estimated by central
//! finite differences and is zero almost everywhere. When the estimate
//! vanishes while the score is still below target, the iterate jumps to a
//! seeded random point near the current one (at most `max_restarts` times).

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::project_action;
use crate::dataset::FeatureMeta;
use crate::error::{Error, Result};
use crate::recourse::{squared_norm, Method, RecourseAction, Timing};
use crate::seed;
use crate::survival::ChurnClassifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RgdConfig {
    pub max_steps: usize,
    pub step_size: f64,
    pub lambda_distance: f64,
    pub fd_epsilon: f64,
    pub target_score: f64,
    /// The score term stays active until the score clears
    /// `target_score + hinge_margin`; classification needs strictly more
    /// than the target.
    pub hinge_margin: f64,
    pub max_restarts: usize,
    /// Half-width of the uniform jump taken on a restart.
    pub restart_radius: f64,
    pub seed: u64,
}

impl Default for RgdConfig {
    fn default() -> Self {
        Self {
            max_steps: 1000,
            step_size: 0.01,
            lambda_distance: 0.1,
            fd_epsilon: 1e-3,
            target_score: 0.5,
            hinge_margin: 0.01,
            max_restarts: 3,
            restart_radius: 0.1,
            seed: 0,
        }
    }
}

impl RgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 1 {
            return Err(Error::config("max_steps must be >= 1"));
        }
        if !(self.fd_epsilon > 0.0) || !self.fd_epsilon.is_finite() {
            return Err(Error::config("fd_epsilon must be positive"));
        }
        if !(self.step_size > 0.0) || !(self.lambda_distance >= 0.0) || !(self.restart_radius >= 0.0) {
            return Err(Error::config("step_size must be positive; lambda_distance and restart_radius non-negative"));
        }
        Ok(())
    }
}

/// Result of one search, with every iterate when requested.
#[derive(Debug, Clone)]
pub struct Search {
    pub action: RecourseAction,
    pub restarts: usize,
    /// Set when the loss became non-finite and the search was abandoned.
    pub aborted: bool,
    pub iterates: Vec<Vec<f64>>,
}

/// Searches for a counterfactual for one churn-predicted user.
pub fn rgd_counterfactual(
    c: &ChurnClassifier,
    user_id: &str,
    x: &[f64],
    meta: &[FeatureMeta],
    cfg: &RgdConfig,
) -> Result<RecourseAction> {
    Ok(search(c, user_id, x, meta, cfg, Instant::now(), false)?.action)
}

/// As [`rgd_counterfactual`], keeping every iterate (iterate 0 is `x`).
pub fn rgd_trace(
    c: &ChurnClassifier,
    x: &[f64],
    meta: &[FeatureMeta],
    cfg: &RgdConfig,
) -> Result<Search> {
    search(c, "", x, meta, cfg, Instant::now(), true)
}

/// Recourse for every denied user, in input order, in parallel. User `i`
/// searches with seed `mix(cfg.seed, i)`; already-retained users are skipped.
pub fn rgd_batch(
    c: &ChurnClassifier,
    users: &[(&str, &[f64])],
    meta: &[FeatureMeta],
    cfg: &RgdConfig,
) -> Result<Vec<RecourseAction>> {
    cfg.validate()?;
    let epoch = Instant::now();
    let found: Vec<Option<RecourseAction>> = users
        .par_iter()
        .enumerate()
        .map(|(i, (id, x))| {
            if c.classify(x)? != 0 {
                return Ok(None);
            }
            let user_cfg = RgdConfig { seed: seed::mix(cfg.seed, i as u64), ..cfg.clone() };
            Ok(Some(search(c, id, x, meta, &user_cfg, epoch, false)?.action))
        })
        .collect::<Result<_>>()?;
    Ok(found.into_iter().flatten().collect())
}

fn search(
    c: &ChurnClassifier,
    user_id: &str,
    x: &[f64],
    meta: &[FeatureMeta],
    cfg: &RgdConfig,
    epoch: Instant,
    keep: bool,
) -> Result<Search> {
    cfg.validate()?;
    Error::check_dim(meta.len(), x.len())?;
    Error::check_dim(c.n_features, x.len())?;
    let pre_class = c.classify(x)?;
    if pre_class != 0 {
        return Err(Error::NotApplicable(format!("user {user_id} is already predicted to stay")));
    }
    let started = Instant::now();
    let f = x.len();
    let mut rng = seed::rng(cfg.seed);
    let hinge_target = cfg.target_score + cfg.hinge_margin;

    let mut delta = vec![0.0; f];
    let mut current = x.to_vec();
    let mut iterates = if keep { vec![current.clone()] } else { Vec::new() };
    let mut restarts = 0;
    let mut aborted = false;
    let mut steps = 0;
    let mut post_class = 0;
    let mut probe = current.clone();
    let mut grad = vec![0.0; f];

    while steps < cfg.max_steps {
        steps += 1;
        let score = c.class_score(&current)?;
        let gap = hinge_target - score;
        let loss = gap.max(0.0).powi(2) + cfg.lambda_distance * squared_norm(&delta);
        if !loss.is_finite() {
            aborted = true;
            break;
        }

        let mut score_grad_zero = true;
        for j in 0..f {
            // central difference on the score alone; the distance term is analytic
            let dscore = if gap > 0.0 && meta[j].actionable {
                probe[j] = current[j] + cfg.fd_epsilon;
                let up = c.class_score(&probe)?;
                probe[j] = current[j] - cfg.fd_epsilon;
                let down = c.class_score(&probe)?;
                probe[j] = current[j];
                (up - down) / (2.0 * cfg.fd_epsilon)
            } else {
                0.0
            };
            if dscore != 0.0 {
                score_grad_zero = false;
            }
            grad[j] = -2.0 * gap.max(0.0) * dscore + 2.0 * cfg.lambda_distance * delta[j];
        }

        let raw: Vec<f64> = if gap > 0.0 && score_grad_zero && restarts < cfg.max_restarts {
            restarts += 1;
            delta
                .iter()
                .map(|d| d + rng.gen_range(-cfg.restart_radius..=cfg.restart_radius))
                .collect()
        } else {
            delta.iter().zip(&grad).map(|(d, g)| d - cfg.step_size * g).collect()
        };
        if raw.iter().any(|v| !v.is_finite()) {
            aborted = true;
            break;
        }
        delta = project_action(x, &raw, meta)?;
        for j in 0..f {
            current[j] = x[j] + delta[j];
        }
        probe.copy_from_slice(&current);
        if keep {
            iterates.push(current.clone());
        }
        if c.classify(&current)? == 1 {
            post_class = 1;
            break;
        }
    }
    let timing = Timing::since(epoch, started);
    Ok(Search {
        action: RecourseAction {
            user_id: user_id.to_string(),
            cost_sq: squared_norm(&delta),
            delta,
            counterfactual: current,
            pre_class,
            post_class,
            method: Method::Rgd,
            steps,
            timing,
        },
        restarts,
        aborted,
        iterates,
    })
}
