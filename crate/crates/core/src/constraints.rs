//! Actionability, direction and bound constraints on recourse deltas.

use serde::{Deserialize, Serialize};

use crate::dataset::{Direction, FeatureMeta};
use crate::error::{Error, Result};

/// Projects a raw delta onto the feasible set for `x`: non-actionable entries
/// are zeroed, directional entries clamped to their sign, and `x + delta`
/// clamped into the feature bounds.
pub fn project_action(x: &[f64], raw_delta: &[f64], meta: &[FeatureMeta]) -> Result<Vec<f64>> {
    Ok(project_with_mask(x, raw_delta, meta)?.0)
}

/// How the projection treated one coordinate of the raw delta.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    /// Left untouched.
    Open,
    /// Non-actionable feature, forced to zero.
    Locked,
    /// Raised to meet a direction or lower bound (the raw value was too low).
    Low,
    /// Lowered to meet a direction or upper bound (the raw value was too high).
    High,
}

/// As [`project_action`], also reporting how each coordinate was clamped.
pub fn project_with_mask(
    x: &[f64],
    raw_delta: &[f64],
    meta: &[FeatureMeta],
) -> Result<(Vec<f64>, Vec<Clamp>)> {
    Error::check_dim(meta.len(), x.len())?;
    Error::check_dim(meta.len(), raw_delta.len())?;
    let mut delta = Vec::with_capacity(x.len());
    let mut clamps = Vec::with_capacity(x.len());
    for ((&xi, &di), m) in x.iter().zip(raw_delta).zip(meta) {
        if !m.actionable {
            delta.push(0.0);
            clamps.push(Clamp::Locked);
            continue;
        }
        let mut d = match m.direction {
            Direction::Free => di,
            Direction::IncreaseOnly => di.max(0.0),
            Direction::DecreaseOnly => di.min(0.0),
        };
        let target = (xi + d).clamp(m.lower_bound, m.upper_bound);
        if target != xi + d {
            d = target - xi;
            // the subtraction can round x + d one ulp past the bound
            while xi + d > m.upper_bound {
                d = d.next_down();
            }
            while xi + d < m.lower_bound {
                d = d.next_up();
            }
        }
        // x itself outside the bounds can push the clamp against the direction
        d = match m.direction {
            Direction::IncreaseOnly if d < 0.0 => 0.0,
            Direction::DecreaseOnly if d > 0.0 => 0.0,
            _ => d,
        };
        clamps.push(if d == di {
            Clamp::Open
        } else if d > di {
            Clamp::Low
        } else {
            Clamp::High
        });
        delta.push(d);
    }
    Ok((delta, clamps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NotActionable,
    Direction,
    Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub feature: String,
    pub kind: ViolationKind,
    pub original: f64,
    pub value: f64,
}

/// Every constraint broken by moving from `original` to `edited`.
pub fn violations(original: &[f64], edited: &[f64], meta: &[FeatureMeta]) -> Result<Vec<Violation>> {
    Error::check_dim(meta.len(), original.len())?;
    Error::check_dim(meta.len(), edited.len())?;
    let mut out = Vec::new();
    for (index, ((&o, &v), m)) in original.iter().zip(edited).zip(meta).enumerate() {
        let mut push = |kind| {
            out.push(Violation { index, feature: m.name.clone(), kind, original: o, value: v })
        };
        let d = v - o;
        if !m.actionable && d != 0.0 {
            push(ViolationKind::NotActionable);
        }
        match m.direction {
            Direction::IncreaseOnly if d < 0.0 => push(ViolationKind::Direction),
            Direction::DecreaseOnly if d > 0.0 => push(ViolationKind::Direction),
            _ => {}
        }
        if !m.contains(v) {
            push(ViolationKind::Bounds);
        }
    }
    Ok(out)
}

/// `true` when `delta` applied to `x` satisfies every constraint exactly.
pub fn is_feasible(x: &[f64], delta: &[f64], meta: &[FeatureMeta]) -> bool {
    if x.len() != meta.len() || delta.len() != meta.len() {
        return false;
    }
    x.iter().zip(delta).zip(meta).all(|((&xi, &d), m)| {
        (m.actionable || d == 0.0)
            && match m.direction {
                Direction::IncreaseOnly => d >= 0.0,
                Direction::DecreaseOnly => d <= 0.0,
                Direction::Free => true,
            }
            && m.contains(xi + d)
    })
}
