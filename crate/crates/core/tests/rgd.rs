use churn_recourse::constraints::is_feasible;
use churn_recourse::dataset::{AggregationWindow, Direction, FeatureMeta};
use churn_recourse::rgd::{rgd_batch, rgd_counterfactual, rgd_trace, RgdConfig};
use churn_recourse::seed::mix;
use churn_recourse::survival::{ChurnClassifier, Node, SurvivalCurve, SurvivalTree};
use churn_recourse::Error;
use proptest::prelude::*;

const SPLIT: f64 = 0.5;

/// One tree, one split on feature 0: at or below `SPLIT` the survival just
/// before day 90 is 0.2 (churn), above it 0.9 (retained).
fn toy_forest() -> ChurnClassifier {
    let curve = |p: f64| SurvivalCurve { times: vec![30.0, 200.0], probs: vec![p, p / 2.0] };
    let tree = SurvivalTree {
        nodes: vec![
            Node::Split { feature: 0, threshold: SPLIT, statistic: 1.0, left: 1, right: 2 },
            Node::Leaf { n: 10, curve: curve(0.2) },
            Node::Leaf { n: 10, curve: curve(0.9) },
        ],
    };
    ChurnClassifier::from_trees(vec![tree], 3, 90.0).unwrap()
}

fn meta() -> Vec<FeatureMeta> {
    let m = |name: &str, actionable, direction| FeatureMeta {
        name: name.into(),
        actionable,
        direction,
        lower_bound: 0.0,
        upper_bound: 1.0,
        aggregation_window: AggregationWindow::Other,
    };
    vec![
        m("engagement", true, Direction::IncreaseOnly),
        m("device_tier", false, Direction::Free),
        m("crash_count", true, Direction::DecreaseOnly),
    ]
}

#[test]
fn toy_forest_scores_as_designed() {
    let c = toy_forest();
    assert_eq!(c.classify(&[0.5, 0.0, 0.0]).unwrap(), 0);
    assert_eq!(c.classify(&[0.5000001, 0.0, 0.0]).unwrap(), 1);
    assert_eq!(c.class_score(&[0.1, 0.0, 0.0]).unwrap(), 0.2);
}

#[test]
fn crosses_the_split_from_just_below() {
    let c = toy_forest();
    let x = [0.4995, 0.7, 0.3];
    let a = rgd_counterfactual(&c, "near", &x, &meta(), &RgdConfig::default()).unwrap();
    assert_eq!(a.post_class, 1);
    assert_eq!(c.classify(&a.counterfactual).unwrap(), 1);
    assert!(a.counterfactual[0] > SPLIT);
    assert!(a.steps <= RgdConfig::default().max_steps);
    assert_eq!(a.delta[1], 0.0);
    assert!(a.delta[2] <= 0.0);
}

#[test]
fn nearer_users_pay_less() {
    let c = toy_forest();
    // Wide probes let a user far from the split see it.
    let cfg = RgdConfig { fd_epsilon: 0.3, ..RgdConfig::default() };
    let near = rgd_counterfactual(&c, "near", &[0.45, 0.5, 0.5], &meta(), &cfg).unwrap();
    let far = rgd_counterfactual(&c, "far", &[0.25, 0.5, 0.5], &meta(), &cfg).unwrap();
    assert_eq!((near.post_class, far.post_class), (1, 1));
    assert!(near.cost_sq < far.cost_sq, "{} vs {}", near.cost_sq, far.cost_sq);
    assert!(far.cost_sq >= (SPLIT - 0.25f64).powi(2));
    assert!(near.steps < far.steps);
}

#[test]
fn flat_region_without_restarts_is_denied() {
    let c = toy_forest();
    let cfg = RgdConfig { max_restarts: 0, max_steps: 50, ..RgdConfig::default() };
    let a = rgd_counterfactual(&c, "flat", &[0.1, 0.5, 0.5], &meta(), &cfg).unwrap();
    assert_eq!(a.post_class, 0);
    assert_eq!(a.cost_sq, 0.0);
    assert_eq!(a.steps, 50);
}

#[test]
fn retained_users_and_bad_dimensions_are_errors() {
    let c = toy_forest();
    let cfg = RgdConfig::default();
    assert!(matches!(rgd_counterfactual(&c, "u", &[0.9, 0.0, 0.0], &meta(), &cfg), Err(Error::NotApplicable(_))));
    assert!(matches!(rgd_counterfactual(&c, "u", &[0.1, 0.0], &meta(), &cfg), Err(Error::Dimension { .. })));
    assert!(RgdConfig { fd_epsilon: 0.0, ..cfg }.validate().is_err());
}

#[test]
fn batch_matches_per_user_searches_and_skips_retained() {
    let c = toy_forest();
    let cfg = RgdConfig { seed: 77, ..RgdConfig::default() };
    let xs = [[0.4995, 0.1, 0.2], [0.9, 0.1, 0.2], [0.2, 0.3, 0.4], [0.48, 0.0, 1.0]];
    let users: Vec<(&str, &[f64])> = ["a", "b", "c", "d"].iter().zip(&xs).map(|(id, x)| (*id, x.as_slice())).collect();
    let batch = rgd_batch(&c, &users, &meta(), &cfg).unwrap();
    let ids: Vec<&str> = batch.iter().map(|a| a.user_id.as_str()).collect();
    assert_eq!(ids, ["a", "c", "d"]);
    for a in &batch {
        let i = users.iter().position(|u| u.0 == a.user_id).unwrap();
        let solo = rgd_counterfactual(&c, &a.user_id, users[i].1, &meta(), &RgdConfig { seed: mix(77, i as u64), ..cfg.clone() })
            .unwrap();
        assert_eq!((&solo.delta, solo.post_class, solo.steps), (&a.delta, a.post_class, a.steps));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iterates_start_at_x_and_stay_feasible(
        x0 in 0.0f64..0.5, x1 in 0.0f64..1.0, x2 in 0.0f64..1.0,
        seed in any::<u64>(), eps in prop::sample::select(vec![1e-3, 0.05, 0.3]),
    ) {
        let c = toy_forest();
        let x = [x0, x1, x2];
        let cfg = RgdConfig { seed, fd_epsilon: eps, max_steps: 300, ..RgdConfig::default() };
        let s = rgd_trace(&c, &x, &meta(), &cfg).unwrap();
        prop_assert_eq!(&s.iterates[0], &x.to_vec());
        prop_assert!(s.iterates.len() <= cfg.max_steps + 1);
        prop_assert!(s.restarts <= cfg.max_restarts);
        for it in &s.iterates {
            let d: Vec<f64> = it.iter().zip(&x).map(|(a, b)| a - b).collect();
            prop_assert!(it.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(it[1], x[1]);
            prop_assert!(it[0] >= x[0] && it[2] <= x[2]);
            prop_assert!(is_feasible(&x, &d, &meta()));
        }
        prop_assert!(is_feasible(&x, &s.action.delta, &meta()));
        prop_assert_eq!(s.action.post_class, c.classify(&s.action.counterfactual).unwrap());
    }
}
