mod common;

use churn_recourse::metrics::{self, EvaluationReport, ReportInputs};
use churn_recourse::recourse::Method;
use proptest::prelude::*;

#[test]
fn fixtures_match_hand_computed_values() {
    let fixtures = common::metric_fixtures();
    assert_eq!(fixtures.len(), 5);
    let bad: Vec<String> = fixtures.iter().flat_map(common::check_metric_fixture).collect();
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn report_rows_agree_with_the_fixtures() {
    for f in common::metric_fixtures() {
        let labelled: Vec<(u8, u8)> =
            f.pred.iter().zip(&f.labels).filter_map(|(p, y)| y.map(|y| (*p, y))).collect();
        let r = EvaluationReport::build(&ReportInputs {
            method: Method::Gan,
            n_trees: 1,
            labelled: &labelled,
            predictions: &f.pred,
            actions: &f.actions,
            action_labels: &f.action_labels,
            discriminator: None,
        })
        .unwrap();
        assert_eq!(r.model_accuracy_all.value, f.accuracy.map(|a| a.value()), "{}", f.name);
        assert_eq!(r.model_accuracy_y0.value, f.accuracy_y0.map(|a| a.value()), "{}", f.name);
        assert_eq!(r.percent_denied.value, Some(f.denied.value()), "{}", f.name);
        assert_eq!(r.percent_successful_recourse.value, f.success.map(|a| a.value()), "{}", f.name);
        assert_eq!(r.post_recourse_classifier_accuracy.value, f.post_accuracy.map(|a| a.value()), "{}", f.name);
        assert_eq!(r.mean_cost_successful.value, metrics::mean_cost_successful(&f.actions), "{}", f.name);
        assert!(r.discriminator_accuracy_real.value.is_none());
    }
}

#[test]
fn mismatched_or_empty_inputs_are_errors() {
    assert!(metrics::accuracy(&[], &[]).is_err());
    assert!(metrics::accuracy(&[1, 0], &[1]).is_err());
    assert!(metrics::percent_denied(&[]).is_err());
    let mut a = common::action("u", &[1.0], 1, (0.0, 1.0));
    a.pre_class = 1;
    assert!(metrics::percent_successful_recourse(&[a]).is_err());
    assert!(metrics::mean_clock_time(&[]).is_err());
}

proptest! {
    #[test]
    fn cost_partition_identity(rows in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 3), any::<bool>()), 1..40)) {
        let actions: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, (d, ok))| common::action(&i.to_string(), d, u8::from(*ok), (0.0, 1.0)))
            .collect();
        let n_success = actions.iter().filter(|a| a.succeeded()).count() as f64;
        let total: f64 = actions.iter().map(|a| a.cost_sq).sum();
        let mean = metrics::mean_cost_successful(&actions).unwrap_or(0.0);
        let lhs = mean * n_success + metrics::cumulative_cost_denied(&actions);
        prop_assert!((lhs - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn success_and_failure_partition_the_denied(posts in prop::collection::vec(0u8..2, 1..50)) {
        let actions: Vec<_> = posts.iter().enumerate().map(|(i, p)| common::action(&i.to_string(), &[0.1], *p, (0.0, 1.0))).collect();
        let f = metrics::percent_successful_recourse(&actions).unwrap().unwrap();
        prop_assert_eq!(f.n, actions.len());
        prop_assert_eq!(f.hits, posts.iter().filter(|p| **p == 1).count());
    }
}
