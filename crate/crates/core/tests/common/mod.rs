#![allow(dead_code)]

use std::sync::Arc;

use churn_recourse::countergan::{self, CounterGanModel};
use churn_recourse::dataset::Dataset;
use churn_recourse::metrics::{self, Fraction};
use churn_recourse::nn::{bce_logit_grad, bce_with_logit, Activation, Mlp};
use churn_recourse::pipeline::{self, ExperimentConfig};
use churn_recourse::recourse::{Method, RecourseAction, Timing};
use churn_recourse::survival::{km_estimate, logrank_statistic, ChurnClassifier, Observation};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// ---------------------------------------------------------------- survival

/// Product-limit value at `t` by direct counting, independent of the sweep
/// in the implementation.
pub fn km_oracle(obs: &[Observation], t: f64) -> f64 {
    let mut event_times: Vec<f64> = obs.iter().filter(|o| o.1).map(|o| o.0).collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    event_times
        .iter()
        .filter(|&&tj| tj <= t)
        .map(|&tj| {
            let at_risk = obs.iter().filter(|o| o.0 >= tj).count() as f64;
            let deaths = obs.iter().filter(|o| o.0 == tj && o.1).count() as f64;
            1.0 - deaths / at_risk
        })
        .product()
}

/// Largest deviation from the oracle over every event/censor pattern of up
/// to 8 subjects, on distinct, paired and repeating time layouts. Also
/// returns the number of (pattern, time) points checked.
pub fn km_exhaustive_max_error() -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for n in 1..=8usize {
        let layouts: [Vec<f64>; 3] = [
            (0..n).map(|i| (i + 1) as f64).collect(),
            (0..n).map(|i| (i / 2 + 1) as f64).collect(),
            (0..n).map(|i| ((n - i) % 3) as f64 * 2.0 + 1.0).collect(),
        ];
        for times in &layouts {
            for pattern in 0u32..(1 << n) {
                let obs: Vec<Observation> =
                    times.iter().enumerate().map(|(i, &t)| (t, pattern & (1 << i) != 0)).collect();
                let curve = km_estimate(&obs).expect("non-empty input");
                assert!(curve.is_valid());
                let mut probe: Vec<f64> = times.clone();
                probe.extend(times.iter().map(|t| t + 0.5));
                probe.push(0.0);
                for t in probe {
                    worst = worst.max((curve.at(t) - km_oracle(&obs, t)).abs());
                    checked += 1;
                }
            }
        }
    }
    (worst, checked)
}

const E: bool = true;
const C: bool = false;

/// Log-rank chi-square statistics evaluated by hand from the hypergeometric
/// sums: `(Σ O−E)² / Σ V`.
pub fn logrank_fixtures() -> Vec<(Vec<Observation>, Vec<Observation>, f64)> {
    vec![
        // Event times 1, 2 in a; 10, 11 in b. O−E = 7/6, V = 1/4 + 2/9 + 0 + 0.
        (vec![(1.0, E), (2.0, E)], vec![(10.0, E), (11.0, E)], 49.0 / 17.0),
        // One shared time, one event in a: E = 1/2, V = 1/4.
        (vec![(5.0, E)], vec![(5.0, C)], 1.0),
        // Ties and censoring: O−E = 1/6, V = 2/5 + 2/9 + 1/4.
        (vec![(2.0, E), (3.0, C), (5.0, E)], vec![(2.0, E), (4.0, E), (6.0, C)], 5.0 / 157.0),
    ]
}

pub fn logrank_max_error() -> f64 {
    logrank_fixtures()
        .iter()
        .map(|(a, b, want)| (logrank_statistic(a, b) - want).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- gradients

pub const ALL_ACTIVATIONS: [Activation; 4] =
    [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Identity];

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn random_net(rng: &mut ChaCha8Rng, forced: Activation) -> Mlp {
    let depth = rng.gen_range(1..=4);
    let mut sizes = vec![rng.gen_range(1..=6)];
    for _ in 0..depth {
        sizes.push(rng.gen_range(1..=6));
    }
    let forced_at = rng.gen_range(0..depth);
    let acts: Vec<Activation> = (0..depth)
        .map(|l| if l == forced_at { forced } else { ALL_ACTIVATIONS[rng.gen_range(0..4)] })
        .collect();
    Mlp::new(&sizes, &acts, rng).expect("valid shape")
}

/// True when some ReLU pre-activation sits close enough to its kink that a
/// finite-difference probe could straddle it.
fn near_kink(m: &Mlp, x: &[f64]) -> bool {
    let t = m.forward_trace(x).expect("dims match");
    m.layers
        .iter()
        .zip(&t.preactivations)
        .any(|(l, z)| l.activation == Activation::Relu && z.iter().any(|v| v.abs() < 1e-3))
}

fn param(m: &mut Mlp, layer: usize, which: usize, k: usize) -> &mut f64 {
    if which == 0 {
        &mut m.layers[layer].weights[k]
    } else {
        &mut m.layers[layer].bias[k]
    }
}

fn upstream_dot(m: &Mlp, x: &[f64], u: &[f64]) -> f64 {
    m.forward(x).expect("dims match").iter().zip(u).map(|(a, b)| a * b).sum()
}

/// Max relative error between backprop and central differences over
/// `n_nets` random networks (every activation appears in at least
/// `n_nets / 4` of them), for both parameter and input gradients. Also
/// checks the BCE-on-logit path for sigmoid heads.
pub fn gradient_check(n_nets: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut built = 0;
    while built < n_nets {
        let forced = ALL_ACTIVATIONS[built % 4];
        let mut m = random_net(&mut rng, forced);
        let x: Vec<f64> = (0..m.input_dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        if near_kink(&m, &x) {
            continue;
        }
        built += 1;
        let u: Vec<f64> = (0..m.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (grads, dx) = m.backward(&x, &u).expect("dims match");

        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (upstream_dot(&m, &xp, &u) - upstream_dot(&m, &xm, &u)) / (2.0 * h);
            worst = worst.max(rel_err(dx[i], fd));
        }
        for l in 0..m.layers.len() {
            for (which, n) in [(0, m.layers[l].weights.len()), (1, m.layers[l].bias.len())] {
                for k in 0..n {
                    let orig = *param(&mut m, l, which, k);
                    *param(&mut m, l, which, k) = orig + h;
                    let fp = upstream_dot(&m, &x, &u);
                    *param(&mut m, l, which, k) = orig - h;
                    let fm = upstream_dot(&m, &x, &u);
                    *param(&mut m, l, which, k) = orig;
                    let analytic = if which == 0 { grads.layers[l].0[k] } else { grads.layers[l].1[k] };
                    worst = worst.max(rel_err(analytic, (fp - fm) / (2.0 * h)));
                }
            }
        }
    }

    // Sigmoid head trained with BCE on the logit.
    for _ in 0..n_nets / 4 {
        let m = Mlp::new(&[3, 4, 1], &[Activation::Tanh, Activation::Sigmoid], &mut rng).expect("valid shape");
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target = f64::from(rng.gen_range(0..2u8));
        let trace = m.forward_trace(&x).expect("dims match");
        let g = bce_logit_grad(trace.logits()[0], target);
        let (_, dx) = m.backward_from_logits(&trace, &[g]).expect("dims match");
        let loss = |x: &[f64]| bce_with_logit(m.forward_trace(x).expect("dims match").logits()[0], target);
        for i in 0..3 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            worst = worst.max(rel_err(dx[i], (loss(&xp) - loss(&xm)) / (2.0 * h)));
        }
    }
    (worst, built)
}

// ---------------------------------------------------------------- metrics

pub fn action(user: &str, delta: &[f64], post: u8, t: (f64, f64)) -> RecourseAction {
    RecourseAction {
        user_id: user.into(),
        delta: delta.to_vec(),
        counterfactual: delta.to_vec(),
        pre_class: 0,
        post_class: post,
        cost_sq: delta.iter().map(|d| d * d).sum(),
        method: Method::Gan,
        steps: 1,
        timing: Timing { start: t.0, end: t.1 },
    }
}

pub struct MetricFixture {
    pub name: &'static str,
    pub pred: Vec<u8>,
    pub labels: Vec<Option<u8>>,
    /// Actions for the denied users, with their true labels.
    pub actions: Vec<RecourseAction>,
    pub action_labels: Vec<Option<u8>>,
    pub accuracy: Option<Fraction>,
    pub accuracy_y0: Option<Fraction>,
    pub denied: Fraction,
    pub success: Option<Fraction>,
    pub post_accuracy: Option<Fraction>,
    pub mean_cost: Option<f64>,
    pub cumulative_cost: f64,
    pub mean_l2: Option<f64>,
    pub cumulative_l2: f64,
    pub mean_time: Option<f64>,
}

fn fr(hits: usize, n: usize) -> Fraction {
    Fraction { hits, n }
}

/// Five hand-worked fixtures: mixed outcomes, nobody denied, everyone
/// flipped, nobody flipped, and indeterminate labels.
pub fn metric_fixtures() -> Vec<MetricFixture> {
    vec![
        MetricFixture {
            name: "mixed",
            pred: vec![0, 0, 1, 1],
            labels: vec![Some(0), Some(1), Some(1), Some(0)],
            actions: vec![action("0", &[0.5, 0.0], 1, (0.0, 0.5)), action("1", &[1.0, 1.0], 0, (0.5, 2.0))],
            action_labels: vec![Some(0), Some(1)],
            accuracy: Some(fr(2, 4)),
            accuracy_y0: Some(fr(1, 2)),
            denied: fr(2, 4),
            success: Some(fr(1, 2)),
            post_accuracy: Some(fr(1, 1)),
            mean_cost: Some(0.25),
            cumulative_cost: 2.0,
            mean_l2: Some(0.5),
            cumulative_l2: std::f64::consts::SQRT_2,
            mean_time: Some(1.0),
        },
        MetricFixture {
            name: "none-denied",
            pred: vec![1, 1, 1],
            labels: vec![Some(1), Some(1), Some(0)],
            actions: vec![],
            action_labels: vec![],
            accuracy: Some(fr(2, 3)),
            accuracy_y0: Some(fr(0, 1)),
            denied: fr(0, 3),
            success: None,
            post_accuracy: None,
            mean_cost: None,
            cumulative_cost: 0.0,
            mean_l2: None,
            cumulative_l2: 0.0,
            mean_time: None,
        },
        MetricFixture {
            name: "all-flipped",
            pred: vec![0, 0, 0],
            labels: vec![Some(0), Some(0), Some(0)],
            actions: vec![
                action("0", &[0.25, 0.5], 1, (0.0, 0.25)),
                action("1", &[0.0, 0.75], 1, (0.25, 0.5)),
                action("2", &[1.5, 0.0], 1, (0.5, 0.75)),
            ],
            action_labels: vec![Some(0), Some(0), Some(0)],
            accuracy: Some(fr(3, 3)),
            accuracy_y0: Some(fr(3, 3)),
            denied: fr(3, 3),
            success: Some(fr(3, 3)),
            post_accuracy: Some(fr(3, 3)),
            mean_cost: Some(3.125 / 3.0),
            cumulative_cost: 0.0,
            mean_l2: Some((0.3125f64.sqrt() + 0.75 + 1.5) / 3.0),
            cumulative_l2: 0.0,
            mean_time: Some(0.25),
        },
        MetricFixture {
            name: "none-flipped",
            pred: vec![0, 1, 0, 0, 1],
            labels: vec![Some(1), Some(1), Some(0), Some(1), Some(0)],
            actions: vec![
                action("0", &[0.5, 0.5], 0, (0.0, 1.0)),
                action("2", &[0.0, 0.0], 0, (1.0, 1.5)),
                action("3", &[2.0, 0.0], 0, (1.5, 3.0)),
            ],
            action_labels: vec![Some(1), Some(0), Some(1)],
            accuracy: Some(fr(2, 5)),
            accuracy_y0: Some(fr(1, 2)),
            denied: fr(3, 5),
            success: Some(fr(0, 3)),
            post_accuracy: Some(fr(0, 1)),
            mean_cost: None,
            cumulative_cost: 4.5,
            mean_l2: None,
            cumulative_l2: 0.5f64.sqrt() + 2.0,
            mean_time: Some(1.0),
        },
        MetricFixture {
            name: "indeterminate",
            pred: vec![0, 0, 1, 0],
            labels: vec![None, Some(0), Some(1), None],
            actions: vec![
                action("0", &[0.1, 0.2], 1, (0.0, 0.125)),
                action("1", &[0.3, 0.0], 1, (0.125, 0.25)),
                action("3", &[0.0, 0.4], 0, (0.25, 0.625)),
            ],
            action_labels: vec![None, Some(0), None],
            accuracy: Some(fr(2, 2)),
            accuracy_y0: Some(fr(1, 1)),
            denied: fr(3, 4),
            success: Some(fr(2, 3)),
            post_accuracy: Some(fr(1, 1)),
            mean_cost: Some(0.07),
            cumulative_cost: 0.16,
            mean_l2: Some((0.05f64.sqrt() + 0.3) / 2.0),
            cumulative_l2: 0.4,
            mean_time: Some(0.625 / 3.0),
        },
    ]
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
        (None, None) => true,
        _ => false,
    }
}

/// Names of the fixture metrics that disagree with the hand-computed values.
pub fn check_metric_fixture(f: &MetricFixture) -> Vec<String> {
    let mut bad = Vec::new();
    let (p, t): (Vec<u8>, Vec<u8>) =
        f.pred.iter().zip(&f.labels).filter_map(|(p, y)| y.map(|y| (*p, y))).unzip();
    let (p0, t0): (Vec<u8>, Vec<u8>) = p.iter().zip(&t).filter(|(_, y)| **y == 0).map(|(a, b)| (*a, *b)).unzip();
    let y0_posts: Vec<u8> = f
        .actions
        .iter()
        .zip(&f.action_labels)
        .filter(|(_, y)| **y == Some(0))
        .map(|(a, _)| a.post_class)
        .collect();
    let timings: Vec<Timing> = f.actions.iter().map(|a| a.timing).collect();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            bad.push(format!("{}: {name}", f.name));
        }
    };
    check("accuracy", metrics::accuracy(&p, &t).ok() == f.accuracy);
    check("accuracy_y0", metrics::accuracy(&p0, &t0).ok() == f.accuracy_y0);
    check("percent_denied", metrics::percent_denied(&f.pred).ok() == Some(f.denied));
    check("percent_successful", metrics::percent_successful_recourse(&f.actions).ok() == Some(f.success));
    check("post_accuracy", metrics::accuracy(&y0_posts, &vec![1; y0_posts.len()]).ok() == f.post_accuracy);
    check("mean_cost", close(metrics::mean_cost_successful(&f.actions), f.mean_cost));
    check("cumulative_cost", close(Some(metrics::cumulative_cost_denied(&f.actions)), Some(f.cumulative_cost)));
    check("mean_l2", close(metrics::mean_l2_successful(&f.actions), f.mean_l2));
    check("cumulative_l2", close(Some(metrics::cumulative_l2_denied(&f.actions)), Some(f.cumulative_l2)));
    check("mean_time", close(metrics::mean_clock_time(&timings).ok(), f.mean_time));
    bad
}

// ---------------------------------------------------------------- PCA

/// Points `mean + a·u + b·v` for a random orthonormal pair `(u, v)` in 10-D.
/// Returns the rows and the true basis as columns.
pub fn plane_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 10;
    let raw = DMatrix::from_fn(d, 2, |_, _| StandardNormal.sample(&mut rng));
    let basis = raw.qr().q();
    let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let rows = (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let a = 3.0 * a;
            let b: f64 = StandardNormal.sample(&mut rng);
            (0..d).map(|j| mean[j] + a * basis[(j, 0)] + b * basis[(j, 1)]).collect()
        })
        .collect();
    (rows, basis)
}

/// Largest principal angle between the column spans of two orthonormal
/// bases, via the sine form (accurate for tiny angles).
pub fn max_principal_angle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let residual = v - u * (u.transpose() * v);
    let s = residual.svd(false, false).singular_values;
    s.iter().copied().fold(0.0, f64::max).min(1.0).asin()
}

// ---------------------------------------------------------------- models

/// Small, fast configuration for the model-level tests.
pub fn small_config(n_users: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.n_users = n_users;
    cfg.surrogate.epochs = 30;
    cfg.gan.max_iterations = 200;
    cfg.gan.checkpoint_warmup = 40;
    cfg
}

pub struct Trained {
    pub cfg: ExperimentConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub forest: Arc<ChurnClassifier>,
    pub gan: CounterGanModel,
}

pub fn trained(n_users: usize, n_trees: usize, seed: u64) -> Trained {
    let cfg = small_config(n_users);
    let (train, test) = pipeline::prepare_data(&cfg, seed).expect("valid config");
    let forest = Arc::new(pipeline::fit_forest(&train, &cfg, n_trees, seed).expect("forest fits"));
    let (s, _) = countergan::distill_surrogate(&forest, &train, &cfg.surrogate, seed).expect("distills");
    let gan_cfg = countergan::TrainConfig { seed, ..cfg.gan.clone() };
    let gan = countergan::train(&train, Arc::clone(&forest), s, &gan_cfg).expect("trains");
    Trained { cfg, train, test, forest, gan }
}
