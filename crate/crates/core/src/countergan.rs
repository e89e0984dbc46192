//! CounteRGAN recourse: a residual generator trained against a discriminator
//! and a fixed churn classifier.
//!
//! The generator maps a churner's features `x` to a raw delta; the delta is
//! projected onto the feasible set (actionability, direction, bounds) and the
//! counterfactual is `x + delta`. The discriminator learns to tell real
//! retained users from counterfactuals. The survival forest is not
//! differentiable, so classifier feedback reaches the generator through a
//! small network distilled from the forest's class score. Efficacy is always
//! judged by the forest itself.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{project_action, project_with_mask, Clamp};
use crate::dataset::{Dataset, FeatureMeta};
use crate::error::{Error, Result};
use crate::metrics::Fraction;
use crate::nn::{bce_logit_grad, bce_with_logit, Activation, Adam, AdamConfig, Gradients, Mlp};
use crate::recourse::{squared_norm, Method, RecourseAction, Timing};
use crate::seed;
use crate::survival::ChurnClassifier;

const FORMAT: &str = "churn-recourse/countergan";
const VERSION: u32 = 1;

pub const GENERATOR_HIDDEN: [usize; 2] = [64, 64];
pub const CRITIC_HIDDEN: [usize; 2] = [32, 16];

/// F → 64 → 64 → F, tanh hidden layers and an identity (residual) head.
pub fn new_generator<R: Rng>(n_features: usize, rng: &mut R) -> Result<Mlp> {
    Mlp::new(
        &[n_features, GENERATOR_HIDDEN[0], GENERATOR_HIDDEN[1], n_features],
        &[Activation::Tanh, Activation::Tanh, Activation::Identity],
        rng,
    )
}

/// F → 32 → 16 → 1, relu hidden layers and a sigmoid head. Shared by the
/// discriminator and the surrogate classifier.
pub fn new_critic<R: Rng>(n_features: usize, rng: &mut R) -> Result<Mlp> {
    Mlp::new(
        &[n_features, CRITIC_HIDDEN[0], CRITIC_HIDDEN[1], 1],
        &[Activation::Relu, Activation::Relu, Activation::Sigmoid],
        rng,
    )
}

// ---------------------------------------------------------------------------
// Surrogate distillation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Half-width of the uniform perturbation added to the noisy copies.
    pub noise: f64,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { epochs: 150, batch_size: 64, noise: 0.05, learning_rate: 3e-3, holdout_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    /// Thresholded surrogate vs forest class on the fitting rows.
    pub agreement_train: Fraction,
    /// Same on rows held out from fitting.
    pub agreement_holdout: Fraction,
    pub final_loss: f64,
}

/// Trains a surrogate network to imitate `class_score` of the forest on the
/// dataset's features plus uniformly perturbed copies.
pub fn distill_surrogate(
    classifier: &ChurnClassifier,
    data: &Dataset,
    cfg: &SurrogateConfig,
    seed_value: u64,
) -> Result<(Mlp, DistillReport)> {
    if data.is_empty() {
        return Err(Error::Empty("cannot distill a surrogate from an empty dataset"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::config("surrogate epochs and batch_size must be positive"));
    }
    let mut rng = seed::rng(seed_value);
    let mut rows: Vec<&[f64]> = data.records.iter().map(|r| r.features.as_slice()).collect();
    rows.shuffle(&mut rng);
    let n_hold = if rows.len() >= 10 {
        ((rows.len() as f64) * cfg.holdout_fraction).round() as usize
    } else {
        0
    };
    let (holdout, fit_rows) = rows.split_at(n_hold);

    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(fit_rows.len() * 2);
    for x in fit_rows {
        inputs.push(x.to_vec());
        let noisy: Vec<f64> = x
            .iter()
            .zip(&data.meta)
            .map(|(&v, m)| (v + rng.gen_range(-cfg.noise..=cfg.noise)).clamp(m.lower_bound, m.upper_bound))
            .collect();
        inputs.push(noisy);
    }
    let targets: Vec<f64> =
        inputs.iter().map(|x| classifier.class_score(x)).collect::<Result<_>>()?;

    let mut net = new_critic(data.n_features(), &mut rng)?;
    let mut opt = Adam::new(&net, AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() });
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&net);
            for &i in chunk {
                let trace = net.forward_trace(&inputs[i])?;
                let z = trace.logits()[0];
                epoch_loss += bce_with_logit(z, targets[i]);
                let (g, _) = net.backward_from_logits(&trace, &[bce_logit_grad(z, targets[i])])?;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            if !grads.is_finite() {
                return Err(Error::Numerical { iteration: epoch, detail: "surrogate gradient".into() });
            }
            opt.step(&mut net, &grads)?;
        }
        final_loss = epoch_loss / inputs.len() as f64;
    }

    let agreement = |rows: &[&[f64]]| -> Result<Fraction> {
        let mut hits = 0;
        for x in rows {
            let s = net.forward(x)?[0];
            if u8::from(s > 0.5) == classifier.classify(x)? {
                hits += 1;
            }
        }
        Ok(Fraction { hits, n: rows.len() })
    };
    let report = DistillReport {
        agreement_train: agreement(fit_rows)?,
        agreement_holdout: agreement(holdout)?,
        final_loss,
    };
    Ok((net, report))
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Which users the discriminator treats as real.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealPool {
    /// Retained (label 1) training users.
    Retained,
    /// Every labelled training user.
    AllUsers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub batch_size: usize,
    pub checkpoint_accuracy_ceiling: f64,
    /// Iterations before this one never checkpoint: an untrained
    /// discriminator is trivially at chance.
    pub checkpoint_warmup: usize,
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub seed: u64,
    pub real_pool: RealPool,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    /// Users per side in the fixed checkpoint evaluation sets.
    pub eval_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 600,
            batch_size: 64,
            checkpoint_accuracy_ceiling: 0.55,
            checkpoint_warmup: 100,
            lambda_cls: 0.25,
            lambda_reg: 1.0,
            seed: 0,
            real_pool: RealPool::Retained,
            generator_lr: 1e-3,
            discriminator_lr: 1e-3,
            eval_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::config("max_iterations must be >= 1"));
        }
        if self.batch_size < 1 || self.eval_size < 1 {
            return Err(Error::config("batch_size and eval_size must be >= 1"));
        }
        if !(self.checkpoint_accuracy_ceiling > 0.0 && self.checkpoint_accuracy_ceiling < 1.0) {
            return Err(Error::config("checkpoint_accuracy_ceiling must lie in (0, 1)"));
        }
        if !(self.lambda_cls >= 0.0 && self.lambda_reg >= 0.0) {
            return Err(Error::config("loss weights must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_acc_real: f64,
    pub d_acc_fake: f64,
    pub mean_abs_delta: f64,
    pub checkpoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub d_acc_real: f64,
    pub d_acc_fake: f64,
}

#[derive(Debug, Clone)]
pub struct CounterGanModel {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub surrogate: Mlp,
    pub classifier: Arc<ChurnClassifier>,
    pub constraints: Vec<FeatureMeta>,
    pub config: TrainConfig,
    pub training_log: Vec<LogRow>,
    /// Every iteration that met the checkpoint rule.
    pub checkpoints: Vec<Checkpoint>,
    /// Iteration whose snapshot the model holds; `None` when no checkpoint
    /// qualified and the final-iteration state was kept.
    pub selected_iteration: Option<usize>,
}

struct Snapshot {
    generator: Mlp,
    discriminator: Mlp,
    iteration: usize,
}

/// Counterfactual for one user under the current generator.
fn counterfactual(
    generator: &Mlp,
    x: &[f64],
    meta: &[FeatureMeta],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let delta = project_action(x, &generator.forward(x)?, meta)?;
    let cf = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
    Ok((delta, cf))
}

fn critic_prob(net: &Mlp, x: &[f64]) -> Result<f64> {
    Ok(net.forward(x)?[0])
}

/// Discriminator accuracy on original users (correct when called real) and on
/// counterfactuals (correct when called fake).
pub fn discriminator_accuracy(
    discriminator: &Mlp,
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
) -> Result<(Fraction, Fraction)> {
    let mut hits_real = 0;
    for x in real {
        hits_real += usize::from(critic_prob(discriminator, x)? >= 0.5);
    }
    let mut hits_fake = 0;
    for x in fake {
        hits_fake += usize::from(critic_prob(discriminator, x)? < 0.5);
    }
    Ok((Fraction { hits: hits_real, n: real.len() }, Fraction { hits: hits_fake, n: fake.len() }))
}

fn ratio(f: Fraction) -> f64 {
    if f.n == 0 {
        0.0
    } else {
        f.value()
    }
}

/// Alternating adversarial training. Each iteration takes one discriminator
/// step (real batch vs projected counterfactuals of churned users) and one
/// generator step on
/// `BCE(D(x+a), real) + λ_cls·BCE(surrogate(x+a), 1) + λ_reg·mean|a|`,
/// then evaluates the discriminator on a fixed set of churned users before and
/// after recourse.
/// Iterations where both accuracies are at or below the ceiling are saved as
/// checkpoints; the returned model holds the latest one.
pub fn train(
    data: &Dataset,
    classifier: Arc<ChurnClassifier>,
    surrogate: Mlp,
    cfg: &TrainConfig,
) -> Result<CounterGanModel> {
    cfg.validate()?;
    let f = data.n_features();
    Error::check_dim(classifier.n_features, f)?;
    Error::check_dim(surrogate.input_dim(), f)?;
    let churned: Vec<&[f64]> = data.with_label(0).map(|r| r.features.as_slice()).collect();
    let retained: Vec<&[f64]> = data.with_label(1).map(|r| r.features.as_slice()).collect();
    if churned.is_empty() || retained.is_empty() {
        return Err(Error::config("training data needs both churned (0) and retained (1) users"));
    }
    let real: Vec<&[f64]> = match cfg.real_pool {
        RealPool::Retained => retained.clone(),
        RealPool::AllUsers => data.labelled().map(|(r, _)| r.features.as_slice()).collect(),
    };
    let meta = &data.meta;

    let mut rng = seed::rng(cfg.seed);
    let mut generator = new_generator(f, &mut rng)?;
    let mut discriminator = new_critic(f, &mut rng)?;
    let mut g_opt = Adam::new(&generator, AdamConfig { learning_rate: cfg.generator_lr, ..AdamConfig::default() });
    let mut d_opt =
        Adam::new(&discriminator, AdamConfig { learning_rate: cfg.discriminator_lr, ..AdamConfig::default() });

    let pick = |pool: &[&[f64]], k: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
        if pool.len() <= k {
            pool.iter().map(|x| x.to_vec()).collect()
        } else {
            pool.choose_multiple(rng, k).map(|x| x.to_vec()).collect()
        }
    };
    // pre-recourse users (scored as real) and their counterfactuals (scored as fake)
    let eval_source = pick(&churned, cfg.eval_size, &mut rng);

    let mut log = Vec::with_capacity(cfg.max_iterations);
    let mut checkpoints = Vec::new();
    let mut best: Option<Snapshot> = None;
    let inv_f = 1.0 / f as f64;

    for it in 0..cfg.max_iterations {
        let real_batch: Vec<&[f64]> =
            (0..cfg.batch_size).map(|_| real[rng.gen_range(0..real.len())]).collect();
        let fake_batch: Vec<&[f64]> =
            (0..cfg.batch_size).map(|_| churned[rng.gen_range(0..churned.len())]).collect();

        // discriminator step
        let mut d_grads = Gradients::zeros_like(&discriminator);
        let mut d_loss = 0.0;
        let mut d_inputs: Vec<(Vec<f64>, f64)> = real_batch.iter().map(|x| (x.to_vec(), 1.0)).collect();
        for x in &fake_batch {
            d_inputs.push((counterfactual(&generator, x, meta)?.1, 0.0));
        }
        for (x, target) in d_inputs {
            let trace = discriminator.forward_trace(&x)?;
            let z = trace.logits()[0];
            d_loss += bce_with_logit(z, target);
            let (g, _) = discriminator.backward_from_logits(&trace, &[bce_logit_grad(z, target)])?;
            d_grads.add_assign(&g);
        }
        let n_d = (2 * cfg.batch_size) as f64;
        d_grads.scale(1.0 / n_d);
        d_loss /= n_d;
        if !d_loss.is_finite() || !d_grads.is_finite() {
            return Err(Error::Numerical { iteration: it, detail: "discriminator loss".into() });
        }
        d_opt.step(&mut discriminator, &d_grads)?;

        // generator step
        let mut g_grads = Gradients::zeros_like(&generator);
        let mut g_loss = 0.0;
        let mut abs_delta = 0.0;
        for x in &fake_batch {
            let g_trace = generator.forward_trace(x)?;
            let (delta, clamps) = project_with_mask(x, g_trace.output(), meta)?;
            let cf: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();

            let d_trace = discriminator.forward_trace(&cf)?;
            let dz = d_trace.logits()[0];
            let (_, grad_adv) =
                discriminator.backward_from_logits(&d_trace, &[bce_logit_grad(dz, 1.0)])?;

            let s_trace = surrogate.forward_trace(&cf)?;
            let sz = s_trace.logits()[0];
            let (_, grad_cls) = surrogate.backward_from_logits(&s_trace, &[bce_logit_grad(sz, 1.0)])?;

            let l1: f64 = delta.iter().map(|d| d.abs()).sum::<f64>() * inv_f;
            g_loss += bce_with_logit(dz, 1.0) + cfg.lambda_cls * bce_with_logit(sz, 1.0) + cfg.lambda_reg * l1;
            abs_delta += l1;

            let upstream: Vec<f64> = (0..f)
                .map(|j| {
                    let g = grad_adv[j] + cfg.lambda_cls * grad_cls[j] + cfg.lambda_reg * delta[j].signum() * inv_f
                        * f64::from(u8::from(delta[j] != 0.0));
                    match clamps[j] {
                        Clamp::Open => g,
                        Clamp::Locked => 0.0,
                        // let the raw output move back towards the feasible set
                        Clamp::Low if g < 0.0 => g,
                        Clamp::High if g > 0.0 => g,
                        _ => 0.0,
                    }
                })
                .collect();
            let (g, _) = generator.backward_trace(&g_trace, &upstream)?;
            g_grads.add_assign(&g);
        }
        let n_g = cfg.batch_size as f64;
        g_grads.scale(1.0 / n_g);
        g_loss /= n_g;
        if !g_loss.is_finite() || !g_grads.is_finite() {
            return Err(Error::Numerical { iteration: it, detail: "generator loss".into() });
        }
        g_opt.step(&mut generator, &g_grads)?;

        // checkpoint rule
        let eval_fake: Vec<Vec<f64>> = eval_source
            .iter()
            .map(|x| counterfactual(&generator, x, meta).map(|(_, cf)| cf))
            .collect::<Result<_>>()?;
        let (acc_real, acc_fake) = discriminator_accuracy(&discriminator, &eval_source, &eval_fake)?;
        let (acc_real, acc_fake) = (ratio(acc_real), ratio(acc_fake));
        let qualifies = it >= cfg.checkpoint_warmup
            && acc_real <= cfg.checkpoint_accuracy_ceiling && acc_fake <= cfg.checkpoint_accuracy_ceiling;
        if qualifies {
            checkpoints.push(Checkpoint { iteration: it, d_acc_real: acc_real, d_acc_fake: acc_fake });
            best = Some(Snapshot {
                generator: generator.clone(),
                discriminator: discriminator.clone(),
                iteration: it,
            });
        }
        log.push(LogRow {
            iteration: it,
            d_loss,
            g_loss,
            d_acc_real: acc_real,
            d_acc_fake: acc_fake,
            mean_abs_delta: abs_delta / n_g,
            checkpoint: qualifies,
        });
    }

    let selected_iteration = best.as_ref().map(|s| s.iteration);
    if let Some(s) = best {
        generator = s.generator;
        discriminator = s.discriminator;
    }
    Ok(CounterGanModel {
        generator,
        discriminator,
        surrogate,
        classifier,
        constraints: meta.clone(),
        config: cfg.clone(),
        training_log: log,
        checkpoints,
        selected_iteration,
    })
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

impl CounterGanModel {
    pub fn has_checkpoint(&self) -> bool {
        self.selected_iteration.is_some()
    }

    /// Projected generator delta for `x`, with no precondition on its class.
    pub fn propose(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.constraints.len(), x.len())?;
        project_action(x, &self.generator.forward(x)?, &self.constraints)
    }

    /// Recourse for a user the forest predicts to churn. The timed section is
    /// the generator pass and projection; the outcome is judged by the forest.
    pub fn generate_recourse(&self, user_id: &str, x: &[f64]) -> Result<RecourseAction> {
        self.generate_timed(user_id, x, Instant::now())
    }

    fn generate_timed(&self, user_id: &str, x: &[f64], epoch: Instant) -> Result<RecourseAction> {
        let pre_class = self.classifier.classify(x)?;
        if pre_class != 0 {
            return Err(Error::NotApplicable(format!("user {user_id} is already predicted to stay")));
        }
        let started = Instant::now();
        let delta = self.propose(x)?;
        let timing = Timing::since(epoch, started);
        let counterfactual: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let post_class = self.classifier.classify(&counterfactual)?;
        Ok(RecourseAction {
            user_id: user_id.to_string(),
            cost_sq: squared_norm(&delta),
            delta,
            counterfactual,
            pre_class,
            post_class,
            method: Method::Gan,
            steps: 1,
            timing,
        })
    }

    /// Recourse for every user the forest denies; other users are skipped.
    pub fn generate_batch<'a, I>(&self, users: I) -> Result<Vec<RecourseAction>>
    where
        I: IntoIterator<Item = (&'a str, &'a [f64])>,
    {
        let epoch = Instant::now();
        let mut out = Vec::new();
        for (id, x) in users {
            if self.classifier.classify(x)? == 0 {
                out.push(self.generate_timed(id, x, epoch)?);
            }
        }
        Ok(out)
    }

    pub fn surrogate_score(&self, x: &[f64]) -> Result<f64> {
        critic_prob(&self.surrogate, x)
    }

    pub fn discriminator_score(&self, x: &[f64]) -> Result<f64> {
        critic_prob(&self.discriminator, x)
    }

    // -----------------------------------------------------------------------
    // Bundle I/O
    // -----------------------------------------------------------------------

    /// Writes the model bundle directory.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.generator.save(&dir.join("generator.json"))?;
        self.discriminator.save(&dir.join("discriminator.json"))?;
        self.surrogate.save(&dir.join("surrogate.json"))?;
        crate::dataset::write_meta(&dir.join("constraints.json"), &self.constraints)?;
        let meta = BundleMeta {
            format: FORMAT.into(),
            version: VERSION,
            n_features: self.constraints.len(),
            config: self.config.clone(),
            checkpoints: self.checkpoints.clone(),
            selected_iteration: self.selected_iteration,
        };
        std::fs::write(dir.join("model.json"), serde_json::to_vec_pretty(&meta)?)?;
        write_training_log(&dir.join("training_log.csv"), &self.training_log)?;
        Ok(())
    }

    pub fn load(dir: &Path, classifier: Arc<ChurnClassifier>) -> Result<Self> {
        let meta_path = dir.join("model.json");
        if !meta_path.exists() {
            return Err(Error::MissingArtifact { path: meta_path, stage: "train-gan" });
        }
        let meta: BundleMeta = serde_json::from_slice(&std::fs::read(&meta_path)?)?;
        if meta.format != FORMAT || meta.version != VERSION {
            return Err(Error::Format(format!(
                "{}: expected {FORMAT} v{VERSION}, found {} v{}",
                meta_path.display(),
                meta.format,
                meta.version
            )));
        }
        let constraints = crate::dataset::read_meta(&dir.join("constraints.json"))?;
        Error::check_dim(meta.n_features, constraints.len())?;
        Error::check_dim(meta.n_features, classifier.n_features)?;
        let generator = Mlp::load(&dir.join("generator.json"))?;
        let discriminator = Mlp::load(&dir.join("discriminator.json"))?;
        let surrogate = Mlp::load(&dir.join("surrogate.json"))?;
        for net in [&generator, &discriminator, &surrogate] {
            Error::check_dim(meta.n_features, net.input_dim())?;
        }
        Error::check_dim(meta.n_features, generator.output_dim())?;
        let training_log = read_training_log(&dir.join("training_log.csv"))?;
        Ok(Self {
            generator,
            discriminator,
            surrogate,
            classifier,
            constraints,
            config: meta.config,
            training_log,
            checkpoints: meta.checkpoints,
            selected_iteration: meta.selected_iteration,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    format: String,
    version: u32,
    n_features: usize,
    config: TrainConfig,
    checkpoints: Vec<Checkpoint>,
    selected_iteration: Option<usize>,
}

const LOG_HEADER: [&str; 7] =
    ["iteration", "d_loss", "g_loss", "d_acc_real", "d_acc_fake", "checkpoint_flag", "mean_abs_delta"];

fn write_training_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(LOG_HEADER)?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            format!("{:?}", r.d_loss),
            format!("{:?}", r.g_loss),
            format!("{:?}", r.d_acc_real),
            format!("{:?}", r.d_acc_fake),
            u8::from(r.checkpoint).to_string(),
            format!("{:?}", r.mean_abs_delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_training_log(path: &Path) -> Result<Vec<LogRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec.get(j).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                row: i + 1,
                column: LOG_HEADER[j].into(),
                detail: "expected a number".into(),
            })
        };
        out.push(LogRow {
            iteration: num(0)? as usize,
            d_loss: num(1)?,
            g_loss: num(2)?,
            d_acc_real: num(3)?,
            d_acc_fake: num(4)?,
            checkpoint: num(5)? != 0.0,
            mean_abs_delta: num(6)?,
        });
    }
    Ok(out)
}

/// Writes a JSON lines file of actions (one object per line).
pub fn write_actions(path: &Path, actions: &[RecourseAction]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    for a in actions {
        serde_json::to_writer(&mut f, a)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_actions(path: &Path) -> Result<Vec<RecourseAction>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
