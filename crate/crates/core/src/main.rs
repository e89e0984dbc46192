use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use churn_recourse::countergan::{self, CounterGanModel, TrainConfig};
use churn_recourse::dataset::{self, Dataset};
use churn_recourse::nn::Mlp;
use churn_recourse::pipeline::{self, ExperimentConfig};
use churn_recourse::recourse::{format_changes, Method};
use churn_recourse::rgd::{self, RgdConfig};
use churn_recourse::seed::stage_seed;
use churn_recourse::service::{self, ServiceState};
use churn_recourse::survival::ChurnClassifier;
use churn_recourse::{metrics, Error, Result};

/// Forest size the gradient-descent baseline is meant to run against.
const RGD_REFERENCE_TREES: usize = 20;

#[derive(Parser)]
#[command(name = "churn-recourse", version, about = "Survival-forest churn prediction with counterfactual recourse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON); flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every stage derives its own seed from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize users, split train/test and write normalized CSVs plus metadata.
    GenerateData {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        n_users: Option<usize>,
        #[arg(long)]
        n_features: Option<usize>,
        #[arg(long)]
        censor_rate: Option<f64>,
        #[arg(long)]
        train_fraction: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a survival forest on a training CSV.
    TrainForest {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, default_value_t = 20)]
        n_trees: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Distill a differentiable surrogate of the forest's class score.
    Distill {
        #[arg(long)]
        forest: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a CounteRGAN against a fixed forest and surrogate.
    TrainGan {
        #[arg(long)]
        forest: PathBuf,
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate recourse for every denied user in a CSV.
    Recourse {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        forest: PathBuf,
        /// CounteRGAN bundle directory (required for --method gan).
        #[arg(long)]
        gan: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        /// Output actions (JSON lines).
        #[arg(long)]
        out: PathBuf,
        /// Print the largest changes for the first N users.
        #[arg(long, default_value_t = 0)]
        show: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Compute every evaluation metric for a set of actions.
    Evaluate {
        #[arg(long)]
        forest: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        actions: PathBuf,
        /// CounteRGAN bundle; adds discriminator accuracy.
        #[arg(long)]
        gan: Option<PathBuf>,
        /// Report JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Export PCA scatter and cost histograms for a set of actions.
    Audit {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        actions: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Feature for the per-feature cost histograms.
        #[arg(long)]
        feature: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Serve /features, /predict, /recourse and /whatif over HTTP.
    Serve {
        #[arg(long)]
        forest: PathBuf,
        #[arg(long)]
        gan: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Run the whole 1/5/20-tree grid plus the RGD baseline and write a hashed manifest.
    Repro {
        #[arg(long)]
        out_dir: PathBuf,
        /// Cap on denied users given RGD recourse.
        #[arg(long)]
        rgd_max_users: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Gan,
    Rgd,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(p) => {
            require(p, "--config")?;
            ExperimentConfig::from_json_file(p)?
        }
        None => ExperimentConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn require(path: &Path, stage: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact { path: path.to_path_buf(), stage })
    }
}

fn load_data(csv: &Path, meta: &Path, cfg: &ExperimentConfig) -> Result<Dataset> {
    require(csv, "generate-data")?;
    require(meta, "generate-data")?;
    dataset::load_csv(csv, meta, cfg.data.threshold_days)
}

fn load_forest(path: &Path) -> Result<ChurnClassifier> {
    require(path, "train-forest")?;
    ChurnClassifier::load(path)
}

fn load_gan(dir: &Path, forest: Arc<ChurnClassifier>) -> Result<CounterGanModel> {
    require(dir, "train-gan")?;
    CounterGanModel::load(dir, forest)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData { out_dir, n_users, n_features, censor_rate, train_fraction, common } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = n_users {
                cfg.data.n_users = n;
            }
            if let Some(f) = n_features {
                cfg.data.n_features = f;
                cfg.data.signal.retain(|s| s.feature < f);
            }
            if let Some(c) = censor_rate {
                cfg.data.censor_rate = c;
            }
            if let Some(t) = train_fraction {
                cfg.train_fraction = t;
            }
            let (train, test) = pipeline::prepare_data(&cfg, common.seed)?;
            std::fs::create_dir_all(&out_dir)?;
            train.write_csv(&out_dir.join("train.csv"))?;
            test.write_csv(&out_dir.join("test.csv"))?;
            dataset::write_meta(&out_dir.join("meta.json"), &train.meta)?;
            println!("wrote {} train and {} test users to {}", train.len(), test.len(), out_dir.display());
        }
        Command::TrainForest { train, meta, n_trees, out, common } => {
            let cfg = load_config(&common)?;
            let data = load_data(&train, &meta, &cfg)?;
            let forest = pipeline::fit_forest(&data, &cfg, n_trees, common.seed)?;
            forest.save(&out)?;
            let labelled: Vec<(u8, u8)> = data
                .labelled()
                .map(|(r, y)| forest.classify(&r.features).map(|p| (p, y)))
                .collect::<Result<_>>()?;
            let (p, t): (Vec<u8>, Vec<u8>) = labelled.into_iter().unzip();
            println!("{n_trees}-tree forest, training accuracy {:.4}", metrics::accuracy(&p, &t)?.value());
        }
        Command::Distill { forest, train, meta, out, common } => {
            let cfg = load_config(&common)?;
            let c = load_forest(&forest)?;
            let data = load_data(&train, &meta, &cfg)?;
            let seed = stage_seed(common.seed, &format!("distill-{}", c.trees.len()));
            let (net, report) = countergan::distill_surrogate(&c, &data, &cfg.surrogate, seed)?;
            net.save(&out)?;
            println!(
                "surrogate agreement: train {:.4}, holdout {:.4}",
                report.agreement_train.value(),
                report.agreement_holdout.value()
            );
        }
        Command::TrainGan { forest, surrogate, train, meta, out_dir, common } => {
            let cfg = load_config(&common)?;
            let c = Arc::new(load_forest(&forest)?);
            require(&surrogate, "distill")?;
            let s = Mlp::load(&surrogate)?;
            let data = load_data(&train, &meta, &cfg)?;
            let gan_cfg = TrainConfig { seed: stage_seed(common.seed, &format!("gan-{}", c.trees.len())), ..cfg.gan };
            let model = countergan::train(&data, c, s, &gan_cfg)?;
            model.save(&out_dir)?;
            match model.selected_iteration {
                Some(i) => println!("{} checkpoints; kept iteration {i}", model.checkpoints.len()),
                None => println!("no iteration met the checkpoint rule; kept the final state (flagged in model.json)"),
            }
        }
        Command::Recourse { method, forest, gan, data, meta, out, show, common } => {
            let cfg = load_config(&common)?;
            let c = Arc::new(load_forest(&forest)?);
            let d = load_data(&data, &meta, &cfg)?;
            let actions = match method {
                MethodArg::Gan => {
                    let dir = gan.ok_or_else(|| Error::config("--gan is required for --method gan"))?;
                    let model = load_gan(&dir, Arc::clone(&c))?;
                    model.generate_batch(d.records.iter().map(|r| (r.user_id.as_str(), r.features.as_slice())))?
                }
                MethodArg::Rgd => {
                    if c.trees.len() != RGD_REFERENCE_TREES {
                        eprintln!(
                            "flag: RGD baseline run against a {}-tree forest (reference runs use {RGD_REFERENCE_TREES})",
                            c.trees.len()
                        );
                    }
                    let users: Vec<(&str, &[f64])> =
                        d.records.iter().map(|r| (r.user_id.as_str(), r.features.as_slice())).collect();
                    let rcfg = RgdConfig { seed: stage_seed(common.seed, "rgd"), ..cfg.rgd.clone() };
                    rgd::rgd_batch(&c, &users, &d.meta, &rcfg)?
                }
            };
            countergan::write_actions(&out, &actions)?;
            let by_id: std::collections::HashMap<&str, &[f64]> =
                d.records.iter().map(|r| (r.user_id.as_str(), r.features.as_slice())).collect();
            for a in actions.iter().take(show) {
                println!("user {} ({})", a.user_id, if a.succeeded() { "successful" } else { "denied" });
                print!("{}", format_changes(&a.changes(by_id[a.user_id.as_str()], &d.meta), 5));
            }
            let ok = actions.iter().filter(|a| a.succeeded()).count();
            println!("{} actions, {ok} successful, written to {}", actions.len(), out.display());
        }
        Command::Evaluate { forest, data, meta, actions, gan, out, common } => {
            let cfg = load_config(&common)?;
            let c = Arc::new(load_forest(&forest)?);
            let d = load_data(&data, &meta, &cfg)?;
            require(&actions, "recourse")?;
            let acts = countergan::read_actions(&actions)?;
            let method = acts.first().map_or(Method::Gan, |a| a.method);
            let model = gan.map(|g| load_gan(&g, Arc::clone(&c))).transpose()?;
            let report = pipeline::evaluate(&c, &d, &acts, method, model.as_ref().map(|m| &m.discriminator))?;
            let rows = [report];
            println!("{}", metrics::accuracy_table(&rows));
            println!("{}", metrics::recourse_table(&rows));
            if let Some(p) = out {
                std::fs::write(&p, serde_json::to_vec_pretty(&rows[0])?)?;
            }
        }
        Command::Audit { train, data, meta, actions, out_dir, feature, common } => {
            let cfg = load_config(&common)?;
            let tr = load_data(&train, &meta, &cfg)?;
            let d = load_data(&data, &meta, &cfg)?;
            require(&actions, "recourse")?;
            let acts = countergan::read_actions(&actions)?;
            let fi = match feature {
                Some(name) => Some(
                    tr.meta
                        .iter()
                        .position(|m| m.name == name)
                        .ok_or_else(|| Error::config(format!("unknown feature '{name}'")))?,
                ),
                None => pipeline::default_audit_feature(&tr.meta),
            };
            let files = pipeline::write_audit(&out_dir, &tr, &d, &acts, fi)?;
            println!("wrote {} audit files to {}", files.len(), out_dir.display());
        }
        Command::Serve { forest, gan, meta, port } => {
            let c = Arc::new(load_forest(&forest)?);
            let model = load_gan(&gan, Arc::clone(&c))?;
            require(&meta, "generate-data")?;
            let m = dataset::read_meta(&meta)?;
            let state = ServiceState::new(c, model, m)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(state, port))?;
        }
        Command::Repro { out_dir, rgd_max_users, common } => {
            let mut cfg = load_config(&common)?;
            if rgd_max_users.is_some() {
                cfg.rgd_max_users = rgd_max_users;
            }
            let exp = pipeline::run_experiment(&cfg, common.seed)?;
            let manifest = pipeline::write_experiment(&exp, &out_dir)?;
            let rows = exp.reports();
            println!("{}", metrics::accuracy_table(&rows));
            println!("{}", metrics::recourse_table(&rows));
            println!("{} hashed outputs; manifest at {}", manifest.outputs.len(), out_dir.join("manifest.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
