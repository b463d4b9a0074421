use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use attrgrasp::adapt::{adapt_object, AdaptConfig};
use attrgrasp::attributes::AttributeVocabulary;
use attrgrasp::config::{run_baseline, Config, Variant};
use attrgrasp::eval::{eval_model, export_heatmaps};
use attrgrasp::experiment::{criteria, run_experiment, test_cases};
use attrgrasp::model::{load_checkpoint, save_checkpoint, Model};
use attrgrasp::sim::ObjectPool;
use attrgrasp::train::{collect_only, ReplayBuffer, Trainer};

#[derive(Parser)]
#[command(name = "attrgrasp", about = "Attribute-conditioned instance grasping in a synthetic top-down world")]
struct Cli {
    /// JSON configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Exit with a failure code when an acceptance threshold is missed.
    #[arg(long, global = true)]
    assert: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as JSON.
    Config,
    /// Collect a replay buffer with a fixed (optionally untrained) model.
    Collect {
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
    /// Train a variant online, or replay a stored buffer when --data is given.
    Train {
        #[arg(long, default_value = "ours")]
        variant: String,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Adapt a checkpoint to one catalogue object or an object spec file.
    Adapt {
        #[arg(long)]
        ckpt: PathBuf,
        /// Catalogue name, or a JSON file holding {"object": "<catalogue name>"}.
        #[arg(long)]
        object: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate a checkpoint, or run the full comparison when no checkpoint is given.
    Eval {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, value_parser = ["basic", "held-out"], default_value = "held-out")]
        pool: String,
        /// Checkpoint cache used by the full comparison.
        #[arg(long, default_value = "target/attrgrasp-cache")]
        cache: PathBuf,
    },
    /// Export attention and affordance overlays for a few test cases.
    Viz {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 4)]
        cases: usize,
        #[arg(long, value_parser = ["basic", "held-out"], default_value = "held-out")]
        pool: String,
    },
}

fn pool(name: &str) -> ObjectPool {
    if name == "basic" {
        ObjectPool::Basic
    } else {
        ObjectPool::HeldOut
    }
}

fn load_model(path: &Path) -> Result<Model<f32>> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    match cli.command {
        Command::Config => {
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            Ok(true)
        }
        Command::Collect { steps, ckpt } => {
            let model = match ckpt {
                Some(p) => load_model(&p)?,
                None => Model::new(cfg.model.clone(), AttributeVocabulary::default())?,
            };
            let buffer = collect_only(&model, &cfg.train, &cfg.sim, steps, cfg.seed)?;
            buffer.save(&cli.out)?;
            log::info!("stored {} records in {}", buffer.len(), cli.out.display());
            Ok(true)
        }
        Command::Train { variant, data, ckpt } => {
            let variant = Variant::parse(&variant)?;
            let trainer = match data {
                Some(dir) => {
                    let cfg = variant.apply(&cfg);
                    let model = Model::new(cfg.model.clone(), AttributeVocabulary::default())?;
                    let buffer = ReplayBuffer::load(&dir, cfg.train.capacity, &model.vocab, &cfg.sim)?;
                    let mut trainer = Trainer::new(model, cfg.train.clone(), cfg.seed);
                    trainer.replay_dataset(&buffer, cfg.train.replay_epochs.max(1))?;
                    trainer
                }
                None => {
                    run_baseline(variant, &cfg, |p| {
                        if (p.step + 1) % 250 == 0 {
                            if let Some(s) = p.stats {
                                log::info!("step {}/{} l_m {:.4} l_r {:.4}", p.step + 1, p.total, s.l_m, s.l_r);
                            }
                        }
                    })?
                    .0
                }
            };
            save_checkpoint(&trainer.model, &ckpt)?;
            trainer.write_log(&ckpt.with_extension("loss.csv"))?;
            Ok(true)
        }
        Command::Adapt { ckpt, object, name } => {
            let model = load_model(&ckpt)?;
            let object = if object.ends_with(".json") {
                let v: serde_json::Value = serde_json::from_slice(&fs::read(&object)?)?;
                v["object"].as_str().context("object spec needs an \"object\" field")?.to_string()
            } else {
                object
            };
            if let Some(name) = &name {
                if name != &object {
                    bail!("catalogue objects are registered under their catalogue name ({object})");
                }
            }
            let adapt_cfg = AdaptConfig { objects: vec![object.clone()], ..cfg.adapt.clone() };
            let adapted = adapt_object(&model, &object, &cfg.sim, &cfg.train, &adapt_cfg)?;
            save_checkpoint(&adapted.model, &cli.out)?;
            let report = serde_json::json!({
                "object": object,
                "attempts": adapted.stats.attempts,
                "oracle_successes": adapted.stats.successes,
                "pre_affordance": adapted.pre_affordance,
                "post_affordance": adapted.post_affordance,
            });
            fs::write(cli.out.with_extension("json"), serde_json::to_vec_pretty(&report)?)?;
            println!("{report}");
            Ok(adapted.post_affordance >= adapted.pre_affordance)
        }
        Command::Eval { ckpt, pool: p, cache } => match ckpt {
            Some(path) => {
                let model = load_model(&path)?;
                let cases = test_cases(&cfg, pool(&p))?;
                let report = eval_model(&model, &cases, &cfg.sim, &p)?;
                report.write(&cli.out, &format!("eval-{p}"))?;
                println!(
                    "success {:.3} recognition {:.3} attention {:.3}",
                    report.grasp_success_rate,
                    report.recognition_accuracy,
                    report.attention_accuracy.unwrap_or(0.0)
                );
                Ok(true)
            }
            None => {
                let summary = run_experiment(&cfg, &cache, &cli.out)?;
                let mut all = true;
                for (name, pass, detail) in criteria(&summary) {
                    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
                    all &= pass;
                }
                Ok(all)
            }
        },
        Command::Viz { ckpt, cases, pool: p } => {
            let model = load_model(&ckpt)?;
            let all = test_cases(&cfg, pool(&p))?;
            for case in all.iter().take(cases) {
                for path in export_heatmaps(&model, case, &cfg.sim, &cli.out)? {
                    println!("{}", path.display());
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let assert = cli.assert;
    match run(cli) {
        Ok(ok) if ok || !assert => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
