//! End-to-end runs: training every variant with checkpoint caching, evaluation
//! on basic and held-out cases, and adaptation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::{evaluate_adaptation, AdaptReport};
use crate::attributes::AttributeVocabulary;
use crate::config::{run_baseline, Config, Variant};
use crate::error::Result;
use crate::eval::{eval_model, generate_test_cases, EvalReport, TestCase};
use crate::model::{load_checkpoint, save_checkpoint, Model};
use crate::sim::ObjectPool;

/// Checkpoint path for a variant under `dir`, keyed by the training digest.
pub fn checkpoint_path(dir: &Path, variant: Variant, cfg: &Config) -> PathBuf {
    dir.join(format!("{}-{:016x}.ckpt", variant.name(), variant.apply(cfg).training_digest()))
}

/// Loads the cached checkpoint for the variant or trains and caches it.
pub fn train_or_load(variant: Variant, cfg: &Config, dir: &Path) -> Result<Model<f32>> {
    let path = checkpoint_path(dir, variant, cfg);
    if path.exists() {
        log::info!("loading cached {} checkpoint {}", variant.name(), path.display());
        return load_checkpoint(&path);
    }
    log::info!("training {} ({} collection steps)", variant.name(), cfg.train.collection_steps);
    let (trainer, _) = run_baseline(variant, cfg, |p| {
        if (p.step + 1) % 250 == 0 {
            if let Some(s) = p.stats {
                log::info!("{} step {}/{} l_m {:.4} l_r {:.4} triplets {}", variant.name(), p.step + 1, p.total, s.l_m, s.l_r, s.triplets);
            }
        }
    })?;
    fs::create_dir_all(dir)?;
    trainer.write_log(&path.with_extension("loss.csv"))?;
    save_checkpoint(&trainer.model, &path)?;
    Ok(trainer.model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub grasp_success_rate: f64,
    pub recognition_accuracy: f64,
    pub attention_accuracy: Option<f64>,
    pub any_grasp_rate: f64,
}

impl From<&EvalReport> for Rates {
    fn from(r: &EvalReport) -> Self {
        Self {
            grasp_success_rate: r.grasp_success_rate,
            recognition_accuracy: r.recognition_accuracy,
            attention_accuracy: r.attention_accuracy,
            any_grasp_rate: r.any_grasp_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_digest: u64,
    pub ours_basic: Rates,
    pub ours_held_out: Rates,
    pub no_metric_held_out: Rates,
    pub indiscriminate_held_out: Rates,
    pub adaptation: AdaptReport,
}

pub fn test_cases(cfg: &Config, pool: ObjectPool) -> Result<Vec<TestCase>> {
    let vocab = AttributeVocabulary::default();
    let (seed, count) = match pool {
        ObjectPool::Basic => (cfg.eval.basic_seed, cfg.eval.basic_cases),
        ObjectPool::HeldOut => (cfg.eval.held_out_seed, cfg.eval.held_out_cases),
    };
    generate_test_cases(seed, count, pool, cfg.eval.objects_per_case, &cfg.sim, &vocab)
}

/// Trains (or loads) all variants, evaluates them and adapts the full model;
/// reports and the summary are written under `out`.
pub fn run_experiment(cfg: &Config, cache: &Path, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let basic = test_cases(cfg, ObjectPool::Basic)?;
    let held_out = test_cases(cfg, ObjectPool::HeldOut)?;

    let ours = train_or_load(Variant::Ours, cfg, cache)?;
    let ours_basic = eval_model(&ours, &basic, &cfg.sim, "ours-basic")?;
    ours_basic.write(out, "ours-basic")?;
    let ours_held = eval_model(&ours, &held_out, &cfg.sim, "ours-held-out")?;
    ours_held.write(out, "ours-held-out")?;
    log::info!("ours: basic success {:.3}, held-out success {:.3}", ours_basic.grasp_success_rate, ours_held.grasp_success_rate);

    let mut held = Vec::new();
    for variant in [Variant::NoMetric, Variant::Indiscriminate] {
        let model = train_or_load(variant, cfg, cache)?;
        let label = format!("{}-held-out", variant.name());
        let report = eval_model(&model, &held_out, &cfg.sim, &label)?;
        report.write(out, &label)?;
        log::info!("{}: held-out success {:.3}", variant.name(), report.grasp_success_rate);
        held.push(report);
    }

    let (adaptation, _) = evaluate_adaptation(&ours, &cfg.sim, &cfg.train, &cfg.adapt)?;
    fs::write(out.join("adaptation.json"), serde_json::to_vec_pretty(&adaptation)?)?;
    let summary = Summary {
        config_digest: cfg.digest(),
        ours_basic: (&ours_basic).into(),
        ours_held_out: (&ours_held).into(),
        no_metric_held_out: (&held[0]).into(),
        indiscriminate_held_out: (&held[1]).into(),
        adaptation,
    };
    fs::write(out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

/// One line per end-to-end criterion: name, pass flag, measured detail.
pub fn criteria(s: &Summary) -> Vec<(String, bool, String)> {
    let ours = &s.ours_held_out;
    let nm = &s.no_metric_held_out;
    let ind = &s.indiscriminate_held_out;
    let att = ours.attention_accuracy.unwrap_or(0.0);
    let nm_att = nm.attention_accuracy.unwrap_or(0.0);
    let a = &s.adaptation;
    let per_object_ok = a.objects.iter().all(|o| o.oracle_successes == 1 && o.adapted_success >= o.generic_success);
    vec![
        (
            "basic instance grasping success >= 0.85".into(),
            s.ours_basic.grasp_success_rate >= 0.85,
            format!("success {:.3}", s.ours_basic.grasp_success_rate),
        ),
        (
            "held-out ablation ordering: ours >= no-metric + 0.05 and no-metric >= indiscriminate + 0.20".into(),
            ours.grasp_success_rate >= nm.grasp_success_rate + 0.05 && nm.grasp_success_rate >= ind.grasp_success_rate + 0.20,
            format!("ours {:.3}, no-metric {:.3}, indiscriminate {:.3}", ours.grasp_success_rate, nm.grasp_success_rate, ind.grasp_success_rate),
        ),
        (
            "held-out attention localization >= 0.70 and above no-metric".into(),
            att >= 0.70 && att > nm_att,
            format!("ours {att:.3}, no-metric {nm_att:.3}"),
        ),
        (
            "one-grasp adaptation: one oracle success, per-object success >= generic, mean gain > 0".into(),
            a.objects.len() == 5 && per_object_ok && a.mean_gain > 0.0,
            a.objects
                .iter()
                .map(|o| format!("{} {:.2}->{:.2}", o.name, o.generic_success, o.adapted_success))
                .chain([format!("mean gain {:.3}", a.mean_gain)])
                .collect::<Vec<_>>()
                .join(", "),
        ),
    ]
}
