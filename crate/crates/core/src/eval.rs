//! Test case generation, grasping and attention evaluation, heatmap export.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeVocabulary, QueryMode, QueryText};
use crate::error::Result;
use crate::model::{select_action, Model, STRIDE};
use crate::nn::Real;
use crate::sim::{execute_grasp, render, sample_scene, target_hit, GraspAction, Heightmap, ObjectPool, Scene, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub basic_cases: usize,
    pub held_out_cases: usize,
    pub objects_per_case: usize,
    pub basic_seed: u64,
    pub held_out_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { basic_cases: 200, held_out_cases: 200, objects_per_case: 4, basic_seed: 1_000_003, held_out_seed: 2_000_003 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: usize,
    pub scene: Scene,
    pub target_id: u32,
    pub query: QueryText,
}

/// Scenes of distinct-label objects with one full-attribute target query each.
pub fn generate_test_cases(
    seed: u64,
    count: usize,
    pool: ObjectPool,
    objects: usize,
    sim: &SimConfig,
    vocab: &AttributeVocabulary,
) -> Result<Vec<TestCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let scene = sample_scene(rng.random(), objects, true, pool, sim, vocab)?;
            let target = &scene.objects[rng.random_range(0..scene.objects.len())];
            let query = vocab.make_query(&target.label, None, QueryMode::Both)?;
            Ok(TestCase { id, target_id: target.id, query, scene })
        })
        .collect()
}

/// Anything that picks a grasp for a test case.
pub trait Policy {
    fn act(&mut self, case: &TestCase, hm: &Heightmap) -> Result<GraspAction>;
}

impl<F: Real> Policy for Model<F> {
    fn act(&mut self, case: &TestCase, hm: &Heightmap) -> Result<GraspAction> {
        Ok(select_action(&self.predict(hm, &case.query)?))
    }
}

/// Wraps a model so each case is queried with a rewritten query.
pub struct QueryOverride<'a, F: Real, Q: Fn(&TestCase) -> Result<QueryText>> {
    pub model: &'a Model<F>,
    pub query: Q,
}

impl<F: Real, Q: Fn(&TestCase) -> Result<QueryText>> Policy for QueryOverride<'_, F, Q> {
    fn act(&mut self, case: &TestCase, hm: &Heightmap) -> Result<GraspAction> {
        Ok(select_action(&self.model.predict(hm, &(self.query)(case)?)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseLog {
    pub case_id: usize,
    pub query: String,
    pub target_id: u32,
    pub action: GraspAction,
    /// Grasp location lies on the target.
    pub recognition_hit: bool,
    pub attention_hit: Option<bool>,
    pub grasped: Option<u32>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub cases: usize,
    pub grasp_success_rate: f64,
    pub recognition_accuracy: f64,
    pub attention_accuracy: Option<f64>,
    /// Fraction of cases where any object was grasped.
    pub any_grasp_rate: f64,
    pub per_case: Vec<CaseLog>,
}

impl EvalReport {
    pub fn from_cases(label: &str, per_case: Vec<CaseLog>) -> Self {
        let n = per_case.len().max(1) as f64;
        let frac = |f: &dyn Fn(&CaseLog) -> bool| per_case.iter().filter(|c| f(c)).count() as f64 / n;
        let attention_accuracy = if per_case.iter().all(|c| c.attention_hit.is_some()) && !per_case.is_empty() {
            Some(frac(&|c| c.attention_hit == Some(true)))
        } else {
            None
        };
        Self {
            label: label.to_string(),
            cases: per_case.len(),
            grasp_success_rate: frac(&|c| c.success),
            recognition_accuracy: frac(&|c| c.recognition_hit),
            attention_accuracy,
            any_grasp_rate: frac(&|c| c.grasped.is_some()),
            per_case,
        }
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, serde_json::to_vec_pretty(self)?)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["case_id", "query", "target_id", "row", "col", "k", "recognition_hit", "attention_hit", "grasped", "success"])?;
        for c in &self.per_case {
            w.write_record([
                c.case_id.to_string(),
                c.query.clone(),
                c.target_id.to_string(),
                c.action.row.to_string(),
                c.action.col.to_string(),
                c.action.k.to_string(),
                c.recognition_hit.to_string(),
                c.attention_hit.map(|b| b.to_string()).unwrap_or_default(),
                c.grasped.map(|g| g.to_string()).unwrap_or_default(),
                c.success.to_string(),
            ])?;
        }
        w.flush()?;
        Ok((json, csv_path))
    }
}

/// Runs one grasp per case and records localization and success.
pub fn eval_grasping<P: Policy + ?Sized>(policy: &mut P, cases: &[TestCase], sim: &SimConfig, label: &str) -> Result<EvalReport> {
    let logs = cases
        .iter()
        .map(|case| {
            let hm = render(&case.scene, sim);
            let action = policy.act(case, &hm)?;
            let outcome = execute_grasp(&case.scene, &action, sim)?;
            Ok(CaseLog {
                case_id: case.id,
                query: case.query.text.clone(),
                target_id: case.target_id,
                action,
                recognition_hit: target_hit(&case.scene, action.row, action.col, case.target_id, sim)?,
                attention_hit: None,
                grasped: outcome.grasped,
                success: outcome.grasped == Some(case.target_id),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_cases(label, logs))
}

/// World point at the center of attention cell `(row, col)`.
pub fn cell_center(row: usize, col: usize, sim: &SimConfig) -> [f64; 2] {
    let s = STRIDE as f64;
    [(col as f64 + 0.5) * s * sim.resolution, (row as f64 + 0.5) * s * sim.resolution]
}

/// Argmax cell of an attention map, first maximum in row-major order.
pub fn attention_argmax<F: Real>(heat: &[F], grid: usize) -> (usize, usize) {
    let mut best = 0;
    for (i, &v) in heat.iter().enumerate() {
        if v > heat[best] {
            best = i;
        }
    }
    (best / grid, best % grid)
}

pub fn attention_hit<F: Real>(model: &Model<F>, case: &TestCase, hm: &Heightmap, sim: &SimConfig) -> Result<bool> {
    let heat = model.attention_heatmap(hm, &case.query)?;
    let (r, c) = attention_argmax(&heat, model.config.grid_size());
    Ok(case.scene.object(case.target_id)?.contains(cell_center(r, c, sim)))
}

/// Fraction of cases whose attention maximum lies on the target.
pub fn eval_attention<F: Real>(model: &Model<F>, cases: &[TestCase], sim: &SimConfig) -> Result<f64> {
    let mut hits = 0;
    for case in cases {
        if attention_hit(model, case, &render(&case.scene, sim), sim)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / cases.len().max(1) as f64)
}

/// Grasping evaluation with attention hits filled in.
pub fn eval_model<F: Real>(model: &Model<F>, cases: &[TestCase], sim: &SimConfig, label: &str) -> Result<EvalReport> {
    let mut policy = model.clone();
    let mut report = eval_grasping(&mut policy, cases, sim, label)?;
    for (log, case) in report.per_case.iter_mut().zip(cases) {
        log.attention_hit = Some(attention_hit(model, case, &render(&case.scene, sim), sim)?);
    }
    Ok(EvalReport::from_cases(label, report.per_case))
}

fn heat_color(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    [v.sqrt(), v * v, (1.0 - v) * 0.6]
}

fn blend(base: [f32; 3], over: [f64; 3]) -> Rgb<u8> {
    let px = |i: usize| ((0.45 * base[i] as f64 + 0.55 * over[i]) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([px(0), px(1), px(2)])
}

fn overlay(hm: &Heightmap, value: impl Fn(usize, usize) -> f64) -> RgbImage {
    let n = hm.size as u32;
    RgbImage::from_fn(n, n, |c, r| blend(hm.pixel_rgb(r as usize, c as usize), heat_color(value(r as usize, c as usize))))
}

fn slug(text: &str) -> String {
    let s: String = text.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect();
    s.split('-').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("-")
}

/// Writes the attention overlay, one overlay per orientation and the chosen
/// grasp drawn over the heightmap. Returns the written paths.
pub fn export_heatmaps<F: Real>(model: &Model<F>, case: &TestCase, sim: &SimConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let hm = render(&case.scene, sim);
    let stem = format!("case{:04}_{}", case.id, slug(&case.query.text));
    let mut paths = Vec::new();

    let heat = model.attention_heatmap(&hm, &case.query)?;
    let (lo, hi) = heat.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v.as_f64()), hi.max(v.as_f64())));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let g = model.config.grid_size();
    let att = overlay(&hm, |r, c| (heat[(r / STRIDE).min(g - 1) * g + (c / STRIDE).min(g - 1)].as_f64() - lo) / span);
    let p = out_dir.join(format!("{stem}_attention.png"));
    att.save(&p)?;
    paths.push(p);

    let am = model.predict(&hm, &case.query)?;
    for k in 0..am.orientations {
        let img = overlay(&hm, |r, c| am.get(k, r, c) as f64);
        let p = out_dir.join(format!("{stem}_affordance_k{k}.png"));
        img.save(&p)?;
        paths.push(p);
    }

    let action = select_action(&am);
    let mut img = overlay(&hm, |_, _| 0.0);
    let u = sim.closing_direction(action.k);
    let half = (sim.gripper.w_max / 2.0 + sim.gripper.finger_width) / sim.resolution;
    let steps = (2.0 * half).ceil() as i64 * 2;
    for s in 0..=steps {
        let t = -half + 2.0 * half * s as f64 / steps as f64;
        let r = action.row as f64 + t * u[1];
        let c = action.col as f64 + t * u[0];
        if r >= 0.0 && c >= 0.0 && (r as usize) < hm.size && (c as usize) < hm.size {
            img.put_pixel(c as u32, r as u32, Rgb([255, 40, 40]));
        }
    }
    img.put_pixel(action.col as u32, action.row as u32, Rgb([255, 255, 255]));
    let p = out_dir.join(format!("{stem}_action.png"));
    img.save(&p)?;
    paths.push(p);
    Ok(paths)
}

/// Number of files [`export_heatmaps`] writes per case.
pub fn heatmap_file_count(orientations: usize) -> usize {
    orientations + 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::model::ModelConfig;

    fn setup() -> (SimConfig, AttributeVocabulary) {
        (SimConfig::default(), AttributeVocabulary::default())
    }

    /// Cheating policy: searches for a successful grasp on the target.
    struct Oracle<'a>(&'a SimConfig);

    impl Policy for Oracle<'_> {
        fn act(&mut self, case: &TestCase, _: &Heightmap) -> Result<GraspAction> {
            let n = self.0.image_size();
            for r in 0..n {
                for c in 0..n {
                    if !target_hit(&case.scene, r, c, case.target_id, self.0)? {
                        continue;
                    }
                    for k in 0..self.0.orientations {
                        let a = GraspAction { row: r, col: c, k };
                        if execute_grasp(&case.scene, &a, self.0)?.grasped == Some(case.target_id) {
                            return Ok(a);
                        }
                    }
                }
            }
            Err(Error::NoGrasp)
        }
    }

    struct Uniform(ChaCha8Rng, usize);

    impl Policy for Uniform {
        fn act(&mut self, _: &TestCase, _: &Heightmap) -> Result<GraspAction> {
            Ok(GraspAction { row: self.0.random_range(0..self.1), col: self.0.random_range(0..self.1), k: self.0.random_range(0..6) })
        }
    }

    #[test]
    fn cases_are_deterministic_and_unique() {
        let (sim, vocab) = setup();
        let a = generate_test_cases(3, 10, ObjectPool::Basic, 4, &sim, &vocab).unwrap();
        assert_eq!(a, generate_test_cases(3, 10, ObjectPool::Basic, 4, &sim, &vocab).unwrap());
        for case in &a {
            assert_eq!(case.scene.objects.len(), 4);
            let mut labels: Vec<_> = case.scene.objects.iter().map(|o| o.label.clone()).collect();
            labels.sort();
            labels.dedup();
            assert_eq!(labels.len(), 4);
            assert_eq!(case.query.label, case.scene.object(case.target_id).unwrap().label);
        }
    }

    #[test]
    fn oracle_policy_scores_perfectly() {
        let (sim, vocab) = setup();
        let cases = generate_test_cases(4, 8, ObjectPool::Basic, 4, &sim, &vocab).unwrap();
        let report = eval_grasping(&mut Oracle(&sim), &cases, &sim, "oracle").unwrap();
        assert_eq!(report.grasp_success_rate, 1.0);
        assert_eq!(report.recognition_accuracy, 1.0);
    }

    #[test]
    fn uniform_policy_matches_footprint_share() {
        let (sim, vocab) = setup();
        let cases = generate_test_cases(5, 400, ObjectPool::Basic, 4, &sim, &vocab).unwrap();
        let n = sim.image_size();
        // expected hit probability per case: target footprint pixels / all pixels
        let mut expected = 0.0;
        let mut var = 0.0;
        for case in &cases {
            let t = case.scene.object(case.target_id).unwrap();
            let px = (0..n * n).filter(|&i| t.contains(sim.pixel_center(i / n, i % n))).count() as f64;
            let p = px / (n * n) as f64;
            expected += p;
            var += p * (1.0 - p);
        }
        let report = eval_grasping(&mut Uniform(ChaCha8Rng::seed_from_u64(1), n), &cases, &sim, "uniform").unwrap();
        let hits = report.recognition_accuracy * cases.len() as f64;
        assert!((hits - expected).abs() <= 3.0 * var.sqrt(), "hits {hits} expected {expected} sd {}", var.sqrt());
        for c in &report.per_case {
            if c.success {
                assert!(c.recognition_hit);
            }
        }
    }

    #[test]
    fn report_rates_match_case_log() {
        let (sim, vocab) = setup();
        let cases = generate_test_cases(6, 6, ObjectPool::HeldOut, 4, &sim, &vocab).unwrap();
        let model: Model<f32> = Model::new(ModelConfig::default(), vocab).unwrap();
        let before = model.params.checksum();
        let report = eval_model(&model, &cases, &sim, "untrained").unwrap();
        assert_eq!(model.params.checksum(), before);
        let succ = report.per_case.iter().filter(|c| c.success).count() as f64 / 6.0;
        assert_eq!(report.grasp_success_rate, succ);
        let att = report.per_case.iter().filter(|c| c.attention_hit == Some(true)).count() as f64 / 6.0;
        assert_eq!(report.attention_accuracy, Some(att));
        assert_eq!(eval_attention(&model, &cases, &sim).unwrap(), att);
        let dir = tempfile::tempdir().unwrap();
        let (json, _) = report.write(dir.path(), "r").unwrap();
        let back: EvalReport = serde_json::from_slice(&fs::read(json).unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn zero_text_vector_attention_is_defined() {
        let heat = vec![0.0f32; 144];
        assert_eq!(attention_argmax(&heat, 12), (0, 0));
        let mut heat = vec![0.0f32; 144];
        heat[5 * 12 + 7] = 2.0;
        assert_eq!(attention_argmax(&heat, 12), (5, 7));
        let sim = SimConfig::default();
        assert_eq!(cell_center(0, 0, &sim), [0.02, 0.02]);
    }

    #[test]
    fn heatmap_export_file_contract() {
        let (sim, vocab) = setup();
        let cases = generate_test_cases(7, 1, ObjectPool::Basic, 4, &sim, &vocab).unwrap();
        let model: Model<f32> = Model::new(ModelConfig::default(), vocab).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = export_heatmaps(&model, &cases[0], &sim, dir.path()).unwrap();
        assert_eq!(paths.len(), heatmap_file_count(6));
        let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
        for p in &paths {
            let img = image::open(p).unwrap();
            assert_eq!((img.width(), img.height()), (96, 96));
            assert!(p.file_name().unwrap().to_str().unwrap().starts_with("case0000_"));
        }
        let again = export_heatmaps(&model, &cases[0], &sim, dir.path()).unwrap();
        let second: Vec<Vec<u8>> = again.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
    }
}
