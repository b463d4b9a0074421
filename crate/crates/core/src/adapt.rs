//! Adapting a trained model to one novel object from a single successful grasp.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::fnv1a;
use crate::attributes::{AttributeVocabulary, QueryMode, QueryText};
use crate::error::{Error, Result};
use crate::eval::{eval_grasping, QueryOverride, TestCase};
use crate::model::{AffordanceMap, Model};
use crate::nn::Real;
use crate::sim::catalogue::{by_name, novel_objects, NovelObject};
use crate::sim::geometry::cos_sin_deg;
use crate::sim::scene::place;
use crate::sim::{
    background_mask, execute_grasp, randomize_domain, render, BackgroundTexture, GraspAction, Heightmap, ObjectSpec,
    Pose, Scene, SceneParams, SimConfig,
};
use crate::train::{label_outcome, random_action, EpisodeRecord, LabelMode, TrainConfig, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub steps: usize,
    /// Fine-tuning learning rate as a fraction of the training rate.
    pub lr_scale: f64,
    pub max_attempts: usize,
    /// Leading attempts that always follow the affordance ranking.
    pub greedy_attempts: usize,
    /// Chance of a random action on later attempts; otherwise the next-ranked action is tried.
    pub fallback_epsilon: f64,
    pub objects: Vec<String>,
    pub cases_per_object: usize,
    pub objects_per_case: usize,
    pub seed: u64,
    /// Adapt all objects into one checkpoint instead of one per object.
    pub shared: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            lr_scale: 0.1,
            max_attempts: 30,
            greedy_attempts: 1,
            fallback_epsilon: 0.5,
            objects: ["apple", "banana", "mug", "dice", "pear"].map(String::from).to_vec(),
            cases_per_object: 50,
            objects_per_case: 4,
            seed: 3_000_017,
            shared: false,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts == 0 || !(0.0..=1.0).contains(&self.fallback_epsilon) || self.lr_scale <= 0.0 {
            return Err(Error::Config("adaptation needs attempts, a positive lr scale and epsilon in [0, 1]".into()));
        }
        for name in &self.objects {
            if by_name(name).is_none() {
                return Err(Error::Config(format!("unknown catalogue object {name:?}")));
            }
        }
        Ok(())
    }
}

/// One collected grasp plus its rotated copies; element 0 is the original.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationSet {
    pub records: Vec<EpisodeRecord>,
    pub object_name: String,
    pub base_query: QueryText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub attempts: usize,
    /// Oracle calls that grasped something.
    pub successes: usize,
}

/// Scene holding only `object`, centered in the workspace.
pub fn sole_object_scene(mut object: ObjectSpec, sim: &SimConfig, seed: u64) -> Scene {
    let mid = sim.workspace / 2.0;
    object.pose = Pose { x: mid, y: mid, yaw: object.pose.yaw };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = randomize_domain(&SceneParams { objects: vec![], texture: BackgroundTexture::default() }, &sim.domain, &mut rng).texture;
    Scene { objects: vec![object], workspace: sim.workspace, texture, rng_seed: rng.random() }
}

/// Runs the model on a sole-object scene until one grasp succeeds.
pub fn collect_one_grasp<F: Real, R: Rng + ?Sized>(
    model: &Model<F>,
    scene: &Scene,
    query: &QueryText,
    sim: &SimConfig,
    cfg: &AdaptConfig,
    rng: &mut R,
) -> Result<(EpisodeRecord, CollectionStats)> {
    if scene.objects.len() != 1 {
        return Err(Error::Config("one-grasp collection needs a sole object".into()));
    }
    let v_pre = Arc::new(render(scene, sim));
    let mut ranked = ranked_actions(&model.predict(&v_pre, query)?).into_iter();
    let mut stats = CollectionStats { attempts: 0, successes: 0 };
    for attempt in 0..cfg.max_attempts {
        let explore = attempt >= cfg.greedy_attempts && rng.random::<f64>() < cfg.fallback_epsilon;
        let action = match ranked.next() {
            Some(a) if !explore => a,
            _ => random_action(&v_pre, sim.bg_threshold, sim.orientations, rng),
        };
        stats.attempts += 1;
        let outcome = execute_grasp(scene, &action, sim)?;
        let Some(id) = outcome.grasped else { continue };
        stats.successes += 1;
        let target = label_outcome(query, scene, &outcome, LabelMode::Similarity, Default::default())?;
        let record = EpisodeRecord {
            step: 0,
            scene: Arc::new(scene.clone()),
            mask: Arc::new(background_mask(&v_pre, sim.bg_threshold)),
            v_pre,
            query: query.clone(),
            action,
            target,
            v_post: Some(Arc::new(render(&outcome.post_scene, sim))),
            grasped_label: Some(scene.object(id)?.label.clone()),
            her: false,
        };
        return Ok((record, stats));
    }
    Err(Error::AdaptationFailed(cfg.max_attempts))
}

/// Every action ordered by decreasing affordance; ties keep `select_action`'s order.
pub fn ranked_actions(am: &AffordanceMap) -> Vec<GraspAction> {
    let mut order: Vec<usize> = (0..am.data.len()).collect();
    order.sort_by(|&a, &b| am.data[b].total_cmp(&am.data[a]));
    let p = am.size * am.size;
    order.into_iter().map(|i| GraspAction { k: i / p, row: (i % p) / am.size, col: i % am.size }).collect()
}

/// Bilinear rotation of an image about its center by `deg` degrees; samples
/// falling outside the image take the nearest edge value.
pub fn rotate_heightmap(hm: &Heightmap, deg: f64) -> Heightmap {
    if deg.rem_euclid(360.0) == 0.0 {
        return hm.clone();
    }
    let n = hm.size;
    let mid = (n as f64 - 1.0) / 2.0;
    let (c, s) = cos_sin_deg(deg);
    let clamp = |v: f64| v.clamp(0.0, n as f64 - 1.0);
    let mut out = Heightmap::new(n, hm.resolution);
    for r in 0..n {
        for col in 0..n {
            let (dr, dc) = (r as f64 - mid, col as f64 - mid);
            let sr = clamp(mid + dr * c - dc * s);
            let sc = clamp(mid + dc * c + dr * s);
            let (r0, c0) = (sr.floor() as usize, sc.floor() as usize);
            let (r1, c1) = ((r0 + 1).min(n - 1), (c0 + 1).min(n - 1));
            let (fr, fc) = ((sr - r0 as f64) as f32, (sc - c0 as f64) as f32);
            let taps = [(r0, c0, (1.0 - fr) * (1.0 - fc)), (r0, c1, (1.0 - fr) * fc), (r1, c0, fr * (1.0 - fc)), (r1, c1, fr * fc)];
            let o = r * n + col;
            let mut d = 0.0;
            let mut rgb = [0.0f32; 3];
            for (tr, tc, w) in taps {
                if w == 0.0 {
                    continue;
                }
                let i = tr * n + tc;
                d += w * hm.depth[i];
                for (ch, v) in rgb.iter_mut().enumerate() {
                    *v += w * hm.rgb[3 * i + ch];
                }
            }
            out.depth[o] = d;
            out.rgb[3 * o..3 * o + 3].copy_from_slice(&rgb);
        }
    }
    out
}

/// Pixel that `(row, col)` moves to when the image is rotated by `deg`.
pub fn rotate_pixel(row: usize, col: usize, size: usize, deg: f64) -> Option<(usize, usize)> {
    let mid = (size as f64 - 1.0) / 2.0;
    let (c, s) = cos_sin_deg(deg);
    let (dr, dc) = (row as f64 - mid, col as f64 - mid);
    let r = (mid + dr * c + dc * s).round();
    let cc = (mid + dc * c - dr * s).round();
    (r >= 0.0 && cc >= 0.0 && r < size as f64 && cc < size as f64).then_some((r as usize, cc as usize))
}

/// Rotated copies of a record, one per orientation step.
pub fn augment_rotations(record: &EpisodeRecord, orientations: usize, object_name: &str, sim: &SimConfig) -> Result<AdaptationSet> {
    let step = 180.0 / orientations as f64;
    let mut records = vec![record.clone()];
    for i in 1..orientations {
        let deg = step * i as f64;
        let v_pre = rotate_heightmap(&record.v_pre, deg);
        let (row, col) = rotate_pixel(record.action.row, record.action.col, v_pre.size, deg).ok_or(Error::RotationOutOfBounds(i))?;
        records.push(EpisodeRecord {
            scene: Arc::new(record.scene.rotated(deg)),
            mask: Arc::new(background_mask(&v_pre, sim.bg_threshold)),
            v_post: record.v_post.as_ref().map(|p| Arc::new(rotate_heightmap(p, deg))),
            v_pre: Arc::new(v_pre),
            action: GraspAction { row, col, k: (record.action.k + i) % orientations },
            ..record.clone()
        });
    }
    Ok(AdaptationSet { records, object_name: object_name.to_string(), base_query: record.query.clone() })
}

/// Fine-tunes a copy of `model` on the set with the motion loss only.
pub fn adapt_model<F: Real>(model: &Model<F>, set: &AdaptationSet, steps: usize, train: &TrainConfig, lr_scale: f64, seed: u64) -> Result<Model<F>> {
    let mut config = train.clone();
    config.weights.lambda_r = 0.0;
    config.optimizer.lr *= lr_scale;
    config.batch_size = set.records.len();
    let mut trainer = Trainer::new(model.clone(), config, seed);
    let batch: Vec<&EpisodeRecord> = set.records.iter().collect();
    for _ in 0..steps {
        trainer.step_on(&batch)?;
    }
    Ok(trainer.model)
}

/// Mean predicted affordance over the record's object footprint, all orientations.
pub fn footprint_affordance<F: Real>(model: &Model<F>, record: &EpisodeRecord, sim: &SimConfig) -> Result<f64> {
    let am = model.predict(&record.v_pre, &record.query)?;
    let n = am.size;
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..n {
        for c in 0..n {
            let p = sim.pixel_center(r, c);
            if record.scene.objects.iter().any(|o| o.contains(p)) {
                for k in 0..am.orientations {
                    sum += am.get(k, r, c) as f64;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

/// Scenes with the catalogue object `name` as target among distinct-label
/// held-out distractors.
pub fn adaptation_cases(name: &str, count: usize, objects: usize, seed: u64, sim: &SimConfig, vocab: &AttributeVocabulary) -> Result<Vec<TestCase>> {
    let target = by_name(name).ok_or_else(|| Error::Config(format!("unknown catalogue object {name:?}")))?;
    let items = novel_objects();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_salt(name));
    let mut cases = Vec::with_capacity(count);
    for id in 0..count {
        let mut chosen: Vec<&NovelObject> = vec![&target];
        let mut pool: Vec<&NovelObject> = items.iter().filter(|o| o.name != target.name).collect();
        while chosen.len() < objects {
            if pool.is_empty() {
                return Err(Error::NotEnoughCombinations { requested: objects, available: chosen.len() });
            }
            let o = pool.swap_remove(rng.random_range(0..pool.len()));
            if chosen.iter().all(|c| c.label() != o.label()) {
                chosen.push(o);
            }
        }
        let mut specs: Vec<ObjectSpec> = chosen.iter().enumerate().map(|(i, o)| o.spec(i as u32 + 1, &mut rng)).collect();
        let texture = randomize_domain(&SceneParams { objects: vec![], texture: BackgroundTexture::default() }, &sim.domain, &mut rng).texture;
        place(&mut specs, sim, &mut rng)?;
        let scene = Scene { objects: specs, workspace: sim.workspace, texture, rng_seed: rng.random() };
        let query = vocab.make_query(&target.label(), None, QueryMode::Both)?;
        cases.push(TestCase { id, scene, target_id: 1, query });
    }
    Ok(cases)
}

fn name_salt(name: &str) -> u64 {
    fnv1a(name.as_bytes())
}

/// Adaptation of one object: name registration, one grasp, rotation copies, fine-tuning.
#[derive(Debug, Clone)]
pub struct Adapted<F: Real> {
    pub model: Model<F>,
    pub set: AdaptationSet,
    pub name_id: u32,
    pub stats: CollectionStats,
    pub pre_affordance: f64,
    pub post_affordance: f64,
}

pub fn adapt_object<F: Real>(model: &Model<F>, name: &str, sim: &SimConfig, train: &TrainConfig, cfg: &AdaptConfig) -> Result<Adapted<F>> {
    let object = by_name(name).ok_or_else(|| Error::Config(format!("unknown catalogue object {name:?}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ name_salt(name));
    let mut named = model.clone();
    let base = named.vocab.make_query(&object.label(), None, QueryMode::Both)?;
    named.register_name_for_query(name, &base)?;
    let name_id = named.vocab.name_id(name).expect("name just registered");
    let query = named.vocab.make_query(&object.label(), Some(name_id), QueryMode::Named)?;
    let mut spec = object.spec(1, &mut rng);
    spec.name = Some(name_id);
    let scene = sole_object_scene(spec, sim, rng.random());
    let (record, stats) = collect_one_grasp(&named, &scene, &query, sim, cfg, &mut rng)?;
    let set = augment_rotations(&record, sim.orientations, name, sim)?;
    let pre = mean_footprint(&named, &set, sim)?;
    let adapted = adapt_model(&named, &set, cfg.steps, train, cfg.lr_scale, rng.random())?;
    let post = mean_footprint(&adapted, &set, sim)?;
    Ok(Adapted { model: adapted, set, name_id, stats, pre_affordance: pre, post_affordance: post })
}

fn mean_footprint<F: Real>(model: &Model<F>, set: &AdaptationSet, sim: &SimConfig) -> Result<f64> {
    let mut sum = 0.0;
    for r in &set.records {
        sum += footprint_affordance(model, r, sim)?;
    }
    Ok(sum / set.records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAdaptation {
    pub name: String,
    pub attempts: usize,
    pub oracle_successes: usize,
    pub pre_affordance: f64,
    pub post_affordance: f64,
    pub generic_success: f64,
    pub adapted_success: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub shared: bool,
    pub objects: Vec<ObjectAdaptation>,
    pub mean_gain: f64,
}

/// Adapts every configured object and compares generic and adapted success
/// on paired cases: the generic model gets the attribute query, the adapted
/// model the named query.
pub fn evaluate_adaptation<F: Real>(generic: &Model<F>, sim: &SimConfig, train: &TrainConfig, cfg: &AdaptConfig) -> Result<(AdaptReport, Vec<Model<F>>)> {
    let mut adapted = Vec::new();
    let mut base = generic.clone();
    for name in &cfg.objects {
        let a = adapt_object(&base, name, sim, train, cfg)?;
        if cfg.shared {
            base = a.model.clone();
        }
        adapted.push(a);
    }
    let mut objects = Vec::new();
    let mut models = Vec::new();
    for (name, a) in cfg.objects.iter().zip(adapted) {
        let eval_model = if cfg.shared { base.clone() } else { a.model.clone() };
        let cases = adaptation_cases(name, cfg.cases_per_object, cfg.objects_per_case, cfg.seed, sim, &generic.vocab)?;
        let generic_report = eval_grasping(&mut generic.clone(), &cases, sim, "generic")?;
        let name_id = eval_model.vocab.name_id(name).ok_or(Error::MissingName)?;
        let vocab = eval_model.vocab.clone();
        let mut policy = QueryOverride {
            model: &eval_model,
            query: |c: &TestCase| vocab.make_query(&c.query.label, Some(name_id), QueryMode::Named),
        };
        let adapted_report = eval_grasping(&mut policy, &cases, sim, "adapted")?;
        objects.push(ObjectAdaptation {
            name: name.clone(),
            attempts: a.stats.attempts,
            oracle_successes: a.stats.successes,
            pre_affordance: a.pre_affordance,
            post_affordance: a.post_affordance,
            generic_success: generic_report.grasp_success_rate,
            adapted_success: adapted_report.grasp_success_rate,
            gain: adapted_report.grasp_success_rate - generic_report.grasp_success_rate,
        });
        models.push(a.model);
    }
    let mean_gain = objects.iter().map(|o| o.gain).sum::<f64>() / objects.len().max(1) as f64;
    Ok((AdaptReport { shared: cfg.shared, objects, mean_gain }, models))
}
