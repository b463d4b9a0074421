//! Checks shared by the integration tests and the acceptance runner.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use attrgrasp::attributes::{similarity, AttributeLabel, AttributeVocabulary, QueryMode, QueryText};
use attrgrasp::config::Config;
use attrgrasp::eval::{eval_model, generate_test_cases};
use attrgrasp::losses::{metric_loss_grad, mine_triplet_indices, motion_loss_grad, LossWeights};
use attrgrasp::model::{fuse, Model, ModelConfig};
use attrgrasp::nn::Tensor;
use attrgrasp::sim::catalogue::novel_objects;
use attrgrasp::sim::geometry::Primitive;
use attrgrasp::sim::scene::training_combos;
use attrgrasp::sim::{
    background_mask, execute_grasp, render, sample_scene, GraspAction, Heightmap, ObjectPool, ObjectSpec, Pose, Scene,
    SimConfig,
};
use attrgrasp::train::{batch_gradients, collect_only, EpisodeRecord};

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &'static str, failures: Vec<String>, summary: String) -> Self {
        let pass = failures.is_empty();
        let detail = if pass { summary } else { format!("{summary}; {}", failures.join("; ")) };
        Self { name, pass, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

// ---------------------------------------------------------------- exact oracles

fn brute_similarity(a: &[u32], b: &[u32]) -> f64 {
    let mut hits = 0.0;
    for i in 0..a.len() {
        if a[i] != 0 && a[i] == b[i] {
            hits += 1.0;
        }
    }
    hits / a.len() as f64
}

pub fn similarity_failures() -> (usize, Vec<String>) {
    let mut failures = Vec::new();
    let mut pairs = 0;
    let labels: Vec<Vec<u32>> = (0..=5).flat_map(|c| (0..=4).map(move |s| vec![c, s])).collect();
    for a in &labels {
        for b in &labels {
            pairs += 1;
            let got = similarity(&AttributeLabel(a.clone()), &AttributeLabel(b.clone())).unwrap();
            if got != brute_similarity(a, b) {
                failures.push(format!("s({a:?},{b:?}) = {got}"));
            }
        }
    }
    let worked = [(vec![1, 3], vec![2, 3], 0.5), (vec![1, 0], vec![2, 0], 0.0)];
    for (a, b, want) in worked {
        let got = similarity(&AttributeLabel(a.clone()), &AttributeLabel(b.clone())).unwrap();
        if got != want {
            failures.push(format!("worked value s({a:?},{b:?}) = {got}, expected {want}"));
        }
    }
    (pairs, failures)
}

fn scalar_motion_loss(map: &[f64], n: usize, (r, c): (usize, usize), target: f64, bg: &[bool], lambda_m: f64) -> f64 {
    let mut loss = (map[r * n + c] - target).powi(2);
    let count = bg.iter().filter(|&&b| b).count();
    let mut reg = 0.0;
    for i in 0..map.len() {
        if bg[i] {
            reg += map[i] * map[i];
        }
    }
    if count > 0 {
        loss += lambda_m * reg / count as f64;
    }
    loss
}

fn scalar_metric_loss(vectors: &[Vec<f64>], triplets: &[[usize; 3]], alpha: f64) -> f64 {
    let d = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let mut total = 0.0;
    for t in triplets {
        let h = d(&vectors[t[0]], &vectors[t[1]]) - d(&vectors[t[0]], &vectors[t[2]]) + alpha;
        if h > 0.0 {
            total += h;
        }
    }
    total
}

pub fn loss_failures(trials: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    for trial in 0..trials {
        let n = 16;
        let map: Vec<f64> = (0..n * n).map(|_| rng.random()).collect();
        let bg: Vec<bool> = (0..n * n).map(|_| rng.random_bool(0.6)).collect();
        if !bg.iter().any(|&b| b) {
            continue;
        }
        let pixel = (rng.random_range(0..n), rng.random_range(0..n));
        let target = [0.0, 0.5, 1.0][trial % 3];
        let lambda_m = rng.random_range(0.0..1.0);
        let mask = attrgrasp::sim::Mask { size: n, data: bg.clone() };
        let (got, _) = motion_loss_grad(&map, n, pixel, target, &mask, lambda_m).unwrap();
        let want = scalar_motion_loss(&map, n, pixel, target, &bg, lambda_m);
        if (got - want).abs() > 1e-6 {
            failures.push(format!("motion loss {got} vs {want}"));
        }
        let vectors: Vec<Vec<f64>> = (0..8).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let triplets: Vec<[usize; 3]> = (0..6).map(|_| [rng.random_range(0..8), rng.random_range(0..8), rng.random_range(0..8)]).collect();
        let alpha = rng.random_range(0.1..1.0);
        let (got, _) = metric_loss_grad(&vectors, &triplets, alpha);
        let want = scalar_metric_loss(&vectors, &triplets, alpha);
        if (got - want).abs() > 1e-6 {
            failures.push(format!("metric loss {got} vs {want}"));
        }
    }
    failures
}

pub fn mining_failures(trials: usize) -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut mined = 0;
    let mut failures = Vec::new();
    for _ in 0..trials {
        let len = rng.random_range(3..20);
        let labels: Vec<AttributeLabel> = (0..len).map(|_| AttributeLabel(vec![rng.random_range(0..=5), rng.random_range(0..=4)])).collect();
        for [a, p, n] in mine_triplet_indices(&labels, 32, &mut rng) {
            mined += 1;
            let sp = brute_similarity(&labels[a].0, &labels[p].0);
            let sn = brute_similarity(&labels[a].0, &labels[n].0);
            if sp <= sn || a == p || a == n || p == n {
                failures.push(format!("triplet {a},{p},{n} with s+ {sp} s- {sn}"));
            }
        }
    }
    (mined, failures)
}

pub fn her_failures(steps: usize) -> (usize, Vec<String>) {
    let cfg = Config::default();
    let model: Model<f32> = Model::new(cfg.model.clone(), AttributeVocabulary::default()).unwrap();
    let buffer = collect_only(&model, &cfg.train, &cfg.sim, steps, 5).unwrap();
    let mut her = 0;
    let mut failures = Vec::new();
    for r in buffer.iter() {
        let expected = match &r.grasped_label {
            Some(g) => brute_similarity(&r.query.label.0, &g.0),
            None => 0.0,
        };
        if r.target != expected {
            failures.push(format!("step {} her {}: target {} expected {expected}", r.step, r.her, r.target));
        }
        if r.her {
            her += 1;
            if r.target != 1.0 || r.query.label.specified() != r.query.label.len() {
                failures.push(format!("step {}: hindsight query {:?} target {}", r.step, r.query.text, r.target));
            }
        }
        if r.success() != r.v_post.is_some() {
            failures.push(format!("step {}: post image presence mismatch", r.step));
        }
    }
    (her, failures)
}

pub fn exact_oracles() -> Check {
    let (pairs, mut failures) = similarity_failures();
    failures.extend(loss_failures(300));
    let (mined, f) = mining_failures(300);
    failures.extend(f);
    let (her, f) = her_failures(300);
    failures.extend(f);
    if her == 0 {
        failures.push("no hindsight records were produced".into());
    }
    Check::new(
        "exact-oracle suite",
        failures,
        format!("{pairs} label pairs, 300 loss trials, {mined} mined triplets, {her} hindsight records"),
    )
}

// ---------------------------------------------------------------- numerical suite

pub fn tiny_config(image_size: usize) -> ModelConfig {
    ModelConfig {
        image_size,
        orientations: 6,
        embed_dim: 4,
        encoder_channels: [3, 4],
        decoder_channels: [4, 3, 3],
        text_hidden: 5,
        seed: 21,
        ..ModelConfig::default()
    }
}

fn random_heightmap(n: usize, rng: &mut ChaCha8Rng) -> Heightmap {
    let mut hm = Heightmap::new(n, 0.005);
    for d in &mut hm.depth {
        *d = if rng.random_bool(0.5) { rng.random_range(0.01..0.05) } else { 0.0 };
    }
    for v in &mut hm.rgb {
        *v = rng.random();
    }
    hm
}

/// Batch mixing successes (with post images) and failures over varied labels.
pub fn synthetic_batch(model: &Model<f64>, n: usize, count: usize, seed: u64) -> Vec<EpisodeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = &model.vocab;
    let scene = Arc::new(Scene::empty(n as f64 * 0.005, Default::default(), 0));
    (0..count)
        .map(|i| {
            let v_pre = random_heightmap(n, &mut rng);
            let mask = background_mask(&v_pre, 0.002);
            let label = AttributeLabel::full(rng.random_range(1..=5), rng.random_range(1..=4));
            let mode = QueryMode::COLLECTION[i % 3];
            let query = vocab.make_query(&label, None, mode).unwrap();
            let success = i % 4 != 3;
            let grasped = AttributeLabel::full(rng.random_range(1..=5), rng.random_range(1..=4));
            EpisodeRecord {
                step: i as u64,
                scene: scene.clone(),
                mask: Arc::new(mask),
                query,
                action: GraspAction { row: rng.random_range(0..n), col: rng.random_range(0..n), k: rng.random_range(0..6) },
                target: if success { rng.random_range(0.0..1.0) } else { 0.0 },
                v_post: success.then(|| Arc::new(random_heightmap(n, &mut rng))),
                grasped_label: success.then_some(grasped),
                v_pre: Arc::new(v_pre),
                her: false,
            }
        })
        .collect()
}

/// Largest per-tensor relative error between analytic and central-difference gradients.
pub fn gradient_errors(image_size: usize, samples_per_tensor: usize) -> BTreeMap<String, f64> {
    let mut model: Model<f64> = Model::new(tiny_config(image_size), AttributeVocabulary::default()).unwrap();
    // zero biases put exactly-zero activations on relu kinks; move off them
    let mut jitter = ChaCha8Rng::seed_from_u64(8);
    for t in model.params.tensors.iter_mut().filter(|t| t.name.ends_with("bias")) {
        for v in &mut t.data {
            *v = jitter.random_range(-0.1..0.1);
        }
    }
    let records = synthetic_batch(&model, image_size, 8, 3);
    let batch: Vec<&EpisodeRecord> = records.iter().collect();
    let weights = LossWeights { lambda_m: 0.3, lambda_r: 0.7, alpha: 0.5 };
    let mining = ChaCha8Rng::seed_from_u64(99);
    let objective = |m: &Model<f64>| batch_gradients(m, &batch, &weights, 16, &mut mining.clone()).unwrap();
    let (stats, grads) = objective(&model);
    assert!(stats.triplets > 0 && stats.l_r > 0.0, "the batch must exercise the metric term");
    let mut pick = ChaCha8Rng::seed_from_u64(5);
    let mut out = BTreeMap::new();
    for (ti, t) in model.params.tensors.iter().enumerate() {
        let idx: Vec<usize> = if t.data.len() <= samples_per_tensor {
            (0..t.data.len()).collect()
        } else {
            (0..samples_per_tensor).map(|_| pick.random_range(0..t.data.len())).collect()
        };
        let mut fd = Vec::new();
        let mut an = Vec::new();
        for &i in &idx {
            let h = 1e-6;
            let mut plus = model.clone();
            plus.params.tensors[ti].data[i] += h;
            let mut minus = model.clone();
            minus.params.tensors[ti].data[i] -= h;
            fd.push((objective(&plus).0.total - objective(&minus).0.total) / (2.0 * h));
            an.push(grads.tensors[ti].data[i]);
        }
        let diff: f64 = fd.iter().zip(&an).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm = fd.iter().map(|a| a * a).sum::<f64>().sqrt().max(an.iter().map(|a| a * a).sum::<f64>().sqrt());
        out.insert(t.name.clone(), if norm < 1e-10 { diff } else { diff / norm });
    }
    out
}

pub fn numerical_suite() -> Check {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for size in [8, 16] {
        for (name, err) in gradient_errors(size, 12) {
            worst = worst.max(err);
            if !(err < 1e-3) {
                failures.push(format!("{size}x{size} {name}: relative error {err:.2e}"));
            }
        }
    }

    let model: Model<f32> = Model::new(ModelConfig::default(), AttributeVocabulary::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sf = Tensor::from_vec(64, 12, 12, (0..64 * 144).map(|_| rng.random_range(-1.0f32..1.0)).collect());
    if fuse(&sf, &vec![1.0; 64]).unwrap() != sf {
        failures.push("gating with ones changed the features".into());
    }
    if fuse(&sf, &vec![0.0; 64]).unwrap().data.iter().any(|&v| v != 0.0) {
        failures.push("gating with zeros left nonzero features".into());
    }

    let sim = SimConfig::default();
    let vocab = AttributeVocabulary::default();
    let scene = sample_scene(3, 5, true, ObjectPool::Basic, &sim, &vocab).unwrap();
    let hm = render(&scene, &sim);
    let spatial = model.encode_visual_spatial(&hm).unwrap();
    let pooled = model.encode_visual_vector(&hm).unwrap();
    let plane = spatial.h * spatial.w;
    for c in 0..spatial.c {
        let mut sum = 0.0f64;
        for i in 0..plane {
            sum += spatial.data[c * plane + i] as f64;
        }
        if (pooled[c] as f64 - sum / plane as f64).abs() > 1e-6 {
            failures.push(format!("pooled channel {c} differs from the spatial mean"));
        }
    }

    // orientation 3 of 6 is a quarter turn
    let mut t = spatial.clone();
    for _ in 0..4 {
        t = model.rotate_features(&t, 3).unwrap();
    }
    if t.data.iter().zip(&spatial.data).any(|(a, b)| a.to_bits() != b.to_bits()) {
        failures.push("four quarter turns did not reproduce the features bit-exactly".into());
    }

    let mut named = model.clone();
    let base = QueryText::parse(&named.vocab, "green sphere").unwrap();
    let before = named.encode_query(&base).unwrap();
    named.register_name_for_query("pear", &base).unwrap();
    let id = named.vocab.name_id("pear").unwrap();
    let q = named.vocab.make_query(&base.label, Some(id), QueryMode::Named).unwrap();
    let after = named.encode_query(&q).unwrap();
    let drift = before.iter().zip(&after).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    if drift as f64 > 1e-7 {
        failures.push(format!("named query text vector moved by {drift:e}"));
    }

    Check::new("numerical suite", failures, format!("max gradient relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- determinism

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn determinism(steps: usize, cases: usize) -> Check {
    let mut cfg = Config::default();
    cfg.train.collection_steps = steps;
    let tmp = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    let mut dirs = Vec::new();
    let mut reports = Vec::new();
    for run in 0..2 {
        let model: Model<f32> = Model::new(cfg.model.clone(), AttributeVocabulary::default()).unwrap();
        let buffer = collect_only(&model, &cfg.train, &cfg.sim, steps, cfg.seed).unwrap();
        let dir = tmp.path().join(format!("buffer{run}"));
        buffer.save(&dir).unwrap();
        dirs.push(dir_bytes(&dir));
        let vocab = AttributeVocabulary::default();
        let cases = generate_test_cases(cfg.eval.held_out_seed, cases, ObjectPool::HeldOut, 4, &cfg.sim, &vocab).unwrap();
        let report = eval_model(&model, &cases, &cfg.sim, "determinism").unwrap();
        let out = tmp.path().join(format!("report{run}"));
        report.write(&out, "r").unwrap();
        reports.push(dir_bytes(&out));
    }
    if dirs[0] != dirs[1] {
        failures.push("collection buffers differ".into());
    }
    if reports[0] != reports[1] {
        failures.push("evaluation reports differ".into());
    }
    Check::new("determinism", failures, format!("{} buffer files and {} report files byte-identical", dirs[0].len(), reports[0].len()))
}

// ---------------------------------------------------------------- simulator oracle

const H: f64 = 0.0005;

/// Point-in-footprint test written directly from the object description.
fn on_object(o: &ObjectSpec, p: [f64; 2]) -> bool {
    let inside = |prim: Primitive, cx: f64, cy: f64, yaw: f64, size: [f64; 2]| {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        let lx = dx * yaw.cos() + dy * yaw.sin();
        let ly = -dx * yaw.sin() + dy * yaw.cos();
        match prim {
            Primitive::Box => lx.abs() <= size[0] / 2.0 && ly.abs() <= size[1] / 2.0,
            _ => lx * lx + ly * ly <= (size[0] / 2.0).powi(2),
        }
    };
    let main = match o.shape {
        1 | 2 => Primitive::Box,
        3 => Primitive::Cylinder,
        _ => Primitive::Sphere,
    };
    if inside(main, o.pose.x, o.pose.y, o.pose.yaw, o.size) {
        return true;
    }
    o.attachments.iter().any(|a| {
        let (c, s) = (o.pose.yaw.cos(), o.pose.yaw.sin());
        let cx = o.pose.x + a.offset[0] * c - a.offset[1] * s;
        let cy = o.pose.y + a.offset[0] * s + a.offset[1] * c;
        inside(a.primitive, cx, cy, o.pose.yaw + a.yaw, a.size)
    })
}

/// Rasterized caliper width: extent of on-object samples along the closing line.
fn raster_width(o: &ObjectSpec, p: [f64; 2], u: [f64; 2]) -> Option<f64> {
    let reach = 0.2;
    let steps = (2.0 * reach / (H / 2.0)) as i64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=steps {
        let t = -reach + i as f64 * H / 2.0;
        if on_object(o, [p[0] + t * u[0], p[1] + t * u[1]]) {
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    (hi >= lo).then_some(hi - lo)
}

/// Whether a finger rectangle grown by `grow` on every side touches the object.
fn raster_finger_hits(o: &ObjectSpec, center: [f64; 2], u: [f64; 2], half: [f64; 2], grow: f64) -> bool {
    let v = [-u[1], u[0]];
    let (ha, hb) = (half[0] + grow, half[1] + grow);
    if ha <= 0.0 || hb <= 0.0 {
        return false;
    }
    let na = (2.0 * ha / H).ceil() as i64;
    let nb = (2.0 * hb / H).ceil() as i64;
    for i in 0..=na {
        let a = -ha + 2.0 * ha * i as f64 / na as f64;
        for j in 0..=nb {
            let b = -hb + 2.0 * hb * j as f64 / nb as f64;
            if on_object(o, [center[0] + a * u[0] + b * v[0], center[1] + a * u[1] + b * v[1]]) {
                return true;
            }
        }
    }
    false
}

/// Rasterized outcome, or `None` when the case lies within the raster band of a threshold.
fn raster_outcome(o: &ObjectSpec, action: &GraspAction, sim: &SimConfig) -> Option<bool> {
    let p = sim.pixel_center(action.row, action.col);
    if !on_object(o, p) {
        return Some(false);
    }
    let angle = (action.k as f64 * 180.0 / sim.orientations as f64 + 90.0).to_radians();
    let u = [angle.cos(), angle.sin()];
    let width = raster_width(o, p, u)?;
    let g = &sim.gripper;
    let band = 2.0 * H;
    if (width - g.w_max).abs() <= band || (width - g.w_min).abs() <= band {
        return None;
    }
    if width > g.w_max || width < g.w_min {
        return Some(false);
    }
    let offset = g.w_max / 2.0 + g.finger_width / 2.0;
    let half = [g.finger_width / 2.0, g.finger_length / 2.0];
    let mut blocked = false;
    for s in [-1.0, 1.0] {
        let c = [p[0] + s * offset * u[0], p[1] + s * offset * u[1]];
        let strict = raster_finger_hits(o, c, u, half, -band);
        let loose = raster_finger_hits(o, c, u, half, band);
        if strict != loose {
            return None;
        }
        blocked |= strict;
    }
    Some(!blocked)
}

/// A random single object (basic or catalogue) placed at a random pose.
fn random_single_scene(seed: u64, sim: &SimConfig, vocab: &AttributeVocabulary) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = if rng.random_bool(0.5) { ObjectPool::Basic } else { ObjectPool::HeldOut };
    sample_scene(rng.random(), 1, true, pool, sim, vocab).unwrap()
}

pub struct RasterStats {
    pub cases: usize,
    pub decisive: usize,
    pub successes: usize,
    pub disagreements: Vec<String>,
}

pub fn raster_oracle(scenes: usize, actions_per_scene: usize) -> RasterStats {
    let sim = SimConfig::default();
    let vocab = AttributeVocabulary::default();
    let mut stats = RasterStats { cases: 0, decisive: 0, successes: 0, disagreements: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for s in 0..scenes {
        let scene = random_single_scene(1_000 + s as u64, &sim, &vocab);
        let o = &scene.objects[0];
        let r = o.bounding_radius() + 0.005;
        for _ in 0..actions_per_scene {
            let x = (o.pose.x + rng.random_range(-r..r)).clamp(0.0, sim.workspace - 1e-9);
            let y = (o.pose.y + rng.random_range(-r..r)).clamp(0.0, sim.workspace - 1e-9);
            let (row, col) = sim.world_to_pixel([x, y]).unwrap();
            let action = GraspAction { row, col, k: rng.random_range(0..sim.orientations) };
            stats.cases += 1;
            let got = execute_grasp(&scene, &action, &sim).unwrap().grasped.is_some();
            if let Some(want) = raster_outcome(o, &action, &sim) {
                stats.decisive += 1;
                stats.successes += want as usize;
                if got != want {
                    stats.disagreements.push(format!("scene {s} action {action:?}: simulator {got}, raster {want}"));
                }
            }
        }
    }
    stats
}

/// Outcomes of random actions in random multi-object scenes against the
/// same actions after a quarter turn of scene and action.
pub fn equivariance_failures(scenes: usize, actions_per_scene: usize) -> (usize, Vec<String>) {
    let sim = SimConfig::default();
    let vocab = AttributeVocabulary::default();
    let n = sim.image_size();
    let quarter = sim.orientations / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let mut failures = Vec::new();
    let mut grasped = 0;
    for s in 0..scenes {
        let pool = if s % 2 == 0 { ObjectPool::Basic } else { ObjectPool::HeldOut };
        let scene = sample_scene(s as u64, 4, true, pool, &sim, &vocab).unwrap();
        let turned = scene.rotated(90.0);
        for _ in 0..actions_per_scene {
            let o = &scene.objects[rng.random_range(0..scene.objects.len())];
            let (row, col) = sim
                .world_to_pixel([o.pose.x + rng.random_range(-0.02..0.02), o.pose.y + rng.random_range(-0.02..0.02)])
                .unwrap();
            let a = GraspAction { row, col, k: rng.random_range(0..sim.orientations) };
            let b = GraspAction { row: col, col: n - 1 - row, k: (a.k + quarter) % sim.orientations };
            let ga = execute_grasp(&scene, &a, &sim).unwrap().grasped;
            let gb = execute_grasp(&turned, &b, &sim).unwrap().grasped;
            grasped += ga.is_some() as usize;
            if ga != gb {
                failures.push(format!("scene {s} {a:?}: {ga:?} vs rotated {gb:?}"));
            }
        }
    }
    (grasped, failures)
}

/// Every catalogue object and a spread of basic objects admit a successful grasp when alone.
pub fn graspable_alone_failures(basic_scenes: usize) -> Vec<String> {
    let sim = SimConfig::default();
    let vocab = AttributeVocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    let mid = sim.workspace / 2.0;
    let mut scenes: Vec<(String, Scene)> = Vec::new();
    for o in novel_objects() {
        for yaw in [0.0, 0.7, 2.0] {
            let mut spec = o.spec(1, &mut rng);
            spec.pose = Pose { x: mid, y: mid, yaw };
            let mut scene = Scene::empty(sim.workspace, Default::default(), 0);
            scene.objects.push(spec);
            scenes.push((format!("{} at yaw {yaw}", o.name), scene));
        }
    }
    let mut labels = std::collections::BTreeSet::new();
    for seed in 0..basic_scenes as u64 {
        let scene = sample_scene(seed, 1, true, ObjectPool::Basic, &sim, &vocab).unwrap();
        labels.insert(scene.objects[0].label.clone());
        scenes.push((format!("basic object {} (seed {seed})", scene.objects[0].label), scene));
    }
    let mut failures = Vec::new();
    if labels.len() != training_combos(&sim, &vocab).len() {
        failures.push(format!("only {} basic labels were sampled", labels.len()));
    }
    let n = sim.image_size();
    for (name, scene) in scenes {
        let o = &scene.objects[0];
        let ok = (0..n * n).filter(|&i| on_object(o, sim.pixel_center(i / n, i % n))).any(|i| {
            (0..sim.orientations).any(|k| {
                execute_grasp(&scene, &GraspAction { row: i / n, col: i % n, k }, &sim).unwrap().grasped.is_some()
            })
        });
        if !ok {
            failures.push(format!("{name} cannot be grasped alone"));
        }
    }
    failures
}

pub fn simulator_suite(scenes: usize) -> Check {
    let raster = raster_oracle(scenes, 4);
    let mut failures = raster.disagreements.clone();
    failures.truncate(5);
    if raster.decisive * 10 < raster.cases * 9 {
        failures.push(format!("only {} of {} cases were decisive", raster.decisive, raster.cases));
    }
    let (grasped, eq) = equivariance_failures(scenes / 4, 8);
    failures.extend(eq.into_iter().take(5));
    failures.extend(graspable_alone_failures(200));
    Check::new(
        "simulator oracle suite",
        failures,
        format!(
            "{} single-object scenes, {} of {} actions decisive ({} successes), {} disagreements; quarter-turn equivariance over {} grasps",
            scenes,
            raster.decisive,
            raster.cases,
            raster.successes,
            raster.disagreements.len(),
            grasped
        ),
    )
}
