//! Online data collection, hindsight relabeling, replay buffer and training steps.

use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{similarity_with, AttributeLabel, AttributeVocabulary, QueryMode, QueryText, SimilarityNorm};
use crate::error::{Error, Result};
use crate::losses::{metric_loss_grad, mine_triplet_indices, motion_loss_grad, LossWeights};
use crate::model::{gap_backward, select_action, Model};
use crate::nn::{Adam, AdamConfig, ParamSet, Real, Tensor};
use crate::sim::io::{read_heightmap, write_heightmap};
use crate::sim::{
    background_mask, execute_grasp, render, sample_scene, GraspAction, GraspOutcome, Heightmap, Mask, ObjectPool, Scene,
    SimConfig,
};

/// How grasp outcomes become regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    /// Attribute similarity between query and grasped object.
    #[default]
    Similarity,
    /// 1 for any successful grasp, ignoring the query.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: usize,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self { start: 0.5, end: 0.1, anneal_steps: 2500 }
    }
}

impl ExplorationSchedule {
    /// Linear interpolation from `start` to `end`, constant afterwards.
    pub fn epsilon(&self, step: usize) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.end;
        }
        let t = step as f64 / self.anneal_steps as f64;
        self.start + (self.end - self.start) * t
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.start) || !unit(self.end) || self.end > self.start {
            return Err(Error::Config("exploration must anneal downwards within [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub capacity: usize,
    pub batch_size: usize,
    pub exploration: ExplorationSchedule,
    pub collection_steps: usize,
    /// Full passes over the buffer after collection.
    pub replay_epochs: usize,
    /// Learning-rate multiplier reached at the end of replay, annealed linearly from 1.
    pub replay_lr_floor: f64,
    pub optimizer: AdamConfig,
    pub weights: LossWeights,
    pub triplets_per_batch: usize,
    pub label_mode: LabelMode,
    pub similarity_norm: SimilarityNorm,
    /// Training scenes use pairwise distinct attribute labels.
    pub unique_attributes: bool,
    pub hindsight: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            capacity: 5000,
            batch_size: 16,
            exploration: ExplorationSchedule::default(),
            collection_steps: 5000,
            replay_epochs: 10,
            replay_lr_floor: 0.1,
            optimizer: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
            weights: LossWeights::default(),
            triplets_per_batch: 64,
            label_mode: LabelMode::Similarity,
            similarity_norm: SimilarityNorm::Literal,
            unique_attributes: true,
            hindsight: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 || self.batch_size == 0 {
            return Err(Error::Config("capacity and batch size must be positive".into()));
        }
        if !(self.replay_lr_floor > 0.0 && self.replay_lr_floor <= 1.0) {
            return Err(Error::Config("replay_lr_floor must lie in (0, 1]".into()));
        }
        self.exploration.validate()?;
        self.weights.validate()
    }
}

/// One stored grasp attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Collection step that produced the images.
    pub step: u64,
    pub scene: Arc<Scene>,
    pub v_pre: Arc<Heightmap>,
    pub mask: Arc<Mask>,
    pub query: QueryText,
    pub action: GraspAction,
    /// Regression target for the executed pixel.
    pub target: f64,
    pub v_post: Option<Arc<Heightmap>>,
    pub grasped_label: Option<AttributeLabel>,
    pub her: bool,
}

impl EpisodeRecord {
    pub fn success(&self) -> bool {
        self.grasped_label.is_some()
    }
}

/// Bounded FIFO of records.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    pub capacity: usize,
    records: VecDeque<EpisodeRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, records: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    /// Appends a record, evicting the oldest when full. Returns the evicted record.
    pub fn push(&mut self, record: EpisodeRecord) -> Option<EpisodeRecord> {
        let evicted = if self.records.len() >= self.capacity { self.records.pop_front() } else { None };
        self.records.push_back(record);
        evicted
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, i: usize) -> &EpisodeRecord {
        &self.records[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.records.iter()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let hm_dir = dir.join("heightmaps");
        fs::create_dir_all(&hm_dir)?;
        let mut out = BufWriter::new(fs::File::create(dir.join("records.jsonl"))?);
        let mut last_written = None;
        for r in &self.records {
            if last_written != Some(r.step) {
                write_heightmap(&hm_dir.join(pre_name(r.step)), &r.v_pre)?;
                if let Some(post) = &r.v_post {
                    write_heightmap(&hm_dir.join(post_name(r.step)), post)?;
                }
                last_written = Some(r.step);
            }
            let meta = RecordMeta {
                step: r.step,
                her: r.her,
                query: r.query.text.clone(),
                action: r.action,
                target: r.target,
                grasped_label: r.grasped_label.clone(),
                v_pre: pre_name(r.step),
                v_post: r.v_post.as_ref().map(|_| post_name(r.step)),
                scene: (*r.scene).clone(),
            };
            serde_json::to_writer(&mut out, &meta)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path, capacity: usize, vocab: &AttributeVocabulary, sim: &SimConfig) -> Result<Self> {
        let file = fs::File::open(dir.join("records.jsonl"))?;
        let mut buffer = ReplayBuffer::new(capacity);
        let mut shared: Option<(u64, Arc<Scene>, Arc<Heightmap>, Arc<Mask>, Option<Arc<Heightmap>>)> = None;
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let meta: RecordMeta = serde_json::from_str(&line)?;
            let reuse = matches!(&shared, Some((s, ..)) if *s == meta.step);
            if !reuse {
                let pre = Arc::new(read_heightmap(&dir.join("heightmaps").join(&meta.v_pre), sim.resolution)?);
                let mask = Arc::new(background_mask(&pre, sim.bg_threshold));
                let post = match &meta.v_post {
                    Some(name) => Some(Arc::new(read_heightmap(&dir.join("heightmaps").join(name), sim.resolution)?)),
                    None => None,
                };
                shared = Some((meta.step, Arc::new(meta.scene.clone()), pre, mask, post));
            }
            let (_, scene, pre, mask, post) = shared.clone().unwrap();
            buffer.push(EpisodeRecord {
                step: meta.step,
                scene,
                v_pre: pre,
                mask,
                query: QueryText::parse(vocab, &meta.query)?,
                action: meta.action,
                target: meta.target,
                v_post: if meta.v_post.is_some() { post } else { None },
                grasped_label: meta.grasped_label,
                her: meta.her,
            });
        }
        Ok(buffer)
    }
}

fn pre_name(step: u64) -> String {
    format!("{step:06}_pre.hm")
}

fn post_name(step: u64) -> String {
    format!("{step:06}_post.hm")
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordMeta {
    step: u64,
    her: bool,
    query: String,
    action: GraspAction,
    target: f64,
    grasped_label: Option<AttributeLabel>,
    v_pre: String,
    v_post: Option<String>,
    scene: Scene,
}

/// Argmax action with probability `1 - epsilon`, otherwise a uniformly random
/// foreground pixel with a uniformly random orientation.
pub fn epsilon_greedy<F: Real, R: Rng + ?Sized>(
    model: &Model<F>,
    v_pre: &Heightmap,
    query: &QueryText,
    epsilon: f64,
    rng: &mut R,
) -> Result<GraspAction> {
    let explore = rng.random::<f64>() < epsilon;
    if !explore {
        return Ok(select_action(&model.predict(v_pre, query)?));
    }
    Ok(random_action(v_pre, model.config.bg_threshold, model.config.orientations, rng))
}

pub fn random_action<R: Rng + ?Sized>(hm: &Heightmap, bg_threshold: f64, orientations: usize, rng: &mut R) -> GraspAction {
    let mask = background_mask(hm, bg_threshold);
    let fg: Vec<usize> = (0..mask.data.len()).filter(|&i| !mask.data[i]).collect();
    let i = fg.choose(rng).copied().unwrap_or_else(|| rng.random_range(0..mask.data.len()));
    GraspAction { row: i / hm.size, col: i % hm.size, k: rng.random_range(0..orientations) }
}

/// Regression target of a grasp: similarity with the grasped object, 0 on failure.
pub fn label_outcome(query: &QueryText, scene: &Scene, outcome: &GraspOutcome, mode: LabelMode, norm: SimilarityNorm) -> Result<f64> {
    let Some(id) = outcome.grasped else { return Ok(0.0) };
    match mode {
        LabelMode::Binary => Ok(1.0),
        LabelMode::Similarity => similarity_with(&query.label, &scene.object(id)?.label, norm),
    }
}

/// Copy of a successful record whose query fully describes the grasped object.
pub fn her_relabel(record: &EpisodeRecord, vocab: &AttributeVocabulary, mode: LabelMode, norm: SimilarityNorm) -> Result<EpisodeRecord> {
    let label = record.grasped_label.as_ref().ok_or(Error::NoGrasp)?;
    let query = vocab.make_query(label, None, QueryMode::Both)?;
    let target = match mode {
        LabelMode::Binary => 1.0,
        LabelMode::Similarity => similarity_with(&query.label, label, norm)?,
    };
    Ok(EpisodeRecord { query, target, her: true, ..record.clone() })
}

/// Random scene, query and grasp attempt; stores the record (and its
/// hindsight copy on success) and returns what was stored.
#[allow(clippy::too_many_arguments)]
pub fn collect_step<F: Real, R: Rng + ?Sized>(
    model: &Model<F>,
    buffer: &mut ReplayBuffer,
    step: u64,
    epsilon: f64,
    sim: &SimConfig,
    train: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<EpisodeRecord>> {
    let vocab = &model.vocab;
    let count = rng.random_range(sim.train_objects[0]..=sim.train_objects[1]);
    let scene = sample_scene(rng.random(), count, train.unique_attributes, ObjectPool::Basic, sim, vocab)?;
    let v_pre = Arc::new(render(&scene, sim));
    let target = scene.objects.choose(rng).expect("scenes are non-empty");
    let mode = *QueryMode::COLLECTION.choose(rng).unwrap();
    let query = vocab.make_query(&target.label, None, mode)?;
    let action = epsilon_greedy(model, &v_pre, &query, epsilon, rng)?;
    let outcome = execute_grasp(&scene, &action, sim)?;
    let q_bar = label_outcome(&query, &scene, &outcome, train.label_mode, train.similarity_norm)?;
    let grasped_label = match outcome.grasped {
        Some(id) => Some(scene.object(id)?.label.clone()),
        None => None,
    };
    let v_post = grasped_label.as_ref().map(|_| Arc::new(render(&outcome.post_scene, sim)));
    let record = EpisodeRecord {
        step,
        mask: Arc::new(background_mask(&v_pre, sim.bg_threshold)),
        scene: Arc::new(scene),
        v_pre,
        query,
        action,
        target: q_bar,
        v_post,
        grasped_label,
        her: false,
    };
    let mut stored = vec![record.clone()];
    if train.hindsight && record.success() {
        stored.push(her_relabel(&record, vocab, train.label_mode, train.similarity_norm)?);
    }
    for r in &stored {
        buffer.push(r.clone());
    }
    Ok(stored)
}

/// Loss components of one optimization step, batch-averaged.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub l_m: f64,
    pub l_r: f64,
    pub total: f64,
    pub triplets: usize,
}

struct Forward<F> {
    sf: Tensor<F>,
    enc: crate::model::EncoderCache<F>,
    tv: Vec<F>,
    text: crate::model::TextCache<F>,
    d_sf: Tensor<F>,
    d_tv: Vec<F>,
    post: Option<(Tensor<F>, crate::model::EncoderCache<F>)>,
}

/// Batch objective `mean(L_m) + lambda_r * mean(triplet hinge)` and its gradient.
///
/// `rng` is only used for triplet mining, which depends on labels alone.
pub fn batch_gradients<F: Real, R: Rng + ?Sized>(
    model: &Model<F>,
    batch: &[&EpisodeRecord],
    weights: &LossWeights,
    triplets_per_batch: usize,
    rng: &mut R,
) -> Result<(StepStats, ParamSet<F>)> {
    let mut grads = model.params.zeros_like();
    let scale = 1.0 / batch.len().max(1) as f64;
    let use_metric = weights.lambda_r > 0.0;
    let size = model.config.image_size;
    let mut l_m = 0.0;
    let mut fwd = Vec::with_capacity(batch.len());
    for r in batch {
        let (sf, enc) = model.encoder_forward(&model.input_tensor(&r.v_pre)?);
        let (tv, text) = model.text_forward(&r.query.tokens)?;
        let (map, orient) = model.orientation_forward(&sf, &tv, r.action.k)?;
        let (loss, mut d_map) = motion_loss_grad(&map, size, (r.action.row, r.action.col), r.target, &r.mask, weights.lambda_m)?;
        l_m += loss * scale;
        let s = F::of_f64(scale);
        for g in &mut d_map {
            *g *= s;
        }
        let (d_sf, d_tv) = model.orientation_backward(&sf, &tv, &orient, &d_map, &mut grads);
        let post = match (&r.v_post, use_metric && r.grasped_label.is_some()) {
            (Some(post), true) => Some(model.encoder_forward(&model.input_tensor(post)?)),
            _ => None,
        };
        fwd.push(Forward { sf, enc, tv, text, d_sf, d_tv, post });
    }

    let mut l_r = 0.0;
    let mut n_triplets = 0;
    if use_metric {
        // each successful record adds its persistence vector and its text vector;
        // origin holds (record index, is persistence vector)
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        let mut origin = Vec::new();
        for (i, (r, f)) in batch.iter().zip(&fwd).enumerate() {
            let (Some((post_sf, _)), Some(label)) = (&f.post, &r.grasped_label) else { continue };
            let pre = f.sf.spatial_mean();
            let post = post_sf.spatial_mean();
            vectors.push(pre.iter().zip(&post).map(|(&a, &b)| a - b).collect::<Vec<F>>());
            labels.push(label.clone());
            origin.push((i, true));
            vectors.push(f.tv.clone());
            labels.push(r.query.label.clone());
            origin.push((i, false));
        }
        let triplets = mine_triplet_indices(&labels, triplets_per_batch, rng);
        n_triplets = triplets.len();
        if n_triplets > 0 {
            let (sum, g) = metric_loss_grad(&vectors, &triplets, weights.alpha);
            l_r = sum / n_triplets as f64;
            let w = F::of_f64(weights.lambda_r / n_triplets as f64);
            for ((i, persistence), g) in origin.into_iter().zip(g) {
                let g: Vec<F> = g.into_iter().map(|v| v * w).collect();
                let f = &mut fwd[i];
                if persistence {
                    f.d_sf.add_assign(&gap_backward(&g, &f.sf));
                    let post_sf = &f.post.as_ref().unwrap().0;
                    let neg: Vec<F> = g.iter().map(|&v| -v).collect();
                    let d_post = gap_backward(&neg, post_sf);
                    model.encoder_backward(&f.post.as_ref().unwrap().1, &d_post, &mut grads);
                } else {
                    for (a, b) in f.d_tv.iter_mut().zip(&g) {
                        *a += *b;
                    }
                }
            }
        }
    }
    for f in &fwd {
        model.encoder_backward(&f.enc, &f.d_sf, &mut grads);
        model.text_backward(&f.text, &f.d_tv, &mut grads);
    }
    let total = l_m + weights.lambda_r * l_r;
    Ok((StepStats { step: 0, l_m, l_r, total, triplets: n_triplets }, grads))
}

/// Parameters, optimizer and the training RNG stream.
pub struct Trainer<F: Real> {
    pub model: Model<F>,
    pub optimizer: Adam<F>,
    pub config: TrainConfig,
    pub rng: ChaCha8Rng,
    pub steps: usize,
    pub log: Vec<StepStats>,
}

impl<F: Real> Trainer<F> {
    pub fn new(model: Model<F>, config: TrainConfig, seed: u64) -> Self {
        let optimizer = Adam::new(config.optimizer, &model.params);
        Self { model, optimizer, config, rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7A11_5EED), steps: 0, log: Vec::new() }
    }

    pub fn step_on(&mut self, batch: &[&EpisodeRecord]) -> Result<StepStats> {
        let (mut stats, grads) =
            batch_gradients(&self.model, batch, &self.config.weights, self.config.triplets_per_batch, &mut self.rng)?;
        self.optimizer.step(&mut self.model.params, &grads);
        stats.step = self.steps;
        self.steps += 1;
        self.log.push(stats);
        Ok(stats)
    }

    /// One step on a batch drawn uniformly with replacement.
    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<StepStats> {
        if buffer.is_empty() {
            return Err(Error::Config("cannot train on an empty buffer".into()));
        }
        let idx: Vec<usize> = (0..self.config.batch_size).map(|_| self.rng.random_range(0..buffer.len())).collect();
        let batch: Vec<&EpisodeRecord> = idx.iter().map(|&i| buffer.get(i)).collect();
        self.step_on(&batch)
    }

    /// Shuffled full passes over the buffer in batches.
    pub fn replay_dataset(&mut self, buffer: &ReplayBuffer, epochs: usize) -> Result<Vec<StepStats>> {
        let mut stats = Vec::new();
        let base = self.optimizer.config.lr;
        let total = (epochs * buffer.len().div_ceil(self.config.batch_size)).max(1) as f64;
        for _ in 0..epochs {
            let mut order: Vec<usize> = (0..buffer.len()).collect();
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.config.batch_size) {
                let t = stats.len() as f64 / total;
                self.optimizer.config.lr = base * (1.0 - (1.0 - self.config.replay_lr_floor) * t);
                let batch: Vec<&EpisodeRecord> = chunk.iter().map(|&i| buffer.get(i)).collect();
                stats.push(self.step_on(&batch)?);
            }
        }
        self.optimizer.config.lr = base;
        Ok(stats)
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        write_loss_log(&self.log, path)
    }
}

pub fn write_loss_log(log: &[StepStats], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "l_m", "l_r", "l", "triplet_count"])?;
    for s in log {
        w.write_record([s.step.to_string(), s.l_m.to_string(), s.l_r.to_string(), s.total.to_string(), s.triplets.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Progress callback payload for long runs.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub step: usize,
    pub total: usize,
    pub stats: Option<StepStats>,
}

/// Collection interleaved with one training step per collected episode.
pub fn collect_and_train<F: Real>(
    trainer: &mut Trainer<F>,
    buffer: &mut ReplayBuffer,
    sim: &SimConfig,
    seed: u64,
    mut on_step: impl FnMut(Progress),
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = trainer.config.collection_steps;
    for step in 0..total {
        let eps = trainer.config.exploration.epsilon(step);
        collect_step(&trainer.model, buffer, step as u64, eps, sim, &trainer.config, &mut rng)?;
        let stats = trainer.train_step(buffer)?;
        on_step(Progress { step, total, stats: Some(stats) });
    }
    Ok(())
}

/// Fills a buffer with a frozen model, without training.
pub fn collect_only<F: Real>(
    model: &Model<F>,
    config: &TrainConfig,
    sim: &SimConfig,
    steps: usize,
    seed: u64,
) -> Result<ReplayBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buffer = ReplayBuffer::new(config.capacity);
    for step in 0..steps {
        collect_step(model, &mut buffer, step as u64, config.exploration.epsilon(step), sim, config, &mut rng)?;
    }
    Ok(buffer)
}
