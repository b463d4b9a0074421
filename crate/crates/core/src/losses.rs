//! Affordance regression loss, object-persistence triplet loss and their sum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{similarity, AttributeLabel};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::Real;
use crate::sim::{Heightmap, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Weight of the background suppression term.
    pub lambda_m: f64,
    /// Weight of the metric loss.
    pub lambda_r: f64,
    /// Triplet margin.
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_m: 0.1, lambda_r: 1.0, alpha: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_m >= 0.0 && self.lambda_r >= 0.0 && self.alpha > 0.0) {
            return Err(Error::Config("loss weights must be non-negative with a positive margin".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSource {
    PersistenceVector,
    TextVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding<F> {
    pub f: Vec<F>,
    pub label: AttributeLabel,
    pub source: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet<F> {
    pub anchor: LabeledEmbedding<F>,
    pub positive: LabeledEmbedding<F>,
    pub negative: LabeledEmbedding<F>,
}

/// `(q_e - target)^2 + lambda_m / |M| * sum_{i in M} q_i^2` and its gradient on the map.
pub fn motion_loss_grad<F: Real>(
    map: &[F],
    size: usize,
    pixel: (usize, usize),
    target: f64,
    mask: &Mask,
    lambda_m: f64,
) -> Result<(f64, Vec<F>)> {
    let (row, col) = pixel;
    if row >= size || col >= size || map.len() != size * size || mask.data.len() != map.len() {
        return Err(Error::Shape { expected: format!("{size}x{size} map with in-image pixel"), got: format!("pixel ({row}, {col})") });
    }
    let mut grad = vec![F::zero(); map.len()];
    let mut loss = 0.0;
    if lambda_m > 0.0 {
        let count = mask.count();
        if count == 0 {
            return Err(Error::EmptyMask);
        }
        let w = lambda_m / count as f64;
        let mut sum = 0.0;
        for ((g, &q), &bg) in grad.iter_mut().zip(map).zip(&mask.data) {
            if bg {
                let q = q.as_f64();
                sum += q * q;
                *g = F::of_f64(2.0 * w * q);
            }
        }
        loss += w * sum;
    }
    let i = row * size + col;
    let err = map[i].as_f64() - target;
    loss += err * err;
    grad[i] += F::of_f64(2.0 * err);
    Ok((loss, grad))
}

pub fn motion_loss<F: Real>(map: &[F], size: usize, pixel: (usize, usize), target: f64, mask: &Mask, lambda_m: f64) -> Result<f64> {
    Ok(motion_loss_grad(map, size, pixel, target, mask, lambda_m)?.0)
}

/// Difference of pooled visual vectors before and after a successful grasp.
pub fn persistence_vector<F: Real>(
    model: &Model<F>,
    v_pre: &Heightmap,
    v_post: &Heightmap,
    label: AttributeLabel,
) -> Result<LabeledEmbedding<F>> {
    let pre = model.encode_visual_vector(v_pre)?;
    let post = model.encode_visual_vector(v_post)?;
    Ok(LabeledEmbedding {
        f: pre.iter().zip(&post).map(|(&a, &b)| a - b).collect(),
        label,
        source: EmbeddingSource::PersistenceVector,
    })
}

/// Whether the labels satisfy the strict similarity ordering of a triplet.
pub fn triplet_valid(anchor: &AttributeLabel, positive: &AttributeLabel, negative: &AttributeLabel) -> bool {
    match (similarity(anchor, positive), similarity(anchor, negative)) {
        (Ok(p), Ok(n)) => p > n,
        _ => false,
    }
}

/// Draws random index triplets from the labels and keeps the valid ones.
///
/// Candidates use three distinct indices; at most `count * 10` draws are made.
pub fn mine_triplet_indices<R: Rng + ?Sized>(labels: &[AttributeLabel], count: usize, rng: &mut R) -> Vec<[usize; 3]> {
    let n = labels.len();
    let mut out = Vec::new();
    if n < 3 || count == 0 || labels.iter().all(|l| *l == labels[0]) {
        return out;
    }
    for _ in 0..count * 10 {
        let a = rng.random_range(0..n);
        let p = rng.random_range(0..n);
        let q = rng.random_range(0..n);
        if a == p || a == q || p == q {
            continue;
        }
        if triplet_valid(&labels[a], &labels[p], &labels[q]) {
            out.push([a, p, q]);
            if out.len() == count {
                break;
            }
        }
    }
    out
}

pub fn mine_triplets<F: Real, R: Rng + ?Sized>(pool: &[LabeledEmbedding<F>], count: usize, rng: &mut R) -> Vec<Triplet<F>> {
    let labels: Vec<AttributeLabel> = pool.iter().map(|e| e.label.clone()).collect();
    mine_triplet_indices(&labels, count, rng)
        .into_iter()
        .map(|[a, p, n]| Triplet { anchor: pool[a].clone(), positive: pool[p].clone(), negative: pool[n].clone() })
        .collect()
}

fn sq_dist<F: Real>(a: &[F], b: &[F]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2)).sum()
}

/// `sum_i max(|f - f+|^2 - |f - f-|^2 + alpha, 0)`.
pub fn metric_loss<F: Real>(triplets: &[Triplet<F>], alpha: f64) -> f64 {
    triplets
        .iter()
        .map(|t| (sq_dist(&t.anchor.f, &t.positive.f) - sq_dist(&t.anchor.f, &t.negative.f) + alpha).max(0.0))
        .sum()
}

/// Metric loss over index triplets into `vectors`, with per-vector gradients.
/// The hinge contributes no gradient when its argument is not positive.
pub fn metric_loss_grad<F: Real>(vectors: &[Vec<F>], triplets: &[[usize; 3]], alpha: f64) -> (f64, Vec<Vec<F>>) {
    let mut grads: Vec<Vec<F>> = vectors.iter().map(|v| vec![F::zero(); v.len()]).collect();
    let mut loss = 0.0;
    for &[a, p, n] in triplets {
        let (fa, fp, fn_) = (&vectors[a], &vectors[p], &vectors[n]);
        let arg = sq_dist(fa, fp) - sq_dist(fa, fn_) + alpha;
        if arg <= 0.0 {
            continue;
        }
        loss += arg;
        for d in 0..fa.len() {
            let (xa, xp, xn) = (fa[d].as_f64(), fp[d].as_f64(), fn_[d].as_f64());
            grads[a][d] += F::of_f64(2.0 * (xn - xp));
            grads[p][d] += F::of_f64(-2.0 * (xa - xp));
            grads[n][d] += F::of_f64(2.0 * (xa - xn));
        }
    }
    (loss, grads)
}

pub fn total_loss(l_m: f64, l_r: f64, lambda_r: f64) -> f64 {
    l_m + lambda_r * l_r
}
