//! Gated-attention affordance network.
//!
//! A strided convolutional encoder maps the RGB-D heightmap to a `D`-channel
//! grid; a bag-of-tokens text encoder maps the query to a `D`-vector. Their
//! channelwise product is rotated into each gripper orientation's canonical
//! frame, decoded to a full-resolution map and rotated back.
//!
//! Tensors are channel-major, so a spatial feature grid is `D x H' x W'`.

mod checkpoint;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeVocabulary, QueryText};
use crate::error::{Error, Result};
use crate::nn::layers::{sigmoid, spatial_mean_backward, upsample2x, upsample2x_backward};
use crate::nn::{Conv2d, ConvCache, Linear, LinearCache, ParamSet, Real, RotationMap, Tensor};
use crate::sim::{background_mask, GraspAction, Heightmap};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};

/// Downsampling factor of the visual encoder.
pub const STRIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub image_size: usize,
    pub orientations: usize,
    /// Shared width of text vectors and visual feature channels.
    pub embed_dim: usize,
    /// Channels of the first two encoder stages; the third emits `embed_dim`.
    pub encoder_channels: [usize; 2],
    /// Channels at 1/8, 1/4 and 1/2 resolution in the decoder.
    pub decoder_channels: [usize; 3],
    pub text_hidden: usize,
    /// When false the text pathway is a constant all-ones vector.
    pub text_conditioning: bool,
    /// Multiplier mapping depth in meters to network input.
    pub depth_scale: f64,
    /// Depth below which pixels are background and score zero at inference.
    pub bg_threshold: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 96,
            orientations: 6,
            embed_dim: 64,
            encoder_channels: [16, 32],
            decoder_channels: [32, 16, 8],
            text_hidden: 64,
            text_conditioning: true,
            depth_scale: 20.0,
            bg_threshold: 0.002,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.image_size == 0 || self.image_size % STRIDE != 0 {
            return bad("image_size must be a positive multiple of 8");
        }
        if self.orientations == 0 {
            return bad("orientations must be positive");
        }
        if self.embed_dim == 0 || self.text_hidden == 0 {
            return bad("embedding widths must be positive");
        }
        if self.encoder_channels.contains(&0) || self.decoder_channels.contains(&0) {
            return bad("channel counts must be positive");
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        self.image_size / STRIDE
    }

    pub fn orientation_deg(&self, k: usize) -> f64 {
        k as f64 * 180.0 / self.orientations as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layers {
    encoder: [Conv2d; 3],
    encoder_res: [Conv2d; 2],
    embedding: usize,
    text: [Linear; 2],
    decoder_in: Conv2d,
    decoder_res: [Conv2d; 2],
    decoder_up: [Conv2d; 2],
    decoder_out: Conv2d,
}

impl Layers {
    fn register<F: Real>(cfg: &ModelConfig, vocab_size: usize, params: &mut ParamSet<F>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let [e0, e1] = cfg.encoder_channels;
        let d = cfg.embed_dim;
        let [c0, c1, c2] = cfg.decoder_channels;
        let encoder = [
            Conv2d::register(params, "encoder.0", 4, e0, 3, 2, &mut rng),
            Conv2d::register(params, "encoder.1", e0, e1, 3, 2, &mut rng),
            Conv2d::register(params, "encoder.2", e1, d, 3, 2, &mut rng),
        ];
        let encoder_res = [
            Conv2d::register(params, "encoder.res.0", d, d, 3, 1, &mut rng),
            Conv2d::register(params, "encoder.res.1", d, d, 3, 1, &mut rng),
        ];
        let rows: Vec<F> = (0..vocab_size * d).map(|_| F::of_f64(rand::Rng::random_range(&mut rng, -1.0..1.0))).collect();
        let embedding = params.add("text.embedding", vec![vocab_size, d], rows);
        let text = [
            Linear::register(params, "text.0", d, cfg.text_hidden, &mut rng),
            Linear::register(params, "text.1", cfg.text_hidden, d, &mut rng),
        ];
        let decoder_in = Conv2d::register(params, "decoder.in", d, c0, 3, 1, &mut rng);
        let decoder_res = [
            Conv2d::register(params, "decoder.res.0", c0, c0, 3, 1, &mut rng),
            Conv2d::register(params, "decoder.res.1", c0, c0, 3, 1, &mut rng),
        ];
        let decoder_up = [
            Conv2d::register(params, "decoder.up.0", c0, c1, 3, 1, &mut rng),
            Conv2d::register(params, "decoder.up.1", c1, c2, 3, 1, &mut rng),
        ];
        let decoder_out = Conv2d::register(params, "decoder.out", c2, 1, 1, 1, &mut rng);
        Self { encoder, encoder_res, embedding, text, decoder_in, decoder_res, decoder_up, decoder_out }
    }
}

/// Precomputed resampling for every orientation.
#[derive(Debug)]
struct Rotations<F> {
    /// Feature grid rotated by `-k * 180 / N`, into the decoder's frame.
    to_canonical: Vec<RotationMap<F>>,
    /// Decoded maps rotated by `+k * 180 / N`, back to the image frame.
    to_image: Vec<RotationMap<F>>,
}

impl<F: Real> Rotations<F> {
    fn new(cfg: &ModelConfig) -> Self {
        let (g, n) = (cfg.grid_size(), cfg.image_size);
        Self {
            to_canonical: (0..cfg.orientations).map(|k| RotationMap::new(g, -cfg.orientation_deg(k))).collect(),
            to_image: (0..cfg.orientations).map(|k| RotationMap::new(n, cfg.orientation_deg(k))).collect(),
        }
    }
}

/// Per-orientation affordance maps in the image frame, orientation-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffordanceMap {
    pub orientations: usize,
    pub size: usize,
    pub data: Vec<f32>,
}

impl AffordanceMap {
    pub fn map(&self, k: usize) -> &[f32] {
        let p = self.size * self.size;
        &self.data[k * p..(k + 1) * p]
    }

    #[inline]
    pub fn get(&self, k: usize, row: usize, col: usize) -> f32 {
        self.data[(k * self.size + row) * self.size + col]
    }
}

/// Global argmax over `(k, row, col)`; ties go to the smallest `k`, then row-major order.
pub fn select_action(am: &AffordanceMap) -> GraspAction {
    let mut best = 0;
    for (i, &v) in am.data.iter().enumerate() {
        if v > am.data[best] {
            best = i;
        }
    }
    let p = am.size * am.size;
    GraspAction { k: best / p, row: (best % p) / am.size, col: best % am.size }
}

#[derive(Debug, Clone)]
pub struct EncoderCache<F> {
    convs: Vec<ConvCache<F>>,
    acts: Vec<Tensor<F>>,
}

#[derive(Debug, Clone)]
pub struct TextCache<F> {
    tokens: Vec<usize>,
    layers: Option<(LinearCache<F>, Vec<F>, LinearCache<F>)>,
}

#[derive(Debug, Clone)]
pub struct DecoderCache<F> {
    convs: Vec<ConvCache<F>>,
    acts: Vec<Tensor<F>>,
    probs: Tensor<F>,
}

/// State kept from a single-orientation forward pass.
#[derive(Debug, Clone)]
pub struct OrientationCache<F> {
    k: usize,
    decoder: DecoderCache<F>,
}

#[derive(Debug, Clone)]
pub struct Model<F: Real = f32> {
    pub config: ModelConfig,
    pub vocab: AttributeVocabulary,
    pub params: ParamSet<F>,
    layers: Layers,
    rotations: Arc<Rotations<F>>,
}

impl<F: Real> Model<F> {
    pub fn new(config: ModelConfig, vocab: AttributeVocabulary) -> Result<Self> {
        config.validate()?;
        vocab.validate()?;
        let mut params = ParamSet::new();
        let layers = Layers::register(&config, vocab.token_count(), &mut params);
        let rotations = Arc::new(Rotations::new(&config));
        Ok(Self { config, vocab, params, layers, rotations })
    }

    /// Replaces all parameters; shapes must match this architecture.
    pub fn with_params(mut self, params: ParamSet<F>) -> Result<Self> {
        let same = params.len() == self.params.len()
            && params.tensors.iter().zip(&self.params.tensors).all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if !same {
            return Err(Error::Shape { expected: describe(&self.params), got: describe(&params) });
        }
        self.params = params;
        Ok(self)
    }

    pub fn cast<G: Real>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.cast(),
            layers: self.layers,
            rotations: Arc::new(Rotations::new(&self.config)),
        }
    }

    pub fn token_rows(&self) -> usize {
        self.params.tensors[self.layers.embedding].shape[0]
    }

    pub fn token_embedding(&self, token: usize) -> &[F] {
        let d = self.config.embed_dim;
        &self.params.get(self.layers.embedding)[token * d..(token + 1) * d]
    }

    pub fn embedding_param(&self) -> usize {
        self.layers.embedding
    }

    /// Network input: rgb centered at zero and scaled depth, channel-major.
    pub fn input_tensor(&self, hm: &Heightmap) -> Result<Tensor<F>> {
        let n = self.config.image_size;
        if hm.size != n || hm.rgb.len() != n * n * 3 || hm.depth.len() != n * n {
            return Err(Error::Shape { expected: format!("{n}x{n} heightmap"), got: format!("{0}x{0}", hm.size) });
        }
        let p = n * n;
        let mut data = vec![F::zero(); 4 * p];
        for i in 0..p {
            for ch in 0..3 {
                data[ch * p + i] = F::of_f64(hm.rgb[3 * i + ch] as f64 - 0.5);
            }
            data[3 * p + i] = F::of_f64(hm.depth[i] as f64 * self.config.depth_scale);
        }
        Ok(Tensor::from_vec(4, n, n, data))
    }

    pub fn encoder_forward(&self, x: &Tensor<F>) -> (Tensor<F>, EncoderCache<F>) {
        let p = &self.params;
        let l = &self.layers;
        let mut convs = Vec::with_capacity(5);
        let mut acts = Vec::with_capacity(4);
        let mut h = x.clone();
        for conv in &l.encoder {
            let (mut y, c) = conv.forward(p, &h);
            y.relu_inplace();
            convs.push(c);
            acts.push(y.clone());
            h = y;
        }
        let (mut r, c) = l.encoder_res[0].forward(p, &h);
        r.relu_inplace();
        convs.push(c);
        acts.push(r.clone());
        let (mut out, c) = l.encoder_res[1].forward(p, &r);
        convs.push(c);
        out.add_assign(&h);
        (out, EncoderCache { convs, acts })
    }

    pub fn encoder_backward(&self, cache: &EncoderCache<F>, d_out: &Tensor<F>, grads: &mut ParamSet<F>) {
        let p = &self.params;
        let l = &self.layers;
        let mut dr = l.encoder_res[1].backward(p, &cache.convs[4], d_out, grads, true).unwrap();
        cache.acts[3].relu_backward(&mut dr);
        let mut dh = l.encoder_res[0].backward(p, &cache.convs[3], &dr, grads, true).unwrap();
        dh.add_assign(d_out);
        for i in (0..3).rev() {
            cache.acts[i].relu_backward(&mut dh);
            match l.encoder[i].backward(p, &cache.convs[i], &dh, grads, i > 0) {
                Some(dx) => dh = dx,
                None => break,
            }
        }
    }

    /// Spatial feature grid, `D x H/8 x W/8`.
    pub fn encode_visual_spatial(&self, hm: &Heightmap) -> Result<Tensor<F>> {
        Ok(self.encoder_forward(&self.input_tensor(hm)?).0)
    }

    /// Global average of the spatial features.
    pub fn encode_visual_vector(&self, hm: &Heightmap) -> Result<Vec<F>> {
        Ok(self.encode_visual_spatial(hm)?.spatial_mean())
    }

    /// Mean of the token embedding rows, accumulated in `f64`.
    pub fn token_mean(&self, tokens: &[usize]) -> Result<Vec<F>> {
        if tokens.is_empty() {
            return Err(Error::EmptyTokens);
        }
        let d = self.config.embed_dim;
        let rows = self.token_rows();
        let mut acc = vec![0.0f64; d];
        for &t in tokens {
            if t >= rows {
                return Err(Error::UnknownTokenId(t));
            }
            for (a, &v) in acc.iter_mut().zip(self.token_embedding(t)) {
                *a += v.as_f64();
            }
        }
        let n = tokens.len() as f64;
        Ok(acc.into_iter().map(|a| F::of_f64(a / n)).collect())
    }

    pub fn text_forward(&self, tokens: &[usize]) -> Result<(Vec<F>, TextCache<F>)> {
        let mean = self.token_mean(tokens)?;
        if !self.config.text_conditioning {
            return Ok((vec![F::one(); self.config.embed_dim], TextCache { tokens: tokens.to_vec(), layers: None }));
        }
        let p = &self.params;
        let (mut hidden, c0) = self.layers.text[0].forward(p, &mean);
        for v in &mut hidden {
            *v = v.max(F::zero());
        }
        let (out, c1) = self.layers.text[1].forward(p, &hidden);
        Ok((out, TextCache { tokens: tokens.to_vec(), layers: Some((c0, hidden, c1)) }))
    }

    pub fn text_backward(&self, cache: &TextCache<F>, d_out: &[F], grads: &mut ParamSet<F>) {
        let Some((c0, hidden, c1)) = &cache.layers else { return };
        let p = &self.params;
        let mut dh = self.layers.text[1].backward(p, c1, d_out, grads);
        for (g, &h) in dh.iter_mut().zip(hidden) {
            if h <= F::zero() {
                *g = F::zero();
            }
        }
        let dmean = self.layers.text[0].backward(p, c0, &dh, grads);
        let d = self.config.embed_dim;
        let inv = F::one() / F::of_f64(cache.tokens.len() as f64);
        let table = grads.get_mut(self.layers.embedding);
        for &t in &cache.tokens {
            for (g, &dm) in table[t * d..(t + 1) * d].iter_mut().zip(&dmean) {
                *g += dm * inv;
            }
        }
    }

    pub fn encode_text(&self, tokens: &[usize]) -> Result<Vec<F>> {
        Ok(self.text_forward(tokens)?.0)
    }

    pub fn encode_query(&self, q: &QueryText) -> Result<Vec<F>> {
        self.encode_text(&q.tokens)
    }

    /// `F[d, r, c] = sf[d, r, c] * tv[d]`.
    pub fn fuse_gated_attention(&self, sf: &Tensor<F>, tv: &[F]) -> Result<Tensor<F>> {
        fuse(sf, tv)
    }

    /// Rotates a feature grid into orientation `k`'s canonical frame,
    /// i.e. by `-k * 180 / N` degrees about its center.
    pub fn rotate_features(&self, t: &Tensor<F>, k: usize) -> Result<Tensor<F>> {
        self.check_orientation(k)?;
        let g = self.config.grid_size();
        if t.h != g || t.w != g {
            return Err(Error::Shape { expected: format!("{g}x{g} grid"), got: format!("{}x{}", t.h, t.w) });
        }
        if k == 0 {
            return Ok(t.clone());
        }
        Ok(self.rotations.to_canonical[k].apply(t))
    }

    fn check_orientation(&self, k: usize) -> Result<()> {
        if k >= self.config.orientations {
            return Err(Error::Orientation { k, n: self.config.orientations });
        }
        Ok(())
    }

    pub fn decoder_forward(&self, x: &Tensor<F>) -> DecoderCache<F> {
        let p = &self.params;
        let l = &self.layers;
        let mut convs = Vec::with_capacity(6);
        let mut acts = Vec::with_capacity(5);
        let (mut d1, c) = l.decoder_in.forward(p, x);
        d1.relu_inplace();
        convs.push(c);
        let (mut h, c) = l.decoder_res[0].forward(p, &d1);
        h.relu_inplace();
        convs.push(c);
        let (mut e, c) = l.decoder_res[1].forward(p, &h);
        convs.push(c);
        e.add_assign(&d1);
        e.relu_inplace();
        acts.extend([d1, h, e.clone()]);
        let mut cur = e;
        for conv in &l.decoder_up {
            let (mut y, c) = conv.forward(p, &upsample2x(&cur));
            y.relu_inplace();
            convs.push(c);
            acts.push(y.clone());
            cur = y;
        }
        let (mut z, c) = l.decoder_out.forward(p, &upsample2x(&cur));
        convs.push(c);
        for v in &mut z.data {
            *v = sigmoid(*v);
        }
        DecoderCache { convs, acts, probs: z }
    }

    /// Backpropagates a gradient on the sigmoid output to the decoder input.
    pub fn decoder_backward(&self, cache: &DecoderCache<F>, d_probs: &[F], grads: &mut ParamSet<F>) -> Tensor<F> {
        let p = &self.params;
        let l = &self.layers;
        let probs = &cache.probs;
        let dz = Tensor::from_vec(
            1,
            probs.h,
            probs.w,
            d_probs.iter().zip(&probs.data).map(|(&g, &y)| g * y * (F::one() - y)).collect(),
        );
        let mut g = upsample2x_backward(&l.decoder_out.backward(p, &cache.convs[5], &dz, grads, true).unwrap());
        for i in (0..2).rev() {
            cache.acts[3 + i].relu_backward(&mut g);
            g = upsample2x_backward(&l.decoder_up[i].backward(p, &cache.convs[3 + i], &g, grads, true).unwrap());
        }
        cache.acts[2].relu_backward(&mut g);
        let mut dh = l.decoder_res[1].backward(p, &cache.convs[2], &g, grads, true).unwrap();
        cache.acts[1].relu_backward(&mut dh);
        let mut dd1 = l.decoder_res[0].backward(p, &cache.convs[1], &dh, grads, true).unwrap();
        dd1.add_assign(&g);
        cache.acts[0].relu_backward(&mut dd1);
        l.decoder_in.backward(p, &cache.convs[0], &dd1, grads, true).unwrap()
    }

    /// Full-resolution map in `[0, 1]` for an already rotated fusion grid.
    pub fn decode_affordance(&self, f: &Tensor<F>) -> Tensor<F> {
        self.decoder_forward(f).probs
    }

    /// Affordance map for orientation `k` in the image frame.
    pub fn orientation_forward(&self, sf: &Tensor<F>, tv: &[F], k: usize) -> Result<(Vec<F>, OrientationCache<F>)> {
        let rotated = self.rotate_features(&fuse(sf, tv)?, k)?;
        let decoder = self.decoder_forward(&rotated);
        let map = if k == 0 { decoder.probs.data.clone() } else { self.rotations.to_image[k].apply_map(&decoder.probs.data) };
        Ok((map, OrientationCache { k, decoder }))
    }

    /// Returns gradients with respect to the spatial features and the text vector.
    pub fn orientation_backward(
        &self,
        sf: &Tensor<F>,
        tv: &[F],
        cache: &OrientationCache<F>,
        d_map: &[F],
        grads: &mut ParamSet<F>,
    ) -> (Tensor<F>, Vec<F>) {
        let k = cache.k;
        let d_probs = if k == 0 { d_map.to_vec() } else { self.rotations.to_image[k].adjoint_map(d_map) };
        let d_rot = self.decoder_backward(&cache.decoder, &d_probs, grads);
        let d_fused = if k == 0 { d_rot } else { self.rotations.to_canonical[k].adjoint(&d_rot) };
        let plane = sf.plane();
        let mut d_sf = Tensor::zeros(sf.c, sf.h, sf.w);
        let mut d_tv = vec![F::zero(); tv.len()];
        for d in 0..sf.c {
            let (s, g) = (sf.channel(d), d_fused.channel(d));
            let mut acc = F::zero();
            for i in 0..plane {
                d_sf.data[d * plane + i] = g[i] * tv[d];
                acc += g[i] * s[i];
            }
            d_tv[d] = acc;
        }
        (d_sf, d_tv)
    }

    /// Maps for every orientation without background masking.
    pub fn predict_unmasked(&self, hm: &Heightmap, q: &QueryText) -> Result<AffordanceMap> {
        let sf = self.encode_visual_spatial(hm)?;
        let tv = self.encode_query(q)?;
        let n = self.config.image_size;
        let mut data = Vec::with_capacity(self.config.orientations * n * n);
        for k in 0..self.config.orientations {
            let (map, _) = self.orientation_forward(&sf, &tv, k)?;
            data.extend(map.iter().map(|v| v.as_f64() as f32));
        }
        Ok(AffordanceMap { orientations: self.config.orientations, size: n, data })
    }

    /// Maps for every orientation with background pixels zeroed.
    pub fn predict(&self, hm: &Heightmap, q: &QueryText) -> Result<AffordanceMap> {
        let mut am = self.predict_unmasked(hm, q)?;
        let mask = background_mask(hm, self.config.bg_threshold);
        let p = am.size * am.size;
        for chunk in am.data.chunks_exact_mut(p) {
            for (v, &bg) in chunk.iter_mut().zip(&mask.data) {
                if bg {
                    *v = 0.0;
                }
            }
        }
        Ok(am)
    }

    /// Dot product of the text vector with every visual feature cell, `H/8 x W/8`.
    pub fn attention_heatmap(&self, hm: &Heightmap, q: &QueryText) -> Result<Vec<F>> {
        let sf = self.encode_visual_spatial(hm)?;
        let tv = self.encode_query(q)?;
        Ok(attention(&sf, &tv))
    }

    /// Appends a name token with the given embedding row; existing rows are untouched.
    pub fn register_name_token(&mut self, name: &str, init: &[F]) -> Result<usize> {
        let d = self.config.embed_dim;
        if init.len() != d {
            return Err(Error::Shape { expected: format!("{d}-vector"), got: format!("{}-vector", init.len()) });
        }
        let id = self.vocab.register_name(name)?;
        let table = &mut self.params.tensors[self.layers.embedding];
        table.data.extend_from_slice(init);
        table.shape[0] += 1;
        debug_assert_eq!(table.shape[0], self.vocab.token_count());
        Ok(id)
    }

    /// Registers `name` initialized to the token mean of `base`, so that the
    /// query extended with the name keeps its text vector.
    pub fn register_name_for_query(&mut self, name: &str, base: &QueryText) -> Result<usize> {
        let init = self.token_mean(&base.tokens)?;
        self.register_name_token(name, &init)
    }
}

pub fn fuse<F: Real>(sf: &Tensor<F>, tv: &[F]) -> Result<Tensor<F>> {
    if tv.len() != sf.c {
        return Err(Error::Shape { expected: format!("{}-vector", sf.c), got: format!("{}-vector", tv.len()) });
    }
    let plane = sf.plane();
    let mut out = sf.clone();
    for (d, chunk) in out.data.chunks_exact_mut(plane).enumerate() {
        for v in chunk {
            *v *= tv[d];
        }
    }
    Ok(out)
}

pub fn attention<F: Real>(sf: &Tensor<F>, tv: &[F]) -> Vec<F> {
    let plane = sf.plane();
    let mut heat = vec![F::zero(); plane];
    for (d, &t) in tv.iter().enumerate() {
        for (h, &s) in heat.iter_mut().zip(sf.channel(d)) {
            *h += s * t;
        }
    }
    heat
}

/// Gradient of the global average pool, exposed for persistence vectors.
pub fn gap_backward<F: Real>(g: &[F], like: &Tensor<F>) -> Tensor<F> {
    spatial_mean_backward(g, like.c, like.h, like.w)
}

fn describe<F>(p: &ParamSet<F>) -> String {
    p.tensors.iter().map(|t| format!("{}{:?}", t.name, t.shape)).collect::<Vec<_>>().join(",")
}
