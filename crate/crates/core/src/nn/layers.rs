use rand::Rng;

use super::{matmul, MatRef, ParamSet, Real, Tensor};

fn uniform_init<F: Real, R: Rng + ?Sized>(n: usize, bound: f64, rng: &mut R) -> Vec<F> {
    (0..n).map(|_| F::of_f64(rng.random_range(-bound..bound))).collect()
}

/// Square convolution with zero padding `kernel / 2`, lowered to a GEMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub weight: usize,
    pub bias: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Lowered input kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<F> {
    cols: Vec<F>,
    in_h: usize,
    in_w: usize,
}

impl Conv2d {
    /// Registers He-uniform weights and zero biases.
    pub fn register<F: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<F>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1 && stride >= 1);
        let fan_in = cin * kernel * kernel;
        let bound = (6.0 / fan_in as f64).sqrt();
        let weight = params.add(&format!("{name}.weight"), vec![cout, cin, kernel, kernel], uniform_init(cout * fan_in, bound, rng));
        let bias = params.add(&format!("{name}.bias"), vec![cout], vec![F::zero(); cout]);
        Self { weight, bias, cin, cout, kernel, stride }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let pad = self.kernel / 2;
        ((h + 2 * pad - self.kernel) / self.stride + 1, (w + 2 * pad - self.kernel) / self.stride + 1)
    }

    fn im2col<F: Real>(&self, x: &Tensor<F>) -> Vec<F> {
        let (ho, wo) = self.out_dims(x.h, x.w);
        let (k, s, pad) = (self.kernel, self.stride, self.kernel / 2);
        if k == 1 && s == 1 {
            return x.data.clone();
        }
        let p = ho * wo;
        let mut cols = vec![F::zero(); self.cin * k * k * p];
        for ci in 0..self.cin {
            let plane = x.channel(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - pad as isize;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * x.w..][..x.w];
                        let dst = &mut row[oy * wo..][..wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - pad as isize;
                            if ix >= 0 && ix < x.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<F: Real>(&self, cols: &[F], h: usize, w: usize) -> Tensor<F> {
        let (ho, wo) = self.out_dims(h, w);
        let (k, s, pad) = (self.kernel, self.stride, self.kernel / 2);
        if k == 1 && s == 1 {
            return Tensor::from_vec(self.cin, h, w, cols.to_vec());
        }
        let p = ho * wo;
        let mut dx = Tensor::zeros(self.cin, h, w);
        for ci in 0..self.cin {
            let plane = &mut dx.data[ci * h * w..][..h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..][..w];
                        for (ox, &g) in row[oy * wo..][..wo].iter().enumerate() {
                            let ix = (ox * s + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward<F: Real>(&self, params: &ParamSet<F>, x: &Tensor<F>) -> (Tensor<F>, ConvCache<F>) {
        assert_eq!(x.c, self.cin, "conv input channels");
        let (ho, wo) = self.out_dims(x.h, x.w);
        let kk = self.cin * self.kernel * self.kernel;
        let cols = self.im2col(x);
        let mut out = Tensor::zeros(self.cout, ho, wo);
        matmul(MatRef::new(params.get(self.weight), self.cout, kk), MatRef::new(&cols, kk, ho * wo), &mut out.data, false);
        let bias = params.get(self.bias);
        for (co, chunk) in out.data.chunks_exact_mut(ho * wo).enumerate() {
            for v in chunk {
                *v += bias[co];
            }
        }
        (out, ConvCache { cols, in_h: x.h, in_w: x.w })
    }

    /// Accumulates parameter gradients and returns the input gradient when requested.
    pub fn backward<F: Real>(
        &self,
        params: &ParamSet<F>,
        cache: &ConvCache<F>,
        dout: &Tensor<F>,
        grads: &mut ParamSet<F>,
        need_dx: bool,
    ) -> Option<Tensor<F>> {
        let kk = self.cin * self.kernel * self.kernel;
        let p = dout.plane();
        assert_eq!(dout.c, self.cout);
        matmul(MatRef::new(&dout.data, self.cout, p), MatRef::t(&cache.cols, kk, p), grads.get_mut(self.weight), true);
        let gb = grads.get_mut(self.bias);
        for (co, chunk) in dout.data.chunks_exact(p).enumerate() {
            gb[co] += chunk.iter().copied().sum::<F>();
        }
        if !need_dx {
            return None;
        }
        let mut dcols = vec![F::zero(); kk * p];
        matmul(MatRef::t(params.get(self.weight), self.cout, kk), MatRef::new(&dout.data, self.cout, p), &mut dcols, false);
        Some(self.col2im(&dcols, cache.in_h, cache.in_w))
    }
}

/// Fully connected layer `y = W x + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Debug, Clone)]
pub struct LinearCache<F> {
    input: Vec<F>,
}

impl Linear {
    pub fn register<F: Real, R: Rng + ?Sized>(params: &mut ParamSet<F>, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let weight = params.add(&format!("{name}.weight"), vec![fan_out, fan_in], uniform_init(fan_in * fan_out, bound, rng));
        let bias = params.add(&format!("{name}.bias"), vec![fan_out], vec![F::zero(); fan_out]);
        Self { weight, bias, fan_in, fan_out }
    }

    pub fn forward<F: Real>(&self, params: &ParamSet<F>, x: &[F]) -> (Vec<F>, LinearCache<F>) {
        assert_eq!(x.len(), self.fan_in);
        let w = params.get(self.weight);
        let y = params
            .get(self.bias)
            .iter()
            .enumerate()
            .map(|(o, &b)| b + w[o * self.fan_in..][..self.fan_in].iter().zip(x).map(|(&a, &v)| a * v).sum::<F>())
            .collect();
        (y, LinearCache { input: x.to_vec() })
    }

    pub fn backward<F: Real>(&self, params: &ParamSet<F>, cache: &LinearCache<F>, dy: &[F], grads: &mut ParamSet<F>) -> Vec<F> {
        let gw = grads.get_mut(self.weight);
        for (o, &g) in dy.iter().enumerate() {
            for (a, &v) in gw[o * self.fan_in..][..self.fan_in].iter_mut().zip(&cache.input) {
                *a += g * v;
            }
        }
        for (b, &g) in grads.get_mut(self.bias).iter_mut().zip(dy) {
            *b += g;
        }
        let w = params.get(self.weight);
        (0..self.fan_in).map(|i| dy.iter().enumerate().map(|(o, &g)| w[o * self.fan_in + i] * g).sum()).collect()
    }
}

/// Per output index along one axis: `(low source, high source, weight of high)`.
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (n - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear x2 upsampling with half-pixel centers and edge clamping.
pub fn upsample2x<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let (ty, tx) = (upsample_taps(x.h), upsample_taps(x.w));
    let (h2, w2) = (2 * x.h, 2 * x.w);
    let mut out = Tensor::zeros(x.c, h2, w2);
    for c in 0..x.c {
        let src = x.channel(c);
        let dst = &mut out.data[c * h2 * w2..][..h2 * w2];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = F::of_f64(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = F::of_f64(fx);
                let top = src[y0 * x.w + x0] * (F::one() - fx) + src[y0 * x.w + x1] * fx;
                let bot = src[y1 * x.w + x0] * (F::one() - fx) + src[y1 * x.w + x1] * fx;
                dst[oy * w2 + ox] = top * (F::one() - fy) + bot * fy;
            }
        }
    }
    out
}

/// Adjoint of [`upsample2x`].
pub fn upsample2x_backward<F: Real>(dout: &Tensor<F>) -> Tensor<F> {
    let (h, w) = (dout.h / 2, dout.w / 2);
    let (ty, tx) = (upsample_taps(h), upsample_taps(w));
    let mut dx = Tensor::zeros(dout.c, h, w);
    for c in 0..dout.c {
        let g = dout.channel(c);
        let dst = &mut dx.data[c * h * w..][..h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = F::of_f64(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = F::of_f64(fx);
                let v = g[oy * dout.w + ox];
                let (top, bot) = (v * (F::one() - fy), v * fy);
                dst[y0 * w + x0] += top * (F::one() - fx);
                dst[y0 * w + x1] += top * fx;
                dst[y1 * w + x0] += bot * (F::one() - fx);
                dst[y1 * w + x1] += bot * fx;
            }
        }
    }
    dx
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Gradient of a global average pool back onto the grid.
pub fn spatial_mean_backward<F: Real>(g: &[F], c: usize, h: usize, w: usize) -> Tensor<F> {
    let inv = F::one() / F::of_f64((h * w) as f64);
    let mut out = Tensor::zeros(c, h, w);
    for (ch, chunk) in out.data.chunks_exact_mut(h * w).enumerate() {
        chunk.fill(g[ch] * inv);
    }
    out
}
