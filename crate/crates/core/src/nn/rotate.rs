use super::{Real, Tensor};
use crate::sim::geometry::cos_sin_deg;

/// Sparse bilinear resampling that rotates a square grid about its center.
///
/// Rotation by `deg` moves content at offset `(dr, dc)` from the center to
/// `(dr cos + dc sin, dc cos - dr sin)`, the image-space counterpart of a
/// world rotation from +x towards +y. Samples outside the grid read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationMap<F> {
    pub size: usize,
    pub deg: f64,
    offsets: Vec<u32>,
    sources: Vec<u32>,
    weights: Vec<F>,
}

impl<F: Real> RotationMap<F> {
    pub fn new(size: usize, deg: f64) -> Self {
        let (cos, sin) = cos_sin_deg(deg);
        let mid = (size as f64 - 1.0) / 2.0;
        let mut offsets = Vec::with_capacity(size * size + 1);
        let mut sources = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for r in 0..size {
            for c in 0..size {
                let (dr, dc) = (r as f64 - mid, c as f64 - mid);
                // inverse rotation gives the source position
                let sr = mid + dr * cos - dc * sin;
                let sc = mid + dc * cos + dr * sin;
                let (r0, c0) = (sr.floor(), sc.floor());
                let (fr, fc) = (sr - r0, sc - c0);
                for (dy, wy) in [(0.0, 1.0 - fr), (1.0, fr)] {
                    for (dx, wx) in [(0.0, 1.0 - fc), (1.0, fc)] {
                        let w = wy * wx;
                        let (y, x) = (r0 + dy, c0 + dx);
                        if w == 0.0 || y < 0.0 || x < 0.0 || y >= size as f64 || x >= size as f64 {
                            continue;
                        }
                        sources.push((y as usize * size + x as usize) as u32);
                        weights.push(F::of_f64(w));
                    }
                }
                offsets.push(sources.len() as u32);
            }
        }
        Self { size, deg, offsets, sources, weights }
    }

    fn apply_plane(&self, src: &[F], dst: &mut [F]) {
        for (o, d) in dst.iter_mut().enumerate() {
            let (a, b) = (self.offsets[o] as usize, self.offsets[o + 1] as usize);
            let mut acc = F::zero();
            for (&s, &w) in self.sources[a..b].iter().zip(&self.weights[a..b]) {
                acc += src[s as usize] * w;
            }
            *d = acc;
        }
    }

    fn adjoint_plane(&self, dout: &[F], dsrc: &mut [F]) {
        for (o, &g) in dout.iter().enumerate() {
            let (a, b) = (self.offsets[o] as usize, self.offsets[o + 1] as usize);
            for (&s, &w) in self.sources[a..b].iter().zip(&self.weights[a..b]) {
                dsrc[s as usize] += g * w;
            }
        }
    }

    pub fn apply(&self, x: &Tensor<F>) -> Tensor<F> {
        assert!(x.h == self.size && x.w == self.size, "rotation grid size");
        let mut out = Tensor::zeros(x.c, x.h, x.w);
        let p = x.plane();
        for c in 0..x.c {
            self.apply_plane(x.channel(c), &mut out.data[c * p..(c + 1) * p]);
        }
        out
    }

    /// Rotates a single-channel row-major map.
    pub fn apply_map(&self, x: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); x.len()];
        self.apply_plane(x, &mut out);
        out
    }

    /// Transpose of [`apply`](Self::apply), used for backpropagation.
    pub fn adjoint(&self, dout: &Tensor<F>) -> Tensor<F> {
        let mut dx = Tensor::zeros(dout.c, dout.h, dout.w);
        let p = dout.plane();
        for c in 0..dout.c {
            self.adjoint_plane(dout.channel(c), &mut dx.data[c * p..(c + 1) * p]);
        }
        dx
    }

    pub fn adjoint_map(&self, dout: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); dout.len()];
        self.adjoint_plane(dout, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(2, n, n, (0..2 * n * n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn quarter_turn_is_an_exact_permutation() {
        let n = 12;
        let x = random(n, 1);
        let y = RotationMap::new(n, 90.0).apply(&x);
        for c in 0..2 {
            for r in 0..n {
                for col in 0..n {
                    assert_eq!(y.at(c, col, n - 1 - r), x.at(c, r, col));
                }
            }
        }
    }

    #[test]
    fn four_quarter_turns_are_identity_bit_for_bit() {
        let x = random(12, 2);
        let rot = RotationMap::new(12, 90.0);
        let y = rot.apply(&rot.apply(&rot.apply(&rot.apply(&x))));
        assert_eq!(y, x);
        assert_eq!(RotationMap::<f64>::new(12, 0.0).apply(&x), x);
        assert_eq!(RotationMap::new(12, -90.0).apply(&rot.apply(&x)), x);
    }

    #[test]
    fn adjoint_identity() {
        let x = random(10, 3);
        let g = random(10, 4);
        let rot = RotationMap::new(10, 37.0);
        let lhs: f64 = rot.apply(&x).data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&rot.adjoint(&g).data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn thirty_degree_turn_moves_offsets_as_documented() {
        // a single bright pixel off-center lands where the forward mapping sends it
        let n = 41;
        let mid = 20.0;
        let mut x = Tensor::zeros(1, n, n);
        x.data[20 * n + 30] = 1.0; // offset (0, 10)
        let y = RotationMap::new(n, 30.0).apply(&x);
        let (_, best) = y.data.iter().enumerate().fold((f64::MIN, 0), |acc, (i, &v)| if v > acc.0 { (v, i) } else { acc });
        let (r, c) = ((best / n) as f64, (best % n) as f64);
        let (cos, sin) = cos_sin_deg(30.0);
        let (er, ec) = (mid + 10.0 * sin, mid + 10.0 * cos);
        assert!((r - er).abs() <= 1.0 && (c - ec).abs() <= 1.0, "peak at {r},{c}, expected {er},{ec}");
    }
}
