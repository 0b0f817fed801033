use super::conv::{pad, unpad_grad, PadMode};
use crate::par::for_each_chunk_mut;
use crate::{Shape, Tensor, Var};

/// Stride-1 `k × k` box mean over a pre-padded plane.
fn box_mean(xp: &Tensor, k: usize, out_shape: Shape) -> Tensor {
    let wp = out_shape.w + k - 1;
    let inv = 1.0 / (k * k) as f64;
    let mut out = Tensor::zeros(out_shape);
    let (h, w) = (out_shape.h, out_shape.w);
    for_each_chunk_mut(out.data_mut(), h * w, |idx, dst| {
        let src = xp.plane(idx / out_shape.c, idx % out_shape.c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for ky in 0..k {
                    let row = &src[(y + ky) * wp + x..(y + ky) * wp + x + k];
                    acc += row.iter().sum::<f64>();
                }
                dst[y * w + x] = acc * inv;
            }
        }
    });
    out
}

impl<'t> Var<'t> {
    /// `k × k` mean filter (odd `k`) with same-size output.
    pub fn box_filter(self, k: usize, mode: PadMode) -> Var<'t> {
        assert!(k % 2 == 1, "box_filter expects an odd window");
        let s = self.shape();
        let p = k / 2;
        let xp = pad(&self.value(), p, mode);
        let out = box_mean(&xp, k, s);
        self.tape().op(
            out,
            &[self],
            Box::new(move |g, _| {
                // adjoint of box mean: scatter each gradient over its window
                let (hp, wp) = (s.h + 2 * p, s.w + 2 * p);
                let inv = 1.0 / (k * k) as f64;
                let mut gp = Tensor::zeros(s.with_hw(hp, wp));
                for_each_chunk_mut(gp.data_mut(), hp * wp, |idx, dst| {
                    let gs = g.plane(idx / s.c, idx % s.c);
                    for y in 0..s.h {
                        for x in 0..s.w {
                            let v = gs[y * s.w + x] * inv;
                            for ky in 0..k {
                                for d in &mut dst[(y + ky) * wp + x..(y + ky) * wp + x + k] {
                                    *d += v;
                                }
                            }
                        }
                    }
                });
                vec![Some(unpad_grad(&gp, s, p, mode))]
            }),
        )
    }

    /// 2×2 mean with stride 2. Height and width must be even.
    pub fn avg_pool2(self) -> Var<'t> {
        let s = self.shape();
        assert!(s.h % 2 == 0 && s.w % 2 == 0, "avg_pool2 needs even dims, got {s}");
        let (ho, wo) = (s.h / 2, s.w / 2);
        let x = self.value();
        let out_shape = s.with_hw(ho, wo);
        let mut out = Tensor::zeros(out_shape);
        let xr: &Tensor = &x;
        for_each_chunk_mut(out.data_mut(), ho * wo, |idx, dst| {
            let src = xr.plane(idx / s.c, idx % s.c);
            for y in 0..ho {
                for xx in 0..wo {
                    let i = 2 * y * s.w + 2 * xx;
                    dst[y * wo + xx] = 0.25 * (src[i] + src[i + 1] + src[i + s.w] + src[i + s.w + 1]);
                }
            }
        });
        self.tape().op(
            out,
            &[self],
            Box::new(move |g, _| {
                let gx = Tensor::from_fn(s, |n, c, y, x| 0.25 * g.at(n, c, y / 2, x / 2));
                vec![Some(gx)]
            }),
        )
    }

    /// Max pooling with `-inf` padding.
    pub fn max_pool(self, k: usize, stride: usize, padding: usize) -> Var<'t> {
        let s = self.shape();
        let ho = (s.h + 2 * padding - k) / stride + 1;
        let wo = (s.w + 2 * padding - k) / stride + 1;
        let x = self.value();
        let out_shape = s.with_hw(ho, wo);
        let mut arg = vec![0usize; out_shape.len()];
        let mut out = Tensor::zeros(out_shape);
        for n in 0..s.n {
            for c in 0..s.c {
                let src = x.plane(n, c);
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = f64::NEG_INFINITY;
                        let mut bi = 0;
                        for ky in 0..k {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= s.h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix >= s.w as isize {
                                    continue;
                                }
                                let i = iy as usize * s.w + ix as usize;
                                if src[i] > best {
                                    best = src[i];
                                    bi = i;
                                }
                            }
                        }
                        let o = out.offset(n, c, oy, ox);
                        out.data_mut()[o] = best;
                        arg[o] = (n * s.c + c) * s.plane() + bi;
                    }
                }
            }
        }
        self.tape().op(
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = Tensor::zeros(s);
                for (gv, &a) in g.data().iter().zip(&arg) {
                    gx.data_mut()[a] += gv;
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2(self) -> Var<'t> {
        let s = self.shape();
        let x = self.value();
        let out = Tensor::from_fn(s.with_hw(2 * s.h, 2 * s.w), |n, c, y, xx| x.at(n, c, y / 2, xx / 2));
        self.tape().op(
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = Tensor::zeros(s);
                for n in 0..s.n {
                    for c in 0..s.c {
                        for y in 0..2 * s.h {
                            for xx in 0..2 * s.w {
                                let i = gx.offset(n, c, y / 2, xx / 2);
                                gx.data_mut()[i] += g.at(n, c, y, xx);
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_grad, random_tensor};
    use crate::Tape;

    #[test]
    fn box_filter_of_constant_is_constant() {
        let tape = Tape::new();
        let y = tape
            .constant(Tensor::full(Shape::new(1, 2, 5, 5), 0.3))
            .box_filter(3, PadMode::Reflect);
        assert!(y.value().data().iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn pooling_gradients() {
        let x = random_tensor(Shape::new(2, 2, 6, 6), 1, -1.0, 1.0);
        for op in 0..4 {
            let probe_shape = match op {
                0 => Shape::new(2, 2, 6, 6),
                1 => Shape::new(2, 2, 3, 3),
                2 => Shape::new(2, 2, 3, 3),
                _ => Shape::new(2, 2, 12, 12),
            };
            let probe = random_tensor(probe_shape, 2 + op as u64, -1.0, 1.0);
            check_grad(std::slice::from_ref(&x), 1e-6, |tape, v| {
                let y = match op {
                    0 => v[0].box_filter(3, PadMode::Reflect),
                    1 => v[0].avg_pool2().narrow_h(0, 3).narrow_w(0, 3),
                    2 => v[0].max_pool(3, 2, 1),
                    _ => v[0].upsample2(),
                };
                y.mul(tape.constant(probe.clone())).sum()
            });
        }
    }
}
