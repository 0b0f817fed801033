//! 2-D convolution with zero or reflection padding.

use crate::par::for_each_chunk_mut;
use crate::{Shape, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::rc::Rc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PadMode {
    Zero,
    /// Mirror without repeating the edge sample.
    Reflect,
}

#[inline]
fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    r as usize
}

/// Pad the spatial axes by `p` on every side.
pub fn pad(x: &Tensor, p: usize, mode: PadMode) -> Tensor {
    if p == 0 {
        return x.clone();
    }
    let s = x.shape();
    if mode == PadMode::Reflect {
        assert!(p < s.h && p < s.w, "reflection pad {p} too large for {s}");
    }
    let (hp, wp) = (s.h + 2 * p, s.w + 2 * p);
    let mut out = Tensor::zeros(s.with_hw(hp, wp));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let base = (n * s.c + c) * hp * wp;
            let dst = &mut out.data_mut()[base..base + hp * wp];
            for y in 0..hp {
                let sy = y as isize - p as isize;
                for xx in 0..wp {
                    let sx = xx as isize - p as isize;
                    dst[y * wp + xx] = match mode {
                        PadMode::Zero => {
                            if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize {
                                0.0
                            } else {
                                src[sy as usize * s.w + sx as usize]
                            }
                        }
                        PadMode::Reflect => src[reflect(sy, s.h) * s.w + reflect(sx, s.w)],
                    };
                }
            }
        }
    }
    out
}

/// Adjoint of [`pad`]: fold a gradient on the padded grid back to `shape`.
pub fn unpad_grad(g: &Tensor, shape: Shape, p: usize, mode: PadMode) -> Tensor {
    if p == 0 {
        return g.clone();
    }
    let (hp, wp) = (shape.h + 2 * p, shape.w + 2 * p);
    let mut out = Tensor::zeros(shape);
    for n in 0..shape.n {
        for c in 0..shape.c {
            let src = g.plane(n, c);
            let base = (n * shape.c + c) * shape.plane();
            let dst = &mut out.data_mut()[base..base + shape.plane()];
            for y in 0..hp {
                let sy = y as isize - p as isize;
                for x in 0..wp {
                    let sx = x as isize - p as isize;
                    let v = src[y * wp + x];
                    match mode {
                        PadMode::Zero => {
                            if sy >= 0 && sx >= 0 && sy < shape.h as isize && sx < shape.w as isize {
                                dst[sy as usize * shape.w + sx as usize] += v;
                            }
                        }
                        PadMode::Reflect => {
                            dst[reflect(sy, shape.h) * shape.w + reflect(sx, shape.w)] += v;
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    ci: usize,
    co: usize,
    k: usize,
    stride: usize,
    hp: usize,
    wp: usize,
    ho: usize,
    wo: usize,
}

fn conv_forward(xp: &Tensor, w: &Tensor, b: Option<&Tensor>, g: Geometry) -> Tensor {
    let mut out = Tensor::zeros(Shape::new(g.n, g.co, g.ho, g.wo));
    let plane = g.ho * g.wo;
    let kk = g.k * g.k;
    for_each_chunk_mut(out.data_mut(), plane, |idx, dst| {
        let (n, oc) = (idx / g.co, idx % g.co);
        let bias = b.map_or(0.0, |b| b.data()[oc]);
        dst.iter_mut().for_each(|v| *v = bias);
        for ic in 0..g.ci {
            let src = xp.plane(n, ic);
            let wbase = (oc * g.ci + ic) * kk;
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let wv = w.data()[wbase + ky * g.k + kx];
                    for oy in 0..g.ho {
                        let row = &src[(oy * g.stride + ky) * g.wp + kx..];
                        let drow = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                        if g.stride == 1 {
                            for (d, s) in drow.iter_mut().zip(row) {
                                *d += wv * s;
                            }
                        } else {
                            for (ox, d) in drow.iter_mut().enumerate() {
                                *d += wv * row[ox * g.stride];
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

fn conv_grad_input(gout: &Tensor, w: &Tensor, g: Geometry) -> Tensor {
    let mut gxp = Tensor::zeros(Shape::new(g.n, g.ci, g.hp, g.wp));
    let kk = g.k * g.k;
    for_each_chunk_mut(gxp.data_mut(), g.hp * g.wp, |idx, dst| {
        let (n, ic) = (idx / g.ci, idx % g.ci);
        for oc in 0..g.co {
            let go = gout.plane(n, oc);
            let wbase = (oc * g.ci + ic) * kk;
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let wv = w.data()[wbase + ky * g.k + kx];
                    for oy in 0..g.ho {
                        let grow = &go[oy * g.wo..(oy + 1) * g.wo];
                        let base = (oy * g.stride + ky) * g.wp + kx;
                        if g.stride == 1 {
                            for (d, gv) in dst[base..base + g.wo].iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        } else {
                            for (ox, gv) in grow.iter().enumerate() {
                                dst[base + ox * g.stride] += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    });
    gxp
}

fn conv_grad_weight(gout: &Tensor, xp: &Tensor, g: Geometry) -> Tensor {
    let kk = g.k * g.k;
    let mut gw = Tensor::zeros(Shape::new(g.co, g.ci, g.k, g.k));
    for_each_chunk_mut(gw.data_mut(), g.ci * kk, |oc, dst| {
        for n in 0..g.n {
            let go = gout.plane(n, oc);
            for ic in 0..g.ci {
                let src = xp.plane(n, ic);
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        let mut acc = 0.0;
                        for oy in 0..g.ho {
                            let grow = &go[oy * g.wo..(oy + 1) * g.wo];
                            let row = &src[(oy * g.stride + ky) * g.wp + kx..];
                            if g.stride == 1 {
                                acc += grow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                            } else {
                                for (ox, gv) in grow.iter().enumerate() {
                                    acc += gv * row[ox * g.stride];
                                }
                            }
                        }
                        dst[ic * kk + ky * g.k + kx] += acc;
                    }
                }
            }
        }
    });
    gw
}

impl<'t> Var<'t> {
    /// Square-kernel convolution. `weight` is `[out, in, k, k]`, `bias` is
    /// `[1, out, 1, 1]`.
    pub fn conv2d(
        self,
        weight: Var<'t>,
        bias: Option<Var<'t>>,
        stride: usize,
        padding: usize,
        mode: PadMode,
    ) -> Var<'t> {
        let xs = self.shape();
        let ws = weight.shape();
        assert_eq!(ws.c, xs.c, "conv2d: weight expects {} input channels, got {}", ws.c, xs.c);
        assert_eq!(ws.h, ws.w, "conv2d: square kernels only");
        assert!(stride >= 1);
        let k = ws.h;
        let (hp, wp) = (xs.h + 2 * padding, xs.w + 2 * padding);
        assert!(hp >= k && wp >= k, "conv2d: kernel larger than padded input");
        let geom = Geometry {
            n: xs.n,
            ci: xs.c,
            co: ws.n,
            k,
            stride,
            hp,
            wp,
            ho: (hp - k) / stride + 1,
            wo: (wp - k) / stride + 1,
        };
        let xp = Rc::new(pad(&self.value(), padding, mode));
        let w = weight.value();
        let b = bias.map(|b| {
            let v = b.value();
            assert_eq!(v.len(), geom.co, "conv2d: bias length");
            v
        });
        let out = conv_forward(&xp, &w, b.as_deref(), geom);
        let bias_shape = bias.map(|b| b.shape());
        let mut parents = vec![self, weight];
        parents.extend(bias);
        self.tape().op(
            out,
            &parents,
            Box::new(move |g, need| {
                let mut grads = Vec::with_capacity(3);
                grads.push(
                    need[0].then(|| unpad_grad(&conv_grad_input(g, &w, geom), xs, padding, mode)),
                );
                grads.push(need[1].then(|| conv_grad_weight(g, &xp, geom)));
                if let Some(bs) = bias_shape {
                    grads.push(need[2].then(|| {
                        let mut gb = vec![0.0; geom.co];
                        for n in 0..geom.n {
                            for (oc, acc) in gb.iter_mut().enumerate() {
                                *acc += g.plane(n, oc).iter().sum::<f64>();
                            }
                        }
                        Tensor::from_vec(bs, gb)
                    }));
                }
                grads
            }),
        )
    }
}
