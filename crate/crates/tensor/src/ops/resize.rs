use crate::{Tensor, Var};

/// Half-pixel-centre bilinear taps along one axis (`align_corners = false`).
fn taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

impl<'t> Var<'t> {
    /// Bilinear resize of the spatial axes.
    pub fn resize_bilinear(self, h: usize, w: usize) -> Var<'t> {
        let s = self.shape();
        if (s.h, s.w) == (h, w) {
            return self;
        }
        let ty = taps(h, s.h);
        let tx = taps(w, s.w);
        let x = self.value();
        let out = Tensor::from_fn(s.with_hw(h, w), |n, c, y, xx| {
            let (y0, y1, ly) = ty[y];
            let (x0, x1, lx) = tx[xx];
            let p = x.plane(n, c);
            let top = p[y0 * s.w + x0] * (1.0 - lx) + p[y0 * s.w + x1] * lx;
            let bot = p[y1 * s.w + x0] * (1.0 - lx) + p[y1 * s.w + x1] * lx;
            top * (1.0 - ly) + bot * ly
        });
        self.tape().op(
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = Tensor::zeros(s);
                for n in 0..s.n {
                    for c in 0..s.c {
                        let base = (n * s.c + c) * s.plane();
                        for (y, &(y0, y1, ly)) in ty.iter().enumerate() {
                            for (xx, &(x0, x1, lx)) in tx.iter().enumerate() {
                                let gv = g.at(n, c, y, xx);
                                let d = gx.data_mut();
                                d[base + y0 * s.w + x0] += gv * (1.0 - ly) * (1.0 - lx);
                                d[base + y0 * s.w + x1] += gv * (1.0 - ly) * lx;
                                d[base + y1 * s.w + x0] += gv * ly * (1.0 - lx);
                                d[base + y1 * s.w + x1] += gv * ly * lx;
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
    use crate::gradcheck::{check_grad, random_tensor};
    use crate::{Shape, Tape, Tensor};

    #[test]
    fn upsampling_a_constant_keeps_it() {
        let tape = Tape::new();
        let y = tape.constant(Tensor::full(Shape::new(1, 1, 4, 4), 0.7)).resize_bilinear(16, 16);
        assert!(y.value().data().iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn matches_half_pixel_reference_on_2x() {
        // 1-D ramp [0, 1] upsampled to 4 samples: positions -0.25, 0.25, 0.75, 1.25
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![0.0, 1.0]));
        let y = x.resize_bilinear(1, 4);
        let d = y.value();
        assert_eq!(d.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn resize_gradient() {
        let x = random_tensor(Shape::new(2, 1, 4, 4), 1, 0.0, 1.0);
        let p = random_tensor(Shape::new(2, 1, 8, 8), 2, -1.0, 1.0);
        check_grad(&[x], 1e-6, |tape, v| {
            v[0].resize_bilinear(8, 8).mul(tape.constant(p.clone())).sum()
        });
    }
}
