use crate::par::for_each_chunk_mut;
use crate::{Shape, Tensor, Var};
use std::rc::Rc;

/// Bilinear tap for one sampling location.
#[derive(Clone, Copy, Debug, Default)]
struct Tap {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    lx: f64,
    ly: f64,
    /// `d px / d grid_x`, zero where the coordinate was clamped to the border.
    dx: f64,
    dy: f64,
}

fn axis(g: f64, len: usize) -> (usize, usize, f64, f64) {
    let scale = (len as f64 - 1.0) * 0.5;
    let p = (g + 1.0) * scale;
    let hi = len as f64 - 1.0;
    let (p, d) = if p < 0.0 {
        (0.0, 0.0)
    } else if p > hi {
        (hi, 0.0)
    } else {
        (p, scale)
    };
    let i0 = (p.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, p - i0 as f64, d)
}

fn build_taps(grid: &Tensor, h: usize, w: usize) -> Vec<Tap> {
    let gs = grid.shape();
    let mut taps = Vec::with_capacity(gs.n * gs.plane());
    for n in 0..gs.n {
        let gx = grid.plane(n, 0);
        let gy = grid.plane(n, 1);
        for i in 0..gs.plane() {
            let (x0, x1, lx, dx) = axis(gx[i], w);
            let (y0, y1, ly, dy) = axis(gy[i], h);
            taps.push(Tap { x0, x1, y0, y1, lx, ly, dx, dy });
        }
    }
    taps
}

impl<'t> Var<'t> {
    /// Bilinear sampling of `self` (`[n, c, h, w]`) at the normalised
    /// coordinates in `grid` (`[n, 2, ho, wo]`, channel 0 = x, 1 = y, both in
    /// `[-1, 1]` with -1/+1 at the outermost pixel centres). Coordinates
    /// beyond the border read the clamped edge value.
    pub fn grid_sample(self, grid: Var<'t>) -> Var<'t> {
        let s = self.shape();
        let gs = grid.shape();
        assert_eq!(gs.c, 2, "grid_sample: grid needs 2 channels");
        assert_eq!(gs.n, s.n, "grid_sample: batch mismatch");
        let x = self.value();
        let taps = Rc::new(build_taps(&grid.value(), s.h, s.w));
        let out_shape = Shape::new(s.n, s.c, gs.h, gs.w);
        let plane = gs.plane();
        let mut out = Tensor::zeros(out_shape);
        {
            let taps: &[Tap] = &taps;
            let x: &Tensor = &x;
            for_each_chunk_mut(out.data_mut(), plane, |idx, dst| {
                let n = idx / s.c;
                let src = x.plane(n, idx % s.c);
                for (i, d) in dst.iter_mut().enumerate() {
                    let t = taps[n * plane + i];
                    let top = src[t.y0 * s.w + t.x0] * (1.0 - t.lx) + src[t.y0 * s.w + t.x1] * t.lx;
                    let bot = src[t.y1 * s.w + t.x0] * (1.0 - t.lx) + src[t.y1 * s.w + t.x1] * t.lx;
                    *d = top * (1.0 - t.ly) + bot * t.ly;
                }
            });
        }
        self.tape().op(
            out,
            &[self, grid],
            Box::new(move |g, need| {
                let tp: &[Tap] = &taps;
                let gx = need[0].then(|| {
                    let mut gx = Tensor::zeros(s);
                    for_each_chunk_mut(gx.data_mut(), s.plane(), |idx, dst| {
                        let n = idx / s.c;
                        let gp = g.plane(n, idx % s.c);
                        for (i, &gv) in gp.iter().enumerate() {
                            let t = tp[n * plane + i];
                            dst[t.y0 * s.w + t.x0] += gv * (1.0 - t.ly) * (1.0 - t.lx);
                            dst[t.y0 * s.w + t.x1] += gv * (1.0 - t.ly) * t.lx;
                            dst[t.y1 * s.w + t.x0] += gv * t.ly * (1.0 - t.lx);
                            dst[t.y1 * s.w + t.x1] += gv * t.ly * t.lx;
                        }
                    });
                    gx
                });
                let ggrid = need[1].then(|| {
                    let mut gg = Tensor::zeros(gs);
                    for n in 0..s.n {
                        for c in 0..s.c {
                            let src = x.plane(n, c);
                            let gp = g.plane(n, c);
                            for (i, &gv) in gp.iter().enumerate() {
                                let t = taps[n * plane + i];
                                let v00 = src[t.y0 * s.w + t.x0];
                                let v01 = src[t.y0 * s.w + t.x1];
                                let v10 = src[t.y1 * s.w + t.x0];
                                let v11 = src[t.y1 * s.w + t.x1];
                                let dpx = (1.0 - t.ly) * (v01 - v00) + t.ly * (v11 - v10);
                                let dpy = (1.0 - t.lx) * (v10 - v00) + t.lx * (v11 - v01);
                                let bx = (n * 2) * plane + i;
                                let by = (n * 2 + 1) * plane + i;
                                gg.data_mut()[bx] += gv * dpx * t.dx;
                                gg.data_mut()[by] += gv * dpy * t.dy;
                            }
                        }
                    }
                    gg
                });
                vec![gx, ggrid]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::gradcheck::{check_grad, random_tensor};
    use crate::{Shape, Tape, Tensor};

    fn identity_grid(n: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn(Shape::new(n, 2, h, w), |_, c, y, x| {
            if c == 0 {
                2.0 * x as f64 / (w - 1) as f64 - 1.0
            } else {
                2.0 * y as f64 / (h - 1) as f64 - 1.0
            }
        })
    }

    #[test]
    fn identity_grid_reproduces_input() {
        let tape = Tape::new();
        let img = random_tensor(Shape::new(2, 3, 5, 7), 1, 0.0, 1.0);
        let y = tape
            .constant(img.clone())
            .grid_sample(tape.constant(identity_grid(2, 5, 7)));
        assert!(y.value().max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn out_of_range_reads_border() {
        let tape = Tape::new();
        let img = Tensor::from_fn(Shape::new(1, 1, 1, 3), |_, _, _, x| x as f64);
        let grid = Tensor::from_vec(Shape::new(1, 2, 1, 2), vec![-3.0, 5.0, 0.0, 0.0]);
        let y = tape.constant(img).grid_sample(tape.constant(grid));
        assert_eq!(y.value().data(), &[0.0, 2.0]);
    }

    #[test]
    fn sampling_gradients() {
        let img = random_tensor(Shape::new(2, 2, 6, 5), 2, 0.0, 1.0);
        // keep samples inside so the border clamp is not hit
        let grid = random_tensor(Shape::new(2, 2, 4, 4), 3, -0.9, 0.9);
        let probe = random_tensor(Shape::new(2, 2, 4, 4), 4, -1.0, 1.0);
        check_grad(&[img, grid], 1e-7, |tape, v| {
            v[0].grid_sample(v[1]).mul(tape.constant(probe.clone())).sum()
        });
    }
}
