use crate::{Shape, Tensor, Var};

/// Copy the window `[c0..c0+cs, y0..y0+hs, x0..x0+ws]` of every batch item
/// from `src` into `dst` at channel offset `dc`.
#[allow(clippy::too_many_arguments)]
fn copy_window(
    src: &Tensor,
    dst: &mut Tensor,
    c0: usize,
    y0: usize,
    x0: usize,
    out: Shape,
    dc: usize,
    add: bool,
    reverse: bool,
) {
    // reverse=false: dst[n, dc+c, y, x] (=|+=) src[n, c0+c, y0+y, x0+x]
    // reverse=true:  dst[n, c0+c, y0+y, x0+x] (=|+=) src[n, dc+c, y, x]
    for n in 0..out.n {
        for c in 0..out.c {
            for y in 0..out.h {
                for x in 0..out.w {
                    let (si, di) = if reverse {
                        (src.offset(n, dc + c, y, x), dst.offset(n, c0 + c, y0 + y, x0 + x))
                    } else {
                        (src.offset(n, c0 + c, y0 + y, x0 + x), dst.offset(n, dc + c, y, x))
                    };
                    let v = src.data()[si];
                    if add {
                        dst.data_mut()[di] += v;
                    } else {
                        dst.data_mut()[di] = v;
                    }
                }
            }
        }
    }
}

impl<'t> Var<'t> {
    /// Sub-window over channels, rows and columns.
    pub fn window(self, c0: usize, cs: usize, y0: usize, hs: usize, x0: usize, ws: usize) -> Var<'t> {
        let s = self.shape();
        assert!(
            c0 + cs <= s.c && y0 + hs <= s.h && x0 + ws <= s.w,
            "window out of range for {s}"
        );
        let out_shape = Shape::new(s.n, cs, hs, ws);
        let mut out = Tensor::zeros(out_shape);
        copy_window(&self.value(), &mut out, c0, y0, x0, out_shape, 0, false, false);
        self.tape().op(
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = Tensor::zeros(s);
                copy_window(g, &mut gx, c0, y0, x0, out_shape, 0, true, true);
                vec![Some(gx)]
            }),
        )
    }

    pub fn slice_channels(self, start: usize, len: usize) -> Var<'t> {
        let s = self.shape();
        self.window(start, len, 0, s.h, 0, s.w)
    }

    pub fn narrow_h(self, start: usize, len: usize) -> Var<'t> {
        let s = self.shape();
        self.window(0, s.c, start, len, 0, s.w)
    }

    pub fn narrow_w(self, start: usize, len: usize) -> Var<'t> {
        let s = self.shape();
        self.window(0, s.c, 0, s.h, start, len)
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of zero variables");
        let shapes: Vec<Shape> = parts.iter().map(|p| p.shape()).collect();
        let first = shapes[0];
        for s in &shapes {
            assert_eq!((s.n, s.h, s.w), (first.n, first.h, first.w), "concat shape mismatch");
        }
        let total: usize = shapes.iter().map(|s| s.c).sum();
        let out_shape = first.with_c(total);
        let mut out = Tensor::zeros(out_shape);
        let mut offset = 0;
        for (p, s) in parts.iter().zip(&shapes) {
            copy_window(&p.value(), &mut out, 0, 0, 0, *s, offset, false, false);
            offset += s.c;
        }
        parts[0].tape().op(
            out,
            parts,
            Box::new(move |g, need| {
                let mut offset = 0;
                shapes
                    .iter()
                    .zip(need)
                    .map(|(s, &need)| {
                        let r = need.then(|| {
                            let mut gx = Tensor::zeros(*s);
                            copy_window(g, &mut gx, offset, 0, 0, *s, 0, false, false);
                            gx
                        });
                        offset += s.c;
                        r
                    })
                    .collect()
            }),
        )
    }

    /// Same data, new shape of equal length.
    pub fn reshape(self, shape: Shape) -> Var<'t> {
        let s = self.shape();
        let y = self.value().as_ref().clone().reshape(shape);
        self.tape().op(
            y,
            &[self],
            Box::new(move |g, _| vec![Some(g.clone().reshape(s))]),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::gradcheck::{check_grad, random_tensor};
    use crate::{Shape, Tape, Tensor, Var};

    #[test]
    fn concat_then_slice_round_trips() {
        let tape = Tape::new();
        let a = random_tensor(Shape::new(2, 2, 3, 3), 1, 0.0, 1.0);
        let b = random_tensor(Shape::new(2, 1, 3, 3), 2, 0.0, 1.0);
        let va = tape.constant(a.clone());
        let vb = tape.constant(b.clone());
        let cat = Var::concat_channels(&[va, vb]);
        assert_eq!(cat.shape().c, 3);
        assert_eq!(*cat.slice_channels(0, 2).value(), a);
        assert_eq!(*cat.slice_channels(2, 1).value(), b);
    }

    #[test]
    fn window_gradients() {
        let a = random_tensor(Shape::new(2, 2, 5, 4), 3, -1.0, 1.0);
        let b = random_tensor(Shape::new(2, 1, 5, 4), 4, -1.0, 1.0);
        let w = random_tensor(Shape::new(2, 2, 3, 3), 5, -1.0, 1.0);
        check_grad(&[a, b], 1e-6, |tape, v| {
            Var::concat_channels(&[v[0], v[1]])
                .window(1, 2, 1, 3, 0, 3)
                .mul(tape.constant(w.clone()))
                .sum()
        });
    }

    #[test]
    fn narrow_picks_expected_columns() {
        let tape = Tape::new();
        let t = Tensor::from_fn(Shape::new(1, 1, 2, 3), |_, _, y, x| (y * 3 + x) as f64);
        let v = tape.constant(t).narrow_w(1, 2);
        assert_eq!(v.value().data(), &[1.0, 2.0, 4.0, 5.0]);
    }
}
