use crate::{Shape, Tensor, Var};

impl<'t> Var<'t> {
    /// Sum of all elements, as a `[1,1,1,1]` tensor.
    pub fn sum(self) -> Var<'t> {
        let shape = self.shape();
        let s = self.value().sum();
        self.tape().op(
            Tensor::scalar(s),
            &[self],
            Box::new(move |g, _| vec![Some(Tensor::full(shape, g.data()[0]))]),
        )
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.shape().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Mean over channels, keeping a singleton channel axis.
    pub fn mean_channels(self) -> Var<'t> {
        let s = self.shape();
        let x = self.value();
        let p = s.plane();
        let inv = 1.0 / s.c as f64;
        let mut out = Tensor::zeros(s.with_c(1));
        for n in 0..s.n {
            let o = &mut out.data_mut()[n * p..(n + 1) * p];
            for c in 0..s.c {
                for (acc, v) in o.iter_mut().zip(x.plane(n, c)) {
                    *acc += v;
                }
            }
            o.iter_mut().for_each(|v| *v *= inv);
        }
        self.tape().op(
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = Tensor::zeros(s);
                for n in 0..s.n {
                    let gp = g.plane(n, 0);
                    for c in 0..s.c {
                        let start = (n * s.c + c) * p;
                        for (d, v) in gx.data_mut()[start..start + p].iter_mut().zip(gp) {
                            *d = v * inv;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Mean over `h, w`, giving shape `[n, c, 1, 1]`.
    pub fn mean_spatial(self) -> Var<'t> {
        let s = self.shape();
        let x = self.value();
        let p = s.plane();
        let inv = 1.0 / p as f64;
        let data = (0..s.n * s.c)
            .map(|i| x.data()[i * p..(i + 1) * p].iter().sum::<f64>() * inv)
            .collect();
        self.tape().op(
            Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), data),
            &[self],
            Box::new(move |g, _| {
                let data = (0..s.len()).map(|i| g.data()[i / p] * inv).collect();
                vec![Some(Tensor::from_vec(s, data))]
            }),
        )
    }

    /// Elementwise minimum over same-shaped variables. Ties resolve to the
    /// earliest argument, which receives the whole gradient.
    pub fn min_of(vars: &[Var<'t>]) -> Var<'t> {
        assert!(!vars.is_empty(), "min_of needs at least one input");
        let shape = vars[0].shape();
        let values: Vec<_> = vars.iter().map(|v| v.value()).collect();
        let mut out = values[0].as_ref().clone();
        let mut arg = vec![0u16; shape.len()];
        for (k, v) in values.iter().enumerate().skip(1) {
            assert_eq!(v.shape(), shape, "min_of shape mismatch");
            for (i, (&x, o)) in v.data().iter().zip(out.data_mut()).enumerate() {
                if x < *o {
                    *o = x;
                    arg[i] = k as u16;
                }
            }
        }
        let count = vars.len();
        vars[0].tape().op(
            out,
            vars,
            Box::new(move |g, need| {
                (0..count)
                    .map(|k| {
                        need[k].then(|| {
                            let data = g
                                .data()
                                .iter()
                                .zip(&arg)
                                .map(|(&g, &a)| if a as usize == k { g } else { 0.0 })
                                .collect();
                            Tensor::from_vec(shape, data)
                        })
                    })
                    .collect()
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::gradcheck::{check_grad, random_tensor};
    use crate::{Shape, Tape, Var};

    #[test]
    fn reductions_gradients() {
        let x = random_tensor(Shape::new(2, 3, 4, 5), 11, -1.0, 1.0);
        let w1 = random_tensor(Shape::new(2, 1, 4, 5), 12, -1.0, 1.0);
        let w2 = random_tensor(Shape::new(2, 3, 1, 1), 13, -1.0, 1.0);
        check_grad(std::slice::from_ref(&x), 1e-6, |tape, v| {
            v[0].mean_channels().mul(tape.constant(w1.clone())).sum()
        });
        check_grad(std::slice::from_ref(&x), 1e-6, |tape, v| {
            v[0].mean_spatial().mul(tape.constant(w2.clone())).mean()
        });
    }

    #[test]
    fn min_of_routes_gradient_to_argmin() {
        let a = random_tensor(Shape::new(1, 1, 4, 4), 1, 0.0, 1.0);
        let b = random_tensor(Shape::new(1, 1, 4, 4), 2, 0.0, 1.0);
        check_grad(&[a.clone(), b.clone()], 1e-7, |_, v| Var::min_of(&[v[0], v[1]]).sum());
        let tape = Tape::new();
        let va = tape.constant(a.clone());
        let vb = tape.constant(b.clone());
        let m = Var::min_of(&[va, vb]).value();
        for i in 0..16 {
            assert_eq!(m.data()[i], a.data()[i].min(b.data()[i]));
        }
    }
}
