use crate::{Shape, Tensor, Var};
use std::rc::Rc;

/// Apply `f` over the broadcast of `a` and `b`.
fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (sa, sb) = (a.shape(), b.shape());
    if sa == sb {
        return a.zip_map(b, f);
    }
    let out = sa
        .broadcast(sb)
        .unwrap_or_else(|| panic!("cannot broadcast {sa} with {sb}"));
    let (ta, tb) = (sa.broadcast_strides(), sb.broadcast_strides());
    let (da, db) = (a.data(), b.data());
    let mut data = Vec::with_capacity(out.len());
    for n in 0..out.n {
        for c in 0..out.c {
            for y in 0..out.h {
                let ra = n * ta[0] + c * ta[1] + y * ta[2];
                let rb = n * tb[0] + c * tb[1] + y * tb[2];
                for x in 0..out.w {
                    data.push(f(da[ra + x * ta[3]], db[rb + x * tb[3]]));
                }
            }
        }
    }
    Tensor::from_vec(out, data)
}

/// Broadcast `t` up to `shape`.
fn expand(t: &Tensor, shape: Shape) -> Tensor {
    if t.shape() == shape {
        return t.clone();
    }
    broadcast_zip(t, &Tensor::zeros(shape), |a, _| a)
}

impl<'t> Var<'t> {
    pub fn add(self, other: Var<'t>) -> Var<'t> {
        let (sa, sb) = (self.shape(), other.shape());
        let y = broadcast_zip(&self.value(), &other.value(), |a, b| a + b);
        self.tape().op(
            y,
            &[self, other],
            Box::new(move |g, need| {
                vec![
                    need[0].then(|| g.sum_to(sa)),
                    need[1].then(|| g.sum_to(sb)),
                ]
            }),
        )
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        let (sa, sb) = (self.shape(), other.shape());
        let y = broadcast_zip(&self.value(), &other.value(), |a, b| a - b);
        self.tape().op(
            y,
            &[self, other],
            Box::new(move |g, need| {
                vec![
                    need[0].then(|| g.sum_to(sa)),
                    need[1].then(|| g.map(|v| -v).sum_to(sb)),
                ]
            }),
        )
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let y = broadcast_zip(&a, &b, |a, b| a * b);
        self.tape().op(
            y,
            &[self, other],
            Box::new(move |g, need| {
                let out = g.shape();
                vec![
                    need[0].then(|| g.zip_map(&expand(&b, out), |g, b| g * b).sum_to(a.shape())),
                    need[1].then(|| g.zip_map(&expand(&a, out), |g, a| g * a).sum_to(b.shape())),
                ]
            }),
        )
    }

    pub fn div(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let y = Rc::new(broadcast_zip(&a, &b, |a, b| a / b));
        let y_saved = Rc::clone(&y);
        self.tape().op(
            (*y).clone(),
            &[self, other],
            Box::new(move |g, need| {
                let out = g.shape();
                let bx = expand(&b, out);
                vec![
                    need[0].then(|| g.zip_map(&bx, |g, b| g / b).sum_to(a.shape())),
                    need[1].then(|| {
                        let gy = g.zip_map(&y_saved, |g, y| g * y);
                        gy.zip_map(&bx, |gy, b| -gy / b).sum_to(b.shape())
                    }),
                ]
            }),
        )
    }

    /// Multiply by a constant tensor (broadcast allowed), without recording
    /// the constant as a separate leaf.
    pub fn mul_const(self, k: &Tensor) -> Var<'t> {
        let k = Rc::new(k.clone());
        let sa = self.shape();
        let y = broadcast_zip(&self.value(), &k, |a, b| a * b);
        self.tape().op(
            y,
            &[self],
            Box::new(move |g, _| vec![Some(g.zip_map(&expand(&k, g.shape()), |g, k| g * k).sum_to(sa))]),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::gradcheck::{check_grad, random_tensor};
    use crate::{Shape, Tape, Tensor};

    #[test]
    fn broadcast_forward() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_fn(Shape::new(1, 2, 1, 2), |_, c, _, x| (c * 2 + x) as f64));
        let b = tape.constant(Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![10.0, 20.0]));
        assert_eq!(a.add(b).value().data(), &[10.0, 11.0, 22.0, 23.0]);
    }

    #[test]
    fn binary_gradients_with_broadcast() {
        let a = random_tensor(Shape::new(2, 3, 4, 4), 1, 0.5, 1.5);
        let b = random_tensor(Shape::new(1, 3, 1, 4), 2, 0.5, 1.5);
        let w = random_tensor(Shape::new(2, 3, 4, 4), 3, -1.0, 1.0);
        for op in 0..4 {
            check_grad(&[a.clone(), b.clone()], 1e-6, |tape, v| {
                let wv = tape.constant(w.clone());
                let y = match op {
                    0 => v[0].add(v[1]),
                    1 => v[0].sub(v[1]),
                    2 => v[0].mul(v[1]),
                    _ => v[0].div(v[1]),
                };
                y.mul(wv).sum()
            });
        }
    }
}
