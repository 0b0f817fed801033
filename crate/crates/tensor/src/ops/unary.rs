use crate::{Tape, Tensor, Var};

impl<'t> Var<'t> {
    /// Elementwise map with derivative `df(x, y)` where `y = f(x)`.
    fn unary(self, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var<'t> {
        let x = self.value();
        let y = x.map(f);
        let tape: &Tape = self.tape();
        let y_saved = std::rc::Rc::new(y.clone());
        tape.op(
            y,
            &[self],
            Box::new(move |g, _| {
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .zip(y_saved.data())
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(Tensor::from_vec(g.shape(), data))]
            }),
        )
    }

    pub fn neg(self) -> Var<'t> {
        self.unary(|x| -x, |_, _| -1.0)
    }

    pub fn scale(self, k: f64) -> Var<'t> {
        self.unary(move |x| k * x, move |_, _| k)
    }

    pub fn add_scalar(self, k: f64) -> Var<'t> {
        self.unary(move |x| x + k, |_, _| 1.0)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn recip(self) -> Var<'t> {
        self.unary(|x| 1.0 / x, |_, y| -y * y)
    }

    /// Subgradient 0 at the origin.
    pub fn abs(self) -> Var<'t> {
        self.unary(f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(|x| 1.0 / (1.0 + (-x).exp()), |_, y| y * (1.0 - y))
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn elu(self) -> Var<'t> {
        self.unary(
            |x| if x > 0.0 { x } else { x.exp_m1() },
            |x, y| if x > 0.0 { 1.0 } else { y + 1.0 },
        )
    }

    /// `max(x, lo)`; gradient passes only where `x > lo`.
    pub fn clamp_min(self, lo: f64) -> Var<'t> {
        self.unary(move |x| x.max(lo), move |x, _| if x > lo { 1.0 } else { 0.0 })
    }

    /// Clamp into `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(
            move |x| x.clamp(lo, hi),
            move |x, _| if x > lo && x < hi { 1.0 } else { 0.0 },
        )
    }
}
