//! Central finite-difference checks for recorded gradients.

use crate::{Shape, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random tensor in `[lo, hi)` from a fixed seed.
pub fn random_tensor(shape: Shape, seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.len()).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape, data)
}

/// Analytic and finite-difference gradients of a scalar function.
#[derive(Debug, Clone)]
pub struct GradComparison {
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

impl GradComparison {
    /// Per input: `‖numeric − analytic‖₂ / max(‖numeric‖₂, ‖analytic‖₂)`.
    pub fn relative_errors(&self) -> Vec<f64> {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| {
                let diff: f64 = a.data().iter().zip(n.data()).map(|(x, y)| (x - y).powi(2)).sum();
                let na: f64 = a.data().iter().map(|x| x * x).sum();
                let nn: f64 = n.data().iter().map(|x| x * x).sum();
                let denom = na.sqrt().max(nn.sqrt());
                if denom < 1e-12 {
                    diff.sqrt()
                } else {
                    diff.sqrt() / denom
                }
            })
            .collect()
    }

    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors().into_iter().fold(0.0, f64::max)
    }
}

fn evaluate<F>(inputs: &[Tensor], grad: bool, f: &F) -> (f64, Vec<Tensor>)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs
        .iter()
        .map(|t| if grad { tape.param(t.clone()) } else { tape.constant(t.clone()) })
        .collect();
    let out = f(&tape, &vars);
    let value = out.item();
    if !grad {
        return (value, Vec::new());
    }
    let g = tape.backward(out);
    (value, vars.iter().map(|&v| g.get_or_zeros(v)).collect())
}

/// Compare reverse-mode gradients of `f` against central differences with
/// the given `step`.
pub fn compare<F>(inputs: &[Tensor], step: f64, f: F) -> GradComparison
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let (_, analytic) = evaluate(inputs, true, &f);
    let mut numeric = Vec::with_capacity(inputs.len());
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for i in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[i].shape());
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + step;
            let (fp, _) = evaluate(&probe, false, &f);
            probe[i].data_mut()[j] = orig - step;
            let (fm, _) = evaluate(&probe, false, &f);
            probe[i].data_mut()[j] = orig;
            g.data_mut()[j] = (fp - fm) / (2.0 * step);
        }
        numeric.push(g);
    }
    GradComparison { analytic, numeric }
}

/// Panics if any input's relative gradient error exceeds `1e-5`.
pub fn check_grad<F>(inputs: &[Tensor], step: f64, f: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let cmp = compare(inputs, step, f);
    for (i, e) in cmp.relative_errors().into_iter().enumerate() {
        assert!(e < 1e-5, "input {i}: relative gradient error {e:e}");
    }
}

/// Gradient check of an elementwise op on inputs drawn from `[lo, hi)`.
pub fn check_unary<F>(f: F, lo: f64, hi: f64)
where
    F: for<'t> Fn(Var<'t>) -> Var<'t>,
{
    let shape = Shape::new(2, 2, 3, 3);
    let x = random_tensor(shape, 7, lo, hi);
    let w = random_tensor(shape, 8, -1.0, 1.0);
    check_grad(&[x], 1e-6, |tape, v| f(v[0]).mul(tape.constant(w.clone())).sum());
}
