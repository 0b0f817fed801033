use crate::{Tensor, Var};

/// Per-channel statistics of one training-mode batch-norm call.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, for running-average updates.
    pub var: Vec<f64>,
}

impl<'t> Var<'t> {
    /// Batch normalisation using the statistics of the current batch.
    /// `gamma` and `beta` are `[1, c, 1, 1]`.
    pub fn batch_norm_train(self, gamma: Var<'t>, beta: Var<'t>, eps: f64) -> (Var<'t>, BatchStats) {
        let s = self.shape();
        let x = self.value();
        let gm = gamma.value();
        let bt = beta.value();
        let m = (s.n * s.plane()) as f64;
        let mut mean = vec![0.0; s.c];
        let mut var = vec![0.0; s.c];
        for c in 0..s.c {
            let mut acc = 0.0;
            for n in 0..s.n {
                acc += x.plane(n, c).iter().sum::<f64>();
            }
            mean[c] = acc / m;
            let mut sq = 0.0;
            for n in 0..s.n {
                sq += x.plane(n, c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
            }
            var[c] = sq / m;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let xhat = Tensor::from_fn(s, |n, c, y, xx| (x.at(n, c, y, xx) - mean[c]) * inv_std[c]);
        let out = Tensor::from_fn(s, |n, c, y, xx| gm.data()[c] * xhat.at(n, c, y, xx) + bt.data()[c]);
        let stats = BatchStats {
            mean: mean.clone(),
            var: var.iter().map(|v| if m > 1.0 { v * m / (m - 1.0) } else { *v }).collect(),
        };
        let cs = gamma.shape();
        let var = self.tape().op(
            out,
            &[self, gamma, beta],
            Box::new(move |g, need| {
                let mut sum_g = vec![0.0; s.c];
                let mut sum_gx = vec![0.0; s.c];
                for n in 0..s.n {
                    for c in 0..s.c {
                        for (gv, xv) in g.plane(n, c).iter().zip(xhat.plane(n, c)) {
                            sum_g[c] += gv;
                            sum_gx[c] += gv * xv;
                        }
                    }
                }
                let gx = need[0].then(|| {
                    Tensor::from_fn(s, |n, c, y, xx| {
                        let gamma = gm.data()[c];
                        let dxhat = g.at(n, c, y, xx) * gamma;
                        let xh = xhat.at(n, c, y, xx);
                        inv_std[c] / m * (m * dxhat - gamma * sum_g[c] - xh * gamma * sum_gx[c])
                    })
                });
                vec![
                    gx,
                    need[1].then(|| Tensor::from_vec(cs, sum_gx.clone())),
                    need[2].then(|| Tensor::from_vec(cs, sum_g.clone())),
                ]
            }),
        );
        (var, stats)
    }
}
