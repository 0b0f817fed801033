use crate::error::{Error, Result};
use endodepth_tensor::ops::BatchStats;
use endodepth_tensor::{Gradients, PadMode, Shape, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use std::cell::RefCell;
use std::collections::BTreeMap;

/// Batch-norm running-average momentum, matching the common `0.1`.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Named weights plus non-trainable buffers (batch-norm running statistics).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    buffers: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.params.insert(name.into(), t);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, t: Tensor) {
        self.buffers.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor> {
        self.buffers.get(name)
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn buffers(&self) -> &BTreeMap<String, Tensor> {
        &self.buffers
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// He-normal convolution weight `[out, in, k, k]` and optional zero bias.
    pub fn init_conv(&mut self, rng: &mut impl Rng, name: &str, cin: usize, cout: usize, k: usize, bias: bool) {
        let fan_in = (cin * k * k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        let shape = Shape::new(cout, cin, k, k);
        let data = (0..shape.len()).map(|_| normal.sample(rng)).collect();
        self.insert(format!("{name}.weight"), Tensor::from_vec(shape, data));
        if bias {
            self.insert(format!("{name}.bias"), Tensor::zeros(Shape::new(1, cout, 1, 1)));
        }
    }

    pub fn init_batch_norm(&mut self, name: &str, c: usize) {
        let s = Shape::new(1, c, 1, 1);
        self.insert(format!("{name}.weight"), Tensor::ones(s));
        self.insert(format!("{name}.bias"), Tensor::zeros(s));
        self.insert_buffer(format!("{name}.running_mean"), Tensor::zeros(s));
        self.insert_buffer(format!("{name}.running_var"), Tensor::ones(s));
    }

    /// Fold one batch of statistics into the running averages.
    pub fn update_batch_stats(&mut self, stats: &[(String, BatchStats)]) {
        for (name, st) in stats {
            for (suffix, values) in [("running_mean", &st.mean), ("running_var", &st.var)] {
                if let Some(buf) = self.buffers.get_mut(&format!("{name}.{suffix}")) {
                    for (b, v) in buf.data_mut().iter_mut().zip(values) {
                        *b = (1.0 - BN_MOMENTUM) * *b + BN_MOMENTUM * v;
                    }
                }
            }
        }
    }

    /// Every tensor (parameters then buffers) under `prefix`.
    pub fn export(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (k, v) in self.params.iter() {
            out.insert(format!("{prefix}{k}"), v.clone());
        }
        for (k, v) in self.buffers.iter() {
            out.insert(format!("{prefix}buffer.{k}"), v.clone());
        }
        out
    }

    /// Inverse of [`ParamStore::export`]. Shapes and names must match `self`
    /// exactly.
    pub fn import(&mut self, prefix: &str, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        let lookup = |key: String, expected: Shape| -> Result<Tensor> {
            let t = tensors
                .get(&key)
                .ok_or_else(|| Error::InvalidInput(format!("missing tensor {key}")))?;
            if t.shape() != expected {
                return Err(Error::dims(format!("{key} {expected}"), t.shape()));
            }
            Ok(t.clone())
        };
        let mut params = BTreeMap::new();
        for (k, v) in &self.params {
            params.insert(k.clone(), lookup(format!("{prefix}{k}"), v.shape())?);
        }
        let mut buffers = BTreeMap::new();
        for (k, v) in &self.buffers {
            buffers.insert(k.clone(), lookup(format!("{prefix}buffer.{k}"), v.shape())?);
        }
        self.params = params;
        self.buffers = buffers;
        Ok(())
    }

    /// SHA-256 over names, shapes and bit patterns of every tensor.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (tag, map) in [("p", &self.params), ("b", &self.buffers)] {
            for (k, v) in map {
                h.update(tag.as_bytes());
                h.update(k.as_bytes());
                let s = v.shape();
                for d in [s.n, s.c, s.h, s.w] {
                    h.update((d as u64).to_le_bytes());
                }
                for x in v.data() {
                    h.update(x.to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Normalisation behaviour during a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch-norm uses batch statistics and records them.
    Train,
    /// Batch-norm uses running statistics.
    Eval,
}

/// Binds stored parameters to a tape for one forward pass.
///
/// Trainable binders create gradient-collecting leaves; frozen ones create
/// constants, so no gradient can reach the stored weights.
pub struct Binder<'t, 's> {
    tape: &'t Tape,
    store: &'s ParamStore,
    trainable: bool,
    mode: Mode,
    bound: RefCell<BTreeMap<String, Var<'t>>>,
    stats: RefCell<Vec<(String, BatchStats)>>,
}

impl<'t, 's> Binder<'t, 's> {
    pub fn new(tape: &'t Tape, store: &'s ParamStore, trainable: bool, mode: Mode) -> Self {
        Self {
            tape,
            store,
            trainable,
            mode,
            bound: RefCell::new(BTreeMap::new()),
            stats: RefCell::new(Vec::new()),
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn param(&self, name: &str) -> Var<'t> {
        if let Some(v) = self.bound.borrow().get(name) {
            return *v;
        }
        let t = self
            .store
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not initialised"))
            .clone();
        let v = if self.trainable {
            self.tape.param(t)
        } else {
            self.tape.constant(t)
        };
        self.bound.borrow_mut().insert(name.to_string(), v);
        v
    }

    pub fn has(&self, name: &str) -> bool {
        self.store.get(name).is_some()
    }

    pub fn conv(&self, x: Var<'t>, name: &str, stride: usize, padding: usize, mode: PadMode) -> Var<'t> {
        let w = self.param(&format!("{name}.weight"));
        let bias_name = format!("{name}.bias");
        let b = self.has(&bias_name).then(|| self.param(&bias_name));
        x.conv2d(w, b, stride, padding, mode)
    }

    pub fn batch_norm(&self, x: Var<'t>, name: &str) -> Var<'t> {
        let gamma = self.param(&format!("{name}.weight"));
        let beta = self.param(&format!("{name}.bias"));
        match self.mode {
            Mode::Train => {
                let (y, st) = x.batch_norm_train(gamma, beta, BN_EPS);
                self.stats.borrow_mut().push((name.to_string(), st));
                y
            }
            Mode::Eval => {
                let rm = self.store.buffer(&format!("{name}.running_mean")).expect("running mean");
                let rv = self.store.buffer(&format!("{name}.running_var")).expect("running var");
                let inv = rv.map(|v| 1.0 / (v + BN_EPS).sqrt());
                x.sub(self.tape.constant(rm.clone())).mul_const(&inv).mul(gamma).add(beta)
            }
        }
    }

    /// Gradients of every bound parameter, by name.
    pub fn gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.bound
            .borrow()
            .iter()
            .map(|(k, &v)| (k.clone(), grads.get_or_zeros(v)))
            .collect()
    }

    pub fn take_batch_stats(&self) -> Vec<(String, BatchStats)> {
        std::mem::take(&mut self.stats.borrow_mut())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn export_import_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = ParamStore::new();
        a.init_conv(&mut rng, "c", 2, 3, 3, true);
        a.init_batch_norm("bn", 3);
        let mut b = ParamStore::new();
        b.init_conv(&mut ChaCha8Rng::seed_from_u64(2), "c", 2, 3, 3, true);
        b.init_batch_norm("bn", 3);
        assert_ne!(a.hash(), b.hash());
        b.import("x.", &a.export("x.")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn frozen_binder_yields_no_gradients() {
        let mut store = ParamStore::new();
        store.init_conv(&mut ChaCha8Rng::seed_from_u64(3), "c", 1, 1, 3, true);
        let tape = Tape::new();
        let b = Binder::new(&tape, &store, false, Mode::Eval);
        let x = tape.param(Tensor::ones(Shape::new(1, 1, 4, 4)));
        let y = b.conv(x, "c", 1, 1, PadMode::Zero).sum();
        let g = tape.backward(y);
        assert!(b.gradients(&g).values().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(g.get(x).is_some());
    }
}
