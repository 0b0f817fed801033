use super::checkpoint::{Checkpoint, CheckpointMeta};
use super::params::{Binder, Mode, ParamStore};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use endodepth_tensor::{PadMode, Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorTarget {
    Luminance,
    Edges,
}

/// Fully convolutional RGB → single-channel map with a sigmoid output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorNetSpec {
    pub target: PriorTarget,
    pub widths: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorNet {
    pub spec: PriorNetSpec,
    pub params: ParamStore,
}

impl PriorNet {
    pub fn new(spec: PriorNetSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut cin = 3;
        for (i, &w) in spec.widths.iter().enumerate() {
            params.init_conv(&mut rng, &format!("layers.{i}"), cin, w, 3, true);
            cin = w;
        }
        params.init_conv(&mut rng, &format!("layers.{}", spec.widths.len()), cin, 1, 3, true);
        Self { spec, params }
    }

    pub fn forward<'t>(&self, b: &Binder<'t, '_>, x: Var<'t>) -> Var<'t> {
        let mut h = x;
        for i in 0..self.spec.widths.len() {
            h = b.conv(h, &format!("layers.{i}"), 1, 1, PadMode::Reflect).elu();
        }
        b.conv(h, &format!("layers.{}", self.spec.widths.len()), 1, 1, PadMode::Reflect)
            .sigmoid()
    }

    pub fn apply(&self, frame: &ImageGrid) -> ImageGrid {
        let tape = Tape::new();
        let b = Binder::new(&tape, &self.params, false, Mode::Eval);
        let out = self.forward(&b, tape.constant(frame.to_tensor()));
        ImageGrid::from_tensor(&out.value(), 0).map(|v| v.clamp(0.0, 1.0))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ck = Checkpoint::new(CheckpointMeta {
            kind: "prior".into(),
            prior: Some(self.spec.clone()),
            ..Default::default()
        });
        ck.add_params("prior.", &self.params);
        ck.save(path)
    }

    /// Load a prior checkpoint; `expected` guards against swapping the
    /// luminance and edge networks.
    pub fn load(path: &Path, expected: PriorTarget) -> Result<Self> {
        let config_err = |reason: String| Error::Config(format!("prior checkpoint {}: {reason}", path.display()));
        let ck = Checkpoint::load(path).map_err(|e| config_err(e.to_string()))?;
        if ck.meta.kind != "prior" {
            return Err(config_err(format!("expected a prior checkpoint, found kind {:?}", ck.meta.kind)));
        }
        let spec = ck.meta.prior.clone().ok_or_else(|| config_err("missing prior spec".into()))?;
        if spec.target != expected {
            return Err(config_err(format!("holds a {:?} network, expected {expected:?}", spec.target)));
        }
        let mut net = PriorNet::new(spec, 0);
        ck.restore_params("prior.", &mut net.params).map_err(|e| config_err(e.to_string()))?;
        Ok(net)
    }
}
