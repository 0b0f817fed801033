use super::encoder::EncoderSpec;
use super::params::{Binder, Mode, ParamStore};
use crate::error::{Error, Result};
use crate::geometry::RigidMotion;
use crate::image::ImageGrid;
use crate::priors::AblationConfig;
use endodepth_tensor::{PadMode, Shape, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Output multiplier applied to all six head outputs.
pub const POSE_HEAD_SCALE: f64 = 0.01;

const INPUT_MEAN: f64 = 0.45;
const INPUT_STD: f64 = 0.225;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseNetSpec {
    pub ablation: AblationConfig,
    pub encoder: EncoderSpec,
    pub head_width: usize,
}

impl PoseNetSpec {
    pub fn toy(ablation: AblationConfig) -> Self {
        Self {
            ablation,
            encoder: EncoderSpec::toy(),
            head_width: 16,
        }
    }

    pub fn resnet18(ablation: AblationConfig) -> Self {
        Self {
            ablation,
            encoder: EncoderSpec::Resnet18,
            head_width: 256,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.ablation.pose_channels()
    }
}

/// Pair encoder regressing `T̂_{t→s}` as axis-angle plus translation; input
/// is the target frame block followed by the source frame block.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseNet {
    pub spec: PoseNetSpec,
    pub params: ParamStore,
    frozen: bool,
}

impl PoseNet {
    pub fn new(spec: PoseNetSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        spec.encoder.init(&mut params, &mut rng, "encoder.", spec.in_channels());
        let last = *spec.encoder.channels().last().expect("non-empty encoder");
        let w = spec.head_width;
        params.init_conv(&mut rng, "decoder.0", last, w, 1, true);
        params.init_conv(&mut rng, "decoder.1", w, w, 3, true);
        params.init_conv(&mut rng, "decoder.2", w, w, 3, true);
        params.init_conv(&mut rng, "decoder.3", w, 6, 1, true);
        Ok(Self { spec, params, frozen: false })
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn binder<'t, 's>(&'s self, tape: &'t Tape, mode: Mode) -> Binder<'t, 's> {
        Binder::new(tape, &self.params, !self.frozen, mode)
    }

    /// Motions `[n,6,1,1]`.
    pub fn forward<'t>(&self, b: &Binder<'t, '_>, x: Var<'t>) -> Result<Var<'t>> {
        let s = x.shape();
        if s.c != self.spec.in_channels() {
            return Err(Error::Config(format!(
                "pose network for {} expects {} input channels, got {}",
                self.spec.ablation,
                self.spec.in_channels(),
                s.c
            )));
        }
        let d = self.spec.encoder.divisor();
        if s.h % d != 0 || s.w % d != 0 {
            return Err(Error::InvalidInput(format!("input {}x{} not divisible by {d}", s.h, s.w)));
        }
        let x = x.add_scalar(-INPUT_MEAN).scale(1.0 / INPUT_STD);
        let feats = self.spec.encoder.forward(b, "encoder.", x);
        let h = *feats.last().expect("non-empty encoder");
        let h = b.conv(h, "decoder.0", 1, 0, PadMode::Zero).relu();
        let h = b.conv(h, "decoder.1", 1, 1, PadMode::Zero).relu();
        let h = b.conv(h, "decoder.2", 1, 1, PadMode::Zero).relu();
        let h = b.conv(h, "decoder.3", 1, 0, PadMode::Zero);
        Ok(h.mean_spatial().scale(POSE_HEAD_SCALE))
    }

    pub fn predict_tensor(&self, input: &Tensor) -> Result<Vec<RigidMotion>> {
        let tape = Tape::new();
        let b = Binder::new(&tape, &self.params, false, Mode::Eval);
        let out = self.forward(&b, tape.constant(input.clone()))?.value();
        (0..out.shape().n)
            .map(|n| RigidMotion::from_slice6(out.batch_item(n).data()))
            .collect()
    }

    pub fn predict(&self, input: &ImageGrid) -> Result<RigidMotion> {
        Ok(self.predict_tensor(&input.to_tensor())?[0])
    }
}

/// `[n,6,1,1]` tensor shape for a batch of motions.
pub fn motion_shape(n: usize) -> Shape {
    Shape::new(n, 6, 1, 1)
}
