use super::encoder::EncoderSpec;
use super::params::{Binder, Mode, ParamStore};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::priors::AblationConfig;
use endodepth_tensor::{PadMode, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Number of inverse-depth output scales.
pub const NUM_SCALES: usize = 4;

/// Per-channel input normalisation `(x − 0.45) / 0.225`.
const INPUT_MEAN: f64 = 0.45;
const INPUT_STD: f64 = 0.225;

/// Keeps sigmoid outputs strictly inside `(0, 1)` under saturation.
const DISP_EPS: f64 = 1e-12;

fn default_min_depth() -> f64 {
    0.1
}

fn default_max_depth() -> f64 {
    100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthNetSpec {
    pub ablation: AblationConfig,
    pub encoder: EncoderSpec,
    /// One width per decoder stage, finest first; same length as the encoder.
    pub decoder_widths: Vec<usize>,
    #[serde(default = "default_min_depth")]
    pub min_depth: f64,
    #[serde(default = "default_max_depth")]
    pub max_depth: f64,
}

impl DepthNetSpec {
    pub fn toy(ablation: AblationConfig) -> Self {
        Self {
            ablation,
            encoder: EncoderSpec::toy(),
            decoder_widths: vec![8, 12, 16, 24],
            min_depth: default_min_depth(),
            max_depth: default_max_depth(),
        }
    }

    pub fn resnet18(ablation: AblationConfig) -> Self {
        Self {
            ablation,
            encoder: EncoderSpec::Resnet18,
            decoder_widths: vec![16, 32, 64, 128, 256],
            min_depth: default_min_depth(),
            max_depth: default_max_depth(),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.ablation.depth_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let enc = self.encoder.channels();
        if enc.len() < NUM_SCALES {
            return Err(Error::Config(format!("encoder needs at least {NUM_SCALES} stages, has {}", enc.len())));
        }
        if self.decoder_widths.len() != enc.len() {
            return Err(Error::Config(format!(
                "decoder has {} widths for {} encoder stages",
                self.decoder_widths.len(),
                enc.len()
            )));
        }
        if !(self.min_depth > 0.0 && self.max_depth > self.min_depth) {
            return Err(Error::Config(format!(
                "need 0 < min_depth < max_depth, got {} and {}",
                self.min_depth, self.max_depth
            )));
        }
        Ok(())
    }
}

/// `1 / (1/max + d·(1/min − 1/max))`.
pub fn disp_to_depth(d: f64, min_depth: f64, max_depth: f64) -> f64 {
    let (lo, hi) = (1.0 / max_depth, 1.0 / min_depth);
    1.0 / (lo + d * (hi - lo))
}

pub fn disp_to_depth_var(d: Var<'_>, min_depth: f64, max_depth: f64) -> Var<'_> {
    let (lo, hi) = (1.0 / max_depth, 1.0 / min_depth);
    d.scale(hi - lo).add_scalar(lo).recip()
}

/// Inverse of [`disp_to_depth`].
pub fn depth_to_disp(z: f64, min_depth: f64, max_depth: f64) -> f64 {
    let (lo, hi) = (1.0 / max_depth, 1.0 / min_depth);
    (1.0 / z - lo) / (hi - lo)
}

/// Sigmoid inverse-depth maps at scales `0..NUM_SCALES`, finest first.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiScaleDepth {
    pub inverse_depth: Vec<ImageGrid>,
    pub min_depth: f64,
    pub max_depth: f64,
}

impl MultiScaleDepth {
    pub fn depth(&self, scale: usize) -> ImageGrid {
        let (lo, hi) = (self.min_depth, self.max_depth);
        self.inverse_depth[scale].map(|d| disp_to_depth(d, lo, hi))
    }
}

/// Encoder-decoder producing sigmoid inverse depth at four scales.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthNet {
    pub spec: DepthNetSpec,
    pub params: ParamStore,
    frozen: bool,
}

impl DepthNet {
    pub fn new(spec: DepthNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        spec.encoder.init(&mut params, &mut rng, "encoder.", spec.in_channels());
        let enc = spec.encoder.channels();
        let dec = &spec.decoder_widths;
        let l = enc.len();
        for i in (0..l).rev() {
            let cin = if i == l - 1 { enc[l - 1] } else { dec[i + 1] };
            params.init_conv(&mut rng, &format!("decoder.{}.conv.conv", upconv_index(l, i, 0)), cin, dec[i], 3, true);
            let skip = if i > 0 { enc[i - 1] } else { 0 };
            params.init_conv(&mut rng, &format!("decoder.{}.conv.conv", upconv_index(l, i, 1)), dec[i] + skip, dec[i], 3, true);
        }
        for s in 0..NUM_SCALES {
            params.init_conv(&mut rng, &format!("decoder.{}.conv", 2 * l + s), dec[s], 1, 3, true);
        }
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

    fn check_input(&self, c: usize, h: usize, w: usize) -> Result<()> {
        if c != self.spec.in_channels() {
            return Err(Error::Config(format!(
                "depth network for {} expects {} input channels, got {c}",
                self.spec.ablation,
                self.spec.in_channels()
            )));
        }
        let d = self.spec.encoder.divisor();
        if h % d != 0 || w % d != 0 {
            return Err(Error::InvalidInput(format!("input {h}x{w} not divisible by {d}")));
        }
        Ok(())
    }

    /// Inverse-depth maps `[n,1,H/2^σ,W/2^σ]` for `σ = 0..NUM_SCALES`.
    pub fn forward<'t>(&self, b: &Binder<'t, '_>, x: Var<'t>) -> Result<Vec<Var<'t>>> {
        let s = x.shape();
        self.check_input(s.c, s.h, s.w)?;
        let x = x.add_scalar(-INPUT_MEAN).scale(1.0 / INPUT_STD);
        let feats = self.spec.encoder.forward(b, "encoder.", x);
        let l = feats.len();
        let mut h = feats[l - 1];
        let mut disps = vec![None; NUM_SCALES];
        for i in (0..l).rev() {
            h = b.conv(h, &format!("decoder.{}.conv.conv", upconv_index(l, i, 0)), 1, 1, PadMode::Reflect).elu();
            h = h.upsample2();
            if i > 0 {
                h = Var::concat_channels(&[h, feats[i - 1]]);
            }
            h = b.conv(h, &format!("decoder.{}.conv.conv", upconv_index(l, i, 1)), 1, 1, PadMode::Reflect).elu();
            if i < NUM_SCALES {
                let d = b.conv(h, &format!("decoder.{}.conv", 2 * l + i), 1, 1, PadMode::Reflect);
                disps[i] = Some(d.sigmoid().clamp(DISP_EPS, 1.0 - DISP_EPS));
            }
        }
        Ok(disps.into_iter().map(|d| d.expect("every scale decoded")).collect())
    }

    /// Evaluation-mode prediction for a batch `[n,c,h,w]`.
    pub fn predict_tensor(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        let tape = Tape::new();
        let b = Binder::new(&tape, &self.params, false, Mode::Eval);
        let out = self.forward(&b, tape.constant(input.clone()))?;
        Ok(out.iter().map(|v| v.value().as_ref().clone()).collect())
    }

    pub fn predict(&self, input: &ImageGrid) -> Result<MultiScaleDepth> {
        let out = self.predict_tensor(&input.to_tensor())?;
        Ok(MultiScaleDepth {
            inverse_depth: out.iter().map(|t| ImageGrid::from_tensor(t, 0)).collect(),
            min_depth: self.spec.min_depth,
            max_depth: self.spec.max_depth,
        })
    }
}

/// Position of an up-convolution in the flat decoder parameter list: stages
/// run coarsest first with two convolutions each, followed by the heads.
fn upconv_index(levels: usize, stage: usize, j: usize) -> usize {
    2 * (levels - 1 - stage) + j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_output_scales() {
        let net = DepthNet::new(DepthNetSpec::toy(AblationConfig::DLPE), 1).unwrap();
        let x = ImageGrid::from_fn(4, 64, 64, |c, y, x| ((c + y * x) % 7) as f64 / 7.0);
        let out = net.predict(&x).unwrap();
        let dims: Vec<_> = out.inverse_depth.iter().map(|g| (g.height(), g.width())).collect();
        assert_eq!(dims, vec![(64, 64), (32, 32), (16, 16), (8, 8)]);
        for g in &out.inverse_depth {
            assert!(g.data().iter().all(|&d| d > 0.0 && d < 1.0));
        }
        for s in 0..NUM_SCALES {
            assert!(out.depth(s).data().iter().all(|&z| (0.1..=100.0).contains(&z)));
        }
    }

    #[test]
    fn channel_mismatch_names_configuration() {
        let net = DepthNet::new(DepthNetSpec::toy(AblationConfig::DLPE), 1).unwrap();
        let err = net.predict(&ImageGrid::constant(3, 32, 32, 0.5)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("DLPE"), "{err}");
    }

    #[test]
    fn extreme_inputs_stay_inside_unit_interval() {
        let net = DepthNet::new(DepthNetSpec::toy(AblationConfig::BASELINE), 4).unwrap();
        let x = ImageGrid::from_fn(3, 32, 32, |c, y, _| if (c + y) % 2 == 0 { 1e6 } else { -1e6 });
        for g in net.predict(&x).unwrap().inverse_depth {
            assert!(g.data().iter().all(|&d| d > 0.0 && d < 1.0));
        }
    }

    #[test]
    fn disparity_conversion_round_trips() {
        for z in [0.1, 0.5, 3.0, 100.0] {
            let d = depth_to_disp(z, 0.1, 100.0);
            assert!((disp_to_depth(d, 0.1, 100.0) - z).abs() < 1e-9 * z);
        }
        assert!((disp_to_depth(0.0, 0.1, 100.0) - 100.0).abs() < 1e-12);
        assert!((disp_to_depth(1.0, 0.1, 100.0) - 0.1).abs() < 1e-12);
    }
}
