use super::params::{Binder, ParamStore};
use endodepth_tensor::{PadMode, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Feature extractor producing maps at strides `2, 4, …, 2^L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    /// One stride-2 3×3 convolution per block plus `extra_convs` stride-1
    /// convolutions, each followed by ReLU.
    Toy {
        widths: Vec<usize>,
        #[serde(default)]
        extra_convs: usize,
    },
    /// ResNet-18 with batch norm, parameter names as in torchvision.
    Resnet18,
}

const RESNET_WIDTHS: [usize; 5] = [64, 64, 128, 256, 512];

impl EncoderSpec {
    pub fn toy() -> Self {
        EncoderSpec::Toy {
            widths: vec![8, 16, 24, 32],
            extra_convs: 0,
        }
    }

    pub fn channels(&self) -> Vec<usize> {
        match self {
            EncoderSpec::Toy { widths, .. } => widths.clone(),
            EncoderSpec::Resnet18 => RESNET_WIDTHS.to_vec(),
        }
    }

    /// Input height and width must be divisible by this.
    pub fn divisor(&self) -> usize {
        1 << self.channels().len()
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng, prefix: &str, in_channels: usize) {
        match self {
            EncoderSpec::Toy { widths, extra_convs } => {
                let mut cin = in_channels;
                for (i, &w) in widths.iter().enumerate() {
                    store.init_conv(rng, &format!("{prefix}blocks.{i}.0"), cin, w, 3, true);
                    for j in 0..*extra_convs {
                        store.init_conv(rng, &format!("{prefix}blocks.{i}.{}", j + 1), w, w, 3, true);
                    }
                    cin = w;
                }
            }
            EncoderSpec::Resnet18 => {
                store.init_conv(rng, &format!("{prefix}conv1"), in_channels, 64, 7, false);
                store.init_batch_norm(&format!("{prefix}bn1"), 64);
                let mut cin = 64;
                for (layer, &w) in RESNET_WIDTHS[1..].iter().enumerate() {
                    for block in 0..2 {
                        let p = format!("{prefix}layer{}.{block}", layer + 1);
                        let bin = if block == 0 { cin } else { w };
                        store.init_conv(rng, &format!("{p}.conv1"), bin, w, 3, false);
                        store.init_batch_norm(&format!("{p}.bn1"), w);
                        store.init_conv(rng, &format!("{p}.conv2"), w, w, 3, false);
                        store.init_batch_norm(&format!("{p}.bn2"), w);
                        if block == 0 && layer > 0 {
                            store.init_conv(rng, &format!("{p}.downsample.0"), bin, w, 1, false);
                            store.init_batch_norm(&format!("{p}.downsample.1"), w);
                        }
                    }
                    cin = w;
                }
            }
        }
    }

    pub fn forward<'t>(&self, b: &Binder<'t, '_>, prefix: &str, x: Var<'t>) -> Vec<Var<'t>> {
        match self {
            EncoderSpec::Toy { widths, extra_convs } => {
                let mut feats = Vec::with_capacity(widths.len());
                let mut h = x;
                for i in 0..widths.len() {
                    h = b.conv(h, &format!("{prefix}blocks.{i}.0"), 2, 1, PadMode::Zero).relu();
                    for j in 0..*extra_convs {
                        h = b.conv(h, &format!("{prefix}blocks.{i}.{}", j + 1), 1, 1, PadMode::Zero).relu();
                    }
                    feats.push(h);
                }
                feats
            }
            EncoderSpec::Resnet18 => {
                let mut feats = Vec::with_capacity(5);
                let h = b.conv(x, &format!("{prefix}conv1"), 2, 3, PadMode::Zero);
                let h = b.batch_norm(h, &format!("{prefix}bn1")).relu();
                feats.push(h);
                let mut h = h.max_pool(3, 2, 1);
                for layer in 0..4 {
                    for block in 0..2 {
                        let p = format!("{prefix}layer{}.{block}", layer + 1);
                        let stride = if block == 0 && layer > 0 { 2 } else { 1 };
                        let y = b.conv(h, &format!("{p}.conv1"), stride, 1, PadMode::Zero);
                        let y = b.batch_norm(y, &format!("{p}.bn1")).relu();
                        let y = b.conv(y, &format!("{p}.conv2"), 1, 1, PadMode::Zero);
                        let y = b.batch_norm(y, &format!("{p}.bn2"));
                        let skip = if b.has(&format!("{p}.downsample.0.weight")) {
                            let s = b.conv(h, &format!("{p}.downsample.0"), stride, 0, PadMode::Zero);
                            b.batch_norm(s, &format!("{p}.downsample.1"))
                        } else {
                            h
                        };
                        h = y.add(skip).relu();
                    }
                    feats.push(h);
                }
                feats
            }
        }
    }
}
