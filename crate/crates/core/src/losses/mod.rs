//! Training objectives.
//!
//! Every loss exists as a differentiable `Var` function over NCHW batches
//! (used by training) and as a plain `ImageGrid` wrapper.

mod composite;
mod photometric;

pub use composite::{
    edge_consistency_loss, edge_consistency_loss_var, stage2_loss, stage3_loss, supervised_depth_loss,
    supervised_depth_loss_var, EdgeScaleInputs, LossOutput, ScaleInputs, Stage2Inputs, TermValue,
};
pub use photometric::{
    min_reprojection, min_reprojection_var, photometric_error, photometric_error_var, smoothness, smoothness_var,
    ssim, ssim_var, SSIM_C1, SSIM_C2, SMOOTH_MEAN_EPS,
};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_photo: f64,
    pub lambda_smooth: f64,
    pub lambda_edge: f64,
    pub lambda_sup: f64,
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_photo: 1.0,
            lambda_smooth: 0.1,
            lambda_edge: 1.0,
            lambda_sup: 0.5,
            alpha: 0.85,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            lambda_photo: 0.0,
            lambda_smooth: 0.0,
            lambda_edge: 0.0,
            lambda_sup: 0.0,
            alpha: 0.85,
        }
    }
}

/// Switches away from the default objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossOptions {
    /// Sum smoothness over scales without the `1/2^σ` factor.
    pub flat_smoothness: bool,
    /// Let unwarped sources compete in the per-pixel minimum, masking
    /// pixels that do not move between frames.
    pub auto_mask: bool,
}

impl LossOptions {
    pub fn smoothness_factor(&self, scale: usize) -> f64 {
        if self.flat_smoothness {
            1.0
        } else {
            1.0 / (1u64 << scale) as f64
        }
    }
}
