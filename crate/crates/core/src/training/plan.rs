use crate::error::{Error, Result};
use crate::losses::{LossOptions, LossWeights};
use crate::networks::{DepthNetSpec, EncoderSpec, PoseNetSpec};
use crate::priors::AblationConfig;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageId {
    /// Prior preparation: verify checkpoints or instantiate fallbacks.
    #[serde(rename = "1")]
    Priors,
    /// Joint depth and pose training on the photometric objective.
    #[serde(rename = "2")]
    Joint,
    /// Pose refinement with the depth network frozen and the edge term on.
    #[serde(rename = "3")]
    PoseRefine,
    /// Stage 2 plus the supervised depth term.
    #[serde(rename = "2-supervised")]
    JointSupervised,
}

impl StageId {
    pub fn as_str(&self) -> &'static str {
        match self {
            StageId::Priors => "1",
            StageId::Joint => "2",
            StageId::PoseRefine => "3",
            StageId::JointSupervised => "2-supervised",
        }
    }

    pub fn is_stage2(&self) -> bool {
        matches!(self, StageId::Joint | StageId::JointSupervised)
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(StageId::Priors),
            "2" => Ok(StageId::Joint),
            "3" => Ok(StageId::PoseRefine),
            "2-supervised" | "2s" => Ok(StageId::JointSupervised),
            other => Err(Error::Config(format!("unknown stage {other:?} (expected 1, 2, 3 or 2-supervised)"))),
        }
    }
}

/// Where the edge-consistency term is used.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeMode {
    /// Never.
    #[default]
    None,
    /// In stage 2, training both networks.
    Joint,
    /// Only in stage 3 with the depth network frozen.
    PoseOnly,
}

impl fmt::Display for EdgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeMode::None => "none",
            EdgeMode::Joint => "joint",
            EdgeMode::PoseOnly => "pose-only",
        })
    }
}

impl FromStr for EdgeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(EdgeMode::None),
            "joint" => Ok(EdgeMode::Joint),
            "pose-only" => Ok(EdgeMode::PoseOnly),
            other => Err(Error::Config(format!("unknown edge mode {other:?} (expected none, joint or pose-only)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Small strided encoder for desk-scale runs.
    #[default]
    Toy,
    Resnet18,
}

impl Architecture {
    pub fn depth_spec(&self, ablation: AblationConfig) -> DepthNetSpec {
        match self {
            Architecture::Toy => DepthNetSpec::toy(ablation),
            Architecture::Resnet18 => DepthNetSpec::resnet18(ablation),
        }
    }

    pub fn pose_spec(&self, ablation: AblationConfig) -> PoseNetSpec {
        match self {
            Architecture::Toy => PoseNetSpec::toy(ablation),
            Architecture::Resnet18 => PoseNetSpec::resnet18(ablation),
        }
    }

    pub fn divisor(&self) -> usize {
        match self {
            Architecture::Toy => EncoderSpec::toy().divisor(),
            Architecture::Resnet18 => EncoderSpec::Resnet18.divisor(),
        }
    }
}

/// Everything that determines one training stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StagePlan {
    pub stage: StageId,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Epochs (1-based) after which the rate is multiplied by `lr_decay`.
    pub lr_decay_after: usize,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub ablation: AblationConfig,
    pub seed: u64,
    pub weights: LossWeights,
    pub options: LossOptions,
    pub edge_mode: EdgeMode,
    pub interval: usize,
    pub stride: usize,
    pub architecture: Architecture,
    pub min_depth: f64,
    pub max_depth: f64,
    /// Cap on optimiser steps per epoch; `None` runs every batch.
    pub max_steps_per_epoch: Option<usize>,
    /// Validation loss at the end of every epoch when a val split exists.
    pub validate: bool,
    /// Write a checkpoint after every epoch.
    pub checkpoint_every_epoch: bool,
}

impl Default for StagePlan {
    fn default() -> Self {
        Self {
            stage: StageId::Joint,
            epochs: 20,
            learning_rate: 1e-4,
            lr_decay_after: 15,
            lr_decay: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 12,
            ablation: AblationConfig::DLPE,
            seed: 0,
            weights: LossWeights::default(),
            options: LossOptions::default(),
            edge_mode: EdgeMode::None,
            interval: 1,
            stride: 1,
            architecture: Architecture::Toy,
            min_depth: 0.1,
            max_depth: 100.0,
            max_steps_per_epoch: None,
            validate: true,
            checkpoint_every_epoch: true,
        }
    }
}

impl StagePlan {
    pub fn for_stage(stage: StageId) -> Self {
        let mut p = Self {
            stage,
            ..Default::default()
        };
        if stage == StageId::PoseRefine {
            p.edge_mode = EdgeMode::PoseOnly;
        }
        p
    }

    /// Rate for 1-based `epoch`; the schedule restarts in every stage.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch > self.lr_decay_after {
            self.learning_rate * self.lr_decay
        } else {
            self.learning_rate
        }
    }

    pub fn depth_frozen(&self) -> bool {
        self.stage == StageId::PoseRefine
    }

    pub fn uses_edge_loss(&self) -> bool {
        match self.stage {
            StageId::PoseRefine => true,
            StageId::Joint | StageId::JointSupervised => self.edge_mode == EdgeMode::Joint,
            StageId::Priors => false,
        }
    }

    pub fn uses_supervision(&self) -> bool {
        self.stage == StageId::JointSupervised
    }

    pub fn validate_plan(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.interval == 0 || self.stride == 0 {
            return bad("interval and stride must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0) {
            return bad("learning rate and decay must be positive");
        }
        if !(self.min_depth > 0.0 && self.max_depth > self.min_depth) {
            return bad("depth range must satisfy 0 < min_depth < max_depth");
        }
        if self.stage == StageId::PoseRefine && self.edge_mode == EdgeMode::Joint {
            return bad("edge_mode joint applies to stage 2, not stage 3");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        let p = StagePlan::default();
        assert_eq!(p.lr_at(1), 1e-4);
        assert_eq!(p.lr_at(15), 1e-4);
        assert!((p.lr_at(16) - 1e-5).abs() < 1e-20);
        assert_eq!((p.batch_size, p.epochs, p.beta1, p.beta2), (12, 20, 0.9, 0.999));
    }

    #[test]
    fn stage_contracts() {
        let s3 = StagePlan::for_stage(StageId::PoseRefine);
        assert!(s3.depth_frozen() && s3.uses_edge_loss());
        let s2 = StagePlan::default();
        assert!(!s2.depth_frozen() && !s2.uses_edge_loss() && !s2.uses_supervision());
        let joint = StagePlan {
            edge_mode: EdgeMode::Joint,
            ..Default::default()
        };
        assert!(joint.uses_edge_loss());
        assert!(StagePlan::for_stage(StageId::JointSupervised).uses_supervision());
        for s in ["1", "2", "3", "2-supervised"] {
            assert_eq!(s.parse::<StageId>().unwrap().as_str(), s);
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<StagePlan>("epochs = 3\nbogus = 1\n").is_err());
        let p: StagePlan = toml::from_str("stage = \"3\"\nepochs = 2\nablation = \"DL\"\n").unwrap();
        assert_eq!((p.stage, p.epochs, p.ablation.name()), (StageId::PoseRefine, 2, "DL"));
    }
}
