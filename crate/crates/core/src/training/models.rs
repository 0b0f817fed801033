use super::plan::{StageId, StagePlan};
use crate::error::{Error, Result};
use crate::networks::{Checkpoint, CheckpointMeta, DepthNet, PoseNet};
use crate::priors::AblationConfig;
use std::path::Path;

pub const DEPTH_PREFIX: &str = "depth.";
pub const POSE_PREFIX: &str = "pose.";

/// The jointly trained depth and pose networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Models {
    pub depth: DepthNet,
    pub pose: PoseNet,
}

impl Models {
    pub fn new(plan: &StagePlan) -> Result<Self> {
        let mut ds = plan.architecture.depth_spec(plan.ablation);
        ds.min_depth = plan.min_depth;
        ds.max_depth = plan.max_depth;
        let ps = plan.architecture.pose_spec(plan.ablation);
        Ok(Self {
            depth: DepthNet::new(ds, plan.seed)?,
            pose: PoseNet::new(ps, plan.seed.wrapping_add(1))?,
        })
    }

    pub fn ablation(&self) -> AblationConfig {
        self.depth.spec.ablation
    }

    pub fn to_checkpoint(&self, stage: StageId, epoch: usize, plan: &StagePlan) -> Checkpoint {
        let mut ck = Checkpoint::new(CheckpointMeta {
            kind: "model".into(),
            stage: Some(stage.as_str().into()),
            ablation: Some(self.ablation()),
            epoch,
            loss_weights: Some(plan.weights),
            depth: Some(self.depth.spec.clone()),
            pose: Some(self.pose.spec.clone()),
            ..Default::default()
        });
        ck.meta
            .notes
            .insert("plan".into(), serde_json::to_string(plan).unwrap_or_default());
        ck.add_params(DEPTH_PREFIX, &self.depth.params);
        ck.add_params(POSE_PREFIX, &self.pose.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, origin: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Checkpoint {
            path: origin.to_path_buf(),
            reason: reason.into(),
        };
        if ck.meta.kind != "model" {
            return Err(bad(&format!("expected a model checkpoint, found kind {:?}", ck.meta.kind)));
        }
        let ds = ck.meta.depth.clone().ok_or_else(|| bad("missing depth network spec"))?;
        let ps = ck.meta.pose.clone().ok_or_else(|| bad("missing pose network spec"))?;
        let mut depth = DepthNet::new(ds, 0)?;
        let mut pose = PoseNet::new(ps, 0)?;
        ck.restore_params(DEPTH_PREFIX, &mut depth.params)?;
        ck.restore_params(POSE_PREFIX, &mut pose.params)?;
        Ok(Self { depth, pose })
    }

    pub fn load(path: &Path) -> Result<(Self, Checkpoint)> {
        let ck = Checkpoint::load(path)?;
        Ok((Self::from_checkpoint(&ck, path)?, ck))
    }
}
