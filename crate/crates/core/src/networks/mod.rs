//! Depth, pose and prior networks with named parameters, checkpoints and
//! weight import.

mod checkpoint;
mod depth;
mod encoder;
mod import;
mod params;
mod pose;
mod prior;

pub use checkpoint::{AdamMeta, Checkpoint, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use depth::{
    depth_to_disp, disp_to_depth, disp_to_depth_var, DepthNet, DepthNetSpec, MultiScaleDepth, NUM_SCALES,
};
pub use encoder::EncoderSpec;
pub use import::{import_npy_dir, ImportReport};
pub use params::{Binder, Mode, ParamStore, BN_EPS, BN_MOMENTUM};
pub use pose::{motion_shape, PoseNet, PoseNetSpec, POSE_HEAD_SCALE};
pub use prior::{PriorNet, PriorNetSpec, PriorTarget};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageGrid;
    use crate::priors::AblationConfig;

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let cfg = AblationConfig::DLPE;
        let depth = DepthNet::new(DepthNetSpec::toy(cfg), 5).unwrap();
        let pose = PoseNet::new(PoseNetSpec::toy(cfg), 6).unwrap();
        let mut ck = Checkpoint::new(CheckpointMeta {
            kind: "model".into(),
            ablation: Some(cfg),
            depth: Some(depth.spec.clone()),
            pose: Some(pose.spec.clone()),
            ..Default::default()
        });
        ck.add_params("depth.", &depth.params);
        ck.add_params("pose.", &pose.params);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        let mut d2 = DepthNet::new(back.meta.depth.clone().unwrap(), 99).unwrap();
        let mut p2 = PoseNet::new(back.meta.pose.clone().unwrap(), 99).unwrap();
        back.restore_params("depth.", &mut d2.params).unwrap();
        back.restore_params("pose.", &mut p2.params).unwrap();
        let x = ImageGrid::from_fn(4, 32, 32, |c, y, x| ((c + 3 * x + y) % 11) as f64 / 11.0);
        assert_eq!(depth.predict(&x).unwrap(), d2.predict(&x).unwrap());
        let pair = ImageGrid::concat(&[&x, &x]).unwrap();
        assert_eq!(pose.predict(&pair).unwrap(), p2.predict(&pair).unwrap());
        assert_eq!(depth.params.hash(), d2.params.hash());
    }

    #[test]
    fn resnet_shapes_follow_halving_rule() {
        let net = DepthNet::new(DepthNetSpec::resnet18(AblationConfig::BASELINE), 1).unwrap();
        let out = net.predict(&ImageGrid::constant(3, 64, 96, 0.4)).unwrap();
        let dims: Vec<_> = out.inverse_depth.iter().map(|g| (g.height(), g.width())).collect();
        assert_eq!(dims, vec![(64, 96), (32, 48), (16, 24), (8, 12)]);
        let pose = PoseNet::new(PoseNetSpec::resnet18(AblationConfig::BASELINE), 1).unwrap();
        assert!(pose.predict(&ImageGrid::constant(6, 64, 64, 0.4)).unwrap().is_finite());
    }
}
