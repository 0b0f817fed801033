//! Camera model, rigid motions and differentiable inverse warping.

mod intrinsics;
mod motion;
pub mod warp;

pub use intrinsics::{CameraIntrinsics, Distortion};
pub use motion::{RigidMotion, StampedPose, Trajectory};
pub use warp::{backproject, project, warp, Projection, DEPTH_EPS};
