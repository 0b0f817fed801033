//! Analytic ray-cast scenes lit by a point light at the camera centre.
//!
//! World frame: the tube axis is `+Z` and the plane is `Z = distance`.
//! Pixel intensity is `gain · albedo / range^exponent`, clamped to `[0, 1]`.

mod texture;
mod writer;

pub use texture::{Pattern, SurfacePoint, TextureSpec};
pub use writer::{write_dataset, SequenceSpec, DEPTH_SCALE};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidMotion, Trajectory};
use crate::image::ImageGrid;
use endodepth_tensor::par::map_indices;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Plane { distance: f64 },
    /// Open cylinder of `radius` closed by a cap at `Z = length`.
    Tube { radius: f64, length: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthMode {
    /// Camera-frame `Z`, the pinhole depth used everywhere else.
    #[default]
    Planar,
    /// Euclidean distance from the camera centre.
    Range,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryScript {
    /// `pose_i = start ∘ step^i` (camera-to-world).
    ConstantVelocity { start: RigidMotion, step: RigidMotion },
    Explicit { poses: Vec<RigidMotion> },
}

impl TrajectoryScript {
    pub fn poses(&self, frames: usize) -> Result<Vec<RigidMotion>> {
        match self {
            TrajectoryScript::ConstantVelocity { start, step } => {
                let mut out = Vec::with_capacity(frames);
                let mut p = *start;
                for _ in 0..frames {
                    out.push(p);
                    p = p.compose(step);
                }
                Ok(out)
            }
            TrajectoryScript::Explicit { poses } => {
                if poses.len() != frames {
                    return Err(Error::Scene(format!("{} scripted poses for {frames} frames", poses.len())));
                }
                Ok(poses.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub geometry: Geometry,
    #[serde(default)]
    pub texture: TextureSpec,
    #[serde(default = "default_exponent")]
    pub falloff_exponent: f64,
    #[serde(default = "default_gain")]
    pub light_gain: f64,
    pub trajectory: TrajectoryScript,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; the principal point is the image centre.
    pub focal: f64,
    #[serde(default = "default_supersample")]
    pub supersample: usize,
    #[serde(default)]
    pub depth_mode: DepthMode,
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Frames whose grey-level variance falls below this are rejected.
    #[serde(default = "default_min_variance")]
    pub min_texture_variance: f64,
}

fn default_exponent() -> f64 {
    2.0
}
fn default_gain() -> f64 {
    1.0
}
fn default_supersample() -> usize {
    2
}
fn default_fps() -> f64 {
    25.0
}
fn default_min_variance() -> f64 {
    1e-4
}

impl SceneSpec {
    /// Forward fly-through of a ring-textured tube with a slow roll.
    pub fn tube_flythrough(frames: usize, size: usize, forward_step: f64, seed: u64) -> Self {
        Self {
            geometry: Geometry::Tube {
                radius: 1.0,
                length: 4.0 + forward_step * frames as f64,
            },
            texture: TextureSpec {
                seed,
                ..Default::default()
            },
            falloff_exponent: 2.0,
            light_gain: 1.5,
            trajectory: TrajectoryScript::ConstantVelocity {
                start: RigidMotion::new([0.0, 0.0, 0.0], [0.15, -0.1, 0.0]),
                step: RigidMotion::new([0.0, 0.0, 0.004], [0.0, 0.0, forward_step]),
            },
            frames,
            width: size,
            height: size,
            focal: 0.6 * size as f64,
            supersample: 2,
            depth_mode: DepthMode::Planar,
            fps: 25.0,
            min_texture_variance: 1e-4,
        }
    }

    /// Static camera facing a checkered plane.
    pub fn textured_plane(frames: usize, size: usize, distance: f64, seed: u64) -> Self {
        Self {
            geometry: Geometry::Plane { distance },
            texture: TextureSpec {
                pattern: Pattern::Checker { size: 0.25 },
                contrast: 0.5,
                seed,
                ..Default::default()
            },
            falloff_exponent: 2.0,
            light_gain: distance * distance,
            trajectory: TrajectoryScript::ConstantVelocity {
                start: RigidMotion::identity(),
                step: RigidMotion::identity(),
            },
            frames,
            width: size,
            height: size,
            focal: 0.8 * size as f64,
            supersample: 2,
            depth_mode: DepthMode::Planar,
            fps: 25.0,
            min_texture_variance: 1e-4,
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::centered(self.focal, self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scene(m));
        if self.frames == 0 || self.width < 2 || self.height < 2 || self.supersample == 0 {
            return bad("frames, supersample and a size of at least 2x2 are required".into());
        }
        if !(self.falloff_exponent >= 0.0 && self.light_gain > 0.0 && self.fps > 0.0) {
            return bad("fall-off exponent, light gain and fps must be positive".into());
        }
        match self.geometry {
            Geometry::Plane { distance } if !(distance > 0.0) => bad(format!("plane distance {distance} must be positive")),
            Geometry::Tube { radius, length } if !(radius > 0.0 && length > 0.0) => {
                bad("tube radius and length must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

/// Output of [`render_sequence`].
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedSequence {
    pub frames: Vec<ImageGrid>,
    pub depth: Vec<ImageGrid>,
    /// Texture pattern membership at each pixel centre.
    pub pattern_masks: Vec<ImageGrid>,
    pub trajectory: Trajectory,
    pub intrinsics: CameraIntrinsics,
}

struct Hit {
    /// Ray parameter for a camera ray with unit `Z` component.
    t: f64,
    surface: SurfacePoint,
}

fn intersect(geometry: &Geometry, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Hit> {
    match *geometry {
        Geometry::Plane { distance } => {
            if d.z <= 1e-12 {
                return None;
            }
            let t = (distance - o.z) / d.z;
            let p = o + t * d;
            (t > 0.0).then_some(Hit {
                t,
                surface: SurfacePoint::Planar { x: p.x, y: p.y },
            })
        }
        Geometry::Tube { radius, length } => {
            let a = d.x * d.x + d.y * d.y;
            let t_cyl = if a > 1e-14 {
                let b = 2.0 * (o.x * d.x + o.y * d.y);
                let c = o.x * o.x + o.y * o.y - radius * radius;
                (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)
            } else {
                f64::INFINITY
            };
            let t_cap = if d.z > 1e-12 { (length - o.z) / d.z } else { f64::INFINITY };
            if t_cap <= t_cyl && t_cap.is_finite() {
                let p = o + t_cap * d;
                Some(Hit {
                    t: t_cap,
                    surface: SurfacePoint::Planar { x: p.x, y: p.y },
                })
            } else if t_cyl.is_finite() && t_cyl > 0.0 {
                let p = o + t_cyl * d;
                let phi = p.y.atan2(p.x).rem_euclid(2.0 * PI);
                Some(Hit {
                    t: t_cyl,
                    surface: SurfacePoint::Tube {
                        axial: p.z,
                        arc: phi * radius,
                        circumference: 2.0 * PI * radius,
                    },
                })
            } else {
                None
            }
        }
    }
}

fn check_camera(geometry: &Geometry, pose: &RigidMotion, frame: usize) -> Result<()> {
    let c = pose.translation_vector();
    match *geometry {
        Geometry::Plane { distance } if c.z >= distance => Err(Error::Scene(format!(
            "frame {frame}: camera at Z={} is on or behind the plane Z={distance}",
            c.z
        ))),
        Geometry::Tube { radius, length } if (c.x * c.x + c.y * c.y).sqrt() >= 0.98 * radius || c.z >= length => {
            Err(Error::Scene(format!(
                "frame {frame}: camera at ({:.3}, {:.3}, {:.3}) exits the tube interior",
                c.x, c.y, c.z
            )))
        }
        _ => Ok(()),
    }
}

struct FrameOut {
    rgb: ImageGrid,
    depth: ImageGrid,
    mask: ImageGrid,
}

fn render_frame(spec: &SceneSpec, k: &CameraIntrinsics, pose: &RigidMotion, frame: usize) -> Result<FrameOut> {
    let rot = pose.matrix();
    let o = pose.translation_vector();
    let (w, h) = (spec.width, spec.height);
    let ss = spec.supersample;
    let mut rgb = vec![0.0; 3 * w * h];
    let mut depth = vec![0.0; w * h];
    let mut mask = vec![0.0; w * h];
    let plane = w * h;
    let miss = || Error::Scene(format!("frame {frame}: a camera ray hits no surface"));
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let (x, y) = k.unproject(u as f64, v as f64);
            let ray = Vector3::new(x, y, 1.0);
            let hit = intersect(&spec.geometry, &o, &(rot * ray)).ok_or_else(miss)?;
            depth[i] = match spec.depth_mode {
                DepthMode::Planar => hit.t,
                DepthMode::Range => hit.t * ray.norm(),
            };
            mask[i] = spec.texture.pattern(hit.surface);
            let mut acc = [0.0; 3];
            for sj in 0..ss {
                for si in 0..ss {
                    let du = (si as f64 + 0.5) / ss as f64 - 0.5;
                    let dv = (sj as f64 + 0.5) / ss as f64 - 0.5;
                    let (x, y) = k.unproject(u as f64 + du, v as f64 + dv);
                    let ray = Vector3::new(x, y, 1.0);
                    let hit = intersect(&spec.geometry, &o, &(rot * ray)).ok_or_else(miss)?;
                    let range = hit.t * ray.norm();
                    let a = spec.texture.albedo(hit.surface);
                    let fall = spec.light_gain / range.powf(spec.falloff_exponent);
                    for c in 0..3 {
                        acc[c] += (a[c] * fall).clamp(0.0, 1.0);
                    }
                }
            }
            for c in 0..3 {
                rgb[c * plane + i] = acc[c] / (ss * ss) as f64;
            }
        }
    }
    Ok(FrameOut {
        rgb: ImageGrid::new(3, h, w, rgb)?,
        depth: ImageGrid::new(1, h, w, depth)?,
        mask: ImageGrid::new(1, h, w, mask)?,
    })
}

/// Render every frame of `spec`. Deterministic for a given spec.
pub fn render_sequence(spec: &SceneSpec) -> Result<RenderedSequence> {
    spec.validate()?;
    let k = spec.intrinsics()?;
    let poses = spec.trajectory.poses(spec.frames)?;
    for (i, p) in poses.iter().enumerate() {
        check_camera(&spec.geometry, p, i)?;
    }
    let rendered = map_indices(poses.len(), |i| render_frame(spec, &k, &poses[i], i));
    let mut out = RenderedSequence {
        frames: Vec::with_capacity(poses.len()),
        depth: Vec::with_capacity(poses.len()),
        pattern_masks: Vec::with_capacity(poses.len()),
        trajectory: Trajectory::new(
            poses
                .iter()
                .enumerate()
                .map(|(i, &pose)| crate::geometry::StampedPose {
                    timestamp: i as f64 / spec.fps,
                    pose,
                })
                .collect(),
        )?,
        intrinsics: k,
    };
    for r in rendered {
        let r = r?;
        out.frames.push(r.rgb);
        out.depth.push(r.depth);
        out.pattern_masks.push(r.mask);
    }
    let grey = out.frames[0].data().chunks(spec.width * spec.height).fold(vec![0.0; spec.width * spec.height], |mut acc, ch| {
        for (a, v) in acc.iter_mut().zip(ch) {
            *a += v / 3.0;
        }
        acc
    });
    let mean = grey.iter().sum::<f64>() / grey.len() as f64;
    let var = grey.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / grey.len() as f64;
    if var < spec.min_texture_variance {
        return Err(Error::Scene(format!(
            "degenerate texture: frame 0 intensity variance {var:.3e} is below {:.1e}",
            spec.min_texture_variance
        )));
    }
    Ok(out)
}
