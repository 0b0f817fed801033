//! Ground-truth depth images and TUM trajectory files.

use crate::error::{Error, Result};
use crate::geometry::{RigidMotion, StampedPose, Trajectory};
use crate::image::ImageGrid;
use image::{ImageBuffer, Luma};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use std::fmt::Write as _;
use std::path::Path;

/// Depth `raw / scale` from a 16-bit grey image; raw zeros are invalid.
pub fn load_gt_depth(path: &Path, scale: f64) -> Result<(ImageGrid, Vec<bool>)> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("depth scale must be positive, got {scale}")));
    }
    let img = image::open(path).map_err(|source| Error::Image {
        context: format!("reading depth {}", path.display()),
        source,
    })?;
    let img = match img {
        image::DynamicImage::ImageLuma16(g) => g,
        other => {
            return Err(Error::InvalidInput(format!(
                "{}: expected a 16-bit single-channel depth image, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = img.dimensions();
    let raw: Vec<u16> = img.pixels().map(|p| p.0[0]).collect();
    let valid = raw.iter().map(|&r| r != 0).collect();
    let depth = ImageGrid::new(1, h as usize, w as usize, raw.iter().map(|&r| r as f64 / scale).collect())?;
    Ok((depth, valid))
}

/// Inverse of [`load_gt_depth`]; values are rounded and saturate at 65535.
pub fn save_gt_depth(path: &Path, depth: &ImageGrid, scale: f64) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(depth.width() as u32, depth.height() as u32, |x, y| {
            let d = depth.get(0, y as usize, x as usize);
            Luma([(d * scale).round().clamp(0.0, 65535.0) as u16])
        });
    img.save(path).map_err(|source| Error::Image {
        context: format!("writing depth {}", path.display()),
        source,
    })
}

/// Parse `timestamp tx ty tz qx qy qz qw` lines; `#` starts a comment.
pub fn parse_tum(text: &str, origin: &Path) -> Result<Trajectory> {
    let err = |line: usize, reason: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut poses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(i + 1, format!("not a number: {t:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != 8 {
            return Err(err(i + 1, format!("expected 8 fields, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(err(i + 1, "non-finite value".into()));
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if q.norm() < 1e-9 {
            return Err(err(i + 1, "zero quaternion".into()));
        }
        let q = UnitQuaternion::from_quaternion(q);
        if let Some(prev) = poses.last().map(|p: &StampedPose| p.timestamp) {
            if vals[0] <= prev {
                return Err(err(i + 1, format!("timestamp {} does not increase", vals[0])));
            }
        }
        poses.push(StampedPose {
            timestamp: vals[0],
            pose: RigidMotion::from_quaternion(&q, Vector3::new(vals[1], vals[2], vals[3])),
        });
    }
    Trajectory::new(poses)
}

pub fn load_tum(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_tum(&text, path)
}

pub fn format_tum(traj: &Trajectory) -> String {
    let mut s = String::new();
    for p in traj.poses() {
        let t = p.pose.translation_vector();
        let q = p.pose.quaternion();
        let _ = writeln!(s, "{} {} {} {} {} {} {} {}", p.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w);
    }
    s
}

pub fn save_tum(path: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, format_tum(traj)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
