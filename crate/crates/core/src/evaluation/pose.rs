use crate::error::{Error, Result};
use crate::geometry::{RigidMotion, StampedPose, Trajectory};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Timestamps of matched poses may differ by at most this.
pub const TIMESTAMP_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    Rigid,
    #[default]
    Similarity,
}

impl fmt::Display for AlignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignMode::Rigid => "rigid",
            AlignMode::Similarity => "similarity",
        })
    }
}

impl FromStr for AlignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rigid" => Ok(Self::Rigid),
            "similarity" => Ok(Self::Similarity),
            other => Err(Error::Config(format!("unknown alignment {other:?} (expected rigid or similarity)"))),
        }
    }
}

/// `p ↦ s·R·p + t` applied to the estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
    /// Fewer than three poses, or positions (nearly) collinear.
    pub low_confidence: bool,
    pub aligned: Trajectory,
}

fn check_matched(est: &Trajectory, reference: &Trajectory) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::dims(
            format!("{} reference poses", reference.len()),
            format!("{} estimated poses", est.len()),
        ));
    }
    if est.is_empty() {
        return Err(Error::InvalidInput("empty trajectories".into()));
    }
    for (i, (a, b)) in est.poses().iter().zip(reference.poses()).enumerate() {
        if (a.timestamp - b.timestamp).abs() > TIMESTAMP_TOL {
            return Err(Error::InvalidInput(format!(
                "pose {i}: timestamps {} and {} do not match",
                a.timestamp, b.timestamp
            )));
        }
    }
    Ok(())
}

/// Closed-form least-squares fit of the estimated positions onto the
/// reference positions (Umeyama).
pub fn align(est: &Trajectory, reference: &Trajectory, mode: AlignMode) -> Result<Alignment> {
    check_matched(est, reference)?;
    let (x, y) = (est.positions(), reference.positions());
    let n = x.len() as f64;
    let mx = x.iter().sum::<Vector3<f64>>() / n;
    let my = y.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (a, b) in x.iter().zip(&y) {
        let (da, db) = (a - mx, b - my);
        cov += db * da.transpose();
        var_x += da.norm_squared();
    }
    cov /= n;
    var_x /= n;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut d = Matrix3::identity();
    if (u.determinant() * vt.determinant()) < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * vt;
    let sv = svd.singular_values;
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    let low_confidence = x.len() < 3 || sorted[1] <= 1e-9 * sorted[0].max(f64::MIN_POSITIVE);
    let scale = match mode {
        AlignMode::Rigid => 1.0,
        AlignMode::Similarity if var_x > 0.0 => (0..3).map(|i| sv[i] * d[(i, i)]).sum::<f64>() / var_x,
        AlignMode::Similarity => 1.0,
    };
    let translation = my - scale * rotation * mx;
    let rot = Rotation3::from_matrix_unchecked(rotation);
    let aligned = Trajectory::new(
        est.poses()
            .iter()
            .map(|p| StampedPose {
                timestamp: p.timestamp,
                pose: RigidMotion::from_rotation(
                    &(rot * p.pose.rotation3()),
                    scale * rotation * p.pose.translation_vector() + translation,
                ),
            })
            .collect(),
    )?;
    Ok(Alignment {
        rotation,
        translation,
        scale,
        low_confidence,
        aligned,
    })
}

fn rmse(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for e in v {
        s += e * e;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// RMSE of position residuals after alignment.
pub fn ate(est: &Trajectory, reference: &Trajectory, mode: AlignMode) -> Result<f64> {
    let a = align(est, reference, mode)?;
    Ok(rmse(
        a.aligned
            .positions()
            .iter()
            .zip(reference.positions())
            .map(|(p, q)| (p - q).norm()),
    ))
}

fn relative_pairs(est: &Trajectory, reference: &Trajectory, step: usize) -> Result<Vec<(RigidMotion, RigidMotion)>> {
    check_matched(est, reference)?;
    if step == 0 {
        return Err(Error::Config("relative error step must be at least 1".into()));
    }
    Ok((0..est.len().saturating_sub(step))
        .map(|i| (est.relative(i, i + step), reference.relative(i, i + step)))
        .collect())
}

/// RMSE of `‖Δt_est − Δt_ref‖` over pose pairs `step` apart.
pub fn rte(est: &Trajectory, reference: &Trajectory, step: usize) -> Result<f64> {
    Ok(rmse(
        relative_pairs(est, reference, step)?
            .iter()
            .map(|(a, b)| (a.translation_vector() - b.translation_vector()).norm()),
    ))
}

/// Rotation angle via the quaternion, accurate near the identity.
fn rotation_angle(r: &Rotation3<f64>) -> f64 {
    let q = UnitQuaternion::from_rotation_matrix(r);
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// RMSE of `angle(ΔR_est · ΔR_ref⁻¹)` in radians.
pub fn rot(est: &Trajectory, reference: &Trajectory, step: usize) -> Result<f64> {
    Ok(rmse(
        relative_pairs(est, reference, step)?
            .iter()
            .map(|(a, b)| rotation_angle(&(a.rotation3() * b.rotation3().inverse()))),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseMetricReport {
    pub ate: f64,
    pub rte: f64,
    pub rot: f64,
    pub alignment: AlignMode,
    pub scale: f64,
    pub step: usize,
    pub low_confidence: bool,
    pub poses: usize,
}

pub fn pose_metrics(est: &Trajectory, reference: &Trajectory, mode: AlignMode, step: usize) -> Result<PoseMetricReport> {
    let a = align(est, reference, mode)?;
    // the similarity scale also fixes the unit of relative translations
    let scaled = match mode {
        AlignMode::Similarity => est.scaled(a.scale),
        AlignMode::Rigid => est.clone(),
    };
    Ok(PoseMetricReport {
        ate: ate(est, reference, mode)?,
        rte: rte(&scaled, reference, step)?,
        rot: rot(est, reference, step)?,
        alignment: mode,
        scale: a.scale,
        step,
        low_confidence: a.low_confidence,
        poses: est.len(),
    })
}
