//! Differentiable backprojection, rigid transform, projection and inverse
//! warping, plus plain wrappers over [`ImageGrid`].
//!
//! Tensor layouts: depth `[n,1,h,w]`, point clouds `[n,3,h,w]`, motions
//! `[n,6,1,1]` (axis-angle then translation), rotation matrices `[n,9,1,1]`
//! row-major, sampling grids `[n,2,h,w]` with x then y in `[-1, 1]`.

use super::{CameraIntrinsics, RigidMotion};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use endodepth_tensor::{Shape, Tape, Tensor, Var};
use nalgebra::Matrix3;

/// Depth floor applied before perspective division.
pub const DEPTH_EPS: f64 = 1e-7;

/// Projections this close outside the outermost pixel centres still count
/// as in-frame; absorbs rounding on the image border.
const EDGE_TOL: f64 = 1e-9;

fn skew(r: [f64; 3]) -> Matrix3<f64> {
    Matrix3::new(0.0, -r[2], r[1], r[2], 0.0, -r[0], -r[1], r[0], 0.0)
}

/// Rotation matrix of an axis-angle vector and its three partial derivatives.
///
/// `R = I + A·[r]× + B·[r]×²` with `A = sin θ/θ`, `B = (1 − cos θ)/θ²`;
/// Taylor series replace the closed forms below `θ = 1e-2`.
pub fn rodrigues_with_jacobian(r: [f64; 3]) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
    let t2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let t = t2.sqrt();
    // a = A'(θ)/θ, b = B'(θ)/θ
    let (a_, b_, da, db) = if t < 1e-2 {
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0,
        )
    } else {
        let (s, c) = t.sin_cos();
        (
            s / t,
            (1.0 - c) / t2,
            (t * c - s) / (t2 * t),
            (t * s - 2.0 * (1.0 - c)) / (t2 * t2),
        )
    };
    let k = skew(r);
    let k2 = k * k;
    let rot = Matrix3::identity() + k * a_ + k2 * b_;
    let jac = [0, 1, 2].map(|i| {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let ek = skew(e);
        k * (da * r[i]) + ek * a_ + k2 * (db * r[i]) + (ek * k + k * ek) * b_
    });
    (rot, jac)
}

fn intrinsics_for(ks: &[CameraIntrinsics], n: usize) -> &CameraIntrinsics {
    if ks.len() == 1 {
        &ks[0]
    } else {
        &ks[n]
    }
}

fn check_intrinsics(ks: &[CameraIntrinsics], batch: usize) -> Result<()> {
    if ks.len() == 1 || ks.len() == batch {
        Ok(())
    } else {
        Err(Error::dims(format!("1 or {batch} intrinsics"), ks.len()))
    }
}

fn check_dims(what: &str, s: Shape, k: &CameraIntrinsics) -> Result<()> {
    if s.h != k.height || s.w != k.width {
        return Err(Error::dims(
            format!("{what} {}x{} from intrinsics", k.height, k.width),
            format!("{}x{}", s.h, s.w),
        ));
    }
    Ok(())
}

/// Per-pixel rays `((u − cx)/fx, (v − cy)/fy, 1)`, `[n,3,h,w]`.
pub fn pixel_rays(ks: &[CameraIntrinsics], batch: usize) -> Tensor {
    let k0 = ks[0];
    Tensor::from_fn(Shape::new(batch, 3, k0.height, k0.width), |n, c, y, x| {
        let k = intrinsics_for(ks, n);
        match c {
            0 => (x as f64 - k.cx) / k.fx,
            1 => (y as f64 - k.cy) / k.fy,
            _ => 1.0,
        }
    })
}

/// Lift depth `[n,1,h,w]` to camera-frame points `[n,3,h,w]`.
pub fn backproject_var<'t>(depth: Var<'t>, ks: &[CameraIntrinsics]) -> Result<Var<'t>> {
    let s = depth.shape();
    if s.c != 1 {
        return Err(Error::dims("1-channel depth", s.c));
    }
    check_intrinsics(ks, s.n)?;
    for n in 0..s.n {
        check_dims("depth", s, intrinsics_for(ks, n))?;
    }
    if ks.len() > 1 && ks.iter().any(|k| (k.width, k.height) != (ks[0].width, ks[0].height)) {
        return Err(Error::InvalidInput("batch intrinsics disagree on image size".into()));
    }
    let rays = pixel_rays(ks, s.n);
    Ok(depth.mul_const(&rays))
}

/// Rodrigues map `[n,3,1,1] → [n,9,1,1]`.
pub fn axis_angle_to_matrix(aa: Var<'_>) -> Var<'_> {
    let s = aa.shape();
    assert!(s.c == 3 && s.h == 1 && s.w == 1, "axis_angle_to_matrix expects [n,3,1,1], got {s}");
    let v = aa.value();
    let mut out = Tensor::zeros(Shape::new(s.n, 9, 1, 1));
    let mut jacs = Vec::with_capacity(s.n);
    for n in 0..s.n {
        let r = [v.at(n, 0, 0, 0), v.at(n, 1, 0, 0), v.at(n, 2, 0, 0)];
        let (rot, jac) = rodrigues_with_jacobian(r);
        for i in 0..3 {
            for j in 0..3 {
                out.set(n, 3 * i + j, 0, 0, rot[(i, j)]);
            }
        }
        jacs.push(jac);
    }
    aa.tape().op(
        out,
        &[aa],
        Box::new(move |g, _| {
            let mut gr = Tensor::zeros(s);
            for (n, jac) in jacs.iter().enumerate() {
                for (k, jk) in jac.iter().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            acc += g.at(n, 3 * i + j, 0, 0) * jk[(i, j)];
                        }
                    }
                    gr.set(n, k, 0, 0, acc);
                }
            }
            vec![Some(gr)]
        }),
    )
}

/// `R·p + t` for points `[n,3,h,w]`, rotations `[n,9,1,1]`, translations `[n,3,1,1]`.
pub fn rigid_transform<'t>(points: Var<'t>, rot: Var<'t>, trans: Var<'t>) -> Var<'t> {
    let s = points.shape();
    assert_eq!(s.c, 3, "rigid_transform expects 3-channel points");
    assert_eq!(rot.shape(), Shape::new(s.n, 9, 1, 1), "rigid_transform rotation shape");
    assert_eq!(trans.shape(), Shape::new(s.n, 3, 1, 1), "rigid_transform translation shape");
    let (p, r, t) = (points.value(), rot.value(), trans.value());
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for i in 0..3 {
            let r_i = [r.at(n, 3 * i, 0, 0), r.at(n, 3 * i + 1, 0, 0), r.at(n, 3 * i + 2, 0, 0)];
            let ti = t.at(n, i, 0, 0);
            let (px, py, pz) = (p.plane(n, 0), p.plane(n, 1), p.plane(n, 2));
            let o = out.offset(n, i, 0, 0);
            for k in 0..plane {
                out.data_mut()[o + k] = r_i[0] * px[k] + r_i[1] * py[k] + r_i[2] * pz[k] + ti;
            }
        }
    }
    points.tape().op(
        out,
        &[points, rot, trans],
        Box::new(move |g, need| {
            let gp = need[0].then(|| {
                let mut gp = Tensor::zeros(s);
                for n in 0..s.n {
                    for j in 0..3 {
                        let o = gp.offset(n, j, 0, 0);
                        for i in 0..3 {
                            let rij = r.at(n, 3 * i + j, 0, 0);
                            let gi = g.plane(n, i);
                            for k in 0..plane {
                                gp.data_mut()[o + k] += rij * gi[k];
                            }
                        }
                    }
                }
                gp
            });
            let gr = need[1].then(|| {
                Tensor::from_fn(Shape::new(s.n, 9, 1, 1), |n, c, _, _| {
                    let (i, j) = (c / 3, c % 3);
                    g.plane(n, i).iter().zip(p.plane(n, j)).map(|(a, b)| a * b).sum()
                })
            });
            let gt = need[2].then(|| {
                Tensor::from_fn(Shape::new(s.n, 3, 1, 1), |n, c, _, _| g.plane(n, c).iter().sum())
            });
            vec![gp, gr, gt]
        }),
    )
}

/// Pinhole projection of camera-frame points into the image described by
/// `ks`, as pixel coordinates.
fn project_pixels(p: &Tensor, ks: &[CameraIntrinsics]) -> (Tensor, Tensor) {
    let s = p.shape();
    let mut pix = Tensor::zeros(s.with_c(2));
    let mut mask = Tensor::zeros(s.with_c(1));
    for n in 0..s.n {
        let k = intrinsics_for(ks, n);
        let (px, py, pz) = (p.plane(n, 0), p.plane(n, 1), p.plane(n, 2));
        let (ou, ov, om) = (pix.offset(n, 0, 0, 0), pix.offset(n, 1, 0, 0), mask.offset(n, 0, 0, 0));
        for i in 0..s.plane() {
            let front = pz[i] > DEPTH_EPS;
            let z = pz[i].max(DEPTH_EPS);
            let u = k.fx * px[i] / z + k.cx;
            let v = k.fy * py[i] / z + k.cy;
            let inside = (-EDGE_TOL..=(k.width - 1) as f64 + EDGE_TOL).contains(&u)
                && (-EDGE_TOL..=(k.height - 1) as f64 + EDGE_TOL).contains(&v);
            pix.data_mut()[ou + i] = u;
            pix.data_mut()[ov + i] = v;
            mask.data_mut()[om + i] = if front && inside { 1.0 } else { 0.0 };
        }
    }
    (pix, mask)
}

/// Project points `[n,3,h,w]` to a normalised sampling grid `[n,2,h,w]`
/// (`x_n = 2u/(W − 1) − 1`) and a validity mask `[n,1,h,w]` of zeros and ones.
///
/// The mask is zero where `Z ≤ ε` or the projection leaves the frame. No
/// gradient flows through points with `Z ≤ ε`.
pub fn project_var<'t>(points: Var<'t>, ks: &[CameraIntrinsics]) -> Result<(Var<'t>, Tensor)> {
    let s = points.shape();
    if s.c != 3 {
        return Err(Error::dims("3-channel points", s.c));
    }
    check_intrinsics(ks, s.n)?;
    let p = points.value();
    let (pix, mask) = project_pixels(&p, ks);
    let sx: Vec<f64> = (0..s.n).map(|n| 2.0 / (intrinsics_for(ks, n).width as f64 - 1.0)).collect();
    let sy: Vec<f64> = (0..s.n).map(|n| 2.0 / (intrinsics_for(ks, n).height as f64 - 1.0)).collect();
    let grid = Tensor::from_fn(s.with_c(2), |n, c, y, x| {
        let v = pix.at(n, c, y, x);
        if c == 0 {
            v * sx[n] - 1.0
        } else {
            v * sy[n] - 1.0
        }
    });
    let kk: Vec<CameraIntrinsics> = (0..s.n).map(|n| *intrinsics_for(ks, n)).collect();
    let var = points.tape().op(
        grid,
        &[points],
        Box::new(move |g, _| {
            let mut gp = Tensor::zeros(s);
            for n in 0..s.n {
                let k = &kk[n];
                let (px, py, pz) = (p.plane(n, 0), p.plane(n, 1), p.plane(n, 2));
                let (gx, gy) = (g.plane(n, 0), g.plane(n, 1));
                let (o0, o1, o2) = (gp.offset(n, 0, 0, 0), gp.offset(n, 1, 0, 0), gp.offset(n, 2, 0, 0));
                let d = gp.data_mut();
                for i in 0..s.plane() {
                    if pz[i] <= DEPTH_EPS {
                        continue;
                    }
                    let iz = 1.0 / pz[i];
                    let ax = gx[i] * sx[n] * k.fx * iz;
                    let ay = gy[i] * sy[n] * k.fy * iz;
                    d[o0 + i] += ax;
                    d[o1 + i] += ay;
                    d[o2 + i] -= (ax * px[i] + ay * py[i]) * iz;
                }
            }
            vec![Some(gp)]
        }),
    );
    Ok((var, mask))
}

/// Split motions `[n,6,1,1]` into rotation matrices `[n,9,1,1]` and
/// translations `[n,3,1,1]`.
pub fn motion_parts(motion: Var<'_>) -> (Var<'_>, Var<'_>) {
    (axis_angle_to_matrix(motion.slice_channels(0, 3)), motion.slice_channels(3, 3))
}

pub fn motion_tensor(motions: &[RigidMotion]) -> Tensor {
    Tensor::from_fn(Shape::new(motions.len(), 6, 1, 1), |n, c, _, _| motions[n].to_array6()[c])
}

/// Differentiable warp result.
pub struct Warped<'t> {
    pub image: Var<'t>,
    /// `[n,1,h,w]`, one where the sample is valid.
    pub mask: Tensor,
}

/// Synthesise the target view by sampling `source` (`[n,c,h,w]`) at the
/// projections of target pixels lifted with `depth` (`[n,1,h,w]`) and moved
/// by `motion` (`[n,6,1,1]`, target camera → source camera).
pub fn warp_var<'t>(
    source: Var<'t>,
    depth: Var<'t>,
    motion: Var<'t>,
    ks: &[CameraIntrinsics],
) -> Result<Warped<'t>> {
    let ss = source.shape();
    let ms = motion.shape();
    if ms != Shape::new(ss.n, 6, 1, 1) {
        return Err(Error::dims(format!("motion [{},6,1,1]", ss.n), ms));
    }
    if depth.shape().n != ss.n {
        return Err(Error::dims(format!("depth batch {}", ss.n), depth.shape().n));
    }
    check_intrinsics(ks, ss.n)?;
    for n in 0..ss.n {
        check_dims("source", ss, intrinsics_for(ks, n))?;
    }
    let points = backproject_var(depth, ks)?;
    let (rot, trans) = motion_parts(motion);
    let moved = rigid_transform(points, rot, trans);
    let (grid, mask) = project_var(moved, ks)?;
    Ok(Warped {
        image: source.grid_sample(grid),
        mask,
    })
}

/// Pixel-space projection of a point grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// Normalised coordinates, channel 0 = x, 1 = y.
    pub grid: ImageGrid,
    /// Pixel coordinates `(u, v)`.
    pub pixels: ImageGrid,
    pub mask: Vec<bool>,
}

impl Projection {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn mask_vec(t: &Tensor) -> Vec<bool> {
    t.data().iter().map(|&v| v > 0.5).collect()
}

/// Lift a depth grid to a 3-channel point grid.
pub fn backproject(depth: &ImageGrid, k: &CameraIntrinsics) -> Result<ImageGrid> {
    if let Some(i) = depth.data().iter().position(|&z| !(z > 0.0)) {
        return Err(Error::InvalidInput(format!("depth must be positive (index {i})")));
    }
    let tape = Tape::new();
    let p = backproject_var(tape.constant(depth.to_tensor()), std::slice::from_ref(k))?;
    Ok(ImageGrid::from_tensor(&p.value(), 0))
}

/// Move points by `motion` and project them with `k`.
pub fn project(points: &ImageGrid, motion: &RigidMotion, k: &CameraIntrinsics) -> Result<Projection> {
    if points.channels() != 3 {
        return Err(Error::dims("3-channel points", points.channels()));
    }
    let tape = Tape::new();
    let (rot, trans) = motion_parts(tape.constant(motion_tensor(&[*motion])));
    let moved = rigid_transform(tape.constant(points.to_tensor()), rot, trans);
    let ks = std::slice::from_ref(k);
    let (pix, _) = project_pixels(&moved.value(), ks);
    let (grid, mask) = project_var(moved, ks)?;
    Ok(Projection {
        grid: ImageGrid::from_tensor(&grid.value(), 0),
        pixels: ImageGrid::from_tensor(&pix, 0),
        mask: mask_vec(&mask),
    })
}

/// Inverse-warp `source` into the target view; returns the warped image and
/// its per-pixel validity.
pub fn warp(
    source: &ImageGrid,
    depth_t: &ImageGrid,
    motion: &RigidMotion,
    k: &CameraIntrinsics,
) -> Result<(ImageGrid, Vec<bool>)> {
    if depth_t.channels() != 1 || !depth_t.same_spatial(source) {
        return Err(Error::dims(
            format!("1x{}x{} depth", source.height(), source.width()),
            format!("{:?}", depth_t.dims()),
        ));
    }
    let tape = Tape::new();
    let w = warp_var(
        tape.constant(source.to_tensor()),
        tape.constant(depth_t.to_tensor()),
        tape.constant(motion_tensor(&[*motion])),
        std::slice::from_ref(k),
    )?;
    Ok((ImageGrid::from_tensor(&w.image.value(), 0), mask_vec(&w.mask)))
}
