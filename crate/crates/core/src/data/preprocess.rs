//! Undistort, centre-crop to a square and resize.
//!
//! Pixel coordinates scale about the top-left pixel centre: an output pixel
//! `u'` samples the cropped source at `u' · s / W`, so the adjusted
//! intrinsics are `f' = f·W/s` and `c' = (c − offset)·W/s`.

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::image::ImageGrid;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub height: usize,
    pub width: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { height: 288, width: 288 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resample {
    /// Bilinear with a box prefilter matching the minification factor.
    Bilinear,
    /// Nearest sample; keeps invalid depth pixels from bleeding.
    Nearest,
}

/// Geometry shared by frames and depth maps of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessPlan {
    pub source: CameraIntrinsics,
    pub output: CameraIntrinsics,
    side: usize,
    offset: (usize, usize),
}

impl PreprocessPlan {
    pub fn new(k: &CameraIntrinsics, cfg: PreprocessConfig) -> Result<Self> {
        k.validate()?;
        if cfg.height == 0 || cfg.width == 0 {
            return Err(Error::Config("preprocess size must be positive".into()));
        }
        let side = k.width.min(k.height);
        if side < 2 {
            return Err(Error::InvalidInput(format!(
                "cannot centre-crop a {}x{} frame to a square",
                k.width, k.height
            )));
        }
        let offset = ((k.width - side) / 2, (k.height - side) / 2);
        let (sx, sy) = (cfg.width as f64 / side as f64, cfg.height as f64 / side as f64);
        let output = CameraIntrinsics::new(
            k.fx * sx,
            k.fy * sy,
            (k.cx - offset.0 as f64) * sx,
            (k.cy - offset.1 as f64) * sy,
            cfg.width,
            cfg.height,
        )?;
        Ok(Self {
            source: *k,
            output,
            side,
            offset,
        })
    }

    /// Location in the raw (distorted) frame that output pixel `(u, v)` reads.
    pub fn source_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let (sx, sy) = (self.side as f64 / self.output.width as f64, self.side as f64 / self.output.height as f64);
        let (uc, vc) = (u * sx + self.offset.0 as f64, v * sy + self.offset.1 as f64);
        let k = &self.source;
        if k.distortion.is_zero() {
            return (uc, vc);
        }
        let (x, y) = k.unproject(uc, vc);
        let (xd, yd) = k.distortion.distort(x, y);
        k.project(xd, yd)
    }

    pub fn apply(&self, img: &ImageGrid, mode: Resample) -> Result<ImageGrid> {
        if (img.width(), img.height()) != (self.source.width, self.source.height) {
            return Err(Error::dims(
                format!("{}x{} frame", self.source.width, self.source.height),
                format!("{}x{}", img.width(), img.height()),
            ));
        }
        let identity = self.source.distortion.is_zero()
            && self.offset == (0, 0)
            && (self.output.width, self.output.height) == (img.width(), img.height());
        if identity {
            return Ok(img.clone());
        }
        let (h, w) = (img.height(), img.width());
        let fx = self.side as f64 / self.output.width as f64;
        let fy = self.side as f64 / self.output.height as f64;
        let taps = |f: f64| if mode == Resample::Bilinear { f.ceil().max(1.0) as usize } else { 1 };
        let (nx, ny) = (taps(fx), taps(fy));
        let sample = |c: usize, x: f64, y: f64| -> f64 {
            let x = x.clamp(0.0, (w - 1) as f64);
            let y = y.clamp(0.0, (h - 1) as f64);
            match mode {
                Resample::Nearest => img.get(c, y.round() as usize, x.round() as usize),
                Resample::Bilinear => {
                    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                    let (ax, ay) = (x - x0 as f64, y - y0 as f64);
                    let top = img.get(c, y0, x0) * (1.0 - ax) + img.get(c, y0, x1) * ax;
                    let bot = img.get(c, y1, x0) * (1.0 - ax) + img.get(c, y1, x1) * ax;
                    top * (1.0 - ay) + bot * ay
                }
            }
        };
        Ok(ImageGrid::from_fn(img.channels(), self.output.height, self.output.width, |c, v, u| {
            // prefilter taps are symmetric about the sample centre
            let mut acc = 0.0;
            for j in 0..ny {
                let dv = (j as f64 + 0.5) / ny as f64 - 0.5;
                for i in 0..nx {
                    let du = (i as f64 + 0.5) / nx as f64 - 0.5;
                    let (su, sv) = self.source_pixel(u as f64 + du, v as f64 + dv);
                    acc += sample(c, su, sv);
                }
            }
            acc / (nx * ny) as f64
        }))
    }
}

/// Preprocessed frame and the intrinsics that describe it.
pub fn preprocess(frame: &ImageGrid, k: &CameraIntrinsics, cfg: PreprocessConfig) -> Result<(ImageGrid, CameraIntrinsics)> {
    let plan = PreprocessPlan::new(k, cfg)?;
    Ok((plan.apply(frame, Resample::Bilinear)?, plan.output))
}
