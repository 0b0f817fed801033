//! Channel-major image grids and PNG conversion.

use crate::error::{Error, Result};
use endodepth_tensor::{Shape, Tensor};
use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// `channels × height × width` grid of finite reals. Colour frames hold
/// values in `[0, 1]`; single-channel grids also carry depth or masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::dims(
                format!("{} values for {channels}x{height}x{width}", channels * height * width),
                data.len(),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn constant(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let p = self.height * self.width;
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel(&self, c: usize) -> ImageGrid {
        ImageGrid {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.plane(c).to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn same_spatial(&self, other: &ImageGrid) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Stack along channels in the given order.
    pub fn concat(parts: &[&ImageGrid]) -> Result<ImageGrid> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("concat of zero grids".into()))?;
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if !p.same_spatial(first) {
                return Err(Error::dims(
                    format!("{}x{}", first.height, first.width),
                    format!("{}x{}", p.height, p.width),
                ));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(ImageGrid {
            channels,
            height: first.height,
            width: first.width,
            data,
        })
    }

    /// 2×2 area average. Odd trailing rows or columns are dropped.
    pub fn downsample2(&self) -> ImageGrid {
        let (h, w) = (self.height / 2, self.width / 2);
        ImageGrid::from_fn(self.channels, h, w, |c, y, x| {
            0.25 * (self.get(c, 2 * y, 2 * x)
                + self.get(c, 2 * y, 2 * x + 1)
                + self.get(c, 2 * y + 1, 2 * x)
                + self.get(c, 2 * y + 1, 2 * x + 1))
        })
    }

    /// Levels `0..levels`, each half the size of the previous one.
    pub fn pyramid(&self, levels: usize) -> Vec<ImageGrid> {
        let mut out = vec![self.clone()];
        for _ in 1..levels {
            let next = out.last().expect("non-empty").downsample2();
            out.push(next);
        }
        out
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            Shape::new(1, self.channels, self.height, self.width),
            self.data.clone(),
        )
    }

    /// Batch item `n` of an NCHW tensor.
    pub fn from_tensor(t: &Tensor, n: usize) -> ImageGrid {
        let s = t.shape();
        let item = t.batch_item(n);
        ImageGrid {
            channels: s.c,
            height: s.h,
            width: s.w,
            data: item.into_data(),
        }
    }

    pub fn batch(grids: &[&ImageGrid]) -> Tensor {
        let parts: Vec<Tensor> = grids.iter().map(|g| g.to_tensor()).collect();
        Tensor::stack(&parts)
    }

    pub fn from_rgb8(img: &RgbImage) -> ImageGrid {
        let (w, h) = img.dimensions();
        ImageGrid::from_fn(3, h as usize, w as usize, |c, y, x| {
            img.get_pixel(x as u32, y as u32).0[c] as f64 / 255.0
        })
    }

    pub fn to_rgb8(&self) -> Result<RgbImage> {
        if self.channels != 3 {
            return Err(Error::dims("3 channels", self.channels));
        }
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        Ok(ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            image::Rgb([q(self.get(0, y, x)), q(self.get(1, y, x)), q(self.get(2, y, x))])
        }))
    }

    /// First channel as 8-bit grey, values clamped to `[0, 1]`.
    pub fn to_gray8(&self) -> GrayImage {
        ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([(self.get(0, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
        })
    }

    pub fn from_gray8(img: &GrayImage) -> ImageGrid {
        let (w, h) = img.dimensions();
        ImageGrid::from_fn(1, h as usize, w as usize, |_, y, x| {
            img.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0
        })
    }

    /// Load any PNG as an RGB frame in `[0, 1]`.
    pub fn load_rgb(path: &Path) -> Result<ImageGrid> {
        let img = image::open(path).map_err(|source| Error::Image {
            context: format!("reading {}", path.display()),
            source,
        })?;
        Ok(ImageGrid::from_rgb8(&img.to_rgb8()))
    }

    pub fn save_rgb(&self, path: &Path) -> Result<()> {
        self.to_rgb8()?.save(path).map_err(|source| Error::Image {
            context: format!("writing {}", path.display()),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(ImageGrid::new(1, 1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(ImageGrid::new(1, 1, 2, vec![0.0]).is_err());
    }

    #[test]
    fn downsample_averages_blocks() {
        let g = ImageGrid::from_fn(1, 2, 4, |_, y, x| (y * 4 + x) as f64);
        let d = g.downsample2();
        assert_eq!(d.data(), &[2.5, 4.5]);
    }

    #[test]
    fn tensor_round_trip() {
        let g = ImageGrid::from_fn(3, 2, 3, |c, y, x| (c + y + x) as f64 * 0.1);
        assert_eq!(ImageGrid::from_tensor(&g.to_tensor(), 0), g);
    }
}
