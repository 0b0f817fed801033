use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Radial-tangential (Brown–Conrady) coefficients on normalised coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Distortion {
    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }

    /// Map an undistorted normalised point to its distorted location.
    pub fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }
}

/// Pinhole camera with optional lens distortion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub distortion: Distortion,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        Self::with_distortion(fx, fy, cx, cy, width, height, Distortion::default())
    }

    pub fn with_distortion(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        distortion: Distortion,
    ) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            distortion,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, principal point at the image centre.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image size must be non-zero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidInput(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Intrinsics for pyramid level `level`: every parameter and both image
    /// dimensions divided by `2^level`.
    pub fn scaled(&self, level: usize) -> Result<Self> {
        let f = 1usize << level;
        if self.width % f != 0 || self.height % f != 0 {
            return Err(Error::InvalidInput(format!(
                "{}x{} not divisible by 2^{level}",
                self.width, self.height
            )));
        }
        let s = f as f64;
        Ok(Self {
            fx: self.fx / s,
            fy: self.fy / s,
            cx: self.cx / s,
            cy: self.cy / s,
            width: self.width / f,
            height: self.height / f,
            distortion: self.distortion,
        })
    }

    /// Normalised ray `(x, y)` through pixel `(u, v)`, ignoring distortion.
    pub fn unproject(&self, u: f64, v: f64) -> (f64, f64) {
        ((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }

    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        (self.fx * x + self.cx, self.fy * y + self.cy)
    }

    pub fn undistorted(&self) -> Self {
        Self {
            distortion: Distortion::default(),
            ..*self
        }
    }

    /// Plain-text `key=value` form with keys `fx fy cx cy width height k1 k2 p1 p2`.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let d = self.distortion;
        for (k, v) in [("fx", self.fx), ("fy", self.fy), ("cx", self.cx), ("cy", self.cy)] {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "height={}", self.height);
        for (k, v) in [("k1", d.k1), ("k2", d.k2), ("p1", d.p1), ("p2", d.p2)] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Parse the `key=value` form. Blank lines and `#` comments are ignored;
    /// distortion keys default to zero; unknown keys are rejected.
    pub fn parse_key_value(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let mut vals: [Option<f64>; 10] = [None; 10];
        const KEYS: [&str; 10] = ["fx", "fy", "cx", "cy", "width", "height", "k1", "k2", "p1", "p2"];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected key=value, found {line:?}")))?;
            let k = k.trim();
            let slot = KEYS
                .iter()
                .position(|&key| key == k)
                .ok_or_else(|| err(i + 1, format!("unknown key {k:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| err(i + 1, format!("bad value for {k}: {e}")))?;
            vals[slot] = Some(v);
        }
        let req = |i: usize| vals[i].ok_or_else(|| err(0, format!("missing key {:?}", KEYS[i])));
        let dim = |i: usize| -> Result<usize> {
            let v = req(i)?;
            if v < 1.0 || v.fract() != 0.0 {
                return Err(err(0, format!("{} must be a positive integer", KEYS[i])));
            }
            Ok(v as usize)
        };
        let k = Self::with_distortion(
            req(0)?,
            req(1)?,
            req(2)?,
            req(3)?,
            dim(4)?,
            dim(5)?,
            Distortion {
                k1: vals[6].unwrap_or(0.0),
                k2: vals[7].unwrap_or(0.0),
                p1: vals[8].unwrap_or(0.0),
                p2: vals[9].unwrap_or(0.0),
            },
        );
        k.map_err(|e| err(0, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading intrinsics {}", path.display()), e))?;
        Self::parse_key_value(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_key_value())
            .map_err(|e| Error::io(format!("writing intrinsics {}", path.display()), e))
    }
}
