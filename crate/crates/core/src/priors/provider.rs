use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::networks::{PriorNet, PriorTarget};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Edge maps whose largest Sobel response is below this are all-zero.
pub const EDGE_MIN_RESPONSE: f64 = 1e-8;
/// Window of the fallback luminance smoothing.
pub const LUMINANCE_BOX: usize = 5;

/// Luminance and edge map of one frame, both single-channel in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorMaps {
    pub luminance: ImageGrid,
    pub edges: ImageGrid,
}

impl PriorMaps {
    /// Area-averaged pyramid, finest first.
    pub fn pyramid(&self, levels: usize) -> Vec<PriorMaps> {
        self.luminance
            .pyramid(levels)
            .into_iter()
            .zip(self.edges.pyramid(levels))
            .map(|(luminance, edges)| PriorMaps { luminance, edges })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    LearnedCheckpoint,
    DeterministicFallback,
}

/// Source of one prior map type.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorProvider {
    target: PriorTarget,
    checkpoint: Option<PathBuf>,
    net: Option<PriorNet>,
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    i.clamp(0, n - 1) as usize
}

/// `k × k` mean with reflection padding.
fn box_reflect(g: &ImageGrid, k: usize) -> ImageGrid {
    let (h, w) = (g.height(), g.width());
    let r = (k / 2) as isize;
    let inv = 1.0 / (k * k) as f64;
    ImageGrid::from_fn(g.channels(), h, w, |c, y, x| {
        let mut acc = 0.0;
        for dy in -r..=r {
            let yy = reflect(y as isize + dy, h);
            for dx in -r..=r {
                acc += g.get(c, yy, reflect(x as isize + dx, w));
            }
        }
        acc * inv
    })
}

/// Per-pixel channel maximum followed by a 5×5 box mean.
pub fn fallback_luminance(frame: &ImageGrid) -> ImageGrid {
    let maxc = ImageGrid::from_fn(1, frame.height(), frame.width(), |_, y, x| {
        (0..frame.channels())
            .map(|c| frame.get(c, y, x))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    box_reflect(&maxc, LUMINANCE_BOX).map(|v| v.clamp(0.0, 1.0))
}

/// Sobel gradient magnitude (kernels scaled by 1/8, replicated border)
/// normalised by its maximum.
pub fn sobel_edges(lum: &ImageGrid) -> ImageGrid {
    let (h, w) = (lum.height(), lum.width());
    let at = |y: isize, x: isize| lum.get(0, y.clamp(0, h as isize - 1) as usize, x.clamp(0, w as isize - 1) as usize);
    let mag = ImageGrid::from_fn(1, h, w, |_, y, x| {
        let (y, x) = (y as isize, x as isize);
        let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)
            - at(y - 1, x - 1)
            - 2.0 * at(y, x - 1)
            - at(y + 1, x - 1))
            / 8.0;
        let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)
            - at(y - 1, x - 1)
            - 2.0 * at(y - 1, x)
            - at(y - 1, x + 1))
            / 8.0;
        (gx * gx + gy * gy).sqrt()
    });
    let max = mag.data().iter().copied().fold(0.0, f64::max);
    if max < EDGE_MIN_RESPONSE {
        return ImageGrid::constant(1, h, w, 0.0);
    }
    mag.map(|v| (v / max).clamp(0.0, 1.0))
}

pub fn fallback_edges(frame: &ImageGrid) -> ImageGrid {
    sobel_edges(&fallback_luminance(frame))
}

fn check_rgb(frame: &ImageGrid) -> Result<()> {
    if frame.channels() != 3 {
        return Err(Error::dims("3-channel frame", frame.channels()));
    }
    Ok(())
}

impl PriorProvider {
    pub fn fallback(target: PriorTarget) -> Self {
        Self {
            target,
            checkpoint: None,
            net: None,
        }
    }

    /// Frozen network loaded from `path`; configuration error naming the
    /// path if it is missing or corrupt.
    pub fn learned(target: PriorTarget, path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("prior checkpoint {} does not exist", path.display())));
        }
        let net = PriorNet::load(path, target)?;
        Ok(Self {
            target,
            checkpoint: Some(path.to_path_buf()),
            net: Some(net),
        })
    }

    pub fn kind(&self) -> ProviderKind {
        if self.net.is_some() {
            ProviderKind::LearnedCheckpoint
        } else {
            ProviderKind::DeterministicFallback
        }
    }

    pub fn target(&self) -> PriorTarget {
        self.target
    }

    pub fn checkpoint(&self) -> Option<&Path> {
        self.checkpoint.as_deref()
    }

    /// Distinguishes cached maps of different providers.
    pub fn cache_tag(&self) -> String {
        match &self.net {
            None => "fallback".into(),
            Some(net) => format!("learned-{}", &net.params.hash()[..12]),
        }
    }

    pub fn extract(&self, frame: &ImageGrid) -> Result<ImageGrid> {
        check_rgb(frame)?;
        Ok(match (&self.net, self.target) {
            (Some(net), _) => net.apply(frame),
            (None, PriorTarget::Luminance) => fallback_luminance(frame),
            (None, PriorTarget::Edges) => fallback_edges(frame),
        })
    }
}

/// Luminance and edge providers used together.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSet {
    pub luminance: PriorProvider,
    pub edges: PriorProvider,
}

impl Default for PriorSet {
    fn default() -> Self {
        Self {
            luminance: PriorProvider::fallback(PriorTarget::Luminance),
            edges: PriorProvider::fallback(PriorTarget::Edges),
        }
    }
}

impl PriorSet {
    /// Learned providers where a checkpoint is given, fallbacks otherwise.
    pub fn from_checkpoints(luminance: Option<&Path>, edges: Option<&Path>) -> Result<Self> {
        Ok(Self {
            luminance: match luminance {
                Some(p) => PriorProvider::learned(PriorTarget::Luminance, p)?,
                None => PriorProvider::fallback(PriorTarget::Luminance),
            },
            edges: match edges {
                Some(p) => PriorProvider::learned(PriorTarget::Edges, p)?,
                None => PriorProvider::fallback(PriorTarget::Edges),
            },
        })
    }

    pub fn compute(&self, frame: &ImageGrid) -> Result<PriorMaps> {
        Ok(PriorMaps {
            luminance: self.luminance.extract(frame)?,
            edges: self.edges.extract(frame)?,
        })
    }

    pub fn cache_key(&self) -> String {
        format!("lum-{}_edge-{}", self.luminance.cache_tag(), self.edges.cache_tag())
    }
}

pub fn extract_luminance(frame: &ImageGrid, provider: &PriorProvider) -> Result<ImageGrid> {
    if provider.target() != PriorTarget::Luminance {
        return Err(Error::Config("provider does not produce luminance maps".into()));
    }
    provider.extract(frame)
}

pub fn extract_edges(frame: &ImageGrid, provider: &PriorProvider) -> Result<ImageGrid> {
    if provider.target() != PriorTarget::Edges {
        return Err(Error::Config("provider does not produce edge maps".into()));
    }
    provider.extract(frame)
}
