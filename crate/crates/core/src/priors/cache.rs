use super::provider::{PriorMaps, PriorSet};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use std::path::{Path, PathBuf};

/// On-disk 8-bit prior maps under `<root>/<provider key>/<frame id>_{lum,edge}.png`.
///
/// Maps are always returned quantised to 8 bits so a cache hit and a miss
/// yield identical values.
#[derive(Clone, Debug)]
pub struct PriorCache {
    dir: PathBuf,
}

fn quantise(g: &ImageGrid) -> ImageGrid {
    g.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

fn load_gray(path: &Path) -> Option<ImageGrid> {
    let img = image::open(path).ok()?;
    Some(ImageGrid::from_gray8(&img.to_luma8()))
}

impl PriorCache {
    pub fn new(root: &Path, priors: &PriorSet) -> Self {
        Self {
            dir: root.join(priors.cache_key()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn paths(&self, id: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{id}_lum.png")), self.dir.join(format!("{id}_edge.png")))
    }

    /// Cached maps for `id`, computing and storing them on a miss or when the
    /// cached size disagrees with `frame`.
    pub fn get_or_compute(&self, id: &str, frame: &ImageGrid, priors: &PriorSet) -> Result<PriorMaps> {
        let (lp, ep) = self.paths(id);
        if let (Some(luminance), Some(edges)) = (load_gray(&lp), load_gray(&ep)) {
            if luminance.same_spatial(frame) && edges.same_spatial(frame) {
                return Ok(PriorMaps { luminance, edges });
            }
        }
        let maps = priors.compute(frame)?;
        let maps = PriorMaps {
            luminance: quantise(&maps.luminance),
            edges: quantise(&maps.edges),
        };
        if let Some(parent) = lp.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
        for (path, g) in [(&lp, &maps.luminance), (&ep, &maps.edges)] {
            g.to_gray8().save(path).map_err(|source| Error::Image {
                context: format!("writing {}", path.display()),
                source,
            })?;
        }
        Ok(maps)
    }
}
