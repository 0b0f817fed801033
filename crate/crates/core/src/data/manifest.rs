use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?} (expected train, val or test)"))),
        }
    }
}

/// One video sequence; paths are relative to the manifest's directory
/// unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceEntry {
    pub name: String,
    /// Directory of pre-extracted frames, ordered by zero-padded file name.
    pub frames: PathBuf,
    /// Key-value intrinsics file describing the raw frames.
    pub intrinsics: PathBuf,
    pub fps: f64,
    pub split: Split,
    /// Directory of 16-bit depth images named like the frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_depth: Option<PathBuf>,
    /// Raw depth value per scene unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_scale: Option<f64>,
    /// TUM trajectory with one pose per frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_trajectory: Option<PathBuf>,
}

/// TOML dataset description:
///
/// ```toml
/// name = "tube"
///
/// [[sequences]]
/// name = "seq00"
/// frames = "seq00/frames"
/// intrinsics = "seq00/intrinsics.txt"
/// fps = 25.0
/// split = "train"
/// gt_depth = "seq00/depth"
/// depth_scale = 1000.0
/// gt_trajectory = "seq00/poses.txt"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub sequences: Vec<SequenceEntry>,
}

pub const FRAME_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

impl DatasetManifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                reason: e.message().to_string(),
            }
        })?;
        m.validate_fields()?;
        Ok(m)
    }

    fn validate_fields(&self) -> Result<()> {
        for s in &self.sequences {
            if !(s.fps > 0.0 && s.fps.is_finite()) {
                return Err(Error::Config(format!("sequence {}: fps must be positive", s.name)));
            }
            if s.gt_depth.is_some() && s.depth_scale.is_none() {
                return Err(Error::Config(format!("sequence {}: gt_depth requires depth_scale", s.name)));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialising manifest: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Sorted frame files of a directory.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(format!("listing frames in {}", dir.display()), e))?;
    let mut frames = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if ext.is_some_and(|e| FRAME_EXTENSIONS.contains(&e.as_str())) {
            frames.push(p);
        }
    }
    frames.sort();
    let stem_len = |p: &PathBuf| p.file_stem().map(|s| s.len()).unwrap_or(0);
    if frames.windows(2).any(|w| stem_len(&w[0]) != stem_len(&w[1])) {
        log::warn!("{}: frame names differ in length; lexicographic order may not be temporal", dir.display());
    }
    Ok(frames)
}
