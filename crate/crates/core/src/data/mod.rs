//! Dataset manifests, frame-interval sampling and preprocessing.

mod io;
mod manifest;
mod preprocess;

pub use io::{format_tum, load_gt_depth, load_tum, parse_tum, save_gt_depth, save_tum};
pub use manifest::{list_frames, DatasetManifest, SequenceEntry, Split, FRAME_EXTENSIONS};
pub use preprocess::{preprocess, PreprocessConfig, PreprocessPlan, Resample};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidMotion, Trajectory};
use crate::image::ImageGrid;
use crate::priors::{PriorCache, PriorMaps, PriorSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

/// A target frame and its symmetric sources `t − k`, `t + k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SampleIndex {
    pub sequence: usize,
    pub target: usize,
    pub sources: [usize; 2],
    pub interval: usize,
}

/// Every valid target of every sequence, in sequence then frame order.
/// Sequences shorter than `2k + 1` are skipped with a warning.
pub fn build_samples(lengths: &[usize], interval: usize, stride: usize) -> Result<Vec<SampleIndex>> {
    if interval == 0 || stride == 0 {
        return Err(Error::Config("interval and stride must be at least 1".into()));
    }
    let k = interval;
    let mut out = Vec::new();
    for (seq, &len) in lengths.iter().enumerate() {
        if len < 2 * k + 1 {
            log::warn!("sequence {seq} has {len} frames, fewer than 2k+1 = {}; skipped", 2 * k + 1);
            continue;
        }
        out.extend((k..len - k).step_by(stride).map(|t| SampleIndex {
            sequence: seq,
            target: t,
            sources: [t - k, t + k],
            interval: k,
        }));
    }
    Ok(out)
}

/// Deterministic permutation of `0..n` for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// A sequence whose referenced files have been checked.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub entry: SequenceEntry,
    pub frames: Vec<PathBuf>,
    pub depth: Option<Vec<PathBuf>>,
    pub trajectory: Option<Trajectory>,
    pub raw_intrinsics: CameraIntrinsics,
    pub plan: PreprocessPlan,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Intrinsics of preprocessed frames.
    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.plan.output
    }

    /// `T_{t→s}` from ground truth: maps target camera coordinates into the
    /// source camera.
    pub fn gt_motion(&self, target: usize, source: usize) -> Option<RigidMotion> {
        self.trajectory.as_ref().map(|tr| tr.relative(source, target))
    }
}

/// Preprocessed frame with priors and optional ground-truth depth.
#[derive(Clone, Debug)]
pub struct Frame {
    pub rgb: ImageGrid,
    pub priors: PriorMaps,
    pub depth: Option<(ImageGrid, Vec<bool>)>,
}

#[derive(Clone, Debug)]
pub struct SampleItem {
    pub index: SampleIndex,
    pub target: Arc<Frame>,
    pub sources: Vec<Arc<Frame>>,
    pub intrinsics: CameraIntrinsics,
    /// Ground-truth `T_{t→s}` per source.
    pub gt_motion: Option<Vec<RigidMotion>>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn require(p: &Path, what: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", p.display())))
    }
}

/// A loaded manifest with per-frame memoisation of preprocessed frames.
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub sequences: Vec<Sequence>,
    pub preprocess: PreprocessConfig,
    pub priors: PriorSet,
    cache: Option<PriorCache>,
    frames: Mutex<HashMap<(usize, usize), Arc<Frame>>>,
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset")
            .field("name", &self.manifest.name)
            .field("sequences", &self.sequences.len())
            .finish()
    }
}

impl Dataset {
    pub fn open(manifest_path: &Path, preprocess: PreprocessConfig, priors: PriorSet) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path)
            .map_err(|e| Error::io(format!("reading manifest {}", manifest_path.display()), e))?;
        let manifest = DatasetManifest::parse(&text, manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        Self::from_manifest(manifest, base, preprocess, priors)
    }

    pub fn from_manifest(
        manifest: DatasetManifest,
        base: &Path,
        preprocess: PreprocessConfig,
        priors: PriorSet,
    ) -> Result<Self> {
        let mut sequences = Vec::with_capacity(manifest.sequences.len());
        for e in &manifest.sequences {
            let frames_dir = resolve(base, &e.frames);
            require(&frames_dir, "frame directory")?;
            let frames = list_frames(&frames_dir)?;
            let kpath = resolve(base, &e.intrinsics);
            require(&kpath, "intrinsics file")?;
            let raw_intrinsics = CameraIntrinsics::load(&kpath)?;
            let plan = PreprocessPlan::new(&raw_intrinsics, preprocess)?;
            let depth = match &e.gt_depth {
                None => None,
                Some(d) => {
                    let dir = resolve(base, d);
                    require(&dir, "depth directory")?;
                    let files = frames
                        .iter()
                        .map(|f| {
                            let p = dir.join(f.file_name().expect("file")).with_extension("png");
                            require(&p, "depth image").map(|_| p)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(files)
                }
            };
            let trajectory = match &e.gt_trajectory {
                None => None,
                Some(t) => {
                    let p = resolve(base, t);
                    require(&p, "trajectory file")?;
                    let tr = load_tum(&p)?;
                    if tr.len() != frames.len() {
                        return Err(Error::Config(format!(
                            "{}: {} poses for {} frames",
                            p.display(),
                            tr.len(),
                            frames.len()
                        )));
                    }
                    Some(tr)
                }
            };
            sequences.push(Sequence {
                entry: e.clone(),
                frames,
                depth,
                trajectory,
                raw_intrinsics,
                plan,
            });
        }
        Ok(Self {
            manifest,
            sequences,
            preprocess,
            priors,
            cache: None,
            frames: Mutex::new(HashMap::new()),
        })
    }

    /// Persist prior maps as 8-bit images under `root`.
    pub fn with_prior_cache(mut self, root: &Path) -> Self {
        self.cache = Some(PriorCache::new(root, &self.priors));
        self
    }

    pub fn sequence_indices(&self, split: Option<Split>) -> Vec<usize> {
        (0..self.sequences.len())
            .filter(|&i| split.is_none_or(|s| self.sequences[i].entry.split == s))
            .collect()
    }

    /// Samples of the sequences in `split` (all sequences for `None`).
    pub fn samples(&self, split: Option<Split>, interval: usize, stride: usize) -> Result<Vec<SampleIndex>> {
        let chosen = self.sequence_indices(split);
        let lengths: Vec<usize> = chosen.iter().map(|&i| self.sequences[i].len()).collect();
        Ok(build_samples(&lengths, interval, stride)?
            .into_iter()
            .map(|mut s| {
                s.sequence = chosen[s.sequence];
                s
            })
            .collect())
    }

    pub fn frame(&self, seq: usize, idx: usize) -> Result<Arc<Frame>> {
        if let Some(f) = self.frames.lock().expect("frame cache poisoned").get(&(seq, idx)) {
            return Ok(Arc::clone(f));
        }
        let s = self
            .sequences
            .get(seq)
            .ok_or_else(|| Error::InvalidInput(format!("no sequence {seq}")))?;
        let path = s
            .frames
            .get(idx)
            .ok_or_else(|| Error::InvalidInput(format!("sequence {} has no frame {idx}", s.entry.name)))?;
        let raw = ImageGrid::load_rgb(path)?;
        let rgb = s.plan.apply(&raw, Resample::Bilinear)?;
        let priors = match &self.cache {
            Some(c) => {
                let id = format!("{}_{}", s.entry.name, path.file_stem().and_then(|x| x.to_str()).unwrap_or("frame"));
                c.get_or_compute(&id, &rgb, &self.priors)?
            }
            None => self.priors.compute(&rgb)?,
        };
        let depth = match (&s.depth, s.entry.depth_scale) {
            (Some(files), Some(scale)) => {
                let (d, valid) = load_gt_depth(&files[idx], scale)?;
                let m = ImageGrid::new(1, d.height(), d.width(), valid.iter().map(|&v| v as u8 as f64).collect())?;
                let d = s.plan.apply(&d, Resample::Nearest)?;
                let m = s.plan.apply(&m, Resample::Nearest)?;
                let valid = m.data().iter().map(|&v| v > 0.5).collect();
                Some((d, valid))
            }
            _ => None,
        };
        let f = Arc::new(Frame { rgb, priors, depth });
        self.frames
            .lock()
            .expect("frame cache poisoned")
            .insert((seq, idx), Arc::clone(&f));
        Ok(f)
    }

    pub fn sample(&self, idx: &SampleIndex) -> Result<SampleItem> {
        let s = &self.sequences[idx.sequence];
        let gt_motion = s
            .trajectory
            .as_ref()
            .map(|_| idx.sources.iter().map(|&j| s.gt_motion(idx.target, j).expect("trajectory")).collect());
        Ok(SampleItem {
            index: *idx,
            target: self.frame(idx.sequence, idx.target)?,
            sources: idx
                .sources
                .iter()
                .map(|&j| self.frame(idx.sequence, j))
                .collect::<Result<_>>()?,
            intrinsics: *s.intrinsics(),
            gt_motion,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_counts() {
        assert_eq!(build_samples(&[5], 1, 1).unwrap().iter().map(|s| s.target).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(build_samples(&[25], 10, 1).unwrap().len(), 5);
        let one = build_samples(&[21], 10, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].target, 10);
        assert_eq!(one[0].sources, [0, 20]);
        assert!(build_samples(&[20, 3], 10, 1).unwrap().is_empty());
        assert_eq!(build_samples(&[5, 7], 1, 2).unwrap().len(), 2 + 3);
        assert!(build_samples(&[5], 0, 1).is_err());
    }

    #[test]
    fn count_formula() {
        for len in 0..40 {
            for k in 1..6 {
                assert_eq!(build_samples(&[len], k, 1).unwrap().len(), len.saturating_sub(2 * k));
            }
        }
    }

    #[test]
    fn epoch_order_is_deterministic_permutation() {
        let a = epoch_order(50, 7, 3);
        assert_eq!(a, epoch_order(50, 7, 3));
        assert_ne!(a, epoch_order(50, 7, 4));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn manifest_rejects_unknown_keys_and_missing_files() {
        let o = Path::new("m.toml");
        let bad = "name = \"x\"\ncolour = 1\nsequences = []\n";
        let e = DatasetManifest::parse(bad, o).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            name: "x".into(),
            sequences: vec![SequenceEntry {
                name: "s".into(),
                frames: "frames".into(),
                intrinsics: "k.txt".into(),
                fps: 25.0,
                split: Split::Train,
                gt_depth: None,
                depth_scale: None,
                gt_trajectory: None,
            }],
        };
        let back = DatasetManifest::parse(&m.to_toml().unwrap(), o).unwrap();
        assert_eq!(back, m);
        let e = Dataset::from_manifest(m, dir.path(), PreprocessConfig::default(), PriorSet::default()).unwrap_err();
        assert!(e.to_string().contains("frames"), "{e}");
    }
}
