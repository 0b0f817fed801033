use super::{render_sequence, SceneSpec};
use crate::data::{save_gt_depth, save_tum, DatasetManifest, SequenceEntry, Split};
use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

/// Raw 16-bit depth value per scene unit.
pub const DEPTH_SCALE: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSpec {
    pub name: String,
    pub split: Split,
    pub scene: SceneSpec,
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(format!("creating {}", p.display()), e))
}

/// Render every sequence under `out/<name>/` (frames, depth, masks,
/// poses.txt, intrinsics.txt, scene.json) and write `out/manifest.toml`.
pub fn write_dataset(name: &str, sequences: &[SequenceSpec], out: &Path) -> Result<DatasetManifest> {
    mkdir(out)?;
    let mut entries = Vec::with_capacity(sequences.len());
    for s in sequences {
        let r = render_sequence(&s.scene)?;
        let root = out.join(&s.name);
        let (frames, depth, masks) = (root.join("frames"), root.join("depth"), root.join("masks"));
        for d in [&frames, &depth, &masks] {
            mkdir(d)?;
        }
        for i in 0..r.frames.len() {
            let file = format!("{i:06}.png");
            r.frames[i].save_rgb(&frames.join(&file))?;
            save_gt_depth(&depth.join(&file), &r.depth[i], DEPTH_SCALE)?;
            let m = masks.join(&file);
            r.pattern_masks[i].to_gray8().save(&m).map_err(|source| Error::Image {
                context: format!("writing {}", m.display()),
                source,
            })?;
        }
        save_tum(&root.join("poses.txt"), &r.trajectory)?;
        r.intrinsics.save(&root.join("intrinsics.txt"))?;
        let scene = serde_json::to_string_pretty(&s.scene).map_err(|e| Error::InvalidInput(e.to_string()))?;
        std::fs::write(root.join("scene.json"), scene).map_err(|e| Error::io("writing scene.json", e))?;
        let rel = |p: &str| PathBuf::from(&s.name).join(p);
        entries.push(SequenceEntry {
            name: s.name.clone(),
            frames: rel("frames"),
            intrinsics: rel("intrinsics.txt"),
            fps: s.scene.fps,
            split: s.split,
            gt_depth: Some(rel("depth")),
            depth_scale: Some(DEPTH_SCALE),
            gt_trajectory: Some(rel("poses.txt")),
        });
    }
    let manifest = DatasetManifest {
        name: name.to_string(),
        sequences: entries,
    };
    manifest.save(&out.join("manifest.toml"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, PreprocessConfig};
    use crate::priors::PriorSet;

    #[test]
    fn written_dataset_loads() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SceneSpec::tube_flythrough(5, 16, 0.05, 2);
        let seqs = [SequenceSpec {
            name: "tube".into(),
            split: Split::Train,
            scene: scene.clone(),
        }];
        write_dataset("toy", &seqs, dir.path()).unwrap();
        let ds = Dataset::open(
            &dir.path().join("manifest.toml"),
            PreprocessConfig { height: 16, width: 16 },
            PriorSet::default(),
        )
        .unwrap();
        let samples = ds.samples(Some(Split::Train), 1, 1).unwrap();
        assert_eq!(samples.len(), 3);
        let item = ds.sample(&samples[0]).unwrap();
        let rendered = render_sequence(&scene).unwrap();
        let (d, valid) = item.target.depth.clone().unwrap();
        assert!(valid.iter().all(|&v| v));
        let max_err = d
            .data()
            .iter()
            .zip(rendered.depth[1].data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 0.5 / DEPTH_SCALE + 1e-12);
        let gt = item.gt_motion.unwrap();
        let want = rendered.trajectory.relative(0, 1);
        assert!(gt[0].max_matrix_diff(&want) < 1e-6);
    }
}
