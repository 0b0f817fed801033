//! Subcommand configurations and their execution.

use crate::config::{absolutize, absolutize_opt, usage};
use crate::plot as render;
use anyhow::{Context, Result};
use endodepth::data::{list_frames, save_gt_depth, Dataset, DatasetManifest, PreprocessConfig, SequenceEntry, Split};
use endodepth::evaluation::{pose_metrics, AlignMode, DepthEvalConfig, MetricsRow, MetricsTable};
use endodepth::geometry::RigidMotion;
use endodepth::priors::{AblationConfig, PriorSet};
use endodepth::synth::{write_dataset, SceneSpec, SequenceSpec, TrajectoryScript, DEPTH_SCALE};
use endodepth::training::{
    evaluate_depth, evaluate_pose_sequences, load_models, mean_pose, predict_depths, predict_trajectory,
    run_ablation_suite, run_edge_mode_suite, run_stage, EdgeMode, RunOptions, StageId, StagePlan, SuiteEval,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSel {
    Train,
    Val,
    #[default]
    Test,
    All,
}

impl SplitSel {
    pub fn split(self) -> Option<Split> {
        match self {
            SplitSel::Train => Some(Split::Train),
            SplitSel::Val => Some(Split::Val),
            SplitSel::Test => Some(Split::Test),
            SplitSel::All => None,
        }
    }
}

/// Dataset access shared by every subcommand that reads a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: PathBuf,
    /// Square network input resolution.
    pub size: usize,
    pub luminance_prior: Option<PathBuf>,
    pub edge_prior: Option<PathBuf>,
    /// Cache prior maps as 8-bit images under `<out>/prior-cache`.
    pub cache_priors: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            size: PreprocessConfig::default().width,
            luminance_prior: None,
            edge_prior: None,
            cache_priors: false,
        }
    }
}

impl DataConfig {
    fn absolutize(&mut self) {
        absolutize(&mut self.manifest);
        absolutize_opt(&mut self.luminance_prior);
        absolutize_opt(&mut self.edge_prior);
    }

    pub fn open(&self, out: &Path) -> Result<Dataset> {
        if self.manifest.as_os_str().is_empty() {
            return Err(usage("a dataset manifest is required (--manifest or data.manifest)"));
        }
        let priors = PriorSet::from_checkpoints(self.luminance_prior.as_deref(), self.edge_prior.as_deref())?;
        let pre = PreprocessConfig {
            height: self.size,
            width: self.size,
        };
        let ds = Dataset::open(&self.manifest, pre, priors)?;
        Ok(if self.cache_priors { ds.with_prior_cache(&out.join("prior-cache")) } else { ds })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SynthGeometry {
    #[default]
    Tube,
    Plane,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub name: String,
    pub geometry: SynthGeometry,
    pub frames: usize,
    pub size: usize,
    /// Forward motion per frame inside the tube, in tube radii.
    pub forward_step: f64,
    /// Lateral drift per frame in front of the plane.
    pub plane_step: f64,
    pub plane_distance: f64,
    pub supersample: usize,
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub out: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            geometry: SynthGeometry::Tube,
            frames: 60,
            size: 64,
            forward_step: 0.05,
            plane_step: 0.02,
            plane_distance: 2.0,
            supersample: 2,
            seed: 0,
            train: 1,
            val: 1,
            test: 1,
            out: None,
        }
    }
}

pub fn synth_gen(cfg: &SynthConfig, out: &Path) -> Result<()> {
    let mut sequences = Vec::new();
    for (split, count) in [(Split::Train, cfg.train), (Split::Val, cfg.val), (Split::Test, cfg.test)] {
        for i in 0..count {
            let seed = cfg.seed + sequences.len() as u64;
            let mut scene = match cfg.geometry {
                SynthGeometry::Tube => SceneSpec::tube_flythrough(cfg.frames, cfg.size, cfg.forward_step, seed),
                SynthGeometry::Plane => {
                    let mut s = SceneSpec::textured_plane(cfg.frames, cfg.size, cfg.plane_distance, seed);
                    s.trajectory = TrajectoryScript::ConstantVelocity {
                        start: RigidMotion::identity(),
                        step: RigidMotion::from_translation([cfg.plane_step, 0.0, 0.0]),
                    };
                    s
                }
            };
            scene.supersample = cfg.supersample;
            sequences.push(SequenceSpec {
                name: format!("{split}{i:02}"),
                split,
                scene,
            });
        }
    }
    if sequences.is_empty() {
        return Err(usage("no sequences requested (train, val and test are all 0)"));
    }
    write_dataset(&cfg.name, &sequences, out)?;
    println!("wrote {} sequences to {}", sequences.len(), out.join("manifest.toml").display());
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestConfig {
    /// Directory holding one sub-directory per sequence, each with
    /// `frames/` and optionally `intrinsics.txt`, `depth/` and `poses.txt`.
    pub root: PathBuf,
    pub name: Option<String>,
    /// Defaults to `<root>/manifest.toml`.
    pub manifest: Option<PathBuf>,
    /// Used for sequences without their own `intrinsics.txt`.
    pub intrinsics: Option<PathBuf>,
    pub fps: f64,
    pub depth_scale: f64,
    /// Split of sequences not listed in `val` or `test`.
    pub split: Split,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub out: Option<PathBuf>,
}

impl Default for ManifestConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::new(),
            name: None,
            manifest: None,
            intrinsics: None,
            fps: 25.0,
            depth_scale: DEPTH_SCALE,
            split: Split::Train,
            val: Vec::new(),
            test: Vec::new(),
            out: None,
        }
    }
}

pub fn make_manifest(cfg: &ManifestConfig) -> Result<PathBuf> {
    if cfg.root.as_os_str().is_empty() {
        return Err(usage("--root is required"));
    }
    let target = cfg.manifest.clone().unwrap_or_else(|| cfg.root.join("manifest.toml"));
    let base = target.parent().unwrap_or(Path::new("."));
    let rel = |p: PathBuf| p.strip_prefix(base).map(Path::to_path_buf).unwrap_or(p);
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&cfg.root)
        .with_context(|| format!("listing {}", cfg.root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("frames").is_dir())
        .collect();
    dirs.sort();
    let mut sequences = Vec::new();
    for dir in dirs {
        let name = dir.file_name().expect("read_dir entry").to_string_lossy().into_owned();
        let frames = dir.join("frames");
        if list_frames(&frames)?.is_empty() {
            log::warn!("skipping {}: no frames", dir.display());
            continue;
        }
        let intrinsics = match (dir.join("intrinsics.txt"), &cfg.intrinsics) {
            (p, _) if p.is_file() => p,
            (_, Some(shared)) => shared.clone(),
            _ => anyhow::bail!("{}: no intrinsics.txt and no shared intrinsics file given", dir.display()),
        };
        let depth = dir.join("depth");
        let has_depth = depth.is_dir();
        let poses = dir.join("poses.txt");
        let split = if cfg.test.contains(&name) {
            Split::Test
        } else if cfg.val.contains(&name) {
            Split::Val
        } else {
            cfg.split
        };
        sequences.push(SequenceEntry {
            name,
            frames: rel(frames),
            intrinsics: rel(intrinsics),
            fps: cfg.fps,
            split,
            gt_depth: has_depth.then(|| rel(depth)),
            depth_scale: has_depth.then_some(cfg.depth_scale),
            gt_trajectory: poses.is_file().then(|| rel(poses)),
        });
    }
    for listed in cfg.val.iter().chain(&cfg.test) {
        if !sequences.iter().any(|s| &s.name == listed) {
            return Err(usage(format!("sequence {listed:?} named in val/test was not found under the root")));
        }
    }
    if sequences.is_empty() {
        anyhow::bail!("no sequence directories with frames under {}", cfg.root.display());
    }
    let name = cfg.name.clone().unwrap_or_else(|| {
        cfg.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    let manifest = DatasetManifest { name, sequences };
    DatasetManifest::parse(&manifest.to_toml()?, &target)?;
    manifest.save(&target)?;
    println!("wrote {} ({} sequences)", target.display(), manifest.sequences.len());
    Ok(target)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub data: DataConfig,
    pub init_checkpoint: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub plan: StagePlan,
    pub out: Option<PathBuf>,
}

pub fn train(cfg: &TrainConfig, out: &Path) -> Result<()> {
    cfg.plan.validate_plan().map_err(|e| usage(e.to_string()))?;
    let ds = cfg.data.open(out)?;
    let opts = RunOptions {
        out_dir: out.to_path_buf(),
        init_checkpoint: cfg.init_checkpoint.clone(),
        resume: cfg.resume.clone(),
    };
    let outcome = run_stage(&cfg.plan, &ds, &opts)?;
    if let Some(p) = &outcome.priors {
        println!("priors: luminance {:?}, edges {:?}, {} frames ({})", p.luminance, p.edges, p.frames, p.cache_key);
    }
    for e in &outcome.epochs {
        let val = e.val_loss.map(|v| format!("{v:.6}")).unwrap_or_else(|| "--".into());
        println!(
            "epoch {:>3}  lr {:.1e}  train {:.6}  val {val}  steps {}",
            e.epoch, e.learning_rate, e.train_loss, e.steps
        );
    }
    if let Some(c) = &outcome.final_checkpoint {
        println!("final checkpoint {}", c.display());
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalDepthConfig {
    pub data: DataConfig,
    pub checkpoint: PathBuf,
    pub split: SplitSel,
    pub depth: DepthEvalConfig,
    /// Also write predicted depth maps as 16-bit PNGs.
    pub save_predictions: bool,
    pub out: Option<PathBuf>,
}

fn label_of(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn finish_table(table: &MetricsTable, stem: &Path) -> Result<()> {
    table.write(stem)?;
    print!("{}", table.to_text());
    println!("report written to {}.{{tsv,json}}", stem.display());
    Ok(())
}

pub fn eval_depth(cfg: &EvalDepthConfig, out: &Path) -> Result<()> {
    if cfg.checkpoint.as_os_str().is_empty() {
        return Err(usage("--checkpoint is required"));
    }
    let models = load_models(&cfg.checkpoint)?;
    let ds = cfg.data.open(out)?;
    let report = evaluate_depth(&models, &ds, cfg.split.split(), &cfg.depth)?;
    if cfg.save_predictions {
        for seq in ds.sequence_indices(cfg.split.split()) {
            let s = &ds.sequences[seq];
            let dir = out.join("predictions").join(&s.entry.name);
            std::fs::create_dir_all(&dir)?;
            let frames: Vec<usize> = (0..s.len()).collect();
            for (i, d) in predict_depths(&models, &ds, seq, &frames)?.iter().enumerate() {
                save_gt_depth(&dir.join(format!("{i:06}.png")), d, DEPTH_SCALE)?;
            }
        }
    }
    let mut table = MetricsTable::new(format!("depth evaluation ({:?} split)", cfg.split));
    table.rows.push(MetricsRow::ok(label_of(&cfg.checkpoint), Some(report), None));
    finish_table(&table, &out.join("depth-report"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalPoseConfig {
    /// TUM trajectory pair; when absent, `checkpoint` and `data` are used.
    pub est: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub data: DataConfig,
    pub split: SplitSel,
    pub alignment: AlignMode,
    pub step: usize,
    pub out: Option<PathBuf>,
}

impl Default for EvalPoseConfig {
    fn default() -> Self {
        Self {
            est: None,
            reference: None,
            checkpoint: None,
            data: DataConfig::default(),
            split: SplitSel::Test,
            alignment: AlignMode::Similarity,
            step: 1,
            out: None,
        }
    }
}

pub fn eval_pose(cfg: &EvalPoseConfig, out: &Path) -> Result<()> {
    let mut table = MetricsTable::new(format!("pose evaluation ({} alignment, step {})", cfg.alignment, cfg.step));
    match (&cfg.est, &cfg.reference, &cfg.checkpoint) {
        (Some(est), Some(reference), None) => {
            let e = endodepth::data::load_tum(est)?;
            let r = endodepth::data::load_tum(reference)?;
            let m = pose_metrics(&e, &r, cfg.alignment, cfg.step)?;
            if m.low_confidence {
                log::warn!("alignment is low-confidence (fewer than three or collinear positions)");
            }
            table.rows.push(MetricsRow::ok(label_of(est), None, Some(m)));
        }
        (None, None, Some(ck)) => {
            let models = load_models(ck)?;
            let ds = cfg.data.open(out)?;
            let traj_dir = out.join("trajectories");
            std::fs::create_dir_all(&traj_dir)?;
            for seq in ds.sequence_indices(cfg.split.split()) {
                let traj = predict_trajectory(&models, &ds, seq)?;
                endodepth::data::save_tum(&traj_dir.join(format!("{}.txt", ds.sequences[seq].entry.name)), &traj)?;
            }
            let per = evaluate_pose_sequences(&models, &ds, cfg.split.split(), cfg.alignment, cfg.step)?;
            let mean = mean_pose(per.iter().map(|(_, r)| r));
            for (name, r) in per {
                table.rows.push(MetricsRow::ok(name, None, Some(r)));
            }
            match mean {
                Some(m) => table.rows.push(MetricsRow::ok("mean", None, Some(m))),
                None => anyhow::bail!("no sequence in the split has a ground-truth trajectory"),
            }
        }
        _ => return Err(usage("give either --est and --ref, or --checkpoint with --manifest")),
    }
    finish_table(&table, &out.join("pose-report"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    /// One stage-2 run per prior configuration.
    #[default]
    Configs,
    /// Edge-loss placement for the first configuration.
    EdgeModes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub data: DataConfig,
    pub suite: SuiteKind,
    pub configs: Vec<AblationConfig>,
    pub modes: Vec<EdgeMode>,
    pub plan: StagePlan,
    /// Pose-refinement plan used by the `pose-only` edge mode.
    pub stage3: StagePlan,
    pub eval: SuiteEval,
    pub out: Option<PathBuf>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            suite: SuiteKind::Configs,
            configs: AblationConfig::all().to_vec(),
            modes: vec![EdgeMode::None, EdgeMode::Joint, EdgeMode::PoseOnly],
            plan: StagePlan::for_stage(StageId::Joint),
            stage3: StagePlan::for_stage(StageId::PoseRefine),
            eval: SuiteEval::default(),
            out: None,
        }
    }
}

pub fn ablate(cfg: &AblateConfig, out: &Path) -> Result<()> {
    if cfg.configs.is_empty() {
        return Err(usage("no configurations to run"));
    }
    let ds = cfg.data.open(out)?;
    let table = match cfg.suite {
        SuiteKind::Configs => run_ablation_suite(&cfg.configs, &cfg.plan, &ds, out, &cfg.eval),
        SuiteKind::EdgeModes => {
            if cfg.configs.len() > 1 {
                log::warn!("edge-mode suite uses only the first configuration ({})", cfg.configs[0]);
            }
            run_edge_mode_suite(cfg.configs[0], &cfg.modes, &cfg.plan, &cfg.stage3, &ds, out, &cfg.eval)
        }
    };
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} rows failed", table.rows.len());
    }
    finish_table(&table, &out.join("ablation-report"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// TUM trajectories, one image each.
    pub trajectories: Vec<PathBuf>,
    /// When set, every trajectory is aligned to it and overlaid.
    pub reference: Option<PathBuf>,
    /// 16-bit depth PNGs rendered with a fixed colour scale.
    pub depth: Vec<PathBuf>,
    pub depth_scale: f64,
    /// Colour-scale range; defaults to the range of each map.
    pub depth_range: Option<[f64; 2]>,
    /// Metrics report JSON rendered as a bar chart of `metric`.
    pub report: Option<PathBuf>,
    pub metric: String,
    pub width: u32,
    pub height: u32,
    pub out: Option<PathBuf>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            trajectories: Vec::new(),
            reference: None,
            depth: Vec::new(),
            depth_scale: DEPTH_SCALE,
            depth_range: None,
            report: None,
            metric: "AbsRel".into(),
            width: 800,
            height: 600,
            out: None,
        }
    }
}

pub fn plot(cfg: &PlotConfig, out: &Path) -> Result<()> {
    if cfg.trajectories.is_empty() && cfg.depth.is_empty() && cfg.report.is_none() {
        return Err(usage("nothing to plot: give --trajectory, --depth or --report"));
    }
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let reference = cfg.reference.as_deref().map(endodepth::data::load_tum).transpose()?;
    for t in &cfg.trajectories {
        let est = endodepth::data::load_tum(t)?;
        written.push(render::trajectory(&est, &label_of(t), reference.as_ref(), out, (cfg.width, cfg.height))?);
    }
    for d in &cfg.depth {
        let (grid, valid) = endodepth::data::load_gt_depth(d, cfg.depth_scale)?;
        written.push(render::depth_map(&grid, &valid, cfg.depth_range, &label_of(d), out)?);
    }
    if let Some(r) = &cfg.report {
        let table = MetricsTable::load_json(r)?;
        written.push(render::report(&table, &cfg.metric, &label_of(r), out, (cfg.width, cfg.height))?);
    }
    for w in written {
        println!("wrote {}", w.display());
    }
    Ok(())
}

macro_rules! absolutize_all {
    ($($ty:ty => [$($field:ident),*] [$($opt:ident),*] $(data $d:ident)?;)*) => {$(
        impl $ty {
            pub fn absolutize(&mut self) {
                $(absolutize(&mut self.$field);)*
                $(absolutize_opt(&mut self.$opt);)*
                $(self.$d.absolutize();)?
            }
        }
    )*};
}

absolutize_all! {
    SynthConfig => [] [out];
    ManifestConfig => [root] [manifest, intrinsics, out];
    TrainConfig => [] [init_checkpoint, resume, out] data data;
    EvalDepthConfig => [checkpoint] [out] data data;
    EvalPoseConfig => [] [est, reference, checkpoint, out] data data;
    AblateConfig => [] [out] data data;
}

impl PlotConfig {
    pub fn absolutize(&mut self) {
        self.trajectories.iter_mut().chain(self.depth.iter_mut()).for_each(absolutize);
        absolutize_opt(&mut self.reference);
        absolutize_opt(&mut self.report);
        absolutize_opt(&mut self.out);
    }
}
