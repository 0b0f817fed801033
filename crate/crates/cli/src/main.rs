//! `endodepth` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod commands;
mod config;
mod plot;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use commands::*;
use config::{dump, resolve, UsageError};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use toml::Value;

#[derive(Parser)]
#[command(name = "endodepth", version, about = "Self-supervised endoscopic depth and pose with luminance and edge priors")]
struct Cli {
    /// Default output root; each subcommand writes to <root>/<subcommand> unless --out is given.
    #[arg(long, global = true, env = "ENDODEPTH_OUT", default_value = "runs")]
    out_root: PathBuf,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML file with this subcommand's configuration (see effective-config.toml of any run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set plan.epochs=3 (repeatable, applied last).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// Dataset manifest (TOML).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Square network input size in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Learned luminance prior checkpoint; the hand-crafted fallback otherwise.
    #[arg(long)]
    luminance_prior: Option<PathBuf>,
    /// Learned edge prior checkpoint; the hand-crafted fallback otherwise.
    #[arg(long)]
    edge_prior: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with exact depth and poses.
    SynthGen {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        geometry: Option<SynthGeometry>,
        /// Frames per sequence.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Write a manifest for a directory of extracted frame sequences.
    MakeManifest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        root: Option<PathBuf>,
        /// Manifest path (default <root>/manifest.toml).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Shared intrinsics file for sequences without their own.
        #[arg(long)]
        intrinsics: Option<PathBuf>,
        #[arg(long)]
        fps: Option<f64>,
        /// Split for sequences not named by --val or --test.
        #[arg(long)]
        split: Option<String>,
        #[arg(long, value_delimiter = ',')]
        val: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        test: Vec<String>,
    },
    /// Run one training stage (1, 2, 2-supervised or 3).
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        stage: Option<String>,
        /// Prior configuration, e.g. DLPE.
        #[arg(long)]
        ablation: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Frame interval k of the source pair {t-k, t+k}.
        #[arg(long)]
        interval: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// Starting weights (stage-2 checkpoint for stage 3).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Epoch checkpoint of an interrupted run of the same stage.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Depth metrics of a checkpoint on a dataset split.
    EvalDepth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// train, val, test or all.
        #[arg(long)]
        split: Option<String>,
        /// median or none.
        #[arg(long)]
        scaling: Option<String>,
        #[arg(long)]
        save_predictions: bool,
    },
    /// ATE/RTE/ROT of a TUM trajectory pair, or of a checkpoint on a dataset.
    EvalPose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        est: Option<PathBuf>,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        split: Option<String>,
        /// similarity or rigid.
        #[arg(long)]
        align: Option<String>,
        /// Pose offset for relative errors.
        #[arg(long)]
        step: Option<usize>,
    },
    /// Train and evaluate a set of prior configurations or edge-loss modes.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated configurations, e.g. baseline,DLPE,DLPL.
        #[arg(long, value_delimiter = ',')]
        configs: Vec<String>,
        /// Compare edge-loss placement (none, joint, pose-only) instead.
        #[arg(long)]
        edge_modes: bool,
        /// Epochs for every stage of the suite.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Render trajectories, depth maps or reports to PNG.
    Plot {
        #[command(flatten)]
        common: Common,
        /// TUM trajectory (repeatable).
        #[arg(long = "trajectory")]
        trajectories: Vec<PathBuf>,
        /// Reference trajectory to overlay after alignment.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// 16-bit depth PNG (repeatable).
        #[arg(long)]
        depth: Vec<PathBuf>,
        /// Fixed colour range as lo,hi.
        #[arg(long, value_delimiter = ',')]
        depth_range: Vec<f64>,
        /// Metrics report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        metric: Option<String>,
    },
}

fn s(v: impl Into<String>) -> Value {
    Value::String(v.into())
}

fn p(v: &Path) -> Value {
    s(v.to_string_lossy())
}

struct Flags(Vec<(String, Value)>);

impl Flags {
    fn new() -> Self {
        Flags(Vec::new())
    }

    fn opt<T>(&mut self, key: &str, v: &Option<T>, f: impl Fn(&T) -> Value) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key.to_string(), f(v)));
        }
        self
    }

    fn list(&mut self, key: &str, v: &[String]) -> &mut Self {
        if !v.is_empty() {
            self.0.push((key.into(), Value::Array(v.iter().cloned().map(Value::String).collect())));
        }
        self
    }

    fn common(&mut self, c: &Common, seed_keys: &[&str]) -> &mut Self {
        self.opt("out", &c.out, |v| p(v));
        for k in seed_keys {
            self.opt(k, &c.seed, |v| Value::Integer(*v as i64));
        }
        self
    }

    fn data(&mut self, d: &DataArgs) -> &mut Self {
        self.opt("data.manifest", &d.manifest, |v| p(v))
            .opt("data.size", &d.size, |v| Value::Integer(*v as i64))
            .opt("data.luminance_prior", &d.luminance_prior, |v| p(v))
            .opt("data.edge_prior", &d.edge_prior, |v| p(v))
    }
}

fn int(v: &usize) -> Value {
    Value::Integer(*v as i64)
}

trait Resolved: Serialize + DeserializeOwned + Default {
    fn out_mut(&mut self) -> &mut Option<PathBuf>;
    fn absolutize_paths(&mut self);
}

macro_rules! resolved {
    ($($t:ty),*) => {$(
        impl Resolved for $t {
            fn out_mut(&mut self) -> &mut Option<PathBuf> {
                &mut self.out
            }
            fn absolutize_paths(&mut self) {
                self.absolutize();
            }
        }
    )*};
}

resolved!(SynthConfig, ManifestConfig, TrainConfig, EvalDepthConfig, EvalPoseConfig, AblateConfig, PlotConfig);

/// Resolve, fix the output directory, dump the effective config and run.
fn execute<T: Resolved>(
    name: &str,
    common: &Common,
    flags: Flags,
    root: &Path,
    run: impl FnOnce(&T, &Path) -> Result<()>,
) -> Result<()> {
    let mut cfg: T = resolve(common.config.as_deref(), flags.0, &common.overrides)?;
    if cfg.out_mut().is_none() {
        *cfg.out_mut() = Some(root.join(name));
    }
    cfg.absolutize_paths();
    let out = cfg.out_mut().clone().expect("set above");
    dump(&out, name, &cfg)?;
    run(&cfg, &out)
}

fn dispatch(cli: Cli) -> Result<()> {
    let root = cli.out_root;
    match cli.command {
        Command::SynthGen {
            common,
            geometry,
            frames,
            size,
        } => {
            let mut f = Flags::new();
            f.common(&common, &["seed"])
                .opt("geometry", &geometry, |g| s(format!("{g:?}").to_lowercase()))
                .opt("frames", &frames, int)
                .opt("size", &size, int);
            execute::<SynthConfig>("synth-gen", &common, f, &root, synth_gen)
        }
        Command::MakeManifest {
            common,
            root: data_root,
            manifest,
            intrinsics,
            fps,
            split,
            val,
            test,
        } => {
            let mut f = Flags::new();
            f.common(&common, &[])
                .opt("root", &data_root, |v| p(v))
                .opt("manifest", &manifest, |v| p(v))
                .opt("intrinsics", &intrinsics, |v| p(v))
                .opt("fps", &fps, |v| Value::Float(*v))
                .opt("split", &split, |v| s(v.clone()))
                .list("val", &val)
                .list("test", &test);
            execute::<ManifestConfig>("make-manifest", &common, f, &root, |c, _| make_manifest(c).map(|_| ()))
        }
        Command::Train {
            common,
            data,
            stage,
            ablation,
            epochs,
            interval,
            stride,
            init,
            resume,
        } => {
            let mut f = Flags::new();
            f.common(&common, &["plan.seed"])
                .data(&data)
                .opt("plan.stage", &stage, |v| s(v.clone()))
                .opt("plan.ablation", &ablation, |v| s(v.clone()))
                .opt("plan.epochs", &epochs, int)
                .opt("plan.interval", &interval, int)
                .opt("plan.stride", &stride, int)
                .opt("init_checkpoint", &init, |v| p(v))
                .opt("resume", &resume, |v| p(v));
            execute::<TrainConfig>("train", &common, f, &root, train)
        }
        Command::EvalDepth {
            common,
            data,
            checkpoint,
            split,
            scaling,
            save_predictions,
        } => {
            let mut f = Flags::new();
            f.common(&common, &[])
                .data(&data)
                .opt("checkpoint", &checkpoint, |v| p(v))
                .opt("split", &split, |v| s(v.clone()))
                .opt("depth.scaling", &scaling, |v| s(v.clone()))
                .opt("save_predictions", &save_predictions.then_some(true), |v| Value::Boolean(*v));
            execute::<EvalDepthConfig>("eval-depth", &common, f, &root, eval_depth)
        }
        Command::EvalPose {
            common,
            data,
            est,
            reference,
            checkpoint,
            split,
            align,
            step,
        } => {
            let mut f = Flags::new();
            f.common(&common, &[])
                .data(&data)
                .opt("est", &est, |v| p(v))
                .opt("reference", &reference, |v| p(v))
                .opt("checkpoint", &checkpoint, |v| p(v))
                .opt("split", &split, |v| s(v.clone()))
                .opt("alignment", &align, |v| s(v.clone()))
                .opt("step", &step, int);
            execute::<EvalPoseConfig>("eval-pose", &common, f, &root, eval_pose)
        }
        Command::Ablate {
            common,
            data,
            configs,
            edge_modes,
            epochs,
        } => {
            let mut f = Flags::new();
            f.common(&common, &["plan.seed", "stage3.seed"])
                .data(&data)
                .list("configs", &configs)
                .opt("suite", &edge_modes.then_some("edge-modes"), |v| s(*v))
                .opt("plan.epochs", &epochs, int)
                .opt("stage3.epochs", &epochs, int);
            execute::<AblateConfig>("ablate", &common, f, &root, ablate)
        }
        Command::Plot {
            common,
            trajectories,
            reference,
            depth,
            depth_range,
            report,
            metric,
        } => {
            let paths = |v: &[PathBuf]| v.iter().map(|x| x.to_string_lossy().into_owned()).collect::<Vec<_>>();
            let mut f = Flags::new();
            f.common(&common, &[])
                .list("trajectories", &paths(&trajectories))
                .opt("reference", &reference, |v| p(v))
                .list("depth", &paths(&depth))
                .opt("report", &report, |v| p(v))
                .opt("metric", &metric, |v| s(v.clone()));
            if !depth_range.is_empty() && depth_range.len() != 2 {
                return Err(config::usage("--depth-range takes exactly two values: lo,hi"));
            }
            if !depth_range.is_empty() {
                f.0.push(("depth_range".into(), Value::Array(depth_range.iter().map(|v| Value::Float(*v)).collect())));
            }
            execute::<PlotConfig>("plot", &common, f, &root, plot)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
