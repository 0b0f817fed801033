use super::batch::Batch;
use super::models::Models;
use super::plan::{StageId, StagePlan};
use super::step::{eval_loss, train_step};
use crate::data::{epoch_order, Dataset, SampleIndex, Split};
use crate::error::{Error, Result};
use crate::losses::TermValue;
use crate::networks::Checkpoint;
use crate::priors::ProviderKind;
use endodepth_tensor::optim::Adam;
use endodepth_tensor::par;
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

const DEPTH_OPT: &str = "opt.depth.";
const POSE_OPT: &str = "opt.pose.";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Weights to start from; required for stage 3.
    pub init_checkpoint: Option<PathBuf>,
    /// Per-epoch checkpoint of an interrupted run of the same stage.
    pub resume: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            ..Default::default()
        }
    }
}

/// One line of the JSONL training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: usize,
    pub scale: Option<usize>,
    pub term: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub steps: usize,
    pub warnings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSummary {
    pub luminance: ProviderKind,
    pub edges: ProviderKind,
    pub cache_key: String,
    pub frames: usize,
}

#[derive(Clone, Debug)]
pub struct StageOutcome {
    pub stage: StageId,
    pub epochs: Vec<EpochRecord>,
    /// Validation loss of the starting weights.
    pub initial_val_loss: Option<f64>,
    pub final_checkpoint: Option<PathBuf>,
    pub models: Option<Models>,
    pub priors: Option<PriorSummary>,
    pub log_path: Option<PathBuf>,
}

pub fn final_checkpoint_path(out_dir: &Path, stage: StageId) -> PathBuf {
    out_dir.join(format!("stage-{stage}-final.ckpt"))
}

pub fn epoch_checkpoint_path(out_dir: &Path, stage: StageId, epoch: usize) -> PathBuf {
    out_dir.join("checkpoints").join(format!("stage-{stage}-epoch-{epoch:03}.ckpt"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn load_batch(dataset: &Dataset, indices: &[SampleIndex], plan: &StagePlan) -> Result<Batch> {
    let items = par::map_indices(indices.len(), |i| dataset.sample(&indices[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Batch::from_items(&items, plan.ablation)
}

fn batches(samples: &[SampleIndex], order: &[usize], size: usize) -> Vec<Vec<SampleIndex>> {
    order
        .chunks(size)
        .map(|c| c.iter().map(|&i| samples[i]).collect())
        .collect()
}

/// Mean objective over `samples` in fixed order, without gradients.
pub fn validation_loss(models: &Models, dataset: &Dataset, samples: &[SampleIndex], plan: &StagePlan) -> Result<f64> {
    let order: Vec<usize> = (0..samples.len()).collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for b in batches(samples, &order, plan.batch_size) {
        let (loss, _) = eval_loss(models, &load_batch(dataset, &b, plan)?, plan)?;
        sum += loss * b.len() as f64;
        count += b.len();
    }
    Ok(sum / count.max(1) as f64)
}

/// Stage 1: instantiate or verify the prior providers and populate the
/// prior cache for every frame.
pub fn prepare_priors(dataset: &Dataset, out_dir: &Path) -> Result<PriorSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let mut frames = 0;
    for (s, seq) in dataset.sequences.iter().enumerate() {
        for i in 0..seq.len() {
            dataset.frame(s, i)?;
            frames += 1;
        }
    }
    let summary = PriorSummary {
        luminance: dataset.priors.luminance.kind(),
        edges: dataset.priors.edges.kind(),
        cache_key: dataset.priors.cache_key(),
        frames,
    };
    write_json(&out_dir.join("stage-1-priors.json"), &summary)?;
    Ok(summary)
}

struct Start {
    models: Models,
    first_epoch: usize,
    depth_opt: Adam,
    pose_opt: Adam,
}

fn starting_point(plan: &StagePlan, opts: &RunOptions) -> Result<Start> {
    let fresh_opt = || Adam::new(plan.beta1, plan.beta2, plan.adam_eps);
    if let Some(path) = &opts.resume {
        let (models, ck) = Models::load(path)?;
        if ck.meta.stage.as_deref() != Some(plan.stage.as_str()) {
            return Err(Error::Config(format!(
                "cannot resume stage {} from {} (stage {:?})",
                plan.stage,
                path.display(),
                ck.meta.stage
            )));
        }
        return Ok(Start {
            models,
            first_epoch: ck.meta.epoch + 1,
            depth_opt: ck.adam(DEPTH_OPT).unwrap_or_else(fresh_opt),
            pose_opt: ck.adam(POSE_OPT).unwrap_or_else(fresh_opt),
        });
    }
    let models = match &opts.init_checkpoint {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Prerequisite(format!("checkpoint {} does not exist", path.display())));
            }
            let (models, ck) = Models::load(path)?;
            if plan.stage == StageId::PoseRefine
                && !matches!(ck.meta.stage.as_deref(), Some("2") | Some("2-supervised"))
            {
                return Err(Error::Prerequisite(format!(
                    "stage 3 needs a stage-2 checkpoint, {} is tagged {:?}",
                    path.display(),
                    ck.meta.stage
                )));
            }
            models
        }
        None if plan.stage == StageId::PoseRefine => {
            return Err(Error::Prerequisite("stage 3 needs a stage-2 checkpoint (none given)".into()));
        }
        None => Models::new(plan)?,
    };
    if models.ablation() != plan.ablation {
        return Err(Error::Config(format!(
            "checkpoint was trained for {}, plan asks for {}",
            models.ablation(),
            plan.ablation
        )));
    }
    Ok(Start {
        models,
        first_epoch: 1,
        depth_opt: fresh_opt(),
        pose_opt: fresh_opt(),
    })
}

fn apply_updates(opt: &mut Adam, store: &mut crate::networks::ParamStore, grads: &std::collections::BTreeMap<String, endodepth_tensor::Tensor>, lr: f64) {
    if grads.is_empty() {
        return;
    }
    opt.begin_step();
    for (name, g) in grads {
        let p = store.get_mut(name).expect("gradient for a stored parameter");
        opt.update(name, p, g, lr);
    }
}

fn dump_non_finite(out_dir: &Path, epoch: usize, step: u64, batch: &[SampleIndex], terms: &[TermValue]) -> String {
    #[derive(Serialize)]
    struct Dump<'a> {
        epoch: usize,
        step: u64,
        samples: Vec<(usize, usize, [usize; 2])>,
        terms: &'a [TermValue],
    }
    let path = out_dir.join(format!("nonfinite-epoch-{epoch:03}-step-{step}.json"));
    let dump = Dump {
        epoch,
        step,
        samples: batch.iter().map(|s| (s.sequence, s.target, s.sources)).collect(),
        terms,
    };
    match write_json(&path, &dump) {
        Ok(()) => path.display().to_string(),
        Err(e) => format!("dump failed: {e}"),
    }
}

/// Train one stage of `plan` on the train split of `dataset`.
pub fn run_stage(plan: &StagePlan, dataset: &Dataset, opts: &RunOptions) -> Result<StageOutcome> {
    plan.validate_plan()?;
    let out = &opts.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    if plan.stage == StageId::Priors {
        let priors = prepare_priors(dataset, out)?;
        return Ok(StageOutcome {
            stage: plan.stage,
            epochs: Vec::new(),
            initial_val_loss: None,
            final_checkpoint: None,
            models: None,
            priors: Some(priors),
            log_path: None,
        });
    }
    let Start {
        mut models,
        first_epoch,
        mut depth_opt,
        mut pose_opt,
    } = starting_point(plan, opts)?;
    if plan.depth_frozen() {
        models.depth.freeze();
    }
    let train = dataset.samples(Some(Split::Train), plan.interval, plan.stride)?;
    if train.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no training samples at interval {} in {}",
            plan.interval, dataset.manifest.name
        )));
    }
    let val = if plan.validate {
        dataset.samples(Some(Split::Val), plan.interval, plan.stride)?
    } else {
        Vec::new()
    };
    let initial_val_loss = if val.is_empty() || first_epoch > 1 {
        None
    } else {
        Some(validation_loss(&models, dataset, &val, plan)?)
    };

    let log_path = out.join(format!("stage-{}-log.jsonl", plan.stage));
    let log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(first_epoch > 1)
        .write(true)
        .truncate(first_epoch == 1)
        .open(&log_path)
        .map_err(|e| Error::io(format!("opening {}", log_path.display()), e))?;
    let mut log = BufWriter::new(log_file);
    let mut step = depth_opt.steps().max(pose_opt.steps());
    let mut epochs = Vec::new();
    let mut final_path = None;

    for epoch in first_epoch..=plan.epochs {
        let lr = plan.lr_at(epoch);
        let order = epoch_order(train.len(), plan.seed, epoch);
        let mut all = batches(&train, &order, plan.batch_size);
        if let Some(limit) = plan.max_steps_per_epoch {
            all.truncate(limit);
        }
        let (mut sum, mut count, mut warnings) = (0.0, 0usize, 0usize);
        for b in &all {
            let batch = load_batch(dataset, b, plan)?;
            let res = train_step(&models, &batch, plan)?;
            step += 1;
            if !res.loss.is_finite() {
                log.flush().ok();
                let dump = dump_non_finite(out, epoch, step, b, &res.terms);
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: step as usize,
                    dump,
                });
            }
            for t in &res.terms {
                let rec = LogRecord {
                    step,
                    epoch,
                    scale: t.scale,
                    term: t.term.clone(),
                    value: t.value,
                };
                let line = serde_json::to_string(&rec).map_err(|e| Error::InvalidInput(e.to_string()))?;
                writeln!(log, "{line}").map_err(|e| Error::io("writing training log", e))?;
            }
            apply_updates(&mut depth_opt, &mut models.depth.params, &res.depth_grads, lr);
            apply_updates(&mut pose_opt, &mut models.pose.params, &res.pose_grads, lr);
            models.depth.params.update_batch_stats(&res.depth_stats);
            models.pose.params.update_batch_stats(&res.pose_stats);
            warnings += res.warnings.len();
            sum += res.loss * b.len() as f64;
            count += b.len();
        }
        log.flush().map_err(|e| Error::io("writing training log", e))?;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(validation_loss(&models, dataset, &val, plan)?)
        };
        let rec = EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: sum / count.max(1) as f64,
            val_loss,
            steps: all.len(),
            warnings,
        };
        log::info!(
            "stage {} epoch {epoch}: train {:.6} val {:?} lr {lr:e}",
            plan.stage,
            rec.train_loss,
            rec.val_loss
        );
        epochs.push(rec);

        let mut ck = models.to_checkpoint(plan.stage, epoch, plan);
        ck.add_adam(DEPTH_OPT, &depth_opt);
        ck.add_adam(POSE_OPT, &pose_opt);
        if plan.checkpoint_every_epoch || epoch == plan.epochs {
            ck.save(&epoch_checkpoint_path(out, plan.stage, epoch))?;
        }
        if epoch == plan.epochs {
            let path = final_checkpoint_path(out, plan.stage);
            ck.save(&path)?;
            final_path = Some(path);
        }
    }
    write_json(&out.join(format!("stage-{}-epochs.json", plan.stage)), &epochs)?;
    Ok(StageOutcome {
        stage: plan.stage,
        epochs,
        initial_val_loss,
        final_checkpoint: final_path,
        models: Some(models),
        priors: None,
        log_path: Some(log_path),
    })
}

/// Read a JSONL training log back.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Load the models stored in a model checkpoint.
pub fn load_models(path: &Path) -> Result<Models> {
    let ck = Checkpoint::load(path)?;
    Models::from_checkpoint(&ck, path)
}
