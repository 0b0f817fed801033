use super::infer::{evaluate_depth, evaluate_pose};
use super::plan::{EdgeMode, StageId, StagePlan};
use super::run::{run_stage, RunOptions};
use crate::data::{Dataset, Split};
use crate::error::Result;
use crate::evaluation::{AlignMode, DepthEvalConfig, MetricsRow, MetricsTable};
use crate::priors::AblationConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// How suite rows are evaluated once trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteEval {
    /// `None` evaluates every sequence.
    pub split: Option<Split>,
    pub depth: DepthEvalConfig,
    pub alignment: AlignMode,
    pub pose_step: usize,
}

impl Default for SuiteEval {
    fn default() -> Self {
        Self {
            split: Some(Split::Test),
            depth: DepthEvalConfig::default(),
            alignment: AlignMode::default(),
            pose_step: 1,
        }
    }
}

fn evaluate_row(label: &str, ckpt: &Path, dataset: &Dataset, eval: &SuiteEval) -> Result<MetricsRow> {
    let models = super::run::load_models(ckpt)?;
    let depth = evaluate_depth(&models, dataset, eval.split, &eval.depth).ok();
    let pose = evaluate_pose(&models, dataset, eval.split, eval.alignment, eval.pose_step).ok();
    Ok(MetricsRow::ok(label, depth, pose))
}

fn train_to(plan: &StagePlan, dataset: &Dataset, out: PathBuf, init: Option<PathBuf>) -> Result<PathBuf> {
    let opts = RunOptions {
        out_dir: out,
        init_checkpoint: init,
        resume: None,
    };
    let outcome = run_stage(plan, dataset, &opts)?;
    Ok(outcome.final_checkpoint.expect("trained stages write a final checkpoint"))
}

fn record(table: &mut MetricsTable, label: &str, res: Result<MetricsRow>) {
    match res {
        Ok(row) => table.rows.push(row),
        Err(e) => {
            log::warn!("suite row {label} failed: {e}");
            table.rows.push(MetricsRow::failed(label, e.to_string()));
        }
    }
}

/// Train `template` (a stage-2 plan) once per configuration and evaluate
/// each result; a failing configuration yields a failed row.
pub fn run_ablation_suite(
    configs: &[AblationConfig],
    template: &StagePlan,
    dataset: &Dataset,
    out_dir: &Path,
    eval: &SuiteEval,
) -> MetricsTable {
    let mut table = MetricsTable::new("ablation");
    for &cfg in configs {
        let label = cfg.to_string();
        let plan = StagePlan {
            ablation: cfg,
            ..template.clone()
        };
        let res = train_to(&plan, dataset, out_dir.join(&label), None)
            .and_then(|ck| evaluate_row(&label, &ck, dataset, eval));
        record(&mut table, &label, res);
    }
    table
}

/// Edge-term placement study for one configuration: `none` trains stage 2
/// only, `joint` adds the edge term to stage 2 and `pose-only` refines the
/// `none` checkpoint with stage 3.
pub fn run_edge_mode_suite(
    cfg: AblationConfig,
    modes: &[EdgeMode],
    stage2: &StagePlan,
    stage3: &StagePlan,
    dataset: &Dataset,
    out_dir: &Path,
    eval: &SuiteEval,
) -> MetricsTable {
    let mut table = MetricsTable::new(format!("edge modes ({cfg})"));
    let base = StagePlan {
        ablation: cfg,
        edge_mode: EdgeMode::None,
        ..stage2.clone()
    };
    let mut none_ckpt: Option<Result<PathBuf>> = None;
    let baseline = |none_ckpt: &mut Option<Result<PathBuf>>| -> Result<PathBuf> {
        let r = none_ckpt.get_or_insert_with(|| train_to(&base, dataset, out_dir.join(format!("{cfg}-none")), None));
        match r {
            Ok(p) => Ok(p.clone()),
            Err(e) => Err(crate::error::Error::Prerequisite(format!("stage-2 baseline failed: {e}"))),
        }
    };
    for &mode in modes {
        let label = format!("{cfg}/{mode}");
        let res = match mode {
            EdgeMode::None => baseline(&mut none_ckpt),
            EdgeMode::Joint => {
                let plan = StagePlan {
                    ablation: cfg,
                    edge_mode: EdgeMode::Joint,
                    ..stage2.clone()
                };
                train_to(&plan, dataset, out_dir.join(format!("{cfg}-joint")), None)
            }
            EdgeMode::PoseOnly => baseline(&mut none_ckpt).and_then(|init| {
                let plan = StagePlan {
                    stage: StageId::PoseRefine,
                    ablation: cfg,
                    edge_mode: EdgeMode::PoseOnly,
                    ..stage3.clone()
                };
                train_to(&plan, dataset, out_dir.join(format!("{cfg}-pose-only")), Some(init))
            }),
        }
        .and_then(|ck| evaluate_row(&label, &ck, dataset, eval));
        record(&mut table, &label, res);
    }
    table
}
