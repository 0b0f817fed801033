use super::batch::Batch;
use super::models::Models;
use super::plan::StagePlan;
use crate::error::{Error, Result};
use crate::geometry::warp::warp_var;
use crate::geometry::CameraIntrinsics;
use crate::losses::{
    stage2_loss, stage3_loss, supervised_depth_loss_var, EdgeScaleInputs, LossOutput, ScaleInputs, Stage2Inputs,
    TermValue,
};
use crate::networks::{disp_to_depth_var, Binder, Mode, NUM_SCALES};
use endodepth_tensor::{Tape, Tensor};
use std::collections::BTreeMap;

/// Full objective of `plan` on one batch; the binders decide which network
/// receives gradients.
pub fn batch_loss<'t>(
    tape: &'t Tape,
    depth_b: &Binder<'t, '_>,
    pose_b: &Binder<'t, '_>,
    models: &Models,
    batch: &Batch,
    plan: &StagePlan,
) -> Result<LossOutput<'t>> {
    let ts = batch.target.shape();
    let disps = models.depth.forward(depth_b, tape.constant(batch.depth_input.clone()))?;
    let motions = batch
        .pose_inputs
        .iter()
        .map(|x| models.pose.forward(pose_b, tape.constant(x.clone())))
        .collect::<Result<Vec<_>>>()?;
    let sources: Vec<_> = batch.sources.iter().map(|s| tape.constant(s.clone())).collect();
    let (lo, hi) = (models.depth.spec.min_depth, models.depth.spec.max_depth);

    let mut scales = Vec::with_capacity(NUM_SCALES);
    let mut full_depths = Vec::with_capacity(NUM_SCALES);
    for (s, &disp) in disps.iter().enumerate() {
        let depth = disp_to_depth_var(disp.resize_bilinear(ts.h, ts.w), lo, hi);
        let warped = sources
            .iter()
            .zip(&motions)
            .map(|(&src, &m)| Ok(warp_var(src, depth, m, &batch.intrinsics)?.image))
            .collect::<Result<Vec<_>>>()?;
        scales.push(ScaleInputs {
            disp,
            image: tape.constant(batch.target_pyramid[s].clone()),
            warped,
        });
        full_depths.push(depth);
    }
    let inputs = Stage2Inputs {
        target: tape.constant(batch.target.clone()),
        scales,
        sources: sources.clone(),
    };

    let mut out = if plan.uses_edge_loss() {
        let mut edges = Vec::with_capacity(NUM_SCALES);
        for (s, &disp) in disps.iter().enumerate() {
            let ks = batch
                .intrinsics
                .iter()
                .map(|k| k.scaled(s))
                .collect::<Result<Vec<CameraIntrinsics>>>()?;
            let depth = disp_to_depth_var(disp, lo, hi);
            let warped = batch
                .source_edges
                .iter()
                .zip(&motions)
                .map(|(e, &m)| warp_var(tape.constant(e[s].clone()), depth, m, &ks))
                .collect::<Result<Vec<_>>>()?;
            edges.push(EdgeScaleInputs {
                target: tape.constant(batch.target_edges[s].clone()),
                warped,
            });
        }
        stage3_loss(tape, &inputs, &edges, &plan.weights, &plan.options)?
    } else {
        stage2_loss(&inputs, &plan.weights, &plan.options)?
    };

    if plan.uses_supervision() {
        let (gt, mask) = batch
            .gt_depth
            .as_ref()
            .ok_or_else(|| Error::Prerequisite("supervised training needs ground-truth depth for every frame".into()))?;
        let mut sup = tape.constant(Tensor::scalar(0.0));
        for (s, &d) in full_depths.iter().enumerate() {
            let l = supervised_depth_loss_var(d, gt, mask)?;
            out.terms.push(TermValue::new(Some(s), "supervised", l.item()));
            sup = sup.add(l);
        }
        out.terms.push(TermValue::new(None, "supervised", sup.item()));
        out.total = out.total.add(sup.scale(plan.weights.lambda_sup));
    }
    out.terms.push(TermValue::new(None, "total", out.total.item()));
    Ok(out)
}

/// Gradients and normalisation statistics produced by one training step.
pub struct StepResult {
    pub loss: f64,
    pub terms: Vec<TermValue>,
    pub warnings: Vec<String>,
    pub depth_grads: BTreeMap<String, Tensor>,
    pub pose_grads: BTreeMap<String, Tensor>,
    pub depth_stats: Vec<(String, endodepth_tensor::ops::BatchStats)>,
    pub pose_stats: Vec<(String, endodepth_tensor::ops::BatchStats)>,
}

/// Forward and backward pass; the parameters are left untouched.
pub fn train_step(models: &Models, batch: &Batch, plan: &StagePlan) -> Result<StepResult> {
    let tape = Tape::new();
    let depth_mode = if models.depth.is_frozen() { Mode::Eval } else { Mode::Train };
    let pose_mode = if models.pose.is_frozen() { Mode::Eval } else { Mode::Train };
    let db = models.depth.binder(&tape, depth_mode);
    let pb = models.pose.binder(&tape, pose_mode);
    let out = batch_loss(&tape, &db, &pb, models, batch, plan)?;
    let loss = out.value();
    if !loss.is_finite() {
        return Ok(StepResult {
            loss,
            terms: out.terms,
            warnings: out.warnings,
            depth_grads: BTreeMap::new(),
            pose_grads: BTreeMap::new(),
            depth_stats: Vec::new(),
            pose_stats: Vec::new(),
        });
    }
    let grads = tape.backward(out.total);
    let keep = |frozen: bool, g: BTreeMap<String, Tensor>| if frozen { BTreeMap::new() } else { g };
    Ok(StepResult {
        loss,
        depth_grads: keep(models.depth.is_frozen(), db.gradients(&grads)),
        pose_grads: keep(models.pose.is_frozen(), pb.gradients(&grads)),
        depth_stats: if models.depth.is_frozen() { Vec::new() } else { db.take_batch_stats() },
        pose_stats: if models.pose.is_frozen() { Vec::new() } else { pb.take_batch_stats() },
        terms: out.terms,
        warnings: out.warnings,
    })
}

/// Objective without gradients, both networks in evaluation mode.
pub fn eval_loss(models: &Models, batch: &Batch, plan: &StagePlan) -> Result<(f64, Vec<TermValue>)> {
    let tape = Tape::new();
    let db = Binder::new(&tape, &models.depth.params, false, Mode::Eval);
    let pb = Binder::new(&tape, &models.pose.params, false, Mode::Eval);
    let out = batch_loss(&tape, &db, &pb, models, batch, plan)?;
    Ok((out.value(), out.terms))
}
