use super::models::Models;
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::evaluation::{depth_metrics, pose_metrics, AlignMode, DepthEvalConfig, DepthMetricReport, PoseMetricReport};
use crate::geometry::{StampedPose, Trajectory};
use crate::image::ImageGrid;
use crate::priors::{assemble_depth_input, assemble_pose_input};

const INFER_BATCH: usize = 8;

/// Full-resolution depth for frames `frames` of sequence `seq`.
pub fn predict_depths(models: &Models, dataset: &Dataset, seq: usize, frames: &[usize]) -> Result<Vec<ImageGrid>> {
    let cfg = models.ablation();
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(INFER_BATCH) {
        let inputs = chunk
            .iter()
            .map(|&i| {
                let f = dataset.frame(seq, i)?;
                assemble_depth_input(&f.rgb, &f.priors, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&ImageGrid> = inputs.iter().collect();
        let disp = &models.depth.predict_tensor(&ImageGrid::batch(&refs))?[0];
        let (lo, hi) = (models.depth.spec.min_depth, models.depth.spec.max_depth);
        for n in 0..chunk.len() {
            out.push(ImageGrid::from_tensor(disp, n).map(|d| crate::networks::disp_to_depth(d, lo, hi)));
        }
    }
    Ok(out)
}

/// Mean per-frame depth metrics over every frame with ground truth in `split`.
pub fn evaluate_depth(
    models: &Models,
    dataset: &Dataset,
    split: Option<Split>,
    cfg: &DepthEvalConfig,
) -> Result<DepthMetricReport> {
    let mut reports = Vec::new();
    for seq in dataset.sequence_indices(split) {
        if dataset.sequences[seq].depth.is_none() {
            continue;
        }
        let frames: Vec<usize> = (0..dataset.sequences[seq].len()).collect();
        let preds = predict_depths(models, dataset, seq, &frames)?;
        for (i, pred) in preds.iter().enumerate() {
            let f = dataset.frame(seq, i)?;
            let (gt, mask) = f.depth.as_ref().expect("sequence has depth");
            reports.push(depth_metrics(pred.data(), gt.data(), mask, cfg)?);
        }
    }
    DepthMetricReport::mean(&reports)
        .ok_or_else(|| Error::InvalidInput("no frames with ground-truth depth to evaluate".into()))
}

/// Trajectory of sequence `seq` chained from consecutive-frame predictions,
/// stamped like the ground truth when one exists.
pub fn predict_trajectory(models: &Models, dataset: &Dataset, seq: usize) -> Result<Trajectory> {
    let cfg = models.ablation();
    let s = &dataset.sequences[seq];
    if s.len() < 2 {
        return Err(Error::InvalidInput(format!("sequence {} has fewer than 2 frames", s.entry.name)));
    }
    let pairs: Vec<usize> = (1..s.len()).collect();
    let mut rel = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(INFER_BATCH) {
        let inputs = chunk
            .iter()
            .map(|&t| {
                let (ft, fs) = (dataset.frame(seq, t)?, dataset.frame(seq, t - 1)?);
                assemble_pose_input(&ft.rgb, &ft.priors, &fs.rgb, &fs.priors, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&ImageGrid> = inputs.iter().collect();
        rel.extend(models.pose.predict_tensor(&ImageGrid::batch(&refs))?);
    }
    let chained = Trajectory::accumulate(&rel);
    let stamps = match &s.trajectory {
        Some(gt) => gt.timestamps(),
        None => (0..s.len()).map(|i| i as f64 / s.entry.fps).collect(),
    };
    Trajectory::new(
        chained
            .poses()
            .iter()
            .zip(stamps)
            .map(|(p, timestamp)| StampedPose { timestamp, pose: p.pose })
            .collect(),
    )
}

/// Pose metrics per sequence with a ground-truth trajectory, in `split`.
pub fn evaluate_pose_sequences(
    models: &Models,
    dataset: &Dataset,
    split: Option<Split>,
    mode: AlignMode,
    step: usize,
) -> Result<Vec<(String, PoseMetricReport)>> {
    let mut out = Vec::new();
    for seq in dataset.sequence_indices(split) {
        let Some(gt) = &dataset.sequences[seq].trajectory else { continue };
        let est = predict_trajectory(models, dataset, seq)?;
        out.push((dataset.sequences[seq].entry.name.clone(), pose_metrics(&est, gt, mode, step)?));
    }
    Ok(out)
}

/// Sequence-averaged pose metrics.
pub fn evaluate_pose(
    models: &Models,
    dataset: &Dataset,
    split: Option<Split>,
    mode: AlignMode,
    step: usize,
) -> Result<PoseMetricReport> {
    let per = evaluate_pose_sequences(models, dataset, split, mode, step)?;
    mean_pose(per.iter().map(|(_, r)| r)).ok_or_else(|| Error::InvalidInput("no sequence with a ground-truth trajectory".into()))
}

pub fn mean_pose<'a>(reports: impl IntoIterator<Item = &'a PoseMetricReport>) -> Option<PoseMetricReport> {
    let reports: Vec<&PoseMetricReport> = reports.into_iter().collect();
    let first = *reports.first()?;
    let n = reports.len() as f64;
    let avg = |f: fn(&PoseMetricReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
    Some(PoseMetricReport {
        ate: avg(|r| r.ate),
        rte: avg(|r| r.rte),
        rot: avg(|r| r.rot),
        alignment: first.alignment,
        scale: avg(|r| r.scale),
        step: first.step,
        low_confidence: reports.iter().any(|r| r.low_confidence),
        poses: reports.iter().map(|r| r.poses).sum(),
    })
}
