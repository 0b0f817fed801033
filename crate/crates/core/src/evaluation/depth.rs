use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthScaling {
    None,
    #[default]
    Median,
}

impl fmt::Display for DepthScaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DepthScaling::None => "none",
            DepthScaling::Median => "median",
        })
    }
}

impl FromStr for DepthScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "median" => Ok(Self::Median),
            other => Err(Error::Config(format!("unknown depth scaling {other:?} (expected none or median)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthEvalConfig {
    pub scaling: DepthScaling,
    /// Predictions are clamped to this range after scaling.
    pub clamp: Option<(f64, f64)>,
}

impl Default for DepthEvalConfig {
    fn default() -> Self {
        Self {
            scaling: DepthScaling::Median,
            clamp: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub mae: f64,
    pub medae: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub scaling: DepthScaling,
    /// Factor applied to predictions (1 without scaling; mean over frames
    /// for aggregates).
    pub scale_factor: f64,
    pub valid_pixels: usize,
    /// Masked pixels dropped because the ground truth is not positive.
    pub dropped_pixels: usize,
    pub clamped_pixels: usize,
}

/// Median of a non-empty slice (mean of the middle pair for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (_, &mut hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Eigen-style depth errors over `mask` pixels.
pub fn depth_metrics(pred: &[f64], gt: &[f64], mask: &[bool], cfg: &DepthEvalConfig) -> Result<DepthMetricReport> {
    if pred.len() != gt.len() || gt.len() != mask.len() {
        return Err(Error::dims(
            format!("{} pixels", gt.len()),
            format!("pred {} / mask {}", pred.len(), mask.len()),
        ));
    }
    let mut p = Vec::new();
    let mut g = Vec::new();
    let mut dropped = 0;
    for i in 0..gt.len() {
        if !mask[i] {
            continue;
        }
        if gt[i] > 0.0 && gt[i].is_finite() {
            p.push(pred[i]);
            g.push(gt[i]);
        } else {
            dropped += 1;
        }
    }
    if g.is_empty() {
        return Err(Error::InvalidInput("depth evaluation mask selects no valid pixel".into()));
    }
    let scale_factor = match cfg.scaling {
        DepthScaling::None => 1.0,
        DepthScaling::Median => {
            let mp = median(&p);
            if !(mp > 0.0) {
                return Err(Error::InvalidInput(format!("median predicted depth {mp} is not positive")));
            }
            median(&g) / mp
        }
    };
    let mut clamped = 0;
    for v in &mut p {
        *v *= scale_factor;
        if let Some((lo, hi)) = cfg.clamp {
            let c = v.clamp(lo, hi);
            if c != *v {
                clamped += 1;
            }
            *v = c;
        }
    }
    if p.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("predicted depth must be positive and finite on the mask".into()));
    }
    let n = g.len() as f64;
    let mut acc = [0.0; 8];
    let mut abs = Vec::with_capacity(g.len());
    for (&p, &g) in p.iter().zip(&g) {
        let d = p - g;
        let ratio = (p / g).max(g / p);
        acc[0] += d.abs() / g;
        acc[1] += d * d / g;
        acc[2] += d * d;
        acc[3] += (p.ln() - g.ln()).powi(2);
        acc[4] += d.abs();
        acc[5] += (ratio < 1.25) as u8 as f64;
        acc[6] += (ratio < 1.25f64.powi(2)) as u8 as f64;
        acc[7] += (ratio < 1.25f64.powi(3)) as u8 as f64;
        abs.push(d.abs());
    }
    Ok(DepthMetricReport {
        abs_rel: acc[0] / n,
        sq_rel: acc[1] / n,
        rmse: (acc[2] / n).sqrt(),
        rmse_log: (acc[3] / n).sqrt(),
        mae: acc[4] / n,
        medae: median(&abs),
        delta1: acc[5] / n,
        delta2: acc[6] / n,
        delta3: acc[7] / n,
        scaling: cfg.scaling,
        scale_factor,
        valid_pixels: g.len(),
        dropped_pixels: dropped,
        clamped_pixels: clamped,
    })
}

impl DepthMetricReport {
    /// Per-frame average of metrics; pixel counts are summed.
    pub fn mean(reports: &[DepthMetricReport]) -> Option<DepthMetricReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: fn(&DepthMetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(DepthMetricReport {
            abs_rel: avg(|r| r.abs_rel),
            sq_rel: avg(|r| r.sq_rel),
            rmse: avg(|r| r.rmse),
            rmse_log: avg(|r| r.rmse_log),
            mae: avg(|r| r.mae),
            medae: avg(|r| r.medae),
            delta1: avg(|r| r.delta1),
            delta2: avg(|r| r.delta2),
            delta3: avg(|r| r.delta3),
            scaling: first.scaling,
            scale_factor: avg(|r| r.scale_factor),
            valid_pixels: reports.iter().map(|r| r.valid_pixels).sum(),
            dropped_pixels: reports.iter().map(|r| r.dropped_pixels).sum(),
            clamped_pixels: reports.iter().map(|r| r.clamped_pixels).sum(),
        })
    }
}
