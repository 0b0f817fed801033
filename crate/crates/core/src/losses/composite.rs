use super::photometric::{min_reprojection_var, smoothness_var, ssim_var};
use super::{LossOptions, LossWeights};
use crate::error::{Error, Result};
use crate::geometry::warp::Warped;
use crate::image::ImageGrid;
use crate::networks::NUM_SCALES;
use endodepth_tensor::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

/// One named loss value, for the structured training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermValue {
    pub scale: Option<usize>,
    pub term: String,
    pub value: f64,
}

impl TermValue {
    pub fn new(scale: Option<usize>, term: &str, value: f64) -> Self {
        Self {
            scale,
            term: term.into(),
            value,
        }
    }
}

pub struct LossOutput<'t> {
    pub total: Var<'t>,
    pub terms: Vec<TermValue>,
    pub warnings: Vec<String>,
}

impl<'t> LossOutput<'t> {
    pub fn value(&self) -> f64 {
        self.total.item()
    }

    pub fn term(&self, scale: Option<usize>, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.scale == scale && t.term == name).map(|t| t.value)
    }
}

/// Predictions at one pyramid scale.
pub struct ScaleInputs<'t> {
    /// Inverse depth at this scale's native resolution, `[n,1,h,w]`.
    pub disp: Var<'t>,
    /// Target frame at the same resolution.
    pub image: Var<'t>,
    /// Sources warped at full resolution with this scale's upsampled depth.
    pub warped: Vec<Var<'t>>,
}

pub struct Stage2Inputs<'t> {
    /// Full-resolution target RGB.
    pub target: Var<'t>,
    pub scales: Vec<ScaleInputs<'t>>,
    /// Unwarped full-resolution sources; read only with `auto_mask`.
    pub sources: Vec<Var<'t>>,
}

/// `Σ_σ [λ_photo · min-reprojection_σ + λ_smooth · f(σ) · smoothness_σ]`
/// with `f(σ) = 1/2^σ` unless `flat_smoothness`.
pub fn stage2_loss<'t>(inputs: &Stage2Inputs<'t>, w: &LossWeights, opts: &LossOptions) -> Result<LossOutput<'t>> {
    if inputs.scales.len() != NUM_SCALES {
        return Err(Error::InvalidInput(format!(
            "stage-2 loss needs {NUM_SCALES} scales, got {}",
            inputs.scales.len()
        )));
    }
    if opts.auto_mask && inputs.sources.is_empty() {
        return Err(Error::InvalidInput("auto-masking needs the unwarped sources".into()));
    }
    let identity: &[Var<'t>] = if opts.auto_mask { &inputs.sources } else { &[] };
    let mut terms = Vec::new();
    let mut total: Option<Var<'t>> = None;
    for (s, sc) in inputs.scales.iter().enumerate() {
        let photo = min_reprojection_var(inputs.target, &sc.warped, identity, w.alpha)?;
        let smooth = smoothness_var(sc.disp, sc.image)?;
        terms.push(TermValue::new(Some(s), "photometric", photo.item()));
        terms.push(TermValue::new(Some(s), "smoothness", smooth.item()));
        let scale_loss = photo
            .scale(w.lambda_photo)
            .add(smooth.scale(w.lambda_smooth * opts.smoothness_factor(s)));
        total = Some(match total {
            None => scale_loss,
            Some(t) => t.add(scale_loss),
        });
    }
    let total = total.expect("NUM_SCALES > 0");
    terms.push(TermValue::new(None, "stage2", total.item()));
    Ok(LossOutput {
        total,
        terms,
        warnings: Vec::new(),
    })
}

/// Edge maps at one scale: the target map and each source map warped into
/// the target view with the photometric term's transform.
pub struct EdgeScaleInputs<'t> {
    pub target: Var<'t>,
    pub warped: Vec<Warped<'t>>,
}

/// `Σ_σ (1/N^σ) Σ_valid (1 − SSIM(E_t^σ, E_{s→t}^σ))`, averaged over
/// sources. A source with no valid pixel contributes zero and a warning.
pub fn edge_consistency_loss_var<'t>(tape: &'t Tape, scales: &[EdgeScaleInputs<'t>]) -> Result<LossOutput<'t>> {
    let mut total = tape.constant(Tensor::scalar(0.0));
    let mut terms = Vec::new();
    let mut warnings = Vec::new();
    for (s, sc) in scales.iter().enumerate() {
        if sc.warped.is_empty() {
            return Err(Error::InvalidInput(format!("no warped edge maps at scale {s}")));
        }
        let inv_sources = 1.0 / sc.warped.len() as f64;
        let mut scale_loss = tape.constant(Tensor::scalar(0.0));
        for (j, wp) in sc.warped.iter().enumerate() {
            if wp.mask.shape() != sc.target.shape() {
                return Err(Error::dims(sc.target.shape().to_string(), wp.mask.shape().to_string()));
            }
            let n = wp.mask.sum();
            if n == 0.0 {
                let msg = format!("edge loss: no valid pixels at scale {s} for source {j}; term set to 0");
                log::warn!("{msg}");
                warnings.push(msg);
                continue;
            }
            let dissim = ssim_var(sc.target, wp.image)?.neg().add_scalar(1.0);
            scale_loss = scale_loss.add(dissim.mul_const(&wp.mask).sum().scale(inv_sources / n));
        }
        terms.push(TermValue::new(Some(s), "edge", scale_loss.item()));
        total = total.add(scale_loss);
    }
    terms.push(TermValue::new(None, "edge", total.item()));
    Ok(LossOutput { total, terms, warnings })
}

/// Stage-2 objective plus `λ_edge` times the edge term.
pub fn stage3_loss<'t>(
    tape: &'t Tape,
    inputs: &Stage2Inputs<'t>,
    edges: &[EdgeScaleInputs<'t>],
    w: &LossWeights,
    opts: &LossOptions,
) -> Result<LossOutput<'t>> {
    let s2 = stage2_loss(inputs, w, opts)?;
    let edge = edge_consistency_loss_var(tape, edges)?;
    let total = s2.total.add(edge.total.scale(w.lambda_edge));
    let mut terms = s2.terms;
    terms.extend(edge.terms.into_iter().filter(|t| t.scale.is_some()));
    terms.push(TermValue::new(None, "edge", edge.total.item()));
    terms.push(TermValue::new(None, "stage3", total.item()));
    Ok(LossOutput {
        total,
        terms,
        warnings: edge.warnings,
    })
}

/// Mean `|pred − gt|` over pixels where `valid` is nonzero; zero when no
/// pixel is valid.
pub fn supervised_depth_loss_var<'t>(pred: Var<'t>, gt: &Tensor, valid: &Tensor) -> Result<Var<'t>> {
    if pred.shape() != gt.shape() || gt.shape() != valid.shape() {
        return Err(Error::dims(
            pred.shape().to_string(),
            format!("gt {} / mask {}", gt.shape(), valid.shape()),
        ));
    }
    let n = valid.data().iter().filter(|&&v| v != 0.0).count();
    let gt = pred.tape().constant(gt.clone());
    let diff = pred.sub(gt).abs().mul_const(valid).sum();
    Ok(diff.scale(if n == 0 { 0.0 } else { 1.0 / n as f64 }))
}

pub fn supervised_depth_loss(pred: &ImageGrid, gt: &ImageGrid, valid: &[bool]) -> Result<f64> {
    if valid.len() != gt.data().len() {
        return Err(Error::dims(gt.data().len().to_string(), valid.len().to_string()));
    }
    let tape = Tape::new();
    let mask = ImageGrid::new(1, gt.height(), gt.width(), valid.iter().map(|&v| v as u8 as f64).collect())?;
    Ok(supervised_depth_loss_var(tape.constant(pred.to_tensor()), &gt.to_tensor(), &mask.to_tensor())?.item())
}

/// Single-source plain wrapper over pre-warped edge maps and masks.
pub fn edge_consistency_loss(target: &[ImageGrid], warped: &[(ImageGrid, Vec<bool>)]) -> Result<f64> {
    if target.len() != warped.len() {
        return Err(Error::dims(format!("{} scales", target.len()), format!("{} scales", warped.len())));
    }
    let tape = Tape::new();
    let scales = target
        .iter()
        .zip(warped)
        .map(|(t, (w, m))| {
            let mask = ImageGrid::new(1, w.height(), w.width(), m.iter().map(|&v| v as u8 as f64).collect())?;
            Ok(EdgeScaleInputs {
                target: tape.constant(t.to_tensor()),
                warped: vec![Warped {
                    image: tape.constant(w.to_tensor()),
                    mask: mask.to_tensor(),
                }],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(edge_consistency_loss_var(&tape, &scales)?.value())
}
