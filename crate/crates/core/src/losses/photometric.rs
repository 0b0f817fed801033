use crate::error::{Error, Result};
use crate::image::ImageGrid;
use endodepth_tensor::{PadMode, Tape, Var};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Lower bound on the mean used to normalise inverse depth.
pub const SMOOTH_MEAN_EPS: f64 = 1e-7;

fn check_same(a: &Var<'_>, b: &Var<'_>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dims(a.shape().to_string(), b.shape().to_string()));
    }
    Ok(())
}

/// Per-pixel, per-channel SSIM over 3×3 reflect-padded windows.
pub fn ssim_var<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    check_same(&a, &b)?;
    let pool = |v: Var<'t>| v.box_filter(3, PadMode::Reflect);
    let (mu_a, mu_b) = (pool(a), pool(b));
    let sigma_a = pool(a.square()).sub(mu_a.square());
    let sigma_b = pool(b.square()).sub(mu_b.square());
    let sigma_ab = pool(a.mul(b)).sub(mu_a.mul(mu_b));
    let num = mu_a.mul(mu_b).scale(2.0).add_scalar(SSIM_C1).mul(sigma_ab.scale(2.0).add_scalar(SSIM_C2));
    let den = mu_a
        .square()
        .add(mu_b.square())
        .add_scalar(SSIM_C1)
        .mul(sigma_a.add(sigma_b).add_scalar(SSIM_C2));
    Ok(num.div(den))
}

/// `(α/2)(1 − SSIM) + (1 − α)|a − b|`, both terms averaged over channels;
/// `[n,1,h,w]`.
pub fn photometric_error_var<'t>(a: Var<'t>, b: Var<'t>, alpha: f64) -> Result<Var<'t>> {
    let s = ssim_var(a, b)?.mean_channels();
    let l1 = a.sub(b).abs().mean_channels();
    Ok(s.neg().add_scalar(1.0).scale(alpha / 2.0).add(l1.scale(1.0 - alpha)))
}

/// Mean over pixels of the per-pixel minimum of `pe` across candidates.
///
/// `identity` holds unwarped sources for auto-masking; they precede the
/// warped candidates so ties select them.
pub fn min_reprojection_var<'t>(
    target: Var<'t>,
    warped: &[Var<'t>],
    identity: &[Var<'t>],
    alpha: f64,
) -> Result<Var<'t>> {
    if warped.is_empty() {
        return Err(Error::InvalidInput("min_reprojection needs at least one source".into()));
    }
    let mut errors = Vec::with_capacity(identity.len() + warped.len());
    for &s in identity {
        errors.push(photometric_error_var(target, s.detach(), alpha)?);
    }
    for &s in warped {
        errors.push(photometric_error_var(target, s, alpha)?);
    }
    Ok(Var::min_of(&errors).mean())
}

/// Edge-aware smoothness of mean-normalised inverse depth.
pub fn smoothness_var<'t>(disp: Var<'t>, image: Var<'t>) -> Result<Var<'t>> {
    let (d, i) = (disp.shape(), image.shape());
    if d.c != 1 || d.n != i.n || d.h != i.h || d.w != i.w {
        return Err(Error::dims(format!("[{},1,{},{}] inverse depth", i.n, i.h, i.w), d.to_string()));
    }
    if d.h < 2 || d.w < 2 {
        return Err(Error::InvalidInput(format!("smoothness needs at least 2x2 pixels, got {}x{}", d.h, d.w)));
    }
    let norm = disp.div(disp.mean_spatial().clamp_min(SMOOTH_MEAN_EPS));
    let (h, w) = (d.h, d.w);
    let dx = norm.narrow_w(0, w - 1).sub(norm.narrow_w(1, w - 1)).abs();
    let dy = norm.narrow_h(0, h - 1).sub(norm.narrow_h(1, h - 1)).abs();
    let ix = image.narrow_w(0, w - 1).sub(image.narrow_w(1, w - 1)).abs().mean_channels();
    let iy = image.narrow_h(0, h - 1).sub(image.narrow_h(1, h - 1)).abs().mean_channels();
    Ok(dx.mul(ix.neg().exp()).mean().add(dy.mul(iy.neg().exp()).mean()))
}

fn grids_same(a: &ImageGrid, b: &ImageGrid) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dims(format!("{:?}", a.dims()), format!("{:?}", b.dims())));
    }
    Ok(())
}

pub fn ssim(a: &ImageGrid, b: &ImageGrid) -> Result<ImageGrid> {
    grids_same(a, b)?;
    let tape = Tape::new();
    let out = ssim_var(tape.constant(a.to_tensor()), tape.constant(b.to_tensor()))?;
    Ok(ImageGrid::from_tensor(&out.value(), 0))
}

pub fn photometric_error(a: &ImageGrid, b: &ImageGrid, alpha: f64) -> Result<ImageGrid> {
    grids_same(a, b)?;
    let tape = Tape::new();
    let out = photometric_error_var(tape.constant(a.to_tensor()), tape.constant(b.to_tensor()), alpha)?;
    Ok(ImageGrid::from_tensor(&out.value(), 0))
}

pub fn min_reprojection(target: &ImageGrid, warped: &[ImageGrid], alpha: f64) -> Result<f64> {
    for w in warped {
        grids_same(target, w)?;
    }
    let tape = Tape::new();
    let sources: Vec<_> = warped.iter().map(|w| tape.constant(w.to_tensor())).collect();
    Ok(min_reprojection_var(tape.constant(target.to_tensor()), &sources, &[], alpha)?.item())
}

pub fn smoothness(inverse_depth: &ImageGrid, image: &ImageGrid) -> Result<f64> {
    let tape = Tape::new();
    Ok(smoothness_var(tape.constant(inverse_depth.to_tensor()), tape.constant(image.to_tensor()))?.item())
}
