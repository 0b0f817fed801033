//! Luminance and edge priors and per-configuration input assembly.
//!
//! Channel order is always `[RGB, luminance?, edge?]` per frame; pose inputs
//! stack the target block before the source block.

mod ablation;
mod cache;
mod provider;

pub use ablation::AblationConfig;
pub use cache::PriorCache;
pub use provider::{
    extract_edges, extract_luminance, fallback_edges, fallback_luminance, sobel_edges, PriorMaps, PriorProvider,
    PriorSet, ProviderKind, EDGE_MIN_RESPONSE, LUMINANCE_BOX,
};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

fn frame_block(frame: &ImageGrid, priors: &PriorMaps, lum: bool, edge: bool) -> Result<ImageGrid> {
    if frame.channels() != 3 {
        return Err(Error::dims("3-channel frame", frame.channels()));
    }
    for (name, m) in [("luminance", &priors.luminance), ("edge", &priors.edges)] {
        if m.channels() != 1 || !frame.same_spatial(m) {
            return Err(Error::dims(
                format!("1x{}x{} {name} map", frame.height(), frame.width()),
                format!("{}x{}x{}", m.channels(), m.height(), m.width()),
            ));
        }
    }
    let mut parts = vec![frame];
    if lum {
        parts.push(&priors.luminance);
    }
    if edge {
        parts.push(&priors.edges);
    }
    ImageGrid::concat(&parts)
}

/// Target frame with its own priors; `cfg.depth_channels()` channels.
pub fn assemble_depth_input(frame: &ImageGrid, priors: &PriorMaps, cfg: AblationConfig) -> Result<ImageGrid> {
    frame_block(frame, priors, cfg.depth_lum, cfg.depth_edge)
}

/// `[target block, source block]`; `cfg.pose_channels()` channels.
pub fn assemble_pose_input(
    frame_t: &ImageGrid,
    priors_t: &PriorMaps,
    frame_s: &ImageGrid,
    priors_s: &PriorMaps,
    cfg: AblationConfig,
) -> Result<ImageGrid> {
    if !frame_t.same_spatial(frame_s) {
        return Err(Error::dims(
            format!("{}x{} source frame", frame_t.height(), frame_t.width()),
            format!("{}x{}", frame_s.height(), frame_s.width()),
        ));
    }
    let t = frame_block(frame_t, priors_t, cfg.pose_lum, cfg.pose_edge)?;
    let s = frame_block(frame_s, priors_s, cfg.pose_lum, cfg.pose_edge)?;
    ImageGrid::concat(&[&t, &s])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(seed: usize) -> ImageGrid {
        ImageGrid::from_fn(3, 8, 12, |c, y, x| ((c + seed + 3 * x + y * y) % 11) as f64 / 11.0)
    }

    #[test]
    fn channel_counts_match_closed_form_for_every_config() {
        let set = PriorSet::default();
        let (a, b) = (frame(1), frame(2));
        let (pa, pb) = (set.compute(&a).unwrap(), set.compute(&b).unwrap());
        for cfg in AblationConfig::all() {
            let d = assemble_depth_input(&a, &pa, cfg).unwrap();
            let p = assemble_pose_input(&a, &pa, &b, &pb, cfg).unwrap();
            assert_eq!(d.channels(), cfg.depth_channels(), "{cfg}");
            assert_eq!(p.channels(), cfg.pose_channels(), "{cfg}");
        }
        let dlpe: AblationConfig = "DLPE".parse().unwrap();
        assert_eq!(assemble_depth_input(&a, &pa, dlpe).unwrap().channels(), 4);
        assert_eq!(assemble_pose_input(&a, &pa, &b, &pb, dlpe).unwrap().channels(), 8);
        assert_eq!(assemble_depth_input(&a, &pa, AblationConfig::BASELINE).unwrap().channels(), 3);
    }

    #[test]
    fn ordering_is_rgb_then_lum_then_edge_target_first() {
        let set = PriorSet::default();
        let (a, b) = (frame(1), frame(5));
        let (pa, pb) = (set.compute(&a).unwrap(), set.compute(&b).unwrap());
        let dlpe = AblationConfig::DLPE;
        let d = assemble_depth_input(&a, &pa, dlpe).unwrap();
        assert_eq!(d.channel(3).data(), pa.luminance.data());
        assert_eq!(d.channel(0).data(), a.channel(0).data());
        let p = assemble_pose_input(&a, &pa, &b, &pb, dlpe).unwrap();
        assert_eq!(p.channel(3).data(), pa.edges.data());
        assert_eq!(p.channel(4).data(), b.channel(0).data());
        assert_eq!(p.channel(7).data(), pb.edges.data());
        let depl: AblationConfig = "DEPL".parse().unwrap();
        assert_eq!(assemble_depth_input(&a, &pa, depl).unwrap().channel(3).data(), pa.edges.data());
        assert_eq!(assemble_pose_input(&a, &pa, &b, &pb, depl).unwrap().channel(7).data(), pb.luminance.data());
    }

    #[test]
    fn mismatched_dims_rejected() {
        let set = PriorSet::default();
        let a = frame(0);
        let small = ImageGrid::constant(3, 4, 6, 0.2);
        let pa = set.compute(&a).unwrap();
        let ps = set.compute(&small).unwrap();
        assert!(assemble_depth_input(&small, &pa, AblationConfig::DLPE).is_err());
        assert!(assemble_pose_input(&a, &pa, &small, &ps, AblationConfig::BASELINE).is_err());
    }
}
