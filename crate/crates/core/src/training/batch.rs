use crate::data::SampleItem;
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::image::ImageGrid;
use crate::networks::NUM_SCALES;
use crate::priors::{assemble_depth_input, assemble_pose_input, AblationConfig};
use endodepth_tensor::{Shape, Tensor};

/// Network inputs and loss targets of one mini-batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub len: usize,
    pub depth_input: Tensor,
    /// One `[target, source]` stack per source.
    pub pose_inputs: Vec<Tensor>,
    pub target: Tensor,
    /// Target RGB per scale, finest first.
    pub target_pyramid: Vec<Tensor>,
    pub sources: Vec<Tensor>,
    pub target_edges: Vec<Tensor>,
    /// `[source][scale]`.
    pub source_edges: Vec<Vec<Tensor>>,
    pub intrinsics: Vec<CameraIntrinsics>,
    /// Depth and validity mask, when every item has ground truth.
    pub gt_depth: Option<(Tensor, Tensor)>,
}

fn stack(grids: Vec<ImageGrid>) -> Tensor {
    Tensor::stack(&grids.iter().map(|g| g.to_tensor()).collect::<Vec<_>>())
}

impl Batch {
    pub fn from_items(items: &[SampleItem], cfg: AblationConfig) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
        let n_src = first.sources.len();
        if items.iter().any(|i| i.sources.len() != n_src) {
            return Err(Error::InvalidInput("batch items disagree on the number of sources".into()));
        }
        let mut depth_in = Vec::with_capacity(items.len());
        let mut pose_in = vec![Vec::with_capacity(items.len()); n_src];
        for it in items {
            let t = &it.target;
            depth_in.push(assemble_depth_input(&t.rgb, &t.priors, cfg)?);
            for (j, s) in it.sources.iter().enumerate() {
                pose_in[j].push(assemble_pose_input(&t.rgb, &t.priors, &s.rgb, &s.priors, cfg)?);
            }
        }
        let pyramids: Vec<Vec<ImageGrid>> = items.iter().map(|i| i.target.rgb.pyramid(NUM_SCALES)).collect();
        let target_pyramid = (0..NUM_SCALES)
            .map(|s| stack(pyramids.iter().map(|p| p[s].clone()).collect()))
            .collect();
        let edge_pyr: Vec<Vec<ImageGrid>> = items.iter().map(|i| i.target.priors.edges.pyramid(NUM_SCALES)).collect();
        let target_edges = (0..NUM_SCALES)
            .map(|s| stack(edge_pyr.iter().map(|p| p[s].clone()).collect()))
            .collect();
        let source_edges = (0..n_src)
            .map(|j| {
                let pyr: Vec<Vec<ImageGrid>> =
                    items.iter().map(|i| i.sources[j].priors.edges.pyramid(NUM_SCALES)).collect();
                (0..NUM_SCALES)
                    .map(|s| stack(pyr.iter().map(|p| p[s].clone()).collect()))
                    .collect()
            })
            .collect();
        let gt_depth = if items.iter().all(|i| i.target.depth.is_some()) {
            let depth = stack(items.iter().map(|i| i.target.depth.as_ref().expect("checked").0.clone()).collect());
            let s = depth.shape();
            let mask = Tensor::from_vec(
                Shape::new(s.n, 1, s.h, s.w),
                items
                    .iter()
                    .flat_map(|i| i.target.depth.as_ref().expect("checked").1.iter().map(|&v| v as u8 as f64))
                    .collect(),
            );
            Some((depth, mask))
        } else {
            None
        };
        Ok(Self {
            len: items.len(),
            depth_input: stack(depth_in),
            pose_inputs: pose_in.into_iter().map(stack).collect(),
            target: stack(items.iter().map(|i| i.target.rgb.clone()).collect()),
            target_pyramid,
            sources: (0..n_src)
                .map(|j| stack(items.iter().map(|i| i.sources[j].rgb.clone()).collect()))
                .collect(),
            target_edges,
            source_edges,
            intrinsics: items.iter().map(|i| i.intrinsics).collect(),
            gt_depth,
        })
    }
}
