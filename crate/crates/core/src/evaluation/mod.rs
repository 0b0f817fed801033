//! Depth and trajectory metrics.

mod depth;
mod pose;
mod report;

pub use depth::{depth_metrics, median, DepthEvalConfig, DepthMetricReport, DepthScaling};
pub use pose::{align, ate, pose_metrics, rot, rte, AlignMode, Alignment, PoseMetricReport, TIMESTAMP_TOL};
pub use report::{MetricsRow, MetricsTable};
