//! Static PNG output. Images carry no text: the bitmap backend is built
//! without a font engine, so ranges and colour scales go to a JSON sidecar
//! (`<image>.json`) and, for depth maps, into the file name.

use anyhow::{anyhow, Result};
use endodepth::evaluation::{align, AlignMode, MetricsTable};
use endodepth::geometry::Trajectory;
use endodepth::image::ImageGrid;
use plotters::prelude::*;
use plotters::style::colors::colormaps::ViridisRGB;
use serde_json::json;
use std::path::{Path, PathBuf};

fn backend_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("drawing failed: {e:?}")
}

fn sidecar(image: &Path, legend: serde_json::Value) -> Result<()> {
    let mut p = image.as_os_str().to_owned();
    p.push(".json");
    std::fs::write(PathBuf::from(p), serde_json::to_string_pretty(&legend)?)?;
    Ok(())
}

/// Camera coordinates (x right, y down, z forward) to chart coordinates
/// with the vertical axis up.
fn points(t: &Trajectory) -> Vec<(f64, f64, f64)> {
    t.positions().iter().map(|p| (p.x, -p.y, p.z)).collect()
}

/// Cube that contains every point, so the projection keeps proportions.
fn bounds(sets: &[&[(f64, f64, f64)]]) -> [(f64, f64); 3] {
    let all = || sets.iter().flat_map(|s| s.iter());
    let axis = |f: fn(&(f64, f64, f64)) -> f64| {
        let lo = all().map(f).fold(f64::INFINITY, f64::min);
        let hi = all().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let ranges = [axis(|p| p.0), axis(|p| p.1), axis(|p| p.2)];
    let half = ranges.iter().map(|(lo, hi)| hi - lo).fold(1e-6, f64::max) * 0.55;
    ranges.map(|(lo, hi)| ((lo + hi) / 2.0 - half, (lo + hi) / 2.0 + half))
}

/// Path colour-coded by temporal order (viridis, dark = first); the
/// aligned reference, when given, is drawn in grey.
pub fn trajectory(
    est: &Trajectory,
    label: &str,
    reference: Option<&Trajectory>,
    out: &Path,
    size: (u32, u32),
) -> Result<PathBuf> {
    let (est, alignment) = match reference {
        Some(r) => {
            let a = align(est, r, AlignMode::Similarity)?;
            let scale = a.scale;
            (a.aligned, Some(scale))
        }
        None => (est.clone(), None),
    };
    let e = points(&est);
    let r = reference.map(points).unwrap_or_default();
    let [bx, by, bz] = bounds(&[&e, &r]);
    let name = match reference {
        Some(_) => format!("{label}-overlay.png"),
        None => format!("{label}-trajectory.png"),
    };
    let path = out.join(&name);
    {
        let root = BitMapBackend::new(&path, size).into_drawing_area();
        root.fill(&WHITE).map_err(backend_err)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(20)
            .build_cartesian_3d(bx.0..bx.1, by.0..by.1, bz.0..bz.1)
            .map_err(backend_err)?;
        chart.with_projection(|mut p| {
            p.yaw = 0.7;
            p.pitch = 0.35;
            p.scale = 0.8;
            p.into_matrix()
        });
        let corners = |i: usize| {
            (
                if i & 1 == 0 { bx.0 } else { bx.1 },
                if i & 2 == 0 { by.0 } else { by.1 },
                if i & 4 == 0 { bz.0 } else { bz.1 },
            )
        };
        let edges = (0..8usize).flat_map(|i| [1, 2, 4].into_iter().filter(move |b| i & b == 0).map(move |b| (i, i | b)));
        chart
            .draw_series(edges.map(|(a, b)| PathElement::new(vec![corners(a), corners(b)], BLACK.mix(0.2))))
            .map_err(backend_err)?;
        if r.len() > 1 {
            chart
                .draw_series(std::iter::once(PathElement::new(r.clone(), RGBColor(150, 150, 150).stroke_width(2))))
                .map_err(backend_err)?;
        }
        let n = e.len().max(2) as f32 - 1.0;
        chart
            .draw_series(e.windows(2).enumerate().map(|(i, w)| {
                let c = ViridisRGB.get_color_normalized(i as f32, 0.0, n);
                PathElement::new(vec![w[0], w[1]], c.stroke_width(3))
            }))
            .map_err(backend_err)?;
        root.present().map_err(backend_err)?;
    }
    sidecar(
        &path,
        json!({
            "kind": "trajectory",
            "poses": e.len(),
            "colour": "viridis by pose index, dark = first",
            "reference": reference.map(|_| "grey, estimate similarity-aligned onto it"),
            "alignment_scale": alignment,
            "axes": {"x": "camera x", "y": "camera -y (up)", "z": "camera z (forward)"},
            "bounds": {"x": bx, "y": by, "z": bz},
        }),
    )?;
    Ok(path)
}

/// Viridis render with the normalisation range in the file name; invalid
/// pixels are black.
pub fn depth_map(grid: &ImageGrid, valid: &[bool], range: Option<[f64; 2]>, label: &str, out: &Path) -> Result<PathBuf> {
    let (_, h, w) = grid.dims();
    let values = || grid.plane(0).iter().zip(valid).filter(|(_, &ok)| ok).map(|(v, _)| *v);
    let [lo, hi] = match range {
        Some(r) => r,
        None => [values().fold(f64::INFINITY, f64::min), values().fold(f64::NEG_INFINITY, f64::max)],
    };
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(anyhow!("{label}: no valid depth pixels"));
    }
    let hi = if hi > lo { hi } else { lo + 1e-9 };
    let k = (256 / h.min(w).max(1)).max(1) as u32;
    let path = out.join(format!("{label}_depth_{lo:.3}-{hi:.3}.png"));
    {
        let root = BitMapBackend::new(&path, (w as u32 * k, h as u32 * k)).into_drawing_area();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let colour = if valid[i] {
                    ViridisRGB.get_color_normalized(grid.plane(0)[i].clamp(lo, hi) as f32, lo as f32, hi as f32)
                } else {
                    BLACK
                };
                let (x0, y0) = (x as i32 * k as i32, y as i32 * k as i32);
                root.draw(&Rectangle::new([(x0, y0), (x0 + k as i32, y0 + k as i32)], colour.filled()))
                    .map_err(backend_err)?;
            }
        }
        root.present().map_err(backend_err)?;
    }
    sidecar(
        &path,
        json!({"kind": "depth", "colour": "viridis, dark = near", "range": [lo, hi], "width": w, "height": h}),
    )?;
    Ok(path)
}

fn metric_value(table_row: &endodepth::evaluation::MetricsRow, metric: &str) -> Option<f64> {
    let d = table_row.depth.as_ref();
    let p = table_row.pose.as_ref();
    match metric {
        "RMSE" => d.map(|d| d.rmse),
        "LogRMSE" => d.map(|d| d.rmse_log),
        "MAE" => d.map(|d| d.mae),
        "MedAE" => d.map(|d| d.medae),
        "AbsRel" => d.map(|d| d.abs_rel),
        "SqRel" => d.map(|d| d.sq_rel),
        "d1" => d.map(|d| d.delta1),
        "d2" => d.map(|d| d.delta2),
        "d3" => d.map(|d| d.delta3),
        "ATE" => p.map(|p| p.ate),
        "RTE" => p.map(|p| p.rte),
        "ROT" => p.map(|p| p.rot),
        _ => None,
    }
}

pub const METRICS: [&str; 12] = [
    "RMSE", "LogRMSE", "MAE", "MedAE", "AbsRel", "SqRel", "d1", "d2", "d3", "ATE", "RTE", "ROT",
];

/// One bar per row, in row order; rows without the metric leave a gap.
pub fn report(table: &MetricsTable, metric: &str, label: &str, out: &Path, size: (u32, u32)) -> Result<PathBuf> {
    if !METRICS.contains(&metric) {
        return Err(crate::config::usage(format!("unknown metric {metric:?}; expected one of {METRICS:?}")));
    }
    let values: Vec<Option<f64>> = table.rows.iter().map(|r| metric_value(r, metric)).collect();
    let top = values.iter().flatten().copied().fold(0.0, f64::max).max(1e-12) * 1.1;
    let path = out.join(format!("{label}-{metric}.png"));
    {
        let root = BitMapBackend::new(&path, size).into_drawing_area();
        root.fill(&WHITE).map_err(backend_err)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(20)
            .build_cartesian_2d(0.0..values.len().max(1) as f64, 0.0..top)
            .map_err(backend_err)?;
        chart
            .draw_series(values.iter().enumerate().filter_map(|(i, v)| {
                v.map(|v| Rectangle::new([(i as f64 + 0.15, 0.0), (i as f64 + 0.85, v)], BLUE.mix(0.7).filled()))
            }))
            .map_err(backend_err)?;
        root.present().map_err(backend_err)?;
    }
    let bars: Vec<_> = table
        .rows
        .iter()
        .zip(&values)
        .map(|(r, v)| json!({"label": r.label, "value": v}))
        .collect();
    sidecar(&path, json!({"kind": "report", "metric": metric, "y_max": top, "bars": bars}))?;
    Ok(path)
}
