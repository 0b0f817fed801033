use endodepth::image::ImageGrid;
use endodepth::priors::{fallback_edges, fallback_luminance};
use endodepth::synth::{render_sequence, Pattern, SceneSpec};

/// Pixels within `radius` (Chebyshev) of a change in the binary `mask`.
fn boundary_band(mask: &ImageGrid, radius: usize) -> Vec<bool> {
    let (_, h, w) = mask.dims();
    let on = |y: usize, x: usize| mask.get(0, y, x) > 0.5;
    let mut transition = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let here = on(y, x);
            transition[y * w + x] = (x + 1 < w && on(y, x + 1) != here) || (y + 1 < h && on(y + 1, x) != here);
        }
    }
    let mut band = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(h - 1));
            let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(w - 1));
            band[y * w + x] = (y0..=y1).any(|yy| (x0..=x1).any(|xx| transition[yy * w + xx]));
        }
    }
    band
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count() as f64;
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count() as f64;
    inter / union
}

/// Spearman rank correlation; ties get their mean rank.
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let mean = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = mean;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn edges_concentrate_on_ring_boundaries() {
    for seed in 0..3 {
        let mut spec = SceneSpec::textured_plane(1, 64, 2.0, seed);
        spec.texture.pattern = Pattern::Rings { period: 0.5, duty: 0.5 };
        spec.texture.noise_amplitude = 0.0;
        let r = render_sequence(&spec).unwrap();
        let e = fallback_edges(&r.frames[0]);
        // radius 2 matches the 5x5 luminance smoothing footprint
        let band = boundary_band(&r.pattern_masks[0], 2);
        let on: Vec<bool> = e.data().iter().map(|&v| v >= 0.3).collect();
        let score = iou(&on, &band);
        assert!(score > 0.5, "seed {seed}: IoU {score}");
    }
}

#[test]
fn tube_luminance_falls_with_depth() {
    for seed in 0..3 {
        let r = render_sequence(&SceneSpec::tube_flythrough(2, 48, 0.05, seed)).unwrap();
        for (frame, depth) in r.frames.iter().zip(&r.depth) {
            let lum = fallback_luminance(frame);
            let rho = spearman(lum.data(), depth.data());
            assert!(rho < 0.0, "seed {seed}: rank correlation {rho}");
        }
    }
}

#[test]
fn spearman_oracle_sanity() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
}
