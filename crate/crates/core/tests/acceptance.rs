//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so criteria execute in order and the
//! report stays readable. Exits non-zero when any criterion fails.

mod common;

use endodepth::data::{Dataset, Split};
use endodepth::evaluation::{pose_metrics, AlignMode, DepthEvalConfig, DepthScaling, MetricsTable};
use endodepth::geometry::warp::{motion_tensor, warp_var};
use endodepth::geometry::{warp, CameraIntrinsics, RigidMotion, Trajectory};
use endodepth::image::ImageGrid;
use endodepth::losses::*;
use endodepth::priors::{assemble_depth_input, assemble_pose_input, AblationConfig};
use endodepth::synth::{render_sequence, RenderedSequence, SceneSpec};
use endodepth::training::*;
use endodepth_tensor::gradcheck::{compare, random_tensor};
use endodepth_tensor::{Shape, Tape, Tensor, Var};
use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::{Duration, Instant};

const C2_BUDGET: Duration = Duration::from_secs(10);
const C3_BUDGET: Duration = Duration::from_secs(60);
const C3_TOL: f64 = 1e-3;
const C3_STEP: f64 = 1e-4;
const C4_BUDGET: Duration = Duration::from_secs(60);
const C4_INSTANCES: usize = 1000;
const C4_TOL: f64 = 1e-9;
const C5_BUDGET: Duration = Duration::from_secs(300);
const C5_TRIALS: usize = 100;
const C5_MIN_WINS: usize = 95;
const C5_ROTATION: f64 = 0.05;
const C5_TRANSLATION: f64 = 0.05;
const C6_BUDGET: Duration = Duration::from_secs(600);
const C7_BUDGET: Duration = Duration::from_secs(1800);
const C8_BUDGET: Duration = Duration::from_secs(1800);
const C8_VAL_RATIO: f64 = 0.5;
const C8_ABS_REL: f64 = 0.25;
const C9_BUDGET: Duration = Duration::from_secs(900);
const C10_BUDGET: Duration = Duration::from_secs(600);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(t: Duration, budget: Duration) -> Result<(), String> {
    ensure(t <= budget, || format!("took {:.1}s, budget {}s", t.as_secs_f64(), budget.as_secs()))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- criterion 1

fn c1_reporting_columns() -> Outcome {
    let header = MetricsTable::new("t").to_text();
    for col in ["RMSE", "AbsRel", "SqRel", "MAE", "MedAE", "ATE", "RTE", "ROT"] {
        ensure(header.contains(col), || format!("report lacks column {col}"))?;
    }
    Ok("paper-scale numbers need the clinical training and test sets; criteria 2-10 substitute property checks, \
        and the report exposes every table column"
        .into())
}

// ---------------------------------------------------------------- criterion 2

fn c2_loss_identities() -> Outcome {
    let t0 = Instant::now();
    let img = ImageGrid::from_tensor(&random_tensor(Shape::new(1, 3, 24, 24), 7, 0.0, 1.0), 0);
    let pe = photometric_error(&img, &img, 0.85).map_err(err)?;
    ensure(pe.data().iter().all(|&v| v == 0.0), || "pe(I,I) is not exactly 0".into())?;
    ensure(min_reprojection(&img, std::slice::from_ref(&img), 0.85).map_err(err)? == 0.0, || "min reprojection of I".into())?;
    let flat = ImageGrid::constant(1, 24, 24, 0.37);
    ensure(smoothness(&flat, &img).map_err(err)? == 0.0, || "smoothness(constant) is not 0".into())?;
    let edges = ImageGrid::from_tensor(&random_tensor(Shape::new(1, 1, 24, 24), 8, 0.0, 1.0), 0);
    let pyr = edges.pyramid(4);
    let aligned: Vec<(ImageGrid, Vec<bool>)> = pyr.iter().map(|e| (e.clone(), vec![true; e.data().len()])).collect();
    ensure(edge_consistency_loss(&pyr, &aligned).map_err(err)? == 0.0, || "edge loss on aligned edges".into())?;

    let tape = Tape::new();
    let sh = Shape::new(2, 3, 16, 16);
    let target = tape.constant(random_tensor(sh, 1, 0.0, 1.0));
    let inputs = Stage2Inputs {
        target,
        scales: (0..4)
            .map(|s| ScaleInputs {
                disp: tape.constant(random_tensor(Shape::new(2, 1, 16 >> s, 16 >> s), 10 + s as u64, 0.01, 1.0)),
                image: tape.constant(random_tensor(Shape::new(2, 3, 16 >> s, 16 >> s), 20 + s as u64, 0.0, 1.0)),
                warped: (0..2).map(|j| tape.constant(random_tensor(sh, 30 + 2 * s as u64 + j, 0.0, 1.0))).collect(),
            })
            .collect(),
        sources: Vec::new(),
    };
    let edge_inputs: Vec<EdgeScaleInputs> = (0..4)
        .map(|s| {
            let esh = Shape::new(2, 1, 16 >> s, 16 >> s);
            EdgeScaleInputs {
                target: tape.constant(random_tensor(esh, 40 + s as u64, 0.0, 1.0)),
                warped: vec![endodepth::geometry::warp::Warped {
                    image: tape.constant(random_tensor(esh, 50 + s as u64, 0.0, 1.0)),
                    mask: Tensor::ones(esh),
                }],
            }
        })
        .collect();
    let w = LossWeights {
        lambda_edge: 0.0,
        ..Default::default()
    };
    let s2 = stage2_loss(&inputs, &w, &LossOptions::default()).map_err(err)?.value();
    let s3 = stage3_loss(&tape, &inputs, &edge_inputs, &w, &LossOptions::default()).map_err(err)?.value();
    ensure(s2.to_bits() == s3.to_bits(), || format!("stage3(λ_edge=0) {s3:e} != stage2 {s2:e}"))?;
    within(t0.elapsed(), C2_BUDGET)?;
    Ok(format!("pe, smoothness, edge and stage3≡stage2 exact in {:.2}s", t0.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- criterion 3

/// Random affine field. Bilinear interpolation reproduces it exactly, so
/// sampling has no slope jumps at cell boundaries and central differences
/// in depth and motion converge.
fn affine_field(shape: Shape, seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<[f64; 2]> = (0..shape.c)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let (h, w) = ((shape.h - 1) as f64, (shape.w - 1) as f64);
    Tensor::from_fn(shape, |_, c, y, x| {
        let v = 0.5 * (coef[c][0] * (2.0 * x as f64 / w - 1.0) + coef[c][1] * (2.0 * y as f64 / h - 1.0));
        lo + (hi - lo) * 0.5 * (1.0 + v)
    })
}

/// Smooth positive depth map.
fn smooth_depth(shape: Shape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fx, fy, px, py) = (
        rng.random_range(0.1..0.4),
        rng.random_range(0.1..0.4),
        rng.random_range(0.0..6.3),
        rng.random_range(0.0..6.3),
    );
    Tensor::from_fn(shape, |_, _, y, x| 2.25 + 0.75 * (fx * x as f64 + px).sin() * (fy * y as f64 + py).cos())
}

fn c3_gradients() -> Outcome {
    let t0 = Instant::now();
    let k = CameraIntrinsics::centered(12.0, 16, 16).map_err(err)?;
    let ks = vec![k];
    let mut worst = Vec::new();
    for seed in 0..3u64 {
        let src = affine_field(Shape::new(1, 3, 16, 16), 100 + seed, 0.0, 1.0);
        let textured = random_tensor(Shape::new(1, 3, 16, 16), 150 + seed, 0.0, 1.0);
        let depth = smooth_depth(Shape::new(1, 1, 16, 16), 200 + seed);
        let noise = random_tensor(Shape::new(1, 6, 1, 1), 300 + seed, -0.01, 0.01);
        let motion = motion_tensor(&[RigidMotion::new([0.01, -0.02, 0.015], [0.01, -0.01, 0.15])])
            .zip_map(&noise, |a, b| a + b);
        let weights = random_tensor(Shape::new(1, 3, 16, 16), 400 + seed, -1.0, 1.0);

        let warp_cmp = compare(&[src.clone(), depth.clone(), motion.clone()], C3_STEP, |_, v| {
            let w = warp_var(v[0], v[1], v[2], &ks).expect("warp");
            w.image.mul_const(&weights).sum().scale(1.0 / 16.0)
        });
                worst.push(("warp", warp_cmp.max_relative_error()));
        let image_cmp = compare(&[textured], C3_STEP, |tape, v| {
            let w = warp_var(v[0], tape.constant(depth.clone()), tape.constant(motion.clone()), &ks).expect("warp");
            w.image.mul_const(&weights).sum().scale(1.0 / 16.0)
        });
        worst.push(("warp source", image_cmp.max_relative_error()));

        let a = random_tensor(Shape::new(1, 3, 16, 16), 500 + seed, 0.0, 1.0);
        let b = random_tensor(Shape::new(1, 3, 16, 16), 600 + seed, 0.0, 1.0);
        let pe_cmp = compare(&[a, b], C3_STEP, |_, v| photometric_error_var(v[0], v[1], 0.85).expect("pe").mean());
        worst.push(("pe", pe_cmp.max_relative_error()));

        let disp = random_tensor(Shape::new(1, 1, 16, 16), 700 + seed, 0.05, 1.0);
        let image = random_tensor(Shape::new(1, 3, 16, 16), 800 + seed, 0.0, 1.0);
        let sm_cmp = compare(&[disp], C3_STEP, |tape, v| {
            smoothness_var(v[0], tape.constant(image.clone())).expect("smoothness")
        });
        worst.push(("smoothness", sm_cmp.max_relative_error()));

        let et = random_tensor(Shape::new(1, 1, 16, 16), 900 + seed, 0.0, 1.0);
        let es = affine_field(Shape::new(1, 1, 16, 16), 1000 + seed, 0.0, 1.0);
        let edge_cmp = compare(&[et, es, depth.clone(), motion.clone()], C3_STEP, |tape, v: &[Var]| {
            let w = warp_var(v[1], v[2], v[3], &ks).expect("warp");
            let scales = [EdgeScaleInputs {
                target: v[0],
                warped: vec![w],
            }];
            edge_consistency_loss_var(tape, &scales).expect("edge").total
        });
                worst.push(("edge", edge_cmp.max_relative_error()));
    }
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let (name, _) = worst.iter().find(|w| w.1 == max).expect("non-empty");
    ensure(max <= C3_TOL, || format!("{name} relative error {max:e} > {C3_TOL:e}"))?;
    within(t0.elapsed(), C3_BUDGET)?;
    Ok(format!("max relative error {max:.2e} ({name}) in {:.1}s", t0.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- criterion 4

fn brute_median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn brute_depth(pred: &[f64], gt: &[f64], mask: &[bool], median_scaling: bool) -> [f64; 10] {
    let idx: Vec<usize> = (0..gt.len()).filter(|&i| mask[i] && gt[i] > 0.0).collect();
    let p: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
    let g: Vec<f64> = idx.iter().map(|&i| gt[i]).collect();
    let s = if median_scaling { brute_median(&g) / brute_median(&p) } else { 1.0 };
    let p: Vec<f64> = p.iter().map(|v| v * s).collect();
    let n = g.len() as f64;
    let mean = |f: &dyn Fn(f64, f64) -> f64| p.iter().zip(&g).map(|(&a, &b)| f(a, b)).sum::<f64>() / n;
    let frac = |thr: f64| mean(&|a, b| if a / b < thr && b / a < thr { 1.0 } else { 0.0 });
    let abs: Vec<f64> = p.iter().zip(&g).map(|(a, b)| (a - b).abs()).collect();
    [
        mean(&|a, b| (a - b).abs() / b),
        mean(&|a, b| (a - b).powi(2) / b),
        mean(&|a, b| (a - b).powi(2)).sqrt(),
        mean(&|a, b| (a.ln() - b.ln()).powi(2)).sqrt(),
        mean(&|a, b| (a - b).abs()),
        brute_median(&abs),
        frac(1.25),
        frac(1.5625),
        frac(1.953125),
        s,
    ]
}

fn mat4(m: &RigidMotion) -> Matrix4<f64> {
    let mut out = Matrix4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&m.matrix());
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&m.translation_vector());
    out
}

/// Horn's closed-form absolute orientation via the quaternion eigenproblem.
fn horn(est: &[Vector3<f64>], reference: &[Vector3<f64>], similarity: bool) -> (Matrix3<f64>, Vector3<f64>, f64) {
    let n = est.len() as f64;
    let mx = est.iter().sum::<Vector3<f64>>() / n;
    let my = reference.iter().sum::<Vector3<f64>>() / n;
    let mut m = Matrix3::zeros();
    for (x, y) in est.iter().zip(reference) {
        m += (x - mx) * (y - my).transpose();
    }
    let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    let nmat = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nmat);
    let i = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(i);
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let r = Matrix3::new(
        w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), w * w - x * x - y * y + z * z,
    );
    let s = if similarity {
        let num: f64 = est.iter().zip(reference).map(|(x, y)| (y - my).dot(&(r * (x - mx)))).sum();
        let den: f64 = est.iter().map(|x| (x - mx).norm_squared()).sum();
        num / den
    } else {
        1.0
    };
    (r, my - s * r * mx, s)
}

fn brute_pose(est: &[RigidMotion], reference: &[RigidMotion], similarity: bool, step: usize) -> [f64; 3] {
    let pe: Vec<Vector3<f64>> = est.iter().map(|m| m.translation_vector()).collect();
    let pr: Vec<Vector3<f64>> = reference.iter().map(|m| m.translation_vector()).collect();
    let (r, t, s) = horn(&pe, &pr, similarity);
    let n = est.len() as f64;
    let ate = (pe.iter().zip(&pr).map(|(x, y)| (s * r * x + t - y).norm_squared()).sum::<f64>() / n).sqrt();
    let scale_m = |m: &RigidMotion| {
        let mut a = mat4(m);
        for i in 0..3 {
            a[(i, 3)] *= s;
        }
        a
    };
    let (mut rte, mut rot, mut pairs) = (0.0, 0.0, 0.0);
    for i in 0..est.len().saturating_sub(step) {
        let de = scale_m(&est[i]).try_inverse().unwrap() * scale_m(&est[i + step]);
        let dr = mat4(&reference[i]).try_inverse().unwrap() * mat4(&reference[i + step]);
        let dt = Vector3::new(de[(0, 3)] - dr[(0, 3)], de[(1, 3)] - dr[(1, 3)], de[(2, 3)] - dr[(2, 3)]);
        rte += dt.norm_squared();
        let re = de.fixed_view::<3, 3>(0, 0) * dr.fixed_view::<3, 3>(0, 0).transpose();
        let c = ((re.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        rot += c.acos().powi(2);
        pairs += 1.0;
    }
    [ate, (rte / pairs).sqrt(), (rot / pairs).sqrt()]
}

fn random_motion(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> RigidMotion {
    let mut v = || rng.random_range(-1.0..1.0);
    RigidMotion::new([rot * v(), rot * v(), rot * v()], [trans * v(), trans * v(), trans * v()])
}

fn c4_metric_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for inst in 0..C4_INSTANCES {
        let n = rng.random_range(4..60);
        let gt: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.5..20.0) })
            .collect();
        let pred: Vec<f64> = gt
            .iter()
            .map(|g| (g.max(0.5) * rng.random_range(0.3..3.0)).max(0.1))
            .collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        mask[0] = true;
        let mut gt = gt;
        gt[0] = gt[0].max(1.0);
        let median = inst % 2 == 0;
        let cfg = DepthEvalConfig {
            scaling: if median { DepthScaling::Median } else { DepthScaling::None },
            clamp: None,
        };
        let r = endodepth::evaluation::depth_metrics(&pred, &gt, &mask, &cfg).map_err(err)?;
        let got = [
            r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.mae, r.medae, r.delta1, r.delta2, r.delta3, r.scale_factor,
        ];
        let want = brute_depth(&pred, &gt, &mask, median);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }

        let len = rng.random_range(4..12);
        let reference: Vec<RigidMotion> = (0..len).map(|_| random_motion(&mut rng, 1.0, 2.0)).collect();
        let gauge = random_motion(&mut rng, 2.0, 3.0);
        let scale = rng.random_range(0.3..3.0);
        let est: Vec<RigidMotion> = reference
            .iter()
            .map(|p| {
                let noisy = p.compose(&random_motion(&mut rng, 0.05, 0.1));
                let g = gauge.compose(&noisy);
                let t = g.translation_vector() * scale;
                RigidMotion::new(g.rotation, [t.x, t.y, t.z])
            })
            .collect();
        let similarity = inst % 3 != 0;
        let step = 1 + inst % 2;
        let mode = if similarity { AlignMode::Similarity } else { AlignMode::Rigid };
        let pr = pose_metrics(
            &Trajectory::from_poses(est.clone()).map_err(err)?,
            &Trajectory::from_poses(reference.clone()).map_err(err)?,
            mode,
            step,
        )
        .map_err(err)?;
        let want = brute_pose(&est, &reference, similarity, step);
        for (a, b) in [pr.ate, pr.rte, pr.rot].iter().zip(&want) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    ensure(worst <= C4_TOL, || format!("worst discrepancy {worst:e} > {C4_TOL:e}"))?;
    within(t0.elapsed(), C4_BUDGET)?;
    Ok(format!(
        "{C4_INSTANCES} depth and pose instances, worst discrepancy {worst:.1e}, {:.1}s",
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 5

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn c5_photometric_minimum() -> Outcome {
    let t0 = Instant::now();
    let interval = 2;
    let scenes: Vec<RenderedSequence> = (0..4)
        .map(|seed| {
            let mut s = SceneSpec::tube_flythrough(12, 64, 0.05, 50 + seed);
            s.supersample = 3;
            render_sequence(&s)
        })
        .collect::<endodepth::Result<_>>()
        .map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let photometric = |r: &RenderedSequence, t: usize, motions: &[(usize, RigidMotion)]| -> endodepth::Result<f64> {
        let warped = motions
            .iter()
            .map(|(s, m)| Ok(warp(&r.frames[*s], &r.depth[t], m, &r.intrinsics)?.0))
            .collect::<endodepth::Result<Vec<_>>>()?;
        min_reprojection(&r.frames[t], &warped, 0.85)
    };
    let mut wins = 0;
    let mut closest = f64::INFINITY;
    for trial in 0..C5_TRIALS {
        let r = &scenes[rng.random_range(0..scenes.len())];
        let t = rng.random_range(interval..r.frames.len() - interval);
        let gt: Vec<(usize, RigidMotion)> =
            [t - interval, t + interval].iter().map(|&s| (s, r.trajectory.relative(s, t))).collect();
        let perturbed: Vec<(usize, RigidMotion)> = gt
            .iter()
            .map(|&(s, m)| {
                let d = unit(&mut rng);
                if trial % 2 == 0 {
                    let axis = d * C5_ROTATION;
                    (s, RigidMotion::new([axis.x, axis.y, axis.z], [0.0; 3]).compose(&m))
                } else {
                    let t = m.translation_vector() + d * (C5_TRANSLATION * m.translation_vector().norm());
                    (s, RigidMotion::new(m.rotation, [t.x, t.y, t.z]))
                }
            })
            .collect();
        let (lg, lp) = (photometric(r, t, &gt).map_err(err)?, photometric(r, t, &perturbed).map_err(err)?);
        if lg < lp {
            wins += 1;
        }
        closest = closest.min((lp - lg) / lg);
    }
    ensure(wins >= C5_MIN_WINS, || format!("GT motion won {wins}/{C5_TRIALS} trials (need {C5_MIN_WINS})"))?;
    within(t0.elapsed(), C5_BUDGET)?;
    Ok(format!(
        "GT motion won {wins}/{C5_TRIALS}, smallest relative margin {closest:.2e}, {:.1}s",
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 6

fn small_tube(dir: &Path, size: usize, train_frames: usize) -> Dataset {
    common::tube_dataset(
        dir,
        size,
        &[
            ("train", Split::Train, train_frames, 0.06, 61),
            ("val", Split::Val, 8, 0.06, 62),
            ("test", Split::Test, 10, 0.06, 63),
        ],
    )
}

fn c6_freezing_invariant() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(err)?;
    let ds = small_tube(dir.path(), 32, 40);
    let s2 = StagePlan {
        epochs: 3,
        batch_size: 6,
        ..StagePlan::for_stage(StageId::Joint)
    };
    let s3 = StagePlan {
        epochs: 2,
        ..s2.clone()
    };
    let modes = [EdgeMode::None, EdgeMode::Joint, EdgeMode::PoseOnly];
    let table = run_edge_mode_suite(
        AblationConfig::DLPE,
        &modes,
        &s2,
        &StagePlan {
            stage: StageId::PoseRefine,
            ..s3
        },
        &ds,
        dir.path(),
        &SuiteEval::default(),
    );
    for row in &table.rows {
        ensure(row.error.is_none(), || format!("row {} failed: {:?}", row.label, row.error))?;
    }
    let (none, pose_only) = (&table.rows[0], &table.rows[2]);
    ensure(none.depth.is_some() && none.depth == pose_only.depth, || {
        format!("depth metrics differ:\n{}", table.to_text())
    })?;
    ensure(none.pose != pose_only.pose, || "stage 3 left the pose metrics unchanged".into())?;
    let depth_hash = |label: &str| -> Result<String, String> {
        let m = load_models(&final_checkpoint_path(&dir.path().join(label), StageId::PoseRefine)).map_err(err)?;
        Ok(m.depth.params.hash())
    };
    let base = load_models(&final_checkpoint_path(&dir.path().join("DLPE-none"), StageId::Joint)).map_err(err)?;
    ensure(depth_hash("DLPE-pose-only")? == base.depth.params.hash(), || "depth weights changed".into())?;
    within(t0.elapsed(), C6_BUDGET)?;
    Ok(format!(
        "pose-only depth metrics identical to none (AbsRel {:.4}), {:.1}s",
        none.depth.as_ref().expect("checked").abs_rel,
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 7

fn c7_interval_effect() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(err)?;
    let step = 0.01;
    let ds = common::tube_dataset_with(
        dir.path(),
        64,
        &[("slow", Split::Train, 140, step, 71), ("held-out", Split::Test, 30, step, 72)],
        |s| s.supersample = 3,
    );
    let mut results = Vec::new();
    for interval in [1usize, 10] {
        let mut per_seed = Vec::new();
        for seed in [0u64, 1] {
            let plan = StagePlan {
                epochs: 10,
                batch_size: 12,
                max_steps_per_epoch: Some(10),
                interval,
                seed,
                validate: false,
                checkpoint_every_epoch: false,
                ..StagePlan::for_stage(StageId::Joint)
            };
            let out = run_stage(&plan, &ds, &RunOptions::new(dir.path().join(format!("k{interval}-s{seed}"))))
                .map_err(err)?;
            let m = out.models.expect("trained");
            per_seed.push(
                evaluate_depth(&m, &ds, Some(Split::Test), &DepthEvalConfig::default())
                    .map_err(err)?
                    .abs_rel,
            );
        }
        results.push((interval, brute_median(&per_seed), per_seed));
    }
    let (k1, k10) = (results[0].1, results[1].1);
    let detail = format!("median AbsRel k=1 {k1:.4} {:?}, k=10 {k10:.4} {:?}", results[0].2, results[1].2);
    ensure(k10 < k1, || detail.clone())?;
    within(t0.elapsed(), C7_BUDGET)?;
    Ok(format!("{detail}, {:.0}s", t0.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- criterion 8

fn c8_convergence() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(err)?;
    let step = 0.08;
    let ds = common::tube_dataset_with(
        dir.path(),
        64,
        &[
            ("train", Split::Train, 160, step, 81),
            ("val", Split::Val, 20, step, 82),
            ("test", Split::Test, 20, step, 83),
        ],
        |s| s.supersample = 3,
    );
    let plan = StagePlan {
        epochs: 20,
        ..StagePlan::for_stage(StageId::Joint)
    };
    let out = run_stage(&plan, &ds, &RunOptions::new(dir.path().join("run"))).map_err(err)?;
    let first = out.epochs[0].val_loss.expect("val split");
    let last = out.epochs.last().expect("epochs").val_loss.expect("val split");
    let ratio = last / first;
    let m = out.models.expect("trained");
    let abs_rel = evaluate_depth(&m, &ds, Some(Split::Test), &DepthEvalConfig::default())
        .map_err(err)?
        .abs_rel;
    let detail = format!(
        "val loss epoch 1 {first:.4} -> epoch 20 {last:.4} (ratio {ratio:.3}, need <= {C8_VAL_RATIO}); \
         held-out AbsRel {abs_rel:.4} (need < {C8_ABS_REL}); initial {:.4}",
        out.initial_val_loss.unwrap_or(f64::NAN)
    );
    ensure(ratio <= C8_VAL_RATIO && abs_rel < C8_ABS_REL, || detail.clone())?;
    within(t0.elapsed(), C8_BUDGET)?;
    Ok(format!("{detail}, {:.0}s", t0.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- criterion 9

fn c9_ablation_plumbing() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(err)?;
    let ds = small_tube(dir.path(), 32, 24);
    let plan = StagePlan {
        epochs: 1,
        batch_size: 6,
        ..StagePlan::for_stage(StageId::Joint)
    };
    let configs = AblationConfig::all();
    let table = run_ablation_suite(&configs, &plan, &ds, dir.path(), &SuiteEval::default());
    ensure(table.rows.len() == 9, || format!("{} rows", table.rows.len()))?;
    let frame = ds.frame(0, 0).map_err(err)?;
    for (cfg, row) in configs.iter().zip(&table.rows) {
        ensure(row.error.is_none(), || format!("{cfg} failed: {:?}", row.error))?;
        let want_depth = 3 + cfg.depth_lum as usize + cfg.depth_edge as usize;
        let want_pose = 2 * (3 + cfg.pose_lum as usize + cfg.pose_edge as usize);
        let d = assemble_depth_input(&frame.rgb, &frame.priors, *cfg).map_err(err)?.channels();
        let p = assemble_pose_input(&frame.rgb, &frame.priors, &frame.rgb, &frame.priors, *cfg)
            .map_err(err)?
            .channels();
        let m = load_models(&final_checkpoint_path(&dir.path().join(cfg.to_string()), StageId::Joint)).map_err(err)?;
        ensure(
            d == want_depth && p == want_pose && m.depth.spec.in_channels() == d && m.pose.spec.in_channels() == p,
            || format!("{cfg}: depth {d}/{want_depth}, pose {p}/{want_pose}"),
        )?;
    }
    within(t0.elapsed(), C9_BUDGET)?;
    Ok(format!("nine configurations trained one epoch with expected channels, {:.0}s", t0.elapsed().as_secs_f64()))
}

// --------------------------------------------------------------- criterion 10

fn totals(o: &StageOutcome) -> Result<Vec<u64>, String> {
    Ok(read_log(o.log_path.as_ref().expect("log"))
        .map_err(err)?
        .iter()
        .filter(|r| r.term == "total")
        .map(|r| r.value.to_bits())
        .collect())
}

fn c10_supervised_contract() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(err)?;
    let ds = small_tube(dir.path(), 32, 30);
    let base = StagePlan {
        epochs: 3,
        batch_size: 6,
        ..StagePlan::for_stage(StageId::Joint)
    };
    let self_sup = run_stage(&base, &ds, &RunOptions::new(dir.path().join("self"))).map_err(err)?;
    let mut sup = StagePlan {
        stage: StageId::JointSupervised,
        ..base.clone()
    };
    sup.weights.lambda_sup = 0.0;
    let zero = run_stage(&sup, &ds, &RunOptions::new(dir.path().join("zero"))).map_err(err)?;
    sup.weights.lambda_sup = 0.5;
    let live = run_stage(&sup, &ds, &RunOptions::new(dir.path().join("live"))).map_err(err)?;
    let (a, b, c) = (totals(&self_sup)?, totals(&zero)?, totals(&live)?);
    ensure(!a.is_empty() && a == b, || "lambda_sup = 0 diverged from the self-supervised run".into())?;
    ensure(a != c, || "lambda_sup = 0.5 left the loss trajectory unchanged".into())?;
    within(t0.elapsed(), C10_BUDGET)?;
    Ok(format!("{} step losses bit-identical at 0, distinct at 0.5, {:.0}s", a.len(), t0.elapsed().as_secs_f64()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("paper-scale results substituted", c1_reporting_columns),
        ("loss identities", c2_loss_identities),
        ("gradient suite", c3_gradients),
        ("metric oracle equivalence", c4_metric_oracles),
        ("photometric minimum at GT motion", c5_photometric_minimum),
        ("stage-3 freezing invariant", c6_freezing_invariant),
        ("interval effect", c7_interval_effect),
        ("end-to-end toy convergence", c8_convergence),
        ("ablation plumbing", c9_ablation_plumbing),
        ("supervised-variant contract", c10_supervised_contract),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let res = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match res {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {reason}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
