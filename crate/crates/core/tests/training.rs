mod common;

use endodepth::data::{Dataset, Split};
use endodepth::evaluation::DepthEvalConfig;
use endodepth::priors::AblationConfig;
use endodepth::training::*;
use endodepth::Error;
use std::path::Path;

fn small(dir: &Path) -> Dataset {
    common::tube_dataset(
        dir,
        32,
        &[
            ("train", Split::Train, 14, 0.06, 1),
            ("val", Split::Val, 6, 0.06, 2),
            ("test", Split::Test, 6, 0.06, 3),
        ],
    )
}

fn quick(stage: StageId) -> StagePlan {
    StagePlan {
        epochs: 2,
        batch_size: 4,
        max_steps_per_epoch: Some(2),
        ..StagePlan::for_stage(stage)
    }
}

fn losses(o: &StageOutcome) -> Vec<f64> {
    o.epochs.iter().map(|e| e.train_loss).collect()
}

#[test]
fn stage3_requires_a_stage2_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(dir.path());
    let e = run_stage(&quick(StageId::PoseRefine), &ds, &RunOptions::new(dir.path().join("s3"))).unwrap_err();
    assert!(matches!(e, Error::Prerequisite(_)), "{e}");
    let opts = RunOptions {
        init_checkpoint: Some(dir.path().join("missing.ckpt")),
        ..RunOptions::new(dir.path().join("s3"))
    };
    assert!(matches!(run_stage(&quick(StageId::PoseRefine), &ds, &opts), Err(Error::Prerequisite(_))));
}

#[test]
fn stage2_then_stage3_freezes_depth() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(dir.path());
    let s2dir = dir.path().join("s2");
    let s2 = run_stage(&quick(StageId::Joint), &ds, &RunOptions::new(&s2dir)).unwrap();
    assert_eq!(s2.epochs.len(), 2);
    assert!(s2.initial_val_loss.is_some() && s2.epochs.iter().all(|e| e.val_loss.is_some()));
    for e in 1..=2 {
        assert!(epoch_checkpoint_path(&s2dir, StageId::Joint, e).exists());
    }
    let ck = s2.final_checkpoint.clone().unwrap();
    assert_eq!(ck, final_checkpoint_path(&s2dir, StageId::Joint));
    let stored = endodepth::networks::Checkpoint::load(&ck).unwrap();
    assert_eq!(stored.meta.stage.as_deref(), Some("2"));

    let log = read_log(s2.log_path.as_ref().unwrap()).unwrap();
    assert!(log.windows(2).all(|w| w[0].step <= w[1].step));
    assert!(log.iter().any(|r| r.term == "photometric" && r.scale == Some(3)));
    assert_eq!(log.iter().filter(|r| r.term == "total").count(), 4);
    assert!(!log.iter().any(|r| r.term == "edge"));

    let before = load_models(&ck).unwrap();
    let opts = RunOptions {
        init_checkpoint: Some(ck),
        ..RunOptions::new(dir.path().join("s3"))
    };
    let s3 = run_stage(&quick(StageId::PoseRefine), &ds, &opts).unwrap();
    let after = s3.models.unwrap();
    assert_eq!(after.depth.params.hash(), before.depth.params.hash());
    assert_ne!(after.pose.params.hash(), before.pose.params.hash());
    let log3 = read_log(s3.log_path.as_ref().unwrap()).unwrap();
    assert!(log3.iter().any(|r| r.term == "edge"));
    let cfg = DepthEvalConfig::default();
    assert_eq!(
        evaluate_depth(&before, &ds, Some(Split::Test), &cfg).unwrap(),
        evaluate_depth(&after, &ds, Some(Split::Test), &cfg).unwrap()
    );
}

#[test]
fn identical_plans_reproduce_and_resume_matches() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(dir.path());
    let plan = quick(StageId::Joint);
    let a = run_stage(&plan, &ds, &RunOptions::new(dir.path().join("a"))).unwrap();
    let b = run_stage(&plan, &ds, &RunOptions::new(dir.path().join("b"))).unwrap();
    assert_eq!(losses(&a), losses(&b));

    let one = StagePlan { epochs: 1, ..plan.clone() };
    run_stage(&one, &ds, &RunOptions::new(dir.path().join("c"))).unwrap();
    let opts = RunOptions {
        resume: Some(epoch_checkpoint_path(&dir.path().join("c"), StageId::Joint, 1)),
        ..RunOptions::new(dir.path().join("c"))
    };
    let resumed = run_stage(&plan, &ds, &opts).unwrap();
    assert_eq!(resumed.epochs.len(), 1);
    assert_eq!(resumed.epochs[0].train_loss, a.epochs[1].train_loss);
    assert_eq!(resumed.models.unwrap().depth.params.hash(), a.models.unwrap().depth.params.hash());
}

#[test]
fn supervised_term_is_inert_at_zero_weight_and_live_otherwise() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(dir.path());
    let base = run_stage(&quick(StageId::Joint), &ds, &RunOptions::new(dir.path().join("a"))).unwrap();
    let mut plan = quick(StageId::JointSupervised);
    plan.weights.lambda_sup = 0.0;
    let zero = run_stage(&plan, &ds, &RunOptions::new(dir.path().join("b"))).unwrap();
    assert_eq!(losses(&base), losses(&zero));
    plan.weights.lambda_sup = 0.5;
    let live = run_stage(&plan, &ds, &RunOptions::new(dir.path().join("c"))).unwrap();
    assert_ne!(losses(&base), losses(&live));
}

#[test]
fn diverging_run_aborts_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(dir.path());
    let plan = StagePlan {
        learning_rate: 1e300,
        ..quick(StageId::Joint)
    };
    match run_stage(&plan, &ds, &RunOptions::new(dir.path().join("d"))) {
        Err(Error::NonFiniteLoss { dump, .. }) => assert!(Path::new(&dump).exists(), "{dump}"),
        other => panic!("expected a non-finite loss, got {other:?}"),
    }
}

#[test]
fn stage1_prepares_fallback_priors() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(dir.path());
    let out = run_stage(&quick(StageId::Priors), &ds, &RunOptions::new(dir.path().join("p"))).unwrap();
    let p = out.priors.unwrap();
    assert_eq!(p.frames, 26);
    assert_eq!(p.cache_key, "lum-fallback_edge-fallback");
    assert!(out.final_checkpoint.is_none());
}

#[test]
fn mismatched_checkpoint_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(dir.path());
    let s2 = run_stage(&quick(StageId::Joint), &ds, &RunOptions::new(dir.path().join("a"))).unwrap();
    let plan = StagePlan {
        ablation: AblationConfig::BASELINE,
        ..quick(StageId::PoseRefine)
    };
    let opts = RunOptions {
        init_checkpoint: s2.final_checkpoint,
        ..RunOptions::new(dir.path().join("b"))
    };
    assert!(matches!(run_stage(&plan, &ds, &opts), Err(Error::Config(_))));
}

#[test]
fn suites_emit_one_row_per_entry() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(dir.path());
    let plan = StagePlan {
        epochs: 1,
        ..quick(StageId::Joint)
    };
    let eval = SuiteEval::default();
    let t = run_ablation_suite(&[AblationConfig::BASELINE], &plan, &ds, &dir.path().join("abl"), &eval);
    assert_eq!(t.rows.len(), 1);
    assert!(t.rows[0].error.is_none());

    let s3 = StagePlan {
        epochs: 1,
        ..quick(StageId::PoseRefine)
    };
    let modes = [EdgeMode::None, EdgeMode::Joint, EdgeMode::PoseOnly];
    let t = run_edge_mode_suite(AblationConfig::DLPE, &modes, &plan, &s3, &ds, &dir.path().join("edge"), &eval);
    assert_eq!(t.rows.len(), 3);
    assert!(t.rows.iter().all(|r| r.error.is_none()), "{}", t.to_text());
    assert_eq!(t.rows[0].depth, t.rows[2].depth);
    assert_ne!(t.rows[0].depth, t.rows[1].depth);
}
